//! Report files. JSON reports are `{tool, version, config, result}`; CSV
//! reports start with `# key: value` comment lines carrying the same
//! metadata, followed by a header row. Numbers use Rust's `Display`, which
//! always writes `.` as the decimal separator.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::{Format, RunConfig};
use crate::{LabError, Result};

pub const TOOL: &str = "b92lab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Default output directory when no path is configured.
pub const OUT_DIR_ENV: &str = "B92LAB_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self { columns, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Table(Table),
    Document(Value),
}

impl Payload {
    fn to_value(&self) -> Result<Value> {
        Ok(match self {
            Payload::Table(t) => serde_json::to_value(t)?,
            Payload::Document(v) => v.clone(),
        })
    }
}

#[derive(Serialize)]
struct Report<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    result: Value,
}

pub fn render(config: &RunConfig, payload: &Payload, format: Format) -> Result<String> {
    match format {
        Format::Json => {
            let report = Report {
                tool: TOOL,
                version: VERSION,
                config,
                result: payload.to_value()?,
            };
            let mut s = serde_json::to_string_pretty(&report)?;
            s.push('\n');
            Ok(s)
        }
        Format::Csv => render_csv(config, payload),
    }
}

fn render_csv(config: &RunConfig, payload: &Payload) -> Result<String> {
    let mut out = format!(
        "# tool: {TOOL}\n# version: {VERSION}\n# config: {}\n",
        serde_json::to_string(config)?
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    match payload {
        Payload::Table(t) => {
            w.write_record(&t.columns)?;
            for row in &t.rows {
                w.write_record(row.iter().map(|x| x.to_string()))?;
            }
        }
        Payload::Document(v) => {
            w.write_record(["key", "value"])?;
            let mut flat = Vec::new();
            flatten("", v, &mut flat);
            for (k, v) in flat {
                w.write_record([k, v])?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| LabError::Io(e.into_error()))?;
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
    match v {
        Value::Object(m) => m.iter().for_each(|(k, v)| flatten(&key(k), v, out)),
        Value::Array(a) => a.iter().enumerate().for_each(|(i, v)| flatten(&key(&i.to_string()), v, out)),
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// Reads a CSV table report back into its config and rows.
pub fn parse_csv_table(text: &str) -> Result<(RunConfig, Table)> {
    let mut config = None;
    let mut body = String::new();
    for line in text.lines() {
        match line.strip_prefix("# ") {
            Some(meta) => {
                if let Some(json) = meta.strip_prefix("config: ") {
                    config = Some(RunConfig::from_json(json)?);
                }
            }
            None => {
                body.push_str(line);
                body.push('\n');
            }
        }
    }
    let config = config.ok_or_else(|| LabError::config("csv report has no config line"))?;
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let columns: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut table = Table::new(columns);
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| LabError::config(format!("{s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        table.push(row);
    }
    Ok((config, table))
}

/// Where a report goes: the configured path, else `$B92LAB_OUT_DIR/<command>.<ext>`,
/// else stdout (`None`).
pub fn destination(config: &RunConfig) -> Option<PathBuf> {
    let spec = config.output();
    spec.path.clone().or_else(|| {
        std::env::var_os(OUT_DIR_ENV)
            .filter(|d| !d.is_empty())
            .map(|d| Path::new(&d).join(format!("{}.{}", config.name(), spec.format.extension())))
    })
}

pub fn emit(config: &RunConfig, payload: &Payload) -> Result<Option<PathBuf>> {
    let text = render(config, payload, config.output().format)?;
    match destination(config) {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(&path, text)?;
            Ok(Some(path))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ThresholdsConfig;

    #[test]
    fn csv_table_round_trip() {
        let config = RunConfig::Thresholds(ThresholdsConfig::default());
        let mut t = Table::new(vec!["a".into(), "b".into()]);
        t.push(vec![0.1, 1e-17]);
        t.push(vec![-3.0, 2.5e300]);
        let text = render(&config, &Payload::Table(t.clone()), Format::Csv).unwrap();
        assert!(text.lines().nth(3) == Some("a,b"));
        let (c, back) = parse_csv_table(&text).unwrap();
        assert_eq!(c, config);
        assert_eq!(back, t);
    }

    #[test]
    fn documents_flatten() {
        let v = serde_json::json!({"x": {"y": [1, 2]}, "s": "ok", "n": null});
        let mut flat = Vec::new();
        flatten("", &v, &mut flat);
        assert!(flat.contains(&("x.y.1".to_string(), "2".to_string())));
        assert!(flat.contains(&("s".to_string(), "ok".to_string())));
        assert!(flat.contains(&("n".to_string(), String::new())));
    }

    #[test]
    fn json_report_parses_as_config() {
        let config = RunConfig::Thresholds(ThresholdsConfig::default());
        let text = render(&config, &Payload::Document(Value::Null), Format::Json).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), config);
    }
}
