//! Bit-error rates, phase-error values and bounds, secure gain.
//!
//! The phase-error count over filtered pairs is a linear functional of the
//! entanglement-picture X statistics: `n_ph = β²·n01 + α²·n10`. Three
//! estimators feed it:
//!
//! * [`EstimatorMode::Direct`] reads the two error rates off decoys measured
//!   in the X basis (`B92dbar`).
//! * [`EstimatorMode::DecoyInformed`] and [`EstimatorMode::WorstCase`]
//!   maximize the predicted phase-error rate over a restricted attack family
//!   (Pauli channel followed by X-selective loss, see
//!   [`AttackModel::RestrictedPauliLoss`]) among members whose predicted
//!   observables match the tally. The decoy-informed bound also matches the
//!   loss rates of both decoy classes; the worst case leaves the losses free.
//!
//! The bound is exact within the family and is not an unconditional
//! security bound.

use alloc::vec::Vec;

use crate::channel::{restricted_unchecked, AttackModel};
use crate::montecarlo::{GedankenTally, TallySheet, Variant};
use crate::protocol_states::{b92_povm, Angle, Povm, PulseClass};
use crate::qmath::{entropy_unchecked, outcome_distribution, DensityOperator};
use crate::{Error, Result};

/// Expected or counted X statistics of `N` entangled pairs.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GedankenCounts {
    pub n00: f64,
    pub n01: f64,
    pub n10: f64,
    pub n11: f64,
    pub n0v: f64,
    pub n1v: f64,
}

impl GedankenCounts {
    pub fn pairs(&self) -> f64 {
        self.n00 + self.n01 + self.n10 + self.n11 + self.n0v + self.n1v
    }

    /// Pairs on which neither the channel nor Eve acted in a way Bob sees
    /// as an X disagreement: `n10 + n11`.
    pub fn nonorthogonality(&self) -> f64 {
        self.n10 + self.n11
    }

    /// Expected counts for `n` pairs sent through `model`.
    pub fn expected(a: Angle, model: &AttackModel, n: f64) -> Result<Self> {
        let zero = model.output_density(PulseClass::DecoyDPrime, a)?;
        let one = model.output_density(PulseClass::DecoyD, a)?;
        let (b2, a2) = (a.beta_sq() * n, a.alpha_sq() * n);
        Ok(Self {
            n00: b2 * zero.entry(0, 0).re,
            n01: b2 * zero.entry(1, 1).re,
            n0v: b2 * zero.vacuum_weight(),
            n10: a2 * one.entry(0, 0).re,
            n11: a2 * one.entry(1, 1).re,
            n1v: a2 * one.vacuum_weight(),
        })
    }
}

impl From<&GedankenTally> for GedankenCounts {
    fn from(g: &GedankenTally) -> Self {
        Self {
            n00: g.n00 as f64,
            n01: g.n01 as f64,
            n10: g.n10 as f64,
            n11: g.n11 as f64,
            n0v: g.n0v as f64,
            n1v: g.n1v as f64,
        }
    }
}

/// Phase errors among the filtered pairs: `β²·n01 + α²·n10`. Exact because
/// the filter is diagonal in the X basis and passes Bob's `0x` with
/// probability α² and `1x` with probability β².
pub fn phase_errors_from_gedanken(g: &GedankenCounts, a: Angle) -> f64 {
    a.beta_sq() * g.n01 + a.alpha_sq() * g.n10
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum EstimatorMode {
    WorstCase,
    DecoyInformed,
    Direct,
}

/// Knobs of the restricted-family bound.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct OptimizerSettings {
    /// Half-width of every observable band, in binomial standard deviations.
    pub sigma_k: f64,
    /// Seed grid resolution: `grid_steps + 1` points per coordinate.
    pub grid_steps: u32,
    /// Local searches started from the best seed-grid points.
    pub seeds: usize,
    /// Smallest objective step before a local search stops climbing.
    pub objective_tol: f64,
    /// Iteration cap of each feasibility solve.
    pub max_iter: u32,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            sigma_k: 3.0,
            grid_steps: 8,
            seeds: 12,
            objective_tol: 1e-5,
            max_iter: 100,
        }
    }
}

impl OptimizerSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_k > 0.0 && self.sigma_k.is_finite()) {
            return Err(Error::domain("sigma_k", self.sigma_k, "(0, ∞)"));
        }
        if self.grid_steps == 0 || self.grid_steps > 40 {
            return Err(Error::domain("grid_steps", self.grid_steps as f64, "[1, 40]"));
        }
        if self.seeds == 0 {
            return Err(Error::domain("seeds", 0.0, "[1, ∞)"));
        }
        if !(self.objective_tol > 0.0 && self.objective_tol < 0.1) {
            return Err(Error::domain("objective_tol", self.objective_tol, "(0, 0.1)"));
        }
        if self.max_iter == 0 {
            return Err(Error::domain("max_iter", 0.0, "[1, ∞)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimateReport {
    pub mode: EstimatorMode,
    /// Check-half error rate, used as the Data-half prediction.
    pub e_bit: f64,
    /// Phase errors per filtered pair (a value for `Direct`, an upper bound
    /// otherwise).
    pub lambda_ph: f64,
    /// Secure bits per emitted pulse.
    pub gain: f64,
    /// `n_fil / n_total`.
    pub filtered_fraction: f64,
    pub n_fil: u64,
    pub n_key: u64,
    pub feasible: bool,
    pub converged: bool,
    pub e_bit_radius: f64,
    pub lambda_radius: f64,
    /// Maximizing member of the restricted family.
    pub attack: Option<AttackModel>,
}

impl EstimateReport {
    /// Upper bound on the phase-error count in the Data half.
    pub fn n_ph_bound(&self) -> f64 {
        self.lambda_ph * self.n_fil as f64
    }
}

/// `ff · max(0, 1 - h(e_bit) - h(lambda_ph))`, and 0 once either rate
/// reaches 1/2.
pub fn gain(e_bit: f64, lambda_ph: f64, filtered_fraction: f64) -> f64 {
    if !(e_bit < 0.5 && lambda_ph < 0.5) {
        return 0.0;
    }
    let e = e_bit.max(0.0);
    let l = lambda_ph.max(0.0);
    filtered_fraction * (1.0 - entropy_unchecked(e) - entropy_unchecked(l)).max(0.0)
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn sq(x: f64) -> f64 {
    x * x
}

fn sigma(o: f64, n: u64) -> f64 {
    let n = n as f64;
    libm::sqrt(o * (1.0 - o) / n).max(1.0 / n)
}

struct Common {
    e_bit: f64,
    e_bit_radius: f64,
    ff: f64,
}

fn common(t: &TallySheet, k: f64) -> Result<Common> {
    let e_bit = ratio(t.n_err, t.n_check).ok_or(Error::InsufficientData("empty Check half"))?;
    if t.n_total == 0 {
        return Err(Error::InsufficientData("empty tally"));
    }
    Ok(Common {
        e_bit,
        e_bit_radius: k * sigma(e_bit, t.n_check),
        ff: t.n_fil as f64 / t.n_total as f64,
    })
}

#[allow(clippy::too_many_arguments)]
fn report(
    t: &TallySheet,
    mode: EstimatorMode,
    c: &Common,
    lambda_ph: f64,
    lambda_radius: f64,
    feasible: bool,
    converged: bool,
    attack: Option<AttackModel>,
) -> EstimateReport {
    let g = if feasible { gain(c.e_bit, lambda_ph, c.ff) } else { 0.0 };
    EstimateReport {
        mode,
        e_bit: c.e_bit,
        lambda_ph,
        gain: g,
        filtered_fraction: c.ff,
        n_fil: t.n_fil,
        n_key: libm::floor(g * t.n_total as f64) as u64,
        feasible,
        converged,
        e_bit_radius: c.e_bit_radius,
        lambda_radius,
        attack,
    }
}

/// Direct estimate from decoys measured in the X basis. The two error rates
/// are taken per X-measured decoy of each class:
/// `r10 = n(d→X0)/n(d in X)`, `r01 = n(d'→X1)/n(d' in X)`, and
/// `e_ph = (β⁴·r01 + α⁴·r10) / r_fil` with `r_fil` the conclusive rate of
/// signals measured with the POVM.
pub fn direct_estimates(t: &TallySheet, a: Angle) -> Result<EstimateReport> {
    if t.variant != Variant::B92dbar {
        return Err(Error::WrongVariant("direct estimates need X-basis decoy data"));
    }
    let k = OptimizerSettings::default().sigma_k;
    let c = common(t, k)?;
    let x = &t.decoy_x;
    let nd = t.xbasis_measured.get(PulseClass::DecoyD);
    let ndp = t.xbasis_measured.get(PulseClass::DecoyDPrime);
    let rates = (ratio(x.d_x0, nd), ratio(x.dprime_x1, ndp), ratio(t.conclusive.signals(), t.povm_measured.signals()));
    let (r10, r01, r_fil) = match rates {
        (Some(r10), Some(r01), Some(r_fil)) if r_fil > 0.0 => (r10, r01, r_fil),
        _ => return Ok(report(t, EstimatorMode::Direct, &c, 1.0, 0.0, false, true, None)),
    };
    let (b4, a4) = (a.beta_sq() * a.beta_sq(), a.alpha_sq() * a.alpha_sq());
    let lambda = (b4 * r01 + a4 * r10) / r_fil;
    let var = b4 * b4 * sq(sigma(r01, ndp)) + a4 * a4 * sq(sigma(r10, nd));
    let radius = k * libm::sqrt(var) / r_fil;
    Ok(report(t, EstimatorMode::Direct, &c, lambda, radius, true, true, None))
}

/// Predicted observables of one restricted-family member.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Prediction {
    conc: f64,
    e_rel: f64,
    vac: f64,
    dv: f64,
    dpv: f64,
    lambda: f64,
}

struct ForwardModel {
    a: Angle,
    bob: Povm,
    signals: [DensityOperator; 2],
    weights: [f64; 2],
    zero_x: DensityOperator,
    one_x: DensityOperator,
}

/// `u ∈ [0,1]⁵` → `(qx, qy, qz, lam0, lam1)` by stick breaking, so every
/// point is a valid channel.
fn unpack(u: &[f64; 5]) -> ([f64; 3], f64, f64) {
    let qx = u[0];
    let qy = (1.0 - u[0]) * u[1];
    let qz = (1.0 - u[0]) * (1.0 - u[1]) * u[2];
    ([qx, qy, qz], u[3], u[4])
}

impl ForwardModel {
    fn new(a: Angle, t: &TallySheet) -> Result<Self> {
        let w0 = t.povm_measured.get(PulseClass::Signal0) as f64;
        let w1 = t.povm_measured.get(PulseClass::Signal1) as f64;
        let weights = if w0 + w1 > 0.0 {
            [w0 / (w0 + w1), w1 / (w0 + w1)]
        } else {
            [0.5, 0.5]
        };
        Ok(Self {
            a,
            bob: b92_povm(a, a.beta())?,
            signals: [
                PulseClass::Signal0.ket(a).density(),
                PulseClass::Signal1.ket(a).density(),
            ],
            weights,
            zero_x: PulseClass::DecoyDPrime.ket(a).density(),
            one_x: PulseClass::DecoyD.ket(a).density(),
        })
    }

    fn predict(&self, u: &[f64; 5]) -> Prediction {
        let (q, lam0, lam1) = unpack(u);
        let (mut conc, mut err, mut vac) = (0.0, 0.0, 0.0);
        for (bit, (rho, w)) in self.signals.iter().zip(self.weights).enumerate() {
            let out = restricted_unchecked(q, lam0, lam1, rho);
            let [p0, p1, _, pv] = outcome_distribution(&self.bob, &out);
            conc += w * (p0 + p1);
            err += w * if bit == 0 { p1 } else { p0 };
            vac += w * pv;
        }
        let zero = restricted_unchecked(q, lam0, lam1, &self.zero_x);
        let one = restricted_unchecked(q, lam0, lam1, &self.one_x);
        let (b2, a2) = (self.a.beta_sq(), self.a.alpha_sq());
        let r_ph = b2 * b2 * zero.entry(1, 1).re + a2 * a2 * one.entry(0, 0).re;
        let (e_rel, lambda) = if conc > 1e-300 {
            (err / conc, (r_ph / conc).min(1.0))
        } else {
            (0.0, 1.0)
        };
        Prediction {
            conc,
            e_rel,
            vac,
            dv: one.vacuum_weight(),
            dpv: zero.vacuum_weight(),
            lambda,
        }
    }
}

/// One observable band `|pred - target| ≤ eps`.
#[derive(Debug, Clone, Copy)]
struct Band {
    target: f64,
    eps: f64,
}

impl Band {
    fn from_counts(num: u64, den: u64, k: f64) -> Option<Self> {
        ratio(num, den).map(|o| Band {
            target: o,
            eps: k * sigma(o, den),
        })
    }

    fn scaled(&self, pred: f64) -> f64 {
        (pred - self.target) / self.eps
    }
}

fn observed(p: &Prediction) -> [f64; 5] {
    [p.conc, p.e_rel, p.vac, p.dv, p.dpv]
}

/// Bands are pulled in by this factor while solving, so accepted points sit
/// strictly inside the tolerance.
const SOLVE_SHRINK: f64 = 0.9;
const MAX_RESIDUALS: usize = 6;
/// A solve gives up when the cost has not halved over this many steps.
const STALL_WINDOW: u32 = 10;
const STALL_RATIO: f64 = 0.5;
/// Below this bracket width only the incumbent is used as a start.
const GLOBAL_BRACKET: f64 = 1e-4;

struct Problem<'a> {
    model: &'a ForwardModel,
    bands: Vec<(usize, Band)>,
    objective_scale: f64,
}

impl Problem<'_> {
    fn feasible(&self, p: &Prediction) -> bool {
        let obs = observed(p);
        self.bands.iter().all(|(i, b)| libm::fabs(b.scaled(obs[*i])) <= 1.0)
    }

    /// Hinge residuals of the bands plus, with a `level`, of `lambda ≥ level`.
    fn residuals(&self, u: &[f64; 5], level: Option<f64>) -> ([f64; MAX_RESIDUALS], usize, Prediction) {
        let p = self.model.predict(u);
        let obs = observed(&p);
        let mut r = [0.0; MAX_RESIDUALS];
        let mut n = 0;
        for (i, b) in &self.bands {
            let s = b.scaled(obs[*i]);
            r[n] = libm::copysign((libm::fabs(s) - SOLVE_SHRINK).max(0.0), s);
            n += 1;
        }
        if let Some(t) = level {
            r[n] = (t - p.lambda).max(0.0) / self.objective_scale;
            n += 1;
        }
        (r, n, p)
    }

    fn cost(r: &[f64; MAX_RESIDUALS], n: usize) -> f64 {
        r[..n].iter().map(|x| x * x).sum()
    }

    /// Projected Levenberg–Marquardt on the hinge residuals. Returns the
    /// final point and whether it satisfies every band and the level.
    fn solve(&self, start: [f64; 5], level: Option<f64>, max_iter: u32) -> ([f64; 5], Prediction, bool) {
        let accept = |p: &Prediction| self.feasible(p) && level.is_none_or(|t| p.lambda >= t);
        let mut u = start;
        let (mut r, n, mut p) = self.residuals(&u, level);
        let mut cost = Self::cost(&r, n);
        let mut mu = 1e-3;
        let mut checkpoint = cost;
        for it in 0..max_iter {
            if accept(&p) {
                return (u, p, true);
            }
            if it > 0 && it % STALL_WINDOW == 0 {
                if cost > STALL_RATIO * checkpoint {
                    break;
                }
                checkpoint = cost;
            }
            let jac = self.jacobian(&u, &r, n, level);
            let mut jtj = [[0.0; 5]; 5];
            let mut jtr = [0.0; 5];
            for row in 0..n {
                for i in 0..5 {
                    jtr[i] += jac[row][i] * r[row];
                    for j in 0..5 {
                        jtj[i][j] += jac[row][i] * jac[row][j];
                    }
                }
            }
            let scale = (0..5).map(|i| jtj[i][i]).fold(0.0, f64::max);
            if scale == 0.0 {
                break;
            }
            let mut improved = false;
            while mu < 1e12 {
                let mut m = jtj;
                for (i, row) in m.iter_mut().enumerate() {
                    row[i] += mu * row[i].max(1e-9 * scale);
                }
                let Some(step) = solve5(m, jtr.map(|x| -x)) else {
                    mu *= 4.0;
                    continue;
                };
                let mut trial = u;
                for i in 0..5 {
                    trial[i] = (u[i] + step[i]).clamp(0.0, 1.0);
                }
                let (tr, _, tp) = self.residuals(&trial, level);
                let tc = Self::cost(&tr, n);
                if tc < cost {
                    u = trial;
                    r = tr;
                    p = tp;
                    cost = tc;
                    mu = (mu / 3.0).max(1e-12);
                    improved = true;
                    break;
                }
                mu *= 4.0;
            }
            if !improved {
                break;
            }
        }
        let ok = accept(&p);
        (u, p, ok)
    }

    fn jacobian(
        &self,
        u: &[f64; 5],
        r: &[f64; MAX_RESIDUALS],
        n: usize,
        level: Option<f64>,
    ) -> [[f64; 5]; MAX_RESIDUALS] {
        const H: f64 = 1e-7;
        let mut jac = [[0.0; 5]; MAX_RESIDUALS];
        for j in 0..5 {
            let h = if u[j] + H <= 1.0 { H } else { -H };
            let mut v = *u;
            v[j] += h;
            let (rv, _, _) = self.residuals(&v, level);
            for row in 0..n {
                jac[row][j] = (rv[row] - r[row]) / h;
            }
        }
        jac
    }
}

/// Gaussian elimination with partial pivoting.
fn solve5(mut m: [[f64; 5]; 5], mut b: [f64; 5]) -> Option<[f64; 5]> {
    for col in 0..5 {
        let piv = (col..5).max_by(|&i, &j| libm::fabs(m[i][col]).total_cmp(&libm::fabs(m[j][col])))?;
        if m[piv][col] == 0.0 || !m[piv][col].is_finite() {
            return None;
        }
        m.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..5 {
            let f = m[row][col] / m[col][col];
            let pivot_row = m[col];
            for (x, p) in m[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 5];
    for row in (0..5).rev() {
        let s: f64 = (row + 1..5).map(|k| m[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / m[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[derive(Debug, Clone, Copy)]
struct Point {
    u: [f64; 5],
    p: Prediction,
}

/// Largest objective level reached by any start: bisection on the level
/// between the best feasible point and 1, where a level counts as reached
/// when a feasibility solve with the level residual succeeds from the
/// incumbent or, while the bracket is wide, from any start. Returns the incumbent and whether the
/// bracket closed to `objective_tol`.
fn maximize(problem: &Problem, starts: &[[f64; 5]], mut best: Point, s: &OptimizerSettings) -> (Point, bool) {
    let mut hi = 1.0;
    for _ in 0..64 {
        if hi - best.p.lambda <= s.objective_tol {
            return (best, true);
        }
        let level = 0.5 * (best.p.lambda + hi);
        let others = if hi - best.p.lambda > GLOBAL_BRACKET { starts } else { &[] };
        let found = core::iter::once(&best.u)
            .chain(others)
            .map(|u| problem.solve(*u, Some(level), s.max_iter))
            .find(|(_, _, ok)| *ok);
        match found {
            Some((u, p, _)) => best = Point { u, p },
            None => hi = level,
        }
    }
    (best, hi - best.p.lambda <= s.objective_tol)
}

/// Deterministic seed points: the lowest-violation grid points overall, and
/// the lowest-violation points within each tenth of the objective range so
/// that separated high-objective regions get starts of their own.
fn seed_points(problem: &Problem, s: &OptimizerSettings) -> Vec<[f64; 5]> {
    const BINS: usize = 10;
    const PER_BIN: usize = 3;
    let g = s.grid_steps;
    let step = 1.0 / g as f64;
    // the observed signal vacuum rate anchors both loss coordinates on a
    // second, three-dimensional grid
    let vac = problem.bands.iter().find(|(i, _)| *i == 2).map(|(_, b)| b.target);
    let mut seeds: Vec<[f64; 5]> = Vec::new();
    for dims in [5usize, 3] {
        if dims == 3 && vac.is_none() {
            continue;
        }
        let mut scored: Vec<(f64, f64, [f64; 5])> = Vec::new();
        let mut idx = [0u32; 5];
        loop {
            let mut u = idx.map(|i| i as f64 * step);
            if dims == 3 {
                let v = vac.unwrap_or(0.0);
                u[3] = v;
                u[4] = v;
            }
            let (r, n, p) = problem.residuals(&u, None);
            scored.push((Problem::cost(&r, n), p.lambda, u));
            // odometer over the grid
            let mut d = 0;
            while d < dims {
                idx[d] += 1;
                if idx[d] <= g {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
            if d == dims {
                break;
            }
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
        for (_, _, u) in scored.iter().take(s.seeds) {
            if !seeds.contains(u) {
                seeds.push(*u);
            }
        }
        let mut taken = [0usize; BINS];
        for (_, lambda, u) in &scored {
            let bin = ((lambda * BINS as f64) as usize).min(BINS - 1);
            if taken[bin] < PER_BIN && !seeds.contains(u) {
                taken[bin] += 1;
                seeds.push(*u);
            }
        }
    }
    seeds
}

/// Restricted-family upper bound on the filtered phase-error rate.
///
/// Observables always matched: conclusive rate and vacuum rate of signals
/// measured with the POVM, and the Check-half error rate. `DecoyInformed`
/// adds the vacuum rates of both decoy classes. Each band is
/// `sigma_k` binomial standard deviations wide (at least `sigma_k / n`).
pub fn bound_phase_errors(
    t: &TallySheet,
    a: Angle,
    mode: EstimatorMode,
    settings: &OptimizerSettings,
) -> Result<EstimateReport> {
    settings.validate()?;
    if mode == EstimatorMode::Direct {
        return Err(Error::WrongVariant("use direct_estimates for the direct mode"));
    }
    let k = settings.sigma_k;
    let c = common(t, k)?;
    let n_sig = t.povm_measured.signals();
    let insufficient = Error::InsufficientData("no signal measured with the POVM");
    let mut bands = Vec::new();
    bands.push((0, Band::from_counts(t.conclusive.signals(), n_sig, k).ok_or(insufficient.clone())?));
    bands.push((1, Band::from_counts(t.n_err, t.n_check, k).ok_or(insufficient.clone())?));
    bands.push((2, Band::from_counts(t.vacuum_povm.signals(), n_sig, k).ok_or(insufficient)?));
    if mode == EstimatorMode::DecoyInformed {
        let nd = t.monitored(PulseClass::DecoyD);
        let ndp = t.monitored(PulseClass::DecoyDPrime);
        let no_decoys = Error::WrongVariant("decoy-informed bound needs decoy pulses");
        bands.push((3, Band::from_counts(t.n_dv(), nd, k).ok_or(no_decoys.clone())?));
        bands.push((4, Band::from_counts(t.n_dprime_v(), ndp, k).ok_or(no_decoys)?));
    }
    let model = ForwardModel::new(a, t)?;
    let problem = Problem {
        model: &model,
        bands,
        objective_scale: settings.objective_tol,
    };

    let seeds = seed_points(&problem, settings);
    let mut feasible: Vec<Point> = seeds
        .iter()
        .filter_map(|&seed| {
            let (u, p, ok) = problem.solve(seed, None, settings.max_iter);
            ok.then_some(Point { u, p })
        })
        .collect();
    // highest objective first, ties broken upward by coordinates for a
    // deterministic order
    feasible.sort_by(|x, y| y.p.lambda.total_cmp(&x.p.lambda).then(y.u.partial_cmp(&x.u).unwrap_or(core::cmp::Ordering::Equal)));
    let (best, converged) = match feasible.first() {
        None => (None, true),
        Some(first) => {
            let starts: Vec<[f64; 5]> = feasible.iter().map(|pt| pt.u).chain(seeds.iter().copied()).collect();
            let (b, c) = maximize(&problem, &starts, *first, settings);
            (Some(b), c)
        }
    };
    Ok(match best {
        None => report(t, mode, &c, 1.0, 0.0, false, converged, None),
        Some(b) => {
            let (q, lam0, lam1) = unpack(&b.u);
            let attack = AttackModel::RestrictedPauliLoss {
                qx: q[0],
                qy: q[1],
                qz: q[2],
                lam0,
                lam1,
            };
            report(t, mode, &c, b.p.lambda, settings.objective_tol, true, converged, Some(attack))
        }
    })
}

/// Dispatches on `mode`.
pub fn estimate(
    t: &TallySheet,
    a: Angle,
    mode: EstimatorMode,
    settings: &OptimizerSettings,
) -> Result<EstimateReport> {
    match mode {
        EstimatorMode::Direct => direct_estimates(t, a),
        _ => bound_phase_errors(t, a, mode, settings),
    }
}
