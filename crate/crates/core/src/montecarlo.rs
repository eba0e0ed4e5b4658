//! Pulse-by-pulse execution of the prepare-and-measure protocols.
//!
//! * `B92`: Alice sends the two signal states, Bob measures `𝓜^β`.
//! * `B92bar`: Alice also sends the decoys `|1x⟩` (weight α²) and `|0x⟩`
//!   (weight β²); their losses are announced and the decoys discarded.
//! * `B92dbar`: as `B92bar`, but Bob measures in the X basis with
//!   probability 1/2. Signal pulses measured in X are discarded; decoy pulses
//!   measured in X give direct X-error counts.
//!
//! Randomness for pulse `i` comes from a ChaCha stream selected by `i` under
//! the trial seed, so any partition of the index range yields the same
//! tally. The Check/Data split of sifted signal positions uses a separate
//! stream and runs once, after all pulses are merged.

use alloc::vec::Vec;
use core::ops::Range;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{transmit, AttackModel, ChannelOutput};
use crate::protocol_states::{b92_povm, decoy_class_weights, filter_operator, Angle, Povm, PulseClass};
use crate::qmath::{outcome_distribution, sample_outcome, DensityOperator, PovmOutcome};
use crate::{Error, Result};

const PERMUTATION_STREAM: u64 = u64::MAX;
const CLASS_TABLE_STREAM: u64 = u64::MAX - 1;
const GEDANKEN_SALT: u64 = 0x6765_6461_6e6b_656e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Variant {
    B92,
    B92bar,
    B92dbar,
}

impl Variant {
    pub fn has_decoys(self) -> bool {
        !matches!(self, Variant::B92)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SamplingMode {
    /// Each pulse draws its class independently.
    #[default]
    IidPerPulse,
    /// Fixed class counts (2N signals, α²N and β²N decoys), shuffled.
    ExactCounts,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ProtocolParams {
    pub variant: Variant,
    pub angle: Angle,
    pub n_total: u64,
    pub seed: u64,
    pub sampling_mode: SamplingMode,
}

impl ProtocolParams {
    pub fn new(variant: Variant, angle: Angle, n_total: u64, seed: u64) -> Result<Self> {
        let p = Self {
            variant,
            angle,
            n_total,
            seed,
            sampling_mode: SamplingMode::IidPerPulse,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_sampling(mut self, mode: SamplingMode) -> Self {
        self.sampling_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_total == 0 {
            return Err(Error::domain("n_total", 0.0, "[1, ∞)"));
        }
        Ok(())
    }

    /// Preparation probabilities indexed like [`PulseClass::ALL`].
    pub fn class_weights(&self) -> [f64; 4] {
        match self.variant {
            Variant::B92 => [0.5, 0.5, 0.0, 0.0],
            _ => decoy_class_weights(self.angle),
        }
    }

    /// Class counts used by [`SamplingMode::ExactCounts`].
    pub fn exact_class_counts(&self) -> [u64; 4] {
        let n = self.n_total;
        match self.variant {
            Variant::B92 => [n / 2, n - n / 2, 0, 0],
            _ => {
                let third = n / 3;
                let decoys = n - 2 * third;
                let d = libm::round(self.angle.alpha_sq() * third as f64) as u64;
                let d = d.min(decoys);
                [third, third, d, decoys - d]
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum BobBasis {
    Povm,
    XBasis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Outcome {
    Vacuum,
    Inconclusive,
    Conclusive0,
    Conclusive1,
    X0,
    X1,
}

impl Outcome {
    pub fn decoded_bit(self) -> Option<u8> {
        match self {
            Outcome::Conclusive0 => Some(0),
            Outcome::Conclusive1 => Some(1),
            _ => None,
        }
    }
}

impl From<PovmOutcome> for Outcome {
    fn from(o: PovmOutcome) -> Self {
        match o {
            PovmOutcome::Conclusive0 => Outcome::Conclusive0,
            PovmOutcome::Conclusive1 => Outcome::Conclusive1,
            PovmOutcome::Inconclusive => Outcome::Inconclusive,
            PovmOutcome::Vacuum => Outcome::Vacuum,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Half {
    Check,
    Data,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PulseRecord {
    pub index: u64,
    pub pulse_class: PulseClass,
    pub bob_basis: BobBasis,
    pub outcome: Outcome,
    /// Set for sifted signal positions once the trial is finished.
    pub half: Option<Half>,
}

impl PulseRecord {
    /// Signal measured with `𝓜^β` and decoded.
    pub fn is_sifted(&self) -> bool {
        self.pulse_class.is_signal()
            && self.bob_basis == BobBasis::Povm
            && self.outcome.decoded_bit().is_some()
    }

    pub fn is_error(&self) -> bool {
        match (self.pulse_class.bit(), self.outcome.decoded_bit()) {
            (Some(sent), Some(got)) => sent != got,
            _ => false,
        }
    }

    /// Signal pulses measured in the X basis carry no estimator input.
    pub fn is_discarded(&self) -> bool {
        self.pulse_class.is_signal() && self.bob_basis == BobBasis::XBasis
    }
}

/// Per-class counters indexed like [`PulseClass::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassCounts(pub [u64; 4]);

impl ClassCounts {
    pub fn get(&self, class: PulseClass) -> u64 {
        self.0[class.index()]
    }

    fn bump(&mut self, class: PulseClass) {
        self.0[class.index()] += 1;
    }

    pub fn signals(&self) -> u64 {
        self.0[0] + self.0[1]
    }

    pub fn decoys(&self) -> u64 {
        self.0[2] + self.0[3]
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }

    fn merge(&mut self, other: &ClassCounts) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }
}

/// X-basis outcomes on decoy pulses (`B92dbar`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecoyXCounts {
    pub d_x0: u64,
    pub d_x1: u64,
    pub dprime_x0: u64,
    pub dprime_x1: u64,
}

impl DecoyXCounts {
    fn merge(&mut self, o: &DecoyXCounts) {
        self.d_x0 += o.d_x0;
        self.d_x1 += o.d_x1;
        self.dprime_x0 += o.dprime_x0;
        self.dprime_x1 += o.dprime_x1;
    }
}

/// Aggregated protocol counts.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TallySheet {
    pub variant: Variant,
    pub n_total: u64,
    pub emitted: ClassCounts,
    /// Signal pulses Bob measured in the X basis.
    pub discarded: ClassCounts,
    pub povm_measured: ClassCounts,
    pub conclusive: ClassCounts,
    pub inconclusive: ClassCounts,
    pub vacuum_povm: ClassCounts,
    pub xbasis_measured: ClassCounts,
    pub vacuum_xbasis: ClassCounts,
    pub decoy_x: DecoyXCounts,
    /// Sifted signal positions in the Check half.
    pub n_check: u64,
    /// Decoding errors in the Check half.
    pub n_err: u64,
    /// Sifted signal positions in the Data half (filtered pairs).
    pub n_fil: u64,
    /// Decoding errors in the Data half. Never used by estimators.
    pub n_bit_true: u64,
}

impl TallySheet {
    fn empty(variant: Variant) -> Self {
        Self {
            variant,
            n_total: 0,
            emitted: ClassCounts::default(),
            discarded: ClassCounts::default(),
            povm_measured: ClassCounts::default(),
            conclusive: ClassCounts::default(),
            inconclusive: ClassCounts::default(),
            vacuum_povm: ClassCounts::default(),
            xbasis_measured: ClassCounts::default(),
            vacuum_xbasis: ClassCounts::default(),
            decoy_x: DecoyXCounts::default(),
            n_check: 0,
            n_err: 0,
            n_fil: 0,
            n_bit_true: 0,
        }
    }

    /// Joint count of class `k` prepared and vacuum detected.
    pub fn n_kv(&self, class: PulseClass) -> u64 {
        self.vacuum_povm.get(class) + self.vacuum_xbasis.get(class)
    }

    pub fn n_v(&self) -> u64 {
        PulseClass::ALL.iter().map(|&k| self.n_kv(k)).sum()
    }

    pub fn n_dv(&self) -> u64 {
        self.n_kv(PulseClass::DecoyD)
    }

    pub fn n_dprime_v(&self) -> u64 {
        self.n_kv(PulseClass::DecoyDPrime)
    }

    pub fn n_conc(&self) -> u64 {
        self.conclusive.total()
    }

    pub fn n_inc(&self) -> u64 {
        self.inconclusive.total()
    }

    /// Pulses of `class` that feed loss monitoring.
    pub fn monitored(&self, class: PulseClass) -> u64 {
        self.povm_measured.get(class) + self.xbasis_measured.get(class)
    }
}

#[derive(Debug, Clone, Default)]
pub struct PartialTally {
    emitted: ClassCounts,
    discarded: ClassCounts,
    povm_measured: ClassCounts,
    conclusive: ClassCounts,
    inconclusive: ClassCounts,
    vacuum_povm: ClassCounts,
    xbasis_measured: ClassCounts,
    vacuum_xbasis: ClassCounts,
    decoy_x: DecoyXCounts,
    /// `(index, decoding error)` of every sifted signal pulse.
    sifted: Vec<(u64, bool)>,
}

impl PartialTally {
    pub fn record(&mut self, rec: &PulseRecord) {
        let k = rec.pulse_class;
        self.emitted.bump(k);
        if rec.is_discarded() {
            self.discarded.bump(k);
            return;
        }
        match rec.bob_basis {
            BobBasis::Povm => {
                self.povm_measured.bump(k);
                match rec.outcome {
                    Outcome::Vacuum => self.vacuum_povm.bump(k),
                    Outcome::Inconclusive => self.inconclusive.bump(k),
                    Outcome::Conclusive0 | Outcome::Conclusive1 => {
                        self.conclusive.bump(k);
                        if k.is_signal() {
                            self.sifted.push((rec.index, rec.is_error()));
                        }
                    }
                    Outcome::X0 | Outcome::X1 => unreachable!("POVM branch yields no X outcome"),
                }
            }
            BobBasis::XBasis => {
                self.xbasis_measured.bump(k);
                let x = &mut self.decoy_x;
                match (k, rec.outcome) {
                    (_, Outcome::Vacuum) => self.vacuum_xbasis.bump(k),
                    (PulseClass::DecoyD, Outcome::X0) => x.d_x0 += 1,
                    (PulseClass::DecoyD, Outcome::X1) => x.d_x1 += 1,
                    (PulseClass::DecoyDPrime, Outcome::X0) => x.dprime_x0 += 1,
                    (PulseClass::DecoyDPrime, Outcome::X1) => x.dprime_x1 += 1,
                    _ => unreachable!("X branch yields X outcomes or vacuum"),
                }
            }
        }
    }

    /// Associative, commutative merge.
    pub fn merge(&mut self, other: PartialTally) {
        self.emitted.merge(&other.emitted);
        self.discarded.merge(&other.discarded);
        self.povm_measured.merge(&other.povm_measured);
        self.conclusive.merge(&other.conclusive);
        self.inconclusive.merge(&other.inconclusive);
        self.vacuum_povm.merge(&other.vacuum_povm);
        self.xbasis_measured.merge(&other.xbasis_measured);
        self.vacuum_xbasis.merge(&other.vacuum_xbasis);
        self.decoy_x.merge(&other.decoy_x);
        self.sifted.extend(other.sifted);
    }

    pub fn pulses(&self) -> u64 {
        self.emitted.total()
    }
}

/// Uniform in `[0, 1)` from the stream.
fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.random::<f64>()
}

fn pulse_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_class(weights: &[f64; 4], u: f64) -> PulseClass {
    let mut acc = 0.0;
    for (class, w) in PulseClass::ALL.iter().zip(weights) {
        acc += w;
        if u < acc {
            return *class;
        }
    }
    // rounding slack lands on the last class with weight
    *PulseClass::ALL
        .iter()
        .zip(weights)
        .rev()
        .find(|(_, w)| **w > 0.0)
        .map(|(c, _)| c)
        .unwrap_or(&PulseClass::Signal1)
}

/// Bob's measurement on what the channel delivered. `B92dbar` picks `𝓜^β`
/// or the X basis with a fair coin; vacuum reads as vacuum in both.
pub fn bob_measure<R: rand::Rng>(
    variant: Variant,
    output: &ChannelOutput,
    bob_povm: &Povm,
    rng: &mut R,
) -> (BobBasis, Outcome) {
    let basis = match variant {
        Variant::B92dbar if rng.random::<bool>() => BobBasis::XBasis,
        _ => BobBasis::Povm,
    };
    let r: f64 = rng.random();
    let outcome = match output {
        ChannelOutput::Vacuum => Outcome::Vacuum,
        ChannelOutput::Arrived(rho) => match basis {
            BobBasis::Povm => sample_outcome(bob_povm, rho, r).into(),
            BobBasis::XBasis => {
                if r < rho.entry(0, 0).re {
                    Outcome::X0
                } else {
                    Outcome::X1
                }
            }
        },
    };
    (basis, outcome)
}

/// A configured trial. Pulses can be simulated in any order and any
/// partition; [`Trial::finish`] turns the merged counts into a tally.
#[derive(Debug, Clone)]
pub struct Trial {
    params: ProtocolParams,
    model: AttackModel,
    bob_povm: Povm,
    weights: [f64; 4],
    class_table: Option<Vec<PulseClass>>,
}

impl Trial {
    pub fn new(params: ProtocolParams, model: AttackModel) -> Result<Self> {
        params.validate()?;
        model.validate()?;
        let bob_povm = b92_povm(params.angle, params.angle.beta())?;
        let class_table = match params.sampling_mode {
            SamplingMode::IidPerPulse => None,
            SamplingMode::ExactCounts => {
                let counts = params.exact_class_counts();
                let mut table = Vec::with_capacity(params.n_total as usize);
                for (class, n) in PulseClass::ALL.iter().zip(counts) {
                    table.extend(core::iter::repeat_n(*class, n as usize));
                }
                table.shuffle(&mut pulse_rng(params.seed, CLASS_TABLE_STREAM));
                Some(table)
            }
        };
        Ok(Self {
            weights: params.class_weights(),
            params,
            model,
            bob_povm,
            class_table,
        })
    }

    pub fn params(&self) -> &ProtocolParams {
        &self.params
    }

    fn prepare(&self, index: u64, rng: &mut ChaCha8Rng) -> PulseClass {
        let u = uniform(rng);
        match &self.class_table {
            Some(table) => table[index as usize],
            None => draw_class(&self.weights, u),
        }
    }

    /// Full life of pulse `index`: prepare, transmit, measure.
    pub fn simulate_pulse(&self, index: u64) -> PulseRecord {
        let mut rng = pulse_rng(self.params.seed, index);
        let class = self.prepare(index, &mut rng);
        let output = transmit(&self.model, class, self.params.angle, uniform(&mut rng))
            .expect("model validated at construction");
        let (bob_basis, outcome) = bob_measure(self.params.variant, &output, &self.bob_povm, &mut rng);
        PulseRecord {
            index,
            pulse_class: class,
            bob_basis,
            outcome,
            half: None,
        }
    }

    pub fn simulate_range(&self, range: Range<u64>) -> PartialTally {
        let mut part = PartialTally::default();
        for i in range {
            part.record(&self.simulate_pulse(i));
        }
        part
    }

    /// Seeded Check/Data assignment of sifted positions: returns the
    /// indices in Check order followed by Data order, and the Check size.
    fn split(&self, mut sifted: Vec<(u64, bool)>) -> (Vec<(u64, bool)>, usize) {
        sifted.sort_unstable_by_key(|s| s.0);
        sifted.shuffle(&mut pulse_rng(self.params.seed, PERMUTATION_STREAM));
        let n_check = sifted.len() / 2;
        (sifted, n_check)
    }

    /// Applies the permutation and halving, then fills every count.
    pub fn finish(&self, part: PartialTally) -> TallySheet {
        let mut t = TallySheet::empty(self.params.variant);
        t.n_total = part.pulses();
        t.emitted = part.emitted;
        t.discarded = part.discarded;
        t.povm_measured = part.povm_measured;
        t.conclusive = part.conclusive;
        t.inconclusive = part.inconclusive;
        t.vacuum_povm = part.vacuum_povm;
        t.xbasis_measured = part.xbasis_measured;
        t.vacuum_xbasis = part.vacuum_xbasis;
        t.decoy_x = part.decoy_x;
        let (order, n_check) = self.split(part.sifted);
        t.n_check = n_check as u64;
        t.n_fil = (order.len() - n_check) as u64;
        t.n_err = order[..n_check].iter().filter(|s| s.1).count() as u64;
        t.n_bit_true = order[n_check..].iter().filter(|s| s.1).count() as u64;
        t
    }

    /// Every pulse record, with halves assigned to sifted positions.
    pub fn transcript(&self) -> Vec<PulseRecord> {
        let mut records: Vec<PulseRecord> =
            (0..self.params.n_total).map(|i| self.simulate_pulse(i)).collect();
        let sifted = records
            .iter()
            .filter(|r| r.is_sifted())
            .map(|r| (r.index, r.is_error()))
            .collect();
        let (order, n_check) = self.split(sifted);
        for (pos, (index, _)) in order.iter().enumerate() {
            records[*index as usize].half = Some(if pos < n_check { Half::Check } else { Half::Data });
        }
        records
    }
}

/// Alice's preparation sequence, the same one [`run_trial`] uses.
pub fn alice_prepare(params: &ProtocolParams) -> Result<Vec<(PulseClass, crate::qmath::QubitState)>> {
    let trial = Trial::new(*params, AttackModel::Identity)?;
    Ok((0..params.n_total)
        .map(|i| {
            let mut rng = pulse_rng(params.seed, i);
            let class = trial.prepare(i, &mut rng);
            (class, class.ket(params.angle))
        })
        .collect())
}

/// Single-threaded trial over all pulses.
pub fn run_trial(params: &ProtocolParams, model: &AttackModel) -> Result<TallySheet> {
    let trial = Trial::new(*params, *model)?;
    let part = trial.simulate_range(0..params.n_total);
    Ok(trial.finish(part))
}

/// Expected tally (counts rounded to integers) of a trial with
/// `params.n_total` pulses: the asymptotic limit of [`run_trial`].
pub fn expected_tally(params: &ProtocolParams, model: &AttackModel) -> Result<TallySheet> {
    params.validate()?;
    model.validate()?;
    let a = params.angle;
    let bob = b92_povm(a, a.beta())?;
    let n = params.n_total as f64;
    let counts: [f64; 4] = match params.sampling_mode {
        SamplingMode::IidPerPulse => params.class_weights().map(|w| w * n),
        SamplingMode::ExactCounts => params.exact_class_counts().map(|c| c as f64),
    };
    let povm_share = if params.variant == Variant::B92dbar { 0.5 } else { 1.0 };
    let mut t = TallySheet::empty(params.variant);
    let (mut sig_conc, mut sig_err) = (0.0, 0.0);
    for class in PulseClass::ALL {
        let i = class.index();
        let emitted = libm::round(counts[i]) as u64;
        t.emitted.0[i] = emitted;
        if emitted == 0 {
            continue;
        }
        let out = model.output_density(class, a)?;
        let [p0, p1, _, pv] = outcome_distribution(&bob, &out);
        let povm = libm::round(emitted as f64 * povm_share) as u64;
        let xb = emitted - povm;
        t.povm_measured.0[i] = povm;
        let conc = libm::round(povm as f64 * (p0 + p1)) as u64;
        let vac = libm::round(povm as f64 * pv) as u64;
        t.conclusive.0[i] = conc;
        t.vacuum_povm.0[i] = vac;
        t.inconclusive.0[i] = povm.saturating_sub(conc + vac);
        if class.is_signal() {
            t.discarded.0[i] = xb;
            let wrong = if class.bit() == Some(0) { p1 } else { p0 };
            sig_conc += povm as f64 * (p0 + p1);
            sig_err += povm as f64 * wrong;
        } else {
            t.xbasis_measured.0[i] = xb;
            let xv = libm::round(xb as f64 * pv) as u64;
            let x0 = libm::round(xb as f64 * out.entry(0, 0).re) as u64;
            let x1 = xb.saturating_sub(xv + x0);
            t.vacuum_xbasis.0[i] = xv;
            if class == PulseClass::DecoyD {
                t.decoy_x.d_x0 = x0;
                t.decoy_x.d_x1 = x1;
            } else {
                t.decoy_x.dprime_x0 = x0;
                t.decoy_x.dprime_x1 = x1;
            }
        }
    }
    t.n_total = t.emitted.total();
    let sifted = t.conclusive.signals();
    let e = if sig_conc > 0.0 { sig_err / sig_conc } else { 0.0 };
    t.n_check = sifted / 2;
    t.n_fil = sifted - t.n_check;
    t.n_err = libm::round(t.n_check as f64 * e) as u64;
    t.n_bit_true = libm::round(t.n_fil as f64 * e) as u64;
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Verdict {
    /// Every class arrives at the reference rate within the threshold.
    Consistent,
    AttackDetected,
    /// No decoys were sent, so class-dependent loss cannot be seen.
    Undetectable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassArrival {
    pub class: PulseClass,
    pub monitored: u64,
    pub arrived: u64,
    pub rate: f64,
    pub z: f64,
}

/// Decoy-D losses against the no-eavesdropper expectation
/// `n_dv ≈ (monitored D pulses) · L`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecoyLossCheck {
    pub expected_n_dv: f64,
    pub observed_n_dv: u64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DetectionReport {
    pub reference_rate: f64,
    pub z_threshold: f64,
    pub classes: Vec<ClassArrival>,
    pub verdict: Verdict,
    pub decoy_loss: Option<DecoyLossCheck>,
}

fn z_score(rate: f64, reference: f64, n: u64) -> f64 {
    let n = n as f64;
    // floor keeps the score finite when the reference is 0 or 1
    let var = (reference * (1.0 - reference)).max(1.0 / n) / n;
    (rate - reference) / libm::sqrt(var)
}

/// Class-dependent loss test. Without a stated `expected_loss` the pooled
/// arrival rate over all monitored pulses is the reference.
pub fn usd_detection_test(
    t: &TallySheet,
    expected_loss: Option<f64>,
    z_threshold: f64,
) -> Result<DetectionReport> {
    if let Some(l) = expected_loss {
        if !(0.0..=1.0).contains(&l) {
            return Err(Error::domain("expected_loss", l, "[0, 1]"));
        }
    }
    let monitored_total: u64 = PulseClass::ALL.iter().map(|&k| t.monitored(k)).sum();
    if monitored_total == 0 {
        return Err(Error::InsufficientData("no monitored pulses"));
    }
    let arrived_total = monitored_total - t.n_v();
    let reference = expected_loss
        .map(|l| 1.0 - l)
        .unwrap_or(arrived_total as f64 / monitored_total as f64);
    let classes: Vec<ClassArrival> = PulseClass::ALL
        .iter()
        .filter(|&&k| t.monitored(k) > 0)
        .map(|&k| {
            let monitored = t.monitored(k);
            let arrived = monitored - t.n_kv(k);
            let rate = arrived as f64 / monitored as f64;
            ClassArrival {
                class: k,
                monitored,
                arrived,
                rate,
                z: z_score(rate, reference, monitored),
            }
        })
        .collect();
    let has_decoys = t.monitored(PulseClass::DecoyD) + t.monitored(PulseClass::DecoyDPrime) > 0;
    let verdict = if !has_decoys {
        Verdict::Undetectable
    } else if classes.iter().any(|c| c.z.abs() > z_threshold) {
        Verdict::AttackDetected
    } else {
        Verdict::Consistent
    };
    let decoy_loss = (t.monitored(PulseClass::DecoyD) > 0).then(|| {
        let n = t.monitored(PulseClass::DecoyD);
        let loss = 1.0 - reference;
        let observed = t.n_dv();
        DecoyLossCheck {
            expected_n_dv: n as f64 * loss,
            observed_n_dv: observed,
            z: z_score(observed as f64 / n as f64, loss, n),
        }
    });
    Ok(DetectionReport {
        reference_rate: reference,
        z_threshold,
        classes,
        verdict,
        decoy_loss,
    })
}

/// Counts of the entanglement-picture X measurements, gathered by an oracle
/// that can see what a real run cannot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GedankenTally {
    pub n_pairs: u64,
    pub n00: u64,
    pub n01: u64,
    pub n10: u64,
    pub n11: u64,
    pub n0v: u64,
    pub n1v: u64,
    /// Pairs that passed Bob's filter `A_fil^β` (independent samples).
    pub n_filtered: u64,
    /// Filtered pairs whose X outcomes disagree.
    pub filtered_phase_errors: u64,
}

impl GedankenTally {
    fn merge(&mut self, o: &GedankenTally) {
        self.n_pairs += o.n_pairs;
        self.n00 += o.n00;
        self.n01 += o.n01;
        self.n10 += o.n10;
        self.n11 += o.n11;
        self.n0v += o.n0v;
        self.n1v += o.n1v;
        self.n_filtered += o.n_filtered;
        self.filtered_phase_errors += o.filtered_phase_errors;
    }
}

fn x_class(bit: u8) -> PulseClass {
    if bit == 0 {
        PulseClass::DecoyDPrime
    } else {
        PulseClass::DecoyD
    }
}

/// Oracle instrumentation for the pairs `β|0x0x⟩ + α|1x1x⟩`. Alice's X
/// outcome `i` leaves `|i_x⟩` on Bob's side, which crosses `model`. Two
/// independent hypothetical experiments are run on every pair:
///
/// * Bob measures X directly, giving `n_ij` and `n_iv`;
/// * Bob applies `A_fil^β` as a Kraus operator, measures X on the filtered
///   state, and the disagreements are counted.
pub fn run_gedanken_oracle(
    a: Angle,
    model: &AttackModel,
    pairs: Range<u64>,
    seed: u64,
) -> Result<GedankenTally> {
    model.validate()?;
    let fil = filter_operator(a, a.beta())?;
    let mut g = GedankenTally::default();
    for i in pairs {
        let mut rng = pulse_rng(seed ^ GEDANKEN_SALT, i);
        let alice: u8 = if uniform(&mut rng) < a.beta_sq() { 0 } else { 1 };
        g.n_pairs += 1;

        let direct = transmit(model, x_class(alice), a, uniform(&mut rng))?;
        let r = uniform(&mut rng);
        match (alice, direct) {
            (0, ChannelOutput::Vacuum) => g.n0v += 1,
            (_, ChannelOutput::Vacuum) => g.n1v += 1,
            (_, ChannelOutput::Arrived(rho)) => {
                let bob = if r < rho.entry(0, 0).re { 0 } else { 1 };
                match (alice, bob) {
                    (0, 0) => g.n00 += 1,
                    (0, _) => g.n01 += 1,
                    (_, 0) => g.n10 += 1,
                    _ => g.n11 += 1,
                }
            }
        }

        let filtered = transmit(model, x_class(alice), a, uniform(&mut rng))?;
        let (u_pass, u_x) = (uniform(&mut rng), uniform(&mut rng));
        if let ChannelOutput::Arrived(rho) = filtered {
            let post = fil.sandwich(rho.qubit());
            let pass = post.trace().re;
            if u_pass < pass {
                g.n_filtered += 1;
                let p0 = post.m[0][0].re / pass;
                let bob = if u_x < p0 { 0 } else { 1 };
                if bob != alice {
                    g.filtered_phase_errors += 1;
                }
            }
        }
    }
    Ok(g)
}

/// Merges oracle tallies computed over disjoint pair ranges.
pub fn merge_gedanken(parts: &[GedankenTally]) -> GedankenTally {
    let mut out = GedankenTally::default();
    for p in parts {
        out.merge(p);
    }
    out
}

/// Empirical average of the prepared states, to compare with the source
/// density.
pub fn empirical_density(prepared: &[(PulseClass, crate::qmath::QubitState)]) -> DensityOperator {
    let w = 1.0 / prepared.len().max(1) as f64;
    let parts: Vec<(f64, DensityOperator)> = prepared.iter().map(|(_, k)| (w, k.density())).collect();
    DensityOperator::mixture(&parts)
}
