//! Exact complex linear algebra on a single qubit plus a vacuum channel.
//!
//! All matrices are written in the X basis `{|0x⟩, |1x⟩}`. The vacuum (which
//! also absorbs multi-photon events) is not a third Hilbert dimension: a
//! [`DensityOperator`] carries it as a classical weight next to the 2x2 qubit
//! block, and every measurement element except the vacuum one acts on the
//! qubit block only.

use core::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::protocol_states::Povm;
use crate::{Error, Result};

/// Complex amplitude or matrix entry.
pub type ComplexScalar = Complex64;

/// Tolerance for identities that hold exactly in real arithmetic.
pub const STRUCTURAL_TOL: f64 = 1e-10;

const ZERO: ComplexScalar = Complex64 { re: 0.0, im: 0.0 };
const ONE: ComplexScalar = Complex64 { re: 1.0, im: 0.0 };

fn real(x: f64) -> ComplexScalar {
    Complex64::new(x, 0.0)
}

/// A qubit ket `amp0 |0x⟩ + amp1 |1x⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QubitState {
    pub amp0: ComplexScalar,
    pub amp1: ComplexScalar,
}

impl QubitState {
    pub const fn new(amp0: ComplexScalar, amp1: ComplexScalar) -> Self {
        Self { amp0, amp1 }
    }

    pub fn from_real(amp0: f64, amp1: f64) -> Self {
        Self::new(real(amp0), real(amp1))
    }

    /// `|0x⟩`
    pub fn zero_x() -> Self {
        Self::new(ONE, ZERO)
    }

    /// `|1x⟩`
    pub fn one_x() -> Self {
        Self::new(ZERO, ONE)
    }

    /// Z-basis eigenstate `|j_z⟩ = (|0x⟩ + (-1)^j |1x⟩)/√2`.
    pub fn z_basis(j: u8) -> Self {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        if j == 0 {
            Self::from_real(s, s)
        } else {
            Self::from_real(s, -s)
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amp0.norm_sqr() + self.amp1.norm_sqr()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= STRUCTURAL_TOL
    }

    /// `|ψ⟩⟨ψ|`
    pub fn projector(&self) -> LinearOperator {
        let a = [self.amp0, self.amp1];
        let mut m = [[ZERO; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = a[i] * a[j].conj();
            }
        }
        LinearOperator { m }
    }

    pub fn density(&self) -> DensityOperator {
        DensityOperator {
            qubit: self.projector(),
            vacuum_weight: 0.0,
        }
    }

    pub fn apply(&self, op: &LinearOperator) -> QubitState {
        let m = &op.m;
        QubitState::new(
            m[0][0] * self.amp0 + m[0][1] * self.amp1,
            m[1][0] * self.amp0 + m[1][1] * self.amp1,
        )
    }
}

/// `⟨a|b⟩`, conjugate-linear in `a`.
pub fn inner_product(a: &QubitState, b: &QubitState) -> ComplexScalar {
    a.amp0.conj() * b.amp0 + a.amp1.conj() * b.amp1
}

/// A 2x2 complex matrix in the X basis.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LinearOperator {
    pub m: [[ComplexScalar; 2]; 2],
}

impl LinearOperator {
    pub const fn new(m: [[ComplexScalar; 2]; 2]) -> Self {
        Self { m }
    }

    pub fn zero() -> Self {
        Self::new([[ZERO; 2]; 2])
    }

    pub fn identity() -> Self {
        Self::diag(1.0, 1.0)
    }

    /// Real diagonal operator `diag(d0, d1)`.
    pub fn diag(d0: f64, d1: f64) -> Self {
        Self::new([[real(d0), ZERO], [ZERO, real(d1)]])
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.m;
        Self::new([[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]])
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = *self;
        for row in out.m.iter_mut() {
            for e in row.iter_mut() {
                *e *= s;
            }
        }
        out
    }

    pub fn trace(&self) -> ComplexScalar {
        self.m[0][0] + self.m[1][1]
    }

    /// `K ρ K†`
    pub fn sandwich(&self, rho: &LinearOperator) -> LinearOperator {
        *self * *rho * self.adjoint()
    }

    /// Largest absolute entry-wise difference.
    pub fn distance(&self, other: &LinearOperator) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.m[i][j] - other.m[i][j]).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.distance(&self.adjoint()) <= tol
    }

    pub fn commutes_with(&self, other: &LinearOperator, tol: f64) -> bool {
        (*self * *other).distance(&(*other * *self)) <= tol
    }

    /// Eigenvalues `(λ_min, λ_max)` of the Hermitian part.
    pub fn hermitian_eigenvalues(&self) -> (f64, f64) {
        let a = self.m[0][0].re;
        let d = self.m[1][1].re;
        let b = (self.m[0][1] + self.m[1][0].conj()) * 0.5;
        let mean = 0.5 * (a + d);
        let half_gap = libm::sqrt(0.25 * (a - d) * (a - d) + b.norm_sqr());
        (mean - half_gap, mean + half_gap)
    }

    /// Hermitian with no eigenvalue below `-tol`.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.is_hermitian(tol) && self.hermitian_eigenvalues().0 >= -tol
    }
}

impl Add for LinearOperator {
    type Output = LinearOperator;
    fn add(self, rhs: Self) -> Self {
        let mut out = self;
        for i in 0..2 {
            for j in 0..2 {
                out.m[i][j] += rhs.m[i][j];
            }
        }
        out
    }
}

impl Sub for LinearOperator {
    type Output = LinearOperator;
    fn sub(self, rhs: Self) -> Self {
        self + rhs.scale(-1.0)
    }
}

impl Mul for LinearOperator {
    type Output = LinearOperator;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (&self.m, &rhs.m);
        let mut m = [[ZERO; 2]; 2];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self::new(m)
    }
}

/// Qubit block plus vacuum weight. The qubit block's trace and the vacuum
/// weight sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DensityOperator {
    qubit: LinearOperator,
    vacuum_weight: f64,
}

impl DensityOperator {
    /// Validates Hermiticity, positivity and the trace condition.
    pub fn new(qubit: LinearOperator, vacuum_weight: f64) -> Result<Self> {
        if !(0.0..=1.0 + STRUCTURAL_TOL).contains(&vacuum_weight) {
            return Err(Error::domain("vacuum_weight", vacuum_weight, "[0, 1]"));
        }
        if !qubit.is_hermitian(STRUCTURAL_TOL) {
            return Err(Error::InvalidDensity("qubit block is not Hermitian"));
        }
        let (lo, _) = qubit.hermitian_eigenvalues();
        if lo < -STRUCTURAL_TOL {
            return Err(Error::NotPositive { min_eigenvalue: lo });
        }
        if (qubit.trace().re + vacuum_weight - 1.0).abs() > STRUCTURAL_TOL {
            return Err(Error::InvalidDensity("trace plus vacuum weight differs from 1"));
        }
        Ok(Self {
            qubit,
            vacuum_weight,
        })
    }

    pub(crate) fn from_parts_unchecked(qubit: LinearOperator, vacuum_weight: f64) -> Self {
        Self {
            qubit,
            vacuum_weight,
        }
    }

    /// Pure vacuum `|v⟩⟨v|`.
    pub fn vacuum() -> Self {
        Self {
            qubit: LinearOperator::zero(),
            vacuum_weight: 1.0,
        }
    }

    pub fn qubit(&self) -> &LinearOperator {
        &self.qubit
    }

    pub fn vacuum_weight(&self) -> f64 {
        self.vacuum_weight
    }

    /// Probability that a photon is present.
    pub fn qubit_trace(&self) -> f64 {
        self.qubit.trace().re
    }

    /// Entry `⟨i_x|ρ|j_x⟩` of the qubit block.
    pub fn entry(&self, i: usize, j: usize) -> ComplexScalar {
        self.qubit.m[i][j]
    }

    /// Qubit block conditioned on arrival, or `None` for pure vacuum.
    pub fn conditional_qubit(&self) -> Option<DensityOperator> {
        let t = self.qubit_trace();
        (t > 0.0).then(|| DensityOperator {
            qubit: self.qubit.scale(1.0 / t),
            vacuum_weight: 0.0,
        })
    }

    /// Convex combination `Σ wᵢ ρᵢ`; weights are assumed to sum to one.
    pub fn mixture(parts: &[(f64, DensityOperator)]) -> DensityOperator {
        let mut qubit = LinearOperator::zero();
        let mut vac = 0.0;
        for (w, rho) in parts {
            qubit = qubit + rho.qubit.scale(*w);
            vac += w * rho.vacuum_weight;
        }
        DensityOperator {
            qubit,
            vacuum_weight: vac,
        }
    }

    /// Largest entry difference, vacuum weight included.
    pub fn distance(&self, other: &DensityOperator) -> f64 {
        self.qubit
            .distance(&other.qubit)
            .max((self.vacuum_weight - other.vacuum_weight).abs())
    }
}

/// Outcome of a B92-type measurement. The declaration order is the
/// cumulative order used by [`sample_outcome`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PovmOutcome {
    Conclusive0,
    Conclusive1,
    Inconclusive,
    Vacuum,
}

impl PovmOutcome {
    pub const ALL: [PovmOutcome; 4] = [
        PovmOutcome::Conclusive0,
        PovmOutcome::Conclusive1,
        PovmOutcome::Inconclusive,
        PovmOutcome::Vacuum,
    ];

    pub fn is_conclusive(self) -> bool {
        matches!(self, PovmOutcome::Conclusive0 | PovmOutcome::Conclusive1)
    }
}

/// `tr(f ρ_qubit)`; rejects an `f` with an eigenvalue below `-1e-10`.
pub fn born_probability(f: &LinearOperator, rho: &DensityOperator) -> Result<f64> {
    if !f.is_hermitian(STRUCTURAL_TOL) {
        return Err(Error::NotPositive {
            min_eigenvalue: f64::NAN,
        });
    }
    let (lo, _) = f.hermitian_eigenvalues();
    if lo < -STRUCTURAL_TOL {
        return Err(Error::NotPositive { min_eigenvalue: lo });
    }
    Ok(born_unchecked(f, rho))
}

pub(crate) fn born_unchecked(f: &LinearOperator, rho: &DensityOperator) -> f64 {
    (*f * rho.qubit).trace().re.max(0.0)
}

/// Exact outcome distribution of `povm` on `rho`, indexed like
/// [`PovmOutcome::ALL`].
pub fn outcome_distribution(povm: &Povm, rho: &DensityOperator) -> [f64; 4] {
    [
        born_unchecked(&povm.f0, rho),
        born_unchecked(&povm.f1, rho),
        born_unchecked(&povm.f_inc, rho),
        rho.vacuum_weight,
    ]
}

/// Inverse-CDF draw from the Born distribution with `r` uniform in `[0, 1)`.
pub fn sample_outcome(povm: &Povm, rho: &DensityOperator, r: f64) -> PovmOutcome {
    let probs = outcome_distribution(povm, rho);
    let mut acc = 0.0;
    for (outcome, p) in PovmOutcome::ALL.iter().zip(probs) {
        acc += p;
        if r < acc {
            return *outcome;
        }
    }
    // rounding slack: fall back to the last outcome that carries weight
    if rho.vacuum_weight > 0.0 {
        PovmOutcome::Vacuum
    } else {
        PovmOutcome::Inconclusive
    }
}

/// Applies `ρ ↦ Σ Kᵢ ρ Kᵢ†` on the qubit block, sending the weight of the
/// erasure branches `Eⱼ` to vacuum. The set must be trace preserving.
pub fn apply_kraus(
    ops: &[LinearOperator],
    erasure_ops: &[LinearOperator],
    rho: &DensityOperator,
) -> Result<DensityOperator> {
    let completeness = ops
        .iter()
        .chain(erasure_ops)
        .fold(LinearOperator::zero(), |acc, k| acc + k.adjoint() * *k);
    let deviation = completeness.distance(&LinearOperator::identity());
    if deviation > STRUCTURAL_TOL {
        return Err(Error::NotTracePreserving { deviation });
    }
    Ok(apply_kraus_unchecked(ops, erasure_ops, rho))
}

pub(crate) fn apply_kraus_unchecked(
    ops: &[LinearOperator],
    erasure_ops: &[LinearOperator],
    rho: &DensityOperator,
) -> DensityOperator {
    let qubit = ops
        .iter()
        .fold(LinearOperator::zero(), |acc, k| acc + k.sandwich(&rho.qubit));
    let erased: f64 = erasure_ops
        .iter()
        .map(|e| e.sandwich(&rho.qubit).trace().re)
        .sum();
    DensityOperator {
        qubit,
        vacuum_weight: rho.vacuum_weight + erased,
    }
}

/// Shannon binary entropy in bits, with `h(0) = h(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain("x", x, "[0, 1]"));
    }
    Ok(entropy_unchecked(x))
}

pub(crate) fn entropy_unchecked(x: f64) -> f64 {
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    -x * libm::log2(x) - (1.0 - x) * libm::log2(1.0 - x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol_states::{b92_povm, signal_ket, Angle};

    fn deg(d: f64) -> Angle {
        Angle::from_degrees(d).unwrap()
    }

    #[test]
    fn basis_inner_products() {
        let z = QubitState::zero_x();
        let o = QubitState::one_x();
        assert!((inner_product(&z, &z) - ONE).norm() < 1e-12);
        assert!(inner_product(&z, &o).norm() < 1e-12);
    }

    #[test]
    fn signal_overlap_is_cos_theta() {
        let a = deg(60.0);
        let ip = inner_product(&signal_ket(a, 0), &signal_ket(a, 1));
        assert!((ip.re - 0.5).abs() < 1e-12);
        assert!(ip.im.abs() < 1e-12);
    }

    #[test]
    fn inner_product_is_conjugate_linear_in_first_argument() {
        let a = QubitState::new(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8));
        let b = QubitState::z_basis(0);
        let scaled = QubitState::new(a.amp0 * Complex64::i(), a.amp1 * Complex64::i());
        let lhs = inner_product(&scaled, &b);
        let rhs = inner_product(&a, &b) * Complex64::new(0.0, -1.0);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn born_examples() {
        let pure = QubitState::z_basis(1).density();
        assert!((born_probability(&LinearOperator::identity(), &pure).unwrap() - 1.0).abs() < 1e-12);

        let phi0 = signal_ket(deg(60.0), 0).density();
        let p = born_probability(&QubitState::zero_x().projector(), &phi0).unwrap();
        assert!((p - 0.75).abs() < 1e-12);

        let vac = DensityOperator::vacuum();
        assert_eq!(born_probability(&LinearOperator::identity(), &vac).unwrap(), 0.0);
    }

    #[test]
    fn born_rejects_negative_operator() {
        let f = LinearOperator::diag(1.0, -0.5);
        assert!(matches!(
            born_probability(&f, &QubitState::zero_x().density()),
            Err(Error::NotPositive { .. })
        ));
        // within tolerance is accepted
        let g = LinearOperator::diag(1.0, -1e-12);
        assert!(born_probability(&g, &QubitState::zero_x().density()).is_ok());
    }

    #[test]
    fn vacuum_always_samples_vacuum() {
        let povm = b92_povm(deg(60.0), 0.9).unwrap();
        for r in [0.0, 0.3, 0.999_999] {
            assert_eq!(sample_outcome(&povm, &DensityOperator::vacuum(), r), PovmOutcome::Vacuum);
        }
    }

    #[test]
    fn beta_povm_never_misidentifies_phi0() {
        let a = deg(60.0);
        let povm = b92_povm(a, a.beta()).unwrap();
        let probs = outcome_distribution(&povm, &signal_ket(a, 0).density());
        assert!(probs[1].abs() < 1e-15);
        // sweep r over a fine grid: Conclusive1 never drawn
        for k in 0..10_000 {
            let r = k as f64 / 10_000.0;
            assert_ne!(
                sample_outcome(&povm, &signal_ket(a, 0).density(), r),
                PovmOutcome::Conclusive1
            );
        }
    }

    #[test]
    fn sampling_follows_cumulative_order() {
        let a = deg(60.0);
        let povm = b92_povm(a, 1.0).unwrap();
        let rho = signal_ket(a, 0).density();
        let probs = outcome_distribution(&povm, &rho);
        // p(F0) = 1 - cos θ = 0.5, p(F1) = 0, remainder inconclusive
        assert!((probs[0] - 0.5).abs() < 1e-12);
        assert_eq!(sample_outcome(&povm, &rho, 0.49), PovmOutcome::Conclusive0);
        assert_eq!(sample_outcome(&povm, &rho, 0.51), PovmOutcome::Inconclusive);
    }

    #[test]
    fn kraus_identity_and_full_erasure() {
        let rho = signal_ket(deg(40.0), 1).density();
        let same = apply_kraus(&[LinearOperator::identity()], &[], &rho).unwrap();
        assert!(same.distance(&rho) < 1e-15);
        let gone = apply_kraus(&[], &[LinearOperator::identity()], &rho).unwrap();
        assert!(gone.distance(&DensityOperator::vacuum()) < 1e-15);
    }

    #[test]
    fn kraus_rejects_non_trace_preserving() {
        let rho = QubitState::zero_x().density();
        let half = LinearOperator::identity().scale(0.5);
        assert!(matches!(
            apply_kraus(&[half], &[], &rho),
            Err(Error::NotTracePreserving { .. })
        ));
    }

    #[test]
    fn entropy_examples() {
        assert!((binary_entropy(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.110028).unwrap() - 0.5).abs() < 1e-5);
        assert!(binary_entropy(-0.01).is_err());
        assert!(binary_entropy(1.5).is_err());
        assert!(binary_entropy(f64::NAN).is_err());
    }

    #[test]
    fn entropy_half_point_by_bisection() {
        // independent check of the 0.110028 example
        let (mut lo, mut hi) = (1e-9, 0.5);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if entropy_unchecked(mid) < 0.5 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo - 0.110028).abs() < 1e-6);
    }

    #[test]
    fn density_validation() {
        assert!(DensityOperator::new(LinearOperator::diag(0.5, 0.5), 0.0).is_ok());
        assert!(DensityOperator::new(LinearOperator::diag(0.5, 0.6), 0.0).is_err());
        assert!(DensityOperator::new(LinearOperator::diag(1.2, -0.2), 0.0).is_err());
        assert!(DensityOperator::new(LinearOperator::diag(0.25, 0.25), 0.5).is_ok());
    }
}
