//! Signal and decoy states, the B92 measurement family and its filter.
//!
//! With `β = cos θ/2`, `α = sin θ/2`, bit `j` is encoded as
//! `|φ_j⟩ = β|0x⟩ + (-1)^j α|1x⟩`; `|φ̄_j⟩ = α|0x⟩ - (-1)^j β|1x⟩` is the
//! state orthogonal to it. The decoys are the X eigenstates, `|1x⟩` (class
//! D, prepared with weight α²) and `|0x⟩` (class D', weight β²), so the
//! decoy mixture has the same density matrix as the signal mixture.

use core::f64::consts::FRAC_PI_2;

use crate::qmath::{DensityOperator, LinearOperator, QubitState, STRUCTURAL_TOL};
use crate::{Error, Result};

/// Half-angle parametrization of the two signal states; `0 < θ < π/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Angle {
    theta: f64,
}

impl Angle {
    pub fn new(theta: f64) -> Result<Self> {
        if theta.is_finite() && theta > 0.0 && theta < FRAC_PI_2 {
            Ok(Self { theta })
        } else {
            Err(Error::domain("theta", theta, "(0, π/2)"))
        }
    }

    pub fn from_degrees(degrees: f64) -> Result<Self> {
        Self::new(degrees.to_radians())
            .map_err(|_| Error::domain("theta_deg", degrees, "(0°, 90°)"))
    }

    /// Radians.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn degrees(&self) -> f64 {
        self.theta.to_degrees()
    }

    pub fn alpha(&self) -> f64 {
        libm::sin(0.5 * self.theta)
    }

    pub fn beta(&self) -> f64 {
        libm::cos(0.5 * self.theta)
    }

    pub fn alpha_sq(&self) -> f64 {
        let a = self.alpha();
        a * a
    }

    pub fn beta_sq(&self) -> f64 {
        let b = self.beta();
        b * b
    }

    /// `⟨φ₀|φ₁⟩ = cos θ`.
    pub fn overlap(&self) -> f64 {
        libm::cos(self.theta)
    }
}

/// What Alice prepares in one pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PulseClass {
    Signal0,
    Signal1,
    /// `|1x⟩`
    DecoyD,
    /// `|0x⟩`
    DecoyDPrime,
}

impl PulseClass {
    pub const ALL: [PulseClass; 4] = [
        PulseClass::Signal0,
        PulseClass::Signal1,
        PulseClass::DecoyD,
        PulseClass::DecoyDPrime,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_signal(self) -> bool {
        matches!(self, PulseClass::Signal0 | PulseClass::Signal1)
    }

    /// Encoded key bit, for signals.
    pub fn bit(self) -> Option<u8> {
        match self {
            PulseClass::Signal0 => Some(0),
            PulseClass::Signal1 => Some(1),
            _ => None,
        }
    }

    pub fn ket(self, a: Angle) -> QubitState {
        match self {
            PulseClass::Signal0 => signal_ket(a, 0),
            PulseClass::Signal1 => signal_ket(a, 1),
            PulseClass::DecoyD => QubitState::one_x(),
            PulseClass::DecoyDPrime => QubitState::zero_x(),
        }
    }
}

/// `{F₀ᵞ, F₁ᵞ, F_incᵞ}` on the qubit block; the vacuum element is implicit.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Povm {
    pub f0: LinearOperator,
    pub f1: LinearOperator,
    pub f_inc: LinearOperator,
    pub gamma: f64,
}

impl Povm {
    /// `F₀ + F₁`
    pub fn conclusive(&self) -> LinearOperator {
        self.f0 + self.f1
    }

    /// Distance of `F₀ + F₁ + F_inc` from the identity.
    pub fn completeness_deviation(&self) -> f64 {
        (self.f0 + self.f1 + self.f_inc).distance(&LinearOperator::identity())
    }

    pub fn is_valid(&self) -> bool {
        self.completeness_deviation() <= STRUCTURAL_TOL
            && self.f0.is_psd(STRUCTURAL_TOL)
            && self.f1.is_psd(STRUCTURAL_TOL)
            && self.f_inc.is_psd(STRUCTURAL_TOL)
    }
}

fn sign(j: u8) -> f64 {
    if j == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `|φ_j⟩ = β|0x⟩ + (-1)^j α|1x⟩`. Any nonzero `j` is bit 1.
pub fn signal_ket(a: Angle, j: u8) -> QubitState {
    QubitState::from_real(a.beta(), sign(j) * a.alpha())
}

/// `|φ̄_j⟩ = α|0x⟩ - (-1)^j β|1x⟩`, orthogonal to `|φ_j⟩`.
pub fn conjugate_ket(a: Angle, j: u8) -> QubitState {
    QubitState::from_real(a.alpha(), -sign(j) * a.beta())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma.is_finite() && gamma > 0.0 && gamma <= 1.0 {
        Ok(())
    } else {
        Err(Error::domain("gamma", gamma, "(0, 1]"))
    }
}

/// The unambiguous-discrimination family `𝓜ᵞ`: `F₀ᵞ = γ²/(2β²)|φ̄₁⟩⟨φ̄₁|`
/// (decodes bit 0), `F₁ᵞ = γ²/(2β²)|φ̄₀⟩⟨φ̄₀|` (decodes bit 1). `γ = 1` is
/// the optimal measurement, `γ = β` the practical one.
pub fn b92_povm(a: Angle, gamma: f64) -> Result<Povm> {
    check_gamma(gamma)?;
    let w = gamma * gamma / (2.0 * a.beta_sq());
    let f0 = conjugate_ket(a, 1).projector().scale(w);
    let f1 = conjugate_ket(a, 0).projector().scale(w);
    let f_inc = LinearOperator::identity() - f0 - f1;
    Ok(Povm {
        f0,
        f1,
        f_inc,
        gamma,
    })
}

/// `A_filᵞ = diag(γα/β, γ)`, the square root of `F₀ᵞ + F₁ᵞ`.
pub fn filter_operator(a: Angle, gamma: f64) -> Result<LinearOperator> {
    check_gamma(gamma)?;
    Ok(LinearOperator::diag(gamma * a.alpha() / a.beta(), gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Ensemble {
    /// `(|φ₀⟩⟨φ₀| + |φ₁⟩⟨φ₁|)/2`
    Signals,
    /// `α²|1x⟩⟨1x| + β²|0x⟩⟨0x|`
    Decoys,
}

/// Average state emitted for the given ensemble.
pub fn source_density(a: Angle, ensemble: Ensemble) -> DensityOperator {
    match ensemble {
        Ensemble::Signals => DensityOperator::mixture(&[
            (0.5, signal_ket(a, 0).density()),
            (0.5, signal_ket(a, 1).density()),
        ]),
        Ensemble::Decoys => DensityOperator::mixture(&[
            (a.alpha_sq(), QubitState::one_x().density()),
            (a.beta_sq(), QubitState::zero_x().density()),
        ]),
    }
}

/// Preparation probabilities per pulse class (indexed like
/// [`PulseClass::ALL`]) when decoys are interleaved with signals:
/// `(1/3, 1/3, α²/3, β²/3)`.
pub fn decoy_class_weights(a: Angle) -> [f64; 4] {
    let third = 1.0 / 3.0;
    [third, third, a.alpha_sq() * third, a.beta_sq() * third]
}
