//! What reaches the receiver: channel noise, loss, and eavesdropping.
//!
//! The receiver's detector efficiency is folded into the loss rate. All
//! Kraus models act on the qubit block and push erased weight into vacuum.
//!
//! Lossy depolarizing channel (trace-preserving form):
//!
//! ```text
//! ρ ↦ L |v⟩⟨v| + (1 - L) [ (1 - p) ρ + (p/3) Σᵢ σᵢ ρ σᵢ ]
//! ```
//!
//! Restricted family used by the phase-error bound: a Pauli channel with
//! weights `(1 - qx - qy - qz, qx, qy, qz)` followed by an X-selective loss
//! that erases the `|0x⟩` component with probability `lam0` and the `|1x⟩`
//! component with probability `lam1`.

use num_complex::Complex64;

use crate::protocol_states::{b92_povm, Angle, PulseClass};
use crate::qmath::{
    apply_kraus, apply_kraus_unchecked, born_unchecked, sample_outcome, DensityOperator,
    LinearOperator, PovmOutcome,
};
use crate::{Error, Result};

/// Pauli X in the X basis: `diag(1, -1)`.
pub fn sigma_x() -> LinearOperator {
    LinearOperator::diag(1.0, -1.0)
}

/// Pauli Y in the X basis.
pub fn sigma_y() -> LinearOperator {
    let z = Complex64::new(0.0, 0.0);
    LinearOperator::new([[z, Complex64::i()], [-Complex64::i(), z]])
}

/// Pauli Z in the X basis; swaps `|0x⟩` and `|1x⟩`.
pub fn sigma_z() -> LinearOperator {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    LinearOperator::new([[z, o], [o, z]])
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)
)]
pub enum AttackModel {
    Identity,
    DepolarizingLossy {
        loss: f64,
        depol: f64,
    },
    /// Eve runs `𝓜ᵞ` on every pulse over a lossless line, forwards the
    /// prepared ket on a conclusive result and blocks the pulse otherwise.
    UsdAttack {
        gamma: f64,
    },
    RestrictedPauliLoss {
        qx: f64,
        qy: f64,
        qz: f64,
        lam0: f64,
        lam1: f64,
    },
}

fn unit(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::domain(name, v, "[0, 1]"))
    }
}

impl AttackModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            AttackModel::Identity => Ok(()),
            AttackModel::DepolarizingLossy { loss, depol } => {
                unit("loss", loss)?;
                unit("depol", depol)
            }
            AttackModel::UsdAttack { gamma } => {
                if gamma.is_finite() && gamma > 0.0 && gamma <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::domain("gamma", gamma, "(0, 1]"))
                }
            }
            AttackModel::RestrictedPauliLoss {
                qx,
                qy,
                qz,
                lam0,
                lam1,
            } => {
                unit("qx", qx)?;
                unit("qy", qy)?;
                unit("qz", qz)?;
                let total = qx + qy + qz;
                if total > 1.0 + 1e-12 {
                    return Err(Error::domain("qx + qy + qz", total, "[0, 1]"));
                }
                unit("lam0", lam0)?;
                unit("lam1", lam1)
            }
        }
    }

    /// Exact state leaving the channel for a prepared pulse, vacuum weight
    /// included.
    pub fn output_density(&self, class: PulseClass, a: Angle) -> Result<DensityOperator> {
        self.validate()?;
        let rho = class.ket(a).density();
        Ok(match *self {
            AttackModel::Identity => rho,
            AttackModel::DepolarizingLossy { loss, depol } => {
                depolarizing_unchecked(loss, depol, &rho)
            }
            AttackModel::UsdAttack { gamma } => {
                let conc = usd_conclusive_prob(a, class, gamma)?;
                DensityOperator::from_parts_unchecked(rho.qubit().scale(conc), 1.0 - conc)
            }
            AttackModel::RestrictedPauliLoss {
                qx,
                qy,
                qz,
                lam0,
                lam1,
            } => restricted_unchecked([qx, qy, qz], lam0, lam1, &rho),
        })
    }
}

/// Either nothing arrives, or a normalized single-photon state does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelOutput {
    Vacuum,
    Arrived(DensityOperator),
}

/// Sends one prepared pulse through `model`; `r` is uniform in `[0, 1)`.
pub fn transmit(
    model: &AttackModel,
    class: PulseClass,
    a: Angle,
    r: f64,
) -> Result<ChannelOutput> {
    model.validate()?;
    let ket = class.ket(a);
    match *model {
        AttackModel::UsdAttack { gamma } => {
            let eve = b92_povm(a, gamma)?;
            let outcome = sample_outcome(&eve, &ket.density(), r);
            Ok(match outcome {
                PovmOutcome::Conclusive0 | PovmOutcome::Conclusive1 => {
                    ChannelOutput::Arrived(ket.density())
                }
                PovmOutcome::Inconclusive | PovmOutcome::Vacuum => ChannelOutput::Vacuum,
            })
        }
        _ => {
            let out = model.output_density(class, a)?;
            if r < out.vacuum_weight() {
                return Ok(ChannelOutput::Vacuum);
            }
            Ok(out
                .conditional_qubit()
                .map_or(ChannelOutput::Vacuum, ChannelOutput::Arrived))
        }
    }
}

/// Born probability that Eve's `𝓜ᵞ` gives a conclusive result on the
/// prepared pulse.
///
/// For `γ = 1` the signals give `1 - cos θ` and `|1x⟩` gives `1`. The `|0x⟩`
/// decoy gives `α²/β² = (1 - cos θ)/(1 + cos θ)`, which is strictly positive:
/// `F_conc = diag(γ²α²/β², γ²)` has no zero on `|0x⟩`.
pub fn usd_conclusive_prob(a: Angle, class: PulseClass, gamma: f64) -> Result<f64> {
    let povm = b92_povm(a, gamma)?;
    Ok(born_unchecked(&povm.conclusive(), &class.ket(a).density()))
}

fn depolarizing_kraus(loss: f64, depol: f64) -> ([LinearOperator; 4], [LinearOperator; 1]) {
    let keep = libm::sqrt(1.0 - loss);
    let ident = libm::sqrt(1.0 - depol) * keep;
    let pauli = libm::sqrt(depol / 3.0) * keep;
    (
        [
            LinearOperator::identity().scale(ident),
            sigma_x().scale(pauli),
            sigma_y().scale(pauli),
            sigma_z().scale(pauli),
        ],
        [LinearOperator::identity().scale(libm::sqrt(loss))],
    )
}

fn depolarizing_unchecked(loss: f64, depol: f64, rho: &DensityOperator) -> DensityOperator {
    let (ops, erase) = depolarizing_kraus(loss, depol);
    apply_kraus_unchecked(&ops, &erase, rho)
}

/// The lossy depolarizing channel applied to `rho`.
pub fn depolarize_output(loss: f64, depol: f64, rho: &DensityOperator) -> Result<DensityOperator> {
    unit("loss", loss)?;
    unit("depol", depol)?;
    let (ops, erase) = depolarizing_kraus(loss, depol);
    apply_kraus(&ops, &erase, rho)
}

/// Pauli channel with weights `(1 - Σq, qx, qy, qz)`.
pub fn pauli_channel(q: [f64; 3], rho: &DensityOperator) -> Result<DensityOperator> {
    AttackModel::RestrictedPauliLoss {
        qx: q[0],
        qy: q[1],
        qz: q[2],
        lam0: 0.0,
        lam1: 0.0,
    }
    .validate()?;
    Ok(pauli_unchecked(q, rho))
}

fn pauli_unchecked(q: [f64; 3], rho: &DensityOperator) -> DensityOperator {
    let q0 = (1.0 - q[0] - q[1] - q[2]).max(0.0);
    let ops = [
        LinearOperator::identity().scale(libm::sqrt(q0)),
        sigma_x().scale(libm::sqrt(q[0])),
        sigma_y().scale(libm::sqrt(q[1])),
        sigma_z().scale(libm::sqrt(q[2])),
    ];
    apply_kraus_unchecked(&ops, &[], rho)
}

/// Kraus set of the X-selective loss:
/// `K₀ = diag(√(1-lam0), √(1-lam1))`, `E₀ = diag(√lam0, 0)`, `E₁ = diag(0, √lam1)`.
pub fn selective_loss_kraus(lam0: f64, lam1: f64) -> (LinearOperator, [LinearOperator; 2]) {
    (
        LinearOperator::diag(libm::sqrt(1.0 - lam0), libm::sqrt(1.0 - lam1)),
        [
            LinearOperator::diag(libm::sqrt(lam0), 0.0),
            LinearOperator::diag(0.0, libm::sqrt(lam1)),
        ],
    )
}

/// Pauli channel with weights `(1 - Σq, qx, qy, qz)`, then the X-selective
/// loss.
pub fn apply_restricted(q: [f64; 3], lam0: f64, lam1: f64, rho: &DensityOperator) -> Result<DensityOperator> {
    AttackModel::RestrictedPauliLoss {
        qx: q[0],
        qy: q[1],
        qz: q[2],
        lam0,
        lam1,
    }
    .validate()?;
    let after_pauli = pauli_channel(q, rho)?;
    let (keep, erase) = selective_loss_kraus(lam0, lam1);
    apply_kraus(&[keep], &erase, &after_pauli)
}

pub(crate) fn restricted_unchecked(
    q: [f64; 3],
    lam0: f64,
    lam1: f64,
    rho: &DensityOperator,
) -> DensityOperator {
    let after_pauli = pauli_unchecked(q, rho);
    let (keep, erase) = selective_loss_kraus(lam0, lam1);
    apply_kraus_unchecked(&[keep], &erase, &after_pauli)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol_states::signal_ket;
    use crate::qmath::QubitState;

    fn deg(d: f64) -> Angle {
        Angle::from_degrees(d).unwrap()
    }

    #[test]
    fn paulis_are_unitary_and_hermitian() {
        for s in [sigma_x(), sigma_y(), sigma_z()] {
            assert!((s * s).distance(&LinearOperator::identity()) < 1e-15);
            assert!(s.is_hermitian(1e-15));
        }
        // σ_y = i σ_x σ_z
        let prod = (sigma_x() * sigma_z()).m;
        let y = sigma_y().m;
        for i in 0..2 {
            for j in 0..2 {
                assert!((prod[i][j] * Complex64::i() - y[i][j]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn identity_forwards_prepared_state() {
        let a = deg(60.0);
        let out = transmit(&AttackModel::Identity, PulseClass::Signal0, a, 0.42).unwrap();
        match out {
            ChannelOutput::Arrived(rho) => {
                assert!(rho.distance(&signal_ket(a, 0).density()) < 1e-15)
            }
            ChannelOutput::Vacuum => panic!("identity channel lost a pulse"),
        }
    }

    #[test]
    fn total_loss_is_always_vacuum() {
        let m = AttackModel::DepolarizingLossy {
            loss: 1.0,
            depol: 0.3,
        };
        for class in PulseClass::ALL {
            for r in [0.0, 0.5, 0.999] {
                assert_eq!(transmit(&m, class, deg(30.0), r).unwrap(), ChannelOutput::Vacuum);
            }
        }
    }

    #[test]
    fn usd_conclusive_probabilities() {
        let a = deg(60.0);
        for class in [PulseClass::Signal0, PulseClass::Signal1] {
            let p = usd_conclusive_prob(a, class, 1.0).unwrap();
            assert!((p - 0.5).abs() < 1e-12);
        }
        assert!((usd_conclusive_prob(a, PulseClass::DecoyD, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let dp = usd_conclusive_prob(a, PulseClass::DecoyDPrime, 1.0).unwrap();
        assert!((dp - 1.0 / 3.0).abs() < 1e-12);
        assert!((dp - a.alpha_sq() / a.beta_sq()).abs() < 1e-12);
    }

    #[test]
    fn usd_on_one_x_always_arrives() {
        let m = AttackModel::UsdAttack { gamma: 1.0 };
        for k in 0..1000 {
            let r = k as f64 / 1000.0;
            assert!(matches!(
                transmit(&m, PulseClass::DecoyD, deg(60.0), r).unwrap(),
                ChannelOutput::Arrived(_)
            ));
        }
    }

    #[test]
    fn depolarizing_examples() {
        let rho = signal_ket(deg(35.0), 1).density();
        let same = depolarize_output(0.0, 0.0, &rho).unwrap();
        assert!(same.distance(&rho) < 1e-15);

        let mixed = depolarize_output(0.0, 0.75, &QubitState::z_basis(0).density()).unwrap();
        assert!(mixed.qubit().distance(&LinearOperator::diag(0.5, 0.5)) < 1e-12);

        let half = depolarize_output(0.5, 0.2, &rho).unwrap();
        assert!((half.vacuum_weight() - 0.5).abs() < 1e-15);
        assert!((half.qubit_trace() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn depolarizing_matches_hand_expansion() {
        // X-basis entries: diagonal pulled toward 1/2 by 2p/3 flips,
        // off-diagonal scaled by (1 - 4p/3)
        let a = deg(60.0);
        let (loss, p) = (0.2, 0.09);
        let out = depolarize_output(loss, p, &signal_ket(a, 0).density()).unwrap();
        let (b2, a2) = (a.beta_sq(), a.alpha_sq());
        let flip = 2.0 * p / 3.0;
        let d0 = (1.0 - loss) * (b2 * (1.0 - flip) + a2 * flip);
        let d1 = (1.0 - loss) * (a2 * (1.0 - flip) + b2 * flip);
        let off = (1.0 - loss) * a.alpha() * a.beta() * (1.0 - 4.0 * p / 3.0);
        assert!((out.entry(0, 0).re - d0).abs() < 1e-12);
        assert!((out.entry(1, 1).re - d1).abs() < 1e-12);
        assert!((out.entry(0, 1).re - off).abs() < 1e-12);
        assert!(out.entry(0, 1).im.abs() < 1e-12);
    }

    #[test]
    fn restricted_family_contains_depolarizing() {
        let a = deg(47.0);
        let (loss, p) = (0.37, 0.12);
        let dep = AttackModel::DepolarizingLossy { loss, depol: p };
        let res = AttackModel::RestrictedPauliLoss {
            qx: p / 3.0,
            qy: p / 3.0,
            qz: p / 3.0,
            lam0: loss,
            lam1: loss,
        };
        for class in PulseClass::ALL {
            let x = dep.output_density(class, a).unwrap();
            let y = res.output_density(class, a).unwrap();
            assert!(x.distance(&y) < 1e-10);
        }
    }

    #[test]
    fn selective_loss_kraus_is_complete() {
        let (k, e) = selective_loss_kraus(0.3, 0.8);
        let rho = QubitState::z_basis(0).density();
        let out = apply_kraus(&[k], &e, &rho).unwrap();
        // |0x⟩ weight 1/2 loses 30 %, |1x⟩ weight 1/2 loses 80 %
        assert!((out.vacuum_weight() - 0.55).abs() < 1e-12);
    }

    #[test]
    fn depolarizing_arrival_is_class_independent() {
        let m = AttackModel::DepolarizingLossy {
            loss: 0.3,
            depol: 0.05,
        };
        for class in PulseClass::ALL {
            let out = m.output_density(class, deg(70.0)).unwrap();
            assert!((out.qubit_trace() - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_models_rejected() {
        let bad = [
            AttackModel::DepolarizingLossy {
                loss: 1.2,
                depol: 0.0,
            },
            AttackModel::UsdAttack { gamma: 0.0 },
            AttackModel::RestrictedPauliLoss {
                qx: 0.5,
                qy: 0.4,
                qz: 0.2,
                lam0: 0.0,
                lam1: 0.0,
            },
        ];
        for m in bad {
            assert!(m.validate().is_err(), "{m:?}");
            assert!(transmit(&m, PulseClass::Signal0, deg(30.0), 0.5).is_err());
        }
    }
}
