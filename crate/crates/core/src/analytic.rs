//! Closed-form rates over the lossy depolarizing channel, tolerable noise
//! thresholds, and working distances.
//!
//! Rates are per emitted signal pulse measured with `𝓜^β`:
//!
//! * error rate `(1 - L) p / 3`
//! * conclusive (filtered) rate `(1 - L) [4p + 3 + (4p - 3) cos 2θ] / 12`
//!
//! so the relative bit-error rate does not depend on `L`. With a direct
//! X-basis estimate the filtered phase-error rate is
//! `(2p/3)(β⁴ + α⁴) / filtered(0, p, θ)`, where `β⁴ + α⁴ = 1 - sin²θ / 2`.

use crate::protocol_states::Angle;
use crate::qmath::entropy_unchecked;
use crate::{Error, Result};

fn check_rates(loss: f64, depol: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&loss) {
        return Err(Error::domain("loss", loss, "[0, 1]"));
    }
    if !(0.0..=1.0).contains(&depol) {
        return Err(Error::domain("depol", depol, "[0, 1]"));
    }
    Ok(())
}

/// Probability per signal pulse of a conclusive result that decodes the
/// wrong bit.
pub fn bit_error_rate(loss: f64, depol: f64) -> Result<f64> {
    check_rates(loss, depol)?;
    Ok((1.0 - loss) * depol / 3.0)
}

/// Probability per signal pulse of a conclusive result.
pub fn filtered_rate(loss: f64, depol: f64, a: Angle) -> Result<f64> {
    check_rates(loss, depol)?;
    Ok(filtered_raw(loss, depol, a.theta()))
}

fn filtered_raw(loss: f64, depol: f64, theta: f64) -> f64 {
    let c2 = libm::cos(2.0 * theta);
    (1.0 - loss) * (4.0 * depol + 3.0 + (4.0 * depol - 3.0) * c2) / 12.0
}

fn phase_raw(depol: f64, theta: f64) -> f64 {
    let s = libm::sin(theta);
    (2.0 * depol / 3.0) * (1.0 - 0.5 * s * s) / filtered_raw(0.0, depol, theta)
}

fn margin_raw(depol: f64, theta: f64) -> f64 {
    let eb = (depol / 3.0) / filtered_raw(0.0, depol, theta);
    let ep = phase_raw(depol, theta);
    // entropy saturates at 1 beyond one half
    1.0 - entropy_unchecked(eb.min(0.5)) - entropy_unchecked(ep.min(0.5))
}

/// Bit errors per conclusive result.
pub fn relative_bit_error_rate(depol: f64, a: Angle) -> Result<f64> {
    let conc = filtered_rate(0.0, depol, a)?;
    Ok(bit_error_rate(0.0, depol)? / conc)
}

/// Phase errors per filtered pair when the X-basis statistics are measured
/// directly.
pub fn phase_error_rate_direct(depol: f64, a: Angle) -> Result<f64> {
    check_rates(0.0, depol)?;
    Ok(phase_raw(depol, a.theta()))
}

/// `1 - h(e_bit) - h(e_ph)` for the direct estimator; positive means a
/// secret key can be distilled.
pub fn key_rate_margin(depol: f64, a: Angle) -> Result<f64> {
    check_rates(0.0, depol)?;
    Ok(margin_raw(depol, a.theta()))
}

/// Bisection for a root of `f` on `[lo, hi]`; `f(lo)` and `f(hi)` must have
/// opposite signs. Stops when the bracket is narrower than `tol`.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NoSignChange { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if f_mid == 0.0 {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub const THRESHOLD_BRACKET: (f64, f64) = (1e-5, 0.25);
pub const THRESHOLD_TOL: f64 = 1e-5;

/// Largest depolarizing rate with a positive key rate under direct
/// phase-error estimation.
pub fn depolarizing_threshold(a: Angle) -> Result<f64> {
    threshold_raw(a.theta())
}

/// [`depolarizing_threshold`] on `(0°, 90°]`. The closed forms are
/// continuous at 90° (orthogonal signals), which the open [`Angle`] domain
/// excludes.
pub fn depolarizing_threshold_degrees(theta_deg: f64) -> Result<f64> {
    if !(theta_deg > 0.0 && theta_deg <= 90.0) {
        return Err(Error::domain("theta_deg", theta_deg, "(0°, 90°]"));
    }
    threshold_raw(theta_deg.to_radians())
}

fn threshold_raw(theta: f64) -> Result<f64> {
    let (lo, hi) = THRESHOLD_BRACKET;
    bisect(|p| Ok(margin_raw(p, theta)), lo, hi, THRESHOLD_TOL)
}

/// Detector and fiber constants.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct HardwareParams {
    /// Dark count probability per gate.
    pub p_dark: f64,
    /// Mean detector efficiency.
    pub eta_det: f64,
    /// Fiber attenuation, dB/km.
    pub xi: f64,
}

impl HardwareParams {
    /// Telecom single-photon setup: 1.7e-6 dark counts, 4.5 % detectors,
    /// 0.21 dB/km fiber.
    pub const fn reference() -> Self {
        Self {
            p_dark: 1.7e-6,
            eta_det: 0.045,
            xi: 0.21,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_dark) {
            return Err(Error::domain("p_dark", self.p_dark, "[0, 1]"));
        }
        if !(self.eta_det > 0.0 && self.eta_det <= 1.0) {
            return Err(Error::domain("eta_det", self.eta_det, "(0, 1]"));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::domain("xi", self.xi, "(0, ∞)"));
        }
        Ok(())
    }

    /// Single-photon detection probability after `length_km` of fiber.
    pub fn detection_probability(&self, length_km: f64) -> f64 {
        self.eta_det * libm::pow(10.0, -self.xi * length_km / 10.0)
    }
}

impl Default for HardwareParams {
    fn default() -> Self {
        Self::reference()
    }
}

/// Distance at which dark counts alone reach the tolerable depolarizing
/// rate: solves `p_dark / p_s(l) = p_star`. Returns 0 when even `l = 0`
/// is too noisy.
pub fn working_distance(p_star: f64, hw: &HardwareParams) -> Result<f64> {
    hw.validate()?;
    if !(p_star > 0.0 && p_star.is_finite()) {
        return Err(Error::domain("p_star", p_star, "(0, ∞)"));
    }
    if hw.p_dark == 0.0 {
        return Ok(f64::INFINITY);
    }
    let l = 10.0 / hw.xi * libm::log10(hw.eta_det * p_star / hw.p_dark);
    Ok(l.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deg(d: f64) -> Angle {
        Angle::from_degrees(d).unwrap()
    }

    #[test]
    fn bit_error_examples() {
        assert!((bit_error_rate(0.0, 0.03).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(bit_error_rate(1.0, 0.2).unwrap(), 0.0);
        assert!(bit_error_rate(-0.1, 0.0).is_err());
    }

    #[test]
    fn filtered_examples() {
        let a = deg(60.0);
        let two_a2b2 = 2.0 * a.alpha_sq() * a.beta_sq();
        assert!((filtered_rate(0.0, 0.0, a).unwrap() - two_a2b2).abs() < 1e-15);
        let s = libm::sin(a.theta());
        assert!((filtered_rate(0.4, 0.0, a).unwrap() - 0.6 * s * s / 2.0).abs() < 1e-15);

        let wide = Angle::new(core::f64::consts::FRAC_PI_2 - 1e-12).unwrap();
        for p in [0.0, 0.1, 0.6] {
            assert!((filtered_rate(0.25, p, wide).unwrap() - 0.75 / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn phase_error_examples() {
        let wide = Angle::new(core::f64::consts::FRAC_PI_2 - 1e-12).unwrap();
        let p = 0.07;
        let ep = phase_error_rate_direct(p, wide).unwrap();
        assert!((ep - 2.0 * p / 3.0).abs() < 1e-9);
        assert!((relative_bit_error_rate(p, wide).unwrap() - ep).abs() < 1e-9);
        assert_eq!(phase_error_rate_direct(0.0, deg(40.0)).unwrap(), 0.0);
    }

    #[test]
    fn sixty_degree_margin_near_zero() {
        let m = key_rate_margin(0.115, deg(60.0)).unwrap();
        assert!(m.abs() < 0.01, "{m}");
    }

    #[test]
    fn threshold_spot_checks() {
        for (d, p) in [(90.0, 0.165), (30.0, 0.034), (10.0, 0.004)] {
            let got = depolarizing_threshold_degrees(d).unwrap();
            assert!((got - p).abs() <= 1e-3, "{d}: {got}");
        }
    }

    #[test]
    fn threshold_increases_with_angle() {
        let mut prev = 0.0;
        for k in 0..=80 {
            let d = 10.0 + k as f64 * (79.999 / 80.0);
            let p = depolarizing_threshold(deg(d)).unwrap();
            assert!(p > prev, "{d}");
            prev = p;
        }
    }

    #[test]
    fn threshold_degrees_domain() {
        assert!(depolarizing_threshold_degrees(0.0).is_err());
        assert!(depolarizing_threshold_degrees(90.5).is_err());
        let open = depolarizing_threshold(deg(45.0)).unwrap();
        assert_eq!(depolarizing_threshold_degrees(45.0).unwrap(), open);
    }

    #[test]
    fn bisect_reports_missing_bracket() {
        let r = bisect(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-6);
        assert!(matches!(r, Err(Error::NoSignChange { .. })));
    }

    #[test]
    fn distances() {
        let hw = HardwareParams::reference();
        for (p, km) in [(0.033, 140.0), (0.165, 173.0), (0.080, 158.0)] {
            let d = working_distance(p, &hw).unwrap();
            assert!((d - km).abs() <= 1.0, "{p}: {d}");
        }
        assert_eq!(working_distance(1e-9, &hw).unwrap(), 0.0);
        assert!(working_distance(0.0, &hw).is_err());
    }

    #[test]
    fn distance_inverts_detection_probability() {
        let hw = HardwareParams::reference();
        let d = working_distance(0.05, &hw).unwrap();
        assert!((hw.p_dark / hw.detection_probability(d) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn distance_monotonicity() {
        let hw = HardwareParams::reference();
        let noisy = HardwareParams {
            p_dark: 1e-5,
            ..hw
        };
        let mut prev = -1.0;
        for k in 1..50 {
            let p = k as f64 * 0.005;
            let d = working_distance(p, &hw).unwrap();
            assert!(d > prev);
            assert!(working_distance(p, &noisy).unwrap() < d);
            prev = d;
        }
    }
}
