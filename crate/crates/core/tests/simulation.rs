use b92_core::analytic::{bit_error_rate, filtered_rate};
use b92_core::channel::AttackModel;
use b92_core::estimation::{phase_errors_from_gedanken, GedankenCounts};
use b92_core::montecarlo::{
    alice_prepare, empirical_density, merge_gedanken, run_gedanken_oracle, run_trial, usd_detection_test,
    ProtocolParams, SamplingMode, Trial, Variant, Verdict,
};
use b92_core::protocol_states::{source_density, Angle, Ensemble, PulseClass};

fn deg(d: f64) -> Angle {
    Angle::from_degrees(d).unwrap()
}

fn within_sigma(observed: u64, n: u64, p: f64, k: f64) -> bool {
    let n = n as f64;
    let sd = (n * p * (1.0 - p)).sqrt().max(1.0);
    (observed as f64 - n * p).abs() <= k * sd
}

#[test]
fn rates_follow_closed_forms() {
    for (i, &(theta, loss, p)) in [(20.0, 0.0, 0.0), (45.0, 0.35, 0.08), (72.0, 0.8, 0.2)].iter().enumerate() {
        let a = deg(theta);
        let m = AttackModel::DepolarizingLossy { loss, depol: p };
        let params = ProtocolParams::new(Variant::B92, a, 300_000, 100 + i as u64).unwrap();
        let t = run_trial(&params, &m).unwrap();
        let n = t.povm_measured.signals();
        let conc = filtered_rate(loss, p, a).unwrap();
        assert!(within_sigma(t.conclusive.signals(), n, conc, 3.0), "{theta}: conclusive");
        // Check half is a uniform half of the conclusive events
        let err = bit_error_rate(loss, p).unwrap() / conc;
        assert!(within_sigma(t.n_err, t.n_check, err, 3.0), "{theta}: errors");
        assert!(within_sigma(t.vacuum_povm.signals(), n, loss, 3.0), "{theta}: vacuum");
    }
}

#[test]
fn usd_signature() {
    let a = deg(60.0);
    let params = ProtocolParams::new(Variant::B92bar, a, 100_000, 6).unwrap();
    let t = run_trial(&params, &AttackModel::UsdAttack { gamma: 1.0 }).unwrap();
    let arrival = |k: PulseClass| {
        let n = t.monitored(k);
        (n, n - t.n_kv(k))
    };
    let (n, arrived) = arrival(PulseClass::Signal0);
    assert!(within_sigma(arrived, n, 0.5, 3.0));
    let (n, arrived) = arrival(PulseClass::DecoyD);
    assert_eq!(arrived, n);
    let (n, arrived) = arrival(PulseClass::DecoyDPrime);
    assert!(within_sigma(arrived, n, 1.0 / 3.0, 3.0));
    let report = usd_detection_test(&t, None, 5.0).unwrap();
    assert_eq!(report.verdict, Verdict::AttackDetected);
}

#[test]
fn clean_line_is_not_flagged() {
    let a = deg(60.0);
    let m = AttackModel::DepolarizingLossy { loss: 0.4, depol: 0.02 };
    let t = run_trial(&ProtocolParams::new(Variant::B92dbar, a, 100_000, 8).unwrap(), &m).unwrap();
    let r = usd_detection_test(&t, Some(0.4), 5.0).unwrap();
    assert_eq!(r.verdict, Verdict::Consistent);
    let check = r.decoy_loss.unwrap();
    assert!(check.z.abs() < 5.0);
}

#[test]
fn phase_error_identity_holds_under_oracle() {
    let a = deg(55.0);
    let models = [
        AttackModel::DepolarizingLossy { loss: 0.3, depol: 0.1 },
        AttackModel::UsdAttack { gamma: 1.0 },
        AttackModel::RestrictedPauliLoss { qx: 0.05, qy: 0.1, qz: 0.2, lam0: 0.6, lam1: 0.1 },
    ];
    for (i, m) in models.iter().enumerate() {
        let parts = [
            run_gedanken_oracle(a, m, 0..100_000, i as u64).unwrap(),
            run_gedanken_oracle(a, m, 100_000..200_000, i as u64).unwrap(),
        ];
        let g = merge_gedanken(&parts);
        let predicted = phase_errors_from_gedanken(&GedankenCounts::from(&g), a);
        let truth = g.filtered_phase_errors as f64;
        // both sides are sums of independent Bernoulli draws
        let sd = (predicted + truth).sqrt().max(1.0);
        assert!((predicted - truth).abs() <= 3.0 * sd, "{m:?}: {predicted} vs {truth}");
    }
}

#[test]
fn prepared_ensemble_matches_source() {
    let a = deg(40.0);
    let params = ProtocolParams::new(Variant::B92bar, a, 60_000, 2).unwrap().with_sampling(SamplingMode::ExactCounts);
    let prepared = alice_prepare(&params).unwrap();
    let signals: Vec<_> = prepared.iter().copied().filter(|(c, _)| c.is_signal()).collect();
    let decoys: Vec<_> = prepared.iter().copied().filter(|(c, _)| !c.is_signal()).collect();
    let expected = source_density(a, Ensemble::Signals);
    assert!(empirical_density(&signals).distance(&expected) < 1e-12);
    // decoy counts are rounded to whole pulses
    assert!(empirical_density(&decoys).distance(&expected) < 1e-4);
}

#[test]
fn chunking_and_order_do_not_change_tallies() {
    let a = deg(60.0);
    let m = AttackModel::DepolarizingLossy { loss: 0.25, depol: 0.05 };
    for mode in [SamplingMode::IidPerPulse, SamplingMode::ExactCounts] {
        let params = ProtocolParams::new(Variant::B92dbar, a, 50_000, 99).unwrap().with_sampling(mode);
        let trial = Trial::new(params, m).unwrap();
        let reference = run_trial(&params, &m).unwrap();
        for chunk in [1_000u64, 7_777, 50_000] {
            let mut parts: Vec<_> = (0..50_000u64)
                .step_by(chunk as usize)
                .map(|s| trial.simulate_range(s..(s + chunk).min(50_000)))
                .collect();
            parts.reverse();
            let mut merged = parts.pop().unwrap();
            for p in parts {
                merged.merge(p);
            }
            assert_eq!(trial.finish(merged), reference);
        }
    }
}

#[test]
fn different_seeds_differ() {
    let a = deg(60.0);
    let m = AttackModel::DepolarizingLossy { loss: 0.25, depol: 0.05 };
    let t1 = run_trial(&ProtocolParams::new(Variant::B92, a, 20_000, 1).unwrap(), &m).unwrap();
    let t2 = run_trial(&ProtocolParams::new(Variant::B92, a, 20_000, 2).unwrap(), &m).unwrap();
    assert_ne!(t1, t2);
}
