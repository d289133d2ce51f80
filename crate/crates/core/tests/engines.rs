use mcfusion::analysis::{calibrate_threshold, Analyzer, DEFAULT_EPSILON};
use mcfusion::channel::hitting_probabilities;
use mcfusion::montecarlo::{simulate, sweep, SweepAxis};
use mcfusion::{ChannelMode, ChannelParams, DetectorKind, DiffusionGeometry, SensingModel, SensingSpec, SimConfig};

#[test]
fn calibrated_thresholds_hold_in_simulation() {
    let model = SensingModel::soft(4, -2.5, 3.5).unwrap();
    let params = ChannelParams::steady(15.0, 4.0, 2, 2).unwrap();
    let cfg = SimConfig::new(200_000, 11, ChannelMode::Steady).unwrap();
    for kind in DetectorKind::ALL {
        let t = calibrate_threshold(kind, &model, &params, 0.05).unwrap();
        let r = simulate(kind, &[t], &model, &params, &cfg).unwrap()[0];
        assert!(r.pfa_hat <= 0.05 + r.ci_pfa, "{kind}: {}", r.pfa_hat);
    }
}

#[test]
fn long_periods_wash_out_channel_memory() {
    let model = SensingModel::soft(4, -2.5, 3.5).unwrap();
    let h = vec![0.25, 0.1, 0.05];
    let slots = 60;
    let params = ChannelParams::from_cir(h, 1.5, 4.0, slots, 2).unwrap();
    let cfg = |mode| SimConfig::new(200_000, 12, mode).unwrap();
    for kind in [DetectorKind::OptDtm, DetectorKind::Mrc, DetectorKind::OptStm] {
        let c = Analyzer::new(kind, &model, &params, DEFAULT_EPSILON).unwrap().calibrate(0.05).unwrap();
        let steady = simulate(kind, &[c.threshold], &model, &params, &cfg(ChannelMode::Steady)).unwrap()[0];
        let transient = simulate(kind, &[c.threshold], &model, &params, &cfg(ChannelMode::Transient)).unwrap()[0];
        assert!((steady.pm_hat - c.point.pm).abs() <= steady.ci_pm, "{kind}");
        // two short slots out of sixty lose a little signal
        assert!(transient.pm_hat >= steady.pm_hat - transient.ci_pm, "{kind}");
        assert!((transient.pm_hat - steady.pm_hat).abs() < 0.02, "{kind}: {} vs {}", transient.pm_hat, steady.pm_hat);
    }
}

#[test]
fn geometry_channel_runs_end_to_end() {
    let geom = DiffusionGeometry {
        r1: 10e-6,
        r2: 5e-6,
        diffusion: 1e-10,
        slot: 100e-6,
        k_max: DiffusionGeometry::auto_k_max(10e-6, 5e-6, 1e-10, 100e-6),
    };
    let h = hitting_probabilities(&geom).unwrap();
    assert!(h.iter().sum::<f64>() <= 0.5 + 1e-12);
    let params = ChannelParams::from_geometry(&geom, 100.0, 4.0, 4, 2).unwrap();
    let model = SensingModel::soft(2, -2.5, 3.5).unwrap();
    let c = Analyzer::new(DetectorKind::OptDtm, &model, &params, DEFAULT_EPSILON)
        .unwrap()
        .calibrate(0.1)
        .unwrap();
    let r = simulate(DetectorKind::OptDtm, &[c.threshold], &model, &params, &SimConfig::new(100_000, 3, ChannelMode::Steady).unwrap())
        .unwrap()[0];
    assert!((r.pfa_hat - c.point.pfa).abs() <= r.ci_pfa);
    assert!((r.pm_hat - c.point.pm).abs() <= r.ci_pm);
}

#[test]
fn gain_sweep_lowers_misses_for_every_detector() {
    let sensing = SensingSpec::Soft {
        levels: 4,
        b0: -2.5,
        b1: 3.5,
    };
    let params = ChannelParams::steady(4.0, 4.0, 2, 2).unwrap();
    let cfg = SimConfig::new(10_000, 4, ChannelMode::Steady).unwrap();
    let values = [4.0, 8.0, 12.0, 16.0, 20.0, 24.0];
    for kind in [DetectorKind::OptDtm, DetectorKind::MaxLog, DetectorKind::Mrc, DetectorKind::OptStm] {
        let rows = sweep(SweepAxis::A, &values, &sensing, &params, &[kind], 0.05, &cfg, None).unwrap();
        let pm: Vec<f64> = rows.iter().map(|r| r.calibrated.point.pm).collect();
        assert!(pm.windows(2).all(|w| w[1] < w[0]), "{kind}: {pm:?}");
    }
}

#[test]
fn estimates_tighten_with_trials() {
    let model = SensingModel::soft(2, -2.5, 3.5).unwrap();
    let params = ChannelParams::steady(15.0, 4.0, 1, 2).unwrap();
    for kind in DetectorKind::ALL {
        let c = Analyzer::new(kind, &model, &params, DEFAULT_EPSILON).unwrap().calibrate(0.1).unwrap();
        let mut widths = Vec::new();
        for trials in [10_000, 100_000, 1_000_000] {
            let r = simulate(kind, &[c.threshold], &model, &params, &SimConfig::new(trials, 21, ChannelMode::Steady).unwrap())
                .unwrap()[0];
            assert!((r.pfa_hat - c.point.pfa).abs() <= r.ci_pfa, "{kind} at {trials}");
            widths.push(r.ci_pfa);
        }
        for w in widths.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 10f64.sqrt()).abs() < 0.2, "{kind}: {ratio}");
        }
    }
}
