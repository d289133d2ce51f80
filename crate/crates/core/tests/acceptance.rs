//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;

use mcfusion::analysis::{
    count_support, mrc_perf_closed_form, stm_perf_closed_form, Analyzer, LlrSumEngine, PerfPoint, DEFAULT_EPSILON,
};
use mcfusion::asymptotics::ChernoffProblem;
use mcfusion::cli::experiments::{agrees, balanced, llr_events};
use mcfusion::detectors::{llr_opt_dtm_sensor, llr_stm, LocalLlr, LocalStatistic, StmLlr};
use mcfusion::montecarlo::simulate;
use mcfusion::sensing::{hard_from_soft, sum_pmf, HardSensingModel};
use mcfusion::{ChannelMode, ChannelParams, DetectorKind, Hypothesis, SensingModel, SimConfig, Threshold};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIALS: u64 = 1_000_000;
const MIN_THRESHOLDS: usize = 8;
const TARGET_PFA: f64 = 0.05;
const ORACLE_TOL: f64 = 1e-9;
const RANDOM_MODELS: usize = 50;
const ORACLE_INSTANCES: usize = 20;
const MAX_ORACLE_SUPPORT: usize = 60;
const CLUSTER_RESOLUTION: f64 = 1e-9;
const SCAN_FACTOR: f64 = 10.0;
const THREADS: [usize; 3] = [1, 4, 16];

fn binary_setup() -> (SensingModel, ChannelParams) {
    (
        SensingModel::soft(2, -2.5, 3.5).unwrap(),
        ChannelParams::steady(15.0, 4.0, 1, 2).unwrap(),
    )
}

fn is_trivial(kind: DetectorKind, t: Threshold, sensors: usize) -> bool {
    t == Threshold::never(kind, sensors) || t == Threshold::always(kind)
}

/// Achievable thresholds, padded with a uniform grid when a coarse
/// statistic has fewer than `MIN_THRESHOLDS` nontrivial ones.
fn roc_thresholds(analyzer: &Analyzer, sensors: usize) -> Vec<Threshold> {
    let kind = analyzer.kind();
    let mut ts = analyzer.thresholds(Some(16));
    let finite: Vec<f64> = ts
        .iter()
        .filter_map(|t| match t {
            Threshold::Llr(v) if v.is_finite() => Some(*v),
            _ => None,
        })
        .collect();
    if finite.len() >= MIN_THRESHOLDS || finite.is_empty() {
        return ts;
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min) - 1.0;
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1.0;
    for k in 0..MIN_THRESHOLDS {
        ts.push(Threshold::Llr(lo + (hi - lo) * (k as f64 + 0.5) / MIN_THRESHOLDS as f64));
    }
    ts.retain(|t| !is_trivial(kind, *t, sensors));
    ts.sort_by(|a, b| match (a, b) {
        (Threshold::Llr(x), Threshold::Llr(y)) => x.total_cmp(y),
        _ => std::cmp::Ordering::Equal,
    });
    ts.dedup();
    ts.insert(0, Threshold::always(kind));
    ts.push(Threshold::never(kind, sensors));
    ts
}

fn criterion_1() -> (bool, String) {
    let (model, params) = binary_setup();
    let cfg = SimConfig::new(TRIALS, 1, ChannelMode::Steady).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for kind in DetectorKind::ALL {
        let analyzer = Analyzer::new(kind, &model, &params, DEFAULT_EPSILON).unwrap();
        let ts = roc_thresholds(&analyzer, params.sensors());
        let points = analyzer.roc(&ts).unwrap();
        let sims = simulate(kind, &ts, &model, &params, &cfg).unwrap();
        let nontrivial = ts.iter().filter(|t| !is_trivial(kind, **t, params.sensors())).count();
        let passed = points.iter().zip(&sims).filter(|(p, r)| agrees(p, r)).count();
        for (p, r) in points.iter().zip(&sims) {
            if !agrees(p, r) {
                println!(
                    "    {kind} {:?}: analytic ({:.6}, {:.6}) vs mc ({:.6}, {:.6}) ci ({:.6}, {:.6})",
                    p.threshold, p.pfa, p.pm, r.pfa_hat, r.pm_hat, r.ci_pfa, r.ci_pm
                );
            }
        }
        ok &= nontrivial >= MIN_THRESHOLDS && passed == ts.len();
        detail.push(format!("{kind} {passed}/{}", ts.len()));
    }
    (ok, detail.join(", "))
}

/// Calibrated operating point and the `Pm` change of one step along the
/// achievable ROC frontier towards larger `Pfa`.
fn calibrated_with_step(kind: DetectorKind, model: &SensingModel, params: &ChannelParams) -> (PerfPoint, f64) {
    let analyzer = Analyzer::new(kind, model, params, DEFAULT_EPSILON).unwrap();
    let c = analyzer.calibrate(TARGET_PFA).unwrap();
    let mut roc = analyzer.roc(&analyzer.thresholds(None)).unwrap();
    roc.sort_by(|a, b| a.pfa.total_cmp(&b.pfa).then(a.pm.total_cmp(&b.pm)));
    // points not dominated by one with lower or equal Pfa
    let mut best_pm = f64::INFINITY;
    let next = roc
        .iter()
        .filter(|p| {
            let keep = p.pm < best_pm;
            best_pm = best_pm.min(p.pm);
            keep
        })
        .find(|p| p.pfa > TARGET_PFA)
        .map_or(c.point.pm, |p| p.pm);
    (c.point, (c.point.pm - next).abs())
}

/// `a <= b` within one grid step; the note flags comparisons that need the
/// tolerance.
fn within_step(a: f64, b: f64, step: f64) -> (bool, &'static str) {
    (a <= b + step, if a <= b { "" } else { " within step" })
}

fn criterion_2() -> (bool, String) {
    let (model, params) = binary_setup();
    let get = |k| calibrated_with_step(k, &model, &params);
    let (opt, s_opt) = get(DetectorKind::OptDtm);
    let (ml, s_ml) = get(DetectorKind::MaxLog);
    let (mrc, s_mrc) = get(DetectorKind::Mrc);
    let (cv, s_cv) = get(DetectorKind::Cv);
    let checks = [
        ("opt_dtm<=max_log", within_step(opt.pm, ml.pm, s_opt.max(s_ml))),
        ("max_log<=mrc", within_step(ml.pm, mrc.pm, s_ml.max(s_mrc))),
        ("opt_dtm<=cv", within_step(opt.pm, cv.pm, s_opt.max(s_cv))),
    ];
    let ok = checks.iter().all(|(_, (p, _))| *p);
    let notes: Vec<String> = checks.iter().map(|(n, (p, note))| format!("{n} {}{note}", if *p { "ok" } else { "violated" })).collect();
    (
        ok,
        format!(
            "Pm (Pfa) opt_dtm {:.5} ({:.5}), max_log {:.5} ({:.5}), mrc {:.5} ({:.5}), cv {:.5} ({:.5}); steps {:.2e} {:.2e} {:.2e} {:.2e}; {}",
            opt.pm, opt.pfa, ml.pm, ml.pfa, mrc.pm, mrc.pfa, cv.pm, cv.pfa, s_opt, s_ml, s_mrc, s_cv, notes.join(", ")
        ),
    )
}

fn criterion_3() -> (bool, String) {
    let model = SensingModel::soft(4, -2.5, 3.5).unwrap();
    let mut diffs = Vec::new();
    let mut detail = Vec::new();
    for j in [1.0, 20.0] {
        let params = ChannelParams::steady(15.0, j, 2, 2).unwrap();
        let pm = |k| {
            Analyzer::new(k, &model, &params, DEFAULT_EPSILON)
                .unwrap()
                .calibrate(TARGET_PFA)
                .unwrap()
                .point
                .pm
        };
        let (dtm, stm) = (pm(DetectorKind::OptDtm), pm(DetectorKind::OptStm));
        diffs.push(dtm - stm);
        detail.push(format!("J={j}: Pm dtm {dtm:.5} stm {stm:.5}"));
    }
    (diffs[0] < 0.0 && diffs[1] > 0.0, format!("A=15, {}", detail.join("; ")))
}

fn criterion_4() -> (bool, String) {
    let soft = SensingModel::soft(4, -2.5, 3.5).unwrap();
    let hard = hard_from_soft(&soft).to_model();
    let params = ChannelParams::steady(15.0, 4.0, 2, 2).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for kind in DetectorKind::ALL {
        let (s, s_step) = calibrated_with_step(kind, &soft, &params);
        let (h, h_step) = calibrated_with_step(kind, &hard, &params);
        let (pass, note) = within_step(s.pm, h.pm, s_step.max(h_step));
        ok &= pass;
        detail.push(format!("{kind} {:.5} vs {:.5} (step {:.3}){note}", s.pm, h.pm, s_step.max(h_step)));
    }
    (ok, detail.join(", "))
}

/// Random masses whose likelihood ratio increases with the level.
fn random_ratio_model(rng: &mut ChaCha8Rng, levels: usize) -> SensingModel {
    let g0: Vec<f64> = (0..levels).map(|_| rng.random_range(0.05..1.0)).collect();
    let mut ratio = 1.0;
    let mut g1 = Vec::with_capacity(levels);
    for &w in &g0 {
        g1.push(w * ratio);
        ratio *= rng.random_range(1.05..4.0);
    }
    let (s0, s1): (f64, f64) = (g0.iter().sum(), g1.iter().sum());
    SensingModel::from_masses(g0.iter().map(|v| v / s0).collect(), g1.iter().map(|v| v / s1).collect()).unwrap()
}

fn criterion_5() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut mono, mut sandwich, mut ratio) = (0, 0, 0);
    let mut scanned = 0usize;
    for _ in 0..RANDOM_MODELS {
        let levels = rng.random_range(2..=6);
        let model = random_ratio_model(&mut rng, levels);
        ratio += model.satisfies_ratio_condition() as usize;
        let gain = rng.random_range(1.0..20.0);
        let noise = rng.random_range(0.5..8.0);
        let slots = rng.random_range(1..=10);
        let sensors = rng.random_range(1..=3);
        let params = ChannelParams::steady(gain, noise, slots, sensors).unwrap();
        let opt = LocalLlr::new(LocalStatistic::Optimal, &model, &params).unwrap();
        let maxlog = LocalLlr::new(LocalStatistic::MaxLog, &model, &params).unwrap();
        let stm = StmLlr::new(&sum_pmf(&model, sensors).unwrap(), &params);
        let n = slots as f64;
        let top = (SCAN_FACTOR * n * (gain + noise)).ceil() as u64;
        let tol = |s: u64, m: f64| 1e-14 * (m * n * (gain + noise) + s as f64 * (gain + noise).ln().abs() + 1.0);
        let (mut ok_mono, mut ok_sand) = (true, true);
        let (mut prev_opt, mut prev_stm) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for s in 0..=top {
            let (o, m, t) = (opt.value(s), maxlog.value(s), stm.value(s));
            ok_mono &= o >= prev_opt - tol(s, 1.0) && t >= prev_stm - tol(s, sensors as f64);
            ok_sand &= (o - m).abs() <= (levels as f64).ln() + 1e-12 * (1.0 + o.abs());
            prev_opt = o;
            prev_stm = t;
            scanned += 1;
        }
        mono += ok_mono as usize;
        sandwich += ok_sand as usize;
    }
    (
        mono == RANDOM_MODELS && sandwich == RANDOM_MODELS && ratio == RANDOM_MODELS,
        format!(
            "{ratio}/{RANDOM_MODELS} models satisfy the ratio condition, monotone {mono}, sandwich {sandwich}, {scanned} counts scanned"
        ),
    )
}

/// Poisson pmf on `0..=w` by forward recurrence.
fn poisson_pmf(lambda: f64, w: usize) -> Vec<f64> {
    let mut p = vec![0.0; w + 1];
    p[0] = (-lambda).exp();
    for k in 1..=w {
        p[k] = p[k - 1] * lambda / k as f64;
    }
    p
}

/// Per-sensor count pmfs under both hypotheses, computed directly.
fn direct_count_pmfs(model: &SensingModel, params: &ChannelParams, w: usize) -> [Vec<f64>; 2] {
    Hypothesis::BOTH.map(|h| {
        let mut f = vec![0.0; w + 1];
        for l in 0..model.levels() {
            let lambda = params.slots() as f64 * (model.value(l) * params.gain() + params.noise());
            for (k, p) in poisson_pmf(lambda, w).into_iter().enumerate() {
                f[k] += model.masses(h)[l] * p;
            }
        }
        f
    })
}

/// `(Pfa, Pd)` of `sum llr > gamma` by enumerating every count vector.
fn brute_force(f: &[Vec<f64>; 2], llr: &[f64], sensors: usize, gamma: f64) -> (f64, f64) {
    let w = llr.len();
    let mut idx = vec![0usize; sensors];
    let (mut pfa, mut pd) = (0.0, 0.0);
    loop {
        let total: f64 = idx.iter().map(|&i| llr[i]).sum();
        if total > gamma {
            pfa += idx.iter().map(|&i| f[0][i]).product::<f64>();
            pd += idx.iter().map(|&i| f[1][i]).product::<f64>();
        }
        let mut d = 0;
        loop {
            if d == sensors {
                return (pfa, pd);
            }
            idx[d] += 1;
            if idx[d] < w {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn criterion_6() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let eps = DEFAULT_EPSILON;
    let (mut worst_brute, mut worst_mrc, mut worst_stm) = (0.0f64, 0.0f64, 0.0f64);
    let mut ok = true;
    let mut done = 0;
    let mut stm_points = 0;
    while done < ORACLE_INSTANCES {
        let levels = rng.random_range(2..=4);
        let model = random_ratio_model(&mut rng, levels);
        let sensors = rng.random_range(1..=3);
        let params = ChannelParams::steady(
            rng.random_range(1.0..12.0),
            rng.random_range(0.5..4.0),
            rng.random_range(1..=2),
            sensors,
        )
        .unwrap();
        let w = count_support(&model, &params, eps).unwrap();
        if w > MAX_ORACLE_SUPPORT {
            continue;
        }
        done += 1;
        let bound = ORACLE_TOL + sensors as f64 * eps;

        // enumeration against brute force
        let f = direct_count_pmfs(&model, &params, w);
        let llr: Vec<f64> = (0..=w).map(|k| f[1][k].ln() - f[0][k].ln()).collect();
        let opt = LocalLlr::new(LocalStatistic::Optimal, &model, &params).unwrap();
        let engine = LlrSumEngine::new(&opt, &model, &params, eps).unwrap();
        let ts = engine.thresholds(Some(24));
        for &g in ts.iter().filter(|g| g.is_finite()) {
            let (a0, a1) = engine.probabilities(g);
            let (b0, b1) = brute_force(&f, &llr, sensors, g);
            let err = (a0 - b0).abs().max((a1 - b1).abs());
            worst_brute = worst_brute.max(err);
            ok &= err <= bound;
        }

        // MRC enumeration against the closed form
        let mrc = LocalLlr::new(LocalStatistic::Mrc, &model, &params).unwrap();
        let engine = LlrSumEngine::new(&mrc, &model, &params, eps).unwrap();
        let sum = sum_pmf(&model, sensors).unwrap();
        let c = (params.gain() / params.noise()).ln_1p();
        let base = -((sensors * params.slots()) as f64) * params.gain();
        for g in 0..(sensors * w) as i64 {
            let gamma = base + (g as f64 + 0.5) * c;
            let (a0, a1) = engine.probabilities(gamma);
            let p = mrc_perf_closed_form(&sum, &params, g);
            let err = (a0 - p.pfa).abs().max((a1 - p.pd).abs());
            worst_mrc = worst_mrc.max(err);
            ok &= err <= bound;
        }

        // STM closed form against the single-sensor enumeration
        let single = params.with_sensors(1).unwrap();
        let one = sum_pmf(&model, 1).unwrap();
        let engine = LlrSumEngine::new(&opt, &model, &single, eps).unwrap();
        for g in 0..w as i64 {
            let (lo, hi) = (opt.value(g as u64), opt.value(g as u64 + 1));
            // adjacent counts closer than the cluster resolution are one
            // operating point for an LLR threshold
            if !(hi - lo > CLUSTER_RESOLUTION * (1.0 + lo.abs())) {
                continue;
            }
            let (a0, a1) = engine.probabilities(0.5 * (lo + hi));
            let p = stm_perf_closed_form(&one, &single, g);
            let err = (a0 - p.pfa).abs().max((a1 - p.pd).abs());
            worst_stm = worst_stm.max(err);
            stm_points += 1;
            ok &= err <= ORACLE_TOL + eps;
        }
    }
    (
        ok,
        format!(
            "{done} instances; worst |diff| brute {worst_brute:.2e}, mrc {worst_mrc:.2e}, stm {worst_stm:.2e} over {stm_points} thresholds"
        ),
    )
}

fn criterion_7() -> (bool, String) {
    let model = HardSensingModel::new(0.1, 0.1).unwrap().to_model();
    let cfg = SimConfig::new(TRIALS, 7, ChannelMode::Steady).unwrap();
    let mut ok = true;
    let mut detail = Vec::new();
    for a in [4.0, 6.0] {
        let base = ChannelParams::steady(a, 4.0, 1, 1).unwrap();
        let problem = ChernoffProblem::new(LocalStatistic::Mrc, &model, &base).unwrap();
        let mut ratio = std::collections::BTreeMap::new();
        for m in [1usize, 2, 5, 10, 20] {
            let params = base.with_sensors(m).unwrap();
            let analyzer = Analyzer::new(DetectorKind::Mrc, &model, &params, DEFAULT_EPSILON).unwrap();
            let p = balanced(&analyzer).unwrap();
            let sim = simulate(DetectorKind::Mrc, &[p.threshold], &model, &params, &cfg).unwrap()[0];
            let (g_fa, g_m) = llr_events(DetectorKind::Mrc, p.threshold, &params);
            let bound_fa = problem.optimize(g_fa, m).pfa.bound();
            let bound_m = problem.optimize(g_m, m).pm.bound();
            let dominated = sim.pfa_hat <= bound_fa && sim.pm_hat <= bound_m;
            ok &= dominated;
            let pe = sim.pfa_hat.max(sim.pm_hat);
            let bound = bound_fa.max(bound_m);
            ratio.insert(m, bound.ln() / pe.ln());
            if !dominated {
                detail.push(format!("A={a} M={m}: Pe-hat ({}, {}) exceeds bound ({bound_fa}, {bound_m})", sim.pfa_hat, sim.pm_hat));
            }
        }
        let tighter = (1.0 - ratio[&20]).abs() < (1.0 - ratio[&5]).abs();
        ok &= tighter;
        detail.push(format!("A={a}: log ratio M=5 {:.4}, M=20 {:.4}", ratio[&5], ratio[&20]));
    }
    (ok, detail.join("; "))
}

fn criterion_8() -> (bool, String) {
    let model = HardSensingModel::new(0.1, 0.1).unwrap().to_model();
    let mut rows = Vec::new();
    for a in [4.0, 6.0, 8.0, 10.0] {
        let params = ChannelParams::steady(a, 4.0, 1, 1).unwrap();
        let eq = ChernoffProblem::new(LocalStatistic::Mrc, &model, &params).unwrap().equalize().unwrap();
        rows.push((a, eq));
    }
    let ok = rows.windows(2).all(|w| {
        w[1].1.s0 < w[0].1.s0 && w[1].1.s1.abs() < w[0].1.s1.abs() && w[1].1.exponent > w[0].1.exponent
    }) && rows.iter().all(|(_, e)| e.s0 > 0.0 && e.s1 < 0.0);
    let detail = rows
        .iter()
        .map(|(a, e)| format!("A={a}: s*=({:.4}, {:.4}) Ex={:.4}", e.s0, e.s1, e.exponent))
        .collect::<Vec<_>>()
        .join("; ");
    (ok, detail)
}

fn criterion_9() -> (bool, String) {
    let model = SensingModel::soft(4, -2.5, 3.5).unwrap();
    let params = ChannelParams::steady(1e3, 1.0, 1000, 2).unwrap();
    let sum = sum_pmf(&model, 2).unwrap();
    let sigma = 1_000_000;
    let dtm = llr_opt_dtm_sensor(sigma, &model, &params);
    let stm = llr_stm(sigma, &sum, &params);
    (dtm.is_finite() && stm.is_finite(), format!("dtm {dtm:.6e}, stm {stm:.6e}"))
}

fn criterion_10() -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("repro.json");
    std::fs::write(
        &config,
        r#"{
            "experiment": "roc", "seed": 10, "trials": 200000, "max_points": 16,
            "sensing": {"kind": "soft", "levels": 2},
            "channel": {"gain": 15, "noise": 4, "slots": 1, "sensors": 2},
            "detectors": ["opt_dtm", "max_log", "mrc", "cv", "two_stage", "opt_stm"]
        }"#,
    )
    .unwrap();
    let mut outputs = Vec::new();
    for n in THREADS {
        let out = dir.path().join(format!("t{n}"));
        let status = Command::new(env!("CARGO_BIN_EXE_mcfusion"))
            .args(["run", config.to_str().unwrap(), "--quiet", "--threads", &n.to_string(), "--output-dir"])
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out.join("repro.csv")).unwrap());
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    (same, format!("{} bytes, threads {:?}", outputs[0].len(), THREADS))
}

fn main() {
    let criteria: [(&str, fn() -> (bool, String)); 10] = [
        ("dual-engine agreement", criterion_1),
        ("detector ordering", criterion_2),
        ("DTM/STM crossover", criterion_3),
        ("soft beats hard", criterion_4),
        ("monotonicity suites", criterion_5),
        ("oracle equivalence", criterion_6),
        ("Chernoff validity and tightening", criterion_7),
        ("exponent shape", criterion_8),
        ("numerical stability", criterion_9),
        ("reproducibility", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(r) => r,
            Err(e) => (
                false,
                e.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "panicked".into()),
            ),
        };
        failed += !pass as usize;
        println!("criterion {:>2} {}: {name}: {detail}", i + 1, if pass { "PASS" } else { "FAIL" });
    }
    println!("acceptance: {}/{} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
