//! The five experiment kinds.

use crate::analysis::{Analyzer, PerfPoint, DEFAULT_EPSILON};
use crate::asymptotics::ChernoffProblem;
use crate::channel::ChannelParams;
use crate::detectors::{DetectorKind, LocalStatistic, Threshold};
use crate::error::{Error, Result};
use crate::montecarlo::{simulate, sweep, SimConfig, SimResult};
use crate::sensing::SensingModel;

use super::config::{ExperimentConfig, ExperimentKind};
use super::format::Row;

/// Rows of one run plus flags that decide the exit status.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub rows: Vec<Row>,
    /// Some calibration could not meet its target.
    pub infeasible: bool,
    /// Validation verdict: points passed and points checked.
    pub validation: Option<(usize, usize)>,
}

/// Resolved numeric setting of a config.
pub struct Setting {
    pub model: SensingModel,
    pub params: ChannelParams,
}

impl Setting {
    pub fn resolve(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            model: cfg.sensing.build()?,
            params: cfg.channel_params()?,
        })
    }
}

pub fn run(cfg: &ExperimentConfig, setting: &Setting) -> Result<Outcome> {
    match cfg.experiment {
        ExperimentKind::Roc => roc(cfg, setting, false),
        ExperimentKind::Validate => roc(cfg, setting, true),
        ExperimentKind::Sweep => sweep_rows(cfg, setting),
        ExperimentKind::Exponent => exponent(cfg, setting),
        ExperimentKind::BoundVsM => bound_vs_m(cfg, setting),
    }
}

fn eps(cfg: &ExperimentConfig) -> f64 {
    cfg.epsilon.unwrap_or(DEFAULT_EPSILON)
}

fn sim_config(cfg: &ExperimentConfig) -> Result<SimConfig> {
    SimConfig::new(cfg.trials, cfg.seed, cfg.channel.mode)
}

/// Analytic error rates are within the Monte Carlo half-widths.
pub fn agrees(a: &PerfPoint, r: &SimResult) -> bool {
    (a.pfa - r.pfa_hat).abs() <= r.ci_pfa && (a.pm - r.pm_hat).abs() <= r.ci_pm
}

fn roc(cfg: &ExperimentConfig, s: &Setting, check: bool) -> Result<Outcome> {
    let mut out = Outcome::default();
    let (mut passed, mut total) = (0, 0);
    for &kind in &cfg.detectors {
        let analyzer = Analyzer::new(kind, &s.model, &s.params, eps(cfg))?;
        let ts = cfg
            .explicit_thresholds(kind)
            .unwrap_or_else(|| analyzer.thresholds(Some(cfg.max_points)));
        let points = analyzer.roc(&ts)?;
        let row = Row::new(cfg.id(), Some(kind), &s.model, &s.params);
        out.rows.extend(points.iter().map(|p| row.clone().analytic(p)));
        if cfg.trials == 0 {
            continue;
        }
        let sims = simulate(kind, &ts, &s.model, &s.params, &sim_config(cfg)?)?;
        for (p, r) in points.iter().zip(&sims) {
            let mut line = row.clone().simulated(r);
            if check {
                total += 1;
                if agrees(p, r) {
                    passed += 1;
                    line = line.status("pass");
                } else {
                    line = line.status("fail");
                }
            }
            out.rows.push(line);
        }
    }
    if check {
        let verdict = if passed == total { "pass" } else { "fail" };
        let mut summary = Row::new(cfg.id(), None, &s.model, &s.params).status(verdict);
        summary.method = "summary".into();
        summary.trials = Some(cfg.trials);
        summary.seed = Some(cfg.seed);
        out.rows.push(summary);
        out.validation = Some((passed, total));
    }
    Ok(out)
}

fn sweep_rows(cfg: &ExperimentConfig, s: &Setting) -> Result<Outcome> {
    let sw = cfg.sweep.as_ref().expect("validated");
    let target = cfg.target_pfa.expect("validated");
    let rows = sweep(
        sw.axis,
        &sw.values,
        &cfg.sensing,
        &s.params,
        &cfg.detectors,
        target,
        &sim_config(cfg)?,
        Some(eps(cfg)),
    )?;
    let mut out = Outcome::default();
    for r in rows {
        let status = if r.calibrated.feasible { "ok" } else { "infeasible" };
        out.infeasible |= !r.calibrated.feasible;
        let row = Row::new(cfg.id(), Some(r.kind), &r.model, &r.params).status(status);
        out.rows.push(row.clone().analytic(&r.calibrated.point));
        out.rows.push(row.simulated(&r.sim));
    }
    Ok(out)
}

fn statistic(kind: DetectorKind) -> LocalStatistic {
    match kind {
        DetectorKind::Mrc => LocalStatistic::Mrc,
        k => k.local_statistic().expect("validated as an LLR-sum detector"),
    }
}

fn gains(listed: &[f64], params: &ChannelParams) -> Vec<f64> {
    if listed.is_empty() {
        vec![params.gain()]
    } else {
        listed.to_vec()
    }
}

fn exponent(cfg: &ExperimentConfig, s: &Setting) -> Result<Outcome> {
    let ex = cfg.exponent.as_ref().expect("validated");
    let mut out = Outcome::default();
    for a in gains(&ex.gains, &s.params) {
        let params = s.params.with_gain(a)?;
        for kind in cfg.bound_detectors() {
            let problem = ChernoffProblem::new(statistic(kind), &s.model, &params)?;
            let eq = problem.equalize()?;
            let curve = problem.curve(&ex.s_grid, eq.theta)?;
            let row = Row::new(cfg.id(), Some(kind), &s.model, &params).llr_threshold(eq.theta);
            let mut with = |u: f64, e0: Option<f64>, e1: Option<f64>, status: &str| {
                let mut r = row.clone().status(status);
                r.method = "chernoff_bound".into();
                r.s = Some(u);
                r.exponent0 = e0;
                r.exponent1 = e1;
                out.rows.push(r);
            };
            for (i, &u) in curve.s_grid.iter().enumerate() {
                with(u, Some(curve.ex0[i]), Some(curve.ex1[i]), "curve");
            }
            with(eq.s0, Some(eq.exponent), None, "s_star0");
            with(eq.s1, None, Some(eq.exponent), "s_star1");
        }
    }
    Ok(out)
}

/// Threshold equating analytic `Pfa` and `Pm` as closely as possible.
pub fn balanced(analyzer: &Analyzer) -> Result<PerfPoint> {
    let mut best: Option<PerfPoint> = None;
    for t in analyzer.thresholds(None) {
        let p = analyzer.perf(t)?;
        if best.is_none_or(|b| (p.pfa - p.pm).abs() < (b.pfa - b.pm).abs()) {
            best = Some(p);
        }
    }
    best.ok_or(Error::DegenerateStatistic)
}

fn bound_vs_m(cfg: &ExperimentConfig, s: &Setting) -> Result<Outcome> {
    let bc = cfg.bound_vs_m.as_ref().expect("validated");
    let mut out = Outcome::default();
    for a in gains(&bc.gains, &s.params) {
        for kind in cfg.bound_detectors() {
            let base = s.params.with_gain(a)?;
            let problem = ChernoffProblem::new(statistic(kind), &s.model, &base)?;
            let theta = problem.equalize()?.theta;
            for &m in &bc.sensors {
                let params = base.with_sensors(m)?;
                let row = Row::new(cfg.id(), Some(kind), &s.model, &params);
                // LLR-domain thresholds for the false-alarm and miss events
                let (threshold, gamma_fa, gamma_m) = match Analyzer::new(kind, &s.model, &params, eps(cfg)) {
                    Ok(analyzer) => {
                        let p = balanced(&analyzer)?;
                        out.rows.push(row.clone().analytic(&p));
                        let (g_fa, g_m) = llr_events(kind, p.threshold, &params);
                        (p.threshold, g_fa, g_m)
                    }
                    Err(Error::EnumerationCap { .. }) => {
                        let g = theta * m as f64;
                        (Threshold::Llr(g), g, g)
                    }
                    Err(e) => return Err(e),
                };
                let sim = simulate(kind, &[threshold], &s.model, &params, &sim_config(cfg)?)?;
                out.rows.push(row.clone().simulated(&sim[0]));
                let pfa = problem.optimize(gamma_fa, m).pfa;
                let pm = problem.optimize(gamma_m, m).pm;
                let mut r = row.clone().threshold(threshold).status("bound_pfa");
                r.method = "chernoff_bound".into();
                r.pfa = Some(pfa.bound());
                r.s = Some(pfa.s);
                r.exponent0 = Some(-pfa.ln_bound / m as f64);
                out.rows.push(r);
                let mut r = row.threshold(threshold).status("bound_pm");
                r.method = "chernoff_bound".into();
                r.pm = Some(pm.bound());
                r.s = Some(pm.s);
                r.exponent1 = Some(-pm.ln_bound / m as f64);
                out.rows.push(r);
            }
        }
    }
    Ok(out)
}

/// LLR-sum thresholds `(g_fa, g_m)` with `{decide H1} = {LLR >= g_fa}` and
/// `{decide H0} = {LLR <= g_m}`.
pub fn llr_events(kind: DetectorKind, t: Threshold, params: &ChannelParams) -> (f64, f64) {
    match t {
        Threshold::Llr(g) => (g, g),
        Threshold::Count(g) if kind == DetectorKind::Mrc => {
            // the per-sensor MRC statistic is -N A + sigma ln(1 + A / J)
            let base = -((params.sensors() * params.slots()) as f64) * params.gain();
            let slope = (params.gain() / params.noise()).ln_1p();
            if g == i64::MAX {
                (f64::INFINITY, f64::INFINITY)
            } else {
                (base + (g + 1) as f64 * slope, base + g as f64 * slope)
            }
        }
        _ => unreachable!("bounds apply to LLR-sum detectors"),
    }
}
