//! Seeded Monte Carlo estimation of false-alarm and missed-detection rates.
//!
//! Trial `t` under hypothesis `h` draws from its own ChaCha8 stream
//! `2 t + h` of the configured seed, and trials are processed in fixed-size
//! chunks whose integer decision counts are summed. The outcome is therefore
//! bit-identical for any number of worker threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{Analyzer, Calibrated, DEFAULT_EPSILON};
use crate::channel::{transient_gains, ChannelParams};
use crate::detectors::{
    count_exceeds, decide, two_stage_votes, DetectorKind, DetectorSpec, LocalLlr, ObservationBatch, Scheme, StmLlr,
    Threshold,
};
use crate::error::{invalid, Result};
use crate::math::sum_llr;
use crate::sensing::{sum_pmf, Hypothesis, SensingModel, SensingSampler, SensingSpec};

/// Trials per work unit.
pub const CHUNK_TRIALS: u64 = 4096;

/// Means below this use exact inversion; above it, rejection sampling.
pub const INVERSION_LIMIT: f64 = 30.0;

/// Channel memory model used when sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// Every slot has mean `x A + J`.
    #[default]
    Steady,
    /// Slot `n` sees the inter-symbol build-up of the CIR.
    Transient,
}

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimConfig {
    pub trials: u64,
    pub seed: u64,
    pub mode: ChannelMode,
}

impl SimConfig {
    pub fn new(trials: u64, seed: u64, mode: ChannelMode) -> Result<Self> {
        if trials == 0 {
            return Err(invalid("at least one trial is required"));
        }
        Ok(Self { trials, seed, mode })
    }
}

/// Empirical error rates for one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimResult {
    pub threshold: Threshold,
    pub pfa_hat: f64,
    pub pm_hat: f64,
    /// Trials deciding H1 under H0.
    pub false_alarms: u64,
    /// Trials deciding H0 under H1.
    pub misses: u64,
    pub ci_pfa: f64,
    pub ci_pm: f64,
    pub trials: u64,
    pub seed: u64,
}

/// Three-standard-deviation binomial half-width, using the smoothed rate
/// `(k + 1) / (n + 2)` so that zero and full counts keep a nonzero width.
pub fn ci_half_width(successes: u64, trials: u64) -> f64 {
    let n = trials as f64;
    let p = (successes as f64 + 1.0) / (n + 2.0);
    3.0 * (p * (1.0 - p) / n).sqrt()
}

impl SimResult {
    fn from_counts(threshold: Threshold, false_alarms: u64, misses: u64, config: &SimConfig) -> Self {
        let n = config.trials as f64;
        Self {
            threshold,
            pfa_hat: false_alarms as f64 / n,
            pm_hat: misses as f64 / n,
            false_alarms,
            misses,
            ci_pfa: ci_half_width(false_alarms, config.trials),
            ci_pm: ci_half_width(misses, config.trials),
            trials: config.trials,
            seed: config.seed,
        }
    }
}

/// Exact Poisson sampler for a fixed mean.
#[derive(Debug, Clone)]
pub enum PoissonSampler {
    Zero,
    Inversion { lambda: f64, p0: f64 },
    Rejection(Poisson<f64>),
}

impl PoissonSampler {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(invalid(format!("Poisson mean must be finite and nonnegative, got {lambda}")));
        }
        Ok(if lambda == 0.0 {
            PoissonSampler::Zero
        } else if lambda < INVERSION_LIMIT {
            PoissonSampler::Inversion {
                lambda,
                p0: (-lambda).exp(),
            }
        } else {
            PoissonSampler::Rejection(Poisson::new(lambda).map_err(|e| invalid(e.to_string()))?)
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            PoissonSampler::Zero => 0,
            PoissonSampler::Inversion { lambda, p0 } => {
                let u: f64 = rng.random();
                let mut k = 0u64;
                let mut p = *p0;
                let mut cdf = p;
                // the cap only guards against a cdf that rounds below u
                let cap = (lambda + 40.0 * lambda.sqrt() + 100.0) as u64;
                while u >= cdf && k < cap {
                    k += 1;
                    p *= lambda / k as f64;
                    cdf += p;
                }
                k
            }
            PoissonSampler::Rejection(d) => d.sample(rng) as u64,
        }
    }
}

/// Draws one Poisson variate with mean `lambda`.
pub fn sample_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    PoissonSampler::new(lambda).map(|s| s.sample(rng)).unwrap_or(0)
}

/// Samplers for every (grid level, slot) mean used by DTM.
#[derive(Debug, Clone)]
struct ObservationSampler {
    scheme: Scheme,
    sensors: usize,
    slots: usize,
    sensing: SensingSampler,
    values: Vec<f64>,
    /// DTM: `[level][slot]`.
    dtm: Vec<Vec<PoissonSampler>>,
    /// STM: per-slot gain and noise, sampled afresh per trial.
    gains: Vec<f64>,
    noise: f64,
}

impl ObservationSampler {
    fn new(model: &SensingModel, params: &ChannelParams, scheme: Scheme, mode: ChannelMode) -> Result<Self> {
        let gains = match mode {
            ChannelMode::Steady => vec![params.gain(); params.slots()],
            ChannelMode::Transient => transient_gains(params),
        };
        let values = model.grid();
        let dtm = match scheme {
            Scheme::Dtm => values
                .iter()
                .map(|&x| {
                    gains
                        .iter()
                        .map(|&a| PoissonSampler::new(x * a + params.noise()))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?,
            Scheme::Stm => Vec::new(),
        };
        Ok(Self {
            scheme,
            sensors: params.sensors(),
            slots: params.slots(),
            sensing: SensingSampler::new(model),
            values,
            dtm,
            gains,
            noise: params.noise(),
        })
    }

    fn sample<R: Rng + ?Sized>(&self, h: Hypothesis, rng: &mut R) -> ObservationBatch {
        match self.scheme {
            Scheme::Dtm => {
                let rows = (0..self.sensors)
                    .map(|_| {
                        let l = self.sensing.sample_index(h, rng);
                        self.dtm[l].iter().map(|s| s.sample(rng)).collect()
                    })
                    .collect();
                ObservationBatch::from_rows(Scheme::Dtm, rows)
            }
            Scheme::Stm => {
                let total_x: f64 = (0..self.sensors)
                    .map(|_| self.values[self.sensing.sample_index(h, rng)])
                    .sum();
                let row = (0..self.slots)
                    .map(|n| sample_poisson(total_x * self.gains[n] + self.noise, rng))
                    .collect();
                ObservationBatch::from_rows(Scheme::Stm, vec![row])
            }
        }
    }
}

/// Draws one reporting period: sensed values from `g_h`, then Poisson slot
/// counts. STM slots carry one shared noise term.
pub fn sample_observation<R: Rng + ?Sized>(
    h: Hypothesis,
    model: &SensingModel,
    params: &ChannelParams,
    scheme: Scheme,
    mode: ChannelMode,
    rng: &mut R,
) -> Result<ObservationBatch> {
    Ok(ObservationSampler::new(model, params, scheme, mode)?.sample(h, rng))
}

/// RNG for trial `t` under `h`.
pub fn trial_rng(seed: u64, trial: u64, h: Hypothesis) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * trial + h.index() as u64);
    rng
}

/// Cached per-sensor statistic over counts.
#[derive(Debug, Clone)]
struct LlrTable {
    local: LocalLlr,
    values: Vec<f64>,
}

impl LlrTable {
    fn new(local: LocalLlr, size: usize) -> Self {
        let values = (0..size).map(|s| local.value(s as u64)).collect();
        Self { local, values }
    }

    fn get(&self, sigma: u64) -> f64 {
        match self.values.get(sigma as usize) {
            Some(&v) => v,
            None => self.local.value(sigma),
        }
    }
}

/// Per-trial statistic, compared against every threshold.
enum Statistic {
    Llr(f64),
    Count(u64),
    Sums(Vec<u64>),
}

struct Evaluator {
    kind: DetectorKind,
    local: Option<LlrTable>,
    stm: Option<StmLlr>,
    stm_by_llr: bool,
}

impl Evaluator {
    fn new(kind: DetectorKind, model: &SensingModel, params: &ChannelParams, thresholds: &[Threshold]) -> Result<Self> {
        let size = (4.0 * params.slots() as f64 * (params.gain() + params.noise())) as usize + 64;
        let local = match kind.local_statistic() {
            Some(stat) => Some(LlrTable::new(LocalLlr::new(stat, model, params)?, size)),
            None => None,
        };
        let stm_by_llr = kind == DetectorKind::OptStm && thresholds.iter().any(|t| matches!(t, Threshold::Llr(_)));
        let stm = if stm_by_llr {
            Some(StmLlr::new(&sum_pmf(model, params.sensors())?, params))
        } else {
            None
        };
        for &t in thresholds {
            DetectorSpec::new(kind, t, params.sensors())?;
        }
        Ok(Self {
            kind,
            local,
            stm,
            stm_by_llr,
        })
    }

    fn statistic(&self, batch: &ObservationBatch) -> Statistic {
        match self.kind {
            DetectorKind::TwoStage => Statistic::Sums(batch.sums().to_vec()),
            DetectorKind::Mrc => Statistic::Count(batch.total()),
            DetectorKind::OptStm => Statistic::Count(batch.total()),
            _ => {
                let table = self.local.as_ref().expect("local statistic");
                Statistic::Llr(sum_llr(batch.sums().iter().map(|&s| table.get(s))))
            }
        }
    }

    fn decide(&self, stat: &Statistic, threshold: Threshold) -> bool {
        match (stat, threshold) {
            (Statistic::Llr(v), Threshold::Llr(g)) => decide(*v, g),
            (Statistic::Count(c), Threshold::Count(g)) => count_exceeds(*c, g),
            (Statistic::Count(c), Threshold::Llr(g)) if self.stm_by_llr => {
                decide(self.stm.as_ref().expect("stm llr").value(*c), g)
            }
            (Statistic::Sums(s), Threshold::TwoStage { local, global }) => two_stage_votes(s, local) > global,
            _ => unreachable!("thresholds validated at construction"),
        }
    }
}

/// Runs `config.trials` trials per hypothesis and evaluates every threshold
/// on the same samples.
pub fn simulate(
    kind: DetectorKind,
    thresholds: &[Threshold],
    model: &SensingModel,
    params: &ChannelParams,
    config: &SimConfig,
) -> Result<Vec<SimResult>> {
    if config.trials == 0 {
        return Err(invalid("at least one trial is required"));
    }
    let eval = Evaluator::new(kind, model, params, thresholds)?;
    let sampler = ObservationSampler::new(model, params, kind.scheme(), config.mode)?;
    let chunks = config.trials.div_ceil(CHUNK_TRIALS);
    let k = thresholds.len();
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut fa = vec![0u64; k];
            let mut miss = vec![0u64; k];
            let end = ((c + 1) * CHUNK_TRIALS).min(config.trials);
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            for t in c * CHUNK_TRIALS..end {
                for h in Hypothesis::BOTH {
                    rng.set_stream(2 * t + h.index() as u64);
                    rng.set_word_pos(0);
                    let batch = sampler.sample(h, &mut rng);
                    let stat = eval.statistic(&batch);
                    for (i, &th) in thresholds.iter().enumerate() {
                        let d = eval.decide(&stat, th);
                        match h {
                            Hypothesis::H0 if d => fa[i] += 1,
                            Hypothesis::H1 if !d => miss[i] += 1,
                            _ => {}
                        }
                    }
                }
            }
            (fa, miss)
        })
        .reduce(
            || (vec![0u64; k], vec![0u64; k]),
            |mut a, b| {
                for i in 0..k {
                    a.0[i] += b.0[i];
                    a.1[i] += b.1[i];
                }
                a
            },
        );
    Ok(thresholds
        .iter()
        .enumerate()
        .map(|(i, &t)| SimResult::from_counts(t, counts.0[i], counts.1[i], config))
        .collect())
}

/// Empirical performance of one detector.
pub fn estimate_perf(
    detector: &DetectorSpec,
    model: &SensingModel,
    params: &ChannelParams,
    config: &SimConfig,
) -> Result<SimResult> {
    Ok(simulate(detector.kind, &[detector.threshold], model, params, config)?.remove(0))
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepAxis {
    /// Effective channel gain `A`.
    A,
    /// Noise mean `J`.
    J,
    /// Number of sensors `M`.
    M,
    /// Slots per reporting period `N`.
    N,
    /// Quantization levels `L`.
    L,
    /// Monte Carlo trials.
    #[serde(rename = "trials")]
    Trials,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::A => "A",
            SweepAxis::J => "J",
            SweepAxis::M => "M",
            SweepAxis::N => "N",
            SweepAxis::L => "L",
            SweepAxis::Trials => "trials",
        }
    }
}

/// One (axis value, detector) cell of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub kind: DetectorKind,
    pub model: SensingModel,
    pub params: ChannelParams,
    pub calibrated: Calibrated,
    pub sim: SimResult,
}

fn as_count(axis: SweepAxis, v: f64) -> Result<usize> {
    if v >= 0.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as usize)
    } else {
        Err(invalid(format!("sweep over {} needs whole numbers, got {v}", axis.name())))
    }
}

/// For each axis value, calibrates every detector to `target_pfa` with the
/// analytic engine and then simulates it at that threshold. Infeasible
/// calibrations are kept and flagged through `calibrated.feasible`.
pub fn sweep(
    axis: SweepAxis,
    values: &[f64],
    sensing: &SensingSpec,
    params: &ChannelParams,
    detectors: &[DetectorKind],
    target_pfa: f64,
    config: &SimConfig,
    eps: Option<f64>,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &v in values {
        let mut spec = sensing.clone();
        let mut p = params.clone();
        let mut cfg = *config;
        match axis {
            SweepAxis::A => p = p.with_gain(v)?,
            SweepAxis::J => p = p.with_noise(v)?,
            SweepAxis::M => p = p.with_sensors(as_count(axis, v)?)?,
            SweepAxis::N => p = p.with_slots(as_count(axis, v)?)?,
            SweepAxis::L => spec = spec.with_levels(as_count(axis, v)?)?,
            SweepAxis::Trials => cfg = SimConfig::new(as_count(axis, v)? as u64, cfg.seed, cfg.mode)?,
        }
        let model = spec.build()?;
        for &kind in detectors {
            let calibrated = Analyzer::new(kind, &model, &p, eps.unwrap_or(DEFAULT_EPSILON))?.calibrate(target_pfa)?;
            let sim = simulate(kind, &[calibrated.threshold], &model, &p, &cfg)?.remove(0);
            rows.push(SweepRow {
                value: v,
                kind,
                model: model.clone(),
                params: p.clone(),
                calibrated,
                sim,
            });
        }
    }
    Ok(rows)
}
