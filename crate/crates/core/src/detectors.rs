//! Fusion-center decision statistics.
//!
//! Every DTM statistic except the two-stage rule is a sum over sensors of a
//! per-sensor function of the received count `sigma_m = sum_n y_n^m`, so it
//! is represented by a [`LocalLlr`]. All likelihoods are evaluated in the
//! log domain; a direct evaluation overflows long before `sigma` reaches the
//! counts seen with large `N`, `A` or `M`.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelParams;
use crate::error::{invalid, Error, Result};
use crate::math::{ln_mass, ln_poisson_kernel, log_sum_exp, sum_llr};
use crate::sensing::{SensingModel, SumSensingPmf};

/// Reporting scheme: distinct molecule types per sensor, or one shared type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Dtm,
    Stm,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Dtm => "DTM",
            Scheme::Stm => "STM",
        }
    }
}

/// Molecule counts received at the fusion center during one reporting period.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationBatch {
    scheme: Scheme,
    /// One row per sensor for DTM, a single row for STM; each row has `N`
    /// per-slot counts.
    counts: Vec<Vec<u64>>,
    sums: Vec<u64>,
}

impl ObservationBatch {
    /// DTM batch from an `M x N` count matrix.
    pub fn dtm(counts: Vec<Vec<u64>>) -> Result<Self> {
        if counts.is_empty() {
            return Err(invalid("DTM batch needs at least one sensor"));
        }
        let n = counts[0].len();
        if n == 0 || counts.iter().any(|row| row.len() != n) {
            return Err(invalid("every sensor must report the same nonzero number of slots"));
        }
        Ok(Self::from_rows(Scheme::Dtm, counts))
    }

    /// STM batch from the `N` aggregate per-slot counts.
    pub fn stm(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(invalid("STM batch needs at least one slot"));
        }
        Ok(Self::from_rows(Scheme::Stm, vec![counts]))
    }

    pub(crate) fn from_rows(scheme: Scheme, counts: Vec<Vec<u64>>) -> Self {
        let sums = counts.iter().map(|row| row.iter().sum()).collect();
        Self { scheme, counts, sums }
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    /// Per-sensor sums `sigma_m` (DTM) or the single aggregate sum (STM).
    pub fn sums(&self) -> &[u64] {
        &self.sums
    }

    /// Total molecules over all sensors and slots.
    pub fn total(&self) -> u64 {
        self.sums.iter().sum()
    }

    fn require(&self, scheme: Scheme) -> Result<()> {
        if self.scheme == scheme {
            Ok(())
        } else {
            Err(Error::SchemeMismatch {
                expected: scheme,
                found: self.scheme,
            })
        }
    }
}

/// The six fusion rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    OptDtm,
    OptStm,
    MaxLog,
    Mrc,
    Cv,
    TwoStage,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 6] = [
        DetectorKind::OptDtm,
        DetectorKind::MaxLog,
        DetectorKind::Mrc,
        DetectorKind::Cv,
        DetectorKind::TwoStage,
        DetectorKind::OptStm,
    ];

    pub fn scheme(self) -> Scheme {
        match self {
            DetectorKind::OptStm => Scheme::Stm,
            _ => Scheme::Dtm,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DetectorKind::OptDtm => "opt_dtm",
            DetectorKind::OptStm => "opt_stm",
            DetectorKind::MaxLog => "max_log",
            DetectorKind::Mrc => "mrc",
            DetectorKind::Cv => "cv",
            DetectorKind::TwoStage => "two_stage",
        }
    }

    /// Per-sensor statistic for detectors that threshold a real-valued LLR
    /// sum.
    pub fn local_statistic(self) -> Option<LocalStatistic> {
        match self {
            DetectorKind::OptDtm => Some(LocalStatistic::Optimal),
            DetectorKind::MaxLog => Some(LocalStatistic::MaxLog),
            DetectorKind::Cv => Some(LocalStatistic::ChairVarshney),
            _ => None,
        }
    }
}

impl std::fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Decision threshold. Count thresholds use `-1` for "always decide H1" and
/// `i64::MAX` for "never".
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Real threshold on an LLR sum.
    Llr(f64),
    /// Integer threshold on a molecule count.
    Count(i64),
    /// Per-sensor count threshold and vote threshold of the two-stage rule.
    TwoStage { local: i64, global: usize },
}

impl Threshold {
    pub fn never(kind: DetectorKind, sensors: usize) -> Self {
        match kind {
            DetectorKind::OptDtm | DetectorKind::MaxLog | DetectorKind::Cv => {
                Threshold::Llr(f64::INFINITY)
            }
            DetectorKind::Mrc | DetectorKind::OptStm => Threshold::Count(i64::MAX),
            DetectorKind::TwoStage => Threshold::TwoStage { local: -1, global: sensors },
        }
    }

    pub fn always(kind: DetectorKind) -> Self {
        match kind {
            DetectorKind::OptDtm | DetectorKind::MaxLog | DetectorKind::Cv => {
                Threshold::Llr(f64::NEG_INFINITY)
            }
            DetectorKind::Mrc | DetectorKind::OptStm => Threshold::Count(-1),
            DetectorKind::TwoStage => Threshold::TwoStage { local: -1, global: 0 },
        }
    }
}

/// A detector together with its threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    pub threshold: Threshold,
}

impl DetectorSpec {
    pub fn new(kind: DetectorKind, threshold: Threshold, sensors: usize) -> Result<Self> {
        let ok = match (kind, threshold) {
            (DetectorKind::OptDtm | DetectorKind::MaxLog | DetectorKind::Cv, Threshold::Llr(g)) => {
                !g.is_nan()
            }
            (DetectorKind::OptStm, Threshold::Llr(g)) => !g.is_nan(),
            (DetectorKind::Mrc | DetectorKind::OptStm, Threshold::Count(_)) => true,
            (DetectorKind::TwoStage, Threshold::TwoStage { global, .. }) => global <= sensors,
            _ => false,
        };
        if !ok {
            return Err(invalid(format!("threshold {threshold:?} does not fit detector {kind}")));
        }
        Ok(Self { kind, threshold })
    }
}

/// Per-sensor LLR approximations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LocalStatistic {
    /// Exact mixture likelihood ratio.
    Optimal,
    /// Largest mixture term in numerator and denominator.
    MaxLog,
    /// Ideal-sensor approximation, linear in the count.
    Mrc,
    /// Estimate the sensed value from the count, then use its sensing LLR.
    ChairVarshney,
}

/// A per-sensor statistic prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct LocalLlr {
    stat: LocalStatistic,
    ln_g0: Vec<f64>,
    ln_g1: Vec<f64>,
    means: Vec<f64>,
    slots: f64,
    mrc_offset: f64,
    mrc_slope: f64,
}

impl LocalLlr {
    pub fn new(stat: LocalStatistic, model: &SensingModel, params: &ChannelParams) -> Result<Self> {
        let (mrc_offset, mrc_slope) = if stat == LocalStatistic::Mrc {
            mrc_coefficients(params)?
        } else {
            (0.0, 0.0)
        };
        Ok(Self {
            stat,
            ln_g0: model.g0().iter().map(|&p| ln_mass(p)).collect(),
            ln_g1: model.g1().iter().map(|&p| ln_mass(p)).collect(),
            means: (0..model.levels())
                .map(|l| model.value(l) * params.gain() + params.noise())
                .collect(),
            slots: params.slots() as f64,
            mrc_offset,
            mrc_slope,
        })
    }

    pub fn statistic(&self) -> LocalStatistic {
        self.stat
    }

    /// Statistic value at received count `sigma`.
    pub fn value(&self, sigma: u64) -> f64 {
        match self.stat {
            LocalStatistic::Optimal => {
                let (num, den) = self.mixture_terms(sigma);
                lse_difference(log_sum_exp(&num), log_sum_exp(&den))
            }
            LocalStatistic::MaxLog => {
                let (num, den) = self.mixture_terms(sigma);
                let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                lse_difference(max(&num), max(&den))
            }
            LocalStatistic::Mrc => self.mrc_offset + sigma as f64 * self.mrc_slope,
            LocalStatistic::ChairVarshney => {
                let l = self.argmax_poisson(sigma);
                lse_difference(self.ln_g1[l], self.ln_g0[l])
            }
        }
    }

    fn mixture_terms(&self, sigma: u64) -> (Vec<f64>, Vec<f64>) {
        let kernel: Vec<f64> = self
            .means
            .iter()
            .map(|&m| ln_poisson_kernel(m, sigma, self.slots))
            .collect();
        let num = kernel.iter().zip(&self.ln_g1).map(|(k, g)| k + g).collect();
        let den = kernel.iter().zip(&self.ln_g0).map(|(k, g)| k + g).collect();
        (num, den)
    }

    /// Grid index maximizing the Poisson kernel; ties go to the smaller
    /// value.
    fn argmax_poisson(&self, sigma: u64) -> usize {
        let mut best = 0;
        let mut best_val = f64::NEG_INFINITY;
        for (l, &m) in self.means.iter().enumerate() {
            let v = ln_poisson_kernel(m, sigma, self.slots);
            if v > best_val {
                best_val = v;
                best = l;
            }
        }
        best
    }
}

/// `a - b` for log-likelihoods, with `0` when both are `-inf`.
fn lse_difference(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        0.0
    } else {
        a - b
    }
}

fn mrc_coefficients(params: &ChannelParams) -> Result<(f64, f64)> {
    if !(params.noise() > 0.0) {
        return Err(invalid("the MRC statistic needs a positive noise mean J"));
    }
    let n = params.slots() as f64;
    Ok((-n * params.gain(), (params.gain() / params.noise()).ln_1p()))
}

/// Exact per-sensor DTM log-likelihood ratio at count `sigma`.
pub fn llr_opt_dtm_sensor(sigma: u64, model: &SensingModel, params: &ChannelParams) -> f64 {
    LocalLlr::new(LocalStatistic::Optimal, model, params)
        .expect("optimal statistic has no parameter restrictions")
        .value(sigma)
}

/// Exact DTM log-likelihood ratio of a whole batch.
pub fn llr_opt_dtm_total(batch: &ObservationBatch, model: &SensingModel, params: &ChannelParams) -> Result<f64> {
    batch.require(Scheme::Dtm)?;
    let local = LocalLlr::new(LocalStatistic::Optimal, model, params)?;
    Ok(sum_llr(batch.sums().iter().map(|&s| local.value(s))))
}

/// Max-Log per-sensor statistic.
pub fn llr_maxlog_sensor(sigma: u64, model: &SensingModel, params: &ChannelParams) -> f64 {
    LocalLlr::new(LocalStatistic::MaxLog, model, params)
        .expect("max-log statistic has no parameter restrictions")
        .value(sigma)
}

/// MRC per-sensor statistic `-N A + sigma ln(1 + A/J)`.
pub fn llr_mrc(sigma: u64, params: &ChannelParams) -> Result<f64> {
    let (offset, slope) = mrc_coefficients(params)?;
    Ok(offset + sigma as f64 * slope)
}

/// MRC decision: `true` iff the total DTM count exceeds `gamma`.
pub fn decide_mrc(batch: &ObservationBatch, gamma: i64) -> Result<bool> {
    batch.require(Scheme::Dtm)?;
    Ok(count_exceeds(batch.total(), gamma))
}

/// Sensed value whose Poisson kernel best explains `sigma`.
pub fn cv_estimate(sigma: u64, model: &SensingModel, params: &ChannelParams) -> f64 {
    let local = LocalLlr::new(LocalStatistic::ChairVarshney, model, params)
        .expect("chair-varshney statistic has no parameter restrictions");
    model.value(local.argmax_poisson(sigma))
}

/// Chair-Varshney per-sensor statistic; `±inf` when the estimated value has
/// zero mass under one hypothesis.
pub fn llr_cv(sigma: u64, model: &SensingModel, params: &ChannelParams) -> f64 {
    LocalLlr::new(LocalStatistic::ChairVarshney, model, params)
        .expect("chair-varshney statistic has no parameter restrictions")
        .value(sigma)
}

/// Same-molecule-type LLR prepared for repeated evaluation.
#[derive(Debug, Clone)]
pub struct StmLlr {
    ln_g0: Vec<f64>,
    ln_g1: Vec<f64>,
    means: Vec<f64>,
    slots: f64,
}

impl StmLlr {
    pub fn new(sum: &SumSensingPmf, params: &ChannelParams) -> Self {
        Self {
            ln_g0: sum.masses(crate::Hypothesis::H0).iter().map(|&p| ln_mass(p)).collect(),
            ln_g1: sum.masses(crate::Hypothesis::H1).iter().map(|&p| ln_mass(p)).collect(),
            means: (0..sum.len())
                .map(|l| sum.value(l) * params.gain() + params.noise())
                .collect(),
            slots: params.slots() as f64,
        }
    }

    pub fn value(&self, sigma: u64) -> f64 {
        let kernel = self.means.iter().map(|&m| ln_poisson_kernel(m, sigma, self.slots));
        let (num, den): (Vec<f64>, Vec<f64>) = kernel
            .zip(self.ln_g1.iter().zip(&self.ln_g0))
            .map(|(k, (g1, g0))| (k + g1, k + g0))
            .unzip();
        lse_difference(log_sum_exp(&num), log_sum_exp(&den))
    }
}

/// Optimal STM log-likelihood ratio at aggregate count `sigma`.
pub fn llr_stm(sigma: u64, sum: &SumSensingPmf, params: &ChannelParams) -> f64 {
    StmLlr::new(sum, params).value(sigma)
}

/// Equivalent optimal STM rule: `true` iff the aggregate count exceeds `gamma`.
pub fn decide_stm_sum(batch: &ObservationBatch, gamma: i64) -> Result<bool> {
    batch.require(Scheme::Stm)?;
    Ok(count_exceeds(batch.total(), gamma))
}

/// Two-stage rule: per-sensor count tests followed by a vote that must
/// exceed `global`.
pub fn decide_two_stage(batch: &ObservationBatch, local: i64, global: usize) -> Result<bool> {
    batch.require(Scheme::Dtm)?;
    Ok(two_stage_votes(batch.sums(), local) > global)
}

pub(crate) fn two_stage_votes(sums: &[u64], local: i64) -> usize {
    sums.iter().filter(|&&s| count_exceeds(s, local)).count()
}

#[inline]
pub(crate) fn count_exceeds(count: u64, gamma: i64) -> bool {
    gamma < 0 || count > gamma as u64
}

/// Threshold test `statistic > gamma`; ties decide H0. `gamma = -inf`
/// always decides H1 and `gamma = +inf` never does.
pub fn decide(statistic: f64, gamma: f64) -> bool {
    if gamma == f64::NEG_INFINITY {
        true
    } else if gamma == f64::INFINITY {
        false
    } else {
        statistic > gamma
    }
}

/// A detector prepared for evaluation on many batches with the same model
/// and channel.
#[derive(Debug, Clone)]
pub struct PreparedDetector {
    kind: DetectorKind,
    local: Option<LocalLlr>,
    stm: Option<StmLlr>,
}

impl PreparedDetector {
    pub fn new(kind: DetectorKind, model: &SensingModel, params: &ChannelParams) -> Result<Self> {
        let local = match kind.local_statistic() {
            Some(stat) => Some(LocalLlr::new(stat, model, params)?),
            None => None,
        };
        let stm = if kind == DetectorKind::OptStm {
            Some(StmLlr::new(&crate::sensing::sum_pmf(model, params.sensors())?, params))
        } else {
            None
        };
        Ok(Self { kind, local, stm })
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    pub fn local(&self) -> Option<&LocalLlr> {
        self.local.as_ref()
    }

    /// LLR-sum statistic of a DTM batch (summed in sensor order).
    pub fn llr_sum(&self, batch: &ObservationBatch) -> Option<f64> {
        self.local
            .as_ref()
            .map(|l| sum_llr(batch.sums().iter().map(|&s| l.value(s))))
    }

    pub fn decide(&self, batch: &ObservationBatch, threshold: Threshold) -> Result<bool> {
        batch.require(self.kind.scheme())?;
        match (self.kind, threshold) {
            (DetectorKind::OptStm, Threshold::Count(g)) => decide_stm_sum(batch, g),
            (DetectorKind::OptStm, Threshold::Llr(g)) => {
                let stm = self.stm.as_ref().expect("prepared for STM");
                Ok(decide(stm.value(batch.total()), g))
            }
            (DetectorKind::Mrc, Threshold::Count(g)) => decide_mrc(batch, g),
            (DetectorKind::TwoStage, Threshold::TwoStage { local, global }) => {
                decide_two_stage(batch, local, global)
            }
            (_, Threshold::Llr(g)) if self.local.is_some() => {
                Ok(decide(self.llr_sum(batch).expect("local statistic"), g))
            }
            _ => Err(invalid(format!("threshold {threshold:?} does not fit detector {}", self.kind))),
        }
    }
}
