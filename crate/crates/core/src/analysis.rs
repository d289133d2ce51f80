//! Exact performance evaluation without simulation.
//!
//! LLR-sum detectors (optimal DTM, Max-Log, CV and any other per-sensor
//! statistic) are handled by enumerating the per-sensor count vectors on a
//! truncated support. Count detectors (MRC, STM, two-stage) use closed forms
//! built on the Poisson tail. All results assume the steady-state channel,
//! where a sensor's count over `N` slots is Poisson with mean `N (x A + J)`.

use rayon::prelude::*;
use statrs::function::factorial::ln_factorial;
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::channel::ChannelParams;
use crate::detectors::{decide, DetectorKind, LocalLlr, LocalStatistic, Threshold};
use crate::error::{invalid, Error, Result};
use crate::sensing::{sum_pmf, Hypothesis, SensingModel, SumSensingPmf};

/// Default per-sensor truncation tolerance.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Largest number of sensors handled by exact enumeration.
pub const ENUMERATION_CAP: usize = 6;

/// Joint supports up to this size are enumerated in full to list every
/// achievable LLR total.
pub const DISTRIBUTION_CAP: usize = 2_000_000;

/// Size of the uniform threshold grid used when the achievable set is too
/// large to list.
pub const ROC_GRID_POINTS: usize = 512;

/// Achievable threshold sets up to this size are reported in full.
pub const MAX_EXACT_POINTS: usize = 2048;

/// `P(Poisson(lambda) > x)`. Negative `x` gives `1`.
pub fn poisson_tail(x: i64, lambda: f64) -> f64 {
    if x < 0 {
        1.0
    } else if lambda <= 0.0 || x == i64::MAX {
        0.0
    } else {
        gamma_lr(x as f64 + 1.0, lambda)
    }
}

/// `P(Poisson(lambda) <= x)`, the complement of [`poisson_tail`] evaluated
/// directly so that small values keep their relative accuracy.
pub fn poisson_cdf(x: i64, lambda: f64) -> f64 {
    if x < 0 {
        0.0
    } else if lambda <= 0.0 || x == i64::MAX {
        1.0
    } else {
        gamma_ur(x as f64 + 1.0, lambda)
    }
}

/// Natural log of the Poisson mass at `w`.
pub fn ln_poisson_pmf(w: u64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return if w == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -lambda + w as f64 * lambda.ln() - ln_factorial(w)
}

/// Smallest `w` with `P(Poisson(lambda) > w) <= tail`.
pub fn poisson_upper_quantile(lambda: f64, tail: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let mut hi = (lambda + 10.0 * lambda.sqrt() + 10.0).ceil() as u64;
    while poisson_tail(hi as i64, lambda) > tail {
        hi *= 2;
    }
    let mut lo = 0u64;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if poisson_tail(mid as i64, lambda) <= tail {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    lo
}

/// Per-sensor count distribution truncated to `0..=W`.
#[derive(Debug, Clone, PartialEq)]
pub struct CountPmf {
    mass: Vec<f64>,
    tail: f64,
}

impl CountPmf {
    /// Largest count in the support.
    pub fn max_count(&self) -> usize {
        self.mass.len() - 1
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Probability beyond the support.
    pub fn tail(&self) -> f64 {
        self.tail
    }

    pub fn mean(&self) -> f64 {
        self.mass.iter().enumerate().map(|(w, p)| w as f64 * p).sum()
    }
}

/// Poisson mean of a sensor's total count when its sensed value is `x`.
fn count_mean(x: f64, params: &ChannelParams) -> f64 {
    params.slots() as f64 * (x * params.gain() + params.noise())
}

fn check_epsilon(eps: f64) -> Result<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("tail tolerance must lie in (0, 1), got {eps}")))
    }
}

/// Truncation point for one hypothesis: the largest component quantile at
/// `1 - eps/L`.
fn support_limit(model: &SensingModel, params: &ChannelParams, h: Hypothesis, eps: f64) -> usize {
    let per = eps / model.levels() as f64;
    model
        .masses(h)
        .iter()
        .enumerate()
        .filter(|(_, &g)| g > 0.0)
        .map(|(l, _)| poisson_upper_quantile(count_mean(model.value(l), params), per) as usize)
        .max()
        .unwrap_or(0)
}

fn count_pmf_on(model: &SensingModel, params: &ChannelParams, h: Hypothesis, max_count: usize) -> CountPmf {
    let mut mass = vec![0.0; max_count + 1];
    let mut tail = 0.0;
    for (l, &g) in model.masses(h).iter().enumerate() {
        if g <= 0.0 {
            continue;
        }
        let lambda = count_mean(model.value(l), params);
        for (w, m) in mass.iter_mut().enumerate() {
            *m += g * ln_poisson_pmf(w as u64, lambda).exp();
        }
        tail += g * poisson_tail(max_count as i64, lambda);
    }
    CountPmf { mass, tail }
}

/// Mixture of `Poisson(N (x A + J))` weighted by `g_i(x)`, truncated where
/// the mixture tail drops below `eps`.
pub fn per_sensor_count_pmf(
    model: &SensingModel,
    params: &ChannelParams,
    h: Hypothesis,
    eps: f64,
) -> Result<CountPmf> {
    check_epsilon(eps)?;
    Ok(count_pmf_on(model, params, h, support_limit(model, params, h, eps)))
}

/// How a performance point was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Analytic,
    MonteCarlo,
    ChernoffBound,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::MonteCarlo => "monte-carlo",
            Method::ChernoffBound => "chernoff-bound",
        }
    }
}

/// One operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfPoint {
    pub threshold: Threshold,
    pub pfa: f64,
    pub pd: f64,
    /// Missed-detection probability, evaluated directly where a closed form
    /// allows it rather than as `1 - pd`.
    pub pm: f64,
    pub method: Method,
    /// Additive error bound from truncation.
    pub uncertainty: f64,
}

impl PerfPoint {
    fn analytic(threshold: Threshold, pfa: f64, pd: f64, pm: f64, uncertainty: f64) -> Self {
        Self {
            threshold,
            pfa: pfa.clamp(0.0, 1.0),
            pd: pd.clamp(0.0, 1.0),
            pm: pm.clamp(0.0, 1.0),
            method: Method::Analytic,
            uncertainty,
        }
    }
}

/// Running LLR total with the same summation order and infinity rules as
/// [`crate::math::sum_llr`].
#[derive(Debug, Clone, Copy, Default)]
struct Partial {
    finite: f64,
    pos: bool,
    neg: bool,
}

impl Partial {
    #[inline]
    fn push(mut self, v: f64) -> Self {
        if v == f64::INFINITY {
            self.pos = true;
        } else if v == f64::NEG_INFINITY {
            self.neg = true;
        } else {
            self.finite += v;
        }
        self
    }

    #[inline]
    fn value(self) -> f64 {
        match (self.pos, self.neg) {
            (true, true) => 0.0,
            (true, false) => f64::INFINITY,
            (false, true) => f64::NEG_INFINITY,
            (false, false) => self.finite,
        }
    }

    fn is_finite(self) -> bool {
        !self.pos && !self.neg
    }
}

/// A distinct per-sensor statistic value with its probabilities under both
/// hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Atom {
    value: f64,
    p0: f64,
    p1: f64,
}

/// Achievable total-LLR value (ties within rounding merged) with its
/// probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlrCluster {
    pub value: f64,
    pub p0: f64,
    pub p1: f64,
}

/// Exact evaluator for `sum_m llr(sigma_m) > gamma` over `M` sensors.
#[derive(Debug, Clone)]
pub struct LlrSumEngine {
    sensors: usize,
    atoms: Vec<Atom>,
    suffix0: Vec<f64>,
    suffix1: Vec<f64>,
    total0: f64,
    total1: f64,
    finite_min: f64,
    finite_max: f64,
    has_infinite: bool,
    uncertainty: f64,
    distribution: Option<Vec<LlrCluster>>,
}

impl LlrSumEngine {
    pub fn new(local: &LocalLlr, model: &SensingModel, params: &ChannelParams, eps: f64) -> Result<Self> {
        check_epsilon(eps)?;
        let sensors = params.sensors();
        if sensors > ENUMERATION_CAP {
            return Err(Error::EnumerationCap {
                sensors,
                cap: ENUMERATION_CAP,
            });
        }
        let w = support_limit(model, params, Hypothesis::H0, eps)
            .max(support_limit(model, params, Hypothesis::H1, eps));
        let f0 = count_pmf_on(model, params, Hypothesis::H0, w);
        let f1 = count_pmf_on(model, params, Hypothesis::H1, w);

        let mut atoms: Vec<Atom> = (0..=w)
            .map(|s| Atom {
                value: local.value(s as u64),
                p0: f0.mass[s],
                p1: f1.mass[s],
            })
            .filter(|a| a.p0 > 0.0 || a.p1 > 0.0)
            .collect();
        if atoms.iter().any(|a| a.value.is_nan()) {
            return Err(invalid("per-sensor statistic produced NaN"));
        }
        if atoms.iter().all(|a| a.value == f64::NEG_INFINITY) {
            return Err(Error::DegenerateStatistic);
        }
        atoms.sort_by(|a, b| a.value.total_cmp(&b.value));
        // merge bitwise-equal values; CV in particular has at most L of them
        let mut merged: Vec<Atom> = Vec::with_capacity(atoms.len());
        for a in atoms {
            match merged.last_mut() {
                Some(last) if last.value == a.value => {
                    last.p0 += a.p0;
                    last.p1 += a.p1;
                }
                _ => merged.push(a),
            }
        }
        let atoms = merged;

        let n = atoms.len();
        let mut suffix0 = vec![0.0; n + 1];
        let mut suffix1 = vec![0.0; n + 1];
        for j in (0..n).rev() {
            suffix0[j] = suffix0[j + 1] + atoms[j].p0;
            suffix1[j] = suffix1[j + 1] + atoms[j].p1;
        }
        let finite: Vec<f64> = atoms.iter().map(|a| a.value).filter(|v| v.is_finite()).collect();
        let mut engine = Self {
            sensors,
            total0: suffix0[0],
            total1: suffix1[0],
            suffix0,
            suffix1,
            finite_min: finite.first().copied().unwrap_or(0.0),
            finite_max: finite.last().copied().unwrap_or(0.0),
            has_infinite: finite.len() < n,
            atoms,
            uncertainty: sensors as f64 * eps,
            distribution: None,
        };
        let joint = (engine.atoms.len() as f64).powi(sensors as i32);
        if joint <= DISTRIBUTION_CAP as f64 {
            engine.distribution = Some(engine.enumerate_distribution());
        }
        Ok(engine)
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    /// Additive truncation error bound on every probability.
    pub fn uncertainty(&self) -> f64 {
        self.uncertainty
    }

    /// Distinct achievable totals, when the joint support was small enough to
    /// list.
    pub fn distribution(&self) -> Option<&[LlrCluster]> {
        self.distribution.as_deref()
    }

    /// `(Pfa, Pd)` of the rule `total > gamma`.
    pub fn probabilities(&self, gamma: f64) -> (f64, f64) {
        if gamma == f64::NEG_INFINITY {
            return (1.0, 1.0);
        }
        if gamma == f64::INFINITY {
            return (0.0, 0.0);
        }
        if self.sensors == 1 {
            return self.recurse(0, Partial::default(), 1.0, 1.0, gamma);
        }
        // partitions over the first sensor are summed in a fixed order
        let parts: Vec<(f64, f64)> = self
            .atoms
            .par_iter()
            .map(|a| self.recurse(1, Partial::default().push(a.value), a.p0, a.p1, gamma))
            .collect();
        parts.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0, acc.1 + p.1))
    }

    pub fn perf(&self, gamma: f64) -> PerfPoint {
        let (pfa, pd) = self.probabilities(gamma);
        PerfPoint::analytic(Threshold::Llr(gamma), pfa, pd, 1.0 - pd, self.uncertainty)
    }

    fn recurse(&self, depth: usize, partial: Partial, w0: f64, w1: f64, gamma: f64) -> (f64, f64) {
        let remaining = self.sensors - depth;
        if partial.is_finite() && !self.has_infinite {
            let s = partial.finite;
            let r = remaining as f64;
            let margin = 1e-9 * (s.abs() + r * self.finite_min.abs().max(self.finite_max.abs()) + gamma.abs() + 1.0);
            if s + r * self.finite_min > gamma + margin {
                let r = remaining as i32;
                return (w0 * self.total0.powi(r), w1 * self.total1.powi(r));
            }
            if s + r * self.finite_max <= gamma - margin {
                return (0.0, 0.0);
            }
        }
        if remaining == 1 {
            // the total is nondecreasing in the last value, so the accepted
            // atoms form a suffix
            let j = self
                .atoms
                .partition_point(|a| !decide(partial.push(a.value).value(), gamma));
            return (w0 * self.suffix0[j], w1 * self.suffix1[j]);
        }
        let mut acc = (0.0, 0.0);
        for a in &self.atoms {
            if w0 * a.p0 == 0.0 && w1 * a.p1 == 0.0 {
                continue;
            }
            let r = self.recurse(depth + 1, partial.push(a.value), w0 * a.p0, w1 * a.p1, gamma);
            acc.0 += r.0;
            acc.1 += r.1;
        }
        acc
    }

    fn enumerate_distribution(&self) -> Vec<LlrCluster> {
        let n = self.atoms.len();
        let m = self.sensors;
        let mut idx = vec![0usize; m];
        let mut out = Vec::with_capacity(n.pow(m as u32));
        loop {
            let mut partial = Partial::default();
            let (mut p0, mut p1) = (1.0, 1.0);
            for &i in &idx {
                let a = &self.atoms[i];
                partial = partial.push(a.value);
                p0 *= a.p0;
                p1 *= a.p1;
            }
            out.push(LlrCluster {
                value: partial.value(),
                p0,
                p1,
            });
            let mut d = m;
            loop {
                if d == 0 {
                    return merge_clusters(out);
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < n {
                    break;
                }
                idx[d] = 0;
            }
        }
    }

    /// Thresholds separating every pair of adjacent achievable totals, plus
    /// `-inf` and `+inf`; reduced to about `max_points` when larger. Without a
    /// listed distribution a uniform grid over the achievable range is used.
    pub fn thresholds(&self, max_points: Option<usize>) -> Vec<f64> {
        let mut out = vec![f64::NEG_INFINITY];
        match &self.distribution {
            Some(clusters) => {
                let mids = cluster_midpoints(clusters);
                match max_points {
                    Some(cap) if mids.len() > cap => {
                        let lo = self.finite_min * self.sensors as f64;
                        let hi = self.finite_max * self.sensors as f64;
                        for t in uniform_grid(lo, hi, cap) {
                            // snap to the separator just above t
                            let j = mids.partition_point(|&m| m < t).min(mids.len() - 1);
                            if out.last() != Some(&mids[j]) {
                                out.push(mids[j]);
                            }
                        }
                    }
                    _ => out.extend(mids),
                }
            }
            None => {
                let lo = self.finite_min * self.sensors as f64;
                let hi = self.finite_max * self.sensors as f64;
                out.extend(uniform_grid(lo, hi, max_points.unwrap_or(ROC_GRID_POINTS)));
            }
        }
        out.push(f64::INFINITY);
        out.dedup();
        out
    }

    /// Smallest threshold with `Pfa <= target`.
    pub fn calibrate(&self, target: f64) -> f64 {
        if target >= 1.0 {
            return f64::NEG_INFINITY;
        }
        if let Some(clusters) = &self.distribution {
            let mids = cluster_midpoints(clusters);
            // Pfa at separator k is the H0 mass of clusters k+1..
            let mut above = 0.0;
            let mut best = f64::INFINITY;
            for (k, &t) in mids.iter().enumerate().rev() {
                above += clusters[k + 1].p0;
                if above <= target {
                    best = t;
                } else {
                    break;
                }
            }
            return best;
        }
        let (mut lo, mut hi) = (
            self.finite_min * self.sensors as f64 - 1.0,
            self.finite_max * self.sensors as f64 + 1.0,
        );
        if self.probabilities(lo).0 <= target {
            return lo;
        }
        if self.probabilities(hi).0 > target {
            return f64::INFINITY;
        }
        for _ in 0..200 {
            if hi - lo <= 1e-9 * (1.0 + hi.abs()) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.probabilities(mid).0 <= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

fn merge_clusters(mut raw: Vec<LlrCluster>) -> Vec<LlrCluster> {
    raw.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut out: Vec<LlrCluster> = Vec::new();
    let mut anchor = f64::NAN;
    for c in raw {
        match out.last_mut() {
            Some(last) if same_cluster(anchor, c.value) => {
                last.p0 += c.p0;
                last.p1 += c.p1;
                anchor = c.value;
            }
            _ => {
                anchor = c.value;
                out.push(c);
            }
        }
    }
    out
}

fn same_cluster(prev: f64, next: f64) -> bool {
    if prev.is_infinite() || next.is_infinite() {
        return prev == next;
    }
    next - prev <= 1e-9 * (1.0 + next.abs())
}

/// Threshold strictly between consecutive clusters.
fn cluster_midpoints(clusters: &[LlrCluster]) -> Vec<f64> {
    clusters
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].value, w[1].value);
            match (a.is_finite(), b.is_finite()) {
                (true, true) => 0.5 * (a + b),
                (false, true) => b - 1.0,
                (true, false) => a + 1.0,
                (false, false) => 0.0,
            }
        })
        .collect()
}

fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points <= 1 || hi <= lo {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

/// Exact performance of `sum_m llr(sigma_m) > gamma`.
pub fn exact_perf_llr_sum(
    local: &LocalLlr,
    model: &SensingModel,
    params: &ChannelParams,
    gamma: f64,
    eps: f64,
) -> Result<PerfPoint> {
    Ok(LlrSumEngine::new(local, model, params, eps)?.perf(gamma))
}

/// Tail sums `sum_x G(x) H(gamma, base + x N A)` under both hypotheses,
/// with the complementary sum for `Pm`.
fn mixture_tail(sum: &SumSensingPmf, params: &ChannelParams, base: f64, gamma: i64) -> (f64, f64, f64) {
    let n = params.slots() as f64;
    let (mut pfa, mut pd, mut pm) = (0.0, 0.0, 0.0);
    for l in 0..sum.len() {
        let lambda = base + sum.value(l) * n * params.gain();
        let (g0, g1) = (sum.masses(Hypothesis::H0)[l], sum.masses(Hypothesis::H1)[l]);
        if g0 > 0.0 {
            pfa += g0 * poisson_tail(gamma, lambda);
        }
        if g1 > 0.0 {
            pd += g1 * poisson_tail(gamma, lambda);
            pm += g1 * poisson_cdf(gamma, lambda);
        }
    }
    (pfa, pd, pm)
}

/// Optimal STM detector in its sum form, `sum_n y_n > gamma`.
pub fn stm_perf_closed_form(sum: &SumSensingPmf, params: &ChannelParams, gamma: i64) -> PerfPoint {
    let base = params.slots() as f64 * params.noise();
    let (pfa, pd, pm) = mixture_tail(sum, params, base, gamma);
    PerfPoint::analytic(Threshold::Count(gamma), pfa, pd, pm, 0.0)
}

/// MRC detector on DTM: the total count carries `M` independent noise
/// terms.
pub fn mrc_perf_closed_form(sum: &SumSensingPmf, params: &ChannelParams, gamma: i64) -> PerfPoint {
    let base = params.slots() as f64 * sum.sensors() as f64 * params.noise();
    let (pfa, pd, pm) = mixture_tail(sum, params, base, gamma);
    PerfPoint::analytic(Threshold::Count(gamma), pfa, pd, pm, 0.0)
}

/// Per-sensor `(Pfa, Pd, Pm)` of the count test `sigma > local`.
pub fn two_stage_local(model: &SensingModel, params: &ChannelParams, local: i64) -> (f64, f64, f64) {
    let (mut pfa, mut pd, mut pm) = (0.0, 0.0, 0.0);
    for l in 0..model.levels() {
        let lambda = count_mean(model.value(l), params);
        pfa += model.g0()[l] * poisson_tail(local, lambda);
        pd += model.g1()[l] * poisson_tail(local, lambda);
        pm += model.g1()[l] * poisson_cdf(local, lambda);
    }
    (pfa, pd, pm)
}

/// `P(Binomial(n, p) > k)` given both `p` and `q = 1 - p` (each accurate on
/// its own).
fn binomial_upper(n: usize, p: f64, q: f64, k: usize) -> f64 {
    (k + 1..=n).map(|m| binomial_term(n, m, p, q)).sum()
}

fn binomial_term(n: usize, m: usize, p: f64, q: f64) -> f64 {
    let ln_c = ln_factorial(n as u64) - ln_factorial(m as u64) - ln_factorial((n - m) as u64);
    let lp = if m == 0 { 0.0 } else { m as f64 * p.ln() };
    let lq = if m == n { 0.0 } else { (n - m) as f64 * q.ln() };
    (ln_c + lp + lq).exp()
}

/// Two-stage rule: local count tests, then a vote exceeding `global`.
pub fn two_stage_perf(model: &SensingModel, params: &ChannelParams, local: i64, global: usize) -> Result<PerfPoint> {
    let m = params.sensors();
    if global > m {
        return Err(invalid(format!("vote threshold {global} exceeds the {m} sensors")));
    }
    let (pfa_l, pd_l, pm_l) = two_stage_local(model, params, local);
    let qfa = (1.0 - pfa_l).max(0.0);
    let pfa = binomial_upper(m, pfa_l, qfa, global);
    let pd = binomial_upper(m, pd_l, pm_l, global);
    // missed detection: at most `global` votes
    let pm: f64 = (0..=global.min(m)).map(|k| binomial_term(m, k, pd_l, pm_l)).sum();
    Ok(PerfPoint::analytic(
        Threshold::TwoStage { local, global },
        pfa,
        pd,
        pm,
        0.0,
    ))
}

/// Prepared analytic evaluator for one detector, model and channel.
#[derive(Debug, Clone)]
pub struct Analyzer {
    kind: DetectorKind,
    model: SensingModel,
    params: ChannelParams,
    eps: f64,
    engine: Option<LlrSumEngine>,
    sum: Option<SumSensingPmf>,
}

/// Result of threshold calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibrated {
    pub threshold: Threshold,
    pub point: PerfPoint,
    /// `false` when only the never-deciding threshold meets the target.
    pub feasible: bool,
}

impl Analyzer {
    pub fn new(kind: DetectorKind, model: &SensingModel, params: &ChannelParams, eps: f64) -> Result<Self> {
        check_epsilon(eps)?;
        let engine = match kind.local_statistic() {
            Some(stat) => Some(LlrSumEngine::new(&LocalLlr::new(stat, model, params)?, model, params, eps)?),
            None => None,
        };
        let sum = match kind {
            DetectorKind::Mrc | DetectorKind::OptStm => Some(sum_pmf(model, params.sensors())?),
            _ => None,
        };
        Ok(Self {
            kind,
            model: model.clone(),
            params: params.clone(),
            eps,
            engine,
            sum,
        })
    }

    pub fn kind(&self) -> DetectorKind {
        self.kind
    }

    pub fn engine(&self) -> Option<&LlrSumEngine> {
        self.engine.as_ref()
    }

    pub fn perf(&self, threshold: Threshold) -> Result<PerfPoint> {
        match (self.kind, threshold) {
            (DetectorKind::OptStm, Threshold::Count(g)) => {
                Ok(stm_perf_closed_form(self.sum.as_ref().expect("sum pmf"), &self.params, g))
            }
            (DetectorKind::Mrc, Threshold::Count(g)) => {
                Ok(mrc_perf_closed_form(self.sum.as_ref().expect("sum pmf"), &self.params, g))
            }
            (DetectorKind::TwoStage, Threshold::TwoStage { local, global }) => {
                two_stage_perf(&self.model, &self.params, local, global)
            }
            (_, Threshold::Llr(g)) if self.engine.is_some() => Ok(self.engine.as_ref().expect("engine").perf(g)),
            _ => Err(invalid(format!("threshold {threshold:?} does not fit detector {}", self.kind))),
        }
    }

    /// Largest count threshold worth scanning: beyond it both `Pfa` and `Pd`
    /// are below the truncation tolerance.
    fn count_limit(&self) -> i64 {
        let n = self.params.slots() as f64;
        let m = self.params.sensors() as f64;
        let (a, j) = (self.params.gain(), self.params.noise());
        let lambda = match self.kind {
            DetectorKind::OptStm => n * (m * a + j),
            DetectorKind::Mrc => n * m * (a + j),
            _ => n * (a + j),
        };
        poisson_upper_quantile(lambda, self.eps) as i64
    }

    /// Threshold set spanning the detector's achievable operating points,
    /// in increasing order (so `Pfa` and `Pd` are nonincreasing along it).
    pub fn thresholds(&self, max_points: Option<usize>) -> Vec<Threshold> {
        let counts = |top: i64| -> Vec<i64> {
            let span = (top + 2) as usize;
            match max_points {
                Some(cap) if span > cap => {
                    let mut v: Vec<i64> = uniform_grid(-1.0, top as f64, cap).into_iter().map(|t| t.round() as i64).collect();
                    v.dedup();
                    v
                }
                _ => (-1..=top).collect(),
            }
        };
        match self.kind {
            DetectorKind::Mrc | DetectorKind::OptStm => {
                let mut v: Vec<Threshold> = counts(self.count_limit()).into_iter().map(Threshold::Count).collect();
                v.push(Threshold::Count(i64::MAX));
                v
            }
            DetectorKind::TwoStage => {
                let m = self.params.sensors();
                let per = max_points.map(|c| (c / m.max(1)).max(2));
                let locals = {
                    let top = self.count_limit();
                    let span = (top + 2) as usize;
                    match per {
                        Some(cap) if span > cap => {
                            let mut v: Vec<i64> = uniform_grid(-1.0, top as f64, cap).into_iter().map(|t| t.round() as i64).collect();
                            v.dedup();
                            v
                        }
                        _ => (-1..=top).collect::<Vec<i64>>(),
                    }
                };
                let mut v = Vec::new();
                for global in 0..m {
                    v.extend(locals.iter().map(|&local| Threshold::TwoStage { local, global }));
                }
                v.push(Threshold::TwoStage { local: -1, global: m });
                v
            }
            _ => self
                .engine
                .as_ref()
                .expect("engine")
                .thresholds(max_points)
                .into_iter()
                .map(Threshold::Llr)
                .collect(),
        }
    }

    /// ROC over the given thresholds.
    pub fn roc(&self, thresholds: &[Threshold]) -> Result<Vec<PerfPoint>> {
        thresholds.iter().map(|&t| self.perf(t)).collect()
    }

    /// Smallest threshold whose analytic `Pfa` does not exceed `target`; for
    /// the two-stage rule, the feasible pair with the smallest `Pm`.
    pub fn calibrate(&self, target: f64) -> Result<Calibrated> {
        if !(target > 0.0 && target <= 1.0) {
            return Err(invalid(format!("target false-alarm probability must lie in (0, 1], got {target}")));
        }
        let threshold = match self.kind {
            DetectorKind::Mrc | DetectorKind::OptStm => {
                Threshold::Count(self.smallest_count(target, |g| self.perf(Threshold::Count(g)).map(|p| p.pfa))?)
            }
            DetectorKind::TwoStage => self.calibrate_two_stage(target)?,
            _ => Threshold::Llr(self.engine.as_ref().expect("engine").calibrate(target)),
        };
        let point = self.perf(threshold)?;
        let never = Threshold::never(self.kind, self.params.sensors());
        let feasible = threshold != never
            && !matches!(threshold, Threshold::TwoStage { global, .. } if global == self.params.sensors());
        Ok(Calibrated {
            threshold,
            point,
            feasible,
        })
    }

    fn smallest_count(&self, target: f64, pfa: impl Fn(i64) -> Result<f64>) -> Result<i64> {
        if pfa(-1)? <= target {
            return Ok(-1);
        }
        let mut hi = 0i64;
        while pfa(hi)? > target {
            hi = hi * 2 + 1;
            if hi > 1 << 40 {
                return Ok(i64::MAX);
            }
        }
        let mut lo = -1i64;
        // pfa(lo) > target >= pfa(hi)
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if pfa(mid)? <= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    fn calibrate_two_stage(&self, target: f64) -> Result<Threshold> {
        let m = self.params.sensors();
        let mut best = Threshold::TwoStage { local: -1, global: m };
        let mut best_pm = 1.0;
        for global in 0..m {
            let local = self.smallest_count(target, |l| {
                two_stage_perf(&self.model, &self.params, l, global).map(|p| p.pfa)
            })?;
            let t = Threshold::TwoStage { local, global };
            let pm = self.perf(t)?.pm;
            if pm < best_pm {
                best_pm = pm;
                best = t;
            }
        }
        Ok(best)
    }
}

/// ROC of `kind` over `thresholds` (the achievable set when `None`).
pub fn roc_curve(
    kind: DetectorKind,
    model: &SensingModel,
    params: &ChannelParams,
    thresholds: Option<&[Threshold]>,
) -> Result<Vec<PerfPoint>> {
    let a = Analyzer::new(kind, model, params, DEFAULT_EPSILON)?;
    match thresholds {
        Some(t) => a.roc(t),
        None => a.roc(&a.thresholds(Some(MAX_EXACT_POINTS))),
    }
}

/// Conservative threshold meeting `target` false-alarm probability.
pub fn calibrate_threshold(
    kind: DetectorKind,
    model: &SensingModel,
    params: &ChannelParams,
    target: f64,
) -> Result<Threshold> {
    let c = Analyzer::new(kind, model, params, DEFAULT_EPSILON)?.calibrate(target)?;
    if c.feasible {
        Ok(c.threshold)
    } else {
        Err(Error::Infeasible {
            target,
            best: c.point.pfa,
        })
    }
}

/// Per-sensor statistic as a plain function on counts; used by the bound
/// computations and by tests that cross-check analytic paths.
pub fn local_values(stat: LocalStatistic, model: &SensingModel, params: &ChannelParams, max_count: usize) -> Result<Vec<f64>> {
    let local = LocalLlr::new(stat, model, params)?;
    Ok((0..=max_count).map(|s| local.value(s as u64)).collect())
}

/// Common truncation point for both hypotheses.
pub fn count_support(model: &SensingModel, params: &ChannelParams, eps: f64) -> Result<usize> {
    check_epsilon(eps)?;
    Ok(support_limit(model, params, Hypothesis::H0, eps).max(support_limit(model, params, Hypothesis::H1, eps)))
}

/// Both hypotheses' count PMFs on a shared support.
pub fn count_pmfs(model: &SensingModel, params: &ChannelParams, eps: f64) -> Result<(CountPmf, CountPmf)> {
    let w = count_support(model, params, eps)?;
    Ok((
        count_pmf_on(model, params, Hypothesis::H0, w),
        count_pmf_on(model, params, Hypothesis::H1, w),
    ))
}
