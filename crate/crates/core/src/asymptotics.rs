//! Chernoff bounds and error exponents for LLR-sum detectors.
//!
//! For a per-sensor statistic `l(sigma)` and `M` i.i.d. sensors,
//!
//! ```text
//! Pfa <= exp(-M Ex0(s) - s gamma),  s > 0
//! Pm  <= exp(-M Ex1(s) - s gamma),  s < 0
//! Ex_i(s) = -ln sum_w exp(s l(w)) f_i(w)
//! ```
//!
//! The optimal `s` is found by direct minimisation of the bound.

use crate::analysis::{ln_poisson_pmf, poisson_upper_quantile, CountPmf};
use crate::channel::ChannelParams;
use crate::detectors::{LocalLlr, LocalStatistic};
use crate::error::{invalid, Error, Result};
use crate::math::{golden_section_min, ln_mass, log_sum_exp};
use crate::sensing::{Hypothesis, SensingModel};

/// Tail probability used to size the support of the tilted sums.
pub const BOUND_TAIL: f64 = 1e-300;

/// Golden-section tolerance on `s`.
pub const S_TOLERANCE: f64 = 1e-7;

/// Largest `|s|` explored before a minimiser is declared on the boundary.
pub const S_LIMIT: f64 = 1024.0;

const COARSE_POINTS: usize = 64;

/// `Ex_i(s)` for a count PMF and per-count LLR values on the same support.
pub fn chernoff_exponent(s: f64, pmf: &CountPmf, llr: &[f64]) -> Result<f64> {
    if llr.len() < pmf.mass().len() {
        return Err(invalid("LLR values must cover the PMF support"));
    }
    let ln_f: Vec<f64> = pmf.mass().iter().map(|&p| ln_mass(p)).collect();
    exponent_from_logs(s, &ln_f, llr)
}

fn exponent_from_logs(s: f64, ln_f: &[f64], llr: &[f64]) -> Result<f64> {
    let mut terms = Vec::with_capacity(ln_f.len());
    for (&lf, &l) in ln_f.iter().zip(llr) {
        if lf == f64::NEG_INFINITY {
            continue;
        }
        let t = if s == 0.0 { 0.0 } else { s * l };
        if t == f64::INFINITY {
            return Err(Error::DivergentExponent { s });
        }
        terms.push(t + lf);
    }
    Ok(-log_sum_exp(&terms))
}

/// Upper bounds `(PfaUpp, PmUpp)` for `M` sensors and threshold `gamma`.
pub fn chernoff_bounds(
    s0: f64,
    s1: f64,
    gamma: f64,
    sensors: usize,
    f0: &CountPmf,
    f1: &CountPmf,
    llr: &[f64],
) -> Result<(f64, f64)> {
    if !(s0 > 0.0) || !(s1 < 0.0) {
        return Err(invalid("Chernoff parameters need s0 > 0 and s1 < 0"));
    }
    let m = sensors as f64;
    let e0 = chernoff_exponent(s0, f0, llr)?;
    let e1 = chernoff_exponent(s1, f1, llr)?;
    Ok((
        (-m * e0 - s0 * gamma).exp().min(1.0),
        (-m * e1 - s1 * gamma).exp().min(1.0),
    ))
}

/// Minimiser of one bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SOptimum {
    /// Optimal Chernoff parameter (positive for `Pfa`, negative for `Pm`).
    pub s: f64,
    /// Natural log of the optimised bound before clamping at `1`.
    pub ln_bound: f64,
    /// `true` when the minimum sits at `|s| -> 0` or at [`S_LIMIT`].
    pub boundary: bool,
}

impl SOptimum {
    pub fn bound(&self) -> f64 {
        self.ln_bound.exp().min(1.0)
    }
}

/// Optimised parameters for both bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPair {
    pub pfa: SOptimum,
    pub pm: SOptimum,
}

/// Per-sensor statistic with both hypotheses' count distributions in the
/// log domain.
#[derive(Debug, Clone)]
pub struct ChernoffProblem {
    llr: Vec<f64>,
    ln_f0: Vec<f64>,
    ln_f1: Vec<f64>,
}

impl ChernoffProblem {
    /// Builds the problem for a per-sensor statistic, with a support wide
    /// enough for tilted sums at moderate `|s|`.
    pub fn new(stat: LocalStatistic, model: &SensingModel, params: &ChannelParams) -> Result<Self> {
        let local = LocalLlr::new(stat, model, params)?;
        let n = params.slots() as f64;
        let means: Vec<f64> = (0..model.levels())
            .map(|l| n * (model.value(l) * params.gain() + params.noise()))
            .collect();
        let top = means.iter().copied().fold(0.0, f64::max);
        let w = 2 * poisson_upper_quantile(top, BOUND_TAIL) as usize + 16;
        let ln_mix = |h: Hypothesis| -> Vec<f64> {
            let ln_g: Vec<f64> = model.masses(h).iter().map(|&p| ln_mass(p)).collect();
            (0..=w)
                .map(|s| {
                    let terms: Vec<f64> = ln_g
                        .iter()
                        .zip(&means)
                        .map(|(&g, &m)| g + ln_poisson_pmf(s as u64, m))
                        .collect();
                    log_sum_exp(&terms)
                })
                .collect()
        };
        Ok(Self {
            llr: (0..=w).map(|s| local.value(s as u64)).collect(),
            ln_f0: ln_mix(Hypothesis::H0),
            ln_f1: ln_mix(Hypothesis::H1),
        })
    }

    /// Problem on explicit count PMFs (sharing one support) and LLR values.
    pub fn from_pmfs(f0: &CountPmf, f1: &CountPmf, llr: &[f64]) -> Result<Self> {
        let w = f0.mass().len();
        if f1.mass().len() != w || llr.len() < w {
            return Err(invalid("PMFs and LLR values must share one support"));
        }
        Ok(Self {
            llr: llr[..w].to_vec(),
            ln_f0: f0.mass().iter().map(|&p| ln_mass(p)).collect(),
            ln_f1: f1.mass().iter().map(|&p| ln_mass(p)).collect(),
        })
    }

    pub fn llr(&self) -> &[f64] {
        &self.llr
    }

    pub fn exponent(&self, h: Hypothesis, s: f64) -> Result<f64> {
        let ln_f = match h {
            Hypothesis::H0 => &self.ln_f0,
            Hypothesis::H1 => &self.ln_f1,
        };
        exponent_from_logs(s, ln_f, &self.llr)
    }

    /// Mean per-sensor statistic under `h`.
    pub fn mean_llr(&self, h: Hypothesis) -> f64 {
        let ln_f = match h {
            Hypothesis::H0 => &self.ln_f0,
            Hypothesis::H1 => &self.ln_f1,
        };
        ln_f.iter()
            .zip(&self.llr)
            .filter(|(lf, _)| **lf > f64::NEG_INFINITY)
            .map(|(lf, l)| lf.exp() * l)
            .sum()
    }

    /// `(PfaUpp, PmUpp)` at the given parameters.
    pub fn bounds(&self, s0: f64, s1: f64, gamma: f64, sensors: usize) -> Result<(f64, f64)> {
        if !(s0 > 0.0) || !(s1 < 0.0) {
            return Err(invalid("Chernoff parameters need s0 > 0 and s1 < 0"));
        }
        let m = sensors as f64;
        Ok((
            (-m * self.exponent(Hypothesis::H0, s0)? - s0 * gamma).exp().min(1.0),
            (-m * self.exponent(Hypothesis::H1, s1)? - s1 * gamma).exp().min(1.0),
        ))
    }

    /// Log of one bound as a function of `u = |s| > 0`; divergence maps to
    /// `+inf`.
    fn ln_bound(&self, h: Hypothesis, u: f64, gamma: f64, m: f64) -> f64 {
        let s = match h {
            Hypothesis::H0 => u,
            Hypothesis::H1 => -u,
        };
        match self.exponent(h, s) {
            Ok(e) => {
                let v = -m * e - s * gamma;
                if v.is_nan() {
                    f64::INFINITY
                } else {
                    v
                }
            }
            Err(_) => f64::INFINITY,
        }
    }

    fn optimize_one(&self, h: Hypothesis, gamma: f64, sensors: usize) -> SOptimum {
        let m = sensors as f64;
        let f = |u: f64| self.ln_bound(h, u, gamma, m);
        let mut s_max = 4.0;
        let (grid, k) = loop {
            let grid: Vec<f64> = (1..=COARSE_POINTS).map(|i| s_max * i as f64 / COARSE_POINTS as f64).collect();
            let vals: Vec<f64> = grid.iter().map(|&u| f(u)).collect();
            let k = vals
                .iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v < vals[best] { i } else { best });
            if k + 1 < COARSE_POINTS || s_max >= S_LIMIT {
                break (grid, k);
            }
            s_max *= 2.0;
        };
        let lo = if k == 0 { 0.0 } else { grid[k - 1] };
        let hi = if k + 1 < grid.len() { grid[k + 1] } else { grid[k] };
        let u = golden_section_min(f, lo, hi, S_TOLERANCE);
        let (u, v) = if f(grid[k]) < f(u) { (grid[k], f(grid[k])) } else { (u, f(u)) };
        let boundary = u <= 2.0 * S_TOLERANCE || u >= S_LIMIT * (1.0 - 1e-9) || v >= 0.0;
        SOptimum {
            s: match h {
                Hypothesis::H0 => u,
                Hypothesis::H1 => -u,
            },
            ln_bound: v,
            boundary,
        }
    }

    /// Optimal `s0 > 0` and `s1 < 0` for threshold `gamma` and `M` sensors.
    pub fn optimize(&self, gamma: f64, sensors: usize) -> BoundPair {
        BoundPair {
            pfa: self.optimize_one(Hypothesis::H0, gamma, sensors),
            pm: self.optimize_one(Hypothesis::H1, gamma, sensors),
        }
    }

    /// Decay rates of both bounds for a threshold growing as `gamma = theta M`:
    /// `max_s [Ex_i(s) + s theta]` over the matching sign of `s`.
    pub fn rates(&self, theta: f64) -> (SOptimum, SOptimum, f64, f64) {
        let p = self.optimize(theta, 1);
        (p.pfa, p.pm, -p.pfa.ln_bound, -p.pm.ln_bound)
    }

    /// Threshold rate `theta` at which both bounds decay equally fast.
    pub fn equalize(&self) -> Result<Equalized> {
        let mut lo = self.mean_llr(Hypothesis::H0);
        let mut hi = self.mean_llr(Hypothesis::H1);
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(invalid("statistic does not separate the hypotheses in mean"));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let (_, _, r0, r1) = self.rates(mid);
            if r0 < r1 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
                break;
            }
        }
        let theta = 0.5 * (lo + hi);
        let (s0, s1, r0, r1) = self.rates(theta);
        Ok(Equalized {
            theta,
            s0: s0.s,
            s1: s1.s,
            exponent: 0.5 * (r0 + r1),
        })
    }

    /// Exponent curves on a grid of `|s|` values at threshold rate `theta`.
    pub fn curve(&self, s_grid: &[f64], theta: f64) -> Result<ExponentCurve> {
        if s_grid.iter().any(|&u| !(u > 0.0)) {
            return Err(invalid("exponent grid needs positive |s| values"));
        }
        let ex0 = s_grid
            .iter()
            .map(|&u| self.exponent(Hypothesis::H0, u).map(|e| e + u * theta))
            .collect::<Result<Vec<_>>>()?;
        let ex1 = s_grid
            .iter()
            .map(|&u| self.exponent(Hypothesis::H1, -u).map(|e| e - u * theta))
            .collect::<Result<Vec<_>>>()?;
        let (a, b, _, _) = self.rates(theta);
        Ok(ExponentCurve {
            s_grid: s_grid.to_vec(),
            ex0,
            ex1,
            s_star0: a.s,
            s_star1: b.s,
        })
    }
}

/// Equal-rate operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Equalized {
    /// Threshold per sensor.
    pub theta: f64,
    pub s0: f64,
    pub s1: f64,
    /// Common decay rate of both bounds.
    pub exponent: f64,
}

/// Exponents as functions of `|s|`, including the threshold-rate term.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentCurve {
    pub s_grid: Vec<f64>,
    /// `Ex0(|s|) + |s| theta`.
    pub ex0: Vec<f64>,
    /// `Ex1(-|s|) - |s| theta`.
    pub ex1: Vec<f64>,
    pub s_star0: f64,
    pub s_star1: f64,
}

/// Optimal Chernoff parameters for explicit PMFs.
pub fn optimize_s(f0: &CountPmf, f1: &CountPmf, llr: &[f64], gamma: f64, sensors: usize) -> Result<BoundPair> {
    Ok(ChernoffProblem::from_pmfs(f0, f1, llr)?.optimize(gamma, sensors))
}
