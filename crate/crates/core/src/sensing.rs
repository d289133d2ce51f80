//! Sensor-side models: the quantized sensed-value distributions under each
//! hypothesis, their hard-decision reduction, sampling, and the distribution
//! of the sum of all sensed values used by same-molecule reporting.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

const MASS_TOL: f64 = 1e-12;

/// Which hypothesis generated an observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    /// Normal state.
    H0,
    /// Abnormal state.
    H1,
}

impl Hypothesis {
    pub const BOTH: [Hypothesis; 2] = [Hypothesis::H0, Hypothesis::H1];

    pub fn index(self) -> usize {
        match self {
            Hypothesis::H0 => 0,
            Hypothesis::H1 => 1,
        }
    }
}

/// Sensed-value distributions `g0`, `g1` on the grid `{0, 1/(L-1), ..., 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensingModel {
    levels: usize,
    g0: Vec<f64>,
    g1: Vec<f64>,
}

impl SensingModel {
    /// Builds a model from explicit masses. Both vectors must have the same
    /// length `L >= 2`, be nonnegative, and sum to one within `1e-12`.
    pub fn from_masses(g0: Vec<f64>, g1: Vec<f64>) -> Result<Self> {
        if g0.len() < 2 || g0.len() != g1.len() {
            return Err(invalid(format!(
                "mass vectors must share a length of at least 2 (got {} and {})",
                g0.len(),
                g1.len()
            )));
        }
        for (name, g) in [("g0", &g0), ("g1", &g1)] {
            if g.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(invalid(format!("{name} has a negative or non-finite mass")));
            }
            let total: f64 = g.iter().sum();
            if (total - 1.0).abs() > MASS_TOL {
                return Err(invalid(format!("{name} sums to {total}, not 1")));
            }
        }
        Ok(Self { levels: g0.len(), g0, g1 })
    }

    /// Exponential-family sensing, `g_i(x) ∝ exp(b_i x)` on an `L`-level grid.
    pub fn soft(levels: usize, b0: f64, b1: f64) -> Result<Self> {
        if levels < 2 {
            return Err(invalid(format!("need at least 2 quantization levels, got {levels}")));
        }
        if !b0.is_finite() || !b1.is_finite() {
            return Err(invalid("exponential sensing slopes must be finite"));
        }
        let grid = grid(levels);
        let normalized = |b: f64| {
            // shift by the largest exponent so large |b| cannot overflow
            let top = grid.iter().map(|&x| b * x).fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = grid.iter().map(|&x| (b * x - top).exp()).collect();
            let z: f64 = w.iter().sum();
            w.into_iter().map(|v| v / z).collect::<Vec<_>>()
        };
        Self::from_masses(normalized(b0), normalized(b1))
    }

    /// Noise-free sensors: all mass at 0 under H0 and at 1 under H1.
    pub fn ideal(levels: usize) -> Result<Self> {
        if levels < 2 {
            return Err(invalid(format!("need at least 2 quantization levels, got {levels}")));
        }
        let mut g0 = vec![0.0; levels];
        let mut g1 = vec![0.0; levels];
        g0[0] = 1.0;
        g1[levels - 1] = 1.0;
        Self::from_masses(g0, g1)
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Grid value at index `l`, i.e. `l / (L - 1)`.
    pub fn value(&self, l: usize) -> f64 {
        l as f64 / (self.levels - 1) as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        grid(self.levels)
    }

    pub fn masses(&self, h: Hypothesis) -> &[f64] {
        match h {
            Hypothesis::H0 => &self.g0,
            Hypothesis::H1 => &self.g1,
        }
    }

    pub fn g0(&self) -> &[f64] {
        &self.g0
    }

    pub fn g1(&self) -> &[f64] {
        &self.g1
    }

    /// Mean sensed value under `h`.
    pub fn mean(&self, h: Hypothesis) -> f64 {
        self.masses(h).iter().enumerate().map(|(l, p)| p * self.value(l)).sum()
    }

    /// Whether `g1(x)/g1(x') >= g0(x)/g0(x')` for every `x > x'`, the
    /// condition under which the per-sensor LLR is nondecreasing in the
    /// received count.
    pub fn satisfies_ratio_condition(&self) -> bool {
        ratio_condition(&self.g0, &self.g1)
    }
}

/// Declarative description of a sensing model, as read from experiment
/// configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SensingSpec {
    /// `g_i(x) ∝ exp(b_i x)`.
    Soft {
        levels: usize,
        #[serde(default = "default_b0")]
        b0: f64,
        #[serde(default = "default_b1")]
        b1: f64,
    },
    /// Hard decisions obtained by thresholding a soft model at 0.5.
    HardFromSoft {
        levels: usize,
        #[serde(default = "default_b0")]
        b0: f64,
        #[serde(default = "default_b1")]
        b1: f64,
    },
    /// Binary sensors with false-alarm rate `p0` and miss rate `p1`.
    Hard { p0: f64, p1: f64 },
    /// Explicit masses.
    Masses { g0: Vec<f64>, g1: Vec<f64> },
    /// Noise-free sensors.
    Ideal { levels: usize },
}

fn default_b0() -> f64 {
    -2.5
}

fn default_b1() -> f64 {
    3.5
}

impl SensingSpec {
    pub fn build(&self) -> Result<SensingModel> {
        match self {
            SensingSpec::Soft { levels, b0, b1 } => SensingModel::soft(*levels, *b0, *b1),
            SensingSpec::HardFromSoft { levels, b0, b1 } => {
                Ok(hard_from_soft(&SensingModel::soft(*levels, *b0, *b1)?).to_model())
            }
            SensingSpec::Hard { p0, p1 } => Ok(HardSensingModel::new(*p0, *p1)?.to_model()),
            SensingSpec::Masses { g0, g1 } => SensingModel::from_masses(g0.clone(), g1.clone()),
            SensingSpec::Ideal { levels } => SensingModel::ideal(*levels),
        }
    }

    /// Same family with a different number of levels.
    pub fn with_levels(&self, new_levels: usize) -> Result<Self> {
        match self {
            SensingSpec::Soft { b0, b1, .. } => Ok(SensingSpec::Soft {
                levels: new_levels,
                b0: *b0,
                b1: *b1,
            }),
            SensingSpec::HardFromSoft { b0, b1, .. } => Ok(SensingSpec::HardFromSoft {
                levels: new_levels,
                b0: *b0,
                b1: *b1,
            }),
            SensingSpec::Ideal { .. } => Ok(SensingSpec::Ideal { levels: new_levels }),
            _ => Err(invalid("the number of levels is fixed for hard and explicit sensing models")),
        }
    }
}

/// Grid `{l/(L-1) : l = 0..L-1}`.
pub fn grid(levels: usize) -> Vec<f64> {
    let d = (levels - 1) as f64;
    (0..levels).map(|l| l as f64 / d).collect()
}

/// Cross-multiplied monotone-likelihood-ratio check
/// `g1[i] g0[j] - g1[j] g0[i] >= 0` for all `i > j`.
pub fn ratio_condition(g0: &[f64], g1: &[f64]) -> bool {
    for i in 0..g0.len() {
        for j in 0..i {
            let lhs = g1[i] * g0[j];
            let rhs = g1[j] * g0[i];
            if lhs - rhs < -1e-14 * lhs.max(rhs) {
                return false;
            }
        }
    }
    true
}

/// Per-sensor hard-decision error rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardSensingModel {
    /// False-alarm probability at a sensor.
    pub p0: f64,
    /// Missed-detection probability at a sensor.
    pub p1: f64,
}

impl HardSensingModel {
    pub fn new(p0: f64, p1: f64) -> Result<Self> {
        for (name, p) in [("p0", p0), ("p1", p1)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(format!("{name} = {p} is not a probability")));
            }
        }
        Ok(Self { p0, p1 })
    }

    /// The equivalent two-level soft model.
    pub fn to_model(self) -> SensingModel {
        SensingModel {
            levels: 2,
            g0: vec![1.0 - self.p0, self.p0],
            g1: vec![self.p1, 1.0 - self.p1],
        }
    }
}

/// Hard-decision rates induced by thresholding a soft model at 0.5, with
/// half of any mass sitting exactly on 0.5 counted as an error.
///
/// For even `L` the value 0.5 is not on the grid and contributes nothing.
pub fn hard_from_soft(model: &SensingModel) -> HardSensingModel {
    let d = model.levels - 1;
    let mut p0 = 0.0;
    let mut p1 = 0.0;
    for l in 0..model.levels {
        // compare 2l with L-1 in integers so 0.5 is detected exactly
        match (2 * l).cmp(&d) {
            std::cmp::Ordering::Greater => p0 += model.g0[l],
            std::cmp::Ordering::Less => p1 += model.g1[l],
            std::cmp::Ordering::Equal => {
                p0 += 0.5 * model.g0[l];
                p1 += 0.5 * model.g1[l];
            }
        }
    }
    HardSensingModel { p0, p1 }
}

/// Reusable i.i.d. sampler of grid indices for both hypotheses.
#[derive(Debug, Clone)]
pub struct SensingSampler {
    index: [WeightedIndex<f64>; 2],
}

impl SensingSampler {
    pub fn new(model: &SensingModel) -> Self {
        let build = |g: &[f64]| WeightedIndex::new(g.iter().copied()).expect("validated masses");
        Self {
            index: [build(&model.g0), build(&model.g1)],
        }
    }

    /// Draws one grid index from `g_h`.
    pub fn sample_index<R: Rng + ?Sized>(&self, h: Hypothesis, rng: &mut R) -> usize {
        self.index[h.index()].sample(rng)
    }
}

/// Draws `sensors` i.i.d. sensed values under `h`. `sensors == 0` gives an
/// empty vector.
pub fn sample_sensing<R: Rng + ?Sized>(
    model: &SensingModel,
    h: Hypothesis,
    sensors: usize,
    rng: &mut R,
) -> Vec<f64> {
    let sampler = SensingSampler::new(model);
    (0..sensors)
        .map(|_| model.value(sampler.sample_index(h, rng)))
        .collect()
}

/// Distribution of the sum of `M` i.i.d. sensed values, supported on
/// `{l/(L-1) : l = 0..M(L-1)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumSensingPmf {
    levels: usize,
    sensors: usize,
    g0: Vec<f64>,
    g1: Vec<f64>,
}

impl SumSensingPmf {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn sensors(&self) -> usize {
        self.sensors
    }

    /// Number of support points, `M(L-1) + 1`.
    pub fn len(&self) -> usize {
        self.g0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g0.is_empty()
    }

    /// Support value at lattice index `l`.
    pub fn value(&self, l: usize) -> f64 {
        l as f64 / (self.levels - 1) as f64
    }

    pub fn masses(&self, h: Hypothesis) -> &[f64] {
        match h {
            Hypothesis::H0 => &self.g0,
            Hypothesis::H1 => &self.g1,
        }
    }
}

/// `M`-fold self-convolution of each sensing distribution.
pub fn sum_pmf(model: &SensingModel, sensors: usize) -> Result<SumSensingPmf> {
    if sensors == 0 {
        return Err(invalid("sum distribution needs at least one sensor"));
    }
    let fold = |g: &[f64]| {
        let mut acc = g.to_vec();
        for _ in 1..sensors {
            acc = convolve(&acc, g);
        }
        acc
    };
    Ok(SumSensingPmf {
        levels: model.levels,
        sensors,
        g0: fold(&model.g0),
        g1: fold(&model.g1),
    })
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}
