//! Diffusive reporting channel: hitting probabilities of an absorbing
//! spherical receiver and the per-slot Poisson means seen at the fusion
//! center.

use serde::{Deserialize, Serialize};
use libm::{erf, erfc};

use crate::error::{invalid, Result};

/// Upper limit on the automatically chosen CIR length.
pub const MAX_AUTO_TAPS: usize = 10_000;

/// Relative residual tail below which the automatic CIR length stops.
pub const AUTO_TAIL_TOL: f64 = 1e-6;

/// Point transmitter at distance `r1` from the center of an absorbing
/// sphere of radius `r2`, in a medium with diffusion coefficient `diffusion`
/// and slot duration `slot`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionGeometry {
    /// Transmitter to receiver-center distance (m).
    pub r1: f64,
    /// Receiver radius (m).
    pub r2: f64,
    /// Diffusion coefficient (m²/s).
    pub diffusion: f64,
    /// Slot duration (s).
    pub slot: f64,
    /// Index of the last CIR tap kept.
    pub k_max: usize,
}

impl DiffusionGeometry {
    fn validate(&self) -> Result<()> {
        if !(self.r2 > 0.0) || !self.r1.is_finite() {
            return Err(invalid("receiver radius must be positive"));
        }
        if self.r1 < self.r2 {
            return Err(invalid(format!(
                "transmitter at r1 = {} lies inside the receiver of radius {}",
                self.r1, self.r2
            )));
        }
        if !(self.diffusion > 0.0) || !(self.slot > 0.0) {
            return Err(invalid("diffusion coefficient and slot duration must be positive"));
        }
        Ok(())
    }

    /// Fraction of released molecules absorbed within the first `k + 1`
    /// slots: `(r2/r1) erfc((r1 - r2) / sqrt(4 D (k+1) T))`.
    pub fn cumulative_hit(&self, k: usize) -> f64 {
        let d = self.r1 - self.r2;
        let t = (k + 1) as f64 * self.slot;
        (self.r2 / self.r1) * erfc(d / (4.0 * self.diffusion * t).sqrt())
    }

    /// Smallest `k_max` whose residual tail is below [`AUTO_TAIL_TOL`] of the
    /// infinite-horizon total `r2/r1`, capped at [`MAX_AUTO_TAPS`].
    pub fn auto_k_max(r1: f64, r2: f64, diffusion: f64, slot: f64) -> usize {
        let d = r1 - r2;
        let residual = |k: usize| erf(d / (4.0 * diffusion * (k + 1) as f64 * slot).sqrt());
        if residual(MAX_AUTO_TAPS) >= AUTO_TAIL_TOL {
            return MAX_AUTO_TAPS;
        }
        // residual is decreasing in k
        let (mut lo, mut hi) = (0usize, MAX_AUTO_TAPS);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if residual(mid) < AUTO_TAIL_TOL {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        lo
    }
}

/// Hitting probabilities `h_0..=h_{k_max}`.
pub fn hitting_probabilities(geom: &DiffusionGeometry) -> Result<Vec<f64>> {
    geom.validate()?;
    let mut h = Vec::with_capacity(geom.k_max + 1);
    let mut prev = 0.0;
    for k in 0..=geom.k_max {
        let cum = geom.cumulative_hit(k);
        h.push((cum - prev).max(0.0));
        prev = cum;
    }
    Ok(h)
}

/// Reporting-channel parameters shared by all sensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    h: Vec<f64>,
    a_max: f64,
    gain: f64,
    noise: f64,
    slots: usize,
    sensors: usize,
}

impl ChannelParams {
    /// Builds parameters from a CIR `h`; the effective gain is
    /// `A = a_max * sum(h)`.
    pub fn from_cir(h: Vec<f64>, a_max: f64, noise: f64, slots: usize, sensors: usize) -> Result<Self> {
        if h.is_empty() {
            return Err(invalid("CIR needs at least one tap"));
        }
        if h.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(invalid("hitting probabilities must lie in [0, 1]"));
        }
        let total: f64 = h.iter().sum();
        if total > 1.0 + 1e-12 {
            return Err(invalid(format!("hitting probabilities sum to {total} > 1")));
        }
        if !(a_max >= 0.0) || !a_max.is_finite() {
            return Err(invalid("a_max must be finite and nonnegative"));
        }
        Self::check_common(noise, slots, sensors)?;
        Ok(Self {
            gain: a_max * total,
            h,
            a_max,
            noise,
            slots,
            sensors,
        })
    }

    /// Memoryless channel with per-slot gain `A` (a single unit tap with
    /// `a_max = A`).
    pub fn steady(gain: f64, noise: f64, slots: usize, sensors: usize) -> Result<Self> {
        if !(gain >= 0.0) || !gain.is_finite() {
            return Err(invalid("gain A must be finite and nonnegative"));
        }
        Self::from_cir(vec![1.0], gain, noise, slots, sensors)
    }

    /// Channel derived from a diffusion geometry.
    pub fn from_geometry(
        geom: &DiffusionGeometry,
        a_max: f64,
        noise: f64,
        slots: usize,
        sensors: usize,
    ) -> Result<Self> {
        Self::from_cir(hitting_probabilities(geom)?, a_max, noise, slots, sensors)
    }

    fn check_common(noise: f64, slots: usize, sensors: usize) -> Result<()> {
        if !(noise >= 0.0) || !noise.is_finite() {
            return Err(invalid("noise mean J must be finite and nonnegative"));
        }
        if slots == 0 || sensors == 0 {
            return Err(invalid("need at least one slot and one sensor"));
        }
        Ok(())
    }

    pub fn cir(&self) -> &[f64] {
        &self.h
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    /// Effective per-slot gain `A`.
    pub fn gain(&self) -> f64 {
        self.gain
    }

    /// Noise mean `J` per slot and molecule type.
    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Reporting slots `N`.
    pub fn slots(&self) -> usize {
        self.slots
    }

    /// Sensor count `M`.
    pub fn sensors(&self) -> usize {
        self.sensors
    }

    pub fn snr(&self) -> f64 {
        self.gain / self.noise
    }

    /// Same CIR shape rescaled so the effective gain becomes `gain`.
    pub fn with_gain(&self, gain: f64) -> Result<Self> {
        let total: f64 = self.h.iter().sum();
        if total <= 0.0 {
            return Self::steady(gain, self.noise, self.slots, self.sensors);
        }
        Self::from_cir(self.h.clone(), gain / total, self.noise, self.slots, self.sensors)
    }

    pub fn with_noise(&self, noise: f64) -> Result<Self> {
        Self::from_cir(self.h.clone(), self.a_max, noise, self.slots, self.sensors)
    }

    pub fn with_slots(&self, slots: usize) -> Result<Self> {
        Self::from_cir(self.h.clone(), self.a_max, self.noise, slots, self.sensors)
    }

    pub fn with_sensors(&self, sensors: usize) -> Result<Self> {
        Self::from_cir(self.h.clone(), self.a_max, self.noise, self.slots, sensors)
    }
}

/// Steady-state per-slot mean `x A + J` for one sensor's molecule type.
pub fn steady_mean(x: f64, params: &ChannelParams) -> f64 {
    x * params.gain + params.noise
}

/// Per-slot means `J + x a_max sum_{k <= min(n-1, k_max)} h_k` for slots
/// `n = 1..=N`, including the inter-symbol build-up.
pub fn transient_means(x: f64, params: &ChannelParams) -> Vec<f64> {
    transient_gains(params)
        .into_iter()
        .map(|a_n| params.noise + x * a_n)
        .collect()
}

/// Accumulated gains `A_n` for slots `n = 1..=N`.
pub fn transient_gains(params: &ChannelParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(params.slots);
    let mut partial = 0.0;
    for n in 0..params.slots {
        if let Some(&h) = params.h.get(n) {
            partial += h;
        }
        out.push(params.a_max * partial);
    }
    out
}
