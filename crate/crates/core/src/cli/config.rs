//! Experiment configuration files.
//!
//! A config is a JSON object; unknown keys are rejected at every level.
//! See the README for the full schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, DiffusionGeometry};
use crate::detectors::{DetectorKind, Threshold};
use crate::montecarlo::{ChannelMode, SweepAxis};
use crate::sensing::SensingSpec;

/// Default noise mean `J`.
pub const DEFAULT_NOISE: f64 = 4.0;
/// Default slot duration (s).
pub const DEFAULT_SLOT: f64 = 100e-6;
/// Default Monte Carlo trials per hypothesis.
pub const DEFAULT_TRIALS: u64 = 1_000_000;
/// Default number of ROC thresholds per detector.
pub const DEFAULT_MAX_POINTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Roc,
    Sweep,
    Exponent,
    BoundVsM,
    Validate,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Roc => "roc",
            ExperimentKind::Sweep => "sweep",
            ExperimentKind::Exponent => "exponent",
            ExperimentKind::BoundVsM => "bound_vs_m",
            ExperimentKind::Validate => "validate",
        }
    }
}

/// Diffusion geometry; the slot duration comes from the channel block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub r1: f64,
    pub r2: f64,
    pub diffusion: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
}

/// Channel block. Exactly one of `gain`, `cir` and `geometry` is given;
/// the last two need `a_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cir: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometryConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_max: Option<f64>,
    #[serde(default = "default_noise")]
    pub noise: f64,
    pub slots: usize,
    pub sensors: usize,
    #[serde(default = "default_slot")]
    pub slot_duration: f64,
    #[serde(default)]
    pub mode: ChannelMode,
}

fn default_noise() -> f64 {
    DEFAULT_NOISE
}

fn default_slot() -> f64 {
    DEFAULT_SLOT
}

fn default_trials() -> u64 {
    DEFAULT_TRIALS
}

fn default_max_points() -> usize {
    DEFAULT_MAX_POINTS
}

/// One threshold as written in a config: a number, or `[local, global]`
/// for the two-stage rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThresholdValue {
    Scalar(f64),
    Pair(i64, usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentConfig {
    /// Gains `A` to evaluate; the channel gain when empty.
    #[serde(default)]
    pub gains: Vec<f64>,
    /// Grid of `|s|` values.
    pub s_grid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    /// Gains `A`; the channel gain when empty.
    #[serde(default)]
    pub gains: Vec<f64>,
    pub sensors: Vec<usize>,
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Output file stem; defaults to the config file stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub experiment: ExperimentKind,
    pub seed: u64,
    /// Trials per hypothesis; 0 skips Monte Carlo where that is optional.
    #[serde(default = "default_trials")]
    pub trials: u64,
    pub sensing: SensingSpec,
    pub channel: ChannelConfig,
    #[serde(default)]
    pub detectors: Vec<DetectorKind>,
    /// Explicit thresholds per detector name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<std::collections::BTreeMap<DetectorKind, Vec<ThresholdValue>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_pfa: Option<f64>,
    /// Thresholds per detector when none are listed.
    #[serde(default = "default_max_points")]
    pub max_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exponent: Option<ExponentConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_vs_m: Option<BoundConfig>,
}

/// Config problem detected before any computation.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

impl ExperimentConfig {
    /// Reads a config, or the config echoed in a run manifest.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if cfg.id.is_none() {
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            cfg.id = Some(stem.trim_end_matches(".manifest").to_string());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(format!("malformed JSON: {e}")))?;
        let value = match value {
            serde_json::Value::Object(mut map) if map.contains_key("tool") && map.contains_key("config") => {
                map.remove("config").expect("checked")
            }
            v => v,
        };
        serde_json::from_value(value).map_err(|e| bad(format!("invalid config: {e}")))
    }

    pub fn id(&self) -> &str {
        self.id.as_deref().unwrap_or("run")
    }

    /// Structural checks that do not depend on the numerics.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(id) = &self.id {
            if id.is_empty() || id.contains(['/', '\\']) {
                return Err(bad(format!("id {id:?} is not a plain file stem")));
            }
        }
        let defaults_to_mrc = matches!(self.experiment, ExperimentKind::Exponent | ExperimentKind::BoundVsM);
        if self.detectors.is_empty() && !defaults_to_mrc {
            return Err(bad("the detector list is empty"));
        }
        let mut seen = self.detectors.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.detectors.len() {
            return Err(bad("detectors are listed more than once"));
        }
        let sources = [
            self.channel.gain.is_some(),
            self.channel.cir.is_some(),
            self.channel.geometry.is_some(),
        ];
        if sources.iter().filter(|&&b| b).count() != 1 {
            return Err(bad("the channel needs exactly one of gain, cir or geometry"));
        }
        if self.channel.gain.is_none() && self.channel.a_max.is_none() {
            return Err(bad("cir and geometry channels need a_max"));
        }
        if self.channel.gain.is_some() && self.channel.a_max.is_some() {
            return Err(bad("a_max only applies to cir and geometry channels"));
        }
        if let Some(t) = self.target_pfa {
            if !(t > 0.0 && t <= 1.0) {
                return Err(bad(format!("target_pfa must lie in (0, 1], got {t}")));
            }
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e < 1.0) {
                return Err(bad(format!("epsilon must lie in (0, 1), got {e}")));
            }
        }
        if self.max_points < 2 {
            return Err(bad("max_points must be at least 2"));
        }
        if let Some(map) = &self.thresholds {
            for (kind, list) in map {
                if !self.detectors.contains(kind) {
                    return Err(bad(format!("thresholds given for {kind}, which is not in the detector list")));
                }
                for &t in list {
                    self.threshold_for(*kind, t)?;
                }
            }
        }
        let need = |present: bool, what: &str| {
            if present {
                Ok(())
            } else {
                Err(bad(format!("{} experiments need {what}", self.experiment.as_str())))
            }
        };
        match self.experiment {
            ExperimentKind::Roc => Ok(()),
            ExperimentKind::Sweep => {
                need(self.sweep.as_ref().is_some_and(|s| !s.values.is_empty()), "a sweep block with values")?;
                need(self.target_pfa.is_some(), "target_pfa")?;
                need(self.trials > 0, "trials > 0")
            }
            ExperimentKind::Exponent => {
                need(self.exponent.as_ref().is_some_and(|e| !e.s_grid.is_empty()), "an exponent block with s_grid")?;
                self.check_llr_sum_detectors()
            }
            ExperimentKind::BoundVsM => {
                need(
                    self.bound_vs_m.as_ref().is_some_and(|b| !b.sensors.is_empty()),
                    "a bound_vs_m block with sensors",
                )?;
                need(self.trials > 0, "trials > 0")?;
                self.check_llr_sum_detectors()
            }
            ExperimentKind::Validate => need(self.trials > 0, "trials > 0"),
        }
    }

    fn check_llr_sum_detectors(&self) -> Result<(), ConfigError> {
        for &k in &self.detectors {
            if k.local_statistic().is_none() && k != DetectorKind::Mrc {
                return Err(bad(format!("{k} is not a sum of per-sensor statistics")));
            }
        }
        Ok(())
    }

    /// Detectors for bound experiments, MRC when none are listed.
    pub fn bound_detectors(&self) -> Vec<DetectorKind> {
        if self.detectors.is_empty() {
            vec![DetectorKind::Mrc]
        } else {
            self.detectors.clone()
        }
    }

    /// Converts a config threshold into the detector's threshold type.
    pub fn threshold_for(&self, kind: DetectorKind, t: ThresholdValue) -> Result<Threshold, ConfigError> {
        let int = |v: f64| {
            if v.fract() == 0.0 && v >= -1.0 && v < 9.2e18 {
                Ok(v as i64)
            } else {
                Err(bad(format!("{kind} needs integer count thresholds >= -1, got {v}")))
            }
        };
        match (kind, t) {
            (DetectorKind::Mrc | DetectorKind::OptStm, ThresholdValue::Scalar(v)) => Ok(Threshold::Count(int(v)?)),
            (DetectorKind::TwoStage, ThresholdValue::Pair(l, g)) if l >= -1 => Ok(Threshold::TwoStage { local: l, global: g }),
            (DetectorKind::TwoStage, _) => Err(bad("two_stage thresholds are [local, global] pairs")),
            (_, ThresholdValue::Scalar(v)) if !v.is_nan() => Ok(Threshold::Llr(v)),
            _ => Err(bad(format!("{kind} needs scalar LLR thresholds"))),
        }
    }

    pub fn explicit_thresholds(&self, kind: DetectorKind) -> Option<Vec<Threshold>> {
        let list = self.thresholds.as_ref()?.get(&kind)?;
        Some(list.iter().map(|&t| self.threshold_for(kind, t).expect("validated")).collect())
    }

    /// Channel parameters at the configured gain.
    pub fn channel_params(&self) -> crate::Result<ChannelParams> {
        let c = &self.channel;
        if let Some(gain) = c.gain {
            ChannelParams::steady(gain, c.noise, c.slots, c.sensors)
        } else if let Some(h) = &c.cir {
            ChannelParams::from_cir(h.clone(), c.a_max.unwrap_or(0.0), c.noise, c.slots, c.sensors)
        } else {
            let g = c.geometry.expect("validated");
            let k_max = g
                .k_max
                .unwrap_or_else(|| DiffusionGeometry::auto_k_max(g.r1, g.r2, g.diffusion, c.slot_duration));
            let geom = DiffusionGeometry {
                r1: g.r1,
                r2: g.r2,
                diffusion: g.diffusion,
                slot: c.slot_duration,
                k_max,
            };
            ChannelParams::from_geometry(&geom, c.a_max.unwrap_or(0.0), c.noise, c.slots, c.sensors)
        }
    }
}
