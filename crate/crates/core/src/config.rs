//! Run configuration: one TOML document with every default made explicit.

use crate::decomp::DecompSettings;
use crate::error::{Error, Result};
use crate::perturb::{Variant, FRAME_TOLERANCE};
use crate::stage::{Ansatz, InitialSpec};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Grid block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub points_per_axis: usize,
    pub radius: f64,
    /// Upper bound μ for the total domain shrink Σℓ_q.
    pub margin: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { points_per_axis: 2048, radius: 0.2, margin: 0.1 }
    }
}

/// Tolerances and guards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub theta: f64,
    pub sigma1: f64,
    pub sigma_floor: f64,
    pub frame_tol: f64,
    /// Continue (with a warning) when ‖h − Id‖ exceeds θ.
    pub continue_on_theta: bool,
    /// Treat a violated bound4 as infeasible; when false it is reported only.
    pub enforce_bound4: bool,
}

impl Default for Tolerances {
    fn default() -> Self {
        let d = DecompSettings::default();
        Self {
            theta: 0.1,
            sigma1: d.sigma1,
            sigma_floor: d.sigma_floor,
            frame_tol: FRAME_TOLERANCE,
            continue_on_theta: true,
            enforce_bound4: true,
        }
    }
}

/// A full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub variant: Variant,
    pub stages: usize,
    pub kallen_steps: usize,
    pub seed: u64,
    pub output: String,
    /// Points per tile core; bounds peak memory.
    pub tile_points: usize,
    /// Exponent α' of the Hölder trend; absent means 0.9·α/b.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_prime: Option<f64>,
    pub ansatz: Ansatz,
    pub grid: GridConfig,
    pub initial: InitialSpec,
    pub tolerances: Tolerances,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 2,
            variant: Variant::Strain,
            stages: 1,
            kallen_steps: 5,
            seed: 0,
            output: "out".into(),
            tile_points: 1 << 18,
            alpha_prime: None,
            ansatz: Ansatz::default(),
            grid: GridConfig::default(),
            initial: InitialSpec::default(),
            tolerances: Tolerances::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Toml(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn alpha_prime(&self) -> f64 {
        self.alpha_prime.unwrap_or(0.9 * self.ansatz.alpha / self.ansatz.b)
    }

    pub fn decomp_settings(&self) -> DecompSettings {
        DecompSettings {
            sigma1: self.tolerances.sigma1,
            sigma_floor: self.tolerances.sigma_floor,
            ..DecompSettings::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let c = RunConfig::default();
        let text = c.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn partial_config_takes_defaults() {
        let c = RunConfig::from_toml("stages = 2\n[ansatz]\na = 20.0\n[grid]\nradius = 0.1\n").unwrap();
        assert_eq!(c.stages, 2);
        assert_eq!(c.ansatz.a, 20.0);
        assert_eq!(c.ansatz.b, 1.05);
        assert_eq!(c.grid.radius, 0.1);
        assert_eq!(c.grid.points_per_axis, 2048);
        assert_eq!(c.tolerances, Tolerances::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut text = RunConfig::default().to_toml().unwrap();
        text.insert_str(0, "bogus = 1\n");
        assert!(RunConfig::from_toml(&text).is_err());
    }
}
