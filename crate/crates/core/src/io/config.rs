//! Run configuration: one TOML document with full defaulting, overridable
//! field by field with `section.key=value`.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::synthetic::DoorSetConfig;
use crate::admittance::{AxisParams, ControllerParams, SimConfig};
use crate::alignment::{AlignConfig, DtwMeasure};
use crate::error::{invalid, Error, Result};
use crate::gp::{HeteroConfig, OptConfig};
use crate::policy::{LearnConfig, DIMS};
use crate::se3::DistanceWeights;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentSection {
    pub rotation_weight: f64,
    pub translation_weight: f64,
    pub measure: DtwMeasure,
}

impl Default for AlignmentSection {
    fn default() -> Self {
        Self { rotation_weight: 0.5, translation_weight: 0.5, measure: DtwMeasure::Tci }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySection {
    pub grid_size: usize,
    /// Number of evenly spaced task times written by `query` and `adapt`.
    pub query_points: usize,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self { grid_size: 100, query_points: 101 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeteroSection {
    pub iterations: usize,
    pub min_points: usize,
    pub smoothing_window: usize,
    pub noise_floor: f64,
    pub reoptimize_signal: bool,
}

impl Default for HeteroSection {
    fn default() -> Self {
        let h = HeteroConfig::default();
        Self {
            iterations: h.iterations,
            min_points: h.min_points,
            smoothing_window: h.smoothing_window,
            noise_floor: h.noise_floor,
            reoptimize_signal: h.reoptimize_signal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViaSection {
    /// Variance of position via-points (m²).
    pub position_strength: f64,
    /// Variance of rotation via-points (rad²).
    pub rotation_strength: f64,
}

impl Default for ViaSection {
    fn default() -> Self {
        Self { position_strength: 1e-4, rotation_strength: 1e-4 }
    }
}

impl ViaSection {
    pub fn strengths(&self) -> [f64; DIMS] {
        let (p, r) = (self.position_strength, self.rotation_strength);
        [p, p, p, r, r, r]
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    pub translation: ControllerParams,
    pub rotation: ControllerParams,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForceKind {
    #[default]
    Zero,
    Constant,
    SpringToTruth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    pub force: ForceKind,
    pub constant_force: [f64; DIMS],
    pub spring_gain: f64,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        Self { force: ForceKind::Zero, constant_force: [0.0; DIMS], spring_gain: 200.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub door: DoorSetConfig,
    /// Radius of the held-out door opening used as ground truth.
    pub truth_radius: f64,
    /// Normalized task times of the via-points drawn from the ground truth.
    pub via_times: Vec<f64>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { door: DoorSetConfig::default(), truth_radius: 0.85, via_times: vec![0.25, 0.5, 0.75] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub alignment: AlignmentSection,
    pub policy: PolicySection,
    pub optimizer: OptConfig,
    pub hetero: HeteroSection,
    pub via: ViaSection,
    pub controller: ControllerSection,
    pub simulation: SimConfig,
    pub environment: EnvironmentSection,
    pub data: DataSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            alignment: AlignmentSection::default(),
            policy: PolicySection::default(),
            optimizer: OptConfig::default(),
            hetero: HeteroSection::default(),
            via: ViaSection::default(),
            controller: ControllerSection::default(),
            simulation: SimConfig::default(),
            environment: EnvironmentSection::default(),
            data: DataSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Format(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    /// Applies `section.key=value` assignments. Values are TOML literals;
    /// anything that does not parse as one is taken as a string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut doc: toml::Table = toml::from_str(&self.to_toml()).expect("config round-trips");
        for o in overrides {
            let o = o.as_ref();
            let (path, raw) = o.split_once('=').ok_or_else(|| Error::InvalidInput(format!("override '{o}' lacks '='")))?;
            let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
            let keys: Vec<&str> = path.trim().split('.').collect();
            let (last, parents) = keys.split_last().expect("split yields one item");
            let mut table = &mut doc;
            for k in parents {
                table = table
                    .entry(k.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Error::InvalidInput(format!("override '{o}': '{k}' is not a section")))?;
            }
            table.insert(last.to_string(), value);
        }
        let c: RunConfig = doc.try_into().map_err(|e: toml::de::Error| Error::InvalidInput(format!("override: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.weights()?;
        if self.policy.grid_size < 2 || self.policy.query_points < 2 {
            return invalid("policy grid and query sizes must be at least 2");
        }
        if self.optimizer.starts == 0 {
            return invalid("optimizer needs at least one start");
        }
        let bounds_ok = |b: (f64, f64)| b.0 > 0.0 && b.0 <= b.1;
        if !bounds_ok(self.optimizer.signal_std_bounds) || !bounds_ok(self.optimizer.noise_std_bounds) {
            return invalid("hyperparameter bounds must be positive and ordered");
        }
        if self.optimizer.length_scale_bounds.is_some_and(|b| !bounds_ok(b)) {
            return invalid("length-scale bounds must be positive and ordered");
        }
        if !(self.hetero.noise_floor > 0.0) || self.hetero.iterations == 0 {
            return invalid("heteroscedastic fit needs a positive noise floor and at least one iteration");
        }
        if self.via.strengths().iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return invalid("via-point strengths must be positive");
        }
        self.axis_params().validate()?;
        self.simulation.validate()?;
        self.data.door.validate()?;
        if !(self.data.truth_radius > 0.0) || self.data.via_times.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return invalid("ground-truth radius must be positive and via times within [0, 1]");
        }
        Ok(())
    }

    pub fn weights(&self) -> Result<DistanceWeights> {
        DistanceWeights::new(self.alignment.rotation_weight, self.alignment.translation_weight)
    }

    pub fn learn_config(&self) -> Result<LearnConfig> {
        let opt = OptConfig { seed: self.seed, ..self.optimizer.clone() };
        let hetero = HeteroConfig {
            iterations: self.hetero.iterations,
            min_points: self.hetero.min_points,
            smoothing_window: self.hetero.smoothing_window,
            noise_floor: self.hetero.noise_floor,
            reoptimize_signal: self.hetero.reoptimize_signal,
            opt,
        };
        Ok(LearnConfig::new(
            self.policy.grid_size,
            self.weights()?,
            AlignConfig { measure: self.alignment.measure },
            hetero,
        ))
    }

    pub fn axis_params(&self) -> AxisParams {
        AxisParams::split(self.controller.translation, self.controller.rotation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(RunConfig::from_toml("").unwrap(), c);
        assert_eq!(c.hash(), RunConfig::default().hash());
    }

    #[test]
    fn overrides() {
        let c = RunConfig::default()
            .with_overrides(&["policy.grid_size=50", "alignment.measure=euclidean-pose", "controller.rotation.k_max=400", "seed = 3"])
            .unwrap();
        assert_eq!(c.policy.grid_size, 50);
        assert_eq!(c.alignment.measure, DtwMeasure::EuclideanPose);
        assert_eq!(c.controller.rotation.k_max, 400.0);
        assert_eq!(c.controller.translation.k_max, 500.0);
        assert_eq!(c.seed, 3);
        assert_ne!(c.hash(), RunConfig::default().hash());
    }

    #[test]
    fn invalid_values_rejected() {
        let c = RunConfig::default();
        assert!(c.with_overrides(&["alignment.rotation_weight=0.9"]).is_err());
        assert!(c.with_overrides(&["policy.grid_size=1"]).is_err());
        assert!(c.with_overrides(&["policy.nonexistent=1"]).is_err());
        assert!(c.with_overrides(&["controller.translation.k_min=900"]).is_err());
        assert!(c.with_overrides(&["no_equals_sign"]).is_err());
        assert!(RunConfig::from_toml("[simulation]\ndt = -1.0\n").is_err());
    }
}
