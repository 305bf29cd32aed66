//! TOML run configuration. Every section is optional and unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::{FrictionSchedule, Maneuver, ManeuverSpec, Schedules, SimSettings, WindSchedule};
use crate::error::{Error, Result};
use crate::model::VehicleParams;
use crate::synthesis::SynthesisSpec;
use crate::uncertainty::UncertaintyBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleSection {
    /// TOML file holding a `VehicleParams` table; relative to the config file.
    pub file: Option<PathBuf>,
    /// Inline parameters, used when no file is given.
    pub params: VehicleParams,
}

impl Default for VehicleSection {
    fn default() -> Self {
        Self { file: None, params: VehicleParams::nigel() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSection {
    /// Nominal decay-rate bound of the pole-placement controller.
    pub alpha: f64,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self { alpha: -2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub mu_grid: Vec<f64>,
    pub v_grid: Vec<f64>,
    /// Phase-portrait grid: beta range, yaw-rate range, points per axis.
    pub portrait_beta: [f64; 2],
    pub portrait_yaw_rate: [f64; 2],
    pub portrait_points: usize,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            mu_grid: linspace(0.1, 1.0, 10),
            v_grid: linspace(0.1, 1.0, 10),
            portrait_beta: [-0.5, 0.5],
            portrait_yaw_rate: [-2.0, 2.0],
            portrait_points: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub maneuvers: Vec<Maneuver>,
    pub seeds: Vec<u64>,
    /// Forward speed of every maneuver; the vehicle speed when absent.
    pub speed: Option<f64>,
    /// Replacement signal programs, matched by maneuver name.
    pub programs: Vec<ManeuverSpec>,
    pub friction: FrictionSchedule,
    pub wind: WindSchedule,
    pub sim: SimSettings,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            maneuvers: Maneuver::ALL.to_vec(),
            seeds: vec![1, 2, 3, 4, 5],
            speed: None,
            programs: Vec::new(),
            friction: FrictionSchedule::default(),
            wind: WindSchedule::default(),
            sim: SimSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub vehicle: VehicleSection,
    pub uncertainty: UncertaintyBox,
    pub synthesis: SynthesisSpec,
    pub baseline: BaselineSection,
    pub analysis: AnalysisSection,
    pub bench: BenchSection,
    pub output: OutputSection,
    /// Directory used to resolve relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Vehicle parameters, from the referenced file when one is given.
    pub fn vehicle_params(&self) -> Result<VehicleParams> {
        let p = match &self.vehicle.file {
            Some(f) => {
                let path = if f.is_absolute() { f.clone() } else { self.base_dir.join(f) };
                let text = std::fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                toml::from_str::<VehicleParams>(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => self.vehicle.params,
        };
        p.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(p)
    }

    pub fn schedules(&self) -> Schedules {
        Schedules { friction: self.bench.friction.clone(), wind: self.bench.wind.clone() }
    }

    pub fn maneuver_specs(&self, v: f64) -> Result<Vec<ManeuverSpec>> {
        let v = self.bench.speed.unwrap_or(v);
        self.bench
            .maneuvers
            .iter()
            .map(|m| {
                let spec = self
                    .bench
                    .programs
                    .iter()
                    .find(|p| p.name == *m)
                    .cloned()
                    .unwrap_or_else(|| ManeuverSpec::default_for(*m, v));
                spec.validate()?;
                Ok(spec)
            })
            .collect()
    }

    /// Checks everything that can be checked without running a computation.
    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| match e {
            Error::Config(_) => e,
            other => Error::Config(other.to_string()),
        };
        let p = self.vehicle_params()?;
        self.uncertainty.validate().map_err(cfg)?;
        self.synthesis.validate().map_err(cfg)?;
        if !(self.baseline.alpha < 0.0) {
            return Err(Error::Config(format!("baseline alpha must be negative, got {}", self.baseline.alpha)));
        }
        let a = &self.analysis;
        if a.mu_grid.is_empty() || a.v_grid.is_empty() || a.v_grid.iter().any(|v| !(*v > 0.0)) || a.mu_grid.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::Config("analysis grids must be nonempty with mu >= 0 and v > 0".into()));
        }
        if a.portrait_points < 2 {
            return Err(Error::Config("portrait_points must be at least 2".into()));
        }
        if self.bench.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        self.bench.friction.validate().map_err(cfg)?;
        self.bench.sim.substeps().map_err(cfg)?;
        self.maneuver_specs(p.v).map_err(cfg)?;
        Ok(())
    }
}

pub fn portrait_axis(range: [f64; 2], n: usize) -> Vec<f64> {
    linspace(range[0], range[1], n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_default() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        cfg.validate().unwrap();
        assert_eq!(cfg.analysis.mu_grid.first(), Some(&0.1));
        assert!((cfg.analysis.mu_grid.last().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(RunConfig::from_toml_str("[synthesis]\nalfa = -0.2\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml_str("[nope]\n"), Err(Error::Config(_))));
    }

    #[test]
    fn partial_sections() {
        let cfg = RunConfig::from_toml_str(
            "[vehicle.params]\nv = 0.5\n[synthesis]\nalpha = -0.5\n[bench]\nmaneuvers = [\"slalom\", \"figure-8\"]\nseeds = [7]\n[bench.wind]\nenabled = false\n",
        )
        .unwrap();
        assert_eq!(cfg.vehicle.params.v, 0.5);
        assert_eq!(cfg.vehicle.params.m, VehicleParams::nigel().m);
        assert_eq!(cfg.synthesis.alpha, -0.5);
        assert_eq!(cfg.bench.maneuvers, vec![Maneuver::Slalom, Maneuver::Figure8]);
        assert!(!cfg.bench.wind.enabled);
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_values_rejected() {
        let cfg = RunConfig::from_toml_str("[synthesis]\ncone_angle = 4.0\n").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = RunConfig::from_toml_str("[uncertainty]\nmu_lo = [0.5, 0.5, 0.5, 0.5]\nmu_hi = [0.4, 0.4, 0.4, 0.4]\n").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }
}
