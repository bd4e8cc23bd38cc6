//! Experiment configuration files.
//!
//! Configs are TOML documents (conventionally with a `.cfg` extension) with
//! optional `[units]`, `[packet]`, `[ion]` and `[probe]` sections and a run
//! plan of `[[tasks]]`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use weyl_core::ionfock::{FockConfig, FockError, Modes, SidebandPhases};
use weyl_core::measurement::{ProbeSchedule, ReconstructionConfig, Shots, Window};
use weyl_core::observables::Method;
use weyl_core::units::{PhysicalParams, UnitsError};
use weyl_core::wavepacket::{Axis, MomentumGrid, WavePacketSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("tasks[{index}] ({kind}) references section [{section}], which is not present")]
    MissingSection {
        index: usize,
        kind: &'static str,
        section: &'static str,
    },
    #[error("duplicate task name `{0}`")]
    DuplicateName(String),
    #[error("invalid [{section}] section: {message}")]
    Invalid { section: &'static str, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub overwrite: bool,
    pub units: Option<UnitsSection>,
    pub packet: Option<PacketSection>,
    pub ion: Option<IonSection>,
    pub probe: Option<ProbeSection>,
    #[serde(default)]
    pub tasks: Vec<TaskSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum UnitsPreset {
    #[default]
    Unit,
    Calcium40,
}

/// Physical parameters; any field overrides the preset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct UnitsSection {
    #[serde(default)]
    pub preset: UnitsPreset,
    pub hbar: Option<f64>,
    pub mass: Option<f64>,
    pub trap_freq: Option<f64>,
    pub lamb_dicke: Option<f64>,
    pub rabi: Option<f64>,
}

impl UnitsSection {
    pub fn params(&self) -> Result<PhysicalParams, UnitsError> {
        let base = match self.preset {
            UnitsPreset::Unit => PhysicalParams::unit(),
            UnitsPreset::Calcium40 => PhysicalParams::calcium40_demo(),
        };
        PhysicalParams::new(
            self.hbar.unwrap_or(base.hbar),
            self.mass.unwrap_or(base.mass),
            self.trap_freq.unwrap_or(base.trap_freq),
            self.lamb_dicke.unwrap_or(base.lamb_dicke),
            self.rabi.unwrap_or(base.rabi),
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PacketSection {
    /// Kick `n`: mean momentum `−n/width` along x.
    pub kick_x: f64,
    /// Kick `m`: mean momentum `−m/width` along y.
    pub kick_y: f64,
    pub width: f64,
    pub grid_points: Option<usize>,
    pub grid_half_extent: Option<f64>,
}

impl Default for PacketSection {
    fn default() -> Self {
        Self {
            kick_x: 0.0,
            kick_y: 0.0,
            width: 1.0,
            grid_points: None,
            grid_half_extent: None,
        }
    }
}

impl PacketSection {
    pub fn spec(&self, kick: Option<[f64; 2]>) -> Result<WavePacketSpec, String> {
        let [n, m] = kick.unwrap_or([self.kick_x, self.kick_y]);
        WavePacketSpec::with_width(n, m, self.width).map_err(|e| e.to_string())
    }

    pub fn grid(&self, spec: &WavePacketSpec) -> Result<MomentumGrid, String> {
        let default = MomentumGrid::default_for(spec);
        MomentumGrid::new(
            self.grid_half_extent.unwrap_or(default.half_extent()),
            self.grid_points.unwrap_or(default.points()),
            default.is_offset(),
        )
        .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields)]
pub struct PhasesSection {
    pub red_x: Option<f64>,
    pub blue_x: Option<f64>,
    pub red_y: Option<f64>,
    pub blue_y: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct IonSection {
    pub fock_n: usize,
    pub eta: f64,
    pub omega_rabi: f64,
    /// Per-mode overrides of `omega_rabi`.
    pub omega_x: Option<f64>,
    pub omega_y: Option<f64>,
    pub modes: Modes,
    pub phases: PhasesSection,
}

impl Default for IonSection {
    fn default() -> Self {
        Self {
            fock_n: 48,
            eta: 0.1,
            omega_rabi: 1.0,
            omega_x: None,
            omega_y: None,
            modes: Modes::Xy,
            phases: PhasesSection::default(),
        }
    }
}

impl IonSection {
    pub fn fock_config(&self) -> Result<FockConfig, FockError> {
        let w = SidebandPhases::weyl();
        let p = self.phases;
        let cfg = FockConfig {
            truncation: self.fock_n,
            modes: self.modes,
            eta: self.eta,
            omega_x: self.omega_x.unwrap_or(self.omega_rabi),
            omega_y: self.omega_y.unwrap_or(self.omega_rabi),
            phases: SidebandPhases {
                red_x: p.red_x.unwrap_or(w.red_x),
                blue_x: p.blue_x.unwrap_or(w.blue_x),
                red_y: p.red_y.unwrap_or(w.red_y),
                blue_y: p.blue_y.unwrap_or(w.blue_y),
            }
            .reduced(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ShotsSetting {
    Count(u64),
    Named(ExactKeyword),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ExactKeyword {
    Exact,
}

impl ShotsSetting {
    pub fn shots(&self) -> Shots {
        match *self {
            ShotsSetting::Count(n) => Shots::Count(n),
            ShotsSetting::Named(_) => Shots::Exact,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Tukey,
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeSection {
    pub axis: Axis,
    pub k_max: f64,
    pub dk: f64,
    pub shots: ShotsSetting,
    pub seed: u64,
    pub window: WindowKind,
    pub tukey_alpha: f64,
    pub padding: usize,
}

impl Default for ProbeSection {
    fn default() -> Self {
        Self {
            axis: Axis::Y,
            k_max: 10.0,
            dk: 0.05,
            shots: ShotsSetting::Named(ExactKeyword::Exact),
            seed: 0,
            window: WindowKind::Tukey,
            tukey_alpha: 0.5,
            padding: 4,
        }
    }
}

impl ProbeSection {
    pub fn schedule(&self, axis: Option<Axis>) -> Result<ProbeSchedule, String> {
        ProbeSchedule::uniform(axis.unwrap_or(self.axis), self.dk, self.k_max, self.shots.shots()).map_err(|e| e.to_string())
    }

    pub fn reconstruction(&self, width: f64) -> ReconstructionConfig {
        let window = match self.window {
            WindowKind::Tukey => Window::Tukey { alpha: self.tukey_alpha },
            WindowKind::Hann => Window::Hann,
            WindowKind::Rectangular => Window::Rectangular,
        };
        ReconstructionConfig {
            window,
            padding: self.padding,
            width,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    #[default]
    Quadrature,
    Spectral,
    Both,
}

impl MethodChoice {
    pub fn methods(&self) -> Vec<Method> {
        match self {
            MethodChoice::Quadrature => vec![Method::Quadrature],
            MethodChoice::Spectral => vec![Method::Spectral],
            MethodChoice::Both => vec![Method::Quadrature, Method::Spectral],
        }
    }
}

fn default_t_max() -> f64 {
    3.0
}
fn default_samples() -> usize {
    121
}
fn default_snapshot_times() -> Vec<f64> {
    vec![0.0, 1.5, 3.0]
}
fn default_window() -> f64 {
    6.0
}
fn default_crosscheck_time() -> f64 {
    1.5
}
fn default_crosscheck_tolerance() -> f64 {
    0.02
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskSpec {
    Trajectory {
        name: Option<String>,
        /// `[n, m]` pairs; defaults to the packet section's kick.
        kicks: Option<Vec<[f64; 2]>>,
        #[serde(default = "default_t_max")]
        t_max: f64,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        method: MethodChoice,
    },
    Density {
        name: Option<String>,
        kicks: Option<Vec<[f64; 2]>>,
        #[serde(default = "default_snapshot_times")]
        times: Vec<f64>,
        /// Half-width of the written window.
        #[serde(default = "default_window")]
        window: f64,
    },
    Prepare {
        name: Option<String>,
        n: Option<f64>,
        m: Option<f64>,
    },
    Measure {
        name: Option<String>,
        n: Option<f64>,
        m: Option<f64>,
        #[serde(default)]
        t: f64,
        axis: Option<Axis>,
    },
    VerifyIdentities {
        name: Option<String>,
        truncations: Option<Vec<usize>>,
    },
    Crosscheck {
        name: Option<String>,
        n: Option<f64>,
        m: Option<f64>,
        #[serde(default = "default_crosscheck_time")]
        t: f64,
        #[serde(default = "default_crosscheck_tolerance")]
        tolerance: f64,
    },
}

impl TaskSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            TaskSpec::Trajectory { .. } => "trajectory",
            TaskSpec::Density { .. } => "density",
            TaskSpec::Prepare { .. } => "prepare",
            TaskSpec::Measure { .. } => "measure",
            TaskSpec::VerifyIdentities { .. } => "verify-identities",
            TaskSpec::Crosscheck { .. } => "crosscheck",
        }
    }

    fn explicit_name(&self) -> Option<&str> {
        match self {
            TaskSpec::Trajectory { name, .. }
            | TaskSpec::Density { name, .. }
            | TaskSpec::Prepare { name, .. }
            | TaskSpec::Measure { name, .. }
            | TaskSpec::VerifyIdentities { name, .. }
            | TaskSpec::Crosscheck { name, .. } => name.as_deref(),
        }
    }

    /// The explicit name, or `<index>-<kind>`.
    pub fn name(&self, index: usize) -> String {
        self.explicit_name()
            .map(str::to_owned)
            .unwrap_or_else(|| format!("{index:02}-{}", self.kind()))
    }

    /// Sections the task reads.
    pub fn sections(&self) -> Vec<&'static str> {
        match self {
            TaskSpec::Trajectory { .. } | TaskSpec::Density { .. } => vec!["packet"],
            TaskSpec::Prepare { n, m, .. } => {
                if n.is_some() && m.is_some() {
                    vec!["ion"]
                } else {
                    vec!["ion", "packet"]
                }
            }
            TaskSpec::Measure { .. } => vec!["probe", "packet"],
            TaskSpec::VerifyIdentities { .. } => vec!["ion"],
            TaskSpec::Crosscheck { .. } => vec!["ion", "packet"],
        }
    }
}

impl fmt::Display for TaskSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind())
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<u8>), ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let text = String::from_utf8_lossy(&bytes);
        Ok((Self::parse(&text, path)?, bytes))
    }

    fn has(&self, section: &str) -> bool {
        match section {
            "units" => self.units.is_some(),
            "packet" => self.packet.is_some(),
            "ion" => self.ion.is_some(),
            "probe" => self.probe.is_some(),
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut names = std::collections::BTreeSet::new();
        for (index, task) in self.tasks.iter().enumerate() {
            for section in task.sections() {
                if !self.has(section) {
                    return Err(ConfigError::MissingSection {
                        index,
                        kind: task.kind(),
                        section,
                    });
                }
            }
            if !names.insert(task.name(index)) {
                return Err(ConfigError::DuplicateName(task.name(index)));
            }
        }
        if let Some(u) = &self.units {
            u.params().map_err(|e| ConfigError::Invalid {
                section: "units",
                message: e.to_string(),
            })?;
        }
        if let Some(p) = &self.packet {
            let spec = p.spec(None).map_err(|message| ConfigError::Invalid { section: "packet", message })?;
            p.grid(&spec).map_err(|message| ConfigError::Invalid { section: "packet", message })?;
        }
        if let Some(p) = &self.probe {
            p.schedule(None).map_err(|message| ConfigError::Invalid { section: "probe", message })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::parse(text, Path::new("test.cfg"))
    }

    #[test]
    fn empty_config_is_valid() {
        let c = parse("").unwrap();
        assert!(c.tasks.is_empty());
        assert!(!c.overwrite);
    }

    #[test]
    fn full_config_round_trips_defaults() {
        let c = parse(
            r#"
            output_dir = "out"
            [units]
            preset = "calcium40"
            [packet]
            kick_x = 1.0
            [ion]
            fock_n = 32
            phases.red_y = 0.5
            [probe]
            axis = "x"
            shots = 1000
            [[tasks]]
            kind = "trajectory"
            kicks = [[0, 0], [0, 1]]
            method = "both"
            [[tasks]]
            kind = "verify-identities"
            "#,
        )
        .unwrap();
        assert_eq!(c.tasks.len(), 2);
        assert_eq!(c.tasks[0].name(0), "00-trajectory");
        assert_eq!(c.probe.as_ref().unwrap().shots.shots(), Shots::Count(1000));
        let f = c.ion.as_ref().unwrap().fock_config().unwrap();
        assert_eq!(f.truncation, 32);
        assert_eq!(f.phases.red_y, 0.5);
        assert_eq!(f.phases.blue_y, SidebandPhases::weyl().blue_y);
        assert!(c.units.as_ref().unwrap().params().unwrap().mass < 1e-20);
    }

    #[test]
    fn missing_section_is_reported_with_task_index() {
        let err = parse("[[tasks]]\nkind = \"measure\"\n[packet]\n").unwrap_err();
        assert!(matches!(err, ConfigError::MissingSection { index: 0, section: "probe", .. }), "{err}");
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = parse("[packet]\nkick_x = \"one\"\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let err = parse("[packet]\nkik_x = 1.0\n").unwrap_err().to_string();
        assert!(err.contains("kik_x"), "{err}");
    }

    #[test]
    fn unknown_task_kind_is_rejected() {
        assert!(parse("[[tasks]]\nkind = \"plot\"\n").is_err());
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let err = parse("[packet]\n[[tasks]]\nkind=\"density\"\nname=\"a\"\n[[tasks]]\nkind=\"trajectory\"\nname=\"a\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::DuplicateName(_)));
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(matches!(parse("[packet]\nwidth = -1.0\n"), Err(ConfigError::Invalid { section: "packet", .. })));
        assert!(matches!(parse("[probe]\ndk = 0.0\n"), Err(ConfigError::Invalid { section: "probe", .. })));
        assert!(matches!(parse("[units]\nmass = 0.0\n"), Err(ConfigError::Invalid { section: "units", .. })));
    }
}
