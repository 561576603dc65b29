//! Experiment and routing-scenario configuration files (TOML).
//!
//! Relative paths are resolved against the directory of the file that
//! names them. The master seed replaces every seed found in nested
//! sections; each consumer gets its own stream derived from it.

use std::path::{Path, PathBuf};

use edwait_core::edsim::SimConfig;
use edwait_core::features::Stage;
use edwait_core::qrf::ForestParams;
use edwait_core::scoring::ColorScheme;
use edwait_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const ALL_METHODS: [&str; 9] = [
    "empirical_4h",
    "empirical_p",
    "empirical_q",
    "qreg",
    "qlasso",
    "knn",
    "qrf",
    "rf_class",
    "rf_binary",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageSelection {
    T1,
    T2,
    Both,
}

impl StageSelection {
    pub fn stages(self) -> Vec<Stage> {
        match self {
            StageSelection::T1 => vec![Stage::AtRegistration],
            StageSelection::T2 => vec![Stage::AtAssessment],
            StageSelection::Both => vec![Stage::AtRegistration, Stage::AtAssessment],
        }
    }
}

/// Short stage label used in file names and report columns.
pub fn stage_label(stage: Stage) -> &'static str {
    match stage {
        Stage::AtRegistration => "t1",
        Stage::AtAssessment => "t2",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSection {
    pub n_tree: usize,
    pub mtry: Option<usize>,
    pub min_node: usize,
    pub bootstrap: bool,
}

impl Default for ForestSection {
    fn default() -> Self {
        let p = ForestParams::default();
        ForestSection { n_tree: p.n_tree, mtry: p.mtry, min_node: p.min_node, bootstrap: p.bootstrap }
    }
}

impl ForestSection {
    pub fn params(&self, master_seed: u64) -> ForestParams {
        ForestParams {
            n_tree: self.n_tree,
            mtry: self.mtry,
            min_node: self.min_node,
            bootstrap: self.bootstrap,
            master_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColorSection {
    pub low: f64,
    pub high: f64,
}

impl Default for ColorSection {
    fn default() -> Self {
        let c = ColorScheme::default();
        ColorSection { low: c.low, high: c.high }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Existing event log. The simulator runs when this is absent.
    pub event_log: Option<PathBuf>,
    pub stages: StageSelection,
    pub methods: Vec<String>,
    pub forest: ForestSection,
    pub color: ColorSection,
    pub routing_scenario: Option<PathBuf>,
    /// Simulator settings; its calendar also serves logs read from disk.
    pub sim: SimConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            out_dir: PathBuf::from("out"),
            event_log: None,
            stages: StageSelection::Both,
            methods: ALL_METHODS.iter().map(|s| s.to_string()).collect(),
            forest: ForestSection::default(),
            color: ColorSection::default(),
            routing_scenario: None,
            sim: SimConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

impl ExperimentConfig {
    /// Reads a config file and resolves its relative paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.out_dir = resolve(base, &cfg.out_dir);
        cfg.event_log = cfg.event_log.as_deref().map(|p| resolve(base, p));
        cfg.routing_scenario = cfg.routing_scenario.as_deref().map(|p| resolve(base, p));
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for m in &self.methods {
            if !ALL_METHODS.contains(&m.as_str()) {
                return Err(Error::Config(format!("unknown method {m:?}; known: {}", ALL_METHODS.join(", "))));
            }
        }
        ColorScheme::new(self.color.low, self.color.high)?;
        if self.forest.n_tree == 0 || self.forest.min_node == 0 {
            return Err(Error::Config("n_tree and min_node must be positive".into()));
        }
        if self.event_log.is_none() {
            self.sim.validate()?;
        }
        Ok(())
    }

    pub fn color_scheme(&self) -> Result<ColorScheme> {
        ColorScheme::new(self.color.low, self.color.high)
    }

    pub fn has_method(&self, m: &str) -> bool {
        self.methods.iter().any(|x| x == m)
    }

    /// Canonical text of everything that shapes outputs, leaving out the
    /// seed (reported separately) and the output directory.
    pub fn canonical(&self) -> Result<String> {
        let mut c = self.clone();
        c.seed = 0;
        c.sim.seed = 0;
        c.out_dir = PathBuf::new();
        toml::to_string(&c).map_err(|e| Error::Config(e.to_string()))
    }
}

/// First 16 hex digits of the SHA-256 of the given parts.
pub fn hash_parts(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// One hospital of a routing scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HospitalSpec {
    pub id: u32,
    pub name: String,
    /// Simulator config of this hospital; its horizon is replaced by the
    /// scenario's history plus the routing day.
    pub config: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingScenario {
    pub travel_table: PathBuf,
    /// Days of simulated history before the routing day.
    pub history_days: u32,
    /// Travel-time draws per combined distribution.
    pub samples: usize,
    pub forest: ForestSection,
    pub hospital: Vec<HospitalSpec>,
}

impl Default for RoutingScenario {
    fn default() -> Self {
        RoutingScenario {
            travel_table: PathBuf::from("travel.csv"),
            history_days: 120,
            samples: edwait_core::routing::DEFAULT_SAMPLES,
            forest: ForestSection { n_tree: 100, ..ForestSection::default() },
            hospital: Vec::new(),
        }
    }
}

/// A scenario with its hospitals' simulator configs loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedScenario {
    pub scenario: RoutingScenario,
    pub hospitals: Vec<(HospitalSpec, SimConfig)>,
    /// Raw bytes of every file read, for hashing.
    pub sources: Vec<Vec<u8>>,
}

impl RoutingScenario {
    pub fn load(path: &Path) -> Result<LoadedScenario> {
        let text = read_text(path)?;
        let mut sc: RoutingScenario =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        sc.travel_table = resolve(base, &sc.travel_table);
        if sc.hospital.is_empty() {
            return Err(Error::Config("routing scenario lists no hospital".into()));
        }
        if sc.samples == 0 || sc.history_days < 14 {
            return Err(Error::Config("routing needs samples >= 1 and at least 14 days of history".into()));
        }
        let mut sources = vec![text.into_bytes()];
        let mut hospitals = Vec::new();
        for h in &sc.hospital {
            let mut h = h.clone();
            h.config = resolve(base, &h.config);
            let t = read_text(&h.config)?;
            let sim: SimConfig = toml::from_str(&t).map_err(|e| Error::Config(format!("{}: {e}", h.config.display())))?;
            sim.validate()?;
            sources.push(t.into_bytes());
            hospitals.push((h, sim));
        }
        let mut ids: Vec<u32> = hospitals.iter().map(|h| h.0.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != hospitals.len() {
            return Err(Error::Config("hospital ids must be distinct".into()));
        }
        Ok(LoadedScenario { scenario: sc, hospitals, sources })
    }
}
