//! Experiment configuration: flat `key = value` files with `#` comments.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;
use ttdyn::reference::DENSE_CAP;
use ttdyn::{ChainParameters, InitialStateSpec, Scheme, SystemKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("key `{0}` given twice")]
    Duplicate(String),

    #[error("missing required key `{0}`")]
    Missing(&'static str),

    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

impl ConfigError {
    fn invalid(key: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { key: key.to_string(), reason: reason.into() }
    }
}

impl From<ttdyn::Error> for ConfigError {
    fn from(e: ttdyn::Error) -> Self {
        match e {
            ttdyn::Error::InvalidParameter { name, reason } => ConfigError::invalid(name, reason),
            ttdyn::Error::Unsupported(reason) => ConfigError::invalid("system.cyclic", reason),
            other => ConfigError::invalid("system", other.to_string()),
        }
    }
}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

const KEYS: &[&str] = &[
    "system.kind",
    "system.n_sites",
    "system.alpha",
    "system.beta",
    "system.mass",
    "system.nu",
    "system.omega",
    "system.sigma",
    "system.d_ex",
    "system.d_ph",
    "system.cyclic",
    "state.excited_site",
    "state.displacement",
    "state.excite_exciton",
    "state.displace_phonon",
    "state.random_rank",
    "run.main_steps",
    "run.main_step_size",
    "run.sub_steps",
    "tt.max_rank",
    "tt.inter_stage_rank",
    "tt.svd_threshold",
    "tt.krylov_dim",
    "tt.local_exp_dim",
    "schemes",
    "reference.quantum",
    "reference.classical",
    "output.dir",
    "seed",
];

/// A validated sweep over schemes x ranks x sub-step counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub system: ChainParameters,
    pub state: InitialStateSpec,
    /// Replaces the product initial state by a seeded random TT of this rank.
    pub random_state_rank: Option<usize>,
    pub main_steps: usize,
    pub main_step_size: f64,
    pub sub_steps: Vec<usize>,
    pub max_ranks: Vec<usize>,
    pub inter_stage_rank: Option<usize>,
    pub svd_threshold: f64,
    pub krylov_dim: Option<usize>,
    pub local_exp_dim: usize,
    pub schemes: Vec<Scheme>,
    pub quantum_reference: bool,
    pub classical_reference: bool,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl ExperimentConfig {
    /// Defaults for a chain; the scheme list starts empty and must be filled.
    pub fn new(kind: SystemKind, n_sites: usize) -> Self {
        let system = ChainParameters::new(kind, n_sites);
        let quantum = system.hilbert_dim().is_some_and(|d| d <= DENSE_CAP);
        ExperimentConfig {
            state: InitialStateSpec::default_for(kind),
            random_state_rank: None,
            main_steps: 100,
            main_step_size: default_main_step_size(kind),
            sub_steps: vec![1],
            max_ranks: vec![16],
            inter_stage_rank: None,
            svd_threshold: 0.0,
            krylov_dim: None,
            local_exp_dim: 8,
            schemes: Vec::new(),
            quantum_reference: quantum,
            classical_reference: kind == SystemKind::Phonon,
            output_dir: PathBuf::from("results"),
            seed: 0,
            system,
        }
    }

    pub fn validate(&self) -> ConfigResult<()> {
        self.system.validate()?;
        let n = self.system.n_sites;
        let site = self.state.site(n);
        if site < 1 || site > n {
            return Err(ConfigError::invalid("state.excited_site", format!("must lie in 1..={n}")));
        }
        if self.random_state_rank == Some(0) {
            return Err(ConfigError::invalid("state.random_rank", "must be at least 1"));
        }
        if self.main_steps == 0 {
            return Err(ConfigError::invalid("run.main_steps", "must be at least 1"));
        }
        if !(self.main_step_size > 0.0) || !self.main_step_size.is_finite() {
            return Err(ConfigError::invalid("run.main_step_size", "must be positive"));
        }
        if self.sub_steps.is_empty() || self.sub_steps.contains(&0) {
            return Err(ConfigError::invalid("run.sub_steps", "every entry must be at least 1"));
        }
        if self.max_ranks.is_empty() || self.max_ranks.contains(&0) {
            return Err(ConfigError::invalid("tt.max_rank", "every entry must be at least 1"));
        }
        if let Some(s) = self.inter_stage_rank {
            if self.max_ranks.iter().any(|&r| s < r) {
                return Err(ConfigError::invalid("tt.inter_stage_rank", "must be at least every max_rank"));
            }
        }
        if !(self.svd_threshold >= 0.0 && self.svd_threshold < 1.0) {
            return Err(ConfigError::invalid("tt.svd_threshold", "must lie in [0, 1)"));
        }
        if let Some(m) = self.krylov_dim {
            if m < 2 || m % 2 != 0 {
                return Err(ConfigError::invalid("tt.krylov_dim", "must be even and at least 2"));
            }
        }
        if self.local_exp_dim < 2 {
            return Err(ConfigError::invalid("tt.local_exp_dim", "must be at least 2"));
        }
        if self.schemes.is_empty() {
            return Err(ConfigError::invalid("schemes", "the scheme list is empty"));
        }
        if self.quantum_reference {
            match self.system.hilbert_dim() {
                Some(d) if d <= DENSE_CAP => {}
                d => {
                    let shown = d.map_or("overflow".to_string(), |d| d.to_string());
                    return Err(ConfigError::invalid(
                        "reference.quantum",
                        format!("system too large for dense oracle: dimension {shown} exceeds {DENSE_CAP}"),
                    ));
                }
            }
        }
        if self.classical_reference && self.system.kind != SystemKind::Phonon {
            return Err(ConfigError::invalid(
                "reference.classical",
                format!("classical reference needs a pure phonon chain, got {}", self.system.kind),
            ));
        }
        Ok(())
    }

    /// Sub-step size of a cell.
    pub fn dt(&self, sub_steps: usize) -> f64 {
        self.main_step_size / sub_steps as f64
    }
}

/// Half the characteristic time: `1/(2|β|)` for excitons, `1/(2ν)` for phonons.
pub fn default_main_step_size(kind: SystemKind) -> f64 {
    match kind {
        SystemKind::Exciton | SystemKind::Coupled => 50.0,
        SystemKind::Phonon => 500.0,
    }
}

pub fn parse_config(path: &Path) -> ConfigResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_config_str(&text)
}

fn scalar<T: FromStr>(key: &str, raw: &str) -> ConfigResult<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| ConfigError::invalid(key, format!("`{raw}`: {e}")))
}

fn list<T: FromStr>(key: &str, raw: &str) -> ConfigResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(|s| scalar(key, s)).collect()
}

pub fn parse_config_str(text: &str) -> ConfigResult<ExperimentConfig> {
    let mut entries: BTreeMap<String, String> = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: k + 1, text: line.to_string() })?;
        let key = key.trim().to_string();
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        if entries.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(ConfigError::Duplicate(key));
        }
    }

    let kind: SystemKind = match entries.get("system.kind") {
        Some(raw) => raw.parse()?,
        None => return Err(ConfigError::Missing("system.kind")),
    };
    let n: usize = match entries.get("system.n_sites") {
        Some(raw) => scalar("system.n_sites", raw)?,
        None => return Err(ConfigError::Missing("system.n_sites")),
    };
    let mut c = ExperimentConfig::new(kind, n);
    let mut quantum_given = false;
    let mut classical_given = false;

    for (key, raw) in &entries {
        let key = key.as_str();
        match key {
            "system.kind" | "system.n_sites" => {}
            "system.alpha" => c.system.alpha = scalar(key, raw)?,
            "system.beta" => c.system.beta = scalar(key, raw)?,
            "system.mass" => c.system.mass = scalar(key, raw)?,
            "system.nu" => c.system.nu = scalar(key, raw)?,
            "system.omega" => c.system.omega = scalar(key, raw)?,
            "system.sigma" => c.system.sigma = scalar(key, raw)?,
            "system.d_ex" => c.system.d_ex = scalar(key, raw)?,
            "system.d_ph" => c.system.d_ph = scalar(key, raw)?,
            "system.cyclic" => c.system.cyclic = scalar(key, raw)?,
            "state.excited_site" => c.state.excited_site = Some(scalar(key, raw)?),
            "state.displacement" => c.state.displacement = scalar(key, raw)?,
            "state.excite_exciton" => c.state.excite_exciton = scalar(key, raw)?,
            "state.displace_phonon" => c.state.displace_phonon = scalar(key, raw)?,
            "state.random_rank" => c.random_state_rank = Some(scalar(key, raw)?),
            "run.main_steps" => c.main_steps = scalar(key, raw)?,
            "run.main_step_size" => c.main_step_size = scalar(key, raw)?,
            "run.sub_steps" => c.sub_steps = list(key, raw)?,
            "tt.max_rank" => c.max_ranks = list(key, raw)?,
            "tt.inter_stage_rank" => c.inter_stage_rank = Some(scalar(key, raw)?),
            "tt.svd_threshold" => c.svd_threshold = scalar(key, raw)?,
            "tt.krylov_dim" => c.krylov_dim = Some(scalar(key, raw)?),
            "tt.local_exp_dim" => c.local_exp_dim = scalar(key, raw)?,
            "schemes" => c.schemes = list(key, raw)?,
            "reference.quantum" => {
                c.quantum_reference = scalar(key, raw)?;
                quantum_given = true;
            }
            "reference.classical" => {
                c.classical_reference = scalar(key, raw)?;
                classical_given = true;
            }
            "output.dir" => c.output_dir = PathBuf::from(raw),
            "seed" => c.seed = scalar(key, raw)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
    }

    // Unrequested oracles follow what the final system supports.
    if !quantum_given {
        c.quantum_reference = c.system.hilbert_dim().is_some_and(|d| d <= DENSE_CAP);
    }
    if !classical_given {
        c.classical_reference = c.system.kind == SystemKind::Phonon;
    }
    c.validate()?;
    Ok(c)
}
