//! JSON run configuration.

use std::fmt;
use std::path::{Path, PathBuf};

use mlqmc_core::fem::MaternParams;
use mlqmc_core::mesh::BoxDomain;
use mlqmc_core::mlqmc::SamplingMode;
use mlqmc_core::problem::LevelSpec;
use serde::{Deserialize, Serialize};

/// A configuration problem, tagged with the offending field path.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self { path: path.into(), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config.{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxConfig {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxConfig {
    fn symmetric(dim: usize, a: f64) -> Self {
        Self { lo: vec![-a; dim], hi: vec![a; dim] }
    }
}

/// Inputs of the Matérn field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaternConfig {
    /// `u` chosen so that `E[e^u] = mean`, `V[e^u] = variance`.
    Lognormal { lambda: f64, mean: f64, variance: f64 },
    /// Zero-mean field with marginal standard deviation `sigma`, optionally
    /// with an explicit `eta` and a constant shift.
    Explicit {
        sigma: f64,
        lambda: f64,
        #[serde(default)]
        eta: Option<f64>,
        #[serde(default)]
        mean_shift: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Qmc,
    Mlmc,
    Mlqmc,
}

/// Closed-form level family in place of the PDE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub levels: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sd0: f64,
}

fn default_dim() -> usize {
    2
}
fn default_mesh_levels() -> Vec<usize> {
    vec![1, 2, 3, 4]
}
fn default_haar_levels() -> Vec<i32> {
    vec![5, 5, 5, 5]
}
fn default_matern() -> MaternConfig {
    MaternConfig::Lognormal { lambda: 0.25, mean: 1.0, variance: 0.2 }
}
fn default_estimator() -> EstimatorKind {
    EstimatorKind::Mlqmc
}
fn default_epsilons() -> Vec<f64> {
    vec![1e-4, 5e-5]
}
fn default_theta() -> f64 {
    0.5
}
fn default_randomizations() -> usize {
    32
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_n_screen() -> u32 {
    64
}
fn default_n_list() -> Vec<u32> {
    vec![1, 2, 4, 8, 16, 32, 64]
}
fn default_mlmc_n0() -> u64 {
    32
}
fn default_l_min() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Box of the PDE; defaults to `(-1/2, 1/2)^d`.
    #[serde(default)]
    pub g_box: Option<BoxConfig>,
    /// Box of the field; defaults to `(-1, 1)^d`.
    #[serde(default)]
    pub d_box: Option<BoxConfig>,
    /// Refinement index of each level, consecutive.
    #[serde(default = "default_mesh_levels")]
    pub mesh_levels: Vec<usize>,
    /// Haar level of each level, non-decreasing.
    #[serde(default = "default_haar_levels")]
    pub haar_levels: Vec<i32>,
    /// Drop the coarsest mesh and start the hierarchy at the next one.
    #[serde(default)]
    pub drop_base: bool,
    #[serde(default = "default_matern")]
    pub matern: MaternConfig,
    #[serde(default = "default_estimator")]
    pub estimator: EstimatorKind,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Number of random shifts `M`.
    #[serde(default = "default_randomizations")]
    pub randomizations: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub sampling: SamplingMode,
    #[serde(default = "default_n_screen")]
    pub n_screen: u32,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<u32>,
    #[serde(default = "default_mlmc_n0")]
    pub mlmc_n0: u64,
    #[serde(default = "default_l_min")]
    pub l_min: usize,
    /// Sample index used by `field` and the dump flags.
    #[serde(default)]
    pub sample: u32,
    #[serde(default)]
    pub synthetic: Option<SyntheticConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::new("", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=2).contains(&self.dim) {
            return Err(ConfigError::new("dim", format!("must be 1 or 2, got {}", self.dim)));
        }
        let g = self.g_domain()?;
        let d = self.d_domain()?;
        for axis in 0..self.dim {
            if g.lo()[axis] < d.lo()[axis] || g.hi()[axis] > d.hi()[axis] {
                return Err(ConfigError::new("g_box", "must lie inside d_box"));
            }
        }
        if self.synthetic.is_none() {
            if self.mesh_levels.is_empty() {
                return Err(ConfigError::new("mesh_levels", "must not be empty"));
            }
            if self.haar_levels.len() != self.mesh_levels.len() {
                return Err(ConfigError::new(
                    "haar_levels",
                    format!("needs one entry per mesh level ({}), got {}", self.mesh_levels.len(), self.haar_levels.len()),
                ));
            }
            for i in 1..self.mesh_levels.len() {
                if self.mesh_levels[i] != self.mesh_levels[i - 1] + 1 {
                    return Err(ConfigError::new(format!("mesh_levels[{i}]"), "mesh levels must be consecutive"));
                }
                if self.haar_levels[i] < self.haar_levels[i - 1] {
                    return Err(ConfigError::new(
                        format!("haar_levels[{i}]"),
                        format!("must be >= haar_levels[{}] ({})", i - 1, self.haar_levels[i - 1]),
                    ));
                }
            }
            if let Some(i) = self.haar_levels.iter().position(|&l| !(-1..=16).contains(&l)) {
                return Err(ConfigError::new(format!("haar_levels[{i}]"), "must lie in -1..=16"));
            }
            if self.drop_base && self.mesh_levels.len() < 2 {
                return Err(ConfigError::new("drop_base", "needs at least two mesh levels"));
            }
            self.matern_params()?;
        }
        if self.epsilons.is_empty() {
            return Err(ConfigError::new("epsilons", "must not be empty"));
        }
        if let Some(i) = self.epsilons.iter().position(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(ConfigError::new(format!("epsilons[{i}]"), format!("must be positive, got {}", self.epsilons[i])));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(ConfigError::new("theta", format!("must lie in (0, 1), got {}", self.theta)));
        }
        if self.randomizations < 2 {
            return Err(ConfigError::new("randomizations", "must be at least 2"));
        }
        if self.n_screen < 16 {
            return Err(ConfigError::new("n_screen", "must be at least 16"));
        }
        if self.n_list.is_empty() {
            return Err(ConfigError::new("n_list", "must not be empty"));
        }
        if let Some(i) = self.n_list.iter().position(|n| !n.is_power_of_two()) {
            return Err(ConfigError::new(format!("n_list[{i}]"), "must be a power of two"));
        }
        if self.mlmc_n0 < 2 {
            return Err(ConfigError::new("mlmc_n0", "must be at least 2"));
        }
        if let Some(s) = &self.synthetic {
            if s.levels < 1 {
                return Err(ConfigError::new("synthetic.levels", "must be at least 1"));
            }
            for (name, v) in [("alpha", s.alpha), ("beta", s.beta), ("gamma", s.gamma), ("sd0", s.sd0)] {
                if !v.is_finite() || v < 0.0 {
                    return Err(ConfigError::new(format!("synthetic.{name}"), "must be finite and non-negative"));
                }
            }
        }
        if self.l_min < 1 || self.l_min > self.n_levels() {
            return Err(ConfigError::new("l_min", format!("must lie in 1..={}", self.n_levels())));
        }
        Ok(())
    }

    fn domain(&self, b: &Option<BoxConfig>, name: &str, half: f64) -> Result<BoxDomain, ConfigError> {
        let b = b.clone().unwrap_or_else(|| BoxConfig::symmetric(self.dim, half));
        if b.lo.len() != self.dim || b.hi.len() != self.dim {
            return Err(ConfigError::new(name, format!("lo and hi need {} coordinates", self.dim)));
        }
        BoxDomain::new(b.lo, b.hi).map_err(|e| ConfigError::new(name, e.to_string()))
    }

    pub fn g_domain(&self) -> Result<BoxDomain, ConfigError> {
        self.domain(&self.g_box, "g_box", 0.5)
    }

    pub fn d_domain(&self) -> Result<BoxDomain, ConfigError> {
        self.domain(&self.d_box, "d_box", 1.0)
    }

    pub fn matern_params(&self) -> Result<MaternParams, ConfigError> {
        let err = |e: mlqmc_core::Error| ConfigError::new("matern", e.to_string());
        match self.matern {
            MaternConfig::Lognormal { lambda, mean, variance } => MaternParams::lognormal(self.dim, lambda, mean, variance).map_err(err),
            MaternConfig::Explicit { sigma, lambda, eta, mean_shift } => {
                if let Some(e) = eta {
                    if !(e >= 0.0 && e.is_finite()) {
                        return Err(ConfigError::new("matern.eta", "must be finite and non-negative"));
                    }
                }
                let p = MaternParams::new(self.dim, sigma, lambda).map_err(err)?.with_mean_shift(mean_shift);
                Ok(eta.map_or(p, |e| p.with_eta(e)))
            }
        }
    }

    /// Levels after the optional base drop.
    pub fn level_specs(&self) -> Result<Vec<LevelSpec>, ConfigError> {
        let skip = usize::from(self.drop_base);
        LevelSpec::hierarchy(&self.mesh_levels[skip..], &self.haar_levels[skip..])
            .map_err(|e| ConfigError::new("mesh_levels", e.to_string()))
    }

    pub fn n_levels(&self) -> usize {
        match &self.synthetic {
            Some(s) => s.levels,
            None => self.mesh_levels.len() - usize::from(self.drop_base),
        }
    }
}
