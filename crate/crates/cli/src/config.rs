use std::f64::consts::PI;
use std::path::PathBuf;

use ibc_core::groundstate::{InitialState, ItebdSchedule};
use ibc_core::mpo::{heisenberg_mpo, tfi_mpo, Mpo, SpinOperators};
use ibc_core::DenseTensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "IBC_OUTPUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelSpec {
    Name(String),
    Full(ModelParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub name: String,
    #[serde(default = "one")]
    pub spin: f64,
    #[serde(default = "one")]
    pub coupling: f64,
    #[serde(default)]
    pub field: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    /// 0-based window site; defaults to `window_size / 2`.
    #[serde(default)]
    pub site: Option<usize>,
    #[serde(default = "default_operator")]
    pub operator: String,
}

fn default_operator() -> String {
    "sp".into()
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            site: None,
            operator: default_operator(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Aklt,
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ItebdConfig {
    /// `[dtau, max_iterations]` pairs, dtau strictly decreasing.
    #[serde(default = "default_itebd_steps")]
    pub steps: Vec<(f64, usize)>,
    #[serde(default = "default_energy_tol")]
    pub energy_tol: f64,
    #[serde(default = "default_lambda_tol")]
    pub lambda_tol: f64,
    /// Starting state; AKLT is only available for spin 1.
    #[serde(default)]
    pub init: Option<InitKind>,
}

fn default_itebd_steps() -> Vec<(f64, usize)> {
    vec![(0.1, 5000), (0.03, 5000), (0.01, 5000)]
}
fn default_energy_tol() -> f64 {
    1e-10
}
fn default_lambda_tol() -> f64 {
    1e-9
}

impl Default for ItebdConfig {
    fn default() -> Self {
        Self {
            steps: default_itebd_steps(),
            energy_tol: default_energy_tol(),
            lambda_tol: default_lambda_tol(),
            init: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    #[serde(default = "default_q_points")]
    pub q_points: usize,
    #[serde(default = "default_q_max")]
    pub q_max: f64,
    #[serde(default = "default_omega_points")]
    pub omega_points: usize,
    #[serde(default = "default_omega_max")]
    pub omega_max: f64,
}

fn default_q_points() -> usize {
    201
}
fn default_q_max() -> f64 {
    PI
}
fn default_omega_points() -> usize {
    401
}
fn default_omega_max() -> f64 {
    4.0
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            q_points: default_q_points(),
            q_max: default_q_max(),
            omega_points: default_omega_points(),
            omega_max: default_omega_max(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    /// Ground-state bond dimension.
    pub chi: usize,
    /// Window bond-dimension cap; defaults to `chi`.
    #[serde(default)]
    pub chi_max: Option<usize>,
    pub window_size: usize,
    #[serde(default)]
    pub perturbation: Perturbation,
    pub dt: f64,
    pub t_max: f64,
    #[serde(default = "default_order")]
    pub trotter_order: u8,
    #[serde(default)]
    pub itebd: ItebdConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    /// Gaussian envelope time; defaults to `t_max`.
    #[serde(default)]
    pub t_window: Option<f64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_svd_tol")]
    pub svd_tol: f64,
    /// Evolution steps between checkpoints.
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

fn default_order() -> u8 {
    4
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_seed() -> u64 {
    1234
}
fn default_svd_tol() -> f64 {
    1e-12
}
fn default_checkpoint_every() -> usize {
    50
}

fn range_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parse and validate a JSON configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| {
        CliError::Config(format!("line {}, column {}: {e}", e.line(), e.column()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Read a configuration file and apply the output-directory override.
pub fn load_config(path: &std::path::Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        cfg.output_dir = PathBuf::from(dir);
    }
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let p = self.model_params();
        match p.name.as_str() {
            "heisenberg_s1" | "heisenberg" | "tfi" => {}
            other => return Err(range_err(format!("unknown model '{other}'"))),
        }
        if p.name == "tfi" && p.spin != 0.5 {
            return Err(range_err("tfi is a spin-1/2 model"));
        }
        if p.name == "heisenberg_s1" && p.spin != 1.0 {
            return Err(range_err("heisenberg_s1 has spin 1"));
        }
        let two_s = 2.0 * p.spin;
        if !(p.spin > 0.0) || (two_s - two_s.round()).abs() > 1e-12 {
            return Err(range_err(format!("spin {} is not a positive half-integer", p.spin)));
        }
        if self.chi < 1 {
            return Err(range_err("chi must be ≥ 1"));
        }
        if self.chi_max() < 1 {
            return Err(range_err("chi_max must be ≥ 1"));
        }
        if self.window_size < 2 || self.window_size % 2 != 0 {
            return Err(range_err(format!("window_size {} must be even and ≥ 2", self.window_size)));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(range_err(format!("dt {} must be > 0", self.dt)));
        }
        if !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return Err(range_err(format!("t_max {} must be ≥ 0", self.t_max)));
        }
        if ![1, 2, 4].contains(&self.trotter_order) {
            return Err(range_err(format!("trotter_order {} not in {{1, 2, 4}}", self.trotter_order)));
        }
        if self.perturbation_site() >= self.window_size {
            return Err(range_err("perturbation site outside the window"));
        }
        if self.perturbation_operator().is_none() {
            return Err(range_err(format!("unknown operator '{}'", self.perturbation.operator)));
        }
        if let Some(tw) = self.t_window {
            if !(tw > 0.0) || (self.t_max > 0.0 && tw > self.t_max) {
                return Err(range_err(format!("t_window {tw} must lie in (0, t_max]")));
            }
        }
        let it = &self.itebd;
        if it.steps.is_empty() || it.steps.iter().any(|(d, n)| !(*d > 0.0) || *n == 0) {
            return Err(range_err("itebd steps need dtau > 0 and at least one iteration"));
        }
        if it.steps.windows(2).any(|w| w[1].0 >= w[0].0) {
            return Err(range_err("itebd dtau values must strictly decrease"));
        }
        if !(it.energy_tol > 0.0) || !(it.lambda_tol > 0.0) {
            return Err(range_err("itebd tolerances must be > 0"));
        }
        if it.init == Some(InitKind::Aklt) && p.spin != 1.0 {
            return Err(range_err("the AKLT start needs spin 1"));
        }
        let sp = &self.spectral;
        if sp.q_points == 0 || sp.omega_points == 0 || !(sp.q_max >= 0.0) || !(sp.omega_max >= 0.0) {
            return Err(range_err("spectral grids must be non-empty"));
        }
        if !(self.svd_tol >= 0.0) || self.svd_tol >= 1.0 {
            return Err(range_err("svd_tol must lie in [0, 1)"));
        }
        if self.checkpoint_every == 0 {
            return Err(range_err("checkpoint_every must be ≥ 1"));
        }
        Ok(())
    }

    pub fn model_params(&self) -> ModelParams {
        match &self.model {
            ModelSpec::Name(name) => ModelParams {
                name: name.clone(),
                spin: if name == "tfi" { 0.5 } else { 1.0 },
                coupling: 1.0,
                field: 0.0,
            },
            ModelSpec::Full(p) => p.clone(),
        }
    }

    pub fn two_s(&self) -> usize {
        (2.0 * self.model_params().spin).round() as usize
    }

    pub fn mpo(&self) -> Result<Mpo, CliError> {
        let p = self.model_params();
        let mpo = match p.name.as_str() {
            "heisenberg_s1" | "heisenberg" => heisenberg_mpo(self.two_s(), p.coupling, p.field)?,
            "tfi" => tfi_mpo(p.coupling, p.field)?,
            other => return Err(range_err(format!("unknown model '{other}'"))),
        };
        Ok(mpo)
    }

    pub fn chi_max(&self) -> usize {
        self.chi_max.unwrap_or(self.chi)
    }

    pub fn perturbation_site(&self) -> usize {
        self.perturbation.site.unwrap_or(self.window_size / 2)
    }

    pub fn perturbation_operator(&self) -> Option<DenseTensor> {
        SpinOperators::new(self.two_s()).by_name(&self.perturbation.operator)
    }

    pub fn t_window(&self) -> f64 {
        self.t_window.unwrap_or(self.t_max)
    }

    /// Number of evolution steps, `round(t_max / dt)`.
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn itebd_schedule(&self) -> ItebdSchedule {
        let init = match self.itebd.init {
            Some(InitKind::Aklt) => InitialState::Aklt,
            Some(InitKind::Random) => InitialState::Random { seed: self.seed },
            None if self.two_s() == 2 => InitialState::Aklt,
            None => InitialState::Random { seed: self.seed },
        };
        ItebdSchedule {
            steps: self.itebd.steps.clone(),
            chi: self.chi,
            init,
            energy_tol: self.itebd.energy_tol,
            lambda_tol: self.itebd.lambda_tol,
        }
    }

    /// SHA-256 over the canonical serialization, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Hash of the fields that determine the ground state only.
    pub fn ground_state_hash(&self) -> String {
        let key = serde_json::json!({
            "model": self.model_params(),
            "chi": self.chi,
            "itebd": self.itebd,
            "seed": self.seed,
        });
        let digest = Sha256::digest(key.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
