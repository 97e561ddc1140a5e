//! Run configuration: TOML grammar, defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use voltra::bsvie::GradCheckSettings;
use voltra::certify::{CertSettings, GrowthConstants, Mode, RadiusPolicy};
use voltra::{BasisSpec, PicardOptions};

use crate::presets::Problem;

/// Raised for anything wrong with the configuration; maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ConfigError {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::Subcommand)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Solve a BSVIE preset through its coupled system.
    SolveBsvie,
    /// Solve a coupled system preset (BSVIE presets are wrapped).
    SolveSystem,
    /// Evaluate the κ-conditions of the certification block.
    CheckAssumptions,
    /// Brute-force the two scalar optimization lemmas.
    VerifyLemmas,
    /// Solve a BSVIE and test the diagonal flow identity.
    FlowCheck,
    /// Compare against the exact tree reference.
    OracleCompare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveBsvie => "solve-bsvie",
            Command::SolveSystem => "solve-system",
            Command::CheckAssumptions => "check-assumptions",
            Command::VerifyLemmas => "verify-lemmas",
            Command::FlowCheck => "flow-check",
            Command::OracleCompare => "oracle-compare",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub n_steps: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { horizon: 1.0, n_steps: 8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    MonteCarlo,
    /// Full binary tree with `2^N` paths; `n_paths` is ignored.
    Tree,
}

/// Scalar state `X = x0 + σB`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub kind: EnsembleKind,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: f64,
    pub sigma: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            kind: EnsembleKind::MonteCarlo,
            n_paths: 10_000,
            seed: 0,
            x0: 0.0,
            sigma: 1.0,
        }
    }
}

/// Certification block; `constants` may be left out for presets that know theirs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertConfig {
    pub kappa: f64,
    pub eps: Vec<f64>,
    pub mode: Mode,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub r_sq: Option<f64>,
    #[serde(default)]
    pub constants: Option<GrowthConstants>,
    #[serde(default)]
    pub radius_policy: RadiusPolicy,
}

impl CertConfig {
    pub fn settings(&self, fallback: Option<GrowthConstants>) -> Result<CertSettings, ConfigError> {
        let constants = self.constants.or(fallback).ok_or_else(|| {
            ConfigError::new("certification.constants is required for this preset (growth constants are not known)")
        })?;
        Ok(CertSettings {
            kappa: self.kappa,
            eps: self.eps.clone(),
            gamma: self.gamma,
            r_sq: self.r_sq,
            c: self.c,
            mode: self.mode,
            constants,
            radius_policy: self.radius_policy,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Node pairs `(a, b)`; empty means every `(i, i+1)` plus `(0, N)`.
    pub pairs: Vec<(usize, usize)>,
    /// RMS threshold; unset means `5(Δ + 1/√n)`.
    pub bound: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    /// Largest accepted absolute gap to the reference.
    pub tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { tol: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LemmaConfig {
    pub resolution: usize,
}

impl Default for LemmaConfig {
    fn default() -> Self {
        Self { resolution: 1000 }
    }
}

/// Which CSV files to write.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DumpConfig {
    pub ensemble: bool,
    pub family: bool,
    pub diagonal: bool,
    pub trace: bool,
    pub policy: bool,
    pub flow: bool,
}

impl Default for DumpConfig {
    fn default() -> Self {
        Self {
            ensemble: false,
            family: false,
            diagonal: true,
            trace: true,
            policy: true,
            flow: true,
        }
    }
}

/// A fully resolved run. Every section has defaults except `problem`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; must agree with the subcommand when present.
    #[serde(default)]
    pub command: Option<Command>,
    #[serde(default)]
    pub problem: Option<Problem>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub basis: BasisSpec,
    #[serde(default)]
    pub solver: PicardOptions,
    #[serde(default)]
    pub certification: Option<CertConfig>,
    #[serde(default)]
    pub grad_check: Option<GradCheckSettings>,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub lemmas: LemmaConfig,
    #[serde(default)]
    pub dump: DumpConfig,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
}

fn default_output() -> PathBuf {
    PathBuf::from("voltra-out")
}

impl Default for RunConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty configuration parses")
    }
}

/// Parses TOML text; unknown keys are errors.
pub fn parse_str(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::new(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
    parse_str(&text).map_err(|e| ConfigError::new(format!("{}: {e}", path.display())))
}

impl RunConfig {
    /// Range checks that the type system cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::new(msg));
        if !(self.grid.horizon > 0.0 && self.grid.horizon.is_finite()) {
            return bad(format!("grid.horizon must be positive, got {}", self.grid.horizon));
        }
        if self.grid.n_steps == 0 {
            return bad("grid.n_steps must be at least 1".into());
        }
        if self.ensemble.kind == EnsembleKind::MonteCarlo && self.ensemble.n_paths < 2 {
            return bad(format!("ensemble.n_paths must be at least 2, got {}", self.ensemble.n_paths));
        }
        if self.ensemble.kind == EnsembleKind::Tree && self.grid.n_steps > 20 {
            return bad("tree ensembles are limited to 20 steps".into());
        }
        if !(self.ensemble.sigma > 0.0 && self.ensemble.sigma.is_finite()) {
            return bad(format!("ensemble.sigma must be positive, got {}", self.ensemble.sigma));
        }
        if !self.ensemble.x0.is_finite() {
            return bad("ensemble.x0 must be finite".into());
        }
        self.basis.validate().map_err(|e| ConfigError::new(format!("basis: {e}")))?;
        if !(self.solver.tol > 0.0) {
            return bad(format!("solver.tol must be positive, got {}", self.solver.tol));
        }
        if self.solver.max_iter == 0 {
            return bad("solver.max_iter must be at least 1".into());
        }
        if !(self.solver.c >= 0.0) {
            return bad(format!("solver.c must be nonnegative, got {}", self.solver.c));
        }
        if let Some(r) = self.solver.truncation {
            if !(r > 0.0) {
                return bad(format!("solver.truncation must be positive, got {r}"));
            }
        }
        if let Some(cert) = &self.certification {
            if !(cert.kappa > 0.0) {
                return bad(format!("certification.kappa must be positive, got {}", cert.kappa));
            }
            if cert.eps.iter().any(|e| !(*e > 0.0)) {
                return bad("certification.eps entries must be positive".into());
            }
            if cert.eps.len() < cert.mode.eps_len() {
                return bad(format!(
                    "certification.eps needs {} entries in this mode, got {}",
                    cert.mode.eps_len(),
                    cert.eps.len()
                ));
            }
        }
        if let Some(gc) = &self.grad_check {
            if gc.samples == 0 || !(gc.step > 0.0) || !(gc.tol > 0.0) {
                return bad("grad_check needs samples ≥ 1 and positive step and tol".into());
            }
        }
        let n = self.grid.n_steps;
        if let Some(&(a, b)) = self.flow.pairs.iter().find(|(a, b)| a >= b || *b > n) {
            return bad(format!("flow pair ({a}, {b}) must satisfy a < b ≤ {n}"));
        }
        if let Some(b) = self.flow.bound {
            if !(b > 0.0) {
                return bad(format!("flow.bound must be positive, got {b}"));
            }
        }
        if !(self.oracle.tol > 0.0) {
            return bad(format!("oracle.tol must be positive, got {}", self.oracle.tol));
        }
        if self.lemmas.resolution < 100 {
            return bad(format!("lemmas.resolution must be at least 100, got {}", self.lemmas.resolution));
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if let Some(p) = &self.problem {
            p.validate(self.grid.horizon)?;
        }
        Ok(())
    }

    /// The problem block, which every solving subcommand needs.
    pub fn problem(&self) -> Result<&Problem, ConfigError> {
        self.problem
            .as_ref()
            .ok_or_else(|| ConfigError::new("missing [problem] section (preset = \"...\")"))
    }
}
