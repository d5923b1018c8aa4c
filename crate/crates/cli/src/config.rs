//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use specres_core::admm::{default_lambda, AdmmParams, Mode, TargetRefresh};
use specres_core::tensor::{snr_to_noise_var, Dims};
use specres_core::toeplitz::FrequencyBand;

use crate::error::{CliError, CliResult};

/// Band edge used for the no-prior runs.
pub const FULL_WIDTH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Constrained,
    Regularized,
}

impl From<SolverKind> for Mode {
    fn from(kind: SolverKind) -> Self {
        match kind {
            SolverKind::Constrained => Mode::Constrained,
            SolverKind::Regularized => Mode::Regularized,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Sampling {
    Full,
    Mask { ns: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Localizer {
    Dual,
    Music,
}

/// Solver overrides; unset fields take the defaults of the chosen solver.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub varrho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    /// Regularization weight; defaults to `σ sqrt(2 ln N_D)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Refinement target refresh interval in sweeps; 0 keeps targets fixed
    /// for the whole ADMM iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refresh_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<f64>,
}

/// Parameter sweeps for the multi-point experiments.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snr_db: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ns: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub r: Vec<usize>,
    /// Side lengths for the benchmark; every dimension uses the same size.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dims: Vec<usize>,
    /// `[low, high]` per dimension; `low > high` wraps around.
    pub bands: Vec<[f64; 2]>,
    pub r: usize,
    /// Fixed frequencies; drawn uniformly inside the bands when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freqs: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_sampling")]
    pub sampling: Sampling,
    /// Noiseless when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    /// Defaults to regularized for noisy scenes, constrained otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverKind>,
    #[serde(default)]
    pub params: ParamsConfig,
    /// Band constraints on; off means `K = 0` and full-width bands.
    #[serde(default = "yes")]
    pub fs: bool,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_localizer")]
    pub localizer: Localizer,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_sampling() -> Sampling {
    Sampling::Full
}
fn yes() -> bool {
    true
}
fn default_trials() -> usize {
    10
}
fn default_grid_step() -> f64 {
    1e-3
}
fn default_rel_tol() -> f64 {
    0.1
}
fn default_localizer() -> Localizer {
    Localizer::Music
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}

impl ExperimentConfig {
    /// The two-tone 8×8 scene with bands `[0.3, 0.4] × [0.5, 0.6]`.
    pub fn reference() -> Self {
        Self {
            dims: vec![8, 8],
            bands: vec![[0.3, 0.4], [0.5, 0.6]],
            r: 2,
            freqs: None,
            sampling: Sampling::Full,
            snr_db: None,
            solver: None,
            params: ParamsConfig::default(),
            fs: true,
            trials: default_trials(),
            seed: 0,
            grid_step: default_grid_step(),
            rel_tol: default_rel_tol(),
            localizer: default_localizer(),
            out: default_out(),
            sweep: SweepConfig::default(),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        let dims = self.dims()?;
        self.frequency_bands()?;
        if self.bands.len() != dims.ndim() {
            return Err(CliError::Config(format!("{} bands for {} dimensions", self.bands.len(), dims.ndim())));
        }
        if self.trials == 0 {
            return Err(CliError::Config("trials must be >= 1".into()));
        }
        if !(self.grid_step > 0.0) {
            return Err(CliError::Config(format!("grid_step must be > 0, got {}", self.grid_step)));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(CliError::Config(format!("rel_tol must lie in (0, 1), got {}", self.rel_tol)));
        }
        if let Sampling::Mask { ns } = self.sampling {
            if ns == 0 || ns > dims.total() {
                return Err(CliError::Config(format!("mask needs 1..={} samples, got {ns}", dims.total())));
            }
        }
        if let Some(freqs) = &self.freqs {
            if freqs.len() != self.r || freqs.iter().any(|f| f.len() != dims.ndim()) {
                return Err(CliError::Config(format!("freqs must hold r = {} vectors of length {}", self.r, dims.ndim())));
            }
        }
        if self.solver_kind() == SolverKind::Regularized && self.snr_db.is_none() && self.params.lambda.is_none() {
            return Err(CliError::Config("regularized solver needs snr_db or params.lambda".into()));
        }
        self.admm_params(self.noise_std()?)?.validate(self.solver_kind().into())?;
        Ok(())
    }

    pub fn dims(&self) -> CliResult<Dims> {
        Ok(Dims::new(self.dims.clone())?)
    }

    /// Bands from the config, regardless of the `fs` switch.
    pub fn frequency_bands(&self) -> CliResult<Vec<FrequencyBand>> {
        Ok(self.bands.iter().map(|&[lo, hi]| FrequencyBand::new(lo, hi)).collect::<Result<_, _>>()?)
    }

    /// Bands handed to the solver: full-width when `fs` is off.
    pub fn solver_bands(&self) -> CliResult<Vec<FrequencyBand>> {
        if self.fs {
            self.frequency_bands()
        } else {
            Ok(vec![FrequencyBand::full_width(FULL_WIDTH_EPS); self.dims.len()])
        }
    }

    pub fn solver_kind(&self) -> SolverKind {
        self.solver.unwrap_or(if self.snr_db.is_some() { SolverKind::Regularized } else { SolverKind::Constrained })
    }

    pub fn noise_std(&self) -> CliResult<f64> {
        match self.snr_db {
            Some(snr) => Ok(snr_to_noise_var(self.r.max(1), snr)?.sqrt()),
            None => Ok(0.0),
        }
    }

    /// Solver parameters after applying overrides and the `fs` switch.
    pub fn admm_params(&self, noise_std: f64) -> CliResult<AdmmParams> {
        let n_d = self.dims.iter().product();
        let mut p = match self.solver_kind() {
            SolverKind::Constrained => AdmmParams::noiseless(),
            SolverKind::Regularized => {
                AdmmParams::noisy(self.params.lambda.unwrap_or_else(|| default_lambda(noise_std, n_d)))
            }
        };
        let o = &self.params;
        p.rho = o.rho.unwrap_or(p.rho);
        p.varrho = o.varrho.unwrap_or(p.varrho);
        p.inner_iters = o.inner_iters.unwrap_or(p.inner_iters);
        p.max_iters = o.max_iters.unwrap_or(p.max_iters);
        p.early_stop = o.early_stop.or(p.early_stop);
        if let Some(m) = o.refresh_every {
            p.targets = if m == 0 { TargetRefresh::PerIteration } else { TargetRefresh::EverySweeps(m) };
        }
        if !self.fs {
            p.inner_iters = 0;
        }
        Ok(p)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
