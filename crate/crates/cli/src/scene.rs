//! Synthetic scenes and the JSON scene/solution files.

use std::f64::consts::TAU;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use specres_core::admm::{AdmmParams, Mode, SolverOutput};
use specres_core::localize::{Estimate, Method};
use specres_core::tensor::{
    full_mask, observe_with_rng, random_mask, synthesize, ComplexTensor, Dims, Measurement, SpectralModel,
};
use specres_core::toeplitz::{FrequencyBand, GeneratorTensor};

use crate::config::{ExperimentConfig, Sampling};
use crate::error::{CliError, CliResult};

pub const SCENE_FORMAT: &str = "specres-scene/1";
pub const SOLUTION_FORMAT: &str = "specres-solution/1";

/// Ground truth plus the measurement drawn from it.
#[derive(Debug, Clone)]
pub struct Scene {
    pub dims: Dims,
    pub bands: Vec<FrequencyBand>,
    pub model: SpectralModel,
    pub x: DVector<Complex64>,
    pub meas: Measurement,
    pub noise_std: f64,
    pub seed: u64,
}

impl Scene {
    /// Draw frequencies (uniform inside the bands unless fixed), unit-modulus
    /// gains with uniform phase, the sampling mask and the noise, in that
    /// order, from one stream seeded by `seed`.
    pub fn generate(cfg: &ExperimentConfig, seed: u64) -> CliResult<Self> {
        let dims = cfg.dims()?;
        let bands = cfg.frequency_bands()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let freqs = match &cfg.freqs {
            Some(f) => f.clone(),
            None => (0..cfg.r)
                .map(|_| bands.iter().map(|b| (b.low() + rng.random::<f64>() * b.width()).rem_euclid(1.0)).collect())
                .collect(),
        };
        let gains = (0..cfg.r).map(|_| Complex64::from_polar(1.0, TAU * rng.random::<f64>())).collect();
        let model = SpectralModel::new(freqs, gains)?;
        let x = synthesize(&model, &dims)?;
        let p = match cfg.sampling {
            Sampling::Full => full_mask(&dims),
            Sampling::Mask { ns } => random_mask(&dims, ns, &mut rng)?,
        };
        let noise_std = cfg.noise_std()?;
        let meas = observe_with_rng(&x, &p, noise_std, &mut rng)?;
        Ok(Self { dims, bands, model, x: x.data, meas, noise_std, seed })
    }

    pub fn to_file(&self) -> SceneFile {
        SceneFile {
            format: SCENE_FORMAT.into(),
            dims: self.dims.sizes().to_vec(),
            bands: self.bands.iter().map(|b| [b.low(), b.high()]).collect(),
            freqs: self.model.freqs.clone(),
            gains: to_pairs(self.model.gains.iter()),
            x: to_pairs(self.x.iter()),
            mask: to_pairs(self.meas.phi.iter()),
            y: to_pairs(self.meas.y.iter()),
            noise_std: self.noise_std,
            seed: self.seed,
        }
    }

    pub fn from_file(file: &SceneFile) -> CliResult<Self> {
        if file.format != SCENE_FORMAT {
            return Err(CliError::Schema(format!("format {:?}, expected {SCENE_FORMAT:?}", file.format)));
        }
        let dims = Dims::new(file.dims.clone())?;
        let n = dims.total();
        for (name, len) in [("x", file.x.len()), ("mask", file.mask.len()), ("y", file.y.len())] {
            if len != n {
                return Err(CliError::Schema(format!("{name} has {len} entries, dims need {n}")));
            }
        }
        if file.bands.len() != dims.ndim() {
            return Err(CliError::Schema(format!("{} bands for {} dimensions", file.bands.len(), dims.ndim())));
        }
        let bands = file.bands.iter().map(|&[lo, hi]| FrequencyBand::new(lo, hi)).collect::<Result<_, _>>()?;
        let model = SpectralModel::new(file.freqs.clone(), from_pairs(&file.gains))?;
        let x = DVector::from_vec(from_pairs(&file.x));
        let p = ComplexTensor::from_vec(dims.clone(), DVector::from_vec(from_pairs(&file.mask)))?;
        let meas = Measurement::new(dims.clone(), DVector::from_vec(from_pairs(&file.y)), p.data)?;
        Ok(Self { dims, bands, model, x, meas, noise_std: file.noise_std, seed: file.seed })
    }
}

/// Scene on disk; complex values are `[re, im]` pairs in vectorized order
/// (last dimension fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub format: String,
    pub dims: Vec<usize>,
    pub bands: Vec<[f64; 2]>,
    pub freqs: Vec<Vec<f64>>,
    pub gains: Vec<[f64; 2]>,
    pub x: Vec<[f64; 2]>,
    pub mask: Vec<[f64; 2]>,
    pub y: Vec<[f64; 2]>,
    pub noise_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsRecord {
    pub rho: f64,
    pub varrho: f64,
    pub inner_iters: usize,
    pub max_iters: usize,
    pub lambda: Option<f64>,
}

impl From<&AdmmParams> for ParamsRecord {
    fn from(p: &AdmmParams) -> Self {
        Self { rho: p.rho, varrho: p.varrho, inner_iters: p.inner_iters, max_iters: p.max_iters, lambda: p.lambda }
    }
}

/// Generator tensor with offsets stored from `-(N_i - 1)` upwards, last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorRecord {
    pub shape: Vec<usize>,
    pub data: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateRecord {
    pub method: String,
    pub freqs: Vec<Vec<f64>>,
    pub gains: Vec<[f64; 2]>,
}

/// Solver result on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub format: String,
    pub solver: String,
    pub params: ParamsRecord,
    pub iterations: usize,
    pub objective: f64,
    pub x_hat: Vec<[f64; 2]>,
    pub t_hat: f64,
    pub b_hat: GeneratorRecord,
    /// `Φ^H ν̂`.
    pub dual_embedding: Vec<[f64; 2]>,
    pub dual_mismatch: Option<f64>,
    pub nmse: Option<f64>,
    pub estimate: Option<EstimateRecord>,
}

impl SolutionFile {
    pub fn new(out: &SolverOutput, params: &AdmmParams, nmse: Option<f64>, estimate: Option<&Estimate>) -> Self {
        Self {
            format: SOLUTION_FORMAT.into(),
            solver: match out.mode {
                Mode::Constrained => "constrained".into(),
                Mode::Regularized => "regularized".into(),
            },
            params: params.into(),
            iterations: out.trace.len(),
            objective: out.final_objective(),
            x_hat: to_pairs(out.x_hat.iter()),
            t_hat: out.t_hat,
            b_hat: GeneratorRecord { shape: out.b_hat.shape().to_vec(), data: to_pairs(out.b_hat.data.iter()) },
            dual_embedding: to_pairs(out.dual_embedding.iter()),
            dual_mismatch: out.dual_mismatch,
            nmse,
            estimate: estimate.map(|e| EstimateRecord {
                method: match e.method {
                    Method::Dual => "dual".into(),
                    Method::Music => "music".into(),
                },
                freqs: e.freqs.clone(),
                gains: to_pairs(e.gains.iter()),
            }),
        }
    }

    /// Recovered generator, checked against the scene dimensions.
    pub fn generator(&self, dims: &Dims) -> CliResult<GeneratorTensor> {
        let want: Vec<usize> = dims.sizes().iter().map(|&n| 2 * n - 1).collect();
        if self.b_hat.shape != want {
            return Err(CliError::Schema(format!("b_hat shape {:?}, expected {want:?}", self.b_hat.shape)));
        }
        Ok(GeneratorTensor::from_data(dims, DVector::from_vec(from_pairs(&self.b_hat.data)))?)
    }
}

pub fn to_pairs<'a>(values: impl Iterator<Item = &'a Complex64>) -> Vec<[f64; 2]> {
    values.map(|c| [c.re, c.im]).collect()
}

pub fn from_pairs(pairs: &[[f64; 2]]) -> Vec<Complex64> {
    pairs.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
}
