//! Multi-trial experiments built on the core solvers.

use std::time::Instant;

use rayon::prelude::*;
use specres_core::admm::{AdmmParams, AdmmSolver, Mode, SolverOutput};
use specres_core::localize::{
    dual_surface, estimate_gains, locate_from_dual, locate_music_peaks, music_spectrum, DualSurface, Estimate,
    Method, ModelOrder, Peak,
};
use specres_core::tensor::nmse;
use specres_core::Complex64;

use crate::config::{ExperimentConfig, Localizer, Sampling};
use crate::error::CliResult;
use crate::metrics::{absolute_errors, rmse};
use crate::output::{Metadata, ResultTable};
use crate::scene::Scene;

/// Recovery counts as a success below this NMSE.
pub const SUCCESS_NMSE: f64 = 1e-3;
/// Pseudospectrum values below this quantile never count as peaks.
pub const MUSIC_QUANTILE: f64 = 0.9;

/// RNG seed of trial `index`.
pub fn trial_seed(seed: u64, index: usize) -> u64 {
    seed ^ index as u64
}

#[derive(Debug, Clone)]
pub struct Solved {
    pub params: AdmmParams,
    pub output: SolverOutput,
    pub nmse: f64,
}

/// Run the configured solver on a scene, tracking NMSE against its ground truth.
pub fn solve_scene(cfg: &ExperimentConfig, scene: &Scene) -> CliResult<Solved> {
    let params = cfg.admm_params(scene.noise_std)?;
    let bands = cfg.solver_bands()?;
    let mode: Mode = cfg.solver_kind().into();
    let mut solver = AdmmSolver::new(&scene.meas, &bands, params, mode)?;
    let has_truth = scene.x.norm() > 0.0;
    if has_truth {
        solver = solver.with_reference(&scene.x);
    }
    let output = solver.solve()?;
    let nmse = if has_truth { nmse(&output.x_hat, &scene.x)? } else { f64::NAN };
    Ok(Solved { params, output, nmse })
}

/// Level of `|Q|` at the recovered frequencies: 1, or `λ` for the regularized solver.
pub fn dual_level(solved: &Solved) -> f64 {
    match solved.output.mode {
        Mode::Constrained => 1.0,
        Mode::Regularized => solved.params.lambda.unwrap_or(1.0),
    }
}

/// Frequencies from the configured localizer, with least-squares gains.
/// MUSIC uses the true model order and returns at most `r` peaks.
pub fn localize(cfg: &ExperimentConfig, scene: &Scene, solved: &Solved) -> CliResult<Estimate> {
    let bands = cfg.solver_bands()?;
    let (peaks, method): (Vec<Peak>, Method) = match cfg.localizer {
        Localizer::Music => {
            let order = cfg.r.clamp(1, scene.dims.total() - 1);
            let spec = music_spectrum(&solved.output.b_hat, ModelOrder::Fixed(order), &bands, cfg.grid_step)?;
            (locate_music_peaks(&spec, MUSIC_QUANTILE, Some(cfg.r))?, Method::Music)
        }
        Localizer::Dual => {
            let surface = dual_surface(&solved.output.dual_embedding, &scene.dims, &bands, cfg.grid_step)?;
            (locate_from_dual(&surface, dual_level(solved), cfg.rel_tol)?, Method::Dual)
        }
    };
    let freqs: Vec<Vec<f64>> = peaks.into_iter().map(|p| p.freq).collect();
    let gains = match estimate_gains(&freqs, &scene.meas) {
        Ok(g) => g,
        Err(_) => vec![Complex64::new(f64::NAN, f64::NAN); freqs.len()],
    };
    Ok(Estimate { freqs, gains, method })
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub index: usize,
    pub seed: u64,
    pub nmse: f64,
    pub success: bool,
    pub iterations: usize,
    /// Localization result when requested.
    pub estimate: Option<Estimate>,
    /// Clipped absolute errors per axis.
    pub errors: Vec<Vec<f64>>,
}

pub fn run_trial(cfg: &ExperimentConfig, index: usize, with_localization: bool) -> CliResult<TrialOutcome> {
    let seed = trial_seed(cfg.seed, index);
    let scene = Scene::generate(cfg, seed)?;
    let solved = solve_scene(cfg, &scene)?;
    let (estimate, errors) = if with_localization {
        let est = localize(cfg, &scene, &solved)?;
        let errors = scene
            .bands
            .iter()
            .enumerate()
            .map(|(axis, band)| absolute_errors(&est.freqs, &scene.model.freqs, axis, band.width()))
            .collect();
        (Some(est), errors)
    } else {
        (None, Vec::new())
    };
    Ok(TrialOutcome {
        index,
        seed,
        nmse: solved.nmse,
        success: solved.nmse < SUCCESS_NMSE,
        iterations: solved.output.trace.len(),
        estimate,
        errors,
    })
}

/// All trials of `cfg`, in parallel, ordered by trial index.
pub fn run_trials(cfg: &ExperimentConfig, with_localization: bool) -> CliResult<Vec<TrialOutcome>> {
    (0..cfg.trials).into_par_iter().map(|k| run_trial(cfg, k, with_localization)).collect()
}

fn meta(cfg: &ExperimentConfig) -> Metadata {
    Metadata::new(cfg.hash(), cfg.seed)
}

/// Success rate over `(N_s, r)`. Columns `ns, r, trials, successes, rate`.
pub fn phase_transition(cfg: &ExperimentConfig) -> CliResult<ResultTable> {
    let n_d: usize = cfg.dims.iter().product();
    let ns_list = if cfg.sweep.ns.is_empty() {
        vec![match cfg.sampling {
            Sampling::Full => n_d,
            Sampling::Mask { ns } => ns,
        }]
    } else {
        cfg.sweep.ns.clone()
    };
    let r_list = if cfg.sweep.r.is_empty() { vec![cfg.r] } else { cfg.sweep.r.clone() };
    let mut table = ResultTable::new(&["ns", "r", "trials", "successes", "rate"], meta(cfg));
    for &ns in &ns_list {
        for &r in &r_list {
            let cell = ExperimentConfig {
                sampling: Sampling::Mask { ns },
                r,
                freqs: if r == cfg.r { cfg.freqs.clone() } else { None },
                ..cfg.clone()
            };
            cell.validate()?;
            let outcomes = run_trials(&cell, false)?;
            let successes = outcomes.iter().filter(|o| o.success).count();
            table.push(vec![
                ns as f64,
                r as f64,
                cell.trials as f64,
                successes as f64,
                successes as f64 / cell.trials as f64,
            ]);
        }
    }
    Ok(table)
}

/// RMSE of the localized frequencies per SNR. Columns `snr_db, rmse_f1..rmse_fd,
/// rmse_mean, mean_nmse`.
pub fn rmse_snr(cfg: &ExperimentConfig) -> CliResult<ResultTable> {
    let snrs = if cfg.sweep.snr_db.is_empty() { vec![cfg.snr_db.unwrap_or(20.0)] } else { cfg.sweep.snr_db.clone() };
    let d = cfg.dims.len();
    let mut columns = vec!["snr_db".to_string()];
    columns.extend((1..=d).map(|i| format!("rmse_f{i}")));
    columns.extend(["rmse_mean".to_string(), "mean_nmse".to_string()]);
    let names: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = ResultTable::new(&names, meta(cfg));
    for &snr in &snrs {
        let point = ExperimentConfig { snr_db: Some(snr), ..cfg.clone() };
        point.validate()?;
        let outcomes = run_trials(&point, true)?;
        let per_axis: Vec<f64> = (0..d)
            .map(|axis| rmse(&outcomes.iter().map(|o| o.errors[axis].clone()).collect::<Vec<_>>()))
            .collect();
        let mean = per_axis.iter().sum::<f64>() / d as f64;
        let mean_nmse = outcomes.iter().map(|o| o.nmse).sum::<f64>() / outcomes.len() as f64;
        let mut row = vec![snr];
        row.extend(per_axis);
        row.extend([mean, mean_nmse]);
        table.push(row);
    }
    Ok(table)
}

/// Per-iteration trace of trial 0. Columns `iteration, nmse, primal_residual,
/// data_residual, objective`.
pub fn convergence(cfg: &ExperimentConfig) -> CliResult<ResultTable> {
    let scene = Scene::generate(cfg, trial_seed(cfg.seed, 0))?;
    let solved = solve_scene(cfg, &scene)?;
    let mut table =
        ResultTable::new(&["iteration", "nmse", "primal_residual", "data_residual", "objective"], meta(cfg));
    for r in &solved.output.trace {
        table.push(vec![
            r.iteration as f64,
            r.nmse.unwrap_or(f64::NAN),
            r.primal_residual,
            r.data_residual,
            r.objective,
        ]);
    }
    Ok(table)
}

#[derive(Debug, Clone)]
pub struct DualReport {
    pub surface: DualSurface,
    pub peaks: Vec<Peak>,
    pub level: f64,
    pub nmse: f64,
}

/// `|Q(f)|` over the bands for trial 0 and its peaks at the dual level.
pub fn dual_report(cfg: &ExperimentConfig) -> CliResult<DualReport> {
    let scene = Scene::generate(cfg, trial_seed(cfg.seed, 0))?;
    let solved = solve_scene(cfg, &scene)?;
    let surface = dual_surface(&solved.output.dual_embedding, &scene.dims, &cfg.solver_bands()?, cfg.grid_step)?;
    let level = dual_level(&solved);
    let peaks = locate_from_dual(&surface, level, cfg.rel_tol)?;
    Ok(DualReport { surface, peaks, level, nmse: solved.nmse })
}

/// Peaks as a table with columns `f1..fd, value`.
pub fn peak_table(peaks: &[Peak], d: usize, meta: Metadata) -> ResultTable {
    let mut columns: Vec<String> = (1..=d).map(|i| format!("f{i}")).collect();
    columns.push("value".into());
    let names: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut table = ResultTable::new(&names, meta);
    for p in peaks {
        let mut row = p.freq.clone();
        row.push(p.value);
        table.push(row);
    }
    table
}

/// Wall-clock time of trial-0 solves per side length, repeated `trials`
/// times. Columns `n, n_d, repeats, seconds_mean, seconds_std, iterations, nmse`.
pub fn bench(cfg: &ExperimentConfig) -> CliResult<ResultTable> {
    let sizes = if cfg.sweep.sizes.is_empty() { vec![8, 12, 16] } else { cfg.sweep.sizes.clone() };
    let d = cfg.dims.len();
    let base_nd: usize = cfg.dims.iter().product();
    let mut table =
        ResultTable::new(&["n", "n_d", "repeats", "seconds_mean", "seconds_std", "iterations", "nmse"], meta(cfg));
    for &n in &sizes {
        let n_d = n.pow(d as u32);
        let sampling = match cfg.sampling {
            Sampling::Full => Sampling::Full,
            Sampling::Mask { ns } => Sampling::Mask { ns: ((ns * n_d) as f64 / base_nd as f64).round().max(1.0) as usize },
        };
        let sized = ExperimentConfig { dims: vec![n; d], sampling, freqs: cfg.freqs.clone(), ..cfg.clone() };
        sized.validate()?;
        let scene = Scene::generate(&sized, trial_seed(cfg.seed, 0))?;
        let mut times = Vec::with_capacity(cfg.trials);
        let mut last = None;
        for _ in 0..cfg.trials {
            let start = Instant::now();
            let solved = solve_scene(&sized, &scene)?;
            times.push(start.elapsed().as_secs_f64());
            last = Some(solved);
        }
        let solved = last.expect("trials >= 1");
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let var = times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / times.len() as f64;
        table.push(vec![
            n as f64,
            n_d as f64,
            times.len() as f64,
            mean,
            var.sqrt(),
            solved.output.trace.len() as f64,
            solved.nmse,
        ]);
    }
    Ok(table)
}
