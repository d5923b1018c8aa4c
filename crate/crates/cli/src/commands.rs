//! Command implementations writing into an output directory.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiment::{self, peak_table, solve_scene, Solved};
use crate::output::{write_atomic, write_json, Metadata, ResultTable};
use crate::scene::{Scene, SceneFile, SolutionFile};

/// Files written by a command.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Written(pub Vec<PathBuf>);

fn meta(cfg: &ExperimentConfig) -> Metadata {
    Metadata::new(cfg.hash(), cfg.seed)
}

fn save_table(table: &ResultTable, path: PathBuf) -> CliResult<Written> {
    table.save(&path)?;
    Ok(Written(vec![path]))
}

/// `scene.json` for trial 0.
pub fn synth(cfg: &ExperimentConfig) -> CliResult<Written> {
    let scene = Scene::generate(cfg, experiment::trial_seed(cfg.seed, 0))?;
    let path = cfg.out.join("scene.json");
    write_json(&path, &scene.to_file())?;
    Ok(Written(vec![path]))
}

pub fn load_scene(path: &Path) -> CliResult<Scene> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: SceneFile =
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
    Scene::from_file(&file)
}

pub fn load_solution(path: &Path) -> CliResult<SolutionFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
}

/// Solve a scene file: `solution.json` and `trace.csv`.
pub fn solve(cfg: &ExperimentConfig, scene: &Scene) -> CliResult<(Written, Solved)> {
    let solved = solve_scene(cfg, scene)?;
    let estimate = experiment::localize(cfg, scene, &solved)?;
    let nmse = solved.nmse.is_finite().then_some(solved.nmse);
    let file = SolutionFile::new(&solved.output, &solved.params, nmse, Some(&estimate));
    let json = cfg.out.join("solution.json");
    write_json(&json, &file)?;
    let trace = cfg.out.join("trace.csv");
    let m = meta(cfg);
    write_atomic(&trace, |w| {
        writeln!(w, "# config_hash={}", m.config_hash)?;
        writeln!(w, "# seed={}", m.seed)?;
        writeln!(w, "# version={}", m.version)?;
        solved.output.write_trace_csv(w)
    })?;
    Ok((Written(vec![json, trace]), solved))
}

pub fn convergence(cfg: &ExperimentConfig) -> CliResult<(Written, ResultTable)> {
    let table = experiment::convergence(cfg)?;
    Ok((save_table(&table, cfg.out.join("convergence.csv"))?, table))
}

pub fn phase_transition(cfg: &ExperimentConfig) -> CliResult<(Written, ResultTable)> {
    let table = experiment::phase_transition(cfg)?;
    Ok((save_table(&table, cfg.out.join("phase_transition.csv"))?, table))
}

pub fn rmse_snr(cfg: &ExperimentConfig) -> CliResult<(Written, ResultTable)> {
    let table = experiment::rmse_snr(cfg)?;
    Ok((save_table(&table, cfg.out.join("rmse_snr.csv"))?, table))
}

/// `dual_surface.csv` and `dual_peaks.csv`.
pub fn dual_surface(cfg: &ExperimentConfig) -> CliResult<(Written, experiment::DualReport)> {
    let report = experiment::dual_report(cfg)?;
    let m = meta(cfg);
    let surface = cfg.out.join("dual_surface.csv");
    write_atomic(&surface, |w| {
        writeln!(w, "# config_hash={}", m.config_hash)?;
        writeln!(w, "# seed={}", m.seed)?;
        writeln!(w, "# version={}", m.version)?;
        writeln!(w, "# level={}", report.level)?;
        report.surface.write_csv(w)
    })?;
    let peaks = cfg.out.join("dual_peaks.csv");
    peak_table(&report.peaks, cfg.dims.len(), m).save(&peaks)?;
    Ok((Written(vec![surface, peaks]), report))
}

pub fn bench(cfg: &ExperimentConfig) -> CliResult<(Written, ResultTable)> {
    let table = experiment::bench(cfg)?;
    Ok((save_table(&table, cfg.out.join("bench.csv"))?, table))
}
