use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use specres_core::admm::{solve_regularized, AdmmParams, AdmmSolver, Mode, TargetRefresh};
use specres_core::Error;
use specres_core::localize::{dual_surface, locate_from_dual, music_spectrum, locate_music_peaks, ModelOrder};
use specres_core::tensor::{
    full_mask, nmse, observe, random_mask, snr_to_noise_var, synthesize, Dims, Measurement, SpectralModel,
};
use specres_core::toeplitz::FrequencyBand;

const F1: [f64; 2] = [0.35, 0.51];
const F2: [f64; 2] = [0.31, 0.59];

fn dims() -> Dims {
    Dims::new(vec![8, 8]).unwrap()
}

fn bands() -> Vec<FrequencyBand> {
    vec![FrequencyBand::new(0.3, 0.4).unwrap(), FrequencyBand::new(0.5, 0.6).unwrap()]
}

fn model(phases: [f64; 2]) -> SpectralModel {
    SpectralModel::new(
        vec![F1.to_vec(), F2.to_vec()],
        phases.iter().map(|&p| Complex64::from_polar(1.0, p)).collect(),
    )
    .unwrap()
}

fn masked_scene(seed: u64) -> (Measurement, DVector<Complex64>) {
    let x = synthesize(&model([0.0, 0.0]), &dims()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = random_mask(&dims(), 40, &mut rng).unwrap();
    (observe(&x, &p, 0.0, seed).unwrap(), x.data)
}

fn close_to(found: &[Vec<f64>], truth: &[f64], tol: f64) -> bool {
    found.iter().any(|f| f.iter().zip(truth).all(|(a, b)| (a - b).abs() <= tol))
}

#[test]
fn masked_scene_recovers_and_localizes() {
    let (meas, x) = masked_scene(7);
    let solver = AdmmSolver::new(&meas, &bands(), AdmmParams::noiseless(), Mode::Constrained)
        .unwrap()
        .with_reference(&x);
    let out = solver.solve().unwrap();
    assert_eq!(out.trace.len(), 2000);
    let err = nmse(&out.x_hat, &x).unwrap();
    assert!(err < 1e-3, "nmse {err}");
    assert!(out.trace[1000].primal_residual < out.trace[10].primal_residual);
    assert!((out.final_objective() - 2.0).abs() < 1e-2);

    let surface = dual_surface(&out.dual_embedding, &meas.dims, &bands(), 1e-3).unwrap();
    let peaks = locate_from_dual(&surface, 1.0, 0.1).unwrap();
    assert_eq!(peaks.len(), 2, "{peaks:?}");
    for p in &peaks {
        assert!((0.9..=1.1).contains(&p.value), "{p:?}");
    }
    let found: Vec<Vec<f64>> = peaks.into_iter().map(|p| p.freq).collect();
    assert!(close_to(&found, &F1, 2e-3) && close_to(&found, &F2, 2e-3), "{found:?}");

    let spec = music_spectrum(&out.b_hat, ModelOrder::Fixed(2), &bands(), 1e-3).unwrap();
    let found: Vec<Vec<f64>> =
        locate_music_peaks(&spec, 0.9, Some(2)).unwrap().into_iter().map(|p| p.freq).collect();
    assert!(close_to(&found, &F1, 2e-3) && close_to(&found, &F2, 2e-3), "{found:?}");
}

#[test]
fn no_prior_full_observation() {
    let x = synthesize(&model([0.3, 1.9]), &dims()).unwrap();
    let meas = observe(&x, &full_mask(&dims()), 0.0, 0).unwrap();
    let wide = vec![FrequencyBand::full_width(1e-6); 2];
    let params = AdmmParams { inner_iters: 0, ..AdmmParams::noiseless() };
    let out = AdmmSolver::new(&meas, &wide, params, Mode::Constrained).unwrap().solve().unwrap();
    let err = nmse(&out.x_hat, &x.data).unwrap();
    assert!(err < 1e-2, "nmse {err}");
}

#[test]
fn regularized_dual_level_and_consistency() {
    let x = synthesize(&model([0.4, 2.1]), &dims()).unwrap();
    let sigma = snr_to_noise_var(2, 15.0).unwrap().sqrt();
    let meas = observe(&x, &full_mask(&dims()), sigma, 0).unwrap();
    let lambda = 2.0119;
    let out = solve_regularized(&meas, &bands(), AdmmParams::noisy(lambda)).unwrap();
    let mismatch = out.dual_mismatch.unwrap();
    assert!(mismatch < 0.05, "mismatch {mismatch}");

    let surface = dual_surface(&out.dual_embedding, &meas.dims, &bands(), 1e-3).unwrap();
    let peaks = locate_from_dual(&surface, lambda, 0.15).unwrap();
    assert!(!peaks.is_empty());
    for p in &peaks {
        assert!((p.value / lambda - 1.0).abs() <= 0.15, "{p:?}");
    }
    let spec = music_spectrum(&out.b_hat, ModelOrder::Fixed(2), &bands(), 1e-3).unwrap();
    let found: Vec<Vec<f64>> =
        locate_music_peaks(&spec, 0.9, Some(2)).unwrap().into_iter().map(|p| p.freq).collect();
    assert!(close_to(&found, &F1, 1e-2) && close_to(&found, &F2, 1e-2), "{found:?}");
}

#[test]
fn regularized_weight_limits() {
    let x = synthesize(&model([1.0, -0.5]), &dims()).unwrap();
    let meas = observe(&x, &full_mask(&dims()), 0.0, 0).unwrap();

    let tiny = solve_regularized(&meas, &bands(), AdmmParams::noisy(1e-6)).unwrap();
    let err = nmse(&tiny.x_hat, &meas.y).unwrap();
    assert!(err < 1e-2, "nmse {err}");

    let huge = 10.0 * meas.y.norm();
    let big = solve_regularized(&meas, &bands(), AdmmParams::noisy(huge)).unwrap();
    assert!(big.x_hat.norm() < meas.y.norm() / 10.0, "{}", big.x_hat.norm());
}

#[test]
fn fixed_targets_blow_up_at_noisy_defaults() {
    let x = synthesize(&model([0.4, 2.1]), &dims()).unwrap();
    let sigma = snr_to_noise_var(2, 15.0).unwrap().sqrt();
    let meas = observe(&x, &full_mask(&dims()), sigma, 0).unwrap();
    let params = AdmmParams { targets: TargetRefresh::PerIteration, ..AdmmParams::noisy(2.0119) };
    match solve_regularized(&meas, &bands(), params) {
        Err(Error::Divergence { iteration, .. }) => assert!(iteration < params.max_iters),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.trace.len())),
    }
}
