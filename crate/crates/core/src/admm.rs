//! ADMM solvers for the frequency-selective atomic-norm SDPs.
//!
//! Both solvers split the lifted matrix `Θ = [T(B) x; x^H t]` from the
//! variables `(x, B, t)`. Each iteration performs a closed-form update of
//! `x`, `t` and an intermediate generator, refines the generator towards
//! PSD band-shifted Toeplitz matrices, projects `Θ` onto the PSD cone and
//! takes a dual ascent step.
//!
//! The constrained solver enforces `y = Φx` through an extra dual column
//! `u`; the regularized solver carries a least-squares data term weighted
//! against the atomic norm by `λ`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::hermitian_part;
use crate::tensor::{nmse, Dims, Measurement};
use crate::toeplitz::{
    band_filter, beta_weight, build_toeplitz, interior_map, psd_project, toeplitz_average, BandPolynomial,
    FrequencyBand, GeneratorTensor,
};

/// `|r0|` below this makes the refinement step ill-defined.
const MIN_ABS_R0: f64 = 1e-8;
/// A primal residual above `BLOWUP · (1 + ‖y‖²)` is reported as divergence.
const BLOWUP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmParams {
    /// Penalty `ρ`.
    pub rho: f64,
    /// Refinement weight `ϱ > 1`.
    pub varrho: f64,
    /// Refinement sweeps `K` per axis; 0 disables the band constraints.
    pub inner_iters: usize,
    pub max_iters: usize,
    /// Regularization weight, required by the regularized solver.
    pub lambda: Option<f64>,
    /// Stop once the primal residual falls below this value. Off by default.
    pub early_stop: Option<f64>,
    pub targets: TargetRefresh,
}

/// When the refinement recomputes its PSD targets `𝕡([T_{g_i}(B)]⁺)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetRefresh {
    /// Once per ADMM iteration from `B_temp`, shared by all sweeps.
    #[default]
    PerIteration,
    /// Every `m` sweeps of an axis, from the current generator.
    EverySweeps(usize),
}

impl AdmmParams {
    /// Defaults for the noiseless solver.
    pub fn noiseless() -> Self {
        Self { rho: 0.05, varrho: 9.0, inner_iters: 10, max_iters: 2000, lambda: None, early_stop: None, targets: TargetRefresh::PerIteration }
    }

    /// Defaults for the regularized solver. With `ϱ = 3` and `K = 20` the
    /// sweeps against fixed targets can grow without bound, so targets are
    /// refreshed before every sweep.
    pub fn noisy(lambda: f64) -> Self {
        Self {
            rho: 0.05,
            varrho: 3.0,
            inner_iters: 20,
            max_iters: 1000,
            lambda: Some(lambda),
            early_stop: None,
            targets: TargetRefresh::EverySweeps(1),
        }
    }

    pub fn validate(&self, mode: Mode) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::InvalidParameter(format!("rho must be > 0, got {}", self.rho)));
        }
        if !(self.varrho > 1.0 && self.varrho.is_finite()) {
            return Err(Error::InvalidParameter(format!("varrho must be > 1, got {}", self.varrho)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if self.targets == TargetRefresh::EverySweeps(0) {
            return Err(Error::InvalidParameter("target refresh interval must be >= 1".into()));
        }
        if mode == Mode::Regularized {
            match self.lambda {
                Some(l) if l > 0.0 && l.is_finite() => {}
                other => {
                    return Err(Error::InvalidParameter(format!("lambda must be > 0, got {other:?}")))
                }
            }
        }
        Ok(())
    }
}

/// `λ = σ_w sqrt(2 ln N_D)`.
pub fn default_lambda(noise_std: f64, n_d: usize) -> f64 {
    noise_std * (2.0 * (n_d as f64).ln()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// `min ‖x‖_A s.t. y = Φx`.
    Constrained,
    /// `min ½‖y − Φx‖² + λ‖x‖_A`.
    Regularized,
}

/// Primal and dual iterates. `theta` and `u` are `(N_D+1) × (N_D+1)` with the
/// partition `[bar; col; corner]`; `u_data` is the dual of `y = Φx` and is only
/// present for the constrained solver.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: DVector<Complex64>,
    pub b: GeneratorTensor,
    pub t: f64,
    pub theta: DMatrix<Complex64>,
    pub u: DMatrix<Complex64>,
    pub u_data: Option<DVector<Complex64>>,
}

impl SolverState {
    pub fn zeros(dims: &Dims, mode: Mode) -> Self {
        let n = dims.total();
        Self {
            x: DVector::zeros(n),
            b: GeneratorTensor::zeros(dims),
            t: 0.0,
            theta: DMatrix::zeros(n + 1, n + 1),
            u: DMatrix::zeros(n + 1, n + 1),
            u_data: match mode {
                Mode::Constrained => Some(DVector::zeros(n)),
                Mode::Regularized => None,
            },
        }
    }

    fn n(&self) -> usize {
        self.x.len()
    }

    /// `θ̄`, the last column of `Θ` without the corner.
    pub fn theta_col(&self) -> DVector<Complex64> {
        self.theta.view((0, self.n()), (self.n(), 1)).column(0).into_owned()
    }

    /// `ū`.
    pub fn u_col(&self) -> DVector<Complex64> {
        self.u.view((0, self.n()), (self.n(), 1)).column(0).into_owned()
    }

    pub fn theta_corner(&self) -> f64 {
        self.theta[(self.n(), self.n())].re
    }

    pub fn u_corner(&self) -> f64 {
        self.u[(self.n(), self.n())].re
    }
}

/// `[T(B) x; x^H t]`.
pub fn lifted_matrix(b: &GeneratorTensor, x: &DVector<Complex64>, t: f64) -> DMatrix<Complex64> {
    let n = x.len();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&build_toeplitz(b));
    for k in 0..n {
        m[(k, n)] = x[k];
        m[(n, k)] = x[k].conj();
    }
    m[(n, n)] = Complex64::new(t, 0.0);
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `‖Θ − [T(B) x; x^H t]‖_F` after the dual step.
    pub primal_residual: f64,
    /// `‖y − Φx‖₂`.
    pub data_residual: f64,
    pub objective: f64,
    pub nmse: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    pub mode: Mode,
    pub x_hat: DVector<Complex64>,
    pub b_hat: GeneratorTensor,
    pub t_hat: f64,
    /// `Φ^H ν̂ = −2ū`.
    pub dual_embedding: DVector<Complex64>,
    /// `Φ^H (y − Φx̂)`, regularized solver only.
    pub residual_embedding: Option<DVector<Complex64>>,
    /// `‖(−2ū) − Φ^H(y − Φx̂)‖ / ‖Φ^H(y − Φx̂)‖`, regularized solver only.
    pub dual_mismatch: Option<f64>,
    pub trace: Vec<IterationRecord>,
}

impl SolverOutput {
    pub fn final_objective(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |r| r.objective)
    }

    /// Trace as CSV with header `iteration,primal_residual,data_residual,objective,nmse`.
    pub fn write_trace_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iteration,primal_residual,data_residual,objective,nmse")?;
        for r in &self.trace {
            let nmse = r.nmse.map(|v| format!("{v:e}")).unwrap_or_default();
            writeln!(
                w,
                "{},{:e},{:e},{:e},{}",
                r.iteration, r.primal_residual, r.data_residual, r.objective, nmse
            )?;
        }
        Ok(())
    }
}

/// One ADMM solver instance bound to a measurement and band priors.
#[derive(Debug, Clone)]
pub struct AdmmSolver<'a> {
    meas: &'a Measurement,
    params: AdmmParams,
    mode: Mode,
    polys: Vec<BandPolynomial>,
    reference: Option<&'a DVector<Complex64>>,
}

impl<'a> AdmmSolver<'a> {
    pub fn new(meas: &'a Measurement, bands: &[FrequencyBand], params: AdmmParams, mode: Mode) -> Result<Self> {
        params.validate(mode)?;
        let dims = &meas.dims;
        if bands.len() != dims.ndim() {
            return Err(Error::DimensionMismatch(format!(
                "{} bands for a {}-way tensor",
                bands.len(),
                dims.ndim()
            )));
        }
        if params.inner_iters > 0 {
            dims.reduced()?;
        }
        let polys: Vec<BandPolynomial> = bands.iter().map(BandPolynomial::new).collect();
        if params.inner_iters > 0 {
            if let Some(p) = polys.iter().find(|p| p.r0.abs() < MIN_ABS_R0) {
                return Err(Error::SingularBandPolynomial { r0: p.r0 });
            }
        }
        Ok(Self { meas, params, mode, polys, reference: None })
    }

    /// Record `‖x̂ − x‖ / ‖x‖` against `x` in every trace row.
    pub fn with_reference(mut self, x: &'a DVector<Complex64>) -> Self {
        self.reference = Some(x);
        self
    }

    pub fn params(&self) -> &AdmmParams {
        &self.params
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    fn lambda(&self) -> f64 {
        match self.mode {
            Mode::Constrained => 1.0,
            Mode::Regularized => self.params.lambda.expect("validated"),
        }
    }

    pub fn initial_state(&self) -> SolverState {
        SolverState::zeros(&self.meas.dims, self.mode)
    }

    pub fn solve(&self) -> Result<SolverOutput> {
        let mut state = self.initial_state();
        let mut trace = Vec::with_capacity(self.params.max_iters);
        for iteration in 0..self.params.max_iters {
            let record = self.step(&mut state, iteration)?;
            trace.push(record);
            if matches!(self.params.early_stop, Some(tol) if record.primal_residual < tol) {
                break;
            }
        }
        Ok(self.finish(state, trace))
    }

    /// `x` minimizing the augmented Lagrangian; `Φ` is diagonal so the
    /// normal equations decouple entrywise.
    pub fn x_update(&self, state: &SolverState) -> DVector<Complex64> {
        let rho = self.params.rho;
        let ubar = state.u_col();
        let thbar = state.theta_col();
        let n = state.n();
        DVector::from_iterator(
            n,
            (0..n).map(|k| {
                let phi = self.meas.phi[k];
                let y = self.meas.y[k];
                match &state.u_data {
                    Some(u) if self.mode == Mode::Constrained => {
                        let num = phi.conj() * y * rho + phi.conj() * u[k] + ubar[k] * 2.0 + thbar[k] * (2.0 * rho);
                        num / (rho * phi.norm_sqr() + 2.0 * rho)
                    }
                    _ => {
                        let num = phi.conj() * y + ubar[k] * 2.0 + thbar[k] * (2.0 * rho);
                        num / (phi.norm_sqr() + 2.0 * rho)
                    }
                }
            }),
        )
    }

    /// `𝕡(Θ̄ + Ū/ρ) − λ/(2ρN_D) ℰ`.
    pub fn generator_update(&self, state: &SolverState) -> Result<GeneratorTensor> {
        let n = state.n();
        let rho = self.params.rho;
        let m = state.theta.view((0, 0), (n, n)) + state.u.view((0, 0), (n, n)) / Complex64::new(rho, 0.0);
        let mut b = toeplitz_average(&m, &self.meas.dims)?;
        let center = b.center_index();
        b.data[center] -= self.lambda() / (2.0 * rho * n as f64);
        Ok(b)
    }

    pub fn t_update(&self, state: &SolverState) -> f64 {
        state.theta_corner() + (state.u_corner() - self.lambda() / 2.0) / self.params.rho
    }

    /// `𝕡([T_{g_i}(B)]⁺)` for every axis.
    pub fn refinement_targets(&self, b: &GeneratorTensor) -> Result<Vec<GeneratorTensor>> {
        let reduced = self.meas.dims.reduced()?;
        self.polys
            .iter()
            .enumerate()
            .map(|(axis, poly)| {
                let tg = build_toeplitz(&band_filter(b, poly, axis)?);
                toeplitz_average(&psd_project(&tg)?, &reduced)
            })
            .collect()
    }

    /// One full ADMM iteration.
    pub fn step(&self, state: &mut SolverState, iteration: usize) -> Result<IterationRecord> {
        let rho = self.params.rho;
        let x = self.x_update(state);
        let b_temp = self.generator_update(state)?;
        let t = self.t_update(state);
        check_finite(x.iter().chain(b_temp.data.iter()), iteration, "primal update is not finite")?;
        if !t.is_finite() {
            return Err(Error::Divergence { iteration, what: "t is not finite" });
        }

        let b = match (self.params.inner_iters, self.params.targets) {
            (0, _) => b_temp,
            (_, TargetRefresh::PerIteration) => {
                let targets = self.refinement_targets(&b_temp).map_err(|e| diverged(e, iteration))?;
                refine_generator(&b_temp, &targets, &self.polys, &self.params)?
            }
            (_, TargetRefresh::EverySweeps(m)) => {
                refine_generator_refreshed(&b_temp, &self.polys, &self.params, m).map_err(|e| diverged(e, iteration))?
            }
        };

        let lifted = lifted_matrix(&b, &x, t);
        let theta = psd_project(&(&lifted - &state.u / Complex64::new(rho, 0.0))).map_err(|e| diverged(e, iteration))?;
        let residual = &theta - &lifted;
        state.u = hermitian_part(&(&state.u + &residual * Complex64::new(rho, 0.0)));
        let data_residual = &self.meas.y - self.meas.apply_phi(&x);
        if let Some(u) = state.u_data.as_mut() {
            *u += &data_residual * Complex64::new(rho, 0.0);
        }
        state.theta = theta;
        state.x = x;
        state.b = b;
        state.t = t;

        let objective = self.objective(state);
        let nmse = match self.reference {
            Some(r) => Some(nmse(&state.x, r)?),
            None => None,
        };
        let record = IterationRecord {
            iteration,
            primal_residual: residual.norm(),
            data_residual: data_residual.norm(),
            objective,
            nmse,
        };
        let limit = BLOWUP * (1.0 + self.meas.y.norm_squared());
        if !(record.primal_residual < limit) || !objective.is_finite() {
            return Err(Error::Divergence { iteration, what: "residual out of range" });
        }
        Ok(record)
    }

    /// SDP objective at the current iterate.
    pub fn objective(&self, state: &SolverState) -> f64 {
        let atomic = 0.5 * state.b.data[state.b.center_index()].re + 0.5 * state.t;
        match self.mode {
            Mode::Constrained => atomic,
            Mode::Regularized => {
                let r = &self.meas.y - self.meas.apply_phi(&state.x);
                0.5 * r.norm_squared() + self.lambda() * atomic
            }
        }
    }

    fn finish(&self, state: SolverState, trace: Vec<IterationRecord>) -> SolverOutput {
        let dual_embedding = state.u_col() * Complex64::new(-2.0, 0.0);
        let (residual_embedding, dual_mismatch) = match self.mode {
            Mode::Constrained => (None, None),
            Mode::Regularized => {
                let r = self.meas.apply_phi_adjoint(&(&self.meas.y - self.meas.apply_phi(&state.x)));
                let denom = r.norm();
                let mismatch = if denom > 0.0 { (&dual_embedding - &r).norm() / denom } else { f64::NAN };
                (Some(r), Some(mismatch))
            }
        };
        SolverOutput {
            mode: self.mode,
            x_hat: state.x,
            b_hat: state.b,
            t_hat: state.t,
            dual_embedding,
            residual_embedding,
            dual_mismatch,
            trace,
        }
    }

    /// Smooth part of the augmented Lagrangian (indicator terms excluded).
    pub fn lagrangian_value(&self, state: &SolverState) -> f64 {
        let rho = self.params.rho;
        let lifted = lifted_matrix(&state.b, &state.x, state.t);
        let diff = &state.theta - lifted;
        let coupling: f64 = state.u.iter().zip(diff.iter()).map(|(u, d)| (u.conj() * d).re).sum();
        let data = &self.meas.y - self.meas.apply_phi(&state.x);
        let atomic = 0.5 * state.b.data[state.b.center_index()].re + 0.5 * state.t;
        let mut value = coupling + 0.5 * rho * diff.norm_squared();
        match self.mode {
            Mode::Constrained => {
                let u = state.u_data.as_ref().expect("constrained state carries u");
                value += atomic + u.dotc(&data).re + 0.5 * rho * data.norm_squared();
            }
            Mode::Regularized => {
                value += 0.5 * data.norm_squared() + self.lambda() * atomic;
            }
        }
        value
    }

    /// Analytic gradients `∇ = ∂/∂Re + i ∂/∂Im` of [`Self::lagrangian_value`],
    /// valid for Hermitian `Θ` and `U`.
    pub fn lagrangian_gradient(&self, state: &SolverState) -> Result<LagrangianGradient> {
        let rho = self.params.rho;
        let n = state.n();
        let lam = self.lambda();
        let ubar = state.u_col();
        let thbar = state.theta_col();
        let phi_x_minus_y = self.meas.apply_phi(&state.x) - &self.meas.y;

        let mut gx = (&state.x - &thbar) * Complex64::new(2.0 * rho, 0.0) - &ubar * Complex64::new(2.0, 0.0);
        match self.mode {
            Mode::Constrained => {
                let u = state.u_data.as_ref().expect("constrained state carries u");
                gx += self.meas.apply_phi_adjoint(&phi_x_minus_y) * Complex64::new(rho, 0.0);
                gx -= self.meas.apply_phi_adjoint(u);
            }
            Mode::Regularized => gx += self.meas.apply_phi_adjoint(&phi_x_minus_y),
        }

        let dims = &self.meas.dims;
        let m = state.theta.view((0, 0), (n, n)) * Complex64::new(rho, 0.0) + state.u.view((0, 0), (n, n));
        let avg = toeplitz_average(&m, dims)?;
        let mut gb = GeneratorTensor::zeros(dims);
        for lin in 0..gb.len() {
            let beta = beta_weight(&gb.offset_of(lin), dims)? as f64;
            gb.data[lin] = (state.b.data[lin] * rho - avg.data[lin]) * beta;
        }
        let center = gb.center_index();
        gb.data[center] += lam / 2.0;

        let gt = lam / 2.0 - state.u_corner() + rho * (state.t - state.theta_corner());
        Ok(LagrangianGradient { x: gx, b: gb, t: gt })
    }
}

#[derive(Debug, Clone)]
pub struct LagrangianGradient {
    pub x: DVector<Complex64>,
    pub b: GeneratorTensor,
    pub t: f64,
}

fn check_finite<'b>(
    mut values: impl Iterator<Item = &'b Complex64>,
    iteration: usize,
    what: &'static str,
) -> Result<()> {
    if values.all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Divergence { iteration, what })
    }
}

fn diverged(e: Error, iteration: usize) -> Error {
    match e {
        Error::Eigen(_) => Error::Divergence { iteration, what: "PSD projection input is not finite" },
        other => other,
    }
}

/// Approximate refinement of the generator towards `T_{g_i}(B) ⪰ 0`.
///
/// `targets[i]` holds `𝕡([T_{g_i}(B_temp)]⁺)` on the reduced offsets and stays
/// fixed for all sweeps. For each axis in order, `K` Jacobi sweeps update every
/// interior offset (`|p_j| ≤ N_j − 2` on all axes):
///
/// `B(p) ← target(p) / (r0 (1+ϱ)) + (ϱ B(p) − (r₋₁/r0) B(p+e_i) − (r₁/r0) B(p−e_i)) / (1+ϱ)`.
///
/// Boundary offsets are left untouched.
pub fn refine_generator(
    b_temp: &GeneratorTensor,
    targets: &[GeneratorTensor],
    polys: &[BandPolynomial],
    params: &AdmmParams,
) -> Result<GeneratorTensor> {
    let dims = b_temp.dims();
    if !(params.varrho > 1.0) {
        return Err(Error::InvalidParameter(format!("varrho must be > 1, got {}", params.varrho)));
    }
    if targets.len() != dims.ndim() || polys.len() != dims.ndim() {
        return Err(Error::DimensionMismatch(format!(
            "{} targets and {} polynomials for a {}-way generator",
            targets.len(),
            polys.len(),
            dims.ndim()
        )));
    }
    let mut cur = b_temp.clone();
    if params.inner_iters == 0 {
        return Ok(cur);
    }
    let reduced = dims.reduced()?;
    if let Some(t) = targets.iter().find(|t| t.dims() != &reduced) {
        return Err(Error::DimensionMismatch(format!(
            "refinement target has dims {:?}, expected {:?}",
            t.dims().sizes(),
            reduced.sizes()
        )));
    }
    let map = interior_map(&cur, &targets[0]);
    for (axis, (poly, target)) in polys.iter().zip(targets).enumerate() {
        if poly.r0.abs() < MIN_ABS_R0 {
            return Err(Error::SingularBandPolynomial { r0: poly.r0 });
        }
        for _ in 0..params.inner_iters {
            sweep(&mut cur, target, poly, axis, &map, params.varrho);
        }
    }
    Ok(cur)
}

/// As [`refine_generator`], recomputing the axis target from the current
/// generator every `every` sweeps. With `every = 1` a generator whose
/// `T_{g_i}` are all PSD is left unchanged and each sweep only removes the
/// negative part.
pub fn refine_generator_refreshed(
    b_temp: &GeneratorTensor,
    polys: &[BandPolynomial],
    params: &AdmmParams,
    every: usize,
) -> Result<GeneratorTensor> {
    if every == 0 {
        return Err(Error::InvalidParameter("target refresh interval must be >= 1".into()));
    }
    let dims = b_temp.dims();
    if !(params.varrho > 1.0) {
        return Err(Error::InvalidParameter(format!("varrho must be > 1, got {}", params.varrho)));
    }
    if polys.len() != dims.ndim() {
        return Err(Error::DimensionMismatch(format!(
            "{} polynomials for a {}-way generator",
            polys.len(),
            dims.ndim()
        )));
    }
    let mut cur = b_temp.clone();
    if params.inner_iters == 0 {
        return Ok(cur);
    }
    let reduced = dims.reduced()?;
    let map = interior_map(&cur, &GeneratorTensor::zeros(&reduced));
    for (axis, poly) in polys.iter().enumerate() {
        if poly.r0.abs() < MIN_ABS_R0 {
            return Err(Error::SingularBandPolynomial { r0: poly.r0 });
        }
        let mut target = GeneratorTensor::zeros(&reduced);
        for k in 0..params.inner_iters {
            if k % every == 0 {
                let tg = build_toeplitz(&band_filter(&cur, poly, axis)?);
                target = toeplitz_average(&psd_project(&tg)?, &reduced)?;
            }
            sweep(&mut cur, &target, poly, axis, &map, params.varrho);
        }
    }
    Ok(cur)
}

/// One Jacobi sweep over the interior offsets along `axis`.
fn sweep(
    cur: &mut GeneratorTensor,
    target: &GeneratorTensor,
    poly: &BandPolynomial,
    axis: usize,
    map: &[usize],
    varrho: f64,
) {
    let scale = 1.0 + varrho;
    let keep = varrho / scale;
    let step = cur.strides()[axis];
    let a = 1.0 / (poly.r0 * scale);
    let c_up = poly.r_minus1() * a;
    let c_down = poly.r1 * a;
    let old = cur.data.clone();
    for (k, &src) in map.iter().enumerate() {
        cur.data[src] = target.data[k] * a + old[src] * keep - c_up * old[src + step] - c_down * old[src - step];
    }
}

/// Constrained (noiseless) solver with default state and no reference.
pub fn solve_constrained(meas: &Measurement, bands: &[FrequencyBand], params: AdmmParams) -> Result<SolverOutput> {
    AdmmSolver::new(meas, bands, params, Mode::Constrained)?.solve()
}

/// Regularized (noisy) solver; `params.lambda` must be set.
pub fn solve_regularized(meas: &Measurement, bands: &[FrequencyBand], params: AdmmParams) -> Result<SolverOutput> {
    AdmmSolver::new(meas, bands, params, Mode::Regularized)?.solve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SpectralModel;
    use crate::toeplitz::build_tg;
    use crate::linalg::min_eigenvalue;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bands() -> Vec<FrequencyBand> {
        vec![FrequencyBand::new(0.3, 0.4).unwrap(), FrequencyBand::new(0.5, 0.6).unwrap()]
    }

    fn random_c(rng: &mut ChaCha8Rng) -> Complex64 {
        c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<Complex64> {
        let a = DMatrix::from_fn(n, n, |_, _| random_c(rng));
        hermitian_part(&a)
    }

    fn random_measurement(dims: &Dims, rng: &mut ChaCha8Rng) -> Measurement {
        let n = dims.total();
        let y = DVector::from_fn(n, |_, _| random_c(rng));
        let phi = DVector::from_fn(n, |_, _| random_c(rng));
        Measurement::new(dims.clone(), y, phi).unwrap()
    }

    fn random_state(dims: &Dims, mode: Mode, rng: &mut ChaCha8Rng) -> SolverState {
        let n = dims.total();
        let mut s = SolverState::zeros(dims, mode);
        s.x = DVector::from_fn(n, |_, _| random_c(rng));
        for v in s.b.data.iter_mut() {
            *v = random_c(rng);
        }
        s.t = rng.random_range(-1.0..1.0);
        s.theta = random_hermitian(n + 1, rng);
        s.u = random_hermitian(n + 1, rng);
        if let Some(u) = s.u_data.as_mut() {
            *u = DVector::from_fn(n, |_, _| random_c(rng));
        }
        s
    }

    #[test]
    fn params_defaults_and_validation() {
        let p = AdmmParams::noiseless();
        assert_eq!((p.rho, p.varrho, p.inner_iters, p.max_iters), (0.05, 9.0, 10, 2000));
        let p = AdmmParams::noisy(0.7);
        assert_eq!((p.rho, p.varrho, p.inner_iters, p.max_iters), (0.05, 3.0, 20, 1000));
        assert_eq!(p.targets, TargetRefresh::EverySweeps(1));
        assert!(p.validate(Mode::Regularized).is_ok());
        assert!(AdmmParams::noiseless().validate(Mode::Regularized).is_err());
        assert!(AdmmParams { rho: 0.0, ..AdmmParams::noiseless() }.validate(Mode::Constrained).is_err());
        assert!(AdmmParams { varrho: 1.0, ..AdmmParams::noiseless() }.validate(Mode::Constrained).is_err());
        assert!(AdmmParams { max_iters: 0, ..AdmmParams::noiseless() }.validate(Mode::Constrained).is_err());
        // sqrt(2 ln 64) = 2.884054
        assert!((default_lambda(1.0, 64) - 2.884_053_8).abs() < 1e-6);
    }

    #[test]
    fn x_update_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = Dims::new(vec![3, 3]).unwrap();
        let meas = random_measurement(&dims, &mut rng);
        for mode in [Mode::Constrained, Mode::Regularized] {
            let params = AdmmParams { lambda: Some(0.5), ..AdmmParams::noiseless() };
            let solver = AdmmSolver::new(&meas, &bands(), params, mode).unwrap();
            let state = random_state(&dims, mode, &mut rng);
            let rho = params.rho;
            let phi = DMatrix::from_diagonal(&meas.phi);
            let eye = DMatrix::<Complex64>::identity(9, 9);
            let (lhs, rhs) = match mode {
                Mode::Constrained => (
                    phi.adjoint() * &phi * c(rho, 0.0) + eye * c(2.0 * rho, 0.0),
                    phi.adjoint() * &meas.y * c(rho, 0.0)
                        + phi.adjoint() * state.u_data.as_ref().unwrap()
                        + state.u_col() * c(2.0, 0.0)
                        + state.theta_col() * c(2.0 * rho, 0.0),
                ),
                Mode::Regularized => (
                    phi.adjoint() * &phi + eye * c(2.0 * rho, 0.0),
                    phi.adjoint() * &meas.y + state.u_col() * c(2.0, 0.0) + state.theta_col() * c(2.0 * rho, 0.0),
                ),
            };
            let dense = lhs.lu().solve(&rhs).unwrap();
            assert!((solver.x_update(&state) - dense).norm() < 1e-10);
        }
    }

    fn fd_check(mode: Mode, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = Dims::new(vec![3, 2]).unwrap();
        let meas = random_measurement(&dims, &mut rng);
        let params = AdmmParams { lambda: Some(0.8), rho: 0.7, ..AdmmParams::noiseless() };
        let solver = AdmmSolver::new(&meas, &bands(), params, mode).unwrap();
        let state = random_state(&dims, mode, &mut rng);
        let grad = solver.lagrangian_gradient(&state).unwrap();
        let h = 1e-5;
        let fd = |perturb: &dyn Fn(&mut SolverState, f64)| {
            let mut plus = state.clone();
            perturb(&mut plus, h);
            let mut minus = state.clone();
            perturb(&mut minus, -h);
            (solver.lagrangian_value(&plus) - solver.lagrangian_value(&minus)) / (2.0 * h)
        };
        for k in 0..state.x.len() {
            let re = fd(&|s, e| s.x[k] += c(e, 0.0));
            let im = fd(&|s, e| s.x[k] += c(0.0, e));
            let got = grad.x[k];
            assert!((got - c(re, im)).norm() <= 1e-6 * got.norm().max(1.0), "x[{k}]");
        }
        for k in 0..state.b.len() {
            let re = fd(&|s, e| s.b.data[k] += c(e, 0.0));
            let im = fd(&|s, e| s.b.data[k] += c(0.0, e));
            let got = grad.b.data[k];
            assert!((got - c(re, im)).norm() <= 1e-6 * got.norm().max(1.0), "B[{k}]");
        }
        let gt = fd(&|s, e| s.t += e);
        assert!((grad.t - gt).abs() <= 1e-6 * grad.t.abs().max(1.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        fd_check(Mode::Constrained, 11);
        fd_check(Mode::Regularized, 12);
    }

    #[test]
    fn closed_form_updates_zero_the_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = Dims::new(vec![3, 3]).unwrap();
        let meas = random_measurement(&dims, &mut rng);
        for mode in [Mode::Constrained, Mode::Regularized] {
            let params = AdmmParams { lambda: Some(1.3), ..AdmmParams::noiseless() };
            let solver = AdmmSolver::new(&meas, &bands(), params, mode).unwrap();
            let mut s = random_state(&dims, mode, &mut rng);
            s.x = solver.x_update(&s);
            s.b = solver.generator_update(&s).unwrap();
            s.t = solver.t_update(&s);
            let g = solver.lagrangian_gradient(&s).unwrap();
            assert!(g.x.norm() < 1e-9 && g.b.data.norm() < 1e-9 && g.t.abs() < 1e-9);
            // convex in (x, B, t): no direction decreases the value
            let base = solver.lagrangian_value(&s);
            for k in 0..9 {
                let mut p = s.clone();
                p.x[k] += c(1e-4, -2e-4);
                assert!(solver.lagrangian_value(&p) - base > -1e-6);
                let mut p = s.clone();
                p.b.data[k * 2] += c(-3e-4, 1e-4);
                assert!(solver.lagrangian_value(&p) - base > -1e-6);
            }
            let mut p = s.clone();
            p.t -= 1e-4;
            assert!(solver.lagrangian_value(&p) - base > -1e-6);
        }
    }

    fn refine_inputs(b: &GeneratorTensor) -> (Vec<GeneratorTensor>, Vec<BandPolynomial>) {
        let dims = b.dims().clone();
        let reduced = dims.reduced().unwrap();
        let polys: Vec<BandPolynomial> = bands().iter().map(BandPolynomial::new).collect();
        let targets = polys
            .iter()
            .enumerate()
            .map(|(axis, p)| toeplitz_average(&psd_project(&build_tg(b, p, axis).unwrap()).unwrap(), &reduced).unwrap())
            .collect();
        (targets, polys)
    }

    #[test]
    fn refinement_with_zero_sweeps_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let dims = Dims::new(vec![4, 3]).unwrap();
        let mut b = GeneratorTensor::zeros(&dims);
        for v in b.data.iter_mut() {
            *v = random_c(&mut rng);
        }
        let (targets, polys) = refine_inputs(&b);
        let params = AdmmParams { inner_iters: 0, ..AdmmParams::noiseless() };
        assert_eq!(refine_generator(&b, &targets, &polys, &params).unwrap(), b);
    }

    #[test]
    fn refreshed_refinement_fixes_feasible_generators() {
        let dims = Dims::new(vec![6, 5]).unwrap();
        let model = SpectralModel::new(
            vec![vec![0.35, 0.51], vec![0.31, 0.59]],
            vec![c(1.0, 0.0), c(0.7, 0.0)],
        )
        .unwrap();
        let b = GeneratorTensor::from_model(&model, &dims).unwrap();
        let polys: Vec<BandPolynomial> = bands().iter().map(BandPolynomial::new).collect();
        let params = AdmmParams::noisy(1.0);
        for every in [1, 5] {
            let out = refine_generator_refreshed(&b, &polys, &params, every).unwrap();
            let err = (out.data - &b.data).camax();
            assert!(err < 1e-9, "every {every}: {err:e}");
        }
        assert!(refine_generator_refreshed(&b, &polys, &params, 0).is_err());
        let bad = AdmmParams { targets: TargetRefresh::EverySweeps(0), ..params };
        assert!(bad.validate(Mode::Regularized).is_err());
    }

    #[test]
    fn refreshed_refinement_reduces_band_violation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dims = Dims::new(vec![5, 5]).unwrap();
        let model = SpectralModel::new(vec![vec![0.7, 0.1]], vec![c(1.0, 0.0)]).unwrap();
        let mut b = GeneratorTensor::from_model(&model, &dims).unwrap();
        for v in b.data.iter_mut() {
            *v += random_c(&mut rng) * 0.01;
        }
        let polys: Vec<BandPolynomial> = bands().iter().map(BandPolynomial::new).collect();
        let violation = |g: &GeneratorTensor| -> f64 {
            (0..2).map(|axis| min_eigenvalue(&build_tg(g, &polys[axis], axis).unwrap()).unwrap().min(0.0)).sum()
        };
        let before = violation(&b);
        let out = refine_generator_refreshed(&b, &polys, &AdmmParams::noisy(1.0), 1).unwrap();
        assert!(before < 0.0);
        assert!(violation(&out) > before);
    }

    #[test]
    fn refinement_fixes_feasible_generators() {
        let dims = Dims::new(vec![5, 4]).unwrap();
        let model = SpectralModel::new(
            vec![vec![0.35, 0.51], vec![0.31, 0.59]],
            vec![c(1.0, 0.0), c(0.7, 0.0)],
        )
        .unwrap();
        let b = GeneratorTensor::from_model(&model, &dims).unwrap();
        let (targets, polys) = refine_inputs(&b);
        let one = AdmmParams { inner_iters: 1, ..AdmmParams::noiseless() };
        let out = refine_generator(&b, &targets, &polys, &one).unwrap();
        assert!((out.data - &b.data).camax() < 1e-9);

        let single = SpectralModel::new(vec![vec![0.37, 0.55]], vec![c(2.0, 0.0)]).unwrap();
        let b = GeneratorTensor::from_model(&single, &dims).unwrap();
        let (targets, polys) = refine_inputs(&b);
        let out = refine_generator(&b, &targets, &polys, &AdmmParams::noiseless()).unwrap();
        assert!((out.data - &b.data).camax() < 1e-8);
    }

    #[test]
    fn refinement_leaves_boundary_untouched() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let dims = Dims::new(vec![4, 4]).unwrap();
        let mut b = GeneratorTensor::zeros(&dims);
        for v in b.data.iter_mut() {
            *v = random_c(&mut rng);
        }
        let (targets, polys) = refine_inputs(&b);
        let out = refine_generator(&b, &targets, &polys, &AdmmParams::noiseless()).unwrap();
        for lin in 0..b.len() {
            let p = b.offset_of(lin);
            if p.iter().any(|&pi| pi.abs() == 3) {
                assert_eq!(out.data[lin], b.data[lin]);
            }
        }
        assert!((out.data - b.data).norm() > 1e-6);
    }

    #[test]
    fn refinement_rejects_bad_inputs() {
        let dims = Dims::new(vec![3, 3]).unwrap();
        let b = GeneratorTensor::zeros(&dims);
        let (targets, polys) = refine_inputs(&b);
        let bad = AdmmParams { varrho: 0.5, ..AdmmParams::noiseless() };
        assert!(refine_generator(&b, &targets, &polys, &bad).is_err());
        assert!(refine_generator(&b, &targets[..1], &polys, &AdmmParams::noiseless()).is_err());
        let singular = vec![BandPolynomial { r0: 1e-12, r1: c(1.0, 0.0) }; 2];
        assert!(matches!(
            refine_generator(&b, &targets, &singular, &AdmmParams::noiseless()),
            Err(Error::SingularBandPolynomial { .. })
        ));
    }

    #[test]
    fn half_width_band_is_rejected_when_refining() {
        let dims = Dims::new(vec![3, 3]).unwrap();
        let meas = Measurement::new(dims.clone(), DVector::zeros(9), DVector::from_element(9, c(1.0, 0.0))).unwrap();
        let half = vec![FrequencyBand::new(0.1, 0.6).unwrap(), FrequencyBand::new(0.5, 0.6).unwrap()];
        assert!(matches!(
            AdmmSolver::new(&meas, &half, AdmmParams::noiseless(), Mode::Constrained),
            Err(Error::SingularBandPolynomial { .. })
        ));
        let plain = AdmmParams { inner_iters: 0, ..AdmmParams::noiseless() };
        assert!(AdmmSolver::new(&meas, &half, plain, Mode::Constrained).is_ok());
    }

    #[test]
    fn zero_data_stays_at_zero() {
        let dims = Dims::new(vec![3, 3]).unwrap();
        let meas = Measurement::new(dims, DVector::zeros(9), DVector::from_element(9, c(1.0, 0.0))).unwrap();
        let params = AdmmParams { max_iters: 300, ..AdmmParams::noiseless() };
        let out = solve_constrained(&meas, &bands(), params).unwrap();
        assert!(out.x_hat.norm() < 1e-8);
        assert!(out.final_objective().abs() < 1e-3, "{}", out.final_objective());
        assert_eq!(out.trace.len(), 300);
    }

    #[test]
    fn theta_stays_psd_and_deterministic() {
        let dims = Dims::new(vec![4, 4]).unwrap();
        let model = SpectralModel::new(vec![vec![0.35, 0.55]], vec![c(0.6, 0.8)]).unwrap();
        let x = crate::tensor::synthesize(&model, &dims).unwrap();
        let meas = Measurement::new(dims, x.data.clone(), DVector::from_element(16, c(1.0, 0.0))).unwrap();
        let params = AdmmParams { max_iters: 40, ..AdmmParams::noiseless() };
        let solver = AdmmSolver::new(&meas, &bands(), params, Mode::Constrained).unwrap().with_reference(&x.data);
        let mut state = solver.initial_state();
        for it in 0..40 {
            solver.step(&mut state, it).unwrap();
            let min = crate::linalg::min_eigenvalue(&state.theta).unwrap();
            assert!(min >= -1e-8 * state.theta.norm().max(1.0), "iteration {it}: {min}");
        }
        let a = solver.solve().unwrap();
        let b = solver.solve().unwrap();
        assert_eq!(
            a.trace.iter().map(|r| r.objective).collect::<Vec<_>>(),
            b.trace.iter().map(|r| r.objective).collect::<Vec<_>>()
        );
        assert!(a.trace.iter().all(|r| r.nmse.is_some()));
    }

    #[test]
    fn early_stop_and_trace_csv() {
        let dims = Dims::new(vec![3, 3]).unwrap();
        let meas = Measurement::new(dims, DVector::zeros(9), DVector::from_element(9, c(1.0, 0.0))).unwrap();
        let params = AdmmParams { max_iters: 500, early_stop: Some(1e-6), ..AdmmParams::noiseless() };
        let out = solve_constrained(&meas, &bands(), params).unwrap();
        assert!(out.trace.len() < 500);
        let mut buf = Vec::new();
        out.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iteration,primal_residual,data_residual,objective,nmse"));
        assert_eq!(lines.count(), out.trace.len());
    }

    #[test]
    fn solver_rejects_mismatched_bands() {
        let dims = Dims::new(vec![3, 3]).unwrap();
        let meas = Measurement::new(dims, DVector::zeros(9), DVector::from_element(9, c(1.0, 0.0))).unwrap();
        assert!(solve_constrained(&meas, &bands()[..1], AdmmParams::noiseless()).is_err());
        assert!(solve_regularized(&meas, &bands(), AdmmParams::noiseless()).is_err());
    }
}
