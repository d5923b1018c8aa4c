//! Frequency localization from solver outputs.
//!
//! Two routes are provided: the dual polynomial `Q(f) = ⟨ν̂, Φ a(f)⟩`, whose
//! modulus reaches 1 (constrained) or `λ` (regularized) at the recovered
//! frequencies, and MUSIC on the recovered block Toeplitz matrix `T(B̂)`.
//! Gains are then fitted by least squares.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::hermitian_eigen;
use crate::tensor::{atom, wrap_frequency, Dims, Measurement};
use crate::toeplitz::{build_toeplitz, FrequencyBand, GeneratorTensor};

/// Eigenvalue floor used when comparing eigenvalue ratios.
const EIGEN_FLOOR: f64 = 1e-6;

/// Grid points covering `band` with spacing `step`, endpoints included when
/// they fall on the lattice.
pub fn band_grid(band: &FrequencyBand, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!("grid step must be > 0, got {step}")));
    }
    let count = (band.width() / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| wrap_frequency(band.low() + k as f64 * step)).collect())
}

/// A non-negative function sampled on the product of per-axis grids.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSurface {
    pub grids: Vec<Vec<f64>>,
    /// Row-major over `grids`, last axis fastest.
    pub values: Vec<f64>,
}

impl DualSurface {
    pub fn shape(&self) -> Vec<usize> {
        self.grids.iter().map(Vec::len).collect()
    }

    pub fn point(&self, lin: usize) -> Vec<f64> {
        let shape = self.shape();
        let mut idx = vec![0; shape.len()];
        let mut rest = lin;
        for i in (0..shape.len()).rev() {
            idx[i] = rest % shape[i];
            rest /= shape[i];
        }
        idx.iter().zip(&self.grids).map(|(&k, g)| g[k]).collect()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        best
    }

    /// `f_1,...,f_d,value` rows with a header.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.grids.len()).map(|i| format!("f{i}")).collect();
        writeln!(w, "{},value", header.join(","))?;
        for (lin, v) in self.values.iter().enumerate() {
            let p: Vec<String> = self.point(lin).iter().map(|f| format!("{f}")).collect();
            writeln!(w, "{},{v:e}", p.join(","))?;
        }
        Ok(())
    }
}

/// `c(f) = a(f)^H v` for every point of the grid product, by successive
/// contraction along each axis.
fn contract_on_grid(v: &DVector<Complex64>, dims: &Dims, grids: &[Vec<f64>]) -> Vec<Complex64> {
    let mut shape = dims.sizes().to_vec();
    let mut data: Vec<Complex64> = v.iter().copied().collect();
    for (axis, grid) in grids.iter().enumerate() {
        let n = shape[axis];
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let phases: Vec<Complex64> = grid
            .iter()
            .flat_map(|&f| (0..n).map(move |k| Complex64::from_polar(1.0, -TAU * k as f64 * f)))
            .collect();
        let g = grid.len();
        let mut next = vec![Complex64::new(0.0, 0.0); outer * g * inner];
        for o in 0..outer {
            for (gi, row) in phases.chunks(n).enumerate() {
                let dst = &mut next[(o * g + gi) * inner..(o * g + gi + 1) * inner];
                for (k, &ph) in row.iter().enumerate() {
                    let src = &data[(o * n + k) * inner..(o * n + k + 1) * inner];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += ph * s;
                    }
                }
            }
        }
        shape[axis] = g;
        data = next;
    }
    data
}

fn grids_for(dims: &Dims, bands: &[FrequencyBand], grid_step: f64) -> Result<Vec<Vec<f64>>> {
    if bands.len() != dims.ndim() {
        return Err(Error::DimensionMismatch(format!(
            "{} bands for a {}-way tensor",
            bands.len(),
            dims.ndim()
        )));
    }
    let grids = bands.iter().map(|b| band_grid(b, grid_step)).collect::<Result<Vec<_>>>()?;
    if grids.iter().any(Vec::is_empty) {
        return Err(Error::EmptyGrid);
    }
    Ok(grids)
}

/// `|Q(f)| = |a(f)^H Φ^H ν̂|` on a grid restricted to the bands.
pub fn dual_surface(
    dual_embedding: &DVector<Complex64>,
    dims: &Dims,
    bands: &[FrequencyBand],
    grid_step: f64,
) -> Result<DualSurface> {
    if dual_embedding.len() != dims.total() {
        return Err(Error::DimensionMismatch(format!(
            "dual vector has {} entries, N_D = {}",
            dual_embedding.len(),
            dims.total()
        )));
    }
    let grids = grids_for(dims, bands, grid_step)?;
    let values = contract_on_grid(dual_embedding, dims, &grids).iter().map(|c| c.norm()).collect();
    Ok(DualSurface { grids, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peak {
    pub freq: Vec<f64>,
    pub value: f64,
}

/// Indices of grid local maxima over the full `3^d − 1` neighborhood. Ties
/// are broken towards the lower linear index so a flat pair yields one peak.
pub fn local_maxima(surface: &DualSurface) -> Vec<usize> {
    let shape = surface.shape();
    let d = shape.len();
    let mut strides = vec![1usize; d];
    for i in (0..d.saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    let neighbor_offsets: Vec<Vec<isize>> = (0..3usize.pow(d as u32))
        .map(|mut code| {
            (0..d)
                .map(|_| {
                    let o = (code % 3) as isize - 1;
                    code /= 3;
                    o
                })
                .collect::<Vec<_>>()
        })
        .filter(|o| o.iter().any(|&v| v != 0))
        .collect();

    let neighbor = |idx: &[isize], off: &[isize]| -> Option<usize> {
        let mut nlin = 0usize;
        for i in 0..d {
            let k = idx[i] + off[i];
            if k < 0 || k >= shape[i] as isize {
                return None;
            }
            nlin += k as usize * strides[i];
        }
        Some(nlin)
    };

    let mut peaks = Vec::new();
    for (lin, &v) in surface.values.iter().enumerate() {
        let mut idx = vec![0isize; d];
        let mut rest = lin;
        for i in (0..d).rev() {
            idx[i] = (rest % shape[i]) as isize;
            rest /= shape[i];
        }
        let dominated = neighbor_offsets.iter().filter_map(|off| neighbor(&idx, off)).any(|nlin| {
            let nv = surface.values[nlin];
            nv > v || (nv == v && nlin < lin)
        });
        if !dominated {
            peaks.push(lin);
        }
    }
    peaks
}

/// Local maxima of the surface reaching at least `level · (1 − rel_tol)`,
/// strongest first.
pub fn locate_from_dual(surface: &DualSurface, level: f64, rel_tol: f64) -> Result<Vec<Peak>> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidParameter(format!("rel_tol must lie in (0, 1), got {rel_tol}")));
    }
    let threshold = level * (1.0 - rel_tol);
    Ok(collect_peaks(surface, threshold, None))
}

fn collect_peaks(surface: &DualSurface, threshold: f64, limit: Option<usize>) -> Vec<Peak> {
    let mut peaks: Vec<Peak> = local_maxima(surface)
        .into_iter()
        .filter(|&lin| surface.values[lin] >= threshold)
        .map(|lin| Peak { freq: surface.point(lin), value: surface.values[lin] })
        .collect();
    peaks.sort_by(|a, b| b.value.total_cmp(&a.value));
    if let Some(limit) = limit {
        peaks.truncate(limit);
    }
    peaks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelOrder {
    Fixed(usize),
    /// Largest ratio between consecutive sorted eigenvalues.
    Auto,
}

#[derive(Debug, Clone)]
pub struct MusicSpectrum {
    pub surface: DualSurface,
    pub order: usize,
    /// Auto order found no eigenvalue gap and fell back to 1.
    pub degenerate_gap: bool,
    /// Eigenvalues of `T(B̂)`, descending.
    pub eigenvalues: Vec<f64>,
}

/// Signal-subspace dimension chosen by the largest eigenvalue ratio, with
/// eigenvalues floored at `1e-6`. Returns `(order, degenerate)`.
pub fn eigengap_order(descending: &[f64]) -> (usize, bool) {
    let floored: Vec<f64> = descending.iter().map(|&v| v.max(EIGEN_FLOOR)).collect();
    let mut best = (1, 1.0);
    for k in 0..floored.len().saturating_sub(1) {
        let ratio = floored[k] / floored[k + 1];
        if ratio > best.1 {
            best = (k + 1, ratio);
        }
    }
    if best.1 <= 1.0 + 1e-12 {
        (1, true)
    } else {
        (best.0, false)
    }
}

/// MUSIC pseudospectrum `1 / ‖E_n^H a(f)‖²` of `T(B̂)` on the band grid.
pub fn music_spectrum(
    b_hat: &GeneratorTensor,
    order: ModelOrder,
    bands: &[FrequencyBand],
    grid_step: f64,
) -> Result<MusicSpectrum> {
    let dims = b_hat.dims();
    let n = dims.total();
    let grids = grids_for(dims, bands, grid_step)?;
    let eig = hermitian_eigen(&build_toeplitz(b_hat))?;
    let eigenvalues: Vec<f64> = eig.values.iter().rev().copied().collect();
    let (order, degenerate_gap) = match order {
        ModelOrder::Fixed(r) if r == 0 || r >= n => return Err(Error::InvalidModelOrder { order: r, size: n }),
        ModelOrder::Fixed(r) => (r, false),
        ModelOrder::Auto => eigengap_order(&eigenvalues),
    };
    // ascending eigenvalues: the noise subspace is the first n - order columns
    let points: usize = grids.iter().map(Vec::len).product();
    let mut denom = vec![0.0; points];
    for j in 0..n - order {
        let proj = contract_on_grid(&eig.vectors.column(j).into_owned(), dims, &grids);
        for (acc, c) in denom.iter_mut().zip(proj) {
            *acc += c.norm_sqr();
        }
    }
    let values = denom.iter().map(|&v| 1.0 / v.max(f64::MIN_POSITIVE)).collect();
    Ok(MusicSpectrum { surface: DualSurface { grids, values }, order, degenerate_gap, eigenvalues })
}

/// Local maxima of a pseudospectrum above its `quantile` level, strongest
/// first, at most `max_peaks` of them.
pub fn locate_music_peaks(spectrum: &MusicSpectrum, quantile: f64, max_peaks: Option<usize>) -> Result<Vec<Peak>> {
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::InvalidParameter(format!("quantile must lie in [0, 1], got {quantile}")));
    }
    let mut sorted = spectrum.surface.values.clone();
    sorted.sort_by(f64::total_cmp);
    let pos = ((sorted.len() - 1) as f64 * quantile).round() as usize;
    Ok(collect_peaks(&spectrum.surface, sorted[pos], max_peaks))
}

/// Least-squares gains `argmin ‖y − Φ A σ‖₂` for the given frequencies.
pub fn estimate_gains(freqs: &[Vec<f64>], meas: &Measurement) -> Result<Vec<Complex64>> {
    if freqs.is_empty() {
        return Err(Error::InvalidParameter("gain estimation needs at least one frequency".into()));
    }
    let n = meas.dims.total();
    let mut design = DMatrix::zeros(n, freqs.len());
    for (j, f) in freqs.iter().enumerate() {
        design.set_column(j, &meas.apply_phi(&atom(f, &meas.dims)?));
    }
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if freqs.len() > n || ratio < 1e-10 {
        return Err(Error::RankDeficient { ratio });
    }
    let sol = svd.solve(&meas.y, 0.0).map_err(|e| Error::Eigen(e.to_string()))?;
    Ok(sol.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dual,
    Music,
}

/// Recovered frequencies with least-squares gains.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub freqs: Vec<Vec<f64>>,
    pub gains: Vec<Complex64>,
    pub method: Method,
}

impl Estimate {
    /// Fit gains for `peaks` against `meas`; no peaks gives an empty estimate.
    pub fn from_peaks(peaks: &[Peak], meas: &Measurement, method: Method) -> Result<Self> {
        let freqs: Vec<Vec<f64>> = peaks.iter().map(|p| p.freq.clone()).collect();
        let gains = if freqs.is_empty() { Vec::new() } else { estimate_gains(&freqs, meas)? };
        Ok(Self { freqs, gains, method })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::SpectralModel;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn bands() -> Vec<FrequencyBand> {
        vec![FrequencyBand::new(0.3, 0.4).unwrap(), FrequencyBand::new(0.5, 0.6).unwrap()]
    }

    #[test]
    fn grid_covers_band() {
        let g = band_grid(&FrequencyBand::new(0.3, 0.4).unwrap(), 0.01).unwrap();
        assert_eq!(g.len(), 11);
        assert!((g[0] - 0.3).abs() < 1e-12 && (g[10] - 0.4).abs() < 1e-12);
        let w = band_grid(&FrequencyBand::new(0.95, 0.05).unwrap(), 0.01).unwrap();
        assert_eq!(w.len(), 11);
        assert!(w.iter().all(|&f| f >= 0.95 - 1e-12 || f <= 0.05 + 1e-12));
        assert!(band_grid(&FrequencyBand::new(0.3, 0.4).unwrap(), 0.0).is_err());
    }

    #[test]
    fn surface_matches_direct_evaluation() {
        let dims = Dims::new(vec![4, 3]).unwrap();
        let v = DVector::from_fn(12, |i, _| c(i as f64 * 0.1 - 0.4, (i * i) as f64 * 0.05));
        let s = dual_surface(&v, &dims, &bands(), 0.02).unwrap();
        for lin in 0..s.values.len() {
            let a = atom(&s.point(lin), &dims).unwrap();
            assert!((a.dotc(&v).norm() - s.values[lin]).abs() < 1e-12);
        }
        let zero = dual_surface(&DVector::zeros(12), &dims, &bands(), 0.02).unwrap();
        assert!(zero.values.iter().all(|&x| x == 0.0));
        assert!(locate_from_dual(&zero, 1.0, 0.1).unwrap().is_empty());
        assert!(dual_surface(&DVector::zeros(11), &dims, &bands(), 0.02).is_err());
    }

    #[test]
    fn surface_ignores_global_phase() {
        let dims = Dims::new(vec![3, 3]).unwrap();
        let v = DVector::from_fn(9, |i, _| c((i as f64).sin(), (i as f64).cos()));
        let a = dual_surface(&v, &dims, &bands(), 0.01).unwrap();
        let b = dual_surface(&(&v * Complex64::from_polar(1.0, 1.234)), &dims, &bands(), 0.01).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn flat_surface(value: f64) -> DualSurface {
        DualSurface { grids: vec![vec![0.0, 0.1, 0.2, 0.3, 0.4], vec![0.5, 0.6, 0.7]], values: vec![value; 15] }
    }

    #[test]
    fn locate_planted_spike() {
        let mut s = flat_surface(0.2);
        s.values[7] = 1.0;
        let peaks = locate_from_dual(&s, 1.0, 0.1).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].freq, vec![0.2, 0.6]);
        assert!(locate_from_dual(&flat_surface(0.5), 1.0, 0.1).unwrap().is_empty());
        assert!(locate_from_dual(&s, 1.0, 1.5).is_err());
    }

    #[test]
    fn plateau_yields_single_peak() {
        let mut s = flat_surface(0.0);
        s.values[4] = 1.0;
        s.values[5] = 1.0;
        let peaks = locate_from_dual(&s, 1.0, 0.1).unwrap();
        assert_eq!(peaks.len(), 1);
    }

    #[test]
    fn music_finds_exact_atoms() {
        let dims = Dims::new(vec![6, 6]).unwrap();
        let freqs = vec![vec![0.35, 0.51], vec![0.31, 0.59]];
        let model = SpectralModel::new(freqs.clone(), vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let b = GeneratorTensor::from_model(&model, &dims).unwrap();
        let step = 1e-3;
        let spec = music_spectrum(&b, ModelOrder::Fixed(2), &bands(), step).unwrap();
        let peaks = locate_music_peaks(&spec, 0.9, Some(2)).unwrap();
        assert_eq!(peaks.len(), 2);
        for f in &freqs {
            assert!(peaks.iter().any(|p| p.freq.iter().zip(f).all(|(a, b)| (a - b).abs() <= step + 1e-12)));
        }
        let auto = music_spectrum(&b, ModelOrder::Auto, &bands(), 0.01).unwrap();
        assert_eq!(auto.order, 2);
        assert!(!auto.degenerate_gap);
        assert!(matches!(
            music_spectrum(&b, ModelOrder::Fixed(0), &bands(), step),
            Err(Error::InvalidModelOrder { .. })
        ));
        assert!(music_spectrum(&b, ModelOrder::Fixed(36), &bands(), step).is_err());
    }

    #[test]
    fn music_single_atom_and_scale_invariance() {
        let dims = Dims::new(vec![5, 4]).unwrap();
        let model = SpectralModel::new(vec![vec![0.377, 0.523]], vec![c(1.0, 0.0)]).unwrap();
        let b = GeneratorTensor::from_model(&model, &dims).unwrap();
        let spec = music_spectrum(&b, ModelOrder::Fixed(1), &bands(), 1e-3).unwrap();
        let top = spec.surface.point(spec.surface.argmax());
        assert!((top[0] - 0.377).abs() <= 1e-3 + 1e-12 && (top[1] - 0.523).abs() <= 1e-3 + 1e-12);

        let mut scaled = b.clone();
        scaled.data *= c(7.5, 0.0);
        let spec2 = music_spectrum(&scaled, ModelOrder::Fixed(1), &bands(), 1e-3).unwrap();
        assert_eq!(spec.surface.argmax(), spec2.surface.argmax());
    }

    #[test]
    fn eigengap_examples() {
        assert_eq!(eigengap_order(&[5.0, 4.0, 1e-9, 1e-10]), (2, false));
        assert_eq!(eigengap_order(&[1.0, 1.0, 1.0]), (1, true));
        assert_eq!(eigengap_order(&[0.0, 0.0]), (1, true));
    }

    fn full_measurement(model: &SpectralModel, dims: &Dims) -> Measurement {
        let x = crate::tensor::synthesize(model, dims).unwrap();
        Measurement::new(dims.clone(), x.data, DVector::from_element(dims.total(), c(1.0, 0.0))).unwrap()
    }

    #[test]
    fn gains_recovered_exactly() {
        let dims = Dims::new(vec![6, 5]).unwrap();
        let freqs = vec![vec![0.35, 0.51], vec![0.31, 0.59]];
        let gains = vec![c(0.6, 0.8), c(-1.0, 0.2)];
        let model = SpectralModel::new(freqs.clone(), gains.clone()).unwrap();
        let meas = full_measurement(&model, &dims);
        let est = estimate_gains(&freqs, &meas).unwrap();
        for (a, b) in est.iter().zip(&gains) {
            assert!((a - b).norm() < 1e-8);
        }

        let one = SpectralModel::new(vec![vec![0.2, 0.7]], vec![c(1.0, 0.0)]).unwrap();
        let meas = full_measurement(&one, &dims);
        let g = estimate_gains(&one.freqs, &meas).unwrap();
        assert!((g[0] - c(1.0, 0.0)).norm() < 1e-10);

        let twice = vec![vec![0.2, 0.7], vec![0.2, 0.7]];
        assert!(matches!(estimate_gains(&twice, &meas), Err(Error::RankDeficient { .. })));
        assert!(estimate_gains(&[], &meas).is_err());
    }

    #[test]
    fn gains_beat_truth_under_noise() {
        let dims = Dims::new(vec![6, 6]).unwrap();
        let model = SpectralModel::new(vec![vec![0.35, 0.51], vec![0.31, 0.59]], vec![c(1.0, 0.0), c(0.0, 1.0)])
            .unwrap();
        let x = crate::tensor::synthesize(&model, &dims).unwrap();
        let p = crate::tensor::ComplexTensor::from_vec(dims.clone(), DVector::from_element(36, c(1.0, 0.0))).unwrap();
        let meas = crate::tensor::observe(&x, &p, 0.5, 4).unwrap();
        let est = estimate_gains(&model.freqs, &meas).unwrap();
        let fit = |g: &[Complex64]| {
            let mut r = meas.y.clone();
            for (f, &s) in model.freqs.iter().zip(g) {
                r -= atom(f, &dims).unwrap() * s;
            }
            r.norm()
        };
        assert!(fit(&est) <= fit(&model.gains) + 1e-12);
    }
}
