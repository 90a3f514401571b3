//! The generator as a banded matrix, the energy norm, resolvent norms on the
//! imaginary axis and dense spectral checks.

use faer::Mat;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::{BandLu, BandMatrix};
use crate::dynamics::{band_from_triplets, generator_triplets, Discretization, Field, Layout};
use crate::error::{Error, Result};

/// Largest `|lambda| dx` for which the discrete operator is trusted.
pub const TRUST_LIMIT: f64 = 0.5;

/// Auxiliary-form generator on the interleaved interior unknowns.
#[derive(Debug, Clone)]
pub struct GeneratorMatrix {
    pub disc: Discretization,
    pub layout: Layout,
    pub a: BandMatrix<f64>,
    pub factor: EnergyFactor,
}

pub fn assemble_generator(disc: &Discretization) -> GeneratorMatrix {
    let layout = Layout::new(disc, true);
    let a = band_from_triplets(layout.dim(), &generator_triplets(disc, &layout, &disc.b_tilde_half));
    let factor = EnergyFactor::new(disc, &layout);
    GeneratorMatrix { disc: disc.clone(), layout, a, factor }
}

impl GeneratorMatrix {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Dense `R A R^-1`, the generator in coordinates where the energy norm is Euclidean.
    pub fn dense_weighted(&self) -> Mat<f64> {
        let n = self.dim();
        let mut out = Mat::zeros(n, n);
        let mut col = vec![0.0; n];
        let mut tmp = vec![0.0; n];
        for k in 0..n {
            col.fill(0.0);
            col[k] = 1.0;
            self.factor.apply_inv(&mut col);
            self.a.matvec(&col, &mut tmp);
            self.factor.apply(&mut tmp);
            for (i, &v) in tmp.iter().enumerate() {
                out[(i, k)] = v;
            }
        }
        out
    }

    /// Energy norm `||R x||_2` (so that `||x||^2 = 2 E`).
    pub fn energy_norm(&self, x: &[Complex64]) -> f64 {
        let mut y = x.to_vec();
        self.factor.apply(&mut y);
        y.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    fn check_trust(&self, lambda: f64) -> Result<()> {
        let product = lambda.abs() * self.disc.dx();
        if product > TRUST_LIMIT * (1.0 + 1e-12) {
            return Err(Error::Unresolved { lambda, product, limit: TRUST_LIMIT });
        }
        Ok(())
    }

    /// `i lambda I - A` as a complex banded matrix.
    pub fn shifted(&self, lambda: f64) -> BandMatrix<Complex64> {
        let mut m = self.a.map(|v| Complex64::new(-v, 0.0));
        for i in 0..m.dim() {
            m.add(i, i, Complex64::new(0.0, lambda));
        }
        m
    }
}

/// Upper bidiagonal Cholesky factors `R` of the energy Gram matrix, one per field.
///
/// The Gram matrix of each field is tridiagonal: difference quotients carry
/// the strain energy of `u`, `y` and `psi`, while `v`, `z` enter through a
/// lumped mass `dx`.
#[derive(Debug, Clone)]
pub struct EnergyFactor {
    blocks: Vec<Bidiagonal>,
}

#[derive(Debug, Clone)]
struct Bidiagonal {
    /// Packed indices in node order.
    index: Vec<usize>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

impl Bidiagonal {
    /// Cholesky of the tridiagonal `(main, off)`.
    fn cholesky(index: Vec<usize>, main: &[f64], off: &[f64]) -> Self {
        let n = main.len();
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n.saturating_sub(1)];
        for i in 0..n {
            let prev = if i > 0 { upper[i - 1] * upper[i - 1] } else { 0.0 };
            let d = main[i] - prev;
            assert!(d > 0.0, "energy Gram matrix is not positive definite");
            diag[i] = d.sqrt();
            if i + 1 < n {
                upper[i] = off[i] / diag[i];
            }
        }
        Self { index, diag, upper }
    }

    fn diagonal(index: Vec<usize>, weight: f64) -> Self {
        let n = index.len();
        Self { index, diag: vec![weight.sqrt(); n], upper: vec![0.0; n.saturating_sub(1)] }
    }
}

impl EnergyFactor {
    pub fn new(disc: &Discretization, layout: &Layout) -> Self {
        let n = disc.nodes();
        let dx = disc.dx();
        let interior: Vec<usize> = (1..n - 1).collect();
        let gather = |f: Field, nodes: &[usize]| nodes.iter().map(|&j| layout.index(f, j).unwrap()).collect::<Vec<_>>();
        let strain = |w: &dyn Fn(usize) -> f64, nodes: &[usize]| {
            let main: Vec<f64> = nodes.iter().map(|&j| (w(j - 1) + w(j)) / dx).collect();
            let off: Vec<f64> = nodes.iter().take(nodes.len().saturating_sub(1)).map(|&j| -w(j) / dx).collect();
            (main, off)
        };
        let mut blocks = Vec::new();
        let (main, off) = strain(&|h| disc.b_tilde_half[h], &interior);
        blocks.push(Bidiagonal::cholesky(gather(Field::U, &interior), &main, &off));
        blocks.push(Bidiagonal::diagonal(gather(Field::V, &interior), dx));
        let (main, off) = strain(&|_| 1.0, &interior);
        blocks.push(Bidiagonal::cholesky(gather(Field::Y, &interior), &main, &off));
        blocks.push(Bidiagonal::diagonal(gather(Field::Z, &interior), dx));
        if layout.has_memory() {
            let psi_nodes: Vec<usize> = (1..=disc.memory_last_free()).collect();
            let index = gather(Field::Psi, &psi_nodes);
            if disc.profile.b0 > 0.0 {
                // Half points beyond the memory domain carry no memory energy.
                let w = |h: usize| {
                    if h < disc.memory_half_count() {
                        disc.b_half[h] / disc.g_total
                    } else {
                        0.0
                    }
                };
                let (main, off) = strain(&w, &psi_nodes);
                blocks.push(Bidiagonal::cholesky(index, &main, &off));
            } else {
                // No memory energy without damping; any fixed weight keeps the norm definite.
                blocks.push(Bidiagonal::diagonal(index, dx / disc.g_total));
            }
        }
        Self { blocks }
    }

    /// `x <- R x`.
    pub fn apply<T: nalgebra::ComplexField<RealField = f64> + Copy>(&self, x: &mut [T]) {
        for b in &self.blocks {
            let m = b.index.len();
            for i in 0..m {
                let mut acc = x[b.index[i]] * T::from_real(b.diag[i]);
                if i + 1 < m {
                    acc += x[b.index[i + 1]] * T::from_real(b.upper[i]);
                }
                x[b.index[i]] = acc;
            }
        }
    }

    /// `x <- R^-1 x`.
    pub fn apply_inv<T: nalgebra::ComplexField<RealField = f64> + Copy>(&self, x: &mut [T]) {
        for b in &self.blocks {
            let m = b.index.len();
            for i in (0..m).rev() {
                let mut acc = x[b.index[i]];
                if i + 1 < m {
                    acc -= x[b.index[i + 1]] * T::from_real(b.upper[i]);
                }
                x[b.index[i]] = acc / T::from_real(b.diag[i]);
            }
        }
    }

    /// `x <- R^T x`.
    pub fn apply_t<T: nalgebra::ComplexField<RealField = f64> + Copy>(&self, x: &mut [T]) {
        for b in &self.blocks {
            let m = b.index.len();
            for i in (0..m).rev() {
                let mut acc = x[b.index[i]] * T::from_real(b.diag[i]);
                if i > 0 {
                    acc += x[b.index[i - 1]] * T::from_real(b.upper[i - 1]);
                }
                x[b.index[i]] = acc;
            }
        }
    }

    /// `x <- R^-T x`.
    pub fn apply_inv_t<T: nalgebra::ComplexField<RealField = f64> + Copy>(&self, x: &mut [T]) {
        for b in &self.blocks {
            let m = b.index.len();
            for i in 0..m {
                let mut acc = x[b.index[i]];
                if i > 0 {
                    acc -= x[b.index[i - 1]] * T::from_real(b.upper[i - 1]);
                }
                x[b.index[i]] = acc / T::from_real(b.diag[i]);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolventOptions {
    /// Dense SVD up to this dimension, Lanczos iteration above.
    pub dense_limit: usize,
    /// Relative accuracy of the iterative estimate.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        Self { dense_limit: 800, tol: 1e-10, max_iter: 2000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolventSample {
    pub lambda: f64,
    pub norm: f64,
}

/// `||(i lambda - A)^-1||` in the energy norm.
pub fn resolvent_norm(gen: &GeneratorMatrix, lambda: f64, options: &ResolventOptions) -> Result<f64> {
    gen.check_trust(lambda)?;
    if gen.dim() <= options.dense_limit {
        resolvent_norm_dense(gen, lambda)
    } else {
        resolvent_norm_iterative(gen, lambda, options)
    }
}

/// Reciprocal smallest singular value of `R (i lambda - A) R^-1`.
pub fn resolvent_norm_dense(gen: &GeneratorMatrix, lambda: f64) -> Result<f64> {
    let b = gen.dense_weighted();
    resolvent_from_weighted(&b, lambda)
}

fn resolvent_from_weighted(b: &Mat<f64>, lambda: f64) -> Result<f64> {
    let n = b.nrows();
    let m = Mat::<Complex64>::from_fn(n, n, |i, j| {
        let shift = if i == j { Complex64::new(0.0, lambda) } else { Complex64::new(0.0, 0.0) };
        shift - b[(i, j)]
    });
    let s = m
        .singular_values()
        .map_err(|e| Error::Singular(format!("SVD failed at lambda = {lambda}: {e:?}")))?;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let smin = s.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > smax * f64::EPSILON * n as f64) {
        return Err(Error::Singular(format!("i lambda is in the discrete spectrum (lambda = {lambda})")));
    }
    Ok(1.0 / smin)
}

/// Lanczos on `T^-H T^-1` with `T = R (i lambda - A) R^-1`, using banded solves.
pub fn resolvent_norm_iterative(gen: &GeneratorMatrix, lambda: f64, options: &ResolventOptions) -> Result<f64> {
    let n = gen.dim();
    let forward = gen.shifted(lambda).factor()?;
    // (i lambda - A)^H = -i lambda - A^T.
    let adjoint: BandLu<Complex64> = gen.shifted(lambda).transpose().map(|c| c.conj()).factor()?;
    let apply = |x: &[Complex64]| -> Vec<Complex64> {
        let mut w = x.to_vec();
        gen.factor.apply_inv(&mut w);
        forward.solve_in_place(&mut w);
        gen.factor.apply(&mut w);
        gen.factor.apply_t(&mut w);
        adjoint.solve_in_place(&mut w);
        gen.factor.apply_inv_t(&mut w);
        w
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut start: Vec<Complex64> =
        (0..n).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let krylov = 60.min(n);
    let mut used = 0;
    let mut best = 0.0;
    while used < options.max_iter {
        let (theta, vector, converged, steps) = lanczos_cycle(&apply, &start, krylov, options.tol);
        used += steps;
        best = theta;
        if converged {
            break;
        }
        start = vector;
    }
    if !(best > 0.0) || !best.is_finite() {
        return Err(Error::Singular(format!("resolvent estimate failed at lambda = {lambda}")));
    }
    Ok(best.sqrt())
}

fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// One Lanczos cycle with full reorthogonalization; returns the largest Ritz pair.
fn lanczos_cycle(
    apply: &dyn Fn(&[Complex64]) -> Vec<Complex64>,
    start: &[Complex64],
    krylov: usize,
    tol: f64,
) -> (f64, Vec<Complex64>, bool, usize) {
    let nrm = norm(start);
    let mut basis: Vec<Vec<Complex64>> = vec![start.iter().map(|c| c / nrm).collect()];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut ritz = (0.0, basis[0].clone());
    for k in 0..krylov {
        let mut w = apply(&basis[k]);
        alpha.push(dotc(&basis[k], &w).re);
        for _ in 0..2 {
            for q in &basis {
                let c = dotc(q, &w);
                w.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
            }
        }
        let b = norm(&w);
        let m = alpha.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let (imax, &theta) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let s = eig.eigenvectors.column(imax);
        let residual = b * s[m - 1].abs();
        let converged = residual <= tol * theta.abs() || b <= f64::EPSILON * theta.abs();
        if converged || k + 1 == krylov {
            let mut v = vec![Complex64::new(0.0, 0.0); start.len()];
            for (j, q) in basis.iter().enumerate() {
                v.iter_mut().zip(q).for_each(|(x, y)| *x += s[j] * y);
            }
            ritz = (theta, v);
            return (ritz.0, ritz.1, converged, k + 1);
        }
        beta.push(b);
        basis.push(w.iter().map(|c| c / b).collect());
    }
    (ritz.0, ritz.1, false, krylov)
}

/// Resolvent norms at the given frequencies, in ascending order of `lambda`.
///
/// The map runs on the current rayon pool; the result order does not depend
/// on the number of workers.
pub fn sweep_resolvent(gen: &GeneratorMatrix, lambdas: &[f64], options: &ResolventOptions) -> Result<Vec<ResolventSample>> {
    let mut sorted = lambdas.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    for &l in &sorted {
        gen.check_trust(l)?;
    }
    let dense = (gen.dim() <= options.dense_limit).then(|| gen.dense_weighted());
    sorted
        .par_iter()
        .map(|&lambda| {
            let norm = match &dense {
                Some(b) => resolvent_from_weighted(b, lambda)?,
                None => resolvent_norm_iterative(gen, lambda, options)?,
            };
            Ok(ResolventSample { lambda, norm })
        })
        .collect()
}

/// Uniform grid on `[lo, hi]` merged with extra frequencies, clipped to the trust region.
pub fn sweep_lambdas(disc: &Discretization, lo: f64, hi: Option<f64>, count: usize, extra: &[f64]) -> Vec<f64> {
    let band = TRUST_LIMIT / disc.dx();
    let hi = hi.unwrap_or(band).min(band);
    let mut out: Vec<f64> = if count > 1 {
        (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect()
    } else {
        vec![lo]
    };
    out.extend(extra.iter().copied().filter(|&l| l >= lo && l <= hi));
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Golden-section refinement of every interior local maximum of an ascending sweep.
pub fn refine_peaks(
    gen: &GeneratorMatrix,
    samples: &[ResolventSample],
    options: &ResolventOptions,
    iterations: usize,
) -> Result<Vec<ResolventSample>> {
    let brackets: Vec<(usize, f64, f64)> = (1..samples.len().saturating_sub(1))
        .filter(|&i| samples[i].norm > samples[i - 1].norm && samples[i].norm >= samples[i + 1].norm)
        .map(|i| (i, samples[i - 1].lambda, samples[i + 1].lambda))
        .collect();
    let eval = |l: f64| -> Result<f64> {
        if gen.dim() <= options.dense_limit {
            resolvent_norm_dense(gen, l)
        } else {
            resolvent_norm_iterative(gen, l, options)
        }
    };
    brackets
        .par_iter()
        .map(|&(i, mut a, mut b)| {
            let ratio = 0.5 * (5f64.sqrt() - 1.0);
            let mut best = samples[i];
            let mut x1 = b - ratio * (b - a);
            let mut x2 = a + ratio * (b - a);
            let mut f1 = eval(x1)?;
            let mut f2 = eval(x2)?;
            for _ in 0..iterations {
                if f1 > best.norm {
                    best = ResolventSample { lambda: x1, norm: f1 };
                }
                if f2 > best.norm {
                    best = ResolventSample { lambda: x2, norm: f2 };
                }
                if f1 >= f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - ratio * (b - a);
                    f1 = eval(x1)?;
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + ratio * (b - a);
                    f2 = eval(x2)?;
                }
                if (b - a) <= 1e-13 * b.abs() {
                    break;
                }
            }
            for (x, f) in [(x1, f1), (x2, f2)] {
                if f > best.norm {
                    best = ResolventSample { lambda: x, norm: f };
                }
            }
            Ok(best)
        })
        .collect()
}

/// Interior local maxima of an ascending sweep (all samples if there are none).
pub fn local_maxima(samples: &[ResolventSample]) -> Vec<ResolventSample> {
    let peaks: Vec<ResolventSample> = (1..samples.len().saturating_sub(1))
        .filter(|&i| samples[i].norm > samples[i - 1].norm && samples[i].norm >= samples[i + 1].norm)
        .map(|i| samples[i])
        .collect();
    if peaks.is_empty() {
        samples.to_vec()
    } else {
        peaks
    }
}

/// Largest local maximum in each logarithmic bin (ten per decade).
pub fn peak_envelope(samples: &[ResolventSample]) -> Vec<ResolventSample> {
    let peaks = local_maxima(samples);
    let mut out: Vec<(i64, ResolventSample)> = Vec::new();
    for p in peaks.into_iter().filter(|p| p.lambda > 0.0) {
        let bin = (10.0 * p.lambda.log10()).floor() as i64;
        match out.last_mut() {
            Some((b, best)) if *b == bin => {
                if p.norm > best.norm {
                    *best = p;
                }
            }
            _ => out.push((bin, p)),
        }
    }
    out.into_iter().map(|(_, p)| p).collect()
}

/// Least-squares slope of `log norm` against `log lambda` over the peak envelope.
pub fn growth_exponent(samples: &[ResolventSample]) -> Result<f64> {
    let positive: Vec<ResolventSample> = samples.iter().copied().filter(|s| s.lambda > 0.0).collect();
    if positive.len() < 10 {
        return Err(Error::InsufficientData(format!("{} samples, need at least 10", positive.len())));
    }
    let (lo, hi) = positive
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(s.lambda), hi.max(s.lambda)));
    if hi < 10.0 * lo * (1.0 - 1e-12) {
        return Err(Error::InsufficientData(format!("samples span [{lo}, {hi}], less than a decade")));
    }
    let mut sorted = positive;
    sorted.sort_by(|a, b| a.lambda.total_cmp(&b.lambda));
    let env = peak_envelope(&sorted);
    if env.len() < 3 {
        return Err(Error::InsufficientData(format!("peak envelope has {} points", env.len())));
    }
    let x: Vec<f64> = env.iter().map(|s| s.lambda.ln()).collect();
    let y: Vec<f64> = env.iter().map(|s| s.norm.ln()).collect();
    Ok(slope(&x, &y))
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// The `k` eigenvalues of largest real part from a dense eigensolve.
///
/// This is a finite-dimensional check of the discretization only.
pub fn rightmost_eigenvalues(gen: &GeneratorMatrix, k: usize) -> Result<Vec<Complex64>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let b = gen.dense_weighted();
    let mut eig = b.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    eig.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    eig.truncate(k);
    Ok(eig)
}

/// Largest eigenvalue of the symmetric part of `R A R^-1` (never positive for valid configurations).
pub fn dissipativity_margin(gen: &GeneratorMatrix) -> f64 {
    let b = gen.dense_weighted();
    let n = b.nrows();
    let sym = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (b[(i, j)] + b[(j, i)]));
    sym.self_adjoint_eigenvalues(faer::Side::Lower)
        .expect("symmetric eigensolver failed")
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}
