//! Frequency-domain analysis of multichannel filters.
//!
//! On a finite periodic grid the DFT diagonalizes every filter exactly, so
//! the operator norm is a finite maximum of per-bin singular values and the
//! Parseval property can be checked to machine precision. Per-bin spectra of
//! Hermitian Gram matrices are computed through their real symmetric
//! embedding `[[Re, -Im], [Im, Re]]`, which doubles every eigenvalue but is
//! numerically rock-solid.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dft::bin_frequency;
use crate::error::{Error, Result};
use crate::filter::MultiFilter;
use crate::grid::Grid;
use crate::signal::MultiSignal;

/// Matrix-valued frequency response sampled at the grid's DFT bins.
#[derive(Debug, Clone)]
pub struct FrequencyResponse {
    grid: Grid,
    in_channels: usize,
    out_channels: usize,
    bins: Vec<DMatrix<Complex64>>,
}

impl FrequencyResponse {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn bins(&self) -> &[DMatrix<Complex64>] {
        &self.bins
    }

    pub fn bin(&self, b: usize) -> &DMatrix<Complex64> {
        &self.bins[b]
    }
}

/// Outcome of the Parseval verification of Prop-style dual tests: a
/// paraunitarity check per frequency bin and a flip-transpose check on the
/// tap algebra.
#[derive(Debug, Clone)]
pub struct ParsevalReport {
    pub max_paraunitarity_defect: f64,
    pub max_time_domain_defect: f64,
    pub operator_norm: f64,
    pub tol: f64,
    pub passed: bool,
}

/// Evaluates `Ĥ(ω) = Σ_taps H[k] e^{-j⟨ω,k⟩}` at one frequency.
pub fn response_at(filter: &MultiFilter, omega: &[f64]) -> DMatrix<Complex64> {
    let mut acc = DMatrix::<Complex64>::zeros(filter.out_channels(), filter.in_channels());
    for tap in filter.taps() {
        let phase: f64 = omega
            .iter()
            .zip(&tap.offset)
            .map(|(w, &k)| w * k as f64)
            .sum();
        let tw = Complex64::new(0.0, -phase).exp();
        for m in 0..filter.out_channels() {
            for n in 0..filter.in_channels() {
                acc[(m, n)] += tw * tap.matrix[(m, n)];
            }
        }
    }
    acc
}

fn check_filter_dims(filter: &MultiFilter, grid: &Grid) -> Result<()> {
    if let Some(d) = filter.dims() {
        if d != grid.dims() {
            return Err(Error::DimensionMismatch(format!(
                "filter offsets have {d} components, grid {grid} has {} axes",
                grid.dims()
            )));
        }
    }
    Ok(())
}

/// Samples the matrix-valued frequency response at every DFT bin of `grid`.
pub fn freq_response(filter: &MultiFilter, grid: &Grid) -> Result<FrequencyResponse> {
    check_filter_dims(filter, grid)?;
    let k = grid.len();
    let bins: Vec<DMatrix<Complex64>> = (0..k)
        .into_par_iter()
        .map(|b| response_at(filter, &bin_frequency(grid, b)))
        .collect();
    Ok(FrequencyResponse {
        grid: grid.clone(),
        in_channels: filter.in_channels(),
        out_channels: filter.out_channels(),
        bins,
    })
}

/// Real symmetric embedding of a Hermitian complex matrix; every eigenvalue
/// of the input shows up twice in the output.
fn hermitian_embedding(g: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = g.nrows();
    let mut out = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = g[(i, j)];
            out[(i, j)] = z.re;
            out[(i + n, j + n)] = z.re;
            out[(i, j + n)] = -z.im;
            out[(i + n, j)] = z.im;
        }
    }
    out
}

/// Largest eigenvalue (and eigenvector) of a Hermitian PSD matrix.
fn top_eigenpair(g: &DMatrix<Complex64>) -> (f64, DVector<Complex64>) {
    let n = g.nrows();
    let eig = SymmetricEigen::new(hermitian_embedding(g));
    let mut best = 0usize;
    for i in 1..2 * n {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let w = eig.eigenvectors.column(best);
    let v = DVector::from_fn(n, |i, _| Complex64::new(w[i], w[i + n]));
    (eig.eigenvalues[best].max(0.0), v)
}

fn max_singular_value(bin: &DMatrix<Complex64>) -> f64 {
    let gram = bin.adjoint() * bin;
    top_eigenpair(&gram).0.sqrt()
}

/// Exact ℓ₂→ℓ₂ operator norm on the periodic grid: the maximum over all DFT
/// bins of the largest singular value of `Ĥ(ω)`. Equals the Lipschitz
/// constant of the convolution operator.
pub fn operator_norm(filter: &MultiFilter, grid: &Grid) -> Result<f64> {
    check_filter_dims(filter, grid)?;
    let k = grid.len();
    let per_bin: Vec<f64> = (0..k)
        .into_par_iter()
        .map(|b| max_singular_value(&response_at(filter, &bin_frequency(grid, b))))
        .collect();
    Ok(per_bin.into_iter().fold(0.0, f64::max))
}

/// A real signal achieving `‖H x‖ ≥ (1 - ε) ‖T_H‖ ‖x‖`, built from the top
/// right-singular vector at the norm-maximizing bin.
pub fn norm_probe(filter: &MultiFilter, grid: &Grid) -> Result<MultiSignal> {
    check_filter_dims(filter, grid)?;
    let k = grid.len();
    let mut best_bin = 0usize;
    let mut best_val = -1.0f64;
    let mut best_vec = DVector::<Complex64>::zeros(filter.in_channels());
    for b in 0..k {
        let bin = response_at(filter, &bin_frequency(grid, b));
        let (val, vec) = top_eigenpair(&(bin.adjoint() * &bin));
        if val > best_val {
            best_val = val;
            best_bin = b;
            best_vec = vec;
        }
    }
    let omega = bin_frequency(grid, best_bin);
    let n_ch = filter.in_channels();
    // x[n][k] = Re(v_n e^{j⟨ω,k⟩}); fall back to the quadrature component if
    // the real part degenerates (self-conjugate bins with imaginary v).
    let build = |rotate: Complex64| -> Result<MultiSignal> {
        let mut x = MultiSignal::zeros(grid.clone(), n_ch)?;
        for site in 0..k {
            let idx = grid.multi_index(site);
            let phase: f64 = omega.iter().zip(&idx).map(|(w, &i)| w * i as f64).sum();
            let e = Complex64::new(0.0, phase).exp() * rotate;
            for n in 0..n_ch {
                x.channel_mut(n)[site] = (best_vec[n] * e).re;
            }
        }
        Ok(x)
    };
    let a = build(Complex64::new(1.0, 0.0))?;
    let b = build(Complex64::new(0.0, 1.0))?;
    Ok(if a.norm() >= b.norm() { a } else { b })
}

/// Paraunitarity and flip-transpose verification of a candidate Parseval
/// filter. `M ≥ N` is required; norm preservation onto fewer channels is
/// impossible.
pub fn is_parseval(filter: &MultiFilter, grid: &Grid, tol: f64) -> Result<ParsevalReport> {
    if filter.out_channels() < filter.in_channels() {
        return Err(Error::NotParseval(format!(
            "{}-to-{} filter cannot preserve norms: fewer output than input channels",
            filter.in_channels(),
            filter.out_channels()
        )));
    }
    check_filter_dims(filter, grid)?;
    let k = grid.len();
    let n = filter.in_channels();

    let stats: Vec<(f64, f64)> = (0..k)
        .into_par_iter()
        .map(|b| {
            let bin = response_at(filter, &bin_frequency(grid, b));
            let mut gram = bin.adjoint() * &bin;
            let sigma = top_eigenpair(&gram).0.sqrt();
            for i in 0..n {
                gram[(i, i)] -= Complex64::new(1.0, 0.0);
            }
            (gram.norm(), sigma)
        })
        .collect();
    let max_paraunitarity_defect = stats.iter().map(|s| s.0).fold(0.0, f64::max);
    let operator_norm = stats.iter().map(|s| s.1).fold(0.0, f64::max);

    // flip-transpose test on the tap algebra: adjoint(H) ∗ H = I_N δ
    let gram_filter = MultiFilter::compose(&filter.adjoint(), filter)?;
    let mut defect_sq = 0.0f64;
    let mut saw_origin = false;
    let dims = filter.dims().unwrap_or(grid.dims());
    for tap in gram_filter.taps() {
        let at_origin = tap.offset.iter().all(|&o| o == 0);
        let target = if at_origin {
            saw_origin = true;
            DMatrix::<f64>::identity(n, n)
        } else {
            DMatrix::<f64>::zeros(n, n)
        };
        defect_sq += (&tap.matrix - target).norm_squared();
    }
    if !saw_origin {
        // zero matrix at the origin entirely missing from the tap list
        defect_sq += n as f64;
        let _ = dims;
    }
    let max_time_domain_defect = defect_sq.sqrt();

    let passed = max_paraunitarity_defect <= tol && max_time_domain_defect <= tol;
    Ok(ParsevalReport {
        max_paraunitarity_defect,
        max_time_domain_defect,
        operator_norm,
        tol,
        passed,
    })
}

/// Default absolute tolerance on Parseval defects in double precision.
pub const DEFAULT_PARSEVAL_TOL: f64 = 1e-9;

/// Max normalized inner-product drift `|⟨x,y⟩ - ⟨Hx,Hy⟩| / (‖x‖‖y‖)` over
/// seeded random signal pairs.
pub fn inner_product_preservation_check(
    filter: &MultiFilter,
    grid: &Grid,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let mut max_defect = 0.0f64;
    for t in 0..trials {
        let x = MultiSignal::random(grid.clone(), filter.in_channels(), seed ^ (2 * t as u64))?;
        let y = MultiSignal::random(
            grid.clone(),
            filter.in_channels(),
            seed ^ (2 * t as u64 + 1),
        )?;
        let before = x.inner_product(&y)?;
        let after = filter.apply(&x)?.inner_product(&filter.apply(&y)?)?;
        let scale = (x.norm() * y.norm()).max(f64::MIN_POSITIVE);
        max_defect = max_defect.max((before - after).abs() / scale);
    }
    Ok(max_defect)
}

/// Checks that the Gram operator `P = H ∘ adjoint(H)` of a Parseval filter
/// acts as an orthogonal projector: idempotent and self-adjoint on random
/// signals. Returns the largest normalized defect.
pub fn gram_projector_check(
    filter: &MultiFilter,
    grid: &Grid,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let projector = MultiFilter::compose(filter, &filter.adjoint())?;
    let m = filter.out_channels();
    let mut max_defect = 0.0f64;
    for t in 0..trials {
        let y = MultiSignal::random(grid.clone(), m, seed ^ (3 * t as u64))?;
        let py = projector.apply(&y)?;
        let ppy = projector.apply(&py)?;
        let idem = ppy.linear_combination(1.0, &py, -1.0)?.norm() / y.norm().max(f64::MIN_POSITIVE);
        max_defect = max_defect.max(idem);

        let z = MultiSignal::random(grid.clone(), m, seed ^ (3 * t as u64 + 1))?;
        let lhs = py.inner_product(&z)?;
        let rhs = y.inner_product(&projector.apply(&z)?)?;
        let scale = (y.norm() * z.norm()).max(f64::MIN_POSITIVE);
        max_defect = max_defect.max((lhs - rhs).abs() / scale);
    }
    Ok(max_defect)
}

/// Singular values of one frequency bin, largest first.
pub fn bin_singular_values(bin: &DMatrix<Complex64>) -> Vec<f64> {
    let gram = if bin.nrows() >= bin.ncols() {
        bin.adjoint() * bin
    } else {
        bin * bin.adjoint()
    };
    let eig = SymmetricEigen::new(hermitian_embedding(&gram));
    let mut vals: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0).sqrt()).collect();
    vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // the embedding doubles every eigenvalue
    vals.into_iter().step_by(2).collect()
}
