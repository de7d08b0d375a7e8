//! Linear forward models, the PnP-FBS solver, and stability audits.
//!
//! Measurements are complex-valued vectors (real models keep the imaginary
//! parts at zero). Images are real, and adjoints follow the real-signal
//! convention: `model_adjoint` returns `Re(Aᴴ y)`, which is the exact
//! adjoint of `A` viewed as an operator on real signals.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dft::{forward_unitary_nd, inverse_unitary_nd};
use crate::error::{Error, Result};
use crate::filter::MultiFilter;
use crate::grid::Grid;
use crate::nn::AveragedDenoiser;
use crate::signal::MultiSignal;
use crate::util::{pairwise_sum_by, pairwise_sum_complex_by};

/// A measurement vector `y = A s (+ n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    data: Vec<Complex64>,
}

impl Measurement {
    pub fn new(data: Vec<Complex64>) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn norm(&self) -> f64 {
        pairwise_sum_by(self.data.len(), &|i| self.data[i].norm_sqr()).sqrt()
    }

    pub fn inner_product(&self, other: &Self) -> Result<Complex64> {
        if self.data.len() != other.data.len() {
            return Err(Error::DimensionMismatch(format!(
                "measurement lengths {} vs {}",
                self.data.len(),
                other.data.len()
            )));
        }
        Ok(pairwise_sum_complex_by(self.data.len(), &|i| {
            self.data[i] * other.data[i].conj()
        }))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.data.len() != other.data.len() {
            return Err(Error::DimensionMismatch(format!(
                "measurement lengths {} vs {}",
                self.data.len(),
                other.data.len()
            )));
        }
        Ok(Self {
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// Adds seeded Gaussian noise with standard deviation `sigma` per
    /// component; complex measurements perturb real and imaginary parts
    /// independently.
    pub fn add_noise(&self, sigma: f64, seed: u64, complex: bool) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = self
            .data
            .iter()
            .map(|v| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = if complex {
                    StandardNormal.sample(&mut rng)
                } else {
                    0.0
                };
                v + Complex64::new(sigma * re, sigma * im)
            })
            .collect();
        Self { data }
    }
}

/// Boolean subsampling mask over the DFT bins of a 2-D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingMask {
    grid: Grid,
    keep: Vec<bool>,
}

/// Mask generation schemes for the Fourier measurement model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaskScheme {
    /// Seeded Bernoulli selection plus the forced zero-frequency bin.
    Random { rate: f64, seed: u64 },
    /// Discrete lines through the frequency origin at uniformly spaced
    /// angles, rasterized by rounding.
    Radial { lines: usize },
    /// Every `acceleration`-th row plus a 4-row band around zero frequency.
    Cartesian { acceleration: usize },
}

impl SamplingMask {
    pub fn from_keep(grid: Grid, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} entries for grid {}",
                keep.len(),
                grid
            )));
        }
        if !keep.iter().any(|&k| k) {
            return Err(Error::InvalidParameter("mask selects no bins".into()));
        }
        Ok(Self { grid, keep })
    }

    pub fn full(grid: Grid) -> Self {
        let keep = vec![true; grid.len()];
        Self { grid, keep }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn selected(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn fraction(&self) -> f64 {
        self.selected() as f64 / self.keep.len() as f64
    }

    /// Whether `keep[k] == keep[-k]` for every bin.
    pub fn is_conjugate_symmetric(&self) -> bool {
        (0..self.keep.len()).all(|lin| {
            let idx = self.grid.multi_index(lin);
            let neg: Vec<i64> = idx.iter().map(|&i| -i).collect();
            self.keep[lin] == self.keep[self.grid.wrapped_index(&neg)]
        })
    }
}

/// Builds a sampling mask for a 2-D grid. The zero-frequency bin is always
/// selected; with `symmetric` the mask is completed to conjugate symmetry.
pub fn make_mask(scheme: MaskScheme, grid: &Grid, symmetric: bool) -> Result<SamplingMask> {
    if grid.dims() != 2 {
        return Err(Error::InvalidParameter(format!(
            "mask schemes are defined for 2-D grids, got {grid}"
        )));
    }
    let (rows, cols) = (grid.sizes()[0], grid.sizes()[1]);
    let mut keep = vec![false; grid.len()];
    match scheme {
        MaskScheme::Random { rate, seed } => {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::InvalidParameter(format!(
                    "selection rate must lie in [0, 1], got {rate}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for slot in keep.iter_mut() {
                let u: f64 = rand::Rng::gen(&mut rng);
                *slot = u < rate;
            }
        }
        MaskScheme::Radial { lines } => {
            if lines == 0 {
                return Err(Error::InvalidParameter("radial mask needs at least one line".into()));
            }
            let t_max = ((rows * rows + cols * cols) as f64).sqrt() / 2.0;
            let steps = (t_max / 0.5).ceil() as i64;
            for line in 0..lines {
                let theta = std::f64::consts::PI * line as f64 / lines as f64;
                let (s, c) = theta.sin_cos();
                for step in -steps..=steps {
                    let t = step as f64 * 0.5;
                    let r = (t * c).round() as i64;
                    let q = (t * s).round() as i64;
                    keep[grid.wrapped_index(&[r, q])] = true;
                }
            }
        }
        MaskScheme::Cartesian { acceleration } => {
            if acceleration == 0 {
                return Err(Error::InvalidParameter("acceleration must be positive".into()));
            }
            for r in 0..rows {
                let centered = if r <= rows / 2 { r as i64 } else { r as i64 - rows as i64 };
                let in_band = (-2..=1).contains(&centered);
                if r % acceleration == 0 || in_band {
                    for c in 0..cols {
                        keep[r * cols + c] = true;
                    }
                }
            }
        }
    }
    // the zero-frequency bin is always measured
    keep[0] = true;
    if symmetric {
        for lin in 0..grid.len() {
            if keep[lin] {
                let idx = grid.multi_index(lin);
                let neg: Vec<i64> = idx.iter().map(|&i| -i).collect();
                keep[grid.wrapped_index(&neg)] = true;
            }
        }
    }
    SamplingMask::from_keep(grid.clone(), keep)
}

/// A linear measurement operator with adjoint and certified gradient
/// Lipschitz constant.
#[derive(Debug, Clone)]
pub enum ForwardModel {
    /// `y = s`.
    Identity { grid: Grid },
    /// Scalar periodic convolution with a 1-to-1 kernel filter.
    PeriodicBlur { grid: Grid, kernel: MultiFilter },
    /// Unitary 2-D DFT followed by bin selection; `‖A‖ ≤ 1`.
    MaskedFourier { mask: SamplingMask },
}

impl ForwardModel {
    pub fn identity(grid: Grid) -> Self {
        ForwardModel::Identity { grid }
    }

    pub fn periodic_blur(grid: Grid, kernel: MultiFilter) -> Result<Self> {
        if kernel.in_channels() != 1 || kernel.out_channels() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                got: kernel.in_channels().max(kernel.out_channels()),
            });
        }
        if let Some(d) = kernel.dims() {
            if d != grid.dims() {
                return Err(Error::DimensionMismatch(format!(
                    "kernel offsets have {d} components for grid {grid}"
                )));
            }
        }
        Ok(ForwardModel::PeriodicBlur { grid, kernel })
    }

    pub fn masked_fourier(mask: SamplingMask) -> Self {
        ForwardModel::MaskedFourier { mask }
    }

    pub fn grid(&self) -> &Grid {
        match self {
            ForwardModel::Identity { grid } => grid,
            ForwardModel::PeriodicBlur { grid, .. } => grid,
            ForwardModel::MaskedFourier { mask } => mask.grid(),
        }
    }

    /// Number of measurement components.
    pub fn measurement_len(&self) -> usize {
        match self {
            ForwardModel::Identity { grid } => grid.len(),
            ForwardModel::PeriodicBlur { grid, .. } => grid.len(),
            ForwardModel::MaskedFourier { mask } => mask.selected(),
        }
    }

    /// Whether measurements are genuinely complex.
    pub fn is_complex(&self) -> bool {
        matches!(self, ForwardModel::MaskedFourier { .. })
    }

    fn check_signal(&self, s: &MultiSignal) -> Result<()> {
        if s.channels() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                got: s.channels(),
            });
        }
        if s.grid() != self.grid() {
            return Err(Error::DimensionMismatch(format!(
                "signal grid {} does not match model grid {}",
                s.grid(),
                self.grid()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, s: &MultiSignal) -> Result<Measurement> {
        self.check_signal(s)?;
        match self {
            ForwardModel::Identity { .. } => Ok(Measurement::new(
                s.channel(0).iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            )),
            ForwardModel::PeriodicBlur { kernel, .. } => {
                let blurred = kernel.apply(s)?;
                Ok(Measurement::new(
                    blurred
                        .channel(0)
                        .iter()
                        .map(|&v| Complex64::new(v, 0.0))
                        .collect(),
                ))
            }
            ForwardModel::MaskedFourier { mask } => {
                let mut buf: Vec<Complex64> = s
                    .channel(0)
                    .iter()
                    .map(|&v| Complex64::new(v, 0.0))
                    .collect();
                forward_unitary_nd(&mut buf, mask.grid());
                let data = buf
                    .iter()
                    .zip(mask.keep())
                    .filter_map(|(v, &k)| k.then_some(*v))
                    .collect();
                Ok(Measurement::new(data))
            }
        }
    }

    /// Real-restricted adjoint `Re(Aᴴ y)`.
    pub fn adjoint(&self, y: &Measurement) -> Result<MultiSignal> {
        if y.len() != self.measurement_len() {
            return Err(Error::DimensionMismatch(format!(
                "measurement has {} entries, model expects {}",
                y.len(),
                self.measurement_len()
            )));
        }
        match self {
            ForwardModel::Identity { grid } => MultiSignal::from_data(
                grid.clone(),
                1,
                y.data().iter().map(|v| v.re).collect(),
            ),
            ForwardModel::PeriodicBlur { grid, kernel } => {
                let real = MultiSignal::from_data(
                    grid.clone(),
                    1,
                    y.data().iter().map(|v| v.re).collect(),
                )?;
                kernel.adjoint().apply(&real)
            }
            ForwardModel::MaskedFourier { mask } => {
                let grid = mask.grid();
                let mut buf = vec![Complex64::new(0.0, 0.0); grid.len()];
                let mut it = y.data().iter();
                for (slot, &k) in buf.iter_mut().zip(mask.keep()) {
                    if k {
                        *slot = *it.next().expect("length checked above");
                    }
                }
                inverse_unitary_nd(&mut buf, grid);
                MultiSignal::from_data(grid.clone(), 1, buf.iter().map(|v| v.re).collect())
            }
        }
    }
}

/// Quadratic data-fidelity value `J = ½ ‖y - A s‖²`.
pub fn quadratic_fidelity(model: &ForwardModel, s: &MultiSignal, y: &Measurement) -> Result<f64> {
    let r = model.apply(s)?.sub(y)?;
    Ok(0.5 * r.norm().powi(2))
}

/// Gradient of the quadratic data term with respect to the real signal:
/// `Re(Aᴴ (A s - y))`.
pub fn grad_quadratic(
    model: &ForwardModel,
    s: &MultiSignal,
    y: &Measurement,
) -> Result<MultiSignal> {
    let residual = model.apply(s)?.sub(y)?;
    model.adjoint(&residual)
}

/// Dominant eigenvalue of `s ↦ Re(Aᴴ A s)` by power iteration: the Lipschitz
/// constant of the quadratic gradient. Deterministic (seeded start).
pub fn lipschitz_of_gradient(model: &ForwardModel) -> Result<f64> {
    let grid = model.grid().clone();
    let mut v = MultiSignal::random(grid, 1, 0x9e37_79b9)?;
    let mut lambda = 0.0f64;
    for _ in 0..10_000 {
        let w = model.adjoint(&model.apply(&v)?)?;
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let new_lambda = v.inner_product(&w)? / v.inner_product(&v)?;
        let next = w.scale(1.0 / norm);
        let done = (new_lambda - lambda).abs() <= 1e-10 * new_lambda.abs().max(1.0);
        v = next;
        lambda = new_lambda;
        if done {
            break;
        }
    }
    Ok(lambda.max(0.0))
}

/// Operator norm `‖A‖ = √‖AᴴA‖`.
pub fn model_operator_norm(model: &ForwardModel) -> Result<f64> {
    Ok(lipschitz_of_gradient(model)?.sqrt())
}

/// PnP-FBS solver configuration. The step size must lie in `(0, 2/L)` where
/// `L` is the gradient Lipschitz constant of the data term.
#[derive(Debug, Clone)]
pub struct FbsConfig {
    pub alpha: f64,
    pub max_iters: usize,
    /// Relative fixed-point gap below which the iteration stops.
    pub tol: f64,
    pub record_trace: bool,
}

impl Default for FbsConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            max_iters: 1000,
            tol: 1e-6,
            record_trace: true,
        }
    }
}

/// Solver outcome: final iterate, diagnostics and the gap trace.
#[derive(Debug, Clone)]
pub struct FbsResult {
    pub solution: MultiSignal,
    pub iterations: usize,
    pub converged: bool,
    /// Relative gap trace `‖s^{k+1} - s^k‖ / max(‖s^k‖, ε)` (empty unless
    /// recording was requested).
    pub trace: Vec<f64>,
    pub final_gap: f64,
    pub final_fidelity: f64,
    /// Absolute fixed-point residual `‖s* - Φ(s*)‖` of the returned iterate.
    pub fixed_point_residual: f64,
}

const DIVERGENCE_FACTOR: f64 = 1e6;

fn fbs_iterate(
    model: &ForwardModel,
    y: &Measurement,
    denoise: &dyn Fn(&MultiSignal) -> Result<MultiSignal>,
    cfg: &FbsConfig,
) -> Result<FbsResult> {
    let l = lipschitz_of_gradient(model)?;
    if !(cfg.alpha > 0.0) || (l > 0.0 && cfg.alpha >= 2.0 / l * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter(format!(
            "step size {} outside (0, 2/L) with L = {l:.6}",
            cfg.alpha
        )));
    }
    let step = |s: &MultiSignal| -> Result<MultiSignal> {
        let grad = grad_quadratic(model, s, y)?;
        denoise(&s.linear_combination(1.0, &grad, -cfg.alpha)?)
    };

    let mut s = model.adjoint(y)?; // zero-fill start
    let limit = DIVERGENCE_FACTOR * s.norm().max(1.0);
    let mut trace = Vec::new();
    let mut gap = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0usize;
    for k in 0..cfg.max_iters {
        let next = step(&s)?;
        let denom = s.norm().max(f64::MIN_POSITIVE);
        gap = next.linear_combination(1.0, &s, -1.0)?.norm() / denom;
        if cfg.record_trace {
            trace.push(gap);
        }
        let norm = next.norm();
        if !norm.is_finite() || norm > limit {
            return Err(Error::Divergence {
                norm,
                limit,
                iteration: k + 1,
            });
        }
        s = next;
        iterations = k + 1;
        if gap <= cfg.tol {
            converged = true;
            break;
        }
    }
    let fixed_point_residual = step(&s)?.linear_combination(1.0, &s, -1.0)?.norm();
    let final_fidelity = quadratic_fidelity(model, &s, y)?;
    Ok(FbsResult {
        solution: s,
        iterations,
        converged,
        trace,
        final_gap: gap,
        final_fidelity,
        fixed_point_residual,
    })
}

/// Runs the PnP-FBS iteration `s^{k+1} = D{ s^k - α ∇J(y, A s^k) }` from the
/// zero-fill start until the relative fixed-point gap drops below `cfg.tol`.
pub fn fbs_solve(
    model: &ForwardModel,
    y: &Measurement,
    denoiser: &AveragedDenoiser,
    cfg: &FbsConfig,
) -> Result<FbsResult> {
    fbs_iterate(model, y, &|z| denoiser.apply(z), cfg)
}

/// Two-sided stability audit record: `passed = lhs ≤ rhs + slack`.
#[derive(Debug, Clone)]
pub struct StabilityAudit {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub passed: bool,
    pub converged: (bool, bool),
}

/// Audits measurement-space stability of fixed points: for a β ≤ 1/2
/// averaged denoiser and the quadratic data term,
/// `‖A s₁* - A s₂*‖ ≤ ‖y₁ - y₂‖` up to solver residual slack.
pub fn check_forward_stability(
    model: &ForwardModel,
    denoiser: &AveragedDenoiser,
    cfg: &FbsConfig,
    y1: &Measurement,
    y2: &Measurement,
) -> Result<StabilityAudit> {
    if denoiser.beta() > 0.5 {
        return Err(Error::InvalidParameter(format!(
            "forward stability requires averaging weight ≤ 1/2, got {}",
            denoiser.beta()
        )));
    }
    let r1 = fbs_solve(model, y1, denoiser, cfg)?;
    let r2 = fbs_solve(model, y2, denoiser, cfg)?;
    let lhs = model
        .apply(&r1.solution)?
        .sub(&model.apply(&r2.solution)?)?
        .norm();
    let rhs = y1.sub(y2)?.norm();
    let slack = 10.0 * (r1.fixed_point_residual + r2.fixed_point_residual);
    Ok(StabilityAudit {
        lhs,
        rhs,
        slack,
        passed: lhs <= rhs + slack,
        converged: (r1.converged, r2.converged),
    })
}

/// Audits solution-space stability with an `L₀ < 1` contracted denoiser
/// `z ↦ L₀ · D{z}`: `‖s₁* - s₂*‖ ≤ α L₀ ‖A‖ / (1 - L₀) · ‖y₁ - y₂‖`.
pub fn check_solution_stability(
    model: &ForwardModel,
    denoiser: &AveragedDenoiser,
    cfg: &FbsConfig,
    y1: &Measurement,
    y2: &Measurement,
    l0: f64,
) -> Result<StabilityAudit> {
    if !(0.0..1.0).contains(&l0) {
        return Err(Error::InvalidParameter(format!(
            "contraction factor must satisfy 0 ≤ L₀ < 1, got {l0}"
        )));
    }
    let contracted = |z: &MultiSignal| -> Result<MultiSignal> {
        Ok(denoiser.apply(z)?.scale(l0))
    };
    let r1 = fbs_iterate(model, y1, &contracted, cfg)?;
    let r2 = fbs_iterate(model, y2, &contracted, cfg)?;
    let lhs = r1
        .solution
        .linear_combination(1.0, &r2.solution, -1.0)?
        .norm();
    let a_norm = model_operator_norm(model)?;
    let rhs = cfg.alpha * l0 * a_norm / (1.0 - l0) * y1.sub(y2)?.norm();
    let slack = 10.0 * (r1.fixed_point_residual + r2.fixed_point_residual);
    Ok(StabilityAudit {
        lhs,
        rhs,
        slack,
        passed: lhs <= rhs + slack,
        converged: (r1.converged, r2.converged),
    })
}

/// Peak signal-to-noise ratio in dB, capped at 999 (the exact-match
/// sentinel).
pub fn psnr(reference: &MultiSignal, estimate: &MultiSignal, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::InvalidParameter("peak must be positive".into()));
    }
    let diff = reference.linear_combination(1.0, estimate, -1.0)?;
    let mse = diff.norm().powi(2) / diff.data().len() as f64;
    if mse == 0.0 {
        return Ok(999.0);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(999.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ResidualOperator;

    fn grid2(r: usize, c: usize) -> Grid {
        Grid::new(&[r, c]).unwrap()
    }

    fn blur_half_half(grid: &Grid) -> ForwardModel {
        use crate::filter::Tap;
        use nalgebra::DMatrix;
        let d = grid.dims();
        let mut off1 = vec![0i64; d];
        off1[d - 1] = 1;
        let kernel = MultiFilter::new(
            1,
            1,
            vec![
                Tap { offset: vec![0; d], matrix: DMatrix::from_element(1, 1, 0.5) },
                Tap { offset: off1, matrix: DMatrix::from_element(1, 1, 0.5) },
            ],
        )
        .unwrap();
        ForwardModel::periodic_blur(grid.clone(), kernel).unwrap()
    }

    #[test]
    fn identity_model_copies_signal() {
        let g = grid2(4, 4);
        let s = MultiSignal::random(g.clone(), 1, 1).unwrap();
        let model = ForwardModel::identity(g);
        let y = model.apply(&s).unwrap();
        for (m, &v) in y.data().iter().zip(s.channel(0)) {
            assert_eq!(m.re, v);
            assert_eq!(m.im, 0.0);
        }
    }

    #[test]
    fn full_mask_fourier_is_isometric() {
        let g = grid2(8, 8);
        let s = MultiSignal::random(g.clone(), 1, 2).unwrap();
        let model = ForwardModel::masked_fourier(SamplingMask::full(g));
        let y = model.apply(&s).unwrap();
        assert!((y.norm() - s.norm()).abs() <= 1e-11 * s.norm());
    }

    #[test]
    fn adjoint_consistency_on_random_pairs() {
        let g = grid2(6, 5);
        let mask = make_mask(MaskScheme::Random { rate: 0.4, seed: 3 }, &g, false).unwrap();
        let models = [
            ForwardModel::identity(g.clone()),
            blur_half_half(&g),
            ForwardModel::masked_fourier(mask),
        ];
        for (mi, model) in models.iter().enumerate() {
            for t in 0..100u64 {
                let s = MultiSignal::random(g.clone(), 1, 10_000 + t).unwrap();
                let y_sig = MultiSignal::random(
                    Grid::new(&[model.measurement_len()]).unwrap(),
                    1,
                    20_000 + t,
                )
                .unwrap();
                let y_im = MultiSignal::random(
                    Grid::new(&[model.measurement_len()]).unwrap(),
                    1,
                    30_000 + t,
                )
                .unwrap();
                let y = Measurement::new(
                    y_sig
                        .channel(0)
                        .iter()
                        .zip(y_im.channel(0))
                        .map(|(&re, &im)| {
                            if model.is_complex() {
                                Complex64::new(re, im)
                            } else {
                                Complex64::new(re, 0.0)
                            }
                        })
                        .collect(),
                );
                let lhs = model
                    .apply(&s)
                    .unwrap()
                    .inner_product(&y)
                    .unwrap()
                    .re;
                let rhs = s.inner_product(&model.adjoint(&y).unwrap()).unwrap();
                let scale = (s.norm() * y.norm()).max(1.0);
                assert!(
                    (lhs - rhs).abs() <= 1e-11 * scale,
                    "model {mi}: defect {}",
                    (lhs - rhs).abs() / scale
                );
            }
        }
    }

    #[test]
    fn full_rate_masks_select_everything() {
        let g = grid2(8, 8);
        let full_random = make_mask(MaskScheme::Random { rate: 1.0, seed: 1 }, &g, false).unwrap();
        assert_eq!(full_random.selected(), 64);
        let full_cartesian =
            make_mask(MaskScheme::Cartesian { acceleration: 1 }, &g, false).unwrap();
        assert_eq!(full_cartesian.selected(), 64);
    }

    #[test]
    fn random_mask_hits_requested_rate() {
        let g = grid2(64, 64);
        let mask = make_mask(MaskScheme::Random { rate: 0.3, seed: 42 }, &g, false).unwrap();
        assert!((mask.fraction() - 0.3).abs() < 0.05);
    }

    #[test]
    fn radial_mask_contains_center_lines() {
        let g = grid2(32, 32);
        let mask = make_mask(MaskScheme::Radial { lines: 8 }, &g, false).unwrap();
        assert!(mask.keep()[0]); // zero frequency
        assert!(mask.fraction() > 0.05 && mask.fraction() < 0.9);
    }

    #[test]
    fn symmetric_option_enforces_conjugate_symmetry() {
        let g = grid2(16, 16);
        let plain = make_mask(MaskScheme::Random { rate: 0.3, seed: 7 }, &g, false).unwrap();
        assert!(!plain.is_conjugate_symmetric());
        let sym = make_mask(MaskScheme::Random { rate: 0.3, seed: 7 }, &g, true).unwrap();
        assert!(sym.is_conjugate_symmetric());
    }

    #[test]
    fn mask_rejects_bad_parameters() {
        let g = grid2(8, 8);
        assert!(make_mask(MaskScheme::Random { rate: 1.5, seed: 0 }, &g, false).is_err());
        assert!(make_mask(MaskScheme::Cartesian { acceleration: 0 }, &g, false).is_err());
        assert!(make_mask(MaskScheme::Radial { lines: 0 }, &g, false).is_err());
        let g1 = Grid::new(&[8]).unwrap();
        assert!(make_mask(MaskScheme::Cartesian { acceleration: 2 }, &g1, false).is_err());
    }

    #[test]
    fn gradient_vanishes_at_exact_solution() {
        let g = grid2(4, 4);
        let model = ForwardModel::identity(g.clone());
        let s = MultiSignal::random(g, 1, 9).unwrap();
        let y = model.apply(&s).unwrap();
        let grad = grad_quadratic(&model, &s, &y).unwrap();
        assert!(grad.norm() < 1e-14);
    }

    #[test]
    fn gradient_of_identity_model_is_residual() {
        let g = grid2(3, 3);
        let model = ForwardModel::identity(g.clone());
        let s = MultiSignal::random(g.clone(), 1, 10).unwrap();
        let target = MultiSignal::random(g, 1, 11).unwrap();
        let y = model.apply(&target).unwrap();
        let grad = grad_quadratic(&model, &s, &y).unwrap();
        let expected = s.linear_combination(1.0, &target, -1.0).unwrap();
        for (a, b) in grad.data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let g = grid2(5, 4);
        let mask = make_mask(MaskScheme::Random { rate: 0.5, seed: 5 }, &g, false).unwrap();
        let models = [
            ForwardModel::identity(g.clone()),
            blur_half_half(&g),
            ForwardModel::masked_fourier(mask),
        ];
        let eps = 1e-5;
        for model in &models {
            let s = MultiSignal::random(g.clone(), 1, 21).unwrap();
            let truth = MultiSignal::random(g.clone(), 1, 22).unwrap();
            let y = model.apply(&truth).unwrap().add_noise(0.05, 23, model.is_complex());
            let grad = grad_quadratic(model, &s, &y).unwrap();
            for t in 0..20u64 {
                let dir = MultiSignal::random(g.clone(), 1, 40_000 + t).unwrap();
                let dir = dir.scale(1.0 / dir.norm());
                let plus = s.linear_combination(1.0, &dir, eps).unwrap();
                let minus = s.linear_combination(1.0, &dir, -eps).unwrap();
                let fd = (quadratic_fidelity(model, &plus, &y).unwrap()
                    - quadratic_fidelity(model, &minus, &y).unwrap())
                    / (2.0 * eps);
                let an = grad.inner_product(&dir).unwrap();
                assert!(
                    (fd - an).abs() <= 1e-6 * an.abs().max(1.0),
                    "fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn gradient_lipschitz_identity_is_one() {
        let model = ForwardModel::identity(grid2(6, 6));
        assert!((lipschitz_of_gradient(&model).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gradient_lipschitz_masked_fourier_is_one() {
        let g = grid2(16, 16);
        for scheme in [
            MaskScheme::Random { rate: 0.35, seed: 2 },
            MaskScheme::Cartesian { acceleration: 4 },
            MaskScheme::Radial { lines: 12 },
        ] {
            let mask = make_mask(scheme, &g, false).unwrap();
            let model = ForwardModel::masked_fourier(mask);
            let l = lipschitz_of_gradient(&model).unwrap();
            assert!((l - 1.0).abs() < 1e-8, "L = {l}");
        }
    }

    #[test]
    fn gradient_lipschitz_of_half_half_blur_is_one() {
        let g = grid2(8, 8);
        let model = blur_half_half(&g);
        let l = lipschitz_of_gradient(&model).unwrap();
        assert!((l - 1.0).abs() < 1e-6, "L = {l}");
    }

    fn near_identity_denoiser() -> AveragedDenoiser {
        AveragedDenoiser::new(ResidualOperator::scale(1.0).unwrap(), 1e-9).unwrap()
    }

    #[test]
    fn identity_model_converges_immediately_with_identity_denoiser() {
        let g = grid2(4, 5);
        let model = ForwardModel::identity(g.clone());
        let target = MultiSignal::random(g, 1, 31).unwrap();
        let y = model.apply(&target).unwrap();
        let cfg = FbsConfig {
            alpha: 1.0,
            max_iters: 5,
            tol: 1e-9,
            record_trace: true,
        };
        let result = fbs_solve(&model, &y, &near_identity_denoiser(), &cfg).unwrap();
        assert!(result.converged);
        assert!(result.iterations <= 2);
        let err = result
            .solution
            .linear_combination(1.0, &target, -1.0)
            .unwrap()
            .norm();
        assert!(err <= 1e-7 * target.norm());
    }

    fn haar_denoiser(grid: &Grid, tau: f64, beta: f64) -> AveragedDenoiser {
        use crate::builders::{build_mult, build_patch, OrthoMatrix};
        use crate::filter::TapSet;
        let patch = build_patch(
            &TapSet::new(vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]).unwrap(),
            1,
        )
        .unwrap();
        let h = 0.5f64;
        let haar = OrthoMatrix::new(nalgebra::DMatrix::from_row_slice(
            4,
            4,
            &[
                h, h, h, h,
                h, -h, h, -h,
                h, h, -h, -h,
                h, -h, -h, h,
            ],
        ))
        .unwrap();
        let transform = MultiFilter::compose(&build_mult(&haar, 2).unwrap(), &patch).unwrap();
        let residual = ResidualOperator::frame_threshold(transform, tau, grid).unwrap();
        AveragedDenoiser::new(residual, beta).unwrap()
    }

    #[test]
    fn fbs_fixed_point_satisfies_defining_equation() {
        let g = grid2(8, 8);
        let model = ForwardModel::identity(g.clone());
        let target = crate::phantom::piecewise_phantom(8, 8).unwrap();
        let y = model.apply(&target).unwrap().add_noise(0.05, 51, false);
        let denoiser = haar_denoiser(&g, 0.05, 0.4);
        let cfg = FbsConfig {
            alpha: 1.0,
            max_iters: 2000,
            tol: 1e-12,
            record_trace: false,
        };
        let result = fbs_solve(&model, &y, &denoiser, &cfg).unwrap();
        assert!(result.converged);
        // s* = D{(1-α)s* + α Aᴴy} for the identity model
        let inner = result
            .solution
            .linear_combination(0.0, &model.adjoint(&y).unwrap(), 1.0)
            .unwrap();
        let fixed = denoiser.apply(&inner).unwrap();
        let defect = fixed
            .linear_combination(1.0, &result.solution, -1.0)
            .unwrap()
            .norm();
        assert!(defect <= 1e-9 * result.solution.norm().max(1.0));
    }

    #[test]
    fn fbs_divergence_guard_fires_on_expanding_map() {
        let g = grid2(4, 4);
        let model = ForwardModel::identity(g.clone());
        let y = model
            .apply(&MultiSignal::random(g, 1, 61).unwrap())
            .unwrap();
        // a step size just inside (0, 2/L) with an adversarial "denoiser"
        let cfg = FbsConfig {
            alpha: 1.999,
            max_iters: 100_000,
            tol: 0.0,
            record_trace: false,
        };
        let expanding = |z: &MultiSignal| -> Result<MultiSignal> { Ok(z.scale(1.5)) };
        let err = fbs_iterate(&model, &y, &expanding, &cfg);
        assert!(matches!(err, Err(Error::Divergence { .. })));
    }

    #[test]
    fn forward_stability_trivially_holds_for_equal_measurements() {
        let g = grid2(6, 6);
        let model = ForwardModel::identity(g.clone());
        let y = model
            .apply(&MultiSignal::random(g.clone(), 1, 71).unwrap())
            .unwrap();
        let denoiser = haar_denoiser(&g, 0.02, 0.4);
        let cfg = FbsConfig {
            alpha: 1.0,
            max_iters: 3000,
            tol: 1e-11,
            record_trace: false,
        };
        let audit = check_forward_stability(&model, &denoiser, &cfg, &y, &y).unwrap();
        assert!(audit.passed);
        assert!(audit.lhs <= audit.slack);
        assert_eq!(audit.rhs, 0.0);
    }

    #[test]
    fn forward_stability_rejects_large_beta() {
        let g = grid2(4, 4);
        let model = ForwardModel::identity(g.clone());
        let y = model
            .apply(&MultiSignal::random(g.clone(), 1, 81).unwrap())
            .unwrap();
        let denoiser = haar_denoiser(&g, 0.02, 0.7);
        let cfg = FbsConfig::default();
        assert!(check_forward_stability(&model, &denoiser, &cfg, &y, &y).is_err());
    }

    #[test]
    fn forward_stability_holds_on_identity_perturbations() {
        let g = grid2(8, 8);
        let model = ForwardModel::identity(g.clone());
        let denoiser = haar_denoiser(&g, 0.03, 0.4);
        let cfg = FbsConfig {
            alpha: 1.0,
            max_iters: 4000,
            tol: 1e-11,
            record_trace: false,
        };
        for t in 0..5u64 {
            let base = MultiSignal::random(g.clone(), 1, 900 + t).unwrap();
            let y1 = model.apply(&base).unwrap();
            let y2 = y1.add_noise(0.05, 1000 + t, false);
            let audit = check_forward_stability(&model, &denoiser, &cfg, &y1, &y2).unwrap();
            assert!(audit.converged.0 && audit.converged.1);
            assert!(
                audit.passed,
                "lhs {} rhs {} slack {}",
                audit.lhs, audit.rhs, audit.slack
            );
        }
    }

    #[test]
    fn solution_stability_rejects_non_contractive_l0() {
        let g = grid2(4, 4);
        let model = ForwardModel::identity(g.clone());
        let y = model
            .apply(&MultiSignal::random(g.clone(), 1, 91).unwrap())
            .unwrap();
        let denoiser = haar_denoiser(&g, 0.02, 0.4);
        let cfg = FbsConfig::default();
        assert!(
            check_solution_stability(&model, &denoiser, &cfg, &y, &y, 1.0).is_err()
        );
    }

    #[test]
    fn solution_stability_holds_with_contracted_denoiser() {
        let g = grid2(8, 8);
        let model = ForwardModel::identity(g.clone());
        let denoiser = haar_denoiser(&g, 0.02, 0.4);
        let cfg = FbsConfig {
            alpha: 1.0,
            max_iters: 2000,
            tol: 1e-11,
            record_trace: false,
        };
        for t in 0..5u64 {
            let base = MultiSignal::random(g.clone(), 1, 1100 + t).unwrap();
            let y1 = model.apply(&base).unwrap();
            let y2 = y1.add_noise(0.1, 1200 + t, false);
            let audit =
                check_solution_stability(&model, &denoiser, &cfg, &y1, &y2, 0.9).unwrap();
            assert!(audit.converged.0 && audit.converged.1);
            assert!(audit.passed);
        }
        // degenerate L₀ = 0: solver collapses to zero, bound trivial
        let y = model
            .apply(&MultiSignal::random(g.clone(), 1, 1300).unwrap())
            .unwrap();
        let y2 = y.add_noise(0.1, 1301, false);
        let audit = check_solution_stability(&model, &denoiser, &cfg, &y, &y2, 0.0).unwrap();
        assert!(audit.passed);
        assert!(audit.lhs <= audit.slack + 1e-12);
    }

    #[test]
    fn desk_scale_cartesian_reconstruction_converges_quickly() {
        // 64x64 phantom, Cartesian acceleration 4: the gap falls below 1e-6
        // well within 500 iterations for a moderately thresholding denoiser
        let truth = crate::phantom::piecewise_phantom(64, 64).unwrap();
        let grid = truth.grid().clone();
        let mask =
            make_mask(MaskScheme::Cartesian { acceleration: 4 }, &grid, false).unwrap();
        let model = ForwardModel::masked_fourier(mask);
        let y = model.apply(&truth).unwrap().add_noise(10.0 / 255.0, 3, true);
        let transform =
            crate::nn::multiscale_haar_frame_2d(&[(1, 1), (2, 1), (2, 2)]).unwrap();
        let denoiser = AveragedDenoiser::new(
            ResidualOperator::frame_threshold(transform, 0.05, &grid).unwrap(),
            0.4,
        )
        .unwrap();
        let cfg = FbsConfig {
            alpha: 1.0 / lipschitz_of_gradient(&model).unwrap(),
            max_iters: 500,
            tol: 1e-6,
            record_trace: false,
        };
        let result = fbs_solve(&model, &y, &denoiser, &cfg).unwrap();
        assert!(result.converged, "gap {:.3e} after {} iterations", result.final_gap, result.iterations);
        assert!(result.iterations <= 500);
    }

    #[test]
    fn psnr_exact_match_is_capped() {
        let x = MultiSignal::random(grid2(4, 4), 1, 7).unwrap();
        assert_eq!(psnr(&x, &x, 1.0).unwrap(), 999.0);
    }

    #[test]
    fn psnr_zero_db_when_mse_equals_peak_squared() {
        let g = grid2(2, 2);
        let x = MultiSignal::zeros(g.clone(), 1).unwrap();
        let y = MultiSignal::from_data(g, 1, vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        assert!((psnr(&x, &y, 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn psnr_of_constant_offset_matches_closed_form() {
        let g = grid2(5, 5);
        let x = MultiSignal::zeros(g.clone(), 1).unwrap();
        let y = MultiSignal::from_data(g, 1, vec![0.1; 25]).unwrap();
        // 10·log₁₀(1 / 0.01) = 20 dB
        assert!((psnr(&x, &y, 1.0).unwrap() - 20.0).abs() < 1e-10);
    }

    #[test]
    fn plain_gradient_descent_converges_on_identity_model() {
        let g = grid2(6, 6);
        let model = ForwardModel::identity(g.clone());
        let target = MultiSignal::random(g, 1, 141).unwrap();
        let y = model.apply(&target).unwrap();
        for alpha in [0.3, 1.0, 1.7] {
            let cfg = FbsConfig {
                alpha,
                max_iters: 2000,
                tol: 1e-10,
                record_trace: false,
            };
            let result = fbs_solve(&model, &y, &near_identity_denoiser(), &cfg).unwrap();
            assert!(result.converged, "alpha {alpha}");
            let err = result
                .solution
                .linear_combination(1.0, &target, -1.0)
                .unwrap()
                .norm();
            assert!(err <= 1e-6 * target.norm());
        }
    }

    #[test]
    fn smoothed_gap_trace_trends_downward() {
        let g = grid2(8, 8);
        let model = ForwardModel::identity(g.clone());
        let target = crate::phantom::piecewise_phantom(8, 8).unwrap();
        let y = model.apply(&target).unwrap().add_noise(0.04, 151, false);
        let denoiser = haar_denoiser(&g, 0.04, 0.4);
        let cfg = FbsConfig {
            alpha: 1.0,
            max_iters: 300,
            tol: 0.0,
            record_trace: true,
        };
        let result = fbs_solve(&model, &y, &denoiser, &cfg).unwrap();
        let window = 10usize;
        let smoothed: Vec<f64> = result
            .trace
            .windows(window)
            .map(|w| w.iter().sum::<f64>() / window as f64)
            .collect();
        // empirical check, not asserted hard: count increases
        let increases = smoothed
            .windows(2)
            .filter(|w| w[1] > w[0] * (1.0 + 1e-9))
            .count();
        assert!(
            increases * 10 <= smoothed.len(),
            "{} increases in {} smoothed gaps",
            increases,
            smoothed.len()
        );
    }
}
