//! Multidimensional DFT helpers on periodic grids, built on rustfft.
//!
//! Conventions: `forward` is the unnormalized analysis transform
//! `x̂[b] = Σ_k x[k] e^{-j⟨ω_b, k⟩}` with `ω_b = 2π (b₁/n₁, …, b_d/n_d)`;
//! `inverse` applies the conjugate transform scaled by `1/K` so that
//! `inverse(forward(x)) = x` exactly up to rounding. The unitary pair scales
//! both directions by `1/√K` and is used by the Fourier measurement model.

use num_complex::Complex64;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::grid::Grid;

fn fft_axis(data: &mut [Complex64], sizes: &[usize], axis: usize, inverse: bool) {
    let n = sizes[axis];
    if n == 1 {
        return;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };

    // stride between consecutive elements along `axis`, and number of lines
    let stride: usize = sizes[axis + 1..].iter().product();
    let outer: usize = sizes[..axis].iter().product();
    let mut line = vec![Complex::new(0.0, 0.0); n];
    for o in 0..outer {
        for s in 0..stride {
            let base = o * n * stride + s;
            for (t, slot) in line.iter_mut().enumerate() {
                *slot = data[base + t * stride];
            }
            fft.process(&mut line);
            for (t, value) in line.iter().enumerate() {
                data[base + t * stride] = *value;
            }
        }
    }
}

/// In-place unnormalized forward DFT over all axes of `grid`.
pub fn forward_nd(data: &mut [Complex64], grid: &Grid) {
    debug_assert_eq!(data.len(), grid.len());
    for axis in 0..grid.dims() {
        fft_axis(data, grid.sizes(), axis, false);
    }
}

/// In-place inverse DFT (conjugate transform scaled by `1/K`).
pub fn inverse_nd(data: &mut [Complex64], grid: &Grid) {
    debug_assert_eq!(data.len(), grid.len());
    for axis in 0..grid.dims() {
        fft_axis(data, grid.sizes(), axis, true);
    }
    let scale = 1.0 / grid.len() as f64;
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Unitary forward DFT (scaled by `1/√K`), in place.
pub fn forward_unitary_nd(data: &mut [Complex64], grid: &Grid) {
    forward_nd(data, grid);
    let scale = 1.0 / (grid.len() as f64).sqrt();
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Adjoint (= inverse) of the unitary forward DFT, in place.
pub fn inverse_unitary_nd(data: &mut [Complex64], grid: &Grid) {
    for axis in 0..grid.dims() {
        fft_axis(data, grid.sizes(), axis, true);
    }
    let scale = 1.0 / (grid.len() as f64).sqrt();
    for v in data.iter_mut() {
        *v *= scale;
    }
}

/// Angular frequency `ω_b` of DFT bin `b` (row-major linear index).
pub fn bin_frequency(grid: &Grid, bin: usize) -> Vec<f64> {
    let idx = grid.multi_index(bin);
    idx.iter()
        .zip(grid.sizes())
        .map(|(&b, &n)| 2.0 * std::f64::consts::PI * b as f64 / n as f64)
        .collect()
}
