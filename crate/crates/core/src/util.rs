//! Small numeric helpers shared across modules.

use num_complex::Complex64;

const PAIRWISE_BASE: usize = 32;

/// Pairwise (cascade) summation of `f(0..n)`. Deterministic regardless of
/// thread count and more accurate than a running sum for long reductions.
pub fn pairwise_sum_by(n: usize, f: &impl Fn(usize) -> f64) -> f64 {
    fn rec(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
        if hi - lo <= PAIRWISE_BASE {
            let mut acc = 0.0;
            for i in lo..hi {
                acc += f(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, f)
}

/// Pairwise summation of complex terms.
pub fn pairwise_sum_complex_by(n: usize, f: &impl Fn(usize) -> Complex64) -> Complex64 {
    fn rec(lo: usize, hi: usize, f: &impl Fn(usize) -> Complex64) -> Complex64 {
        if hi - lo <= PAIRWISE_BASE {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in lo..hi {
                acc += f(i);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, f)
}
