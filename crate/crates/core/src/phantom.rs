//! Synthetic piecewise-constant test images.

use crate::error::Result;
use crate::grid::Grid;
use crate::signal::MultiSignal;

/// Deterministic piecewise-constant phantom: a few overlapping ellipses and
/// a bar on a dark background, values in `[0, 1]`. Closed-form, no RNG.
pub fn piecewise_phantom(rows: usize, cols: usize) -> Result<MultiSignal> {
    let grid = Grid::new(&[rows, cols])?;
    let mut img = MultiSignal::zeros(grid, 1)?;
    let (h, w) = (rows as f64, cols as f64);

    // (center_r, center_c, semi_r, semi_c, angle, intensity), in unit coords
    let ellipses: [(f64, f64, f64, f64, f64, f64); 5] = [
        (0.50, 0.50, 0.42, 0.36, 0.0, 0.65),
        (0.50, 0.50, 0.36, 0.30, 0.0, -0.25),
        (0.40, 0.38, 0.12, 0.09, 0.5, 0.45),
        (0.42, 0.64, 0.10, 0.07, -0.6, 0.35),
        (0.70, 0.50, 0.07, 0.11, 0.0, 0.50),
    ];

    let data = img.channel_mut(0);
    for r in 0..rows {
        for c in 0..cols {
            let y = (r as f64 + 0.5) / h;
            let x = (c as f64 + 0.5) / w;
            let mut v = 0.05;
            for &(cy, cx, ay, ax, angle, intensity) in &ellipses {
                let (s, co) = angle.sin_cos();
                let dy = y - cy;
                let dx = x - cx;
                let u = co * dy + s * dx;
                let t = -s * dy + co * dx;
                if (u / ay).powi(2) + (t / ax).powi(2) <= 1.0 {
                    v += intensity;
                }
            }
            // a thin bright bar for sharp-edge content
            if (0.78..0.84).contains(&y) && (0.25..0.75).contains(&x) {
                v += 0.3;
            }
            data[r * cols + c] = v.clamp(0.0, 1.0);
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantom_values_stay_in_unit_range() {
        let p = piecewise_phantom(64, 64).unwrap();
        for &v in p.data() {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn phantom_has_structure() {
        let p = piecewise_phantom(32, 32).unwrap();
        let mean: f64 = p.data().iter().sum::<f64>() / p.data().len() as f64;
        assert!(mean > 0.05 && mean < 0.95);
        let distinct: std::collections::BTreeSet<u64> =
            p.data().iter().map(|v| (v * 1e6) as u64).collect();
        assert!(distinct.len() > 3);
    }

    #[test]
    fn phantom_is_deterministic() {
        assert_eq!(
            piecewise_phantom(16, 24).unwrap(),
            piecewise_phantom(16, 24).unwrap()
        );
    }
}
