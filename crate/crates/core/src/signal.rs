//! Finite periodic multichannel signals and their elementary operations.
//!
//! A [`MultiSignal`] holds `N` real channels on a shared [`Grid`], stored
//! channel-major with row-major site order. All operations are pure; values
//! can be shared freely between threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::util::pairwise_sum_by;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiSignal {
    grid: Grid,
    channels: usize,
    data: Vec<f64>,
}

/// Per-channel or shared shift offsets for [`MultiSignal::shift`].
#[derive(Debug, Clone)]
pub enum ShiftOffsets<'a> {
    /// One offset applied to every channel.
    Shared(&'a [i64]),
    /// One offset per channel (the generalized shift of the builders).
    PerChannel(&'a [Vec<i64>]),
}

impl MultiSignal {
    pub fn zeros(grid: Grid, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParameter("channel count must be positive".into()));
        }
        let len = channels * grid.len();
        Ok(Self {
            grid,
            channels,
            data: vec![0.0; len],
        })
    }

    pub fn from_data(grid: Grid, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParameter("channel count must be positive".into()));
        }
        if data.len() != channels * grid.len() {
            return Err(Error::DimensionMismatch(format!(
                "signal data has {} entries, expected {} ({} channels on {})",
                data.len(),
                channels * grid.len(),
                channels,
                grid
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("signal data"));
        }
        Ok(Self { grid, channels, data })
    }

    /// Unit impulse `e_channel δ[· - site]`.
    pub fn impulse(grid: Grid, channels: usize, channel: usize, site: &[i64]) -> Result<Self> {
        let mut s = Self::zeros(grid, channels)?;
        if channel >= channels {
            return Err(Error::InvalidParameter(format!(
                "impulse channel {channel} out of range"
            )));
        }
        s.grid.check_offset(site)?;
        let idx = s.grid.wrapped_index(site);
        let k = s.grid.len();
        s.data[channel * k + idx] = 1.0;
        Ok(s)
    }

    /// Seeded standard-Gaussian signal; deterministic for a fixed seed.
    pub fn random(grid: Grid, channels: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = channels * grid.len();
        let data: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self::from_data(grid, channels, data)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn channel(&self, n: usize) -> &[f64] {
        let k = self.grid.len();
        &self.data[n * k..(n + 1) * k]
    }

    pub fn channel_mut(&mut self, n: usize) -> &mut [f64] {
        let k = self.grid.len();
        &mut self.data[n * k..(n + 1) * k]
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::DimensionMismatch(format!(
                "grids differ: {} vs {}",
                self.grid, other.grid
            )));
        }
        if self.channels != other.channels {
            return Err(Error::ChannelMismatch {
                expected: self.channels,
                got: other.channels,
            });
        }
        Ok(())
    }

    /// Euclidean (ℓ₂) norm over all channels and sites.
    pub fn norm(&self) -> f64 {
        pairwise_sum_by(self.data.len(), &|i| self.data[i] * self.data[i]).sqrt()
    }

    /// Inner product `Σ_n Σ_k x_n[k] y_n[k]`.
    pub fn inner_product(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(pairwise_sum_by(self.data.len(), &|i| {
            self.data[i] * other.data[i]
        }))
    }

    /// Index reversal `x[n][k] -> x[n][-k]` (periodic); an involution.
    pub fn flip(&self) -> Self {
        let k = self.grid.len();
        let mut out = self.clone();
        for lin in 0..k {
            let idx = self.grid.multi_index(lin);
            let neg: Vec<i64> = idx.iter().map(|&i| -i).collect();
            let src = self.grid.wrapped_index(&neg);
            for n in 0..self.channels {
                out.data[n * k + lin] = self.data[n * k + src];
            }
        }
        out
    }

    /// Periodic translation; preserves the norm exactly.
    pub fn shift(&self, offsets: ShiftOffsets<'_>) -> Result<Self> {
        let d = self.grid.dims();
        let k = self.grid.len();
        let mut out = self.clone();
        match offsets {
            ShiftOffsets::Shared(offset) => {
                self.grid.check_offset(offset)?;
                let table = self.grid.translation_table(offset);
                for n in 0..self.channels {
                    for lin in 0..k {
                        out.data[n * k + lin] = self.data[n * k + table[lin]];
                    }
                }
            }
            ShiftOffsets::PerChannel(offsets) => {
                if offsets.len() != self.channels {
                    return Err(Error::DimensionMismatch(format!(
                        "{} per-channel offsets for {} channels",
                        offsets.len(),
                        self.channels
                    )));
                }
                for offset in offsets {
                    if offset.len() != d {
                        return Err(Error::DimensionMismatch(format!(
                            "offset has {} components, grid has {} axes",
                            offset.len(),
                            d
                        )));
                    }
                }
                for (n, offset) in offsets.iter().enumerate() {
                    let table = self.grid.translation_table(offset);
                    for lin in 0..k {
                        out.data[n * k + lin] = self.data[n * k + table[lin]];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Componentwise `αx + βy`.
    pub fn linear_combination(&self, alpha: f64, other: &Self, beta: f64) -> Result<Self> {
        self.check_compatible(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| alpha * x + beta * y)
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            channels: self.channels,
            data,
        })
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            channels: self.channels,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid1(n: usize) -> Grid {
        Grid::new(&[n]).unwrap()
    }

    #[test]
    fn norm_zero_signal_is_zero() {
        let s = MultiSignal::zeros(Grid::new(&[3, 7]).unwrap(), 2).unwrap();
        assert_eq!(s.norm(), 0.0);
    }

    #[test]
    fn norm_single_entry() {
        let s = MultiSignal::from_data(grid1(4), 1, vec![3.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.norm(), 3.0);
    }

    #[test]
    fn norm_matches_bruteforce_loop() {
        let s = MultiSignal::random(grid1(3), 2, 11).unwrap();
        // independent elementwise oracle
        let mut acc = 0.0;
        for n in 0..2 {
            for k in 0..3 {
                let v = s.channel(n)[k];
                acc += v * v;
            }
        }
        assert!((s.norm() - acc.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn inner_product_disjoint_impulses_is_zero() {
        let g = grid1(5);
        let x = MultiSignal::impulse(g.clone(), 1, 0, &[1]).unwrap();
        let y = MultiSignal::impulse(g, 1, 0, &[3]).unwrap();
        assert_eq!(x.inner_product(&y).unwrap(), 0.0);
    }

    #[test]
    fn inner_product_unit_impulse_with_itself() {
        let x = MultiSignal::impulse(grid1(4), 2, 1, &[2]).unwrap();
        assert_eq!(x.inner_product(&x).unwrap(), 1.0);
    }

    #[test]
    fn inner_product_matches_direct_summation() {
        let x = MultiSignal::random(Grid::new(&[4, 3]).unwrap(), 3, 5).unwrap();
        let y = MultiSignal::random(Grid::new(&[4, 3]).unwrap(), 3, 6).unwrap();
        let mut acc = 0.0;
        for i in 0..x.data().len() {
            acc += x.data()[i] * y.data()[i];
        }
        assert!((x.inner_product(&y).unwrap() - acc).abs() < 1e-12);
    }

    #[test]
    fn inner_product_rejects_shape_mismatch() {
        let x = MultiSignal::zeros(grid1(4), 1).unwrap();
        let y = MultiSignal::zeros(grid1(4), 2).unwrap();
        assert!(x.inner_product(&y).is_err());
        let z = MultiSignal::zeros(grid1(5), 1).unwrap();
        assert!(x.inner_product(&z).is_err());
    }

    #[test]
    fn inner_product_is_symmetric() {
        let x = MultiSignal::random(grid1(9), 2, 1).unwrap();
        let y = MultiSignal::random(grid1(9), 2, 2).unwrap();
        assert_eq!(
            x.inner_product(&y).unwrap(),
            y.inner_product(&x).unwrap()
        );
    }

    #[test]
    fn norm_squared_equals_self_inner_product() {
        let x = MultiSignal::random(Grid::new(&[6, 5]).unwrap(), 4, 3).unwrap();
        let n2 = x.norm() * x.norm();
        let ip = x.inner_product(&x).unwrap();
        assert!((n2 - ip).abs() <= 1e-12 * ip.max(1.0));
    }

    #[test]
    fn flip_fixes_impulse_at_origin() {
        let x = MultiSignal::impulse(grid1(6), 1, 0, &[0]).unwrap();
        assert_eq!(x.flip(), x);
    }

    #[test]
    fn flip_reverses_mod_4() {
        let x = MultiSignal::from_data(grid1(4), 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let flipped = x.flip();
        assert_eq!(flipped.data(), &[1.0, 4.0, 3.0, 2.0]);
    }

    #[test]
    fn shift_zero_offsets_is_identity() {
        let x = MultiSignal::random(Grid::new(&[3, 3]).unwrap(), 2, 9).unwrap();
        let shifted = x.shift(ShiftOffsets::Shared(&[0, 0])).unwrap();
        assert_eq!(shifted, x);
    }

    #[test]
    fn shift_cyclic_by_one() {
        let x = MultiSignal::from_data(grid1(4), 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let shifted = x.shift(ShiftOffsets::Shared(&[1])).unwrap();
        assert_eq!(shifted.data(), &[4.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn shift_semigroup_inverse() {
        let x = MultiSignal::random(grid1(7), 2, 13).unwrap();
        let offsets = [vec![3], vec![-2]];
        let there = x.shift(ShiftOffsets::PerChannel(&offsets)).unwrap();
        let back_offsets = [vec![-3], vec![2]];
        let back = there.shift(ShiftOffsets::PerChannel(&back_offsets)).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn shift_rejects_wrong_arity() {
        let x = MultiSignal::zeros(Grid::new(&[4, 4]).unwrap(), 2).unwrap();
        assert!(x.shift(ShiftOffsets::Shared(&[1])).is_err());
        let offsets = [vec![1, 0]];
        assert!(x.shift(ShiftOffsets::PerChannel(&offsets)).is_err());
    }

    #[test]
    fn constructors_reject_non_finite() {
        let r = MultiSignal::from_data(grid1(2), 1, vec![1.0, f64::NAN]);
        assert!(r.is_err());
    }

    proptest! {
        #[test]
        fn flip_is_involutive(n in 1usize..12, seed in 0u64..500) {
            let x = MultiSignal::random(grid1(n), 2, seed).unwrap();
            prop_assert_eq!(x.flip().flip(), x);
        }

        #[test]
        fn flip_and_shift_preserve_norm(n in 1usize..12, m in 1usize..6,
                                        off0 in -20i64..20, off1 in -20i64..20,
                                        seed in 0u64..500) {
            let g = Grid::new(&[n, m]).unwrap();
            let x = MultiSignal::random(g, 1, seed).unwrap();
            let norm = x.norm();
            prop_assert!((x.flip().norm() - norm).abs() <= 1e-12 * norm.max(1.0));
            let shifted = x.shift(ShiftOffsets::Shared(&[off0, off1])).unwrap();
            prop_assert!((shifted.norm() - norm).abs() <= 1e-12 * norm.max(1.0));
        }
    }
}
