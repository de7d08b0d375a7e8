//! Matrix-valued impulse responses and their convolution algebra.
//!
//! A [`MultiFilter`] is a finite list of taps `(offset, matrix)` describing a
//! multichannel convolution operator `x ↦ Σ_ℓ H[ℓ] x[· - ℓ]`. The filter is
//! grid-free: offsets wrap modulo the grid only when the filter is applied,
//! so one filter can act on any grid of matching dimensionality.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::dft::{forward_nd, inverse_nd};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::signal::MultiSignal;

/// One tap of a matrix-valued impulse response.
#[derive(Debug, Clone, PartialEq)]
pub struct Tap {
    pub offset: Vec<i64>,
    pub matrix: DMatrix<f64>,
}

/// Ordered list of tap offsets (the index patch `{k₁, …, k_M}` of the
/// builders). Duplicates are permitted; builders that need them merge the
/// corresponding taps at compile time.
#[derive(Debug, Clone, PartialEq)]
pub struct TapSet {
    offsets: Vec<Vec<i64>>,
}

impl TapSet {
    pub fn new(offsets: Vec<Vec<i64>>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidParameter("tap set must be nonempty".into()));
        }
        let d = offsets[0].len();
        if d == 0 || offsets.iter().any(|o| o.len() != d) {
            return Err(Error::DimensionMismatch(
                "tap offsets must share a positive dimensionality".into(),
            ));
        }
        Ok(Self { offsets })
    }

    /// Contiguous block of `count` offsets centered at the origin, filled
    /// row-major (e.g. `{-1, 0, 1}` for `count = 3`, `d = 1`).
    pub fn centered_block(count: usize, dims: usize) -> Result<Self> {
        if count == 0 || dims == 0 {
            return Err(Error::InvalidParameter(
                "centered block needs positive count and dimension".into(),
            ));
        }
        let side = (count as f64).powf(1.0 / dims as f64).ceil() as usize;
        let side = side.max(1);
        let half = (side as i64 - 1) / 2;
        let mut offsets = Vec::with_capacity(count);
        let mut idx = vec![0usize; dims];
        'outer: loop {
            offsets.push(idx.iter().map(|&i| i as i64 - half).collect());
            if offsets.len() == count {
                break;
            }
            for a in (0..dims).rev() {
                idx[a] += 1;
                if idx[a] < side {
                    continue 'outer;
                }
                idx[a] = 0;
            }
            // block exhausted before reaching `count`: widen the last axis
            return Self::centered_block_rect(count, dims, side);
        }
        Self::new(offsets)
    }

    fn centered_block_rect(count: usize, dims: usize, side: usize) -> Result<Self> {
        // fallback for counts that do not fit a d-cube: a 1-d run per row
        let mut offsets = Vec::with_capacity(count);
        let half = (side as i64 - 1) / 2;
        let mut i = 0usize;
        while offsets.len() < count {
            let mut o = vec![0i64; dims];
            let mut rem = i;
            for a in (0..dims).rev() {
                o[a] = (rem % side) as i64 - half;
                rem /= side;
            }
            if rem > 0 {
                o[0] += (rem as i64) * side as i64;
            }
            offsets.push(o);
            i += 1;
        }
        Self::new(offsets)
    }

    pub fn offsets(&self) -> &[Vec<i64>] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.offsets[0].len()
    }
}

/// How [`MultiFilter::apply_with`] picks its evaluation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ApplyMode {
    /// Direct summation when `tap_count * sites < threshold`, FFT otherwise.
    Auto { threshold: usize },
    Direct,
    Fft,
}

/// Default crossover for [`ApplyMode::Auto`]: below `tap_count * sites =
/// 65536` the direct path wins; above it the FFT path does.
pub const DEFAULT_APPLY_THRESHOLD: usize = 1 << 16;

impl Default for ApplyMode {
    fn default() -> Self {
        ApplyMode::Auto {
            threshold: DEFAULT_APPLY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiFilter {
    in_channels: usize,
    out_channels: usize,
    taps: Vec<Tap>,
    grid_hint: Option<Grid>,
}

impl MultiFilter {
    /// Builds a filter from raw taps. Shapes and finiteness are validated;
    /// duplicate offsets are allowed (they act additively) until
    /// [`canonicalize`](Self::canonicalize) merges them.
    pub fn new(in_channels: usize, out_channels: usize, taps: Vec<Tap>) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::InvalidParameter("channel counts must be positive".into()));
        }
        let dims = taps.first().map(|t| t.offset.len());
        for tap in &taps {
            if tap.matrix.nrows() != out_channels || tap.matrix.ncols() != in_channels {
                return Err(Error::DimensionMismatch(format!(
                    "tap matrix is {}x{}, filter is {}x{}",
                    tap.matrix.nrows(),
                    tap.matrix.ncols(),
                    out_channels,
                    in_channels
                )));
            }
            if Some(tap.offset.len()) != dims || tap.offset.is_empty() {
                return Err(Error::DimensionMismatch(
                    "tap offsets must share a positive dimensionality".into(),
                ));
            }
            if tap.matrix.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("filter tap"));
            }
        }
        Ok(Self {
            in_channels,
            out_channels,
            taps,
            grid_hint: None,
        })
    }

    /// Identity filter `I_N δ[·]` in `dims` dimensions.
    pub fn identity(channels: usize, dims: usize) -> Self {
        let tap = Tap {
            offset: vec![0; dims],
            matrix: DMatrix::identity(channels, channels),
        };
        Self::new(channels, channels, vec![tap]).expect("identity tap is valid")
    }

    /// Scalar filter `±δ[· - offset]` scaled by `value`.
    pub fn scalar_shift(dims_offset: &[i64], value: f64) -> Result<Self> {
        let tap = Tap {
            offset: dims_offset.to_vec(),
            matrix: DMatrix::from_element(1, 1, value),
        };
        Self::new(1, 1, vec![tap])
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn taps(&self) -> &[Tap] {
        &self.taps
    }

    pub fn dims(&self) -> Option<usize> {
        self.taps.first().map(|t| t.offset.len())
    }

    pub fn grid_hint(&self) -> Option<&Grid> {
        self.grid_hint.as_ref()
    }

    pub fn with_grid_hint(mut self, grid: Option<Grid>) -> Self {
        self.grid_hint = grid;
        self
    }

    /// Merges duplicate offsets by summation, drops all-zero matrices and
    /// sorts offsets lexicographically. Application results are unchanged.
    pub fn canonicalize(&self) -> Self {
        let mut order: Vec<usize> = (0..self.taps.len()).collect();
        // stable sort keeps the summation order deterministic
        order.sort_by(|&a, &b| self.taps[a].offset.cmp(&self.taps[b].offset));
        let mut merged: Vec<Tap> = Vec::with_capacity(self.taps.len());
        for idx in order {
            let tap = &self.taps[idx];
            match merged.last_mut() {
                Some(last) if last.offset == tap.offset => last.matrix += &tap.matrix,
                _ => merged.push(tap.clone()),
            }
        }
        merged.retain(|t| t.matrix.iter().any(|&v| v != 0.0));
        Self {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            taps: merged,
            grid_hint: self.grid_hint.clone(),
        }
    }

    fn check_input(&self, x: &MultiSignal) -> Result<()> {
        if x.channels() != self.in_channels {
            return Err(Error::ChannelMismatch {
                expected: self.in_channels,
                got: x.channels(),
            });
        }
        if let Some(d) = self.dims() {
            if d != x.grid().dims() {
                return Err(Error::DimensionMismatch(format!(
                    "filter offsets have {} components, grid {} has {} axes",
                    d,
                    x.grid(),
                    x.grid().dims()
                )));
            }
        }
        Ok(())
    }

    /// Applies the filter with the default auto path selection.
    pub fn apply(&self, x: &MultiSignal) -> Result<MultiSignal> {
        self.apply_with(x, ApplyMode::default())
    }

    pub fn apply_with(&self, x: &MultiSignal, mode: ApplyMode) -> Result<MultiSignal> {
        self.check_input(x)?;
        let use_fft = match mode {
            ApplyMode::Direct => false,
            ApplyMode::Fft => true,
            ApplyMode::Auto { threshold } => self.taps.len() * x.grid().len() >= threshold,
        };
        if use_fft {
            self.apply_fft(x)
        } else {
            self.apply_direct(x)
        }
    }

    fn apply_direct(&self, x: &MultiSignal) -> Result<MultiSignal> {
        let grid = x.grid().clone();
        let k = grid.len();
        let mut out = MultiSignal::zeros(grid.clone(), self.out_channels)?;
        for tap in &self.taps {
            let table = grid.translation_table(&tap.offset);
            for m in 0..self.out_channels {
                for n in 0..self.in_channels {
                    let c = tap.matrix[(m, n)];
                    if c == 0.0 {
                        continue;
                    }
                    let src = x.channel(n);
                    let dst = out.channel_mut(m);
                    for site in 0..k {
                        dst[site] += c * src[table[site]];
                    }
                }
            }
        }
        Ok(out)
    }

    fn apply_fft(&self, x: &MultiSignal) -> Result<MultiSignal> {
        let grid = x.grid().clone();
        let k = grid.len();
        // spectra of the input channels
        let input_hat: Vec<Vec<Complex64>> = (0..self.in_channels)
            .into_par_iter()
            .map(|n| {
                let mut buf: Vec<Complex64> = x
                    .channel(n)
                    .iter()
                    .map(|&v| Complex64::new(v, 0.0))
                    .collect();
                forward_nd(&mut buf, &grid);
                buf
            })
            .collect();

        // per-entry filter spectra, accumulated into the output channels
        let out_channels: Vec<Vec<f64>> = (0..self.out_channels)
            .into_par_iter()
            .map(|m| {
                let mut acc = vec![Complex64::new(0.0, 0.0); k];
                let mut entry = vec![Complex64::new(0.0, 0.0); k];
                for n in 0..self.in_channels {
                    for v in entry.iter_mut() {
                        *v = Complex64::new(0.0, 0.0);
                    }
                    let mut nonzero = false;
                    for tap in &self.taps {
                        let c = tap.matrix[(m, n)];
                        if c != 0.0 {
                            entry[grid.wrapped_index(&tap.offset)] += Complex64::new(c, 0.0);
                            nonzero = true;
                        }
                    }
                    if !nonzero {
                        continue;
                    }
                    forward_nd(&mut entry, &grid);
                    for (a, (e, xh)) in acc.iter_mut().zip(entry.iter().zip(&input_hat[n])) {
                        *a += e * xh;
                    }
                }
                inverse_nd(&mut acc, &grid);
                acc.iter().map(|v| v.re).collect()
            })
            .collect();

        let mut data = Vec::with_capacity(self.out_channels * k);
        for ch in out_channels {
            data.extend_from_slice(&ch);
        }
        MultiSignal::from_data(grid, self.out_channels, data)
    }

    /// Matrix-to-matrix convolution `(H₂ ∗ H₁)[k] = Σ_m H₂[m] H₁[k-m]`;
    /// `apply(compose(H₂, H₁), x) = apply(H₂, apply(H₁, x))`. Offsets are
    /// canonicalized. Noncommutative in general.
    pub fn compose(outer: &Self, inner: &Self) -> Result<Self> {
        if outer.in_channels != inner.out_channels {
            return Err(Error::ChannelMismatch {
                expected: outer.in_channels,
                got: inner.out_channels,
            });
        }
        match (outer.dims(), inner.dims()) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::DimensionMismatch(format!(
                    "composed filters have offsets of dimension {a} and {b}"
                )))
            }
            _ => {}
        }
        let mut taps = Vec::with_capacity(outer.taps.len() * inner.taps.len());
        for t2 in &outer.taps {
            for t1 in &inner.taps {
                let offset: Vec<i64> = t2
                    .offset
                    .iter()
                    .zip(&t1.offset)
                    .map(|(a, b)| a + b)
                    .collect();
                taps.push(Tap {
                    offset,
                    matrix: &t2.matrix * &t1.matrix,
                });
            }
        }
        Ok(Self::new(inner.in_channels, outer.out_channels, taps)?.canonicalize())
    }

    /// Flipped-and-transposed impulse response `H^{T∨}`: taps `(-k, Hᵀ[k])`.
    /// Satisfies `⟨Hx, y⟩ = ⟨x, adjoint(H) y⟩` and is an involution.
    pub fn adjoint(&self) -> Self {
        let taps = self
            .taps
            .iter()
            .map(|t| Tap {
                offset: t.offset.iter().map(|&o| -o).collect(),
                matrix: t.matrix.transpose(),
            })
            .collect();
        Self::new(self.out_channels, self.in_channels, taps)
            .expect("adjoint taps are valid")
            .canonicalize()
    }

    pub fn scale(&self, factor: f64) -> Self {
        let taps = self
            .taps
            .iter()
            .map(|t| Tap {
                offset: t.offset.clone(),
                matrix: &t.matrix * factor,
            })
            .collect();
        Self {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            taps,
            grid_hint: self.grid_hint.clone(),
        }
    }

    /// Largest absolute tap-entry difference against another filter, after
    /// canonicalizing both. Infinite if the tap supports differ.
    pub fn max_tap_difference(&self, other: &Self) -> f64 {
        let a = self.canonicalize();
        let b = other.canonicalize();
        if a.in_channels != b.in_channels || a.out_channels != b.out_channels {
            return f64::INFINITY;
        }
        let mut max = 0.0f64;
        let mut bi = 0usize;
        let mut ai = 0usize;
        while ai < a.taps.len() || bi < b.taps.len() {
            let (ta, tb) = (a.taps.get(ai), b.taps.get(bi));
            match (ta, tb) {
                (Some(ta), Some(tb)) if ta.offset == tb.offset => {
                    max = max.max((&ta.matrix - &tb.matrix).abs().max());
                    ai += 1;
                    bi += 1;
                }
                (Some(ta), Some(tb)) => {
                    if ta.offset < tb.offset {
                        max = max.max(ta.matrix.abs().max());
                        ai += 1;
                    } else {
                        max = max.max(tb.matrix.abs().max());
                        bi += 1;
                    }
                }
                (Some(ta), None) => {
                    max = max.max(ta.matrix.abs().max());
                    ai += 1;
                }
                (None, Some(tb)) => {
                    max = max.max(tb.matrix.abs().max());
                    bi += 1;
                }
                (None, None) => break,
            }
        }
        max
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::ShiftOffsets;

    /// Quadruple-loop convolution oracle, independent of the library path.
    fn direct_conv_oracle(h: &MultiFilter, x: &MultiSignal) -> MultiSignal {
        let grid = x.grid().clone();
        let k = grid.len();
        let mut out = MultiSignal::zeros(grid.clone(), h.out_channels()).unwrap();
        for site in 0..k {
            let idx = grid.multi_index(site);
            for tap in h.taps() {
                let src: Vec<i64> = idx.iter().zip(&tap.offset).map(|(i, o)| i - o).collect();
                let src_lin = grid.wrapped_index(&src);
                for m in 0..h.out_channels() {
                    for n in 0..h.in_channels() {
                        out.channel_mut(m)[site] +=
                            tap.matrix[(m, n)] * x.channel(n)[src_lin];
                    }
                }
            }
        }
        out
    }

    fn random_filter(in_ch: usize, out_ch: usize, taps: usize, dims: usize, seed: u64) -> MultiFilter {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let taps: Vec<Tap> = (0..taps)
            .map(|_| Tap {
                offset: (0..dims).map(|_| rng.gen_range(-3i64..4)).collect(),
                matrix: DMatrix::from_fn(out_ch, in_ch, |_, _| rng.gen_range(-1.0..1.0)),
            })
            .collect();
        MultiFilter::new(in_ch, out_ch, taps).unwrap()
    }

    #[test]
    fn identity_filter_is_identity() {
        let x = MultiSignal::random(Grid::new(&[5]).unwrap(), 3, 1).unwrap();
        let h = MultiFilter::identity(3, 1);
        let y = h.apply(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn scalar_shift_filter_shifts() {
        let x = MultiSignal::random(Grid::new(&[6]).unwrap(), 1, 2).unwrap();
        let h = MultiFilter::scalar_shift(&[2], -1.0).unwrap();
        let y = h.apply(&x).unwrap();
        let expected = x.shift(ShiftOffsets::Shared(&[2])).unwrap().scale(-1.0);
        assert_eq!(y, expected);
    }

    #[test]
    fn apply_matches_quadruple_loop_oracle() {
        let x = MultiSignal::random(Grid::new(&[5, 5]).unwrap(), 2, 3).unwrap();
        let h = random_filter(2, 3, 4, 2, 17);
        let got = h.apply_with(&x, ApplyMode::Direct).unwrap();
        let want = direct_conv_oracle(&h, &x);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn fft_path_agrees_with_direct_path() {
        for seed in 0..5 {
            let x = MultiSignal::random(Grid::new(&[6, 7]).unwrap(), 2, 100 + seed).unwrap();
            let h = random_filter(2, 3, 5, 2, 200 + seed);
            let direct = h.apply_with(&x, ApplyMode::Direct).unwrap();
            let fft = h.apply_with(&x, ApplyMode::Fft).unwrap();
            let scale = direct.norm().max(1.0);
            for (a, b) in fft.data().iter().zip(direct.data()) {
                assert!((a - b).abs() <= 1e-10 * scale);
            }
        }
    }

    #[test]
    fn apply_rejects_channel_mismatch() {
        let x = MultiSignal::zeros(Grid::new(&[4]).unwrap(), 2).unwrap();
        let h = MultiFilter::identity(3, 1);
        assert!(h.apply(&x).is_err());
    }

    #[test]
    fn compose_with_identity_is_neutral() {
        let h = random_filter(2, 4, 3, 1, 5);
        let id_in = MultiFilter::identity(2, 1);
        let id_out = MultiFilter::identity(4, 1);
        let right = MultiFilter::compose(&h, &id_in).unwrap();
        let left = MultiFilter::compose(&id_out, &h).unwrap();
        assert!(h.max_tap_difference(&right) < 1e-15);
        assert!(h.max_tap_difference(&left) < 1e-15);
    }

    #[test]
    fn compose_of_shifts_adds_offsets() {
        let s1 = MultiFilter::scalar_shift(&[2], 1.0).unwrap();
        let s2 = MultiFilter::scalar_shift(&[-5], 1.0).unwrap();
        let c = MultiFilter::compose(&s2, &s1).unwrap();
        assert_eq!(c.taps().len(), 1);
        assert_eq!(c.taps()[0].offset, vec![-3]);
        assert_eq!(c.taps()[0].matrix[(0, 0)], 1.0);
    }

    #[test]
    fn compose_matches_sequential_apply() {
        let x = MultiSignal::random(Grid::new(&[4, 6]).unwrap(), 2, 8).unwrap();
        let h1 = random_filter(2, 3, 3, 2, 21);
        let h2 = random_filter(3, 2, 4, 2, 22);
        let sequential = h2.apply(&h1.apply(&x).unwrap()).unwrap();
        let composed = MultiFilter::compose(&h2, &h1).unwrap().apply(&x).unwrap();
        let scale = sequential.norm().max(1.0);
        for (a, b) in composed.data().iter().zip(sequential.data()) {
            assert!((a - b).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn compose_is_associative_via_apply() {
        let x = MultiSignal::random(Grid::new(&[5]).unwrap(), 2, 30).unwrap();
        let h1 = random_filter(2, 3, 2, 1, 31);
        let h2 = random_filter(3, 3, 3, 1, 32);
        let h3 = random_filter(3, 1, 2, 1, 33);
        let left = MultiFilter::compose(&MultiFilter::compose(&h3, &h2).unwrap(), &h1).unwrap();
        let right = MultiFilter::compose(&h3, &MultiFilter::compose(&h2, &h1).unwrap()).unwrap();
        let ya = left.apply(&x).unwrap();
        let yb = right.apply(&x).unwrap();
        let scale = ya.norm().max(1.0);
        for (a, b) in ya.data().iter().zip(yb.data()) {
            assert!((a - b).abs() <= 1e-11 * scale);
        }
    }

    #[test]
    fn compose_rejects_inner_mismatch() {
        let h1 = random_filter(2, 3, 2, 1, 40);
        let h2 = random_filter(4, 2, 2, 1, 41);
        assert!(MultiFilter::compose(&h2, &h1).is_err());
    }

    #[test]
    fn adjoint_of_identity_is_identity() {
        let h = MultiFilter::identity(3, 2);
        assert!(h.adjoint().max_tap_difference(&h) < 1e-15);
    }

    #[test]
    fn adjoint_of_shift_is_reverse_shift() {
        let h = MultiFilter::scalar_shift(&[3, -1], 1.0).unwrap();
        let adj = h.adjoint();
        assert_eq!(adj.taps()[0].offset, vec![-3, 1]);
    }

    #[test]
    fn adjoint_satisfies_inner_product_identity() {
        let h = random_filter(2, 4, 3, 1, 50);
        let adj = h.adjoint();
        for seed in 0..100 {
            let x = MultiSignal::random(Grid::new(&[9]).unwrap(), 2, 1000 + seed).unwrap();
            let y = MultiSignal::random(Grid::new(&[9]).unwrap(), 4, 2000 + seed).unwrap();
            let lhs = h.apply(&x).unwrap().inner_product(&y).unwrap();
            let rhs = x.inner_product(&adj.apply(&y).unwrap()).unwrap();
            let scale = x.norm() * y.norm();
            assert!((lhs - rhs).abs() <= 1e-11 * scale.max(1.0));
        }
    }

    #[test]
    fn adjoint_is_involutive() {
        let h = random_filter(3, 2, 4, 2, 60).canonicalize();
        assert!(h.adjoint().adjoint().max_tap_difference(&h) < 1e-15);
    }

    #[test]
    fn adjoint_reverses_composition() {
        let h1 = random_filter(2, 3, 2, 1, 70);
        let h2 = random_filter(3, 4, 3, 1, 71);
        let a = MultiFilter::compose(&h2, &h1).unwrap().adjoint();
        let b = MultiFilter::compose(&h1.adjoint(), &h2.adjoint()).unwrap();
        assert!(a.max_tap_difference(&b) < 1e-12);
    }

    #[test]
    fn canonicalize_cancels_opposite_taps() {
        let m = DMatrix::from_row_slice(1, 1, &[2.5]);
        let taps = vec![
            Tap { offset: vec![1], matrix: m.clone() },
            Tap { offset: vec![1], matrix: -m },
        ];
        let h = MultiFilter::new(1, 1, taps).unwrap().canonicalize();
        assert!(h.taps().is_empty());
    }

    #[test]
    fn canonicalize_sorts_and_preserves_apply() {
        let x = MultiSignal::random(Grid::new(&[7]).unwrap(), 1, 80).unwrap();
        let taps = vec![
            Tap { offset: vec![2], matrix: DMatrix::from_row_slice(1, 1, &[0.5]) },
            Tap { offset: vec![-1], matrix: DMatrix::from_row_slice(1, 1, &[1.5]) },
            Tap { offset: vec![2], matrix: DMatrix::from_row_slice(1, 1, &[0.25]) },
        ];
        let h = MultiFilter::new(1, 1, taps).unwrap();
        let c = h.canonicalize();
        assert_eq!(c.taps().len(), 2);
        assert!(c.taps()[0].offset < c.taps()[1].offset);
        let ya = h.apply(&x).unwrap();
        let yb = c.apply(&x).unwrap();
        for (a, b) in ya.data().iter().zip(yb.data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let h = random_filter(2, 2, 5, 1, 90).canonicalize();
        assert_eq!(h.canonicalize(), h);
    }

    #[test]
    fn apply_is_linear() {
        let g = Grid::new(&[6, 3]).unwrap();
        let x = MultiSignal::random(g.clone(), 2, 91).unwrap();
        let y = MultiSignal::random(g, 2, 92).unwrap();
        let h = random_filter(2, 3, 4, 2, 93);
        let combo = x.linear_combination(0.7, &y, -1.3).unwrap();
        let lhs = h.apply(&combo).unwrap();
        let rhs = h
            .apply(&x)
            .unwrap()
            .linear_combination(0.7, &h.apply(&y).unwrap(), -1.3)
            .unwrap();
        let scale = rhs.norm().max(1.0);
        for (a, b) in lhs.data().iter().zip(rhs.data()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn apply_commutes_with_shifts() {
        let g = Grid::new(&[8]).unwrap();
        let x = MultiSignal::random(g, 2, 94).unwrap();
        let h = random_filter(2, 2, 3, 1, 95);
        for offset in [-5i64, 2, 11] {
            let lhs = h.apply(&x.shift(ShiftOffsets::Shared(&[offset])).unwrap()).unwrap();
            let rhs = h.apply(&x).unwrap().shift(ShiftOffsets::Shared(&[offset])).unwrap();
            assert_eq!(lhs, rhs);
        }
    }
}
