use crate::error::{Error, Result};

/// Finite periodic index domain: a `d`-dimensional box with cyclic boundary.
///
/// All signals and filters in this crate live on such grids. Index arithmetic
/// is componentwise modulo the grid sizes, which makes the DFT diagonalize
/// every shift-invariant operator exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    sizes: Vec<usize>,
}

impl Grid {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidParameter("grid needs at least one axis".into()));
        }
        if sizes.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParameter("grid sizes must be positive".into()));
        }
        Ok(Self { sizes: sizes.to_vec() })
    }

    /// Number of axes `d`.
    pub fn dims(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Total number of sites `K` (product of the sizes).
    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false // sizes are validated positive
    }

    /// Row-major strides (last axis fastest).
    pub fn strides(&self) -> Vec<usize> {
        let d = self.dims();
        let mut strides = vec![1usize; d];
        for a in (0..d.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * self.sizes[a + 1];
        }
        strides
    }

    /// Linear (row-major) index of a possibly out-of-range multi-index,
    /// wrapped periodically.
    pub fn wrapped_index(&self, idx: &[i64]) -> usize {
        debug_assert_eq!(idx.len(), self.dims());
        let mut lin = 0usize;
        for (a, &i) in idx.iter().enumerate() {
            let n = self.sizes[a] as i64;
            let w = i.rem_euclid(n) as usize;
            lin = lin * self.sizes[a] + w;
        }
        lin
    }

    /// Multi-index of a linear site index (row-major).
    pub fn multi_index(&self, mut lin: usize) -> Vec<i64> {
        let mut idx = vec![0i64; self.dims()];
        for a in (0..self.dims()).rev() {
            idx[a] = (lin % self.sizes[a]) as i64;
            lin /= self.sizes[a];
        }
        idx
    }

    /// Checks that an offset vector has the right number of components.
    pub fn check_offset(&self, offset: &[i64]) -> Result<()> {
        if offset.len() != self.dims() {
            return Err(Error::DimensionMismatch(format!(
                "offset has {} components, grid has {} axes",
                offset.len(),
                self.dims()
            )));
        }
        Ok(())
    }

    /// Site-permutation table for a translation: entry `k` holds the linear
    /// index of `k - offset` (periodic). Shared by shifting and convolution.
    pub fn translation_table(&self, offset: &[i64]) -> Vec<usize> {
        let k = self.len();
        let d = self.dims();
        let mut table = vec![0usize; k];
        let mut idx = vec![0i64; d];
        for (lin, slot) in table.iter_mut().enumerate().take(k) {
            let mut rem = lin;
            for a in (0..d).rev() {
                idx[a] = (rem % self.sizes[a]) as i64 - offset[a];
                rem /= self.sizes[a];
            }
            *slot = self.wrapped_index(&idx);
        }
        table
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.sizes.iter().map(|n| n.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}
