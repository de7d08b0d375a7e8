//! Constructive parametric Parseval modules and their chaining.
//!
//! Each builder emits a [`MultiFilter`] that is energy-preserving by
//! construction: normalized patch extraction, orthogonal pointwise
//! multiplication, generalized shifts, tight-frame/shift compositions,
//! `U S^K Vᴴ` elements, and rank-`k` projection units. Since composition
//! preserves the Parseval property, chains of modules compile to Parseval
//! filterbanks of arbitrary depth.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::filter::{MultiFilter, Tap, TapSet};

/// Tolerance for accepting a matrix as orthogonal / 1-tight.
pub const ORTHOGONALITY_TOL: f64 = 1e-9;

/// A real matrix with orthonormal columns; square matrices are orthogonal,
/// tall `M×N` matrices are 1-tight frames (`AᵀA = I_N`).
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoMatrix {
    mat: DMatrix<f64>,
}

impl OrthoMatrix {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() < mat.ncols() || mat.ncols() == 0 {
            return Err(Error::InvalidParameter(format!(
                "{}x{} matrix cannot have orthonormal columns",
                mat.nrows(),
                mat.ncols()
            )));
        }
        if mat.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        let gram = mat.transpose() * &mat;
        let defect = (&gram - DMatrix::identity(mat.ncols(), mat.ncols())).norm();
        if defect > ORTHOGONALITY_TOL {
            return Err(Error::NotOrthogonal {
                defect,
                tol: ORTHOGONALITY_TOL,
            });
        }
        Ok(Self { mat })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            mat: DMatrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn nrows(&self) -> usize {
        self.mat.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.mat.nrows() == self.mat.ncols()
    }

    /// Keeps the first `cols` columns (still a 1-tight frame).
    pub fn truncate(&self, cols: usize) -> Result<Self> {
        if cols == 0 || cols > self.ncols() {
            return Err(Error::InvalidParameter(format!(
                "cannot keep {cols} of {} columns",
                self.ncols()
            )));
        }
        Ok(Self {
            mat: self.mat.columns(0, cols).into_owned(),
        })
    }

    pub fn transpose(&self) -> Result<Self> {
        Self::new(self.mat.transpose())
    }

    /// Frobenius defect `‖AᵀA - I‖`.
    pub fn defect(&self) -> f64 {
        let gram = self.mat.transpose() * &self.mat;
        (&gram - DMatrix::identity(self.ncols(), self.ncols())).norm()
    }
}

/// Deterministic random orthogonal matrix: QR of a seeded Gaussian matrix
/// with the R diagonal forced positive, which makes the factor unique.
pub fn random_orthogonal(n: usize, seed: u64) -> Result<OrthoMatrix> {
    if n == 0 {
        return Err(Error::InvalidParameter("matrix size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for i in 0..n {
        if r[(i, i)] < 0.0 {
            for row in 0..n {
                q[(row, i)] = -q[(row, i)];
            }
        }
    }
    OrthoMatrix::new(q)
}

/// Deterministic random 1-tight frame (`rows ≥ cols`): truncated random
/// orthogonal matrix.
pub fn random_tight_frame(rows: usize, cols: usize, seed: u64) -> Result<OrthoMatrix> {
    if cols > rows {
        return Err(Error::InvalidParameter(format!(
            "tight frame needs rows ≥ cols, got {rows}x{cols}"
        )));
    }
    random_orthogonal(rows, seed)?.truncate(cols)
}

/// Canonical unit offset cycling through the axes (index 0 → e₁, 1 → e₂, …),
/// the default shift pattern for chained projection units in d ≥ 2.
pub fn alternating_unit_shift(index: usize, dims: usize) -> Vec<i64> {
    let mut shift = vec![0i64; dims];
    shift[index % dims] = 1;
    shift
}

/// A tagged parametric Parseval element, compilable to a [`MultiFilter`].
#[derive(Debug, Clone)]
pub enum ParsevalModule {
    /// Normalized patch operator: `N → M·N` channels for a patch of size M.
    Patch { offsets: TapSet, channels: usize },
    /// Pointwise multiplication by an orthogonal / 1-tight matrix; `dims`
    /// fixes the offset dimensionality of the single origin tap.
    Mult { matrix: OrthoMatrix, dims: usize },
    /// 1-to-N filtering `Mult_U ∘ Patch`: `U` is `N×N₀`, patch size `N₀`.
    OneToN { matrix: OrthoMatrix, offsets: TapSet },
    /// N-to-pN module from a `pN×pN` orthogonal matrix and a size-p patch.
    NToPN {
        matrix: OrthoMatrix,
        offsets: TapSet,
        channels: usize,
    },
    /// Generalized (per-channel) shift.
    GenShift { shifts: Vec<Vec<i64>> },
    /// Tight frame composed with a generalized shift: `Mult_A ∘ S^K`.
    FrameShift {
        frame: OrthoMatrix,
        shifts: Vec<Vec<i64>>,
    },
    /// `U S^K Vᴴ` element: sums of shifted rank-1 matrices `u_n v_nᵀ`.
    Usvh {
        u: OrthoMatrix,
        shifts: Vec<Vec<i64>>,
        v: OrthoMatrix,
    },
    /// Rank-k projection unit `(I - P) δ + P δ[· - k₁]` from an orthonormal
    /// basis of the projector range.
    Projection {
        basis: Vec<DVector<f64>>,
        channels: usize,
        shift: Vec<i64>,
    },
    /// Rank-1 projection unit parameterized by a single unit vector.
    Householder { unit: DVector<f64>, shift: Vec<i64> },
}

impl ParsevalModule {
    pub fn in_channels(&self) -> usize {
        match self {
            ParsevalModule::Patch { channels, .. } => *channels,
            ParsevalModule::Mult { matrix, .. } => matrix.ncols(),
            ParsevalModule::OneToN { .. } => 1,
            ParsevalModule::NToPN { channels, .. } => *channels,
            ParsevalModule::GenShift { shifts } => shifts.len(),
            ParsevalModule::FrameShift { frame, .. } => frame.ncols(),
            ParsevalModule::Usvh { u, .. } => u.ncols(),
            ParsevalModule::Projection { channels, .. } => *channels,
            ParsevalModule::Householder { unit, .. } => unit.len(),
        }
    }

    pub fn out_channels(&self) -> usize {
        match self {
            ParsevalModule::Patch { offsets, channels } => offsets.len() * channels,
            ParsevalModule::Mult { matrix, .. } => matrix.nrows(),
            ParsevalModule::OneToN { matrix, .. } => matrix.nrows(),
            ParsevalModule::NToPN { matrix, .. } => matrix.nrows(),
            ParsevalModule::GenShift { shifts } => shifts.len(),
            ParsevalModule::FrameShift { frame, .. } => frame.nrows(),
            ParsevalModule::Usvh { u, .. } => u.nrows(),
            ParsevalModule::Projection { channels, .. } => *channels,
            ParsevalModule::Householder { unit, .. } => unit.len(),
        }
    }

    pub fn compile(&self) -> Result<MultiFilter> {
        match self {
            ParsevalModule::Patch { offsets, channels } => build_patch(offsets, *channels),
            ParsevalModule::Mult { matrix, dims } => build_mult(matrix, *dims),
            ParsevalModule::OneToN { matrix, offsets } => build_one_to_n(matrix, offsets),
            ParsevalModule::NToPN {
                matrix,
                offsets,
                channels,
            } => build_n_to_pn(matrix, offsets, *channels),
            ParsevalModule::GenShift { shifts } => build_gen_shift(shifts),
            ParsevalModule::FrameShift { frame, shifts } => build_frame_shift(frame, shifts),
            ParsevalModule::Usvh { u, shifts, v } => build_usv(u, shifts, v),
            ParsevalModule::Projection {
                basis,
                channels,
                shift,
            } => build_projection(basis, *channels, shift),
            ParsevalModule::Householder { unit, shift } => build_householder(unit, shift),
        }
    }
}

/// An ordered list of modules with matching, nondecreasing channel counts.
#[derive(Debug, Clone)]
pub struct ModuleChain {
    modules: Vec<ParsevalModule>,
}

impl ModuleChain {
    pub fn new(modules: Vec<ParsevalModule>) -> Result<Self> {
        if modules.is_empty() {
            return Err(Error::InvalidParameter("chain must contain at least one module".into()));
        }
        for pair in modules.windows(2) {
            let out = pair[0].out_channels();
            let inp = pair[1].in_channels();
            if out != inp {
                return Err(Error::ChannelMismatch { expected: out, got: inp });
            }
            if inp < pair[0].in_channels() && false {
                // channel counts are nondecreasing by construction of the
                // individual modules; kept for clarity
            }
        }
        Ok(Self { modules })
    }

    pub fn modules(&self) -> &[ParsevalModule] {
        &self.modules
    }

    pub fn in_channels(&self) -> usize {
        self.modules[0].in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.modules.last().unwrap().out_channels()
    }
}

/// Normalized patch operator: stacks `I_N δ[· - k_m] / √M` over the patch.
/// Parseval for any choice of offsets.
pub fn build_patch(offsets: &TapSet, channels: usize) -> Result<MultiFilter> {
    if channels == 0 {
        return Err(Error::InvalidParameter("channel count must be positive".into()));
    }
    let m = offsets.len();
    let scale = 1.0 / (m as f64).sqrt();
    let out_channels = m * channels;
    let taps: Vec<Tap> = offsets
        .offsets()
        .iter()
        .enumerate()
        .map(|(block, offset)| {
            let mut mat = DMatrix::<f64>::zeros(out_channels, channels);
            for c in 0..channels {
                mat[(block * channels + c, c)] = scale;
            }
            Tap {
                offset: offset.clone(),
                matrix: mat,
            }
        })
        .collect();
    Ok(MultiFilter::new(channels, out_channels, taps)?.canonicalize())
}

/// Single-tap pointwise multiplication `U δ[·]`; `U` orthogonal or 1-tight.
/// `dims` is the lattice dimensionality the origin tap lives on.
pub fn build_mult(matrix: &OrthoMatrix, dims: usize) -> Result<MultiFilter> {
    if dims == 0 {
        return Err(Error::InvalidParameter("offset dimensionality must be positive".into()));
    }
    let tap = Tap {
        offset: vec![0; dims],
        matrix: matrix.matrix().clone(),
    };
    Ok(MultiFilter::new(matrix.ncols(), matrix.nrows(), vec![tap])?.canonicalize())
}

/// 1-to-N module `h[·] = (1/√N₀) Σ u_n δ[· - k_n]` with power-complementary
/// component filters.
pub fn build_one_to_n(matrix: &OrthoMatrix, offsets: &TapSet) -> Result<MultiFilter> {
    if offsets.len() != matrix.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} offsets for a matrix with {} columns",
            offsets.len(),
            matrix.ncols()
        )));
    }
    let n = matrix.nrows();
    let scale = 1.0 / (matrix.ncols() as f64).sqrt();
    let taps: Vec<Tap> = offsets
        .offsets()
        .iter()
        .enumerate()
        .map(|(col, offset)| {
            let mut mat = DMatrix::<f64>::zeros(n, 1);
            for row in 0..n {
                mat[(row, 0)] = scale * matrix.matrix()[(row, col)];
            }
            Tap {
                offset: offset.clone(),
                matrix: mat,
            }
        })
        .collect();
    Ok(MultiFilter::new(1, n, taps)?.canonicalize())
}

/// N-to-pN module: partitions a `pN×pN` orthogonal matrix into p column
/// blocks, one per patch offset: `H[·] = (1/√p) Σ U_i δ[· - k_i]`.
pub fn build_n_to_pn(matrix: &OrthoMatrix, offsets: &TapSet, channels: usize) -> Result<MultiFilter> {
    let p = offsets.len();
    if channels == 0 {
        return Err(Error::InvalidParameter("channel count must be positive".into()));
    }
    if !matrix.is_square() || matrix.nrows() != p * channels {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{}, expected square of size p*N = {}",
            matrix.nrows(),
            matrix.ncols(),
            p * channels
        )));
    }
    let rows = p * channels;
    let scale = 1.0 / (p as f64).sqrt();
    let taps: Vec<Tap> = offsets
        .offsets()
        .iter()
        .enumerate()
        .map(|(i, offset)| {
            let block = matrix.matrix().columns(i * channels, channels);
            Tap {
                offset: offset.clone(),
                matrix: block.into_owned() * scale,
            }
        })
        .collect();
    Ok(MultiFilter::new(channels, rows, taps)?.canonicalize())
}

/// Generalized per-channel shift `diag(δ[· - k₁], …, δ[· - k_N])`.
pub fn build_gen_shift(shifts: &[Vec<i64>]) -> Result<MultiFilter> {
    let n = shifts.len();
    if n == 0 {
        return Err(Error::InvalidParameter("shift list must be nonempty".into()));
    }
    let d = shifts[0].len();
    if d == 0 || shifts.iter().any(|s| s.len() != d) {
        return Err(Error::DimensionMismatch(
            "shift offsets must share a positive dimensionality".into(),
        ));
    }
    let taps: Vec<Tap> = shifts
        .iter()
        .enumerate()
        .map(|(c, offset)| {
            let mut mat = DMatrix::<f64>::zeros(n, n);
            mat[(c, c)] = 1.0;
            Tap {
                offset: offset.clone(),
                matrix: mat,
            }
        })
        .collect();
    Ok(MultiFilter::new(n, n, taps)?.canonicalize())
}

/// Tight frame applied after a generalized shift: `Mult_A ∘ S^K`; paraunitary
/// irrespective of the shifts.
pub fn build_frame_shift(frame: &OrthoMatrix, shifts: &[Vec<i64>]) -> Result<MultiFilter> {
    if shifts.len() != frame.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} shifts for a frame with {} columns",
            shifts.len(),
            frame.ncols()
        )));
    }
    let shift_filter = build_gen_shift(shifts)?;
    let mult = build_mult(frame, shifts[0].len())?;
    MultiFilter::compose(&mult, &shift_filter)
}

/// `U S^K Vᴴ` element: `H[·] = Σ u_n v_nᵀ δ[· - k_n]`. Offsets need not be
/// distinct; coincident taps merge at canonicalization.
pub fn build_usv(u: &OrthoMatrix, shifts: &[Vec<i64>], v: &OrthoMatrix) -> Result<MultiFilter> {
    if !u.is_square() || !v.is_square() || u.nrows() != v.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "U and V must be square of equal size, got {}x{} and {}x{}",
            u.nrows(),
            u.ncols(),
            v.nrows(),
            v.ncols()
        )));
    }
    let n = u.nrows();
    if shifts.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} shifts for {}-channel element",
            shifts.len(),
            n
        )));
    }
    let taps: Vec<Tap> = shifts
        .iter()
        .enumerate()
        .map(|(k, offset)| {
            let uk = u.matrix().column(k);
            let vk = v.matrix().column(k);
            Tap {
                offset: offset.clone(),
                matrix: uk * vk.transpose(),
            }
        })
        .collect();
    Ok(MultiFilter::new(n, n, taps)?.canonicalize())
}

fn check_unit_shift(shift: &[i64]) -> Result<()> {
    if shift.is_empty() {
        return Err(Error::InvalidParameter("shift must have at least one component".into()));
    }
    if shift.iter().any(|&c| c.abs() > 1) {
        return Err(Error::InvalidParameter(format!(
            "projection shift components must lie in [-1, 1], got {shift:?}"
        )));
    }
    if shift.iter().all(|&c| c == 0) {
        return Err(Error::InvalidParameter(
            "projection shift must be a nonzero elementary offset".into(),
        ));
    }
    Ok(())
}

/// Rank-k projection unit `(I_N - P) δ[·] + P δ[· - k₁]` with
/// `P = Σ u_i u_iᵀ` built from an orthonormal range basis. Support is two
/// taps (one for rank 0 or rank N).
pub fn build_projection(
    basis: &[DVector<f64>],
    channels: usize,
    shift: &[i64],
) -> Result<MultiFilter> {
    check_unit_shift(shift)?;
    if channels == 0 {
        return Err(Error::InvalidParameter("channel count must be positive".into()));
    }
    if basis.len() > channels {
        return Err(Error::InvalidParameter(format!(
            "basis of {} vectors exceeds {} channels",
            basis.len(),
            channels
        )));
    }
    for (i, u) in basis.iter().enumerate() {
        if u.len() != channels {
            return Err(Error::DimensionMismatch(format!(
                "basis vector {i} has length {}, expected {channels}",
                u.len()
            )));
        }
        for (j, w) in basis.iter().enumerate() {
            let want = if i == j { 1.0 } else { 0.0 };
            if (u.dot(w) - want).abs() > 1e-12 {
                return Err(Error::NotOrthogonal {
                    defect: (u.dot(w) - want).abs(),
                    tol: 1e-12,
                });
            }
        }
    }
    let projector = if basis.len() == channels {
        // complete orthonormal basis: the projector is the identity exactly
        DMatrix::identity(channels, channels)
    } else {
        let mut p = DMatrix::<f64>::zeros(channels, channels);
        for u in basis {
            p += u * u.transpose();
        }
        p
    };
    let complement = DMatrix::identity(channels, channels) - &projector;
    let taps = vec![
        Tap {
            offset: vec![0; shift.len()],
            matrix: complement,
        },
        Tap {
            offset: shift.to_vec(),
            matrix: projector,
        },
    ];
    Ok(MultiFilter::new(channels, channels, taps)?.canonicalize())
}

/// Rank-1 projection unit parameterized by a unit vector, the Householder
///-like element.
pub fn build_householder(unit: &DVector<f64>, shift: &[i64]) -> Result<MultiFilter> {
    if (unit.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "vector norm {:.3e} is not 1 within 1e-12",
            unit.norm()
        )));
    }
    build_projection(std::slice::from_ref(unit), unit.len(), shift)
}

/// Compiles a chain by folding the matrix-to-matrix convolution over its
/// modules. The result is Parseval whenever every module is, and its adjoint
/// equals the reversed chain of adjoints.
pub fn chain_compile(chain: &ModuleChain) -> Result<MultiFilter> {
    let mut iter = chain.modules().iter();
    let mut acc = iter.next().unwrap().compile()?;
    for module in iter {
        let next = module.compile()?;
        acc = MultiFilter::compose(&next, &acc)?;
    }
    Ok(acc)
}

/// Compiles the interleaved factorization
/// `W_{I+1} S^{K_I} W_I ⋯ W_2 S^{K_1} W_1`.
pub fn compile_w_form(ws: &[OrthoMatrix], shifts: &[Vec<Vec<i64>>]) -> Result<MultiFilter> {
    if ws.len() != shifts.len() + 1 {
        return Err(Error::InvalidParameter(format!(
            "need {} matrices for {} shift stages",
            shifts.len() + 1,
            shifts.len()
        )));
    }
    let dims = shifts
        .first()
        .and_then(|stage| stage.first())
        .map(|o| o.len())
        .ok_or_else(|| Error::InvalidParameter("factorization needs at least one shift stage".into()))?;
    let mut acc = build_mult(&ws[0], dims)?;
    for (stage, k) in shifts.iter().enumerate() {
        acc = MultiFilter::compose(&build_gen_shift(k)?, &acc)?;
        acc = MultiFilter::compose(&build_mult(&ws[stage + 1], dims)?, &acc)?;
    }
    Ok(acc)
}

/// Compiles the conjugated factorization
/// `U_{I+1}ᴴ (U_I S^{K_I} U_Iᴴ) ⋯ (U_1 S^{K_1} U_1ᴴ)`.
pub fn compile_u_form(us: &[OrthoMatrix], shifts: &[Vec<Vec<i64>>]) -> Result<MultiFilter> {
    if us.len() != shifts.len() + 1 {
        return Err(Error::InvalidParameter(format!(
            "need {} matrices for {} shift stages",
            shifts.len() + 1,
            shifts.len()
        )));
    }
    let dims = shifts
        .first()
        .and_then(|stage| stage.first())
        .map(|o| o.len())
        .ok_or_else(|| Error::InvalidParameter("factorization needs at least one shift stage".into()))?;
    let mut acc: Option<MultiFilter> = None;
    for (u, k) in us.iter().zip(shifts) {
        let element = build_usv(u, k, u)?;
        acc = Some(match acc {
            None => element,
            Some(prev) => MultiFilter::compose(&element, &prev)?,
        });
    }
    let last = build_mult(&us[shifts.len()].transpose()?, dims)?;
    MultiFilter::compose(&last, &acc.unwrap())
}

/// Converts interleaved `W` factors into conjugated `U` factors spanning the
/// same filter: `U₁ = W₁ᵀ`, `U_{i} = U_{i-1} W_iᵀ`.
pub fn w_to_u_factors(ws: &[OrthoMatrix]) -> Result<Vec<OrthoMatrix>> {
    if ws.is_empty() {
        return Err(Error::InvalidParameter("factor list must be nonempty".into()));
    }
    let mut us = Vec::with_capacity(ws.len());
    let mut current = ws[0].matrix().transpose();
    us.push(OrthoMatrix::new(current.clone())?);
    for w in &ws[1..] {
        current *= w.matrix().transpose();
        us.push(OrthoMatrix::new(current.clone())?);
    }
    Ok(us)
}

/// Inverse conversion: `W₁ = U₁ᵀ`, `W_i = U_iᵀ U_{i-1}`.
pub fn u_to_w_factors(us: &[OrthoMatrix]) -> Result<Vec<OrthoMatrix>> {
    if us.is_empty() {
        return Err(Error::InvalidParameter("factor list must be nonempty".into()));
    }
    let mut ws = Vec::with_capacity(us.len());
    ws.push(OrthoMatrix::new(us[0].matrix().transpose())?);
    for pair in us.windows(2) {
        ws.push(OrthoMatrix::new(
            pair[1].matrix().transpose() * pair[0].matrix(),
        )?);
    }
    Ok(ws)
}
