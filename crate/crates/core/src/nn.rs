//! 1-Lipschitz nonlinear layers and denoisers.
//!
//! Everything here is forward/evaluation only. Linear layers are certified
//! through their exact operator norm, pointwise layers through the maximum
//! of the per-channel activation Lipschitz constants, and a full network
//! through the product of its layer constants.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::filter::MultiFilter;
use crate::grid::Grid;
use crate::signal::MultiSignal;
use crate::spectral::{is_parseval, operator_norm, DEFAULT_PARSEVAL_TOL};

/// Elementwise `max(0, ·)`.
pub fn relu(x: &MultiSignal) -> MultiSignal {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = v.max(0.0);
    }
    out
}

/// Elementwise soft threshold `sign(t) max(|t| - tau, 0)`; 1-Lipschitz for
/// any `tau ≥ 0`.
pub fn soft_threshold(x: &MultiSignal, tau: f64) -> MultiSignal {
    let mut out = x.clone();
    for v in out.data_mut() {
        *v = v.signum() * (v.abs() - tau).max(0.0);
    }
    out
}

/// Continuous piecewise-linear activation on a uniform knot grid with linear
/// extrapolation beyond the boundary knots.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineActivation {
    t0: f64,
    dt: f64,
    values: Vec<f64>,
}

impl SplineActivation {
    pub fn new(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter("spline needs at least two knots".into()));
        }
        if !(dt > 0.0) || !t0.is_finite() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("spline parameters must be finite, dt > 0".into()));
        }
        Ok(Self { t0, dt, values })
    }

    /// Uniform knots on a symmetric range `[-range, range]`.
    pub fn on_symmetric_range(range: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 || !(range > 0.0) {
            return Err(Error::InvalidParameter("need at least two knots on a positive range".into()));
        }
        let dt = 2.0 * range / (values.len() - 1) as f64;
        Self::new(-range, dt, values)
    }

    /// Default knot layout: 21 uniform knots on `[-1, 1]`.
    pub fn identity_default() -> Self {
        let values: Vec<f64> = (0..21).map(|i| -1.0 + i as f64 * 0.1).collect();
        Self::new(-1.0, 0.1, values).expect("valid default spline")
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn knot(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn eval(&self, t: f64) -> f64 {
        let q = self.values.len() - 1;
        let pos = (t - self.t0) / self.dt;
        if pos <= 0.0 {
            let slope = (self.values[1] - self.values[0]) / self.dt;
            return self.values[0] + slope * (t - self.t0);
        }
        if pos >= q as f64 {
            let slope = (self.values[q] - self.values[q - 1]) / self.dt;
            return self.values[q] + slope * (t - self.knot(q));
        }
        let seg = pos.floor() as usize;
        let frac = pos - seg as f64;
        self.values[seg] * (1.0 - frac) + self.values[seg + 1] * frac
    }

    /// Exact Lipschitz constant: the largest per-segment |slope| (the
    /// extrapolation slopes coincide with the boundary segments).
    pub fn lipschitz(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| ((w[1] - w[0]) / self.dt).abs())
            .fold(0.0, f64::max)
    }

    /// Clips every slope to `[-1, 1]` and rebuilds the knot values from the
    /// leftmost one. An already 1-Lipschitz spline is returned unchanged, so
    /// the projection is exactly idempotent.
    pub fn project_unit_lipschitz(&self) -> Self {
        if self.lipschitz() <= 1.0 {
            return self.clone();
        }
        let mut values = Vec::with_capacity(self.values.len());
        values.push(self.values[0]);
        for w in self.values.windows(2) {
            let slope = ((w[1] - w[0]) / self.dt).clamp(-1.0, 1.0);
            let prev = *values.last().unwrap();
            let mut next = prev + slope * self.dt;
            // guard against the rebuilt slope rounding just above 1
            while ((next - prev) / self.dt).abs() > 1.0 {
                next = if next > prev { next.next_down() } else { next.next_up() };
            }
            values.push(next);
        }
        Self {
            t0: self.t0,
            dt: self.dt,
            values,
        }
    }

    /// Segment index (including both extrapolation rays as boundary
    /// segments) attaining the Lipschitz constant, and two probe points
    /// strictly inside it.
    pub fn steepest_segment_points(&self) -> (f64, f64) {
        let mut best = 0usize;
        let mut best_slope = -1.0f64;
        for (i, w) in self.values.windows(2).enumerate() {
            let s = ((w[1] - w[0]) / self.dt).abs();
            if s > best_slope {
                best_slope = s;
                best = i;
            }
        }
        let a = self.knot(best) + 0.25 * self.dt;
        let b = self.knot(best) + 0.75 * self.dt;
        (a, b)
    }
}

/// One pointwise nonlinear layer: either ReLU on every channel or one spline
/// per channel (the activation profile is shared across sites).
#[derive(Debug, Clone)]
pub enum ActivationLayer {
    Relu,
    Splines(Vec<SplineActivation>),
}

impl ActivationLayer {
    pub fn apply(&self, x: &MultiSignal) -> Result<MultiSignal> {
        match self {
            ActivationLayer::Relu => Ok(relu(x)),
            ActivationLayer::Splines(splines) => {
                if splines.len() != x.channels() {
                    return Err(Error::ChannelMismatch {
                        expected: splines.len(),
                        got: x.channels(),
                    });
                }
                let mut out = x.clone();
                for (n, spline) in splines.iter().enumerate() {
                    for v in out.channel_mut(n) {
                        *v = spline.eval(*v);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Exact layer constant: the supremum of the per-channel activation
    /// Lipschitz constants.
    pub fn lipschitz(&self) -> f64 {
        match self {
            ActivationLayer::Relu => 1.0,
            ActivationLayer::Splines(splines) => {
                splines.iter().map(|s| s.lipschitz()).fold(0.0, f64::max)
            }
        }
    }

    /// Worst-case single-site signal pair attaining the layer constant, on
    /// the channel with the steepest activation.
    pub fn worst_case_pair(&self, grid: &Grid, channels: usize) -> Result<(MultiSignal, MultiSignal)> {
        let (channel, a, b) = match self {
            ActivationLayer::Relu => (0usize, 1.0, 2.0),
            ActivationLayer::Splines(splines) => {
                let mut best = 0usize;
                for (i, s) in splines.iter().enumerate() {
                    if s.lipschitz() > splines[best].lipschitz() {
                        best = i;
                    }
                }
                let (a, b) = splines[best].steepest_segment_points();
                (best, a, b)
            }
        };
        let site = vec![0i64; grid.dims()];
        let x = MultiSignal::impulse(grid.clone(), channels, channel, &site)?.scale(a);
        let y = MultiSignal::impulse(grid.clone(), channels, channel, &site)?.scale(b);
        Ok((x, y))
    }
}

/// Multiscale 2-D Haar-union analysis frame: one 2x2 Walsh branch per
/// `(row_spacing, col_spacing)` entry, assembled as a single normalized
/// patch (with repeated origins) followed by a block-diagonal orthogonal
/// mixing stage. Parseval by construction; `1 → 4·branches` channels.
///
/// The default `[(1,1), (2,1), (2,2)]` works well as the analysis transform
/// of a frame-threshold denoiser on piecewise-constant images.
pub fn multiscale_haar_frame_2d(spacings: &[(i64, i64)]) -> Result<MultiFilter> {
    use crate::builders::{build_mult, build_patch, OrthoMatrix};
    use crate::filter::TapSet;
    use nalgebra::DMatrix;

    if spacings.is_empty() {
        return Err(Error::InvalidParameter("need at least one branch".into()));
    }
    let h = 0.5;
    let walsh = [
        [h, h, h, h],
        [h, -h, h, -h],
        [h, h, -h, -h],
        [h, -h, -h, h],
    ];
    let mut offsets = Vec::with_capacity(4 * spacings.len());
    for &(dr, dc) in spacings {
        if dr <= 0 || dc <= 0 {
            return Err(Error::InvalidParameter("spacings must be positive".into()));
        }
        offsets.push(vec![0, 0]);
        offsets.push(vec![0, dc]);
        offsets.push(vec![dr, 0]);
        offsets.push(vec![dr, dc]);
    }
    let n = 4 * spacings.len();
    let mut mixing = DMatrix::<f64>::zeros(n, n);
    for b in 0..spacings.len() {
        for i in 0..4 {
            for j in 0..4 {
                mixing[(b * 4 + i, b * 4 + j)] = walsh[i][j];
            }
        }
    }
    let patch = build_patch(&TapSet::new(offsets)?, 1)?;
    let mult = build_mult(&OrthoMatrix::new(mixing)?, 2)?;
    MultiFilter::compose(&mult, &patch)
}

/// Divides a filter by its exact operator norm on `grid`, yielding operator
/// norm 1.
pub fn spectral_normalize(filter: &MultiFilter, grid: &Grid) -> Result<MultiFilter> {
    let norm = operator_norm(filter, grid)?;
    if norm <= 0.0 {
        return Err(Error::InvalidParameter(
            "cannot normalize a filter with zero operator norm".into(),
        ));
    }
    Ok(filter.scale(1.0 / norm))
}

/// An L-layer 1-Lipschitz CNN residual operator: filters alternate with
/// pointwise activations, channel plan `1 → N → … → N → 1`. Optional
/// per-channel biases are added after each filter; they do not change any
/// Lipschitz constant.
#[derive(Debug, Clone)]
pub struct CnnDenoiser {
    filters: Vec<MultiFilter>,
    activations: Vec<ActivationLayer>,
    biases: Option<Vec<DVector<f64>>>,
}

/// Certification summary produced when loading or checking a [`CnnDenoiser`].
#[derive(Debug, Clone)]
pub struct CnnCertification {
    pub filter_norms: Vec<f64>,
    pub activation_constants: Vec<f64>,
    pub lipschitz_bound: f64,
    pub tol: f64,
    pub passed: bool,
}

impl CnnDenoiser {
    pub fn new(
        filters: Vec<MultiFilter>,
        activations: Vec<ActivationLayer>,
        biases: Option<Vec<DVector<f64>>>,
    ) -> Result<Self> {
        if filters.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one filter".into()));
        }
        if activations.len() + 1 != filters.len() {
            return Err(Error::InvalidParameter(format!(
                "{} filters need {} activation layers, got {}",
                filters.len(),
                filters.len() - 1,
                activations.len()
            )));
        }
        if filters[0].in_channels() != 1 || filters.last().unwrap().out_channels() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                got: filters[0].in_channels().max(filters.last().unwrap().out_channels()),
            });
        }
        for pair in filters.windows(2) {
            if pair[0].out_channels() != pair[1].in_channels() {
                return Err(Error::ChannelMismatch {
                    expected: pair[0].out_channels(),
                    got: pair[1].in_channels(),
                });
            }
        }
        if let Some(biases) = &biases {
            if biases.len() != filters.len() {
                return Err(Error::InvalidParameter("one bias vector per filter layer".into()));
            }
            for (b, f) in biases.iter().zip(&filters) {
                if b.len() != f.out_channels() {
                    return Err(Error::ChannelMismatch {
                        expected: f.out_channels(),
                        got: b.len(),
                    });
                }
            }
        }
        Ok(Self {
            filters,
            activations,
            biases,
        })
    }

    pub fn filters(&self) -> &[MultiFilter] {
        &self.filters
    }

    pub fn activations(&self) -> &[ActivationLayer] {
        &self.activations
    }

    pub fn biases(&self) -> Option<&[DVector<f64>]> {
        self.biases.as_deref()
    }

    pub fn layer_count(&self) -> usize {
        self.filters.len()
    }

    /// Certifies every layer on `grid`: each filter norm must not exceed
    /// `1 + tol` and each activation constant must not exceed 1.
    pub fn certify(&self, grid: &Grid, tol: f64) -> Result<CnnCertification> {
        let mut filter_norms = Vec::with_capacity(self.filters.len());
        for f in &self.filters {
            filter_norms.push(operator_norm(f, grid)?);
        }
        let activation_constants: Vec<f64> =
            self.activations.iter().map(|a| a.lipschitz()).collect();
        let lipschitz_bound = filter_norms.iter().product::<f64>()
            * activation_constants.iter().product::<f64>();
        let passed = filter_norms.iter().all(|&n| n <= 1.0 + tol)
            && activation_constants.iter().all(|&c| c <= 1.0 + tol);
        Ok(CnnCertification {
            filter_norms,
            activation_constants,
            lipschitz_bound,
            tol,
            passed,
        })
    }

    /// Renormalizes every filter to operator norm 1 and clips spline slopes
    /// to unit Lipschitz. Used by loaders when certification fails and the
    /// caller opted into repair instead of rejection.
    pub fn renormalized(&self, grid: &Grid) -> Result<Self> {
        let mut filters = Vec::with_capacity(self.filters.len());
        for f in &self.filters {
            filters.push(spectral_normalize(f, grid)?);
        }
        let activations = self
            .activations
            .iter()
            .map(|a| match a {
                ActivationLayer::Relu => ActivationLayer::Relu,
                ActivationLayer::Splines(s) => {
                    ActivationLayer::Splines(s.iter().map(|sp| sp.project_unit_lipschitz()).collect())
                }
            })
            .collect();
        Ok(Self {
            filters,
            activations,
            biases: self.biases.clone(),
        })
    }

    /// Forward evaluation `T_{H_L} ∘ σ_L ∘ … ∘ σ₂ ∘ T_{H₁}` on a
    /// single-channel signal.
    pub fn forward(&self, x: &MultiSignal) -> Result<MultiSignal> {
        if x.channels() != 1 {
            return Err(Error::ChannelMismatch {
                expected: 1,
                got: x.channels(),
            });
        }
        let mut state = self.apply_layer(0, x)?;
        for (i, activation) in self.activations.iter().enumerate() {
            state = activation.apply(&state)?;
            state = self.apply_layer(i + 1, &state)?;
        }
        Ok(state)
    }

    fn apply_layer(&self, index: usize, x: &MultiSignal) -> Result<MultiSignal> {
        let mut out = self.filters[index].apply(x)?;
        if let Some(biases) = &self.biases {
            let bias = &biases[index];
            for n in 0..out.channels() {
                let b = bias[n];
                if b != 0.0 {
                    for v in out.channel_mut(n) {
                        *v += b;
                    }
                }
            }
        }
        Ok(out)
    }
}

/// The residual operator `R` inside an averaged denoiser. Every variant is
/// 1-Lipschitz by construction.
#[derive(Debug, Clone)]
pub enum ResidualOperator {
    Cnn(CnnDenoiser),
    /// `R = T* ∘ soft_threshold(τ) ∘ T` for a Parseval analysis filter `T`;
    /// certified at construction.
    FrameThreshold { transform: MultiFilter, tau: f64 },
    /// `R = c · Id` with `|c| ≤ 1`.
    Scale(f64),
}

impl ResidualOperator {
    /// Builds the frame-threshold residual, verifying the Parseval property
    /// of the analysis transform on `grid`.
    pub fn frame_threshold(transform: MultiFilter, tau: f64, grid: &Grid) -> Result<Self> {
        if tau < 0.0 {
            return Err(Error::InvalidParameter("threshold must be nonnegative".into()));
        }
        let report = is_parseval(&transform, grid, DEFAULT_PARSEVAL_TOL)?;
        if !report.passed {
            return Err(Error::NotParseval(format!(
                "analysis transform defects: paraunitarity {:.3e}, time-domain {:.3e}",
                report.max_paraunitarity_defect, report.max_time_domain_defect
            )));
        }
        Ok(ResidualOperator::FrameThreshold { transform, tau })
    }

    pub fn scale(c: f64) -> Result<Self> {
        if c.abs() > 1.0 {
            return Err(Error::InvalidParameter(format!(
                "identity scaling {c} would exceed unit Lipschitz"
            )));
        }
        Ok(ResidualOperator::Scale(c))
    }

    pub fn apply(&self, z: &MultiSignal) -> Result<MultiSignal> {
        match self {
            ResidualOperator::Cnn(net) => net.forward(z),
            ResidualOperator::FrameThreshold { transform, tau } => {
                let coeffs = transform.apply(z)?;
                let shrunk = soft_threshold(&coeffs, *tau);
                transform.adjoint().apply(&shrunk)
            }
            ResidualOperator::Scale(c) => Ok(z.scale(*c)),
        }
    }

    /// Certified Lipschitz bound of the residual.
    pub fn lipschitz_bound(&self, grid: &Grid) -> Result<f64> {
        match self {
            ResidualOperator::Cnn(net) => Ok(net.certify(grid, DEFAULT_PARSEVAL_TOL)?.lipschitz_bound),
            ResidualOperator::FrameThreshold { .. } => Ok(1.0),
            ResidualOperator::Scale(c) => Ok(c.abs()),
        }
    }
}

/// Averaged denoiser `D = β R + (1 - β) Id` with `β ∈ (0, 1)` and a
/// 1-Lipschitz residual, the form required for convergent PnP iterations.
#[derive(Debug, Clone)]
pub struct AveragedDenoiser {
    residual: ResidualOperator,
    beta: f64,
}

impl AveragedDenoiser {
    pub fn new(residual: ResidualOperator, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "averaging weight must lie strictly inside (0, 1), got {beta}"
            )));
        }
        Ok(Self { residual, beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn residual(&self) -> &ResidualOperator {
        &self.residual
    }

    pub fn apply(&self, z: &MultiSignal) -> Result<MultiSignal> {
        let r = self.residual.apply(z)?;
        r.linear_combination(self.beta, z, 1.0 - self.beta)
    }
}
