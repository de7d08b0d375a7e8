//! Command implementations. Each returns the lines it wants printed so the
//! binary stays a thin shell and tests can drive commands in-process.
//!
//! Output is plain `key=value` pairs, deterministic for fixed seeds and
//! independent of the thread count.

use std::path::{Path, PathBuf};

use psvb_core::dft::bin_frequency;
use psvb_core::inverse::{
    check_forward_stability, check_solution_stability, fbs_solve, lipschitz_of_gradient,
    make_mask, psnr, FbsConfig, ForwardModel, MaskScheme, Measurement, SamplingMask,
};
use psvb_core::spectral::{
    gram_projector_check, inner_product_preservation_check, is_parseval, operator_norm,
};
use psvb_core::{Grid, MultiFilter, MultiSignal};

use crate::chainspec::ChainSpec;
use crate::container::{self, SignalFile};
use crate::denoiser_spec::DenoiserSpec;
use crate::error::{CliError, Result};
use crate::textio;

pub struct CommandOutput {
    pub lines: Vec<String>,
    /// Set when the command ran to completion but its verification failed;
    /// the report still prints and the process exits with code 1.
    pub verification_failed: bool,
}

impl CommandOutput {
    fn new() -> Self {
        Self {
            lines: Vec::new(),
            verification_failed: false,
        }
    }

    fn push(&mut self, line: String) {
        self.lines.push(line);
    }
}

pub fn parse_grid(text: &str) -> Result<Grid> {
    let sizes: Vec<usize> = text
        .split(['x', ','])
        .map(|part| {
            part.trim()
                .parse::<usize>()
                .map_err(|e| CliError::Malformed(format!("bad grid component {part}: {e}")))
        })
        .collect::<Result<_>>()?;
    Ok(Grid::new(&sizes)?)
}

/// Scheme strings: `random=0.3`, `radial=16`, `cartesian=4`.
pub fn parse_scheme(text: &str, seed: u64) -> Result<MaskScheme> {
    let (name, value) = text
        .split_once('=')
        .ok_or_else(|| CliError::Malformed(format!("scheme needs name=value, got {text}")))?;
    Ok(match name {
        "random" => MaskScheme::Random {
            rate: value
                .parse()
                .map_err(|e| CliError::Malformed(format!("bad rate: {e}")))?,
            seed,
        },
        "radial" => MaskScheme::Radial {
            lines: value
                .parse()
                .map_err(|e| CliError::Malformed(format!("bad line count: {e}")))?,
        },
        "cartesian" => MaskScheme::Cartesian {
            acceleration: value
                .parse()
                .map_err(|e| CliError::Malformed(format!("bad acceleration: {e}")))?,
        },
        other => return Err(CliError::Malformed(format!("unknown scheme {other}"))),
    })
}

fn load_image(path: &Path) -> Result<MultiSignal> {
    // "phantom:64x64" generates the built-in piecewise-constant test image
    if let Some(spec) = path.to_str().and_then(|s| s.strip_prefix("phantom:")) {
        let grid = parse_grid(spec)?;
        if grid.dims() != 2 {
            return Err(CliError::Malformed("phantom needs a 2-D grid".into()));
        }
        return Ok(psvb_core::phantom::piecewise_phantom(
            grid.sizes()[0],
            grid.sizes()[1],
        )?);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => textio::load_pgm(&container::read_bytes(path)?),
        Some("csv") => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
            textio::load_csv(&text)
        }
        _ => match container::load_signal(path)? {
            SignalFile::Real(s) => Ok(s),
            SignalFile::Complex { .. } => Err(CliError::Malformed(
                "expected a real signal file".into(),
            )),
        },
    }
}

fn save_image(path: &Path, signal: &MultiSignal) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => container::write_bytes(path, &textio::save_pgm(signal)?),
        Some("csv") => container::write_bytes(path, textio::save_csv(signal).as_bytes()),
        _ => container::save_signal(path, signal),
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| PathBuf::from("."))
}

// ---------------------------------------------------------------------------

/// `verify`: compile a chain and run the Parseval test battery.
pub fn cmd_verify(chain_path: &Path, grid: &Grid, tol: f64, trials: usize, seed: u64) -> Result<CommandOutput> {
    let spec = ChainSpec::load(chain_path)?;
    let filter = spec.compile(&base_dir(chain_path))?;
    let mut out = CommandOutput::new();
    out.push(format!("chain={}", chain_path.display()));
    out.push(format!("grid={grid}"));
    out.push(format!("in_channels={}", filter.in_channels()));
    out.push(format!("out_channels={}", filter.out_channels()));
    out.push(format!("taps={}", filter.taps().len()));
    let report = is_parseval(&filter, grid, tol)?;
    out.push(format!(
        "paraunitarity_defect={:.12e}",
        report.max_paraunitarity_defect
    ));
    out.push(format!(
        "time_domain_defect={:.12e}",
        report.max_time_domain_defect
    ));
    out.push(format!("operator_norm={:.12e}", report.operator_norm));
    let preservation = inner_product_preservation_check(&filter, grid, trials, seed)?;
    out.push(format!("inner_product_defect={:.12e}", preservation));
    let gram = gram_projector_check(&filter, grid, trials, seed ^ 0x5bd1)?;
    out.push(format!("gram_projector_defect={:.12e}", gram));
    out.push(format!("tol={tol:.3e}"));
    let passed = report.passed
        && preservation <= tol.max(1e-10) * 100.0
        && gram <= tol.max(1e-10) * 100.0;
    out.push(format!("passed={passed}"));
    out.verification_failed = !passed;
    Ok(out)
}

/// `norm`: exact operator norm on the grid, plus an oversampled estimate of
/// the continuous-frequency norm.
pub fn cmd_norm(filter_path: &Path, grid: Option<Grid>, oversample: usize) -> Result<CommandOutput> {
    let filter = container::load_filter(filter_path)?;
    let grid = match (grid, filter.grid_hint()) {
        (Some(g), _) => g,
        (None, Some(hint)) => hint.clone(),
        (None, None) => {
            return Err(CliError::Malformed(
                "no --grid given and the filter file carries no grid hint".into(),
            ))
        }
    };
    let mut out = CommandOutput::new();
    out.push(format!("filter={}", filter_path.display()));
    out.push(format!("grid={grid}"));
    out.push(format!(
        "operator_norm={:.12e}",
        operator_norm(&filter, &grid)?
    ));
    if oversample > 1 {
        let refined_sizes: Vec<usize> = grid.sizes().iter().map(|&n| n * oversample).collect();
        let refined = Grid::new(&refined_sizes)?;
        out.push(format!("oversample_factor={oversample}"));
        out.push(format!(
            "oversampled_norm={:.12e}",
            operator_norm(&filter, &refined)?
        ));
        let spacing: Vec<String> = refined
            .sizes()
            .iter()
            .map(|&n| format!("{:.6e}", 2.0 * std::f64::consts::PI / n as f64))
            .collect();
        out.push(format!("frequency_spacing={}", spacing.join(",")));
        // sanity: the oversampled grid contains the coarse bins
        let _ = bin_frequency(&refined, 0);
    }
    Ok(out)
}

/// `compose`: compile a chain description into a filter container.
pub fn cmd_compose(chain_path: &Path, grid_hint: Option<Grid>, out_path: &Path) -> Result<CommandOutput> {
    let spec = ChainSpec::load(chain_path)?;
    let filter = spec.compile(&base_dir(chain_path))?.with_grid_hint(grid_hint);
    let mut out = CommandOutput::new();
    out.push(format!("in_channels={}", filter.in_channels()));
    out.push(format!("out_channels={}", filter.out_channels()));
    out.push(format!("taps={}", filter.taps().len()));
    container::save_filter(out_path, &filter)?;
    out.push(format!("wrote={}", out_path.display()));
    Ok(out)
}

/// `mask`: generate and store a sampling mask.
pub fn cmd_mask(
    scheme_text: &str,
    grid: &Grid,
    seed: u64,
    symmetric: bool,
    out_path: &Path,
) -> Result<CommandOutput> {
    let scheme = parse_scheme(scheme_text, seed)?;
    let mask = make_mask(scheme, grid, symmetric)?;
    let mut out = CommandOutput::new();
    out.push(format!("grid={grid}"));
    out.push(format!("selected={}", mask.selected()));
    out.push(format!("fraction={:.6}", mask.fraction()));
    out.push(format!("conjugate_symmetric={}", mask.is_conjugate_symmetric()));
    container::save_mask(out_path, &mask)?;
    out.push(format!("wrote={}", out_path.display()));
    Ok(out)
}

/// `denoise`: corrupt an image with seeded Gaussian noise and run the
/// denoiser once.
#[allow(clippy::too_many_arguments)]
pub fn cmd_denoise(
    input: &Path,
    denoiser_path: &Path,
    sigma: f64,
    seed: u64,
    beta: Option<f64>,
    tau: Option<f64>,
    out_path: &Path,
) -> Result<CommandOutput> {
    let clean = load_image(input)?;
    if clean.channels() != 1 {
        return Err(CliError::Malformed("denoising expects a single-channel image".into()));
    }
    let grid = clean.grid().clone();
    let spec = DenoiserSpec::load(denoiser_path)?;
    let built = spec.build(&grid, &base_dir(denoiser_path), beta, tau)?;
    let mut out = CommandOutput::new();
    for line in &built.audit {
        out.push(format!("audit: {line}"));
    }
    let model = ForwardModel::identity(grid);
    let noisy_m = model.apply(&clean)?.add_noise(sigma, seed, false);
    let noisy = model.adjoint(&noisy_m)?;
    let denoised = built.denoiser.apply(&noisy)?;
    out.push(format!("sigma={sigma}"));
    out.push(format!("seed={seed}"));
    out.push(format!("noisy_psnr_db={:.6}", psnr(&clean, &noisy, 1.0)?));
    out.push(format!(
        "denoised_psnr_db={:.6}",
        psnr(&clean, &denoised, 1.0)?
    ));
    save_image(out_path, &denoised)?;
    out.push(format!("wrote={}", out_path.display()));
    Ok(out)
}

pub enum MaskSource<'a> {
    File(&'a Path),
    Scheme(&'a str),
}

fn resolve_mask(source: &MaskSource<'_>, grid: &Grid, seed: u64) -> Result<SamplingMask> {
    match source {
        MaskSource::File(path) => {
            let mask = container::load_mask(path)?;
            if mask.grid() != grid {
                return Err(CliError::Malformed(format!(
                    "mask grid {} does not match image grid {grid}",
                    mask.grid()
                )));
            }
            Ok(mask)
        }
        MaskSource::Scheme(text) => Ok(make_mask(parse_scheme(text, seed)?, grid, false)?),
    }
}

/// `reconstruct`: simulate masked-Fourier measurements of a ground-truth
/// image, run PnP-FBS, and report PSNR against the zero-fill baseline.
#[allow(clippy::too_many_arguments)]
pub fn cmd_reconstruct(
    ground_truth: &Path,
    mask_source: MaskSource<'_>,
    sigma: f64,
    seed: u64,
    denoiser_path: &Path,
    alpha: Option<f64>,
    beta: Option<f64>,
    tau: Option<f64>,
    max_iters: usize,
    tol: f64,
    out_path: &Path,
    zero_fill_out: Option<&Path>,
    trace_out: Option<&Path>,
) -> Result<CommandOutput> {
    let truth = load_image(ground_truth)?;
    if truth.channels() != 1 || truth.grid().dims() != 2 {
        return Err(CliError::Malformed(
            "reconstruction expects a single-channel 2-D image".into(),
        ));
    }
    let grid = truth.grid().clone();
    let mask = resolve_mask(&mask_source, &grid, seed ^ 0x6d61736b)?;
    let model = ForwardModel::masked_fourier(mask);

    let y = model.apply(&truth)?.add_noise(sigma, seed, true);
    let zero_fill = model.adjoint(&y)?;

    let spec = DenoiserSpec::load(denoiser_path)?;
    let built = spec.build(&grid, &base_dir(denoiser_path), beta, tau)?;

    let l = lipschitz_of_gradient(&model)?;
    let alpha = alpha.unwrap_or(1.0 / l.max(f64::MIN_POSITIVE));
    let cfg = FbsConfig {
        alpha,
        max_iters,
        tol,
        record_trace: true,
    };
    let result = fbs_solve(&model, &y, &built.denoiser, &cfg)?;

    let mut out = CommandOutput::new();
    for line in &built.audit {
        out.push(format!("audit: {line}"));
    }
    out.push(format!("grid={grid}"));
    out.push(format!("mask_fraction={:.6}", model.measurement_len() as f64 / grid.len() as f64));
    out.push(format!("sigma={sigma}"));
    out.push(format!("seed={seed}"));
    out.push(format!("alpha={alpha:.12e}"));
    out.push(format!("gradient_lipschitz={l:.12e}"));
    out.push(format!("iterations={}", result.iterations));
    out.push(format!("converged={}", result.converged));
    out.push(format!("final_gap={:.12e}", result.final_gap));
    out.push(format!("final_fidelity={:.12e}", result.final_fidelity));
    out.push(format!(
        "zero_fill_psnr_db={:.6}",
        psnr(&truth, &zero_fill, 1.0)?
    ));
    out.push(format!(
        "pnp_psnr_db={:.6}",
        psnr(&truth, &result.solution, 1.0)?
    ));

    save_image(out_path, &result.solution)?;
    out.push(format!("wrote={}", out_path.display()));
    if let Some(path) = zero_fill_out {
        save_image(path, &zero_fill)?;
        out.push(format!("wrote_zero_fill={}", path.display()));
    }
    if let Some(path) = trace_out {
        let mut csv = String::from("iteration,relative_gap\n");
        for (i, gap) in result.trace.iter().enumerate() {
            csv.push_str(&format!("{},{:.12e}\n", i + 1, gap));
        }
        container::write_bytes(path, csv.as_bytes())?;
        out.push(format!("wrote_trace={}", path.display()));
    }
    Ok(out)
}

/// `stability`: audit the fixed-point stability bounds over seeded
/// perturbation pairs.
#[allow(clippy::too_many_arguments)]
pub fn cmd_stability(
    model_kind: &str,
    grid: &Grid,
    mask_scheme: Option<&str>,
    denoiser_path: &Path,
    trials: usize,
    seed: u64,
    sigma: f64,
    alpha: Option<f64>,
    beta: Option<f64>,
    tau: Option<f64>,
    max_iters: usize,
    tol: f64,
    solution_l0: Option<f64>,
) -> Result<CommandOutput> {
    let model = match model_kind {
        "identity" => ForwardModel::identity(grid.clone()),
        "fourier" => {
            let scheme = mask_scheme.ok_or_else(|| {
                CliError::Malformed("fourier model needs --scheme".into())
            })?;
            ForwardModel::masked_fourier(make_mask(parse_scheme(scheme, seed)?, grid, false)?)
        }
        "blur" => {
            use nalgebra::DMatrix;
            use psvb_core::Tap;
            let d = grid.dims();
            let mut off = vec![0i64; d];
            off[d - 1] = 1;
            let kernel = MultiFilter::new(
                1,
                1,
                vec![
                    Tap { offset: vec![0; d], matrix: DMatrix::from_element(1, 1, 0.5) },
                    Tap { offset: off, matrix: DMatrix::from_element(1, 1, 0.5) },
                ],
            )?;
            ForwardModel::periodic_blur(grid.clone(), kernel)?
        }
        other => return Err(CliError::Malformed(format!("unknown model {other}"))),
    };
    let spec = DenoiserSpec::load(denoiser_path)?;
    let built = spec.build(grid, &base_dir(denoiser_path), beta, tau)?;
    let l = lipschitz_of_gradient(&model)?;
    let cfg = FbsConfig {
        alpha: alpha.unwrap_or(1.0 / l.max(f64::MIN_POSITIVE)),
        max_iters,
        tol,
        record_trace: false,
    };

    let mut out = CommandOutput::new();
    out.push(format!("model={model_kind}"));
    out.push(format!("grid={grid}"));
    out.push(format!("trials={trials}"));
    let mut all_passed = true;
    for t in 0..trials {
        let base = MultiSignal::random(grid.clone(), 1, seed ^ (101 * t as u64))?;
        let y1 = model.apply(&base)?;
        let y2 = y1.add_noise(sigma, seed ^ (997 * t as u64 + 13), model.is_complex());
        let audit = match solution_l0 {
            None => check_forward_stability(&model, &built.denoiser, &cfg, &y1, &y2)?,
            Some(l0) => {
                check_solution_stability(&model, &built.denoiser, &cfg, &y1, &y2, l0)?
            }
        };
        all_passed &= audit.passed && audit.converged.0 && audit.converged.1;
        out.push(format!(
            "trial={} lhs={:.12e} rhs={:.12e} slack={:.12e} converged={}/{} pass={}",
            t, audit.lhs, audit.rhs, audit.slack, audit.converged.0, audit.converged.1,
            audit.passed
        ));
    }
    out.push(format!("all_passed={all_passed}"));
    out.verification_failed = !all_passed;
    Ok(out)
}

/// `convert`: translate between container, CSV, and PGM representations of
/// real signals.
pub fn cmd_convert(input: &Path, output: &Path) -> Result<CommandOutput> {
    let signal = load_image(input)?;
    save_image(output, &signal)?;
    let mut out = CommandOutput::new();
    out.push(format!("grid={}", signal.grid()));
    out.push(format!("channels={}", signal.channels()));
    out.push(format!("wrote={}", output.display()));
    Ok(out)
}

/// Normalized measurement vector for a model, used by stability drivers.
pub fn random_measurement(model: &ForwardModel, seed: u64) -> Result<Measurement> {
    let s = MultiSignal::random(model.grid().clone(), 1, seed)?;
    Ok(model.apply(&s)?)
}
