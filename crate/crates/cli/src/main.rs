use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use psvb_cli::commands::{self, MaskSource};
use psvb_cli::error::Result;

/// Parseval filterbank toolbox: construction, verification, and plug-and-play
/// image reconstruction.
#[derive(Parser)]
#[command(name = "psvb", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Verify the Parseval property of a module chain.
    Verify {
        /// Chain description (TOML).
        chain: PathBuf,
        #[arg(long, value_parser = commands::parse_grid)]
        grid: psvb_core::Grid,
        /// Absolute tolerance on the Parseval defects.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Random trials for the inner-product and projector checks.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the exact operator norm of a stored filter.
    Norm {
        filter: PathBuf,
        #[arg(long, value_parser = commands::parse_grid)]
        grid: Option<psvb_core::Grid>,
        /// Frequency-grid refinement factor for the continuous-norm estimate.
        #[arg(long, default_value_t = 1)]
        oversample: usize,
    },
    /// Compile a module chain into a filter container.
    Compose {
        chain: PathBuf,
        #[arg(long, value_parser = commands::parse_grid)]
        grid: Option<psvb_core::Grid>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Generate a k-space sampling mask.
    Mask {
        /// Scheme: random=<rate> | radial=<lines> | cartesian=<accel>.
        #[arg(long)]
        scheme: String,
        #[arg(long, value_parser = commands::parse_grid)]
        grid: psvb_core::Grid,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Complete the mask to conjugate symmetry.
        #[arg(long, default_value_t = false)]
        symmetric: bool,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Add seeded noise to an image and denoise it once.
    Denoise {
        input: PathBuf,
        #[arg(long)]
        denoiser: PathBuf,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Simulate masked-Fourier measurements and reconstruct with PnP-FBS.
    Reconstruct {
        ground_truth: PathBuf,
        /// Mask container file (alternative to --scheme).
        #[arg(long)]
        mask: Option<PathBuf>,
        /// Mask scheme (alternative to --mask).
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        denoiser: PathBuf,
        /// Step size; defaults to 1/L.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        zero_fill_out: Option<PathBuf>,
        /// Convergence trace CSV.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Audit the fixed-point stability bounds over perturbation pairs.
    Stability {
        /// Forward model: identity | blur | fourier.
        #[arg(long, default_value = "identity")]
        model: String,
        #[arg(long, value_parser = commands::parse_grid)]
        grid: psvb_core::Grid,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        denoiser: PathBuf,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturbation strength between paired measurements.
        #[arg(long, default_value_t = 0.05)]
        sigma: f64,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 4000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        /// Audit the solution bound with this contraction factor instead of
        /// the measurement bound.
        #[arg(long)]
        solution_l0: Option<f64>,
    },
    /// Convert between container, CSV, and PGM signal files.
    Convert { input: PathBuf, output: PathBuf },
}

fn run(cli: Cli) -> Result<commands::CommandOutput> {
    match cli.command {
        Command::Verify {
            chain,
            grid,
            tol,
            trials,
            seed,
        } => commands::cmd_verify(&chain, &grid, tol, trials, seed),
        Command::Norm {
            filter,
            grid,
            oversample,
        } => commands::cmd_norm(&filter, grid, oversample),
        Command::Compose { chain, grid, out } => commands::cmd_compose(&chain, grid, &out),
        Command::Mask {
            scheme,
            grid,
            seed,
            symmetric,
            out,
        } => commands::cmd_mask(&scheme, &grid, seed, symmetric, &out),
        Command::Denoise {
            input,
            denoiser,
            sigma,
            seed,
            beta,
            tau,
            out,
        } => commands::cmd_denoise(&input, &denoiser, sigma, seed, beta, tau, &out),
        Command::Reconstruct {
            ground_truth,
            mask,
            scheme,
            sigma,
            seed,
            denoiser,
            alpha,
            beta,
            tau,
            max_iters,
            tol,
            out,
            zero_fill_out,
            trace_out,
        } => {
            let source = match (&mask, &scheme) {
                (Some(path), None) => MaskSource::File(path),
                (None, Some(text)) => MaskSource::Scheme(text),
                _ => {
                    return Err(psvb_cli::CliError::Malformed(
                        "give exactly one of --mask or --scheme".into(),
                    ))
                }
            };
            commands::cmd_reconstruct(
                &ground_truth,
                source,
                sigma,
                seed,
                &denoiser,
                alpha,
                beta,
                tau,
                max_iters,
                tol,
                &out,
                zero_fill_out.as_deref(),
                trace_out.as_deref(),
            )
        }
        Command::Stability {
            model,
            grid,
            scheme,
            denoiser,
            trials,
            seed,
            sigma,
            alpha,
            beta,
            tau,
            max_iters,
            tol,
            solution_l0,
        } => commands::cmd_stability(
            &model,
            &grid,
            scheme.as_deref(),
            &denoiser,
            trials,
            seed,
            sigma,
            alpha,
            beta,
            tau,
            max_iters,
            tol,
            solution_l0,
        ),
        Command::Convert { input, output } => commands::cmd_convert(&input, &output),
    }
}

fn main() -> ExitCode {
    // PSVB_THREADS caps the rayon pool used by the per-bin spectral loops
    if let Ok(threads) = std::env::var("PSVB_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(output) => {
            for line in output.lines {
                println!("{line}");
            }
            if output.verification_failed {
                eprintln!("error: verification failed (see report above)");
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
