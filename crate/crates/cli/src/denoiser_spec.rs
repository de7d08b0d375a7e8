//! TOML description of averaged denoisers.
//!
//! ```toml
//! kind = "frame_threshold"        # or "cnn", "scale"
//! beta = 0.4
//! tau = 0.05
//! chain = "haar.toml"             # analysis transform (for frame_threshold)
//!
//! # kind = "cnn"
//! # weights = "net.psvb"
//! # on_cert_failure = "reject"    # or "renormalize"
//!
//! # kind = "scale"
//! # factor = 0.0                  # R = factor · Id
//! ```

use serde::Deserialize;
use std::path::Path;

use psvb_core::nn::{AveragedDenoiser, ResidualOperator};
use psvb_core::spectral::DEFAULT_PARSEVAL_TOL;
use psvb_core::Grid;

use crate::chainspec::ChainSpec;
use crate::container;
use crate::error::{CliError, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserSpec {
    pub kind: String,
    pub beta: Option<f64>,
    pub tau: Option<f64>,
    pub dims: Option<usize>,
    pub chain: Option<String>,
    pub weights: Option<String>,
    pub on_cert_failure: Option<String>,
    pub factor: Option<f64>,
    #[serde(rename = "module")]
    pub modules: Option<Vec<crate::chainspec::ModuleSpec>>,
}

/// Audit lines produced while building the denoiser (certification results,
/// renormalization notices).
pub struct BuiltDenoiser {
    pub denoiser: AveragedDenoiser,
    pub audit: Vec<String>,
}

impl DenoiserSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Malformed(format!("denoiser spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Builds the denoiser for evaluation on `grid`. `base` resolves relative
    /// paths; `beta_override` / `tau_override` come from CLI flags.
    pub fn build(
        &self,
        grid: &Grid,
        base: &Path,
        beta_override: Option<f64>,
        tau_override: Option<f64>,
    ) -> Result<BuiltDenoiser> {
        let beta = beta_override.or(self.beta).unwrap_or(0.4);
        let mut audit = Vec::new();
        let residual = match self.kind.as_str() {
            "frame_threshold" => {
                let tau = tau_override.or(self.tau).unwrap_or(0.0);
                let chain = match (&self.chain, &self.modules) {
                    (Some(rel), _) => ChainSpec::load(&base.join(rel))?,
                    (None, Some(modules)) => ChainSpec {
                        dims: self.dims,
                        modules: modules.clone(),
                    },
                    (None, None) => {
                        return Err(CliError::Malformed(
                            "frame_threshold: need chain path or inline modules".into(),
                        ))
                    }
                };
                let transform = chain.compile(base)?;
                audit.push(format!(
                    "transform: {}->{} channels, {} taps",
                    transform.in_channels(),
                    transform.out_channels(),
                    transform.taps().len()
                ));
                ResidualOperator::frame_threshold(transform, tau, grid)?
            }
            "cnn" => {
                let rel = self.weights.as_ref().ok_or_else(|| {
                    CliError::Malformed("cnn: weights path required".into())
                })?;
                let net = container::load_weights(&base.join(rel))?;
                let cert = net.certify(grid, DEFAULT_PARSEVAL_TOL)?;
                for (i, n) in cert.filter_norms.iter().enumerate() {
                    audit.push(format!("layer {i} operator_norm={n:.12e}"));
                }
                let net = if cert.passed {
                    net
                } else {
                    match self.on_cert_failure.as_deref().unwrap_or("reject") {
                        "renormalize" => {
                            audit.push("certification failed; renormalizing layers".into());
                            let repaired = net.renormalized(grid)?;
                            let recheck = repaired.certify(grid, DEFAULT_PARSEVAL_TOL)?;
                            if !recheck.passed {
                                return Err(CliError::VerificationFailed(
                                    "network failed certification after renormalization".into(),
                                ));
                            }
                            repaired
                        }
                        "reject" => {
                            return Err(CliError::VerificationFailed(format!(
                                "network failed 1-Lipschitz certification: norms {:?}",
                                cert.filter_norms
                            )))
                        }
                        other => {
                            return Err(CliError::Malformed(format!(
                                "unknown on_cert_failure policy \"{other}\""
                            )))
                        }
                    }
                };
                ResidualOperator::Cnn(net)
            }
            "scale" => ResidualOperator::scale(self.factor.unwrap_or(0.0))?,
            other => {
                return Err(CliError::Malformed(format!(
                    "unknown denoiser kind \"{other}\""
                )))
            }
        };
        Ok(BuiltDenoiser {
            denoiser: AveragedDenoiser::new(residual, beta)?,
            audit,
        })
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_denoiser_parses() {
        let spec = DenoiserSpec::parse("kind = \"scale\"\nfactor = -1.0\nbeta = 0.5\n").unwrap();
        let grid = Grid::new(&[8]).unwrap();
        let built = spec.build(&grid, Path::new("."), None, None).unwrap();
        assert_eq!(built.denoiser.beta(), 0.5);
    }

    #[test]
    fn unknown_kind_is_rejected() {
        let spec = DenoiserSpec::parse("kind = \"magic\"\n").unwrap();
        let grid = Grid::new(&[8]).unwrap();
        assert!(spec.build(&grid, Path::new("."), None, None).is_err());
    }
}
