//! TOML description of module chains.
//!
//! A chain file lists modules in composition order. Matrix parameters are
//! given inline, drawn from a seed, or spliced in from a previously composed
//! filter container:
//!
//! ```toml
//! dims = 2
//!
//! [[module]]
//! kind = "patch"
//! channels = 1
//! offsets = [[0, 0], [0, 1], [1, 0], [1, 1]]
//!
//! [[module]]
//! kind = "mult"
//! size = 4
//! seed = 7
//!
//! [[module]]
//! kind = "householder"
//! unit = [0.6, 0.8]
//! # shift defaults to the alternating canonical unit offsets
//! ```

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use std::path::Path;

use psvb_core::builders::{
    alternating_unit_shift, chain_compile, random_orthogonal, random_tight_frame, ModuleChain,
    OrthoMatrix, ParsevalModule,
};
use psvb_core::{MultiFilter, TapSet};

use crate::container;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    /// Offset dimensionality shared by the whole chain (default: inferred
    /// from the first module carrying offsets, else 1).
    pub dims: Option<usize>,
    #[serde(rename = "module")]
    pub modules: Vec<ModuleSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModuleSpec {
    pub kind: String,
    pub channels: Option<usize>,
    pub offsets: Option<Vec<Vec<i64>>>,
    pub shifts: Option<Vec<Vec<i64>>>,
    pub shift: Option<Vec<i64>>,
    pub matrix: Option<Vec<Vec<f64>>>,
    pub matrix_v: Option<Vec<Vec<f64>>>,
    pub unit: Option<Vec<f64>>,
    pub basis: Option<Vec<Vec<f64>>>,
    pub rank: Option<usize>,
    pub size: Option<usize>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    pub seed: Option<u64>,
    pub seed_v: Option<u64>,
    /// Normalize `unit` / orthonormalize nothing else; convenience for
    /// hand-written vectors.
    pub normalize: Option<bool>,
    /// Splice a pre-composed filter container into the chain.
    pub file: Option<String>,
}

/// One chain element: a parametric module or a spliced filter.
pub enum ChainElement {
    Module(ParsevalModule),
    Filter(MultiFilter),
}

fn parse_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(CliError::Malformed("matrix must be nonempty".into()));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Malformed("matrix rows have unequal lengths".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

fn ortho_from_spec(
    matrix: &Option<Vec<Vec<f64>>>,
    seed: Option<u64>,
    size: Option<usize>,
    rows: Option<usize>,
    cols: Option<usize>,
    what: &str,
) -> Result<OrthoMatrix> {
    if let Some(rows) = matrix {
        return Ok(OrthoMatrix::new(parse_matrix(rows)?)?);
    }
    let seed =
        seed.ok_or_else(|| CliError::Malformed(format!("{what}: need matrix or seed")))?;
    match (rows, cols, size) {
        (Some(r), Some(c), _) => Ok(random_tight_frame(r, c, seed)?),
        (_, _, Some(n)) => Ok(random_orthogonal(n, seed)?),
        _ => Err(CliError::Malformed(format!(
            "{what}: need size (square) or rows+cols (frame) with seed"
        ))),
    }
}

impl ModuleSpec {
    fn build(&self, index: usize, dims: usize, base: &Path) -> Result<ChainElement> {
        let kind = self.kind.as_str();
        let default_shift = || alternating_unit_shift(index, dims);
        let module = match kind {
            "filter" => {
                let rel = self.file.as_ref().ok_or_else(|| {
                    CliError::Malformed("kind = \"filter\" needs a file path".into())
                })?;
                let path = base.join(rel);
                return Ok(ChainElement::Filter(container::load_filter(&path)?));
            }
            "patch" => {
                let channels = self.channels.unwrap_or(1);
                let offsets = self
                    .offsets
                    .clone()
                    .ok_or_else(|| CliError::Malformed("patch: offsets required".into()))?;
                ParsevalModule::Patch {
                    offsets: TapSet::new(offsets)?,
                    channels,
                }
            }
            "mult" => ParsevalModule::Mult {
                matrix: ortho_from_spec(
                    &self.matrix,
                    self.seed,
                    self.size,
                    self.rows,
                    self.cols,
                    "mult",
                )?,
                dims,
            },
            "one_to_n" => {
                let matrix = ortho_from_spec(
                    &self.matrix,
                    self.seed,
                    self.size,
                    self.rows,
                    self.cols,
                    "one_to_n",
                )?;
                let offsets = match &self.offsets {
                    Some(o) => TapSet::new(o.clone())?,
                    None => TapSet::centered_block(matrix.ncols(), dims)?,
                };
                ParsevalModule::OneToN { matrix, offsets }
            }
            "n_to_pn" => {
                let channels = self
                    .channels
                    .ok_or_else(|| CliError::Malformed("n_to_pn: channels required".into()))?;
                let matrix = ortho_from_spec(
                    &self.matrix,
                    self.seed,
                    self.size,
                    self.rows,
                    self.cols,
                    "n_to_pn",
                )?;
                if channels == 0 || matrix.nrows() % channels != 0 {
                    return Err(CliError::Malformed(format!(
                        "n_to_pn: matrix size {} is not a multiple of channels {channels}",
                        matrix.nrows()
                    )));
                }
                let p = matrix.nrows() / channels;
                let offsets = match &self.offsets {
                    Some(o) => TapSet::new(o.clone())?,
                    None => TapSet::centered_block(p, dims)?,
                };
                ParsevalModule::NToPN {
                    matrix,
                    offsets,
                    channels,
                }
            }
            "gen_shift" => {
                let shifts = self
                    .shifts
                    .clone()
                    .ok_or_else(|| CliError::Malformed("gen_shift: shifts required".into()))?;
                ParsevalModule::GenShift { shifts }
            }
            "frame_shift" => {
                let frame = ortho_from_spec(
                    &self.matrix,
                    self.seed,
                    self.size,
                    self.rows,
                    self.cols,
                    "frame_shift",
                )?;
                let shifts = match &self.shifts {
                    Some(s) => s.clone(),
                    None => vec![vec![0; dims]; frame.ncols()],
                };
                ParsevalModule::FrameShift { frame, shifts }
            }
            "usv" => {
                let u = ortho_from_spec(
                    &self.matrix,
                    self.seed,
                    self.size,
                    self.rows,
                    self.cols,
                    "usv (U)",
                )?;
                let v = match (&self.matrix_v, self.seed_v) {
                    (Some(rows), _) => OrthoMatrix::new(parse_matrix(rows)?)?,
                    (None, Some(seed)) => random_orthogonal(u.nrows(), seed)?,
                    (None, None) => OrthoMatrix::identity(u.nrows()),
                };
                let shifts = self
                    .shifts
                    .clone()
                    .ok_or_else(|| CliError::Malformed("usv: shifts required".into()))?;
                ParsevalModule::Usvh { u, shifts, v }
            }
            "projection" => {
                let channels = self
                    .channels
                    .ok_or_else(|| CliError::Malformed("projection: channels required".into()))?;
                let basis: Vec<DVector<f64>> = match (&self.basis, self.seed, self.rank) {
                    (Some(rows), _, _) => rows
                        .iter()
                        .map(|r| DVector::from_column_slice(r))
                        .collect(),
                    (None, Some(seed), Some(rank)) => {
                        let u = random_orthogonal(channels, seed)?;
                        (0..rank.min(channels))
                            .map(|c| u.matrix().column(c).into_owned())
                            .collect()
                    }
                    _ => {
                        return Err(CliError::Malformed(
                            "projection: need basis, or seed + rank".into(),
                        ))
                    }
                };
                let shift = self.shift.clone().unwrap_or_else(default_shift);
                ParsevalModule::Projection {
                    basis,
                    channels,
                    shift,
                }
            }
            "householder" => {
                let mut unit = match (&self.unit, self.seed) {
                    (Some(u), _) => DVector::from_column_slice(u),
                    (None, Some(seed)) => {
                        let n = self.channels.ok_or_else(|| {
                            CliError::Malformed("householder: channels required with seed".into())
                        })?;
                        random_orthogonal(n, seed)?.matrix().column(0).into_owned()
                    }
                    _ => {
                        return Err(CliError::Malformed(
                            "householder: need unit vector or seed".into(),
                        ))
                    }
                };
                if self.normalize.unwrap_or(false) {
                    let norm = unit.norm();
                    if norm == 0.0 {
                        return Err(CliError::Malformed("householder: zero vector".into()));
                    }
                    unit /= norm;
                }
                let shift = self.shift.clone().unwrap_or_else(default_shift);
                ParsevalModule::Householder { unit, shift }
            }
            other => {
                return Err(CliError::Malformed(format!(
                    "unknown module kind \"{other}\""
                )))
            }
        };
        Ok(ChainElement::Module(module))
    }
}

impl ChainSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let spec: ChainSpec =
            toml::from_str(text).map_err(|e| CliError::Malformed(format!("chain spec: {e}")))?;
        if spec.modules.is_empty() {
            return Err(CliError::Malformed("chain spec lists no modules".into()));
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    fn inferred_dims(&self) -> usize {
        if let Some(d) = self.dims {
            return d;
        }
        for m in &self.modules {
            if let Some(offsets) = &m.offsets {
                if let Some(first) = offsets.first() {
                    return first.len();
                }
            }
            if let Some(shifts) = &m.shifts {
                if let Some(first) = shifts.first() {
                    return first.len();
                }
            }
            if let Some(shift) = &m.shift {
                return shift.len();
            }
        }
        1
    }

    /// Builds the chain elements; `base` resolves relative file references.
    pub fn elements(&self, base: &Path) -> Result<Vec<ChainElement>> {
        let dims = self.inferred_dims();
        if dims == 0 {
            return Err(CliError::Malformed("dims must be positive".into()));
        }
        self.modules
            .iter()
            .enumerate()
            .map(|(i, m)| m.build(i, dims, base))
            .collect()
    }

    /// Compiles the chain to a single filter by folding composition.
    pub fn compile(&self, base: &Path) -> Result<MultiFilter> {
        let elements = self.elements(base)?;
        // pure module chains go through the validated ModuleChain path
        if elements
            .iter()
            .all(|e| matches!(e, ChainElement::Module(_)))
        {
            let modules: Vec<ParsevalModule> = elements
                .into_iter()
                .map(|e| match e {
                    ChainElement::Module(m) => m,
                    ChainElement::Filter(_) => unreachable!(),
                })
                .collect();
            let chain = ModuleChain::new(modules)?;
            return Ok(chain_compile(&chain)?);
        }
        let mut acc: Option<MultiFilter> = None;
        for element in elements {
            let filter = match element {
                ChainElement::Module(m) => m.compile()?,
                ChainElement::Filter(f) => f,
            };
            acc = Some(match acc {
                None => filter,
                Some(prev) => MultiFilter::compose(&filter, &prev)?,
            });
        }
        Ok(acc.unwrap())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use psvb_core::spectral::is_parseval;
    use psvb_core::Grid;

    #[test]
    fn parses_and_compiles_a_2d_chain() {
        let text = r#"
dims = 2

[[module]]
kind = "patch"
channels = 1
offsets = [[0, 0], [0, 1], [1, 0], [1, 1]]

[[module]]
kind = "mult"
size = 4
seed = 7

[[module]]
kind = "householder"
unit = [0.6, 0.8, 0.0, 0.0]
"#;
        let spec = ChainSpec::parse(text).unwrap();
        let filter = spec.compile(Path::new(".")).unwrap();
        assert_eq!(filter.in_channels(), 1);
        assert_eq!(filter.out_channels(), 4);
        let grid = Grid::new(&[8, 8]).unwrap();
        assert!(is_parseval(&filter, &grid, 1e-9).unwrap().passed);
    }

    #[test]
    fn householder_shift_defaults_alternate() {
        let text = r#"
dims = 2

[[module]]
kind = "householder"
channels = 3
seed = 1

[[module]]
kind = "householder"
channels = 3
seed = 2
"#;
        let spec = ChainSpec::parse(text).unwrap();
        let elements = spec.elements(Path::new(".")).unwrap();
        let shifts: Vec<Vec<i64>> = elements
            .iter()
            .map(|e| match e {
                ChainElement::Module(ParsevalModule::Householder { shift, .. }) => shift.clone(),
                _ => panic!("expected householder"),
            })
            .collect();
        assert_eq!(shifts, vec![vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn rejects_unknown_kind_and_empty_chain() {
        assert!(ChainSpec::parse("[[module]]\nkind = \"wavelet\"\n")
            .unwrap()
            .compile(Path::new("."))
            .is_err());
        assert!(ChainSpec::parse("dims = 1\n").is_err());
    }

    #[test]
    fn one_to_n_defaults_to_centered_block() {
        let text = r#"
[[module]]
kind = "one_to_n"
size = 3
seed = 4
"#;
        let spec = ChainSpec::parse(text).unwrap();
        let elements = spec.elements(Path::new(".")).unwrap();
        match &elements[0] {
            ChainElement::Module(ParsevalModule::OneToN { offsets, .. }) => {
                assert_eq!(offsets.offsets(), &[vec![-1], vec![0], vec![1]]);
            }
            _ => panic!("expected one_to_n"),
        }
    }
}
