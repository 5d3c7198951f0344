//! Hadamard matrices: Sylvester powers of two, embedded base matrices, and
//! Kronecker plans combining the two (e.g. 11008 = 64 x 172).
//!
//! Base matrices ship as text assets (`hadamard_<size>.txt`, rows of
//! space-separated `+1`/`-1`). They are normalized so the first row and
//! column are all `+1`, and every table validates `H Hᵀ = n I` exactly in
//! integer arithmetic before use.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use super::TransformError;
use crate::tensor::{kronecker, Matrix};

const EMBEDDED: [(usize, &str); 4] = [
    (12, include_str!("../../assets/hadamard_12.txt")),
    (20, include_str!("../../assets/hadamard_20.txt")),
    (28, include_str!("../../assets/hadamard_28.txt")),
    (172, include_str!("../../assets/hadamard_172.txt")),
];

pub fn asset_file_name(size: usize) -> String {
    format!("hadamard_{size}.txt")
}

/// An unnormalized `±1` square matrix loaded from an asset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseMatrix {
    name: String,
    size: usize,
    signs: Vec<i8>,
}

impl BaseMatrix {
    /// Parses an asset. Only the shape and tokens are checked here; call
    /// [`BaseMatrix::orthogonality_defect`] to validate.
    pub fn parse(name: &str, text: &str) -> Result<Self, TransformError> {
        let bad = |reason: String| TransformError::Asset {
            name: name.to_string(),
            reason,
        };
        let mut signs = Vec::new();
        let mut size = None;
        for (lineno, line) in text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
        {
            let before = signs.len();
            for tok in line.split_whitespace() {
                signs.push(match tok {
                    "+1" | "1" | "+" => 1,
                    "-1" | "-" => -1,
                    other => return Err(bad(format!("line {}: bad token {other:?}", lineno + 1))),
                });
            }
            let width = signs.len() - before;
            match size {
                None => size = Some(width),
                Some(n) if n != width => {
                    return Err(bad(format!(
                        "line {}: expected {n} entries, found {width}",
                        lineno + 1
                    )))
                }
                _ => {}
            }
        }
        let size = size.ok_or_else(|| bad("empty asset".into()))?;
        if signs.len() != size * size {
            return Err(bad(format!(
                "expected {size} rows, found {}",
                signs.len() / size
            )));
        }
        Ok(Self {
            name: name.to_string(),
            size,
            signs,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn sign(&self, row: usize, col: usize) -> i8 {
        self.signs[row * self.size + col]
    }

    /// Largest entry of `|H Hᵀ - n I|`, computed exactly. Zero for a valid
    /// Hadamard matrix.
    pub fn orthogonality_defect(&self) -> i64 {
        let n = self.size;
        let mut worst = 0i64;
        for i in 0..n {
            let ri = &self.signs[i * n..(i + 1) * n];
            for j in i..n {
                let rj = &self.signs[j * n..(j + 1) * n];
                let dot: i64 = ri
                    .iter()
                    .zip(rj)
                    .map(|(a, b)| (*a as i64) * (*b as i64))
                    .sum();
                let expected = if i == j { n as i64 } else { 0 };
                worst = worst.max((dot - expected).abs());
            }
        }
        worst
    }

    fn to_matrix(&self) -> Matrix {
        Matrix::new(
            self.size,
            self.size,
            self.signs.iter().map(|&s| s as f64).collect(),
        )
        .expect("signs are finite")
    }
}

/// Reads every `hadamard_<size>.txt` in `dir` without validating orthogonality.
pub fn read_asset_dir(dir: &Path) -> Result<Vec<BaseMatrix>, TransformError> {
    let mut out = Vec::new();
    let entries = fs::read_dir(dir).map_err(|e| TransformError::Asset {
        name: dir.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut paths: Vec<_> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for path in paths {
        let Some(file) = path.file_name().and_then(|f| f.to_str()) else {
            continue;
        };
        if !(file.starts_with("hadamard_") && file.ends_with(".txt")) {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| TransformError::Asset {
            name: file.to_string(),
            reason: e.to_string(),
        })?;
        out.push(BaseMatrix::parse(file, &text)?);
    }
    Ok(out)
}

/// Parses the assets compiled into the crate.
pub fn embedded_assets() -> Vec<BaseMatrix> {
    EMBEDDED
        .iter()
        .map(|(size, text)| {
            BaseMatrix::parse(&asset_file_name(*size), text).expect("embedded asset parses")
        })
        .collect()
}

/// A validated set of base Hadamard matrices keyed by size.
#[derive(Debug, Clone)]
pub struct HadamardTable {
    bases: BTreeMap<usize, Arc<BaseMatrix>>,
}

impl HadamardTable {
    /// Validates and indexes `bases`. Fails on the first matrix that is not
    /// Hadamard, naming its asset.
    pub fn new(bases: Vec<BaseMatrix>) -> Result<Self, TransformError> {
        let mut map = BTreeMap::new();
        for base in bases {
            let defect = base.orthogonality_defect();
            if defect != 0 {
                return Err(TransformError::Asset {
                    name: base.name.clone(),
                    reason: format!("H Hᵀ differs from {} I by up to {defect}", base.size),
                });
            }
            if base.size < 2 || base.size % 4 != 0 {
                return Err(TransformError::Asset {
                    name: base.name.clone(),
                    reason: format!("size {} is not a multiple of 4", base.size),
                });
            }
            map.insert(base.size, Arc::new(base));
        }
        Ok(Self { bases: map })
    }

    /// Table with no base matrices; supports powers of two only.
    pub fn sylvester_only() -> Self {
        Self {
            bases: BTreeMap::new(),
        }
    }

    pub fn from_dir(dir: &Path) -> Result<Self, TransformError> {
        Self::new(read_asset_dir(dir)?)
    }

    /// The process-wide table built from the compiled-in assets.
    pub fn embedded() -> &'static HadamardTable {
        static TABLE: OnceLock<HadamardTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            HadamardTable::new(embedded_assets()).expect("embedded Hadamard assets are valid")
        })
    }

    pub fn base_sizes(&self) -> Vec<usize> {
        self.bases.keys().copied().collect()
    }

    pub fn base(&self, size: usize) -> Option<&Arc<BaseMatrix>> {
        self.bases.get(&size)
    }

    pub fn plan(&self, size: usize) -> Result<HadamardPlan, TransformError> {
        if size == 0 {
            return Err(TransformError::UnsupportedSize(size));
        }
        if size.is_power_of_two() {
            let p = size.trailing_zeros() as usize;
            return Ok(HadamardPlan {
                size,
                factors: vec![2; p],
                base: None,
            });
        }
        // A base of size m fits when m divides `size` and the quotient is a
        // power of two.
        let base = self
            .bases
            .keys()
            .copied()
            .find(|&m| size.is_multiple_of(m) && (size / m).is_power_of_two())
            .ok_or(TransformError::UnsupportedSize(size))?;
        let pow2 = size / base;
        let factors = if pow2 > 1 {
            vec![pow2, base]
        } else {
            vec![base]
        };
        Ok(HadamardPlan {
            size,
            factors,
            base: Some(base),
        })
    }

    /// Dense orthogonal Hadamard matrix `R` of the given size, entries `±1/√size`.
    pub fn hadamard(&self, size: usize) -> Result<Matrix, TransformError> {
        let plan = self.plan(size)?;
        let seed = Matrix::from_rows(&[[1.0, 1.0], [1.0, -1.0]])?;
        let mut signs = Matrix::from_rows(&[[1.0]])?;
        for _ in 0..plan.power_of_two().trailing_zeros() {
            signs = kronecker(&seed, &signs)?;
        }
        if let Some(m) = plan.base {
            signs = kronecker(&signs, &self.bases[&m].to_matrix())?;
        }
        let c = 1.0 / (size as f64).sqrt();
        Ok(signs.scale(c)?)
    }

    /// Fast structured rotation for the given size.
    pub fn rotation(&self, size: usize) -> Result<HadamardRotation, TransformError> {
        let plan = self.plan(size)?;
        Ok(HadamardRotation {
            size,
            pow2: plan.power_of_two(),
            base: plan.base.map(|m| Arc::clone(&self.bases[&m])),
            scale: 1.0 / (size as f64).sqrt(),
        })
    }
}

/// How a Hadamard matrix of `size` is assembled.
///
/// Powers of two list one `2` per Sylvester doubling. Composite sizes list
/// the power-of-two block followed by the embedded base, so
/// `R = R_pow2 ⊗ R_base` (e.g. `[64, 172]` for 11008).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HadamardPlan {
    pub size: usize,
    pub factors: Vec<usize>,
    base: Option<usize>,
}

impl HadamardPlan {
    pub fn base_size(&self) -> Option<usize> {
        self.base
    }

    pub fn power_of_two(&self) -> usize {
        self.size / self.base.unwrap_or(1)
    }
}

/// Dense Hadamard matrix from the embedded table.
pub fn hadamard(size: usize) -> Result<Matrix, TransformError> {
    HadamardTable::embedded().hadamard(size)
}

pub fn hadamard_plan(size: usize) -> Result<HadamardPlan, TransformError> {
    HadamardTable::embedded().plan(size)
}

/// Applies `R = (H_pow2 ⊗ H_base) / √d` without materializing it.
///
/// A row `x` is viewed as `pow2` blocks of `base` entries. Each block is
/// multiplied by the base matrix, then a fast Walsh-Hadamard butterfly runs
/// across blocks. Cost per row is `O(d (base + log pow2))`.
#[derive(Debug, Clone)]
pub struct HadamardRotation {
    size: usize,
    pow2: usize,
    base: Option<Arc<BaseMatrix>>,
    scale: f64,
}

impl HadamardRotation {
    pub fn size(&self) -> usize {
        self.size
    }

    /// In-place `x ← x R` for one row.
    pub fn apply_row(&self, x: &mut [f64], scratch: &mut Vec<f64>) {
        assert_eq!(x.len(), self.size, "row length must equal rotation size");
        let m = self.base.as_ref().map_or(1, |b| b.size());
        if let Some(base) = &self.base {
            scratch.resize(m, 0.0);
            for block in x.chunks_exact_mut(m) {
                scratch.iter_mut().for_each(|s| *s = 0.0);
                for (k, &v) in block.iter().enumerate() {
                    if v == 0.0 {
                        continue;
                    }
                    let signs = &base.signs[k * m..(k + 1) * m];
                    for (s, &h) in scratch.iter_mut().zip(signs) {
                        if h > 0 {
                            *s += v;
                        } else {
                            *s -= v;
                        }
                    }
                }
                block.copy_from_slice(scratch);
            }
        }
        let mut h = 1;
        while h < self.pow2 {
            for start in (0..self.pow2).step_by(2 * h) {
                for a in start..start + h {
                    let (lo, hi) = (a * m, (a + h) * m);
                    for l in 0..m {
                        let u = x[lo + l];
                        let v = x[hi + l];
                        x[lo + l] = u + v;
                        x[hi + l] = u - v;
                    }
                }
            }
            h *= 2;
        }
        for v in x.iter_mut() {
            *v *= self.scale;
        }
    }

    pub fn rotate_vector(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        self.apply_row(&mut out, &mut Vec::new());
        out
    }

    /// `X R`.
    pub fn rotate_rows(&self, x: &Matrix) -> Result<Matrix, TransformError> {
        if x.cols() != self.size {
            return Err(crate::tensor::TensorError::Shape {
                op: "rotate_rows",
                left: x.shape(),
                right: (self.size, self.size),
            }
            .into());
        }
        let mut data = x.as_slice().to_vec();
        let mut scratch = Vec::new();
        for row in data.chunks_exact_mut(self.size) {
            self.apply_row(row, &mut scratch);
        }
        Ok(Matrix::new(x.rows(), x.cols(), data)?)
    }

    /// `Rᵀ W`, computed as `(Wᵀ R)ᵀ`.
    pub fn rotate_weight(&self, w: &Matrix) -> Result<Matrix, TransformError> {
        if w.rows() != self.size {
            return Err(crate::tensor::TensorError::Shape {
                op: "rotate_weight",
                left: (self.size, self.size),
                right: w.shape(),
            }
            .into());
        }
        Ok(self.rotate_rows(&w.transpose())?.transpose())
    }
}
