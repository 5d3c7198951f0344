//! Equivalent transformations of a layer `(X, W)`.
//!
//! Every transform picks an invertible `A` and returns `(X A, A⁻¹ W)`, so the
//! product `X W` is unchanged up to rounding:
//!
//! * smoothing: `A⁻¹ = diag(s)` with `s_j = max|X_j|^α / max|W_j|^(1-α)`;
//! * rotation: `A = R`, a normalized Hadamard matrix, so `A⁻¹ = Rᵀ`;
//! * smooth-rotate: smoothing followed by rotation of the smoothed pair.
//!
//! Smoothing statistics come from the `X` being transformed; nothing is
//! calibrated ahead of time.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::tensor::{frobenius_norm, matmul, Matrix, TensorError};

pub mod hadamard;

pub use hadamard::{hadamard, hadamard_plan, HadamardPlan, HadamardRotation, HadamardTable};

/// Default migration strength.
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Floor for channel maxima in the smoothing scale.
pub const DEFAULT_EPSILON_CLAMP: f64 = 1e-8;
/// Bound on `‖R Rᵀ - I‖_F` accepted by [`apply_rotation`].
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("migration strength must be in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("epsilon clamp must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("smoothing scale for channel {channel} must be positive and finite, got {value}")]
    NonPositiveScale { channel: usize, value: f64 },
    #[error("expected {expected} smoothing scales, got {got}")]
    ScaleLength { expected: usize, got: usize },
    #[error("no known Hadamard decomposition for size {0}")]
    UnsupportedSize(usize),
    #[error("rotation is not orthogonal: ‖R Rᵀ - I‖_F = {residual:e}")]
    NotOrthogonal { residual: f64 },
    #[error("Hadamard asset {name}: {reason}")]
    Asset { name: String, reason: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TransformKind {
    None,
    Smooth,
    Rotate,
    SmoothRotate,
}

impl TransformKind {
    pub const ALL: [TransformKind; 4] = [
        TransformKind::None,
        TransformKind::Smooth,
        TransformKind::Rotate,
        TransformKind::SmoothRotate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::None => "none",
            TransformKind::Smooth => "smooth",
            TransformKind::Rotate => "rotate",
            TransformKind::SmoothRotate => "smooth-rotate",
        }
    }
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for TransformKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(TransformKind::None),
            "smooth" => Ok(TransformKind::Smooth),
            "rotate" => Ok(TransformKind::Rotate),
            "smooth-rotate" | "smooth_rotate" | "smoothrotate" => Ok(TransformKind::SmoothRotate),
            other => Err(format!(
                "unknown transform {other:?}; expected one of none, smooth, rotate, smooth-rotate"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformSpec {
    pub kind: TransformKind,
    alpha: f64,
    epsilon_clamp: f64,
}

impl TransformSpec {
    pub fn new(kind: TransformKind, alpha: f64) -> Result<Self, TransformError> {
        Self::with_clamp(kind, alpha, DEFAULT_EPSILON_CLAMP)
    }

    pub fn with_clamp(
        kind: TransformKind,
        alpha: f64,
        epsilon_clamp: f64,
    ) -> Result<Self, TransformError> {
        validate_alpha(alpha)?;
        if !(epsilon_clamp > 0.0 && epsilon_clamp.is_finite()) {
            return Err(TransformError::InvalidEpsilon(epsilon_clamp));
        }
        Ok(Self {
            kind,
            alpha,
            epsilon_clamp,
        })
    }

    /// Spec with the default `α = 0.5`.
    pub fn of(kind: TransformKind) -> Self {
        Self {
            kind,
            alpha: DEFAULT_ALPHA,
            epsilon_clamp: DEFAULT_EPSILON_CLAMP,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn epsilon_clamp(&self) -> f64 {
        self.epsilon_clamp
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self, TransformError> {
        Self::with_clamp(self.kind, alpha, self.epsilon_clamp)
    }
}

fn validate_alpha(alpha: f64) -> Result<(), TransformError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(TransformError::InvalidAlpha(alpha))
    }
}

fn check_pair(op: &'static str, x: &Matrix, w: &Matrix) -> Result<(), TensorError> {
    if x.cols() != w.rows() {
        return Err(TensorError::Shape {
            op,
            left: x.shape(),
            right: w.shape(),
        });
    }
    Ok(())
}

/// Per-channel smoothing factors `s_j = max|X_j|^α / max|W_j|^(1-α)`.
///
/// `X_j` is column `j` of `X` and `W_j` is row `j` of `W`. Maxima below
/// `epsilon_clamp` are replaced by the clamp.
pub fn smoothing_scale(
    x: &Matrix,
    w: &Matrix,
    alpha: f64,
    epsilon_clamp: f64,
) -> Result<Vec<f64>, TransformError> {
    check_pair("smoothing_scale", x, w)?;
    validate_alpha(alpha)?;
    if epsilon_clamp.is_nan() || epsilon_clamp <= 0.0 {
        return Err(TransformError::InvalidEpsilon(epsilon_clamp));
    }
    let x_max = x.column_max_abs();
    let w_max = w.row_max_abs();
    Ok(x_max
        .iter()
        .zip(&w_max)
        .map(|(&xm, &wm)| {
            let xm = xm.max(epsilon_clamp);
            let wm = wm.max(epsilon_clamp);
            xm.powf(alpha) / wm.powf(1.0 - alpha)
        })
        .collect())
}

/// Divides column `j` of `X` by `s_j` and multiplies row `j` of `W` by `s_j`.
pub fn apply_smoothing(
    x: &Matrix,
    w: &Matrix,
    s: &[f64],
) -> Result<(Matrix, Matrix), TransformError> {
    check_pair("apply_smoothing", x, w)?;
    if s.len() != x.cols() {
        return Err(TransformError::ScaleLength {
            expected: x.cols(),
            got: s.len(),
        });
    }
    if let Some((channel, &value)) = s
        .iter()
        .enumerate()
        .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
    {
        return Err(TransformError::NonPositiveScale { channel, value });
    }
    let xs: Vec<f64> = x
        .rows_iter()
        .flat_map(|row| row.iter().zip(s).map(|(v, sj)| v / sj))
        .collect();
    let ws: Vec<f64> = w
        .rows_iter()
        .zip(s)
        .flat_map(|(row, sj)| row.iter().map(move |v| v * sj))
        .collect();
    Ok((
        Matrix::new(x.rows(), x.cols(), xs)?,
        Matrix::new(w.rows(), w.cols(), ws)?,
    ))
}

/// Smooths with factors computed from `(X, W)` at `spec.alpha()`.
pub fn smooth(
    x: &Matrix,
    w: &Matrix,
    spec: &TransformSpec,
) -> Result<(Matrix, Matrix), TransformError> {
    let s = smoothing_scale(x, w, spec.alpha, spec.epsilon_clamp)?;
    apply_smoothing(x, w, &s)
}

/// `(X R, Rᵀ W)` for an arbitrary dense orthogonal `R`.
pub fn apply_rotation(
    x: &Matrix,
    w: &Matrix,
    r: &Matrix,
) -> Result<(Matrix, Matrix), TransformError> {
    check_pair("apply_rotation", x, w)?;
    if r.rows() != r.cols() || r.rows() != x.cols() {
        return Err(TensorError::Shape {
            op: "apply_rotation",
            left: x.shape(),
            right: r.shape(),
        }
        .into());
    }
    let residual = frobenius_norm(&matmul(r, &r.transpose())?.sub(&Matrix::identity(r.rows())?)?);
    if residual > ORTHOGONALITY_TOLERANCE {
        return Err(TransformError::NotOrthogonal { residual });
    }
    Ok((matmul(x, r)?, matmul(&r.transpose(), w)?))
}

/// Hadamard rotation of size `c_in` from the embedded table.
pub fn rotate(x: &Matrix, w: &Matrix) -> Result<(Matrix, Matrix), TransformError> {
    rotate_with(HadamardTable::embedded(), x, w)
}

pub fn rotate_with(
    table: &HadamardTable,
    x: &Matrix,
    w: &Matrix,
) -> Result<(Matrix, Matrix), TransformError> {
    check_pair("rotate", x, w)?;
    let rot = table.rotation(x.cols())?;
    Ok((rot.rotate_rows(x)?, rot.rotate_weight(w)?))
}

/// Smoothing at `spec.alpha()` followed by Hadamard rotation of the smoothed pair.
pub fn smooth_rotate(
    x: &Matrix,
    w: &Matrix,
    spec: &TransformSpec,
) -> Result<(Matrix, Matrix), TransformError> {
    let (xs, ws) = smooth(x, w, spec)?;
    rotate(&xs, &ws)
}

/// Dispatches on `spec.kind`.
pub fn apply_transform(
    x: &Matrix,
    w: &Matrix,
    spec: &TransformSpec,
) -> Result<(Matrix, Matrix), TransformError> {
    match spec.kind {
        TransformKind::None => {
            check_pair("apply_transform", x, w)?;
            Ok((x.clone(), w.clone()))
        }
        TransformKind::Smooth => smooth(x, w, spec),
        TransformKind::Rotate => rotate(x, w),
        TransformKind::SmoothRotate => smooth_rotate(x, w, spec),
    }
}

/// Relative residual `‖X W - X̂ Ŵ‖_F / ‖X W‖_F`.
pub fn verify_equivalence(
    x: &Matrix,
    w: &Matrix,
    xt: &Matrix,
    wt: &Matrix,
) -> Result<f64, TransformError> {
    let y = matmul(x, w)?;
    let yt = matmul(xt, wt)?;
    let diff = frobenius_norm(&y.sub(&yt)?);
    Ok(diff / frobenius_norm(&y).max(f64::MIN_POSITIVE))
}
