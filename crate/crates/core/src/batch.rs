//! Two-dimensional (I/Q) points and row-major batches of them.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A complex baseband sample as a real 2-vector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub i: f64,
    pub q: f64,
}

impl Point2 {
    pub const fn new(i: f64, q: f64) -> Self {
        Self { i, q }
    }

    pub fn norm_sqr(self) -> f64 {
        self.i * self.i + self.q * self.q
    }

    pub fn dist_sqr(self, other: Point2) -> f64 {
        let di = self.i - other.i;
        let dq = self.q - other.q;
        di * di + dq * dq
    }
}

/// An `N x 2` matrix of points, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBatch {
    data: Array2<f64>,
}

impl SymbolBatch {
    /// Wraps an `N x 2` array, rejecting empty, mis-shaped or non-finite input.
    pub fn from_array(data: Array2<f64>) -> Result<Self> {
        if data.ncols() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "symbol batch must have 2 columns, got {}",
                data.ncols()
            )));
        }
        if data.nrows() == 0 {
            return Err(Error::ShapeMismatch("symbol batch must be non-empty".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("symbol batch"));
        }
        Ok(Self { data })
    }

    pub fn from_points(points: &[Point2]) -> Result<Self> {
        let flat: Vec<f64> = points.iter().flat_map(|p| [p.i, p.q]).collect();
        let data = Array2::from_shape_vec((points.len(), 2), flat)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::from_array(data)
    }

    pub fn from_rows(rows: &[[f64; 2]]) -> Result<Self> {
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data =
            Array2::from_shape_vec((rows.len(), 2), flat).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::from_array(data)
    }

    pub fn zeros(n: usize) -> Result<Self> {
        Self::from_array(Array2::zeros((n, 2)))
    }

    /// Internal constructor for arrays already known to be well formed.
    pub(crate) fn from_array_unchecked(data: Array2<f64>) -> Self {
        debug_assert_eq!(data.ncols(), 2);
        Self { data }
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn point(&self, row: usize) -> Point2 {
        Point2::new(self.data[[row, 0]], self.data[[row, 1]])
    }

    pub fn points(&self) -> impl Iterator<Item = Point2> + '_ {
        self.data.axis_iter(Axis(0)).map(|r| Point2::new(r[0], r[1]))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    pub(crate) fn ensure_same_shape(&self, other: &SymbolBatch, what: &str) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::ShapeMismatch(format!(
                "{what}: batch sizes {} and {} differ",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    /// Concatenates batches in order.
    pub fn concat(parts: &[SymbolBatch]) -> Result<Self> {
        let views: Vec<_> = parts.iter().map(|p| p.data.view()).collect();
        let data = ndarray::concatenate(Axis(0), &views).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
        Self::from_array(data)
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &SymbolBatch) -> f64 {
        self.data.iter().zip(other.data.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}
