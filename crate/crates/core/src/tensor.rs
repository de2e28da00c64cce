//! Dense rank-3 tensor (height x width x channels), row-major, channel-last.
//!
//! This layout makes the token-matrix view of the latent free: flattening to
//! an `(h*w) x c` matrix is a reinterpretation of the same buffer.

use std::fmt;

use crate::error::{Error, Result};
use crate::Scalar;

/// A spatial extent in pixels or latent cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape2D {
    pub height: usize,
    pub width: usize,
}

impl Shape2D {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("shape", "height and width must be >= 1"));
        }
        Ok(Shape2D { height, width })
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn aspect_ratio(&self) -> f64 {
        self.height as f64 / self.width as f64
    }
}

impl fmt::Display for Shape2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// Dense rank-3 array of scalars. Immutable after construction; all public
/// constructors reject non-finite elements and dimension/data mismatches.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<F>,
}

/// Summary statistics of a tensor, accumulated in double precision.
#[derive(Clone, Copy, Debug)]
pub struct TensorStats {
    pub mean: f64,
    pub var: f64,
    pub min: f64,
    pub max: f64,
}

impl<F: Scalar> Tensor<F> {
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<F>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::invalid("tensor", "all dimensions must be >= 1"));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::invalid(
                "tensor",
                format!(
                    "data length {} does not match {height}x{width}x{channels} = {expected}",
                    data.len()
                ),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "tensor data" });
        }
        Ok(Tensor { height, width, channels, data })
    }

    /// Constructor for values produced by internal arithmetic. Finiteness is
    /// checked only under debug assertions.
    pub(crate) fn from_vec_unchecked(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<F>,
    ) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        debug_assert!(
            data.iter().all(|v| v.is_finite()),
            "internal op produced non-finite values"
        );
        Tensor { height, width, channels, data }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: F) -> Result<Self> {
        Self::from_vec(height, width, channels, vec![value; height * width * channels])
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, F::zero())
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> F,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self::from_vec(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> Shape2D {
        Shape2D { height: self.height, width: self.width }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // dimensions are >= 1 by construction
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> F {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// Token-matrix view: row `r*w + c` holds the channel vector of spatial
    /// cell `(r, c)`. The inverse is [`Matrix::unflatten`], bitwise exact.
    pub fn flatten(&self) -> Matrix<F> {
        Matrix {
            rows: self.height * self.width,
            cols: self.channels,
            data: self.data.clone(),
        }
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Tensor<F> {
        let data = self.data.iter().map(|&v| f(v)).collect();
        Tensor::from_vec_unchecked(self.height, self.width, self.channels, data)
    }

    pub fn zip_map(&self, other: &Tensor<F>, f: impl Fn(F, F) -> F) -> Result<Tensor<F>> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor::from_vec_unchecked(
            self.height,
            self.width,
            self.channels,
            data,
        ))
    }

    pub fn check_same_shape(&self, other: &Tensor<F>) -> Result<()> {
        if (self.height, self.width, self.channels)
            != (other.height, other.width, other.channels)
        {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}x{}", self.height, self.width, self.channels),
                got: format!("{}x{}x{}", other.height, other.width, other.channels),
            });
        }
        Ok(())
    }

    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        let data = self
            .data
            .iter()
            .map(|v| G::from_f64_lossy(v.to_f64().unwrap()))
            .collect();
        Tensor::from_vec_unchecked(self.height, self.width, self.channels, data)
    }

    pub fn stats(&self) -> TensorStats {
        let n = self.data.len() as f64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for v in &self.data {
            let x = v.to_f64().unwrap();
            sum += x;
            sum_sq += x * x;
            min = min.min(x);
            max = max.max(x);
        }
        let mean = sum / n;
        TensorStats {
            mean,
            var: (sum_sq / n - mean * mean).max(0.0),
            min,
            max,
        }
    }
}

/// Row-major matrix, the flattened-token view of a [`Tensor`].
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<F>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> F {
        self.data[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[F] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    /// Reshape back to a spatial tensor; inverse of [`Tensor::flatten`].
    pub fn unflatten(self, height: usize, width: usize) -> Result<Tensor<F>> {
        if height * width != self.rows {
            return Err(Error::ShapeMismatch {
                expected: format!("{} token rows", self.rows),
                got: format!("{height}x{width}"),
            });
        }
        Ok(Tensor {
            height,
            width,
            channels: self.cols,
            data: self.data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_flatten() {
        let t = Tensor::from_vec(1, 1, 3, vec![1.0f32, 2.0, 3.0]).unwrap();
        let m = t.flatten();
        assert_eq!(m.rows(), 1);
        assert_eq!(m.cols(), 3);
        assert_eq!(m.row(0), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn flatten_preserves_row_major_order() {
        let t = Tensor::from_vec(2, 2, 1, vec![10.0f32, 11.0, 12.0, 13.0]).unwrap();
        let m = t.flatten();
        assert_eq!(m.rows(), 4);
        // row index = r*w + c
        assert_eq!(m.get(0, 0), 10.0);
        assert_eq!(m.get(1, 0), 11.0);
        assert_eq!(m.get(2, 0), 12.0);
        assert_eq!(m.get(3, 0), 13.0);
    }

    #[test]
    fn flatten_round_trip_is_bitwise() {
        // fixed pseudo-random 3x4x2 content
        let data: Vec<f32> = (0..24).map(|i| ((i * 2654435761u64 % 1000) as f32) / 250.0 - 2.0).collect();
        let t = Tensor::from_vec(3, 4, 2, data).unwrap();
        let back = t.flatten().unflatten(3, 4).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn rejects_bad_length_and_nonfinite() {
        assert!(Tensor::from_vec(2, 2, 1, vec![0.0f32; 3]).is_err());
        assert!(Tensor::from_vec(1, 1, 1, vec![f32::NAN]).is_err());
        assert!(Tensor::from_vec(0, 1, 1, Vec::<f32>::new()).is_err());
    }

    #[test]
    fn stats_of_known_tensor() {
        let t = Tensor::from_vec(1, 2, 2, vec![0.0f64, 1.0, 2.0, 3.0]).unwrap();
        let s = t.stats();
        assert!((s.mean - 1.5).abs() < 1e-12);
        assert!((s.var - 1.25).abs() < 1e-12);
        assert_eq!(s.min, 0.0);
        assert_eq!(s.max, 3.0);
    }
}
