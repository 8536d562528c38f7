//! Dense spatial field tensors.
//!
//! [`FieldTensor`] is the H×W×C carrier used throughout the library for task
//! states, evidence, references and bridges. [`ScalarField`] is its H×W
//! single-channel counterpart (similarity maps, variation maps, gates), and
//! [`PrecisionField`] is a `ScalarField` whose values are guaranteed strictly
//! positive.
//!
//! All three are immutable values: operations return new fields and never
//! mutate their inputs, so instances can be shared freely across threads.
//! Data is stored row-major in `(y, x, c)` order as `f64`.

use crate::error::{Error, Result};

/// Elementwise binary operation selector for [`FieldTensor::binop`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

/// Dense H×W×C tensor of 64-bit floats, row-major in `(y, x, c)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FieldTensor {
    /// Builds a tensor with every entry equal to `fill`.
    pub fn filled(height: usize, width: usize, channels: usize, fill: f64) -> Result<Self> {
        check_dims(height, width, channels)?;
        if !fill.is_finite() {
            return Err(Error::Dimension {
                message: format!("fill value {fill} is not finite"),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data: vec![fill; height * width * channels],
        })
    }

    /// Builds a tensor from row-major data, validating length and finiteness.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, channels)?;
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::Dimension {
                message: format!(
                    "data length {} does not match {height}x{width}x{channels} = {expected}",
                    data.len()
                ),
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Dimension {
                message: format!("non-finite entry {v} in tensor data"),
            });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Internal constructor for operation results; skips the finite scan.
    pub(crate) fn from_op(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
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

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(y, x, c)]
    }

    /// Elementwise add/sub/mul of two equally shaped tensors.
    pub fn binop(&self, other: &Self, op: BinOp) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(shape_mismatch("tensor_binop", self.shape(), other.shape()));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
            })
            .collect();
        Ok(Self::from_op(self.height, self.width, self.channels, data))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.binop(other, BinOp::Add)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.binop(other, BinOp::Sub)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.binop(other, BinOp::Mul)
    }

    /// Scales every channel at `(y, x)` by `s(y, x)`.
    pub fn scale_by(&self, s: &ScalarField) -> Result<Self> {
        if (self.height, self.width) != (s.height, s.width) {
            return Err(shape_mismatch(
                "broadcast_scale",
                self.shape(),
                (s.height, s.width, 1),
            ));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in 0..self.width {
                let f = s.get(y, x);
                for c in 0..self.channels {
                    data.push(self.get(y, x, c) * f);
                }
            }
        }
        Ok(Self::from_op(self.height, self.width, self.channels, data))
    }

    /// Applies `f` to every entry.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self::from_op(
            self.height,
            self.width,
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// Frobenius norm over all entries, summed in index order.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// True when `self` and `other` share the same spatial extent.
    pub fn same_spatial(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }
}

/// Dense H×W map of 64-bit floats, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn filled(height: usize, width: usize, fill: f64) -> Result<Self> {
        check_dims(height, width, 1)?;
        Ok(Self {
            height,
            width,
            data: vec![fill; height * width],
        })
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(height, width, 1)?;
        if data.len() != height * width {
            return Err(Error::Dimension {
                message: format!(
                    "data length {} does not match {height}x{width}",
                    data.len()
                ),
            });
        }
        if let Some(v) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Dimension {
                message: format!("non-finite entry {v} in field data"),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub(crate) fn from_op(height: usize, width: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), height * width);
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn index(&self, y: usize, x: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[self.index(y, x)]
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self::from_op(
            self.height,
            self.width,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }

    /// Single-channel view of this field as a tensor.
    pub fn to_tensor(&self) -> FieldTensor {
        FieldTensor::from_op(self.height, self.width, 1, self.data.clone())
    }
}

/// Strictly positive per-location precision map.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecisionField(ScalarField);

impl PrecisionField {
    /// Wraps a scalar field, rejecting any entry that is not strictly positive.
    pub fn new(field: ScalarField) -> Result<Self> {
        if let Some(v) = field.data.iter().find(|v| !v.is_finite() || **v <= 0.0) {
            return Err(Error::parameter(
                "precision",
                format!("precision entries must be > 0, found {v}"),
            ));
        }
        Ok(Self(field))
    }

    pub fn as_field(&self) -> &ScalarField {
        &self.0
    }

    pub fn into_field(self) -> ScalarField {
        self.0
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.0.get(y, x)
    }

    pub fn height(&self) -> usize {
        self.0.height
    }

    pub fn width(&self) -> usize {
        self.0.width
    }

    pub fn data(&self) -> &[f64] {
        self.0.data()
    }

    /// Multiplies every entry by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !factor.is_finite() || factor <= 0.0 {
            return Err(Error::parameter(
                "factor",
                format!("scale factor must be finite and > 0, got {factor}"),
            ));
        }
        Self::new(self.0.map(|v| v * factor))
    }
}

fn check_dims(height: usize, width: usize, channels: usize) -> Result<()> {
    if height == 0 || width == 0 || channels == 0 {
        return Err(Error::Dimension {
            message: format!("dimensions must be >= 1, got {height}x{width}x{channels}"),
        });
    }
    Ok(())
}

pub(crate) fn shape_mismatch(
    context: &'static str,
    expected: (usize, usize, usize),
    actual: (usize, usize, usize),
) -> Error {
    Error::ShapeMismatch {
        context,
        expected: format!("{}x{}x{}", expected.0, expected.1, expected.2),
        actual: format!("{}x{}x{}", actual.0, actual.1, actual.2),
    }
}

/// Sums `values` after sorting them into a canonical order, so the result
/// does not depend on the caller's argument order. Used wherever per-task
/// contributions are reduced and task-permutation invariance must be exact.
pub(crate) fn sum_value_ordered(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    values.iter().sum()
}
