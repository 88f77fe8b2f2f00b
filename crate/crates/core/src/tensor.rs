//! Dense `T x H x W x C` video tensors.
//!
//! Samples are stored row-major as `[t][y][x][c]` in `f64`. The on-disk format
//! narrows to `f32` (see [`crate::io::fdt`]).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tensor dimensions `(frames, height, width, channels)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Dims {
    pub const fn new(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        Self {
            frames,
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.frames * self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of samples in one frame.
    pub fn frame_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    /// Number of spatial positions in one frame.
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::invalid(format!("zero-sized tensor dims {self}")));
        }
        Ok(())
    }

    /// Same frame grid with a different channel count.
    pub fn with_channels(&self, channels: usize) -> Self {
        Self { channels, ..*self }
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{}x{}x{}",
            self.frames, self.height, self.width, self.channels
        )
    }
}

/// A video (or any per-voxel field) of finite real samples.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoTensor {
    dims: Dims,
    data: Vec<f64>,
}

impl VideoTensor {
    /// Builds a tensor, checking the length and that every sample is finite.
    pub fn new(dims: Dims, data: Vec<f64>) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(Error::invalid(format!(
                "data length {} does not match dims {dims}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite sample at index {i}")));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Dims) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: Dims, value: f64) -> Result<Self> {
        dims.validate()?;
        Ok(Self {
            dims,
            data: vec![value; dims.len()],
        })
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Result<Self> {
        dims.validate()?;
        let mut data = Vec::with_capacity(dims.len());
        for t in 0..dims.frames {
            for y in 0..dims.height {
                for x in 0..dims.width {
                    for c in 0..dims.channels {
                        data.push(f(t, y, x, c));
                    }
                }
            }
        }
        Self::new(dims, data)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, t: usize, y: usize, x: usize, c: usize) -> usize {
        let d = &self.dims;
        ((t * d.height + y) * d.width + x) * d.channels + c
    }

    #[inline]
    pub fn get(&self, t: usize, y: usize, x: usize, c: usize) -> f64 {
        self.data[self.index(t, y, x, c)]
    }

    /// Samples of frame `t`, laid out `[y][x][c]`.
    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.dims.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn is_compatible(&self, other: &VideoTensor) -> bool {
        self.dims == other.dims
    }

    pub fn check_compatible(&self, other: &VideoTensor) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                left: self.dims.to_string(),
                right: other.dims.to_string(),
            })
        }
    }

    /// Elementwise map. The result is not re-checked for finiteness; callers
    /// that may produce non-finite values go through [`VideoTensor::new`].
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> VideoTensor {
        VideoTensor {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &VideoTensor, f: impl Fn(f64, f64) -> f64) -> Result<VideoTensor> {
        self.check_compatible(other)?;
        Ok(VideoTensor {
            dims: self.dims,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &VideoTensor) -> Result<VideoTensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &VideoTensor) -> Result<VideoTensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, s: f64) -> VideoTensor {
        self.map(|v| v * s)
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Euclidean norm over all samples.
    pub fn norm(&self) -> f64 {
        self.sum_squares().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &VideoTensor) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Bitwise equality of the sample buffers.
    pub fn bit_eq(&self, other: &VideoTensor) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    pub(crate) fn from_parts_unchecked(dims: Dims, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.len(), data.len());
        Self { dims, data }
    }
}

/// Elementwise mean of shape-compatible tensors.
///
/// Sums are formed by pairwise (tree) reduction in index order, so the result
/// only depends on the order of `tensors`, not on how they were produced.
pub fn pairwise_mean(tensors: &[&VideoTensor]) -> Result<VideoTensor> {
    let first = tensors
        .first()
        .ok_or_else(|| Error::invalid("mean of an empty tensor list"))?;
    for t in &tensors[1..] {
        first.check_compatible(t)?;
    }
    let n = tensors.len() as f64;
    let len = first.len();
    let mut out = Vec::with_capacity(len);
    let mut scratch = Vec::with_capacity(tensors.len());
    for i in 0..len {
        scratch.clear();
        scratch.extend(tensors.iter().map(|t| t.data[i]));
        out.push(pairwise_sum(&scratch) / n);
    }
    Ok(VideoTensor::from_parts_unchecked(first.dims, out))
}

fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let mid = n.div_ceil(2);
            pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dims_and_bad_length() {
        assert!(VideoTensor::zeros(Dims::new(0, 1, 1, 1)).is_err());
        assert!(VideoTensor::new(Dims::new(1, 1, 2, 1), vec![0.0]).is_err());
        assert!(VideoTensor::new(Dims::new(1, 1, 1, 1), vec![f64::NAN]).is_err());
    }

    #[test]
    fn row_major_layout() {
        let d = Dims::new(2, 3, 4, 2);
        let v = VideoTensor::from_fn(d, |t, y, x, c| (t * 1000 + y * 100 + x * 10 + c) as f64).unwrap();
        assert_eq!(v.get(1, 2, 3, 1), 1231.0);
        assert_eq!(v.data()[v.index(1, 2, 3, 1)], 1231.0);
        assert_eq!(v.frame(1)[0], 1000.0);
    }

    #[test]
    fn pairwise_mean_matches_naive() {
        let d = Dims::new(1, 2, 2, 1);
        let ts: Vec<VideoTensor> = (0..5)
            .map(|k| VideoTensor::from_fn(d, |_, y, x, _| (k * 3 + y * 2 + x) as f64 * 0.1).unwrap())
            .collect();
        let refs: Vec<&VideoTensor> = ts.iter().collect();
        let m = pairwise_mean(&refs).unwrap();
        for i in 0..d.len() {
            let naive: f64 = ts.iter().map(|t| t.data()[i]).sum::<f64>() / 5.0;
            assert!((m.data()[i] - naive).abs() < 1e-12);
        }
        assert!(pairwise_mean(&[]).is_err());
    }
}
