//! Spatially attentive flow correction.
//!
//! Attention maps for the source and target conditions are smoothed,
//! thresholded at their global mean, OR-ed together and optionally feathered
//! with `exp(-delta * distance)`. The resulting mask multiplies the editing
//! velocity so that voxels outside the edit region receive zero velocity.

mod edt;

use std::collections::BTreeMap;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::condition::Condition;
use crate::error::{Error, Result};
use crate::fields::VelocityField;
use crate::rng::{self, Domain, SeedSpec};
use crate::tensor::{Dims, VideoTensor};

pub use edt::squared_edt;

/// Nonnegative `T x H x W` attention values.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    dims: Dims,
    values: Vec<f64>,
}

impl AttentionMap {
    pub fn new(frames: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let dims = Dims::new(frames, height, width, 1);
        dims.validate()?;
        if values.len() != dims.len() {
            return Err(Error::invalid(format!(
                "attention map of {dims} needs {} values, got {}",
                dims.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!("attention value {v} is not finite and nonnegative")));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Dims) -> Self {
        let dims = dims.with_channels(1);
        Self {
            dims,
            values: vec![0.0; dims.len()],
        }
    }

    /// Reads a one-channel tensor as an attention map.
    pub fn from_tensor(t: &VideoTensor) -> Result<Self> {
        let d = t.dims();
        if d.channels != 1 {
            return Err(Error::invalid(format!("attention tensor must have C = 1, got {d}")));
        }
        Self::new(d.frames, d.height, d.width, t.data().to_vec())
    }

    pub fn to_tensor(&self) -> VideoTensor {
        VideoTensor::from_parts_unchecked(self.dims, self.values.clone())
    }

    /// Dims with `channels == 1`.
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-voxel weights in `[0, 1]`, shared by every channel.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskVolume {
    dims: Dims,
    values: Vec<f64>,
}

impl MaskVolume {
    pub fn new(frames: usize, height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let dims = Dims::new(frames, height, width, 1);
        dims.validate()?;
        if values.len() != dims.len() {
            return Err(Error::invalid(format!(
                "mask of {dims} needs {} values, got {}",
                dims.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("mask value {v} outside [0, 1]")));
        }
        Ok(Self { dims, values })
    }

    pub fn filled(dims: Dims, value: f64) -> Result<Self> {
        let dims = dims.with_channels(1);
        Self::new(dims.frames, dims.height, dims.width, vec![value; dims.len()])
    }

    pub fn from_binary(dims: Dims, bits: &[bool]) -> Result<Self> {
        let dims = dims.with_channels(1);
        Self::new(
            dims.frames,
            dims.height,
            dims.width,
            bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    pub fn from_tensor(t: &VideoTensor) -> Result<Self> {
        let d = t.dims();
        if d.channels != 1 {
            return Err(Error::invalid(format!("mask tensor must have C = 1, got {d}")));
        }
        Self::new(d.frames, d.height, d.width, t.data().to_vec())
    }

    pub fn to_tensor(&self) -> VideoTensor {
        VideoTensor::from_parts_unchecked(self.dims, self.values.clone())
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// `true` where the value is nonzero.
    pub fn support(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v != 0.0).collect()
    }

    /// Mean weight, i.e. the covered fraction for binary masks.
    pub fn coverage(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    fn check_binary(&self, what: &str) -> Result<()> {
        if self.is_binary() {
            Ok(())
        } else {
            Err(Error::invalid(format!("{what} must be a binary mask")))
        }
    }

    fn check_same(&self, other: &MaskVolume) -> Result<()> {
        if self.dims == other.dims {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                left: self.dims.to_string(),
                right: other.dims.to_string(),
            })
        }
    }
}

/// Algorithm parameters for [`build_mask`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskConfig {
    pub kernel: usize,
    pub delta: f64,
    pub apply_softening: bool,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            kernel: 11,
            delta: 0.25,
            apply_softening: true,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        check_kernel(self.kernel)?;
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!("delta must be positive, got {}", self.delta)));
        }
        Ok(())
    }
}

fn check_kernel(n: usize) -> Result<()> {
    if n.is_multiple_of(2) {
        return Err(Error::invalid(format!("smoothing kernel must be odd and >= 1, got {n}")));
    }
    Ok(())
}

/// Saliency stand-in for cross-attention: the channel-norm of
/// `v(state, t, condition) - v(state, t, null)`, scaled so its maximum is 1.
pub fn attention_saliency(
    field: &dyn VelocityField,
    state: &VideoTensor,
    t: f64,
    condition: &Condition,
) -> Result<AttentionMap> {
    let d = state.dims();
    if condition.is_null() {
        return Ok(AttentionMap::zeros(d));
    }
    let v_c = field.velocity(state, t, condition)?;
    let v_0 = field.velocity(state, t, &Condition::null())?;
    let mut values: Vec<f64> = v_c
        .data()
        .chunks_exact(d.channels)
        .zip(v_0.data().chunks_exact(d.channels))
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
        .collect();
    let max = values.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut values {
            *v /= max;
        }
    }
    AttentionMap::new(d.frames, d.height, d.width, values)
}

/// Attention read from known per-condition relevance maps, optionally with
/// seeded noise `max(0, a + amplitude * z)`.
#[derive(Clone, Debug, Default)]
pub struct ScriptedAttention {
    pub maps: BTreeMap<String, AttentionMap>,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl ScriptedAttention {
    pub fn attention(&self, condition: &Condition, step: u32, sample: u32) -> Result<AttentionMap> {
        let base = self
            .maps
            .get(&condition.id)
            .ok_or_else(|| Error::NotFound(format!("scripted attention for '{}'", condition.id)))?;
        if self.noise_amplitude == 0.0 {
            return Ok(base.clone());
        }
        let mut rng = rng::stream(SeedSpec::new(self.seed, step, sample), Domain::Attention);
        let values = base
            .values
            .iter()
            .map(|&a| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (a + self.noise_amplitude * z).max(0.0)
            })
            .collect();
        Ok(AttentionMap {
            dims: base.dims,
            values,
        })
    }
}

/// Where attention maps come from.
#[derive(Clone, Debug, Default)]
pub enum AttentionProvider {
    #[default]
    Saliency,
    Scripted(ScriptedAttention),
}

impl AttentionProvider {
    pub fn attention(
        &self,
        field: &dyn VelocityField,
        state: &VideoTensor,
        t: f64,
        condition: &Condition,
        step: u32,
        sample: u32,
    ) -> Result<AttentionMap> {
        match self {
            AttentionProvider::Saliency => attention_saliency(field, state, t, condition),
            AttentionProvider::Scripted(s) => s.attention(condition, step, sample),
        }
    }
}

/// Per-frame `n x n` box mean; windows are clipped at the frame border and
/// averaged over the pixels they actually cover. Results are clamped to the
/// frame's value range, so constant frames stay exactly constant.
pub fn spatial_smooth(a: &AttentionMap, n: usize) -> Result<AttentionMap> {
    check_kernel(n)?;
    if n == 1 {
        return Ok(a.clone());
    }
    let Dims {
        frames: tn,
        height: h,
        width: w,
        ..
    } = a.dims;
    let r = n / 2;
    let mut out = Vec::with_capacity(a.values.len());
    // Summed-area table with a zero first row/column.
    let mut sat = vec![0.0; (h + 1) * (w + 1)];
    for t in 0..tn {
        let frame = &a.values[t * h * w..(t + 1) * h * w];
        let lo = frame.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = frame.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += frame[y * w + x];
                sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
            }
        }
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
            for x in 0..w {
                let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
                let s = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0]
                    + sat[y0 * (w + 1) + x0];
                let count = ((y1 - y0) * (x1 - x0)) as f64;
                out.push((s / count).clamp(lo, hi));
            }
        }
    }
    Ok(AttentionMap {
        dims: a.dims,
        values: out,
    })
}

/// Binary mask of voxels at or above the global mean of `a`.
pub fn binarize_global_mean(a: &AttentionMap) -> MaskVolume {
    let lo = a.values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = a.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tau = (a.values.iter().sum::<f64>() / a.values.len() as f64).clamp(lo, hi);
    MaskVolume {
        dims: a.dims,
        values: a.values.iter().map(|&v| if v >= tau { 1.0 } else { 0.0 }).collect(),
    }
}

/// Elementwise OR of two binary masks.
pub fn union_masks(m1: &MaskVolume, m2: &MaskVolume) -> Result<MaskVolume> {
    m1.check_binary("first union operand")?;
    m2.check_binary("second union operand")?;
    m1.check_same(m2)?;
    Ok(MaskVolume {
        dims: m1.dims,
        values: m1
            .values
            .iter()
            .zip(&m2.values)
            .map(|(&a, &b)| if a == 1.0 || b == 1.0 { 1.0 } else { 0.0 })
            .collect(),
    })
}

/// Per-frame Euclidean distance from every voxel to the nearest foreground
/// (value 1) voxel of the same frame. Frames without foreground are `+inf`.
pub fn distance_transform(m: &MaskVolume) -> Result<Vec<f64>> {
    m.check_binary("distance transform input")?;
    let Dims {
        frames,
        height: h,
        width: w,
        ..
    } = m.dims;
    let mut out = Vec::with_capacity(m.values.len());
    for t in 0..frames {
        let fg: Vec<bool> = m.values[t * h * w..(t + 1) * h * w].iter().map(|&v| v == 1.0).collect();
        out.extend(squared_edt(&fg, h, w).into_iter().map(f64::sqrt));
    }
    Ok(out)
}

/// Feathers a binary mask: 1 on the foreground, `exp(-delta * D)` elsewhere.
/// A frame with no foreground softens to all zeros.
pub fn soften_edges(m: &MaskVolume, delta: f64) -> Result<MaskVolume> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::invalid(format!("delta must be positive, got {delta}")));
    }
    let dist = distance_transform(m)?;
    let values = m
        .values
        .iter()
        .zip(&dist)
        .map(|(&b, &d)| {
            if b == 1.0 {
                1.0
            } else if d.is_infinite() {
                0.0
            } else {
                (-delta * d).exp()
            }
        })
        .collect();
    Ok(MaskVolume { dims: m.dims, values })
}

/// Full mask pipeline: smooth, threshold at the global mean, union, then
/// feather if requested.
pub fn build_mask(a_src: &AttentionMap, a_tar: &AttentionMap, cfg: &MaskConfig) -> Result<MaskVolume> {
    cfg.validate()?;
    if a_src.dims != a_tar.dims {
        return Err(Error::ShapeMismatch {
            left: a_src.dims.to_string(),
            right: a_tar.dims.to_string(),
        });
    }
    let m_src = binarize_global_mean(&spatial_smooth(a_src, cfg.kernel)?);
    let m_tar = binarize_global_mean(&spatial_smooth(a_tar, cfg.kernel)?);
    let combined = union_masks(&m_src, &m_tar)?;
    if cfg.apply_softening {
        soften_edges(&combined, cfg.delta)
    } else {
        Ok(combined)
    }
}

/// Masks a velocity: `v * m`, broadcasting `m` over channels. Voxels where
/// `m == 0` come out as exactly `0.0`.
pub fn apply_mask(v_edit: &VideoTensor, m: &MaskVolume) -> Result<VideoTensor> {
    let d = v_edit.dims();
    if d.with_channels(1) != m.dims {
        return Err(Error::ShapeMismatch {
            left: d.to_string(),
            right: m.dims.to_string(),
        });
    }
    let mut out = Vec::with_capacity(v_edit.len());
    for (px, &w) in v_edit.data().chunks_exact(d.channels).zip(&m.values) {
        if w == 0.0 {
            out.extend(std::iter::repeat_n(0.0, d.channels));
        } else {
            out.extend(px.iter().map(|v| v * w));
        }
    }
    Ok(VideoTensor::from_parts_unchecked(d, out))
}
