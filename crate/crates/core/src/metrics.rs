//! Structure and temporal-consistency metrics.
//!
//! SSIM uses a uniform 7x7 window over valid positions only, `K1 = 0.01`,
//! `K2 = 0.03`, dynamic range `L = 1`, and population (biased) local
//! variances. Multi-channel frames average the per-channel scores.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::safc::MaskVolume;
use crate::tensor::{Dims, VideoTensor};

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;
pub const SSIM_RANGE: f64 = 1.0;

pub fn ssim_c1() -> f64 {
    (SSIM_K1 * SSIM_RANGE).powi(2)
}

pub fn ssim_c2() -> f64 {
    (SSIM_K2 * SSIM_RANGE).powi(2)
}

/// Borrowed `H x W x C` frame.
#[derive(Clone, Copy, Debug)]
pub struct FrameView<'a> {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: &'a [f64],
}

impl<'a> FrameView<'a> {
    pub fn new(height: usize, width: usize, channels: usize, data: &'a [f64]) -> Result<Self> {
        if height * width * channels != data.len() || data.is_empty() {
            return Err(Error::invalid(format!(
                "frame {height}x{width}x{channels} does not match {} samples",
                data.len()
            )));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn of(video: &'a VideoTensor, t: usize) -> Self {
        let d = video.dims();
        Self {
            height: d.height,
            width: d.width,
            channels: d.channels,
            data: video.frame(t),
        }
    }

    #[inline]
    fn at(&self, y: usize, x: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    fn same_shape(&self, other: &FrameView<'_>) -> Result<()> {
        if (self.height, self.width, self.channels) == (other.height, other.width, other.channels) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                left: format!("{}x{}x{}", self.height, self.width, self.channels),
                right: format!("{}x{}x{}", other.height, other.width, other.channels),
            })
        }
    }
}

/// Mean local SSIM between two frames.
pub fn ssim(a: FrameView<'_>, b: FrameView<'_>) -> Result<f64> {
    a.same_shape(&b)?;
    let (h, w) = (a.height, a.width);
    let wy = SSIM_WINDOW.min(h);
    let wx = SSIM_WINDOW.min(w);
    let n = (wy * wx) as f64;
    let (c1, c2) = (ssim_c1(), ssim_c2());
    let stride = w + 1;
    let mut total = 0.0;
    for c in 0..a.channels {
        // Summed-area tables of a, b, a^2, b^2 and ab.
        let mut sat = vec![[0.0f64; 5]; (h + 1) * stride];
        for y in 0..h {
            let mut row = [0.0; 5];
            for x in 0..w {
                let (p, q) = (a.at(y, x, c), b.at(y, x, c));
                for (r, v) in row.iter_mut().zip([p, q, p * p, q * q, p * q]) {
                    *r += v;
                }
                let above = sat[y * stride + x + 1];
                let cell = &mut sat[(y + 1) * stride + x + 1];
                for k in 0..5 {
                    cell[k] = above[k] + row[k];
                }
            }
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for y0 in 0..=h - wy {
            for x0 in 0..=w - wx {
                let (y1, x1) = (y0 + wy, x0 + wx);
                let mut s = [0.0; 5];
                for (k, sk) in s.iter_mut().enumerate() {
                    *sk = sat[y1 * stride + x1][k] - sat[y0 * stride + x1][k] - sat[y1 * stride + x0][k]
                        + sat[y0 * stride + x0][k];
                }
                let (ma, mb) = (s[0] / n, s[1] / n);
                let va = s[2] / n - ma * ma;
                let vb = s[3] / n - mb * mb;
                let cov = s[4] / n - ma * mb;
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        total += sum / count as f64;
    }
    Ok(total / a.channels as f64)
}

/// Owned frame produced by warping.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Frame {
    pub fn view(&self) -> FrameView<'_> {
        FrameView {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: &self.data,
        }
    }
}

/// Backward warp: `out(p) = frame(p + flow(p))`, bilinear, with sample
/// positions clamped to the frame border. `flow` holds `(dy, dx)` per pixel.
pub fn warp_frame(frame: FrameView<'_>, flow: FrameView<'_>) -> Result<Frame> {
    if flow.channels != 2 || flow.height != frame.height || flow.width != frame.width {
        return Err(Error::ShapeMismatch {
            left: format!("frame {}x{}", frame.height, frame.width),
            right: format!("flow {}x{}x{}", flow.height, flow.width, flow.channels),
        });
    }
    let (h, w, ch) = (frame.height, frame.width, frame.channels);
    let mut data = Vec::with_capacity(frame.data.len());
    for y in 0..h {
        for x in 0..w {
            let sy = (y as f64 + flow.at(y, x, 0)).clamp(0.0, (h - 1) as f64);
            let sx = (x as f64 + flow.at(y, x, 1)).clamp(0.0, (w - 1) as f64);
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            for c in 0..ch {
                let top = (1.0 - fx) * frame.at(y0, x0, c) + fx * frame.at(y0, x1, c);
                let bottom = (1.0 - fx) * frame.at(y1, x0, c) + fx * frame.at(y1, x1, c);
                data.push((1.0 - fy) * top + fy * bottom);
            }
        }
    }
    Ok(Frame { height: h, width: w, channels: ch, data })
}

/// Per-pixel displacements between consecutive frames: a `(T-1) x H x W x 2`
/// tensor of `(dy, dx)` in pixels, to be used for backward warping of frame
/// `t` onto the grid of frame `t + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField(VideoTensor);

impl FlowField {
    pub fn new(tensor: VideoTensor) -> Result<Self> {
        if tensor.dims().channels != 2 {
            return Err(Error::invalid(format!(
                "flow tensor must have C = 2, got {}",
                tensor.dims()
            )));
        }
        Ok(Self(tensor))
    }

    pub fn tensor(&self) -> &VideoTensor {
        &self.0
    }

    pub fn into_tensor(self) -> VideoTensor {
        self.0
    }

    pub fn pairs(&self) -> usize {
        self.0.dims().frames
    }

    pub fn frame(&self, t: usize) -> FrameView<'_> {
        FrameView::of(&self.0, t)
    }

    pub fn check_video(&self, video: Dims) -> Result<()> {
        let f = self.0.dims();
        if video.frames < 2 || f.frames != video.frames - 1 || f.height != video.height || f.width != video.width {
            return Err(Error::ShapeMismatch {
                left: format!("video {video}"),
                right: format!("flow {f}"),
            });
        }
        Ok(())
    }
}

/// What the warped frame is compared against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpPairing {
    /// Warp edited frame `t`, compare with edited frame `t + 1`.
    #[default]
    EditedSuccessor,
    /// Warp source frame `t`, compare with edited frame `t + 1`.
    SourceWarped,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarpScores {
    pub warp_ssim: f64,
    pub warp_l1: f64,
    pub warp_l2: f64,
}

/// WarpSSIM / WarpL1 / WarpL2 of `edited` under `flow`, averaged over frame
/// pairs. The L1/L2 terms are mean absolute / squared sample differences.
pub fn warp_metrics(edited: &VideoTensor, flow: &FlowField) -> Result<WarpScores> {
    warp_metrics_with(edited, edited, flow)
}

/// Like [`warp_metrics`] with an explicit pairing; `source` is only read for
/// [`WarpPairing::SourceWarped`].
pub fn warp_metrics_paired(
    edited: &VideoTensor,
    source: &VideoTensor,
    flow: &FlowField,
    pairing: WarpPairing,
) -> Result<WarpScores> {
    match pairing {
        WarpPairing::EditedSuccessor => warp_metrics_with(edited, edited, flow),
        WarpPairing::SourceWarped => {
            edited.check_compatible(source)?;
            warp_metrics_with(source, edited, flow)
        }
    }
}

fn warp_metrics_with(warped_from: &VideoTensor, compared: &VideoTensor, flow: &FlowField) -> Result<WarpScores> {
    flow.check_video(compared.dims())?;
    let pairs = flow.pairs();
    let (mut s, mut l1, mut l2) = (0.0, 0.0, 0.0);
    for t in 0..pairs {
        let warped = warp_frame(FrameView::of(warped_from, t), flow.frame(t))?;
        let next = FrameView::of(compared, t + 1);
        s += ssim(warped.view(), next)?;
        let n = next.data.len() as f64;
        let (mut a, mut q) = (0.0, 0.0);
        for (p, r) in warped.data.iter().zip(next.data) {
            let d = p - r;
            a += d.abs();
            q += d * d;
        }
        l1 += a / n;
        l2 += q / n;
    }
    let n = pairs as f64;
    Ok(WarpScores {
        warp_ssim: s / n,
        warp_l1: l1 / n,
        warp_l2: l2 / n,
    })
}

/// Fraction of voxels outside `edit_region` (value 0) whose samples are
/// exactly unchanged. An empty outside set counts as fully preserved.
pub fn background_preservation(edited: &VideoTensor, source: &VideoTensor, edit_region: &MaskVolume) -> Result<f64> {
    edited.check_compatible(source)?;
    let d = edited.dims();
    if edit_region.dims() != d.with_channels(1) {
        return Err(Error::ShapeMismatch {
            left: d.to_string(),
            right: edit_region.dims().to_string(),
        });
    }
    let (mut outside, mut kept) = (0usize, 0usize);
    for ((e, s), &m) in edited
        .data()
        .chunks_exact(d.channels)
        .zip(source.data().chunks_exact(d.channels))
        .zip(edit_region.values())
    {
        if m != 0.0 {
            continue;
        }
        outside += 1;
        if e.iter().zip(s).all(|(a, b)| a == b) {
            kept += 1;
        }
    }
    Ok(if outside == 0 { 1.0 } else { kept as f64 / outside as f64 })
}

/// Mean per-frame SSIM between two videos.
pub fn ssim_video(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    a.check_compatible(b)?;
    let t = a.dims().frames;
    let mut total = 0.0;
    for i in 0..t {
        total += ssim(FrameView::of(a, i), FrameView::of(b, i))?;
    }
    Ok(total / t as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ssim_mean: f64,
    pub warp_ssim: f64,
    pub warp_l1: f64,
    pub warp_l2: f64,
    pub bg_preservation: f64,
}

pub const REPORT_CSV_HEADER: &str = "ssim_mean,warp_ssim,warp_l1,warp_l2,bg_preservation";

impl MetricReport {
    /// Computes every metric. Without a region the whole video counts as
    /// background.
    pub fn compute(
        edited: &VideoTensor,
        source: &VideoTensor,
        flow: &FlowField,
        region: Option<&MaskVolume>,
        pairing: WarpPairing,
    ) -> Result<Self> {
        edited.check_compatible(source)?;
        let warp = warp_metrics_paired(edited, source, flow, pairing)?;
        let empty;
        let region = match region {
            Some(r) => r,
            None => {
                empty = MaskVolume::filled(edited.dims(), 0.0)?;
                &empty
            }
        };
        Ok(Self {
            ssim_mean: ssim_video(edited, source)?,
            warp_ssim: warp.warp_ssim,
            warp_l1: warp.warp_l1,
            warp_l2: warp.warp_l2,
            bg_preservation: background_preservation(edited, source, region)?,
        })
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{REPORT_CSV_HEADER}\n{},{},{},{},{}\n",
            self.ssim_mean, self.warp_ssim, self.warp_l1, self.warp_l2, self.bg_preservation
        )
    }

    /// JSON object with the metric values and the SSIM constants used.
    pub fn to_json(&self, pairing: WarpPairing) -> Result<String> {
        let v = serde_json::json!({
            "ssim_mean": self.ssim_mean,
            "warp_ssim": self.warp_ssim,
            "warp_l1": self.warp_l1,
            "warp_l2": self.warp_l2,
            "bg_preservation": self.bg_preservation,
            "warp_pairing": pairing,
            "ssim": { "window": SSIM_WINDOW, "k1": SSIM_K1, "k2": SSIM_K2, "range": SSIM_RANGE },
        });
        Ok(serde_json::to_string_pretty(&v)? + "\n")
    }
}
