//! Binary PPM (`P6`) and PGM (`P5`) preview encoders, maxval 255.
//!
//! Samples are clamped to `[0, 1]` and quantized as `round(v * 255)`.

use crate::error::{Error, Result};
use crate::tensor::VideoTensor;

#[inline]
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `P6` image of frame `t`. One-channel tensors are replicated to gray; for
/// two channels the third is zero; extra channels beyond three are dropped.
pub fn encode_ppm(video: &VideoTensor, t: usize) -> Result<Vec<u8>> {
    let d = video.dims();
    if t >= d.frames {
        return Err(Error::invalid(format!("frame {t} out of range for {d}")));
    }
    let mut out = format!("P6\n{} {}\n255\n", d.width, d.height).into_bytes();
    let frame = video.frame(t);
    for px in frame.chunks_exact(d.channels) {
        let rgb = match px.len() {
            1 => [px[0], px[0], px[0]],
            2 => [px[0], px[1], 0.0],
            _ => [px[0], px[1], px[2]],
        };
        out.extend(rgb.iter().map(|&v| quantize(v)));
    }
    Ok(out)
}

/// `P5` image of channel `c` of frame `t`.
pub fn encode_pgm(video: &VideoTensor, t: usize, c: usize) -> Result<Vec<u8>> {
    let d = video.dims();
    if t >= d.frames || c >= d.channels {
        return Err(Error::invalid(format!("frame {t} / channel {c} out of range for {d}")));
    }
    let mut out = format!("P5\n{} {}\n255\n", d.width, d.height).into_bytes();
    out.extend(
        video
            .frame(t)
            .chunks_exact(d.channels)
            .map(|px| quantize(px[c])),
    );
    Ok(out)
}
