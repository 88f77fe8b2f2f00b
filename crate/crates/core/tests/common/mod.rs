//! Shared scenes and brute-force reference implementations for integration
//! tests. The oracles favour obviousness over speed.

#![allow(dead_code)]

use flowdirector::scenes::{render_scene, SceneBundle, SceneSpec};
use flowdirector::{Dims, SeedSpec, VideoTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 8x32x32x1 scene: one gray disk moving right. `same` re-renders the disk
/// as is, `recolor` turns it white, `square` swaps in a white rectangle.
pub fn delta_scene_json() -> String {
    r#"{
        "canvas": {"t": 8, "h": 32, "w": 32, "c": 1},
        "background": {"kind": "constant", "value": [0.1]},
        "objects": [{"shape": "disk", "size": 5, "position": [15, 7], "appearance": [0.5], "velocity": [0, 2]}],
        "conditions": {
            "same": {"appearance": [0.5], "keyword": "disk"},
            "recolor": {"appearance": [0.9], "keyword": "disk"},
            "square": {"appearance": [0.9], "shape": "rectangle", "size": [8, 8], "keyword": "square"}
        }
    }"#
    .to_string()
}

pub fn delta_scene() -> SceneBundle {
    let spec = SceneSpec::from_json(&delta_scene_json()).unwrap();
    render_scene(&spec, SeedSpec::new(0, 0, 0)).unwrap()
}

/// Small scene whose target condition is an isotropic Gaussian of width
/// `sigma` around the recolored render.
pub fn gaussian_scene(sigma: f64) -> SceneBundle {
    let text = format!(
        r#"{{
            "canvas": {{"t": 4, "h": 16, "w": 16, "c": 1}},
            "background": {{"kind": "constant", "value": [0.2]}},
            "objects": [{{"shape": "rectangle", "size": [6, 6], "position": [5, 2], "appearance": [0.4], "velocity": [0, 1]}}],
            "conditions": {{
                "same": {{"appearance": [0.4]}},
                "fuzzy": {{"appearance": [0.8], "sigma": {sigma}}}
            }}
        }}"#
    );
    render_scene(&SceneSpec::from_json(&text).unwrap(), SeedSpec::new(0, 0, 0)).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Multiples of 1/256 in [0, 4): sums of up to 2^40 of them are exact.
pub fn dyadic(rng: &mut impl Rng) -> f64 {
    rng.random_range(0..1024) as f64 / 256.0
}

pub fn random_video(rng: &mut impl Rng, dims: Dims) -> VideoTensor {
    let data = (0..dims.len()).map(|_| rng.random::<f64>()).collect();
    VideoTensor::new(dims, data).unwrap()
}

/// Box mean over the clipped window, by direct summation.
pub fn smooth_bf(values: &[f64], t: usize, h: usize, w: usize, n: usize) -> Vec<f64> {
    let r = (n / 2) as isize;
    let mut out = vec![0.0; t * h * w];
    for f in 0..t {
        for y in 0..h as isize {
            for x in 0..w as isize {
                let (mut sum, mut count) = (0.0, 0.0);
                for yy in y - r..=y + r {
                    for xx in x - r..=x + r {
                        if yy >= 0 && xx >= 0 && yy < h as isize && xx < w as isize {
                            sum += values[f * h * w + yy as usize * w + xx as usize];
                            count += 1.0;
                        }
                    }
                }
                out[f * h * w + y as usize * w + x as usize] = sum / count;
            }
        }
    }
    out
}

pub fn threshold_bf(values: &[f64]) -> Vec<f64> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|&v| if v >= mean { 1.0 } else { 0.0 }).collect()
}

pub fn union_bf(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| if x == 1.0 || y == 1.0 { 1.0 } else { 0.0 }).collect()
}

/// Euclidean distance to the nearest foreground pixel of the same frame,
/// by checking every pair.
pub fn edt_bf(mask: &[f64], t: usize, h: usize, w: usize) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; t * h * w];
    for f in 0..t {
        let frame = &mask[f * h * w..(f + 1) * h * w];
        for p in 0..h * w {
            let (py, px) = ((p / w) as f64, (p % w) as f64);
            for (q, &m) in frame.iter().enumerate() {
                if m == 1.0 {
                    let (qy, qx) = ((q / w) as f64, (q % w) as f64);
                    let d2 = (py - qy) * (py - qy) + (px - qx) * (px - qx);
                    out[f * h * w + p] = out[f * h * w + p].min(d2.sqrt());
                }
            }
        }
    }
    out
}

/// SSIM over every fully contained `win x win` window, channel-averaged,
/// with population statistics computed directly per window.
pub fn ssim_bf(a: &[f64], b: &[f64], h: usize, w: usize, c: usize) -> f64 {
    let (c1, c2) = ((0.01f64).powi(2), (0.03f64).powi(2));
    let (wy, wx) = (h.min(7), w.min(7));
    let mut total = 0.0;
    for ch in 0..c {
        let mut acc = 0.0;
        let mut windows = 0.0;
        for y0 in 0..=h - wy {
            for x0 in 0..=w - wx {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for y in y0..y0 + wy {
                    for x in x0..x0 + wx {
                        xs.push(a[(y * w + x) * c + ch]);
                        ys.push(b[(y * w + x) * c + ch]);
                    }
                }
                let n = xs.len() as f64;
                let mx = xs.iter().sum::<f64>() / n;
                let my = ys.iter().sum::<f64>() / n;
                let vx = xs.iter().map(|v| (v - mx).powi(2)).sum::<f64>() / n;
                let vy = ys.iter().map(|v| (v - my).powi(2)).sum::<f64>() / n;
                let cov = xs.iter().zip(&ys).map(|(p, q)| (p - mx) * (q - my)).sum::<f64>() / n;
                acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                windows += 1.0;
            }
        }
        total += acc / windows;
    }
    total / c as f64
}

/// Bilinear backward warp: output(p) = frame(p + flow(p)), sample position
/// clamped to the frame.
pub fn warp_bf(frame: &[f64], flow: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let at = |y: usize, x: usize, ch: usize| frame[(y * w + x) * c + ch];
    let mut out = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let sy = (y as f64 + flow[p * 2]).clamp(0.0, (h - 1) as f64);
            let sx = (x as f64 + flow[p * 2 + 1]).clamp(0.0, (w - 1) as f64);
            let (y0, x0) = (sy.floor() as usize, sx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (fy, fx) = (sy - y0 as f64, sx - x0 as f64);
            for ch in 0..c {
                out.push(
                    (1.0 - fy) * ((1.0 - fx) * at(y0, x0, ch) + fx * at(y0, x1, ch))
                        + fy * ((1.0 - fx) * at(y1, x0, ch) + fx * at(y1, x1, ch)),
                );
            }
        }
    }
    out
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
