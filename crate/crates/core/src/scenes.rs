//! Synthetic scenes: moving shapes over a static background, with exact
//! ground-truth flow, per-object masks and a registry binding condition ids
//! to re-rendered target videos.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::condition::{Condition, NULL_CONDITION_ID};
use crate::error::{Error, Result};
use crate::fields::{AnalyticField, DataDistribution};
use crate::metrics::{warp_frame, FlowField, FrameView};
use crate::rng::{self, Domain, SeedSpec};
use crate::safc::{AttentionMap, MaskVolume, ScriptedAttention};
use crate::tensor::{Dims, VideoTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Canvas {
    pub t: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Canvas {
    pub fn dims(&self) -> Dims {
        Dims::new(self.t, self.h, self.w, self.c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Background {
    Constant { value: Vec<f64> },
    Ramp { from: Vec<f64>, to: Vec<f64>, axis: Axis },
    /// Bilinearly interpolated lattice noise: `base + amplitude * u`,
    /// `u ~ U(-1, 1)` drawn on a `(cells + 1)^2` lattice per channel.
    ValueNoise { base: Vec<f64>, amplitude: f64, cells: usize },
}

impl Default for Background {
    fn default() -> Self {
        Background::Constant { value: vec![0.0] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Disk,
    Rectangle,
}

/// Disk radius, or rectangle `[height, width]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Size {
    Radius(f64),
    Extent([f64; 2]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub shape: Shape,
    pub size: Size,
    /// Disk center or rectangle top-left corner at frame 0, as `[y, x]`.
    pub position: [f64; 2],
    pub appearance: Vec<f64>,
    /// Displacement per frame, `[dy, dx]` pixels.
    #[serde(default)]
    pub velocity: [f64; 2],
}

/// Registry entry. Unset fields keep the source object's values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub appearance: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keyword: Option<String>,
    #[serde(default)]
    pub object: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Shape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<Size>,
}

fn default_true() -> bool {
    true
}

/// Scene manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub canvas: Canvas,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub conditions: BTreeMap<String, ConditionSpec>,
    /// Integer motion with flow that reproduces every next frame exactly.
    #[serde(default = "default_true")]
    pub exact: bool,
}

impl SceneSpec {
    /// Parses a manifest; errors name the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let spec: SceneSpec = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::invalid(format!("manifest field `{}`: {}", e.path(), e.inner())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.canvas.dims();
        d.validate().map_err(|_| Error::invalid(format!("canvas {d} has a zero dimension")))?;
        let c = self.canvas.c;
        let check_len = |what: &str, v: &[f64]| {
            if v.len() != c {
                Err(Error::invalid(format!("{what} has {} channels, canvas has {c}", v.len())))
            } else if v.iter().any(|x| !x.is_finite()) {
                Err(Error::invalid(format!("{what} has non-finite values")))
            } else {
                Ok(())
            }
        };
        match &self.background {
            Background::Constant { value } => check_len("background.value", value)?,
            Background::Ramp { from, to, .. } => {
                check_len("background.from", from)?;
                check_len("background.to", to)?;
            }
            Background::ValueNoise { base, amplitude, cells } => {
                check_len("background.base", base)?;
                if *cells == 0 || !amplitude.is_finite() {
                    return Err(Error::invalid("background.value_noise needs cells >= 1 and a finite amplitude"));
                }
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            let name = format!("objects[{i}] ({})", shape_name(o.shape));
            check_len(&format!("{name}.appearance"), &o.appearance)?;
            check_object(o, &self.canvas, &name)?;
            if self.exact {
                let mut ints = vec![o.position[0], o.position[1], o.velocity[0], o.velocity[1]];
                if let Size::Extent(e) = o.size {
                    ints.extend(e);
                }
                if ints.iter().any(|v| v.fract() != 0.0) {
                    return Err(Error::invalid(format!(
                        "{name}: exact scenes need integer position, velocity and extent"
                    )));
                }
            }
        }
        for (id, cs) in &self.conditions {
            if id.is_empty() {
                return Err(Error::invalid("condition ids must be nonempty"));
            }
            if let Some(s) = cs.sigma {
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::invalid(format!("conditions.{id}.sigma must be positive, got {s}")));
                }
            }
            if id == NULL_CONDITION_ID {
                continue;
            }
            if cs.object >= self.objects.len() {
                return Err(Error::invalid(format!(
                    "conditions.{id}.object = {} but the scene has {} objects",
                    cs.object,
                    self.objects.len()
                )));
            }
            if let Some(a) = &cs.appearance {
                check_len(&format!("conditions.{id}.appearance"), a)?;
            }
            let obj = self.condition_object(cs);
            check_object(&obj, &self.canvas, &format!("conditions.{id}"))?;
        }
        Ok(())
    }

    fn condition_object(&self, cs: &ConditionSpec) -> ObjectSpec {
        let mut obj = self.objects[cs.object].clone();
        if let Some(s) = cs.shape {
            obj.shape = s;
        }
        if let Some(s) = cs.size {
            obj.size = s;
        }
        if let Some(a) = &cs.appearance {
            obj.appearance = a.clone();
        }
        obj
    }
}

fn shape_name(s: Shape) -> &'static str {
    match s {
        Shape::Disk => "disk",
        Shape::Rectangle => "rectangle",
    }
}

/// Extent as `(y_min, y_max, x_min, x_max)` in pixel coordinates at frame `t`.
fn bounds(o: &ObjectSpec, t: usize) -> Result<(f64, f64, f64, f64)> {
    let y = o.position[0] + o.velocity[0] * t as f64;
    let x = o.position[1] + o.velocity[1] * t as f64;
    match (o.shape, o.size) {
        (Shape::Disk, Size::Radius(r)) if r >= 0.0 => Ok((y - r, y + r, x - r, x + r)),
        (Shape::Rectangle, Size::Extent([h, w])) if h > 0.0 && w > 0.0 => Ok((y, y + h - 1.0, x, x + w - 1.0)),
        (Shape::Disk, _) => Err(Error::invalid("disk size must be a nonnegative radius")),
        (Shape::Rectangle, _) => Err(Error::invalid("rectangle size must be a positive [height, width]")),
    }
}

fn check_object(o: &ObjectSpec, canvas: &Canvas, name: &str) -> Result<()> {
    if o.position.iter().chain(&o.velocity).any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name}: non-finite position or velocity")));
    }
    for t in 0..canvas.t {
        let (y0, y1, x0, x1) = bounds(o, t).map_err(|e| Error::invalid(format!("{name}: {e}")))?;
        if y0 < 0.0 || x0 < 0.0 || y1 > (canvas.h - 1) as f64 || x1 > (canvas.w - 1) as f64 {
            return Err(Error::invalid(format!("{name} leaves the canvas at frame {t}")));
        }
    }
    Ok(())
}

fn covers(o: &ObjectSpec, t: usize, y: usize, x: usize) -> bool {
    let cy = o.position[0] + o.velocity[0] * t as f64;
    let cx = o.position[1] + o.velocity[1] * t as f64;
    let (yf, xf) = (y as f64, x as f64);
    match o.size {
        Size::Radius(r) => (yf - cy).powi(2) + (xf - cx).powi(2) <= r * r,
        Size::Extent([h, w]) => yf >= cy && yf < cy + h && xf >= cx && xf < cx + w,
    }
}

fn render_background(spec: &SceneSpec, seed: SeedSpec) -> Vec<f64> {
    let Canvas { h, w, c, .. } = spec.canvas;
    let mut out = Vec::with_capacity(h * w * c);
    match &spec.background {
        Background::Constant { value } => {
            for _ in 0..h * w {
                out.extend_from_slice(value);
            }
        }
        Background::Ramp { from, to, axis } => {
            for y in 0..h {
                for x in 0..w {
                    let (pos, len) = match axis {
                        Axis::X => (x, w),
                        Axis::Y => (y, h),
                    };
                    let s = if len > 1 { pos as f64 / (len - 1) as f64 } else { 0.0 };
                    out.extend(from.iter().zip(to).map(|(a, b)| a + s * (b - a)));
                }
            }
        }
        Background::ValueNoise { base, amplitude, cells } => {
            let n = cells + 1;
            let mut rng = rng::stream(seed.with(0, 0), Domain::SceneTexture);
            let lattice: Vec<f64> = (0..n * n * c).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lat = |i: usize, j: usize, ch: usize| lattice[(i * n + j) * c + ch];
            for y in 0..h {
                for x in 0..w {
                    let gy = if h > 1 { y as f64 / (h - 1) as f64 * *cells as f64 } else { 0.0 };
                    let gx = if w > 1 { x as f64 / (w - 1) as f64 * *cells as f64 } else { 0.0 };
                    let (i0, j0) = ((gy.floor() as usize).min(cells - 1), (gx.floor() as usize).min(cells - 1));
                    let (fy, fx) = (gy - i0 as f64, gx - j0 as f64);
                    for (ch, b) in base.iter().enumerate() {
                        let top = (1.0 - fx) * lat(i0, j0, ch) + fx * lat(i0, j0 + 1, ch);
                        let bot = (1.0 - fx) * lat(i0 + 1, j0, ch) + fx * lat(i0 + 1, j0 + 1, ch);
                        out.push(b + amplitude * ((1.0 - fy) * top + fy * bot));
                    }
                }
            }
        }
    }
    out
}

struct Layers {
    video: VideoTensor,
    /// Visible coverage per object, `T*H*W` each.
    coverage: Vec<Vec<bool>>,
    /// Raw (pre-occlusion) coverage per object.
    footprint: Vec<Vec<bool>>,
}

fn render_objects(spec: &SceneSpec, objects: &[ObjectSpec], background: &[f64]) -> Result<Layers> {
    let d = spec.canvas.dims();
    let plane = d.plane_len();
    let mut data = Vec::with_capacity(d.len());
    let mut coverage = vec![vec![false; d.frames * plane]; objects.len()];
    let mut footprint = coverage.clone();
    for t in 0..d.frames {
        let mut frame = background.to_vec();
        for (k, o) in objects.iter().enumerate() {
            for y in 0..d.height {
                for x in 0..d.width {
                    if covers(o, t, y, x) {
                        let p = y * d.width + x;
                        frame[p * d.channels..(p + 1) * d.channels].copy_from_slice(&o.appearance);
                        footprint[k][t * plane + p] = true;
                        for cov in coverage.iter_mut() {
                            cov[t * plane + p] = false;
                        }
                        coverage[k][t * plane + p] = true;
                    }
                }
            }
        }
        data.extend(frame);
    }
    Ok(Layers {
        video: VideoTensor::new(d, data)?,
        coverage,
        footprint,
    })
}

/// A rendered scene and everything derived from it.
#[derive(Clone, Debug)]
pub struct SceneBundle {
    pub spec: SceneSpec,
    pub seed: SeedSpec,
    pub video: VideoTensor,
    pub flow: FlowField,
    /// One binary mask per object: its visible pixels in each frame.
    pub object_masks: Vec<MaskVolume>,
    background: Vec<f64>,
}

/// Renders `spec`. Exact scenes are verified: warping each frame by the flow
/// must reproduce the next frame bit for bit.
pub fn render_scene(spec: &SceneSpec, seed: SeedSpec) -> Result<SceneBundle> {
    spec.validate()?;
    let d = spec.canvas.dims();
    let background = render_background(spec, seed);
    let layers = render_objects(spec, &spec.objects, &background)?;

    let plane = d.plane_len();
    let pairs = d.frames.saturating_sub(1).max(1);
    let mut flow = vec![0.0; pairs * plane * 2];
    for t in 0..d.frames.saturating_sub(1) {
        for p in 0..plane {
            let next = t + 1;
            // Topmost object at the target pixel wins; pixels the object just
            // left take its motion too, so they sample the background it exposed.
            let owner = (0..spec.objects.len())
                .rev()
                .find(|&k| layers.coverage[k][next * plane + p])
                .or_else(|| {
                    (0..spec.objects.len())
                        .rev()
                        .find(|&k| layers.footprint[k][t * plane + p] && !layers.footprint[k][next * plane + p])
                });
            if let Some(k) = owner {
                let v = spec.objects[k].velocity;
                flow[(t * plane + p) * 2] = -v[0];
                flow[(t * plane + p) * 2 + 1] = -v[1];
            }
        }
    }
    let flow = FlowField::new(VideoTensor::new(Dims::new(pairs, d.height, d.width, 2), flow)?)?;

    if spec.exact {
        for t in 0..d.frames.saturating_sub(1) {
            let warped = warp_frame(FrameView::of(&layers.video, t), flow.frame(t))?;
            if warped.data != layers.video.frame(t + 1) {
                return Err(Error::invalid(format!(
                    "scene is not flow-exact between frames {t} and {} (overlapping objects or a textured background behind moving objects)",
                    t + 1
                )));
            }
        }
    }

    let object_masks = layers
        .coverage
        .iter()
        .map(|cov| MaskVolume::from_binary(d, cov))
        .collect::<Result<_>>()?;
    Ok(SceneBundle {
        spec: spec.clone(),
        seed,
        video: layers.video,
        flow,
        object_masks,
        background,
    })
}

impl SceneBundle {
    /// The video with every object removed.
    pub fn background_video(&self) -> Result<VideoTensor> {
        Ok(render_objects(&self.spec, &[], &self.background)?.video)
    }

    /// Center video of condition `id`: the scene re-rendered with that
    /// condition's object overrides. `∅` maps to the empty background.
    pub fn condition_center(&self, id: &str) -> Result<VideoTensor> {
        if id == NULL_CONDITION_ID {
            return self.background_video();
        }
        let cs = self
            .spec
            .conditions
            .get(id)
            .ok_or_else(|| Error::NotFound(format!("condition '{id}'")))?;
        let mut objects = self.spec.objects.clone();
        objects[cs.object] = self.spec.condition_object(cs);
        Ok(render_objects(&self.spec, &objects, &self.background)?.video)
    }

    /// `Condition` handle for a registered id (or `∅`).
    pub fn condition(&self, id: &str) -> Result<Condition> {
        if id == NULL_CONDITION_ID {
            return Ok(Condition::null());
        }
        let cs = self
            .spec
            .conditions
            .get(id)
            .ok_or_else(|| Error::NotFound(format!("condition '{id}'")))?;
        Condition::new(id, id, cs.keyword.clone().unwrap_or_else(|| shape_name(self.spec.condition_object(cs).shape).into()))
    }

    /// Analytic field over every registered condition plus `∅`.
    pub fn field(&self) -> Result<AnalyticField> {
        let mut field = AnalyticField::default();
        for id in self.spec.conditions.keys() {
            let c = self.condition(id)?;
            field.insert(id.clone(), condition_target(&self.spec.conditions, &c, self)?);
        }
        if !self.spec.conditions.contains_key(NULL_CONDITION_ID) {
            field.insert(NULL_CONDITION_ID, condition_target(&self.spec.conditions, &Condition::null(), self)?);
        }
        Ok(field)
    }

    /// Ground-truth relevance for each condition: 1 where its center differs
    /// from the empty background, 0 elsewhere.
    pub fn scripted_attention(&self, noise_amplitude: f64, seed: u64) -> Result<ScriptedAttention> {
        let d = self.video.dims();
        let empty = self.background_video()?;
        let mut maps = BTreeMap::new();
        for id in self.spec.conditions.keys().filter(|id| id.as_str() != NULL_CONDITION_ID) {
            let center = self.condition_center(id)?;
            let values = center
                .data()
                .chunks_exact(d.channels)
                .zip(empty.data().chunks_exact(d.channels))
                .map(|(a, b)| if a == b { 0.0 } else { 1.0 })
                .collect();
            maps.insert(id.clone(), AttentionMap::new(d.frames, d.height, d.width, values)?);
        }
        Ok(ScriptedAttention {
            maps,
            noise_amplitude,
            seed,
        })
    }
}

/// Target distribution of `condition`: Delta around its center video, or an
/// isotropic Gaussian when the registry entry carries `sigma`.
pub fn condition_target(
    registry: &BTreeMap<String, ConditionSpec>,
    condition: &Condition,
    scene: &SceneBundle,
) -> Result<DataDistribution> {
    let key = condition.distribution.as_str();
    let entry = registry.get(key);
    if entry.is_none() && key != NULL_CONDITION_ID {
        return Err(Error::NotFound(format!("condition '{key}'")));
    }
    let center = scene.condition_center(key)?;
    match entry.and_then(|e| e.sigma) {
        Some(sigma) => DataDistribution::gaussian(center, sigma),
        None => Ok(DataDistribution::delta(center)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disk_scene(velocity: [f64; 2]) -> SceneSpec {
        SceneSpec::from_json(&format!(
            r#"{{
                "canvas": {{"t": 4, "h": 16, "w": 16, "c": 1}},
                "background": {{"kind": "constant", "value": [0.1]}},
                "objects": [{{"shape": "disk", "size": 3, "position": [7, 4], "appearance": [0.8], "velocity": [{}, {}]}}],
                "conditions": {{
                    "gray_disk": {{"appearance": [0.8]}},
                    "bright_square": {{"appearance": [1.0], "shape": "rectangle", "size": [5, 5], "sigma": 0.3}}
                }}
            }}"#,
            velocity[0], velocity[1]
        ))
        .unwrap()
    }

    #[test]
    fn static_disk() {
        let b = render_scene(&disk_scene([0.0, 0.0]), SeedSpec::new(0, 0, 0)).unwrap();
        for t in 1..4 {
            assert_eq!(b.video.frame(t), b.video.frame(0));
        }
        assert!(b.flow.tensor().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn moving_disk_flow_is_exact() {
        let b = render_scene(&disk_scene([0.0, 1.0]), SeedSpec::new(0, 0, 0)).unwrap();
        for t in 0..3 {
            let w = warp_frame(FrameView::of(&b.video, t), b.flow.frame(t)).unwrap();
            assert_eq!(w.data, b.video.frame(t + 1));
        }
        // Mask matches nonbackground support.
        let m = &b.object_masks[0];
        for (i, px) in b.video.data().iter().enumerate() {
            assert_eq!(m.values()[i] == 1.0, *px != 0.1);
        }
    }

    #[test]
    fn off_canvas_names_object() {
        let text = r#"{"canvas": {"t": 10, "h": 8, "w": 8, "c": 1},
            "objects": [{"shape": "disk", "size": 2, "position": [4, 3], "appearance": [1.0], "velocity": [0, 1]}]}"#;
        let err = SceneSpec::from_json(text).unwrap_err().to_string();
        assert!(err.contains("objects[0] (disk)"), "{err}");
        assert!(err.contains("frame"), "{err}");
    }

    #[test]
    fn schema_errors_carry_paths() {
        let err = SceneSpec::from_json(r#"{"canvas": {"t": 1, "h": 2, "w": 2, "c": 1}, "objects": [{"shape": "blob"}]}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("objects[0].shape"), "{err}");
        let err = SceneSpec::from_json(r#"{"canvas": {"t": 1, "h": 2, "w": 2, "c": 1}, "extra": 1}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("extra"), "{err}");
    }

    #[test]
    fn textured_background_behind_motion_is_not_exact() {
        let text = r#"{"canvas": {"t": 3, "h": 10, "w": 10, "c": 1},
            "background": {"kind": "ramp", "from": [0], "to": [1], "axis": "x"},
            "objects": [{"shape": "rectangle", "size": [2, 2], "position": [4, 2], "appearance": [1.0], "velocity": [0, 1]}]}"#;
        let spec = SceneSpec::from_json(text).unwrap();
        assert!(render_scene(&spec, SeedSpec::new(0, 0, 0)).is_err());
        let mut inexact = spec.clone();
        inexact.exact = false;
        assert!(render_scene(&inexact, SeedSpec::new(0, 0, 0)).is_ok());
    }

    #[test]
    fn value_noise_is_seeded() {
        let text = r#"{"canvas": {"t": 2, "h": 8, "w": 8, "c": 2},
            "background": {"kind": "value_noise", "base": [0.5, 0.5], "amplitude": 0.2, "cells": 3}}"#;
        let spec = SceneSpec::from_json(text).unwrap();
        let a = render_scene(&spec, SeedSpec::new(3, 0, 0)).unwrap();
        let b = render_scene(&spec, SeedSpec::new(3, 0, 0)).unwrap();
        let c = render_scene(&spec, SeedSpec::new(4, 0, 0)).unwrap();
        assert!(a.video.bit_eq(&b.video));
        assert!(!a.video.bit_eq(&c.video));
    }

    #[test]
    fn registry_targets() {
        let b = render_scene(&disk_scene([1.0, 1.0]), SeedSpec::new(0, 0, 0)).unwrap();
        let own = condition_target(&b.spec.conditions, &b.condition("gray_disk").unwrap(), &b).unwrap();
        assert!(matches!(&own, DataDistribution::Delta { center } if center.bit_eq(&b.video)));
        let sq = condition_target(&b.spec.conditions, &b.condition("bright_square").unwrap(), &b).unwrap();
        assert!(matches!(sq, DataDistribution::IsotropicGaussian { sigma, .. } if sigma == 0.3));
        assert!(condition_target(&b.spec.conditions, &Condition::named("nope").unwrap(), &b).is_err());
        assert_eq!(b.condition("bright_square").unwrap().keyword, "rectangle");
        let field = b.field().unwrap();
        assert_eq!(field.registry().len(), 3);
    }
}
