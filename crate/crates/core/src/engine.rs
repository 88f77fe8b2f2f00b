//! Inversion-free editing ODE.
//!
//! The edited state starts at the source video and follows
//! `dZ/dt = v(Z_tar, t, c_tar) - v(Z_src, t, c_src)` from the first grid time
//! down to 0, where `Z_src = (1-t) X_src + t N` and
//! `Z_tar = Z_edit + Z_src - X_src` share the noise draw `N`.

use std::sync::atomic::{AtomicUsize, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condition::Condition;
use crate::dag::{self, DagConfig, FlowSample};
use crate::error::{Error, Result};
use crate::fields::{cfg_combine, VelocityField};
use crate::rng::{seed_noise, SeedSpec};
use crate::safc::{apply_mask, build_mask, AttentionProvider, MaskConfig, MaskVolume};
use crate::schedule::EditSchedule;
use crate::tensor::{pairwise_mean, VideoTensor};

/// Current point on the editing trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct EditState {
    pub z_edit: VideoTensor,
    pub t: f64,
    pub step_index: usize,
}

/// Source and target branch states built from one shared noise draw.
#[derive(Clone, Debug, PartialEq)]
pub struct BranchStates {
    pub z_src: VideoTensor,
    pub z_tar: VideoTensor,
    pub noise: VideoTensor,
}

impl BranchStates {
    pub fn build(x_src: &VideoTensor, z_edit: &VideoTensor, t: f64, noise: VideoTensor) -> Result<Self> {
        let z_src = perturb_source(x_src, t, &noise)?;
        let z_tar = reconstruct_target(z_edit, &z_src, x_src)?;
        Ok(Self { z_src, z_tar, noise })
    }
}

/// `(1 - t) * x_src + t * noise`.
pub fn perturb_source(x_src: &VideoTensor, t: f64, noise: &VideoTensor) -> Result<VideoTensor> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::invalid(format!("time {t} outside [0, 1]")));
    }
    x_src.zip_map(noise, |x, n| (1.0 - t) * x + t * n)
}

/// `z_edit + z_src - x_src`, evaluated as `(z_edit - x_src) + z_src` so an
/// unedited state reproduces `z_src` exactly.
pub fn reconstruct_target(z_edit: &VideoTensor, z_src: &VideoTensor, x_src: &VideoTensor) -> Result<VideoTensor> {
    z_edit.sub(x_src)?.add(z_src)
}

/// Guidance scales for the source and target branches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfgScales {
    pub s_src: f64,
    pub s_tar: f64,
}

impl Default for CfgScales {
    fn default() -> Self {
        Self { s_src: 3.5, s_tar: 10.5 }
    }
}

impl CfgScales {
    /// Scales of 1 (no guidance).
    pub const UNGUIDED: CfgScales = CfgScales { s_src: 1.0, s_tar: 1.0 };
}

fn guided(field: &dyn VelocityField, z: &VideoTensor, t: f64, c: &Condition, scale: f64) -> Result<VideoTensor> {
    let v_cond = field.velocity(z, t, c)?;
    if scale == 1.0 {
        return Ok(v_cond);
    }
    let v_uncond = field.velocity(z, t, &Condition::null())?;
    cfg_combine(&v_uncond, &v_cond, scale)
}

/// Editing velocity: guided target velocity minus guided source velocity.
pub fn edit_velocity(
    field: &dyn VelocityField,
    branches: &BranchStates,
    t: f64,
    c_src: &Condition,
    c_tar: &Condition,
    cfg: CfgScales,
) -> Result<VideoTensor> {
    let v_tar = guided(field, &branches.z_tar, t, c_tar, cfg.s_tar)?;
    let v_src = guided(field, &branches.z_src, t, c_src, cfg.s_src)?;
    v_tar.sub(&v_src)
}

/// One explicit Euler step toward `t_next < state.t`.
pub fn euler_step(state: &EditState, velocity: &VideoTensor, t_next: f64) -> Result<EditState> {
    if t_next.partial_cmp(&state.t) != Some(std::cmp::Ordering::Less) {
        return Err(Error::invalid(format!(
            "Euler step must decrease time: {} -> {t_next}",
            state.t
        )));
    }
    let dt = t_next - state.t;
    Ok(EditState {
        z_edit: state.z_edit.zip_map(velocity, |z, v| z + dt * v)?,
        t: t_next,
        step_index: state.step_index + 1,
    })
}

/// Flow-correction settings for [`run_edit`].
#[derive(Clone, Debug, Default)]
pub struct SafcOptions {
    pub mask: MaskConfig,
    pub provider: AttentionProvider,
    /// One mask per noise draw (otherwise the first draw's mask is shared).
    pub per_sample_masks: bool,
    /// Compute masks at the first step only and reuse them afterwards.
    pub freeze_step0: bool,
}

#[derive(Clone, Debug)]
pub struct EditOptions {
    pub cfg: CfgScales,
    pub safc: Option<SafcOptions>,
    pub dag: Option<DagConfig>,
    /// Noise draws averaged per step when guidance is off.
    pub n_samples: usize,
}

impl Default for EditOptions {
    fn default() -> Self {
        Self {
            cfg: CfgScales::default(),
            safc: None,
            dag: None,
            n_samples: 1,
        }
    }
}

impl EditOptions {
    pub fn samples_per_step(&self) -> usize {
        match &self.dag {
            Some(d) => d.l_hq,
            None => self.n_samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.safc {
            s.mask.validate()?;
        }
        if let Some(d) = &self.dag {
            d.validate()?;
        }
        if self.dag.is_none() && self.n_samples == 0 {
            return Err(Error::invalid("n_samples must be at least 1"));
        }
        for s in [self.cfg.s_src, self.cfg.s_tar] {
            if !s.is_finite() {
                return Err(Error::invalid("guidance scales must be finite"));
            }
        }
        Ok(())
    }
}

/// Per-step signals recorded during a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step_index: usize,
    pub t: f64,
    pub n_samples: usize,
    pub v_norm: f64,
    pub mask_coverage: f64,
    pub d_bar_norm: f64,
}

pub const DIAGNOSTICS_HEADER: &str = "step_index,t,n_samples,v_norm,mask_coverage,d_bar_norm";

pub fn diagnostics_csv(rows: &[StepDiagnostics]) -> String {
    let mut out = String::from(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step_index, r.t, r.n_samples, r.v_norm, r.mask_coverage, r.d_bar_norm
        ));
    }
    out
}

#[derive(Clone, Debug)]
pub struct EditOutcome {
    pub output: VideoTensor,
    pub diagnostics: Vec<StepDiagnostics>,
    /// Total number of noise tensors drawn.
    pub noise_draws: usize,
    /// Masks applied at the last step: one per sample, a single shared mask,
    /// or none without flow correction.
    pub last_masks: Vec<MaskVolume>,
}

#[allow(clippy::too_many_arguments)]
fn sample_mask(
    field: &dyn VelocityField,
    safc: &SafcOptions,
    branches: &BranchStates,
    t: f64,
    c_src: &Condition,
    c_tar: &Condition,
    step: u32,
    sample: u32,
) -> Result<MaskVolume> {
    let a_src = safc.provider.attention(field, &branches.z_src, t, c_src, step, sample)?;
    let a_tar = safc.provider.attention(field, &branches.z_tar, t, c_tar, step, sample)?;
    build_mask(&a_src, &a_tar, &safc.mask)
}

/// Integrates the editing ODE over `schedule`.
///
/// Each step draws `samples_per_step` noise tensors (one per
/// `(step, sample)` stream address), evaluates the editing velocity on the
/// shared-noise branches, masks it if flow correction is enabled, and
/// aggregates by guidance or by a plain mean before the Euler update.
#[allow(clippy::too_many_arguments)]
pub fn run_edit(
    x_src: &VideoTensor,
    c_src: &Condition,
    c_tar: &Condition,
    schedule: &EditSchedule,
    field: &dyn VelocityField,
    options: &EditOptions,
    seed: SeedSpec,
) -> Result<EditOutcome> {
    options.validate()?;
    let n_samples = options.samples_per_step();
    let draws = AtomicUsize::new(0);
    let mut state = EditState {
        z_edit: x_src.clone(),
        t: schedule.t_start(),
        step_index: 0,
    };
    let mut diagnostics = Vec::with_capacity(schedule.n_steps());
    let mut frozen: Option<Vec<MaskVolume>> = None;
    let mut last_masks = Vec::new();

    for (k, (t, t_next)) in schedule.intervals().enumerate() {
        let wrap = |e: Error| Error::Step {
            step: k,
            t,
            source: Box::new(e),
        };
        let step = k as u32;
        let evaluated: Vec<(BranchStates, VideoTensor)> = (0..n_samples)
            .into_par_iter()
            .map(|i| {
                let noise = seed_noise(seed.with(step, i as u32), x_src.dims())?;
                draws.fetch_add(1, Ordering::Relaxed);
                let branches = BranchStates::build(x_src, &state.z_edit, t, noise)?;
                let v = edit_velocity(field, &branches, t, c_src, c_tar, options.cfg)?;
                Ok((branches, v))
            })
            .collect::<Result<_>>()
            .map_err(wrap)?;

        let masks: Vec<MaskVolume> = match (&options.safc, &frozen) {
            (None, _) => Vec::new(),
            (Some(_), Some(f)) => f.clone(),
            (Some(s), None) if !s.per_sample_masks => {
                let b = &evaluated[0].0;
                vec![sample_mask(field, s, b, t, c_src, c_tar, step, 0).map_err(wrap)?]
            }
            (Some(s), None) => evaluated
                .par_iter()
                .enumerate()
                .map(|(i, (b, _))| sample_mask(field, s, b, t, c_src, c_tar, step, i as u32))
                .collect::<Result<_>>()
                .map_err(wrap)?,
        };
        let flows: Vec<VideoTensor> = if masks.is_empty() {
            evaluated.into_iter().map(|(_, v)| v).collect()
        } else {
            evaluated
                .iter()
                .enumerate()
                .map(|(i, (_, v))| apply_mask(v, &masks[i.min(masks.len() - 1)]))
                .collect::<Result<_>>()
                .map_err(wrap)?
        };

        let mask_coverage = if masks.is_empty() {
            1.0
        } else {
            masks.iter().map(MaskVolume::coverage).sum::<f64>() / masks.len() as f64
        };
        if let Some(s) = &options.safc {
            if s.freeze_step0 && frozen.is_none() {
                frozen = Some(masks.clone());
            }
        }

        let (velocity, d_bar_norm) = match &options.dag {
            Some(cfg) => {
                let samples: Vec<FlowSample> = flows
                    .into_iter()
                    .enumerate()
                    .map(|(index, flow)| FlowSample { index, flow })
                    .collect();
                let out = dag::guide(&samples, &cfg.at_step(step)).map_err(wrap)?;
                (out.v_dag, out.d_bar.norm())
            }
            None => {
                let refs: Vec<&VideoTensor> = flows.iter().collect();
                (pairwise_mean(&refs).map_err(wrap)?, 0.0)
            }
        };

        diagnostics.push(StepDiagnostics {
            step_index: k,
            t,
            n_samples,
            v_norm: velocity.norm(),
            mask_coverage,
            d_bar_norm,
        });
        state = euler_step(&state, &velocity, t_next).map_err(wrap)?;
        last_masks = masks;
    }

    Ok(EditOutcome {
        output: state.z_edit,
        diagnostics,
        noise_draws: draws.into_inner(),
        last_masks,
    })
}
