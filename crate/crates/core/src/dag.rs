//! Differential averaging guidance.
//!
//! From `L_HQ` masked editing velocities (one per noise draw) the guided
//! velocity is `V_HQ + w * mean_i(V_HQ - V_BL,i)`, where `V_HQ` averages all
//! draws and each baseline `V_BL,i` averages an `L_BL`-subset of them.
//! Baselines reuse the existing draws; no extra field evaluations are made.

use rand::seq::index;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain, SeedSpec};
use crate::tensor::{pairwise_mean, VideoTensor};

/// One masked editing velocity for a single noise draw.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSample {
    pub index: usize,
    pub flow: VideoTensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetMode {
    /// All `C(l_hq, l_bl)` subsets in lexicographic order.
    Exhaustive,
    /// `k_subsets` distinct subsets drawn with `seed`.
    Random { k_subsets: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DagConfig {
    pub l_hq: usize,
    pub l_bl: usize,
    pub subset_mode: SubsetMode,
    pub w: f64,
}

impl Default for DagConfig {
    fn default() -> Self {
        Self {
            l_hq: 4,
            l_bl: 2,
            subset_mode: SubsetMode::Exhaustive,
            w: 2.75,
        }
    }
}

impl DagConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.l_bl && self.l_bl < self.l_hq) {
            return Err(Error::invalid(format!(
                "DAG needs 1 <= l_bl < l_hq, got l_bl = {}, l_hq = {}",
                self.l_bl, self.l_hq
            )));
        }
        if !self.w.is_finite() {
            return Err(Error::invalid("DAG weight w must be finite"));
        }
        if let SubsetMode::Random { k_subsets, .. } = self.subset_mode {
            let total = binomial(self.l_hq, self.l_bl);
            if k_subsets == 0 || k_subsets > total {
                return Err(Error::invalid(format!(
                    "k_subsets must be in 1..={total}, got {k_subsets}"
                )));
            }
        }
        Ok(())
    }

    /// The configuration used at integration step `step`: random subset draws
    /// get a per-step stream so different steps pick different subsets.
    pub fn at_step(&self, step: u32) -> DagConfig {
        let mut cfg = *self;
        if let SubsetMode::Random { k_subsets, seed } = self.subset_mode {
            let mut derived = rng::stream(SeedSpec::new(seed, step, 1), Domain::Subsets);
            cfg.subset_mode = SubsetMode::Random {
                k_subsets,
                seed: derived.next_u64(),
            };
        }
        cfg
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// All size-`k` subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(n, k));
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Index subsets used for the baselines under `cfg`.
pub fn select_subsets(cfg: &DagConfig) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let all = combinations(cfg.l_hq, cfg.l_bl);
    match cfg.subset_mode {
        SubsetMode::Exhaustive => Ok(all),
        SubsetMode::Random { k_subsets, seed } => {
            let mut rng = rng::stream(SeedSpec::new(seed, 0, 0), Domain::Subsets);
            let mut picks = index::sample(&mut rng, all.len(), k_subsets).into_vec();
            picks.sort_unstable();
            Ok(picks.into_iter().map(|i| all[i].clone()).collect())
        }
    }
}

fn flows(samples: &[FlowSample]) -> Vec<&VideoTensor> {
    samples.iter().map(|s| &s.flow).collect()
}

/// High-quality estimate: the mean of every sample flow.
pub fn hq_estimate(samples: &[FlowSample]) -> Result<VideoTensor> {
    if samples.is_empty() {
        return Err(Error::invalid("V_HQ needs at least one sample"));
    }
    pairwise_mean(&flows(samples))
}

/// Baseline estimates: the mean of each selected `l_bl`-subset.
pub fn baseline_estimates(samples: &[FlowSample], cfg: &DagConfig) -> Result<Vec<VideoTensor>> {
    cfg.validate()?;
    if samples.len() != cfg.l_hq {
        return Err(Error::invalid(format!(
            "expected {} samples, got {}",
            cfg.l_hq,
            samples.len()
        )));
    }
    select_subsets(cfg)?
        .iter()
        .map(|subset| {
            let picked: Vec<&VideoTensor> = subset.iter().map(|&i| &samples[i].flow).collect();
            pairwise_mean(&picked)
        })
        .collect()
}

/// `mean_i(v_hq - baseline_i)`.
pub fn mean_differential(v_hq: &VideoTensor, baselines: &[VideoTensor]) -> Result<VideoTensor> {
    if baselines.is_empty() {
        return Err(Error::invalid("mean differential needs at least one baseline"));
    }
    let diffs = baselines
        .iter()
        .map(|b| v_hq.sub(b))
        .collect::<Result<Vec<_>>>()?;
    pairwise_mean(&diffs.iter().collect::<Vec<_>>())
}

/// `v_hq + w * d_bar`.
pub fn dag_velocity(v_hq: &VideoTensor, d_bar: &VideoTensor, w: f64) -> Result<VideoTensor> {
    v_hq.zip_map(d_bar, |v, d| v + w * d)
}

/// Result of one guidance evaluation.
#[derive(Clone, Debug)]
pub struct DagOutput {
    pub v_hq: VideoTensor,
    pub d_bar: VideoTensor,
    pub v_dag: VideoTensor,
}

pub fn guide(samples: &[FlowSample], cfg: &DagConfig) -> Result<DagOutput> {
    let v_hq = hq_estimate(samples)?;
    let baselines = baseline_estimates(samples, cfg)?;
    let d_bar = mean_differential(&v_hq, &baselines)?;
    let v_dag = dag_velocity(&v_hq, &d_bar, cfg.w)?;
    Ok(DagOutput { v_hq, d_bar, v_dag })
}
