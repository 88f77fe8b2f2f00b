//! JSON run configuration for `edit`.
//!
//! Every key is optional except the scene and the two condition ids; missing
//! keys take the library defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dag::{DagConfig, SubsetMode};
use crate::engine::{run_edit, CfgScales, EditOptions, EditOutcome, SafcOptions};
use crate::error::{Error, Result};
use crate::safc::{AttentionProvider, MaskConfig};
use crate::rng::SeedSpec;
use crate::scenes::{render_scene, SceneBundle, SceneSpec};
use crate::schedule::EditSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub n_total: usize,
    pub n_skip: usize,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self { n_total: 50, n_skip: 10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfgSection {
    pub s_src: f64,
    pub s_tar: f64,
}

impl Default for CfgSection {
    fn default() -> Self {
        let d = CfgScales::default();
        Self { s_src: d.s_src, s_tar: d.s_tar }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Channel norm of the conditional-minus-null velocity.
    #[default]
    Saliency,
    /// Object support from the scene registry.
    Scripted,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafcSection {
    pub enabled: bool,
    pub kernel: usize,
    pub delta: f64,
    pub apply_softening: bool,
    pub provider: ProviderKind,
    /// Amplitude of seeded noise added to scripted attention.
    pub attention_noise: f64,
    pub per_sample_masks: bool,
    pub freeze_step0: bool,
}

impl Default for SafcSection {
    fn default() -> Self {
        let m = MaskConfig::default();
        Self {
            enabled: false,
            kernel: m.kernel,
            delta: m.delta,
            apply_softening: m.apply_softening,
            provider: ProviderKind::default(),
            attention_noise: 0.0,
            per_sample_masks: false,
            freeze_step0: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetKind {
    #[default]
    Exhaustive,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DagSection {
    pub enabled: bool,
    pub l_hq: usize,
    pub l_bl: usize,
    pub subset_mode: SubsetKind,
    pub k_subsets: usize,
    pub w: f64,
}

impl Default for DagSection {
    fn default() -> Self {
        let d = DagConfig::default();
        Self {
            enabled: false,
            l_hq: d.l_hq,
            l_bl: d.l_bl,
            subset_mode: SubsetKind::Exhaustive,
            k_subsets: 1,
            w: d.w,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Scene manifest; relative paths resolve against the config's directory.
    pub scene: PathBuf,
    pub c_src: String,
    pub c_tar: String,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub cfg: CfgSection,
    /// Noise draws averaged per step when guidance is off.
    #[serde(default = "one")]
    pub n_samples: usize,
    #[serde(default)]
    pub safc: SafcSection,
    #[serde(default)]
    pub dag: DagSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn one() -> usize {
    1
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::invalid(format!("config field `{}`: {}", e.path(), e.inner())))
    }

    /// Reads a config and makes its scene path absolute.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(path.display().to_string()),
            _ => Error::Io(e),
        })?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_scene(path.parent().unwrap_or(Path::new(".")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Joins a relative scene path onto `base`, makes it absolute and checks
    /// that it exists.
    pub fn resolve_scene(&mut self, base: &Path) -> Result<()> {
        if self.scene.is_relative() {
            self.scene = base.join(&self.scene);
        }
        if !self.scene.is_file() {
            return Err(Error::NotFound(format!("scene manifest {}", self.scene.display())));
        }
        self.scene = std::path::absolute(&self.scene)?;
        Ok(())
    }

    /// Renders the scene and runs the edit it describes.
    pub fn execute(&self) -> Result<EditOutcome> {
        self.validate()?;
        let text = std::fs::read_to_string(&self.scene)
            .map_err(|_| Error::NotFound(format!("scene manifest {}", self.scene.display())))?;
        let scene = render_scene(&SceneSpec::from_json(&text)?, SeedSpec::new(self.master_seed, 0, 0))?;
        run_edit(
            &scene.video,
            &scene.condition(&self.c_src)?,
            &scene.condition(&self.c_tar)?,
            &self.edit_schedule()?,
            &scene.field()?,
            &self.edit_options(&scene)?,
            SeedSpec::new(self.master_seed, 0, 0),
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.edit_schedule()?;
        self.mask_config().validate()?;
        self.dag_params().validate()?;
        if self.n_samples == 0 {
            return Err(Error::invalid("n_samples must be at least 1"));
        }
        if !(self.safc.attention_noise >= 0.0 && self.safc.attention_noise.is_finite()) {
            return Err(Error::invalid("safc.attention_noise must be a nonnegative number"));
        }
        if !(self.cfg.s_src.is_finite() && self.cfg.s_tar.is_finite()) {
            return Err(Error::invalid("guidance scales must be finite"));
        }
        Ok(())
    }

    /// Config with defaults materialized and no output directory, so feeding
    /// it back reproduces the run.
    pub fn resolved(&self) -> RunConfig {
        RunConfig {
            output: None,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn edit_schedule(&self) -> Result<EditSchedule> {
        EditSchedule::new(self.schedule.n_total, self.schedule.n_skip)
    }

    pub fn mask_config(&self) -> MaskConfig {
        MaskConfig {
            kernel: self.safc.kernel,
            delta: self.safc.delta,
            apply_softening: self.safc.apply_softening,
        }
    }

    pub fn dag_config(&self) -> Option<DagConfig> {
        self.dag.enabled.then(|| self.dag_params())
    }

    fn dag_params(&self) -> DagConfig {
        let d = &self.dag;
        DagConfig {
            l_hq: d.l_hq,
            l_bl: d.l_bl,
            subset_mode: match d.subset_mode {
                SubsetKind::Exhaustive => SubsetMode::Exhaustive,
                SubsetKind::Random => SubsetMode::Random {
                    k_subsets: d.k_subsets,
                    seed: self.master_seed,
                },
            },
            w: d.w,
        }
    }

    /// Engine options; scripted attention is read from `scene`.
    pub fn edit_options(&self, scene: &SceneBundle) -> Result<EditOptions> {
        let safc = if self.safc.enabled {
            let provider = match self.safc.provider {
                ProviderKind::Saliency => AttentionProvider::Saliency,
                ProviderKind::Scripted => {
                    AttentionProvider::Scripted(scene.scripted_attention(self.safc.attention_noise, self.master_seed)?)
                }
            };
            Some(SafcOptions {
                mask: self.mask_config(),
                provider,
                per_sample_masks: self.safc.per_sample_masks,
                freeze_step0: self.safc.freeze_step0,
            })
        } else {
            None
        };
        Ok(EditOptions {
            cfg: CfgScales {
                s_src: self.cfg.s_src,
                s_tar: self.cfg.s_tar,
            },
            safc,
            dag: self.dag_config(),
            n_samples: self.n_samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_config_materializes_defaults() {
        let cfg = RunConfig::from_json(r#"{"scene": "s.json", "c_src": "a", "c_tar": "b"}"#).unwrap();
        assert_eq!((cfg.schedule.n_total, cfg.schedule.n_skip), (50, 10));
        assert_eq!((cfg.safc.kernel, cfg.safc.delta), (11, 0.25));
        assert_eq!((cfg.cfg.s_src, cfg.cfg.s_tar), (3.5, 10.5));
        assert_eq!((cfg.dag.l_hq, cfg.dag.l_bl, cfg.dag.w), (4, 2, 2.75));
        let json = cfg.resolved().to_json().unwrap();
        for key in ["\"n_total\": 50", "\"n_skip\": 10", "\"kernel\": 11", "\"delta\": 0.25", "\"s_src\": 3.5",
            "\"s_tar\": 10.5", "\"l_hq\": 4", "\"l_bl\": 2", "\"w\": 2.75"]
        {
            assert!(json.contains(key), "{key} missing from {json}");
        }
        assert_eq!(RunConfig::from_json(&json).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_rejected_with_path() {
        let err = RunConfig::from_json(r#"{"scene": "s", "c_src": "a", "c_tar": "b", "dag": {"l_hq": 4, "beta": 1}}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("dag"), "{err}");
        assert!(err.contains("beta"), "{err}");
    }

    #[test]
    fn constraint_violations() {
        let base = |extra: &str| {
            RunConfig::from_json(&format!(r#"{{"scene": "s", "c_src": "a", "c_tar": "b", {extra}}}"#)).unwrap()
        };
        assert!(base(r#""safc": {"kernel": 4}"#).validate().is_err());
        assert!(base(r#""dag": {"enabled": true, "l_hq": 2, "l_bl": 2}"#).validate().is_err());
        assert!(base(r#""dag": {"enabled": false, "l_hq": 2, "l_bl": 2}"#).validate().is_err());
        assert!(base(r#""schedule": {"n_total": 5, "n_skip": 5}"#).validate().is_err());
        assert!(base(r#""n_samples": 0"#).validate().is_err());
    }
}
