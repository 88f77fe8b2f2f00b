//! Closed-form rectified-flow velocity fields.
//!
//! Convention: `x_t = (1 - t) * x_data + t * eps`, `eps ~ N(0, I)`, so `t = 1`
//! is pure noise and the marginal velocity is `E[eps - x_data | x_t = x]`.
//! Sampling and editing integrate from `t = 1` toward `t = 0`.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::condition::Condition;
use crate::error::{Error, Result};
use crate::rng::{self, Domain, SeedSpec};
use crate::tensor::VideoTensor;

/// One isotropic Gaussian mixture component.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub center: VideoTensor,
    pub sigma: f64,
}

/// Data distribution a condition stands for.
#[derive(Clone, Debug, PartialEq)]
pub enum DataDistribution {
    Delta { center: VideoTensor },
    IsotropicGaussian { center: VideoTensor, sigma: f64 },
    Mixture { components: Vec<Component> },
}

impl DataDistribution {
    pub fn delta(center: VideoTensor) -> Self {
        DataDistribution::Delta { center }
    }

    pub fn gaussian(center: VideoTensor, sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(DataDistribution::IsotropicGaussian { center, sigma })
    }

    pub fn mixture(components: Vec<Component>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::invalid("mixture needs at least one component"))?;
        let mut total = 0.0;
        for c in &components {
            first.center.check_compatible(&c.center)?;
            check_sigma(c.sigma)?;
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::invalid(format!("mixture weight {} must be positive", c.weight)));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(DataDistribution::Mixture { components })
    }

    /// Center of the first (or only) component.
    pub fn center(&self) -> &VideoTensor {
        match self {
            DataDistribution::Delta { center } | DataDistribution::IsotropicGaussian { center, .. } => center,
            DataDistribution::Mixture { components } => &components[0].center,
        }
    }

    /// Marginal velocity of this distribution at `(x, t)`.
    pub fn velocity(&self, x: &VideoTensor, t: f64) -> Result<VideoTensor> {
        match self {
            DataDistribution::Delta { center } => delta_velocity(x, t, center),
            DataDistribution::IsotropicGaussian { center, sigma } => gaussian_velocity(x, t, center, *sigma),
            DataDistribution::Mixture { components } => mixture_velocity(x, t, components),
        }
    }

    /// Draws one data sample.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> VideoTensor {
        let (center, sigma) = match self {
            DataDistribution::Delta { center } => return center.clone(),
            DataDistribution::IsotropicGaussian { center, sigma } => (center, *sigma),
            DataDistribution::Mixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = components.last().unwrap();
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        chosen = c;
                        break;
                    }
                }
                (&chosen.center, chosen.sigma)
            }
        };
        center.map(|m| {
            let z: f64 = StandardNormal.sample(rng);
            m + sigma * z
        })
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("sigma must be positive, got {sigma}")))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t == 0.0 {
        return Err(Error::Singularity);
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::invalid(format!("time {t} outside (0, 1]")));
    }
    Ok(())
}

/// Velocity for point-mass data at `mu`: `(x - mu) / t`.
pub fn delta_velocity(x: &VideoTensor, t: f64, mu: &VideoTensor) -> Result<VideoTensor> {
    check_time(t)?;
    x.zip_map(mu, |x, m| (x - m) / t)
}

/// Velocity for `N(center, sigma^2 I)` data.
///
/// With `m = (1-t) center` and `s^2 = (1-t)^2 sigma^2 + t^2`, the velocity is
/// `((t - (1-t) sigma^2) / s^2) (x - m) - center`.
pub fn gaussian_velocity(x: &VideoTensor, t: f64, center: &VideoTensor, sigma: f64) -> Result<VideoTensor> {
    check_time(t)?;
    check_sigma(sigma)?;
    let one_minus = 1.0 - t;
    let var = one_minus * one_minus * sigma * sigma + t * t;
    let gain = (t - one_minus * sigma * sigma) / var;
    x.zip_map(center, |x, c| gain * (x - one_minus * c) - c)
}

/// Posterior component weights `w_k(x, t)` of a mixture, normalized with
/// log-sum-exp.
pub fn mixture_posterior(x: &VideoTensor, t: f64, components: &[Component]) -> Result<Vec<f64>> {
    check_time(t)?;
    let n = x.len() as f64;
    let one_minus = 1.0 - t;
    let mut logs = Vec::with_capacity(components.len());
    for c in components {
        x.check_compatible(&c.center)?;
        let var = one_minus * one_minus * c.sigma * c.sigma + t * t;
        let dist2: f64 = x
            .data()
            .iter()
            .zip(c.center.data())
            .map(|(&xv, &cv)| {
                let d = xv - one_minus * cv;
                d * d
            })
            .sum();
        logs.push(c.weight.ln() - 0.5 * n * var.ln() - dist2 / (2.0 * var));
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    let exps: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegeneratePosterior);
    }
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Velocity for an isotropic Gaussian mixture: posterior-weighted component
/// velocities.
pub fn mixture_velocity(x: &VideoTensor, t: f64, components: &[Component]) -> Result<VideoTensor> {
    let weights = mixture_posterior(x, t, components)?;
    let mut out = vec![0.0; x.len()];
    for (w, c) in weights.iter().zip(components) {
        if *w == 0.0 {
            continue;
        }
        let v = gaussian_velocity(x, t, &c.center, c.sigma)?;
        for (o, vi) in out.iter_mut().zip(v.data()) {
            *o += w * vi;
        }
    }
    VideoTensor::new(x.dims(), out)
}

/// Classifier-free guidance: `v_uncond + scale * (v_cond - v_uncond)`.
pub fn cfg_combine(v_uncond: &VideoTensor, v_cond: &VideoTensor, scale: f64) -> Result<VideoTensor> {
    if scale == 1.0 {
        v_uncond.check_compatible(v_cond)?;
        return Ok(v_cond.clone());
    }
    v_uncond.zip_map(v_cond, |u, c| u + scale * (c - u))
}

/// A velocity field `v(x, t, c)`.
pub trait VelocityField: Send + Sync {
    fn velocity(&self, x: &VideoTensor, t: f64, condition: &Condition) -> Result<VideoTensor>;
}

impl<F: VelocityField + ?Sized> VelocityField for &F {
    fn velocity(&self, x: &VideoTensor, t: f64, condition: &Condition) -> Result<VideoTensor> {
        (**self).velocity(x, t, condition)
    }
}

/// Exact marginal velocities for a registry of named distributions.
#[derive(Clone, Debug, Default)]
pub struct AnalyticField {
    registry: BTreeMap<String, DataDistribution>,
}

impl AnalyticField {
    pub fn new(registry: BTreeMap<String, DataDistribution>) -> Self {
        Self { registry }
    }

    pub fn insert(&mut self, key: impl Into<String>, dist: DataDistribution) {
        self.registry.insert(key.into(), dist);
    }

    pub fn distribution(&self, condition: &Condition) -> Result<&DataDistribution> {
        self.registry
            .get(&condition.distribution)
            .ok_or_else(|| Error::NotFound(format!("distribution '{}'", condition.distribution)))
    }

    pub fn registry(&self) -> &BTreeMap<String, DataDistribution> {
        &self.registry
    }
}

impl VelocityField for AnalyticField {
    fn velocity(&self, x: &VideoTensor, t: f64, condition: &Condition) -> Result<VideoTensor> {
        self.distribution(condition)?.velocity(x, t)
    }
}

/// Monte-Carlo flow-matching loss `E ||v(x_t, t, c) - (eps - x_data)||^2`.
///
/// `t` is drawn from `(0, 1]`, `x_data` from `dist` and `eps` from `N(0, I)`.
/// Sample `i` uses the stream `seed.with(seed.step, i)`, so the estimate is
/// deterministic and independent of thread scheduling.
pub fn fm_loss(
    field: &dyn VelocityField,
    dist: &DataDistribution,
    condition: &Condition,
    n_samples: usize,
    seed: SeedSpec,
) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::invalid("fm_loss needs at least one sample"));
    }
    let losses: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::stream(seed.with(seed.step, i as u32), Domain::LossSampling);
            let u: f64 = rng.random();
            let t = 1.0 - u;
            let data = dist.sample(&mut rng);
            let eps = data.map(|_| StandardNormal.sample(&mut rng));
            let x_t = data.zip_map(&eps, |d, e| (1.0 - t) * d + t * e)?;
            let v = field.velocity(&x_t, t, condition)?;
            let mut sq = 0.0;
            for ((vi, di), ei) in v.data().iter().zip(data.data()).zip(eps.data()) {
                let r = vi - (ei - di);
                sq += r * r;
            }
            Ok(sq)
        })
        .collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / n_samples as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;

    fn scalar(v: f64) -> VideoTensor {
        VideoTensor::new(Dims::new(1, 1, 1, 1), vec![v]).unwrap()
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_velocity(&scalar(1.0), 0.5, &scalar(0.0)).unwrap().data(), &[2.0]);
        assert_eq!(delta_velocity(&scalar(3.0), 1.0, &scalar(1.0)).unwrap().data(), &[2.0]);
        assert_eq!(delta_velocity(&scalar(0.7), 0.3, &scalar(0.7)).unwrap().data(), &[0.0]);
        assert!(matches!(delta_velocity(&scalar(1.0), 0.0, &scalar(0.0)), Err(Error::Singularity)));
    }

    #[test]
    fn gaussian_examples() {
        assert_eq!(gaussian_velocity(&scalar(1.0), 0.5, &scalar(0.0), 1.0).unwrap().data(), &[0.0]);
        // x = m with a zero center.
        assert_eq!(gaussian_velocity(&scalar(0.0), 0.3, &scalar(0.0), 2.0).unwrap().data(), &[0.0]);
        assert!(gaussian_velocity(&scalar(0.0), 0.3, &scalar(0.0), 0.0).is_err());
    }

    #[test]
    fn gaussian_small_sigma_approaches_delta() {
        for &t in &[0.05, 0.2, 0.5, 0.9, 1.0] {
            for &x in &[-2.0, -0.3, 0.0, 0.8, 3.0] {
                let g = gaussian_velocity(&scalar(x), t, &scalar(0.4), 1e-4).unwrap().data()[0];
                let d = delta_velocity(&scalar(x), t, &scalar(0.4)).unwrap().data()[0];
                assert!((g - d).abs() < 1e-5 * (1.0 + d.abs()), "t={t} x={x}: {g} vs {d}");
            }
        }
    }

    #[test]
    fn mixture_single_component_reduces_to_gaussian() {
        let c = vec![Component { weight: 1.0, center: scalar(0.7), sigma: 0.4 }];
        let m = mixture_velocity(&scalar(0.2), 0.6, &c).unwrap();
        let g = gaussian_velocity(&scalar(0.2), 0.6, &scalar(0.7), 0.4).unwrap();
        assert!((m.data()[0] - g.data()[0]).abs() < 1e-15);
    }

    #[test]
    fn mixture_symmetric_components_cancel_at_origin() {
        let mu = VideoTensor::new(Dims::new(1, 1, 2, 1), vec![1.0, -2.0]).unwrap();
        let c = vec![
            Component { weight: 0.5, center: mu.clone(), sigma: 0.3 },
            Component { weight: 0.5, center: mu.scale(-1.0), sigma: 0.3 },
        ];
        let v = mixture_velocity(&VideoTensor::zeros(mu.dims()).unwrap(), 0.4, &c).unwrap();
        let along: f64 = v.data().iter().zip(mu.data()).map(|(a, b)| a * b).sum();
        assert!(along.abs() < 1e-12);
    }

    #[test]
    fn mixture_weights_survive_tiny_times() {
        let c = vec![
            Component { weight: 0.3, center: scalar(-5.0), sigma: 1e-3 },
            Component { weight: 0.7, center: scalar(5.0), sigma: 1e-3 },
        ];
        let w = mixture_posterior(&scalar(4.9), 1e-4, &c).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w[1] > 0.999);
    }

    #[test]
    fn mixture_validation() {
        assert!(DataDistribution::mixture(vec![]).is_err());
        assert!(DataDistribution::mixture(vec![Component { weight: 0.5, center: scalar(0.0), sigma: 1.0 }]).is_err());
    }

    #[test]
    fn cfg_examples() {
        let u = scalar(1.0);
        let c = scalar(2.0);
        assert_eq!(cfg_combine(&u, &c, 3.5).unwrap().data(), &[4.5]);
        assert_eq!(cfg_combine(&u, &c, 1.0).unwrap().data(), &[2.0]);
        assert_eq!(cfg_combine(&u, &c, 0.0).unwrap().data(), &[1.0]);
    }

    #[test]
    fn analytic_field_unknown_condition() {
        let f = AnalyticField::default();
        let c = Condition::named("missing").unwrap();
        assert!(matches!(f.velocity(&scalar(0.0), 0.5, &c), Err(Error::NotFound(_))));
    }
}
