//! Closed-form velocities checked against the posterior-mean identity
//! `v = -t s - (x + t^2 s) / (1 - t)`, where `s` is the score of the noised
//! marginal, obtained here by finite differences of an explicit log density.

mod common;

use common::rng;
use flowdirector::fields::{
    cfg_combine, fm_loss, AnalyticField, Component, DataDistribution, VelocityField,
};
use flowdirector::{Condition, Dims, Result, SeedSpec, VideoTensor};
use proptest::prelude::*;
use rand::Rng;

/// `(weight, center, sigma)` with sigma = 0 for a point mass.
type Mix = Vec<(f64, Vec<f64>, f64)>;

fn log_density(mix: &Mix, x: &[f64], t: f64) -> f64 {
    let d = x.len() as f64;
    let terms: Vec<f64> = mix
        .iter()
        .map(|(w, c, sigma)| {
            let s2 = (1.0 - t).powi(2) * sigma * sigma + t * t;
            let r2: f64 = x.iter().zip(c).map(|(xi, ci)| (xi - (1.0 - t) * ci).powi(2)).sum();
            w.ln() - 0.5 * d * (2.0 * std::f64::consts::PI * s2).ln() - r2 / (2.0 * s2)
        })
        .collect();
    let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + terms.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn oracle_velocity(mix: &Mix, x: &[f64], t: f64) -> Vec<f64> {
    let h = 1e-5;
    (0..x.len())
        .map(|i| {
            let (mut up, mut dn) = (x.to_vec(), x.to_vec());
            up[i] += h;
            dn[i] -= h;
            let s = (log_density(mix, &up, t) - log_density(mix, &dn, t)) / (2.0 * h);
            -t * s - (x[i] + t * t * s) / (1.0 - t)
        })
        .collect()
}

fn tensor(v: &[f64]) -> VideoTensor {
    VideoTensor::new(Dims::new(1, 1, v.len(), 1), v.to_vec()).unwrap()
}

fn to_distribution(mix: &Mix) -> DataDistribution {
    if mix.len() == 1 && mix[0].2 == 0.0 {
        return DataDistribution::delta(tensor(&mix[0].1));
    }
    if mix.len() == 1 {
        return DataDistribution::gaussian(tensor(&mix[0].1), mix[0].2).unwrap();
    }
    DataDistribution::mixture(
        mix.iter()
            .map(|(w, c, s)| Component {
                weight: *w,
                center: tensor(c),
                sigma: *s,
            })
            .collect(),
    )
    .unwrap()
}

fn check(mix: &Mix, x: &[f64], t: f64) {
    let got = to_distribution(mix).velocity(&tensor(x), t).unwrap();
    let want = oracle_velocity(mix, x, t);
    for (g, w) in got.data().iter().zip(&want) {
        assert!((g - w).abs() <= 1e-5 * (1.0 + w.abs()), "t={t} x={x:?}: {g} vs {w}");
    }
}

#[test]
fn delta_matches_posterior_identity() {
    let mut r = rng(10);
    for _ in 0..50 {
        let d = r.random_range(1..4);
        let c: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        check(&vec![(1.0, c, 0.0)], &x, r.random_range(0.1..0.9));
    }
}

#[test]
fn gaussian_matches_posterior_identity() {
    let mut r = rng(11);
    for _ in 0..50 {
        let d = r.random_range(1..4);
        let c: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        check(&vec![(1.0, c, r.random_range(0.05..2.0))], &x, r.random_range(0.05..0.95));
    }
}

#[test]
fn mixture_matches_posterior_identity() {
    let mut r = rng(12);
    for _ in 0..50 {
        let d = r.random_range(1..3);
        let k = r.random_range(2..4);
        let raw: Vec<f64> = (0..k).map(|_| r.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut mix: Mix = raw
            .iter()
            .map(|w| {
                let c: Vec<f64> = (0..d).map(|_| r.random_range(-1.5..1.5)).collect();
                (w / total, c, r.random_range(0.1..1.0))
            })
            .collect();
        // Renormalize so the sum is 1 up to rounding the constructor accepts.
        let s: f64 = mix.iter().map(|m| m.0).sum();
        mix.iter_mut().for_each(|m| m.0 /= s);
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        check(&mix, &x, r.random_range(0.1..0.9));
    }
}

#[test]
fn velocity_at_t_one_is_noise_minus_mean() {
    // At t = 1 the state is pure noise and E[x_data | x] is the data mean.
    let x = tensor(&[0.7, -1.2]);
    let c = tensor(&[0.25, 0.5]);
    for dist in [
        DataDistribution::delta(c.clone()),
        DataDistribution::gaussian(c.clone(), 0.8).unwrap(),
    ] {
        let v = dist.velocity(&x, 1.0).unwrap();
        assert!((v.data()[0] - 0.45).abs() < 1e-12);
        assert!((v.data()[1] + 1.7).abs() < 1e-12);
    }
}

struct Scaled<F>(F, f64);

impl<F: VelocityField> VelocityField for Scaled<F> {
    fn velocity(&self, x: &VideoTensor, t: f64, c: &Condition) -> Result<VideoTensor> {
        Ok(self.0.velocity(x, t, c)?.scale(self.1))
    }
}

#[test]
fn delta_field_has_zero_loss() {
    let c = Condition::named("d").unwrap();
    let dist = DataDistribution::delta(tensor(&[0.3, -0.1, 0.8]));
    let mut field = AnalyticField::default();
    field.insert("d", dist.clone());
    let loss = fm_loss(&field, &dist, &c, 500, SeedSpec::new(3, 0, 0)).unwrap();
    assert!(loss < 1e-10, "{loss}");
}

#[test]
fn exact_gaussian_field_beats_perturbations() {
    let c = Condition::named("g").unwrap();
    let dist = DataDistribution::gaussian(tensor(&[0.3, -0.4]), 0.6).unwrap();
    let mut field = AnalyticField::default();
    field.insert("g", dist.clone());
    let seed = SeedSpec::new(9, 0, 0);
    let base = fm_loss(&field, &dist, &c, 4000, seed).unwrap();
    for s in [0.8, 0.95, 1.05, 1.2] {
        let other = fm_loss(&Scaled(&field, s), &dist, &c, 4000, seed).unwrap();
        assert!(other > base, "scale {s}: {other} <= {base}");
    }
}

#[test]
fn fm_loss_is_deterministic() {
    let c = Condition::named("g").unwrap();
    let dist = DataDistribution::gaussian(tensor(&[0.1; 4]), 0.3).unwrap();
    let mut field = AnalyticField::default();
    field.insert("g", dist.clone());
    let a = fm_loss(&field, &dist, &c, 300, SeedSpec::new(1, 2, 0)).unwrap();
    let b = fm_loss(&field, &dist, &c, 300, SeedSpec::new(1, 2, 0)).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

proptest! {
    #[test]
    fn cfg_is_affine_in_scale(u in -5.0f64..5.0, c in -5.0f64..5.0, s in -3.0f64..12.0) {
        let (vu, vc) = (tensor(&[u]), tensor(&[c]));
        let got = cfg_combine(&vu, &vc, s).unwrap().data()[0];
        prop_assert!((got - (u + s * (c - u))).abs() <= 1e-12 * (1.0 + got.abs()));
        prop_assert!(cfg_combine(&vu, &vc, 1.0).unwrap().bit_eq(&vc));
    }

    #[test]
    fn gaussian_velocity_is_affine_in_state(x in -3.0f64..3.0, y in -3.0f64..3.0, t in 0.05f64..1.0, sigma in 0.05f64..2.0) {
        let dist = DataDistribution::gaussian(tensor(&[0.2]), sigma).unwrap();
        let vx = dist.velocity(&tensor(&[x]), t).unwrap().data()[0];
        let vy = dist.velocity(&tensor(&[y]), t).unwrap().data()[0];
        let vm = dist.velocity(&tensor(&[0.5 * (x + y)]), t).unwrap().data()[0];
        prop_assert!((vm - 0.5 * (vx + vy)).abs() <= 1e-9 * (1.0 + vx.abs() + vy.abs()));
    }
}
