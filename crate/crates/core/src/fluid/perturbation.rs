//! Piecewise-linear perturbation data for the fluid model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::l1;

#[derive(Debug, Error, PartialEq)]
pub enum PerturbationError {
    #[error("need 0 < eps < sigma, got eps = {eps}, sigma = {sigma}")]
    BadScale { eps: f64, sigma: f64 },
    #[error("breakpoints must start at 0 and increase strictly")]
    BadBreakpoints,
    #[error("W has norm {norm} > eps = {eps} at t = {t}")]
    WTooLarge { t: f64, norm: f64, eps: f64 },
    #[error("theta has norm {norm} > eps = {eps}")]
    ThetaTooLarge { norm: f64, eps: f64 },
    #[error("dimension mismatch in perturbation data")]
    Dimension,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Zero,
    Sinusoid,
    #[serde(alias = "random-walk")]
    RandomWalk,
}

impl std::str::FromStr for PerturbationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "zero" => Ok(Self::Zero),
            "sinusoid" | "sine" => Ok(Self::Sinusoid),
            "randomwalk" | "random-walk" | "walk" => Ok(Self::RandomWalk),
            other => Err(format!("unknown perturbation kind {other:?}")),
        }
    }
}

/// `W` on `[0, sigma)` as linear interpolation between breakpoints (held
/// constant after the last one), plus the pool offset `theta`.
#[derive(Debug, Clone, Serialize)]
pub struct Perturbation {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    theta: Vec<f64>,
    eps: f64,
    sigma: f64,
}

impl Perturbation {
    pub fn new(
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
        theta: Vec<f64>,
        eps: f64,
        sigma: f64,
    ) -> Result<Self, PerturbationError> {
        if !(eps > 0.0 && sigma > eps) {
            return Err(PerturbationError::BadScale { eps, sigma });
        }
        if times.is_empty() || times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(PerturbationError::BadBreakpoints);
        }
        if values.len() != times.len() || values.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(PerturbationError::Dimension);
        }
        // Linear pieces attain their norm maximum at breakpoints.
        for (t, v) in times.iter().zip(&values) {
            let norm = l1(v);
            if norm > eps && *t < sigma {
                return Err(PerturbationError::WTooLarge { t: *t, norm, eps });
            }
        }
        let norm = l1(&theta);
        if norm > eps {
            return Err(PerturbationError::ThetaTooLarge { norm, eps });
        }
        Ok(Self {
            times,
            values,
            theta,
            eps,
            sigma,
        })
    }

    pub fn zero(
        classes: usize,
        pools: usize,
        eps: f64,
        sigma: f64,
    ) -> Result<Self, PerturbationError> {
        Self::new(
            vec![0.0],
            vec![vec![0.0; classes]],
            vec![0.0; pools],
            eps,
            sigma,
        )
    }

    /// Phase-shifted sines with total amplitude `0.9 eps`, sampled `per_period` times a period.
    pub fn sinusoid(
        classes: usize,
        pools: usize,
        eps: f64,
        sigma: f64,
        period: f64,
        per_period: usize,
    ) -> Result<Self, PerturbationError> {
        let amp = 0.9 * eps / classes as f64;
        let dt = period / per_period.max(4) as f64;
        let steps = (sigma / dt).ceil() as usize;
        let times: Vec<f64> = (0..=steps).map(|k| k as f64 * dt).collect();
        let values = times
            .iter()
            .map(|&t| {
                (0..classes)
                    .map(|i| {
                        let phase = std::f64::consts::TAU * i as f64 / classes as f64;
                        amp * (std::f64::consts::TAU * t / period + phase).sin()
                    })
                    .collect()
            })
            .collect();
        Self::new(times, values, vec![0.0; pools], eps, sigma)
    }

    /// Gaussian random walk with increments of size `scale * sqrt(dt)`, pulled
    /// back radially whenever its norm would exceed `0.9 eps`.
    pub fn random_walk(
        classes: usize,
        pools: usize,
        eps: f64,
        sigma: f64,
        dt: f64,
        scale: f64,
        seed: u64,
    ) -> Result<Self, PerturbationError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cap = 0.9 * eps;
        let steps = (sigma / dt).ceil() as usize;
        let mut times = Vec::with_capacity(steps + 1);
        let mut values = Vec::with_capacity(steps + 1);
        let mut w = vec![0.0; classes];
        for k in 0..=steps {
            times.push(k as f64 * dt);
            values.push(w.clone());
            for x in w.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x += scale * dt.sqrt() * z;
            }
            let norm = l1(&w);
            if norm > cap {
                w.iter_mut().for_each(|x| *x *= cap / norm);
            }
        }
        Self::new(times, values, vec![0.0; pools], eps, sigma)
    }

    pub fn with_theta(mut self, theta: Vec<f64>) -> Result<Self, PerturbationError> {
        let norm = l1(&theta);
        if norm > self.eps {
            return Err(PerturbationError::ThetaTooLarge {
                norm,
                eps: self.eps,
            });
        }
        self.theta = theta;
        Ok(self)
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn classes(&self) -> usize {
        self.values[0].len()
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.values[0].clone();
        }
        if k == self.times.len() {
            return self.values[k - 1].clone();
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let f = (t - t0) / (t1 - t0);
        self.values[k - 1]
            .iter()
            .zip(&self.values[k])
            .map(|(a, b)| a + f * (b - a))
            .collect()
    }

    /// First breakpoint strictly after `t`, if any.
    pub fn next_breakpoint(&self, t: f64) -> Option<f64> {
        let k = self.times.partition_point(|&s| s <= t);
        self.times.get(k).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_and_hold() {
        let p = Perturbation::new(
            vec![0.0, 1.0],
            vec![vec![0.0], vec![0.4]],
            vec![0.0],
            0.5,
            2.0,
        )
        .unwrap();
        assert!((p.at(0.5)[0] - 0.2).abs() < 1e-15);
        assert_eq!(p.at(1.7)[0], 0.4);
        assert_eq!(p.next_breakpoint(0.2), Some(1.0));
        assert_eq!(p.next_breakpoint(1.0), None);
    }

    #[test]
    fn generators_respect_envelope() {
        let s = Perturbation::sinusoid(3, 2, 1e-2, 1.0, 0.25, 32).unwrap();
        let w = Perturbation::random_walk(3, 2, 1e-2, 1.0, 1e-3, 0.1, 5).unwrap();
        for t in (0..1000).map(|k| k as f64 * 1e-3) {
            assert!(l1(&s.at(t)) <= 0.9e-2 + 1e-15);
            assert!(l1(&w.at(t)) <= 0.9e-2 + 1e-15);
        }
    }

    #[test]
    fn oversized_data_rejected() {
        assert!(Perturbation::new(vec![0.0], vec![vec![1.0]], vec![0.0], 0.5, 1.0).is_err());
        assert!(Perturbation::zero(1, 1, 0.5, 1.0)
            .unwrap()
            .with_theta(vec![0.6])
            .is_err());
    }
}
