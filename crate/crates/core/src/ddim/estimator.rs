//! Noise-estimator contract and the analytic stand-ins used without a model.

use std::f64::consts::TAU;

use super::{DiffusionSchedule, Latent};
use crate::error::{Error, Result};
use crate::integrity::sm3;

/// `ε_θ(x_t, t, condition)`. Must return a tensor shaped like `x`, be
/// deterministic for fixed inputs, and be callable from several trajectories
/// at once.
pub trait NoiseEstimator: Send + Sync {
    fn estimate(&self, x: &Latent, step: usize, condition: &str) -> Result<Latent>;
}

/// `ε ≡ 0`
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroEstimator;

impl NoiseEstimator for ZeroEstimator {
    fn estimate(&self, x: &Latent, _step: usize, _condition: &str) -> Result<Latent> {
        Ok(Latent::zeros(x.height(), x.width()))
    }
}

/// `ε ≡ c`
#[derive(Debug, Clone, Copy)]
pub struct ConstantEstimator(pub f64);

impl NoiseEstimator for ConstantEstimator {
    fn estimate(&self, x: &Latent, _step: usize, _condition: &str) -> Result<Latent> {
        Ok(x.map(|_| self.0))
    }
}

/// `ε = k·x`
#[derive(Debug, Clone, Copy)]
pub struct LinearEstimator {
    pub k: f64,
}

impl NoiseEstimator for LinearEstimator {
    fn estimate(&self, x: &Latent, _step: usize, _condition: &str) -> Result<Latent> {
        Ok(x.map(|v| self.k * v))
    }
}

/// Condition-dependent analytic estimator.
///
/// `ε(x, t, c) = A · p_c(row, col) · (1 − x²/ᾱ_t)` where `p_c` is a smooth
/// separable sinusoid in `[-1, 1]` whose frequencies, phases and weight are
/// drawn from the SM3 digest of the condition. In the scaled variable
/// `y = x/√ᾱ_t` the drift vanishes at `y = ±1`, so clean latents never leave
/// `[-1, 1]`. The amplitude is small enough that an invert/reverse round trip
/// on the default 50-step grid stays far below 1e-4.
#[derive(Debug, Clone)]
pub struct AnalyticEstimator {
    alphas: Vec<f64>,
    amplitude: f64,
}

impl AnalyticEstimator {
    pub const DEFAULT_AMPLITUDE: f64 = 1e-4;

    pub fn new(schedule: &DiffusionSchedule) -> Self {
        Self::with_amplitude(schedule, Self::DEFAULT_AMPLITUDE)
    }

    pub fn with_amplitude(schedule: &DiffusionSchedule, amplitude: f64) -> Self {
        Self {
            alphas: schedule.alphas().to_vec(),
            amplitude,
        }
    }

    /// The condition's spatial pattern `p_c` for an image of the given size.
    pub fn pattern(condition: &str, height: usize, width: usize) -> Vec<f64> {
        let d = sm3(condition.as_bytes()).0;
        let unit = |i: usize| u16::from_le_bytes([d[i], d[i + 1]]) as f64 / 65536.0;
        let fx = 1.0 + (d[0] % 2) as f64;
        let fy = 1.0 + (d[1] % 2) as f64;
        let (px, py) = (unit(2), unit(4));
        let weight = 0.5 + 0.5 * unit(6);
        let mut out = Vec::with_capacity(height * width);
        for r in 0..height {
            let cy = (TAU * (fy * r as f64 / height as f64 + py)).cos();
            for c in 0..width {
                let sx = (TAU * (fx * c as f64 / width as f64 + px)).sin();
                out.push(weight * sx * cy);
            }
        }
        out
    }
}

impl NoiseEstimator for AnalyticEstimator {
    fn estimate(&self, x: &Latent, step: usize, condition: &str) -> Result<Latent> {
        let ab = *self
            .alphas
            .get(step)
            .ok_or_else(|| Error::Backend(format!("step {step} beyond schedule")))?;
        let pattern = Self::pattern(condition, x.height(), x.width());
        let data = x
            .data()
            .iter()
            .zip(&pattern)
            .map(|(&v, &p)| self.amplitude * p * (1.0 - v * v / ab))
            .collect();
        Latent::new(x.height(), x.width(), data)
    }
}

/// Builds a named toy estimator: `zero`, `analytic`, `constant:<c>` or `linear:<k>`.
pub fn toy(name: &str, schedule: &DiffusionSchedule) -> Result<Box<dyn NoiseEstimator>> {
    let parse = |v: &str| {
        v.parse::<f64>()
            .map_err(|_| Error::Backend(format!("bad toy parameter {v:?}")))
    };
    match name.split_once(':') {
        None if name == "zero" => Ok(Box::new(ZeroEstimator)),
        None if name == "analytic" => Ok(Box::new(AnalyticEstimator::new(schedule))),
        Some(("constant", v)) => Ok(Box::new(ConstantEstimator(parse(v)?))),
        Some(("linear", v)) => Ok(Box::new(LinearEstimator { k: parse(v)? })),
        _ => Err(Error::Backend(format!("unknown toy estimator {name:?}"))),
    }
}
