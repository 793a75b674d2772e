//! Deterministic DDIM sampling (σ_t = 0) and its Euler-discretized inversion.
//!
//! With `y_t = x_t / √ᾱ_t` and `σ(t) = √((1 − ᾱ_t) / ᾱ_t)`, both directions
//! step over the same sub-step grid `0 = t_0 < t_1 < … < t_S = T`:
//!
//! ```text
//! invert:  y(t_{i+1}) = y(t_i)     + (σ(t_{i+1}) − σ(t_i)) · ε(x_{t_i}, t_i)
//! reverse: y(t_i)     = y(t_{i+1}) − (σ(t_{i+1}) − σ(t_i)) · ε(x_{t_{i+1}}, t_{i+1})
//! ```
//!
//! The reverse update is the usual DDIM step written in the same variables.
//! The latent is the image itself mapped to `[-1, 1]`; there is no autoencoder.

pub mod estimator;
pub mod protocol;

use crate::error::{Error, Result};
use crate::raster::PixelGrid;

pub use estimator::NoiseEstimator;

/// Real-valued single-channel tensor shaped like the working image.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Latent {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::BufferSize {
                expected: height * width,
                actual: data.len(),
            });
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `[channels, height, width]`, channels is always 1.
    pub fn dims(&self) -> [usize; 3] {
        [1, self.height, self.width]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Latent {
        Latent {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Latent) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub sub_steps: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            beta_start: 1e-4,
            beta_end: 0.02,
            sub_steps: 50,
        }
    }
}

impl ScheduleConfig {
    pub fn build(&self) -> Result<DiffusionSchedule> {
        build_schedule(self.steps, self.beta_start, self.beta_end, self.sub_steps)
    }
}

/// Cumulative ᾱ_t for t = 0..=T plus the sub-step grid actually walked.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionSchedule {
    alphas: Vec<f64>,
    grid: Vec<usize>,
}

/// Linear-β schedule: `β_t` interpolates `beta_start..=beta_end` over
/// t = 1..=T and `ᾱ_t = Π_{s≤t} (1 − β_s)`, with ᾱ_0 = 1.
pub fn build_schedule(steps: usize, beta_start: f64, beta_end: f64, sub_steps: usize) -> Result<DiffusionSchedule> {
    if !(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Schedule(format!(
            "need 0 < beta_start ≤ beta_end < 1, got {beta_start}..{beta_end}"
        )));
    }
    if steps == 0 || sub_steps == 0 || sub_steps > steps {
        return Err(Error::Schedule(format!(
            "need 1 ≤ sub_steps ≤ steps, got {sub_steps} of {steps}"
        )));
    }
    let mut alphas = Vec::with_capacity(steps + 1);
    alphas.push(1.0);
    let mut acc = 1.0f64;
    for t in 1..=steps {
        let beta = if steps == 1 {
            beta_start
        } else {
            beta_start + (beta_end - beta_start) * (t - 1) as f64 / (steps - 1) as f64
        };
        acc *= 1.0 - beta;
        alphas.push(acc);
    }
    let grid = (0..=sub_steps).map(|i| i * steps / sub_steps).collect();
    Ok(DiffusionSchedule { alphas, grid })
}

impl DiffusionSchedule {
    pub fn steps(&self) -> usize {
        self.alphas.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    pub fn sub_steps(&self) -> usize {
        self.grid.len() - 1
    }

    /// `√((1 − ᾱ_t) / ᾱ_t)`
    pub fn sigma(&self, t: usize) -> f64 {
        let a = self.alphas[t];
        ((1.0 - a) / a).sqrt()
    }
}

fn checked_estimate(
    est: &dyn NoiseEstimator,
    x: &Latent,
    step: usize,
    condition: &str,
) -> Result<Latent> {
    let eps = est.estimate(x, step, condition)?;
    if eps.dims() != x.dims() {
        return Err(Error::Shape {
            expected: x.dims().to_vec(),
            actual: eps.dims().to_vec(),
        });
    }
    Ok(eps)
}

fn ensure_finite(x: &Latent, step: usize) -> Result<()> {
    if x.data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { step })
    }
}

/// Maps a clean latent (step 0) to its noise latent (step T).
pub fn ode_invert(
    x0: &Latent,
    est: &dyn NoiseEstimator,
    condition: &str,
    sched: &DiffusionSchedule,
) -> Result<Latent> {
    ensure_finite(x0, 0)?;
    let mut x = x0.clone();
    for w in sched.grid().windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let eps = checked_estimate(est, &x, t0, condition)?;
        let (s0, s1) = (sched.alpha_bar(t0).sqrt(), sched.alpha_bar(t1).sqrt());
        let d = sched.sigma(t1) - sched.sigma(t0);
        for (v, e) in x.data.iter_mut().zip(&eps.data) {
            *v = (*v / s0 + d * e) * s1;
        }
        ensure_finite(&x, t1)?;
    }
    Ok(x)
}

/// Deterministic reverse process from step T back to step 0.
pub fn ode_reverse(
    xt: &Latent,
    est: &dyn NoiseEstimator,
    condition: &str,
    sched: &DiffusionSchedule,
) -> Result<Latent> {
    ensure_finite(xt, sched.steps())?;
    let mut x = xt.clone();
    for w in sched.grid().windows(2).rev() {
        let (t0, t1) = (w[0], w[1]);
        let eps = checked_estimate(est, &x, t1, condition)?;
        let (s0, s1) = (sched.alpha_bar(t0).sqrt(), sched.alpha_bar(t1).sqrt());
        let d = sched.sigma(t1) - sched.sigma(t0);
        for (v, e) in x.data.iter_mut().zip(&eps.data) {
            *v = (*v / s1 - d * e) * s0;
        }
        ensure_finite(&x, t0)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    pub grid: PixelGrid,
    /// Entries that fell outside `[-1, 1]` and were clamped.
    pub clamped: usize,
}

/// `[-1, 1] → [0, 255]`, `p = round_half_even((x + 1) · 127.5)`.
pub fn quantize(state: &Latent) -> Quantized {
    let mut clamped = 0;
    let pixels = state
        .data
        .iter()
        .map(|&x| {
            let v = ((x + 1.0) * 127.5).round_ties_even();
            if !(0.0..=255.0).contains(&v) {
                clamped += 1;
            }
            v.clamp(0.0, 255.0) as u8
        })
        .collect();
    Quantized {
        grid: PixelGrid::new(state.width, state.height, pixels).expect("dimensions match"),
        clamped,
    }
}

pub fn dequantize(grid: &PixelGrid) -> Latent {
    Latent {
        height: grid.height(),
        width: grid.width(),
        data: grid.pixels().iter().map(|&p| p as f64 / 127.5 - 1.0).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::estimator::{ConstantEstimator, ZeroEstimator};
    use super::*;

    #[test]
    fn single_step_schedule() {
        let s = build_schedule(1, 0.1, 0.1, 1).unwrap();
        assert_eq!(s.alphas(), &[1.0, 0.9]);
        assert_eq!(s.grid(), &[0, 1]);
    }

    #[test]
    fn default_schedule_tail() {
        let s = ScheduleConfig::default().build().unwrap();
        assert_eq!(s.steps(), 1000);
        assert_eq!(s.sub_steps(), 50);
        assert!((s.alpha_bar(1000) - 4.0e-5).abs() < 0.1e-5);
        assert!(s.alphas().windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn full_grid_when_sub_steps_equal_steps() {
        let s = build_schedule(20, 1e-3, 0.02, 20).unwrap();
        assert_eq!(s.grid(), (0..=20).collect::<Vec<_>>().as_slice());
    }

    #[test]
    fn schedule_parameter_errors() {
        assert!(build_schedule(10, 0.0, 0.02, 5).is_err());
        assert!(build_schedule(10, 0.03, 0.02, 5).is_err());
        assert!(build_schedule(10, 1e-4, 1.0, 5).is_err());
        assert!(build_schedule(10, 1e-4, 0.02, 0).is_err());
        assert!(build_schedule(10, 1e-4, 0.02, 11).is_err());
    }

    #[test]
    fn zero_estimator_only_rescales() {
        let s = ScheduleConfig::default().build().unwrap();
        let x0 = Latent::new(2, 2, vec![0.5, -0.25, 1.0, 0.0]).unwrap();
        let xt = ode_invert(&x0, &ZeroEstimator, "c", &s).unwrap();
        let scale = s.alpha_bar(1000).sqrt();
        for (a, b) in xt.data().iter().zip(x0.data()) {
            assert!((a / scale - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
        let back = ode_reverse(&xt, &ZeroEstimator, "c", &s).unwrap();
        assert!(back.max_abs_diff(&x0) < 1e-14);
    }

    #[test]
    fn constant_estimator_telescopes() {
        let s = ScheduleConfig::default().build().unwrap();
        let c = 0.3;
        let x0 = Latent::new(1, 3, vec![0.1, -0.7, 0.9]).unwrap();
        let xt = ode_invert(&x0, &ConstantEstimator(c), "", &s).unwrap();
        let shift = (s.sigma(1000) - s.sigma(0)) * c;
        let at = s.alpha_bar(1000).sqrt();
        for (a, b) in xt.data().iter().zip(x0.data()) {
            let expected = b + shift;
            assert!((a / at - expected).abs() <= 1e-12 * expected.abs());
        }
    }

    #[test]
    fn non_finite_input_rejected() {
        let s = build_schedule(10, 1e-4, 0.02, 5).unwrap();
        let x = Latent::new(1, 2, vec![0.0, f64::NAN]).unwrap();
        assert!(matches!(
            ode_invert(&x, &ZeroEstimator, "", &s),
            Err(Error::NonFinite { step: 0 })
        ));
        assert!(matches!(
            ode_reverse(&x, &ZeroEstimator, "", &s),
            Err(Error::NonFinite { step: 10 })
        ));
    }

    #[test]
    fn non_finite_estimate_is_caught() {
        let s = build_schedule(10, 1e-4, 0.02, 5).unwrap();
        let x = Latent::new(1, 1, vec![0.5]).unwrap();
        assert!(matches!(
            ode_invert(&x, &ConstantEstimator(f64::INFINITY), "", &s),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn quantize_endpoints() {
        let x = Latent::new(1, 5, vec![0.0, -1.0, 1.0, 1.5, -3.0]).unwrap();
        let q = quantize(&x);
        assert_eq!(q.grid.pixels(), &[128, 0, 255, 255, 0]);
        assert_eq!(q.clamped, 2);
    }

    #[test]
    fn dequantize_inverts_quantize() {
        let g = PixelGrid::from_fn(16, 16, |r, c| (r * 16 + c) as u8);
        assert_eq!(quantize(&dequantize(&g)).grid, g);
    }
}
