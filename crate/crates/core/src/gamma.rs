//! Gamma process primitives.
//!
//! The driving process `L` has Lévy density `α x⁻¹ e^{−βx}` and increments
//! `L_{t+dt} − L_t ~ Gamma(α·dt, β)` (shape, rate).
//!
//! Gamma variates are drawn with Marsaglia–Tsang squeeze rejection for
//! shape ≥ 1. For shape < 1 we use the boost `G_a = G_{a+1} · U^{1/a}`, carried
//! out in log space: on fine grids the shape `α·dt` can be 1e-4 or smaller and
//! the variate itself underflows, while its logarithm stays representable.
//! Bridges rely on that, since they normalize a whole vector of such draws.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::special::gamma_log_pdf;

/// Parameters `(α, β)` of the driving gamma process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGammaParams")]
pub struct GammaParams {
    alpha: f64,
    beta: f64,
}

#[derive(Deserialize)]
struct RawGammaParams {
    alpha: f64,
    beta: f64,
}

impl TryFrom<RawGammaParams> for GammaParams {
    type Error = Error;

    fn try_from(raw: RawGammaParams) -> Result<Self> {
        GammaParams::new(raw.alpha, raw.beta)
    }
}

impl GammaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::domain(format!("alpha must be positive and finite, got {alpha}")));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::domain(format!("beta must be positive and finite, got {beta}")));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Mean growth rate `E L_t / t = α/β`.
    pub fn mean_rate(&self) -> f64 {
        self.alpha / self.beta
    }
}

/// Lévy density `α x⁻¹ exp(−βx)`.
pub fn levy_density(x: f64, p: &GammaParams) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain(format!("Lévy density is defined for x > 0, got {x}")));
    }
    Ok(p.alpha / x * (-p.beta * x).exp())
}

/// Log of a Gamma(shape, 1) variate.
pub fn sample_log_gamma(shape: f64, rng: &mut RngStream) -> f64 {
    debug_assert!(shape > 0.0);
    if shape < 1.0 {
        let boosted = marsaglia_tsang_log(shape + 1.0, rng);
        return boosted + rng.open01().ln() / shape;
    }
    marsaglia_tsang_log(shape, rng)
}

fn marsaglia_tsang_log(shape: f64, rng: &mut RngStream) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v3 = v * v * v;
        let u = rng.open01();
        let z2 = z * z;
        // cheap squeeze first
        if u < 1.0 - 0.0331 * z2 * z2 {
            return d.ln() + v3.ln();
        }
        if u.ln() < 0.5 * z2 + d * (1.0 - v3 + v3.ln()) {
            return d.ln() + v3.ln();
        }
    }
}

/// Gamma(shape, rate) variate.
pub fn sample_gamma(shape: f64, rate: f64, rng: &mut RngStream) -> f64 {
    sample_log_gamma(shape, rng).exp() / rate
}

/// Increment `L_{t+dt} − L_t ~ Gamma(α·dt, β)`; exactly 0 when `dt = 0`.
pub fn sample_increment(p: &GammaParams, dt: f64, rng: &mut RngStream) -> Result<f64> {
    if !(dt >= 0.0) || !dt.is_finite() {
        return Err(Error::domain(format!("time step must be finite and nonnegative, got {dt}")));
    }
    if dt == 0.0 {
        return Ok(0.0);
    }
    Ok(sample_gamma(p.alpha * dt, p.beta, rng))
}

/// Log of the Gamma(α·elapsed, β) density at `increment`, i.e. the transition
/// density of the unit-volatility process.
pub fn transition_logdensity(p: &GammaParams, elapsed: f64, increment: f64) -> Result<f64> {
    if !(elapsed > 0.0) {
        return Err(Error::domain(format!("elapsed time must be positive, got {elapsed}")));
    }
    if !(increment > 0.0) {
        return Err(Error::domain(format!("increment must be positive, got {increment}")));
    }
    Ok(gamma_log_pdf(p.alpha * elapsed, p.beta, increment))
}

/// Samples a gamma bridge on `t_grid` pinned to 0 at the first grid time and
/// to `total` at the last.
///
/// Normalized increments over the grid are Dirichlet with concentrations
/// `α·Δt_i`; they are generated as normalized log-gamma draws so the
/// construction is exact for any grid, without rejection.
pub fn sample_bridge(
    p: &GammaParams,
    t_grid: &[f64],
    total: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if t_grid.len() < 2 {
        return Err(Error::domain("bridge grid needs at least two points"));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain("bridge grid must be strictly increasing"));
    }
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::domain(format!("bridge endpoint must be positive, got {total}")));
    }

    let log_g: Vec<f64> = t_grid
        .windows(2)
        .map(|w| sample_log_gamma(p.alpha * (w[1] - w[0]), rng))
        .collect();
    let max = log_g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = log_g.iter().map(|g| (g - max).exp()).collect();
    let sum: f64 = weights.iter().sum();

    let mut values = Vec::with_capacity(t_grid.len());
    values.push(0.0);
    let mut acc = 0.0;
    for w in &weights[..weights.len() - 1] {
        acc += w;
        values.push(total * (acc / sum));
    }
    values.push(total);
    Ok(values)
}
