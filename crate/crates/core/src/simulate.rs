//! Euler simulation of `dX = (1/n) σ(X−) dL`, grid-snapped hitting times, and
//! Monte-Carlo checks of the first-passage behaviour of the scaled process.
//!
//! The scheme iterates `X_{(i+1)dt} = X_{i dt} + σ(X_{i dt}) G_i / n` with
//! `G_i ~ Gamma(α dt, β)`. While the path stays inside one bin σ is constant,
//! so the sum of gamma increments is exact in law there; the only
//! discretization error comes from the step that crosses a bin boundary.
//! Hitting times are snapped to the grid: `τ_k = min{ i dt : X_{i dt} ≥ b_k }`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gamma::{sample_gamma, GammaParams};
use crate::rng::RngStream;
use crate::stats::{mean, sample_sd};
use crate::volatility::{BinPartition, PiecewiseVolatility, Volatility};

pub const DEFAULT_MAX_STEPS: u64 = 100_000_000;

/// Grid step and stopping rule for the Euler scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerConfig {
    pub dt: f64,
    pub stop_level: f64,
    pub max_steps: u64,
}

impl EulerConfig {
    pub fn new(dt: f64, stop_level: f64) -> Self {
        Self {
            dt,
            stop_level,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }
}

/// Expected crossing time `n Δb β / (α σ)` of a bin of width `Δb` at constant σ.
pub fn expected_crossing_time(sigma: f64, delta_b: f64, p: &GammaParams, n_scale: u64) -> f64 {
    n_scale as f64 * delta_b * p.beta() / (p.alpha() * sigma)
}

/// Default Euler step: one thousandth of the shortest expected bin crossing.
pub fn default_dt(partition: &BinPartition, sigma_max: f64, p: &GammaParams, n_scale: u64) -> f64 {
    let min_width = partition.widths().into_iter().fold(f64::INFINITY, f64::min);
    expected_crossing_time(sigma_max, min_width, p, n_scale) / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulatedPath {
    pub dt: f64,
    pub values: Vec<f64>,
}

impl SimulatedPath {
    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn validate_euler<V: Volatility + ?Sized>(v: &V, n_scale: u64, cfg: &EulerConfig) -> Result<()> {
    if n_scale == 0 {
        return Err(Error::domain("scale n must be at least 1"));
    }
    if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
        return Err(Error::domain(format!("time step must be positive, got {}", cfg.dt)));
    }
    if !(cfg.stop_level > 0.0) {
        return Err(Error::domain(format!("stop level must be positive, got {}", cfg.stop_level)));
    }
    if cfg.stop_level > v.domain_end() {
        return Err(Error::invalid(format!(
            "stop level {} exceeds the volatility domain end {}",
            cfg.stop_level,
            v.domain_end()
        )));
    }
    Ok(())
}

/// Runs the Euler scheme, calling `visit(i, X_{i dt})` for every grid point
/// from `i = 0` up to and including the first point at or above the stop level.
pub fn euler_drive<V, F>(
    v: &V,
    p: &GammaParams,
    n_scale: u64,
    cfg: &EulerConfig,
    rng: &mut RngStream,
    mut visit: F,
) -> Result<()>
where
    V: Volatility + ?Sized,
    F: FnMut(u64, f64) -> Result<()>,
{
    validate_euler(v, n_scale, cfg)?;
    let shape = p.alpha() * cfg.dt;
    let n = n_scale as f64;
    let mut x = 0.0;
    let mut i = 0u64;
    visit(0, x)?;
    while x < cfg.stop_level {
        if i >= cfg.max_steps {
            return Err(Error::BudgetExceeded {
                max_steps: cfg.max_steps,
                stop_level: cfg.stop_level,
            });
        }
        let s = v.sigma(x)?;
        if !(s > 0.0) {
            return Err(Error::domain(format!("volatility must be positive, got σ({x}) = {s}")));
        }
        x += s * sample_gamma(shape, p.beta(), rng) / n;
        i += 1;
        visit(i, x)?;
    }
    Ok(())
}

/// Simulates the whole grid path up to and including the crossing of `stop_level`.
pub fn euler_simulate<V: Volatility + ?Sized>(
    v: &V,
    p: &GammaParams,
    n_scale: u64,
    cfg: &EulerConfig,
    rng: &mut RngStream,
) -> Result<SimulatedPath> {
    let mut values = Vec::new();
    euler_drive(v, p, n_scale, cfg, rng, |_, x| {
        values.push(x);
        Ok(())
    })?;
    Ok(SimulatedPath { dt: cfg.dt, values })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hit {
    /// One-based level index.
    pub k: usize,
    pub tau: f64,
    pub x_at_tau: f64,
    pub overshoot: f64,
}

/// Grid-snapped passage times, values and overshoots for levels `b_1..b_K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingRecord {
    pub hits: Vec<Hit>,
}

impl HittingRecord {
    pub fn new(hits: Vec<Hit>) -> Result<Self> {
        for (j, h) in hits.iter().enumerate() {
            if h.k != j + 1 {
                return Err(Error::invalid(format!("hitting record row {j} has level index {}", h.k)));
            }
            if !(h.tau >= 0.0) || !(h.overshoot >= 0.0) {
                return Err(Error::invalid(format!("hitting record level {} has negative entries", h.k)));
            }
        }
        if hits.windows(2).any(|w| w[1].tau < w[0].tau) {
            return Err(Error::invalid("hitting times must be nondecreasing"));
        }
        Ok(Self { hits })
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }

    pub fn taus(&self) -> Vec<f64> {
        self.hits.iter().map(|h| h.tau).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.hits.iter().map(|h| h.x_at_tau).collect()
    }

    pub fn overshoots(&self) -> Vec<f64> {
        self.hits.iter().map(|h| h.overshoot).collect()
    }
}

/// Incremental hitting-time detector fed one grid point at a time.
struct HitScanner<'a> {
    levels: &'a [f64],
    dt: f64,
    hits: Vec<Hit>,
}

impl<'a> HitScanner<'a> {
    fn new(partition: &'a BinPartition, dt: f64) -> Self {
        Self {
            levels: &partition.boundaries()[1..],
            dt,
            hits: Vec::with_capacity(partition.len()),
        }
    }

    fn push(&mut self, i: u64, x: f64) {
        while let Some(&b) = self.levels.get(self.hits.len()) {
            if x < b {
                break;
            }
            self.hits.push(Hit {
                k: self.hits.len() + 1,
                tau: i as f64 * self.dt,
                x_at_tau: x,
                overshoot: x - b,
            });
        }
    }

    fn finish(self) -> Result<HittingRecord> {
        if self.hits.len() < self.levels.len() {
            let k = self.hits.len() + 1;
            return Err(Error::LevelNotReached {
                k,
                level: self.levels[k - 1],
            });
        }
        Ok(HittingRecord { hits: self.hits })
    }
}

/// Scans a simulated path for the first grid time at or above each level.
pub fn hitting_times(path: &SimulatedPath, partition: &BinPartition) -> Result<HittingRecord> {
    let mut scan = HitScanner::new(partition, path.dt);
    for (i, &x) in path.values.iter().enumerate() {
        scan.push(i as u64, x);
        if scan.hits.len() == partition.len() {
            break;
        }
    }
    scan.finish()
}

/// Simulates until `b_K` is crossed and returns only the hitting record.
/// Draws the same random numbers as [`euler_simulate`] with stop level `b_K`.
pub fn simulate_hitting_record<V: Volatility + ?Sized>(
    v: &V,
    p: &GammaParams,
    n_scale: u64,
    partition: &BinPartition,
    dt: f64,
    max_steps: u64,
    rng: &mut RngStream,
) -> Result<HittingRecord> {
    let cfg = EulerConfig::new(dt, partition.upper()).with_max_steps(max_steps);
    let mut scan = HitScanner::new(partition, dt);
    euler_drive(v, p, n_scale, &cfg, rng, |i, x| {
        scan.push(i, x);
        Ok(())
    })?;
    scan.finish()
}

/// Runs the Euler scheme to `cfg.stop_level`, handing every grid point to
/// `visit` and collecting the hitting record of `partition` on the way.
#[allow(clippy::too_many_arguments)]
pub fn euler_with_record<V, F>(
    v: &V,
    p: &GammaParams,
    n_scale: u64,
    partition: &BinPartition,
    cfg: &EulerConfig,
    rng: &mut RngStream,
    mut visit: F,
) -> Result<HittingRecord>
where
    V: Volatility + ?Sized,
    F: FnMut(u64, f64) -> Result<()>,
{
    if partition.upper() > cfg.stop_level {
        return Err(Error::invalid(format!(
            "last level {} lies above the stop level {}",
            partition.upper(),
            cfg.stop_level
        )));
    }
    let mut scan = HitScanner::new(partition, cfg.dt);
    euler_drive(v, p, n_scale, cfg, rng, |i, x| {
        scan.push(i, x);
        visit(i, x)
    })?;
    scan.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HittingConcentrationReport {
    pub n_scale: u64,
    pub sigma: f64,
    pub delta_b: f64,
    pub replicates: usize,
    pub dt: f64,
    /// `n Δb β / (α σ)`
    pub expected: f64,
    pub mean: f64,
    pub sd: f64,
    pub cv: f64,
    /// `|mean / expected − 1|`
    pub relative_error: f64,
}

/// Simulates the first passage of a single constant-σ bin of width `delta_b`
/// and compares the mean passage time with `n Δb β / (α σ)`.
/// `dt` defaults to a thousandth of the expected passage time.
pub fn verify_hitting_concentration(
    sigma: f64,
    delta_b: f64,
    p: &GammaParams,
    n_scale: u64,
    replicates: usize,
    dt: Option<f64>,
    rng: &RngStream,
) -> Result<HittingConcentrationReport> {
    if replicates < 100 {
        return Err(Error::invalid(format!("need at least 100 replicates, got {replicates}")));
    }
    let partition = BinPartition::new(vec![0.0, delta_b])?;
    let v = PiecewiseVolatility::new(partition.clone(), vec![sigma])?;
    let expected = expected_crossing_time(sigma, delta_b, p, n_scale);
    let dt = dt.unwrap_or(expected / 1000.0);

    let taus = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng.child(r as u64);
            let rec = simulate_hitting_record(&v, p, n_scale, &partition, dt, DEFAULT_MAX_STEPS, &mut stream)?;
            Ok(rec.hits[0].tau)
        })
        .collect::<Result<Vec<f64>>>()?;

    let m = mean(&taus);
    let sd = sample_sd(&taus);
    Ok(HittingConcentrationReport {
        n_scale,
        sigma,
        delta_b,
        replicates,
        dt,
        expected,
        mean: m,
        sd,
        cv: sd / m,
        relative_error: (m / expected - 1.0).abs(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OvershootLevel {
    pub k: usize,
    pub level: f64,
    /// Empirical frequency of `{POT_k < δ}`.
    pub empirical: f64,
    pub standard_error: f64,
    /// Whether `empirical ≥ bound − 3·standard_error`.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OvershootReport {
    pub n_scale: u64,
    pub delta: f64,
    pub sigma_max: f64,
    pub replicates: usize,
    pub dt: f64,
    pub bound: f64,
    pub levels: Vec<OvershootLevel>,
}

impl OvershootReport {
    pub fn all_consistent(&self) -> bool {
        self.levels.iter().all(|l| l.consistent)
    }
}

/// Lower bound `b_K/(b_K+δ) · (1 − exp(−n δ β / σ*))` on `P(POT_k < δ)`.
pub fn overshoot_bound(upper: f64, delta: f64, n_scale: u64, beta: f64, sigma_max: f64) -> f64 {
    upper / (upper + delta) * (1.0 - (-(n_scale as f64) * delta * beta / sigma_max).exp())
}

/// Estimates `P(POT_k < δ)` per level and compares it with [`overshoot_bound`].
/// The grid step must be small against `δ n / σ*`; it defaults to
/// [`default_dt`].
pub fn verify_overshoot_bound(
    v: &PiecewiseVolatility,
    p: &GammaParams,
    n_scale: u64,
    delta: f64,
    replicates: usize,
    dt: Option<f64>,
    rng: &RngStream,
) -> Result<OvershootReport> {
    if !(delta > 0.0) {
        return Err(Error::domain(format!("δ must be positive, got {delta}")));
    }
    if replicates == 0 {
        return Err(Error::invalid("need at least one replicate"));
    }
    let partition = v.partition();
    let sigma_max = v.max_value();
    let dt = dt.unwrap_or_else(|| default_dt(partition, sigma_max, p, n_scale));

    let records = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng.child(r as u64);
            simulate_hitting_record(v, p, n_scale, partition, dt, DEFAULT_MAX_STEPS, &mut stream)
        })
        .collect::<Result<Vec<_>>>()?;

    let bound = overshoot_bound(partition.upper(), delta, n_scale, p.beta(), sigma_max);
    let r = replicates as f64;
    let levels = (1..=partition.len())
        .map(|k| {
            let below = records.iter().filter(|rec| rec.hits[k - 1].overshoot < delta).count();
            let freq = below as f64 / r;
            let se = (freq * (1.0 - freq) / r).sqrt();
            OvershootLevel {
                k,
                level: partition.level(k),
                empirical: freq,
                standard_error: se,
                consistent: freq >= bound - 3.0 * se,
            }
        })
        .collect();

    Ok(OvershootReport {
        n_scale,
        delta,
        sigma_max,
        replicates,
        dt,
        bound,
        levels,
    })
}
