//! Realized quadratic variation as an intrinsic clock for an observed series.
//!
//! The running sum of squared increments `q_t` is treated as a monotone path
//! driven by a gamma process with `α = 1/(2Δt)` and `β = c/(2Δt)`, where
//! `c = mΔt / q_end` makes the expected clock at the final time equal the
//! observed one. The model is fitted unscaled (`n = 1`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::GammaParams;
use crate::inference::{credible_band, posterior, sufficient_stats, Band, IGPosterior, PriorSpec, SufficientStats};
use crate::mcmc::{run_chain, ChainConfig, ChainOutput, DiscreteObservations};
use crate::rng::RngStream;
use crate::simulate::{hitting_times, HittingRecord, SimulatedPath};
use crate::volatility::BinPartition;

/// Equidistant measurements `y_0..y_m` spaced `dt` apart.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    dt: f64,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::domain(format!("sampling interval must be positive, got {dt}")));
        }
        if values.len() < 2 {
            return Err(Error::invalid("a series needs at least two values"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("missing or non-finite value at index {i}")));
        }
        Ok(Self { dt, values })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of increments `m`.
    pub fn increments(&self) -> usize {
        self.values.len() - 1
    }
}

/// `q_{i·dt} = Σ_{j<i} (y_{j+1} − y_j)²` at times `i·dt`.
pub fn realized_qv(series: &TimeSeries) -> DiscreteObservations {
    let mut q = Vec::with_capacity(series.values.len());
    let mut acc = 0.0;
    q.push(0.0);
    for w in series.values.windows(2) {
        let d = w[1] - w[0];
        acc += d * d;
        q.push(acc);
    }
    let times = (0..q.len()).map(|i| i as f64 * series.dt).collect();
    DiscreteObservations::new(times, q).expect("realized variation is monotone by construction")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RqvCalibration {
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
    pub dt: f64,
    pub m: usize,
    pub q_end: f64,
}

impl RqvCalibration {
    pub fn params(&self) -> Result<GammaParams> {
        GammaParams::new(self.alpha, self.beta)
    }

    /// `E L_{m·dt} = (α/β)·m·dt`.
    pub fn expected_clock(&self) -> f64 {
        self.alpha / self.beta * self.m as f64 * self.dt
    }
}

pub fn calibrate(series: &TimeSeries) -> Result<RqvCalibration> {
    let obs = realized_qv(series);
    calibrate_from(series, obs.end_value())
}

fn calibrate_from(series: &TimeSeries, q_end: f64) -> Result<RqvCalibration> {
    if !(q_end > 0.0) {
        return Err(Error::invalid("degenerate quadratic variation: the series is constant"));
    }
    let m = series.increments();
    let dt = series.dt;
    let c = m as f64 * dt / q_end;
    Ok(RqvCalibration {
        alpha: 1.0 / (2.0 * dt),
        beta: c / (2.0 * dt),
        c,
        dt,
        m,
        q_end,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RqvFit {
    pub calibration: RqvCalibration,
    pub partition: BinPartition,
    pub record: HittingRecord,
    pub stats: SufficientStats,
    pub posterior: IGPosterior,
    pub bands: Vec<Band>,
    /// One-based indices of bins crossed within a single sampling step.
    pub flagged_bins: Vec<usize>,
}

/// Fits the piecewise-constant model to the realized variation with `K`
/// equidistant bins over `[0, q_end]` and grid-snapped hitting times.
pub fn fit_rqv(series: &TimeSeries, k: usize, prior: &PriorSpec, level: f64) -> Result<RqvFit> {
    let obs = realized_qv(series);
    let calibration = calibrate_from(series, obs.end_value())?;
    let p = calibration.params()?;
    if prior.len() != k {
        return Err(Error::invalid(format!("prior covers {} bins, expected {k}", prior.len())));
    }
    let partition = BinPartition::equidistant(k, calibration.q_end)?;
    let path = SimulatedPath {
        dt: series.dt,
        values: obs.values().to_vec(),
    };
    let record = hitting_times(&path, &partition)?;
    let stats = sufficient_stats(&record, 1, &p)?;
    let post = posterior(&stats, prior)?;
    let bands = credible_band(&post, level)?;
    let flagged_bins = stats.empty_bins();
    Ok(RqvFit {
        calibration,
        partition,
        record,
        stats,
        posterior: post,
        bands,
        flagged_bins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RqvChainFit {
    pub calibration: RqvCalibration,
    pub partition: BinPartition,
    pub chain: ChainOutput,
}

/// Same model fitted with the data-augmentation sampler instead of snapped
/// hitting times.
pub fn fit_rqv_mcmc(
    series: &TimeSeries,
    k: usize,
    prior: &PriorSpec,
    config: &ChainConfig,
    rng: &mut RngStream,
) -> Result<RqvChainFit> {
    let obs = realized_qv(series);
    let calibration = calibrate_from(series, obs.end_value())?;
    let p = calibration.params()?;
    let partition = BinPartition::equidistant(k, calibration.q_end)?;
    let chain = run_chain(&obs, &partition, prior, &p, 1, config, rng)?;
    Ok(RqvChainFit {
        calibration,
        partition,
        chain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn qv_examples() {
        let s = TimeSeries::new(1.0, vec![0.0, 1.0, 1.0, 2.0]).unwrap();
        let q = realized_qv(&s);
        assert_eq!(q.values(), &[0.0, 1.0, 1.0, 2.0]);
        assert_eq!(q.times(), &[0.0, 1.0, 2.0, 3.0]);

        let flat = TimeSeries::new(2.0, vec![3.5; 6]).unwrap();
        assert!(realized_qv(&flat).values().iter().all(|&v| v == 0.0));
        assert!(matches!(calibrate(&flat), Err(Error::Validation(_))));

        let y = vec![0.3, -1.2, 0.7, 0.75, 2.0];
        let s1 = TimeSeries::new(1.0, y.clone()).unwrap();
        let s3 = TimeSeries::new(1.0, y.iter().map(|v| 3.0 * v).collect()).unwrap();
        for (a, b) in realized_qv(&s1).values().iter().zip(realized_qv(&s3).values()) {
            assert!((9.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_values_rejected() {
        assert!(TimeSeries::new(1.0, vec![0.0, f64::NAN, 1.0]).is_err());
        assert!(TimeSeries::new(0.0, vec![0.0, 1.0]).is_err());
        assert!(TimeSeries::new(1.0, vec![0.0]).is_err());
    }

    #[test]
    fn calibration_example() {
        let s = TimeSeries::new(50.0, vec![0.0, 1.0, 1.0, 2.0]).unwrap();
        let c = calibrate(&s).unwrap();
        assert_eq!(c.q_end, 2.0);
        assert_eq!(c.c, 75.0);
        assert_eq!(c.alpha, 0.01);
        assert_eq!(c.beta, 0.75);
        assert_eq!(c.expected_clock(), c.q_end);
    }

    fn gaussian_series(m: usize, s: f64, dt: f64, seed: u64) -> TimeSeries {
        let mut rng = RngStream::new(seed, 0);
        let mut y = vec![0.0];
        for _ in 0..m {
            let z: f64 = StandardNormal.sample(&mut rng);
            y.push(y.last().unwrap() + s * z);
        }
        TimeSeries::new(dt, y).unwrap()
    }

    #[test]
    fn flat_volatility_gives_flat_fit() {
        let s = gaussian_series(5000, 0.4, 50.0, 1);
        let prior = PriorSpec::uniform(5, 0.1, 0.1).unwrap();
        let fit = fit_rqv(&s, 5, &prior, 0.9).unwrap();
        let means: Vec<f64> = fit.bands.iter().map(|b| b.mean.unwrap()).collect();
        let max = means.iter().copied().fold(f64::MIN, f64::max);
        let min = means.iter().copied().fold(f64::MAX, f64::min);
        assert!(max / min < 2.0, "{means:?}");
        assert_eq!(fit.bands.len(), 5);
        assert_eq!(fit.record.hits.last().unwrap().tau, 5000.0 * 50.0);
    }

    #[test]
    fn doubling_series_leaves_posterior_unchanged() {
        let s = gaussian_series(800, 1.3, 0.5, 2);
        let doubled = TimeSeries::new(0.5, s.values().iter().map(|v| 2.0 * v).collect()).unwrap();
        let prior = PriorSpec::uniform(7, 0.1, 0.1).unwrap();
        let a = fit_rqv(&s, 7, &prior, 0.9).unwrap();
        let b = fit_rqv(&doubled, 7, &prior, 0.9).unwrap();
        assert_eq!(a.posterior.shape, b.posterior.shape);
        assert_eq!(a.posterior.scale, b.posterior.scale);
        assert_eq!(b.calibration.c, a.calibration.c / 4.0);
    }

    #[test]
    fn fit_is_deterministic_and_validates() {
        let s = gaussian_series(300, 1.0, 1.0, 3);
        let prior = PriorSpec::uniform(4, 0.1, 0.1).unwrap();
        assert_eq!(fit_rqv(&s, 4, &prior, 0.9).unwrap(), fit_rqv(&s, 4, &prior, 0.9).unwrap());
        assert!(fit_rqv(&s, 5, &prior, 0.9).is_err());
        assert!(fit_rqv(&s, 4, &prior, 1.5).is_err());
    }

    #[test]
    fn jump_across_levels_is_flagged() {
        // one large increment crosses several levels in a single step
        let s = TimeSeries::new(1.0, vec![0.0, 0.1, 0.2, 3.0, 3.1]).unwrap();
        let prior = PriorSpec::uniform(4, 0.1, 0.1).unwrap();
        let fit = fit_rqv(&s, 4, &prior, 0.9).unwrap();
        assert!(!fit.flagged_bins.is_empty());
        for &k in &fit.flagged_bins {
            assert_eq!(fit.posterior.shape[k - 1], 0.1);
            assert_eq!(fit.posterior.scale[k - 1], 0.1);
        }
    }

    #[test]
    fn chain_variant_runs() {
        let s = gaussian_series(400, 1.0, 1.0, 4);
        let prior = PriorSpec::uniform(3, 0.1, 0.1).unwrap();
        let cfg = ChainConfig { iterations: 200, burn_in: 50, grid_points: 32, allow_shared_brackets: true, ..ChainConfig::default() };
        let fit = fit_rqv_mcmc(&s, 3, &prior, &cfg, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(fit.chain.kept(), 150);
        assert!(fit.chain.xi.iter().flatten().all(|v| *v > 0.0));
    }
}
