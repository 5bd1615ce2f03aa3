//! Monte Carlo studies of the continuous-observation posterior: contraction
//! of the posterior mean as `n` grows, and frequentist coverage of the
//! marginal credible bands.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::GammaParams;
use crate::inference::{credible_band, posterior, posterior_moments, sufficient_stats, PriorSpec};
use crate::rng::RngStream;
use crate::simulate::{default_dt, simulate_hitting_record, DEFAULT_MAX_STEPS};
use crate::stats::{mean, ols_slope};
use crate::volatility::{bins_for_rate, BinPartition, PiecewiseVolatility, TestVolatility, Volatility};

/// How the true volatility is built from a named test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TruthSpec {
    /// The function itself.
    Function { function: TestVolatility },
    /// The function's values at the midpoints of `k` equidistant bins.
    Binned { function: TestVolatility, k: usize },
}

enum Truth {
    Function(TestVolatility),
    Binned(PiecewiseVolatility),
}

impl Truth {
    fn build(spec: &TruthSpec, upper: f64) -> Result<Self> {
        Ok(match *spec {
            TruthSpec::Function { function } => Truth::Function(function),
            TruthSpec::Binned { function, k } => {
                Truth::Binned(PiecewiseVolatility::from_midpoints(BinPartition::equidistant(k, upper)?, &function)?)
            }
        })
    }

    fn as_dyn(&self) -> &dyn Volatility {
        match self {
            Truth::Function(f) => f,
            Truth::Binned(v) => v,
        }
    }

    fn sup(&self) -> f64 {
        match self {
            Truth::Function(f) => f.sup(),
            Truth::Binned(v) => v.max_value(),
        }
    }
}

/// Bin count per `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BinRule {
    Fixed { k: usize },
    /// `K = round(c · n^{1/(2λ+1)})`.
    Rate { lambda: f64, c: f64 },
}

impl BinRule {
    pub fn bins(&self, n: u64, upper: f64) -> Result<usize> {
        match *self {
            BinRule::Fixed { k } => {
                if k == 0 {
                    return Err(Error::invalid("number of bins must be at least 1"));
                }
                Ok(k)
            }
            BinRule::Rate { lambda, c } => bins_for_rate(n, lambda, upper, c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionConfig {
    pub n_values: Vec<u64>,
    pub replicates: usize,
    pub params: GammaParams,
    pub truth: TruthSpec,
    pub bins: BinRule,
    pub upper: f64,
    pub prior_alpha: f64,
    pub prior_beta: f64,
    /// Grid step as a fraction of the shortest expected bin passage time.
    pub dt_fraction: f64,
    /// Number of evaluation points for the sup and RMSE errors.
    pub eval_points: usize,
}

impl ContractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.len() < 3 {
            return Err(Error::invalid(format!(
                "need at least three n values to fit a slope, got {}",
                self.n_values.len()
            )));
        }
        if self.n_values.windows(2).any(|w| w[1] <= w[0]) || self.n_values[0] == 0 {
            return Err(Error::invalid("n values must be positive and increasing"));
        }
        if self.replicates == 0 {
            return Err(Error::invalid("need at least one replicate"));
        }
        if self.eval_points == 0 {
            return Err(Error::invalid("need at least one evaluation point"));
        }
        if !(self.dt_fraction > 0.0 && self.dt_fraction <= 1.0) {
            return Err(Error::invalid(format!("dt fraction must lie in (0, 1], got {}", self.dt_fraction)));
        }
        if !(self.upper > 0.0) {
            return Err(Error::invalid("upper boundary must be positive"));
        }
        PriorSpec::uniform(1, self.prior_alpha, self.prior_beta)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionRow {
    pub n: u64,
    pub k: usize,
    pub dt: f64,
    /// Mean over replicates of `sup_x |E[σ(x) | X] − σ_0(x)|`.
    pub mean_sup_error: f64,
    /// Root mean square of the posterior-mean error over `x` and replicates.
    pub rmse: f64,
    /// Posterior standard deviation averaged over bins and replicates where
    /// it exists.
    pub mean_posterior_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub rows: Vec<ContractionRow>,
    /// Least-squares slope of `log mean_sup_error` on `log n`.
    pub slope: f64,
}

struct ReplicateError {
    sup: f64,
    sq_mean: f64,
    mean_sd: Option<f64>,
}

fn contraction_replicate(
    cfg: &ContractionConfig,
    truth: &Truth,
    n: u64,
    partition: &BinPartition,
    dt: f64,
    rng: &mut RngStream,
) -> Result<ReplicateError> {
    let rec = simulate_hitting_record(truth.as_dyn(), &cfg.params, n, partition, dt, DEFAULT_MAX_STEPS, rng)?;
    let stats = sufficient_stats(&rec, n, &cfg.params)?;
    let prior = PriorSpec::uniform(partition.len(), cfg.prior_alpha, cfg.prior_beta)?;
    let post = posterior(&stats, &prior)?;
    let moments = posterior_moments(&post);
    let means = moments
        .iter()
        .enumerate()
        .map(|(k, m)| {
            m.mean.ok_or_else(|| {
                Error::Numerical(format!("posterior mean undefined in bin {} at n = {n}; reduce dt", k + 1))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let sds: Vec<f64> = moments.iter().filter_map(|m| m.variance.map(f64::sqrt)).collect();
    let mean_sd = (!sds.is_empty()).then(|| mean(&sds));

    let mut sup: f64 = 0.0;
    let mut sq = 0.0;
    let m = cfg.eval_points;
    for j in 0..m {
        let x = (j as f64 + 0.5) / m as f64 * cfg.upper;
        let err = means[partition.bin_index(x)? - 1] - truth.as_dyn().sigma(x)?;
        sup = sup.max(err.abs());
        sq += err * err;
    }
    Ok(ReplicateError {
        sup,
        sq_mean: sq / m as f64,
        mean_sd,
    })
}

/// Runs `replicates` simulate-and-fit cycles per `n` and fits the log-log
/// slope of the mean sup-error. Replicate `r` of the `i`-th `n` uses child
/// stream `(i << 32) | r` of `rng`.
pub fn run_contraction(cfg: &ContractionConfig, rng: &RngStream) -> Result<ContractionReport> {
    cfg.validate()?;
    let truth = Truth::build(&cfg.truth, cfg.upper)?;
    let mut rows = Vec::with_capacity(cfg.n_values.len());
    for (i, &n) in cfg.n_values.iter().enumerate() {
        let k = cfg.bins.bins(n, cfg.upper)?;
        let partition = BinPartition::equidistant(k, cfg.upper)?;
        let dt = default_dt(&partition, truth.sup(), &cfg.params, n) * (cfg.dt_fraction / 1e-3);
        let errs = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let mut stream = rng.child(((i as u64) << 32) | r as u64);
                contraction_replicate(cfg, &truth, n, &partition, dt, &mut stream)
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(ContractionRow {
            n,
            k,
            dt,
            mean_sup_error: mean(&errs.iter().map(|e| e.sup).collect::<Vec<_>>()),
            rmse: mean(&errs.iter().map(|e| e.sq_mean).collect::<Vec<_>>()).sqrt(),
            mean_posterior_sd: {
                let sds: Vec<f64> = errs.iter().filter_map(|e| e.mean_sd).collect();
                (!sds.is_empty()).then(|| mean(&sds))
            },
        });
    }
    let log_n: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let log_e: Vec<f64> = rows.iter().map(|r| r.mean_sup_error.ln()).collect();
    Ok(ContractionReport {
        slope: ols_slope(&log_n, &log_e),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub n: u64,
    pub k: usize,
    pub replicates: usize,
    pub level: f64,
    pub params: GammaParams,
    /// Coverage is judged against the truth at the bin midpoints.
    pub truth: TestVolatility,
    pub upper: f64,
    pub prior_alpha: f64,
    pub prior_beta: f64,
    pub dt_fraction: f64,
}

impl CoverageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::invalid("need at least one replicate"));
        }
        if self.n == 0 || self.k == 0 {
            return Err(Error::invalid("n and K must be at least 1"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::invalid(format!("credible level must lie in (0, 1), got {}", self.level)));
        }
        if !(self.dt_fraction > 0.0 && self.dt_fraction <= 1.0) {
            return Err(Error::invalid(format!("dt fraction must lie in (0, 1], got {}", self.dt_fraction)));
        }
        PriorSpec::uniform(1, self.prior_alpha, self.prior_beta)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverageReport {
    pub n: u64,
    pub k: usize,
    pub level: f64,
    pub replicates: usize,
    /// Fraction of replicates whose band covers the truth, per bin.
    pub per_bin: Vec<f64>,
    pub mean_coverage: f64,
}

/// Empirical coverage of the marginal credible bands under a binned truth.
/// Replicate `r` uses child stream `r` of `rng`.
pub fn run_coverage(cfg: &CoverageConfig, rng: &RngStream) -> Result<CoverageReport> {
    cfg.validate()?;
    let partition = BinPartition::equidistant(cfg.k, cfg.upper)?;
    let truth = PiecewiseVolatility::from_midpoints(partition.clone(), &cfg.truth)?;
    let dt = default_dt(&partition, truth.max_value(), &cfg.params, cfg.n) * (cfg.dt_fraction / 1e-3);
    let prior = PriorSpec::uniform(cfg.k, cfg.prior_alpha, cfg.prior_beta)?;
    let hits = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng.child(r as u64);
            let rec = simulate_hitting_record(&truth, &cfg.params, cfg.n, &partition, dt, DEFAULT_MAX_STEPS, &mut stream)?;
            let post = posterior(&sufficient_stats(&rec, cfg.n, &cfg.params)?, &prior)?;
            let bands = credible_band(&post, cfg.level)?;
            Ok(bands
                .iter()
                .zip(truth.values())
                .map(|(b, &s)| b.lo <= s && s <= b.hi)
                .collect::<Vec<bool>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let r = cfg.replicates as f64;
    let per_bin: Vec<f64> = (0..cfg.k)
        .map(|k| hits.iter().filter(|h| h[k]).count() as f64 / r)
        .collect();
    Ok(CoverageReport {
        n: cfg.n,
        k: cfg.k,
        level: cfg.level,
        replicates: cfg.replicates,
        mean_coverage: mean(&per_bin),
        per_bin,
    })
}
