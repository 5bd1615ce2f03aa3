//! Inference from a continuously observed path.
//!
//! With σ piecewise constant on the bins, the likelihood ratio against the
//! unit-volatility law depends on the path only through the per-bin passage
//! durations `Δτ_k` and increments `ΔX_k`:
//!
//! `log dP^σ/dP^1 = β Σ (1 − n/ξ_k) ΔX_k − α Σ Δτ_k log(ξ_k / n)`.
//!
//! Independent `IG(α_k, β_k)` priors are conjugate, giving independent
//! posteriors `ξ_k | X ~ IG(α Δτ_k + α_k, n β ΔX_k + β_k)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gamma::{sample_log_gamma, GammaParams};
use crate::rng::RngStream;
use crate::simulate::HittingRecord;
use crate::special::{inv_gamma_cdf, inv_gamma_quantile};
use crate::stats::weighted_quantile;

/// Independent inverse-gamma prior `ξ_k ~ IG(α_k, β_k)` per bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPrior")]
pub struct PriorSpec {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPrior {
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl TryFrom<RawPrior> for PriorSpec {
    type Error = Error;

    fn try_from(raw: RawPrior) -> Result<Self> {
        PriorSpec::new(raw.alpha, raw.beta)
    }
}

impl PriorSpec {
    pub fn new(alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(Error::invalid(format!(
                "prior has {} shapes but {} scales",
                alpha.len(),
                beta.len()
            )));
        }
        if alpha.is_empty() {
            return Err(Error::invalid("prior must cover at least one bin"));
        }
        if alpha.iter().chain(&beta).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::domain("prior parameters must be positive"));
        }
        Ok(Self { alpha, beta })
    }

    /// The same `IG(alpha, beta)` prior on each of `k` bins.
    pub fn uniform(k: usize, alpha: f64, beta: f64) -> Result<Self> {
        Self::new(vec![alpha; k], vec![beta; k])
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// The prior viewed as a posterior with no data.
    pub fn as_posterior(&self) -> IGPosterior {
        IGPosterior {
            shape: self.alpha.clone(),
            scale: self.beta.clone(),
            empty: vec![true; self.len()],
        }
    }
}

/// Per-bin `(Δτ_k, ΔX_k)` with the model constants needed to use them.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficientStats {
    pub d_tau: Vec<f64>,
    pub d_x: Vec<f64>,
    pub n_scale: u64,
    pub params: GammaParams,
}

impl SufficientStats {
    pub fn new(d_tau: Vec<f64>, d_x: Vec<f64>, n_scale: u64, params: GammaParams) -> Result<Self> {
        if d_tau.len() != d_x.len() {
            return Err(Error::invalid("Δτ and ΔX must have equal length"));
        }
        if n_scale == 0 {
            return Err(Error::domain("scale n must be at least 1"));
        }
        for (k, (&t, &x)) in d_tau.iter().zip(&d_x).enumerate() {
            if !(t >= 0.0) || !(x >= 0.0) || !t.is_finite() || !x.is_finite() {
                return Err(Error::invalid(format!(
                    "bin {}: negative or non-finite statistics (Δτ = {t}, ΔX = {x})",
                    k + 1
                )));
            }
            if t == 0.0 && x != 0.0 {
                return Err(Error::invalid(format!(
                    "bin {}: zero passage time with nonzero increment {x}",
                    k + 1
                )));
            }
        }
        Ok(Self {
            d_tau,
            d_x,
            n_scale,
            params,
        })
    }

    /// No observations on any of `k` bins.
    pub fn empty(k: usize, n_scale: u64, params: GammaParams) -> Result<Self> {
        Self::new(vec![0.0; k], vec![0.0; k], n_scale, params)
    }

    pub fn len(&self) -> usize {
        self.d_tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_tau.is_empty()
    }

    /// Restriction to the bins in `range` (zero-based).
    pub fn subset(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            d_tau: self.d_tau[range.clone()].to_vec(),
            d_x: self.d_x[range].to_vec(),
            n_scale: self.n_scale,
            params: self.params,
        }
    }

    /// Bins that were crossed without spending time in them.
    pub fn empty_bins(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.d_tau[k] == 0.0).map(|k| k + 1).collect()
    }
}

/// Differences the hitting record: `Δτ_k = τ_k − τ_{k−1}`, `ΔX_k = X_{τ_k} − X_{τ_{k−1}}`
/// with `τ_0 = 0` and `X_{τ_0} = 0`.
pub fn sufficient_stats(rec: &HittingRecord, n_scale: u64, p: &GammaParams) -> Result<SufficientStats> {
    let mut prev_tau = 0.0;
    let mut prev_x = 0.0;
    let mut d_tau = Vec::with_capacity(rec.len());
    let mut d_x = Vec::with_capacity(rec.len());
    for h in &rec.hits {
        let dt = h.tau - prev_tau;
        let dx = h.x_at_tau - prev_x;
        if dt < 0.0 || dx < 0.0 {
            return Err(Error::invalid(format!(
                "corrupt hitting record at level {}: Δτ = {dt}, ΔX = {dx}",
                h.k
            )));
        }
        d_tau.push(dt);
        d_x.push(dx);
        prev_tau = h.tau;
        prev_x = h.x_at_tau;
    }
    SufficientStats::new(d_tau, d_x, n_scale, *p)
}

fn check_values(values: &[f64], k: usize) -> Result<()> {
    if values.len() != k {
        return Err(Error::invalid(format!("{} volatility values for {k} bins", values.len())));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::domain(format!("volatility values must be positive, got {v}")));
    }
    Ok(())
}

/// Per-bin summands `β (1 − n/ξ_k) ΔX_k − α Δτ_k log(ξ_k/n)` of the log
/// likelihood ratio.
pub fn log_likelihood_terms(stats: &SufficientStats, values: &[f64]) -> Result<Vec<f64>> {
    check_values(values, stats.len())?;
    let n = stats.n_scale as f64;
    let (alpha, beta) = (stats.params.alpha(), stats.params.beta());
    Ok(values
        .iter()
        .zip(stats.d_tau.iter().zip(&stats.d_x))
        .map(|(&xi, (&dt, &dx))| beta * (1.0 - n / xi) * dx - alpha * dt * (xi / n).ln())
        .collect())
}

/// Log of `dP^σ_T / dP^1_T` at piecewise-constant volatility `values`.
pub fn log_likelihood_ratio(stats: &SufficientStats, values: &[f64]) -> Result<f64> {
    Ok(log_likelihood_terms(stats, values)?.into_iter().sum())
}

/// Independent per-bin posteriors `IG(shape_k, scale_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IGPosterior {
    pub shape: Vec<f64>,
    pub scale: Vec<f64>,
    /// Bins that received no data; their posterior equals the prior.
    pub empty: Vec<bool>,
}

impl IGPosterior {
    pub fn len(&self) -> usize {
        self.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn cdf(&self, k: usize, x: f64) -> f64 {
        inv_gamma_cdf(self.shape[k], self.scale[k], x)
    }

    pub fn quantile(&self, k: usize, q: f64) -> Result<f64> {
        inv_gamma_quantile(self.shape[k], self.scale[k], q)
    }

    /// Draws one value per bin.
    pub fn sample(&self, rng: &mut RngStream) -> Vec<f64> {
        self.shape
            .iter()
            .zip(&self.scale)
            .map(|(&a, &b)| sample_inverse_gamma(a, b, rng))
            .collect()
    }
}

pub(crate) fn sample_inverse_gamma(shape: f64, scale: f64, rng: &mut RngStream) -> f64 {
    scale * (-sample_log_gamma(shape, rng)).exp()
}

/// `ξ_k | X ~ IG(α Δτ_k + α_k, n β ΔX_k + β_k)`.
pub fn posterior(stats: &SufficientStats, prior: &PriorSpec) -> Result<IGPosterior> {
    if stats.len() != prior.len() {
        return Err(Error::invalid(format!(
            "statistics cover {} bins but the prior covers {}",
            stats.len(),
            prior.len()
        )));
    }
    let n = stats.n_scale as f64;
    let (alpha, beta) = (stats.params.alpha(), stats.params.beta());
    let shape = stats
        .d_tau
        .iter()
        .zip(prior.alpha())
        .map(|(dt, ak)| alpha * dt + ak)
        .collect();
    let scale = stats
        .d_x
        .iter()
        .zip(prior.beta())
        .map(|(dx, bk)| n * beta * dx + bk)
        .collect();
    let empty = stats.d_tau.iter().map(|&t| t == 0.0).collect();
    Ok(IGPosterior { shape, scale, empty })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    /// `b/(a−1)`, absent when `a ≤ 1`.
    pub mean: Option<f64>,
    /// `b²/((a−1)²(a−2))`, absent when `a ≤ 2`.
    pub variance: Option<f64>,
}

pub fn inverse_gamma_moments(a: f64, b: f64) -> Moments {
    Moments {
        mean: (a > 1.0).then(|| b / (a - 1.0)),
        variance: (a > 2.0).then(|| b * b / ((a - 1.0) * (a - 1.0) * (a - 2.0))),
    }
}

pub fn posterior_moments(post: &IGPosterior) -> Vec<Moments> {
    post.shape
        .iter()
        .zip(&post.scale)
        .map(|(&a, &b)| inverse_gamma_moments(a, b))
        .collect()
}

/// Equal-tailed marginal credible interval of one bin, with its median and mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Band {
    pub bin: usize,
    pub lo: f64,
    pub median: f64,
    pub hi: f64,
    pub mean: Option<f64>,
}

/// Marginal equal-tailed intervals `[Q((1−level)/2), Q((1+level)/2)]` per bin.
pub fn credible_band(post: &IGPosterior, level: f64) -> Result<Vec<Band>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!("credible level must lie in (0, 1), got {level}")));
    }
    let tail = (1.0 - level) / 2.0;
    (0..post.len())
        .map(|k| {
            Ok(Band {
                bin: k + 1,
                lo: post.quantile(k, tail)?,
                median: post.quantile(k, 0.5)?,
                hi: post.quantile(k, 1.0 - tail)?,
                mean: inverse_gamma_moments(post.shape[k], post.scale[k]).mean,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightedBinSummary {
    pub mean: f64,
    /// Standard error of the self-normalized mean estimate.
    pub standard_error: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImportanceSummary {
    pub draws: usize,
    pub effective_sample_size: f64,
    pub bins: Vec<WeightedBinSummary>,
    pub warning: Option<String>,
}

/// Posterior summaries by self-normalized importance sampling: draws from
/// the prior, weighted by the likelihood ratio. Independent of the conjugate
/// formula, so it serves as a cross-check of [`posterior`].
pub fn importance_oracle_posterior(
    stats: &SufficientStats,
    prior: &PriorSpec,
    draws: usize,
    rng: &mut RngStream,
) -> Result<ImportanceSummary> {
    if stats.len() != prior.len() {
        return Err(Error::invalid("statistics and prior cover different bin counts"));
    }
    if draws < 10_000 {
        return Err(Error::invalid(format!("need at least 10000 draws, got {draws}")));
    }
    let k = stats.len();
    let mut samples = vec![Vec::with_capacity(draws); k];
    let mut log_w = Vec::with_capacity(draws);
    let mut xi = vec![0.0; k];
    for _ in 0..draws {
        for j in 0..k {
            xi[j] = sample_inverse_gamma(prior.alpha()[j], prior.beta()[j], rng);
            samples[j].push(xi[j]);
        }
        log_w.push(log_likelihood_ratio(stats, &xi)?);
    }
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let sum_w: f64 = w.iter().sum();
    let sum_w2: f64 = w.iter().map(|x| x * x).sum();
    let ess = sum_w * sum_w / sum_w2;

    let bins = samples
        .iter()
        .map(|xs| {
            let mean = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sum_w;
            let var_num: f64 = xs.iter().zip(&w).map(|(x, w)| w * w * (x - mean) * (x - mean)).sum();
            WeightedBinSummary {
                mean,
                standard_error: var_num.sqrt() / sum_w,
                q05: weighted_quantile(xs, &w, 0.05),
                median: weighted_quantile(xs, &w, 0.5),
                q95: weighted_quantile(xs, &w, 0.95),
            }
        })
        .collect();

    let warning = (ess < 100.0).then(|| format!("effective sample size {ess:.1} is below 100"));
    Ok(ImportanceSummary {
        draws,
        effective_sample_size: ess,
        bins,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::Hit;

    fn unit() -> GammaParams {
        GammaParams::new(1.0, 1.0).unwrap()
    }

    fn record(taus: &[f64], xs: &[f64], levels: &[f64]) -> HittingRecord {
        HittingRecord::new(
            taus.iter()
                .zip(xs)
                .zip(levels)
                .enumerate()
                .map(|(i, ((&tau, &x), &b))| Hit {
                    k: i + 1,
                    tau,
                    x_at_tau: x,
                    overshoot: x - b,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn differencing_example() {
        let rec = record(&[3.0, 5.0], &[0.12, 0.21], &[0.1, 0.2]);
        let s = sufficient_stats(&rec, 1, &unit()).unwrap();
        assert_eq!(s.d_tau, vec![3.0, 2.0]);
        assert!((s.d_x[0] - 0.12).abs() < 1e-15);
        assert!((s.d_x[1] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn zero_duration_forces_zero_increment() {
        assert!(SufficientStats::new(vec![0.0], vec![0.1], 1, unit()).is_err());
        assert!(SufficientStats::new(vec![0.0], vec![0.0], 1, unit()).is_ok());
        assert!(SufficientStats::new(vec![-1.0], vec![0.0], 1, unit()).is_err());
        // a corrupt record with decreasing values
        let rec = HittingRecord {
            hits: vec![
                Hit { k: 1, tau: 1.0, x_at_tau: 0.5, overshoot: 0.4 },
                Hit { k: 2, tau: 2.0, x_at_tau: 0.3, overshoot: 0.1 },
            ],
        };
        assert!(sufficient_stats(&rec, 1, &unit()).is_err());
    }

    #[test]
    fn likelihood_examples() {
        let s = SufficientStats::new(vec![5.0, 2.0], vec![3.0, 0.5], 7, unit()).unwrap();
        assert_eq!(log_likelihood_ratio(&s, &[7.0, 7.0]).unwrap(), 0.0);

        let p = GammaParams::new(1.0, 1.0).unwrap();
        let s = SufficientStats::new(vec![5.0], vec![3.0], 2, p).unwrap();
        let v = log_likelihood_ratio(&s, &[1.0]).unwrap();
        assert!((v - (-3.0 + 5.0 * 2.0f64.ln())).abs() < 1e-12);
        assert!((v - 0.465_735_902_799_726_5).abs() < 1e-12);

        assert!(log_likelihood_ratio(&s, &[0.0]).is_err());
        assert!(log_likelihood_ratio(&s, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn likelihood_times_prior_is_the_conjugate_kernel() {
        // log[IG(α_k, β_k) density × exp(llr)] − log IG(a_k, b_k) density must
        // not depend on ξ
        let p = GammaParams::new(0.7, 2.3).unwrap();
        let s = SufficientStats::new(vec![4.0, 9.5], vec![1.1, 3.0], 3, p).unwrap();
        let prior = PriorSpec::new(vec![1.5, 0.4], vec![0.8, 2.0]).unwrap();
        let post = posterior(&s, &prior).unwrap();
        let ig_log = |a: f64, b: f64, x: f64| -(a + 1.0) * x.ln() - b / x;
        let diff = |xi: [f64; 2]| {
            let llr = log_likelihood_ratio(&s, &xi).unwrap();
            let pr: f64 = (0..2).map(|k| ig_log(prior.alpha()[k], prior.beta()[k], xi[k])).sum();
            let po: f64 = (0..2).map(|k| ig_log(post.shape[k], post.scale[k], xi[k])).sum();
            pr + llr - po
        };
        let c0 = diff([1.0, 1.0]);
        for xi in [[0.3, 2.0], [5.0, 0.1], [1.7, 1.7]] {
            assert!((diff(xi) - c0).abs() < 1e-10);
        }
    }

    #[test]
    fn posterior_examples() {
        let s = SufficientStats::new(vec![33.0], vec![0.1], 500, unit()).unwrap();
        let prior = PriorSpec::uniform(1, 0.1, 0.1).unwrap();
        let post = posterior(&s, &prior).unwrap();
        assert!((post.shape[0] - 33.1).abs() < 1e-12);
        assert!((post.scale[0] - 50.1).abs() < 1e-12);

        let empty = SufficientStats::empty(3, 500, unit()).unwrap();
        let prior = PriorSpec::new(vec![1.0, 2.0, 3.0], vec![0.5, 0.6, 0.7]).unwrap();
        let post = posterior(&empty, &prior).unwrap();
        assert_eq!(post.shape, prior.alpha());
        assert_eq!(post.scale, prior.beta());
        assert!(post.empty.iter().all(|&e| e));

        let s1 = SufficientStats::new(vec![2.5, 4.0], vec![0.3, 0.7], 11, unit()).unwrap();
        let s2 = SufficientStats::new(vec![5.0, 8.0], vec![0.6, 1.4], 11, unit()).unwrap();
        let pr = PriorSpec::uniform(2, 0.5, 0.25).unwrap();
        let (p1, p2) = (posterior(&s1, &pr).unwrap(), posterior(&s2, &pr).unwrap());
        for k in 0..2 {
            assert_eq!(2.0 * (p1.shape[k] - 0.5), p2.shape[k] - 0.5);
            assert_eq!(2.0 * (p1.scale[k] - 0.25), p2.scale[k] - 0.25);
        }

        assert!(posterior(&s1, &PriorSpec::uniform(3, 1.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn moments_examples() {
        let m = inverse_gamma_moments(3.0, 4.0);
        assert_eq!(m.mean, Some(2.0));
        assert_eq!(m.variance, Some(4.0));
        let m = inverse_gamma_moments(1.5, 4.0);
        assert_eq!(m.mean, Some(8.0));
        assert_eq!(m.variance, None);
        assert_eq!(inverse_gamma_moments(0.9, 1.0).mean, None);
        let m = inverse_gamma_moments(33.1, 50.1);
        assert!((m.mean.unwrap() - 50.1 / 32.1).abs() < 1e-12);
        assert!((m.mean.unwrap() - 1.5607).abs() < 1e-4);
    }

    /// Bisection on the CDF, computed here by quadrature of the IG density
    /// rather than through the incomplete gamma function.
    fn ig_cdf_by_quadrature(a: f64, b: f64, x: f64) -> f64 {
        // substitute y = b/u: P(X ≤ x) = ∫_{b/x}^∞ Gamma(a,1) density
        // = 1 − ∫_0^{b/x} u^{a−1} e^{−u} / Γ(a) du, integrated in s = ln u
        let upper = (b / x).ln();
        let lg = crate::special::ln_gamma(a);
        let lo = upper.min(0.0) - 60.0 / a - 5.0;
        let steps = 400_000;
        let h = (upper - lo) / steps as f64;
        let mut sum = 0.0;
        for i in 0..=steps {
            let s = lo + i as f64 * h;
            let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
            sum += w * (a * s - s.exp() - lg).exp();
        }
        1.0 - sum * h
    }

    fn bisect_quantile(a: f64, b: f64, q: f64) -> f64 {
        let (mut lo, mut hi) = (1e-12_f64, 1e6_f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if ig_cdf_by_quadrature(a, b, mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 < 1e-13 {
                break;
            }
        }
        (lo * hi).sqrt()
    }

    #[test]
    fn median_matches_bisection_oracle() {
        for &(a, b) in &[(3.0, 4.0), (33.1, 50.1), (0.7, 0.2)] {
            let post = IGPosterior { shape: vec![a], scale: vec![b], empty: vec![false] };
            let median = post.quantile(0, 0.5).unwrap();
            let oracle = bisect_quantile(a, b, 0.5);
            assert!((median - oracle).abs() < 1e-8 * oracle.max(1.0), "{a},{b}: {median} vs {oracle}");
        }
    }

    #[test]
    fn band_tails_and_nesting() {
        let post = IGPosterior {
            shape: vec![0.5, 3.0, 33.1, 100.0],
            scale: vec![0.2, 4.0, 50.1, 99.0],
            empty: vec![false; 4],
        };
        let b90 = credible_band(&post, 0.9).unwrap();
        let b50 = credible_band(&post, 0.5).unwrap();
        for k in 0..4 {
            assert!((post.cdf(k, b90[k].lo) - 0.05).abs() < 1e-8);
            assert!((post.cdf(k, b90[k].hi) - 0.95).abs() < 1e-8);
            assert!((ig_cdf_by_quadrature(post.shape[k], post.scale[k], b90[k].lo) - 0.05).abs() < 1e-8);
            assert!(b90[k].lo <= b50[k].lo && b50[k].hi <= b90[k].hi);
            assert!(b50[k].lo < b50[k].median && b50[k].median < b50[k].hi);
        }
        assert_eq!(b90[0].mean, None);
        assert!(credible_band(&post, 1.0).is_err());
        assert!(credible_band(&post, 0.0).is_err());
    }

    #[test]
    fn shrinkage_to_truth() {
        let p = GammaParams::new(1.3, 0.6).unwrap();
        let n = 40;
        let sigma = 1.7;
        let prior = PriorSpec::uniform(1, 2.0, 5.0).unwrap();
        let mut gaps = Vec::new();
        for dt in [1e2, 1e4, 1e6] {
            let dx = sigma * p.alpha() * dt / (n as f64 * p.beta());
            let s = SufficientStats::new(vec![dt], vec![dx], n, p).unwrap();
            let m = posterior_moments(&posterior(&s, &prior).unwrap())[0].mean.unwrap();
            gaps.push((m - sigma).abs());
        }
        assert!(gaps[2] < 1e-3);
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2]);
    }

    #[test]
    fn importance_oracle_with_no_data_reproduces_prior() {
        let s = SufficientStats::empty(2, 5, unit()).unwrap();
        let prior = PriorSpec::new(vec![3.0, 4.0], vec![2.0, 6.0]).unwrap();
        let sum = importance_oracle_posterior(&s, &prior, 20_000, &mut RngStream::new(1, 0)).unwrap();
        assert!((sum.effective_sample_size - 20_000.0).abs() < 1e-6);
        for (k, b) in sum.bins.iter().enumerate() {
            let m = prior.beta()[k] / (prior.alpha()[k] - 1.0);
            assert!((b.mean - m).abs() < 4.0 * b.standard_error);
        }
        assert!(sum.warning.is_none());
        assert!(importance_oracle_posterior(&s, &prior, 100, &mut RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn importance_oracle_agrees_on_small_instance() {
        let s = SufficientStats::new(vec![8.0, 12.0], vec![2.0, 1.5], 5, unit()).unwrap();
        let prior = PriorSpec::uniform(2, 2.5, 3.0).unwrap();
        let sum = importance_oracle_posterior(&s, &prior, 100_000, &mut RngStream::new(2, 0)).unwrap();
        let post = posterior(&s, &prior).unwrap();
        for (k, m) in posterior_moments(&post).iter().enumerate() {
            let m = m.mean.unwrap();
            assert!((sum.bins[k].mean - m).abs() / m < 0.02);
            assert!((sum.bins[k].mean - m).abs() < 3.0 * sum.bins[k].standard_error);
        }
    }

    #[test]
    fn per_bin_terms_are_additive() {
        let s = SufficientStats::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.5, 0.1, 0.9, 0.3], 9, unit()).unwrap();
        let xi = [0.7, 3.1, 12.0, 9.0];
        let full = log_likelihood_terms(&s, &xi).unwrap();
        let left = log_likelihood_terms(&s.subset(0..2), &xi[0..2]).unwrap();
        let right = log_likelihood_terms(&s.subset(2..4), &xi[2..4]).unwrap();
        assert_eq!(full, [left.clone(), right.clone()].concat());
        let total = log_likelihood_ratio(&s, &xi).unwrap();
        let parts: f64 = left.iter().sum::<f64>() + right.iter().sum::<f64>();
        assert!((total - parts).abs() <= 1e-12 * total.abs().max(1.0));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn quantile_inverts_cdf(a in 0.5f64..100.0, b in 0.01f64..100.0, qi in 0usize..3) {
            let q = [0.05, 0.5, 0.95][qi];
            let post = IGPosterior { shape: vec![a], scale: vec![b], empty: vec![false] };
            let x = post.quantile(0, q).unwrap();
            prop_assert!((post.cdf(0, x) - q).abs() < 1e-8);
        }

        #[test]
        fn likelihood_is_additive(
            raw in proptest::collection::vec((0.0f64..50.0, 0.0f64..5.0, 0.05f64..20.0), 2..8),
            split in 1usize..7,
        ) {
            let split = split.min(raw.len() - 1);
            let d_tau: Vec<f64> = raw.iter().map(|r| r.0).collect();
            let d_x: Vec<f64> = raw.iter().map(|r| if r.0 == 0.0 { 0.0 } else { r.1 }).collect();
            let xi: Vec<f64> = raw.iter().map(|r| r.2).collect();
            let s = SufficientStats::new(d_tau, d_x, 7, GammaParams::new(1.2, 0.8).unwrap()).unwrap();
            let full = log_likelihood_terms(&s, &xi).unwrap();
            let l = log_likelihood_terms(&s.subset(0..split), &xi[..split]).unwrap();
            let r = log_likelihood_terms(&s.subset(split..xi.len()), &xi[split..]).unwrap();
            prop_assert_eq!(full, [l, r].concat());
        }
    }
}
