//! Data-augmentation sampler for discretely observed paths.
//!
//! The hitting times `τ_k` of the levels are latent. Each sweep updates every
//! `τ_k` by an independence Metropolis–Hastings step inside the interval
//! between its neighbouring anchors, then redraws the `ξ_k` from their
//! conjugate inverse-gamma conditionals. The value at a hitting time is
//! approximated by the level itself, so increments `ΔX_k` become `Δb_k`.
//!
//! The τ-target is `f(τ)·R(τ)`, with `f` the product of unit-volatility
//! transition densities into and out of `(τ_k, b_k)` and
//! `log R = β Σ (1 − n/ξ_k) Δb_k − α Σ Δτ_k log(ξ_k/n)`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gamma::{transition_logdensity, GammaParams};
use crate::inference::{posterior, IGPosterior, PriorSpec, SufficientStats};
use crate::rng::RngStream;
use crate::stats::{mean, quantile, sample_sd};
use crate::volatility::BinPartition;

/// Monotone observations `(t_i, x_{t_i})`, `i = 0..m`, starting from 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteObservations {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl DiscreteObservations {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} times but {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::invalid("need at least two observations"));
        }
        if times.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::invalid("observations must be finite"));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(format!(
                "times must be strictly increasing (observation {})",
                i + 1
            )));
        }
        if let Some(i) = values.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::invalid(format!(
                "values must be nondecreasing (observation {})",
                i + 1
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::invalid(format!("first value must be 0, got {}", values[0])));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    pub fn end_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Keeps every `step`-th observation, always including the first.
    pub fn thin(&self, step: usize) -> Self {
        let step = step.max(1);
        let times = self.times.iter().step_by(step).copied().collect();
        let values = self.values.iter().step_by(step).copied().collect();
        Self { times, values }
    }
}

/// A time interval with the observed values at its ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bracket {
    pub t_lo: f64,
    pub t_hi: f64,
    pub x_lo: f64,
    pub x_hi: f64,
}

impl Bracket {
    pub fn width(&self) -> f64 {
        self.t_hi - self.t_lo
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CrossingKind {
    /// The level equals an observed value; τ is that observation's time.
    Fixed { tau: f64 },
    Open { bracket: Bracket },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub k: usize,
    pub level: f64,
    /// Index `i` of the first observation with `x_{t_i} ≥ b_k`.
    pub index: usize,
    pub kind: CrossingKind,
}

impl Crossing {
    pub fn is_fixed(&self) -> bool {
        matches!(self.kind, CrossingKind::Fixed { .. })
    }
}

/// Locates the observation interval of every level crossing.
pub fn bracket_crossings(obs: &DiscreteObservations, partition: &BinPartition) -> Result<Vec<Crossing>> {
    let (t, x) = (obs.times(), obs.values());
    (1..=partition.len())
        .map(|k| {
            let level = partition.level(k);
            if level > obs.end_value() {
                return Err(Error::LevelNotReached { k, level });
            }
            let i = x.partition_point(|&v| v < level);
            let kind = if x[i] == level {
                CrossingKind::Fixed { tau: t[i] }
            } else {
                CrossingKind::Open {
                    bracket: Bracket {
                        t_lo: t[i - 1],
                        t_hi: t[i],
                        x_lo: x[i - 1],
                        x_hi: x[i],
                    },
                }
            };
            Ok(Crossing { k, level, index: i, kind })
        })
        .collect()
}

/// Unnormalized log density of τ given the anchors of `bracket` and level `b`:
/// `log p¹(t_lo, x_lo; τ, b) + log p¹(τ, b; t_hi, x_hi)`.
pub fn tau_log_density(tau: f64, bracket: &Bracket, level: f64, p: &GammaParams) -> Result<f64> {
    if !(tau > bracket.t_lo && tau < bracket.t_hi) {
        return Err(Error::domain(format!(
            "τ = {tau} must lie strictly inside ({}, {})",
            bracket.t_lo, bracket.t_hi
        )));
    }
    if !(level > bracket.x_lo && level < bracket.x_hi) {
        return Err(Error::domain(format!(
            "level {level} must lie strictly between {} and {}",
            bracket.x_lo, bracket.x_hi
        )));
    }
    Ok(transition_logdensity(p, tau - bracket.t_lo, level - bracket.x_lo)?
        + transition_logdensity(p, bracket.t_hi - tau, bracket.x_hi - level)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProposalMode {
    /// Piecewise-constant density on a uniform grid of cells.
    #[default]
    Continuous,
    /// Point masses at the cell midpoints, proportional to the density there.
    Lattice,
}

/// Gridded inverse-CDF proposal for one hitting time.
#[derive(Debug, Clone)]
pub struct TauProposal {
    lo: f64,
    h: f64,
    mode: ProposalMode,
    /// Log probability of each cell.
    log_mass: Vec<f64>,
    cumulative: Vec<f64>,
    point: Option<f64>,
}

const DEGENERATE_WIDTH: f64 = 1e-12;

impl TauProposal {
    pub fn new(
        bracket: &Bracket,
        level: f64,
        p: &GammaParams,
        grid_points: usize,
        mode: ProposalMode,
    ) -> Result<Self> {
        if grid_points < 16 {
            return Err(Error::invalid(format!("need at least 16 grid points, got {grid_points}")));
        }
        let width = bracket.width();
        if !(width >= 0.0) {
            return Err(Error::domain("bracket end precedes its start"));
        }
        if width <= DEGENERATE_WIDTH * bracket.t_hi.abs().max(1.0) {
            return Ok(Self {
                lo: bracket.t_lo,
                h: 0.0,
                mode,
                log_mass: Vec::new(),
                cumulative: Vec::new(),
                point: Some(0.5 * (bracket.t_lo + bracket.t_hi)),
            });
        }
        let h = width / grid_points as f64;
        let log_w = (0..grid_points)
            .map(|j| tau_log_density(bracket.t_lo + (j as f64 + 0.5) * h, bracket, level, p))
            .collect::<Result<Vec<f64>>>()?;
        let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numerical(format!(
                "hitting-time density underflows on ({}, {}); refine the observation grid",
                bracket.t_lo, bracket.t_hi
            )));
        }
        let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let log_total = total.ln();
        let log_mass = log_w.iter().map(|l| l - max - log_total).collect();
        let mut acc = 0.0;
        let cumulative = w
            .iter()
            .map(|wi| {
                acc += wi / total;
                acc
            })
            .collect();
        Ok(Self {
            lo: bracket.t_lo,
            h,
            mode,
            log_mass,
            cumulative,
            point: None,
        })
    }

    /// Bracket collapsed to a point, which is then the only possible draw.
    pub fn point(&self) -> Option<f64> {
        self.point
    }

    pub fn grid_points(&self) -> usize {
        self.log_mass.len()
    }

    pub fn cell_masses(&self) -> Vec<f64> {
        self.log_mass.iter().map(|l| l.exp()).collect()
    }

    pub fn support_point(&self, j: usize) -> f64 {
        self.lo + (j as f64 + 0.5) * self.h
    }

    fn cell(&self, tau: f64) -> Option<usize> {
        let u = (tau - self.lo) / self.h;
        if !(u >= 0.0) {
            return None;
        }
        let j = u.floor() as usize;
        (j < self.log_mass.len()).then_some(j)
    }

    /// Log proposal density at `tau` (log probability in lattice mode).
    pub fn log_density(&self, tau: f64) -> f64 {
        if let Some(pt) = self.point {
            return if tau == pt { 0.0 } else { f64::NEG_INFINITY };
        }
        match (self.cell(tau), self.mode) {
            (Some(j), ProposalMode::Continuous) => self.log_mass[j] - self.h.ln(),
            (Some(j), ProposalMode::Lattice) if tau == self.support_point(j) => self.log_mass[j],
            _ => f64::NEG_INFINITY,
        }
    }

    /// Draws τ and returns it with its log proposal density.
    pub fn sample(&self, rng: &mut RngStream) -> (f64, f64) {
        if let Some(pt) = self.point {
            return (pt, 0.0);
        }
        let u: f64 = rng.random();
        let last = self.cumulative.len() - 1;
        let j = self.cumulative.partition_point(|&c| c <= u).min(last);
        let tau = match self.mode {
            ProposalMode::Continuous => self.lo + (j as f64 + rng.open01()) * self.h,
            ProposalMode::Lattice => self.support_point(j),
        };
        (tau, self.log_density(tau))
    }
}

/// One inverse-CDF draw from the gridded τ density of `bracket`.
pub fn propose_tau(
    bracket: &Bracket,
    level: f64,
    p: &GammaParams,
    grid_points: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    Ok(TauProposal::new(bracket, level, p, grid_points, ProposalMode::Continuous)?.sample(rng))
}

/// The two sums of `log R` separately: `β Σ (1 − n/ξ_k) Δb_k`, which does not
/// involve τ, and `−α Σ Δτ_k log(ξ_k/n)` with `τ_0 = origin`.
pub fn log_r_terms(
    origin: f64,
    taus: &[f64],
    xis: &[f64],
    partition: &BinPartition,
    p: &GammaParams,
    n_scale: u64,
) -> Result<(f64, f64)> {
    let k = partition.len();
    if taus.len() != k || xis.len() != k {
        return Err(Error::invalid(format!(
            "{} taus and {} volatility values for {k} levels",
            taus.len(),
            xis.len()
        )));
    }
    if let Some(v) = xis.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::domain(format!("volatility values must be positive, got {v}")));
    }
    let n = n_scale as f64;
    let mut level_term = 0.0;
    let mut time_term = 0.0;
    let mut prev = origin;
    for j in 0..k {
        let dt = taus[j] - prev;
        if dt < 0.0 {
            return Err(Error::domain(format!("hitting times decrease at level {}", j + 1)));
        }
        level_term += (1.0 - n / xis[j]) * partition.width(j + 1);
        time_term += dt * (xis[j] / n).ln();
        prev = taus[j];
    }
    Ok((p.beta() * level_term, -p.alpha() * time_term))
}

/// `log R` with `τ_0 = 0`.
pub fn log_r(taus: &[f64], xis: &[f64], partition: &BinPartition, p: &GammaParams, n_scale: u64) -> Result<f64> {
    let (a, b) = log_r_terms(0.0, taus, xis, partition, p, n_scale)?;
    Ok(a + b)
}

/// Log acceptance ratio of an independence MH move from `old` to `new` for
/// target `π` and proposal `q`, each given as `(log π, log q)`.
pub fn mh_log_acceptance(new: (f64, f64), old: (f64, f64)) -> f64 {
    (new.0 - new.1) - (old.0 - old.1)
}

/// Transition matrix of independence MH on a finite state space.
pub fn independence_transition_matrix(log_target: &[f64], log_proposal: &[f64]) -> Vec<Vec<f64>> {
    let m = log_target.len();
    let mut out = vec![vec![0.0; m]; m];
    for i in 0..m {
        let mut stay = 1.0;
        for j in 0..m {
            if i == j {
                continue;
            }
            let acc = mh_log_acceptance((log_target[j], log_proposal[j]), (log_target[i], log_proposal[i]))
                .min(0.0)
                .exp();
            let pij = log_proposal[j].exp() * acc;
            out[i][j] = pij;
            stay -= pij;
        }
        out[i][i] = stay;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugmentedState {
    pub taus: Vec<f64>,
    pub xis: Vec<f64>,
    /// Cached `log R` at `(taus, xis)`.
    pub log_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub grid_points: usize,
    pub mode: ProposalMode,
    /// Permit several levels inside one observation interval.
    pub allow_shared_brackets: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            iterations: 11_000,
            burn_in: 1_000,
            thin: 1,
            grid_points: 256,
            mode: ProposalMode::Continuous,
            allow_shared_brackets: false,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations <= self.burn_in {
            return Err(Error::invalid(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(Error::invalid("thinning interval must be at least 1"));
        }
        if self.grid_points < 16 {
            return Err(Error::invalid(format!("need at least 16 grid points, got {}", self.grid_points)));
        }
        Ok(())
    }
}

/// Sampler state shared across sweeps: data, model and the crossing layout.
pub struct Sampler<'a> {
    obs: &'a DiscreteObservations,
    partition: &'a BinPartition,
    prior: &'a PriorSpec,
    p: GammaParams,
    n_scale: u64,
    grid_points: usize,
    mode: ProposalMode,
    crossings: Vec<Crossing>,
}

impl<'a> Sampler<'a> {
    pub fn new(
        obs: &'a DiscreteObservations,
        partition: &'a BinPartition,
        prior: &'a PriorSpec,
        p: &GammaParams,
        n_scale: u64,
        config: &ChainConfig,
    ) -> Result<Self> {
        config.validate()?;
        if n_scale == 0 {
            return Err(Error::domain("scale n must be at least 1"));
        }
        if prior.len() != partition.len() {
            return Err(Error::invalid(format!(
                "prior covers {} bins but the partition has {}",
                prior.len(),
                partition.len()
            )));
        }
        let crossings = bracket_crossings(obs, partition)?;
        for w in crossings.windows(2) {
            if w[0].index == w[1].index && !w[0].is_fixed() && !w[1].is_fixed() {
                if config.mode == ProposalMode::Lattice {
                    return Err(Error::invalid(format!(
                        "lattice proposals need one level per observation interval, levels {} and {} share one",
                        w[0].k, w[1].k
                    )));
                }
                if !config.allow_shared_brackets {
                    return Err(Error::invalid(format!(
                        "each bin must contain at least one observation; levels {} and {} are crossed \
                         between the same pair of observations",
                        w[0].k, w[1].k
                    )));
                }
            }
        }
        Ok(Self {
            obs,
            partition,
            prior,
            p: *p,
            n_scale,
            grid_points: config.grid_points,
            mode: config.mode,
            crossings,
        })
    }

    pub fn crossings(&self) -> &[Crossing] {
        &self.crossings
    }

    pub fn log_weight(&self, taus: &[f64], xis: &[f64]) -> Result<f64> {
        let (a, b) = log_r_terms(self.obs.start_time(), taus, xis, self.partition, &self.p, self.n_scale)?;
        Ok(a + b)
    }

    /// τ at bracket midpoints (evenly spread when levels share a bracket),
    /// ξ at the prior mean, or at the prior mode when the mean does not exist.
    pub fn initial_state(&self) -> Result<AugmentedState> {
        let k = self.crossings.len();
        let mut taus = vec![0.0; k];
        let mut j = 0;
        while j < k {
            match self.crossings[j].kind {
                CrossingKind::Fixed { tau } => {
                    taus[j] = tau;
                    j += 1;
                }
                CrossingKind::Open { bracket } => {
                    let mut end = j + 1;
                    while end < k
                        && self.crossings[end].index == self.crossings[j].index
                        && !self.crossings[end].is_fixed()
                    {
                        end += 1;
                    }
                    let g = (end - j) as f64;
                    for (r, tau) in taus[j..end].iter_mut().enumerate() {
                        *tau = bracket.t_lo + (r as f64 + 1.0) / (g + 1.0) * bracket.width();
                    }
                    if self.mode == ProposalMode::Lattice {
                        let prop = self.proposal(j, &taus)?;
                        if prop.point().is_none() {
                            taus[j] = prop.support_point(prop.grid_points() / 2);
                        }
                    }
                    j = end;
                }
            }
        }
        let xis: Vec<f64> = self
            .prior
            .alpha()
            .iter()
            .zip(self.prior.beta())
            .map(|(&a, &b)| if a > 1.0 { b / (a - 1.0) } else { b / (a + 1.0) })
            .collect();
        let log_weight = self.log_weight(&taus, &xis)?;
        Ok(AugmentedState { taus, xis, log_weight })
    }

    /// Interval between the neighbouring anchors of open level `j` (zero-based).
    fn local_bracket(&self, j: usize, taus: &[f64]) -> Bracket {
        let c = &self.crossings[j];
        let CrossingKind::Open { bracket } = c.kind else {
            unreachable!("local bracket of a fixed level")
        };
        let mut local = bracket;
        if j > 0 && self.crossings[j - 1].index == c.index && !self.crossings[j - 1].is_fixed() {
            local.t_lo = taus[j - 1];
            local.x_lo = self.crossings[j - 1].level;
        }
        if j + 1 < self.crossings.len()
            && self.crossings[j + 1].index == c.index
            && !self.crossings[j + 1].is_fixed()
        {
            local.t_hi = taus[j + 1];
            local.x_hi = self.crossings[j + 1].level;
        }
        local
    }

    fn proposal(&self, j: usize, taus: &[f64]) -> Result<TauProposal> {
        let local = self.local_bracket(j, taus);
        TauProposal::new(&local, self.crossings[j].level, &self.p, self.grid_points, self.mode)
    }

    /// MH update of every open τ_k in turn. Returns, per level, whether the
    /// proposal was accepted (`None` for fixed levels).
    pub fn tau_step(&self, state: &mut AugmentedState, rng: &mut RngStream) -> Result<Vec<Option<bool>>> {
        let mut accepted = vec![None; self.crossings.len()];
        for (j, crossing) in self.crossings.iter().enumerate() {
            if crossing.is_fixed() {
                continue;
            }
            let level = crossing.level;
            let local = self.local_bracket(j, &state.taus);
            let prop = TauProposal::new(&local, level, &self.p, self.grid_points, self.mode)?;
            let (tau_new, lq_new) = prop.sample(rng);
            if prop.point().is_some() {
                state.taus[j] = tau_new;
                state.log_weight = self.log_weight(&state.taus, &state.xis)?;
                accepted[j] = Some(true);
                continue;
            }
            if !(tau_new > local.t_lo && tau_new < local.t_hi) {
                accepted[j] = Some(false);
                continue;
            }
            let tau_old = state.taus[j];
            let lq_old = prop.log_density(tau_old);
            let lf_new = tau_log_density(tau_new, &local, level, &self.p)?;
            let lf_old = tau_log_density(tau_old, &local, level, &self.p)?;
            state.taus[j] = tau_new;
            let lr_new = self.log_weight(&state.taus, &state.xis)?;
            let log_acc = mh_log_acceptance((lf_new + lr_new, lq_new), (lf_old + state.log_weight, lq_old));
            let take = log_acc >= 0.0 || rng.open01().ln() < log_acc;
            if take {
                state.log_weight = lr_new;
            } else {
                state.taus[j] = tau_old;
            }
            accepted[j] = Some(take);
        }
        Ok(accepted)
    }

    /// Conditional posterior of ξ given the current hitting times.
    pub fn conditional_posterior(&self, taus: &[f64]) -> Result<IGPosterior> {
        let mut prev = self.obs.start_time();
        let mut d_tau = Vec::with_capacity(taus.len());
        for &t in taus {
            d_tau.push(t - prev);
            prev = t;
        }
        let stats = SufficientStats::new(d_tau, self.partition.widths(), self.n_scale, self.p)?;
        posterior(&stats, self.prior)
    }

    /// Redraws every ξ_k from `IG(α Δτ_k + α_k, n β Δb_k + β_k)`.
    pub fn xi_step(&self, state: &mut AugmentedState, rng: &mut RngStream) -> Result<()> {
        state.xis = self.conditional_posterior(&state.taus)?.sample(rng);
        state.log_weight = self.log_weight(&state.taus, &state.xis)?;
        Ok(())
    }

    pub fn sweep(&self, state: &mut AugmentedState, rng: &mut RngStream) -> Result<Vec<Option<bool>>> {
        let acc = self.tau_step(state, rng)?;
        self.xi_step(state, rng)?;
        Ok(acc)
    }
}

/// One τ-then-ξ sweep from `state`.
#[allow(clippy::too_many_arguments)]
pub fn gibbs_sweep(
    state: &AugmentedState,
    obs: &DiscreteObservations,
    partition: &BinPartition,
    prior: &PriorSpec,
    p: &GammaParams,
    n_scale: u64,
    config: &ChainConfig,
    rng: &mut RngStream,
) -> Result<AugmentedState> {
    let sampler = Sampler::new(obs, partition, prior, p, n_scale, config)?;
    let mut next = state.clone();
    sampler.sweep(&mut next, rng)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub bin: usize,
    pub mean: f64,
    pub sd: f64,
    pub q05: f64,
    pub median: f64,
    pub q95: f64,
}

fn summarize(bin: usize, xs: &[f64]) -> TraceSummary {
    TraceSummary {
        bin,
        mean: mean(xs),
        sd: if xs.len() > 1 { sample_sd(xs) } else { 0.0 },
        q05: quantile(xs, 0.05),
        median: quantile(xs, 0.5),
        q95: quantile(xs, 0.95),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainOutput {
    /// `xi[k][s]`: kept draw `s` of `ξ_{k+1}`.
    pub xi: Vec<Vec<f64>>,
    /// `tau[k][s]`: kept draw `s` of `τ_{k+1}`.
    pub tau: Vec<Vec<f64>>,
    /// Per level; absent for levels fixed by an exact observation.
    pub acceptance: Vec<Option<f64>>,
    /// Average over kept draws of `E[ξ_k | τ]`.
    pub rao_blackwell_mean: Vec<Option<f64>>,
    pub summaries: Vec<TraceSummary>,
    pub crossings: Vec<Crossing>,
    pub config: ChainConfig,
    pub final_state: AugmentedState,
}

impl ChainOutput {
    pub fn kept(&self) -> usize {
        self.xi.first().map_or(0, Vec::len)
    }
}

/// Runs a single chain and returns its thinned post-burn-in draws.
#[allow(clippy::too_many_arguments)]
pub fn run_chain(
    obs: &DiscreteObservations,
    partition: &BinPartition,
    prior: &PriorSpec,
    p: &GammaParams,
    n_scale: u64,
    config: &ChainConfig,
    rng: &mut RngStream,
) -> Result<ChainOutput> {
    let sampler = Sampler::new(obs, partition, prior, p, n_scale, config)?;
    let k = partition.len();
    let mut state = sampler.initial_state()?;
    let keep = (config.iterations - config.burn_in).div_ceil(config.thin);
    let mut xi = vec![Vec::with_capacity(keep); k];
    let mut tau = vec![Vec::with_capacity(keep); k];
    let mut rb_sum = vec![0.0; k];
    let mut rb_ok = vec![true; k];
    let mut accepted = vec![0usize; k];
    let mut proposed = vec![0usize; k];

    for it in 0..config.iterations {
        let acc = sampler.sweep(&mut state, rng)?;
        for (j, a) in acc.iter().enumerate() {
            if let Some(a) = a {
                proposed[j] += 1;
                accepted[j] += usize::from(*a);
            }
        }
        if it >= config.burn_in && (it - config.burn_in).is_multiple_of(config.thin) {
            let cond = sampler.conditional_posterior(&state.taus)?;
            for j in 0..k {
                xi[j].push(state.xis[j]);
                tau[j].push(state.taus[j]);
                if cond.shape[j] > 1.0 {
                    rb_sum[j] += cond.scale[j] / (cond.shape[j] - 1.0);
                } else {
                    rb_ok[j] = false;
                }
            }
        }
    }

    let kept = xi[0].len() as f64;
    let acceptance = (0..k)
        .map(|j| (proposed[j] > 0).then(|| accepted[j] as f64 / proposed[j] as f64))
        .collect();
    let rao_blackwell_mean = (0..k).map(|j| rb_ok[j].then(|| rb_sum[j] / kept)).collect();
    let summaries = xi.iter().enumerate().map(|(j, xs)| summarize(j + 1, xs)).collect();
    Ok(ChainOutput {
        xi,
        tau,
        acceptance,
        rao_blackwell_mean,
        summaries,
        crossings: sampler.crossings,
        config: *config,
        final_state: state,
    })
}

/// Independent chains on child streams `0..chains` of `rng`, run in parallel.
#[allow(clippy::too_many_arguments)]
pub fn run_chains(
    obs: &DiscreteObservations,
    partition: &BinPartition,
    prior: &PriorSpec,
    p: &GammaParams,
    n_scale: u64,
    config: &ChainConfig,
    chains: usize,
    rng: &RngStream,
) -> Result<Vec<ChainOutput>> {
    if chains == 0 {
        return Err(Error::invalid("need at least one chain"));
    }
    (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut r = rng.child(c as u64);
            run_chain(obs, partition, prior, p, n_scale, config, &mut r)
        })
        .collect()
}

/// Gelman–Rubin potential scale reduction of each ξ_k across chains.
pub fn potential_scale_reduction(chains: &[ChainOutput]) -> Vec<f64> {
    let bins = chains.first().map_or(0, |c| c.xi.len());
    (0..bins)
        .map(|k| {
            let n = chains.iter().map(|c| c.xi[k].len()).min().unwrap_or(0) as f64;
            let means: Vec<f64> = chains.iter().map(|c| mean(&c.xi[k])).collect();
            let vars: Vec<f64> = chains.iter().map(|c| sample_sd(&c.xi[k]).powi(2)).collect();
            let w = mean(&vars);
            let b = n * sample_sd(&means).powi(2);
            let var_hat = (n - 1.0) / n * w + b / n;
            (var_hat / w).sqrt()
        })
        .collect()
}
