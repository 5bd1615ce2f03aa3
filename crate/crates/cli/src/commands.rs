//! Subcommand bodies. Each returns the list of files it wrote.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gammavol::experiment::{run_contraction, run_coverage};
use gammavol::inference::{credible_band, posterior, posterior_moments, sufficient_stats, Band, Moments};
use gammavol::io::{self, PATH_HEADER, RECORD_HEADER};
use gammavol::mcmc::{potential_scale_reduction, run_chains, ChainOutput, DiscreteObservations};
use gammavol::rqv::{fit_rqv, fit_rqv_mcmc, RqvCalibration};
use gammavol::simulate::{
    euler_with_record, verify_hitting_concentration, verify_overshoot_bound, EulerConfig, Hit,
};
use gammavol::stats::{mean, quantile};
use gammavol::volatility::make_test_volatility;
use gammavol::{
    BinPartition, Error, GammaParams, HittingRecord, IGPosterior, PiecewiseVolatility, PriorSpec, Result, RngStream,
    SufficientStats,
};
use serde::Serialize;

use crate::config::{
    ContractionCommand, CoverageCommand, FitConfig, FitDiscreteConfig, RqvConfig, SimulateConfig, VerifyConfig,
};

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

fn require_seed(seed: Option<u64>) -> Result<u64> {
    seed.ok_or_else(|| invalid("a seed is required: set \"seed\" in the config or pass --seed"))
}

fn require_input(input: &Option<PathBuf>) -> Result<&Path> {
    input
        .as_deref()
        .ok_or_else(|| invalid("no input file: set \"input\" in the config or pass --input"))
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("credible level must lie in (0, 1), got {level}")))
    }
}

/// Output directory; files are written under a temporary name and renamed
/// once complete.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_owned(), written: Vec::new() })
    }

    fn write<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let target = self.dir.join(name);
        let partial = self.dir.join(format!(".{name}.partial"));
        let mut w = BufWriter::new(File::create(&partial)?);
        body(&mut w)?;
        w.flush()?;
        drop(w);
        fs::rename(&partial, &target)?;
        self.written.push(target);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, schema: &str, value: &T) -> Result<()> {
        self.write(name, |w| io::write_json(w, schema, value))
    }

    pub fn into_written(self) -> Vec<PathBuf> {
        self.written
    }
}

pub fn simulate(cfg: &SimulateConfig, out: &mut OutDir) -> Result<()> {
    let seed = require_seed(cfg.seed)?;
    if cfg.record_every == 0 {
        return Err(invalid("record_every must be at least 1"));
    }
    let vol = cfg.volatility.build()?;
    let partition = BinPartition::equidistant(cfg.bins, cfg.stop_level)?;
    let euler = EulerConfig::new(cfg.dt, cfg.stop_level).with_max_steps(cfg.max_steps);
    let mut rng = RngStream::new(seed, 0);
    let mut record = None;
    out.write("path.csv", |w| {
        let mut pw = io::PathWriter::new(w)?;
        let mut last = (0u64, 0.0);
        let mut last_written = false;
        record = Some(euler_with_record(
            vol.as_dyn(),
            &cfg.params,
            cfg.n,
            &partition,
            &euler,
            &mut rng,
            |i, x| {
                last = (i, x);
                last_written = i % cfg.record_every == 0;
                if last_written {
                    pw.write(i as f64 * cfg.dt, x)?;
                }
                Ok(())
            },
        )?);
        if !last_written {
            pw.write(last.0 as f64 * cfg.dt, last.1)?;
        }
        pw.finish()
    })?;
    let record = record.expect("record set by the simulation");
    out.write("hitting_record.csv", |w| io::write_record(w, &record))
}

/// First observation at or above each level of `partition`.
fn record_from_observations(obs: &DiscreteObservations, partition: &BinPartition) -> Result<HittingRecord> {
    let mut hits = Vec::with_capacity(partition.len());
    let mut i = 0;
    for (j, &b) in partition.boundaries()[1..].iter().enumerate() {
        while i < obs.len() && obs.values()[i] < b {
            i += 1;
        }
        if i == obs.len() {
            return Err(Error::LevelNotReached { k: j + 1, level: b });
        }
        hits.push(Hit {
            k: j + 1,
            tau: obs.times()[i],
            x_at_tau: obs.values()[i],
            overshoot: obs.values()[i] - b,
        });
    }
    HittingRecord::new(hits)
}

#[derive(Serialize)]
struct PosteriorArtifact<'a> {
    n: u64,
    params: GammaParams,
    prior: &'a PriorSpec,
    posterior: &'a IGPosterior,
    moments: Vec<Moments>,
    /// One-based bins without data, where the posterior equals the prior.
    empty_bins: Vec<usize>,
}

fn write_posterior(out: &mut OutDir, n: u64, p: GammaParams, prior: &PriorSpec, post: &IGPosterior, stats: &SufficientStats) -> Result<()> {
    let artifact = PosteriorArtifact {
        n,
        params: p,
        prior,
        posterior: post,
        moments: posterior_moments(post),
        empty_bins: stats.empty_bins(),
    };
    out.json("posterior.json", "gammavol.posterior/1", &artifact)
}

pub fn fit(cfg: &FitConfig, out: &mut OutDir) -> Result<()> {
    check_level(cfg.level)?;
    let input = require_input(&cfg.input)?;
    let text = fs::read_to_string(input)?;
    let header = io::peek_header(&text);
    let record = if header == RECORD_HEADER {
        io::read_record(text.as_bytes())?
    } else if header == PATH_HEADER {
        let obs = io::read_observations(text.as_bytes())?;
        let partition = BinPartition::equidistant(cfg.k.unwrap_or(10), cfg.upper)?;
        record_from_observations(&obs, &partition)?
    } else {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "unrecognised header '{}': expected '{}' or '{}'",
                header.join(","),
                RECORD_HEADER.join(","),
                PATH_HEADER.join(",")
            ),
        });
    };
    let stats = if record.is_empty() {
        let k = cfg.k.ok_or_else(|| invalid("the record is empty: set k to fit the prior alone"))?;
        SufficientStats::empty(k, cfg.n, cfg.params)?
    } else {
        if let Some(k) = cfg.k {
            if k != record.len() {
                return Err(invalid(format!("k = {k} but the record has {} levels", record.len())));
            }
        }
        sufficient_stats(&record, cfg.n, &cfg.params)?
    };
    let prior = PriorSpec::uniform(stats.d_tau.len(), cfg.prior_alpha, cfg.prior_beta)?;
    let post = posterior(&stats, &prior)?;
    let bands = credible_band(&post, cfg.level)?;
    write_posterior(out, cfg.n, cfg.params, &prior, &post, &stats)?;
    out.write("bands.csv", |w| io::write_bands(w, &bands))
}

/// Equal-tailed bands from pooled draws.
fn draw_bands(chains: &[ChainOutput], level: f64) -> Vec<Band> {
    let k = chains[0].xi.len();
    let tail = (1.0 - level) / 2.0;
    (0..k)
        .map(|j| {
            let draws: Vec<f64> = chains.iter().flat_map(|c| c.xi[j].iter().copied()).collect();
            Band {
                bin: j + 1,
                lo: quantile(&draws, tail),
                median: quantile(&draws, 0.5),
                hi: quantile(&draws, 1.0 - tail),
                mean: Some(mean(&draws)),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct ChainReport<'a> {
    kept: usize,
    acceptance: &'a [Option<f64>],
    rao_blackwell_mean: &'a [Option<f64>],
    summaries: &'a [gammavol::mcmc::TraceSummary],
}

#[derive(Serialize)]
struct ChainSummary<'a> {
    level: f64,
    chains: Vec<ChainReport<'a>>,
    /// Present when more than one chain was run.
    potential_scale_reduction: Option<Vec<f64>>,
}

fn write_chains(out: &mut OutDir, chains: &[ChainOutput], level: f64) -> Result<()> {
    if chains.len() == 1 {
        out.write("chain.csv", |w| io::write_chain(w, &chains[0]))?;
    } else {
        for (c, chain) in chains.iter().enumerate() {
            out.write(&format!("chain_{c}.csv"), |w| io::write_chain(w, chain))?;
        }
    }
    let summary = ChainSummary {
        level,
        chains: chains
            .iter()
            .map(|c| ChainReport {
                kept: c.kept(),
                acceptance: &c.acceptance,
                rao_blackwell_mean: &c.rao_blackwell_mean,
                summaries: &c.summaries,
            })
            .collect(),
        potential_scale_reduction: (chains.len() > 1).then(|| potential_scale_reduction(chains)),
    };
    out.json("summary.json", "gammavol.chain-summary/1", &summary)?;
    let bands = draw_bands(chains, level);
    out.write("bands.csv", |w| io::write_bands(w, &bands))
}

pub fn fit_discrete(cfg: &FitDiscreteConfig, out: &mut OutDir) -> Result<()> {
    let seed = require_seed(cfg.seed)?;
    check_level(cfg.level)?;
    cfg.chain.validate()?;
    if cfg.chains == 0 {
        return Err(invalid("need at least one chain"));
    }
    let obs = io::read_observations(File::open(require_input(&cfg.input)?)?)?;
    let upper = cfg.upper.unwrap_or(obs.end_value());
    let partition = BinPartition::equidistant(cfg.k, upper)?;
    let prior = PriorSpec::uniform(cfg.k, cfg.prior_alpha, cfg.prior_beta)?;
    let chains = run_chains(
        &obs,
        &partition,
        &prior,
        &cfg.params,
        cfg.n,
        &cfg.chain,
        cfg.chains,
        &RngStream::new(seed, 0),
    )?;
    write_chains(out, &chains, cfg.level)
}

#[derive(Serialize)]
struct CalibrationArtifact {
    #[serde(flatten)]
    calibration: RqvCalibration,
    k: usize,
    flagged_bins: Vec<usize>,
}

pub fn rqv(cfg: &RqvConfig, out: &mut OutDir) -> Result<()> {
    check_level(cfg.level)?;
    let seed = if cfg.mcmc {
        cfg.chain.validate()?;
        Some(require_seed(cfg.seed)?)
    } else {
        None
    };
    let series = io::read_series(File::open(require_input(&cfg.input)?)?)?;
    let prior = PriorSpec::uniform(cfg.k, cfg.prior_alpha, cfg.prior_beta)?;
    if let Some(seed) = seed {
        let fit = fit_rqv_mcmc(&series, cfg.k, &prior, &cfg.chain, &mut RngStream::new(seed, 0))?;
        let artifact = CalibrationArtifact { calibration: fit.calibration, k: cfg.k, flagged_bins: Vec::new() };
        out.json("calibration.json", "gammavol.rqv-calibration/1", &artifact)?;
        return write_chains(out, std::slice::from_ref(&fit.chain), cfg.level);
    }
    let fit = fit_rqv(&series, cfg.k, &prior, cfg.level)?;
    let artifact = CalibrationArtifact {
        calibration: fit.calibration,
        k: cfg.k,
        flagged_bins: fit.flagged_bins.clone(),
    };
    out.json("calibration.json", "gammavol.rqv-calibration/1", &artifact)?;
    write_posterior(out, 1, fit.calibration.params()?, &prior, &fit.posterior, &fit.stats)?;
    out.write("bands.csv", |w| io::write_bands(w, &fit.bands))
}

#[derive(Serialize)]
struct Report<'a, C, R> {
    seed: u64,
    config: &'a C,
    #[serde(flatten)]
    report: R,
}

pub fn experiment_contraction(cfg: &ContractionCommand, out: &mut OutDir) -> Result<()> {
    let seed = require_seed(cfg.seed)?;
    cfg.experiment.validate()?;
    let report = run_contraction(&cfg.experiment, &RngStream::new(seed, 0))?;
    out.write("contraction.csv", |w| io::write_contraction(w, &report.rows))?;
    let r = Report { seed, config: &cfg.experiment, report: &report };
    out.json("contraction.json", "gammavol.contraction/1", &r)
}

pub fn experiment_coverage(cfg: &CoverageCommand, out: &mut OutDir) -> Result<()> {
    let seed = require_seed(cfg.seed)?;
    cfg.experiment.validate()?;
    let report = run_coverage(&cfg.experiment, &RngStream::new(seed, 0))?;
    out.write("coverage.csv", |w| io::write_coverage(w, &report))?;
    let r = Report { seed, config: &cfg.experiment, report: &report };
    out.json("coverage.json", "gammavol.coverage/1", &r)
}

pub fn verify(cfg: &VerifyConfig, out: &mut OutDir) -> Result<()> {
    let seed = require_seed(cfg.seed)?;
    let rng = RngStream::new(seed, 0);
    let o = &cfg.overshoot;
    let v = PiecewiseVolatility::from_midpoints(
        BinPartition::equidistant(o.k, o.upper)?,
        &make_test_volatility("sine", o.scale)?,
    )?;
    let h = &cfg.hitting;
    let hitting = verify_hitting_concentration(h.sigma, h.delta_b, &cfg.params, h.n, h.replicates, h.dt, &rng.child(0))?;
    let overshoot = verify_overshoot_bound(&v, &cfg.params, o.n, o.delta, o.replicates, o.dt, &rng.child(1))?;

    #[derive(Serialize)]
    struct VerifyReport<'a, H, O> {
        seed: u64,
        config: &'a VerifyConfig,
        hitting: H,
        overshoot: O,
        overshoot_consistent: bool,
    }
    let consistent = overshoot.all_consistent();
    let r = VerifyReport { seed, config: cfg, hitting, overshoot, overshoot_consistent: consistent };
    out.json("verify.json", "gammavol.verify/1", &r)
}
