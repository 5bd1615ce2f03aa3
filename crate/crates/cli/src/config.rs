//! JSON configuration per subcommand: built-in defaults, then the config
//! file, then `--set key=value` overrides, then dedicated flags.

use std::path::{Path, PathBuf};

use gammavol::experiment::{BinRule, ContractionConfig, CoverageConfig, TruthSpec};
use gammavol::mcmc::ChainConfig;
use gammavol::volatility::{make_test_volatility, TestVolatility, TestVolatilityKind};
use gammavol::{BinPartition, Error, GammaParams, PiecewiseVolatility, Result, Volatility};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

/// Overlays `top` onto `base`. Objects merge key by key, except that objects
/// whose `"type"` tags differ are replaced whole. Keys unknown to `base` are
/// rejected at the top level.
fn merge(base: &mut Value, top: Value, path: &str) -> Result<()> {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            let retag = matches!((b.get("type"), t.get("type")), (Some(x), Some(y)) if x != y);
            if retag {
                *b = t;
                return Ok(());
            }
            for (k, v) in t {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &key)?,
                    None if path.is_empty() => return Err(invalid(format!("unknown config key '{key}'"))),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
            Ok(())
        }
        (b, t) => {
            *b = t;
            Ok(())
        }
    }
}

/// Parses `a.b.c=value`; the value is read as JSON, falling back to a string.
fn set_to_value(assignment: &str) -> Result<Value> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| invalid(format!("override '{assignment}' is not of the form key=value")))?;
    let mut v = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    for part in key.trim().rsplit('.') {
        if part.is_empty() {
            return Err(invalid(format!("override '{assignment}' has an empty key")));
        }
        let mut m = Map::new();
        m.insert(part.to_owned(), v);
        v = Value::Object(m);
    }
    Ok(v)
}

pub fn load<T>(file: Option<&Path>, sets: &[String]) -> Result<T>
where
    T: Default + Serialize + DeserializeOwned,
{
    let mut value = serde_json::to_value(T::default())?;
    if let Some(path) = file {
        let text = std::fs::read_to_string(path)?;
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| Error::Parse { line: e.line() as u64, message: format!("{}: {e}", path.display()) })?;
        if !doc.is_object() {
            return Err(invalid(format!("{} must hold a JSON object", path.display())));
        }
        merge(&mut value, doc, "")?;
    }
    for s in sets {
        merge(&mut value, set_to_value(s)?, "")?;
    }
    serde_json::from_value(value).map_err(|e| invalid(format!("bad configuration: {e}")))
}

/// True volatility used for simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VolatilitySpec {
    Function { kind: TestVolatilityKind, scale: f64 },
    Piecewise { boundaries: Vec<f64>, values: Vec<f64> },
}

pub enum BuiltVolatility {
    Function(TestVolatility),
    Piecewise(PiecewiseVolatility),
}

impl BuiltVolatility {
    pub fn as_dyn(&self) -> &dyn Volatility {
        match self {
            BuiltVolatility::Function(f) => f,
            BuiltVolatility::Piecewise(p) => p,
        }
    }
}

impl VolatilitySpec {
    pub fn build(&self) -> Result<BuiltVolatility> {
        Ok(match self {
            VolatilitySpec::Function { kind, scale } => {
                let name = match kind {
                    TestVolatilityKind::Sine => "sine",
                    TestVolatilityKind::Constant => "constant",
                };
                BuiltVolatility::Function(make_test_volatility(name, *scale)?)
            }
            VolatilitySpec::Piecewise { boundaries, values } => BuiltVolatility::Piecewise(PiecewiseVolatility::new(
                BinPartition::new(boundaries.clone())?,
                values.clone(),
            )?),
        })
    }
}

fn default_params() -> GammaParams {
    GammaParams::new(1.0, 1.0).expect("unit parameters are valid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: Option<u64>,
    pub n: u64,
    pub params: GammaParams,
    pub volatility: VolatilitySpec,
    pub dt: f64,
    pub stop_level: f64,
    /// Equidistant levels over `[0, stop_level]` for the hitting record.
    pub bins: usize,
    pub max_steps: u64,
    /// Keep every this many grid points in the path CSV; the last is always kept.
    pub record_every: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            seed: None,
            n: 200,
            params: default_params(),
            volatility: VolatilitySpec::Function {
                kind: TestVolatilityKind::Sine,
                scale: 1.0 / 500.0,
            },
            dt: 1e-4,
            stop_level: 1.0,
            bins: 10,
            max_steps: 2_000_000_000,
            record_every: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub input: Option<PathBuf>,
    pub n: u64,
    pub params: GammaParams,
    /// Number of bins; taken from the record when absent.
    pub k: Option<usize>,
    /// Top level `b_K` when the input is a path.
    pub upper: f64,
    pub prior_alpha: f64,
    pub prior_beta: f64,
    pub level: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            input: None,
            n: 500,
            params: default_params(),
            k: None,
            upper: 1.0,
            prior_alpha: 0.1,
            prior_beta: 0.1,
            level: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitDiscreteConfig {
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub n: u64,
    pub params: GammaParams,
    pub k: usize,
    /// Top level `b_K`; the last observed value when absent.
    pub upper: Option<f64>,
    pub prior_alpha: f64,
    pub prior_beta: f64,
    pub level: f64,
    pub chains: usize,
    pub chain: ChainConfig,
}

impl Default for FitDiscreteConfig {
    fn default() -> Self {
        Self {
            seed: None,
            input: None,
            n: 1,
            params: default_params(),
            k: 10,
            upper: None,
            prior_alpha: 0.1,
            prior_beta: 0.1,
            level: 0.9,
            chains: 1,
            chain: ChainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RqvConfig {
    pub seed: Option<u64>,
    pub input: Option<PathBuf>,
    pub k: usize,
    pub prior_alpha: f64,
    pub prior_beta: f64,
    pub level: f64,
    /// Fit with the data-augmentation sampler instead of snapped hitting times.
    pub mcmc: bool,
    pub chain: ChainConfig,
}

impl Default for RqvConfig {
    fn default() -> Self {
        Self {
            seed: None,
            input: None,
            k: 20,
            prior_alpha: 0.1,
            prior_beta: 0.1,
            level: 0.9,
            mcmc: false,
            chain: ChainConfig {
                allow_shared_brackets: true,
                ..ChainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCommand {
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub experiment: ContractionConfig,
}

impl Default for ContractionCommand {
    fn default() -> Self {
        let sine = make_test_volatility("sine", 1.0).expect("valid test function");
        Self {
            seed: None,
            experiment: ContractionConfig {
                n_values: vec![125, 500, 2000],
                replicates: 200,
                params: default_params(),
                truth: TruthSpec::Binned { function: sine, k: 10 },
                bins: BinRule::Fixed { k: 10 },
                upper: 1.0,
                prior_alpha: 2.0,
                prior_beta: 1.5,
                dt_fraction: 1e-3,
                eval_points: 1000,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCommand {
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub experiment: CoverageConfig,
}

impl Default for CoverageCommand {
    fn default() -> Self {
        Self {
            seed: None,
            experiment: CoverageConfig {
                n: 500,
                k: 10,
                replicates: 500,
                level: 0.9,
                params: default_params(),
                truth: make_test_volatility("constant", 1.0).expect("valid test function"),
                upper: 1.0,
                prior_alpha: 0.1,
                prior_beta: 0.1,
                dt_fraction: 1e-3,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HittingCheck {
    pub n: u64,
    pub sigma: f64,
    pub delta_b: f64,
    pub replicates: usize,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OvershootCheck {
    pub n: u64,
    /// The sine function at the midpoints of `k` equidistant bins over `[0, upper]`.
    pub k: usize,
    pub upper: f64,
    pub scale: f64,
    pub delta: f64,
    pub replicates: usize,
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: Option<u64>,
    pub params: GammaParams,
    pub hitting: HittingCheck,
    pub overshoot: OvershootCheck,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: None,
            params: default_params(),
            hitting: HittingCheck {
                n: 500,
                sigma: 1.5,
                delta_b: 0.1,
                replicates: 500,
                dt: None,
            },
            overshoot: OvershootCheck {
                n: 500,
                k: 10,
                upper: 1.0,
                scale: 1.0,
                delta: 0.01,
                replicates: 500,
                dt: None,
            },
        }
    }
}
