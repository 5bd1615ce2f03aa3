//! Piecewise-constant volatility model, bin partitions, and the test
//! volatility functions used in simulation studies.
//!
//! Bins follow the half-open convention `B_1 = [0, b_1]`, `B_k = (b_{k−1}, b_k]`
//! and `B_K = (b_{K−1}, b_K)`: a boundary `b_k` with `k < K` belongs to the bin
//! on its left, and the top boundary `b_K` itself lies outside the domain.

use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A state-dependent volatility `σ(x)`.
pub trait Volatility: Sync {
    fn sigma(&self, x: f64) -> Result<f64>;

    /// Supremum of the domain (exclusive).
    fn domain_end(&self) -> f64 {
        f64::INFINITY
    }
}

impl<V: Volatility + ?Sized> Volatility for &V {
    fn sigma(&self, x: f64) -> Result<f64> {
        (**self).sigma(x)
    }

    fn domain_end(&self) -> f64 {
        (**self).domain_end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BinPartition {
    boundaries: Vec<f64>,
}

impl TryFrom<Vec<f64>> for BinPartition {
    type Error = Error;

    fn try_from(b: Vec<f64>) -> Result<Self> {
        BinPartition::new(b)
    }
}

impl From<BinPartition> for Vec<f64> {
    fn from(p: BinPartition) -> Self {
        p.boundaries
    }
}

impl BinPartition {
    /// Builds a partition from boundaries `b_0 = 0 < b_1 < … < b_K`.
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 {
            return Err(Error::domain("a partition needs at least one bin"));
        }
        if boundaries[0] != 0.0 {
            return Err(Error::domain(format!("first boundary must be 0, got {}", boundaries[0])));
        }
        if boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::domain("boundaries must be finite"));
        }
        if boundaries.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("boundaries must be strictly increasing"));
        }
        Ok(Self { boundaries })
    }

    /// `K` bins of width `b_K / K` on `[0, b_K)`.
    pub fn equidistant(k: usize, upper: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("number of bins must be at least 1"));
        }
        if !(upper > 0.0 && upper.is_finite()) {
            return Err(Error::domain(format!("upper boundary must be positive, got {upper}")));
        }
        let mut b: Vec<f64> = (0..=k).map(|i| i as f64 * upper / k as f64).collect();
        b[k] = upper;
        Self::new(b)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Number of bins `K`.
    pub fn len(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Top boundary `b_K`.
    pub fn upper(&self) -> f64 {
        self.boundaries[self.len()]
    }

    /// Level `b_k` for `k` in `0..=K`.
    pub fn level(&self, k: usize) -> f64 {
        self.boundaries[k]
    }

    /// Width `Δb_k = b_k − b_{k−1}` for `k` in `1..=K`.
    pub fn width(&self, k: usize) -> f64 {
        self.boundaries[k] - self.boundaries[k - 1]
    }

    pub fn widths(&self) -> Vec<f64> {
        self.boundaries.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        self.boundaries.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// One-based index `k` of the bin containing `x ∈ [0, b_K)`.
    ///
    /// For equidistant partitions this is `max(1, ⌈K x / b_K⌉)`, evaluated
    /// against the stored boundaries so ties resolve the same way as hitting
    /// times do.
    pub fn bin_index(&self, x: f64) -> Result<usize> {
        if !(x >= 0.0 && x < self.upper()) {
            return Err(Error::domain(format!("x = {x} lies outside [0, {})", self.upper())));
        }
        // number of interior/top boundaries strictly below x
        let below = self.boundaries[1..].partition_point(|&b| b < x);
        Ok(below + 1)
    }
}

/// Convenience wrapper matching the free-function form of the partition API.
pub fn equidistant_partition(k: usize, upper: f64) -> Result<BinPartition> {
    BinPartition::equidistant(k, upper)
}

/// Bin count giving widths `∝ n^{−1/(2λ+1)}`: `K = max(1, round(c · n^{1/(2λ+1)}))`.
pub fn bins_for_rate(n: u64, lambda: f64, upper: f64, c: f64) -> Result<usize> {
    if n == 0 {
        return Err(Error::domain("n must be at least 1"));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::domain(format!("Hölder exponent must lie in (0, 1], got {lambda}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::domain(format!("bin-count constant must be positive, got {c}")));
    }
    if !(upper > 0.0) {
        return Err(Error::domain(format!("upper boundary must be positive, got {upper}")));
    }
    let k = (c * (n as f64).powf(1.0 / (2.0 * lambda + 1.0))).round();
    Ok((k as usize).max(1))
}

/// `σ(x) = Σ_k ξ_k 1_{B_k}(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPiecewise")]
pub struct PiecewiseVolatility {
    boundaries: BinPartition,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPiecewise {
    boundaries: BinPartition,
    values: Vec<f64>,
}

impl TryFrom<RawPiecewise> for PiecewiseVolatility {
    type Error = Error;

    fn try_from(raw: RawPiecewise) -> Result<Self> {
        PiecewiseVolatility::new(raw.boundaries, raw.values)
    }
}

impl PiecewiseVolatility {
    pub fn new(partition: BinPartition, values: Vec<f64>) -> Result<Self> {
        if values.len() != partition.len() {
            return Err(Error::invalid(format!(
                "{} values given for {} bins",
                values.len(),
                partition.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::domain(format!("volatility values must be positive, got {v}")));
        }
        Ok(Self {
            boundaries: partition,
            values,
        })
    }

    /// Discretizes `f` at the bin midpoints.
    pub fn from_midpoints<V: Volatility + ?Sized>(partition: BinPartition, f: &V) -> Result<Self> {
        let values = partition
            .midpoints()
            .into_iter()
            .map(|m| f.sigma(m))
            .collect::<Result<Vec<_>>>()?;
        Self::new(partition, values)
    }

    pub fn partition(&self) -> &BinPartition {
        &self.boundaries
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `ξ_{k(x)}`.
    pub fn evaluate(&self, x: f64) -> Result<f64> {
        let k = self.boundaries.bin_index(x)?;
        Ok(self.values[k - 1])
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl Volatility for PiecewiseVolatility {
    fn sigma(&self, x: f64) -> Result<f64> {
        self.evaluate(x)
    }

    fn domain_end(&self) -> f64 {
        self.boundaries.upper()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestVolatilityKind {
    /// `x ↦ 3/2 + sin(2πx)`
    Sine,
    /// `x ↦ 1`
    Constant,
}

impl FromStr for TestVolatilityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sine" => Ok(Self::Sine),
            "constant" => Ok(Self::Constant),
            other => Err(Error::invalid(format!(
                "unknown test volatility '{other}' (expected 'sine' or 'constant')"
            ))),
        }
    }
}

/// A named true volatility function multiplied by `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestVolatility {
    pub kind: TestVolatilityKind,
    pub scale: f64,
}

impl TestVolatility {
    /// Lipschitz constant of the scaled function.
    pub fn lipschitz(&self) -> f64 {
        match self.kind {
            TestVolatilityKind::Sine => 2.0 * PI * self.scale,
            TestVolatilityKind::Constant => 0.0,
        }
    }

    /// Supremum over `[0, ∞)`.
    pub fn sup(&self) -> f64 {
        match self.kind {
            TestVolatilityKind::Sine => 2.5 * self.scale,
            TestVolatilityKind::Constant => self.scale,
        }
    }
}

impl Volatility for TestVolatility {
    fn sigma(&self, x: f64) -> Result<f64> {
        let base = match self.kind {
            TestVolatilityKind::Sine => 1.5 + (2.0 * PI * x).sin(),
            TestVolatilityKind::Constant => 1.0,
        };
        Ok(self.scale * base)
    }
}

pub fn make_test_volatility(name: &str, scale: f64) -> Result<TestVolatility> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::domain(format!("scale must be positive, got {scale}")));
    }
    Ok(TestVolatility {
        kind: name.parse()?,
        scale,
    })
}
