//! CSV and JSON formats for paths, hitting records, bands, series and chains.

use std::io::{Read, Write};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{ContractionRow, CoverageReport};
use crate::inference::Band;
use crate::mcmc::{ChainOutput, DiscreteObservations};
use crate::rqv::TimeSeries;
use crate::simulate::{Hit, HittingRecord};

pub const PATH_HEADER: [&str; 2] = ["t", "x"];
pub const RECORD_HEADER: [&str; 4] = ["k", "tau", "x_at_tau", "overshoot"];
pub const BAND_HEADER: [&str; 5] = ["bin", "lo", "median", "hi", "mean"];
pub const SERIES_HEADER: [&str; 2] = ["t", "y"];
pub const CHAIN_HEADER: [&str; 3] = ["iter", "bin", "xi"];
pub const CONTRACTION_HEADER: [&str; 6] = ["n", "k", "dt", "mean_sup_error", "rmse", "mean_posterior_sd"];
pub const COVERAGE_HEADER: [&str; 2] = ["bin", "coverage"];

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        csv::ErrorKind::Deserialize { err, .. } => Error::Parse {
            line,
            message: err.to_string(),
        },
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().has_headers(false).from_writer(out)
}

/// Reads rows of `T` after checking that the header is exactly `header`.
fn read_rows<R: Read, T: DeserializeOwned>(input: R, header: &[&str]) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let found: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header '{}', found '{}'", header.join(","), found.join(",")),
        });
    }
    rdr.deserialize().map(|r| r.map_err(csv_error)).collect()
}

/// Header row of a CSV document, for dispatching on its format.
pub fn peek_header(text: &str) -> Vec<String> {
    text.lines()
        .next()
        .map(|l| l.split(',').map(|s| s.trim().to_owned()).collect())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct PointRow {
    t: f64,
    x: f64,
}

/// Reads a `t,x` table.
pub fn read_points<R: Read>(input: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let rows: Vec<PointRow> = read_rows(input, &PATH_HEADER)?;
    Ok(rows.iter().map(|r| (r.t, r.x)).unzip())
}

pub fn read_observations<R: Read>(input: R) -> Result<DiscreteObservations> {
    let (t, x) = read_points(input)?;
    DiscreteObservations::new(t, x)
}

/// Streams `t,x` rows.
pub struct PathWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> PathWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = writer(out);
        inner.write_record(PATH_HEADER).map_err(csv_error)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, t: f64, x: f64) -> Result<()> {
        self.inner.serialize(PointRow { t, x }).map_err(csv_error)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

pub fn write_record<W: Write>(out: W, rec: &HittingRecord) -> Result<()> {
    let mut w = writer(out);
    w.write_record(RECORD_HEADER).map_err(csv_error)?;
    for h in &rec.hits {
        w.serialize(h).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct HitRow {
    k: usize,
    tau: f64,
    x_at_tau: f64,
    overshoot: f64,
}

pub fn read_record<R: Read>(input: R) -> Result<HittingRecord> {
    let rows: Vec<HitRow> = read_rows(input, &RECORD_HEADER)?;
    HittingRecord::new(
        rows.into_iter()
            .map(|r| Hit {
                k: r.k,
                tau: r.tau,
                x_at_tau: r.x_at_tau,
                overshoot: r.overshoot,
            })
            .collect(),
    )
}

/// Writes bands; an absent mean is left empty.
pub fn write_bands<W: Write>(out: W, bands: &[Band]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(BAND_HEADER).map_err(csv_error)?;
    for b in bands {
        w.serialize(b).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct SeriesRow {
    t: f64,
    y: Option<f64>,
}

/// Relative tolerance on the spacing of an equidistant series.
const SPACING_TOLERANCE: f64 = 1e-9;

/// Reads an equidistant `t,y` series. Missing values are rejected.
pub fn read_series<R: Read>(input: R) -> Result<TimeSeries> {
    let rows: Vec<SeriesRow> = read_rows(input, &SERIES_HEADER)?;
    if rows.len() < 2 {
        return Err(Error::invalid("a series needs at least two rows"));
    }
    let dt = rows[1].t - rows[0].t;
    if !(dt > 0.0) {
        return Err(Error::Parse {
            line: 3,
            message: "times must be strictly increasing".into(),
        });
    }
    let mut y = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        // data rows start on line 2
        let line = i as u64 + 2;
        let expected = rows[0].t + i as f64 * dt;
        if (r.t - expected).abs() > SPACING_TOLERANCE * dt.max(expected.abs()) {
            return Err(Error::Parse {
                line,
                message: format!("series is not equidistant: t = {} where {expected} was expected", r.t),
            });
        }
        match r.y {
            Some(v) if v.is_finite() => y.push(v),
            _ => {
                return Err(Error::Parse {
                    line,
                    message: "missing value".into(),
                })
            }
        }
    }
    TimeSeries::new(dt, y)
}

pub fn write_series<W: Write>(out: W, series: &TimeSeries, t0: f64) -> Result<()> {
    let mut w = writer(out);
    w.write_record(SERIES_HEADER).map_err(csv_error)?;
    for (i, y) in series.values().iter().enumerate() {
        w.serialize((t0 + i as f64 * series.dt(), y)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes kept ξ draws as `iter,bin,xi` rows, `iter` counting kept draws.
pub fn write_chain<W: Write>(out: W, chain: &ChainOutput) -> Result<()> {
    let mut w = writer(out);
    w.write_record(CHAIN_HEADER).map_err(csv_error)?;
    for s in 0..chain.kept() {
        for (k, xs) in chain.xi.iter().enumerate() {
            w.serialize((s, k + 1, xs[s])).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_contraction<W: Write>(out: W, rows: &[ContractionRow]) -> Result<()> {
    let mut w = writer(out);
    w.write_record(CONTRACTION_HEADER).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_coverage<W: Write>(out: W, report: &CoverageReport) -> Result<()> {
    let mut w = writer(out);
    w.write_record(COVERAGE_HEADER).map_err(csv_error)?;
    for (k, c) in report.per_bin.iter().enumerate() {
        w.serialize((k + 1, c)).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes `value` as a JSON object carrying a `"schema"` field.
pub fn to_json_with_schema<T: Serialize>(schema: &str, value: &T) -> Result<serde_json::Value> {
    let v = serde_json::to_value(value)?;
    let mut obj = match v {
        serde_json::Value::Object(map) => map,
        other => {
            let mut map = serde_json::Map::new();
            map.insert("data".into(), other);
            map
        }
    };
    obj.insert("schema".into(), serde_json::Value::String(schema.into()));
    Ok(serde_json::Value::Object(obj))
}

pub fn write_json<W: Write, T: Serialize>(mut out: W, schema: &str, value: &T) -> Result<()> {
    let v = to_json_with_schema(schema, value)?;
    serde_json::to_writer_pretty(&mut out, &v)?;
    out.write_all(b"\n")?;
    Ok(())
}
