//! Synthetic two-timescale harmonic series, CSV ingestion, and windowing of
//! series into train/validation/test forecast tasks.

use crate::rng::{derive_rng, stream_tag};
use crate::series::{forward_fill, ForecastTask, SeriesError, TimeSeries, TimeStamp};
use log::warn;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("series length must be at least 2, got {0}")]
    InvalidLength(usize),
    #[error("csv line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("csv is missing required column(s): {}", .0.join(", "))]
    Schema(Vec<String>),
    #[error("series `{id}` has length {len}, shorter than window {window}")]
    SeriesTooShort { id: String, len: usize, window: usize },
    #[error("need {needed} eligible series but only {available} are long enough")]
    NotEnoughSeries { needed: usize, available: usize },
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Parameters of
/// `s_t = (a1 + b1 t) sin(2 pi t / t1 + phi1) + (a2 + b2 t) sin(2 pi t / t2 + phi2)`
/// evaluated for `t = 1..=len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicParams {
    pub a1: f64,
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
    pub t1: f64,
    pub t2: f64,
    pub phi1: f64,
    pub phi2: f64,
    pub len: usize,
}

impl HarmonicParams {
    pub fn value_at(&self, t: f64) -> f64 {
        (self.a1 + self.b1 * t) * (2.0 * PI * t / self.t1 + self.phi1).sin()
            + (self.a2 + self.b2 * t) * (2.0 * PI * t / self.t2 + self.phi2).sin()
    }
}

/// Draws one parameter set. Amplitudes ~ N(1, 0.5), slopes ~ U(-1/T, 1/T),
/// the short period ~ N(T/5, T/10), the long period ~ N(T, T/2) and both
/// phases ~ U(0, 2 pi). Non-positive periods are redrawn.
pub fn sample_harmonic_params<R: Rng + ?Sized>(
    rng: &mut R,
    len: usize,
) -> Result<HarmonicParams, DatagenError> {
    if len < 2 {
        return Err(DatagenError::InvalidLength(len));
    }
    let t = len as f64;
    let amp = Normal::new(1.0, 0.5).expect("valid normal");
    let slope = Uniform::new(-1.0 / t, 1.0 / t).expect("valid uniform");
    let short = Normal::new(t / 5.0, t / 10.0).expect("valid normal");
    let long = Normal::new(t, t / 2.0).expect("valid normal");
    let phase = Uniform::new(0.0, 2.0 * PI).expect("valid uniform");

    let positive = |rng: &mut R, d: &Normal<f64>| loop {
        let v = d.sample(rng);
        if v > 0.0 {
            break v;
        }
    };

    let a1 = amp.sample(rng);
    let a2 = amp.sample(rng);
    let b1 = slope.sample(rng);
    let b2 = slope.sample(rng);
    let t1 = positive(rng, &short);
    let t2 = positive(rng, &long);
    let phi1 = phase.sample(rng);
    let phi2 = phase.sample(rng);
    Ok(HarmonicParams {
        a1,
        a2,
        b1,
        b2,
        t1,
        t2,
        phi1,
        phi2,
        len,
    })
}

pub fn synth_series(params: &HarmonicParams) -> TimeSeries {
    let values = (1..=params.len).map(|t| params.value_at(t as f64)).collect();
    TimeSeries::new("harmonic", values).expect("length checked at sampling")
}

/// `count` harmonic series of length `len`, series `i` drawn from its own
/// stream of `seed` and named `syn-{i:06}`.
pub fn generate_synthetic(
    count: usize,
    len: usize,
    seed: u64,
) -> Result<Vec<TimeSeries>, DatagenError> {
    (0..count)
        .map(|i| {
            let mut rng = derive_rng(seed, stream_tag("harmonic").wrapping_add(i as u64));
            let params = sample_harmonic_params(&mut rng, len)?;
            let mut s = synth_series(&params);
            s.set_id(format!("syn-{i:06}"));
            Ok(s)
        })
        .collect()
}

/// Column names of the long-format series CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub series_id: String,
    pub timestamp: String,
    pub value: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            series_id: "series_id".into(),
            timestamp: "timestamp".into(),
            value: "value".into(),
        }
    }
}

pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<Vec<TimeSeries>, DatagenError> {
    let mut file = File::open(path).map_err(|source| DatagenError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut text = String::new();
    file.read_to_string(&mut text)
        .map_err(|source| DatagenError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    parse_csv(text.as_bytes(), schema)
}

/// Parses long-format rows into one series per distinct id, in order of
/// first appearance, with rows sorted by timestamp. Empty value cells are
/// marked missing.
pub fn parse_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Vec<TimeSeries>, DatagenError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let cols = [&schema.series_id, &schema.timestamp, &schema.value];
    let missing: Vec<String> = cols
        .iter()
        .filter(|c| find(c).is_none())
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(DatagenError::Schema(missing));
    }
    let (id_col, ts_col, val_col) = (
        find(&schema.series_id).unwrap(),
        find(&schema.timestamp).unwrap(),
        find(&schema.value).unwrap(),
    );

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(TimeStamp, Option<f64>)>> = HashMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| {
            record.get(i).ok_or_else(|| DatagenError::Parse {
                line,
                message: format!("row has {} fields", record.len()),
            })
        };
        let id = field(id_col)?.to_string();
        let ts_raw = field(ts_col)?;
        if ts_raw.is_empty() {
            return Err(DatagenError::Parse {
                line,
                message: "empty timestamp".into(),
            });
        }
        let raw = field(val_col)?;
        let value = if raw.is_empty() {
            None
        } else {
            Some(raw.parse::<f64>().map_err(|e| DatagenError::Parse {
                line,
                message: format!("bad value `{raw}`: {e}"),
            })?)
        };
        if !rows.contains_key(&id) {
            order.push(id.clone());
        }
        rows.entry(id)
            .or_default()
            .push((TimeStamp::parse(ts_raw), value));
    }

    order
        .into_iter()
        .map(|id| {
            let mut r = rows.remove(&id).unwrap_or_default();
            r.sort_by(|a, b| a.0.cmp(&b.0));
            let timestamps = r.iter().map(|(t, _)| t.clone()).collect();
            let mask = r.iter().map(|(_, v)| v.is_none()).collect();
            let values = r.iter().map(|(_, v)| v.unwrap_or(f64::NAN)).collect();
            Ok(TimeSeries::with_missing(id, values, mask)?.with_timestamps(timestamps)?)
        })
        .collect()
}

/// Writes series in the same long format `ingest_csv` reads. Series without
/// timestamps use their integer index.
pub fn write_csv<W: Write>(writer: W, series: &[TimeSeries]) -> Result<(), DatagenError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["series_id", "timestamp", "value"])?;
    for s in series {
        for (i, (&v, &m)) in s.values().iter().zip(s.missing_mask()).enumerate() {
            let ts = match s.timestamps() {
                Some(ts) => ts[i].to_string(),
                None => i.to_string(),
            };
            let value = if m { String::new() } else { v.to_string() };
            w.write_record([s.id(), ts.as_str(), value.as_str()])?;
        }
    }
    w.flush().map_err(|source| DatagenError::Io {
        path: PathBuf::from("<csv writer>"),
        source,
    })?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

/// How series are cut into tasks.
///
/// Without a `boundary`, eligible series are assigned whole to splits in
/// order (`counts` are task totals, one window per series). With a
/// `boundary`, every series contributes `counts` windows per split: train and
/// validation windows end before the boundary and test windows start at or
/// after it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub input_len: usize,
    pub horizon: usize,
    pub counts: SplitCounts,
    pub seed: u64,
    pub boundary: Option<TimeStamp>,
}

impl DatasetSpec {
    pub fn window_len(&self) -> usize {
        self.input_len + self.horizon
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TaskSplits {
    pub train: Vec<ForecastTask>,
    pub val: Vec<ForecastTask>,
    pub test: Vec<ForecastTask>,
}

fn window_task(series: &TimeSeries, start: usize, spec: &DatasetSpec) -> ForecastTask {
    let v = &series.values()[start..start + spec.window_len()];
    let (context, target) = v.split_at(spec.input_len);
    ForecastTask::new(
        format!("{}@{}", series.id(), start),
        context.to_vec(),
        target.to_vec(),
    )
}

pub fn make_tasks(series: &[TimeSeries], spec: &DatasetSpec) -> Result<TaskSplits, DatagenError> {
    let window = spec.window_len();
    let mut eligible = Vec::new();
    for (index, s) in series.iter().enumerate() {
        if s.len() < window {
            let e = DatagenError::SeriesTooShort {
                id: s.id().to_string(),
                len: s.len(),
                window,
            };
            warn!("skipping: {e}");
            continue;
        }
        let filled = if s.has_missing() {
            match forward_fill(s) {
                Ok(f) => f,
                Err(e) => {
                    warn!("skipping: {e}");
                    continue;
                }
            }
        } else {
            s.clone()
        };
        eligible.push((index, filled));
    }

    let stream = |index: usize| stream_tag("windows").wrapping_add(index as u64);
    let mut out = TaskSplits::default();

    match &spec.boundary {
        None => {
            let needed = spec.counts.total();
            if eligible.len() < needed {
                return Err(DatagenError::NotEnoughSeries {
                    needed,
                    available: eligible.len(),
                });
            }
            for (k, (index, s)) in eligible.iter().take(needed).enumerate() {
                let mut rng = derive_rng(spec.seed, stream(*index));
                let start = rng.random_range(0..=s.len() - window);
                let task = window_task(s, start, spec);
                if k < spec.counts.train {
                    out.train.push(task);
                } else if k < spec.counts.train + spec.counts.val {
                    out.val.push(task);
                } else {
                    out.test.push(task);
                }
            }
        }
        Some(boundary) => {
            for (index, s) in &eligible {
                let mut rng = derive_rng(spec.seed, stream(*index));
                let before = match s.timestamps() {
                    Some(ts) => ts.iter().take_while(|t| *t < boundary).count(),
                    None => (0..s.len())
                        .take_while(|&i| TimeStamp::Index(i as i64) < *boundary)
                        .count(),
                };
                // train/val windows: start in [0, before - window]
                let fit_slots = (before + 1).saturating_sub(window);
                let fit_wanted = spec.counts.train + spec.counts.val;
                if fit_slots > 0 && fit_wanted > 0 {
                    let starts: Vec<usize> = if fit_slots >= fit_wanted {
                        sample(&mut rng, fit_slots, fit_wanted).into_vec()
                    } else {
                        (0..fit_wanted).map(|_| rng.random_range(0..fit_slots)).collect()
                    };
                    for (k, start) in starts.into_iter().enumerate() {
                        let task = window_task(s, start, spec);
                        if k < spec.counts.train {
                            out.train.push(task);
                        } else {
                            out.val.push(task);
                        }
                    }
                } else if fit_wanted > 0 {
                    warn!("series `{}` has no full window before the boundary", s.id());
                }
                // test windows: start in [before, len - window]
                if s.len() >= before + window {
                    let slots = s.len() - window - before + 1;
                    for _ in 0..spec.counts.test {
                        let start = before + rng.random_range(0..slots);
                        out.test.push(window_task(s, start, spec));
                    }
                } else if spec.counts.test > 0 {
                    warn!("series `{}` has no full window after the boundary", s.id());
                }
            }
        }
    }
    Ok(out)
}
