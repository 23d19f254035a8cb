//! Building task splits from a dataset config and caching them as CSV.
//!
//! The cache is long format, one file per split:
//! `task_id,part,index,value` with `part` either `context` or `target`.
//! Values are written with Rust's shortest round-trip formatting, so a
//! reloaded task is bit-identical to the generated one.

use crate::config::{DatasetConfig, Source};
use crate::error::{HarnessError, Result};
use specvit_core::datagen::{generate_synthetic, ingest_csv, make_tasks, DatasetSpec, TaskSplits};
use specvit_core::series::TimeStamp;
use specvit_core::ForecastTask;
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

pub fn dataset_spec(ds: &DatasetConfig, seed: u64) -> DatasetSpec {
    let boundary = match &ds.source {
        Source::Csv { boundary: Some(b), .. } => Some(TimeStamp::parse(b)),
        _ => None,
    };
    DatasetSpec {
        input_len: ds.input_len,
        horizon: ds.horizon,
        counts: ds.counts(),
        seed,
        boundary,
    }
}

/// Generates or ingests the dataset's series and cuts them into tasks.
pub fn build_splits(ds: &DatasetConfig, seed: u64) -> Result<TaskSplits> {
    let spec = dataset_spec(ds, seed);
    let series = match &ds.source {
        Source::Synthetic { series_len } => {
            let count = ds.counts().total();
            generate_synthetic(count, *series_len, seed).map_err(HarnessError::data)?
        }
        Source::Csv { path, schema, .. } => ingest_csv(path, schema).map_err(HarnessError::data)?,
    };
    let mut splits = make_tasks(&series, &spec).map_err(HarnessError::data)?;
    disambiguate(&mut splits);
    if splits.test.is_empty() {
        return Err(HarnessError::Data(format!("dataset `{}` produced no test tasks", ds.name)));
    }
    Ok(splits)
}

/// Windows drawn with replacement can repeat a start offset; later copies
/// get a `#k` suffix so task ids stay unique across all splits.
fn disambiguate(splits: &mut TaskSplits) {
    let mut seen = std::collections::HashMap::<String, usize>::new();
    for t in splits.train.iter_mut().chain(&mut splits.val).chain(&mut splits.test) {
        let n = seen.entry(t.id.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            t.id = format!("{}#{}", t.id, n);
        }
    }
}

pub fn split_tasks(splits: &TaskSplits, split: Split) -> &[ForecastTask] {
    match split {
        Split::Train => &splits.train,
        Split::Val => &splits.val,
        Split::Test => &splits.test,
    }
}

pub fn write_tasks<W: Write>(mut w: W, tasks: &[ForecastTask]) -> std::io::Result<()> {
    writeln!(w, "task_id,part,index,value")?;
    for t in tasks {
        for (part, values) in [("context", t.context()), ("target", t.target())] {
            for (i, v) in values.iter().enumerate() {
                writeln!(w, "{},{part},{i},{v}", t.id)?;
            }
        }
    }
    Ok(())
}

pub fn save_tasks(path: &Path, tasks: &[ForecastTask]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| HarnessError::stage("gen", format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(file);
    write_tasks(&mut w, tasks)
        .and_then(|_| w.flush())
        .map_err(|e| HarnessError::stage("gen", e))
}

/// Reads a task cache; rows of one task must be contiguous and in order.
pub fn read_tasks<R: std::io::Read>(r: R) -> Result<Vec<ForecastTask>> {
    let mut reader = csv::Reader::from_reader(r);
    let mut tasks = Vec::new();
    let mut current: Option<(String, Vec<f64>, Vec<f64>)> = None;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(HarnessError::data)?;
        let bad = |m: &str| HarnessError::Data(format!("task cache row {}: {m}", line + 2));
        if rec.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        let id = &rec[0];
        let index: usize = rec[2].parse().map_err(|_| bad("bad index"))?;
        let value: f64 = rec[3].parse().map_err(|_| bad("bad value"))?;
        if current.as_ref().is_none_or(|c| c.0 != id) {
            if let Some((id, ctx, tgt)) = current.take() {
                tasks.push(finish(id, ctx, tgt)?);
            }
            current = Some((id.to_string(), Vec::new(), Vec::new()));
        }
        let c = current.as_mut().expect("just set");
        let part = match &rec[1] {
            "context" => &mut c.1,
            "target" => &mut c.2,
            _ => return Err(bad("part must be context or target")),
        };
        if index != part.len() {
            return Err(bad("indices out of order"));
        }
        part.push(value);
    }
    if let Some((id, ctx, tgt)) = current {
        tasks.push(finish(id, ctx, tgt)?);
    }
    Ok(tasks)
}

fn finish(id: String, context: Vec<f64>, target: Vec<f64>) -> Result<ForecastTask> {
    if context.is_empty() || target.is_empty() {
        return Err(HarnessError::Data(format!("task `{id}` is missing its context or target")));
    }
    Ok(ForecastTask::new(id, context, target))
}

pub fn load_tasks(path: &Path) -> Result<Vec<ForecastTask>> {
    let file = std::fs::File::open(path).map_err(|e| {
        HarnessError::Data(format!("{}: {e} (run `gen` first)", path.display()))
    })?;
    read_tasks(std::io::BufReader::new(file))
}
