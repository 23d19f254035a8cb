//! Experiment stages. Each stage reads what earlier stages wrote under the
//! output directory, so they can run one at a time from the CLI or chained
//! through [`run_experiment`].
//!
//! Output layout:
//!
//! ```text
//! data/<dataset>/{train,val,test}.csv, manifest.json
//! renders/<dataset>/<task>_{strip,spectrogram,composed,lineplot}.png
//! checkpoints/<dataset>/<variant>.ckpt
//! logs/<dataset>_<variant>_train.csv
//! predictions.csv, report.{csv,md,json}
//! plots/<dataset>_<n>.png
//! ```

use crate::config::{DatasetConfig, ExperimentConfig, Method};
use crate::error::{HarnessError, Result};
use crate::report::{EvalReport, MethodRecord, Outcome, Scores, SignScore};
use crate::tasks::{build_splits, load_tasks, save_tasks, split_tasks, Split};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use specvit_core::baselines::{arima_auto, ema_forecast, naive_forecast, select_ema_alpha, EMA_ALPHA_GRID};
use specvit_core::metrics::{aggregate, mase, sign_accuracy, smape, MetricError, MetricInput, SignConfig};
use specvit_core::rng::stream_tag;
use specvit_core::ForecastTask;
use specvit_imaging::canvas::{plot_series, Rgb};
use specvit_imaging::{intensity_strip, render_lineplot, strip_raster, GrayImage, STRIP_ROWS};
use specvit_vit::{predict_samples, train, Renderer, Samples, TrainLog, TrainOptions, Variant, VitForecaster};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Paths under an experiment's output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn data_dir(&self, ds: &str) -> PathBuf {
        self.root.join("data").join(ds)
    }

    pub fn split_file(&self, ds: &str, split: Split) -> PathBuf {
        self.data_dir(ds).join(format!("{}.csv", split.name()))
    }

    pub fn checkpoint(&self, ds: &str, variant: Variant) -> PathBuf {
        self.root.join("checkpoints").join(ds).join(format!("{}.ckpt", variant.name()))
    }

    pub fn train_log(&self, ds: &str, variant: Variant) -> PathBuf {
        self.root.join("logs").join(format!("{ds}_{}_train.csv", variant.name()))
    }

    pub fn renders(&self, ds: &str) -> PathBuf {
        self.root.join("renders").join(ds)
    }

    pub fn predictions(&self) -> PathBuf {
        self.root.join("predictions.csv")
    }

    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }
}

fn mkdir(stage: &'static str, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::stage(stage, format!("{}: {e}", dir.display())))
}

/// Identifies the cached tasks a dataset config and seed produce.
fn data_hash(ds: &DatasetConfig, seed: u64) -> String {
    let v = serde_json::json!({ "dataset": ds, "seed": seed });
    let digest = Sha256::digest(v.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    data_hash: String,
    config_hash: String,
    train: usize,
    val: usize,
    test: usize,
}

/// Materializes every dataset's splits to the CSV cache.
pub fn generate(cfg: &ExperimentConfig, layout: &Layout) -> Result<()> {
    for ds in &cfg.datasets {
        let splits = build_splits(ds, cfg.seed)?;
        let dir = layout.data_dir(&ds.name);
        mkdir("gen", &dir)?;
        for split in Split::ALL {
            save_tasks(&layout.split_file(&ds.name, split), split_tasks(&splits, split))?;
        }
        let manifest = Manifest {
            data_hash: data_hash(ds, cfg.seed),
            config_hash: cfg.config_hash(),
            train: splits.train.len(),
            val: splits.val.len(),
            test: splits.test.len(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| HarnessError::stage("gen", e))?;
        std::fs::write(dir.join("manifest.json"), text).map_err(|e| HarnessError::stage("gen", e))?;
        info!(
            "{}: {} train / {} val / {} test tasks",
            ds.name, manifest.train, manifest.val, manifest.test
        );
    }
    Ok(())
}

/// Loads one cached split, refusing a cache written for other settings.
pub fn load_split(cfg: &ExperimentConfig, layout: &Layout, ds: &DatasetConfig, split: Split) -> Result<Vec<ForecastTask>> {
    let path = layout.data_dir(&ds.name).join("manifest.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| HarnessError::Data(format!("{}: {e} (run `gen` first)", path.display())))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| HarnessError::Data(format!("{}: {e}", path.display())))?;
    if manifest.data_hash != data_hash(ds, cfg.seed) {
        return Err(HarnessError::Data(format!(
            "cached data for `{}` was generated with different settings; rerun `gen`",
            ds.name
        )));
    }
    load_tasks(&layout.split_file(&ds.name, split))
}

/// Writes inspection images for the first `count` training tasks of each
/// dataset.
pub fn render_samples(cfg: &ExperimentConfig, layout: &Layout, count: usize) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for ds in &cfg.datasets {
        let tasks = load_split(cfg, layout, ds, Split::Train)?;
        let dir = layout.renders(&ds.name);
        mkdir("render", &dir)?;
        let mut spec = Renderer::new(Variant::NumSpec, Some(cfg.wavelet.morlet(ds.input_len)));
        spec.prepare(ds.input_len).map_err(|e| HarnessError::stage("render", e))?;
        for task in tasks.iter().take(count) {
            let scaled = task.scaled_context();
            let composed = spec.render(&scaled).map_err(|e| HarnessError::stage("render", e))?;
            let strip = strip_raster(&intensity_strip(&scaled).map_err(|e| HarnessError::stage("render", e))?);
            let spectrogram = GrayImage {
                width: composed.width,
                height: composed.height - STRIP_ROWS,
                pixels: composed.pixels[STRIP_ROWS * composed.width..].to_vec(),
            };
            let lineplot = render_lineplot(&scaled);
            let stem = task.id.replace(['@', '/', '\\'], "_");
            for (kind, img) in [
                ("strip", &strip),
                ("spectrogram", &spectrogram),
                ("composed", &composed),
                ("lineplot", &lineplot),
            ] {
                let path = dir.join(format!("{stem}_{kind}.png"));
                img.save_png(&path).map_err(|e| HarnessError::stage("render", e))?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

pub fn vit_variants(cfg: &ExperimentConfig) -> Vec<Variant> {
    cfg.methods
        .iter()
        .filter_map(|m| match m {
            Method::Vit(v) => Some(*v),
            _ => None,
        })
        .collect()
}

fn model_seed(seed: u64, variant: Variant) -> u64 {
    seed.wrapping_add(stream_tag(variant.name()))
}

pub fn train_options(cfg: &ExperimentConfig, variant: Variant) -> TrainOptions {
    let mut opts = TrainOptions::new(cfg.training.schedule(), model_seed(cfg.seed, variant) ^ 0x5eed);
    opts.optimizer.weight_decay = cfg.training.weight_decay;
    opts.optimizer.beta2 = cfg.training.adam_beta2;
    opts.shard_size = cfg.training.shard_size;
    opts
}

fn render_set(cfg: &ExperimentConfig, ds: &DatasetConfig, variant: Variant, tasks: &[ForecastTask]) -> Result<Samples> {
    let mut renderer = Renderer::new(variant, Some(cfg.wavelet.morlet(ds.input_len)));
    Ok(Samples::from_tasks(tasks, &mut renderer)?)
}

/// Trains one variant on a dataset's train split with validation-based early
/// stopping and writes the best checkpoint and the epoch log.
pub fn train_variant(cfg: &ExperimentConfig, layout: &Layout, ds: &DatasetConfig, variant: Variant) -> Result<TrainLog> {
    let train_tasks = load_split(cfg, layout, ds, Split::Train)?;
    let val_tasks = load_split(cfg, layout, ds, Split::Val)?;
    let started = Instant::now();
    let train_set = render_set(cfg, ds, variant, &train_tasks)?;
    let val_set = render_set(cfg, ds, variant, &val_tasks)?;
    info!(
        "{}/{}: rendered {} + {} samples in {:.1}s",
        ds.name,
        variant.name(),
        train_set.len(),
        val_set.len(),
        started.elapsed().as_secs_f64()
    );
    let vit_cfg = cfg.vit_config(ds, variant);
    let mut model = VitForecaster::<f32>::new(vit_cfg, model_seed(cfg.seed, variant))?;
    let opts = train_options(cfg, variant);
    let log = train(&mut model, &train_set, &val_set, &opts)?;
    info!(
        "{}/{}: {} epochs, best epoch {:?} (val {:.5}), {:.0}s",
        ds.name,
        variant.name(),
        log.epochs.len(),
        log.best_epoch,
        log.best_val_loss().unwrap_or(f64::NAN),
        started.elapsed().as_secs_f64()
    );

    let ckpt = layout.checkpoint(&ds.name, variant);
    mkdir("train", ckpt.parent().expect("checkpoint has a parent"))?;
    let meta = serde_json::json!({
        "config_hash": cfg.config_hash(),
        "dataset": ds.name,
        "variant": variant,
        "best_epoch": log.best_epoch,
        "epochs_run": log.epochs.len(),
        "stopped_early": log.stopped_early,
    });
    model.save(&ckpt, &cfg.architecture_hash(ds, variant), meta)?;
    let log_path = layout.train_log(&ds.name, variant);
    mkdir("train", log_path.parent().expect("log has a parent"))?;
    let file = std::fs::File::create(&log_path).map_err(|e| HarnessError::stage("train", e))?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "# config_hash={}", cfg.config_hash()).map_err(|e| HarnessError::stage("train", e))?;
    log.write_csv(&mut w).and_then(|_| w.flush()).map_err(|e| HarnessError::stage("train", e))?;
    Ok(log)
}

/// Trains every configured ViT variant on every dataset. A failing variant
/// does not stop the others; the first failure is returned at the end.
pub fn train_all(cfg: &ExperimentConfig, layout: &Layout) -> Result<()> {
    let mut first_err = None;
    for ds in &cfg.datasets {
        for variant in vit_variants(cfg) {
            if let Err(e) = train_variant(cfg, layout, ds, variant) {
                warn!("{}/{}: training failed: {e}", ds.name, variant.name());
                first_err.get_or_insert(e);
            }
        }
    }
    first_err.map_or(Ok(()), Err)
}

/// Forecasts in original units for every task, one vector per task.
type Forecasts = Vec<Vec<f64>>;

fn vit_forecasts(
    cfg: &ExperimentConfig,
    layout: &Layout,
    ds: &DatasetConfig,
    variant: Variant,
    tasks: &[ForecastTask],
) -> Result<(Forecasts, String)> {
    let path = layout.checkpoint(&ds.name, variant);
    if !path.exists() {
        return Err(HarnessError::Data(format!("no checkpoint at {} (run `train` first)", path.display())));
    }
    let model = VitForecaster::<f32>::load(&path, cfg.vit_config(ds, variant), &cfg.architecture_hash(ds, variant))
        .map_err(|e| HarnessError::stage("eval", e))?;
    let note = specvit_nn::checkpoint::Checkpoint::load(&path)
        .ok()
        .and_then(|c| c.meta.get("best_epoch").and_then(|v| v.as_u64()))
        .map_or_else(String::new, |e| format!("best_epoch={e}"));
    let samples = render_set(cfg, ds, variant, tasks)?;
    let scaled = predict_samples(&model, &samples, cfg.training.shard_size)?;
    let forecasts = tasks
        .iter()
        .zip(scaled)
        .map(|(t, row)| row.into_iter().map(|v| t.scaling().invert(v)).collect())
        .collect();
    Ok((forecasts, note))
}

fn baseline_forecasts(method: Method, tasks: &[ForecastTask], val: &[ForecastTask]) -> (Forecasts, String) {
    match method {
        Method::Naive => (
            tasks.iter().map(|t| naive_forecast(t.context(), t.horizon())).collect(),
            String::new(),
        ),
        Method::Ema => {
            let chosen = if val.is_empty() { tasks } else { val };
            let ema = select_ema_alpha(chosen, &EMA_ALPHA_GRID);
            let f = tasks.iter().map(|t| ema_forecast(t.context(), t.horizon(), &ema)).collect();
            (f, format!("alpha={}", ema.alpha))
        }
        Method::Arima => (
            tasks.par_iter().map(|t| arima_auto(t.context(), t.horizon())).collect(),
            String::new(),
        ),
        Method::Vit(_) => unreachable!("ViT methods are not baselines"),
    }
}

/// SMAPE and MASE per task (MASE left out where its denominator vanishes),
/// sign accuracy pooled over all task steps.
pub fn score(tasks: &[ForecastTask], forecasts: &[Vec<f64>], thresholds: &[f64]) -> Result<Scores> {
    let inputs: Vec<MetricInput<'_>> = tasks
        .iter()
        .zip(forecasts)
        .map(|(t, f)| MetricInput::new(t.context(), t.target(), f))
        .collect();
    let metric_err = |e: MetricError| HarnessError::stage("eval", e);
    let smapes = inputs
        .iter()
        .map(|i| smape(i).map(Some))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(metric_err)?;
    let mases = inputs
        .iter()
        .map(|i| match mase(i) {
            Ok(v) => Ok(Some(v)),
            Err(MetricError::DegenerateDenominator) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(metric_err)?;
    let sign = thresholds
        .iter()
        .map(|&threshold| {
            let cfg = SignConfig {
                threshold_fraction: threshold,
            };
            sign_accuracy(&inputs, &cfg).map(|accuracy| SignScore { threshold, accuracy })
        })
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(metric_err)?;
    Ok(Scores {
        tasks: tasks.len(),
        smape: aggregate(&smapes),
        mase: aggregate(&mases),
        sign,
        notes: String::new(),
    })
}

/// Forecasts and scores every configured method on every dataset's test
/// split. Failures become `failed` rows; `known_failures` lets a caller
/// report why training of a variant did not produce a checkpoint.
pub fn evaluate(
    cfg: &ExperimentConfig,
    layout: &Layout,
    known_failures: &BTreeMap<(String, Variant), String>,
) -> Result<EvalReport> {
    let mut records = Vec::new();
    let mut predictions = String::from("dataset,method,task_id,step,forecast\n");
    for ds in &cfg.datasets {
        let test = load_split(cfg, layout, ds, Split::Test)?;
        let val = if cfg.methods.contains(&Method::Ema) {
            load_split(cfg, layout, ds, Split::Val)?
        } else {
            Vec::new()
        };
        for &method in &cfg.methods {
            let started = Instant::now();
            let produced = match method {
                Method::Vit(v) => match known_failures.get(&(ds.name.clone(), v)) {
                    Some(reason) => Err(HarnessError::stage("train", reason)),
                    None => vit_forecasts(cfg, layout, ds, v, &test),
                },
                m => Ok(baseline_forecasts(m, &test, &val)),
            };
            let outcome = produced.and_then(|(forecasts, notes)| {
                let mut s = score(&test, &forecasts, &cfg.sign.thresholds)?;
                s.notes = notes;
                for (t, f) in test.iter().zip(&forecasts) {
                    for (step, v) in f.iter().enumerate() {
                        predictions.push_str(&format!("{},{},{},{step},{v}\n", ds.name, method, t.id));
                    }
                }
                Ok(s)
            });
            let outcome = match outcome {
                Ok(s) => {
                    info!(
                        "{}/{}: SMAPE {:.4}",
                        ds.name,
                        method,
                        s.smape.mean.unwrap_or(f64::NAN)
                    );
                    Outcome::Ok(s)
                }
                Err(e) => {
                    warn!("{}/{}: {e}", ds.name, method);
                    Outcome::Failed { reason: e.to_string() }
                }
            };
            records.push(MethodRecord {
                dataset: ds.name.clone(),
                method: method.name().to_string(),
                outcome,
                seconds: started.elapsed().as_secs_f64(),
            });
        }
    }
    mkdir("eval", &layout.root)?;
    std::fs::write(layout.predictions(), predictions).map_err(|e| HarnessError::stage("eval", e))?;
    let report = EvalReport {
        config_hash: cfg.config_hash(),
        seed: cfg.seed,
        sign_thresholds: cfg.sign.thresholds.clone(),
        records,
    };
    report.save(&layout.root)?;
    Ok(report)
}

/// gen, train and eval in sequence. Training failures are recorded in the
/// report; if any variant diverged the error is returned after the report
/// is written.
pub fn run_experiment(cfg: &ExperimentConfig, layout: &Layout) -> Result<EvalReport> {
    generate(cfg, layout)?;
    let mut failures = BTreeMap::new();
    for ds in &cfg.datasets {
        for variant in vit_variants(cfg) {
            if let Err(e) = train_variant(cfg, layout, ds, variant) {
                warn!("{}/{}: training failed: {e}", ds.name, variant.name());
                failures.insert((ds.name.clone(), variant), e);
            }
        }
    }
    let reasons = failures.iter().map(|(k, e)| (k.clone(), e.to_string())).collect();
    let report = evaluate(cfg, layout, &reasons)?;
    match failures.into_values().find(|e| matches!(e, HarnessError::Divergence(_))) {
        Some(e) => Err(e),
        None => Ok(report),
    }
}

const PALETTE: [Rgb; 6] = [
    [214, 39, 40],
    [31, 119, 180],
    [255, 127, 14],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
];

/// Overlays of context, ground truth and each method's forecast for the
/// first `count` test tasks of each dataset, read back from
/// `predictions.csv`. Colors are listed in `plots/legend.txt`.
pub fn plot_predictions(cfg: &ExperimentConfig, layout: &Layout, count: usize) -> Result<Vec<PathBuf>> {
    let path = layout.predictions();
    let mut reader = csv::Reader::from_path(&path)
        .map_err(|e| HarnessError::Data(format!("{}: {e} (run `eval` first)", path.display())))?;
    let mut preds: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(HarnessError::data)?;
        let v: f64 = rec[4].parse().map_err(HarnessError::data)?;
        preds.entry((rec[0].to_string(), rec[1].to_string(), rec[2].to_string())).or_default().push(v);
    }
    let dir = layout.plots();
    mkdir("plot", &dir)?;
    let mut legend = String::from("context: black\nground truth: green\n");
    for (m, c) in cfg.methods.iter().zip(PALETTE) {
        legend.push_str(&format!("{m}: rgb({}, {}, {})\n", c[0], c[1], c[2]));
    }
    std::fs::write(dir.join("legend.txt"), legend).map_err(|e| HarnessError::stage("plot", e))?;

    let mut written = Vec::new();
    for ds in &cfg.datasets {
        let test = load_split(cfg, layout, ds, Split::Test)?;
        for (n, task) in test.iter().take(count).enumerate() {
            let l = task.input_len();
            let mut series: Vec<(usize, &[f64], Rgb)> = vec![(0, task.context(), [0, 0, 0]), (l, task.target(), [44, 160, 44])];
            for (m, c) in cfg.methods.iter().zip(PALETTE) {
                if let Some(f) = preds.get(&(ds.name.clone(), m.name().to_string(), task.id.clone())) {
                    series.push((l, f.as_slice(), c));
                }
            }
            let canvas = plot_series(&series, 480, 240);
            let out = dir.join(format!("{}_{n}.png", ds.name));
            canvas.save_png(&out).map_err(|e| HarnessError::stage("plot", e))?;
            written.push(out);
        }
    }
    Ok(written)
}
