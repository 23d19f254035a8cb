use crate::data::Samples;
use crate::model::VitForecaster;
use crate::{Result, VitError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use specvit_nn::optim::{AdamW, AdamWConfig};
use specvit_nn::schedule::{EarlyStopper, TrainSchedule};
use specvit_nn::{Scalar, Tape};
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub schedule: TrainSchedule,
    pub optimizer: AdamWConfig,
    /// Examples per gradient shard. Shards run in parallel and are reduced
    /// in index order, so results do not depend on the worker count.
    pub shard_size: usize,
    pub seed: u64,
    pub early_stopping: bool,
}

impl TrainOptions {
    pub fn new(schedule: TrainSchedule, seed: u64) -> Self {
        Self {
            schedule,
            optimizer: AdamWConfig {
                lr: schedule.base_lr,
                ..AdamWConfig::default()
            },
            shard_size: 16,
            seed,
            early_stopping: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,val_loss,lr")?;
        for r in &self.epochs {
            writeln!(w, "{},{:.9e},{:.9e},{:.6e}", r.epoch, r.train_loss, r.val_loss, r.lr)?;
        }
        Ok(())
    }

    pub fn best_val_loss(&self) -> Option<f64> {
        self.best_epoch.map(|e| self.epochs[e].val_loss)
    }
}

fn shard_pass<T: Scalar>(
    model: &VitForecaster<T>,
    data: &Samples,
    idx: &[usize],
    denom: usize,
    with_grads: bool,
) -> Result<(f64, Option<Vec<Vec<T>>>)> {
    let mut tape = Tape::new();
    let params = model.store.bind(&mut tape);
    let out = model.forward(&mut tape, &params, data.patches(idx, &model.config), idx.len())?;
    let loss = tape.mse(out, &data.targets::<T>(idx), denom)?;
    let value = tape.value(loss)[0].to_f64().unwrap_or(f64::NAN);
    if !with_grads {
        return Ok((value, None));
    }
    tape.backward(loss)?;
    Ok((value, Some(model.store.collect_grads(&mut tape, &params))))
}

/// Loss and (optionally) summed gradients over one batch, computed shard by
/// shard. The loss is the batch mean over examples and horizon steps.
pub fn batch_pass<T: Scalar>(
    model: &VitForecaster<T>,
    data: &Samples,
    batch: &[usize],
    shard_size: usize,
    with_grads: bool,
) -> Result<(f64, Option<Vec<Vec<T>>>)> {
    let denom = batch.len() * data.horizon;
    let parts: Vec<(f64, Option<Vec<Vec<T>>>)> = batch
        .par_chunks(shard_size.max(1))
        .map(|idx| shard_pass(model, data, idx, denom, with_grads))
        .collect::<Result<_>>()?;
    let mut loss = 0.0;
    let mut total: Option<Vec<Vec<T>>> = None;
    for (l, g) in parts {
        loss += l;
        if let Some(g) = g {
            match &mut total {
                None => total = Some(g),
                Some(acc) => {
                    for (a, b) in acc.iter_mut().zip(&g) {
                        a.iter_mut().zip(b).for_each(|(x, y)| *x += *y);
                    }
                }
            }
        }
    }
    Ok((loss, total))
}

/// Mean squared error over a whole sample set, in fixed-size chunks.
pub fn evaluate_loss<T: Scalar>(model: &VitForecaster<T>, data: &Samples, shard_size: usize) -> Result<f64> {
    let all: Vec<usize> = (0..data.len()).collect();
    let mut weighted = 0.0;
    for chunk in all.chunks(256) {
        let (l, _) = batch_pass(model, data, chunk, shard_size, false)?;
        weighted += l * chunk.len() as f64;
    }
    Ok(weighted / data.len().max(1) as f64)
}

/// Scaled-space forecasts for every sample, in order.
pub fn predict_samples<T: Scalar>(model: &VitForecaster<T>, data: &Samples, shard_size: usize) -> Result<Vec<Vec<f64>>> {
    let all: Vec<usize> = (0..data.len()).collect();
    let parts: Vec<Vec<Vec<T>>> = all
        .par_chunks(shard_size.max(1))
        .map(|idx| model.predict_patches(data.patches(idx, &model.config), idx.len()))
        .collect::<Result<_>>()?;
    Ok(parts
        .into_iter()
        .flatten()
        .map(|row| row.into_iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect())
        .collect())
}

/// Mini-batch AdamW on MSE with the warmup/cosine schedule applied per step.
/// With early stopping on, training halts after `patience` epochs without a
/// new validation minimum; the best epoch's weights are restored either way.
pub fn train<T: Scalar>(
    model: &mut VitForecaster<T>,
    train_set: &Samples,
    val_set: &Samples,
    opts: &TrainOptions,
) -> Result<TrainLog> {
    opts.schedule.validate().map_err(VitError::Config)?;
    if train_set.is_empty() {
        return Err(VitError::EmptyDataset);
    }
    let sched = opts.schedule;
    let mut opt = AdamW::new(opts.optimizer, &model.store);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let steps = order.len().div_ceil(sched.batch_size);
    let mut stopper = EarlyStopper::new(sched.patience);
    let mut best: Option<Vec<Vec<T>>> = None;
    let mut log = TrainLog::default();

    for epoch in 0..sched.max_epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (b, batch) in order.chunks(sched.batch_size).enumerate() {
            opt.set_lr(sched.lr_at(epoch as f64 + b as f64 / steps as f64));
            let (loss, grads) = batch_pass(model, train_set, batch, opts.shard_size, true)?;
            if !loss.is_finite() {
                return Err(VitError::NonFiniteLoss { epoch, batch: b });
            }
            model.store.zero_grads();
            model.store.accumulate_grads(&grads.expect("gradients requested"));
            opt.step(&mut model.store);
            weighted += loss * batch.len() as f64;
        }
        let train_loss = weighted / train_set.len() as f64;
        let val_loss = if val_set.is_empty() {
            train_loss
        } else {
            evaluate_loss(model, val_set, opts.shard_size)?
        };
        if !val_loss.is_finite() {
            return Err(VitError::NonFiniteLoss { epoch, batch: steps });
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr: sched.lr_at(epoch as f64),
        });
        log::info!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        let decision = stopper.observe(val_loss);
        if decision.improved {
            best = Some(model.store.snapshot());
        }
        if opts.early_stopping && decision.stop {
            log.stopped_early = true;
            break;
        }
    }
    log.best_epoch = stopper.best_epoch();
    if let Some(snapshot) = best {
        model.store.restore(&snapshot);
    }
    Ok(log)
}
