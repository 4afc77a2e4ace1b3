use std::time::Instant;

use bridgeflow_tensor::{Tape, Tensor, TensorError};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::loss::{mse_per_category, uncertainty_loss, uncertainty_loss_shard, UncertaintyState};
use super::optim::AdamW;
use super::schedule::{clip_gradients, lr_at, TrainConfig};
use crate::dsp::augment_gaussian;
use crate::error::{Error, Result};
use crate::nets::{Model, Pass};
use crate::simgen::stream_rng;
use crate::types::{CategoryCounts, WindowSample, NUM_CATEGORIES};

/// Worker threads for batch shards: `BRIDGEFLOW_THREADS` if set, otherwise
/// the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("BRIDGEFLOW_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// `f(0..n)` on up to `threads` scoped workers, results in index order.
pub fn par_map_ordered<R, F>(n: usize, threads: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync,
{
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(&f).collect();
    }
    let mut slots: Vec<Option<R>> = (0..n).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                let f = &f;
                scope.spawn(move || (w..n).step_by(threads).map(|i| (i, f(i))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|r| r.expect("every index computed")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mse: CategoryCounts,
    pub log_var: CategoryCounts,
    pub grad_norm: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping { patience: usize },
    Diverged { epoch: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: String,
    pub param_count: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_val_loss: f64,
    pub initial_val_mse: f64,
    pub stopped_epoch: usize,
    pub stop_reason: StopReason,
}

pub struct FitOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Model,
    pub uncertainty: UncertaintyState,
    pub report: TrainReport,
}

fn targets(samples: &[&WindowSample]) -> Tensor {
    Tensor::from_parts(
        vec![samples.len(), NUM_CATEGORIES],
        samples.iter().flat_map(|s| s.label).collect(),
    )
}

struct ShardResult {
    loss: f64,
    grads: Vec<Tensor>,
}

fn is_non_finite(e: &Error) -> bool {
    matches!(e, Error::Tensor(TensorError::NonFinite { .. }) | Error::NonFinite(_))
}

/// Loss and gradients of one shard; the last gradient is for `s`.
fn shard_step(
    model: &Model,
    state: &UncertaintyState,
    shard: &[&WindowSample],
    total: usize,
    dropout_seed: (u64, u64),
) -> Result<ShardResult> {
    let input = model.prepare(shard)?;
    let tape = Tape::new();
    let vars = model.params.bind(&tape);
    let s = tape.param(Tensor::vector(state.s.to_vec()));
    let mut rng = stream_rng(dropout_seed.0, dropout_seed.1, 3);
    let y_hat = model.forward(&tape, &vars, &input, shard.len(), Pass::Train(&mut rng))?;
    let loss = uncertainty_loss_shard(y_hat, &targets(shard), s, total)?;
    let value = loss.value().item();
    let mut g = tape.backward(loss)?;
    let mut grads: Vec<Tensor> = vars
        .iter()
        .map(|v| g.take(*v).unwrap_or_else(|| Tensor::zeros(v.shape())))
        .collect();
    grads.push(g.take(s).unwrap_or_else(|| Tensor::zeros(vec![NUM_CATEGORIES])));
    Ok(ShardResult { loss: value, grads })
}

/// Evaluation-mode predictions for every sample, in order.
pub fn predict_parallel(model: &Model, samples: &[WindowSample], chunk: usize, threads: usize) -> Result<Vec<CategoryCounts>> {
    let chunks: Vec<&[WindowSample]> = samples.chunks(chunk.max(1)).collect();
    let parts = par_map_ordered(chunks.len(), threads, |i| model.predict_all(chunks[i], chunk));
    let mut out = Vec::with_capacity(samples.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

fn evaluate(model: &Model, state: &UncertaintyState, val: &[WindowSample], threads: usize) -> Result<(f64, CategoryCounts)> {
    let pred = predict_parallel(model, val, 128, threads)?;
    let truth: Vec<CategoryCounts> = val.iter().map(|s| s.label).collect();
    Ok((uncertainty_loss(&truth, &pred, state)?, mse_per_category(&truth, &pred)?))
}

/// Train with AdamW, clipping, the warmup/cosine schedule and early
/// stopping on the validation uncertainty loss.
///
/// Each epoch shuffles with a derived seed, optionally adds noise of
/// `augment_variance` to the training windows, and keeps a final partial
/// batch. Gradients are computed per shard in parallel and summed in shard
/// order, so the result does not depend on the number of workers.
pub fn fit(
    mut model: Model,
    train: &[WindowSample],
    val: &[WindowSample],
    cfg: &TrainConfig,
    augment_variance: f64,
    seed: u64,
) -> Result<FitOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyPartition("training"));
    }
    if val.is_empty() {
        return Err(Error::EmptyPartition("validation"));
    }
    let threads = worker_count();
    {
        let refs: Vec<&WindowSample> = train.iter().collect();
        model.fit_feature_norm(&refs)?;
    }
    let mut state = UncertaintyState::default();
    let sizes: Vec<usize> = model
        .params
        .tensors()
        .iter()
        .map(Tensor::numel)
        .chain([NUM_CATEGORIES])
        .collect();
    let mut decay = vec![true; sizes.len()];
    *decay.last_mut().expect("s slot") = false;
    let mut opt = AdamW::new(&sizes, cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay);

    let initial_val_mse = {
        let (_, m) = evaluate(&model, &state, val, threads)?;
        m.iter().sum::<f64>() / NUM_CATEGORIES as f64
    };
    let mut best = (model.params.clone(), state);
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = None;
    let mut since_best = 0usize;
    let mut logs = Vec::new();
    let mut stop = StopReason::MaxEpochs;
    let mut stopped_epoch = cfg.max_epochs.saturating_sub(1);

    'epochs: for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        let lr = lr_at(epoch, cfg);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream_rng(seed, epoch as u64, 4));
        let mut loss_sum = 0.0;
        let mut last_norm = 0.0;
        for (b, batch_idx) in order.chunks(cfg.batch).enumerate() {
            let owned: Vec<WindowSample> = if cfg.augment && augment_variance > 0.0 {
                batch_idx
                    .iter()
                    .map(|&i| {
                        let s = seed ^ ((epoch as u64) << 40) ^ i as u64;
                        augment_gaussian(&train[i], augment_variance, s)
                    })
                    .collect::<Result<_>>()?
            } else {
                batch_idx.iter().map(|&i| train[i].clone()).collect()
            };
            let refs: Vec<&WindowSample> = owned.iter().collect();
            let shards: Vec<&[&WindowSample]> = refs.chunks(cfg.shard).collect();
            let total = refs.len();
            let results = par_map_ordered(shards.len(), threads, |k| {
                shard_step(&model, &state, shards[k], total, (seed, ((epoch as u64) << 32) | ((b as u64) << 12) | k as u64))
            });
            let mut grads: Option<Vec<Tensor>> = None;
            let mut batch_loss = 0.0;
            for r in results {
                let r = match r {
                    Ok(r) => r,
                    Err(e) if is_non_finite(&e) => {
                        stop = StopReason::Diverged { epoch };
                        stopped_epoch = epoch;
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                };
                batch_loss += r.loss;
                match grads.as_mut() {
                    None => grads = Some(r.grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(&r.grads) {
                            for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                                *x += y;
                            }
                        }
                    }
                }
            }
            if !batch_loss.is_finite() {
                stop = StopReason::Diverged { epoch };
                stopped_epoch = epoch;
                break 'epochs;
            }
            let mut grads = grads.expect("non-empty batch");
            last_norm = clip_gradients(&mut grads, cfg.clip_norm);
            let mut s_tensor = Tensor::vector(state.s.to_vec());
            {
                let mut targets: Vec<&mut Tensor> = model.params.tensors_mut().iter_mut().collect();
                targets.push(&mut s_tensor);
                opt.step(&mut targets, &grads, &decay, lr);
            }
            state.s.copy_from_slice(s_tensor.data());
            loss_sum += batch_loss * total as f64;
        }
        let (val_loss, val_mse) = match evaluate(&model, &state, val, threads) {
            Ok(v) => v,
            Err(e) if is_non_finite(&e) => (f64::NAN, [f64::NAN; NUM_CATEGORIES]),
            Err(e) => return Err(e),
        };
        logs.push(EpochLog {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            val_mse,
            log_var: state.s,
            grad_norm: last_norm,
            seconds: started.elapsed().as_secs_f64(),
        });
        if !val_loss.is_finite() {
            stop = StopReason::Diverged { epoch };
            stopped_epoch = epoch;
            break;
        }
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = Some(epoch);
            best = (model.params.clone(), state);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > cfg.patience {
                stop = StopReason::EarlyStopping { patience: cfg.patience };
                stopped_epoch = epoch;
                break;
            }
        }
        stopped_epoch = epoch;
    }

    let report = TrainReport {
        variant: model.variant().to_string(),
        param_count: model.param_count(),
        seed,
        n_train: train.len(),
        n_val: val.len(),
        epochs: logs,
        best_epoch,
        best_val_loss: best_loss,
        initial_val_mse,
        stopped_epoch,
        stop_reason: stop,
    };
    model.params = best.0;
    Ok(FitOutcome {
        model,
        uncertainty: best.1,
        report,
    })
}
