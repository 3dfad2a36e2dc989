use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::metrics::compute_auc;
use crate::corpus::{chunk_sequences, InteractionLog, InteractionRecord};
use crate::error::{KtError, Result};
use crate::model::{bce_loss, GraphInputs, KtModel, Variant};
use crate::params::Adam;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-interaction BCE over the epoch's batches.
    pub bce: f64,
    pub reloss: f64,
    pub total: f64,
    /// AUC on the held-out train students, or their negative mean BCE
    /// when only one class is present there.
    pub validation_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub name: String,
    pub variant: Variant,
    pub seed: u64,
    pub config_hash: String,
    pub test_auc: f64,
    pub best_epoch: usize,
    pub epochs: Vec<EpochRecord>,
    pub wall_clock_secs: f64,
    pub n_train_students: usize,
    pub n_test_students: usize,
    pub n_parameters: usize,
}

pub struct TrainOutcome {
    /// Parameters of the best validation epoch (the last epoch when
    /// nothing is held out).
    pub model: KtModel,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub wall_clock_secs: f64,
}

fn validation_score(model: &KtModel, log: &InteractionLog) -> Result<f64> {
    let (scores, labels) = model.predict_log(log);
    match compute_auc(&scores, &labels) {
        Ok(auc) => Ok(auc),
        Err(_) => Ok(-bce_loss(&scores, &labels)? / scores.len().max(1) as f64),
    }
}

/// Mini-batch Adam on `mean BCE + λ · reloss`, early-stopped on the last
/// `validation_fraction` of train students.
pub fn train_model(config: &ExperimentConfig, inputs: Arc<GraphInputs>, train: &InteractionLog) -> Result<TrainOutcome> {
    config.validate()?;
    if train.n_students() == 0 {
        return Err(KtError::InvalidArgument("empty training log".into()));
    }
    let start = Instant::now();
    let n_val = (config.validation_fraction * train.n_students() as f64).round() as usize;
    let n_val = n_val.min(train.n_students() - 1);
    let (fit, held_out) = train.split_students(train.n_students() - n_val);
    let fit = chunk_sequences(&fit, config.max_seq_len);
    let held_out = chunk_sequences(&held_out, config.max_seq_len);

    let mut model = KtModel::new(config.model.clone(), inputs, config.seed)?;
    let mut opt = Adam::new(&model.store, config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..fit.n_students()).collect();

    let mut epochs = Vec::new();
    let mut best: Option<(f64, usize, crate::params::ParamStore)> = None;
    let mut stale = 0;
    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let (mut reloss, mut total, mut n_batches) = (0.0, 0.0, 0usize);
        let (mut weighted_bce, mut n_inter) = (0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&[InteractionRecord]> =
                chunk.iter().map(|&i| fit.sequences()[i].records.as_slice()).collect();
            let (loss, grads) = model.batch_gradients(&batch, config.lambda);
            if !loss.total.is_finite() || !grads.is_finite() {
                return Err(KtError::Diverged {
                    epoch,
                    batch: b,
                    loss: loss.total,
                });
            }
            opt.step(&mut model.store, &grads);
            reloss += loss.reloss;
            total += loss.total;
            weighted_bce += loss.bce * loss.n_interactions as f64;
            n_inter += loss.n_interactions;
            n_batches += 1;
        }
        let nb = n_batches.max(1) as f64;
        let mut record = EpochRecord {
            epoch,
            lr: opt.lr,
            bce: weighted_bce / n_inter.max(1) as f64,
            reloss: reloss / nb,
            total: total / nb,
            validation_score: None,
        };
        opt.lr *= config.lr_decay;

        if held_out.n_students() > 0 {
            let score = validation_score(&model, &held_out)?;
            record.validation_score = Some(score);
            if best.as_ref().map_or(true, |(s, _, _)| score > *s) {
                best = Some((score, epoch, model.store.clone()));
                stale = 0;
            } else {
                stale += 1;
            }
        }
        epochs.push(record);
        if held_out.n_students() > 0 && stale >= config.patience {
            break;
        }
    }

    let best_epoch = match best {
        Some((_, e, store)) => {
            model.store = store;
            e
        }
        None => epochs.len() - 1,
    };
    Ok(TrainOutcome {
        model,
        epochs,
        best_epoch,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
