use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, Metrics};
use super::model::{decide, PreparedClaim, VgaModel};
use super::optim::Adam;
use crate::error::{Result, VgaError};
use crate::tensorcore::{derive_seed, Tape};

/// Patience-based stopping on a monitored loss; improvement means strictly lower.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    /// 1-based epoch of `best`, 0 before the first observation.
    pub best_epoch: usize,
    pub since_improvement: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            since_improvement: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> StopDecision {
        let improved = loss < self.best;
        if improved {
            self.best = loss;
            self.best_epoch = epoch;
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
        }
        StopDecision {
            improved,
            stop: self.since_improvement >= self.patience,
        }
    }
}

/// Everything that evolves during a training run besides the model itself.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub optimizer: Adam,
    pub stopping: EarlyStopping,
    pub rng: ChaCha8Rng,
    pub epoch: usize,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Score the training split after every epoch (one extra evaluation pass).
    pub track_train_accuracy: bool,
    /// Stop once training accuracy reaches this value; implies tracking.
    pub target_train_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean joint loss over the epoch's training passes (augmentation on).
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub train_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub reached_target: bool,
}

impl TrainReport {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }
}

/// Mean loss, predictions and metrics of a model on prepared claims, in evaluation mode.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub probabilities: Vec<f64>,
    pub predictions: Vec<u8>,
    pub metrics: Metrics,
}

pub fn evaluate(model: &VgaModel, claims: &[PreparedClaim]) -> Result<Evaluation> {
    if claims.is_empty() {
        return Err(VgaError::EmptyInput("nothing to evaluate".into()));
    }
    let mut loss = 0.0;
    let mut probabilities = Vec::with_capacity(claims.len());
    for c in claims {
        let (p, l) = model.evaluate_claim(c)?;
        loss += l;
        probabilities.push(p);
    }
    let predictions: Vec<u8> = probabilities.iter().map(|&p| decide(p)).collect();
    let labels: Vec<u8> = claims.iter().map(|c| c.label).collect();
    Ok(Evaluation {
        loss: loss / claims.len() as f64,
        metrics: compute_metrics(&predictions, &labels)?,
        probabilities,
        predictions,
    })
}

/// One optimizer step on a mini-batch; returns the summed per-claim losses.
pub fn train_batch(
    model: &mut VgaModel,
    state: &mut TrainState,
    batch: &[&PreparedClaim],
) -> Result<f64> {
    let mut total = 0.0;
    let scale = 1.0 / batch.len() as f64;
    for claim in batch {
        let mut tape = Tape::new();
        let out = model.forward(&mut tape, claim, Some(&mut state.rng))?;
        let l = tape.value(out.loss).item();
        if !l.is_finite() {
            return Err(VgaError::Numeric(format!(
                "non-finite loss at epoch {} on claim '{}'",
                state.epoch, claim.id
            )));
        }
        total += l;
        let scaled = tape.scale(out.loss, scale);
        tape.backward(scaled, &mut model.store)?;
    }
    state.optimizer.step(&mut model.store)?;
    Ok(total)
}

/// Trains with early stopping on validation loss and leaves the best-validation parameters in
/// `model`, rounded to `f32` so a saved archive scores identically.
pub fn train(
    model: &mut VgaModel,
    train_set: &[PreparedClaim],
    val_set: &[PreparedClaim],
    opts: &TrainOptions,
) -> Result<TrainReport> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(VgaError::EmptyInput(
            "training and validation splits must be nonempty".into(),
        ));
    }
    let cfg = model.config.clone();
    cfg.validate()?;
    let mut state = TrainState {
        optimizer: Adam::new(&model.store, cfg.lr),
        stopping: EarlyStopping::new(cfg.patience),
        rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "train")),
        epoch: 0,
    };
    let track = opts.track_train_accuracy || opts.target_train_accuracy.is_some();
    let mut best = model.store.snapshot();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopped_early = false;
    let mut reached_target = false;

    for epoch in 1..=cfg.max_epochs {
        state.epoch = epoch;
        order.shuffle(&mut state.rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PreparedClaim> = chunk.iter().map(|&i| &train_set[i]).collect();
            train_loss += train_batch(model, &mut state, &batch)?;
        }
        train_loss /= train_set.len() as f64;

        let val = evaluate(model, val_set)?;
        if !val.loss.is_finite() {
            return Err(VgaError::Numeric(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }
        let train_accuracy = if track {
            Some(evaluate(model, train_set)?.metrics.accuracy)
        } else {
            None
        };
        let decision = state.stopping.observe(epoch, val.loss);
        if decision.improved {
            best = model.store.snapshot();
        }
        debug!(
            "epoch {epoch}: train_loss={train_loss:.5} val_loss={:.5} val_acc={:.3}",
            val.loss, val.metrics.accuracy
        );
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: val.loss,
            val_accuracy: val.metrics.accuracy,
            train_accuracy,
        });
        if let (Some(target), Some(acc)) = (opts.target_train_accuracy, train_accuracy) {
            if acc >= target {
                reached_target = true;
                best = model.store.snapshot();
                break;
            }
        }
        if decision.stop {
            stopped_early = true;
            break;
        }
    }
    model.store.restore(&best)?;
    model.store.round_to_f32();
    info!(
        "trained {} epochs, best epoch {} (val loss {:.5})",
        history.len(),
        state.stopping.best_epoch,
        state.stopping.best
    );
    Ok(TrainReport {
        history,
        best_epoch: state.stopping.best_epoch,
        best_val_loss: state.stopping.best,
        stopped_early,
        reached_target,
    })
}
