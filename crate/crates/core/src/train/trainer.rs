use log::{debug, info};
use sonoseg_tensor::{Graph, Tensor};

use super::{
    clip_gradients, cosine_lr, AdamW, AdamWConfig, Batch, CheckpointBundle, Dataset,
    EarlyStopState, EpochRecord, Origin, Precision, TrainConfig, TrainError,
};
use crate::data::Split;
use crate::model::Model;
use crate::nn::{Ctx, ParamId, ParamStore};
use crate::objectives::{
    class_weights_from_counts, segmentation_loss, total_loss, weighted_ce_loss, ClassWeights,
    LossBreakdown, LossConfig,
};

/// Per-parameter tensors, as gradients or running-statistic updates.
type ParamTensors = Vec<(ParamId, Tensor)>;

/// Result of one optimiser update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport {
    pub loss: LossBreakdown,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// Optimiser state plus the fixed pieces of the objective.
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub loss: LossConfig,
    pub class_weights: Vec<f64>,
    pub optimizer: AdamW,
}

fn round_to_f32(t: &mut Tensor) {
    t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
}

/// Inverse-frequency weights over the classes present; an absent class
/// never appears as a target, so its weight is left at 1.
fn auto_weights(counts: [usize; 3]) -> Result<Vec<f64>, TrainError> {
    let present: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    if present.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let w = class_weights_from_counts(&present)?;
    let mut it = w.into_iter();
    Ok(counts
        .iter()
        .map(|&c| if c > 0 { it.next().unwrap() } else { 1.0 })
        .collect())
}

impl Trainer {
    /// `train_counts` feeds automatic class weights.
    pub fn new(
        config: &TrainConfig,
        loss: &LossConfig,
        train_counts: [usize; 3],
    ) -> Result<Self, TrainError> {
        config.validate()?;
        loss.validate()?;
        let class_weights = match &loss.class_weights {
            ClassWeights::Auto => auto_weights(train_counts)?,
            ClassWeights::Fixed(w) => w.clone(),
        };
        let optimizer = AdamW::new(AdamWConfig {
            weight_decay: config.weight_decay,
            ..AdamWConfig::default()
        });
        Ok(Trainer {
            config: config.clone(),
            loss: loss.clone(),
            class_weights,
            optimizer,
        })
    }

    /// Loss and parameter gradients of `batch` in training mode, without
    /// touching the model.
    pub fn loss_and_grads(
        &self,
        model: &Model,
        batch: &Batch,
    ) -> Result<(LossBreakdown, ParamTensors, ParamTensors), TrainError> {
        let mut images = batch.images.clone();
        if self.config.precision == Precision::Reduced {
            round_to_f32(&mut images);
        }
        let g = Graph::new();
        let ctx = Ctx::new(&g, &model.params, true);
        let out = model.net.forward(&ctx, g.constant(images))?;
        let seg = segmentation_loss(
            out.seg_probs,
            g.constant(batch.masks.clone()),
            self.loss.dice_smooth,
        )?;
        let cls = weighted_ce_loss(out.class_probs, &batch.labels, &self.class_weights)?;
        let (total, breakdown) = total_loss(seg, cls, &self.loss);
        if !breakdown.total.is_finite() {
            return Ok((breakdown, Vec::new(), Vec::new()));
        }
        let grads = g.backward(total);
        Ok((
            breakdown,
            ctx.param_grads(&grads),
            ctx.take_buffer_updates(),
        ))
    }

    /// Forward, backward, clip, AdamW update, running-statistics update.
    /// A non-finite loss leaves the model untouched.
    pub fn step(
        &mut self,
        model: &mut Model,
        batch: &Batch,
        lr: f64,
    ) -> Result<StepReport, TrainError> {
        let (loss, mut grads, buffers) = self.loss_and_grads(model, batch)?;
        if !loss.total.is_finite() {
            return Ok(StepReport {
                loss,
                grad_norm: f64::NAN,
            });
        }
        let grad_norm = clip_gradients(&mut grads, self.config.grad_clip_norm);
        self.optimizer.step(&mut model.params, &grads, lr);
        for (id, v) in buffers {
            model.params.set(id, v);
        }
        if self.config.precision == Precision::Reduced {
            let ids: Vec<_> = model.params.ids().collect();
            for id in ids {
                round_to_f32(model.params.get_mut(id));
            }
        }
        Ok(StepReport { loss, grad_norm })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch (the last epoch when there
    /// is no validation data).
    pub best: CheckpointBundle,
    pub last: CheckpointBundle,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Epoch loop: augmented shuffled batches, per-epoch cosine learning rate,
/// validation Dice for early stopping. On return `model` holds the best
/// parameters.
pub fn train(
    model: &mut Model,
    train: &Dataset,
    val: &Dataset,
    cfg: &TrainConfig,
    loss: &LossConfig,
) -> Result<TrainOutcome, TrainError> {
    if val.origin == Origin::Split(Split::Test) {
        return Err(TrainError::TestSplitAccess);
    }
    train_with(model, train, cfg, loss, |m, _| {
        if val.is_empty() {
            Ok(None)
        } else {
            Ok(Some(super::evaluate(m, val, cfg.batch_size)?.mean_dice))
        }
    })
}

/// [`train`] with a caller-supplied per-epoch validation metric; `None`
/// disables early stopping for that epoch.
pub fn train_with(
    model: &mut Model,
    train: &Dataset,
    cfg: &TrainConfig,
    loss: &LossConfig,
    mut validate: impl FnMut(&Model, usize) -> Result<Option<f64>, TrainError>,
) -> Result<TrainOutcome, TrainError> {
    if train.origin == Origin::Split(Split::Test) {
        return Err(TrainError::TestSplitAccess);
    }
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut trainer = Trainer::new(cfg, loss, train.class_counts())?;
    let mut stopper = EarlyStopState::new(cfg.patience);
    let mut history = Vec::new();
    let mut best_params: Option<ParamStore> = None;
    let mut stopped_early = false;

    for epoch in 0..cfg.epochs {
        let lr = cosine_lr(epoch, cfg.epochs, cfg.lr_init, cfg.lr_min);
        let order = train.epoch_order(cfg.seed, epoch as u64);
        let (mut sum, mut seg, mut cls, mut norm, mut batches) = (0.0, 0.0, 0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train.batch(chunk, Some((&cfg.augmentation, epoch as u64)));
            let report = trainer.step(model, &batch, lr)?;
            if !report.loss.total.is_finite() {
                let ids = chunk.iter().map(|&i| train.samples[i].id.clone()).collect();
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    ids,
                });
            }
            debug!("epoch {epoch} batch {b}: loss {:.5}", report.loss.total);
            sum += report.loss.total;
            seg += report.loss.seg;
            cls += report.loss.cls;
            norm += report.grad_norm;
            batches += 1;
        }
        let n = batches as f64;
        let val_dice = validate(model, epoch)?;
        let decision = val_dice.map(|d| stopper.update(epoch, d));
        let improved = decision.is_some_and(|d| d.improved);
        if improved {
            best_params = Some(model.params.clone());
        }
        info!(
            "epoch {epoch}: lr {lr:.3e} loss {:.5} val dice {:?}",
            sum / n,
            val_dice
        );
        history.push(EpochRecord {
            epoch,
            lr,
            train_loss: sum / n,
            train_seg_loss: seg / n,
            train_cls_loss: cls / n,
            grad_norm: norm / n,
            val_dice,
            improved,
        });
        if decision.is_some_and(|d| d.stop) {
            stopped_early = epoch + 1 < cfg.epochs;
            break;
        }
    }

    let last_epoch = history.last().map(|r| r.epoch);
    let last = CheckpointBundle::from_model(model, cfg, last_epoch, history.clone());
    let best_epoch = stopper.best_epoch.or(last_epoch);
    if let Some(p) = best_params {
        model.params = p;
    }
    let best = CheckpointBundle::from_model(model, cfg, best_epoch, history.clone());
    Ok(TrainOutcome {
        best,
        last,
        history,
        best_epoch,
        stopped_early,
    })
}
