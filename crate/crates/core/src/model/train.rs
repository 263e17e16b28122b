//! SGD training with validation-F1 checkpointing.

use rand::seq::SliceRandom;

use super::arch::ArchId;
use super::metrics::{f1_score, Metrics};
use crate::data::{BalanceLevel, Sample, SourceId, TaskId};
use crate::diff::{stack, Network, Tensor};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

/// Batch size used for inference-only passes.
const EVAL_BATCH: usize = 64;

#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.01,
            momentum: 0.9,
        }
    }
}

/// The coordinates of one trained model in the experiment matrix.
#[derive(Clone, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct ModelProvenance {
    pub task: TaskId,
    pub source: SourceId,
    pub balance: BalanceLevel,
    pub arch: ArchId,
    pub seed: u64,
}

impl ModelProvenance {
    /// Stable identifier, e.g. `easy-A-balanced-S`.
    pub fn id(&self) -> String {
        format!("{}-{}-{}-{}", self.task, self.source, self.balance, self.arch)
    }
}

/// A trained classifier plus its training summary.
#[derive(Clone, Debug)]
pub struct ModelRecord {
    pub provenance: ModelProvenance,
    pub network: Network<f32>,
    pub val_f1: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub baseline: Option<Metrics>,
}

/// Trains `arch` on an (already rebalanced) training set, checkpointing the
/// parameters with the best validation F1 (positive class 1). Ties keep the
/// earliest epoch, so the returned parameters never score below the final
/// epoch.
pub fn train(
    arch: ArchId,
    train_set: &[Sample],
    validation: &[Sample],
    provenance: ModelProvenance,
    config: &TrainingConfig,
) -> Result<ModelRecord> {
    if train_set.is_empty() {
        return Err(Error::EmptyEval("training set is empty".to_string()));
    }
    if validation.is_empty() {
        return Err(Error::EmptyEval("validation set is empty".to_string()));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::Config(
            "epochs and batch size must be positive".to_string(),
        ));
    }
    let [c, h, w] = train_set[0].image.dims3("train")?;
    let mut net = Network::<f32>::init(
        [c, h, w],
        arch.layers(),
        derive_seed(provenance.seed, &["init", &provenance.id()]),
    )?;

    let mut velocity: Vec<Tensor<f32>> = net
        .params()
        .tensors()
        .map(|t| Tensor::zeros(t.shape()))
        .collect();
    let lr = config.learning_rate as f32;
    let mu = config.momentum as f32;

    let mut best_params = net.params().clone();
    let mut best_f1 = f64::NEG_INFINITY;
    let mut best_epoch = 0;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = rng_from(derive_seed(
            provenance.seed,
            &["epoch", &provenance.id(), &epoch.to_string()],
        ));
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let images: Vec<&Tensor<f32>> = chunk.iter().map(|&i| &train_set[i].image).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_set[i].label).collect();
            let batch = stack(&images)?;
            let (loss, grads) = net.loss_and_param_grads(batch, &labels)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    detail: format!("non-finite loss in model {}", provenance.id()),
                });
            }
            for ((param, v), g) in net
                .params_mut()
                .tensors_mut()
                .zip(velocity.iter_mut())
                .zip(&grads)
            {
                for ((pv, vv), &gv) in param
                    .data_mut()
                    .iter_mut()
                    .zip(v.data_mut().iter_mut())
                    .zip(g.data())
                {
                    *vv = mu * *vv + gv;
                    *pv -= lr * *vv;
                }
            }
        }
        if !net.params().all_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                detail: format!("non-finite parameters in model {}", provenance.id()),
            });
        }
        let val_metrics = evaluate(&net, validation, 1)?;
        if val_metrics.f1 > best_f1 {
            best_f1 = val_metrics.f1;
            best_params = net.params().clone();
            best_epoch = epoch;
        }
    }

    let network = Network::from_parameters([c, h, w], arch.layers(), best_params)?;
    Ok(ModelRecord {
        provenance,
        network,
        val_f1: best_f1,
        best_epoch,
        epochs_run: config.epochs,
        baseline: None,
    })
}

/// Predicted labels for samples, evaluated in fixed-size batches.
pub fn predict(net: &Network<f32>, samples: &[Sample]) -> Result<Vec<usize>> {
    if samples.is_empty() {
        return Err(Error::EmptyEval("predict over zero samples".to_string()));
    }
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_BATCH) {
        let images: Vec<&Tensor<f32>> = chunk.iter().map(|s| &s.image).collect();
        out.extend(net.predict_batch(&images)?);
    }
    Ok(out)
}

/// Metrics of a network on labeled samples.
pub fn evaluate(net: &Network<f32>, samples: &[Sample], positive_class: usize) -> Result<Metrics> {
    let predictions = predict(net, samples)?;
    let truth: Vec<usize> = samples.iter().map(|s| s.label).collect();
    f1_score(&predictions, &truth, positive_class)
}

/// Evaluates the record's network on its held-out test split and stores the
/// result on the record.
pub fn evaluate_baseline(record: &mut ModelRecord, test: &[Sample]) -> Result<Metrics> {
    let metrics = evaluate(&record.network, test, 1)?;
    record.baseline = Some(metrics);
    Ok(metrics)
}
