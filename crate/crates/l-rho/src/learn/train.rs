//! Mini-batch Adam training with a held-out validation split and
//! best-checkpoint selection.

use num_traits::Float;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::gen::stream_rng;
use crate::learn::mlp::{loss_and_grad, Gradients, Mlp, Normalizer};
use crate::learn::{LearnError, StateRecord};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: Scalar,
    pub batch_size: usize,
    /// Weight on the positive-label loss term.
    pub w_pos: Scalar,
    /// Apply w_pos to the whole per-op loss instead of the positive term.
    pub bracket_wide_w_pos: bool,
    pub steps: usize,
    /// Steps between validation evaluations (also checkpoints at the end).
    pub eval_every: usize,
    /// Width of every hidden layer.
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            w_pos: 0.5,
            bracket_wide_w_pos: false,
            steps: 500_000,
            eval_every: 500,
            hidden: crate::learn::mlp::D_HIDDEN,
            seed: 0,
        }
    }
}

struct Adam<F> {
    m: Gradients<F>,
    v: Gradients<F>,
    t: u64,
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
}

impl<F: Float> Adam<F> {
    fn new(template: &Gradients<F>, lr: F) -> Self {
        Adam {
            m: template.zeros_like(),
            v: template.zeros_like(),
            t: 0,
            lr,
            beta1: F::from(0.9).unwrap(),
            beta2: F::from(0.999).unwrap(),
            eps: F::from(1e-8).unwrap(),
        }
    }

    fn step(&mut self, params: &mut Gradients<F>, grads: &Gradients<F>) {
        self.t += 1;
        let bc1 = F::one() - self.beta1.powi(self.t as i32);
        let bc2 = F::one() - self.beta2.powi(self.t as i32);
        let update = |p: &mut F, g: F, m: &mut F, v: &mut F| {
            *m = self.beta1 * *m + (F::one() - self.beta1) * g;
            *v = self.beta2 * *v + (F::one() - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p = *p - self.lr * m_hat / (v_hat.sqrt() + self.eps);
        };
        let g_lin = grads.linears();
        let mut m_lin = self.m.linears_mut();
        let mut v_lin = self.v.linears_mut();
        for (li, p_l) in params.linears_mut().into_iter().enumerate() {
            for (r, row) in p_l.w.iter_mut().enumerate() {
                for (c, p) in row.iter_mut().enumerate() {
                    update(p, g_lin[li].w[r][c], &mut m_lin[li].w[r][c], &mut v_lin[li].w[r][c]);
                }
            }
            for (r, b) in p_l.b.iter_mut().enumerate() {
                update(b, g_lin[li].b[r], &mut m_lin[li].b[r], &mut v_lin[li].b[r]);
            }
        }
    }
}

/// Split: records from the last 5% of instance ids (at least one) are held
/// out for validation; the rest train.
fn split_dataset(dataset: &[StateRecord]) -> (Vec<&StateRecord>, Vec<&StateRecord>) {
    let mut ids: Vec<u64> = dataset.iter().map(|r| r.instance_id).collect();
    ids.sort();
    ids.dedup();
    let n_val = ((ids.len() as f64 * 0.05).ceil() as usize).clamp(1, ids.len());
    let val_ids: std::collections::BTreeSet<u64> =
        ids[ids.len() - n_val..].iter().copied().collect();
    let mut train = Vec::new();
    let mut val = Vec::new();
    for r in dataset {
        if val_ids.contains(&r.instance_id) {
            val.push(r);
        } else {
            train.push(r);
        }
    }
    // Tiny datasets may consist of a single instance; fall back to
    // training on everything and validating on the same records.
    if train.is_empty() {
        train = val.clone();
    }
    (train, val)
}

/// Validation metrics captured at one evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub val_loss: Scalar,
    pub accuracy: Scalar,
    /// True-positive rate (equals recall); absent without positives.
    pub tpr: Option<Scalar>,
    /// True-negative rate; absent without negatives.
    pub tnr: Option<Scalar>,
    pub precision: Option<Scalar>,
    pub recall: Option<Scalar>,
}

fn val_metrics(
    model: &Mlp<Scalar>,
    val_set: &[&StateRecord],
    step: usize,
    loss: Scalar,
) -> Result<TrainLogRow, LearnError> {
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for rec in val_set {
        let probs = crate::learn::mlp::forward(model, rec)?;
        for (p, &y) in probs.iter().zip(rec.labels.as_ref().unwrap()) {
            match (*p >= 0.5, y) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as Scalar / den as Scalar);
    let total = tp + fp + fn_ + tn;
    Ok(TrainLogRow {
        step,
        val_loss: loss,
        accuracy: if total > 0 { (tp + tn) as Scalar / total as Scalar } else { 1.0 },
        tpr: ratio(tp, tp + fn_),
        tnr: ratio(tn, tn + fp),
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
    })
}

/// Train an MLP on labeled records. The normalizer is fitted on the
/// training split; the returned model is the best-validation-loss
/// checkpoint. Deterministic under the config seed.
pub fn train(dataset: &[StateRecord], config: &TrainConfig) -> Result<Mlp<Scalar>, LearnError> {
    train_logged(dataset, config).map(|(model, _)| model)
}

/// Like [`train`], additionally returning the validation metrics recorded
/// at every evaluation point.
pub fn train_logged(
    dataset: &[StateRecord],
    config: &TrainConfig,
) -> Result<(Mlp<Scalar>, Vec<TrainLogRow>), LearnError> {
    if dataset.is_empty() {
        return Err(LearnError::EmptyDataset);
    }
    let variant = dataset[0].variant;
    if dataset.iter().any(|r| r.variant != variant) {
        return Err(LearnError::MixedVariants);
    }
    if dataset.iter().any(|r| r.labels.is_none()) {
        return Err(LearnError::MissingLabels);
    }
    let (train_set, val_set) = split_dataset(dataset);
    let train_owned: Vec<StateRecord> = train_set.iter().map(|&r| r.clone()).collect();

    let mut model = Mlp::with_hidden(variant, config.hidden, config.seed);
    model.normalizer = Normalizer::fit(&train_owned)?;
    if config.steps == 0 {
        return Ok((model, Vec::new()));
    }

    let mut adam = Adam::new(&model.params, config.learning_rate);
    let mut rng = stream_rng(config.seed, 0x7472616e); // "tran"
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len(); // force an initial shuffle
    let mut best: Option<(Scalar, Mlp<Scalar>)> = None;
    let mut log = Vec::new();
    let val_loss = |m: &Mlp<Scalar>| -> Result<Scalar, LearnError> {
        let batch: Vec<&StateRecord> = val_set.clone();
        let (loss, _) = loss_and_grad(m, &batch, config.w_pos, config.bracket_wide_w_pos)?;
        Ok(loss)
    };

    for step in 1..=config.steps {
        let mut batch: Vec<&StateRecord> = Vec::with_capacity(config.batch_size);
        for _ in 0..config.batch_size.min(train_set.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(train_set[order[cursor]]);
            cursor += 1;
        }
        let (_, grads) =
            loss_and_grad(&model, &batch, config.w_pos, config.bracket_wide_w_pos)?;
        adam.step(&mut model.params, &grads);

        if step % config.eval_every.max(1) == 0 || step == config.steps {
            let loss = val_loss(&model)?;
            log.push(val_metrics(&model, &val_set, step, loss)?);
            if best.as_ref().map_or(true, |(b, _)| loss < *b) {
                best = Some((loss, model.clone()));
            }
        }
    }
    Ok((best.expect("at least one evaluation ran").1, log))
}
