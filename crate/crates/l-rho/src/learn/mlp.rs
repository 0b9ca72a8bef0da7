//! Hand-rolled MLP classifier: per-op and per-machine embeddings, global
//! mean pooling, fusion, sigmoid output. Explicit backprop; generic over
//! the float type via num-traits.

use std::collections::BTreeMap;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::core::{FjspInstance, OpId};
use crate::gen::stream_rng;
use crate::learn::{extract_features, FeatureVariant, LearnError, StateRecord};
use crate::rho::RhoState;
use crate::Scalar;

pub const D_HIDDEN: usize = 64;

/// Dense layer, weights stored row-major as w[out][in].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear<F> {
    pub w: Vec<Vec<F>>,
    pub b: Vec<F>,
}

impl<F: Float> Linear<F> {
    fn random<R: Rng>(rng: &mut R, d_in: usize, d_out: usize) -> Self {
        // Xavier-uniform initialization.
        let a = (6.0 / (d_in + d_out) as f64).sqrt();
        let w = (0..d_out)
            .map(|_| (0..d_in).map(|_| F::from(rng.gen_range(-a..=a)).unwrap()).collect())
            .collect();
        Linear { w, b: vec![F::zero(); d_out] }
    }

    fn zeros_like(&self) -> Self {
        Linear {
            w: self.w.iter().map(|row| vec![F::zero(); row.len()]).collect(),
            b: vec![F::zero(); self.b.len()],
        }
    }

    fn forward(&self, x: &[F]) -> Vec<F> {
        self.w
            .iter()
            .zip(&self.b)
            .map(|(row, &b)| row.iter().zip(x).fold(b, |acc, (&w, &xi)| acc + w * xi))
            .collect()
    }
}

fn relu<F: Float>(v: &[F]) -> Vec<F> {
    v.iter().map(|&x| x.max(F::zero())).collect()
}

fn sigmoid<F: Float>(z: F) -> F {
    F::one() / (F::one() + (-z).exp())
}

/// Per-feature mean/std fitted on the training set; std floored before
/// division so constant columns stay finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer<F> {
    pub op_mean: Vec<F>,
    pub op_std: Vec<F>,
    pub machine_mean: Vec<F>,
    pub machine_std: Vec<F>,
}

impl<F: Float> Normalizer<F> {
    pub fn identity(d_o: usize, d_m: usize) -> Self {
        Normalizer {
            op_mean: vec![F::zero(); d_o],
            op_std: vec![F::one(); d_o],
            machine_mean: vec![F::zero(); d_m],
            machine_std: vec![F::one(); d_m],
        }
    }

    pub fn fit(records: &[StateRecord]) -> Result<Self, LearnError> {
        let first = records.first().ok_or(LearnError::EmptyDataset)?;
        let (d_o, d_m) = first.variant.dims();
        let floor = F::from(1e-6).unwrap();
        let column_stats = |rows: Vec<&Vec<Scalar>>, d: usize| -> (Vec<F>, Vec<F>) {
            let n = F::from(rows.len().max(1)).unwrap();
            let mut mean = vec![F::zero(); d];
            let mut std = vec![F::zero(); d];
            for row in &rows {
                for (c, &v) in row.iter().enumerate() {
                    mean[c] = mean[c] + F::from(v).unwrap();
                }
            }
            for m in mean.iter_mut() {
                *m = *m / n;
            }
            for row in &rows {
                for (c, &v) in row.iter().enumerate() {
                    let d = F::from(v).unwrap() - mean[c];
                    std[c] = std[c] + d * d;
                }
            }
            for s in std.iter_mut() {
                *s = (*s / n).sqrt().max(floor);
            }
            (mean, std)
        };
        let op_rows: Vec<&Vec<Scalar>> =
            records.iter().flat_map(|r| r.op_features.iter()).collect();
        let mach_rows: Vec<&Vec<Scalar>> =
            records.iter().flat_map(|r| r.machine_features.iter()).collect();
        let (op_mean, op_std) = column_stats(op_rows, d_o);
        let (machine_mean, machine_std) = column_stats(mach_rows, d_m);
        Ok(Normalizer { op_mean, op_std, machine_mean, machine_std })
    }

    pub fn normalize_op_row(&self, row: &[Scalar]) -> Vec<F> {
        row.iter()
            .enumerate()
            .map(|(c, &v)| (F::from(v).unwrap() - self.op_mean[c]) / self.op_std[c])
            .collect()
    }

    pub fn normalize_machine_row(&self, row: &[Scalar]) -> Vec<F> {
        row.iter()
            .enumerate()
            .map(|(c, &v)| (F::from(v).unwrap() - self.machine_mean[c]) / self.machine_std[c])
            .collect()
    }

    pub fn denormalize_op_row(&self, row: &[F]) -> Vec<F> {
        row.iter()
            .enumerate()
            .map(|(c, &v)| v * self.op_std[c] + self.op_mean[c])
            .collect()
    }
}

/// Trainable parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params<F> {
    /// d_o -> d_hidden -> d_hidden, ReLU.
    pub op_embed: Vec<Linear<F>>,
    /// d_m -> d_hidden -> d_hidden, ReLU.
    pub mach_embed: Vec<Linear<F>>,
    /// 3·d_hidden -> d_hidden, ReLU.
    pub fusion: Linear<F>,
    /// d_hidden -> 1, sigmoid.
    pub output: Linear<F>,
}

impl<F: Float> Params<F> {
    pub fn zeros_like(&self) -> Self {
        Params {
            op_embed: self.op_embed.iter().map(Linear::zeros_like).collect(),
            mach_embed: self.mach_embed.iter().map(Linear::zeros_like).collect(),
            fusion: self.fusion.zeros_like(),
            output: self.output.zeros_like(),
        }
    }

    pub fn linears(&self) -> Vec<&Linear<F>> {
        self.op_embed
            .iter()
            .chain(self.mach_embed.iter())
            .chain([&self.fusion, &self.output])
            .collect()
    }

    pub fn linears_mut(&mut self) -> Vec<&mut Linear<F>> {
        self.op_embed
            .iter_mut()
            .chain(self.mach_embed.iter_mut())
            .chain([&mut self.fusion, &mut self.output])
            .collect()
    }
}

pub type Gradients<F> = Params<F>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<F> {
    pub variant: FeatureVariant,
    pub d_hidden: usize,
    pub params: Params<F>,
    pub normalizer: Normalizer<F>,
}

/// The concrete model type the pipeline trains and ships.
pub type MlpModel = Mlp<Scalar>;

impl<F: Float> Mlp<F> {
    pub fn new(variant: FeatureVariant, seed: u64) -> Self {
        Self::with_hidden(variant, D_HIDDEN, seed)
    }

    pub fn with_hidden(variant: FeatureVariant, d_hidden: usize, seed: u64) -> Self {
        let (d_o, d_m) = variant.dims();
        let mut rng = stream_rng(seed, 0x6d6c7030); // "mlp0"
        let params = Params {
            op_embed: vec![
                Linear::random(&mut rng, d_o, d_hidden),
                Linear::random(&mut rng, d_hidden, d_hidden),
            ],
            mach_embed: vec![
                Linear::random(&mut rng, d_m, d_hidden),
                Linear::random(&mut rng, d_hidden, d_hidden),
            ],
            fusion: Linear::random(&mut rng, 3 * d_hidden, d_hidden),
            output: Linear::random(&mut rng, d_hidden, 1),
        };
        Mlp { variant, d_hidden, params, normalizer: Normalizer::identity(d_o, d_m) }
    }

    fn check_record(&self, record: &StateRecord) -> Result<(), LearnError> {
        if record.variant != self.variant {
            return Err(LearnError::VariantMismatch(record.variant.label().into()));
        }
        let (d_o, d_m) = self.variant.dims();
        if record.op_features.iter().any(|f| f.len() != d_o)
            || record.machine_features.iter().any(|f| f.len() != d_m)
        {
            return Err(LearnError::Shape("feature row width".into()));
        }
        let n_mach = record.machine_features.len();
        for (row, pm) in record.prev_machine_index.iter().enumerate() {
            if record.overlap_mask[row] && pm.map_or(true, |m| m >= n_mach) {
                return Err(LearnError::Shape(format!(
                    "overlap row {row} lacks a valid prev machine index"
                )));
            }
        }
        Ok(())
    }
}

/// Intermediate activations kept for backprop.
struct Cache<F> {
    op_x: Vec<Vec<F>>,
    op_pre1: Vec<Vec<F>>,
    op_h1: Vec<Vec<F>>,
    op_pre2: Vec<Vec<F>>,
    op_h2: Vec<Vec<F>>,
    mach_x: Vec<Vec<F>>,
    mach_pre1: Vec<Vec<F>>,
    mach_h1: Vec<Vec<F>>,
    mach_pre2: Vec<Vec<F>>,
    mach_h2: Vec<Vec<F>>,
    global: Vec<F>,
    /// (plan row, fused input, fusion pre-activation, fusion hidden, p).
    overlaps: Vec<(usize, Vec<F>, Vec<F>, Vec<F>, F)>,
}

fn forward_cached<F: Float>(model: &Mlp<F>, record: &StateRecord) -> Result<Cache<F>, LearnError> {
    model.check_record(record)?;
    let embed = |layers: &[Linear<F>], x: &[F]| {
        let pre1 = layers[0].forward(x);
        let h1 = relu(&pre1);
        let pre2 = layers[1].forward(&h1);
        let h2 = relu(&pre2);
        (pre1, h1, pre2, h2)
    };
    let mut cache = Cache {
        op_x: Vec::new(),
        op_pre1: Vec::new(),
        op_h1: Vec::new(),
        op_pre2: Vec::new(),
        op_h2: Vec::new(),
        mach_x: Vec::new(),
        mach_pre1: Vec::new(),
        mach_h1: Vec::new(),
        mach_pre2: Vec::new(),
        mach_h2: Vec::new(),
        global: vec![F::zero(); model.d_hidden],
        overlaps: Vec::new(),
    };
    for row in &record.op_features {
        let x = model.normalizer.normalize_op_row(row);
        let (pre1, h1, pre2, h2) = embed(&model.params.op_embed, &x);
        cache.op_x.push(x);
        cache.op_pre1.push(pre1);
        cache.op_h1.push(h1);
        cache.op_pre2.push(pre2);
        cache.op_h2.push(h2);
    }
    for row in &record.machine_features {
        let x = model.normalizer.normalize_machine_row(row);
        let (pre1, h1, pre2, h2) = embed(&model.params.mach_embed, &x);
        cache.mach_x.push(x);
        cache.mach_pre1.push(pre1);
        cache.mach_h1.push(h1);
        cache.mach_pre2.push(pre2);
        cache.mach_h2.push(h2);
    }
    // Global context: mean pool over every op and machine embedding.
    let n_emb = F::from(cache.op_h2.len() + cache.mach_h2.len()).unwrap();
    for h in cache.op_h2.iter().chain(cache.mach_h2.iter()) {
        for (g, &v) in cache.global.iter_mut().zip(h) {
            *g = *g + v;
        }
    }
    for g in cache.global.iter_mut() {
        *g = *g / n_emb;
    }
    for row in record.overlap_rows() {
        let pm = record.prev_machine_index[row].unwrap();
        let mut x: Vec<F> = Vec::with_capacity(3 * model.d_hidden);
        x.extend_from_slice(&cache.op_h2[row]);
        x.extend_from_slice(&cache.mach_h2[pm]);
        x.extend_from_slice(&cache.global);
        let pre = model.params.fusion.forward(&x);
        let h = relu(&pre);
        let z = model.params.output.forward(&h)[0];
        let p = sigmoid(z);
        cache.overlaps.push((row, x, pre, h, p));
    }
    Ok(cache)
}

/// Persistence probabilities for the record's overlap ops, in plan order.
pub fn forward<F: Float>(model: &Mlp<F>, record: &StateRecord) -> Result<Vec<F>, LearnError> {
    Ok(forward_cached(model, record)?.overlaps.iter().map(|o| o.4).collect())
}

/// Convenience entry for the learned fix strategy: probabilities keyed by
/// operation id.
pub fn predict(
    model: &MlpModel,
    instance: &FjspInstance,
    state: &RhoState,
) -> Result<BTreeMap<OpId, Scalar>, LearnError> {
    let record = extract_features(instance, state, model.variant)?;
    let probs = forward(model, &record)?;
    let rows = record.overlap_rows();
    Ok(rows
        .iter()
        .zip(probs)
        .map(|(&row, p)| (state.plan_ops[row], p))
        .collect())
}

/// Weighted binary cross-entropy over all overlap ops of the batch. By
/// default w_pos scales the positive term only; `bracket_wide` applies it
/// to the whole per-op loss instead. Probabilities are clamped to
/// [1e-7, 1-1e-7] before the logs.
pub fn loss_and_grad<F: Float>(
    model: &Mlp<F>,
    batch: &[&StateRecord],
    w_pos: F,
    bracket_wide: bool,
) -> Result<(F, Gradients<F>), LearnError> {
    let mut grads = model.params.zeros_like();
    let total: usize = batch
        .iter()
        .map(|r| r.labels.as_ref().map_or(0, |l| l.len()))
        .sum();
    if batch.iter().any(|r| r.labels.is_none()) {
        return Err(LearnError::MissingLabels);
    }
    if total == 0 {
        return Ok((F::zero(), grads));
    }
    let scale = F::one() / F::from(total).unwrap();
    let eps = F::from(1e-7).unwrap();
    let mut loss = F::zero();

    for record in batch {
        let cache = forward_cached(model, record)?;
        let labels = record.labels.as_ref().unwrap();
        if labels.len() != cache.overlaps.len() {
            return Err(LearnError::Shape("label count vs overlap count".into()));
        }
        let n_ops = cache.op_h2.len();
        let n_mach = cache.mach_h2.len();
        let n_emb = F::from(n_ops + n_mach).unwrap();
        let mut g_op_h2 = vec![vec![F::zero(); model.d_hidden]; n_ops];
        let mut g_mach_h2 = vec![vec![F::zero(); model.d_hidden]; n_mach];
        let mut g_global = vec![F::zero(); model.d_hidden];

        for ((row, x, pre, h, p), &label) in cache.overlaps.iter().zip(labels) {
            let y = if label { F::one() } else { F::zero() };
            let p_cl = p.max(eps).min(F::one() - eps);
            let term = if bracket_wide {
                -w_pos * (y * p_cl.ln() + (F::one() - y) * (F::one() - p_cl).ln())
            } else {
                -(w_pos * y * p_cl.ln() + (F::one() - y) * (F::one() - p_cl).ln())
            };
            loss = loss + term * scale;
            // d(loss)/d(logit), computed from the unclamped probability.
            let g_z = if bracket_wide {
                w_pos * (*p - y) * scale
            } else {
                (-w_pos * y * (F::one() - *p) + (F::one() - y) * *p) * scale
            };
            // Output layer.
            for (gw, &hv) in grads.output.w[0].iter_mut().zip(h) {
                *gw = *gw + g_z * hv;
            }
            grads.output.b[0] = grads.output.b[0] + g_z;
            // Fusion layer.
            let mut g_pre = vec![F::zero(); model.d_hidden];
            for (i, gp) in g_pre.iter_mut().enumerate() {
                if pre[i] > F::zero() {
                    *gp = g_z * model.params.output.w[0][i];
                }
            }
            for (i, &gp) in g_pre.iter().enumerate() {
                for (gw, &xv) in grads.fusion.w[i].iter_mut().zip(x) {
                    *gw = *gw + gp * xv;
                }
                grads.fusion.b[i] = grads.fusion.b[i] + gp;
            }
            // Input gradient of the fusion layer, split into its three
            // concatenated sources.
            let mut g_x = vec![F::zero(); 3 * model.d_hidden];
            for (i, &gp) in g_pre.iter().enumerate() {
                for (gx, &w) in g_x.iter_mut().zip(&model.params.fusion.w[i]) {
                    *gx = *gx + gp * w;
                }
            }
            let pm = record.prev_machine_index[*row].unwrap();
            for i in 0..model.d_hidden {
                g_op_h2[*row][i] = g_op_h2[*row][i] + g_x[i];
                g_mach_h2[pm][i] = g_mach_h2[pm][i] + g_x[model.d_hidden + i];
                g_global[i] = g_global[i] + g_x[2 * model.d_hidden + i];
            }
        }
        // The pooled context feeds back into every embedding equally.
        for gh in g_op_h2.iter_mut().chain(g_mach_h2.iter_mut()) {
            for (g, &gg) in gh.iter_mut().zip(&g_global) {
                *g = *g + gg / n_emb;
            }
        }
        // Backprop through the two embedding stacks.
        backprop_embed(
            &model.params.op_embed,
            &mut grads.op_embed,
            &cache.op_x,
            &cache.op_pre1,
            &cache.op_h1,
            &cache.op_pre2,
            &g_op_h2,
        );
        backprop_embed(
            &model.params.mach_embed,
            &mut grads.mach_embed,
            &cache.mach_x,
            &cache.mach_pre1,
            &cache.mach_h1,
            &cache.mach_pre2,
            &g_mach_h2,
        );
    }
    Ok((loss, grads))
}

fn backprop_embed<F: Float>(
    layers: &[Linear<F>],
    grads: &mut [Linear<F>],
    xs: &[Vec<F>],
    pre1s: &[Vec<F>],
    h1s: &[Vec<F>],
    pre2s: &[Vec<F>],
    g_h2s: &[Vec<F>],
) {
    for (((x, pre1), (h1, pre2)), g_h2) in
        xs.iter().zip(pre1s).zip(h1s.iter().zip(pre2s)).zip(g_h2s)
    {
        let d = g_h2.len();
        let mut g_pre2 = vec![F::zero(); d];
        for i in 0..d {
            if pre2[i] > F::zero() {
                g_pre2[i] = g_h2[i];
            }
        }
        let mut g_h1 = vec![F::zero(); h1.len()];
        for (i, &gp) in g_pre2.iter().enumerate() {
            for (gw, &hv) in grads[1].w[i].iter_mut().zip(h1) {
                *gw = *gw + gp * hv;
            }
            grads[1].b[i] = grads[1].b[i] + gp;
            for (gh, &w) in g_h1.iter_mut().zip(&layers[1].w[i]) {
                *gh = *gh + gp * w;
            }
        }
        for (i, gp) in g_h1.iter().enumerate() {
            if pre1[i] <= F::zero() {
                continue;
            }
            for (gw, &xv) in grads[0].w[i].iter_mut().zip(x) {
                *gw = *gw + *gp * xv;
            }
            grads[0].b[i] = grads[0].b[i] + *gp;
        }
    }
}
