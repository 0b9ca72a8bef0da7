//! Straight-line re-implementation of the classifier forward pass, checked
//! against the library's cached implementation to 1e-9.

use l_rho::gen::stream_rng;
use l_rho::learn::{forward, FeatureVariant, Linear, Mlp, StateRecord};
use l_rho::Scalar;
use rand::Rng;

fn matvec(l: &Linear<Scalar>, x: &[Scalar]) -> Vec<Scalar> {
    l.w.iter()
        .zip(&l.b)
        .map(|(row, &b)| row.iter().zip(x).map(|(&w, &v)| w * v).sum::<Scalar>() + b)
        .collect()
}

fn relu(mut x: Vec<Scalar>) -> Vec<Scalar> {
    for v in &mut x {
        *v = v.max(0.0);
    }
    x
}

/// Plain nested-loop forward pass: normalize, embed every op and machine
/// through two ReLU layers, mean-pool everything into a global vector, and
/// for each overlap op fuse [op ‖ previous machine ‖ global] to a sigmoid.
fn oracle_forward(model: &Mlp<Scalar>, rec: &StateRecord) -> Vec<Scalar> {
    let norm = &model.normalizer;
    let embed = |layers: &[Linear<Scalar>], x: Vec<Scalar>| -> Vec<Scalar> {
        let mut h = x;
        for l in layers {
            h = relu(matvec(l, &h));
        }
        h
    };
    let op_embs: Vec<Vec<Scalar>> = rec
        .op_features
        .iter()
        .map(|row| {
            let x: Vec<Scalar> = row
                .iter()
                .enumerate()
                .map(|(c, &v)| (v - norm.op_mean[c]) / norm.op_std[c])
                .collect();
            embed(&model.params.op_embed, x)
        })
        .collect();
    let mach_embs: Vec<Vec<Scalar>> = rec
        .machine_features
        .iter()
        .map(|row| {
            let x: Vec<Scalar> = row
                .iter()
                .enumerate()
                .map(|(c, &v)| (v - norm.machine_mean[c]) / norm.machine_std[c])
                .collect();
            embed(&model.params.mach_embed, x)
        })
        .collect();
    let n_emb = op_embs.len() + mach_embs.len();
    let mut global = vec![0.0; model.d_hidden];
    for e in op_embs.iter().chain(&mach_embs) {
        for (g, &v) in global.iter_mut().zip(e) {
            *g += v / n_emb as Scalar;
        }
    }
    let mut out = Vec::new();
    for row in (0..rec.op_features.len()).filter(|&i| rec.overlap_mask[i]) {
        let prev = rec.prev_machine_index[row].expect("overlap op has a previous machine");
        let mut fused: Vec<Scalar> = Vec::with_capacity(3 * model.d_hidden);
        fused.extend(&op_embs[row]);
        fused.extend(&mach_embs[prev]);
        fused.extend(&global);
        let h = relu(matvec(&model.params.fusion, &fused));
        let z = matvec(&model.params.output, &h)[0];
        out.push(1.0 / (1.0 + (-z).exp()));
    }
    out
}

fn synthetic_record(seed: u64, n_ops: usize, n_mach: usize) -> StateRecord {
    let variant = FeatureVariant::StartDelay;
    let (d_o, d_m) = variant.dims();
    let mut rng = stream_rng(seed, 0x6f72636c);
    StateRecord {
        variant,
        instance_id: seed,
        iteration: 2,
        op_features: (0..n_ops)
            .map(|_| (0..d_o).map(|_| rng.gen_range(-2.0..8.0)).collect())
            .collect(),
        machine_features: (0..n_mach)
            .map(|_| (0..d_m).map(|_| rng.gen_range(-2.0..8.0)).collect())
            .collect(),
        overlap_mask: (0..n_ops).map(|i| i % 3 != 2).collect(),
        prev_machine_index: (0..n_ops)
            .map(|i| (i % 3 != 2).then(|| rng.gen_range(0..n_mach)))
            .collect(),
        labels: None,
    }
}

#[test]
fn forward_matches_straight_line_oracle() {
    for seed in 0..8u64 {
        let rec = synthetic_record(seed, 7, 4);
        let mut model = Mlp::with_hidden(FeatureVariant::StartDelay, 12, seed);
        // Non-identity normalizer to exercise that path too.
        for (c, m) in model.normalizer.op_mean.iter_mut().enumerate() {
            *m = 0.1 * c as Scalar;
        }
        for s in model.normalizer.op_std.iter_mut() {
            *s = 1.7;
        }
        let got = forward(&model, &rec).unwrap();
        let want = oracle_forward(&model, &rec);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-9, "seed {seed}: {g} vs {w}");
        }
    }
}
