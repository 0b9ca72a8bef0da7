//! Closed-form FP/FN error analysis of fix-set heuristics under a linearly
//! decaying persistence probability, Monte-Carlo validation, empirical
//! persistence estimation with linear fitting, and confusion statistics.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::OpId;
use crate::gen::stream_rng;
use crate::learn::StateRecord;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
    #[error("undefined rate: degenerate denominator (b - m/2 and 1 - b + m/2 must be positive)")]
    UndefinedRate,
    #[error("records disagree on overlap width: expected {0}, found {1}")]
    WidthMismatch(usize, usize),
}

/// Linearly decreasing persistence probability over overlap positions:
/// p_fix(i) = b - m·i/W for i in 1..=W.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDecay {
    pub b: Scalar,
    pub m: Scalar,
    pub w: usize,
}

impl LinearDecay {
    pub fn pfix(&self, i: usize) -> Scalar {
        self.b - self.m * i as Scalar / self.w as Scalar
    }

    /// Expected number of persisting (oracle-fixable) overlap ops:
    /// (b - m/2)·W - m/2.
    pub fn expected_fix(&self) -> Scalar {
        (self.b - self.m / 2.0) * self.w as Scalar - self.m / 2.0
    }

    pub fn clamped(&self) -> LinearDecay {
        LinearDecay { b: self.b.clamp(0.0, 1.0), m: self.m.clamp(0.0, 1.0), w: self.w }
    }
}

/// Fix-set selection channel analyzed in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AnalysisMethod {
    Random { sigma: Scalar },
    First { sigma: Scalar },
    /// Flip channel with false-positive rate alpha and false-negative rate
    /// beta relative to the oracle set.
    LRho { alpha: Scalar, beta: Scalar },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPair {
    pub expected_fp: Scalar,
    pub expected_fn: Scalar,
    /// alpha = fp / (W - E[n_fix]); absent when the denominator is not
    /// positive.
    pub fpr: Option<Scalar>,
    /// beta = fn / E[n_fix]; absent when the denominator is not positive.
    pub fnr: Option<Scalar>,
}

fn error_pair(fp: Scalar, fn_: Scalar, decay: &LinearDecay) -> ErrorPair {
    let e = decay.expected_fix();
    let w = decay.w as Scalar;
    ErrorPair {
        expected_fp: fp,
        expected_fn: fn_,
        fpr: (w - e > 0.0).then(|| fp / (w - e)),
        fnr: (e > 0.0).then(|| fn_ / e),
    }
}

/// Exact expected FP/FN errors under the linear decay (the forms that keep
/// the m/2 tail terms).
pub fn closed_form_errors(method: AnalysisMethod, decay: &LinearDecay) -> ErrorPair {
    let w = decay.w as Scalar;
    let e = decay.expected_fix();
    let (b, m) = (decay.b, decay.m);
    let (fp, fn_) = match method {
        AnalysisMethod::Random { sigma } => (sigma * (w - e), (1.0 - sigma) * e),
        AnalysisMethod::First { sigma } => (
            sigma * ((1.0 - b + (m / 2.0) * sigma) * w + m / 2.0),
            (1.0 - sigma) * ((b - m / 2.0 - (m / 2.0) * sigma) * w - m / 2.0),
        ),
        AnalysisMethod::LRho { alpha, beta } => (alpha * (w - e), beta * e),
    };
    error_pair(fp, fn_, decay)
}

/// The main-text simplified forms, which drop the m/2 tail terms.
pub fn closed_form_errors_approx(method: AnalysisMethod, decay: &LinearDecay) -> ErrorPair {
    let w = decay.w as Scalar;
    let (b, m) = (decay.b, decay.m);
    let oracle = (b - m / 2.0) * w;
    let complement = (1.0 - b + m / 2.0) * w;
    let (fp, fn_) = match method {
        AnalysisMethod::Random { sigma } => (sigma * complement, (1.0 - sigma) * oracle),
        AnalysisMethod::First { sigma } => (
            sigma * (1.0 - b + (m / 2.0) * sigma) * w,
            (1.0 - sigma) * (b - m / 2.0 - (m / 2.0) * sigma) * w,
        ),
        AnalysisMethod::LRho { alpha, beta } => (alpha * complement, beta * oracle),
    };
    error_pair(fp, fn_, decay)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirstRandomRates {
    /// (alpha_R, beta_R) = (sigma, 1 - sigma).
    pub random: (Scalar, Scalar),
    /// (alpha_F, beta_F) from the simplified forms.
    pub first: (Scalar, Scalar),
}

/// Simplified FP/FN rates (the forms ignoring the m/2 tail in E[n_fix]).
pub fn first_random_rates(
    decay: &LinearDecay,
    sigma: Scalar,
) -> Result<FirstRandomRates, AnalysisError> {
    let (b, m) = (decay.b, decay.m);
    let oracle = b - m / 2.0;
    let complement = 1.0 - b + m / 2.0;
    if oracle <= 0.0 || complement <= 0.0 {
        return Err(AnalysisError::UndefinedRate);
    }
    let alpha_f = sigma * (1.0 - b + (m / 2.0) * sigma) / complement;
    let beta_f = 1.0 - sigma * (b - (m / 2.0) * sigma) / oracle;
    Ok(FirstRandomRates { random: (sigma, 1.0 - sigma), first: (alpha_f, beta_f) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub fp_mean: Scalar,
    pub fp_stderr: Scalar,
    pub fn_mean: Scalar,
    pub fn_stderr: Scalar,
}

/// Monte-Carlo estimate of the expected FP/FN counts: per trial, draw the
/// oracle membership of each overlap position from `pfix`, draw the
/// method's selection, and count disagreements.
pub fn monte_carlo_errors(
    method: AnalysisMethod,
    pfix: &[Scalar],
    trials: usize,
    seed: u64,
) -> Result<McEstimate, AnalysisError> {
    if trials < 1 {
        return Err(AnalysisError::InsufficientData("trials >= 1 required"));
    }
    let w = pfix.len();
    let first_prefix = match method {
        AnalysisMethod::First { sigma } => (sigma * w as Scalar).round() as usize,
        _ => 0,
    };
    let n_chunks = 64.min(trials);
    let base = trials / n_chunks;
    let rem = trials % n_chunks;
    // (sum_fp, sum_fn, sum_fp², sum_fn²) per chunk.
    let sums: Vec<(Scalar, Scalar, Scalar, Scalar)> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let chunk_trials = base + usize::from(chunk < rem);
            let mut rng = stream_rng(seed, 0x6d630000 + chunk as u64);
            let mut acc = (0.0, 0.0, 0.0, 0.0);
            for _ in 0..chunk_trials {
                let mut fp = 0usize;
                let mut fn_ = 0usize;
                for (idx, &p) in pfix.iter().enumerate() {
                    let y = rng.gen_bool(p.clamp(0.0, 1.0));
                    let selected = match method {
                        AnalysisMethod::Random { sigma } => rng.gen_bool(sigma),
                        AnalysisMethod::First { .. } => idx < first_prefix,
                        AnalysisMethod::LRho { alpha, beta } => {
                            if y {
                                rng.gen_bool(1.0 - beta)
                            } else {
                                rng.gen_bool(alpha)
                            }
                        }
                    };
                    fp += usize::from(selected && !y);
                    fn_ += usize::from(!selected && y);
                }
                acc.0 += fp as Scalar;
                acc.1 += fn_ as Scalar;
                acc.2 += (fp * fp) as Scalar;
                acc.3 += (fn_ * fn_) as Scalar;
            }
            acc
        })
        .collect();
    let n = trials as Scalar;
    let (sfp, sfn, sfp2, sfn2) = sums.iter().fold((0.0, 0.0, 0.0, 0.0), |a, s| {
        (a.0 + s.0, a.1 + s.1, a.2 + s.2, a.3 + s.3)
    });
    let fp_mean = sfp / n;
    let fn_mean = sfn / n;
    let fp_var = (sfp2 / n - fp_mean * fp_mean).max(0.0);
    let fn_var = (sfn2 / n - fn_mean * fn_mean).max(0.0);
    Ok(McEstimate {
        fp_mean,
        fp_stderr: (fp_var / n).sqrt(),
        fn_mean,
        fn_stderr: (fn_var / n).sqrt(),
    })
}

/// Two-stage empirical persistence estimate per overlap position: average
/// labels across instances within each iteration index, then report the
/// cross-iteration mean and standard error.
pub fn empirical_pfix(
    records: &[StateRecord],
) -> Result<(Vec<Scalar>, Vec<Scalar>), AnalysisError> {
    let first = records
        .first()
        .ok_or(AnalysisError::InsufficientData("empty dataset"))?;
    let w = first.overlap_count();
    if w == 0 {
        return Err(AnalysisError::InsufficientData("zero overlap width"));
    }
    // Group by iteration index; instance-mean within each group.
    let mut groups: std::collections::BTreeMap<usize, Vec<&StateRecord>> = Default::default();
    for rec in records {
        if rec.overlap_count() != w {
            return Err(AnalysisError::WidthMismatch(w, rec.overlap_count()));
        }
        if rec.labels.is_none() {
            return Err(AnalysisError::InsufficientData("unlabeled record"));
        }
        groups.entry(rec.iteration).or_default().push(rec);
    }
    let per_iter: Vec<Vec<Scalar>> = groups
        .values()
        .map(|recs| {
            (0..w)
                .map(|i| {
                    recs.iter()
                        .map(|r| r.labels.as_ref().unwrap()[i] as u8 as Scalar)
                        .sum::<Scalar>()
                        / recs.len() as Scalar
                })
                .collect()
        })
        .collect();
    let n_iter = per_iter.len() as Scalar;
    let mut p_hat = vec![0.0; w];
    let mut stderr = vec![0.0; w];
    for i in 0..w {
        let mean = per_iter.iter().map(|v| v[i]).sum::<Scalar>() / n_iter;
        let var =
            per_iter.iter().map(|v| (v[i] - mean) * (v[i] - mean)).sum::<Scalar>() / n_iter;
        p_hat[i] = mean;
        stderr[i] = (var / n_iter).sqrt();
    }
    Ok((p_hat, stderr))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDecayFit {
    /// Unconstrained least-squares estimates.
    pub raw: LinearDecay,
    /// The raw estimates clamped to [0, 1] for feeding the closed forms.
    pub clamped: LinearDecay,
    /// Standard error of the fitted slope (-m); absent when fewer than
    /// three points or degenerate x-variance.
    pub slope_stderr: Option<Scalar>,
}

/// Ordinary least squares of p(i) against i/W over i = 1..=W.
pub fn fit_linear_decay(p_hat: &[Scalar]) -> Result<LinearDecayFit, AnalysisError> {
    let w = p_hat.len();
    if w < 2 {
        return Err(AnalysisError::InsufficientData("need W >= 2 points"));
    }
    let xs: Vec<Scalar> = (1..=w).map(|i| i as Scalar / w as Scalar).collect();
    let n = w as Scalar;
    let x_mean = xs.iter().sum::<Scalar>() / n;
    let y_mean = p_hat.iter().sum::<Scalar>() / n;
    let sxx: Scalar = xs.iter().map(|x| (x - x_mean) * (x - x_mean)).sum();
    let sxy: Scalar =
        xs.iter().zip(p_hat).map(|(x, y)| (x - x_mean) * (y - y_mean)).sum();
    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let raw = LinearDecay { b: intercept, m: -slope, w };
    let slope_stderr = if w >= 3 {
        let rss: Scalar = xs
            .iter()
            .zip(p_hat)
            .map(|(x, y)| {
                let r = y - (intercept + slope * x);
                r * r
            })
            .sum();
        let sigma2 = rss / (n - 2.0);
        Some((sigma2 / sxx).sqrt())
    } else {
        None
    };
    Ok(LinearDecayFit { raw, clamped: raw.clamped(), slope_stderr })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: Scalar,
    pub precision: Option<Scalar>,
    pub recall: Option<Scalar>,
    /// FP rate relative to the oracle complement.
    pub alpha: Option<Scalar>,
    /// FN rate relative to the oracle set.
    pub beta: Option<Scalar>,
}

/// Standard confusion quantities of a predicted fix set against the oracle
/// fix set over the overlap set.
pub fn confusion(
    predicted: &BTreeSet<OpId>,
    oracle: &BTreeSet<OpId>,
    overlap: &BTreeSet<OpId>,
) -> Confusion {
    debug_assert!(predicted.is_subset(overlap) && oracle.is_subset(overlap));
    let tp = predicted.intersection(oracle).count();
    let fp = predicted.difference(oracle).count();
    let fn_ = oracle.difference(predicted).count();
    let tn = overlap.len() - tp - fp - fn_;
    let total = overlap.len();
    let ratio = |num: usize, den: usize| (den > 0).then(|| num as Scalar / den as Scalar);
    Confusion {
        tp,
        fp,
        fn_,
        tn,
        accuracy: if total > 0 { (tp + tn) as Scalar / total as Scalar } else { 1.0 },
        precision: ratio(tp, tp + fp),
        recall: ratio(tp, tp + fn_),
        alpha: ratio(fp, total - oracle.len()),
        beta: ratio(fn_, oracle.len()),
    }
}
