//! Per-iteration feature matrices for the fix-set classifier. Column order
//! is frozen: exactly the order of the name lists below, operations first,
//! then machines. Missing values are encoded as -1 before normalization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::core::{DurationOverlay, FjspInstance, ObjectiveKind, OpId};
use crate::learn::LearnError;
use crate::rho::RhoState;
use crate::{MachineId, Scalar, Time};

const MISSING: Scalar = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureVariant {
    Makespan,
    MakespanBreakdown,
    StartDelay,
    StartEndDelay,
    StartEndDelayNoise,
}

impl FeatureVariant {
    /// (d_o, d_m): per-operation and per-machine feature counts.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            FeatureVariant::Makespan => (15, 11),
            FeatureVariant::MakespanBreakdown => (18, 13),
            FeatureVariant::StartDelay => (16, 6),
            FeatureVariant::StartEndDelay => (19, 6),
            FeatureVariant::StartEndDelayNoise => (22, 12),
        }
    }

    pub fn op_feature_names(&self) -> Vec<&'static str> {
        let mut names: Vec<&'static str> = match self {
            FeatureVariant::Makespan | FeatureVariant::MakespanBreakdown => vec![
                "job_start_time",
                "avg_dur",
                "std_dur",
                "min_dur",
                "max_dur",
                "job_id",
                "ops_id",
                "in_overlap",
                "prev_machine",
                "prev_duration",
                "prev_end_time",
                "alt_avg_dur",
                "alt_std_dur",
                "alt_min_dur",
                "alt_max_dur",
            ],
            _ => vec![
                "job_start_time",
                "ops_release_time",
                "avg_dur",
                "std_dur",
                "min_dur",
                "max_dur",
                "job_id",
                "ops_id",
                "in_overlap",
                "prev_delay",
                "prev_machine",
                "prev_duration",
                "alt_avg_dur",
                "alt_std_dur",
                "alt_min_dur",
                "alt_max_dur",
            ],
        };
        match self {
            FeatureVariant::MakespanBreakdown => {
                names.extend(["is_break_down", "is_ops_break_down", "is_ops_recovered"]);
            }
            FeatureVariant::StartEndDelay | FeatureVariant::StartEndDelayNoise => {
                names.extend(["ops_target_due_time", "prev_start", "prev_end"]);
            }
            _ => {}
        }
        if matches!(self, FeatureVariant::StartEndDelayNoise) {
            names.extend(["prev_duration_reeval", "prev_end_reeval", "prev_delay_reeval"]);
        }
        names
    }

    pub fn machine_feature_names(&self) -> Vec<&'static str> {
        let mut names: Vec<&'static str> = match self {
            FeatureVariant::Makespan | FeatureVariant::MakespanBreakdown => vec![
                "machine_start_time",
                "num_overlap",
                "avg_end_time",
                "std_end_time",
                "max_end_time",
                "min_end_time",
                "avg_duration",
                "std_duration",
                "max_duration",
                "min_duration",
                "machine_id",
            ],
            _ => vec![
                "machine_start_time",
                "num_overlap",
                "avg_delay",
                "std_delay",
                "max_delay",
                "min_delay",
            ],
        };
        match self {
            FeatureVariant::MakespanBreakdown => {
                names.extend(["is_break_down", "is_machine_break_down"]);
            }
            FeatureVariant::StartEndDelayNoise => {
                names.extend([
                    "avg_delay_reeval",
                    "std_delay_reeval",
                    "max_delay_reeval",
                    "min_delay_reeval",
                    "machine_end_time",
                    "machine_end_time_reeval",
                ]);
            }
            _ => {}
        }
        names
    }

    pub fn compatible_objective(&self) -> ObjectiveKind {
        match self {
            FeatureVariant::Makespan | FeatureVariant::MakespanBreakdown => {
                ObjectiveKind::Makespan
            }
            FeatureVariant::StartDelay => ObjectiveKind::TotalStartDelay,
            FeatureVariant::StartEndDelay | FeatureVariant::StartEndDelayNoise => {
                ObjectiveKind::StartPlusEndDelay
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FeatureVariant::Makespan => "makespan",
            FeatureVariant::MakespanBreakdown => "makespan+breakdown",
            FeatureVariant::StartDelay => "start-delay",
            FeatureVariant::StartEndDelay => "start+end-delay",
            FeatureVariant::StartEndDelayNoise => "start+end-delay+noise",
        }
    }
}

/// One RHO iteration's feature matrices, overlap structure, and (during
/// data collection) oracle labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub variant: FeatureVariant,
    /// Instance seed; used for train/validation splitting.
    pub instance_id: u64,
    pub iteration: usize,
    /// |plan_ops| x d_o, rows in plan (RHO) order.
    pub op_features: Vec<Vec<Scalar>>,
    /// |M| x d_m, rows indexed by machine id.
    pub machine_features: Vec<Vec<Scalar>>,
    /// Per plan op: is it in the overlap set.
    pub overlap_mask: Vec<bool>,
    /// Per plan op: previous machine assignment (overlap ops only).
    pub prev_machine_index: Vec<Option<usize>>,
    /// Oracle persistence labels for overlap ops, in plan order (one entry
    /// per overlap_mask-true row).
    pub labels: Option<Vec<bool>>,
}

impl StateRecord {
    pub fn overlap_count(&self) -> usize {
        self.overlap_mask.iter().filter(|&&b| b).count()
    }

    /// Plan-row indices of overlap ops, in plan order.
    pub fn overlap_rows(&self) -> Vec<usize> {
        self.overlap_mask
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }
}

fn stats(values: &[Scalar]) -> (Scalar, Scalar, Scalar, Scalar) {
    let n = values.len() as Scalar;
    let mean = values.iter().sum::<Scalar>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<Scalar>() / n;
    let min = values.iter().copied().fold(Scalar::INFINITY, Scalar::min);
    let max = values.iter().copied().fold(Scalar::NEG_INFINITY, Scalar::max);
    (mean, var.sqrt(), min, max)
}

fn overlay_duration(
    instance: &FjspInstance,
    overlay: Option<&DurationOverlay>,
    op: OpId,
    m: MachineId,
) -> Time {
    overlay
        .and_then(|ov| ov.get(op, m))
        .or_else(|| instance.duration(op, m))
        .expect("compatible machine")
}

/// Compute the feature matrices for one iteration. Requires iteration >= 2
/// for meaningful prev_* fields; on iteration 1 those are all missing.
pub fn extract_features(
    instance: &FjspInstance,
    state: &RhoState,
    variant: FeatureVariant,
) -> Result<StateRecord, LearnError> {
    if variant.compatible_objective() != instance.objective {
        return Err(LearnError::VariantMismatch(variant.label().into()));
    }
    let makespan_like = matches!(
        variant,
        FeatureVariant::Makespan | FeatureVariant::MakespanBreakdown
    );
    let end_delay = matches!(
        variant,
        FeatureVariant::StartEndDelay | FeatureVariant::StartEndDelayNoise
    );
    let prev = &state.prev_solution;
    let prev_ov = state.prev_duration_overlay.as_ref();
    let cur_ov = state.duration_overlay.as_ref();
    let any_break = !state.unavailable_machines.is_empty();

    let overlap_mask: Vec<bool> = {
        let overlap: std::collections::BTreeSet<OpId> =
            state.overlap_ops.iter().copied().collect();
        state.plan_ops.iter().map(|op| overlap.contains(op)).collect()
    };

    let mut op_features = Vec::with_capacity(state.plan_ops.len());
    let mut prev_machine_index = Vec::with_capacity(state.plan_ops.len());
    for (row, &op) in state.plan_ops.iter().enumerate() {
        let o = instance.op(op);
        let in_overlap = overlap_mask[row];
        let durations: Vec<Scalar> = o
            .compatible
            .iter()
            .map(|(&m, _)| overlay_duration(instance, cur_ov, op, m) as Scalar)
            .collect();
        let (avg, std, min, max) = stats(&durations);
        let job_start = *state.boundary.prev_job_end.get(&o.job_id).unwrap_or(&0) as Scalar;
        let release = o.release_time.unwrap_or(0);
        let target = o.target_end_time.unwrap_or(0);

        let pm = if in_overlap { prev.assignment.get(&op).copied() } else { None };
        prev_machine_index.push(pm);
        // Previous-iteration quantities, under the durations that iteration
        // observed.
        let (prev_start, prev_dur, prev_end, prev_delay) = match pm {
            Some(m) => {
                let s = prev.start[&op];
                let d = overlay_duration(instance, prev_ov, op, m);
                let e = s + d;
                let delay = if end_delay {
                    (s - release) + (e - target).max(0)
                } else {
                    s - release
                };
                (s as Scalar, d as Scalar, e as Scalar, delay as Scalar)
            }
            None => (MISSING, MISSING, MISSING, MISSING),
        };
        let (alt_avg, alt_std, alt_min, alt_max) = match pm {
            Some(m) => {
                let alts: Vec<Scalar> = o
                    .compatible
                    .keys()
                    .filter(|&&mm| mm != m)
                    .map(|&mm| overlay_duration(instance, cur_ov, op, mm) as Scalar)
                    .collect();
                if alts.is_empty() {
                    (MISSING, MISSING, MISSING, MISSING)
                } else {
                    stats(&alts)
                }
            }
            None => (MISSING, MISSING, MISSING, MISSING),
        };
        let pm_feat = pm.map_or(MISSING, |m| m as Scalar);

        let mut f: Vec<Scalar> = if makespan_like {
            vec![
                job_start,
                avg,
                std,
                min,
                max,
                (o.job_id + 1) as Scalar,
                o.op_index as Scalar,
                in_overlap as u8 as Scalar,
                pm_feat,
                prev_dur,
                prev_end,
                alt_avg,
                alt_std,
                alt_min,
                alt_max,
            ]
        } else {
            vec![
                job_start,
                release as Scalar,
                avg,
                std,
                min,
                max,
                (o.job_id + 1) as Scalar,
                o.op_index as Scalar,
                in_overlap as u8 as Scalar,
                prev_delay,
                pm_feat,
                prev_dur,
                alt_avg,
                alt_std,
                alt_min,
                alt_max,
            ]
        };
        match variant {
            FeatureVariant::MakespanBreakdown => {
                let ops_break = pm.map_or(MISSING, |m| {
                    state.unavailable_machines.contains(&m) as u8 as Scalar
                });
                let recovered = if in_overlap {
                    let was_restricted = o
                        .compatible
                        .keys()
                        .any(|m| state.prev_unavailable_machines.contains(m));
                    let now_free = o
                        .compatible
                        .keys()
                        .any(|m| {
                            state.prev_unavailable_machines.contains(m)
                                && !state.unavailable_machines.contains(m)
                        });
                    (was_restricted && now_free) as u8 as Scalar
                } else {
                    MISSING
                };
                f.extend([any_break as u8 as Scalar, ops_break, recovered]);
            }
            FeatureVariant::StartEndDelay | FeatureVariant::StartEndDelayNoise => {
                f.extend([target as Scalar, prev_start, prev_end]);
            }
            _ => {}
        }
        if matches!(variant, FeatureVariant::StartEndDelayNoise) {
            // Re-evaluate the previous assignment under the durations
            // observed at the current iteration.
            let (d_re, e_re, delay_re) = match pm {
                Some(m) => {
                    let s = prev.start[&op];
                    let d = overlay_duration(instance, cur_ov, op, m);
                    let e = s + d;
                    let delay = (s - release) + (e - target).max(0);
                    (d as Scalar, e as Scalar, delay as Scalar)
                }
                None => (MISSING, MISSING, MISSING),
            };
            f.extend([d_re, e_re, delay_re]);
        }
        debug_assert_eq!(f.len(), variant.dims().0);
        op_features.push(f);
    }

    // Per-machine aggregates over the overlap ops previously assigned to
    // the machine.
    #[derive(Default)]
    struct PerMachine {
        ends: Vec<Scalar>,
        durs: Vec<Scalar>,
        delays: Vec<Scalar>,
        ends_re: Vec<Scalar>,
        delays_re: Vec<Scalar>,
    }
    let mut per_machine: BTreeMap<MachineId, PerMachine> = BTreeMap::new();
    for (row, &op) in state.plan_ops.iter().enumerate() {
        let Some(m) = prev_machine_index[row] else { continue };
        let o = instance.op(op);
        let release = o.release_time.unwrap_or(0);
        let target = o.target_end_time.unwrap_or(0);
        let s = prev.start[&op];
        let d = overlay_duration(instance, prev_ov, op, m);
        let e = s + d;
        let delay = if end_delay { (s - release) + (e - target).max(0) } else { s - release };
        let entry = per_machine.entry(m).or_default();
        entry.ends.push(e as Scalar);
        entry.durs.push(d as Scalar);
        entry.delays.push(delay as Scalar);
        let d_re = overlay_duration(instance, cur_ov, op, m);
        let e_re = s + d_re;
        entry.ends_re.push(e_re as Scalar);
        entry.delays_re.push(((s - release) + (e_re - target).max(0)) as Scalar);
    }

    let mut machine_features = Vec::with_capacity(instance.num_machines);
    for m in 0..instance.num_machines {
        let start = *state.boundary.prev_machine_end.get(&m).unwrap_or(&0) as Scalar;
        let agg = per_machine.get(&m);
        let num_overlap = agg.map_or(0, |a| a.ends.len());
        let four = |values: Option<&Vec<Scalar>>| -> (Scalar, Scalar, Scalar, Scalar) {
            match values {
                Some(v) if !v.is_empty() => {
                    let (avg, std, min, max) = stats(v);
                    (avg, std, max, min)
                }
                _ => (MISSING, MISSING, MISSING, MISSING),
            }
        };
        let mut f: Vec<Scalar> = if makespan_like {
            let (e_avg, e_std, e_max, e_min) = four(agg.map(|a| &a.ends));
            let (d_avg, d_std, d_max, d_min) = four(agg.map(|a| &a.durs));
            vec![
                start,
                num_overlap as Scalar,
                e_avg,
                e_std,
                e_max,
                e_min,
                d_avg,
                d_std,
                d_max,
                d_min,
                m as Scalar,
            ]
        } else {
            let (avg, std, max, min) = four(agg.map(|a| &a.delays));
            vec![start, num_overlap as Scalar, avg, std, max, min]
        };
        match variant {
            FeatureVariant::MakespanBreakdown => {
                f.extend([
                    any_break as u8 as Scalar,
                    state.unavailable_machines.contains(&m) as u8 as Scalar,
                ]);
            }
            FeatureVariant::StartEndDelayNoise => {
                let (avg, std, max, min) = four(agg.map(|a| &a.delays_re));
                let end = agg
                    .filter(|a| !a.ends.is_empty())
                    .map_or(MISSING, |a| a.ends.iter().copied().fold(Scalar::NEG_INFINITY, Scalar::max));
                let end_re = agg
                    .filter(|a| !a.ends_re.is_empty())
                    .map_or(MISSING, |a| a.ends_re.iter().copied().fold(Scalar::NEG_INFINITY, Scalar::max));
                f.extend([avg, std, max, min, end, end_re]);
            }
            _ => {}
        }
        debug_assert_eq!(f.len(), variant.dims().1);
        machine_features.push(f);
    }

    Ok(StateRecord {
        variant,
        instance_id: instance.seed,
        iteration: state.iteration,
        op_features,
        machine_features,
        overlap_mask,
        prev_machine_index: prev_machine_index
            .iter()
            .map(|pm| pm.map(|m| m as usize))
            .collect(),
        labels: None,
    })
}
