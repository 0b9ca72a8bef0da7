//! Domain types for FJSP instances and solutions, objective evaluation,
//! feasibility checking, RHO operation ordering, and comparison metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{JobId, MachineId, Time};

/// Flat operation index within an instance, stable across the instance's
/// lifetime. Job-major: all operations of job 0 first, in precedence order.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct OpId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveKind {
    Makespan,
    TotalStartDelay,
    StartPlusEndDelay,
}

/// A single operation: position `op_index` (1-based) within its job, with a
/// machine-dependent duration for every compatible machine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Operation {
    pub job_id: JobId,
    pub op_index: usize,
    pub compatible: BTreeMap<MachineId, Time>,
    pub release_time: Option<Time>,
    pub target_end_time: Option<Time>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FjspInstance {
    pub num_machines: usize,
    pub jobs: Vec<Vec<Operation>>,
    pub objective: ObjectiveKind,
    pub seed: u64,
    /// Flat index: `op_locs[i] = (job, position-within-job 0-based)`.
    op_locs: Vec<(JobId, usize)>,
    /// First flat id of each job.
    job_offsets: Vec<usize>,
}

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("solution is missing assignment or start for operation {0:?}")]
    IncompleteSolution(OpId),
    #[error("objective {0:?} requires release times on every operation")]
    MissingReleaseTimes(ObjectiveKind),
    #[error("objective StartPlusEndDelay requires target end times on every operation")]
    MissingTargetTimes,
    #[error("delay ordering requires release times on every operation")]
    OrderingNeedsReleaseTimes,
    #[error("improvement metrics undefined: base {0} must be positive")]
    UndefinedMetric(&'static str),
}

impl FjspInstance {
    pub fn new(
        num_machines: usize,
        jobs: Vec<Vec<Operation>>,
        objective: ObjectiveKind,
        seed: u64,
    ) -> Result<Self, CoreError> {
        if jobs.is_empty() {
            return Err(CoreError::InvalidInstance("no jobs".into()));
        }
        let mut op_locs = Vec::new();
        let mut job_offsets = Vec::with_capacity(jobs.len());
        for (j, ops) in jobs.iter().enumerate() {
            if ops.is_empty() {
                return Err(CoreError::InvalidInstance(format!("job {j} is empty")));
            }
            job_offsets.push(op_locs.len());
            let mut prev_release = None;
            for (k, op) in ops.iter().enumerate() {
                if op.job_id != j || op.op_index != k + 1 {
                    return Err(CoreError::InvalidInstance(format!(
                        "operation at job {j} position {k} carries ids ({}, {})",
                        op.job_id, op.op_index
                    )));
                }
                if op.compatible.is_empty() {
                    return Err(CoreError::InvalidInstance(format!(
                        "operation ({j}, {}) has no compatible machine",
                        k + 1
                    )));
                }
                for (&m, &d) in &op.compatible {
                    if m >= num_machines {
                        return Err(CoreError::InvalidInstance(format!(
                            "operation ({j}, {}) references machine {m} >= {num_machines}",
                            k + 1
                        )));
                    }
                    if d < 1 {
                        return Err(CoreError::InvalidInstance(format!(
                            "operation ({j}, {}) has duration {d} < 1 on machine {m}",
                            k + 1
                        )));
                    }
                }
                // Release times must be nondecreasing along the job.
                // (Target end times carry no such constraint: each is
                // drawn independently around its op's release.)
                if let (Some(p), Some(c)) = (prev_release, op.release_time) {
                    if c < p {
                        return Err(CoreError::InvalidInstance(format!(
                            "release times decrease within job {j}"
                        )));
                    }
                }
                prev_release = op.release_time.or(prev_release);
                op_locs.push((j, k));
            }
        }
        let inst = FjspInstance {
            num_machines,
            jobs,
            objective,
            seed,
            op_locs,
            job_offsets,
        };
        match objective {
            ObjectiveKind::Makespan => {}
            ObjectiveKind::TotalStartDelay => {
                if !inst.all_ops().all(|(_, o)| o.release_time.is_some()) {
                    return Err(CoreError::MissingReleaseTimes(objective));
                }
            }
            ObjectiveKind::StartPlusEndDelay => {
                if !inst.all_ops().all(|(_, o)| o.release_time.is_some()) {
                    return Err(CoreError::MissingReleaseTimes(objective));
                }
                if !inst.all_ops().all(|(_, o)| o.target_end_time.is_some()) {
                    return Err(CoreError::MissingTargetTimes);
                }
            }
        }
        Ok(inst)
    }

    pub fn num_ops(&self) -> usize {
        self.op_locs.len()
    }

    pub fn op(&self, id: OpId) -> &Operation {
        let (j, k) = self.op_locs[id.0];
        &self.jobs[j][k]
    }

    /// Flat id for the operation at 1-based position `k` of `job`.
    pub fn op_id(&self, job: JobId, k: usize) -> OpId {
        debug_assert!(k >= 1 && k <= self.jobs[job].len());
        OpId(self.job_offsets[job] + k - 1)
    }

    /// Id of the job predecessor, if any.
    pub fn job_pred(&self, id: OpId) -> Option<OpId> {
        let (_, k) = self.op_locs[id.0];
        (k > 0).then(|| OpId(id.0 - 1))
    }

    pub fn all_ops(&self) -> impl Iterator<Item = (OpId, &Operation)> {
        self.op_locs
            .iter()
            .enumerate()
            .map(move |(i, &(j, k))| (OpId(i), &self.jobs[j][k]))
    }

    pub fn duration(&self, id: OpId, machine: MachineId) -> Option<Time> {
        self.op(id).compatible.get(&machine).copied()
    }
}

/// Observed process durations overriding the instance's true durations for
/// a subset of operations. Lookups fall back to the true duration.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurationOverlay {
    pub durations: BTreeMap<OpId, BTreeMap<MachineId, Time>>,
}

impl DurationOverlay {
    pub fn get(&self, op: OpId, machine: MachineId) -> Option<Time> {
        self.durations.get(&op).and_then(|m| m.get(&machine)).copied()
    }
}

/// Machine assignment and start time per operation; end times are derived,
/// never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub assignment: BTreeMap<OpId, MachineId>,
    pub start: BTreeMap<OpId, Time>,
}

impl Solution {
    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn contains(&self, op: OpId) -> bool {
        self.assignment.contains_key(&op) && self.start.contains_key(&op)
    }

    pub fn insert(&mut self, op: OpId, machine: MachineId, start: Time) {
        self.assignment.insert(op, machine);
        self.start.insert(op, start);
    }

    /// Derived end time under the instance's true durations.
    pub fn end(&self, instance: &FjspInstance, op: OpId) -> Option<Time> {
        let m = *self.assignment.get(&op)?;
        let s = *self.start.get(&op)?;
        Some(s + instance.duration(op, m)?)
    }

    /// Derived end time under an optional observed-duration overlay.
    pub fn end_with(
        &self,
        instance: &FjspInstance,
        op: OpId,
        overlay: Option<&DurationOverlay>,
    ) -> Option<Time> {
        let m = *self.assignment.get(&op)?;
        let s = *self.start.get(&op)?;
        let d = overlay
            .and_then(|ov| ov.get(op, m))
            .or_else(|| instance.duration(op, m))?;
        Some(s + d)
    }
}

/// Per-job / per-machine earliest-allowed times carried across RHO
/// iterations from already-executed operations.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Boundary {
    pub prev_job_end: BTreeMap<JobId, Time>,
    pub prev_machine_end: BTreeMap<MachineId, Time>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    MissingAssignment { op: OpId },
    IncompatibleMachine { op: OpId, machine: MachineId },
    PrecedenceViolation { pred: OpId, succ: OpId },
    MachineOverlap { machine: MachineId, first: OpId, second: OpId },
    ReleaseViolation { op: OpId, release: Time, start: Time },
    BoundaryJobViolation { op: OpId, bound: Time, start: Time },
    BoundaryMachineViolation { op: OpId, bound: Time, start: Time },
}

/// Evaluate the instance's objective over a complete solution.
pub fn evaluate_objective(
    instance: &FjspInstance,
    solution: &Solution,
) -> Result<Time, CoreError> {
    evaluate_objective_with(instance, solution, None)
}

/// Objective under an optional observed-duration overlay (end times shift
/// with the observed durations; starts are taken as given).
pub fn evaluate_objective_with(
    instance: &FjspInstance,
    solution: &Solution,
    overlay: Option<&DurationOverlay>,
) -> Result<Time, CoreError> {
    evaluate_objective_over(
        instance,
        solution,
        overlay,
        instance.all_ops().map(|(id, _)| id),
        instance.objective,
    )
}

/// Objective restricted to a subset of operations (a subproblem window).
pub fn evaluate_objective_over(
    instance: &FjspInstance,
    solution: &Solution,
    overlay: Option<&DurationOverlay>,
    ops: impl Iterator<Item = OpId>,
    objective: ObjectiveKind,
) -> Result<Time, CoreError> {
    let mut makespan = 0;
    let mut total = 0;
    let mut any = false;
    for id in ops {
        any = true;
        let op = instance.op(id);
        let start = *solution.start.get(&id).ok_or(CoreError::IncompleteSolution(id))?;
        let end = solution
            .end_with(instance, id, overlay)
            .ok_or(CoreError::IncompleteSolution(id))?;
        match objective {
            ObjectiveKind::Makespan => makespan = makespan.max(end),
            ObjectiveKind::TotalStartDelay => {
                let release = op
                    .release_time
                    .ok_or(CoreError::MissingReleaseTimes(objective))?;
                total += start - release;
            }
            ObjectiveKind::StartPlusEndDelay => {
                let release = op
                    .release_time
                    .ok_or(CoreError::MissingReleaseTimes(objective))?;
                let target = op.target_end_time.ok_or(CoreError::MissingTargetTimes)?;
                total += (start - release) + (end - target).max(0);
            }
        }
    }
    let _ = any;
    Ok(match objective {
        ObjectiveKind::Makespan => makespan,
        _ => total,
    })
}

/// Check constraints over the operations covered by `solution`: compatible
/// assignment, job precedence, machine no-overlap, release times, and
/// boundary maps when provided. Violations are data, not failures.
pub fn check_feasibility(
    instance: &FjspInstance,
    solution: &Solution,
    boundary: Option<&Boundary>,
) -> Vec<Violation> {
    check_feasibility_with(instance, solution, boundary, None)
}

/// Feasibility under an optional observed-duration overlay.
pub fn check_feasibility_with(
    instance: &FjspInstance,
    solution: &Solution,
    boundary: Option<&Boundary>,
    overlay: Option<&DurationOverlay>,
) -> Vec<Violation> {
    let mut violations = Vec::new();
    // Windows per machine for the overlap check.
    let mut per_machine: BTreeMap<MachineId, Vec<(Time, Time, OpId)>> = BTreeMap::new();

    for (&id, &machine) in &solution.assignment {
        let op = instance.op(id);
        let start = match solution.start.get(&id) {
            Some(&s) => s,
            None => {
                violations.push(Violation::MissingAssignment { op: id });
                continue;
            }
        };
        if !op.compatible.contains_key(&machine) {
            violations.push(Violation::IncompatibleMachine { op: id, machine });
            continue;
        }
        let end = solution.end_with(instance, id, overlay).unwrap();
        if let Some(release) = op.release_time {
            if start < release {
                violations.push(Violation::ReleaseViolation { op: id, release, start });
            }
        }
        if let Some(pred) = instance.job_pred(id) {
            if let Some(pred_end) = solution.end_with(instance, pred, overlay) {
                if pred_end > start {
                    violations.push(Violation::PrecedenceViolation { pred, succ: id });
                }
            }
        }
        if let Some(b) = boundary {
            if let Some(&bound) = b.prev_job_end.get(&op.job_id) {
                if start < bound {
                    violations.push(Violation::BoundaryJobViolation { op: id, bound, start });
                }
            }
            if let Some(&bound) = b.prev_machine_end.get(&machine) {
                if start < bound {
                    violations.push(Violation::BoundaryMachineViolation {
                        op: id,
                        bound,
                        start,
                    });
                }
            }
        }
        per_machine.entry(machine).or_default().push((start, end, id));
    }
    // Ops with a start but no assignment.
    for &id in solution.start.keys() {
        if !solution.assignment.contains_key(&id) {
            violations.push(Violation::MissingAssignment { op: id });
        }
    }
    for (&machine, windows) in per_machine.iter_mut() {
        windows.sort();
        for pair in windows.windows(2) {
            let (_, end_a, op_a) = pair[0];
            let (start_b, _, op_b) = pair[1];
            if end_a > start_b {
                violations.push(Violation::MachineOverlap {
                    machine,
                    first: op_a,
                    second: op_b,
                });
            }
        }
    }
    violations
}

/// Total order over all operations used to carve RHO windows.
///
/// Makespan: ascending relative position k / n_j within the job, ties by
/// (job id, op index). Delay objectives: ascending release time with the
/// same tie rule.
pub fn rho_order(instance: &FjspInstance) -> Result<Vec<OpId>, CoreError> {
    let mut ids: Vec<OpId> = instance.all_ops().map(|(id, _)| id).collect();
    match instance.objective {
        ObjectiveKind::Makespan => {
            ids.sort_by(|&a, &b| {
                let oa = instance.op(a);
                let ob = instance.op(b);
                let na = instance.jobs[oa.job_id].len() as u64;
                let nb = instance.jobs[ob.job_id].len() as u64;
                // k1/n1 vs k2/n2 compared exactly as k1*n2 vs k2*n1.
                let lhs = oa.op_index as u64 * nb;
                let rhs = ob.op_index as u64 * na;
                lhs.cmp(&rhs)
                    .then(oa.job_id.cmp(&ob.job_id))
                    .then(oa.op_index.cmp(&ob.op_index))
            });
        }
        ObjectiveKind::TotalStartDelay | ObjectiveKind::StartPlusEndDelay => {
            if !instance.all_ops().all(|(_, o)| o.release_time.is_some()) {
                return Err(CoreError::OrderingNeedsReleaseTimes);
            }
            ids.sort_by(|&a, &b| {
                let oa = instance.op(a);
                let ob = instance.op(b);
                oa.release_time
                    .cmp(&ob.release_time)
                    .then(oa.job_id.cmp(&ob.job_id))
                    .then(oa.op_index.cmp(&ob.op_index))
            });
        }
    }
    Ok(ids)
}

/// Solve effort recorded on a report: wall time or move budget consumed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Effort {
    Seconds(f64),
    Moves(u64),
}

impl Effort {
    pub fn value(&self) -> f64 {
        match *self {
            Effort::Seconds(s) => s,
            Effort::Moves(m) => m as f64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub effort: Effort,
    pub objective: Time,
    pub ti_percent: Option<f64>,
    pub oi_percent: Option<f64>,
    /// Per-iteration (FP, FN) counts against oracle labels when available.
    pub per_iter_fp_fn: Vec<(usize, usize)>,
}

impl RunReport {
    pub fn new(method: impl Into<String>, effort: Effort, objective: Time) -> Self {
        RunReport {
            method: method.into(),
            effort,
            objective,
            ti_percent: None,
            oi_percent: None,
            per_iter_fp_fn: Vec::new(),
        }
    }
}

/// (OI%, TI%) of `other` relative to `base`; negative values indicate
/// degradation.
pub fn improvement_metrics(
    base: &RunReport,
    other: &RunReport,
) -> Result<(f64, f64), CoreError> {
    if base.objective <= 0 {
        return Err(CoreError::UndefinedMetric("objective"));
    }
    if base.effort.value() <= 0.0 {
        return Err(CoreError::UndefinedMetric("effort"));
    }
    let obj0 = base.objective as f64;
    let oi = (obj0 - other.objective as f64) / obj0 * 100.0;
    let ti = (base.effort.value() - other.effort.value()) / base.effort.value() * 100.0;
    Ok((oi, ti))
}
