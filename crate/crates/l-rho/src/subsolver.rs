//! Anytime solver for windowed FJSP subproblems with fixed assignments,
//! boundary constraints, machine availability masks, and observed-duration
//! overlays — plus an exact branch-and-bound enumerator used as a test
//! oracle. All three objectives are regular, so an optimal semi-active
//! schedule exists and the search space is (assignment, machine order).

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{
    evaluate_objective_over, Boundary, CoreError, DurationOverlay, FjspInstance,
    ObjectiveKind, OpId, Solution,
};
use crate::gen::stream_rng;
use crate::{MachineId, Time};

/// Default cap on exact_solve problem size.
pub const EXACT_CAP: usize = 10;

/// Probability of accepting a non-improving move into the working solution.
const EXPLORE_PROB: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SubsolverError {
    #[error("invalid subproblem: {0}")]
    InvalidSubproblem(String),
    #[error("machine sequences conflict with job precedence (cycle)")]
    InfeasibleOrder,
    #[error("exact solver refused: {0} operations exceeds cap {1}")]
    CapExceeded(usize, usize),
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// A windowed FJSP restricted to `plan_ops`, with earliest-allowed times
/// inherited from executed work, optional frozen assignments, a breakdown
/// availability mask, observed durations, and an optional warm start.
#[derive(Debug, Clone)]
pub struct Subproblem<'a> {
    pub instance: &'a FjspInstance,
    pub plan_ops: Vec<OpId>,
    pub objective: ObjectiveKind,
    pub boundary: Boundary,
    pub fixed_assignment: BTreeMap<OpId, MachineId>,
    pub unavailable_machines: BTreeSet<MachineId>,
    pub duration_overlay: Option<DurationOverlay>,
    pub warm_start: Option<Solution>,
}

impl<'a> Subproblem<'a> {
    pub fn new(instance: &'a FjspInstance, plan_ops: Vec<OpId>) -> Self {
        Subproblem {
            instance,
            plan_ops,
            objective: instance.objective,
            boundary: Boundary::default(),
            fixed_assignment: BTreeMap::new(),
            unavailable_machines: BTreeSet::new(),
            duration_overlay: None,
            warm_start: None,
        }
    }

    pub fn validate(&self) -> Result<(), SubsolverError> {
        let plan: BTreeSet<OpId> = self.plan_ops.iter().copied().collect();
        for (&op, &m) in &self.fixed_assignment {
            if !plan.contains(&op) {
                return Err(SubsolverError::InvalidSubproblem(format!(
                    "fixed assignment for {op:?} outside plan"
                )));
            }
            if !self.instance.op(op).compatible.contains_key(&m) {
                return Err(SubsolverError::InvalidSubproblem(format!(
                    "fixed assignment for {op:?} to incompatible machine {m}"
                )));
            }
        }
        for &op in &self.plan_ops {
            if self.allowed_machines(op).is_empty() {
                return Err(SubsolverError::InvalidSubproblem(format!(
                    "{op:?} has no available compatible machine"
                )));
            }
        }
        Ok(())
    }

    /// Machines the solver may use for `op`. A fixed assignment narrows the
    /// set to one machine — unless that machine is currently unavailable,
    /// in which case the fix is dropped (breakdowns supersede fixes).
    pub fn allowed_machines(&self, op: OpId) -> Vec<MachineId> {
        if let Some(&m) = self.fixed_assignment.get(&op) {
            if !self.unavailable_machines.contains(&m) {
                return vec![m];
            }
        }
        self.instance
            .op(op)
            .compatible
            .keys()
            .copied()
            .filter(|m| !self.unavailable_machines.contains(m))
            .collect()
    }

    /// Duration the solver plans with: observed if overlaid, else true.
    pub fn duration(&self, op: OpId, machine: MachineId) -> Time {
        self.duration_overlay
            .as_ref()
            .and_then(|ov| ov.get(op, machine))
            .or_else(|| self.instance.duration(op, machine))
            .expect("machine compatible with op")
    }

    pub fn objective_of(&self, solution: &Solution) -> Result<Time, CoreError> {
        evaluate_objective_over(
            self.instance,
            solution,
            self.duration_overlay.as_ref(),
            self.plan_ops.iter().copied(),
            self.objective,
        )
    }
}

/// Solve-effort budget. MoveCount is exactly reproducible; WallClock
/// mirrors a time-limited solver with early stop on stall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Budget {
    WallClock { limit_secs: f64, stall_secs: f64 },
    MoveCount { max_moves: u64, stall_moves: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub moves: u64,
    pub elapsed_secs: f64,
    pub initial_objective: Time,
    pub objective: Time,
}

/// Machine sequences plus assignment: the search representation. Decoding
/// is semi-active — every op starts as early as its release, job
/// predecessor, and machine predecessor permit.
type MachineSeqs = BTreeMap<MachineId, Vec<OpId>>;

/// Semi-active decode of (assignment, machine sequences) into start times.
/// Errors if the machine sequences are cyclic with job precedence.
pub fn schedule_from_order(
    sub: &Subproblem,
    assignment: &BTreeMap<OpId, MachineId>,
    machine_seqs: &MachineSeqs,
) -> Result<Solution, SubsolverError> {
    let plan: BTreeSet<OpId> = sub.plan_ops.iter().copied().collect();
    let mut machine_pred: BTreeMap<OpId, OpId> = BTreeMap::new();
    for seq in machine_seqs.values() {
        for pair in seq.windows(2) {
            machine_pred.insert(pair[1], pair[0]);
        }
    }
    let mut solution = Solution::default();
    let mut end: BTreeMap<OpId, Time> = BTreeMap::new();
    let mut remaining: Vec<OpId> = sub.plan_ops.clone();
    while !remaining.is_empty() {
        let before = remaining.len();
        remaining.retain(|&op| {
            let job = sub.instance.op(op).job_id;
            let job_ready = match sub.instance.job_pred(op) {
                Some(pred) if plan.contains(&pred) => match end.get(&pred) {
                    Some(&e) => e,
                    None => return true, // predecessor not scheduled yet
                },
                _ => *sub.boundary.prev_job_end.get(&job).unwrap_or(&0),
            };
            let m = assignment[&op];
            let machine_ready = match machine_pred.get(&op) {
                Some(pred) => match end.get(pred) {
                    Some(&e) => e,
                    None => return true,
                },
                None => *sub.boundary.prev_machine_end.get(&m).unwrap_or(&0),
            };
            let release = sub.instance.op(op).release_time.unwrap_or(0);
            let start = release.max(job_ready).max(machine_ready);
            solution.insert(op, m, start);
            end.insert(op, start + sub.duration(op, m));
            false
        });
        if remaining.len() == before {
            return Err(SubsolverError::InfeasibleOrder);
        }
    }
    Ok(solution)
}

/// Greedy list dispatch: repeatedly schedule the ready operation with the
/// earliest completion over its allowed machines, ties broken by plan
/// order then machine id. Warm-start assignments act as hints: a hinted
/// op keeps its previous machine when that machine is still allowed.
pub fn build_initial(sub: &Subproblem) -> (Solution, BTreeMap<OpId, MachineId>, MachineSeqs) {
    let plan: BTreeSet<OpId> = sub.plan_ops.iter().copied().collect();
    let rank: BTreeMap<OpId, usize> =
        sub.plan_ops.iter().enumerate().map(|(i, &o)| (o, i)).collect();
    let mut machine_free: BTreeMap<MachineId, Time> = sub.boundary.prev_machine_end.clone();
    let mut job_ready: BTreeMap<OpId, Time> = BTreeMap::new();
    let mut scheduled: BTreeSet<OpId> = BTreeSet::new();
    let mut solution = Solution::default();
    let mut assignment = BTreeMap::new();
    let mut seqs: MachineSeqs = BTreeMap::new();

    while scheduled.len() < sub.plan_ops.len() {
        let mut best: Option<(Time, usize, MachineId, OpId, Time)> = None;
        for &op in &sub.plan_ops {
            if scheduled.contains(&op) {
                continue;
            }
            let ready = match sub.instance.job_pred(op) {
                Some(pred) if plan.contains(&pred) => {
                    if !scheduled.contains(&pred) {
                        continue;
                    }
                    job_ready[&op]
                }
                _ => {
                    let job = sub.instance.op(op).job_id;
                    *sub.boundary.prev_job_end.get(&job).unwrap_or(&0)
                }
            };
            let release = sub.instance.op(op).release_time.unwrap_or(0);
            let allowed = sub.allowed_machines(op);
            let hinted = sub
                .warm_start
                .as_ref()
                .and_then(|w| w.assignment.get(&op))
                .filter(|m| allowed.contains(m))
                .copied();
            let machines: Vec<MachineId> = match hinted {
                Some(m) => vec![m],
                None => allowed,
            };
            for m in machines {
                let free = *machine_free.get(&m).unwrap_or(&0);
                let start = release.max(ready).max(free);
                let completion = start + sub.duration(op, m);
                let key = (completion, rank[&op], m, op, start);
                if best.map_or(true, |b| (key.0, key.1, key.2) < (b.0, b.1, b.2)) {
                    best = Some(key);
                }
            }
        }
        let (completion, _, m, op, start) = best.expect("a ready op always exists");
        solution.insert(op, m, start);
        assignment.insert(op, m);
        seqs.entry(m).or_default().push(op);
        machine_free.insert(m, completion);
        scheduled.insert(op);
        // Successor within the plan becomes ready at this op's end.
        let (job, k) = (sub.instance.op(op).job_id, sub.instance.op(op).op_index);
        if k < sub.instance.jobs[job].len() {
            job_ready.insert(sub.instance.op_id(job, k + 1), completion);
        }
    }
    (solution, assignment, seqs)
}

/// Fraction of plan ops whose machine assignment is still free.
fn free_fraction(sub: &Subproblem) -> f64 {
    if sub.plan_ops.is_empty() {
        return 1.0;
    }
    let free = sub
        .plan_ops
        .iter()
        .filter(|op| !sub.fixed_assignment.contains_key(op))
        .count();
    free as f64 / sub.plan_ops.len() as f64
}

/// Shrink a budget proportionally to the free decision fraction.
fn scale_budget(budget: Budget, frac: f64) -> Budget {
    match budget {
        Budget::MoveCount { max_moves, stall_moves } => Budget::MoveCount {
            max_moves: (max_moves as f64 * frac).ceil() as u64,
            stall_moves: (stall_moves as f64 * frac).ceil() as u64,
        },
        Budget::WallClock { limit_secs, stall_secs } => Budget::WallClock {
            limit_secs: limit_secs * frac,
            stall_secs: stall_secs * frac,
        },
    }
}

/// Anytime first-improvement local search from the dispatched initial
/// solution. Moves: reassign an op to another allowed machine, relocate an
/// op within its machine's sequence, swap adjacent ops on one machine.
/// Restarts from the incumbent after a third of the stall budget without
/// improvement; the stall counter resets only on strict improvement of the
/// best objective. Non-improving moves are occasionally accepted into the
/// working solution so the walk can leave local optima; the incumbent is
/// tracked separately and never degrades. Deterministic under MoveCount
/// budgets and a fixed seed.
///
/// The budget scales with the free fraction of the plan: fixing an op's
/// assignment removes its decision from the search, so a restricted
/// subproblem is granted proportionally less effort — the anytime analogue
/// of a constraint solver finishing sooner on a smaller search space.
pub fn solve(
    sub: &Subproblem,
    budget: Budget,
    seed: u64,
) -> Result<(Solution, SolveStats), SubsolverError> {
    sub.validate()?;
    let budget = scale_budget(budget, free_fraction(sub));
    let t0 = Instant::now();
    let (init_sol, mut assignment, mut seqs) = build_initial(sub);
    let init_obj = sub.objective_of(&init_sol)?;
    let mut best_sol = init_sol;
    let mut best_obj = init_obj;
    let mut cur_assignment = assignment.clone();
    let mut cur_seqs = seqs.clone();
    let mut cur_obj = init_obj;
    let mut rng = stream_rng(seed, 0x736f6c76); // "solv"
    let mut moves: u64 = 0;
    let mut stall: u64 = 0;

    let movable: Vec<OpId> = sub.plan_ops.clone();
    if !movable.is_empty() {
        loop {
            match budget {
                Budget::MoveCount { max_moves, stall_moves } => {
                    if moves >= max_moves || stall >= stall_moves {
                        break;
                    }
                    let third = (stall_moves / 3).max(1);
                    if stall > 0 && stall % third == 0 {
                        cur_assignment = assignment.clone();
                        cur_seqs = seqs.clone();
                        cur_obj = best_obj;
                    }
                }
                Budget::WallClock { limit_secs, stall_secs } => {
                    let elapsed = t0.elapsed().as_secs_f64();
                    if elapsed >= limit_secs {
                        break;
                    }
                    // Stall measured in moves scaled by observed move rate.
                    if moves > 0 {
                        let per_move = elapsed / moves as f64;
                        if stall as f64 * per_move >= stall_secs {
                            break;
                        }
                    }
                }
            }
            moves += 1;
            let mut a = cur_assignment.clone();
            let mut s = cur_seqs.clone();
            if !propose_move(sub, &mut a, &mut s, &movable, &mut rng) {
                stall += 1;
                continue;
            }
            let decoded = match schedule_from_order(sub, &a, &s) {
                Ok(d) => d,
                Err(SubsolverError::InfeasibleOrder) => {
                    stall += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let obj = sub.objective_of(&decoded)?;
            // Exploration: a worsening move is sometimes taken so the walk
            // can escape local optima the neighborhood cannot improve.
            if obj < cur_obj || rng.gen_bool(EXPLORE_PROB) {
                cur_assignment = a;
                cur_seqs = s;
                cur_obj = obj;
                if obj < best_obj {
                    best_obj = obj;
                    best_sol = decoded;
                    assignment = cur_assignment.clone();
                    seqs = cur_seqs.clone();
                    stall = 0;
                    continue;
                }
            }
            stall += 1;
        }
    }
    let stats = SolveStats {
        moves,
        elapsed_secs: t0.elapsed().as_secs_f64(),
        initial_objective: init_obj,
        objective: best_obj,
    };
    Ok((best_sol, stats))
}

/// Mutate (assignment, sequences) by one random move. Returns false when
/// the sampled move is a no-op (e.g. no alternative machine).
fn propose_move<R: Rng>(
    sub: &Subproblem,
    assignment: &mut BTreeMap<OpId, MachineId>,
    seqs: &mut MachineSeqs,
    movable: &[OpId],
    rng: &mut R,
) -> bool {
    match rng.gen_range(0..3u8) {
        0 => {
            // Reassign an op to another allowed machine, random position.
            let op = movable[rng.gen_range(0..movable.len())];
            let cur = assignment[&op];
            let alts: Vec<MachineId> = sub
                .allowed_machines(op)
                .into_iter()
                .filter(|&m| m != cur)
                .collect();
            if alts.is_empty() {
                return false;
            }
            let target = alts[rng.gen_range(0..alts.len())];
            let seq = seqs.get_mut(&cur).unwrap();
            seq.retain(|&o| o != op);
            let dst = seqs.entry(target).or_default();
            let pos = rng.gen_range(0..=dst.len());
            dst.insert(pos, op);
            assignment.insert(op, target);
            true
        }
        1 => {
            // Relocate an op within its machine's sequence.
            let busy: Vec<MachineId> =
                seqs.iter().filter(|(_, s)| s.len() >= 2).map(|(&m, _)| m).collect();
            if busy.is_empty() {
                return false;
            }
            let m = busy[rng.gen_range(0..busy.len())];
            let seq = seqs.get_mut(&m).unwrap();
            let from = rng.gen_range(0..seq.len());
            let to = rng.gen_range(0..seq.len());
            if from == to {
                return false;
            }
            let op = seq.remove(from);
            seq.insert(to, op);
            true
        }
        _ => {
            // Swap adjacent ops on one machine.
            let busy: Vec<MachineId> =
                seqs.iter().filter(|(_, s)| s.len() >= 2).map(|(&m, _)| m).collect();
            if busy.is_empty() {
                return false;
            }
            let m = busy[rng.gen_range(0..busy.len())];
            let seq = seqs.get_mut(&m).unwrap();
            let i = rng.gen_range(0..seq.len() - 1);
            seq.swap(i, i + 1);
            true
        }
    }
}

/// Globally optimal semi-active solution by depth-first branch-and-bound
/// over (machine assignment, machine insertion order); optimality is
/// certified by exhaustion. Refuses plans larger than `EXACT_CAP`.
pub fn exact_solve(sub: &Subproblem) -> Result<Solution, SubsolverError> {
    sub.validate()?;
    if sub.plan_ops.len() > EXACT_CAP {
        return Err(SubsolverError::CapExceeded(sub.plan_ops.len(), EXACT_CAP));
    }
    let plan: BTreeSet<OpId> = sub.plan_ops.iter().copied().collect();
    // Per-job chains restricted to the plan, in precedence order.
    let mut chains: BTreeMap<usize, Vec<OpId>> = BTreeMap::new();
    for &op in &sub.plan_ops {
        chains.entry(sub.instance.op(op).job_id).or_default().push(op);
    }
    for chain in chains.values_mut() {
        chain.sort_by_key(|&op| sub.instance.op(op).op_index);
    }
    let jobs: Vec<(usize, Vec<OpId>)> = chains.into_iter().collect();

    struct Dfs<'s, 'a> {
        sub: &'s Subproblem<'a>,
        plan: &'s BTreeSet<OpId>,
        jobs: &'s [(usize, Vec<OpId>)],
        best: Option<(Time, Solution)>,
    }
    impl Dfs<'_, '_> {
        fn go(
            &mut self,
            next: &mut Vec<usize>,
            machine_end: &mut BTreeMap<MachineId, Time>,
            job_end: &mut BTreeMap<usize, Time>,
            partial: &mut Solution,
            partial_obj: Time,
            placed: usize,
        ) {
            let total: usize = self.jobs.iter().map(|(_, c)| c.len()).sum();
            if placed == total {
                if self.best.as_ref().map_or(true, |(b, _)| partial_obj < *b) {
                    self.best = Some((partial_obj, partial.clone()));
                }
                return;
            }
            for (ji, (job, chain)) in self.jobs.iter().enumerate() {
                if next[ji] >= chain.len() {
                    continue;
                }
                let op = chain[next[ji]];
                let o = self.sub.instance.op(op);
                let release = o.release_time.unwrap_or(0);
                let ready = match self.sub.instance.job_pred(op) {
                    Some(pred) if self.plan.contains(&pred) => job_end[job],
                    _ => *self.sub.boundary.prev_job_end.get(job).unwrap_or(&0),
                };
                for m in self.sub.allowed_machines(op) {
                    let free = *machine_end
                        .get(&m)
                        .or_else(|| self.sub.boundary.prev_machine_end.get(&m))
                        .unwrap_or(&0);
                    let start = release.max(ready).max(free);
                    let end = start + self.sub.duration(op, m);
                    let step_obj = match self.sub.objective {
                        ObjectiveKind::Makespan => partial_obj.max(end),
                        ObjectiveKind::TotalStartDelay => partial_obj + (start - release),
                        ObjectiveKind::StartPlusEndDelay => {
                            let target = o.target_end_time.unwrap_or(end);
                            partial_obj + (start - release) + (end - target).max(0)
                        }
                    };
                    // Regular objective: partial value lower-bounds any
                    // completion, so prune against the incumbent.
                    if let Some((best_obj, _)) = &self.best {
                        if step_obj >= *best_obj {
                            continue;
                        }
                    }
                    let saved_machine = machine_end.insert(m, end);
                    let saved_job = job_end.insert(*job, end);
                    next[ji] += 1;
                    partial.insert(op, m, start);
                    self.go(next, machine_end, job_end, partial, step_obj, placed + 1);
                    partial.assignment.remove(&op);
                    partial.start.remove(&op);
                    next[ji] -= 1;
                    match saved_job {
                        Some(v) => job_end.insert(*job, v),
                        None => job_end.remove(job),
                    };
                    match saved_machine {
                        Some(v) => machine_end.insert(m, v),
                        None => machine_end.remove(&m),
                    };
                }
            }
        }
    }

    let mut dfs = Dfs { sub, plan: &plan, jobs: &jobs, best: None };
    let mut next = vec![0usize; jobs.len()];
    let mut machine_end = BTreeMap::new();
    let mut job_end = BTreeMap::new();
    let mut partial = Solution::default();
    dfs.go(&mut next, &mut machine_end, &mut job_end, &mut partial, 0, 0);
    if sub.plan_ops.is_empty() {
        return Ok(Solution::default());
    }
    Ok(dfs.best.expect("nonempty plan always has a schedule").1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{check_feasibility_with, FjspInstance, Operation};
    use crate::{JobId, Time};

    fn op(job: JobId, k: usize, compat: &[(MachineId, Time)]) -> Operation {
        Operation {
            job_id: job,
            op_index: k,
            compatible: compat.iter().copied().collect(),
            release_time: None,
            target_end_time: None,
        }
    }

    fn chain_instance(durations: &[Time]) -> FjspInstance {
        let ops = durations
            .iter()
            .enumerate()
            .map(|(k, &d)| op(0, k + 1, &[(0, d)]))
            .collect();
        FjspInstance::new(1, vec![ops], ObjectiveKind::Makespan, 0).unwrap()
    }

    #[test]
    fn semi_active_decode_chain() {
        let inst = chain_instance(&[3, 4]);
        let sub = Subproblem::new(&inst, vec![OpId(0), OpId(1)]);
        let assignment: BTreeMap<OpId, MachineId> =
            [(OpId(0), 0), (OpId(1), 0)].into_iter().collect();
        let seqs: MachineSeqs = [(0, vec![OpId(0), OpId(1)])].into_iter().collect();
        let sol = schedule_from_order(&sub, &assignment, &seqs).unwrap();
        assert_eq!(sol.start[&OpId(0)], 0);
        assert_eq!(sol.start[&OpId(1)], 3);

        let mut shifted = sub.clone();
        shifted.boundary.prev_machine_end.insert(0, 10);
        let sol = schedule_from_order(&shifted, &assignment, &seqs).unwrap();
        assert_eq!(sol.start[&OpId(0)], 10);
        assert_eq!(sol.start[&OpId(1)], 13);
    }

    #[test]
    fn release_binds_over_machine_availability() {
        let mut o = op(0, 1, &[(0, 2)]);
        o.release_time = Some(7);
        let inst = FjspInstance::new(1, vec![vec![o]], ObjectiveKind::Makespan, 0).unwrap();
        let mut sub = Subproblem::new(&inst, vec![OpId(0)]);
        sub.boundary.prev_machine_end.insert(0, 4);
        let assignment = [(OpId(0), 0)].into_iter().collect();
        let seqs: MachineSeqs = [(0, vec![OpId(0)])].into_iter().collect();
        let sol = schedule_from_order(&sub, &assignment, &seqs).unwrap();
        assert_eq!(sol.start[&OpId(0)], 7);
    }

    #[test]
    fn cyclic_machine_order_rejected() {
        // Machine sequence (o2, o1) against job precedence o1 -> o2 on the
        // same machine is a cycle.
        let inst = chain_instance(&[3, 4]);
        let sub = Subproblem::new(&inst, vec![OpId(0), OpId(1)]);
        let assignment: BTreeMap<OpId, MachineId> =
            [(OpId(0), 0), (OpId(1), 0)].into_iter().collect();
        let seqs: MachineSeqs = [(0, vec![OpId(1), OpId(0)])].into_iter().collect();
        assert!(matches!(
            schedule_from_order(&sub, &assignment, &seqs),
            Err(SubsolverError::InfeasibleOrder)
        ));
    }

    #[test]
    fn empty_plan_yields_empty_solution() {
        let inst = chain_instance(&[3]);
        let sub = Subproblem::new(&inst, vec![]);
        let (sol, _, _) = build_initial(&sub);
        assert!(sol.is_empty());
        assert!(exact_solve(&sub).unwrap().is_empty());
    }

    #[test]
    fn forced_assignments_match_forced_decode() {
        // Two jobs, each op compatible with exactly one machine.
        let inst = FjspInstance::new(
            2,
            vec![
                vec![op(0, 1, &[(0, 3)]), op(0, 2, &[(1, 2)])],
                vec![op(1, 1, &[(1, 4)])],
            ],
            ObjectiveKind::Makespan,
            0,
        )
        .unwrap();
        let sub = Subproblem::new(&inst, vec![OpId(0), OpId(1), OpId(2)]);
        let (sol, assignment, seqs) = build_initial(&sub);
        let decoded = schedule_from_order(&sub, &assignment, &seqs).unwrap();
        assert_eq!(sol, decoded);
        assert!(check_feasibility_with(&inst, &sol, Some(&sub.boundary), None).is_empty());
    }

    #[test]
    fn zero_move_budget_returns_initial() {
        let inst = crate::gen::gen_makespan_instance(3, 3, 3, 3);
        let plan: Vec<OpId> = inst.all_ops().map(|(id, _)| id).collect();
        let sub = Subproblem::new(&inst, plan);
        let (init, _, _) = build_initial(&sub);
        let (sol, stats) = solve(&sub, Budget::MoveCount { max_moves: 0, stall_moves: 0 }, 1).unwrap();
        assert_eq!(sol, init);
        assert_eq!(stats.moves, 0);
        assert_eq!(stats.objective, stats.initial_objective);
    }

    #[test]
    fn solve_never_worse_than_initial_and_feasible() {
        for seed in 0..5 {
            let inst = crate::gen::gen_makespan_instance(100 + seed, 4, 4, 3);
            let plan: Vec<OpId> = inst.all_ops().map(|(id, _)| id).collect();
            let sub = Subproblem::new(&inst, plan);
            let (sol, stats) =
                solve(&sub, Budget::MoveCount { max_moves: 2000, stall_moves: 800 }, seed).unwrap();
            assert!(stats.objective <= stats.initial_objective);
            assert_eq!(sub.objective_of(&sol).unwrap(), stats.objective);
            assert!(check_feasibility_with(&inst, &sol, Some(&sub.boundary), None).is_empty());
        }
    }

    #[test]
    fn solve_is_deterministic_under_move_budget() {
        let inst = crate::gen::gen_delay_instance(77, 3, 3, 3);
        let plan: Vec<OpId> = inst.all_ops().map(|(id, _)| id).collect();
        let sub = Subproblem::new(&inst, plan);
        let b = Budget::MoveCount { max_moves: 3000, stall_moves: 1000 };
        let (s1, st1) = solve(&sub, b, 9).unwrap();
        let (s2, st2) = solve(&sub, b, 9).unwrap();
        assert_eq!(s1, s2);
        // elapsed_secs is wall time; everything else must reproduce.
        assert_eq!(st1.moves, st2.moves);
        assert_eq!(st1.initial_objective, st2.initial_objective);
        assert_eq!(st1.objective, st2.objective);
    }

    #[test]
    fn exact_single_op_picks_faster_machine() {
        let inst = FjspInstance::new(
            2,
            vec![vec![op(0, 1, &[(0, 4), (1, 2)])]],
            ObjectiveKind::Makespan,
            0,
        )
        .unwrap();
        let sub = Subproblem::new(&inst, vec![OpId(0)]);
        let sol = exact_solve(&sub).unwrap();
        assert_eq!(sol.assignment[&OpId(0)], 1);
        assert_eq!(sol.start[&OpId(0)], 0);
    }

    #[test]
    fn exact_chain_makespan_is_duration_sum() {
        let inst = chain_instance(&[2, 5, 3]);
        let sub = Subproblem::new(&inst, (0..3).map(OpId).collect());
        let sol = exact_solve(&sub).unwrap();
        assert_eq!(sub.objective_of(&sol).unwrap(), 10);
    }

    #[test]
    fn exact_cap_enforced() {
        let inst = chain_instance(&[1; 11]);
        let sub = Subproblem::new(&inst, (0..11).map(OpId).collect());
        assert!(matches!(
            exact_solve(&sub),
            Err(SubsolverError::CapExceeded(11, EXACT_CAP))
        ));
    }

    #[test]
    fn restriction_dominance() {
        // Fixing an op to its slower machine cannot beat the unrestricted
        // optimum.
        let inst = FjspInstance::new(
            2,
            vec![
                vec![op(0, 1, &[(0, 4), (1, 2)])],
                vec![op(1, 1, &[(0, 3), (1, 3)])],
            ],
            ObjectiveKind::Makespan,
            0,
        )
        .unwrap();
        let free = Subproblem::new(&inst, vec![OpId(0), OpId(1)]);
        let free_obj = free.objective_of(&exact_solve(&free).unwrap()).unwrap();
        let mut fixed = free.clone();
        fixed.fixed_assignment.insert(OpId(0), 0);
        let fixed_obj = fixed.objective_of(&exact_solve(&fixed).unwrap()).unwrap();
        assert!(fixed_obj >= free_obj);
    }

    #[test]
    fn broken_fixed_machine_drops_the_fix() {
        let inst = FjspInstance::new(
            2,
            vec![vec![op(0, 1, &[(0, 4), (1, 2)])]],
            ObjectiveKind::Makespan,
            0,
        )
        .unwrap();
        let mut sub = Subproblem::new(&inst, vec![OpId(0)]);
        sub.fixed_assignment.insert(OpId(0), 0);
        sub.unavailable_machines.insert(0);
        assert_eq!(sub.allowed_machines(OpId(0)), vec![1]);
        let sol = exact_solve(&sub).unwrap();
        assert_eq!(sol.assignment[&OpId(0)], 1);
    }

    #[test]
    fn warm_start_hint_keeps_allowed_machine() {
        let inst = FjspInstance::new(
            2,
            vec![vec![op(0, 1, &[(0, 4), (1, 2)])]],
            ObjectiveKind::Makespan,
            0,
        )
        .unwrap();
        let mut sub = Subproblem::new(&inst, vec![OpId(0)]);
        let mut warm = Solution::default();
        warm.insert(OpId(0), 0, 0);
        sub.warm_start = Some(warm);
        let (sol, _, _) = build_initial(&sub);
        // Hint wins even though machine 1 is faster.
        assert_eq!(sol.assignment[&OpId(0)], 0);
    }

    #[test]
    fn overlay_changes_planned_durations() {
        let inst = chain_instance(&[3, 4]);
        let mut sub = Subproblem::new(&inst, vec![OpId(0), OpId(1)]);
        let mut overlay = DurationOverlay::default();
        overlay.durations.insert(OpId(0), [(0, 6)].into_iter().collect());
        sub.duration_overlay = Some(overlay);
        let (sol, _, _) = build_initial(&sub);
        assert_eq!(sol.start[&OpId(1)], 6);
    }
}
