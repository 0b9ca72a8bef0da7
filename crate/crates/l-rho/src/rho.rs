//! Rolling-horizon engine: window construction, boundary handoff, fix-set
//! strategies, execution (standard, breakdown-aware, noisy), and full-run
//! orchestration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::core::{
    evaluate_objective, rho_order, Boundary, CoreError, DurationOverlay, Effort,
    FjspInstance, OpId, RunReport, Solution,
};
use crate::gen::{mix_seed, observe_durations, BreakdownSchedule, NoiseModel};
use crate::learn::{predict, LearnError, MlpModel};
use crate::subsolver::{solve, Budget, SolveStats, Subproblem, SubsolverError};
use crate::{JobId, MachineId, Time};

#[derive(Debug, Error)]
pub enum RhoError {
    #[error("invalid RHO configuration: {0}")]
    Config(String),
    #[error("run stalled: no executable operations and no upcoming recovery")]
    Stuck,
    #[error(transparent)]
    Subsolver(#[from] SubsolverError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoParams {
    /// Planning window size, in operations.
    pub h: usize,
    /// Step size: operations committed per iteration.
    pub s: usize,
    pub budget: Budget,
}

impl Default for RhoParams {
    fn default() -> Self {
        RhoParams {
            h: 80,
            s: 30,
            budget: Budget::WallClock { limit_secs: 60.0, stall_secs: 3.0 },
        }
    }
}

impl RhoParams {
    pub fn validate(&self) -> Result<(), RhoError> {
        if self.s < 1 || self.s > self.h {
            return Err(RhoError::Config(format!(
                "step size {} must satisfy 1 <= S <= H = {}",
                self.s, self.h
            )));
        }
        Ok(())
    }
}

/// How the fix set of overlapping operations is chosen each iteration.
#[derive(Debug, Clone)]
pub enum FixStrategy {
    /// Fix nothing; solve each window from scratch.
    Default,
    /// Fix nothing, but seed the subsolver from the previous solution.
    WarmStart,
    /// Fix the first ⌊σ_F·|overlap|⌋ overlap ops in RHO order.
    First { sigma_f: f64 },
    /// Fix each overlap op independently with probability σ_R.
    Random { sigma_r: f64 },
    /// Look-ahead: solve the unrestricted window Q times and fix the ops
    /// whose assignment agrees with the previous iteration under the
    /// most-agreeing re-solve.
    Oracle { q: usize },
    /// Fix ops whose predicted persistence probability clears the threshold.
    Learned { model: Box<MlpModel>, threshold: f64 },
}

impl FixStrategy {
    pub fn name(&self) -> String {
        match self {
            FixStrategy::Default => "default".into(),
            FixStrategy::WarmStart => "warm_start".into(),
            FixStrategy::First { sigma_f } => format!("first({sigma_f})"),
            FixStrategy::Random { sigma_r } => format!("random({sigma_r})"),
            FixStrategy::Oracle { q } => format!("oracle(q={q})"),
            FixStrategy::Learned { threshold, .. } => format!("learned({threshold})"),
        }
    }
}

/// Snapshot of one RHO iteration before solving the restricted window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RhoState {
    /// Iteration counter r, 1-based.
    pub iteration: usize,
    /// Window operations, in RHO order.
    pub plan_ops: Vec<OpId>,
    /// plan_ops ∩ previous plan_ops, in RHO order.
    pub overlap_ops: Vec<OpId>,
    /// plan_ops \ previous plan_ops, in RHO order.
    pub new_ops: Vec<OpId>,
    /// The previous iteration's solved window.
    pub prev_solution: Solution,
    /// Everything committed so far.
    pub executed: Solution,
    /// Earliest-allowed times inherited from executed work (machine floors
    /// lifted past breakdown recoveries).
    pub boundary: Boundary,
    /// Machines down at the current time.
    pub unavailable_machines: BTreeSet<MachineId>,
    /// Machines that were down during the previous iteration's solve.
    pub prev_unavailable_machines: BTreeSet<MachineId>,
    /// Observed durations for this iteration, when noise is active.
    pub duration_overlay: Option<DurationOverlay>,
    /// Observed durations of the previous iteration (what the previous
    /// window was planned against).
    pub prev_duration_overlay: Option<DurationOverlay>,
}

/// Outcome of fix-set selection for one iteration.
#[derive(Debug, Clone, Default)]
pub struct FixDecision {
    pub fix_set: BTreeSet<OpId>,
    /// Per-overlap-op persistence labels, present when the oracle ran.
    pub oracle_labels: Option<BTreeMap<OpId, bool>>,
    /// Effort spent on unrestricted oracle solves (moves, seconds).
    pub oracle_moves: u64,
    pub oracle_secs: f64,
    /// Whether the restricted subproblem should be warm-started.
    pub warm_start: bool,
}

/// Per-iteration record kept by run_rho.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationTrace {
    pub state: RhoState,
    pub fix_set: BTreeSet<OpId>,
    pub oracle_labels: Option<BTreeMap<OpId, bool>>,
    pub oracle_moves: u64,
    pub oracle_secs: f64,
    /// The solved window schedule.
    pub solution: Solution,
    pub stats: SolveStats,
    /// Operations committed this iteration, in commit order.
    pub committed: Vec<OpId>,
}

/// Seed handed to the restricted subproblem solve of iteration r; exposed
/// so callers can reproduce a single window solve exactly.
pub fn subproblem_seed(seed: u64, iteration: usize) -> u64 {
    mix_seed(seed, iteration as u64 * 8)
}

fn oracle_seed(seed: u64, iteration: usize, q: usize) -> u64 {
    mix_seed(mix_seed(seed, iteration as u64 * 8 + 1), q as u64)
}

fn random_strategy_seed(seed: u64, iteration: usize) -> u64 {
    mix_seed(seed, iteration as u64 * 8 + 2)
}

fn noise_seed(seed: u64, iteration: usize) -> u64 {
    mix_seed(seed, iteration as u64 * 8 + 3)
}

/// First min(H, remaining) non-executed operations in RHO order. Under a
/// breakdown mask, a job whose next operation has no available machine is
/// skipped entirely (its later operations wait for the recovery).
pub fn get_plan_operations(
    instance: &FjspInstance,
    ordered_ops: &[OpId],
    h: usize,
    executed: &Solution,
    unavailable: &BTreeSet<MachineId>,
) -> Vec<OpId> {
    let mut plan = Vec::with_capacity(h);
    let mut ignored_jobs: BTreeSet<JobId> = BTreeSet::new();
    for &op in ordered_ops {
        if plan.len() == h {
            break;
        }
        if executed.contains(op) {
            continue;
        }
        let o = instance.op(op);
        if ignored_jobs.contains(&o.job_id) {
            continue;
        }
        if o.compatible.keys().all(|m| unavailable.contains(m)) {
            ignored_jobs.insert(o.job_id);
            continue;
        }
        plan.push(op);
    }
    plan
}

/// Per-job and per-machine maxima of executed end times (true durations).
pub fn build_boundary(instance: &FjspInstance, executed: &Solution) -> Boundary {
    let mut b = Boundary::default();
    for (&op, &m) in &executed.assignment {
        let end = executed.end(instance, op).expect("executed ops are complete");
        let job = instance.op(op).job_id;
        let je = b.prev_job_end.entry(job).or_insert(end);
        *je = (*je).max(end);
        let me = b.prev_machine_end.entry(m).or_insert(end);
        *me = (*me).max(end);
    }
    b
}

/// Choose the overlap operations to fix for this iteration. `subsolve(q)`
/// must solve the unrestricted window with the q-th oracle seed.
pub fn select_fix_set(
    strategy: &FixStrategy,
    instance: &FjspInstance,
    state: &RhoState,
    seed: u64,
    mut subsolve: impl FnMut(usize) -> Result<(Solution, SolveStats), SubsolverError>,
) -> Result<FixDecision, RhoError> {
    let mut decision = FixDecision::default();
    if state.iteration < 2 {
        decision.warm_start = matches!(strategy, FixStrategy::WarmStart);
        return Ok(decision);
    }
    match strategy {
        FixStrategy::Default => {}
        FixStrategy::WarmStart => decision.warm_start = true,
        FixStrategy::First { sigma_f } => {
            let take = (sigma_f * state.overlap_ops.len() as f64).floor() as usize;
            decision.fix_set = state.overlap_ops.iter().take(take).copied().collect();
        }
        FixStrategy::Random { sigma_r } => {
            use rand::Rng;
            let mut rng = crate::gen::stream_rng(seed, 0x66697872); // "fixr"
            decision.fix_set = state
                .overlap_ops
                .iter()
                .filter(|_| rng.gen_bool(*sigma_r))
                .copied()
                .collect();
        }
        FixStrategy::Oracle { q } => {
            if *q < 1 {
                return Err(RhoError::Config("Oracle requires Q >= 1".into()));
            }
            let mut best: Option<(usize, BTreeMap<OpId, bool>)> = None;
            for qi in 0..*q {
                let (sol, stats) = subsolve(qi)?;
                decision.oracle_moves += stats.moves;
                decision.oracle_secs += stats.elapsed_secs;
                let labels: BTreeMap<OpId, bool> = state
                    .overlap_ops
                    .iter()
                    .map(|&op| {
                        let agree = sol.assignment.get(&op)
                            == state.prev_solution.assignment.get(&op);
                        (op, agree)
                    })
                    .collect();
                let agreement = labels.values().filter(|&&v| v).count();
                // Ties go to the lowest q.
                if best.as_ref().map_or(true, |(b, _)| agreement > *b) {
                    best = Some((agreement, labels));
                }
            }
            let (_, labels) = best.expect("Q >= 1");
            decision.fix_set =
                labels.iter().filter(|(_, &v)| v).map(|(&op, _)| op).collect();
            decision.oracle_labels = Some(labels);
        }
        FixStrategy::Learned { model, threshold } => {
            let probs = predict(model, instance, state)?;
            decision.fix_set = state
                .overlap_ops
                .iter()
                .filter(|op| probs.get(op).copied().unwrap_or(0.0) >= *threshold)
                .copied()
                .collect();
        }
    }
    Ok(decision)
}

/// First S operations of the solved window by (start time, RHO order);
/// with `event_times` nonempty, commit in end-time order instead and halt
/// at the first operation whose execution window [start, end) contains an
/// event time.
pub fn get_step_operations(
    instance: &FjspInstance,
    plan_ops: &[OpId],
    s: usize,
    solution: &Solution,
    event_times: &[Time],
) -> Vec<OpId> {
    let rank: BTreeMap<OpId, usize> =
        plan_ops.iter().enumerate().map(|(i, &o)| (o, i)).collect();
    let mut ordered: Vec<OpId> = plan_ops.to_vec();
    if event_times.is_empty() {
        ordered.sort_by_key(|&op| (solution.start[&op], rank[&op]));
        ordered.truncate(s.min(ordered.len()));
        return ordered;
    }
    ordered.sort_by_key(|&op| (solution.end(instance, op).unwrap(), rank[&op]));
    let mut step = Vec::new();
    for op in ordered {
        if step.len() == s {
            break;
        }
        let start = solution.start[&op];
        let end = solution.end(instance, op).unwrap();
        if event_times.iter().any(|&t| start <= t && t < end) {
            break;
        }
        step.push(op);
    }
    step
}

/// Commit `commit_ops` (ordered by planned start) onto `executed`, lifting
/// each start to the earliest time feasible under true durations: the
/// maximum of the planned start, the machine's committed end, and the job
/// predecessor's committed end.
pub fn execute_with_noise(
    instance: &FjspInstance,
    executed: &Solution,
    commit_ops: &[OpId],
    planned: &Solution,
) -> Solution {
    let mut out = executed.clone();
    let boundary = build_boundary(instance, executed);
    let mut machine_free = boundary.prev_machine_end;
    let mut job_free = boundary.prev_job_end;
    for &op in commit_ops {
        let m = planned.assignment[&op];
        let job = instance.op(op).job_id;
        let start = planned.start[&op]
            .max(*machine_free.get(&m).unwrap_or(&0))
            .max(*job_free.get(&job).unwrap_or(&0));
        let end = start + instance.duration(op, m).unwrap();
        out.insert(op, m, start);
        machine_free.insert(m, end);
        job_free.insert(job, end);
    }
    out
}

/// Full rolling-horizon run. Returns the committed schedule, a report with
/// total solve effort (oracle look-ahead solves excluded), and the
/// per-iteration trace.
pub fn run_rho(
    instance: &FjspInstance,
    params: &RhoParams,
    strategy: &FixStrategy,
    events: Option<&BreakdownSchedule>,
    noise: Option<&NoiseModel>,
    seed: u64,
) -> Result<(Solution, RunReport, Vec<IterationTrace>), RhoError> {
    params.validate()?;
    let order = rho_order(instance)?;
    // All breakdown start/end boundary times, ascending.
    let boundaries: Vec<Time> = {
        let mut b: Vec<Time> = events
            .map(|ev| ev.events.iter().flat_map(|e| [e.start, e.end()]).collect())
            .unwrap_or_default();
        b.sort();
        b.dedup();
        b
    };
    let mut executed = Solution::default();
    let mut now: Time = 0;
    let mut prev_plan: BTreeSet<OpId> = BTreeSet::new();
    let mut prev_solution = Solution::default();
    let mut prev_mask: BTreeSet<MachineId> = BTreeSet::new();
    let mut prev_overlay: Option<DurationOverlay> = None;
    let mut r = 0usize;
    let mut total_moves = 0u64;
    let mut total_secs = 0.0f64;
    let mut trace = Vec::new();

    while executed.len() < instance.num_ops() {
        let mask: BTreeSet<MachineId> = events
            .map(|ev| {
                ev.events
                    .iter()
                    .filter(|e| e.start <= now && now < e.end())
                    .flat_map(|e| e.down_machines.iter().copied())
                    .collect()
            })
            .unwrap_or_default();
        let plan = get_plan_operations(instance, &order, params.h, &executed, &mask);
        if plan.is_empty() {
            // Everything runnable is blocked by the mask; jump to the next
            // breakdown boundary (a recovery) and replan.
            now = *boundaries.iter().find(|&&t| t > now).ok_or(RhoError::Stuck)?;
            continue;
        }
        r += 1;
        let overlap_ops: Vec<OpId> =
            plan.iter().copied().filter(|op| prev_plan.contains(op)).collect();
        let new_ops: Vec<OpId> =
            plan.iter().copied().filter(|op| !prev_plan.contains(op)).collect();

        let mut boundary = build_boundary(instance, &executed);
        if let Some(ev) = events {
            // A machine that has been down cannot be used before it
            // recovered, even if nothing was committed on it.
            for e in ev.events.iter().filter(|e| e.start <= now) {
                for &m in &e.down_machines {
                    let floor = boundary.prev_machine_end.entry(m).or_insert(0);
                    *floor = (*floor).max(e.end());
                }
            }
        }
        let overlay = noise.map(|nm| {
            observe_durations(
                instance,
                &plan,
                params.s.min(plan.len()),
                noise_seed(seed, r),
                nm,
            )
        });
        let state = RhoState {
            iteration: r,
            plan_ops: plan.clone(),
            overlap_ops,
            new_ops,
            prev_solution: prev_solution.clone(),
            executed: executed.clone(),
            boundary: boundary.clone(),
            unavailable_machines: mask.clone(),
            prev_unavailable_machines: prev_mask.clone(),
            duration_overlay: overlay.clone(),
            prev_duration_overlay: prev_overlay.clone(),
        };

        let decision = {
            let unrestricted_template = || {
                let mut sub = Subproblem::new(instance, plan.clone());
                sub.boundary = boundary.clone();
                sub.unavailable_machines = mask.clone();
                sub.duration_overlay = overlay.clone();
                sub
            };
            select_fix_set(
                strategy,
                instance,
                &state,
                random_strategy_seed(seed, r),
                |q| solve(&unrestricted_template(), params.budget, oracle_seed(seed, r, q)),
            )?
        };

        let mut sub = Subproblem::new(instance, plan.clone());
        sub.boundary = boundary;
        sub.unavailable_machines = mask.clone();
        sub.duration_overlay = overlay;
        for &op in &decision.fix_set {
            if let Some(&m) = prev_solution.assignment.get(&op) {
                sub.fixed_assignment.insert(op, m);
            }
        }
        if decision.warm_start && !prev_solution.is_empty() {
            sub.warm_start = Some(prev_solution.clone());
        }
        let (sol, stats) = solve(&sub, params.budget, subproblem_seed(seed, r))?;
        total_moves += stats.moves;
        total_secs += stats.elapsed_secs;

        // Commit up to S operations, lifting starts to true-duration
        // feasibility and halting at breakdown event boundaries.
        let rank: BTreeMap<OpId, usize> =
            plan.iter().enumerate().map(|(i, &o)| (o, i)).collect();
        let mut ordered: Vec<OpId> = plan.clone();
        if events.is_some() {
            ordered.sort_by_key(|&op| (sol.end_with(instance, op, sub.duration_overlay.as_ref()).unwrap(), rank[&op]));
        } else {
            ordered.sort_by_key(|&op| (sol.start[&op], rank[&op]));
        }
        let base = build_boundary(instance, &executed);
        let mut machine_free = base.prev_machine_end;
        let mut job_free = base.prev_job_end;
        let mut committed = Vec::new();
        let mut halted = false;
        for &op in &ordered {
            if committed.len() == params.s {
                break;
            }
            let m = sol.assignment[&op];
            let job = instance.op(op).job_id;
            let start = sol.start[&op]
                .max(*machine_free.get(&m).unwrap_or(&0))
                .max(*job_free.get(&job).unwrap_or(&0));
            let end = start + instance.duration(op, m).unwrap();
            if let Some(ev) = events {
                let crosses_boundary =
                    boundaries.iter().any(|&t| t > now && start <= t && t < end);
                let overlaps_down = ev.events.iter().any(|e| {
                    e.end() > now
                        && e.down_machines.contains(&m)
                        && start < e.end()
                        && end > e.start
                });
                if crosses_boundary || overlaps_down {
                    halted = true;
                    break;
                }
            }
            executed.insert(op, m, start);
            machine_free.insert(m, end);
            job_free.insert(job, end);
            committed.push(op);
            now = now.max(end);
        }
        if halted {
            // Cross into the next event boundary and re-optimize with the
            // updated availability.
            if let Some(&t) = boundaries.iter().find(|&&t| t > now) {
                now = t;
            }
        }

        trace.push(IterationTrace {
            state,
            fix_set: decision.fix_set,
            oracle_labels: decision.oracle_labels,
            oracle_moves: decision.oracle_moves,
            oracle_secs: decision.oracle_secs,
            solution: sol.clone(),
            stats,
            committed,
        });
        prev_plan = plan.into_iter().collect();
        prev_solution = sol;
        prev_mask = mask;
        prev_overlay = sub.duration_overlay;
    }

    let objective = evaluate_objective(instance, &executed)?;
    let effort = match params.budget {
        Budget::MoveCount { .. } => Effort::Moves(total_moves),
        Budget::WallClock { .. } => Effort::Seconds(total_secs),
    };
    let report = RunReport::new(strategy.name(), effort, objective);
    Ok((executed, report, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{check_feasibility, ObjectiveKind, Operation};
    use crate::gen::{gen_breakdowns, gen_delay_instance, gen_makespan_instance, BreakdownIntensity};

    fn move_budget() -> Budget {
        Budget::MoveCount { max_moves: 400, stall_moves: 150 }
    }

    #[test]
    fn plan_window_selection() {
        let inst = gen_makespan_instance(1, 2, 5, 1);
        let order = rho_order(&inst).unwrap();
        let none = BTreeSet::new();
        let plan = get_plan_operations(&inst, &order, 3, &Solution::default(), &none);
        assert_eq!(plan, order[..3].to_vec());

        let mut executed = Solution::default();
        executed.insert(order[0], 0, 0);
        let plan = get_plan_operations(&inst, &order, 3, &executed, &none);
        assert_eq!(plan, order[1..4].to_vec());

        let plan = get_plan_operations(&inst, &order, 10, &Solution::default(), &none);
        assert_eq!(plan.len(), 5);
    }

    #[test]
    fn plan_skips_fully_masked_jobs() {
        // Job 0 runnable only on machine 0; masking it removes the whole job.
        let inst = FjspInstance::new(
            2,
            vec![
                vec![
                    Operation { job_id: 0, op_index: 1, compatible: [(0, 2)].into_iter().collect(), release_time: None, target_end_time: None },
                    Operation { job_id: 0, op_index: 2, compatible: [(0, 2), (1, 2)].into_iter().collect(), release_time: None, target_end_time: None },
                ],
                vec![Operation { job_id: 1, op_index: 1, compatible: [(1, 3)].into_iter().collect(), release_time: None, target_end_time: None }],
            ],
            ObjectiveKind::Makespan,
            0,
        )
        .unwrap();
        let order = rho_order(&inst).unwrap();
        let mask: BTreeSet<MachineId> = [0].into_iter().collect();
        let plan = get_plan_operations(&inst, &order, 10, &Solution::default(), &mask);
        assert_eq!(plan.len(), 1);
        assert_eq!(inst.op(plan[0]).job_id, 1);
    }

    #[test]
    fn boundary_from_executed() {
        let inst = gen_makespan_instance(2, 3, 2, 2);
        assert!(build_boundary(&inst, &Solution::default()).prev_job_end.is_empty());
        let mut executed = Solution::default();
        // Two ops on machine 0 ending at different times.
        let (a, b) = (OpId(0), OpId(2));
        let ma = *inst.op(a).compatible.keys().next().unwrap();
        let mb = *inst.op(b).compatible.keys().next().unwrap();
        executed.insert(a, ma, 0);
        executed.insert(b, mb, 100);
        let bd = build_boundary(&inst, &executed);
        assert_eq!(bd.prev_job_end[&0], executed.end(&inst, a).unwrap());
        assert_eq!(bd.prev_job_end[&1], executed.end(&inst, b).unwrap());
    }

    #[test]
    fn step_operations_by_start_and_halt_rule() {
        let inst = FjspInstance::new(
            1,
            vec![
                vec![Operation { job_id: 0, op_index: 1, compatible: [(0, 3)].into_iter().collect(), release_time: None, target_end_time: None }],
                vec![Operation { job_id: 1, op_index: 1, compatible: [(0, 3)].into_iter().collect(), release_time: None, target_end_time: None }],
                vec![Operation { job_id: 2, op_index: 1, compatible: [(0, 3)].into_iter().collect(), release_time: None, target_end_time: None }],
            ],
            ObjectiveKind::Makespan,
            0,
        )
        .unwrap();
        let plan = vec![OpId(0), OpId(1), OpId(2)];
        let mut sol = Solution::default();
        sol.insert(OpId(0), 0, 0);
        sol.insert(OpId(1), 0, 5);
        sol.insert(OpId(2), 0, 2);
        let step = get_step_operations(&inst, &plan, 2, &sol, &[]);
        assert_eq!(step, vec![OpId(0), OpId(2)]);
        assert_eq!(get_step_operations(&inst, &plan, 9, &sol, &[]).len(), 3);

        // Breakdown halt: windows [0,3) and [3,6); event at t=4 is inside
        // the second window, so only the first op executes.
        let mut sol = Solution::default();
        sol.insert(OpId(0), 0, 0);
        sol.insert(OpId(1), 0, 3);
        let step = get_step_operations(&inst, &plan[..2], 2, &sol, &[4]);
        assert_eq!(step, vec![OpId(0)]);
    }

    #[test]
    fn noise_lift_rule() {
        // Planned back-to-back ops, but the first one's true duration is 7:
        // the second lifts from 5 to 7.
        let inst = FjspInstance::new(
            1,
            vec![vec![
                Operation { job_id: 0, op_index: 1, compatible: [(0, 7)].into_iter().collect(), release_time: None, target_end_time: None },
                Operation { job_id: 0, op_index: 2, compatible: [(0, 2)].into_iter().collect(), release_time: None, target_end_time: None },
            ]],
            ObjectiveKind::Makespan,
            0,
        )
        .unwrap();
        let mut planned = Solution::default();
        planned.insert(OpId(0), 0, 0); // believed duration 5
        planned.insert(OpId(1), 0, 5);
        let out = execute_with_noise(&inst, &Solution::default(), &[OpId(0), OpId(1)], &planned);
        assert_eq!(out.start[&OpId(0)], 0);
        assert_eq!(out.start[&OpId(1)], 7);
        assert!(check_feasibility(&inst, &out, None).is_empty());

        // Overlay equal to truth → committed starts equal planned starts.
        let mut exact = Solution::default();
        exact.insert(OpId(0), 0, 0);
        exact.insert(OpId(1), 0, 7);
        let out = execute_with_noise(&inst, &Solution::default(), &[OpId(0), OpId(1)], &exact);
        assert_eq!(out, exact);
    }

    #[test]
    fn full_run_completes_and_is_feasible() {
        let inst = gen_makespan_instance(21, 3, 4, 3);
        let params = RhoParams { h: 6, s: 3, budget: move_budget() };
        let (sol, report, trace) =
            run_rho(&inst, &params, &FixStrategy::Default, None, None, 5).unwrap();
        assert_eq!(sol.len(), inst.num_ops());
        assert!(check_feasibility(&inst, &sol, None).is_empty());
        assert!(report.objective > 0);
        assert!(!trace.is_empty());
        // Window algebra at interior iterations: |overlap| = H − S.
        for t in &trace[1..] {
            if t.state.plan_ops.len() == params.h {
                assert_eq!(t.state.overlap_ops.len(), params.h - params.s);
            }
        }
    }

    #[test]
    fn default_equals_first_zero() {
        let inst = gen_delay_instance(33, 3, 4, 3);
        let params = RhoParams { h: 6, s: 3, budget: move_budget() };
        let (a, _, _) =
            run_rho(&inst, &params, &FixStrategy::Default, None, None, 7).unwrap();
        let (b, _, _) =
            run_rho(&inst, &params, &FixStrategy::First { sigma_f: 0.0 }, None, None, 7)
                .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn first_one_fixes_all_overlap() {
        let inst = gen_delay_instance(44, 3, 4, 3);
        let params = RhoParams { h: 6, s: 3, budget: move_budget() };
        let (_, _, trace) =
            run_rho(&inst, &params, &FixStrategy::First { sigma_f: 1.0 }, None, None, 7)
                .unwrap();
        for t in &trace[1..] {
            let overlap: BTreeSet<OpId> = t.state.overlap_ops.iter().copied().collect();
            assert_eq!(t.fix_set, overlap);
            // Fixing soundness: fixed ops keep their previous assignment.
            for op in &t.fix_set {
                assert_eq!(
                    t.solution.assignment[op],
                    t.state.prev_solution.assignment[op]
                );
            }
        }
    }

    #[test]
    fn oracle_fix_set_matches_labels_and_is_deterministic() {
        let inst = gen_delay_instance(55, 3, 4, 3);
        let params = RhoParams { h: 6, s: 3, budget: move_budget() };
        let run = || run_rho(&inst, &params, &FixStrategy::Oracle { q: 1 }, None, None, 9).unwrap();
        let (_, _, t1) = run();
        let (_, _, t2) = run();
        for (a, b) in t1.iter().zip(&t2) {
            assert_eq!(a.fix_set, b.fix_set);
        }
        for t in &t1[1..] {
            let labels = t.oracle_labels.as_ref().unwrap();
            let fixed: BTreeSet<OpId> =
                labels.iter().filter(|(_, &v)| v).map(|(&op, _)| op).collect();
            assert_eq!(t.fix_set, fixed);
            assert!(t.oracle_moves > 0 || t.oracle_secs >= 0.0);
        }
    }

    #[test]
    fn forced_assignments_make_oracle_fix_everything() {
        // Single machine: every re-solve reproduces the assignments.
        let inst = gen_makespan_instance(66, 1, 4, 3);
        let params = RhoParams { h: 6, s: 2, budget: move_budget() };
        let (_, _, trace) =
            run_rho(&inst, &params, &FixStrategy::Oracle { q: 2 }, None, None, 3).unwrap();
        for t in &trace[1..] {
            let overlap: BTreeSet<OpId> = t.state.overlap_ops.iter().copied().collect();
            assert_eq!(t.fix_set, overlap);
        }
    }

    #[test]
    fn degenerate_window_matches_direct_solve() {
        let inst = gen_makespan_instance(77, 3, 3, 3);
        let n = inst.num_ops();
        let params = RhoParams { h: n, s: n, budget: move_budget() };
        let (sol, _, trace) =
            run_rho(&inst, &params, &FixStrategy::Default, None, None, 11).unwrap();
        assert_eq!(trace.len(), 1);
        let sub = Subproblem::new(&inst, rho_order(&inst).unwrap());
        let (direct, _) = solve(&sub, params.budget, subproblem_seed(11, 1)).unwrap();
        assert_eq!(sol, direct);
    }

    #[test]
    fn breakdown_run_never_overlaps_down_intervals() {
        let inst = gen_makespan_instance(88, 4, 5, 4);
        let sched = gen_breakdowns(88, BreakdownIntensity::HIGH, 4, 600);
        let params = RhoParams { h: 8, s: 4, budget: move_budget() };
        let (sol, _, _) =
            run_rho(&inst, &params, &FixStrategy::Default, Some(&sched), None, 13).unwrap();
        assert_eq!(sol.len(), inst.num_ops());
        assert!(check_feasibility(&inst, &sol, None).is_empty());
        for (&op, &m) in &sol.assignment {
            let start = sol.start[&op];
            let end = sol.end(&inst, op).unwrap();
            for e in &sched.events {
                if e.down_machines.contains(&m) {
                    assert!(
                        end <= e.start || start >= e.end(),
                        "op {op:?} on machine {m} overlaps down interval [{}, {})",
                        e.start,
                        e.end()
                    );
                }
            }
        }
    }

    #[test]
    fn noisy_run_is_feasible_under_true_durations() {
        let inst = gen_delay_instance(99, 3, 5, 4);
        let params = RhoParams { h: 8, s: 4, budget: move_budget() };
        let nm = NoiseModel::default();
        let (sol, _, trace) =
            run_rho(&inst, &params, &FixStrategy::Default, None, Some(&nm), 17).unwrap();
        assert_eq!(sol.len(), inst.num_ops());
        let violations = check_feasibility(&inst, &sol, None);
        assert!(violations.is_empty(), "{violations:?}");
        // Lift rule: committed starts never precede planned starts.
        for t in &trace {
            for &op in &t.committed {
                assert!(sol.start[&op] >= t.solution.start[&op]);
            }
        }
    }

    #[test]
    fn run_is_deterministic_under_move_budget() {
        let inst = gen_delay_instance(111, 3, 4, 3);
        let params = RhoParams { h: 6, s: 3, budget: move_budget() };
        let run = |s| run_rho(&inst, &params, &FixStrategy::Random { sigma_r: 0.5 }, None, None, s).unwrap();
        let (a, ra, _) = run(4);
        let (b, rb, _) = run(4);
        assert_eq!(a, b);
        assert_eq!(ra.objective, rb.objective);
    }
}
