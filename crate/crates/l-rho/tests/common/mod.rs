//! Helpers shared between integration test targets.

use std::collections::BTreeMap;

use l_rho::core::{OpId, Solution};
use l_rho::subsolver::Subproblem;
use l_rho::{MachineId, Time};

/// Minimum objective over every assignment × precedence-respecting dispatch
/// order, via plain recursion with no pruning. Independent of the solver's
/// DFS: for regular objectives an optimal schedule is semi-active, and
/// every semi-active schedule arises from list-scheduling its operations in
/// nondecreasing start order.
pub fn enumerated_optimum(sub: &Subproblem) -> Time {
    let ops = &sub.plan_ops;
    let mut assignments: Vec<BTreeMap<OpId, MachineId>> = vec![BTreeMap::new()];
    for &op in ops {
        let machines = sub.allowed_machines(op);
        assert!(!machines.is_empty());
        assignments = assignments
            .into_iter()
            .flat_map(|partial| {
                machines.iter().map(move |&m| {
                    let mut next = partial.clone();
                    next.insert(op, m);
                    next
                })
            })
            .collect();
    }
    let mut best = Time::MAX;
    for assignment in &assignments {
        let mut scheduled = Solution::default();
        dispatch_orders(sub, assignment, &mut scheduled, &mut best);
    }
    assert_ne!(best, Time::MAX, "enumeration found no schedule");
    best
}

/// Recursively dispatch any precedence-ready unscheduled op at its earliest
/// start; at the leaves, record the objective.
fn dispatch_orders(
    sub: &Subproblem,
    assignment: &BTreeMap<OpId, MachineId>,
    scheduled: &mut Solution,
    best: &mut Time,
) {
    if scheduled.len() == sub.plan_ops.len() {
        let obj = sub.objective_of(scheduled).unwrap();
        *best = (*best).min(obj);
        return;
    }
    for &op in &sub.plan_ops {
        if scheduled.contains(op) {
            continue;
        }
        let o = sub.instance.op(op);
        let pred_end = match sub.instance.job_pred(op) {
            Some(p) if sub.plan_ops.contains(&p) => {
                if !scheduled.contains(p) {
                    continue;
                }
                let pm = scheduled.assignment[&p];
                scheduled.start[&p] + sub.duration(p, pm)
            }
            _ => 0,
        };
        let m = assignment[&op];
        let machine_free = scheduled
            .assignment
            .iter()
            .filter(|&(_, &am)| am == m)
            .map(|(&other, _)| scheduled.start[&other] + sub.duration(other, m))
            .max()
            .unwrap_or(0);
        let floor = [
            o.release_time.unwrap_or(0),
            sub.boundary.prev_job_end.get(&o.job_id).copied().unwrap_or(0),
            sub.boundary.prev_machine_end.get(&m).copied().unwrap_or(0),
        ]
        .into_iter()
        .max()
        .unwrap();
        let start = pred_end.max(machine_free).max(floor);
        scheduled.insert(op, m, start);
        dispatch_orders(sub, assignment, scheduled, best);
        scheduled.assignment.remove(&op);
        scheduled.start.remove(&op);
    }
}
