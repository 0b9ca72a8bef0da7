//! Oracle-label collection: roll out RHO with the look-ahead oracle and
//! emit one labeled StateRecord per iteration (from the second iteration
//! on, where an overlap exists).

use rayon::prelude::*;

use crate::core::{FjspInstance, ObjectiveKind};
use crate::gen::{BreakdownSchedule, NoiseModel};
use crate::learn::features::{extract_features, FeatureVariant, StateRecord};
use crate::rho::{run_rho, FixStrategy, RhoError, RhoParams};

/// Feature variant implied by an instance's objective and the run's
/// online-disturbance settings.
pub fn infer_variant(
    objective: ObjectiveKind,
    breakdowns: bool,
    noise: bool,
) -> FeatureVariant {
    match (objective, breakdowns, noise) {
        (ObjectiveKind::Makespan, false, _) => FeatureVariant::Makespan,
        (ObjectiveKind::Makespan, true, _) => FeatureVariant::MakespanBreakdown,
        (ObjectiveKind::TotalStartDelay, _, _) => FeatureVariant::StartDelay,
        (ObjectiveKind::StartPlusEndDelay, _, false) => FeatureVariant::StartEndDelay,
        (ObjectiveKind::StartPlusEndDelay, _, true) => FeatureVariant::StartEndDelayNoise,
    }
}

/// Run the oracle rollout on every instance and return the labeled
/// records. `events`, when given, must parallel `instances`. Instances are
/// processed in parallel; output order follows the input order.
pub fn collect_labels(
    instances: &[FjspInstance],
    params: &RhoParams,
    q: usize,
    events: Option<&[BreakdownSchedule]>,
    noise: Option<&NoiseModel>,
    seed: u64,
) -> Result<Vec<StateRecord>, RhoError> {
    if q < 1 {
        return Err(RhoError::Config("label collection requires Q >= 1".into()));
    }
    if let Some(ev) = events {
        if ev.len() != instances.len() {
            return Err(RhoError::Config(
                "breakdown schedules must parallel instances".into(),
            ));
        }
    }
    let per_instance: Result<Vec<Vec<StateRecord>>, RhoError> = instances
        .par_iter()
        .enumerate()
        .map(|(idx, instance)| {
            let variant =
                infer_variant(instance.objective, events.is_some(), noise.is_some());
            let ev = events.map(|e| &e[idx]);
            let run_seed = crate::gen::mix_seed(seed, idx as u64);
            let (_, _, trace) = run_rho(
                instance,
                params,
                &FixStrategy::Oracle { q },
                ev,
                noise,
                run_seed,
            )?;
            let mut records = Vec::new();
            for t in &trace {
                if t.state.iteration < 2 {
                    continue;
                }
                let labels = t.oracle_labels.as_ref().expect("oracle ran for r >= 2");
                let mut rec = extract_features(instance, &t.state, variant)?;
                rec.labels = Some(
                    t.state
                        .overlap_ops
                        .iter()
                        .map(|op| labels[op])
                        .collect(),
                );
                records.push(rec);
            }
            Ok(records)
        })
        .collect();
    Ok(per_instance?.into_iter().flatten().collect())
}
