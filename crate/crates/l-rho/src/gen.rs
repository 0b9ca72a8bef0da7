//! Synthetic instance generation for both data distributions, machine
//! breakdown event schedules, and the observation-noise duration overlay.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::core::{DurationOverlay, FjspInstance, ObjectiveKind, OpId, Operation};
use crate::{MachineId, Time};

/// splitmix64 finalizer; used to derive independent seeds per
/// (instance, iteration, purpose) so adding a consumer never shifts
/// the draws of another.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e3779b97f4a7c15)
        .wrapping_add(salt.wrapping_mul(0xbf58476d1ce4e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Portable deterministic RNG for a (seed, salt) stream.
pub fn stream_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, salt))
}

/// Inclusive integer uniform draw.
fn uniform_time<R: Rng>(rng: &mut R, lo: Time, hi: Time) -> Time {
    rng.gen_range(lo..=hi)
}

/// Makespan distribution: each op is compatible with a uniformly sized
/// random machine subset; durations i.i.d. uniform integers in [1, 99].
pub fn gen_makespan_instance(
    seed: u64,
    num_machines: usize,
    num_jobs: usize,
    ops_per_job: usize,
) -> FjspInstance {
    assert!(num_machines >= 1 && num_jobs >= 1 && ops_per_job >= 1);
    let mut rng = stream_rng(seed, 0x6d616b65); // "make"
    let machines: Vec<MachineId> = (0..num_machines).collect();
    let jobs = (0..num_jobs)
        .map(|j| {
            (0..ops_per_job)
                .map(|k| {
                    let size = rng.gen_range(1..=num_machines);
                    let mut pool = machines.clone();
                    pool.shuffle(&mut rng);
                    let compatible: BTreeMap<MachineId, Time> = pool[..size]
                        .iter()
                        .map(|&m| (m, uniform_time(&mut rng, 1, 99)))
                        .collect();
                    Operation {
                        job_id: j,
                        op_index: k + 1,
                        compatible,
                        release_time: None,
                        target_end_time: None,
                    }
                })
                .collect()
        })
        .collect();
    FjspInstance::new(num_machines, jobs, ObjectiveKind::Makespan, seed).unwrap()
}

/// Delay distribution: every machine compatible, per-instance duration
/// bounds l_low ∈ {3,5,7,9}, l_high = l_low + U{9,12,15,18,21} (so
/// durations stay in [3, 30]); release times accumulate U[0,15] increments
/// per job; target end times = release + U[0,30].
pub fn gen_delay_instance(
    seed: u64,
    num_machines: usize,
    num_jobs: usize,
    ops_per_job: usize,
) -> FjspInstance {
    assert!(num_machines >= 1 && num_jobs >= 1 && ops_per_job >= 1);
    let mut rng = stream_rng(seed, 0x64656c61); // "dela"
    let l_low = *[3, 5, 7, 9].choose(&mut rng).unwrap();
    let l_high = l_low + *[9, 12, 15, 18, 21].choose(&mut rng).unwrap();
    let jobs = (0..num_jobs)
        .map(|j| {
            let mut release: Time = uniform_time(&mut rng, 0, 15);
            (0..ops_per_job)
                .map(|k| {
                    if k > 0 {
                        release += uniform_time(&mut rng, 0, 15);
                    }
                    let compatible: BTreeMap<MachineId, Time> = (0..num_machines)
                        .map(|m| (m, uniform_time(&mut rng, l_low, l_high)))
                        .collect();
                    let target = release + uniform_time(&mut rng, 0, 30);
                    Operation {
                        job_id: j,
                        op_index: k + 1,
                        compatible,
                        release_time: Some(release),
                        target_end_time: Some(target),
                    }
                })
                .collect()
        })
        .collect();
    FjspInstance::new(num_machines, jobs, ObjectiveKind::TotalStartDelay, seed).unwrap()
}

/// One machine-breakdown event: the machines in `down_machines` are
/// unavailable during [start, start + duration).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownEvent {
    pub start: Time,
    pub duration: Time,
    pub down_machines: BTreeSet<MachineId>,
}

impl BreakdownEvent {
    pub fn end(&self) -> Time {
        self.start + self.duration
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownSchedule {
    pub events: Vec<BreakdownEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakdownIntensity {
    pub dur: Time,
    pub w_lb: Time,
    pub w_ub: Time,
    pub p_b: f64,
}

impl BreakdownIntensity {
    pub const LOW: Self = BreakdownIntensity { dur: 100, w_lb: 400, w_ub: 600, p_b: 0.2 };
    pub const MID: Self = BreakdownIntensity { dur: 100, w_lb: 175, w_ub: 300, p_b: 0.35 };
    pub const HIGH: Self = BreakdownIntensity { dur: 50, w_lb: 100, w_ub: 200, p_b: 0.5 };
}

/// Generate breakdown events until the next start would exceed `horizon`.
/// First event starts at U[50,150]; successive gaps are dur + U[w_lb,w_ub];
/// each machine joins an event's down set i.i.d. with probability p_b.
pub fn gen_breakdowns(
    seed: u64,
    intensity: BreakdownIntensity,
    num_machines: usize,
    horizon: Time,
) -> BreakdownSchedule {
    assert!(horizon > 0);
    let mut rng = stream_rng(seed, 0x62726561); // "brea"
    let mut events = Vec::new();
    let mut start = uniform_time(&mut rng, 50, 150);
    while start <= horizon {
        let down_machines: BTreeSet<MachineId> = (0..num_machines)
            .filter(|_| rng.gen_bool(intensity.p_b))
            .collect();
        events.push(BreakdownEvent { start, duration: intensity.dur, down_machines });
        start += intensity.dur + uniform_time(&mut rng, intensity.w_lb, intensity.w_ub);
    }
    BreakdownSchedule { events }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub epsilon: f64,
    pub perturb_range: (Time, Time),
    pub clip: (Time, Time),
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel { epsilon: 0.2, perturb_range: (-5, 5), clip: (3, 30) }
    }
}

/// Build the observed-duration overlay for one RHO iteration. The first
/// `clean_count` operations of `plan_ops` (already in RHO order) are
/// observed perfectly; each later op is independently selected with
/// probability epsilon and has every (op, machine) duration perturbed by
/// U[-5, 5], then clipped to [3, 30]. Fresh draws per call.
pub fn observe_durations(
    instance: &FjspInstance,
    plan_ops: &[OpId],
    clean_count: usize,
    seed: u64,
    noise: &NoiseModel,
) -> DurationOverlay {
    assert!(clean_count <= plan_ops.len());
    let mut rng = stream_rng(seed, 0x6e6f6973); // "nois"
    let mut overlay = DurationOverlay::default();
    for &id in &plan_ops[clean_count..] {
        if !rng.gen_bool(noise.epsilon) {
            continue;
        }
        let perturbed: BTreeMap<MachineId, Time> = instance
            .op(id)
            .compatible
            .iter()
            .map(|(&m, &d)| {
                let delta =
                    uniform_time(&mut rng, noise.perturb_range.0, noise.perturb_range.1);
                (m, (d + delta).clamp(noise.clip.0, noise.clip.1))
            })
            .collect();
        overlay.durations.insert(id, perturbed);
    }
    overlay
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::rho_order;

    #[test]
    fn makespan_generator_is_deterministic() {
        let a = gen_makespan_instance(7, 5, 4, 3);
        let b = gen_makespan_instance(7, 5, 4, 3);
        assert_eq!(a, b);
        let c = gen_makespan_instance(8, 5, 4, 3);
        assert_ne!(a, c);
    }

    #[test]
    fn makespan_durations_in_range_and_subset_sized() {
        let inst = gen_makespan_instance(3, 6, 5, 4);
        for (_, op) in inst.all_ops() {
            assert!(!op.compatible.is_empty() && op.compatible.len() <= 6);
            for (&m, &d) in &op.compatible {
                assert!(m < 6);
                assert!((1..=99).contains(&d));
            }
            assert!(op.release_time.is_none() && op.target_end_time.is_none());
        }
    }

    #[test]
    fn single_machine_forces_full_compatibility() {
        let inst = gen_makespan_instance(11, 1, 3, 2);
        for (_, op) in inst.all_ops() {
            assert_eq!(op.compatible.keys().copied().collect::<Vec<_>>(), vec![0]);
        }
    }

    #[test]
    fn tiny_makespan_instance_shape() {
        let inst = gen_makespan_instance(42, 1, 1, 1);
        assert_eq!(inst.num_ops(), 1);
        let d = inst.op(OpId(0)).compatible[&0];
        assert!((1..=99).contains(&d));
    }

    #[test]
    fn delay_generator_contract() {
        let inst = gen_delay_instance(5, 4, 6, 5);
        assert_eq!(inst.objective, ObjectiveKind::TotalStartDelay);
        for job in &inst.jobs {
            let mut prev_release = None;
            for op in job {
                assert_eq!(op.compatible.len(), 4);
                for &d in op.compatible.values() {
                    assert!((3..=30).contains(&d));
                }
                let r = op.release_time.unwrap();
                let t = op.target_end_time.unwrap();
                assert!(t >= r && t <= r + 30);
                if let Some(p) = prev_release {
                    assert!(r >= p && r <= p + 15);
                }
                prev_release = Some(r);
            }
        }
        assert_eq!(inst, gen_delay_instance(5, 4, 6, 5));
    }

    #[test]
    fn breakdown_schedule_gaps_and_first_start() {
        let intensity = BreakdownIntensity::MID;
        let sched = gen_breakdowns(13, intensity, 5, 3000);
        assert!(!sched.events.is_empty());
        let first = sched.events[0].start;
        assert!((50..=150).contains(&first));
        for pair in sched.events.windows(2) {
            let gap = pair[1].start - pair[0].start;
            assert!(gap >= intensity.dur + intensity.w_lb);
            assert!(gap <= intensity.dur + intensity.w_ub);
            assert_eq!(pair[0].duration, intensity.dur);
        }
        for e in &sched.events {
            assert!(e.down_machines.iter().all(|&m| m < 5));
        }
    }

    #[test]
    fn breakdown_probability_extremes() {
        let all = BreakdownIntensity { p_b: 1.0, ..BreakdownIntensity::LOW };
        let none = BreakdownIntensity { p_b: 0.0, ..BreakdownIntensity::LOW };
        for e in &gen_breakdowns(1, all, 4, 2000).events {
            assert_eq!(e.down_machines.len(), 4);
        }
        for e in &gen_breakdowns(1, none, 4, 2000).events {
            assert!(e.down_machines.is_empty());
        }
    }

    #[test]
    fn noise_overlay_contract() {
        let inst = gen_delay_instance(9, 3, 5, 4);
        let order = rho_order(&inst).unwrap();
        let noise = NoiseModel::default();

        // epsilon = 0 → no perturbations at all.
        let quiet = NoiseModel { epsilon: 0.0, ..noise };
        assert!(observe_durations(&inst, &order, 0, 1, &quiet).durations.is_empty());

        // All ops observed cleanly → no perturbations regardless of epsilon.
        let loud = NoiseModel { epsilon: 1.0, ..noise };
        let ov = observe_durations(&inst, &order, order.len(), 1, &loud);
        assert!(ov.durations.is_empty());

        // Perturbed values clipped to [3, 30] and within ±5 of the truth.
        let ov = observe_durations(&inst, &order, 2, 1, &loud);
        assert_eq!(ov.durations.len(), order.len() - 2);
        for (&id, per_machine) in &ov.durations {
            for (&m, &d) in per_machine {
                assert!((3..=30).contains(&d));
                let truth = inst.duration(id, m).unwrap();
                assert!((d - truth).abs() <= 5);
            }
        }

        // Same seed reproduces, different seed may differ.
        assert_eq!(ov, observe_durations(&inst, &order, 2, 1, &loud));
    }

    #[test]
    fn duration_histogram_uniform_chi_squared() {
        // χ² goodness-of-fit against uniform on [1,99] over >= 10^4 draws;
        // 98 degrees of freedom, 1% critical value.
        let mut counts = [0u64; 99];
        let mut total = 0u64;
        for seed in 0..40 {
            let inst = gen_makespan_instance(1000 + seed, 6, 10, 8);
            for (_, op) in inst.all_ops() {
                for &d in op.compatible.values() {
                    counts[(d - 1) as usize] += 1;
                    total += 1;
                }
            }
        }
        assert!(total >= 10_000);
        let expected = total as f64 / 99.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let diff = c as f64 - expected;
                diff * diff / expected
            })
            .sum();
        let critical = {
            use statrs::distribution::{ChiSquared, ContinuousCDF};
            ChiSquared::new(98.0).unwrap().inverse_cdf(0.99)
        };
        assert!(chi2 < critical, "chi2 {chi2} >= critical {critical}");
    }

    #[test]
    fn mixed_streams_are_independent() {
        // Same base seed, different salts → different streams.
        assert_ne!(mix_seed(5, 1), mix_seed(5, 2));
        assert_eq!(mix_seed(5, 1), mix_seed(5, 1));
    }
}
