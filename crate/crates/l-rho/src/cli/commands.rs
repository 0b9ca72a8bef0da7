//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::analysis::{
    closed_form_errors, closed_form_errors_approx, empirical_pfix, first_random_rates,
    fit_linear_decay, monte_carlo_errors, AnalysisMethod,
};
use crate::core::{
    check_feasibility, improvement_metrics, Effort, FjspInstance, ObjectiveKind,
    RunReport,
};
use crate::gen::{
    gen_breakdowns, gen_delay_instance, gen_makespan_instance, mix_seed, BreakdownIntensity,
    BreakdownSchedule, NoiseModel,
};
use crate::learn::{collect_labels, forward, train_logged, MlpModel};
use crate::rho::{run_rho, FixStrategy, RhoParams};
use crate::subsolver::Budget;
use crate::{Scalar, Time};

use super::formats;
use super::{
    parse_budget, parse_seeds, AnalyzeArgs, CliError, CollectArgs, EvalArgs, GenArgs, RunArgs,
    SolveArgs, SweepArgs, TrainArgs,
};

// ---------------------------------------------------------------------------
// shared plumbing

/// A strategy named on the command line, instantiable per run.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategySpec {
    Default,
    WarmStart,
    First(f64),
    Random(f64),
    Oracle(usize),
    Learned,
}

impl StrategySpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let usage = || {
            CliError::Usage(format!(
                "strategy `{text}` must be default | warm-start | first:S | random:S | \
                 oracle:Q | learned"
            ))
        };
        let (head, arg) = match text.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (text, None),
        };
        match (head, arg) {
            ("default", None) => Ok(StrategySpec::Default),
            ("warm-start" | "warmstart", None) => Ok(StrategySpec::WarmStart),
            ("first", Some(a)) => Ok(StrategySpec::First(a.parse().map_err(|_| usage())?)),
            ("random", Some(a)) => Ok(StrategySpec::Random(a.parse().map_err(|_| usage())?)),
            ("oracle", Some(a)) => Ok(StrategySpec::Oracle(a.parse().map_err(|_| usage())?)),
            ("learned", None) => Ok(StrategySpec::Learned),
            _ => Err(usage()),
        }
    }

    pub fn instantiate(
        &self,
        model: Option<&MlpModel>,
        threshold: f64,
    ) -> Result<FixStrategy, CliError> {
        Ok(match *self {
            StrategySpec::Default => FixStrategy::Default,
            StrategySpec::WarmStart => FixStrategy::WarmStart,
            StrategySpec::First(sigma_f) => FixStrategy::First { sigma_f },
            StrategySpec::Random(sigma_r) => FixStrategy::Random { sigma_r },
            StrategySpec::Oracle(q) => FixStrategy::Oracle { q },
            StrategySpec::Learned => FixStrategy::Learned {
                model: Box::new(
                    model
                        .ok_or_else(|| {
                            CliError::Usage("learned strategy requires --model".into())
                        })?
                        .clone(),
                ),
                threshold,
            },
        })
    }
}

/// Expand instance arguments: directories contribute their *.json files in
/// name order.
pub fn gather_instances(paths: &[PathBuf]) -> Result<Vec<(PathBuf, FjspInstance)>, CliError> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut entries: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|e| e.extension().is_some_and(|x| x == "json"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::Usage("no instance files found".into()));
    }
    files
        .into_iter()
        .map(|f| formats::read_instance(&f).map(|i| (f, i)))
        .collect()
}

/// Upper bound on any reasonable schedule end: releases plus every
/// operation's worst-case duration. Used as the default breakdown horizon.
fn horizon_bound(instance: &FjspInstance) -> Time {
    let max_release = instance
        .all_ops()
        .filter_map(|(_, o)| o.release_time)
        .max()
        .unwrap_or(0);
    let total: Time = instance
        .all_ops()
        .map(|(_, o)| o.compatible.values().copied().max().unwrap_or(0))
        .sum();
    max_release + total
}

fn parse_events_preset(text: &str) -> Result<Option<BreakdownIntensity>, CliError> {
    match text {
        "none" => Ok(None),
        "low" => Ok(Some(BreakdownIntensity::LOW)),
        "mid" => Ok(Some(BreakdownIntensity::MID)),
        "high" => Ok(Some(BreakdownIntensity::HIGH)),
        other => Err(CliError::Usage(format!(
            "events preset `{other}` must be none | low | mid | high"
        ))),
    }
}

/// Per-instance run configuration resolved from the shared run flags.
pub struct RunSetup {
    pub params: RhoParams,
    pub intensity: Option<BreakdownIntensity>,
    pub event_seed: u64,
    pub horizon: Option<Time>,
    pub noise: Option<NoiseModel>,
    pub seed: u64,
}

impl RunSetup {
    pub fn from_args(args: &RunArgs) -> Result<Self, CliError> {
        Ok(RunSetup {
            // h/s are resolved per instance (they depend on |O|).
            params: RhoParams { h: 0, s: 0, budget: parse_budget(&args.budget)? },
            intensity: parse_events_preset(&args.events)?,
            event_seed: args.event_seed.unwrap_or_else(|| mix_seed(args.seed, 0xe7e)),
            horizon: args.horizon,
            noise: args
                .noise
                .then(|| NoiseModel { epsilon: args.noise_epsilon, ..NoiseModel::default() }),
            seed: args.seed,
        })
    }

    pub fn params_for(&self, args: &RunArgs, instance: &FjspInstance) -> RhoParams {
        let n = instance.num_ops();
        let h = args.h.unwrap_or_else(|| n.min(80)).min(n).max(1);
        let s = args.s.unwrap_or((3 * h).div_ceil(8)).min(h).max(1);
        RhoParams { h, s, ..self.params }
    }

    /// Breakdown schedule for the idx-th instance, when events are on.
    pub fn events_for(
        &self,
        idx: usize,
        instance: &FjspInstance,
    ) -> Option<BreakdownSchedule> {
        self.intensity.map(|intensity| {
            let horizon = self.horizon.unwrap_or_else(|| horizon_bound(instance));
            gen_breakdowns(
                mix_seed(self.event_seed, idx as u64),
                intensity,
                instance.num_machines,
                horizon,
            )
        })
    }
}

fn effort_columns(effort: &Effort) -> (&'static str, f64) {
    match effort {
        Effort::Seconds(s) => ("secs", *s),
        Effort::Moves(m) => ("moves", *m as f64),
    }
}

fn fmt_opt(v: Option<Scalar>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// gen

pub fn cmd_gen(args: &GenArgs) -> Result<(), CliError> {
    let seeds = parse_seeds(&args.seeds)?;
    fs::create_dir_all(&args.out_dir)?;
    for &seed in &seeds {
        let instance = match args.family.as_str() {
            "makespan" => gen_makespan_instance(seed, args.machines, args.jobs, args.ops),
            "delay" => gen_delay_instance(seed, args.machines, args.jobs, args.ops),
            "delay-targets" => {
                let base = gen_delay_instance(seed, args.machines, args.jobs, args.ops);
                FjspInstance::new(
                    base.num_machines,
                    base.jobs.clone(),
                    ObjectiveKind::StartPlusEndDelay,
                    seed,
                )?
            }
            other => {
                return Err(CliError::Usage(format!(
                    "family `{other}` must be makespan | delay | delay-targets"
                )))
            }
        };
        let path = args.out_dir.join(format!("instance-{seed:05}.json"));
        formats::write_instance(&path, &instance)?;
    }
    println!("wrote {} instance file(s) to {}", seeds.len(), args.out_dir.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// solve

pub fn cmd_solve(args: &SolveArgs) -> Result<(), CliError> {
    let instance = formats::read_instance(&args.instance)?;
    let setup = RunSetup::from_args(&args.run)?;
    let params = setup.params_for(&args.run, &instance);
    let model = args.model.as_deref().map(formats::read_model).transpose()?;
    let strategy =
        StrategySpec::parse(&args.strategy)?.instantiate(model.as_ref(), args.threshold)?;
    let events = setup.events_for(0, &instance);
    let (solution, report, trace) = run_rho(
        &instance,
        &params,
        &strategy,
        events.as_ref(),
        setup.noise.as_ref(),
        setup.seed,
    )?;
    if args.verify {
        let violations = check_feasibility(&instance, &solution, None);
        if !violations.is_empty() {
            return Err(CliError::Verification(format!(
                "{} violation(s), first: {:?}",
                violations.len(),
                violations[0]
            )));
        }
    }
    formats::write_solution(&args.out, &solution, &report.method, report.objective)?;
    if let Some(report_path) = &args.report {
        append_report_row(report_path, &args.instance, &params, setup.seed, &report, trace.len())?;
    }
    let (kind, effort) = effort_columns(&report.effort);
    println!(
        "{}: objective {} in {} iteration(s), effort {effort} {kind}",
        report.method,
        report.objective,
        trace.len()
    );
    Ok(())
}

fn append_report_row(
    path: &Path,
    instance: &Path,
    params: &RhoParams,
    seed: u64,
    report: &RunReport,
    iterations: usize,
) -> Result<(), CliError> {
    let fresh = !path.exists();
    let file = fs::OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::Writer::from_writer(file);
    if fresh {
        w.write_record([
            "instance", "method", "h", "s", "seed", "objective", "iterations",
            "effort_kind", "effort",
        ])?;
    }
    let (kind, effort) = effort_columns(&report.effort);
    w.write_record([
        instance.display().to_string(),
        report.method.clone(),
        params.h.to_string(),
        params.s.to_string(),
        seed.to_string(),
        report.objective.to_string(),
        iterations.to_string(),
        kind.to_string(),
        effort.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// collect

pub fn cmd_collect(args: &CollectArgs) -> Result<(), CliError> {
    if args.q < 1 {
        return Err(CliError::Usage("--q must be >= 1".into()));
    }
    let instances = gather_instances(&args.instances)?;
    let setup = RunSetup::from_args(&args.run)?;
    let insts: Vec<FjspInstance> = instances.iter().map(|(_, i)| i.clone()).collect();
    let first_params = setup.params_for(&args.run, &insts[0]);
    if insts.iter().any(|i| setup.params_for(&args.run, i) != first_params) {
        return Err(CliError::Usage(
            "collect requires instances of equal size (shared H and S)".into(),
        ));
    }
    let events: Option<Vec<BreakdownSchedule>> = setup.intensity.map(|_| {
        insts
            .iter()
            .enumerate()
            .map(|(idx, inst)| setup.events_for(idx, inst).unwrap())
            .collect()
    });
    let records = collect_labels(
        &insts,
        &first_params,
        args.q,
        events.as_deref(),
        setup.noise.as_ref(),
        setup.seed,
    )?;
    if records.is_empty() {
        return Err(CliError::Format(
            "no records collected (every rollout had a single iteration?)".into(),
        ));
    }
    formats::write_dataset(&args.out, &records)?;
    println!(
        "collected {} record(s) from {} instance(s) into {}",
        records.len(),
        insts.len(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let dataset = formats::read_dataset(&args.dataset)?;
    let config = crate::learn::TrainConfig {
        learning_rate: args.learning_rate,
        batch_size: args.batch_size,
        w_pos: args.w_pos,
        bracket_wide_w_pos: args.bracket_wide,
        steps: args.steps,
        eval_every: args.eval_every,
        hidden: args.hidden,
        seed: args.seed,
    };
    let (model, log) = train_logged(&dataset, &config)?;
    formats::write_model(&args.out, &model)?;
    if let Some(log_path) = &args.log {
        let mut w = csv::Writer::from_path(log_path)?;
        w.write_record([
            "step", "val_loss", "accuracy", "tpr", "tnr", "precision", "recall",
        ])?;
        for row in &log {
            w.write_record([
                row.step.to_string(),
                row.val_loss.to_string(),
                row.accuracy.to_string(),
                fmt_opt(row.tpr),
                fmt_opt(row.tnr),
                fmt_opt(row.precision),
                fmt_opt(row.recall),
            ])?;
        }
        w.flush()?;
    }
    if let Some(last) = log.last() {
        println!(
            "trained on {} record(s); final val loss {:.6}, accuracy {:.4}",
            dataset.len(),
            last.val_loss,
            last.accuracy
        );
    } else {
        println!("fitted normalizer only (zero training steps)");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// eval

struct EvalRow {
    instance: String,
    strategy: String,
    objective: Time,
    effort_kind: &'static str,
    effort: f64,
    oi_percent: Option<f64>,
    ti_percent: Option<f64>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let instances = gather_instances(&args.instances)?;
    let setup = RunSetup::from_args(&args.run)?;
    let model = args.model.as_deref().map(formats::read_model).transpose()?;

    let mut specs: Vec<(String, StrategySpec)> = Vec::new();
    for name in args.strategies.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        specs.push((name.to_string(), StrategySpec::parse(name)?));
    }
    if !specs.iter().any(|(_, s)| *s == StrategySpec::Default) {
        specs.insert(0, ("default".into(), StrategySpec::Default));
    }

    let per_instance: Result<Vec<Vec<EvalRow>>, CliError> = instances
        .par_iter()
        .enumerate()
        .map(|(idx, (path, instance))| {
            let params = setup.params_for(&args.run, instance);
            let events = setup.events_for(idx, instance);
            let run_seed = mix_seed(setup.seed, idx as u64);
            let mut rows = Vec::new();
            let mut baseline: Option<RunReport> = None;
            for (name, spec) in &specs {
                let strategy = spec.instantiate(model.as_ref(), args.threshold)?;
                let (_, report, _) = run_rho(
                    instance,
                    &params,
                    &strategy,
                    events.as_ref(),
                    setup.noise.as_ref(),
                    run_seed,
                )?;
                let (oi, ti) = match &baseline {
                    None => (Some(0.0), Some(0.0)), // default vs itself
                    Some(base) => {
                        let (oi, ti) = improvement_metrics(base, &report)?;
                        (Some(oi), Some(ti))
                    }
                };
                let (effort_kind, effort) = effort_columns(&report.effort);
                rows.push(EvalRow {
                    instance: path.display().to_string(),
                    strategy: name.clone(),
                    objective: report.objective,
                    effort_kind,
                    effort,
                    oi_percent: oi,
                    ti_percent: ti,
                });
                if baseline.is_none() {
                    baseline = Some(report);
                }
            }
            Ok(rows)
        })
        .collect();
    let rows: Vec<EvalRow> = per_instance?.into_iter().flatten().collect();

    let mut w = csv::Writer::from_path(&args.out)?;
    w.write_record([
        "kind", "instance", "strategy", "objective", "effort_kind", "effort",
        "oi_percent", "ti_percent", "oi_2se", "ti_2se", "oi_median", "ti_median",
    ])?;
    for r in &rows {
        w.write_record([
            "run".into(),
            r.instance.clone(),
            r.strategy.clone(),
            r.objective.to_string(),
            r.effort_kind.to_string(),
            r.effort.to_string(),
            fmt_opt(r.oi_percent),
            fmt_opt(r.ti_percent),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    for (name, _) in &specs {
        let ois: Vec<f64> =
            rows.iter().filter(|r| &r.strategy == name).filter_map(|r| r.oi_percent).collect();
        let tis: Vec<f64> =
            rows.iter().filter(|r| &r.strategy == name).filter_map(|r| r.ti_percent).collect();
        let efforts: Vec<f64> =
            rows.iter().filter(|r| &r.strategy == name).map(|r| r.effort).collect();
        let objectives: Vec<f64> =
            rows.iter().filter(|r| &r.strategy == name).map(|r| r.objective as f64).collect();
        w.write_record([
            "summary".into(),
            String::new(),
            name.clone(),
            format!("{}", mean(&objectives)),
            rows.iter()
                .find(|r| &r.strategy == name)
                .map(|r| r.effort_kind.to_string())
                .unwrap_or_default(),
            format!("{}", mean(&efforts)),
            format!("{}", mean(&ois)),
            format!("{}", mean(&tis)),
            format!("{}", 2.0 * stderr(&ois)),
            format!("{}", 2.0 * stderr(&tis)),
            format!("{}", median(&ois)),
            format!("{}", median(&tis)),
        ])?;
    }
    w.flush()?;
    println!(
        "evaluated {} strategy(ies) on {} instance(s) -> {}",
        specs.len(),
        instances.len(),
        args.out.display()
    );
    Ok(())
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn stderr(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

// ---------------------------------------------------------------------------
// sweep

/// The standard 13-point (|jobs|·ops, window) sweep grid of (H, S) pairs.
pub const DEFAULT_SWEEP_GRID: [(usize, usize); 13] = [
    (50, 15),
    (50, 20),
    (50, 25),
    (50, 30),
    (80, 20),
    (80, 25),
    (80, 30),
    (80, 35),
    (80, 40),
    (100, 20),
    (100, 30),
    (100, 40),
    (100, 50),
];

fn parse_grid(text: &str) -> Result<Vec<(usize, usize)>, CliError> {
    if text == "default" {
        return Ok(DEFAULT_SWEEP_GRID.to_vec());
    }
    text.split(',')
        .map(|pair| {
            let (h, s) = pair
                .trim()
                .split_once(':')
                .ok_or_else(|| CliError::Usage(format!("grid entry `{pair}` must be H:S")))?;
            let h = h.parse().map_err(|_| CliError::Usage(format!("bad H in `{pair}`")))?;
            let s = s.parse().map_err(|_| CliError::Usage(format!("bad S in `{pair}`")))?;
            Ok((h, s))
        })
        .collect()
}

fn parse_budgets(text: &str) -> Result<Vec<Budget>, CliError> {
    if text == "default" {
        return Ok(vec![
            Budget::WallClock { limit_secs: 15.0, stall_secs: 2.0 },
            Budget::WallClock { limit_secs: 30.0, stall_secs: 3.0 },
            Budget::WallClock { limit_secs: 60.0, stall_secs: 3.0 },
        ]);
    }
    text.split(',').map(|b| parse_budget(b.trim())).collect()
}

struct SweepPoint {
    h: usize,
    s: usize,
    budget: Budget,
    mean_objective: f64,
    mean_effort: f64,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let grid = parse_grid(&args.grid)?;
    let budgets = parse_budgets(&args.budgets)?;
    if grid.is_empty() || budgets.is_empty() {
        return Err(CliError::Usage("sweep grid and budget list must be nonempty".into()));
    }
    let rs: f64 = if args.rs == "inf" {
        f64::INFINITY
    } else {
        args.rs
            .parse()
            .map_err(|_| CliError::Usage(format!("bad --rs `{}`", args.rs)))?
    };
    if rs <= 0.0 {
        return Err(CliError::Usage("--rs must be positive".into()));
    }
    let spec = StrategySpec::parse(&args.strategy)?;
    if spec == StrategySpec::Learned {
        return Err(CliError::Usage("sweep does not support the learned strategy".into()));
    }
    let instances = gather_instances(&args.instances)?;

    let mut points = Vec::new();
    for &(h, s) in &grid {
        for &budget in &budgets {
            let results: Result<Vec<(f64, f64)>, CliError> = instances
                .par_iter()
                .enumerate()
                .map(|(idx, (_, instance))| {
                    let n = instance.num_ops();
                    let params =
                        RhoParams { h: h.min(n).max(1), s: s.min(h.min(n)).max(1), budget };
                    let strategy = spec.instantiate(None, 0.5)?;
                    let (_, report, _) =
                        run_rho(instance, &params, &strategy, None, None, mix_seed(args.seed, idx as u64))?;
                    Ok((report.objective as f64, report.effort.value()))
                })
                .collect();
            let results = results?;
            points.push(SweepPoint {
                h,
                s,
                budget,
                mean_objective: mean(&results.iter().map(|r| r.0).collect::<Vec<_>>()),
                mean_effort: mean(&results.iter().map(|r| r.1).collect::<Vec<_>>()),
            });
        }
    }

    // Bucketed line search: bucket settings by relative objective gap to
    // the best mean objective in steps of rs, then take the fastest
    // setting in the lowest nonempty bucket.
    let best_obj = points
        .iter()
        .map(|p| p.mean_objective)
        .fold(f64::INFINITY, f64::min)
        .max(f64::MIN_POSITIVE);
    let bucket_of = |p: &SweepPoint| -> u64 {
        if rs.is_infinite() {
            0
        } else {
            ((p.mean_objective / best_obj - 1.0) / rs).floor().max(0.0) as u64
        }
    };
    let selected = points
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            bucket_of(a)
                .cmp(&bucket_of(b))
                .then(a.mean_effort.partial_cmp(&b.mean_effort).unwrap())
        })
        .map(|(i, _)| i)
        .expect("nonempty grid");

    let mut w = csv::Writer::from_path(&args.out)?;
    w.write_record([
        "h", "s", "budget", "mean_objective", "mean_effort", "bucket", "selected",
    ])?;
    for (i, p) in points.iter().enumerate() {
        let budget = match p.budget {
            Budget::MoveCount { max_moves, stall_moves } => {
                format!("moves:{max_moves}:{stall_moves}")
            }
            Budget::WallClock { limit_secs, stall_secs } => {
                format!("secs:{limit_secs}:{stall_secs}")
            }
        };
        w.write_record([
            p.h.to_string(),
            p.s.to_string(),
            budget,
            p.mean_objective.to_string(),
            p.mean_effort.to_string(),
            bucket_of(p).to_string(),
            (i == selected).to_string(),
        ])?;
    }
    w.flush()?;
    let sel = &points[selected];
    println!(
        "selected H={} S={} (mean objective {}, mean effort {}) -> {}",
        sel.h,
        sel.s,
        sel.mean_objective,
        sel.mean_effort,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<(), CliError> {
    let dataset = formats::read_dataset(&args.dataset)?;
    if dataset.iter().any(|r| r.labels.is_none()) {
        return Err(CliError::Format("analysis requires a labeled dataset".into()));
    }
    // Windows at the tail of a run can be narrower; analyze the modal
    // overlap width.
    let mut width_counts = std::collections::BTreeMap::<usize, usize>::new();
    for r in &dataset {
        *width_counts.entry(r.overlap_count()).or_default() += 1;
    }
    let (&w, _) = width_counts
        .iter()
        .max_by_key(|&(&width, &count)| (count, width))
        .ok_or(CliError::Format("empty dataset".into()))?;
    let records: Vec<_> =
        dataset.iter().filter(|r| r.overlap_count() == w).cloned().collect();

    let (p_hat, p_se) = empirical_pfix(&records)?;
    let fit = fit_linear_decay(&p_hat)?;

    let prefix = &args.out_prefix;
    let mut pw = csv::Writer::from_path(format!("{prefix}_pfix.csv"))?;
    pw.write_record(["i", "x", "p_hat", "stderr"])?;
    for (i, (p, se)) in p_hat.iter().zip(&p_se).enumerate() {
        pw.write_record([
            (i + 1).to_string(),
            ((i + 1) as f64 / w as f64).to_string(),
            p.to_string(),
            se.to_string(),
        ])?;
    }
    pw.flush()?;

    let mut fw = csv::Writer::from_path(format!("{prefix}_fit.csv"))?;
    fw.write_record([
        "w", "b_raw", "m_raw", "b_clamped", "m_clamped", "slope_stderr", "expected_fix",
    ])?;
    fw.write_record([
        w.to_string(),
        fit.raw.b.to_string(),
        fit.raw.m.to_string(),
        fit.clamped.b.to_string(),
        fit.clamped.m.to_string(),
        fmt_opt(fit.slope_stderr),
        fit.clamped.expected_fix().to_string(),
    ])?;
    fw.flush()?;

    // Closed-form vs simulated FP/FN on the empirical persistence curve.
    let decay = fit.clamped;
    let pfix_emp: Vec<Scalar> = p_hat.iter().map(|p| p.clamp(0.0, 1.0)).collect();
    let mut ew = csv::Writer::from_path(format!("{prefix}_errors.csv"))?;
    ew.write_record([
        "method", "sigma", "fp_closed", "fn_closed", "fp_closed_approx", "fn_closed_approx",
        "fp_simulated", "fp_sim_stderr", "fn_simulated", "fn_sim_stderr", "alpha", "beta",
    ])?;
    for &sigma in &[0.2, 0.4, 0.6, 0.8] {
        let rates = first_random_rates(&decay, sigma).ok();
        for (name, method, rate) in [
            (
                "random",
                AnalysisMethod::Random { sigma },
                rates.as_ref().map(|r| r.random),
            ),
            (
                "first",
                AnalysisMethod::First { sigma },
                rates.as_ref().map(|r| r.first),
            ),
        ] {
            let cf = closed_form_errors(method, &decay);
            let approx = closed_form_errors_approx(method, &decay);
            let mc = monte_carlo_errors(method, &pfix_emp, args.trials, args.seed)?;
            ew.write_record([
                name.into(),
                sigma.to_string(),
                cf.expected_fp.to_string(),
                cf.expected_fn.to_string(),
                approx.expected_fp.to_string(),
                approx.expected_fn.to_string(),
                mc.fp_mean.to_string(),
                mc.fp_stderr.to_string(),
                mc.fn_mean.to_string(),
                mc.fn_stderr.to_string(),
                rate.map(|r| r.0.to_string()).unwrap_or_default(),
                rate.map(|r| r.1.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    ew.flush()?;

    // Plot-data series: empirical curve and fitted line, long format.
    let mut sw = csv::Writer::from_path(format!("{prefix}_series.csv"))?;
    sw.write_record(["series", "x", "y"])?;
    for (i, p) in p_hat.iter().enumerate() {
        sw.write_record([
            "empirical".into(),
            ((i + 1) as f64 / w as f64).to_string(),
            p.to_string(),
        ])?;
    }
    for i in 1..=w {
        sw.write_record([
            "fitted".into(),
            (i as f64 / w as f64).to_string(),
            fit.raw.pfix(i).to_string(),
        ])?;
    }
    sw.flush()?;

    if let Some(model_path) = &args.model {
        let model = formats::read_model(model_path)?;
        let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
        for rec in &records {
            let probs = forward(&model, rec)?;
            for (p, &y) in probs.iter().zip(rec.labels.as_ref().unwrap()) {
                match (*p >= args.threshold, y) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => tn += 1,
                }
            }
        }
        let total = tp + fp + fn_ + tn;
        let ratio = |num: usize, den: usize| {
            (den > 0).then(|| num as f64 / den as f64)
        };
        let mut cw = csv::Writer::from_path(format!("{prefix}_confusion.csv"))?;
        cw.write_record(["tp", "fp", "fn", "tn", "accuracy", "alpha", "beta"])?;
        cw.write_record([
            tp.to_string(),
            fp.to_string(),
            fn_.to_string(),
            tn.to_string(),
            if total > 0 {
                ((tp + tn) as f64 / total as f64).to_string()
            } else {
                String::new()
            },
            fmt_opt(ratio(fp, fp + tn)),
            fmt_opt(ratio(fn_, tp + fn_)),
        ])?;
        cw.flush()?;
    }

    println!(
        "analyzed {} record(s) at overlap width {w}; fitted b={:.4} m={:.4} -> {prefix}_*.csv",
        records.len(),
        fit.raw.b,
        fit.raw.m
    );
    Ok(())
}
