//! Trial execution and the parallel experiment driver.

use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{DeltaSpec, ExperimentConfig, Policy};
use super::io::{CsvSink, Format, ResultRow};
use crate::baseline::{mst_policy, raw_forwarding_policy};
use crate::clique::{build_clq_policy, min_clique_budget, FunctionKind, FunctionSpec};
use crate::error::{Error, Result};
use crate::geometry::{Deployment, EnergyParams};
use crate::graphs::max_degree;
use crate::schedule::{schedule_plan, schedule_tree, validate_schedule, verify_aggregate, Schedule};
use crate::tradeoff::{build_agg_plan, compute_weights, PathMode, PlanOptions};
use crate::tree::{build_bisection_tree, ceil_log2, tree_energy};

/// One configuration point; trials differ only in their seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialPoint {
    pub policy: Policy,
    pub function: FunctionKind,
    pub n: usize,
    pub d: usize,
    pub nu: f64,
    pub delta: DeltaSpec,
    pub path_mode: PathMode,
    pub exact_cap: usize,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deployment seed of a trial, a counter-based hash of `(base, n, trial)`.
///
/// The seed ignores policy, exponent and budget, so every policy at a given
/// size sees the same node placements.
pub fn trial_seed(base: u64, n: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ n as u64) ^ trial as u64)
}

/// What a policy produced before validation.
struct Built {
    function: String,
    spec: FunctionSpec,
    schedule: Schedule,
    energy: f64,
    bound: Option<f64>,
    repairs: usize,
    fallbacks: usize,
    forwarding_slots: Option<usize>,
    max_degree: Option<usize>,
}

enum Outcome {
    Built(Box<Built>),
    Infeasible(String),
}

fn build(point: &TrialPoint, dep: &Deployment, delta: &mut f64) -> Result<Outcome> {
    let n = point.n;
    let params = EnergyParams::new(point.nu)?;
    let opts = PlanOptions {
        path_mode: point.path_mode,
        exact_cap: point.exact_cap,
    };
    let sum = |schedule, energy, bound, repairs, fallbacks| {
        Outcome::Built(Box::new(Built {
            function: "sum".into(),
            spec: FunctionSpec::sum(n),
            schedule,
            energy,
            bound,
            repairs,
            fallbacks,
            forwarding_slots: None,
            max_degree: None,
        }))
    };
    let k = ceil_log2(n) as f64;
    Ok(match point.policy {
        Policy::Alg2 => {
            *delta = point.delta.resolve(n, point.policy, 0);
            let t = build_bisection_tree(dep);
            sum(schedule_tree(&t), tree_energy(&t, dep, &params), Some(k), 0, 0)
        }
        Policy::PiAgg => {
            *delta = point.delta.resolve(n, point.policy, 0);
            let ws = compute_weights(n, point.d, &params, *delta)?;
            let plan = build_agg_plan(dep, &ws, &params, opts)?;
            let repairs = plan.repairs().len();
            sum(
                schedule_plan(&plan)?,
                plan.energy(dep, &params),
                Some(k + *delta + repairs as f64),
                repairs,
                plan.heuristic_fallbacks(),
            )
        }
        Policy::Mst => {
            *delta = point.delta.resolve(n, point.policy, 0);
            let out = mst_policy(dep, &params);
            sum(out.schedule, out.energy, None, 0, 0)
        }
        Policy::Raw => {
            *delta = point.delta.resolve(n, point.policy, 0);
            let out = raw_forwarding_policy(dep, &params);
            sum(out.schedule, out.energy, None, 0, 0)
        }
        Policy::PiClq => {
            let spec = FunctionSpec::build(point.function, dep)?;
            *delta = point.delta.resolve(n, point.policy, min_clique_budget(&spec));
            match build_clq_policy(dep, &spec, *delta, &params, opts) {
                Err(Error::InfeasibleBudget { required, given }) => {
                    Outcome::Infeasible(format!("budget {given} below the minimum {required}"))
                }
                Err(e) => return Err(e),
                Ok(p) => {
                    let repairs = p.plan.repairs().len();
                    Outcome::Built(Box::new(Built {
                        function: point.function.to_string(),
                        energy: p.energy(),
                        bound: Some(k + *delta + repairs as f64),
                        repairs,
                        fallbacks: p.plan.heuristic_fallbacks(),
                        forwarding_slots: Some(p.forwarding.latency()),
                        max_degree: Some(max_degree(spec.graph())),
                        schedule: p.schedule,
                        spec,
                    }))
                }
            }
        }
    })
}

/// Places nodes, builds and schedules the policy, then validates and
/// verifies the schedule. Deterministic in `(point, seed)` unless wall time
/// is recorded.
pub fn run_trial(point: &TrialPoint, trial: usize, seed: u64, record_wall_time: bool) -> ResultRow {
    let start = Instant::now();
    let mut row = ResultRow {
        policy: point.policy.to_string(),
        function: if point.policy == Policy::PiClq {
            point.function.to_string()
        } else {
            "sum".into()
        },
        n: point.n,
        d: point.d,
        nu: point.nu,
        delta_spec: point.delta.to_string(),
        delta: f64::NAN,
        seed,
        trial,
        energy: None,
        latency_slots: None,
        latency_bound: None,
        forwarding_slots: None,
        max_degree: None,
        violations: 0,
        verified: false,
        repairs: 0,
        fallbacks: 0,
        wall_time_ms: None,
        status: "ok".into(),
    };
    let mut delta = f64::NAN;
    let outcome = Deployment::place_uniform(point.n, point.d, seed).and_then(|dep| {
        let built = build(point, &dep, &mut delta)?;
        Ok((dep, built))
    });
    row.delta = delta;
    match outcome {
        Err(e) => row.status = format!("error: {e}"),
        Ok((_, Outcome::Infeasible(reason))) => row.status = format!("infeasible: {reason}"),
        Ok((dep, Outcome::Built(b))) => {
            row.function = b.function;
            row.violations = validate_schedule(&b.schedule, &dep).len();
            row.verified = verify_aggregate(&b.schedule, &b.spec, dep.root()).passed();
            row.energy = Some(b.energy);
            row.latency_slots = Some(b.schedule.latency());
            row.latency_bound = b.bound;
            row.repairs = b.repairs;
            row.fallbacks = b.fallbacks;
            row.forwarding_slots = b.forwarding_slots;
            row.max_degree = b.max_degree;
        }
    }
    if record_wall_time {
        row.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    row
}

/// Configuration points in output order: `n`, then `nu`, then budget, then
/// policy.
pub fn experiment_points(cfg: &ExperimentConfig) -> Vec<TrialPoint> {
    let mut points = Vec::new();
    for &n in &cfg.n_list {
        for &nu in &cfg.nu_list {
            for &delta in &cfg.delta_list {
                for &policy in &cfg.policies {
                    points.push(TrialPoint {
                        policy,
                        function: cfg.function,
                        n,
                        d: cfg.d,
                        nu,
                        delta,
                        path_mode: cfg.path_mode,
                        exact_cap: cfg.exact_cap,
                    });
                }
            }
        }
    }
    points
}

/// Runs every `(point, trial)` on a bounded worker pool. Rows are handed to
/// `sink` in `(point, trial)` order as soon as a contiguous prefix is done.
pub fn run_experiment_with<F>(cfg: &ExperimentConfig, sink: F) -> Result<Vec<ResultRow>>
where
    F: FnMut(&[ResultRow]) -> Result<()> + Send,
{
    cfg.validate()?;
    let points = experiment_points(cfg);
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.trials).map(move |t| (p, t)))
        .collect();

    struct Buffer<F> {
        slots: Vec<Option<ResultRow>>,
        next: usize,
        sink: F,
        error: Option<Error>,
    }
    let buffer = Mutex::new(Buffer {
        slots: vec![None; jobs.len()],
        next: 0,
        sink,
        error: None,
    });

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        jobs.par_iter().enumerate().for_each(|(idx, &(p, t))| {
            let point = &points[p];
            let row = run_trial(point, t, trial_seed(cfg.base_seed, point.n, t), cfg.record_wall_time);
            let mut b = buffer.lock().expect("result buffer poisoned");
            b.slots[idx] = Some(row);
            let start = b.next;
            let mut end = start;
            while end < b.slots.len() && b.slots[end].is_some() {
                end += 1;
            }
            if end > start && b.error.is_none() {
                let ready: Vec<ResultRow> = b.slots[start..end].iter().flatten().cloned().collect();
                if let Err(e) = (b.sink)(&ready) {
                    b.error = Some(e);
                }
            }
            b.next = end;
        });
    });
    let b = buffer.into_inner().expect("result buffer poisoned");
    if let Some(e) = b.error {
        return Err(e);
    }
    Ok(b.slots.into_iter().map(|r| r.expect("every job ran")).collect())
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    run_experiment_with(cfg, |_| Ok(()))
}

/// Runs the experiment and writes its output file, if one is configured.
/// CSV output grows as rows complete; JSON is written at the end.
pub fn run_and_save(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let Some(path) = cfg.output.as_deref() else {
        return run_experiment(cfg);
    };
    match Format::from_path(path) {
        Format::Csv => {
            let mut sink = CsvSink::create(path)?;
            run_experiment_with(cfg, move |rows| sink.append(rows))
        }
        Format::Json => {
            let rows = run_experiment(cfg)?;
            super::io::write_results(&rows, path, Format::Json)?;
            Ok(rows)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(policy: Policy, n: usize, delta: f64) -> TrialPoint {
        TrialPoint {
            policy,
            function: FunctionKind::Sum,
            n,
            d: 2,
            nu: 2.0,
            delta: DeltaSpec::Value(delta),
            path_mode: PathMode::Exact,
            exact_cap: 1 << 16,
        }
    }

    #[test]
    fn alg2_reaches_the_minimum() {
        let row = run_trial(&point(Policy::Alg2, 16, 0.0), 0, 1, false);
        assert_eq!(row.latency_slots, Some(4));
        assert!(row.is_accepted());
    }

    #[test]
    fn zero_budget_plan_equals_the_tree() {
        let a = run_trial(&point(Policy::Alg2, 300, 0.0), 0, 5, false);
        let b = run_trial(&point(Policy::PiAgg, 300, 0.0), 0, 5, false);
        assert_eq!(a.latency_slots, b.latency_slots);
        let (ea, eb) = (a.energy.unwrap(), b.energy.unwrap());
        assert!((ea - eb).abs() <= 1e-9 * ea);
    }

    #[test]
    fn trials_are_deterministic() {
        for policy in Policy::ALL {
            let p = TrialPoint {
                function: FunctionKind::Knng(2),
                delta: DeltaSpec::Forwarding(3.0),
                ..point(policy, 64, 0.0)
            };
            let a = run_trial(&p, 2, 99, false);
            assert_eq!(a, run_trial(&p, 2, 99, false));
            assert!(a.is_accepted(), "{a:?}");
        }
    }

    #[test]
    fn seeds_are_shared_across_policies_and_distinct_across_trials() {
        assert_eq!(trial_seed(1, 64, 0), trial_seed(1, 64, 0));
        assert_ne!(trial_seed(1, 64, 0), trial_seed(1, 64, 1));
        assert_ne!(trial_seed(1, 64, 0), trial_seed(1, 128, 0));
        assert_ne!(trial_seed(1, 64, 0), trial_seed(2, 64, 0));
    }

    #[test]
    fn infeasible_clique_budget_is_a_row() {
        let p = TrialPoint {
            function: FunctionKind::Knng(3),
            ..point(Policy::PiClq, 64, 1.0)
        };
        let row = run_trial(&p, 0, 3, false);
        assert!(row.status.starts_with("infeasible"), "{}", row.status);
        assert!(row.energy.is_none());
    }

    #[test]
    fn experiment_cardinality_and_order() {
        let mut cfg = ExperimentConfig::single(Policy::Alg2, 16, 2, 2.0, DeltaSpec::Value(0.0), 3);
        cfg.n_list = vec![16, 32];
        cfg.workers = Some(3);
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 6);
        let keys: Vec<(usize, usize)> = rows.iter().map(|r| (r.n, r.trial)).collect();
        assert_eq!(keys, vec![(16, 0), (16, 1), (16, 2), (32, 0), (32, 1), (32, 2)]);
        assert_eq!(rows, run_experiment(&cfg).unwrap());
    }

    #[test]
    fn sink_receives_rows_in_order() {
        let mut cfg = ExperimentConfig::single(Policy::Mst, 16, 2, 2.0, DeltaSpec::Value(0.0), 5);
        cfg.workers = Some(4);
        let mut seen = Vec::new();
        let rows = run_experiment_with(&cfg, |r| {
            seen.extend(r.iter().map(|r| r.trial));
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![0, 1, 2, 3, 4]);
        assert_eq!(rows.len(), 5);
        let err = run_experiment_with(&cfg, |_| Err(Error::param("sink full")));
        assert!(err.is_err());
    }
}
