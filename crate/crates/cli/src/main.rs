//! `aggsim`: place deployments, build and check schedules, run experiment
//! configs and post-process their results.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aggsim_core::harness::{
    fit_scaling_exponent, read_results, run_and_save, summarize, summary_csv, ExperimentConfig, Policy,
    ResultRow,
};
use aggsim_core::{
    build_agg_plan, build_bisection_tree, build_clq_policy, build_knng, build_mst, build_rgg,
    compute_weights, mst_policy, raw_forwarding_policy, schedule_plan, schedule_tree, validate_schedule,
    verify_aggregate, Deployment, EnergyParams, FunctionKind, FunctionSpec, PathMode, PlanOptions,
    Schedule,
};
use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aggsim", version, about = "Energy-latency tradeoffs for in-network aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Place n nodes uniformly at unit density and print the deployment.
    Place {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Run an experiment config and write its result table.
    Run {
        config: PathBuf,
        /// Directory for the result file.
        #[arg(long, env = "AGGSIM_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, env = "AGGSIM_WORKERS")]
        workers: Option<String>,
    },
    /// Check a schedule file against the communication model and verify
    /// what the root computes.
    Validate {
        schedule: PathBuf,
        #[arg(long)]
        deployment: PathBuf,
        /// sum | knng:k | rgg:rho | complete
        #[arg(long, default_value = "sum")]
        function: String,
    },
    /// Print a graph on a deployment as an edge list.
    Graph {
        deployment: PathBuf,
        /// knng:k | rgg:rho | mst
        #[arg(long)]
        kind: String,
        /// Print maximal cliques instead of edges.
        #[arg(long)]
        cliques: bool,
    },
    /// Build a policy on a deployment and print its schedule.
    Schedule {
        deployment: PathBuf,
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long, default_value_t = 2.0)]
        nu: f64,
        #[arg(long, default_value = "sum")]
        function: String,
        #[arg(long, value_enum, default_value_t = Mode::Exact)]
        path_mode: Mode,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write the tree or plan.
        #[arg(long)]
        structure: Option<PathBuf>,
    },
    /// Fit a power law per policy group of a result table.
    Fit {
        results: PathBuf,
        #[arg(long, value_enum, default_value_t = XColumn::N)]
        x: XColumn,
        #[arg(long, value_enum, default_value_t = YColumn::Energy)]
        y: YColumn,
    },
    /// Per-point means with bootstrap intervals, as CSV.
    VizData {
        results: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Heuristic,
}

#[derive(Clone, Copy, ValueEnum)]
enum XColumn {
    N,
    Delta,
}

#[derive(Clone, Copy, ValueEnum)]
enum YColumn {
    Energy,
    LatencySlots,
    WallTimeMs,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_deployment(path: &Path) -> Result<Deployment> {
    Deployment::from_text(&read(path)?).with_context(|| format!("bad deployment {}", path.display()))
}

fn function_spec(name: &str, dep: &Deployment) -> Result<FunctionSpec> {
    let kind: FunctionKind = name.parse()?;
    Ok(FunctionSpec::build(kind, dep)?)
}

fn run(config: &Path, output_dir: Option<PathBuf>, workers: Option<String>) -> Result<()> {
    let mut cfg = ExperimentConfig::from_toml(&read(config)?)
        .with_context(|| format!("bad config {}", config.display()))?;
    cfg.apply_env(output_dir, workers)?;
    let rows = run_and_save(&cfg)?;
    let accepted = rows.iter().filter(|r| r.is_accepted()).count();
    let infeasible = rows.iter().filter(|r| r.status.starts_with("infeasible")).count();
    println!("{} trials, {accepted} accepted, {infeasible} infeasible", rows.len());
    if let Some(p) = &cfg.output {
        println!("results: {}", p.display());
    }
    Ok(())
}

fn validate(schedule: &Path, deployment: &Path, function: &str) -> Result<bool> {
    let dep = load_deployment(deployment)?;
    let s = Schedule::from_text(&read(schedule)?)?;
    let spec = function_spec(function, &dep)?;
    let v = validate_schedule(&s, &dep);
    let f = verify_aggregate(&s, &spec, dep.root());
    println!("slots {}", s.latency());
    println!("transmissions {}", s.transmission_count());
    print!("model: {v}");
    print!("function: {f}");
    Ok(v.is_empty() && f.passed())
}

fn graph(deployment: &Path, kind: &str, cliques: bool) -> Result<()> {
    let dep = load_deployment(deployment)?;
    let g = if kind == "mst" {
        build_mst(&dep)
    } else {
        match kind.parse::<FunctionKind>()? {
            FunctionKind::Knng(k) => build_knng(&dep, k)?,
            FunctionKind::Rgg(r) => build_rgg(&dep, r)?,
            _ => bail!("graph kind must be knng:k, rgg:rho or mst"),
        }
    };
    if cliques {
        print!("{}", aggsim_core::maximal_cliques(&g).to_text());
    } else {
        print!("{}", g.to_edge_list());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn schedule(
    deployment: &Path,
    policy: &str,
    delta: f64,
    nu: f64,
    function: &str,
    mode: Mode,
    output: Option<&Path>,
    structure: Option<&Path>,
) -> Result<()> {
    let dep = load_deployment(deployment)?;
    let params = EnergyParams::new(nu)?;
    let opts = PlanOptions::with_mode(match mode {
        Mode::Exact => PathMode::Exact,
        Mode::Heuristic => PathMode::Heuristic,
    });
    let (s, energy, text) = match policy.parse::<Policy>()? {
        Policy::Alg2 => {
            let t = build_bisection_tree(&dep);
            (schedule_tree(&t), aggsim_core::tree_energy(&t, &dep, &params), Some(t.to_text()))
        }
        Policy::PiAgg => {
            let ws = compute_weights(dep.len(), dep.dim(), &params, delta)?;
            let plan = build_agg_plan(&dep, &ws, &params, opts)?;
            (schedule_plan(&plan)?, plan.energy(&dep, &params), Some(plan.to_text()))
        }
        Policy::PiClq => {
            let spec = function_spec(function, &dep)?;
            let p = build_clq_policy(&dep, &spec, delta, &params, opts)?;
            let e = p.energy();
            (p.schedule, e, Some(p.plan.to_text()))
        }
        Policy::Mst => {
            let out = mst_policy(&dep, &params);
            let t = aggsim_core::baseline::mst_tree(&dep);
            (out.schedule, out.energy, Some(t.to_text()))
        }
        Policy::Raw => {
            let out = raw_forwarding_policy(&dep, &params);
            (out.schedule, out.energy, None)
        }
    };
    emit(&s.to_text(), output)?;
    if let (Some(path), Some(text)) = (structure, text) {
        emit(&text, Some(path))?;
    }
    eprintln!("slots {} energy {energy}", s.latency());
    Ok(())
}

fn fit(results: &Path, x: XColumn, y: YColumn) -> Result<()> {
    let rows = read_results(results)?;
    let xv = |r: &ResultRow| match x {
        XColumn::N => Some(r.n as f64),
        XColumn::Delta => Some(r.delta),
    };
    let yv = |r: &ResultRow| match y {
        YColumn::Energy => r.energy,
        YColumn::LatencySlots => r.latency_slots.map(|l| l as f64),
        YColumn::WallTimeMs => r.wall_time_ms,
    };
    // Group key excludes the x column; y values are averaged per x.
    let mut groups: BTreeMap<String, BTreeMap<u64, (f64, usize)>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.is_ok()) {
        let (Some(xx), Some(yy)) = (xv(r), yv(r)) else {
            continue;
        };
        let key = match x {
            XColumn::N => format!("{} {} d={} nu={} delta={}", r.policy, r.function, r.d, r.nu, r.delta_spec),
            XColumn::Delta => format!("{} {} d={} nu={} n={}", r.policy, r.function, r.d, r.nu, r.n),
        };
        let e = groups.entry(key).or_default().entry(xx.to_bits()).or_default();
        e.0 += yy;
        e.1 += 1;
    }
    println!("group,points,slope,intercept,r2");
    for (key, pts) in groups {
        let points: Vec<(f64, f64)> = pts.into_iter().map(|(x, (s, c))| (f64::from_bits(x), s / c as f64)).collect();
        match fit_scaling_exponent(&points) {
            Ok(f) => println!("{key},{},{:.6},{:.6},{:.6}", points.len(), f.slope, f.intercept, f.r_squared),
            Err(e) => eprintln!("{key}: {e}"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Place { n, d, seed, output } => {
            Deployment::place_uniform(n, d, seed).map_err(Into::into).and_then(|dep| emit(&dep.to_text(), output.as_deref()))
        }
        Command::Run { config, output_dir, workers } => run(&config, output_dir, workers),
        Command::Validate { schedule, deployment, function } => match validate(&schedule, &deployment, &function) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Graph { deployment, kind, cliques } => graph(&deployment, &kind, cliques),
        Command::Schedule {
            deployment,
            policy,
            delta,
            nu,
            function,
            path_mode,
            output,
            structure,
        } => schedule(&deployment, &policy, delta, nu, &function, path_mode, output.as_deref(), structure.as_deref()),
        Command::Fit { results, x, y } => fit(&results, x, y),
        Command::VizData { results, output } => read_results(&results)
            .map_err(Into::into)
            .and_then(|rows| Ok(summary_csv(&summarize(&rows))?))
            .and_then(|text| emit(&text, output.as_deref())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
