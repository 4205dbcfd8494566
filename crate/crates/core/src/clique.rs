//! Two-stage policy for clique-decomposable functions.
//!
//! Stage one forwards raw measurements over direct links to each clique's
//! processor, one color class of a proper edge coloring per slot. Stage two
//! aggregates the clique values to the root with the tradeoff plan, using
//! whatever latency budget remains.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{Deployment, EnergyParams};
use crate::graphs::{
    build_knng, build_rgg, max_degree, maximal_cliques, proper_edge_coloring, CliqueSet, EdgeColoring,
    UndirectedGraph,
};
use crate::schedule::{schedule_plan, Payload, Schedule, Token, Transmission};
use crate::tradeoff::{build_agg_plan, compute_weights, AggregationPlan, PlanOptions};

/// Shape of the function dependency graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FunctionKind {
    Sum,
    Knng(usize),
    Rgg(f64),
    Complete,
}

impl FromStr for FunctionKind {
    type Err = Error;

    /// Parses `sum`, `knng:<k>`, `rgg:<rho>` or `complete`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::param(format!("unknown function `{s}` (sum|knng:k|rgg:rho|complete)"));
        match s.split_once(':') {
            None if s == "sum" => Ok(Self::Sum),
            None if s == "complete" => Ok(Self::Complete),
            Some(("knng", k)) => k.parse().map(Self::Knng).map_err(|_| bad()),
            Some(("rgg", r)) => r.parse().map(Self::Rgg).map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for FunctionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Sum => write!(f, "sum"),
            Self::Knng(k) => write!(f, "knng:{k}"),
            Self::Rgg(r) => write!(f, "rgg:{r}"),
            Self::Complete => write!(f, "complete"),
        }
    }
}

/// A target function: its dependency graph, maximal cliques and the node
/// that computes each clique's term.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSpec {
    kind: FunctionKind,
    graph: UndirectedGraph,
    cliques: CliqueSet,
    processors: Vec<usize>,
}

impl FunctionSpec {
    /// The sum function: every node is its own clique.
    pub fn sum(n: usize) -> Self {
        Self {
            kind: FunctionKind::Sum,
            graph: UndirectedGraph::empty(n),
            cliques: CliqueSet::new((0..n).map(|v| vec![v]).collect()),
            processors: (0..n).collect(),
        }
    }

    /// Builds the dependency graph of `kind` on the deployment.
    pub fn build(kind: FunctionKind, dep: &Deployment) -> Result<Self> {
        let graph = match kind {
            FunctionKind::Sum => return Ok(Self::sum(dep.len())),
            FunctionKind::Knng(k) => build_knng(dep, k)?,
            FunctionKind::Rgg(rho) => build_rgg(dep, rho)?,
            FunctionKind::Complete => UndirectedGraph::complete(dep.len()),
        };
        Self::from_graph(kind, graph)
    }

    /// Wraps an explicit dependency graph.
    pub fn from_graph(kind: FunctionKind, graph: UndirectedGraph) -> Result<Self> {
        let cliques = maximal_cliques(&graph);
        let processors = assign_processors(&cliques)?;
        Ok(Self {
            kind,
            graph,
            cliques,
            processors,
        })
    }

    pub fn kind(&self) -> FunctionKind {
        self.kind
    }

    pub fn is_sum(&self) -> bool {
        self.kind == FunctionKind::Sum
    }

    pub fn node_count(&self) -> usize {
        self.graph.node_count()
    }

    pub fn graph(&self) -> &UndirectedGraph {
        &self.graph
    }

    pub fn cliques(&self) -> &CliqueSet {
        &self.cliques
    }

    pub fn processor(&self, clique: usize) -> usize {
        self.processors[clique]
    }

    pub fn processors(&self) -> &[usize] {
        &self.processors
    }

    /// Forwarding links `(member, processor)`, one per dependency edge used,
    /// ascending.
    pub fn forwarding_links(&self) -> Vec<(usize, usize)> {
        let mut links = BTreeSet::new();
        for (c, members) in self.cliques.cliques().iter().enumerate() {
            let p = self.processors[c];
            for &j in members {
                if j != p {
                    links.insert((j, p));
                }
            }
        }
        links.into_iter().collect()
    }

    /// The forwarding links as an undirected graph.
    pub fn forwarding_graph(&self) -> UndirectedGraph {
        UndirectedGraph::from_edges(self.node_count(), self.forwarding_links())
            .expect("forwarding links are dependency edges")
    }
}

/// Processor of each clique: its smallest member.
pub fn assign_processors(cliques: &CliqueSet) -> Result<Vec<usize>> {
    cliques
        .cliques()
        .iter()
        .enumerate()
        .map(|(c, members)| {
            members
                .iter()
                .copied()
                .min()
                .ok_or_else(|| Error::InvalidInput(format!("clique {c} is empty")))
        })
        .collect()
}

/// Stage one: forwarding link `(j, p)` colored `t` transmits `j`'s
/// measurement in slot `t`.
pub fn build_forwarding_stage(spec: &FunctionSpec, coloring: &EdgeColoring) -> Result<Schedule> {
    let f = spec.forwarding_graph();
    if !coloring.is_proper_for(&f) {
        return Err(Error::InvalidInput(
            "edge coloring is not proper on the forwarding links".into(),
        ));
    }
    let mut s = Schedule::new();
    for (j, p) in spec.forwarding_links() {
        let t = coloring.color(j, p).expect("every forwarding link is colored");
        s.push(
            t,
            Transmission {
                tx: j,
                rx: p,
                payload: Payload::Single(Token::Measurement(j)),
            },
        );
    }
    Ok(s)
}

/// Both stages of the clique policy on one deployment.
#[derive(Debug, Clone)]
pub struct CliquePolicy {
    pub forwarding: Schedule,
    pub plan: AggregationPlan,
    pub schedule: Schedule,
    /// Slots reserved for forwarding (`Δ + 1`, or 0 when nothing is forwarded).
    pub reserved: usize,
    pub forwarding_energy: f64,
    pub aggregation_energy: f64,
}

impl CliquePolicy {
    pub fn energy(&self) -> f64 {
        self.forwarding_energy + self.aggregation_energy
    }
}

/// Smallest budget the clique policy accepts for `spec`.
pub fn min_clique_budget(spec: &FunctionSpec) -> usize {
    if spec.forwarding_links().is_empty() {
        0
    } else {
        max_degree(spec.graph()) + 1
    }
}

/// Forwarding stage followed by the tradeoff plan built with budget
/// `delta - (Δ + 1)`, shifted past the forwarding slots.
pub fn build_clq_policy(
    dep: &Deployment,
    spec: &FunctionSpec,
    delta: f64,
    params: &EnergyParams,
    opts: PlanOptions,
) -> Result<CliquePolicy> {
    if spec.node_count() != dep.len() {
        return Err(Error::InvalidInput(format!(
            "function covers {} nodes, deployment has {}",
            spec.node_count(),
            dep.len()
        )));
    }
    let reserved = min_clique_budget(spec);
    if delta < reserved as f64 {
        return Err(Error::InfeasibleBudget {
            required: reserved as f64,
            given: delta,
        });
    }
    let coloring = proper_edge_coloring(&spec.forwarding_graph());
    let forwarding = build_forwarding_stage(spec, &coloring)?;
    let forwarding_energy = forwarding.energy(dep, params);

    let ws = compute_weights(dep.len(), dep.dim(), params, delta - reserved as f64)?;
    let plan = build_agg_plan(dep, &ws, params, opts)?;
    let aggregation = schedule_plan(&plan)?;
    let aggregation_energy = plan.energy(dep, params);

    let mut schedule = forwarding.clone();
    schedule.pad_to(forwarding.latency());
    schedule.append(&aggregation);
    Ok(CliquePolicy {
        forwarding,
        plan,
        schedule,
        reserved,
        forwarding_energy,
        aggregation_energy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{validate_schedule, verify_aggregate};
    use crate::tree::ceil_log2;

    fn nu(v: f64) -> EnergyParams {
        EnergyParams::new(v).unwrap()
    }

    #[test]
    fn parses_function_kinds() {
        assert_eq!("sum".parse::<FunctionKind>().unwrap(), FunctionKind::Sum);
        assert_eq!("knng:3".parse::<FunctionKind>().unwrap(), FunctionKind::Knng(3));
        assert_eq!("rgg:1.5".parse::<FunctionKind>().unwrap(), FunctionKind::Rgg(1.5));
        assert_eq!("complete".parse::<FunctionKind>().unwrap(), FunctionKind::Complete);
        assert!("knng:x".parse::<FunctionKind>().is_err());
        assert!("max".parse::<FunctionKind>().is_err());
        assert_eq!(FunctionKind::Knng(3).to_string(), "knng:3");
    }

    #[test]
    fn processor_examples() {
        let set = CliqueSet::new(vec![vec![7, 3, 5], vec![4], vec![0, 1], vec![0, 2]]);
        let p = assign_processors(&set).unwrap();
        let by_clique: Vec<(Vec<usize>, usize)> = set.cliques().iter().cloned().zip(p).collect();
        assert!(by_clique.contains(&(vec![3, 5, 7], 3)));
        assert!(by_clique.contains(&(vec![4], 4)));
        assert!(by_clique.contains(&(vec![0, 1], 0)));
        assert!(by_clique.contains(&(vec![0, 2], 0)));
        assert!(assign_processors(&CliqueSet::new(vec![vec![]])).is_err());
    }

    #[test]
    fn triangle_forwarding() {
        let spec = FunctionSpec::from_graph(FunctionKind::Complete, UndirectedGraph::complete(3)).unwrap();
        assert_eq!(spec.forwarding_links(), vec![(1, 0), (2, 0)]);
        let coloring = proper_edge_coloring(&spec.forwarding_graph());
        let s = build_forwarding_stage(&spec, &coloring).unwrap();
        assert_eq!(s.latency(), 2);
        let bad = EdgeColoring::from_map([((0, 1), 1), ((0, 2), 1)]);
        assert!(build_forwarding_stage(&spec, &bad).is_err());
    }

    #[test]
    fn sum_reduces_to_the_plan() {
        let dep = Deployment::place_uniform(64, 2, 3).unwrap();
        let spec = FunctionSpec::sum(64);
        assert!(spec.forwarding_links().is_empty());
        let policy = build_clq_policy(&dep, &spec, 8.0, &nu(4.0), PlanOptions::default()).unwrap();
        assert_eq!(policy.forwarding.latency(), 0);
        assert_eq!(policy.reserved, 0);
        let ws = compute_weights(64, 2, &nu(4.0), 8.0).unwrap();
        let plan = build_agg_plan(&dep, &ws, &nu(4.0), PlanOptions::default()).unwrap();
        assert_eq!(policy.plan, plan);
        assert_eq!(policy.schedule, schedule_plan(&plan).unwrap());
    }

    #[test]
    fn triangle_policy_delivers_the_clique_value() {
        let dep = Deployment::collinear(&[0.0, 1.0, 2.0], 1, 0).unwrap();
        let spec = FunctionSpec::from_graph(FunctionKind::Complete, UndirectedGraph::complete(3)).unwrap();
        assert!(matches!(
            build_clq_policy(&dep, &spec, 2.0, &nu(2.0), PlanOptions::default()),
            Err(Error::InfeasibleBudget { .. })
        ));
        let policy = build_clq_policy(&dep, &spec, 3.0, &nu(2.0), PlanOptions::default()).unwrap();
        assert!(validate_schedule(&policy.schedule, &dep).is_empty());
        let report = verify_aggregate(&policy.schedule, &spec, 0);
        assert!(report.passed(), "{report}");
        assert!(policy.schedule.latency() as u32 <= ceil_log2(3) + 3);
    }

    #[test]
    fn knng_policy_is_valid_and_within_budget() {
        for (n, seed) in [(64, 1), (200, 2), (512, 3)] {
            let dep = Deployment::place_uniform(n, 2, seed).unwrap();
            let spec = FunctionSpec::build(FunctionKind::Knng(3), &dep).unwrap();
            let need = min_clique_budget(&spec);
            let delta = (need + 4) as f64;
            let policy = build_clq_policy(&dep, &spec, delta, &nu(4.0), PlanOptions::default()).unwrap();
            assert!(policy.forwarding.latency() <= need);
            assert!(validate_schedule(&policy.schedule, &dep).is_empty());
            let report = verify_aggregate(&policy.schedule, &spec, dep.root());
            assert!(report.passed(), "n={n}: {report}");
            let bound = ceil_log2(n) as f64 + delta + policy.plan.repairs().len() as f64;
            assert!(policy.schedule.latency() as f64 <= bound);
            let all_edges: f64 = spec
                .graph()
                .edges()
                .iter()
                .map(|&(a, b)| dep.link_energy(a, b, &nu(4.0)))
                .sum();
            assert!(policy.forwarding_energy <= all_edges * (1.0 + 1e-12));
        }
    }
}
