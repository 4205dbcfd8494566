//! Energy-latency tradeoff policies for in-network aggregation.
//!
//! Nodes are placed uniformly at unit density in `[0, n^(1/d)]^d`; node 0 is
//! the root. Every transmission over distance `R` costs `R^nu`, takes one
//! slot, and a node may either send or receive on one link per slot. The
//! crate builds aggregation trees and relay plans, turns them into
//! schedules, checks those schedules against the model and verifies that
//! the root computes the target function.
//!
//! ```
//! use aggsim_core::{
//!     build_agg_plan, compute_weights, schedule_plan, validate_schedule, verify_aggregate,
//!     Deployment, EnergyParams, FunctionSpec, PlanOptions,
//! };
//!
//! let dep = Deployment::place_uniform(256, 2, 7).unwrap();
//! let params = EnergyParams::new(4.0).unwrap();
//! let weights = compute_weights(256, 2, &params, 8.0).unwrap();
//! let plan = build_agg_plan(&dep, &weights, &params, PlanOptions::default()).unwrap();
//! let schedule = schedule_plan(&plan).unwrap();
//! assert!(schedule.latency() <= 8 + 8);
//! assert!(validate_schedule(&schedule, &dep).is_empty());
//! assert!(verify_aggregate(&schedule, &FunctionSpec::sum(256), 0).passed());
//! ```

pub mod baseline;
pub mod clique;
pub mod error;
pub mod geometry;
pub mod graphs;
pub mod harness;
pub mod schedule;
pub mod tradeoff;
pub mod tree;

pub use baseline::{mst_policy, raw_forwarding_policy, BaselineOutcome};
pub use clique::{
    assign_processors, build_clq_policy, build_forwarding_stage, min_clique_budget, CliquePolicy,
    FunctionKind, FunctionSpec,
};
pub use error::{Error, Result};
pub use geometry::{edge_energy, path_energy, region_bisect, Deployment, EnergyParams, Region};
pub use graphs::{
    build_knng, build_mst, build_rgg, max_degree, maximal_cliques, proper_edge_coloring, CliqueSet,
    EdgeColoring, UndirectedGraph,
};
pub use schedule::{
    schedule_plan, schedule_tree, validate_schedule, verify_aggregate, Payload, Schedule, Token,
    Transmission, ValidationReport, VerificationReport, Violation,
};
pub use tradeoff::{
    build_agg_plan, compute_weights, hop_bounded_path_exact, hop_bounded_path_heuristic,
    AggregationPlan, HopPath, PathMode, PlanOptions, PlanPath, Repair, WeightSchedule,
};
pub use tree::{
    build_bisection_tree, build_min_latency_tree, ceil_log2, tree_energy, tree_latency,
    AggregationTree,
};
