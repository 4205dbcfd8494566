//! Latency-energy tradeoff policy for sum functions.
//!
//! The plan repeats the bisection construction of
//! [`build_bisection_tree`](crate::tree::build_bisection_tree), but a child
//! adopted in iteration `k` is joined to its parent through a least-energy
//! path with at most `w_k` relays. Each extra relay costs one slot of
//! latency and saves energy whenever `nu > d`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{region_bisect, sq_dist, Deployment, EnergyParams, Region};
use crate::tree::{ceil_log2, nearest_member};

/// Per-iteration relay budgets derived from the extra latency `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSchedule {
    weights: Vec<u32>,
    delta: f64,
    zeta: f64,
}

impl WeightSchedule {
    /// Explicit weights, for experiments that bypass the closed form.
    pub fn from_weights(weights: Vec<u32>) -> Self {
        let delta = weights.iter().map(|&w| w as f64).sum();
        Self {
            weights,
            delta,
            zeta: 0.0,
        }
    }

    /// Number of construction iterations, `ceil(log2 n)`.
    pub fn iterations(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn weight(&self, k: usize) -> u32 {
        self.weights[k]
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn total(&self) -> u64 {
        self.weights.iter().map(|&w| w as u64).sum()
    }
}

/// Relay budgets `w_0..w_{K-1}` for `K = ceil(log2 n)` iterations.
///
/// * `nu > d`: `w_k = floor(zeta * delta * 2^(k (1/nu - 1/d)))` with
///   `zeta = 1 - 2^(1/nu - 1/d)`, a geometric series summing to at most `delta`.
/// * `nu == d`: the constant `floor(delta / K)`.
/// * `nu < d`: all zero; relaying cannot beat direct links in order.
pub fn compute_weights(n: usize, d: usize, params: &EnergyParams, delta: f64) -> Result<WeightSchedule> {
    if n == 0 || d == 0 {
        return Err(Error::param(format!("weights need n >= 1 and d >= 1 (n={n}, d={d})")));
    }
    if !delta.is_finite() || delta < 0.0 {
        return Err(Error::param(format!("latency budget must be >= 0, got {delta}")));
    }
    let iterations = ceil_log2(n) as usize;
    let nu = params.nu();
    let dim = d as f64;
    let (weights, zeta) = if nu > dim {
        let ratio_exp = 1.0 / nu - 1.0 / dim;
        let zeta = 1.0 - 2f64.powf(ratio_exp);
        let w = (0..iterations)
            .map(|k| (zeta * delta * 2f64.powf(k as f64 * ratio_exp)).floor() as u32)
            .collect();
        (w, zeta)
    } else if nu == dim && iterations > 0 {
        let w = (delta / iterations as f64).floor() as u32;
        (vec![w; iterations], 1.0 / iterations as f64)
    } else {
        (vec![0; iterations], 0.0)
    };
    Ok(WeightSchedule { weights, delta, zeta })
}

/// How hop-bounded least-energy paths are found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathMode {
    /// Hop-indexed dynamic program, falling back to the heuristic above the
    /// configured cost cap.
    #[default]
    Exact,
    /// Snap equally spaced points on the segment to their nearest nodes.
    Heuristic,
}

impl std::str::FromStr for PathMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "heuristic" => Ok(Self::Heuristic),
            _ => Err(Error::param(format!("unknown path mode `{s}` (exact|heuristic)"))),
        }
    }
}

/// A relay path together with its energy.
#[derive(Debug, Clone, PartialEq)]
pub struct HopPath {
    pub nodes: Vec<usize>,
    pub energy: f64,
}

impl HopPath {
    pub fn hops(&self) -> usize {
        self.nodes.len() - 1
    }

    fn new(nodes: Vec<usize>, dep: &Deployment, params: &EnergyParams) -> Self {
        let energy = nodes.windows(2).map(|w| dep.link_energy(w[0], w[1], params)).sum();
        Self { nodes, energy }
    }
}

fn check_endpoints(dep: &Deployment, u: usize, v: usize) -> Result<()> {
    if u == v {
        return Err(Error::param(format!("path endpoints coincide at node {u}")));
    }
    if u >= dep.len() || v >= dep.len() {
        return Err(Error::param(format!("endpoint out of range ({u}, {v})")));
    }
    Ok(())
}

/// Candidates minus the endpoints, sorted and deduplicated.
fn relay_pool(candidates: &[usize], u: usize, v: usize, n: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&x| x != u && x != v && x < n)
        .collect();
    pool.sort_unstable();
    pool.dedup();
    pool
}

/// Minimum-energy path from `u` to `v` with at most `max_intermediate`
/// relays drawn from `candidates`.
///
/// Bellman–Ford with a hop limit over the complete geometric graph. Among
/// equal-energy paths the one with fewer hops wins, then the one whose node
/// sequence from `u` is lexicographically smallest.
pub fn hop_bounded_path_exact(
    dep: &Deployment,
    candidates: &[usize],
    u: usize,
    v: usize,
    max_intermediate: usize,
    params: &EnergyParams,
) -> Result<HopPath> {
    check_endpoints(dep, u, v)?;
    let pool = relay_pool(candidates, u, v, dep.len());
    Ok(exact_over_pool(dep, &pool, u, v, max_intermediate, params))
}

fn exact_over_pool(
    dep: &Deployment,
    pool: &[usize],
    u: usize,
    v: usize,
    max_intermediate: usize,
    params: &EnergyParams,
) -> HopPath {
    if max_intermediate == 0 || pool.is_empty() {
        return HopPath::new(vec![u, v], dep, params);
    }
    let m = pool.len();
    let budget = max_intermediate.min(m);
    // Slot m stands for the source u.
    let node = |x: usize| if x == m { u } else { pool[x] };

    // cost[x]: least energy from x to v with <= h relays; choice[h][x] is the
    // next hop and the budget level at which that choice was made.
    let mut cost: Vec<f64> = (0..=m).map(|x| dep.link_energy(node(x), v, params)).collect();
    let mut choice: Vec<Vec<(usize, usize)>> = vec![vec![(usize::MAX, 0); m + 1]];
    let mut source_cost = vec![cost[m]];
    for h in 1..=budget {
        let mut next_cost = cost.clone();
        let mut next_choice = choice[h - 1].clone();
        // The last round only needs the source row.
        let rows: Vec<usize> = if h == budget { vec![m] } else { (0..=m).collect() };
        for x in rows {
            let px = dep.pos(node(x));
            for (y, &ny) in pool.iter().enumerate() {
                if y == x {
                    continue;
                }
                let c = params.energy_from_sq(sq_dist(px, dep.pos(ny))) + cost[y];
                if c < next_cost[x] {
                    next_cost[x] = c;
                    next_choice[x] = (y, h);
                }
            }
        }
        cost = next_cost;
        choice.push(next_choice);
        source_cost.push(cost[m]);
    }

    // Fewest relays achieving the optimum, then follow the recorded choices.
    let best = source_cost[budget];
    let mut h = source_cost.iter().position(|&c| c == best).expect("optimum attained");
    let mut nodes = vec![u];
    let mut x = m;
    while h > 0 {
        let (y, level) = choice[h][x];
        if y == usize::MAX {
            break;
        }
        nodes.push(pool[y]);
        x = y;
        h = level - 1;
    }
    nodes.push(v);
    HopPath::new(nodes, dep, params)
}

/// Number of subdivision points used by the heuristic for a segment of
/// length `len`: all `max_intermediate` when the segment is at least that
/// long, otherwise `ceil(len) - 1` so that hops stay near unit length.
pub fn subdivision_count(len: f64, max_intermediate: usize) -> usize {
    if len >= max_intermediate as f64 {
        max_intermediate
    } else {
        (len.ceil() as usize).saturating_sub(1)
    }
}

/// Path through the candidates nearest to equally spaced points on the
/// segment `u v`, with loops and repeats removed.
pub fn hop_bounded_path_heuristic(
    dep: &Deployment,
    candidates: &[usize],
    u: usize,
    v: usize,
    max_intermediate: usize,
    params: &EnergyParams,
) -> Result<HopPath> {
    check_endpoints(dep, u, v)?;
    let pool = relay_pool(candidates, u, v, dep.len());
    Ok(heuristic_over_pool(dep, &pool, u, v, max_intermediate, params))
}

fn heuristic_over_pool(
    dep: &Deployment,
    pool: &[usize],
    u: usize,
    v: usize,
    max_intermediate: usize,
    params: &EnergyParams,
) -> HopPath {
    let (pu, pv) = (dep.pos(u), dep.pos(v));
    let points = if pool.is_empty() {
        0
    } else {
        subdivision_count(dep.dist(u, v), max_intermediate)
    };
    let mut seq = Vec::with_capacity(points + 2);
    seq.push(u);
    let mut target = vec![0.0; dep.dim()];
    for i in 1..=points {
        let t = i as f64 / (points + 1) as f64;
        for (j, x) in target.iter_mut().enumerate() {
            *x = pu[j] + t * (pv[j] - pu[j]);
        }
        let snapped = pool
            .iter()
            .copied()
            .min_by(|&a, &b| {
                sq_dist(&target, dep.pos(a))
                    .total_cmp(&sq_dist(&target, dep.pos(b)))
                    .then(a.cmp(&b))
            })
            .expect("pool is nonempty");
        seq.push(snapped);
    }
    seq.push(v);

    // Cut every loop: when a node reappears, drop everything since its first visit.
    let mut path: Vec<usize> = Vec::with_capacity(seq.len());
    for x in seq {
        if let Some(pos) = path.iter().position(|&y| y == x) {
            path.truncate(pos + 1);
        } else {
            path.push(x);
        }
    }
    HopPath::new(path, dep, params)
}

/// Options for plan construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanOptions {
    pub path_mode: PathMode,
    /// The exact search switches to the heuristic when
    /// `relay candidates * budget` exceeds this value.
    pub exact_cap: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            path_mode: PathMode::Exact,
            exact_cap: 1 << 16,
        }
    }
}

impl PlanOptions {
    pub fn with_mode(path_mode: PathMode) -> Self {
        Self {
            path_mode,
            ..Self::default()
        }
    }
}

/// A hop-bounded path from an adopted child to its parent.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanPath {
    /// Iteration index `k` (0-based) that created the path.
    pub level: usize,
    pub parent: usize,
    pub child: usize,
    /// Transmission order: `child, relays.., parent`.
    pub nodes: Vec<usize>,
}

impl PlanPath {
    pub fn hops(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn relays(&self) -> &[usize] {
        &self.nodes[1..self.nodes.len() - 1]
    }
}

/// A node left uncovered by the construction, attached directly to a
/// covered node of its region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Repair {
    pub node: usize,
    pub attach_to: usize,
}

/// Leveled collection of relay paths produced by the tradeoff policy.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationPlan {
    n: usize,
    root: usize,
    weights: WeightSchedule,
    levels: Vec<Vec<PlanPath>>,
    repairs: Vec<Repair>,
    heuristic_fallbacks: usize,
}

impl AggregationPlan {
    /// Assembles a plan from explicit parts, checking hop budgets and
    /// intra-level node-disjointness.
    pub fn from_parts(
        n: usize,
        root: usize,
        weights: WeightSchedule,
        levels: Vec<Vec<PlanPath>>,
        repairs: Vec<Repair>,
    ) -> Result<Self> {
        let plan = Self {
            n,
            root,
            weights,
            levels,
            repairs,
            heuristic_fallbacks: 0,
        };
        plan.check()?;
        Ok(plan)
    }

    fn check(&self) -> Result<()> {
        if self.levels.len() != self.weights.iterations() {
            return Err(Error::InvalidStructure(format!(
                "plan has {} levels but {} weights",
                self.levels.len(),
                self.weights.iterations()
            )));
        }
        for (k, paths) in self.levels.iter().enumerate() {
            let mut used = vec![false; self.n];
            for p in paths {
                if p.level != k || p.nodes.len() < 2 {
                    return Err(Error::InvalidStructure(format!("malformed path at level {k}")));
                }
                if p.nodes[0] != p.child || *p.nodes.last().unwrap() != p.parent {
                    return Err(Error::InvalidStructure(format!("path endpoints mismatch at level {k}")));
                }
                if p.hops() > self.weights.weight(k) as usize + 1 {
                    return Err(Error::InvalidStructure(format!(
                        "level-{k} path has {} hops, budget {}",
                        p.hops(),
                        self.weights.weight(k) + 1
                    )));
                }
                for &x in &p.nodes {
                    if x >= self.n {
                        return Err(Error::InvalidStructure(format!("node {x} out of range")));
                    }
                    if std::mem::replace(&mut used[x], true) {
                        return Err(Error::InvalidStructure(format!(
                            "node {x} appears twice in level {k}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn weights(&self) -> &WeightSchedule {
        &self.weights
    }

    pub fn levels(&self) -> &[Vec<PlanPath>] {
        &self.levels
    }

    pub fn repairs(&self) -> &[Repair] {
        &self.repairs
    }

    /// Paths whose exact search exceeded the cost cap.
    pub fn heuristic_fallbacks(&self) -> usize {
        self.heuristic_fallbacks
    }

    pub fn paths(&self) -> impl Iterator<Item = &PlanPath> {
        self.levels.iter().flatten()
    }

    /// Every transmission `(tx, rx)` of the plan, repairs included.
    pub fn links(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.paths()
            .flat_map(|p| p.nodes.windows(2).map(|w| (w[0], w[1])))
            .chain(self.repairs.iter().map(|r| (r.node, r.attach_to)))
    }

    /// Total transmission energy over the link multiset.
    pub fn energy(&self, dep: &Deployment, params: &EnergyParams) -> f64 {
        let hops: Vec<f64> = self.links().map(|(a, b)| dep.link_energy(a, b, params)).collect();
        crate::geometry::pairwise_sum(&hops)
    }

    /// Latency guaranteed by the window layout: `K + sum w_k + repairs`.
    pub fn latency_bound(&self) -> u64 {
        self.weights.iterations() as u64 + self.weights.total() + self.repairs.len() as u64
    }

    /// `level parent child nodes..` per path, then `repair node attach_to`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# aggsim plan\n");
        let _ = writeln!(out, "n {}", self.n);
        let _ = writeln!(out, "root {}", self.root);
        let w: Vec<String> = self.weights.weights().iter().map(u32::to_string).collect();
        let _ = writeln!(out, "weights {}", w.join(" "));
        for p in self.paths() {
            let nodes: Vec<String> = p.nodes.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{} {} {} {}", p.level, p.parent, p.child, nodes.join(" "));
        }
        for r in &self.repairs {
            let _ = writeln!(out, "repair {} {}", r.node, r.attach_to);
        }
        out
    }
}

/// Builds the tradeoff plan.
///
/// Each active node `i` bisects its region; the nearest node `j` of the far
/// half that has not yet been on any path becomes its child, joined by a
/// path of at most `w_k` relays drawn from `i`'s region before the split.
/// Path nodes are marked used; relays may serve again at other levels.
/// After the last iteration any node never reached is attached directly to
/// the nearest covered node of its region and reported as a repair.
pub fn build_agg_plan(
    dep: &Deployment,
    ws: &WeightSchedule,
    params: &EnergyParams,
    opts: PlanOptions,
) -> Result<AggregationPlan> {
    let n = dep.len();
    let root = dep.root();
    let iterations = ceil_log2(n) as usize;
    if ws.iterations() != iterations {
        return Err(Error::param(format!(
            "weight schedule has {} iterations, deployment needs {iterations}",
            ws.iterations()
        )));
    }
    let mut used = vec![false; n];
    used[root] = true;
    let mut active = vec![root];
    let mut owned: Vec<(Region, Vec<usize>)> = vec![(dep.region().clone(), (0..n).collect())];
    let mut levels: Vec<Vec<PlanPath>> = vec![Vec::new(); iterations];
    let mut fallbacks = 0;

    for (k, level) in levels.iter_mut().enumerate() {
        let budget = ws.weight(k) as usize;
        let snapshot = active.len();
        for idx in 0..snapshot {
            let i = active[idx];
            if owned[idx].1.len() < 2 {
                continue;
            }
            let (region, members) = &owned[idx];
            let split = region_bisect(region, members, i, dep)?;
            let eligible: Vec<usize> = split.give_members.iter().copied().filter(|&x| !used[x]).collect();
            if let Some(j) = nearest_member(dep, i, &eligible) {
                let (path, fell_back) = relay_path(dep, members, i, j, budget, params, opts);
                fallbacks += usize::from(fell_back);
                for &x in &path {
                    used[x] = true;
                }
                let mut nodes = path;
                nodes.reverse();
                level.push(PlanPath {
                    level: k,
                    parent: i,
                    child: j,
                    nodes,
                });
                active.push(j);
                owned.push((split.give, split.give_members));
            }
            // The owner keeps its own half even when the far half is
            // exhausted, so construction continues on its side.
            owned[idx] = (split.keep, split.keep_members);
        }
    }

    let mut repairs = Vec::new();
    for (_, members) in &owned {
        for &x in members {
            if !used[x] {
                let covered: Vec<usize> = members.iter().copied().filter(|&y| used[y]).collect();
                let y = nearest_member(dep, x, &covered).expect("region owner is covered");
                repairs.push(Repair { node: x, attach_to: y });
            }
        }
    }
    // Some unreached nodes may only be listed in regions that dropped out of
    // ownership; attach those to the nearest covered node overall.
    let listed: Vec<bool> = {
        let mut l = vec![false; n];
        for (_, members) in &owned {
            for &x in members {
                l[x] = true;
            }
        }
        l
    };
    let covered_all: Vec<usize> = (0..n).filter(|&y| used[y]).collect();
    for x in 0..n {
        if !used[x] && !listed[x] {
            let y = nearest_member(dep, x, &covered_all).expect("root is covered");
            repairs.push(Repair { node: x, attach_to: y });
        }
    }
    repairs.sort_by_key(|r| r.node);

    let mut plan = AggregationPlan::from_parts(n, root, ws.clone(), levels, repairs)?;
    plan.heuristic_fallbacks = fallbacks;
    Ok(plan)
}

/// Least-energy relay path from `i` to `j` inside `members`; the flag
/// reports a heuristic fallback under `PathMode::Exact`.
fn relay_path(
    dep: &Deployment,
    members: &[usize],
    i: usize,
    j: usize,
    budget: usize,
    params: &EnergyParams,
    opts: PlanOptions,
) -> (Vec<usize>, bool) {
    if budget == 0 {
        return (vec![i, j], false);
    }
    let pool = relay_pool(members, i, j, dep.len());
    let heuristic = heuristic_over_pool(dep, &pool, i, j, budget, params);
    if opts.path_mode == PathMode::Heuristic {
        return (heuristic.nodes, false);
    }
    let direct = dep.link_energy(i, j, params);
    let pruned = prune_pool(dep, &pool, i, j, budget, heuristic.energy.min(direct), params);
    if pruned.len().saturating_mul(budget) > opts.exact_cap {
        return (heuristic.nodes, true);
    }
    (exact_over_pool(dep, &pruned, i, j, budget, params).nodes, false)
}

/// Drops relays that cannot lie on any path cheaper than `upper`.
///
/// A path of `h <= budget + 1` hops through `x` has total length at least
/// `|ux| + |xv|`, and by convexity energy at least that length to the power
/// `nu` divided by `h^(nu - 1)`.
pub(crate) fn prune_pool(
    dep: &Deployment,
    pool: &[usize],
    u: usize,
    v: usize,
    budget: usize,
    upper: f64,
    params: &EnergyParams,
) -> Vec<usize> {
    let nu = params.nu();
    let limit = upper * ((budget + 1) as f64).powf(nu - 1.0) * (1.0 + 1e-9);
    pool.iter()
        .copied()
        .filter(|&x| (dep.dist(u, x) + dep.dist(x, v)).powf(nu) <= limit)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::build_bisection_tree;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn nu(v: f64) -> EnergyParams {
        EnergyParams::new(v).unwrap()
    }

    #[test]
    fn weight_examples() {
        let ws = compute_weights(16, 2, &nu(4.0), 10.0).unwrap();
        assert_eq!(ws.weights(), &[1, 1, 1, 0]);
        let ws = compute_weights(16, 2, &nu(2.0), 8.0).unwrap();
        assert_eq!(ws.weights(), &[2, 2, 2, 2]);
        let ws = compute_weights(16, 3, &nu(2.0), 100.0).unwrap();
        assert_eq!(ws.weights(), &[0, 0, 0, 0]);
        let ws = compute_weights(16, 2, &nu(4.0), 0.0).unwrap();
        assert_eq!(ws.total(), 0);
        assert!(compute_weights(16, 2, &nu(4.0), -1.0).is_err());
        assert!(compute_weights(16, 2, &nu(4.0), f64::NAN).is_err());
    }

    #[test]
    fn weights_never_exceed_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let n = rng.random_range(2..100_000);
            let d = rng.random_range(1..=3);
            let v = rng.random_range(1.0..6.0);
            let delta = rng.random_range(0.0..500.0);
            let ws = compute_weights(n, d, &nu(v), delta).unwrap();
            assert_eq!(ws.iterations(), ceil_log2(n) as usize);
            assert!(ws.total() as f64 <= delta + 1e-9, "n={n} d={d} nu={v} delta={delta}");
            assert!(ws.weights().windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn collinear_paths() {
        let dep = Deployment::collinear(&[0.0, 1.0, 2.0], 1, 0).unwrap();
        let p = hop_bounded_path_exact(&dep, &[1], 0, 2, 1, &nu(2.0)).unwrap();
        assert_eq!(p.nodes, vec![0, 1, 2]);
        assert!((p.energy - 2.0).abs() < 1e-12);
        let p = hop_bounded_path_exact(&dep, &[1], 0, 2, 0, &nu(2.0)).unwrap();
        assert_eq!(p.nodes, vec![0, 2]);
        assert!((p.energy - 4.0).abs() < 1e-12);
        let p = hop_bounded_path_heuristic(&dep, &[1], 0, 2, 1, &nu(2.0)).unwrap();
        assert_eq!(p.nodes, vec![0, 1, 2]);
        assert!(hop_bounded_path_exact(&dep, &[1], 1, 1, 1, &nu(2.0)).is_err());
        assert!(hop_bounded_path_heuristic(&dep, &[1], 0, 0, 1, &nu(2.0)).is_err());
    }

    #[test]
    fn subdivision_counts() {
        assert_eq!(subdivision_count(10.0, 3), 3);
        assert_eq!(subdivision_count(2.5, 5), 2);
        assert_eq!(subdivision_count(0.3, 5), 0);
        assert_eq!(subdivision_count(3.0, 3), 3);
    }

    /// Enumerates every sequence of distinct relays of length <= w.
    fn exhaustive(dep: &Deployment, pool: &[usize], u: usize, v: usize, w: usize, p: &EnergyParams) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn go(
            dep: &Deployment,
            pool: &[usize],
            at: usize,
            v: usize,
            left: usize,
            used: &mut Vec<bool>,
            acc: f64,
            p: &EnergyParams,
            best: &mut f64,
        ) {
            *best = best.min(acc + dep.link_energy(at, v, p));
            if left == 0 {
                return;
            }
            for (i, &x) in pool.iter().enumerate() {
                if !used[i] {
                    used[i] = true;
                    go(dep, pool, x, v, left - 1, used, acc + dep.link_energy(at, x, p), p, best);
                    used[i] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        go(dep, pool, u, v, w, &mut vec![false; pool.len()], 0.0, p, &mut best);
        best
    }

    #[test]
    fn exact_matches_exhaustive_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..150 {
            let n = rng.random_range(3..=8);
            let d = rng.random_range(1..=3);
            let dep = Deployment::place_uniform(n, d, trial).unwrap();
            let params = nu(rng.random_range(1.0..5.0));
            let w = rng.random_range(0..=n);
            let pool: Vec<usize> = (2..n).collect();
            let p = hop_bounded_path_exact(&dep, &pool, 0, 1, w, &params).unwrap();
            let best = exhaustive(&dep, &pool, 0, 1, w, &params);
            assert!((p.energy - best).abs() <= 1e-9 * best, "trial {trial}");
            assert!(p.hops() <= w + 1);
            assert_eq!(p.nodes[0], 0);
            assert_eq!(*p.nodes.last().unwrap(), 1);
            let mut seen = p.nodes.clone();
            seen.sort_unstable();
            seen.dedup();
            assert_eq!(seen.len(), p.nodes.len());
        }
    }

    #[test]
    fn exact_prefers_fewer_hops_on_ties() {
        // With nu = 1 every collinear route has the same energy.
        let dep = Deployment::collinear(&[0.0, 1.0, 2.0, 3.0], 1, 0).unwrap();
        let p = hop_bounded_path_exact(&dep, &[1, 2], 0, 3, 2, &nu(1.0)).unwrap();
        assert_eq!(p.nodes, vec![0, 3]);
    }

    #[test]
    fn pruning_keeps_the_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for trial in 0..40 {
            let dep = Deployment::place_uniform(200, 2, 100 + trial).unwrap();
            let params = nu(rng.random_range(2.0..5.0));
            let w = rng.random_range(1..5);
            let pool: Vec<usize> = (2..200).collect();
            let full = hop_bounded_path_exact(&dep, &pool, 0, 1, w, &params).unwrap();
            let upper = dep.link_energy(0, 1, &params);
            let pruned = prune_pool(&dep, &pool, 0, 1, w, upper, &params);
            let p = hop_bounded_path_exact(&dep, &pruned, 0, 1, w, &params).unwrap();
            assert_eq!(p.nodes, full.nodes, "trial {trial}");
        }
    }

    #[test]
    fn heuristic_is_close_to_exact() {
        let params = nu(4.0);
        let mut ratios = Vec::new();
        for seed in 0..30 {
            let dep = Deployment::place_uniform(256, 2, seed).unwrap();
            let pool: Vec<usize> = (2..256).collect();
            let e = hop_bounded_path_exact(&dep, &pool, 0, 1, 4, &params).unwrap();
            let h = hop_bounded_path_heuristic(&dep, &pool, 0, 1, 4, &params).unwrap();
            assert!(h.energy >= e.energy * (1.0 - 1e-12));
            assert!(h.hops() <= 5);
            ratios.push(h.energy / e.energy);
        }
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(mean <= 4.0, "mean ratio {mean}");
    }

    #[test]
    fn zero_weights_reproduce_bisection_tree() {
        for (n, d, seed) in [(1, 2, 0), (2, 2, 1), (17, 2, 2), (100, 3, 3), (256, 1, 4)] {
            let dep = Deployment::place_uniform(n, d, seed).unwrap();
            let ws = compute_weights(n, d, &nu(2.0), 0.0).unwrap();
            let plan = build_agg_plan(&dep, &ws, &nu(2.0), PlanOptions::default()).unwrap();
            assert!(plan.repairs().is_empty());
            let tree = build_bisection_tree(&dep);
            let mut from_plan: Vec<(usize, usize, u32)> = plan
                .paths()
                .map(|p| (p.child, p.parent, p.level as u32 + 1))
                .collect();
            from_plan.sort_unstable();
            let mut from_tree: Vec<(usize, usize, u32)> = tree
                .edges()
                .map(|(c, p)| (c, p, tree.level(c).unwrap()))
                .collect();
            from_tree.sort_unstable();
            assert_eq!(from_plan, from_tree, "n={n}");
            assert_eq!(plan.latency_bound(), ceil_log2(n) as u64);
        }
    }

    #[test]
    fn plans_cover_every_node_within_budget() {
        for (n, d, v, delta, seed) in [
            (64, 2, 4.0, 12.0, 1),
            (300, 2, 3.0, 20.0, 2),
            (500, 1, 2.0, 30.0, 3),
            (200, 3, 5.0, 40.0, 4),
        ] {
            let dep = Deployment::place_uniform(n, d, seed).unwrap();
            let params = nu(v);
            let ws = compute_weights(n, d, &params, delta).unwrap();
            for mode in [PathMode::Exact, PathMode::Heuristic] {
                let plan = build_agg_plan(&dep, &ws, &params, PlanOptions::with_mode(mode)).unwrap();
                let mut covered = vec![false; n];
                covered[dep.root()] = true;
                for (a, b) in plan.links() {
                    covered[a] = true;
                    covered[b] = true;
                }
                assert!(covered.iter().all(|&c| c), "n={n} {mode:?}");
                assert_eq!(plan.repairs().len(), 0, "n={n} {mode:?}");
                assert!(plan.latency_bound() as f64 <= ceil_log2(n) as f64 + delta);
            }
        }
    }

    #[test]
    fn relays_reduce_energy_when_nu_exceeds_d() {
        let params = nu(4.0);
        let dep = Deployment::place_uniform(1024, 2, 9).unwrap();
        let energy = |delta: f64| {
            let ws = compute_weights(1024, 2, &params, delta).unwrap();
            build_agg_plan(&dep, &ws, &params, PlanOptions::default())
                .unwrap()
                .energy(&dep, &params)
        };
        let (e0, e1) = (energy(0.0), energy(40.0));
        assert!(e1 < e0, "{e1} >= {e0}");
    }

    #[test]
    fn plan_text_and_checks() {
        let dep = Deployment::collinear(&[0.0, 1.0, 2.0], 1, 0).unwrap();
        let ws = WeightSchedule::from_weights(vec![1, 0]);
        let plan = build_agg_plan(&dep, &ws, &nu(2.0), PlanOptions::default()).unwrap();
        let text = plan.to_text();
        assert!(text.starts_with("# aggsim plan\nn 3\nroot 0\nweights 1 0\n"));

        let bad = AggregationPlan::from_parts(
            3,
            0,
            WeightSchedule::from_weights(vec![0, 0]),
            vec![
                vec![PlanPath { level: 0, parent: 0, child: 2, nodes: vec![2, 1, 0] }],
                vec![],
            ],
            vec![],
        );
        assert!(bad.is_err());
        let wrong_len = build_agg_plan(&dep, &WeightSchedule::from_weights(vec![1]), &nu(2.0), PlanOptions::default());
        assert!(wrong_len.is_err());
    }
}
