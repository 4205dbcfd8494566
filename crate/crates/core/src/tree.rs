//! Aggregation trees: the subtree latency recursion, the location-free
//! minimum-latency construction and its bisection-based geometric variant.
//!
//! Edges carry the 1-based construction iteration `k` that created them.
//! When scheduled at minimum latency `L`, an edge built in iteration `k`
//! transmits in slot `L - k + 1`, so iteration-1 edges (the root's first
//! child) fire last.

use std::collections::VecDeque;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{pairwise_sum, region_bisect, Deployment, EnergyParams, Region};

/// `ceil(log2 n)` for `n >= 1`; the minimum aggregation latency.
pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

/// Spanning tree directed toward `root`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregationTree {
    root: usize,
    parent: Vec<Option<usize>>,
    levels: Option<Vec<u32>>,
}

impl AggregationTree {
    /// Validates a parent array: the root alone has no parent and every node
    /// reaches the root.
    pub fn new(root: usize, parent: Vec<Option<usize>>) -> Result<Self> {
        let n = parent.len();
        if n == 0 || root >= n {
            return Err(Error::InvalidStructure(format!("root {root} invalid for n={n}")));
        }
        for (v, p) in parent.iter().enumerate() {
            match (v == root, p) {
                (true, Some(_)) => return Err(Error::InvalidStructure("root has a parent".into())),
                (false, None) => {
                    return Err(Error::InvalidStructure(format!("node {v} has no parent")))
                }
                (false, Some(p)) if *p >= n || *p == v => {
                    return Err(Error::InvalidStructure(format!("node {v} has invalid parent {p}")))
                }
                _ => {}
            }
        }
        // Reachability via BFS from the root over child lists.
        let tree = Self {
            root,
            parent,
            levels: None,
        };
        let seen = tree.bfs_order().len();
        if seen != n {
            return Err(Error::InvalidStructure(format!(
                "{} nodes do not reach the root (cycle)",
                n - seen
            )));
        }
        Ok(tree)
    }

    /// Attaches construction levels; non-root levels must lie in `1..=max_level`.
    pub fn with_levels(mut self, levels: Vec<u32>, max_level: u32) -> Result<Self> {
        if levels.len() != self.parent.len() {
            return Err(Error::InvalidStructure("level array length mismatch".into()));
        }
        for (v, &l) in levels.iter().enumerate() {
            if v != self.root && !(1..=max_level).contains(&l) {
                return Err(Error::InvalidStructure(format!(
                    "edge of node {v} has level {l} outside 1..={max_level}"
                )));
            }
        }
        self.levels = Some(levels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    /// Construction iteration of the edge from `v` to its parent.
    pub fn level(&self, v: usize) -> Option<u32> {
        match &self.levels {
            Some(l) if v != self.root => Some(l[v]),
            _ => None,
        }
    }

    /// Edges `(child, parent)` in child order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent.iter().enumerate().filter_map(|(v, p)| p.map(|p| (v, p)))
    }

    /// Children of every node, ascending.
    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.len()];
        for (v, p) in self.edges() {
            ch[p].push(v);
        }
        ch
    }

    /// Nodes in breadth-first order from the root.
    pub fn bfs_order(&self) -> Vec<usize> {
        let ch = self.children();
        let mut order = Vec::with_capacity(self.len());
        let mut queue = VecDeque::from([self.root]);
        let mut seen = vec![false; self.len()];
        seen[self.root] = true;
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for &c in &ch[u] {
                if !seen[c] {
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        order
    }

    /// Hop depth of the deepest node.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.len()];
        let mut max = 0;
        for v in self.bfs_order() {
            if let Some(p) = self.parent[v] {
                depth[v] = depth[p] + 1;
                max = max.max(depth[v]);
            }
        }
        max
    }

    /// Subtree latency of every node plus each node's children sorted by
    /// decreasing subtree latency (ties by id).
    pub fn latency_profile(&self) -> (Vec<u32>, Vec<Vec<usize>>) {
        let mut children = self.children();
        let mut latency = vec![0u32; self.len()];
        for &v in self.bfs_order().iter().rev() {
            let ch = &mut children[v];
            ch.sort_by(|&a, &b| latency[b].cmp(&latency[a]).then(a.cmp(&b)));
            latency[v] = ch
                .iter()
                .enumerate()
                .map(|(i, &c)| i as u32 + 1 + latency[c])
                .max()
                .unwrap_or(0);
        }
        (latency, children)
    }

    /// Parent-array text: `node parent level` per line, `-` for absent values.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# aggsim tree\n");
        let _ = writeln!(out, "n {}", self.len());
        let _ = writeln!(out, "root {}", self.root);
        for v in 0..self.len() {
            let p = self.parent[v].map_or("-".to_string(), |p| p.to_string());
            let l = self.level(v).map_or("-".to_string(), |l| l.to_string());
            let _ = writeln!(out, "{v} {p} {l}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut n = None;
        let mut root = None;
        let mut rows: Vec<(usize, Option<usize>, Option<u32>)> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = format!("tree line {}", i + 1);
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<usize>().map_err(|e| Error::parse(&loc, e.to_string()));
            match f.as_slice() {
                ["n", v] => n = Some(num(v)?),
                ["root", v] => root = Some(num(v)?),
                [v, p, l] => {
                    let p = if *p == "-" { None } else { Some(num(p)?) };
                    let l = if *l == "-" { None } else { Some(num(l)? as u32) };
                    rows.push((num(v)?, p, l));
                }
                _ => return Err(Error::parse(&loc, "expected `node parent level`")),
            }
        }
        let n = n.ok_or_else(|| Error::parse("tree header", "missing `n`"))?;
        let root = root.ok_or_else(|| Error::parse("tree header", "missing `root`"))?;
        let mut parent = vec![None; n];
        let mut levels = vec![0u32; n];
        let mut have_levels = true;
        for (v, p, l) in rows {
            if v >= n {
                return Err(Error::parse("tree", format!("node {v} out of range")));
            }
            parent[v] = p;
            match l {
                Some(l) => levels[v] = l,
                None if v != root => have_levels = false,
                None => {}
            }
        }
        let tree = Self::new(root, parent)?;
        if have_levels && n > 1 {
            let max = levels.iter().copied().max().unwrap_or(0);
            tree.with_levels(levels, max)
        } else {
            Ok(tree)
        }
    }
}

/// Aggregation latency of `t` from the subtree recursion
/// `L = max_i (i + L_i)` over children sorted by decreasing `L_i`.
pub fn tree_latency(t: &AggregationTree) -> u32 {
    t.latency_profile().0[t.root]
}

/// Total transmission energy of the tree's edges.
pub fn tree_energy(t: &AggregationTree, dep: &Deployment, params: &EnergyParams) -> f64 {
    let hops: Vec<f64> = t.edges().map(|(c, p)| dep.link_energy(c, p, params)).collect();
    pairwise_sum(&hops)
}

/// Location-free minimum-latency tree: in each of `ceil(log2 n)` rounds every
/// node already in the tree adopts the smallest unassigned node.
pub fn build_min_latency_tree(n: usize, root: usize) -> Result<AggregationTree> {
    if n == 0 || root >= n {
        return Err(Error::param(format!("need n >= 1 and root < n (n={n}, root={root})")));
    }
    let rounds = ceil_log2(n);
    let mut parent = vec![None; n];
    let mut levels = vec![0u32; n];
    let mut members = vec![root];
    let mut unassigned = (0..n).filter(|&v| v != root);
    'rounds: for k in 1..=rounds {
        let snapshot = members.len();
        for idx in 0..snapshot {
            let Some(j) = unassigned.next() else {
                break 'rounds;
            };
            parent[j] = Some(members[idx]);
            levels[j] = k;
            members.push(j);
        }
    }
    AggregationTree::new(root, parent)?.with_levels(levels, rounds.max(1))
}

/// The member of `candidates` closest to `anchor` (ties by id).
pub(crate) fn nearest_member(dep: &Deployment, anchor: usize, candidates: &[usize]) -> Option<usize> {
    candidates
        .iter()
        .copied()
        .min_by(|&a, &b| dep.dist_sq(anchor, a).total_cmp(&dep.dist_sq(anchor, b)).then(a.cmp(&b)))
}

/// Location-aware minimum-latency tree.
///
/// Each tree node owns a region (initially the whole placement box for the
/// root). In every round it bisects its region into balanced halves, adopts
/// the node of the far half closest to itself, hands that half to the child
/// and keeps its own half.
pub fn build_bisection_tree(dep: &Deployment) -> AggregationTree {
    let n = dep.len();
    let root = dep.root();
    let rounds = ceil_log2(n);
    let mut parent = vec![None; n];
    let mut levels = vec![0u32; n];
    let mut active = vec![root];
    let mut owned: Vec<(Region, Vec<usize>)> = vec![(dep.region().clone(), (0..n).collect())];

    for k in 1..=rounds {
        let snapshot = active.len();
        for idx in 0..snapshot {
            let i = active[idx];
            if owned[idx].1.len() < 2 {
                continue;
            }
            let (region, members) = &owned[idx];
            let split = region_bisect(region, members, i, dep).expect("owner lies in its region");
            let j = nearest_member(dep, i, &split.give_members).expect("far half is nonempty");
            parent[j] = Some(i);
            levels[j] = k;
            active.push(j);
            owned.push((split.give, split.give_members));
            owned[idx] = (split.keep, split.keep_members);
        }
    }
    AggregationTree::new(root, parent)
        .and_then(|t| t.with_levels(levels, rounds.max(1)))
        .expect("bisection adopts every node within ceil(log2 n) rounds")
}

/// Exhaustive minimum aggregation latency over all schedules on `n` labeled
/// nodes, for `n <= 9`.
///
/// Searches breadth-first over the set of nodes still holding data; one slot
/// lets any set of disjoint holder pairs merge (sender stops holding). This
/// ranges over every tree and every single-port half-duplex schedule.
pub fn brute_force_min_latency(n: usize) -> Result<u32> {
    const LIMIT: usize = 9;
    if n == 0 || n > LIMIT {
        return Err(Error::param(format!("brute-force oracle supports 1 <= n <= {LIMIT}, got {n}")));
    }
    let full: u32 = (1 << n) - 1;
    let goal: u32 = 1; // node 0 is the root
    let mut dist = vec![u32::MAX; 1 << n];
    dist[full as usize] = 0;
    let mut queue = VecDeque::from([full]);
    while let Some(mask) = queue.pop_front() {
        if mask == goal {
            return Ok(dist[mask as usize]);
        }
        let mut next = Vec::new();
        merges(mask, mask, 0, &mut next);
        for m in next {
            if m != mask && dist[m as usize] == u32::MAX {
                dist[m as usize] = dist[mask as usize] + 1;
                queue.push_back(m);
            }
        }
    }
    unreachable!("the root can always absorb every holder")
}

/// Enumerates holder sets reachable in one slot. `undecided` are holders not
/// yet idle or paired; `removed` collects the senders.
fn merges(holders: u32, undecided: u32, removed: u32, out: &mut Vec<u32>) {
    if undecided == 0 {
        out.push(holders & !removed);
        return;
    }
    let a = undecided.trailing_zeros();
    let rest = undecided & !(1 << a);
    merges(holders, rest, removed, out);
    let mut others = rest;
    while others != 0 {
        let b = others.trailing_zeros();
        others &= !(1 << b);
        let rest2 = rest & !(1 << b);
        // a -> b (a stops holding), unless a is the root
        if a != 0 {
            merges(holders, rest2, removed | (1 << a), out);
        }
        if b != 0 {
            merges(holders, rest2, removed | (1 << b), out);
        }
    }
}

/// Exhaustive minimum makespan of aggregating along the fixed tree `t`
/// (`n <= 12`), independent of the subtree recursion.
///
/// A node may transmit once all its children have; in one slot each parent
/// receives at most once.
pub fn brute_force_tree_makespan(t: &AggregationTree) -> Result<u32> {
    let n = t.len();
    if n > 12 {
        return Err(Error::param(format!("brute-force makespan supports n <= 12, got {n}")));
    }
    let children = t.children();
    let non_root: u32 = ((1u32 << n) - 1) & !(1 << t.root());
    let mut dist = vec![u32::MAX; 1 << n];
    dist[0] = 0;
    let mut queue = VecDeque::from([0u32]);
    while let Some(done) = queue.pop_front() {
        if done == non_root {
            return Ok(dist[done as usize]);
        }
        let ready: Vec<usize> = (0..n)
            .filter(|&v| {
                v != t.root()
                    && done & (1 << v) == 0
                    && children[v].iter().all(|&c| done & (1 << c) != 0)
            })
            .collect();
        for subset in 1u32..(1 << ready.len()) {
            let senders: Vec<usize> = (0..ready.len())
                .filter(|&b| subset & (1 << b) != 0)
                .map(|b| ready[b])
                .collect();
            let mut parents: Vec<usize> = senders.iter().map(|&v| t.parent(v).unwrap()).collect();
            parents.sort_unstable();
            if parents.windows(2).any(|w| w[0] == w[1]) {
                continue;
            }
            let next = senders.iter().fold(done, |m, &v| m | (1 << v));
            if dist[next as usize] == u32::MAX {
                dist[next as usize] = dist[done as usize] + 1;
                queue.push_back(next);
            }
        }
    }
    Ok(0)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn star(leaves: usize) -> AggregationTree {
        let mut parent = vec![Some(0); leaves + 1];
        parent[0] = None;
        AggregationTree::new(0, parent).unwrap()
    }

    pub(crate) fn random_tree(n: usize, rng: &mut impl Rng) -> AggregationTree {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let mut parent = vec![None; n];
        for i in 1..n {
            let p = rng.random_range(0..i);
            parent[perm[i]] = Some(perm[p]);
        }
        AggregationTree::new(perm[0], parent).unwrap()
    }

    #[test]
    fn ceil_log2_values() {
        let expect = [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (8, 3), (9, 4), (1024, 10), (1025, 11)];
        for (n, l) in expect {
            assert_eq!(ceil_log2(n), l, "n={n}");
        }
    }

    #[test]
    fn latency_examples() {
        assert_eq!(tree_latency(&AggregationTree::new(0, vec![None]).unwrap()), 0);
        assert_eq!(tree_latency(&star(3)), 3);
        assert_eq!(brute_force_tree_makespan(&star(3)).unwrap(), 3);
        // Binomial tree on 8 nodes.
        let parent = vec![None, Some(0), Some(0), Some(1), Some(0), Some(1), Some(2), Some(3)];
        let t = AggregationTree::new(0, parent).unwrap();
        assert_eq!(tree_latency(&t), 3);
    }

    #[test]
    fn structure_validation() {
        assert!(AggregationTree::new(0, vec![None, Some(2), Some(1)]).is_err());
        assert!(AggregationTree::new(0, vec![Some(1), Some(0)]).is_err());
        assert!(AggregationTree::new(0, vec![None, None]).is_err());
        assert!(AggregationTree::new(0, vec![None, Some(5)]).is_err());
        assert!(AggregationTree::new(3, vec![None]).is_err());
        let t = AggregationTree::new(0, vec![None, Some(0)]).unwrap();
        assert!(t.clone().with_levels(vec![0, 2], 1).is_err());
        assert!(t.with_levels(vec![0, 1], 1).is_ok());
    }

    #[test]
    fn brute_force_min_latency_values() {
        assert_eq!(brute_force_min_latency(1).unwrap(), 0);
        assert_eq!(brute_force_min_latency(2).unwrap(), 1);
        assert_eq!(brute_force_min_latency(5).unwrap(), 3);
        assert_eq!(brute_force_min_latency(8).unwrap(), 3);
        assert!(brute_force_min_latency(10).is_err());
        assert!(brute_force_min_latency(0).is_err());
    }

    #[test]
    fn min_latency_tree_examples() {
        let t = build_min_latency_tree(1, 0).unwrap();
        assert_eq!(tree_latency(&t), 0);
        let t = build_min_latency_tree(16, 0).unwrap();
        assert_eq!(tree_latency(&t), 4);
        assert_eq!(t.children()[0].len(), 4);
        let t = build_min_latency_tree(5, 2).unwrap();
        assert_eq!(t.root(), 2);
        assert_eq!(tree_latency(&t), 3);
        for v in 0..5 {
            if v != 2 {
                assert!((1..=3).contains(&t.level(v).unwrap()));
            }
        }
    }

    #[test]
    fn min_latency_tree_is_optimal_up_to_1024() {
        for n in 1..=1024 {
            let t = build_min_latency_tree(n, 0).unwrap();
            assert_eq!(tree_latency(&t), ceil_log2(n), "n={n}");
            if n <= 9 {
                assert_eq!(tree_latency(&t), brute_force_min_latency(n).unwrap());
            }
        }
    }

    #[test]
    fn bisection_tree_examples() {
        let dep = Deployment::place_uniform(2, 2, 1).unwrap();
        let t = build_bisection_tree(&dep);
        assert_eq!(t.edges().collect::<Vec<_>>(), vec![(1, 0)]);

        let pos = vec![vec![0.5, 0.5], vec![0.5, 1.5], vec![1.5, 1.5], vec![1.5, 0.5]];
        let dep = Deployment::from_positions(&pos, 0, 0).unwrap();
        let t = build_bisection_tree(&dep);
        // Equal extents: split on x; nearest far-half node to the root is (1.5, 0.5).
        assert_eq!(t.parent(3), Some(0));
        assert_eq!(t.level(3), Some(1));
        assert_eq!(tree_latency(&t), 2);
    }

    #[test]
    fn bisection_tree_has_minimum_latency() {
        for n in [1usize, 2, 3, 7, 64, 100, 257, 1000] {
            for d in 1..=3 {
                let dep = Deployment::place_uniform(n, d, n as u64 * 7 + d as u64).unwrap();
                let t = build_bisection_tree(&dep);
                assert_eq!(tree_latency(&t), ceil_log2(n), "n={n} d={d}");
            }
        }
    }

    #[test]
    fn tree_energy_examples() {
        let dep = Deployment::collinear(&[0.0, 2.0], 1, 0).unwrap();
        let nu2 = EnergyParams::new(2.0).unwrap();
        let t = AggregationTree::new(0, vec![None, Some(0)]).unwrap();
        assert_eq!(tree_energy(&t, &dep, &nu2), 4.0);

        let dep = Deployment::collinear(&[0.0, 1.0, 2.0], 1, 0).unwrap();
        let path = AggregationTree::new(0, vec![None, Some(0), Some(1)]).unwrap();
        let star = AggregationTree::new(0, vec![None, Some(0), Some(0)]).unwrap();
        assert_eq!(tree_energy(&path, &dep, &nu2), 2.0);
        assert_eq!(tree_energy(&star, &dep, &nu2), 5.0);
    }

    #[test]
    fn random_trees_respect_size_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let n = rng.random_range(1..=64);
            let t = random_tree(n, &mut rng);
            let l = tree_latency(&t);
            assert!(n <= 1usize << l, "n={n} latency={l}");
        }
    }

    #[test]
    fn recursion_matches_exhaustive_makespan() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..300 {
            let n = rng.random_range(1..=8);
            let t = random_tree(n, &mut rng);
            assert_eq!(tree_latency(&t), brute_force_tree_makespan(&t).unwrap());
        }
    }

    #[test]
    fn deep_chain_does_not_overflow_the_stack() {
        let n: usize = 200_000;
        let parent: Vec<Option<usize>> = (0..n).map(|v| v.checked_sub(1)).collect();
        let t = AggregationTree::new(0, parent).unwrap();
        assert_eq!(tree_latency(&t), (n - 1) as u32);
    }

    #[test]
    fn text_round_trip() {
        let t = build_min_latency_tree(11, 3).unwrap();
        assert_eq!(AggregationTree::from_text(&t.to_text()).unwrap(), t);
        let bare = AggregationTree::new(0, vec![None, Some(0), Some(1)]).unwrap();
        assert_eq!(AggregationTree::from_text(&bare.to_text()).unwrap(), bare);
    }
}
