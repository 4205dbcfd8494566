//! Reference policies: aggregation along the Euclidean MST, and raw
//! forwarding of every measurement to the root without in-network
//! computation.

use crate::geometry::{Deployment, EnergyParams};
use crate::graphs::mst_parents;
use crate::schedule::{schedule_tree, Payload, Schedule, Token, Transmission};
use crate::tree::{tree_energy, tree_latency, AggregationTree};

/// Schedule and headline metrics of a baseline.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub schedule: Schedule,
    pub energy: f64,
    pub latency: usize,
}

/// MST rooted at the deployment root, scheduled optimally.
pub fn mst_tree(dep: &Deployment) -> AggregationTree {
    AggregationTree::new(dep.root(), mst_parents(dep, dep.root())).expect("Prim yields a spanning tree")
}

/// Aggregation along the MST.
pub fn mst_policy(dep: &Deployment, params: &EnergyParams) -> BaselineOutcome {
    let tree = mst_tree(dep);
    BaselineOutcome {
        schedule: schedule_tree(&tree),
        energy: tree_energy(&tree, dep, params),
        latency: tree_latency(&tree) as usize,
    }
}

/// Next hop toward the root on least-energy routes (dense Dijkstra over the
/// complete graph with link weight `R^nu`).
pub fn least_energy_routes(dep: &Deployment, params: &EnergyParams) -> Vec<Option<usize>> {
    let n = dep.len();
    let root = dep.root();
    let mut dist = vec![f64::INFINITY; n];
    let mut next = vec![None; n];
    let mut done = vec![false; n];
    dist[root] = 0.0;
    for _ in 0..n {
        let mut u = usize::MAX;
        for v in 0..n {
            if !done[v] && (u == usize::MAX || dist[v] < dist[u]) {
                u = v;
            }
        }
        done[u] = true;
        let pu = dep.pos(u);
        for v in 0..n {
            if !done[v] {
                let c = dist[u] + params.energy_from_sq(crate::geometry::sq_dist(pu, dep.pos(v)));
                if c < dist[v] {
                    dist[v] = c;
                    next[v] = Some(u);
                }
            }
        }
    }
    next
}

/// Per-node slot occupancy as a growable bitset.
struct Occupancy {
    words: Vec<Vec<u64>>,
}

impl Occupancy {
    fn is_busy(&self, v: usize, slot: usize) -> bool {
        self.words[v].get(slot / 64).is_some_and(|w| w >> (slot % 64) & 1 == 1)
    }

    fn mark(&mut self, v: usize, slot: usize) {
        let w = &mut self.words[v];
        if w.len() <= slot / 64 {
            w.resize(slot / 64 + 1, 0);
        }
        w[slot / 64] |= 1 << (slot % 64);
    }

    /// Earliest slot after `after` where both nodes are idle.
    fn first_common_free(&self, a: usize, b: usize, after: usize) -> usize {
        let mut s = after + 1;
        loop {
            let (wa, wb) = (&self.words[a], &self.words[b]);
            let i = s / 64;
            if i >= wa.len() && i >= wb.len() {
                return s;
            }
            let busy = wa.get(i).copied().unwrap_or(0) | wb.get(i).copied().unwrap_or(0);
            let free = !busy & (u64::MAX << (s % 64));
            if free != 0 {
                return i * 64 + free.trailing_zeros() as usize;
            }
            s = (i + 1) * 64;
        }
    }
}

/// Every measurement travels unchanged along its least-energy route.
/// Messages with longer routes go first; each hop takes the earliest slot,
/// after the previous hop, in which both endpoints are idle.
pub fn raw_forwarding_policy(dep: &Deployment, params: &EnergyParams) -> BaselineOutcome {
    let n = dep.len();
    let root = dep.root();
    let next = least_energy_routes(dep, params);
    let route = |mut v: usize| {
        let mut r = vec![v];
        while let Some(u) = next[v] {
            r.push(u);
            v = u;
        }
        r
    };
    let mut routes: Vec<Vec<usize>> = (0..n).filter(|&v| v != root).map(route).collect();
    routes.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));

    let mut occ = Occupancy {
        words: vec![Vec::new(); n],
    };
    let mut schedule = Schedule::new();
    let mut energy = Vec::new();
    for r in &routes {
        let token = Token::Measurement(r[0]);
        let mut last = 0;
        for hop in r.windows(2) {
            let slot = occ.first_common_free(hop[0], hop[1], last);
            debug_assert!(!occ.is_busy(hop[0], slot) && !occ.is_busy(hop[1], slot));
            occ.mark(hop[0], slot);
            occ.mark(hop[1], slot);
            schedule.push(
                slot,
                Transmission {
                    tx: hop[0],
                    rx: hop[1],
                    payload: Payload::Single(token),
                },
            );
            energy.push(dep.link_energy(hop[0], hop[1], params));
            last = slot;
        }
    }
    let latency = schedule.latency();
    BaselineOutcome {
        schedule,
        energy: crate::geometry::pairwise_sum(&energy),
        latency,
    }
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::clique::FunctionSpec;
    use crate::schedule::{validate_schedule, verify_aggregate};
    use crate::tree::build_bisection_tree;

    fn nu(v: f64) -> EnergyParams {
        EnergyParams::new(v).unwrap()
    }

    #[test]
    fn two_nodes() {
        let dep = Deployment::place_uniform(2, 2, 4).unwrap();
        let e = dep.link_energy(0, 1, &nu(2.0));
        let m = mst_policy(&dep, &nu(2.0));
        assert_eq!(m.latency, 1);
        assert!((m.energy - e).abs() < 1e-12);
        let r = raw_forwarding_policy(&dep, &nu(2.0));
        assert_eq!(r.latency, 1);
        assert_eq!(r.schedule.transmission_count(), 1);
    }

    #[test]
    fn collinear_chain() {
        let dep = Deployment::collinear(&[0.0, 1.0, 2.0, 3.0], 1, 0).unwrap();
        let m = mst_policy(&dep, &nu(2.0));
        assert_eq!(m.latency, 3);
        assert!((m.energy - 3.0).abs() < 1e-12);
    }

    #[test]
    fn raw_forwarding_serializes_the_root() {
        let dep = Deployment::from_positions(
            &[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]],
            0,
            0,
        )
        .unwrap();
        let r = raw_forwarding_policy(&dep, &nu(2.0));
        assert!(r.latency >= 3);
        assert!(validate_schedule(&r.schedule, &dep).is_empty());
    }

    /// Dijkstra oracle on an explicit adjacency matrix with a binary heap.
    fn heap_dijkstra(dep: &Deployment, params: &EnergyParams) -> Vec<f64> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;
        let n = dep.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        dist[dep.root()] = 0.0;
        heap.push(Reverse((0u64, dep.root())));
        while let Some(Reverse((d, u))) = heap.pop() {
            let d = f64::from_bits(d);
            if d > dist[u] {
                continue;
            }
            for v in 0..n {
                let c = d + dep.link_energy(u, v, params);
                if c < dist[v] {
                    dist[v] = c;
                    heap.push(Reverse((c.to_bits(), v)));
                }
            }
        }
        dist
    }

    #[test]
    fn routes_are_least_energy() {
        for seed in 0..5 {
            let dep = Deployment::place_uniform(150, 2, seed).unwrap();
            let params = nu(2.5);
            let next = least_energy_routes(&dep, &params);
            let oracle = heap_dijkstra(&dep, &params);
            for v in 0..150 {
                let mut e = 0.0;
                let mut x = v;
                while let Some(u) = next[x] {
                    e += dep.link_energy(x, u, &params);
                    x = u;
                }
                assert_eq!(x, dep.root());
                assert!((e - oracle[v]).abs() <= 1e-9 * oracle[v].max(1.0));
            }
        }
    }

    #[test]
    fn baselines_are_valid() {
        for (n, d, v) in [(16, 1, 1.5), (100, 2, 2.0), (300, 3, 4.0)] {
            let dep = Deployment::place_uniform(n, d, n as u64).unwrap();
            let spec = FunctionSpec::sum(n);
            for out in [mst_policy(&dep, &nu(v)), raw_forwarding_policy(&dep, &nu(v))] {
                assert!(validate_schedule(&out.schedule, &dep).is_empty());
                let r = verify_aggregate(&out.schedule, &spec, dep.root());
                assert!(r.passed(), "{r}");
            }
            assert!(raw_forwarding_policy(&dep, &nu(v)).latency >= n - 1);
        }
    }

    #[test]
    fn mst_is_cheapest_in_the_mean() {
        let params = nu(2.0);
        let (mut mst, mut bis) = (0.0, 0.0);
        for seed in 0..20 {
            let dep = Deployment::place_uniform(256, 2, seed).unwrap();
            mst += mst_policy(&dep, &params).energy;
            bis += tree_energy(&build_bisection_tree(&dep), &dep, &params);
        }
        assert!(mst <= bis);
    }
}
