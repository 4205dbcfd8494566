//! Uniform grid bucketing for neighbor queries.

use std::collections::BinaryHeap;

use ordered::Key;

use crate::geometry::Deployment;

/// Buckets node ids into cubic cells of a fixed side.
pub struct GridIndex<'a> {
    dep: &'a Deployment,
    cell: f64,
    origin: Vec<f64>,
    shape: Vec<usize>,
    /// CSR layout: nodes of cell `c` are `items[start[c]..start[c + 1]]`.
    start: Vec<usize>,
    items: Vec<usize>,
}

const MAX_CELLS: usize = 1 << 22;

impl<'a> GridIndex<'a> {
    /// Cell side close to the expected nearest-neighbor spacing of a
    /// unit-density deployment.
    pub fn new(dep: &'a Deployment) -> Self {
        Self::with_cell(dep, 1.0)
    }

    pub fn with_cell(dep: &'a Deployment, cell: f64) -> Self {
        let d = dep.dim();
        let region = dep.region();
        let mut cell = if cell > 0.0 { cell } else { 1.0 };
        let mut shape: Vec<usize>;
        loop {
            shape = (0..d)
                .map(|j| ((region.extent(j) / cell).ceil() as usize).max(1))
                .collect();
            let total = shape.iter().try_fold(1usize, |acc, &s| acc.checked_mul(s));
            match total {
                Some(t) if t <= MAX_CELLS.max(dep.len()) => break,
                _ => cell *= 2.0,
            }
        }
        let total: usize = shape.iter().product();
        let origin = region.lo().to_vec();

        let mut index = Self {
            dep,
            cell,
            origin,
            shape,
            start: Vec::new(),
            items: Vec::new(),
        };
        let cells: Vec<usize> = (0..dep.len()).map(|i| index.flat(&index.cell_of(dep.pos(i)))).collect();
        let mut start = vec![0usize; total + 1];
        for &c in &cells {
            start[c + 1] += 1;
        }
        for c in 0..total {
            start[c + 1] += start[c];
        }
        let mut fill = start.clone();
        let mut items = vec![0usize; dep.len()];
        for (i, &c) in cells.iter().enumerate() {
            items[fill[c]] = i;
            fill[c] += 1;
        }
        index.start = start;
        index.items = items;
        index
    }

    fn cell_of(&self, p: &[f64]) -> Vec<isize> {
        p.iter()
            .enumerate()
            .map(|(j, &x)| {
                let c = ((x - self.origin[j]) / self.cell).floor() as isize;
                c.clamp(0, self.shape[j] as isize - 1)
            })
            .collect()
    }

    fn flat(&self, c: &[isize]) -> usize {
        let mut idx = 0usize;
        for j in (0..c.len()).rev() {
            idx = idx * self.shape[j] + c[j] as usize;
        }
        idx
    }

    fn max_ring(&self) -> usize {
        self.shape.iter().copied().max().unwrap_or(1)
    }

    /// Calls `f` for every node in cells at Chebyshev distance exactly `r`
    /// from `center`.
    fn visit_ring(&self, center: &[isize], r: usize, f: &mut impl FnMut(usize)) {
        let d = center.len();
        let r = r as isize;
        let mut offset = vec![-r; d];
        let mut cell = vec![0isize; d];
        loop {
            let on_shell = offset.iter().any(|o| o.abs() == r);
            if on_shell {
                let mut inside = true;
                for j in 0..d {
                    cell[j] = center[j] + offset[j];
                    if cell[j] < 0 || cell[j] >= self.shape[j] as isize {
                        inside = false;
                        break;
                    }
                }
                if inside {
                    let c = self.flat(&cell);
                    for &v in &self.items[self.start[c]..self.start[c + 1]] {
                        f(v);
                    }
                }
            }
            // odometer increment
            let mut j = 0;
            loop {
                if j == d {
                    return;
                }
                offset[j] += 1;
                if offset[j] <= r {
                    break;
                }
                offset[j] = -r;
                j += 1;
            }
        }
    }

    /// The `k` nearest other nodes of `q`, ordered by (distance, id).
    pub fn k_nearest(&self, q: usize, k: usize) -> Vec<usize> {
        if k == 0 {
            return Vec::new();
        }
        let center = self.cell_of(self.dep.pos(q));
        let mut heap: BinaryHeap<(Key, usize)> = BinaryHeap::with_capacity(k + 1);
        let max_ring = self.max_ring();
        for r in 0..=max_ring {
            self.visit_ring(&center, r, &mut |v| {
                if v == q {
                    return;
                }
                let key = (Key(self.dep.dist_sq(q, v)), v);
                if heap.len() < k {
                    heap.push(key);
                } else if key < *heap.peek().expect("heap is full") {
                    heap.pop();
                    heap.push(key);
                }
            });
            if heap.len() == k {
                let reach = r as f64 * self.cell;
                if heap.peek().expect("heap is full").0 .0 < reach * reach {
                    break;
                }
            }
        }
        let mut out = heap.into_sorted_vec();
        out.truncate(k);
        out.into_iter().map(|(_, v)| v).collect()
    }

    /// All other nodes within Euclidean distance `radius` of `q`.
    pub fn within(&self, q: usize, radius: f64) -> Vec<usize> {
        let center = self.cell_of(self.dep.pos(q));
        let rings = ((radius / self.cell).ceil() as usize).min(self.max_ring());
        let r2 = radius * radius;
        let mut out = Vec::new();
        for r in 0..=rings {
            self.visit_ring(&center, r, &mut |v| {
                if v != q && self.dep.dist_sq(q, v) <= r2 {
                    out.push(v);
                }
            });
        }
        out.sort_unstable();
        out
    }

    /// Nearest node to an arbitrary point among those accepted by `keep`.
    pub fn nearest_to_point(&self, p: &[f64], keep: impl Fn(usize) -> bool) -> Option<usize> {
        let center = self.cell_of(p);
        let mut best: Option<(Key, usize)> = None;
        for r in 0..=self.max_ring() {
            self.visit_ring(&center, r, &mut |v| {
                if !keep(v) {
                    return;
                }
                let key = (Key(crate::geometry::sq_dist(p, self.dep.pos(v))), v);
                if best.is_none_or(|b| key < b) {
                    best = Some(key);
                }
            });
            if let Some((Key(d2), _)) = best {
                let reach = r as f64 * self.cell;
                if d2 < reach * reach {
                    break;
                }
            }
        }
        best.map(|(_, v)| v)
    }
}

mod ordered {
    use std::cmp::Ordering;

    /// Totally ordered non-NaN distance.
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Key(pub f64);

    impl Eq for Key {}

    impl PartialOrd for Key {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }

    impl Ord for Key {
        fn cmp(&self, other: &Self) -> Ordering {
            self.0.total_cmp(&other.0)
        }
    }
}
