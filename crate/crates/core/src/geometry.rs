//! Node placement, regions, link energies and node-balanced bisection.
//!
//! A [`Deployment`] holds `n` points in `[0, n^(1/d)]^d` (unit density) plus
//! the designated root. Energies follow the power-law cost `R^nu` of a
//! single transmission over Euclidean distance `R`.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Path-loss parameters for the per-link energy `R^nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    nu: f64,
}

impl EnergyParams {
    pub fn new(nu: f64) -> Result<Self> {
        if !nu.is_finite() || nu < 1.0 {
            return Err(Error::param(format!("path-loss exponent must be >= 1, got {nu}")));
        }
        Ok(Self { nu })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Energy of a link whose squared length is `dist_sq`.
    ///
    /// Integral exponents avoid `powf` so that the common cases (2, 4) are
    /// exact in the squared distance.
    #[inline]
    pub fn energy_from_sq(&self, dist_sq: f64) -> f64 {
        let nu = self.nu;
        if nu == 2.0 {
            dist_sq
        } else if nu == 4.0 {
            dist_sq * dist_sq
        } else if nu.fract() == 0.0 && nu <= 16.0 {
            let k = nu as i32;
            if k % 2 == 0 {
                dist_sq.powi(k / 2)
            } else {
                dist_sq.sqrt().powi(k)
            }
        } else {
            dist_sq.powf(0.5 * nu)
        }
    }
}

/// Axis-aligned box `[lo_0, hi_0] x ... x [lo_{d-1}, hi_{d-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::param("region bounds must have equal, nonzero length"));
        }
        if lo.iter().zip(&hi).any(|(l, h)| l.is_nan() || h.is_nan() || l > h) {
            return Err(Error::param("region requires lo <= hi on every axis"));
        }
        Ok(Self { lo, hi })
    }

    pub fn cube(d: usize, side: f64) -> Self {
        Self {
            lo: vec![0.0; d],
            hi: vec![side; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p
                .iter()
                .enumerate()
                .all(|(j, &x)| x >= self.lo[j] && x <= self.hi[j])
    }

    /// Largest over smallest extent; infinite for a degenerate box.
    pub fn aspect_ratio(&self) -> f64 {
        let (mut min, mut max) = (f64::INFINITY, 0.0f64);
        for j in 0..self.dim() {
            let e = self.extent(j);
            min = min.min(e);
            max = max.max(e);
        }
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }

    /// Axes ordered by decreasing extent, lower index first on ties.
    fn axes_by_extent(&self) -> Vec<usize> {
        let mut axes: Vec<usize> = (0..self.dim()).collect();
        axes.sort_by(|&a, &b| self.extent(b).total_cmp(&self.extent(a)).then(a.cmp(&b)));
        axes
    }
}

/// A random (or file-loaded) instance: node positions and the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    n: usize,
    d: usize,
    coords: Vec<f64>,
    root: usize,
    seed: u64,
    region: Region,
}

impl Deployment {
    /// Places `n` i.i.d. uniform nodes in `[0, n^(1/d)]^d`; node 0 is the root.
    pub fn place_uniform(n: usize, d: usize, seed: u64) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::param(format!("placement needs n >= 1 and d >= 1 (got n={n}, d={d})")));
        }
        let side = side_length(n, d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coords = (0..n * d).map(|_| rng.random_range(0.0..side)).collect();
        Ok(Self {
            n,
            d,
            coords,
            root: 0,
            seed,
            region: Region::cube(d, side),
        })
    }

    /// Builds a deployment from explicit positions.
    ///
    /// The enclosing region is `[0, n^(1/d)]^d` grown to cover every point, so
    /// uniformly placed instances recover their original box exactly.
    pub fn from_positions(positions: &[Vec<f64>], root: usize, seed: u64) -> Result<Self> {
        let n = positions.len();
        if n == 0 {
            return Err(Error::param("deployment needs at least one node"));
        }
        let d = positions[0].len();
        if d == 0 {
            return Err(Error::param("deployment dimension must be >= 1"));
        }
        if root >= n {
            return Err(Error::param(format!("root {root} out of range for n={n}")));
        }
        let mut coords = Vec::with_capacity(n * d);
        for (i, p) in positions.iter().enumerate() {
            if p.len() != d {
                return Err(Error::param(format!("node {i} has dimension {} (expected {d})", p.len())));
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(Error::param(format!("node {i} has a non-finite coordinate")));
            }
            coords.extend_from_slice(p);
        }
        let side = side_length(n, d);
        let mut lo = vec![0.0f64; d];
        let mut hi = vec![side; d];
        for p in positions {
            for j in 0..d {
                lo[j] = lo[j].min(p[j]);
                hi[j] = hi[j].max(p[j]);
            }
        }
        Ok(Self {
            n,
            d,
            coords,
            root,
            seed,
            region: Region { lo, hi },
        })
    }

    /// Collinear nodes on the first axis (remaining coordinates zero).
    pub fn collinear(xs: &[f64], d: usize, root: usize) -> Result<Self> {
        let positions: Vec<Vec<f64>> = xs
            .iter()
            .map(|&x| {
                let mut p = vec![0.0; d.max(1)];
                p[0] = x;
                p
            })
            .collect();
        Self::from_positions(&positions, root, 0)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The placement region `Q_n`.
    pub fn region(&self) -> &Region {
        &self.region
    }

    pub fn with_root(mut self, root: usize) -> Result<Self> {
        if root >= self.n {
            return Err(Error::param(format!("root {root} out of range for n={}", self.n)));
        }
        self.root = root;
        Ok(self)
    }

    #[inline]
    pub fn pos(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn coord(&self, i: usize, axis: usize) -> f64 {
        self.coords[i * self.d + axis]
    }

    #[inline]
    pub fn dist_sq(&self, a: usize, b: usize) -> f64 {
        sq_dist(self.pos(a), self.pos(b))
    }

    pub fn dist(&self, a: usize, b: usize) -> f64 {
        self.dist_sq(a, b).sqrt()
    }

    /// Energy of a single transmission between nodes `a` and `b`.
    #[inline]
    pub fn link_energy(&self, a: usize, b: usize, params: &EnergyParams) -> f64 {
        params.energy_from_sq(self.dist_sq(a, b))
    }

    /// Text form: a `key value` header followed by one `id x_0 .. x_{d-1}`
    /// record per node. Coordinates use the shortest round-trip decimal form.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.n * (self.d * 20 + 8) + 64);
        out.push_str("# aggsim deployment\n");
        let _ = writeln!(out, "n {}", self.n);
        let _ = writeln!(out, "d {}", self.d);
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "root {}", self.root);
        for i in 0..self.n {
            let _ = write!(out, "{i}");
            for x in self.pos(i) {
                let _ = write!(out, " {x:?}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut header = [None::<u64>; 4];
        let mut positions: Vec<Option<Vec<f64>>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = || format!("deployment line {}", lineno + 1);
            let mut fields = line.split_whitespace();
            let first = fields.next().unwrap_or_default();
            let slot = match first {
                "n" => Some(0),
                "d" => Some(1),
                "seed" => Some(2),
                "root" => Some(3),
                _ => None,
            };
            if let Some(k) = slot {
                let v = fields
                    .next()
                    .and_then(|s| s.parse::<u64>().ok())
                    .ok_or_else(|| Error::parse(loc(), format!("bad value for `{first}`")))?;
                header[k] = Some(v);
                continue;
            }
            let (Some(n), Some(d)) = (header[0], header[1]) else {
                return Err(Error::parse(loc(), "node record before `n` and `d` header"));
            };
            if positions.is_empty() {
                positions = vec![None; n as usize];
            }
            let id: usize = first
                .parse()
                .map_err(|_| Error::parse(loc(), format!("bad node id `{first}`")))?;
            if id >= n as usize {
                return Err(Error::parse(loc(), format!("node id {id} out of range")));
            }
            let p: Vec<f64> = fields
                .map(|s| s.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(loc(), e.to_string()))?;
            if p.len() != d as usize {
                return Err(Error::parse(loc(), format!("expected {d} coordinates, got {}", p.len())));
            }
            if positions[id].replace(p).is_some() {
                return Err(Error::parse(loc(), format!("duplicate node id {id}")));
            }
        }
        let n = header[0].ok_or_else(|| Error::parse("deployment header", "missing `n`"))? as usize;
        let positions: Vec<Vec<f64>> = positions
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or_else(|| Error::parse("deployment", format!("node {i} missing"))))
            .collect::<Result<_>>()?;
        if positions.len() != n {
            return Err(Error::parse("deployment", format!("expected {n} nodes")));
        }
        let root = header[3].unwrap_or(0) as usize;
        Self::from_positions(&positions, root, header[2].unwrap_or(0))
    }
}

/// Side length `n^(1/d)` of the unit-density cube, exact for perfect powers.
pub fn side_length(n: usize, d: usize) -> f64 {
    let side = (n as f64).powf(1.0 / d as f64);
    let rounded = side.round();
    if (rounded.powi(d as i32) - n as f64).abs() < 0.5 {
        rounded
    } else {
        side
    }
}

#[inline]
pub fn sq_dist(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `||p - q||^nu`.
pub fn edge_energy(p: &[f64], q: &[f64], params: &EnergyParams) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::param(format!(
            "dimension mismatch: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    Ok(params.energy_from_sq(sq_dist(p, q)))
}

/// Sum of hop energies along `path`.
pub fn path_energy(path: &[usize], dep: &Deployment, params: &EnergyParams) -> Result<f64> {
    if path.len() < 2 {
        return Err(Error::InvalidPath(format!("path needs >= 2 nodes, got {}", path.len())));
    }
    if let Some(&bad) = path.iter().find(|&&v| v >= dep.len()) {
        return Err(Error::InvalidPath(format!("node {bad} not in deployment")));
    }
    if let Some(w) = path.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::InvalidPath(format!("repeated consecutive node {}", w[0])));
    }
    let hops: Vec<f64> = path
        .windows(2)
        .map(|w| dep.link_energy(w[0], w[1], params))
        .collect();
    Ok(pairwise_sum(&hops))
}

/// Pairwise (cascade) summation; error grows as O(log n) rather than O(n).
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const BLOCK: usize = 128;
    if values.len() <= BLOCK {
        values.iter().fold(0.0, |a, b| a + b)
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

/// Result of splitting a region into two node-balanced halves.
#[derive(Debug, Clone, PartialEq)]
pub struct Bisection {
    /// Half containing the reference node (`B1`).
    pub keep: Region,
    /// The other half (`B2`).
    pub give: Region,
    pub keep_members: Vec<usize>,
    pub give_members: Vec<usize>,
    pub axis: usize,
    pub threshold: f64,
}

/// Splits `region` along its longest axis so that the two halves hold
/// `floor(m/2)` and `ceil(m/2)` of the `m` members, with `reference` kept in
/// the first half.
///
/// The threshold sits midway between the two order statistics adjacent to the
/// cut. The reference half gets `floor(m/2)` members unless the reference is
/// the median of an odd population, in which case it gets `ceil(m/2)`.
/// Ties along the axis are ordered by node id; an axis on which every member
/// shares one coordinate is skipped in favour of the next-longest one.
pub fn region_bisect(
    region: &Region,
    members: &[usize],
    reference: usize,
    dep: &Deployment,
) -> Result<Bisection> {
    let m = members.len();
    if m < 2 {
        return Err(Error::param(format!("bisection needs >= 2 members, got {m}")));
    }
    if region.dim() != dep.dim() {
        return Err(Error::param("region and deployment dimensions differ"));
    }
    if !members.contains(&reference) {
        return Err(Error::param(format!("reference node {reference} is not a member")));
    }
    if let Some(&out) = members.iter().find(|&&v| v >= dep.len() || !region.contains(dep.pos(v))) {
        return Err(Error::param(format!("member {out} lies outside the region")));
    }

    let axes = region.axes_by_extent();
    let axis = axes
        .iter()
        .copied()
        .find(|&a| {
            let first = dep.coord(members[0], a);
            members.iter().any(|&v| dep.coord(v, a) != first)
        })
        .unwrap_or(axes[0]);

    let mut sorted = members.to_vec();
    sorted.sort_by(|&a, &b| dep.coord(a, axis).total_cmp(&dep.coord(b, axis)).then(a.cmp(&b)));
    let rank = sorted.iter().position(|&v| v == reference).expect("reference is a member");

    let lower = m / 2;
    let upper = m - lower;
    // (number of members below the cut, whether the reference is below it)
    let (below, keep_low) = if rank < lower {
        (lower, true)
    } else if rank >= upper {
        (m - lower, false)
    } else {
        (upper, true)
    };

    let threshold = 0.5 * (dep.coord(sorted[below - 1], axis) + dep.coord(sorted[below], axis));
    let mut low = region.clone();
    let mut high = region.clone();
    low.hi[axis] = threshold;
    high.lo[axis] = threshold;

    let high_members = sorted.split_off(below);
    let low_members = sorted;
    let (keep, give, keep_members, give_members) = if keep_low {
        (low, high, low_members, high_members)
    } else {
        (high, low, high_members, low_members)
    };
    Ok(Bisection {
        keep,
        give,
        keep_members,
        give_members,
        axis,
        threshold,
    })
}
