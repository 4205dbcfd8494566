use std::collections::BTreeMap;

use super::{max_degree, UndirectedGraph};

/// Colors `1..=C` assigned to the edges of a graph, keyed by `(min, max)`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EdgeColoring {
    colors: BTreeMap<(usize, usize), usize>,
}

fn key(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

impl EdgeColoring {
    pub fn from_map(colors: impl IntoIterator<Item = ((usize, usize), usize)>) -> Self {
        Self {
            colors: colors.into_iter().map(|((u, v), c)| (key(u, v), c)).collect(),
        }
    }

    pub fn color(&self, u: usize, v: usize) -> Option<usize> {
        self.colors.get(&key(u, v)).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), usize)> + '_ {
        self.colors.iter().map(|(&e, &c)| (e, c))
    }

    /// Largest color in use (0 when there are no edges).
    pub fn num_colors(&self) -> usize {
        self.colors.values().copied().max().unwrap_or(0)
    }

    /// True when every edge of `g` (and nothing else) is colored with a
    /// positive color and no two edges at a node share one.
    pub fn is_proper_for(&self, g: &UndirectedGraph) -> bool {
        if self.colors.len() != g.edge_count() {
            return false;
        }
        for u in 0..g.node_count() {
            let mut seen = Vec::with_capacity(g.degree(u));
            for &v in g.neighbors(u) {
                match self.color(u, v) {
                    Some(c) if c > 0 => seen.push(c),
                    _ => return false,
                }
            }
            seen.sort_unstable();
            if seen.windows(2).any(|w| w[0] == w[1]) {
                return false;
            }
        }
        true
    }
}

/// Working state: `at[v][c]` is the neighbor joined to `v` by color `c`.
struct Palette {
    at: Vec<Vec<Option<usize>>>,
    colors: usize,
}

impl Palette {
    fn is_free(&self, v: usize, c: usize) -> bool {
        self.at[v][c].is_none()
    }

    fn smallest_free(&self, v: usize) -> usize {
        (1..=self.colors)
            .find(|&c| self.is_free(v, c))
            .expect("a vertex of degree <= D always has a free color among D+1")
    }

    fn color_of(&self, u: usize, v: usize) -> Option<usize> {
        (1..=self.colors).find(|&c| self.at[u][c] == Some(v))
    }

    fn set(&mut self, u: usize, v: usize, c: usize) {
        debug_assert!(self.is_free(u, c) && self.is_free(v, c));
        self.at[u][c] = Some(v);
        self.at[v][c] = Some(u);
    }

    fn clear(&mut self, u: usize, v: usize, c: usize) {
        self.at[u][c] = None;
        self.at[v][c] = None;
    }

    /// Swaps colors `c` and `d` along the maximal alternating path leaving
    /// `u` through its `d`-colored edge.
    fn invert_path(&mut self, u: usize, c: usize, d: usize) {
        let mut path = Vec::new();
        let (mut x, mut col) = (u, d);
        while let Some(y) = self.at[x][col] {
            path.push((x, y, col));
            x = y;
            col = if col == d { c } else { d };
        }
        for &(a, b, col) in &path {
            self.clear(a, b, col);
        }
        for &(a, b, col) in &path {
            self.set(a, b, if col == d { c } else { d });
        }
    }

    /// Colors edge `(u, v)` without exceeding the palette.
    fn color_edge(&mut self, u: usize, v: usize) {
        // Maximal fan of u starting at v.
        let mut fan = vec![v];
        loop {
            let last = *fan.last().expect("fan is nonempty");
            let next = (1..=self.colors).find_map(|c| {
                self.at[u][c].filter(|w| self.is_free(last, c) && !fan.contains(w))
            });
            match next {
                Some(w) => fan.push(w),
                None => break,
            }
        }
        let c = self.smallest_free(u);
        let d = self.smallest_free(*fan.last().expect("fan is nonempty"));
        if c != d {
            self.invert_path(u, c, d);
        }

        // Longest fan prefix ending at a vertex where d is free.
        let mut end = None;
        for i in 0..fan.len() {
            if i > 0 {
                let ci = self.color_of(u, fan[i]).expect("fan edges beyond the first are colored");
                if !self.is_free(fan[i - 1], ci) {
                    break;
                }
            }
            if self.is_free(fan[i], d) {
                end = Some(i);
                break;
            }
        }
        let end = end.expect("Misra-Gries guarantees a rotatable fan prefix");

        // Rotate the prefix and close with d.
        let shifted: Vec<usize> = (1..=end)
            .map(|i| self.color_of(u, fan[i]).expect("colored fan edge"))
            .collect();
        for (i, &col) in (1..=end).zip(&shifted) {
            self.clear(u, fan[i], col);
        }
        for (i, &col) in shifted.iter().enumerate() {
            self.set(u, fan[i], col);
        }
        self.set(u, fan[end], d);
    }
}

/// Proper edge coloring with at most `max_degree + 1` colors (Misra–Gries).
pub fn proper_edge_coloring(g: &UndirectedGraph) -> EdgeColoring {
    let colors = max_degree(g) + 1;
    let mut palette = Palette {
        at: vec![vec![None; colors + 1]; g.node_count()],
        colors,
    };
    for (u, v) in g.edges() {
        palette.color_edge(u, v);
    }
    let mut map = BTreeMap::new();
    for (u, slots) in palette.at.iter().enumerate() {
        for (c, v) in slots.iter().enumerate() {
            if let Some(v) = *v {
                if u < v {
                    map.insert((u, v), c);
                }
            }
        }
    }
    EdgeColoring { colors: map }
}
