use super::UndirectedGraph;

/// Maximal cliques of a dependency graph, each stored as sorted node ids.
/// A clique's id is its index in [`CliqueSet::cliques`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CliqueSet {
    cliques: Vec<Vec<usize>>,
}

impl CliqueSet {
    /// Wraps explicit cliques, sorting members and the list itself.
    pub fn new(mut cliques: Vec<Vec<usize>>) -> Self {
        for c in &mut cliques {
            c.sort_unstable();
            c.dedup();
        }
        cliques.sort();
        Self { cliques }
    }

    pub fn cliques(&self) -> &[Vec<usize>] {
        &self.cliques
    }

    pub fn len(&self) -> usize {
        self.cliques.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cliques.is_empty()
    }

    pub fn get(&self, id: usize) -> &[usize] {
        &self.cliques[id]
    }

    /// One clique per line, members ascending.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.cliques {
            let line: Vec<String> = c.iter().map(usize::to_string).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn intersect_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                k += 1;
                i += 1;
                j += 1;
            }
        }
    }
    k
}

fn bron_kerbosch(
    g: &UndirectedGraph,
    r: &mut Vec<usize>,
    mut p: Vec<usize>,
    mut x: Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() {
        if x.is_empty() {
            let mut c = r.clone();
            c.sort_unstable();
            out.push(c);
        }
        return;
    }
    // Tomita pivot: the vertex of P u X with most neighbors in P.
    let pivot = p
        .iter()
        .chain(x.iter())
        .copied()
        .max_by_key(|&u| (intersect_len(&p, g.neighbors(u)), std::cmp::Reverse(u)))
        .expect("P is nonempty");
    let candidates: Vec<usize> = p
        .iter()
        .copied()
        .filter(|v| g.neighbors(pivot).binary_search(v).is_err())
        .collect();
    for v in candidates {
        let nv = g.neighbors(v);
        r.push(v);
        bron_kerbosch(g, r, intersect(&p, nv), intersect(&x, nv), out);
        r.pop();
        let pos = p.binary_search(&v).expect("v in P");
        p.remove(pos);
        let pos = x.binary_search(&v).unwrap_err();
        x.insert(pos, v);
    }
}

/// All inclusion-maximal cliques (Bron–Kerbosch with pivoting). Isolated
/// nodes come out as singletons, so an edgeless graph yields `n` cliques.
pub fn maximal_cliques(g: &UndirectedGraph) -> CliqueSet {
    let mut out = Vec::new();
    let mut r = Vec::new();
    for v in 0..g.node_count() {
        let nv = g.neighbors(v);
        let split = nv.partition_point(|&u| u < v);
        r.push(v);
        bron_kerbosch(g, &mut r, nv[split..].to_vec(), nv[..split].to_vec(), &mut out);
        r.pop();
    }
    CliqueSet::new(out)
}
