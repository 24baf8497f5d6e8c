//! Colour refinement, automorphism enumeration and pair orbits.
//!
//! These give exact ground truth for which nodes and node pairs any
//! message-passing model must treat identically.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::fnv1a;

/// Largest graph the exhaustive automorphism search accepts.
pub const AUTOMORPHISM_NODE_CAP: usize = 10;

/// Stable 1-WL colouring. Colour ids are dense and numbered by first
/// occurrence in node order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    pub colors: Vec<u32>,
    pub rounds: usize,
}

impl Coloring {
    pub fn num_colors(&self) -> usize {
        self.colors.iter().map(|&c| c as usize + 1).max().unwrap_or(0)
    }
}

/// Renumbers arbitrary labels densely by first occurrence.
fn canonical<T: std::hash::Hash + Eq + Clone>(labels: &[T]) -> Vec<u32> {
    let mut ids: HashMap<T, u32> = HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = ids.len() as u32;
            *ids.entry(l.clone()).or_insert(next)
        })
        .collect()
}

/// Initial colours from exact equality of feature rows.
pub fn feature_colors(g: &Graph) -> Vec<u32> {
    let rows: Vec<Vec<u64>> = (0..g.n())
        .map(|v| g.feature_row(v).iter().map(|x| x.to_bits()).collect())
        .collect();
    canonical(&rows)
}

/// Interns `(colour, sorted neighbour colours)` signatures. Signatures are
/// bucketed by a 64-bit FNV hash and compared exactly within a bucket, so
/// hash collisions can never merge distinct signatures.
struct SignatureTable {
    buckets: HashMap<u64, Vec<(Vec<u32>, u32)>>,
    next: u32,
}

impl SignatureTable {
    fn new() -> Self {
        Self {
            buckets: HashMap::new(),
            next: 0,
        }
    }

    fn intern(&mut self, sig: Vec<u32>) -> u32 {
        let bytes: Vec<u8> = sig.iter().flat_map(|x| x.to_le_bytes()).collect();
        let bucket = self.buckets.entry(fnv1a(&bytes)).or_default();
        if let Some((_, id)) = bucket.iter().find(|(s, _)| *s == sig) {
            return *id;
        }
        let id = self.next;
        self.next += 1;
        bucket.push((sig, id));
        id
    }
}

/// 1-WL colour refinement until the partition stops splitting.
///
/// `rounds` counts refinement passes including the final one that confirms
/// stability.
pub fn wl_refine(g: &Graph, init: Option<&[u32]>) -> Result<Coloring> {
    let n = g.n();
    let mut colors = match init {
        Some(c) if c.len() != n => {
            return Err(Error::Shape(format!(
                "initial colouring has {} entries for {n} nodes",
                c.len()
            )))
        }
        Some(c) => canonical(c),
        None => vec![0; n],
    };
    let mut classes = colors.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
    let mut rounds = 0;
    loop {
        rounds += 1;
        let mut table = SignatureTable::new();
        let next: Vec<u32> = (0..n)
            .map(|v| {
                let mut sig = Vec::with_capacity(1 + g.neighbors(v).len());
                sig.push(colors[v]);
                let mut nb: Vec<u32> = g.neighbors(v).iter().map(|&w| colors[w]).collect();
                nb.sort_unstable();
                sig.extend(nb);
                table.intern(sig)
            })
            .collect();
        // interned ids are already first-occurrence ordered
        let next_classes = table.next as usize;
        colors = next;
        if next_classes == classes {
            break;
        }
        classes = next_classes;
    }
    Ok(Coloring { colors, rounds })
}

/// Stable colours seeded from feature equality.
pub fn wl_refine_features(g: &Graph) -> Result<Coloring> {
    wl_refine(g, Some(&feature_colors(g)))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AutomorphismOptions {
    /// Also require `σ` to preserve feature rows.
    pub feature_aware: bool,
}

/// Every adjacency-preserving permutation (`perm[v]` is the image of `v`),
/// identity included, sorted lexicographically.
///
/// Backtracking assigns nodes in (degree, colour) order and only maps a node
/// onto nodes of the same stable colour.
pub fn enumerate_automorphisms(g: &Graph, opts: AutomorphismOptions) -> Result<Vec<Vec<usize>>> {
    let n = g.n();
    if n > AUTOMORPHISM_NODE_CAP {
        return Err(Error::TooLarge {
            n,
            cap: AUTOMORPHISM_NODE_CAP,
        });
    }
    let coloring = if opts.feature_aware {
        wl_refine_features(g)?
    } else {
        wl_refine(g, None)?
    };
    let color = coloring.colors;
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in g.edges() {
        adj[a][b] = true;
        adj[b][a] = true;
    }
    let degree: Vec<usize> = (0..n).map(|v| g.neighbors(v).len()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&v| (degree[v], color[v], v));

    struct Search<'a> {
        order: &'a [usize],
        color: &'a [u32],
        adj: &'a [Vec<bool>],
        image: Vec<usize>,
        used: Vec<bool>,
        found: Vec<Vec<usize>>,
    }

    impl Search<'_> {
        fn go(&mut self, depth: usize) {
            if depth == self.order.len() {
                self.found.push(self.image.clone());
                return;
            }
            let v = self.order[depth];
            for w in 0..self.order.len() {
                if self.used[w] || self.color[w] != self.color[v] {
                    continue;
                }
                let consistent = self.order[..depth].iter().all(|&x| {
                    self.adj[v][x] == self.adj[w][self.image[x]]
                });
                if !consistent {
                    continue;
                }
                self.image[v] = w;
                self.used[w] = true;
                self.go(depth + 1);
                self.used[w] = false;
            }
        }
    }

    let mut search = Search {
        order: &order,
        color: &color,
        adj: &adj,
        image: vec![usize::MAX; n],
        used: vec![false; n],
        found: Vec::new(),
    };
    search.go(0);
    let mut found = search.found;
    found.sort();
    Ok(found)
}

/// Orbit id of every node under the automorphism group (dense, first occurrence).
pub fn node_orbits(g: &Graph, opts: AutomorphismOptions) -> Result<Vec<u32>> {
    let autos = enumerate_automorphisms(g, opts)?;
    let rep: Vec<usize> = (0..g.n())
        .map(|v| autos.iter().map(|p| p[v]).min().unwrap_or(v))
        .collect();
    Ok(canonical(&rep))
}

/// Orbits of unordered node pairs `{u, v}`, `u ≠ v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkOrbitTable {
    n: usize,
    orbit: Vec<u32>,
    pub num_orbits: usize,
    pub automorphism_count: usize,
}

#[inline]
fn pair_slot(n: usize, u: usize, v: usize) -> usize {
    let (a, b) = (u.min(v), u.max(v));
    a * n - a * (a + 1) / 2 + (b - a - 1)
}

impl LinkOrbitTable {
    pub fn orbit(&self, u: usize, v: usize) -> Option<u32> {
        (u != v && u < self.n && v < self.n).then(|| self.orbit[pair_slot(self.n, u, v)])
    }

    pub fn same_orbit(&self, a: (usize, usize), b: (usize, usize)) -> bool {
        matches!((self.orbit(a.0, a.1), self.orbit(b.0, b.1)), (Some(x), Some(y)) if x == y)
    }

    /// `(u, v, orbit)` for every `u < v`.
    pub fn rows(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        (0..self.n).flat_map(move |u| ((u + 1)..self.n).map(move |v| (u, v, self.orbit(u, v).unwrap())))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "u,v,orbit")?;
        for (u, v, o) in self.rows() {
            writeln!(w, "{u},{v},{o}")?;
        }
        Ok(())
    }
}

/// Pairs `{u, v}` and `{u', v'}` share an orbit iff some automorphism maps one onto the other.
pub fn link_orbits(g: &Graph, opts: AutomorphismOptions) -> Result<LinkOrbitTable> {
    let autos = enumerate_automorphisms(g, opts)?;
    let n = g.n();
    let pairs = n * n.saturating_sub(1) / 2;
    let mut orbit = vec![u32::MAX; pairs];
    let mut next = 0u32;
    for u in 0..n {
        for v in (u + 1)..n {
            let s = pair_slot(n, u, v);
            if orbit[s] != u32::MAX {
                continue;
            }
            for p in &autos {
                orbit[pair_slot(n, p[u], p[v])] = next;
            }
            next += 1;
        }
    }
    Ok(LinkOrbitTable {
        n,
        orbit,
        num_orbits: next as usize,
        automorphism_count: autos.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{complete, cycle, path};

    #[test]
    fn vertex_transitive_cycle_is_one_colour() {
        let c = wl_refine(&cycle(8), None).unwrap();
        assert!(c.colors.iter().all(|&x| x == 0));
        assert_eq!(c.rounds, 1);
    }

    #[test]
    fn path_splits_ends_from_middle() {
        let c = wl_refine(&path(4), None).unwrap();
        assert_eq!(c.colors[0], c.colors[3]);
        assert_eq!(c.colors[1], c.colors[2]);
        assert_ne!(c.colors[0], c.colors[1]);
        assert_eq!(c.colors, vec![0, 1, 1, 0]);
    }

    #[test]
    fn refinement_is_a_fixed_point() {
        let g = path(7);
        let c = wl_refine(&g, None).unwrap();
        let again = wl_refine(&g, Some(&c.colors)).unwrap();
        assert_eq!(again.colors, c.colors);
        assert_eq!(again.rounds, 1);
    }

    #[test]
    fn group_sizes() {
        let o = AutomorphismOptions::default();
        assert_eq!(enumerate_automorphisms(&cycle(6), o).unwrap().len(), 12);
        assert_eq!(enumerate_automorphisms(&path(3), o).unwrap().len(), 2);
        assert_eq!(enumerate_automorphisms(&complete(4), o).unwrap().len(), 24);
    }

    #[test]
    fn size_cap() {
        assert!(matches!(
            enumerate_automorphisms(&cycle(11), AutomorphismOptions::default()),
            Err(Error::TooLarge { n: 11, cap: 10 })
        ));
    }

    #[test]
    fn c6_pair_orbits_follow_distance() {
        let t = link_orbits(&cycle(6), AutomorphismOptions::default()).unwrap();
        assert_eq!(t.num_orbits, 3);
        assert!(t.same_orbit((0, 1), (3, 4)));
        assert!(t.same_orbit((0, 2), (5, 1)));
        assert!(!t.same_orbit((0, 2), (0, 3)));
        assert_eq!(t.orbit(2, 4), t.orbit(4, 2));
    }

    #[test]
    fn c8_nodes_automorphic_but_links_not() {
        let g = cycle(8);
        let nodes = node_orbits(&g, AutomorphismOptions::default()).unwrap();
        assert!(nodes.iter().all(|&o| o == 0));
        let t = link_orbits(&g, AutomorphismOptions::default()).unwrap();
        assert!(!t.same_orbit((0, 3), (0, 4)));
    }

    #[test]
    fn feature_aware_search_shrinks_group() {
        let mut f = vec![0.0; 6];
        f[0] = 1.0;
        let g = cycle(6).with_features(f, 1).unwrap();
        let plain = enumerate_automorphisms(&g, AutomorphismOptions::default()).unwrap();
        let aware = enumerate_automorphisms(&g, AutomorphismOptions { feature_aware: true }).unwrap();
        assert_eq!(plain.len(), 12);
        // only the identity and the reflection fixing node 0
        assert_eq!(aware.len(), 2);
    }

    #[test]
    fn csv_layout() {
        let t = link_orbits(&path(3), AutomorphismOptions::default()).unwrap();
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "u,v,orbit\n0,1,0\n0,2,1\n1,2,0\n");
    }
}
