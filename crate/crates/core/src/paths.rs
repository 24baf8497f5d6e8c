//! Shortest-path preprocessing.
//!
//! One BFS per indexed source stores hop distances and parent pointers; a
//! canonical shortest path for any pair is then read off the parent chain in
//! time proportional to its length.
//!
//! Neighbours are visited in ascending order of a per-node key (ties by id).
//! With the default key every node is its own id, so the BFS is the plain
//! ascending-id traversal. Passing stable colour-refinement colours as the key
//! makes the selected path a function of node colours only, so pairs related
//! by an automorphism get paths with the same colour sequence.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{Graph, Path};

pub const UNREACHABLE: u32 = u32::MAX;
const NO_PARENT: u32 = u32::MAX;
const NOT_INDEXED: u32 = u32::MAX;

/// Above this node count [`SourceSelection::Auto`] indexes only link endpoints.
pub const DEFAULT_ALL_PAIRS_LIMIT: usize = 20_000;

const CACHE_MAGIC: &[u8; 4] = b"PIDX";
const CACHE_VERSION: u32 = 1;

/// Per-node key fixing the order in which BFS expands neighbours.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VisitOrder {
    key: Option<Vec<u32>>,
}

impl VisitOrder {
    pub fn by_id() -> Self {
        Self { key: None }
    }

    /// Expand neighbours by ascending `key`, then id.
    pub fn by_key(key: Vec<u32>) -> Self {
        Self { key: Some(key) }
    }

    pub fn key(&self) -> Option<&[u32]> {
        self.key.as_deref()
    }

    #[inline]
    fn of(&self, v: usize) -> u32 {
        match &self.key {
            Some(k) => k[v],
            None => v as u32,
        }
    }

    fn check(&self, g: &Graph) -> Result<()> {
        match &self.key {
            Some(k) if k.len() != g.n() => Err(Error::Shape(format!(
                "visit-order key has {} entries for {} nodes",
                k.len(),
                g.n()
            ))),
            _ => Ok(()),
        }
    }
}

/// Adjacency re-sorted by visit order.
struct OrderedAdjacency {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl OrderedAdjacency {
    fn new(g: &Graph, order: &VisitOrder) -> Self {
        let offsets = g.csr_offsets().to_vec();
        let mut neighbors = g.csr_neighbors().to_vec();
        if order.key.is_some() {
            for v in 0..g.n() {
                neighbors[offsets[v]..offsets[v + 1]].sort_by_key(|&w| (order.of(w), w));
            }
        }
        Self { offsets, neighbors }
    }

    #[inline]
    fn of(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// BFS from `s` filling `dist` and `parent`, optionally ignoring one edge and
/// stopping once `stop_at` is discovered.
fn bfs(
    adj: &OrderedAdjacency,
    s: usize,
    skip: Option<(usize, usize)>,
    stop_at: Option<usize>,
    dist: &mut [u32],
    parent: &mut [u32],
) {
    dist.fill(UNREACHABLE);
    parent.fill(NO_PARENT);
    let mut queue = Vec::with_capacity(64);
    dist[s] = 0;
    queue.push(s);
    let mut head = 0;
    while head < queue.len() {
        let a = queue[head];
        head += 1;
        for &b in adj.of(a) {
            if dist[b] != UNREACHABLE {
                continue;
            }
            if let Some((x, y)) = skip {
                if (a == x && b == y) || (a == y && b == x) {
                    continue;
                }
            }
            dist[b] = dist[a] + 1;
            parent[b] = a as u32;
            if stop_at == Some(b) {
                return;
            }
            queue.push(b);
        }
    }
}

fn chain(parent: &[u32], s: usize, t: usize) -> Vec<usize> {
    let mut nodes = vec![t];
    let mut cur = t;
    while cur != s {
        cur = parent[cur] as usize;
        nodes.push(cur);
    }
    nodes.reverse();
    nodes
}

/// Picks between the path found from `u` and the one found from `v` (read in
/// its own direction): the lexicographically smaller key sequence wins, ties go
/// to the lower endpoint id.
fn pick(order: &VisitOrder, from_u: Vec<usize>, from_v: Vec<usize>, u: usize, v: usize) -> Vec<usize> {
    let keys = |p: &[usize]| p.iter().map(|&x| order.of(x)).collect::<Vec<_>>();
    match keys(&from_u).cmp(&keys(&from_v)) {
        std::cmp::Ordering::Less => from_u,
        std::cmp::Ordering::Greater => from_v,
        std::cmp::Ordering::Equal => {
            if u < v {
                from_u
            } else {
                from_v
            }
        }
    }
}

/// Distances and BFS parent trees for a set of source nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PathIndex {
    n: usize,
    sources: Vec<usize>,
    slot: Vec<u32>,
    dist: Vec<u32>,
    parent: Vec<u32>,
    order: VisitOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexStats {
    pub sources: usize,
    /// Unordered pairs with at least one indexed endpoint.
    pub pairs: usize,
    pub max_distance: usize,
    pub unreachable_pairs: usize,
}

/// Which nodes get a BFS tree.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceSelection {
    All,
    Only(Vec<usize>),
    /// All nodes up to `limit`, otherwise just the listed link endpoints.
    Auto { limit: usize, endpoints: Vec<usize> },
}

impl SourceSelection {
    pub fn resolve(&self, n: usize) -> Vec<usize> {
        match self {
            SourceSelection::All => (0..n).collect(),
            SourceSelection::Only(v) => dedup_sorted(v.clone()),
            SourceSelection::Auto { limit, endpoints } => {
                if n <= *limit {
                    (0..n).collect()
                } else {
                    dedup_sorted(endpoints.clone())
                }
            }
        }
    }
}

fn dedup_sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

/// Builds the index with ascending-id neighbour order.
pub fn build_index(g: &Graph, sources: &[usize]) -> Result<PathIndex> {
    build_index_ordered(g, sources, &VisitOrder::by_id())
}

/// One BFS per source, in parallel over sources. The result does not depend
/// on the thread count.
pub fn build_index_ordered(g: &Graph, sources: &[usize], order: &VisitOrder) -> Result<PathIndex> {
    order.check(g)?;
    let n = g.n();
    let sources = dedup_sorted(sources.to_vec());
    for &s in &sources {
        g.check_node(s)?;
    }
    let mut slot = vec![NOT_INDEXED; n];
    for (i, &s) in sources.iter().enumerate() {
        slot[s] = i as u32;
    }
    let adj = OrderedAdjacency::new(g, order);
    let mut dist = vec![0u32; sources.len() * n];
    let mut parent = vec![0u32; sources.len() * n];
    if n > 0 {
        dist.par_chunks_mut(n)
            .zip(parent.par_chunks_mut(n))
            .zip(sources.par_iter())
            .for_each(|((d, p), &s)| bfs(&adj, s, None, None, d, p));
    }
    Ok(PathIndex {
        n,
        sources,
        slot,
        dist,
        parent,
        order: order.clone(),
    })
}

impl PathIndex {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn order(&self) -> &VisitOrder {
        &self.order
    }

    pub fn is_indexed(&self, v: usize) -> bool {
        v < self.n && self.slot[v] != NOT_INDEXED
    }

    fn row(&self, s: usize) -> Option<(&[u32], &[u32])> {
        if !self.is_indexed(s) {
            return None;
        }
        let i = self.slot[s] as usize * self.n;
        Some((&self.dist[i..i + self.n], &self.parent[i..i + self.n]))
    }

    /// Hop distances from an indexed source (`UNREACHABLE` where disconnected).
    pub fn dist_row(&self, s: usize) -> Option<&[u32]> {
        self.row(s).map(|r| r.0)
    }

    /// BFS parents from an indexed source; the source itself has no parent.
    pub fn parent_row(&self, s: usize) -> Option<&[u32]> {
        self.row(s).map(|r| r.1)
    }

    /// `d_G(u, v)`, or `None` when the two are disconnected.
    pub fn distance(&self, u: usize, v: usize) -> Result<Option<usize>> {
        self.check_pair(u, v, true)?;
        let row = self
            .dist_row(u)
            .or_else(|| self.dist_row(v))
            .ok_or(Error::NotIndexed(u.min(v)))?;
        let other = if self.is_indexed(u) { v } else { u };
        Ok((row[other] != UNREACHABLE).then_some(row[other] as usize))
    }

    fn check_pair(&self, u: usize, v: usize, allow_equal: bool) -> Result<()> {
        for x in [u, v] {
            if x >= self.n {
                return Err(Error::NodeId(format!(
                    "node {x} out of range for {} nodes",
                    self.n
                )));
            }
        }
        if !allow_equal && u == v {
            return Err(Error::Argument(format!("path endpoints must differ, got {u} twice")));
        }
        Ok(())
    }

    /// The canonical shortest path between `u` and `v`.
    ///
    /// Pairs in different components get a synthetic length-one path.
    pub fn shortest_path(&self, u: usize, v: usize) -> Result<Path> {
        self.check_pair(u, v, false)?;
        let (lo, hi) = (u.min(v), u.max(v));
        let (ru, rv) = (self.row(lo), self.row(hi));
        let (dist, _) = ru.or(rv).ok_or(Error::NotIndexed(lo))?;
        let target = if ru.is_some() { hi } else { lo };
        if dist[target] == UNREACHABLE {
            return Ok(Path {
                nodes: vec![lo, hi],
                synthetic: true,
            });
        }
        let nodes = match (ru, rv) {
            (Some((_, pu)), Some((_, pv))) if self.order.key.is_some() => {
                pick(&self.order, chain(pu, lo, hi), chain(pv, hi, lo), lo, hi)
            }
            (Some((_, pu)), _) => chain(pu, lo, hi),
            (None, Some((_, pv))) => chain(pv, hi, lo),
            (None, None) => unreachable!(),
        };
        Ok(Path {
            nodes,
            synthetic: false,
        })
    }

    pub fn stats(&self) -> IndexStats {
        let mut pairs = 0;
        let mut max_distance = 0;
        let mut unreachable_pairs = 0;
        for &s in &self.sources {
            let row = self.dist_row(s).expect("indexed");
            for (v, &d) in row.iter().enumerate() {
                if v == s || (self.is_indexed(v) && v < s) {
                    continue;
                }
                pairs += 1;
                if d == UNREACHABLE {
                    unreachable_pairs += 1;
                } else {
                    max_distance = max_distance.max(d as usize);
                }
            }
        }
        IndexStats {
            sources: self.sources.len(),
            pairs,
            max_distance,
            unreachable_pairs,
        }
    }

    /// Content hash of the graph's edge list, the source set and the visit order.
    pub fn cache_key(g: &Graph, sources: &[usize], order: &VisitOrder) -> String {
        let mut h = Sha256::new();
        h.update(format!("n={}\n", g.n()).as_bytes());
        h.update(g.edge_list_string().as_bytes());
        h.update(b"sources\n");
        for s in dedup_sorted(sources.to_vec()) {
            h.update((s as u64).to_le_bytes());
        }
        if let Some(k) = order.key() {
            h.update(b"order\n");
            for x in k {
                h.update(x.to_le_bytes());
            }
        }
        hex::encode(h.finalize())[..32].to_string()
    }

    pub fn cache_path(dir: &FsPath, key: &str) -> PathBuf {
        dir.join(format!("{key}.pidx"))
    }

    /// Loads a cached index for this graph/sources/order from `dir`, or builds
    /// and stores it. Returns whether the cache was hit.
    pub fn load_or_build(
        dir: &FsPath,
        g: &Graph,
        sources: &[usize],
        order: &VisitOrder,
    ) -> Result<(PathIndex, bool)> {
        let key = Self::cache_key(g, sources, order);
        let file = Self::cache_path(dir, &key);
        if file.exists() {
            let idx = Self::read_from(&file)?;
            if idx.n == g.n() && idx.sources == dedup_sorted(sources.to_vec()) && idx.order == *order {
                return Ok((idx, true));
            }
            log::warn!("ignoring stale path cache {}", file.display());
        }
        let idx = build_index_ordered(g, sources, order)?;
        fs::create_dir_all(dir)?;
        idx.write_to(&file)?;
        Ok((idx, false))
    }

    pub fn write_to(&self, file: &FsPath) -> Result<()> {
        let mut buf = Vec::with_capacity(32 + 8 * self.dist.len());
        buf.extend_from_slice(CACHE_MAGIC);
        buf.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.n as u64).to_le_bytes());
        buf.extend_from_slice(&(self.sources.len() as u64).to_le_bytes());
        match self.order.key() {
            Some(k) => {
                buf.push(1);
                k.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes()));
            }
            None => buf.push(0),
        }
        for &s in &self.sources {
            buf.extend_from_slice(&(s as u64).to_le_bytes());
        }
        for x in self.dist.iter().chain(&self.parent) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        let mut f = fs::File::create(file)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from(file: &FsPath) -> Result<PathIndex> {
        let mut buf = Vec::new();
        fs::File::open(file)?.read_to_end(&mut buf)?;
        let bad = |msg: &str| Error::Checkpoint(format!("{}: {msg}", file.display()));
        let mut r = Cursor { buf: &buf, pos: 0 };
        if r.take(4).ok_or_else(|| bad("truncated"))? != CACHE_MAGIC {
            return Err(bad("not a path index file"));
        }
        let version = r.u32().ok_or_else(|| bad("truncated"))?;
        if version != CACHE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let n = r.u64().ok_or_else(|| bad("truncated"))? as usize;
        let k = r.u64().ok_or_else(|| bad("truncated"))? as usize;
        let order = match r.take(1).ok_or_else(|| bad("truncated"))?[0] {
            0 => VisitOrder::by_id(),
            _ => VisitOrder::by_key(
                (0..n)
                    .map(|_| r.u32())
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| bad("truncated"))?,
            ),
        };
        let sources = (0..k)
            .map(|_| r.u64().map(|x| x as usize))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("truncated"))?;
        let mut read_block = || {
            (0..k * n)
                .map(|_| r.u32())
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| bad("truncated"))
        };
        let dist = read_block()?;
        let parent = read_block()?;
        let mut slot = vec![NOT_INDEXED; n];
        for (i, &s) in sources.iter().enumerate() {
            if s >= n {
                return Err(bad("source id out of range"));
            }
            slot[s] = i as u32;
        }
        Ok(PathIndex {
            n,
            sources,
            slot,
            dist,
            parent,
            order,
        })
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, k: usize) -> Option<&'a [u8]> {
        let out = self.buf.get(self.pos..self.pos + k)?;
        self.pos += k;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

/// Canonical shortest path between `u` and `v` in `g` with the edge `{u, v}`
/// itself removed. Used for training positives, whose direct edge would
/// otherwise always be the path.
pub fn shortest_path_without_edge(g: &Graph, order: &VisitOrder, u: usize, v: usize) -> Result<Path> {
    order.check(g)?;
    g.check_node(u)?;
    g.check_node(v)?;
    if u == v {
        return Err(Error::Argument(format!("path endpoints must differ, got {u} twice")));
    }
    let (lo, hi) = (u.min(v), u.max(v));
    let adj = OrderedAdjacency::new(g, order);
    let n = g.n();
    let (mut d, mut p) = (vec![0; n], vec![0; n]);
    bfs(&adj, lo, Some((lo, hi)), Some(hi), &mut d, &mut p);
    if d[hi] == UNREACHABLE {
        return Ok(Path {
            nodes: vec![lo, hi],
            synthetic: true,
        });
    }
    let from_lo = chain(&p, lo, hi);
    let nodes = if order.key.is_some() {
        bfs(&adj, hi, Some((lo, hi)), Some(lo), &mut d, &mut p);
        pick(order, from_lo, chain(&p, hi, lo), lo, hi)
    } else {
        from_lo
    };
    Ok(Path {
        nodes,
        synthetic: false,
    })
}

/// Batch version of [`shortest_path_without_edge`] that reuses one adjacency.
pub fn shortest_paths_without_edges(
    g: &Graph,
    order: &VisitOrder,
    pairs: &[(usize, usize)],
) -> Result<Vec<Path>> {
    order.check(g)?;
    let adj = OrderedAdjacency::new(g, order);
    let n = g.n();
    pairs
        .par_iter()
        .map_init(
            || (vec![0u32; n], vec![0u32; n]),
            |(d, p), &(u, v)| {
                g.check_node(u)?;
                g.check_node(v)?;
                if u == v {
                    return Err(Error::Argument(format!("path endpoints must differ, got {u} twice")));
                }
                let (lo, hi) = (u.min(v), u.max(v));
                bfs(&adj, lo, Some((lo, hi)), Some(hi), d, p);
                if d[hi] == UNREACHABLE {
                    return Ok(Path {
                        nodes: vec![lo, hi],
                        synthetic: true,
                    });
                }
                let from_lo = chain(p, lo, hi);
                let nodes = if order.key.is_some() {
                    bfs(&adj, hi, Some((lo, hi)), Some(lo), d, p);
                    pick(order, from_lo, chain(p, hi, lo), lo, hi)
                } else {
                    from_lo
                };
                Ok(Path {
                    nodes,
                    synthetic: false,
                })
            },
        )
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{cycle, path};

    #[test]
    fn path_graph_distances() {
        let g = path(4);
        let idx = build_index(&g, &[0]).unwrap();
        assert_eq!(idx.dist_row(0).unwrap(), &[0, 1, 2, 3]);
    }

    #[test]
    fn c8_distances_and_path() {
        let g = cycle(8);
        let idx = build_index(&g, &(0..8).collect::<Vec<_>>()).unwrap();
        assert_eq!(idx.dist_row(0).unwrap(), &[0, 1, 2, 3, 4, 3, 2, 1]);
        let p = idx.shortest_path(0, 3).unwrap();
        assert_eq!(p.nodes, vec![0, 1, 2, 3]);
        assert_eq!(p.len(), 3);
        assert!(!p.synthetic);
        // argument order does not change the path
        assert_eq!(idx.shortest_path(3, 0).unwrap(), p);
        // antipodal: ascending-id BFS goes through 1, 2, 3
        assert_eq!(idx.shortest_path(0, 4).unwrap().nodes, vec![0, 1, 2, 3, 4]);
        let s = idx.stats();
        assert_eq!((s.pairs, s.max_distance, s.unreachable_pairs), (28, 4, 0));
    }

    #[test]
    fn disconnected_pair_gets_synthetic_path() {
        let g = Graph::from_edges(4, [(0, 1), (2, 3)]).unwrap();
        let idx = build_index(&g, &[0, 1, 2, 3]).unwrap();
        let p = idx.shortest_path(0, 2).unwrap();
        assert_eq!(p.nodes, vec![0, 2]);
        assert!(p.synthetic);
        assert_eq!(p.len(), 1);
        assert_eq!(idx.distance(0, 2).unwrap(), None);
        assert!(idx.stats().unreachable_pairs > 0);
    }

    #[test]
    fn adjacent_pair_is_the_edge() {
        let g = cycle(6);
        let idx = build_index(&g, &[2]).unwrap();
        assert_eq!(idx.shortest_path(2, 3).unwrap().nodes, vec![2, 3]);
        assert_eq!(idx.shortest_path(2, 1).unwrap().nodes, vec![2, 1]);
    }

    #[test]
    fn unindexed_pair_is_an_error() {
        let g = cycle(6);
        let idx = build_index(&g, &[0]).unwrap();
        assert!(matches!(idx.shortest_path(2, 4), Err(Error::NotIndexed(2))));
        // either endpoint indexed is enough
        assert_eq!(idx.shortest_path(3, 0).unwrap().nodes, vec![0, 1, 2, 3]);
    }

    #[test]
    fn removing_the_target_edge() {
        let g = cycle(6);
        let p = shortest_path_without_edge(&g, &VisitOrder::by_id(), 0, 1).unwrap();
        assert_eq!(p.nodes, vec![0, 5, 4, 3, 2, 1]);
        let tree = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let p = shortest_path_without_edge(&tree, &VisitOrder::by_id(), 1, 2).unwrap();
        assert!(p.synthetic);
        let batch = shortest_paths_without_edges(&g, &VisitOrder::by_id(), &[(0, 1), (3, 2)]).unwrap();
        assert_eq!(batch[0].nodes, vec![0, 5, 4, 3, 2, 1]);
        assert_eq!(batch[1].nodes, vec![2, 1, 0, 5, 4, 3]);
    }

    #[test]
    fn key_order_changes_tie_breaks() {
        // square 0-1-3, 0-2-3: id order goes through 1, a key favouring 2 goes through 2
        let g = Graph::from_edges(4, [(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        let by_id = build_index(&g, &[0, 1, 2, 3]).unwrap();
        assert_eq!(by_id.shortest_path(0, 3).unwrap().nodes, vec![0, 1, 3]);
        let keyed = build_index_ordered(&g, &[0, 1, 2, 3], &VisitOrder::by_key(vec![0, 2, 1, 0])).unwrap();
        assert_eq!(keyed.shortest_path(0, 3).unwrap().nodes, vec![0, 2, 3]);
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = cycle(7);
        let all: Vec<_> = (0..7).collect();
        let (a, hit) = PathIndex::load_or_build(dir.path(), &g, &all, &VisitOrder::by_id()).unwrap();
        assert!(!hit);
        let (b, hit) = PathIndex::load_or_build(dir.path(), &g, &all, &VisitOrder::by_id()).unwrap();
        assert!(hit);
        assert_eq!(a, b);
        let key = VisitOrder::by_key(vec![0, 0, 1, 1, 2, 2, 3]);
        let (c, hit) = PathIndex::load_or_build(dir.path(), &g, &all, &key).unwrap();
        assert!(!hit);
        assert_eq!(c.order(), &key);
    }
}
