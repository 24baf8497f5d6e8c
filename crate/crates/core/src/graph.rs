//! Immutable undirected graphs in CSR form, plus edge-list and feature ingestion.

use std::fs;
use std::io::Write;
use std::path::Path as FsPath;

use crate::error::{Error, Result};
use crate::rng::fnv1a;

/// Width cap for the one-hot features synthesised for featureless graphs.
pub const DEFAULT_MAX_IDENTITY_FEATURES: usize = 1024;

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    /// Featureless graphs get one-hot identity features up to this width; past
    /// it node ids are hashed into `max_identity_features` buckets.
    pub max_identity_features: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            max_identity_features: DEFAULT_MAX_IDENTITY_FEATURES,
        }
    }
}

/// Simple undirected graph with dense node ids `0..n` and a real feature matrix.
///
/// Neighbour lists are sorted ascending. Downstream BFS tie-breaking relies on
/// that order.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    features: Vec<f64>,
    feature_dim: usize,
    labels: Option<Vec<String>>,
}

impl Graph {
    /// Builds a graph on `n` nodes. Reversed and repeated pairs collapse to one
    /// edge; self-loops and out-of-range ids are rejected. Features default to
    /// one-hot identity rows.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut canon = Vec::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::Argument(format!("self-loop on node {a}")));
            }
            if a >= n || b >= n {
                return Err(Error::NodeId(format!(
                    "edge ({a}, {b}) out of range for {n} nodes"
                )));
            }
            canon.push((a.min(b), a.max(b)));
        }
        canon.sort_unstable();
        canon.dedup();

        let mut degree = vec![0usize; n];
        for &(a, b) in &canon {
            degree[a] += 1;
            degree[b] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut cursor = offsets[..n].to_vec();
        let mut neighbors = vec![0usize; 2 * canon.len()];
        for &(a, b) in &canon {
            neighbors[cursor[a]] = b;
            cursor[a] += 1;
            neighbors[cursor[b]] = a;
            cursor[b] += 1;
        }
        for v in 0..n {
            neighbors[offsets[v]..offsets[v + 1]].sort_unstable();
        }

        let (features, feature_dim) = identity_features(n, DEFAULT_MAX_IDENTITY_FEATURES);
        Ok(Self {
            n,
            edges: canon,
            offsets,
            neighbors,
            features,
            feature_dim,
            labels: None,
        })
    }

    /// Replaces the feature matrix (row-major, `n × dim`).
    pub fn with_features(mut self, features: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || features.len() != self.n * dim {
            return Err(Error::Shape(format!(
                "feature buffer of length {} does not form {} rows of width {dim}",
                features.len(),
                self.n
            )));
        }
        self.features = features;
        self.feature_dim = dim;
        Ok(self)
    }

    /// Identity features hashed into at most `max_width` columns.
    pub fn with_identity_features(mut self, max_width: usize) -> Self {
        let (f, d) = identity_features(self.n, max_width);
        self.features = f;
        self.feature_dim = d;
        self
    }

    /// Every node gets the same all-ones row of width `dim`.
    pub fn with_constant_features(mut self, dim: usize) -> Self {
        self.features = vec![1.0; self.n * dim];
        self.feature_dim = dim;
        self
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n {
            return Err(Error::Shape(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Same nodes and features, different edge set.
    pub fn with_edge_set<I>(&self, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Graph::from_edges(self.n, edges)?;
        g.features = self.features.clone();
        g.feature_dim = self.feature_dim;
        g.labels = self.labels.clone();
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge list: `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn csr_offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn csr_neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> Result<usize> {
        self.check_node(v)?;
        Ok(self.offsets[v + 1] - self.offsets[v])
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n)
            .map(|v| self.offsets[v + 1] - self.offsets[v])
            .max()
            .unwrap_or(0)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && v < self.n && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// `N(u) ∩ N(v)` by merging the two sorted neighbour lists.
    pub fn common_neighbors(&self, u: usize, v: usize) -> Result<Vec<usize>> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(Error::Argument(format!(
                "common neighbours need two distinct nodes, got {u} twice"
            )));
        }
        let (a, b) = (self.neighbors(u), self.neighbors(v));
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
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
        Ok(out)
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn feature_row(&self, v: usize) -> &[f64] {
        &self.features[v * self.feature_dim..(v + 1) * self.feature_dim]
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn check_node(&self, v: usize) -> Result<()> {
        if v >= self.n {
            return Err(Error::NodeId(format!(
                "node {v} out of range for {} nodes",
                self.n
            )));
        }
        Ok(())
    }

    /// Writes the canonical `"<u> <v>\n"` edge list.
    pub fn write_edge_list<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for &(a, b) in &self.edges {
            writeln!(w, "{a} {b}")?;
        }
        Ok(())
    }

    pub fn edge_list_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_edge_list(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("ascii")
    }

    /// Relabels nodes by `perm` (`new id = perm[old id]`), moving feature rows along.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::Shape(format!(
                "permutation of length {} for {} nodes",
                perm.len(),
                self.n
            )));
        }
        let mut g = Graph::from_edges(self.n, self.edges.iter().map(|&(a, b)| (perm[a], perm[b])))?;
        let d = self.feature_dim;
        let mut feats = vec![0.0; self.n * d];
        for (old, &new) in perm.iter().enumerate() {
            feats[new * d..(new + 1) * d].copy_from_slice(self.feature_row(old));
        }
        g.features = feats;
        g.feature_dim = d;
        Ok(g)
    }
}

fn identity_features(n: usize, max_width: usize) -> (Vec<f64>, usize) {
    let width = n.min(max_width).max(1);
    let mut f = vec![0.0; n * width];
    for v in 0..n {
        let col = if n <= max_width {
            v
        } else {
            (fnv1a(&(v as u64).to_le_bytes()) % width as u64) as usize
        };
        f[v * width + col] = 1.0;
    }
    (f, width)
}

/// Parses a whitespace-separated edge list. Blank lines and `#` comments are skipped.
pub fn parse_edge_list(text: &str, source: &FsPath) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: source.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(format!("expected two node ids, got {line:?}")));
        };
        let a: usize = a
            .parse()
            .map_err(|_| parse_err(format!("bad node id {a:?}")))?;
        let b: usize = b
            .parse()
            .map_err(|_| parse_err(format!("bad node id {b:?}")))?;
        if a == b {
            return Err(parse_err(format!("self-loop on node {a}")));
        }
        edges.push((a, b));
    }
    Ok(edges)
}

/// Parses a headerless CSV of real feature rows.
pub fn parse_features(text: &str, source: &FsPath) -> Result<(Vec<f64>, usize, usize)> {
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: source.to_path_buf(),
            line: lineno + 1,
            msg,
        };
        let before = data.len();
        for cell in line.split(',') {
            let x: f64 = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad feature value {cell:?}")))?;
            data.push(x);
        }
        let w = data.len() - before;
        match width {
            None => width = Some(w),
            Some(expected) if expected != w => {
                return Err(parse_err(format!("row has {w} columns, expected {expected}")))
            }
            _ => {}
        }
        rows += 1;
    }
    Ok((data, rows, width.unwrap_or(0)))
}

/// Reads an edge file and optional feature CSV into a [`Graph`].
///
/// Node ids must be contiguous: every id in `0..=max_id` has to occur in some edge.
pub fn load_graph(
    edge_file: &FsPath,
    feature_file: Option<&FsPath>,
    opts: &LoadOptions,
) -> Result<Graph> {
    let text = fs::read_to_string(edge_file)?;
    let edges = parse_edge_list(&text, edge_file)?;
    let n = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    let mut seen = vec![false; n];
    for &(a, b) in &edges {
        seen[a] = true;
        seen[b] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::NodeId(format!(
            "node ids are not contiguous: {missing} never appears but {} does",
            n - 1
        )));
    }
    let g = Graph::from_edges(n, edges)?;
    match feature_file {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            let (data, rows, width) = parse_features(&text, path)?;
            if rows != n {
                return Err(Error::Shape(format!(
                    "feature file has {rows} rows but the graph has {n} nodes"
                )));
            }
            g.with_features(data, width)
        }
        None => Ok(g.with_identity_features(opts.max_identity_features)),
    }
}

/// Node sequence `(u₀, …, u_k)`. `synthetic` marks the length-one stand-in used
/// for pairs in different components; its endpoints need not be adjacent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub nodes: Vec<usize>,
    pub synthetic: bool,
}

impl Path {
    /// Number of edges.
    pub fn len(&self) -> usize {
        self.nodes.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() < 2
    }

    pub fn reversed(&self) -> Path {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        Path {
            nodes,
            synthetic: self.synthetic,
        }
    }

    /// Checks adjacency (unless synthetic) and distinctness against `g`.
    pub fn is_valid_in(&self, g: &Graph) -> bool {
        if self.nodes.iter().any(|&v| v >= g.n()) {
            return false;
        }
        let mut sorted = self.nodes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.nodes.len() {
            return false;
        }
        self.synthetic || self.nodes.windows(2).all(|w| g.has_edge(w[0], w[1]))
    }
}
