//! Classical link-prediction scores: CN, AA, RA, inverse shortest-path
//! distance and truncated Katz. Every score is oriented so that higher means
//! more likely to be a link.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::paths::PathIndex;
use crate::scalar::Scalar;

pub const DEFAULT_KATZ_BETA: f64 = 0.005;
pub const DEFAULT_KATZ_MAX_LENGTH: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Heuristic {
    CommonNeighbors,
    AdamicAdar,
    ResourceAllocation,
    ShortestPath,
    Katz,
}

impl Heuristic {
    pub const ALL: [Heuristic; 5] = [
        Heuristic::CommonNeighbors,
        Heuristic::AdamicAdar,
        Heuristic::ResourceAllocation,
        Heuristic::ShortestPath,
        Heuristic::Katz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Heuristic::CommonNeighbors => "CN",
            Heuristic::AdamicAdar => "AA",
            Heuristic::ResourceAllocation => "RA",
            Heuristic::ShortestPath => "SP",
            Heuristic::Katz => "Katz",
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Heuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cn" | "common_neighbors" => Ok(Heuristic::CommonNeighbors),
            "aa" | "adamic_adar" => Ok(Heuristic::AdamicAdar),
            "ra" | "resource_allocation" => Ok(Heuristic::ResourceAllocation),
            "sp" | "shortest_path" => Ok(Heuristic::ShortestPath),
            "katz" => Ok(Heuristic::Katz),
            _ => Err(Error::Argument(format!(
                "unknown heuristic {s:?} (expected CN, AA, RA, SP or Katz)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KatzParams {
    pub beta: f64,
    pub max_length: usize,
}

impl Default for KatzParams {
    fn default() -> Self {
        Self {
            beta: DEFAULT_KATZ_BETA,
            max_length: DEFAULT_KATZ_MAX_LENGTH,
        }
    }
}

impl KatzParams {
    /// Rejects `β ≤ 0` and a zero walk length; warns when `β ≥ 1/Δ_max`, where
    /// the untruncated series would diverge.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::Argument(format!("Katz beta must be positive, got {}", self.beta)));
        }
        if self.max_length == 0 {
            return Err(Error::Argument("Katz max length must be at least 1".into()));
        }
        let dmax = g.max_degree();
        if dmax > 0 && self.beta >= 1.0 / dmax as f64 {
            log::warn!(
                "Katz beta {} >= 1/max_degree = {}; the untruncated series diverges",
                self.beta,
                1.0 / dmax as f64
            );
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeuristicScore<S> {
    pub name: Heuristic,
    pub value: S,
}

/// Scores the pair `(u, v)`. `idx` is only consulted for [`Heuristic::ShortestPath`].
pub fn score<S: Scalar>(
    g: &Graph,
    idx: Option<&PathIndex>,
    name: Heuristic,
    u: usize,
    v: usize,
    katz: KatzParams,
) -> Result<HeuristicScore<S>> {
    g.check_node(u)?;
    g.check_node(v)?;
    if u == v {
        return Err(Error::Argument(format!("heuristics need two distinct nodes, got {u} twice")));
    }
    let value = match name {
        Heuristic::CommonNeighbors => S::lit(g.common_neighbors(u, v)?.len() as f64),
        Heuristic::AdamicAdar => {
            let mut total = S::zero();
            for w in g.common_neighbors(u, v)? {
                let d = g.degree(w)?;
                // w is adjacent to both endpoints
                assert!(d >= 2, "common neighbour {w} has degree {d}");
                total += S::one() / S::lit(d as f64).ln();
            }
            total
        }
        Heuristic::ResourceAllocation => {
            let mut total = S::zero();
            for w in g.common_neighbors(u, v)? {
                total += S::one() / S::lit(g.degree(w)? as f64);
            }
            total
        }
        Heuristic::ShortestPath => {
            let idx = idx.ok_or_else(|| {
                Error::Argument("the shortest-path heuristic needs a path index".into())
            })?;
            match idx.distance(u, v)? {
                Some(d) => S::one() / S::lit(d as f64),
                None => S::zero(),
            }
        }
        Heuristic::Katz => katz_score(g, u, v, katz)?,
    };
    Ok(HeuristicScore { name, value })
}

/// `Σ_{l=1..L} βˡ (Aˡ)_{uv}` by `L` sparse products starting from the indicator of `u`.
pub fn katz_score<S: Scalar>(g: &Graph, u: usize, v: usize, katz: KatzParams) -> Result<S> {
    katz.validate(g)?;
    let n = g.n();
    let beta = S::lit(katz.beta);
    let mut walks = vec![S::zero(); n];
    walks[u] = S::one();
    let mut next = vec![S::zero(); n];
    let mut coeff = S::one();
    let mut total = S::zero();
    for _ in 0..katz.max_length {
        for (x, out) in next.iter_mut().enumerate() {
            *out = g.neighbors(x).iter().map(|&y| walks[y]).sum();
        }
        std::mem::swap(&mut walks, &mut next);
        coeff *= beta;
        total += coeff * walks[v];
    }
    Ok(total)
}
