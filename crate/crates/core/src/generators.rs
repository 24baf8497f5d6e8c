//! Small named graphs and seeded random graph models.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::Rng;

pub fn cycle(n: usize) -> Graph {
    Graph::from_edges(n, (0..n).map(|i| (i, (i + 1) % n))).expect("cycle needs n >= 3")
}

pub fn path(n: usize) -> Graph {
    Graph::from_edges(n, (1..n).map(|i| (i - 1, i))).expect("valid path")
}

pub fn complete(n: usize) -> Graph {
    Graph::from_edges(n, (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))).expect("valid")
}

/// `K_{1,leaves}` with the centre at node 0.
pub fn star(leaves: usize) -> Graph {
    Graph::from_edges(leaves + 1, (1..=leaves).map(|i| (0, i))).expect("valid star")
}

/// Two `size`-cliques on nodes `0..size` and `size..2*size`, joined by
/// `bridges` edges `(i, size + i)`.
pub fn joined_cliques(size: usize, bridges: usize) -> Graph {
    let mut edges = Vec::new();
    for base in [0, size] {
        for i in 0..size {
            for j in (i + 1)..size {
                edges.push((base + i, base + j));
            }
        }
    }
    edges.extend((0..bridges.min(size)).map(|i| (i, size + i)));
    Graph::from_edges(2 * size, edges).expect("valid")
}

/// Erdős–Rényi `G(n, p)`.
pub fn gnp(n: usize, p: f64, rng: &mut Rng) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges).expect("valid")
}

/// Erdős–Rényi `G(n, m)`: `m` distinct edges drawn uniformly by rejection.
pub fn gnm(n: usize, m: usize, rng: &mut Rng) -> Result<Graph> {
    let max = n * n.saturating_sub(1) / 2;
    if m > max {
        return Err(Error::Argument(format!("{m} edges do not fit in {n} nodes")));
    }
    let mut set = std::collections::HashSet::with_capacity(m);
    while set.len() < m {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        if a != b {
            set.insert((a.min(b), a.max(b)));
        }
    }
    let mut edges: Vec<_> = set.into_iter().collect();
    edges.sort_unstable();
    Graph::from_edges(n, edges)
}

/// Stochastic block model with equal-probability blocks of the given sizes.
/// Node ids are assigned block by block.
pub fn sbm(block_sizes: &[usize], p_in: f64, p_out: f64, rng: &mut Rng) -> Graph {
    let n: usize = block_sizes.iter().sum();
    let block: Vec<usize> = block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if block[i] == block[j] { p_in } else { p_out };
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, edges).expect("valid")
}

/// Uniform-ish random `d`-regular graph by the pairing model with restarts.
pub fn random_regular(n: usize, d: usize, rng: &mut Rng) -> Result<Graph> {
    if d >= n || (n * d) % 2 == 1 {
        return Err(Error::Argument(format!("no {d}-regular graph on {n} nodes")));
    }
    'attempt: for _ in 0..10_000 {
        let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, d)).collect();
        stubs.shuffle(rng);
        let mut edges = std::collections::HashSet::new();
        for pair in stubs.chunks(2) {
            let (a, b) = (pair[0], pair[1]);
            if a == b || !edges.insert((a.min(b), a.max(b))) {
                continue 'attempt;
            }
        }
        let mut edges: Vec<_> = edges.into_iter().collect();
        edges.sort_unstable();
        return Graph::from_edges(n, edges);
    }
    Err(Error::Argument(format!(
        "pairing model failed to produce a simple {d}-regular graph on {n} nodes"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn named_graphs() {
        assert_eq!(cycle(8).num_edges(), 8);
        assert_eq!(path(4).num_edges(), 3);
        assert_eq!(complete(4).num_edges(), 6);
        assert_eq!(star(4).degree(0).unwrap(), 4);
        assert_eq!(joined_cliques(4, 1).num_edges(), 13);
    }

    #[test]
    fn regular_is_regular() {
        let mut rng = stream(3, "test");
        let g = random_regular(10, 3, &mut rng).unwrap();
        assert!((0..10).all(|v| g.degree(v).unwrap() == 3));
    }

    #[test]
    fn gnm_edge_count() {
        let mut rng = stream(1, "test");
        let g = gnm(50, 120, &mut rng).unwrap();
        assert_eq!(g.num_edges(), 120);
    }
}
