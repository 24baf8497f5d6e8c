//! Slow, obviously-correct reference implementations.
//!
//! Everything here works on plain edge lists and dense matrices so that it
//! shares no code path with the `pathlink` crate it is used to check.

/// Dense 0/1 adjacency matrix of an undirected simple graph.
pub fn dense_adjacency(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<u8>> {
    let mut a = vec![vec![0u8; n]; n];
    for &(i, j) in edges {
        a[i][j] = 1;
        a[j][i] = 1;
    }
    a
}

/// All-pairs hop distances by Floyd–Warshall. `None` marks unreachable pairs.
pub fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<Option<usize>>> {
    const INF: usize = usize::MAX / 4;
    let mut d = vec![vec![INF; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(i, j) in edges {
        d[i][j] = 1;
        d[j][i] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d.into_iter()
        .map(|row| row.into_iter().map(|x| (x < INF).then_some(x)).collect())
        .collect()
}

/// Common neighbours by scanning every node.
pub fn common_neighbors(n: usize, edges: &[(usize, usize)], u: usize, v: usize) -> Vec<usize> {
    let a = dense_adjacency(n, edges);
    (0..n).filter(|&w| a[u][w] == 1 && a[v][w] == 1).collect()
}

pub fn degrees(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut d = vec![0; n];
    for &(i, j) in edges {
        d[i] += 1;
        d[j] += 1;
    }
    d
}

pub fn adamic_adar(n: usize, edges: &[(usize, usize)], u: usize, v: usize) -> f64 {
    let deg = degrees(n, edges);
    common_neighbors(n, edges, u, v)
        .into_iter()
        .map(|w| 1.0 / (deg[w] as f64).ln())
        .sum()
}

pub fn resource_allocation(n: usize, edges: &[(usize, usize)], u: usize, v: usize) -> f64 {
    let deg = degrees(n, edges);
    common_neighbors(n, edges, u, v)
        .into_iter()
        .map(|w| 1.0 / deg[w] as f64)
        .sum()
}

/// Truncated Katz index from explicit dense matrix powers.
pub fn katz_dense(
    n: usize,
    edges: &[(usize, usize)],
    u: usize,
    v: usize,
    beta: f64,
    lmax: usize,
) -> f64 {
    let a: Vec<Vec<f64>> = dense_adjacency(n, edges)
        .into_iter()
        .map(|r| r.into_iter().map(f64::from).collect())
        .collect();
    let mut power = a.clone();
    let mut total = 0.0;
    let mut coeff = beta;
    for l in 1..=lmax {
        if l > 1 {
            power = dense_matmul(&power, &a);
            coeff *= beta;
        }
        total += coeff * power[u][v];
    }
    total
}

pub fn dense_matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let m = b[0].len();
    let k = b.len();
    let mut out = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

/// Every permutation of `0..n` that preserves the adjacency matrix, found by
/// exhaustive enumeration (Heap's algorithm). Only usable for tiny `n`.
pub fn automorphisms(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let a = dense_adjacency(n, edges);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut found = Vec::new();
    let preserves = |p: &[usize]| {
        (0..n).all(|i| (0..n).all(|j| a[i][j] == a[p[i]][p[j]]))
    };
    let mut c = vec![0usize; n];
    if preserves(&perm) {
        found.push(perm.clone());
    }
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            if preserves(&perm) {
                found.push(perm.clone());
            }
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    found.sort();
    found
}

/// Number of orbits of unordered pairs `{u, v}`, `u != v`, under a permutation
/// group given explicitly as a list of permutations.
pub fn pair_orbit_count(n: usize, group: &[Vec<usize>]) -> usize {
    let mut seen = vec![vec![false; n]; n];
    let mut orbits = 0;
    for u in 0..n {
        for v in (u + 1)..n {
            if seen[u][v] {
                continue;
            }
            orbits += 1;
            for g in group {
                let (a, b) = (g[u].min(g[v]), g[u].max(g[v]));
                seen[a][b] = true;
            }
        }
    }
    orbits
}

/// True when some permutation in `group` maps `{u, v}` onto `{x, y}`.
pub fn pairs_related(group: &[Vec<usize>], (u, v): (usize, usize), (x, y): (usize, usize)) -> bool {
    group
        .iter()
        .any(|g| (g[u] == x && g[v] == y) || (g[u] == y && g[v] == x))
}

/// Node orbit id for each node under `group`; ids are the smallest member.
pub fn node_orbits(n: usize, group: &[Vec<usize>]) -> Vec<usize> {
    (0..n)
        .map(|v| group.iter().map(|g| g[v]).min().unwrap_or(v))
        .collect()
}

/// Fractional ranks of every positive against a shared negative list, from a
/// single joint sort. Tied scores share the average of the positions they
/// occupy among themselves, so a positive tied with `t` negatives lands at
/// `1 + above + t/2`.
pub fn sort_based_ranks(positives: &[f64], negatives: &[f64]) -> Vec<f64> {
    positives
        .iter()
        .map(|&p| {
            let mut all: Vec<(f64, bool)> = negatives.iter().map(|&s| (s, false)).collect();
            all.push((p, true));
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let first = all.iter().position(|x| x.0 == p).unwrap();
            let last = all.iter().rposition(|x| x.0 == p).unwrap();
            // positions first..=last hold the tie group (positive + tied negatives)
            let ties = (last - first) as f64;
            1.0 + first as f64 + ties / 2.0
        })
        .collect()
}

pub fn mrr(ranks: &[f64]) -> f64 {
    ranks.iter().map(|r| 1.0 / r).sum::<f64>() / ranks.len() as f64
}

pub fn hits_at(ranks: &[f64], k: usize) -> f64 {
    ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / ranks.len() as f64
}

/// Central finite difference of `f` along coordinate `i` of `x`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut plus = x.to_vec();
    let mut minus = x.to_vec();
    plus[i] += h;
    minus[i] -= h;
    (f(&plus) - f(&minus)) / (2.0 * h)
}

/// Symmetric relative error, guarded against two near-zero values.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / scale
}

/// Pearson chi-square statistic of observed counts against a uniform expectation.
pub fn chi_square_uniform(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum()
}

/// Harmonic number H(m).
pub fn harmonic(m: usize) -> f64 {
    (1..=m).map(|i| 1.0 / i as f64).sum()
}

/// Least-squares slope of `ys` against `xs`.
pub fn fitted_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> Vec<(usize, usize)> {
        (0..n).map(|i| (i, (i + 1) % n)).collect()
    }

    #[test]
    fn dihedral_group_sizes() {
        assert_eq!(automorphisms(6, &cycle(6)).len(), 12);
        assert_eq!(automorphisms(8, &cycle(8)).len(), 16);
        assert_eq!(pair_orbit_count(6, &automorphisms(6, &cycle(6))), 3);
    }

    #[test]
    fn katz_on_c8() {
        let k = katz_dense(8, &cycle(8), 0, 4, 0.1, 4);
        assert!((k - 2e-4).abs() < 1e-15);
    }

    #[test]
    fn tie_rank() {
        let r = sort_based_ranks(&[1.0], &[1.0; 9]);
        assert_eq!(r, vec![5.5]);
    }
}
