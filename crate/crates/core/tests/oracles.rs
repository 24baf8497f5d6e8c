//! Graph algorithms checked against the brute-force oracles.

use pathlink::generators::gnp;
use pathlink::heuristics::{score, Heuristic, KatzParams};
use pathlink::paths::{build_index, build_index_ordered, VisitOrder};
use pathlink::rng::substream;
use pathlink::symmetry::{enumerate_automorphisms, link_orbits, node_orbits, wl_refine, AutomorphismOptions};
use pathlink::Graph;
use pathlink_oracles as oracle;
use rand::Rng as _;

fn random_graphs(label: &str, count: u64, max_n: usize, ps: &[f64]) -> Vec<Graph> {
    (0..count)
        .map(|i| {
            let mut rng = substream(11, label, i);
            let n = rng.gen_range(2..=max_n);
            let p = ps[i as usize % ps.len()];
            gnp(n, p, &mut rng)
        })
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

#[test]
fn bfs_matches_floyd_warshall_and_paths_are_valid() {
    for g in random_graphs("fw", 50, 50, &[0.05, 0.1, 0.3]) {
        let n = g.n();
        let all: Vec<usize> = (0..n).collect();
        let idx = build_index(&g, &all).unwrap();
        let fw = oracle::floyd_warshall(n, g.edges());
        for u in 0..n {
            for v in 0..n {
                assert_eq!(idx.distance(u, v).unwrap(), fw[u][v], "pair ({u}, {v})");
                if u == v {
                    continue;
                }
                let path = idx.shortest_path(u, v).unwrap();
                match fw[u][v] {
                    Some(d) => {
                        assert!(!path.synthetic);
                        assert_eq!(path.len(), d);
                        assert!(path.is_valid_in(&g));
                        assert_eq!(path.nodes[0], u.min(v));
                        assert_eq!(*path.nodes.last().unwrap(), u.max(v));
                        let src = path.nodes[0];
                        for w in path.nodes.windows(2) {
                            assert_eq!(fw[src][w[1]], fw[src][w[0]].map(|x| x + 1));
                        }
                    }
                    None => assert!(path.synthetic),
                }
            }
        }
        let again = build_index_ordered(&g, &all, &VisitOrder::by_id()).unwrap();
        for s in 0..n {
            assert_eq!(idx.parent_row(s), again.parent_row(s));
        }
    }
}

#[test]
fn common_neighbours_match_brute_force() {
    let mut rng = substream(12, "cn", 0);
    let g = gnp(30, 0.2, &mut rng);
    for _ in 0..20 {
        let u = rng.gen_range(0..30);
        let v = (u + rng.gen_range(1..30)) % 30;
        assert_eq!(g.common_neighbors(u, v).unwrap(), oracle::common_neighbors(30, g.edges(), u, v));
        assert_eq!(g.common_neighbors(u, v).unwrap(), g.common_neighbors(v, u).unwrap());
    }
}

#[test]
fn heuristics_match_dense_oracles() {
    let katz = KatzParams::default();
    for g in random_graphs("heur", 20, 30, &[0.1, 0.2, 0.35]) {
        let n = g.n();
        let e = g.edges();
        let all: Vec<usize> = (0..n).collect();
        let idx = build_index(&g, &all).unwrap();
        let fw = oracle::floyd_warshall(n, e);
        for u in 0..n {
            for v in (u + 1)..n {
                let got = |h| score::<f64>(&g, Some(&idx), h, u, v, katz).unwrap().value;
                let sp = fw[u][v].map_or(0.0, |d| 1.0 / d as f64);
                let want = [
                    (Heuristic::CommonNeighbors, oracle::common_neighbors(n, e, u, v).len() as f64),
                    (Heuristic::AdamicAdar, oracle::adamic_adar(n, e, u, v)),
                    (Heuristic::ResourceAllocation, oracle::resource_allocation(n, e, u, v)),
                    (Heuristic::ShortestPath, sp),
                    (Heuristic::Katz, oracle::katz_dense(n, e, u, v, katz.beta, katz.max_length)),
                ];
                for (h, w) in want {
                    assert!(rel(got(h), w) < 1e-10, "{h} on ({u}, {v}): {} vs {w}", got(h));
                    let back = score::<f64>(&g, Some(&idx), h, v, u, katz).unwrap().value;
                    assert_eq!(got(h), back);
                }
            }
        }
    }
}

#[test]
fn c8_katz_and_sp_hand_values() {
    let g = pathlink::generators::cycle(8);
    let idx = build_index(&g, &[0]).unwrap();
    let katz = KatzParams { beta: 0.1, max_length: 4 };
    let sp = score::<f64>(&g, Some(&idx), Heuristic::ShortestPath, 0, 4, katz).unwrap().value;
    let k = score::<f64>(&g, None, Heuristic::Katz, 0, 4, katz).unwrap().value;
    assert_eq!(sp, 0.25);
    assert!((k - 2e-4).abs() < 1e-15);
}

#[test]
fn automorphisms_match_exhaustive_search() {
    for g in random_graphs("auto", 25, 7, &[0.3, 0.5]) {
        let n = g.n();
        let mut brute = oracle::automorphisms(n, g.edges());
        brute.sort();
        let found = enumerate_automorphisms(&g, AutomorphismOptions::default()).unwrap();
        assert_eq!(found, brute);
        assert_eq!(
            link_orbits(&g, AutomorphismOptions::default()).unwrap().num_orbits,
            oracle::pair_orbit_count(n, &brute)
        );
        // group axioms: identity, closure, inverses
        assert!(found.contains(&(0..n).collect::<Vec<_>>()));
        for a in &found {
            let inv = (0..n).fold(vec![0; n], |mut acc, i| {
                acc[a[i]] = i;
                acc
            });
            assert!(found.contains(&inv));
            for b in &found {
                let ab: Vec<usize> = (0..n).map(|i| a[b[i]]).collect();
                assert!(found.contains(&ab));
            }
        }
    }
}

#[test]
fn wl_colours_never_split_an_orbit() {
    for g in random_graphs("wl", 30, 10, &[0.2, 0.35, 0.5]) {
        let colors = wl_refine(&g, None).unwrap().colors;
        let group = oracle::automorphisms(g.n(), g.edges());
        for sigma in &group {
            for v in 0..g.n() {
                assert_eq!(colors[v], colors[sigma[v]]);
            }
        }
        let orbits = node_orbits(&g, AutomorphismOptions::default()).unwrap();
        let brute = oracle::node_orbits(g.n(), &group);
        for u in 0..g.n() {
            for v in 0..g.n() {
                assert_eq!(orbits[u] == orbits[v], brute[u] == brute[v]);
            }
        }
    }
}
