use std::path::Path as FsPath;

use pathlink::eval::ranks_shared;
use pathlink::graph::parse_edge_list;
use pathlink::heuristics::{score, Heuristic, KatzParams};
use pathlink::paths::build_index;
use pathlink::Graph;
use proptest::prelude::*;

fn arb_graph() -> impl Strategy<Value = Graph> {
    (2usize..16).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..40).prop_map(move |pairs| {
            let edges = pairs.into_iter().filter(|(a, b)| a != b);
            Graph::from_edges(n, edges).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn edge_list_round_trips(g in arb_graph()) {
        let text = g.edge_list_string();
        let edges = parse_edge_list(&text, FsPath::new("mem")).unwrap();
        let again = Graph::from_edges(g.n(), edges).unwrap();
        prop_assert_eq!(again.edges(), g.edges());
        prop_assert_eq!(again.edge_list_string(), text);
    }

    #[test]
    fn degrees_sum_to_twice_the_edges(g in arb_graph()) {
        let total: usize = (0..g.n()).map(|v| g.degree(v).unwrap()).sum();
        prop_assert_eq!(total, 2 * g.num_edges());
    }

    #[test]
    fn heuristics_are_symmetric(g in arb_graph(), a in 0usize..16, b in 0usize..16) {
        let (u, v) = (a % g.n(), b % g.n());
        prop_assume!(u != v);
        let idx = build_index(&g, &(0..g.n()).collect::<Vec<_>>()).unwrap();
        prop_assert_eq!(g.common_neighbors(u, v).unwrap(), g.common_neighbors(v, u).unwrap());
        for h in Heuristic::ALL {
            let x = score::<f64>(&g, Some(&idx), h, u, v, KatzParams::default()).unwrap().value;
            let y = score::<f64>(&g, Some(&idx), h, v, u, KatzParams::default()).unwrap().value;
            prop_assert_eq!(x, y);
        }
    }

    #[test]
    fn ranks_ignore_monotone_rescaling(
        pos in prop::collection::vec(-5i32..5, 1..10),
        neg in prop::collection::vec(-5i32..5, 1..30),
        scale in 0.1f64..10.0,
        shift in -3.0f64..3.0,
    ) {
        let f = |xs: &[i32]| xs.iter().map(|&x| x as f64).collect::<Vec<_>>();
        let g = |xs: &[i32]| xs.iter().map(|&x| scale * x as f64 + shift).collect::<Vec<_>>();
        prop_assert_eq!(ranks_shared(&f(&pos), &f(&neg)), ranks_shared(&g(&pos), &g(&neg)));
    }
}
