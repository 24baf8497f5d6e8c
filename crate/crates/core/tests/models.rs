use pathlink::encoders::{Encoder, EncoderConfig, EncoderKind, GraphContext, PropagationMode};
use pathlink::expressivity::{c8_ladder, pair_logits};
use pathlink::generators::{gnp, random_regular};
use pathlink::models::{LinkModel, LinkScorerConfig, PhiKind, ScorerKind};
use pathlink::rng::{stream, substream};
use pathlink::symmetry::{link_orbits, wl_refine, wl_refine_features, AutomorphismOptions};
use pathlink::tensor::{ParamSet, Tensor};
use pathlink::Graph;
use rand::seq::SliceRandom;
use rand::Rng as _;

fn encoder(kind: EncoderKind, in_dim: usize, seed: u64) -> (Encoder, ParamSet<f64>) {
    let mut ps = ParamSet::new();
    let cfg = EncoderConfig {
        kind,
        layers: 3,
        hidden: 8,
        ..Default::default()
    };
    let enc = Encoder::new(&mut ps, "enc", cfg, in_dim, &mut stream(seed, "init")).unwrap();
    (enc, ps)
}

fn embed(enc: &Encoder, ps: &ParamSet<f64>, g: &Graph, mode: PropagationMode) -> Tensor<f64> {
    let ctx = GraphContext::new(g, enc.config.kind, mode).unwrap();
    enc.encode(ps, &ctx).unwrap().matrix
}

fn random_features(g: Graph, dim: usize, seed: u64) -> Graph {
    let mut rng = stream(seed, "features");
    let f = (0..g.n() * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    g.with_features(f, dim).unwrap()
}

/// Features that depend only on the structural WL colour, so every
/// automorphism preserves them.
fn wl_consistent(g: Graph, seed: u64) -> Graph {
    let colors = wl_refine(&g, None).unwrap().colors;
    let mut rng = stream(seed, "colour_features");
    let table: Vec<f64> = (0..g.n() * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f = colors.iter().flat_map(|&c| table[c as usize * 3..c as usize * 3 + 3].to_vec()).collect();
    g.with_features(f, 3).unwrap()
}

#[test]
fn encoders_are_permutation_equivariant() {
    for i in 0..10 {
        let mut rng = substream(31, "perm", i);
        let n = rng.gen_range(5..=20);
        let g = random_features(gnp(n, 0.25, &mut rng), 4, i);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let h = g.permuted(&perm).unwrap();
        for kind in [EncoderKind::Gcn, EncoderKind::Sage] {
            let (enc, ps) = encoder(kind, 4, i);
            let a = embed(&enc, &ps, &g, PropagationMode::Auto);
            let b = embed(&enc, &ps, &h, PropagationMode::Auto);
            for v in 0..n {
                for (x, y) in a.row(v).iter().zip(b.row(perm[v])) {
                    assert!((x - y).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn dense_and_sparse_propagation_agree() {
    let mut rng = stream(32, "graph");
    let g = random_features(gnp(60, 0.1, &mut rng), 5, 0);
    for kind in [EncoderKind::Gcn, EncoderKind::Sage] {
        let (enc, ps) = encoder(kind, 5, 1);
        let d = embed(&enc, &ps, &g, PropagationMode::Dense);
        let s = embed(&enc, &ps, &g, PropagationMode::Sparse);
        assert!(d.max_abs_diff(&s) < 1e-12);
    }
}

#[test]
fn equal_wl_colours_give_equal_embeddings() {
    for i in 0..10 {
        let mut rng = substream(33, "regular", i);
        let base = if i % 2 == 0 {
            random_regular(12, 3, &mut rng).unwrap()
        } else {
            gnp(14, 0.2, &mut rng)
        };
        let g = wl_consistent(base, i);
        let colors = wl_refine_features(&g).unwrap().colors;
        for kind in [EncoderKind::Gcn, EncoderKind::Sage] {
            let (enc, ps) = encoder(kind, 3, i);
            let h = embed(&enc, &ps, &g, PropagationMode::Auto);
            for u in 0..g.n() {
                for v in 0..g.n() {
                    if colors[u] == colors[v] {
                        for (x, y) in h.row(u).iter().zip(h.row(v)) {
                            assert!((x - y).abs() < 1e-9);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn same_orbit_links_score_equally() {
    for i in 0..20 {
        let mut rng = substream(34, "orbit_graphs", i);
        let n = rng.gen_range(3..=8);
        let g = wl_consistent(gnp(n, 0.4, &mut rng), i);
        let table = link_orbits(&g, AutomorphismOptions { feature_aware: true }).unwrap();
        let pairs: Vec<(usize, usize)> = table.rows().map(|(u, v, _)| (u, v)).collect();
        for kind in ScorerKind::ALL {
            let model = LinkModel::<f64>::new(LinkScorerConfig::new(kind), g.feature_dim(), i).unwrap();
            let s = pair_logits(&model, &g, &pairs).unwrap();
            for (a, &x) in pairs.iter().zip(&s) {
                for (b, &y) in pairs.iter().zip(&s) {
                    if table.same_orbit(*a, *b) {
                        assert!((x - y).abs() < 1e-9, "{kind} {a:?} {b:?}");
                    }
                }
            }
        }
    }
}

#[test]
fn c8_ladder_for_every_sequence_model() {
    for phi in [PhiKind::InjectiveSum, PhiKind::Recurrent, PhiKind::Attention] {
        let c = c8_ladder(phi, 100).unwrap();
        assert!(c.holds(), "{phi:?}: {c:?}");
    }
}

#[test]
fn scores_are_symmetric_in_f32() {
    let mut rng = stream(35, "graph");
    let g = random_features(gnp(15, 0.3, &mut rng), 3, 2);
    let model = LinkModel::<f32>::new(LinkScorerConfig::new(ScorerKind::Sp4lp), 3, 0).unwrap();
    let ctx = model.context(&g, PropagationMode::Auto).unwrap();
    let order = pathlink::models::model_visit_order(&g).unwrap();
    let idx = pathlink::paths::build_index_ordered(&g, &(0..15).collect::<Vec<_>>(), &order).unwrap();
    let batch = model.prepare(&g, Some(&idx), vec![(1, 9), (9, 1)]).unwrap();
    let s = model.predict(&ctx, &batch).unwrap();
    assert_eq!(s[0], s[1]);
}
