use pathlink::eval::{hits_at, mrr, random_mrr_expectation, ranks_per_positive, ranks_shared, EvalReport};
use pathlink::generators::gnp;
use pathlink::rng::{stream, substream};
use pathlink::train::{sample_negatives, NegativeMode};
use pathlink_oracles as oracle;
use rand::Rng as _;
use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Scores drawn from a handful of levels so that ties are common.
fn tied_scores(rng: &mut impl rand::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0..6) as f64 * 0.25 - 0.5).collect()
}

#[test]
fn ranks_match_sort_oracle() {
    for i in 0..100 {
        let mut rng = substream(21, "scores", i);
        let (p, m) = (rng.gen_range(1..20), rng.gen_range(1..40));
        let (pos, neg) = if i % 2 == 0 {
            (tied_scores(&mut rng, p), tied_scores(&mut rng, m))
        } else {
            let mut f = |n| (0..n).map(|_| rng.gen::<f64>()).collect::<Vec<_>>();
            (f(p), f(m))
        };
        let ranks = ranks_shared(&pos, &neg);
        let want = oracle::sort_based_ranks(&pos, &neg);
        assert_eq!(ranks, want);
        let rep = EvalReport::from_ranks(ranks.clone(), &[1, 3, 10], 0).unwrap();
        assert_eq!(rep.mrr, oracle::mrr(&want));
        for k in [1, 3, 10] {
            assert_eq!(rep.hits(k), Some(oracle::hits_at(&want, k)));
        }
        let h: Vec<f64> = rep.hits.iter().map(|x| x.1).collect();
        assert!(h.windows(2).all(|w| w[0] <= w[1]));
        assert!(rep.mrr >= 1.0 / (1.0 + m as f64));
    }
}

#[test]
fn monotone_transforms_leave_metrics_unchanged() {
    let transforms: [fn(f64) -> f64; 3] = [|x| 3.0 * x - 7.0, |x| x.exp(), |x| (x * 2.0).tanh()];
    for i in 0..50 {
        let mut rng = substream(22, "scores", i);
        let pos = tied_scores(&mut rng, 15);
        let neg = tied_scores(&mut rng, 30);
        let base = ranks_shared(&pos, &neg);
        for f in transforms {
            let tp: Vec<f64> = pos.iter().map(|&x| f(x)).collect();
            let tn: Vec<f64> = neg.iter().map(|&x| f(x)).collect();
            let r = ranks_shared(&tp, &tn);
            assert_eq!(r, base);
            assert_eq!(mrr(&r), mrr(&base));
            assert_eq!(hits_at(&r, 5), hits_at(&base, 5));
        }
    }
}

#[test]
fn per_positive_lists_rank_independently() {
    let r = ranks_per_positive(&[0.5, 0.1], &[vec![0.4, 0.6], vec![0.1, 0.1, 0.0]]).unwrap();
    assert_eq!(r, vec![2.0, 2.0]);
    assert!(ranks_per_positive(&[0.5], &[]).is_err());
}

#[test]
fn negatives_are_uniform_non_edges() {
    let mut rng = stream(23, "graph");
    let g = gnp(20, 0.3, &mut rng);
    let non_edges: Vec<(usize, usize)> = (0..20)
        .flat_map(|u| ((u + 1)..20).map(move |v| (u, v)))
        .filter(|&(u, v)| !g.has_edge(u, v))
        .collect();
    let mut counts = vec![0usize; non_edges.len()];
    for seed in 0..1000 {
        for (u, v) in sample_negatives(&g, 10, seed, NegativeMode::TrainPerStep).unwrap() {
            let key = (u.min(v), u.max(v));
            let slot = non_edges.binary_search(&key).expect("sampled an edge");
            counts[slot] += 1;
        }
    }
    let stat = oracle::chi_square_uniform(&counts);
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    let p = 1.0 - dist.cdf(stat);
    assert!(p > 0.01, "chi-square {stat} over {} cells, p = {p}", counts.len());
}

#[test]
fn random_scorer_mrr_matches_expectation() {
    let m = 100;
    let per_seed: Vec<f64> = (0..50)
        .map(|seed| {
            let mut rng = substream(24, "random_scorer", seed);
            let pos: Vec<f64> = (0..200).map(|_| rng.gen()).collect();
            let neg: Vec<f64> = (0..m).map(|_| rng.gen()).collect();
            mrr(&ranks_shared(&pos, &neg))
        })
        .collect();
    let n = per_seed.len() as f64;
    let mean = per_seed.iter().sum::<f64>() / n;
    let var = per_seed.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    let want = random_mrr_expectation(m);
    assert!((want - oracle::harmonic(m + 1) / (m + 1) as f64).abs() < 1e-12);
    assert!((mean - want).abs() < 3.0 * se, "mean {mean}, expected {want}, se {se}");
}
