//! The ten acceptance criteria, each reported as one PASS/FAIL line.
//!
//! Run with `cargo test -p pathlink-cli --test acceptance -- --nocapture`.
//! The report goes straight to stderr so it shows even without `--nocapture`.

#[allow(dead_code)]
#[path = "../../core/tests/support/gradcheck.rs"]
mod gradcheck;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use pathlink::eval::{hits_at, mrr, ranks_shared, EvalReport};
use pathlink::expressivity::{c8, c8_ladder, pair_logits};
use pathlink::generators::{complete, cycle, gnm, gnp, joined_cliques, path, sbm};
use pathlink::heuristics::{score, Heuristic, KatzParams};
use pathlink::models::{LinkModel, LinkScorerConfig, PhiKind, ScorerKind};
use pathlink::paths::build_index;
use pathlink::rng::{stream, substream};
use pathlink::symmetry::{enumerate_automorphisms, link_orbits, node_orbits, wl_refine, AutomorphismOptions};
use pathlink::train::{evaluate_test, train, Experiment, ExperimentOptions, SplitRatios, TrainOptions};
use pathlink::Graph;
use pathlink_oracles as oracle;
use rand::Rng as _;

type Outcome = Result<String, String>;

fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn criterion(id: &str, name: &str, budget: Option<Duration>, check: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let outcome = check();
    let took = t.elapsed();
    let (pass, detail) = match outcome {
        Ok(d) => match budget {
            Some(b) if took > b => (false, format!("{d}; over the {}s budget", b.as_secs())),
            _ => (true, d),
        },
        Err(d) => (false, d),
    };
    report(&format!(
        "{id:<3} {:<4} {name} ({:.1}s): {detail}",
        if pass { "PASS" } else { "FAIL" },
        took.as_secs_f64()
    ));
    pass
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn c1_shortest_paths() -> Outcome {
    let ps = [0.05, 0.1, 0.3];
    let mut pairs = 0usize;
    for i in 0..50u64 {
        let mut rng = substream(101, "fw", i);
        let n = rng.gen_range(2..=50);
        let g = gnp(n, ps[i as usize % 3], &mut rng);
        let idx = build_index(&g, &(0..n).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        let fw = oracle::floyd_warshall(n, g.edges());
        for u in 0..n {
            for v in 0..n {
                let d = idx.distance(u, v).map_err(|e| e.to_string())?;
                ensure(d == fw[u][v], || format!("graph {i} ({u}, {v}): BFS {d:?} vs FW {:?}", fw[u][v]))?;
                if u == v {
                    continue;
                }
                let p = idx.shortest_path(u, v).map_err(|e| e.to_string())?;
                if let Some(d) = d {
                    let distinct = {
                        let mut s = p.nodes.clone();
                        s.sort_unstable();
                        s.dedup();
                        s.len() == p.nodes.len()
                    };
                    ensure(p.len() == d && p.is_valid_in(&g) && distinct, || {
                        format!("graph {i} ({u}, {v}): bad path {:?}", p.nodes)
                    })?;
                }
                pairs += 1;
            }
        }
    }
    Ok(format!("50 graphs, {pairs} ordered pairs agree"))
}

fn c2_gradients() -> Outcome {
    let blocks = gradcheck::all_blocks();
    let worst = blocks.iter().cloned().fold(("", 0.0f64), |a, b| if b.1 > a.1 { b } else { a });
    let bad: Vec<String> = blocks
        .iter()
        .filter(|b| !(b.1 < gradcheck::TOL))
        .map(|b| format!("{} {:.1e}", b.0, b.1))
        .collect();
    ensure(bad.is_empty(), || format!("over tolerance: {}", bad.join(", ")))?;
    Ok(format!(
        "{} blocks x {} probes, worst {:.1e} ({})",
        blocks.len(),
        gradcheck::PROBES,
        worst.1,
        worst.0
    ))
}

fn c3_symmetry() -> Outcome {
    let opts = AutomorphismOptions::default();
    let count = |g: &Graph| enumerate_automorphisms(g, opts).map(|a| a.len()).map_err(|e| e.to_string());
    let (c6, k4, p3) = (count(&cycle(6))?, count(&complete(4))?, count(&path(3))?);
    ensure((c6, k4, p3) == (12, 24, 2), || format!("automorphisms C6/K4/P3 = {c6}/{k4}/{p3}"))?;
    let orbits = link_orbits(&cycle(6), opts).map_err(|e| e.to_string())?.num_orbits;
    ensure(orbits == 3, || format!("C6 has {orbits} link orbits"))?;
    let g = c8();
    let nodes = node_orbits(&g, opts).map_err(|e| e.to_string())?;
    ensure(nodes.iter().all(|&o| o == nodes[0]), || "C8 nodes split into several orbits".into())?;
    let links = link_orbits(&g, opts).map_err(|e| e.to_string())?;
    ensure(!links.same_orbit((0, 3), (0, 4)), || "C8 (0,3) and (0,4) share a link orbit".into())?;
    Ok("C6/K4/P3 = 12/24/2, C6 has 3 link orbits, C8 premise holds".into())
}

fn c4_ladder() -> Outcome {
    let c = c8_ladder(PhiKind::InjectiveSum, 0).map_err(|e| e.to_string())?;
    let detail = format!(
        "pure_gnn ties {}/{}, ncn ties {}/{}, sp4lp separates {}/{}",
        c.pure_ties, c.draws, c.ncn_ties, c.draws, c.sp4lp_separates, c.draws
    );
    ensure(c.draws == 10 && c.holds(), || detail.clone())?;
    Ok(detail)
}

fn c5_orbit_invariance() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for i in 0..20u64 {
        let mut rng = substream(105, "orbit_graphs", i);
        let n = rng.gen_range(3..=8);
        let g = gnp(n, 0.4, &mut rng);
        // features that depend only on the WL colour are preserved by every automorphism
        let colors = wl_refine(&g, None).map_err(|e| e.to_string())?.colors;
        let table: Vec<f64> = (0..n * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = colors.iter().flat_map(|&c| table[c as usize * 3..c as usize * 3 + 3].to_vec()).collect();
        let g = g.with_features(f, 3).map_err(|e| e.to_string())?;
        let orbits = link_orbits(&g, AutomorphismOptions { feature_aware: true }).map_err(|e| e.to_string())?;
        let pairs: Vec<(usize, usize)> = orbits.rows().map(|(u, v, _)| (u, v)).collect();
        for kind in ScorerKind::ALL {
            let model = LinkModel::<f64>::new(LinkScorerConfig::new(kind), 3, i).map_err(|e| e.to_string())?;
            let s = pair_logits(&model, &g, &pairs).map_err(|e| e.to_string())?;
            for (a, x) in pairs.iter().zip(&s) {
                for (b, y) in pairs.iter().zip(&s) {
                    if orbits.same_orbit(*a, *b) {
                        worst = worst.max((x - y).abs());
                        checked += 1;
                    }
                }
            }
        }
    }
    ensure(worst < 1e-9, || format!("in-orbit logit gap {worst:.1e}"))?;
    Ok(format!("{checked} same-orbit comparisons, largest gap {worst:.1e}"))
}

fn c6_heuristics() -> Outcome {
    let katz = KatzParams::default();
    let ps = [0.1, 0.2, 0.35];
    let mut worst = 0.0f64;
    for i in 0..20u64 {
        let mut rng = substream(106, "heur", i);
        let n = rng.gen_range(2..=30);
        let g = gnp(n, ps[i as usize % 3], &mut rng);
        let e = g.edges();
        let idx = build_index(&g, &(0..n).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        let fw = oracle::floyd_warshall(n, e);
        for u in 0..n {
            for v in (u + 1)..n {
                let want = [
                    (Heuristic::CommonNeighbors, oracle::common_neighbors(n, e, u, v).len() as f64),
                    (Heuristic::AdamicAdar, oracle::adamic_adar(n, e, u, v)),
                    (Heuristic::ResourceAllocation, oracle::resource_allocation(n, e, u, v)),
                    (Heuristic::ShortestPath, fw[u][v].map_or(0.0, |d| 1.0 / d as f64)),
                    (Heuristic::Katz, oracle::katz_dense(n, e, u, v, katz.beta, katz.max_length)),
                ];
                for (h, w) in want {
                    let got = score::<f64>(&g, Some(&idx), h, u, v, katz).map_err(|e| e.to_string())?.value;
                    let scale = got.abs().max(w.abs());
                    let rel = if scale == 0.0 { 0.0 } else { (got - w).abs() / scale };
                    worst = worst.max(rel);
                    ensure(rel < 1e-10, || format!("{h} on graph {i} ({u}, {v}): {got} vs {w}"))?;
                }
            }
        }
    }
    Ok(format!("5 heuristics on 20 graphs, worst relative error {worst:.1e}"))
}

fn c7_metrics() -> Outcome {
    for i in 0..100u64 {
        let mut rng = substream(107, "scores", i);
        let (p, m) = (rng.gen_range(1..20), rng.gen_range(1..40));
        let levels = i % 2 == 0;
        let mut draw = |k: usize| -> Vec<f64> {
            (0..k)
                .map(|_| if levels { rng.gen_range(0..5) as f64 * 0.5 } else { rng.gen::<f64>() })
                .collect()
        };
        let (pos, neg) = (draw(p), draw(m));
        let ranks = ranks_shared(&pos, &neg);
        let want = oracle::sort_based_ranks(&pos, &neg);
        ensure(ranks == want, || format!("config {i}: ranks differ from the sort oracle"))?;
        let rep = EvalReport::from_ranks(ranks.clone(), &[1, 3, 10], 0).map_err(|e| e.to_string())?;
        ensure(rep.mrr == oracle::mrr(&want), || format!("config {i}: MRR differs"))?;
        for k in [1, 3, 10] {
            ensure(rep.hits(k) == Some(oracle::hits_at(&want, k)), || format!("config {i}: Hits@{k} differs"))?;
        }
        let f = |x: f64| (2.0 * x).exp() - 3.0;
        let tp: Vec<f64> = pos.iter().map(|&x| f(x)).collect();
        let tn: Vec<f64> = neg.iter().map(|&x| f(x)).collect();
        let r2 = ranks_shared(&tp, &tn);
        ensure(r2 == ranks && mrr(&r2) == mrr(&ranks) && hits_at(&r2, 3) == hits_at(&ranks, 3), || {
            format!("config {i}: a monotone transform changed the metrics")
        })?;
    }
    Ok("100 configurations (half with ties) match the oracle; monotone transforms are exact".into())
}

fn c8_direction() -> Outcome {
    let kinds = [
        ScorerKind::Sp4lp,
        ScorerKind::PureGnn,
        ScorerKind::AblateSeqOnly,
        ScorerKind::AblateLenOnly,
    ];
    let mut sums: BTreeMap<&str, f64> = BTreeMap::new();
    for seed in 0..3u64 {
        let g = sbm(&[200, 200], 0.08, 0.005, &mut stream(seed, "sbm")).with_identity_features(1024);
        let opts = ExperimentOptions {
            ratios: SplitRatios {
                train: 0.85,
                valid: 0.05,
                test: 0.1,
            },
            num_negatives: 100,
            seed,
            ..Default::default()
        };
        let exp = Experiment::prepare(g, &opts).map_err(|e| e.to_string())?;
        for kind in kinds {
            let train_opts = TrainOptions {
                epochs: 100,
                seed,
                ..Default::default()
            };
            let out = train::<f64>(&exp, LinkScorerConfig::new(kind), &train_opts).map_err(|e| e.to_string())?;
            let r = evaluate_test(&exp, &out.model, &[10], train_opts.propagation, seed).map_err(|e| e.to_string())?;
            *sums.entry(kind.name()).or_default() += r.mrr / 3.0;
        }
    }
    let m = |k: ScorerKind| sums[k.name()];
    let detail = format!(
        "mean test MRR sp4lp {:.4}, pure_gnn {:.4}, seq_only {:.4}, len_only {:.4}",
        m(ScorerKind::Sp4lp),
        m(ScorerKind::PureGnn),
        m(ScorerKind::AblateSeqOnly),
        m(ScorerKind::AblateLenOnly)
    );
    let sp = m(ScorerKind::Sp4lp);
    ensure(
        sp > m(ScorerKind::PureGnn) && sp >= m(ScorerKind::AblateSeqOnly) && sp >= m(ScorerKind::AblateLenOnly),
        || detail.clone(),
    )?;
    Ok(detail)
}

fn pathlink(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pathlink"))
        .args(args)
        .current_dir(cwd)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("`pathlink {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim())
    })
}

fn c9_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    fs::write(root.join("toy.txt"), joined_cliques(8, 2).edge_list_string()).map_err(|e| e.to_string())?;
    fs::write(root.join("c6.txt"), cycle(6).edge_list_string()).map_err(|e| e.to_string())?;
    fs::write(root.join("pairs.txt"), "0 9\n1 2\n3 12\n").map_err(|e| e.to_string())?;
    fs::write(
        root.join("run.cfg"),
        "edges = toy.txt\nseed = 4\nepochs = 6\nnum_negatives = 30\nhidden = 16\nphi_hidden = 16\npred_hidden = 16\n",
    )
    .map_err(|e| e.to_string())?;
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("preprocess", vec!["preprocess", "--config", "run.cfg", "--path-cache", "cache", "--out"]),
        ("symmetry", vec!["symmetry", "--edges", "c6.txt", "--out"]),
        ("scores", vec!["heuristic", "--edges", "toy.txt", "--pairs", "pairs.txt", "--out"]),
        ("ranking", vec!["heuristic", "--config", "run.cfg", "--out"]),
        ("train", vec!["train", "--config", "run.cfg", "--out"]),
        ("ablate", vec!["ablate", "--config", "run.cfg", "--seeds", "1,2", "--out"]),
        ("expressivity", vec!["expressivity", "--out"]),
    ];
    let mut compared = 0usize;
    for (name, args) in &runs {
        for rep in ["a", "b"] {
            let out = format!("{name}-{rep}");
            let mut full = args.clone();
            full.push(&out);
            pathlink(&full, root)?;
        }
        compared += compare_dirs(&root.join(format!("{name}-a")), &root.join(format!("{name}-b")))?;
    }
    for rep in ["a", "b"] {
        let out = format!("eval-{rep}");
        pathlink(&["eval", "--checkpoint", "train-a/model.ckpt", "--out", &out], root)?;
    }
    compared += compare_dirs(&root.join("eval-a"), &root.join("eval-b"))?;
    Ok(format!("8 subcommand runs repeated, {compared} metric files byte-identical"))
}

/// Compares every CSV except the wall-clock timings, plus checkpoints.
fn compare_dirs(a: &Path, b: &Path) -> Result<usize, String> {
    let mut n = 0;
    for entry in fs::read_dir(a).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        let name = name.to_string_lossy();
        let metric = name.ends_with(".csv") && name != "timing.csv";
        if !(metric || name.ends_with(".ckpt")) {
            continue;
        }
        let x = fs::read(a.join(&*name)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(&*name)).map_err(|e| format!("{}: {e}", b.join(&*name).display()))?;
        ensure(x == y, || format!("{} differs between reruns", a.join(&*name).display()))?;
        n += 1;
    }
    ensure(n > 0, || format!("{} holds no metric files", a.display()))?;
    Ok(n)
}

fn c10_scaling() -> Outcome {
    let sizes = [500usize, 1000, 2000, 4000];
    let mut secs = Vec::new();
    for (i, &n) in sizes.iter().enumerate() {
        let g = gnm(n, 4 * n, &mut substream(110, "er", i as u64)).map_err(|e| e.to_string())?;
        let all: Vec<usize> = (0..n).collect();
        let reps = if n <= 1000 { 3 } else { 1 };
        let best = (0..reps)
            .map(|_| {
                let t = Instant::now();
                let idx = build_index(&g, &all).map_err(|e| e.to_string())?;
                std::hint::black_box(&idx);
                Ok(t.elapsed().as_secs_f64())
            })
            .collect::<Result<Vec<f64>, String>>()?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        secs.push(best);
    }
    let xs: Vec<f64> = sizes.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = secs.iter().map(|t| t.ln()).collect();
    let slope = oracle::fitted_slope(&xs, &ys);
    let times: Vec<String> = sizes.iter().zip(&secs).map(|(n, t)| format!("n={n} {t:.3}s")).collect();
    let detail = format!("log-log slope {slope:.2} ({})", times.join(", "));
    ensure(slope < 2.5, || detail.clone())?;
    Ok(detail)
}

#[test]
fn acceptance_criteria() {
    let secs = Duration::from_secs;
    let results = [
        criterion("C1", "shortest paths match Floyd-Warshall", Some(secs(10)), c1_shortest_paths),
        criterion("C2", "finite-difference gradients", Some(secs(60)), c2_gradients),
        criterion("C3", "symmetry ground truth", Some(secs(5)), c3_symmetry),
        criterion("C4", "C8 expressivity ladder", Some(secs(10)), c4_ladder),
        criterion("C5", "link-automorphism invariance", Some(secs(60)), c5_orbit_invariance),
        criterion("C6", "heuristics match dense oracles", Some(secs(10)), c6_heuristics),
        criterion("C7", "ranking metrics match the sort oracle", Some(secs(5)), c7_metrics),
        criterion("C8", "SBM direction check", Some(secs(15 * 60)), c8_direction),
        criterion("C9", "reruns give byte-identical CSVs", None, c9_determinism),
        criterion("C10", "index build scales subcubically", None, c10_scaling),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    report(&format!("{passed}/{} acceptance criteria passed", results.len()));
    assert_eq!(passed, results.len(), "acceptance criteria failed; see the report above");
}
