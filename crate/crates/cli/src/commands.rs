use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use pathlink::config::{Dtype, RunConfig};
use pathlink::eval::{metrics_header, metrics_row, ranks_per_positive, ranks_shared, EvalReport, Negatives};
use pathlink::expressivity::{run_battery, BatteryOptions, Status};
use pathlink::graph::{load_graph, parse_edge_list, LoadOptions};
use pathlink::heuristics::{self, Heuristic, KatzParams};
use pathlink::models::{model_visit_order, LinkModel, ScorerKind};
use pathlink::paths::{build_index, PathIndex, SourceSelection, DEFAULT_ALL_PAIRS_LIMIT};
use pathlink::symmetry::{
    enumerate_automorphisms, link_orbits, node_orbits, wl_refine, wl_refine_features, AutomorphismOptions,
    AUTOMORPHISM_NODE_CAP,
};
use pathlink::tensor::checkpoint::{peek_checkpoint, read_checkpoint, write_checkpoint};
use pathlink::train::{evaluate_test, train, Experiment, GraphView, SourcePolicy};
use pathlink::{Graph, Scalar};

use crate::{Command, EvalArgs, GraphArgs, Manifest, RunArgs, UsageError, VerificationFailed};

/// Node-pair count above which `heuristic` insists on an explicit pair file.
const ALL_PAIRS_CAP: usize = 2_000_000;

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Preprocess {
            graph,
            config,
            path_cache,
            sources,
            pairs,
            out,
        } => preprocess(&graph, config.as_deref(), &path_cache, &sources, pairs.as_deref(), out.as_deref()),
        Command::Symmetry { graph, feature_aware, out } => symmetry(&graph, feature_aware, out.as_deref()),
        Command::Heuristic {
            graph,
            name,
            pairs,
            katz_beta,
            katz_max_length,
            config,
            seed,
            out,
        } => {
            let katz = KatzParams {
                beta: katz_beta,
                max_length: katz_max_length,
            };
            let names = parse_heuristics(&name)?;
            match config {
                Some(cfg) => heuristic_ranking(&cfg, seed, &names, katz, out.as_deref()),
                None => heuristic_scores(&graph, &names, pairs.as_deref(), katz, out.as_deref()),
            }
        }
        Command::Train(args) => train_cmd(&args),
        Command::Eval { checkpoint, run } => eval_cmd(&checkpoint, &run),
        Command::Ablate { run, seeds, variants } => ablate(&run, &seeds, &variants),
        Command::Expressivity {
            mutate_phi_mean,
            graph,
            seed,
            out,
        } => expressivity(mutate_phi_mean, &graph, seed, out.as_deref()),
    }
}

fn require_edges(g: &GraphArgs) -> Result<&Path> {
    g.edges
        .as_deref()
        .ok_or_else(|| UsageError("missing --edges (or --config)".into()).into())
}

fn load_input(g: &GraphArgs) -> Result<Graph> {
    Ok(load_graph(require_edges(g)?, g.features.as_deref(), &LoadOptions::default())?)
}

fn record_graph_inputs(m: &mut Manifest, g: &GraphArgs) -> Result<()> {
    if let Some(p) = &g.edges {
        m.input("edges", p)?;
    }
    if let Some(p) = &g.features {
        m.input("features", p)?;
    }
    Ok(())
}

fn record_config_inputs(m: &mut Manifest, cfg: &RunConfig, file: Option<&Path>) -> Result<()> {
    if let Some(p) = file {
        m.input("config", p)?;
    }
    for (role, p) in [("edges", &cfg.edges), ("features", &cfg.features), ("negatives", &cfg.negatives)] {
        if let Some(p) = p {
            m.input(role, p)?;
        }
    }
    m.config(cfg.to_text());
    m.seeds(&[cfg.seed]);
    Ok(())
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn apply_overrides(cfg: &mut RunConfig, flags: &[(&str, Option<String>)], sets: &[String]) -> Result<()> {
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    for kv in sets {
        let Some((k, v)) = kv.split_once('=') else {
            bail!(UsageError(format!("--set expects KEY=VALUE, got {kv:?}")));
        };
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(())
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn resolve_run(args: &RunArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let flags = [
        ("edges", path_str(&args.graph.edges)),
        ("features", path_str(&args.graph.features)),
        ("negatives", path_str(&args.negatives)),
        ("path_cache", path_str(&args.path_cache)),
        ("seed", args.seed.map(|s| s.to_string())),
        ("sources", args.sources.clone()),
        ("scorer", args.scorer.clone()),
        ("epochs", args.epochs.map(|e| e.to_string())),
        ("dtype", args.dtype.clone()),
    ];
    apply_overrides(&mut cfg, &flags, &args.set)?;
    cfg.validate()?;
    Ok(cfg)
}

struct Timing(Vec<(&'static str, f64)>);

impl Timing {
    fn render(&self) -> String {
        let mut s = String::from("phase,wall_s\n");
        for (phase, t) in &self.0 {
            let _ = writeln!(s, "{phase},{t:.3}");
        }
        s
    }
}

fn prepare_experiment(cfg: &RunConfig, seed: u64) -> Result<Experiment> {
    let g = cfg.load_graph()?;
    let mut opts = cfg.experiment_options()?;
    opts.seed = seed;
    Ok(Experiment::prepare(g, &opts)?)
}

fn train_cmd(args: &RunArgs) -> Result<()> {
    let cfg = resolve_run(args)?;
    let mut manifest = Manifest::new("train");
    record_config_inputs(&mut manifest, &cfg, args.config.as_deref())?;
    let t = Instant::now();
    let exp = prepare_experiment(&cfg, cfg.seed)?;
    let mut timing = Timing(vec![("prepare", t.elapsed().as_secs_f64())]);
    match cfg.dtype {
        Dtype::F64 => train_typed::<f64>(&cfg, &exp, &args.out, &mut timing)?,
        Dtype::F32 => train_typed::<f32>(&cfg, &exp, &args.out, &mut timing)?,
    }
    write_file(&args.out, "timing.csv", &timing.render())?;
    for (role, file) in [
        ("metrics", "metrics.csv"),
        ("curve", "curve.csv"),
        ("checkpoint", "model.ckpt"),
        ("timing", "timing.csv"),
    ] {
        manifest.artifact(role, file);
    }
    manifest.write(&args.out)
}

fn train_typed<S: Scalar>(cfg: &RunConfig, exp: &Experiment, out: &Path, timing: &mut Timing) -> Result<()> {
    let t = Instant::now();
    let outcome = train::<S>(exp, cfg.scorer_config(cfg.scorer), &cfg.train_options())?;
    timing.0.push(("train", t.elapsed().as_secs_f64()));
    let t = Instant::now();
    let report = evaluate_test(exp, &outcome.model, &cfg.train.hits, cfg.train.propagation, cfg.seed)?;
    timing.0.push(("evaluate", t.elapsed().as_secs_f64()));

    let dataset = cfg.dataset_name();
    let metrics = format!(
        "{}\n{}\n",
        metrics_header(&cfg.train.hits),
        metrics_row(&dataset, cfg.scorer.name(), &report)
    );
    write_file(out, "metrics.csv", &metrics)?;

    let mut curve = String::from("epoch,loss,valid_mrr\n");
    for (i, loss) in outcome.losses.iter().enumerate() {
        let epoch = i + 1;
        let valid = outcome
            .valid_curve
            .iter()
            .find(|v| v.0 == epoch)
            .map(|v| format!("{:.6}", v.1))
            .unwrap_or_default();
        let _ = writeln!(curve, "{epoch},{loss:.8},{valid}");
    }
    write_file(out, "curve.csv", &curve)?;

    let mut stored = cfg.clone();
    if let Some(phi) = outcome.model.config.phi {
        stored.phi = phi;
    }
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &stored.to_text(), &outcome.model.params)?;
    write_file_bytes(out, "model.ckpt", &buf)?;

    println!(
        "{dataset} {}: test MRR {:.4}{} (best epoch {}, valid MRR {:.4}{})",
        cfg.scorer,
        report.mrr,
        hits_summary(&report),
        outcome.best_epoch,
        outcome.best_valid_mrr,
        if outcome.stopped_early { ", stopped early" } else { "" }
    );
    Ok(())
}

fn write_file_bytes(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn hits_summary(r: &EvalReport) -> String {
    r.hits.iter().map(|(k, h)| format!(", Hits@{k} {h:.4}")).collect()
}

fn eval_cmd(checkpoint: &Path, args: &EvalArgs) -> Result<()> {
    let bytes = fs::read(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let (dtype, stored) = peek_checkpoint(&bytes)?;
    let mut cfg = RunConfig::parse(&stored, checkpoint, None)?;
    if let Some(p) = &args.config {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        cfg.apply_text(&text, p, p.parent())?;
    }
    let flags = [
        ("edges", path_str(&args.graph.edges)),
        ("features", path_str(&args.graph.features)),
        ("negatives", path_str(&args.negatives)),
        ("path_cache", path_str(&args.path_cache)),
        ("seed", args.seed.map(|s| s.to_string())),
    ];
    apply_overrides(&mut cfg, &flags, &args.set)?;
    cfg.dtype = dtype.parse()?;
    cfg.validate()?;

    let mut manifest = Manifest::new("eval");
    record_config_inputs(&mut manifest, &cfg, args.config.as_deref())?;
    manifest.input("checkpoint", checkpoint)?;
    let t = Instant::now();
    let exp = prepare_experiment(&cfg, cfg.seed)?;
    let mut timing = Timing(vec![("prepare", t.elapsed().as_secs_f64())]);
    let t = Instant::now();
    let report = match cfg.dtype {
        Dtype::F64 => eval_typed::<f64>(&cfg, &exp, &bytes)?,
        Dtype::F32 => eval_typed::<f32>(&cfg, &exp, &bytes)?,
    };
    timing.0.push(("evaluate", t.elapsed().as_secs_f64()));

    let dataset = cfg.dataset_name();
    let metrics = format!(
        "{}\n{}\n",
        metrics_header(&cfg.train.hits),
        metrics_row(&dataset, cfg.scorer.name(), &report)
    );
    write_file(&args.out, "metrics.csv", &metrics)?;
    let mut ranks = String::from("u,v,rank\n");
    for (&(u, v), r) in exp.split.test.iter().zip(&report.ranks) {
        let _ = writeln!(ranks, "{u},{v},{r}");
    }
    write_file(&args.out, "ranks.csv", &ranks)?;
    write_file(&args.out, "timing.csv", &timing.render())?;
    for (role, file) in [("metrics", "metrics.csv"), ("ranks", "ranks.csv"), ("timing", "timing.csv")] {
        manifest.artifact(role, file);
    }
    manifest.write(&args.out)?;
    println!("{dataset} {}: test MRR {:.4}{}", cfg.scorer, report.mrr, hits_summary(&report));
    Ok(())
}

fn eval_typed<S: Scalar>(cfg: &RunConfig, exp: &Experiment, bytes: &[u8]) -> Result<EvalReport> {
    let ckpt = read_checkpoint::<S, _>(bytes)?;
    let mut model = LinkModel::<S>::new(cfg.scorer_config(cfg.scorer), exp.train_view.graph.feature_dim(), cfg.seed)?;
    model.params.load(ckpt.tensors)?;
    Ok(evaluate_test(exp, &model, &cfg.train.hits, cfg.train.propagation, cfg.seed)?)
}

fn ablate(args: &RunArgs, seeds: &[u64], variants: &[String]) -> Result<()> {
    let cfg = resolve_run(args)?;
    let seeds = if seeds.is_empty() { vec![cfg.seed] } else { seeds.to_vec() };
    let kinds = variants
        .iter()
        .map(|v| v.parse::<ScorerKind>())
        .collect::<pathlink::Result<Vec<_>>>()?;
    for &k in &kinds {
        cfg.scorer_config(k).validate()?;
    }
    let mut manifest = Manifest::new("ablate");
    record_config_inputs(&mut manifest, &cfg, args.config.as_deref())?;
    manifest.seeds(&seeds);

    let t = Instant::now();
    let experiments = seeds
        .iter()
        .map(|&s| prepare_experiment(&cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let mut timing = Timing(vec![("prepare", t.elapsed().as_secs_f64())]);
    let cells: Vec<(usize, ScorerKind)> = (0..seeds.len())
        .flat_map(|i| kinds.iter().map(move |&k| (i, k)))
        .collect();
    let t = Instant::now();
    let reports = cells
        .par_iter()
        .map(|&(i, kind)| {
            let mut c = cfg.clone();
            c.seed = seeds[i];
            match c.dtype {
                Dtype::F64 => run_cell::<f64>(&c, &experiments[i], kind),
                Dtype::F32 => run_cell::<f32>(&c, &experiments[i], kind),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    timing.0.push(("train_and_evaluate", t.elapsed().as_secs_f64()));

    let dataset = cfg.dataset_name();
    let ks = &cfg.train.hits;
    let mut csv = format!("{}\n", metrics_header(ks));
    for ((_, kind), report) in cells.iter().zip(&reports) {
        let _ = writeln!(csv, "{}", metrics_row(&dataset, kind.name(), report));
    }
    println!("{:<18} {:>8}{}", "scorer", "MRR", ks.iter().map(|k| format!(" {:>9}", format!("Hits@{k}"))).collect::<String>());
    for &kind in &kinds {
        let mine: Vec<&EvalReport> = cells
            .iter()
            .zip(&reports)
            .filter(|((_, k), _)| *k == kind)
            .map(|(_, r)| r)
            .collect();
        let n = mine.len() as f64;
        let mrr = mine.iter().map(|r| r.mrr).sum::<f64>() / n;
        let hits: Vec<f64> = ks
            .iter()
            .map(|&k| mine.iter().map(|r| r.hits(k).unwrap_or(0.0)).sum::<f64>() / n)
            .collect();
        let mut row = format!("{dataset},{},mean,{mrr:.6}", kind.name());
        for h in &hits {
            let _ = write!(row, ",{h:.6}");
        }
        let _ = writeln!(csv, "{row}");
        println!(
            "{:<18} {mrr:>8.4}{}",
            kind.name(),
            hits.iter().map(|h| format!(" {h:>9.4}")).collect::<String>()
        );
    }
    write_file(&args.out, "comparison.csv", &csv)?;
    write_file(&args.out, "timing.csv", &timing.render())?;
    manifest.artifact("comparison", "comparison.csv");
    manifest.artifact("timing", "timing.csv");
    manifest.write(&args.out)
}

fn run_cell<S: Scalar>(cfg: &RunConfig, exp: &Experiment, kind: ScorerKind) -> Result<EvalReport> {
    let out = train::<S>(exp, cfg.scorer_config(kind), &cfg.train_options())?;
    Ok(evaluate_test(exp, &out.model, &cfg.train.hits, cfg.train.propagation, cfg.seed)?)
}

fn parse_heuristics(spec: &str) -> Result<Vec<Heuristic>> {
    if spec.eq_ignore_ascii_case("all") {
        return Ok(Heuristic::ALL.to_vec());
    }
    Ok(spec
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<pathlink::Result<Vec<_>>>()?)
}

fn score_all(
    g: &Graph,
    idx: &PathIndex,
    names: &[Heuristic],
    pairs: &[(usize, usize)],
    katz: KatzParams,
) -> Result<Vec<Vec<f64>>> {
    katz.validate(g)?;
    Ok(pairs
        .par_iter()
        .map(|&(u, v)| {
            names
                .iter()
                .map(|&h| heuristics::score::<f64>(g, Some(idx), h, u, v, katz).map(|s| s.value))
                .collect::<pathlink::Result<Vec<_>>>()
        })
        .collect::<pathlink::Result<Vec<_>>>()?)
}

fn heuristic_scores(
    graph: &GraphArgs,
    names: &[Heuristic],
    pairs_file: Option<&Path>,
    katz: KatzParams,
    out: Option<&Path>,
) -> Result<()> {
    let g = load_input(graph)?;
    let n = g.n();
    let pairs = match pairs_file {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            parse_edge_list(&text, p)?
        }
        None => {
            if n * n.saturating_sub(1) / 2 > ALL_PAIRS_CAP {
                bail!(UsageError(format!("{n} nodes is too many to score every pair; pass --pairs")));
            }
            (0..n).flat_map(|u| ((u + 1)..n).map(move |v| (u, v))).collect()
        }
    };
    let mut sources: Vec<usize> = pairs.iter().map(|p| p.0.min(p.1)).collect();
    sources.sort_unstable();
    sources.dedup();
    let idx = build_index(&g, &sources)?;
    let scores = score_all(&g, &idx, names, &pairs, katz)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["u".to_string(), "v".to_string()];
    header.extend(names.iter().map(|h| h.name().to_string()));
    w.write_record(&header)?;
    for (&(u, v), row) in pairs.iter().zip(&scores) {
        let mut rec = vec![u.to_string(), v.to_string()];
        rec.extend(row.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    let text = String::from_utf8(w.into_inner()?)?;
    match out {
        Some(dir) => {
            write_file(dir, "scores.csv", &text)?;
            let mut m = Manifest::new("heuristic");
            record_graph_inputs(&mut m, graph)?;
            if let Some(p) = pairs_file {
                m.input("pairs", p)?;
            }
            m.artifact("scores", "scores.csv");
            m.write(dir)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn view_scores(view: &GraphView, names: &[Heuristic], pairs: &[(usize, usize)], katz: KatzParams) -> Result<Vec<Vec<f64>>> {
    score_all(&view.graph, &view.index, names, pairs, katz)
}

fn heuristic_ranking(
    config: &Path,
    seed: Option<u64>,
    names: &[Heuristic],
    katz: KatzParams,
    out: Option<&Path>,
) -> Result<()> {
    let mut cfg = RunConfig::from_file(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let exp = prepare_experiment(&cfg, cfg.seed)?;
    let view = exp.eval_view();
    let pos = view_scores(view, names, &exp.split.test, katz)?;
    let column = |rows: &[Vec<f64>], j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let dataset = cfg.dataset_name();
    let mut csv = format!("{}\n", metrics_header(&cfg.train.hits));
    let reports: Vec<EvalReport> = match &exp.test_negatives {
        Negatives::Shared(neg) => {
            let ns = view_scores(view, names, neg, katz)?;
            (0..names.len())
                .map(|j| EvalReport::from_ranks(ranks_shared(&column(&pos, j), &column(&ns, j)), &cfg.train.hits, cfg.seed))
                .collect::<pathlink::Result<_>>()?
        }
        Negatives::PerPositive(lists) => {
            let per = lists
                .iter()
                .map(|l| view_scores(view, names, l, katz))
                .collect::<Result<Vec<_>>>()?;
            (0..names.len())
                .map(|j| {
                    let negs: Vec<Vec<f64>> = per.iter().map(|rows| column(rows, j)).collect();
                    EvalReport::from_ranks(ranks_per_positive(&column(&pos, j), &negs)?, &cfg.train.hits, cfg.seed)
                })
                .collect::<pathlink::Result<_>>()?
        }
    };
    for (h, r) in names.iter().zip(&reports) {
        let _ = writeln!(csv, "{}", metrics_row(&dataset, h.name(), r));
        eprintln!("{:<5} MRR {:.4}{}", h.name(), r.mrr, hits_summary(r));
    }
    match out {
        Some(dir) => {
            write_file(dir, "metrics.csv", &csv)?;
            let mut m = Manifest::new("heuristic");
            record_config_inputs(&mut m, &cfg, Some(config))?;
            m.artifact("metrics", "metrics.csv");
            m.write(dir)?;
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn symmetry(graph: &GraphArgs, feature_aware: bool, out: Option<&Path>) -> Result<()> {
    let g = load_input(graph)?;
    let n = g.n();
    let colors = if feature_aware {
        wl_refine_features(&g)?
    } else {
        wl_refine(&g, None)?
    };
    let mut wl_csv = String::from("node,color\n");
    for (v, c) in colors.colors.iter().enumerate() {
        let _ = writeln!(wl_csv, "{v},{c}");
    }
    eprintln!("{n} nodes, {} WL colours after {} rounds", colors.num_colors(), colors.rounds);

    let mut files = vec![("wl_colors.csv", wl_csv)];
    let mut failure = None;
    if n <= AUTOMORPHISM_NODE_CAP {
        let opts = AutomorphismOptions { feature_aware };
        let autos = enumerate_automorphisms(&g, opts)?;
        let orbits = node_orbits(&g, opts)?;
        let table = link_orbits(&g, opts)?;
        eprintln!("{} automorphisms, {} link orbits", autos.len(), table.num_orbits);
        let mut node_csv = String::from("node,orbit\n");
        for (v, o) in orbits.iter().enumerate() {
            let _ = writeln!(node_csv, "{v},{o}");
        }
        let mut link_csv = Vec::new();
        table.write_csv(&mut link_csv)?;
        let link_csv = String::from_utf8(link_csv)?;
        if out.is_none() {
            print!("{link_csv}");
        }
        // an orbit spread over two WL colours means the refinement is wrong
        if let Some(v) = (0..n).find(|&v| (0..n).any(|u| orbits[u] == orbits[v] && colors.colors[u] != colors.colors[v])) {
            failure = Some(format!("node {v}'s orbit spans several WL colours"));
        }
        files.push(("node_orbits.csv", node_csv));
        files.push(("link_orbits.csv", link_csv));
    } else {
        eprintln!("{n} nodes exceeds the automorphism cap of {AUTOMORPHISM_NODE_CAP}; orbit tables skipped, WL colours only");
        if out.is_none() {
            print!("{}", files[0].1);
        }
    }
    if let Some(dir) = out {
        let mut m = Manifest::new("symmetry");
        record_graph_inputs(&mut m, graph)?;
        for (name, text) in &files {
            write_file(dir, name, text)?;
            m.artifact(name.trim_end_matches(".csv"), name);
        }
        m.write(dir)?;
    }
    match failure {
        Some(msg) => Err(VerificationFailed(msg).into()),
        None => Ok(()),
    }
}

fn preprocess(
    graph: &GraphArgs,
    config: Option<&Path>,
    cache: &Path,
    sources: &str,
    pairs: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let policy: SourcePolicy = sources.parse()?;
    let mut manifest = Manifest::new("preprocess");
    let mut views: Vec<(&str, Graph, PathIndex, bool)> = Vec::new();
    if let Some(file) = config {
        let mut cfg = RunConfig::from_file(file)?;
        cfg.path_cache = Some(cache.to_path_buf());
        cfg.sources = policy;
        cfg.validate()?;
        record_config_inputs(&mut manifest, &cfg, Some(file))?;
        let exp = prepare_experiment(&cfg, cfg.seed)?;
        let train_view = exp.train_view;
        views.push(("train", train_view.graph, train_view.index, train_view.cache_hit));
        if let Some(v) = exp.test_view {
            views.push(("test", v.graph, v.index, v.cache_hit));
        }
    } else {
        let g = load_input(graph)?;
        record_graph_inputs(&mut manifest, graph)?;
        let mut endpoints: Vec<usize> = g.edges().iter().flat_map(|&(a, b)| [a, b]).collect();
        if let Some(p) = pairs {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            endpoints.extend(parse_edge_list(&text, p)?.into_iter().flat_map(|(a, b)| [a, b]));
            manifest.input("pairs", p)?;
        }
        let selection = match policy {
            SourcePolicy::All => SourceSelection::All,
            SourcePolicy::Links => SourceSelection::Only(endpoints),
            SourcePolicy::Auto => SourceSelection::Auto {
                limit: DEFAULT_ALL_PAIRS_LIMIT,
                endpoints,
            },
        };
        let order = model_visit_order(&g)?;
        let (idx, hit) = PathIndex::load_or_build(cache, &g, &selection.resolve(g.n()), &order)?;
        views.push(("graph", g, idx, hit));
    }

    let mut csv = String::from("view,nodes,edges,sources,pairs,max_distance,unreachable_pairs\n");
    for (name, g, idx, hit) in &views {
        let s = idx.stats();
        let key = PathIndex::cache_key(g, idx.sources(), idx.order());
        println!("[{name}]");
        println!("nodes {}", g.n());
        println!("edges {}", g.num_edges());
        println!("sources {}", s.sources);
        println!("pairs {}", s.pairs);
        println!("max_distance {}", s.max_distance);
        println!("unreachable_pairs {}", s.unreachable_pairs);
        println!(
            "cache {} ({})",
            PathIndex::cache_path(cache, &key).display(),
            if *hit { "hit" } else { "built" }
        );
        let _ = writeln!(
            csv,
            "{name},{},{},{},{},{},{}",
            g.n(),
            g.num_edges(),
            s.sources,
            s.pairs,
            s.max_distance,
            s.unreachable_pairs
        );
    }
    if let Some(dir) = out {
        write_file(dir, "index_stats.csv", &csv)?;
        manifest.artifact("index_stats", "index_stats.csv");
        manifest.write(dir)?;
    }
    Ok(())
}

fn expressivity(mutate: bool, graph: &GraphArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let extra = match &graph.edges {
        Some(_) if graph.features.is_some() => Some(load_input(graph)?),
        Some(_) => Some(load_input(graph)?.with_constant_features(1)),
        None => None,
    };
    let opts = BatteryOptions {
        mutate_phi_mean: mutate,
        extra,
        seed,
    };
    let claims = run_battery(&opts)?;
    let width = claims.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &claims {
        println!("{:<4}  {:<width$}  {}", c.status.to_string(), c.name, c.detail);
    }
    let failed = claims.iter().filter(|c| c.status == Status::Fail).count();
    println!(
        "{} passed, {failed} failed, {} skipped",
        claims.iter().filter(|c| c.status == Status::Pass).count(),
        claims.iter().filter(|c| c.status == Status::Skipped).count()
    );
    if let Some(dir) = out {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["claim", "status", "detail"])?;
        for c in &claims {
            w.write_record([c.name.as_str(), &c.status.to_string(), c.detail.as_str()])?;
        }
        write_file(dir, "expressivity.csv", &String::from_utf8(w.into_inner()?)?)?;
        let mut m = Manifest::new("expressivity");
        m.seeds(&[seed]);
        record_graph_inputs(&mut m, graph)?;
        m.artifact("claims", "expressivity.csv");
        m.write(dir)?;
    }
    if failed > 0 {
        bail!(VerificationFailed(format!("{failed} expressivity claim(s) failed")));
    }
    Ok(())
}
