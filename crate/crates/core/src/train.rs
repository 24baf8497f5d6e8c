//! Edge splits, negative sampling, experiment preparation and the training
//! loop.

use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;

use crate::encoders::{GraphContext, PropagationMode};
use crate::error::{Error, Result};
use crate::eval::{ranks_per_positive, ranks_shared, EvalReport, Negatives, DEFAULT_HITS};
use crate::graph::{Graph, Path};
use crate::models::phi::POSITION_MARGIN;
use crate::models::{model_visit_order, LinkModel, LinkScorerConfig, PairBatch};
use crate::paths::{
    build_index_ordered, shortest_paths_without_edges, PathIndex, SourceSelection, VisitOrder,
    DEFAULT_ALL_PAIRS_LIMIT,
};
use crate::rng::{stream, substream, Rng};
use crate::scalar::Scalar;
use crate::tensor::{Adam, AdamConfig, Tape};

/// Pairs scored per tape during evaluation.
const EVAL_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.85,
            valid: 0.05,
            test: 0.10,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|&r| !(0.0..=1.0).contains(&r)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split ratios {}/{}/{} must be in [0, 1] and sum to 1",
                self.train, self.valid, self.test
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSplit {
    pub train: Vec<(usize, usize)>,
    pub valid: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
}

/// Seeded uniform partition of the edges of `g`. Each part is returned
/// sorted.
pub fn make_split(g: &Graph, ratios: SplitRatios, seed: u64) -> Result<EdgeSplit> {
    ratios.validate()?;
    let m = g.num_edges();
    let nv = (m as f64 * ratios.valid).round() as usize;
    let nt = (m as f64 * ratios.test).round() as usize;
    if nv == 0 || nt == 0 || nv + nt >= m {
        return Err(Error::Argument(format!(
            "{m} edges are too few for non-empty train/valid/test splits at {}/{}/{}",
            ratios.train, ratios.valid, ratios.test
        )));
    }
    let mut edges = g.edges().to_vec();
    edges.shuffle(&mut stream(seed, "split"));
    let mut test = edges[..nt].to_vec();
    let mut valid = edges[nt..nt + nv].to_vec();
    let mut train = edges[nt + nv..].to_vec();
    test.sort_unstable();
    valid.sort_unstable();
    train.sort_unstable();
    Ok(EdgeSplit { train, valid, test })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeMode {
    /// Fresh negatives for each training epoch.
    TrainPerStep,
    /// One list reused for every evaluated positive.
    EvalShared,
}

impl NegativeMode {
    fn label(self) -> &'static str {
        match self {
            NegativeMode::TrainPerStep => "train_negatives",
            NegativeMode::EvalShared => "eval_negatives",
        }
    }
}

/// `count` distinct uniform non-edges of `g` from the stream for `mode`.
pub fn sample_negatives(g: &Graph, count: usize, seed: u64, mode: NegativeMode) -> Result<Vec<(usize, usize)>> {
    sample_non_edges(g, count, &mut stream(seed, mode.label()), None)
}

fn non_edge_count(g: &Graph) -> usize {
    let n = g.n();
    n * n.saturating_sub(1) / 2 - g.num_edges()
}

/// `count` distinct non-edges `(lo, hi)`, uniform over all non-edges, or over
/// non-edges with at least one endpoint in `anchors` when given.
pub fn sample_non_edges(
    g: &Graph,
    count: usize,
    rng: &mut Rng,
    anchors: Option<&[usize]>,
) -> Result<Vec<(usize, usize)>> {
    let n = g.n();
    let available = non_edge_count(g);
    if anchors.is_none() && count > available {
        return Err(Error::Saturated {
            requested: count,
            available,
        });
    }
    // rejection sampling is cheap while non-edges dominate; otherwise list them
    if anchors.is_none() && 2 * count > available {
        let mut all = Vec::with_capacity(available);
        for u in 0..n {
            for v in (u + 1)..n {
                if !g.has_edge(u, v) {
                    all.push((u, v));
                }
            }
        }
        let (picked, _) = all.partial_shuffle(rng, count);
        return Ok(picked.to_vec());
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    let cap = 100 * count + 10_000;
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        if attempts > cap {
            return Err(Error::Saturated {
                requested: count,
                available: out.len(),
            });
        }
        let u = match anchors {
            Some(a) => a[rng.gen_range(0..a.len())],
            None => rng.gen_range(0..n),
        };
        let v = rng.gen_range(0..n);
        if u == v || g.has_edge(u, v) {
            continue;
        }
        let pair = (u.min(v), u.max(v));
        if seen.insert(pair) {
            out.push(pair);
        }
    }
    Ok(out)
}

/// How to choose BFS sources for the path index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourcePolicy {
    All,
    /// Endpoints of every split positive and evaluation negative.
    Links,
    /// All nodes up to the all-pairs limit, otherwise `Links`.
    Auto,
}

impl SourcePolicy {
    pub fn name(self) -> &'static str {
        match self {
            SourcePolicy::All => "all",
            SourcePolicy::Links => "links",
            SourcePolicy::Auto => "auto",
        }
    }
}

impl std::str::FromStr for SourcePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(SourcePolicy::All),
            "links" => Ok(SourcePolicy::Links),
            "auto" => Ok(SourcePolicy::Auto),
            _ => Err(Error::Config(format!("unknown sources {s:?} (expected all, links or auto)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions {
    pub ratios: SplitRatios,
    pub num_negatives: usize,
    pub seed: u64,
    pub sources: SourcePolicy,
    /// Add validation edges to the message-passing graph at test time.
    pub valid_in_message_passing: bool,
    pub test_negatives: Option<Negatives>,
    pub path_cache: Option<PathBuf>,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self {
            ratios: SplitRatios::default(),
            num_negatives: 100,
            seed: 0,
            sources: SourcePolicy::Auto,
            valid_in_message_passing: false,
            test_negatives: None,
            path_cache: None,
        }
    }
}

/// A message-passing graph with its BFS order and path index.
#[derive(Debug, Clone)]
pub struct GraphView {
    pub graph: Graph,
    pub order: VisitOrder,
    pub index: PathIndex,
    pub cache_hit: bool,
}

impl GraphView {
    fn build(graph: Graph, sources: &[usize], cache: Option<&PathBuf>) -> Result<Self> {
        let order = model_visit_order(&graph)?;
        let (index, cache_hit) = match cache {
            Some(dir) => PathIndex::load_or_build(dir, &graph, sources, &order)?,
            None => (build_index_ordered(&graph, sources, &order)?, false),
        };
        Ok(Self {
            graph,
            order,
            index,
            cache_hit,
        })
    }

    /// Nodes with a BFS tree, or `None` when every node has one.
    fn anchors(&self) -> Option<&[usize]> {
        (self.index.sources().len() < self.graph.n()).then(|| self.index.sources())
    }
}

/// Everything a training or evaluation run needs, derived from one graph
/// and one seed.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub full: Graph,
    pub split: EdgeSplit,
    pub valid_negatives: Negatives,
    pub test_negatives: Negatives,
    pub train_view: GraphView,
    /// Set when validation edges join message passing at test time.
    pub test_view: Option<GraphView>,
    /// Paths for training positives, computed with the positive edge removed.
    pub train_paths: Vec<Path>,
}

fn check_pairs(g: &Graph, pairs: impl Iterator<Item = (usize, usize)>) -> Result<()> {
    for (u, v) in pairs {
        g.check_node(u)?;
        g.check_node(v)?;
        if u == v {
            return Err(Error::Argument(format!("negative pair ({u}, {u}) is a self-pair")));
        }
    }
    Ok(())
}

impl Experiment {
    pub fn prepare(full: Graph, opts: &ExperimentOptions) -> Result<Self> {
        let split = make_split(&full, opts.ratios, opts.seed)?;
        let valid_negatives = Negatives::Shared(sample_negatives(
            &full,
            opts.num_negatives,
            opts.seed,
            NegativeMode::EvalShared,
        )?);
        let test_negatives = match &opts.test_negatives {
            Some(neg) => {
                check_pairs(&full, neg.pairs())?;
                if let Negatives::PerPositive(lists) = neg {
                    if lists.len() != split.test.len() {
                        return Err(Error::Argument(format!(
                            "negatives file has {} blocks for {} test positives",
                            lists.len(),
                            split.test.len()
                        )));
                    }
                }
                neg.clone()
            }
            None => valid_negatives.clone(),
        };

        let mut endpoints: Vec<usize> = Vec::new();
        for (u, v) in split
            .train
            .iter()
            .chain(&split.valid)
            .chain(&split.test)
            .copied()
            .chain(valid_negatives.pairs())
            .chain(test_negatives.pairs())
        {
            endpoints.push(u);
            endpoints.push(v);
        }
        let selection = match opts.sources {
            SourcePolicy::All => SourceSelection::All,
            SourcePolicy::Links => SourceSelection::Only(endpoints),
            SourcePolicy::Auto => SourceSelection::Auto {
                limit: DEFAULT_ALL_PAIRS_LIMIT,
                endpoints,
            },
        };
        let sources = selection.resolve(full.n());

        let train_graph = full.with_edge_set(split.train.iter().copied())?;
        let train_view = GraphView::build(train_graph, &sources, opts.path_cache.as_ref())?;
        let test_view = if opts.valid_in_message_passing {
            let g = full.with_edge_set(split.train.iter().chain(&split.valid).copied())?;
            Some(GraphView::build(g, &sources, opts.path_cache.as_ref())?)
        } else {
            None
        };
        let train_paths = shortest_paths_without_edges(&train_view.graph, &train_view.order, &split.train)?;
        let exp = Self {
            full,
            split,
            valid_negatives,
            test_negatives,
            train_view,
            test_view,
            train_paths,
        };
        exp.audit()?;
        Ok(exp)
    }

    /// Confirms no held-out positive is visible to message passing.
    pub fn audit(&self) -> Result<()> {
        let leaks = |g: &Graph, held: &[(usize, usize)]| held.iter().find(|&&(u, v)| g.has_edge(u, v)).copied();
        let checks = [
            (&self.train_view.graph, &self.split.valid, "validation"),
            (&self.train_view.graph, &self.split.test, "test"),
        ];
        for (g, held, what) in checks {
            if let Some((u, v)) = leaks(g, held) {
                return Err(Error::Argument(format!("{what} edge ({u}, {v}) leaked into message passing")));
            }
        }
        if let Some(view) = &self.test_view {
            if let Some((u, v)) = leaks(&view.graph, &self.split.test) {
                return Err(Error::Argument(format!("test edge ({u}, {v}) leaked into message passing")));
            }
        }
        Ok(())
    }

    /// Position-table length for attention: longest path seen plus a margin.
    pub fn path_table_len(&self) -> usize {
        let indexed = self.train_view.index.stats().max_distance + 1;
        let test = self.test_view.as_ref().map_or(0, |v| v.index.stats().max_distance + 1);
        let train = self.train_paths.iter().map(Path::len).max().unwrap_or(2);
        indexed.max(test).max(train).max(2) + POSITION_MARGIN
    }

    pub fn eval_view(&self) -> &GraphView {
        self.test_view.as_ref().unwrap_or(&self.train_view)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub eval_every: usize,
    pub patience: usize,
    pub hits: Vec<usize>,
    pub propagation: PropagationMode,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.01,
            weight_decay: 0.0,
            batch_size: 1024,
            eval_every: 5,
            patience: 20,
            hits: DEFAULT_HITS.to_vec(),
            propagation: PropagationMode::Auto,
            seed: 0,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::Config("batch_size and eval_every must be at least 1".into()));
        }
        if !(self.lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("lr and weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub model: LinkModel<S>,
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    /// `(epoch, validation MRR)` at every check.
    pub valid_curve: Vec<(usize, f64)>,
    pub best_epoch: usize,
    pub best_valid_mrr: f64,
    pub stopped_early: bool,
    pub wall_s: f64,
}

/// Scores `pairs` against frozen parameters, in parallel chunks.
pub fn score_pairs<S: Scalar>(
    model: &LinkModel<S>,
    view: &GraphView,
    ctx: &GraphContext<S>,
    pairs: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let emb = model.embeddings(ctx)?;
    let chunks: Vec<Vec<f64>> = pairs
        .par_chunks(EVAL_CHUNK)
        .map(|chunk| {
            let batch = model.prepare(&view.graph, Some(&view.index), chunk.to_vec())?;
            Ok(model.score_frozen(&emb, &batch)?.into_iter().map(S::as_f64).collect())
        })
        .collect::<Result<_>>()?;
    Ok(chunks.concat())
}

/// Ranks `positives` against `negatives` on `view`.
pub fn evaluate<S: Scalar>(
    model: &LinkModel<S>,
    view: &GraphView,
    ctx: &GraphContext<S>,
    positives: &[(usize, usize)],
    negatives: &Negatives,
    ks: &[usize],
    seed: u64,
) -> Result<EvalReport> {
    if positives.is_empty() {
        return Err(Error::Argument("no positives to evaluate".into()));
    }
    let start = Instant::now();
    let pos = score_pairs(model, view, ctx, positives)?;
    let ranks = match negatives {
        Negatives::Shared(neg) => ranks_shared(&pos, &score_pairs(model, view, ctx, neg)?),
        Negatives::PerPositive(lists) => {
            let flat: Vec<(usize, usize)> = lists.iter().flatten().copied().collect();
            let scores = score_pairs(model, view, ctx, &flat)?;
            let mut off = 0;
            let per: Vec<Vec<f64>> = lists
                .iter()
                .map(|l| {
                    let s = scores[off..off + l.len()].to_vec();
                    off += l.len();
                    s
                })
                .collect();
            ranks_per_positive(&pos, &per)?
        }
    };
    let mut report = EvalReport::from_ranks(ranks, ks, seed)?;
    report.wall_s = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Test-split evaluation on the experiment's test-time graph.
pub fn evaluate_test<S: Scalar>(
    exp: &Experiment,
    model: &LinkModel<S>,
    ks: &[usize],
    propagation: PropagationMode,
    seed: u64,
) -> Result<EvalReport> {
    let view = exp.eval_view();
    let ctx = model.context(&view.graph, propagation)?;
    evaluate(model, view, &ctx, &exp.split.test, &exp.test_negatives, ks, seed)
}

fn param_norms<S: Scalar>(model: &LinkModel<S>) -> String {
    model
        .params
        .params()
        .iter()
        .map(|p| {
            let norm = p.value.data().iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>().sqrt();
            format!("  {} |w|={norm:.4e}", p.name)
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Trains a fresh model for `config` on `exp`, keeping the parameters with
/// the best validation MRR.
pub fn train<S: Scalar>(exp: &Experiment, config: LinkScorerConfig, opts: &TrainOptions) -> Result<TrainOutcome<S>> {
    opts.validate()?;
    let start = Instant::now();
    let mut config = config;
    if let Some(phi) = config.phi.as_mut() {
        phi.max_len = phi.max_len.max(exp.path_table_len());
    }
    let view = &exp.train_view;
    let g = &view.graph;
    let mut model = LinkModel::<S>::new(config, g.feature_dim(), opts.seed)?;
    let ctx = model.context(g, opts.propagation)?;
    let mut adam = Adam::new(
        AdamConfig {
            lr: opts.lr,
            weight_decay: opts.weight_decay,
            ..AdamConfig::default()
        },
        &model.params,
    );
    let uses_paths = config.scorer.uses_paths();
    let positives = &exp.split.train;
    // negatives are non-edges of the full graph, as for evaluation
    let available = non_edge_count(&exp.full);
    let per_epoch = positives.len().min(available);
    if per_epoch == 0 {
        return Err(Error::Saturated {
            requested: positives.len(),
            available,
        });
    }

    let mut losses = Vec::with_capacity(opts.epochs);
    let mut valid_curve = Vec::new();
    let mut best = (f64::NEG_INFINITY, 0usize, model.params.clone());
    let mut bad_checks = 0;
    let mut stopped_early = false;
    for epoch in 0..opts.epochs {
        let mut order: Vec<usize> = (0..positives.len()).collect();
        order.shuffle(&mut substream(opts.seed, "shuffle", epoch as u64));
        let mut neg_rng = substream(opts.seed, "train_negatives", epoch as u64);
        let negatives = sample_non_edges(&exp.full, per_epoch, &mut neg_rng, view.anchors())?;
        let mut drop_rng = substream(opts.seed, "dropout", epoch as u64);
        let (mut total, mut count) = (0.0, 0usize);
        for (b, chunk) in order.chunks(opts.batch_size).enumerate() {
            let k = chunk.len();
            let negs: Vec<(usize, usize)> = (0..k)
                .map(|i| negatives[(b * opts.batch_size + i) % negatives.len()])
                .collect();
            let mut pairs: Vec<(usize, usize)> = chunk.iter().map(|&i| positives[i]).collect();
            pairs.extend_from_slice(&negs);
            let paths = if uses_paths {
                let mut p: Vec<Path> = chunk.iter().map(|&i| exp.train_paths[i].clone()).collect();
                for &(u, v) in &negs {
                    p.push(view.index.shortest_path(u, v)?);
                }
                p
            } else {
                Vec::new()
            };
            let batch: PairBatch = model.prepare_with_paths(g, pairs, paths)?;
            let mut targets = vec![S::one(); k];
            targets.extend(std::iter::repeat_n(S::zero(), k));

            let mut tape = Tape::new();
            let bound = model.params.bind(&mut tape);
            let emb = model.embed(&mut tape, &bound, &ctx, true, &mut drop_rng)?;
            let logits = model.score(&mut tape, &bound, emb, &batch)?;
            let loss = tape.bce_with_logits(logits, targets.into())?;
            let value = tape.value(loss).item().as_f64();
            if !value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "loss {value} at epoch {epoch}, batch {b}\nparameter norms:\n{}",
                    param_norms(&model)
                )));
            }
            let mut grads = tape.backward(loss)?;
            model.params.accumulate(&bound, &mut grads);
            adam.step(&mut model.params)?;
            total += value * k as f64;
            count += k;
        }
        losses.push(total / count as f64);

        if (epoch + 1) % opts.eval_every == 0 || epoch + 1 == opts.epochs {
            let valid_ctx = model.context(g, opts.propagation)?;
            let report = evaluate(
                &model,
                view,
                &valid_ctx,
                &exp.split.valid,
                &exp.valid_negatives,
                &opts.hits,
                opts.seed,
            )?;
            valid_curve.push((epoch + 1, report.mrr));
            log::debug!("epoch {} loss {:.4} valid MRR {:.4}", epoch + 1, total / count as f64, report.mrr);
            if report.mrr > best.0 {
                best = (report.mrr, epoch + 1, model.params.clone());
                bad_checks = 0;
            } else {
                bad_checks += 1;
                if bad_checks >= opts.patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }
    if !valid_curve.is_empty() {
        model.params = best.2;
    }
    Ok(TrainOutcome {
        model,
        losses,
        valid_curve,
        best_epoch: best.1,
        best_valid_mrr: best.0,
        stopped_early,
        wall_s: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{complete, cycle, gnp};

    #[test]
    fn split_sizes() {
        let g = gnp(60, 0.2, &mut stream(1, "g"));
        let g = g.with_edge_set(g.edges()[..100].iter().copied()).unwrap();
        let s = make_split(&g, SplitRatios::default(), 4).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (85, 5, 10));
        assert_eq!(s, make_split(&g, SplitRatios::default(), 4).unwrap());
        assert!(make_split(&cycle(5), SplitRatios::default(), 0).is_err());
    }

    #[test]
    fn negatives_on_small_graphs() {
        assert!(matches!(
            sample_negatives(&complete(4), 1, 0, NegativeMode::EvalShared),
            Err(Error::Saturated { .. })
        ));
        let g = cycle(8);
        let a = sample_negatives(&g, 3, 9, NegativeMode::EvalShared).unwrap();
        assert_eq!(a, sample_negatives(&g, 3, 9, NegativeMode::EvalShared).unwrap());
        let distinct: HashSet<_> = a.iter().collect();
        assert_eq!(distinct.len(), 3);
        assert!(a.iter().all(|&(u, v)| u < v && !g.has_edge(u, v)));
    }
}
