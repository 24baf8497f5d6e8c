//! Ranked link-prediction metrics.
//!
//! Each positive is ranked against its negative candidates with fractional
//! ties: `rank = 1 + #{negatives scoring higher} + #{ties} / 2`.

use std::path::Path as FsPath;

use crate::error::{Error, Result};

/// Default cut-offs for Hits@K.
pub const DEFAULT_HITS: [usize; 3] = [10, 50, 100];

/// Rank of `pos` among `sorted_negatives` (ascending).
pub fn rank_in_sorted(pos: f64, sorted_negatives: &[f64]) -> f64 {
    let below = sorted_negatives.partition_point(|&x| x < pos);
    let not_above = sorted_negatives.partition_point(|&x| x <= pos);
    let greater = sorted_negatives.len() - not_above;
    let ties = not_above - below;
    1.0 + greater as f64 + ties as f64 / 2.0
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Ranks of every positive against one shared negative list.
pub fn ranks_shared(positives: &[f64], negatives: &[f64]) -> Vec<f64> {
    let s = sorted(negatives);
    positives.iter().map(|&p| rank_in_sorted(p, &s)).collect()
}

/// Ranks of each positive against its own negative list.
pub fn ranks_per_positive(positives: &[f64], negatives: &[Vec<f64>]) -> Result<Vec<f64>> {
    if positives.len() != negatives.len() {
        return Err(Error::Shape(format!(
            "{} positives but {} negative lists",
            positives.len(),
            negatives.len()
        )));
    }
    Ok(positives
        .iter()
        .zip(negatives)
        .map(|(&p, n)| rank_in_sorted(p, &sorted(n)))
        .collect())
}

pub fn mrr(ranks: &[f64]) -> f64 {
    ranks.iter().map(|r| 1.0 / r).sum::<f64>() / ranks.len() as f64
}

pub fn hits_at(ranks: &[f64], k: usize) -> f64 {
    ranks.iter().filter(|&&r| r <= k as f64).count() as f64 / ranks.len() as f64
}

/// Expected MRR when the positive's rank is uniform on `1..=m+1`, i.e. a
/// scorer that carries no information and never ties.
pub fn random_mrr_expectation(m: usize) -> f64 {
    (1..=m + 1).map(|r| 1.0 / r as f64).sum::<f64>() / (m + 1) as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mrr: f64,
    pub hits: Vec<(usize, f64)>,
    pub ranks: Vec<f64>,
    pub seed: u64,
    pub wall_s: f64,
}

impl EvalReport {
    pub fn from_ranks(ranks: Vec<f64>, ks: &[usize], seed: u64) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::Argument("no positives to evaluate".into()));
        }
        let mut ks = ks.to_vec();
        ks.sort_unstable();
        ks.dedup();
        Ok(Self {
            mrr: mrr(&ranks),
            hits: ks.iter().map(|&k| (k, hits_at(&ranks, k))).collect(),
            ranks,
            seed,
            wall_s: 0.0,
        })
    }

    pub fn hits(&self, k: usize) -> Option<f64> {
        self.hits.iter().find(|h| h.0 == k).map(|h| h.1)
    }
}

/// Header of the metrics CSV for cut-offs `ks`.
pub fn metrics_header(ks: &[usize]) -> String {
    let mut h = String::from("dataset,scorer,seed,mrr");
    for k in ks {
        h.push_str(&format!(",hits@{k}"));
    }
    h
}

/// One metrics CSV row. Wall time is left out so that reruns compare
/// byte for byte.
pub fn metrics_row(dataset: &str, scorer: &str, report: &EvalReport) -> String {
    let mut row = format!("{dataset},{scorer},{},{:.6}", report.seed, report.mrr);
    for (_, h) in &report.hits {
        row.push_str(&format!(",{h:.6}"));
    }
    row
}

/// Negative candidates: one list shared by all positives, or one per positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Negatives {
    Shared(Vec<(usize, usize)>),
    PerPositive(Vec<Vec<(usize, usize)>>),
}

impl Negatives {
    pub fn total(&self) -> usize {
        match self {
            Negatives::Shared(v) => v.len(),
            Negatives::PerPositive(v) => v.iter().map(Vec::len).sum(),
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (a, b) = match self {
            Negatives::Shared(v) => (Some(v.iter()), None),
            Negatives::PerPositive(v) => (None, Some(v.iter().flatten())),
        };
        a.into_iter().flatten().chain(b.into_iter().flatten()).copied()
    }
}

/// Parses a negatives file: `u v` lines, blocks separated by blank lines.
/// One block is a shared list; several blocks are per-positive lists.
pub fn parse_negatives(text: &str, source: &FsPath) -> Result<Negatives> {
    let mut blocks: Vec<Vec<(usize, usize)>> = vec![Vec::new()];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if !blocks.last().unwrap().is_empty() {
                blocks.push(Vec::new());
            }
            continue;
        }
        let bad = |msg: &str| Error::Parse {
            path: source.to_path_buf(),
            line: i + 1,
            msg: msg.to_string(),
        };
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(bad("expected two node ids"));
        };
        let u = a.parse().map_err(|_| bad("invalid node id"))?;
        let v = b.parse().map_err(|_| bad("invalid node id"))?;
        blocks.last_mut().unwrap().push((u, v));
    }
    if blocks.last().is_some_and(Vec::is_empty) {
        blocks.pop();
    }
    match blocks.len() {
        0 => Err(Error::Parse {
            path: source.to_path_buf(),
            line: 0,
            msg: "no negative pairs".into(),
        }),
        1 => Ok(Negatives::Shared(blocks.pop().unwrap())),
        _ => Ok(Negatives::PerPositive(blocks)),
    }
}
