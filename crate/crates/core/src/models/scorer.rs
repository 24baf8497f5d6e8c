use std::sync::Arc;

use crate::encoders::{Encoder, EncoderConfig, GraphContext, PropagationMode};
use crate::error::{Error, Result};
use crate::graph::{Graph, Path};
use crate::nn::Mlp;
use crate::paths::{PathIndex, VisitOrder};
use crate::rng::{stream, Rng};
use crate::scalar::Scalar;
use crate::symmetry::wl_refine_features;
use crate::tensor::{Bound, ParamSet, Tape, Tensor, Var};

use super::phi::{Phi, PhiConfig, PhiKind};

/// Distance buckets for the length-only ablation: 1..=8 hops (8 meaning
/// "8 or more") plus one for disconnected pairs.
pub const DISTANCE_BUCKETS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScorerKind {
    PureGnn,
    Ncn,
    Sp4lp,
    AblateSeqOnly,
    AblateLenOnly,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 5] = [
        ScorerKind::PureGnn,
        ScorerKind::Ncn,
        ScorerKind::Sp4lp,
        ScorerKind::AblateSeqOnly,
        ScorerKind::AblateLenOnly,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::PureGnn => "pure_gnn",
            ScorerKind::Ncn => "ncn",
            ScorerKind::Sp4lp => "sp4lp",
            ScorerKind::AblateSeqOnly => "ablate_seq_only",
            ScorerKind::AblateLenOnly => "ablate_len_only",
        }
    }

    pub fn uses_paths(self) -> bool {
        matches!(self, ScorerKind::Sp4lp | ScorerKind::AblateSeqOnly | ScorerKind::AblateLenOnly)
    }

    pub fn uses_phi(self) -> bool {
        matches!(self, ScorerKind::Sp4lp | ScorerKind::AblateSeqOnly)
    }
}

impl std::fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScorerKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown scorer {s:?} (expected pure_gnn, ncn, sp4lp, ablate_seq_only or ablate_len_only)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkScorerConfig {
    pub scorer: ScorerKind,
    pub encoder: EncoderConfig,
    pub phi: Option<PhiConfig>,
    /// Width of the hidden layers of the final predictor.
    pub hidden: usize,
    /// Number of linear layers in the final predictor.
    pub pred_layers: usize,
}

impl LinkScorerConfig {
    pub fn new(scorer: ScorerKind) -> Self {
        Self {
            scorer,
            encoder: EncoderConfig::default(),
            phi: scorer.uses_phi().then(PhiConfig::default),
            hidden: 64,
            pred_layers: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        match (self.scorer.uses_phi(), &self.phi) {
            (true, None) => {
                return Err(Error::Config(format!("scorer {} needs a phi configuration", self.scorer)))
            }
            (false, Some(_)) if self.scorer == ScorerKind::AblateLenOnly => {
                return Err(Error::Config("ablate_len_only takes no phi configuration".into()))
            }
            (_, Some(phi)) => phi.validate()?,
            _ => {}
        }
        if self.pred_layers == 0 || self.hidden == 0 {
            return Err(Error::Config("predictor needs at least one layer and one hidden unit".into()));
        }
        Ok(())
    }
}

/// Pairs to score plus the structural inputs the scorer needs for them.
#[derive(Debug, Clone, Default)]
pub struct PairBatch {
    pub pairs: Vec<(usize, usize)>,
    /// One path per pair for path-based scorers, otherwise empty.
    pub paths: Vec<Path>,
    /// Common neighbours per pair for NCN, otherwise empty.
    pub common: Vec<Vec<usize>>,
}

/// BFS visit order used by every model: stable WL colours seeded from
/// feature equality, so paths of automorphic pairs are images of each other.
pub fn model_visit_order(g: &Graph) -> Result<VisitOrder> {
    Ok(VisitOrder::by_key(wl_refine_features(g)?.colors))
}

#[derive(Debug, Clone)]
pub struct LinkModel<S> {
    pub config: LinkScorerConfig,
    pub params: ParamSet<S>,
    pub feature_dim: usize,
    encoder: Option<Encoder>,
    phi: Option<Phi>,
    rho: Mlp,
}

impl<S: Scalar> LinkModel<S> {
    /// Fresh Glorot-initialised model; all draws come from `seed`.
    pub fn new(config: LinkScorerConfig, feature_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream(seed, "init");
        let mut params = ParamSet::new();
        let kind = config.scorer;
        let encoder = if kind == ScorerKind::AblateSeqOnly {
            None
        } else {
            Some(Encoder::new(&mut params, "encoder", config.encoder, feature_dim, &mut rng)?)
        };
        let d = encoder.as_ref().map_or(feature_dim, Encoder::out_dim);
        let phi = match (kind.uses_phi(), config.phi) {
            (true, Some(cfg)) => Some(Phi::new(&mut params, "phi", cfg, d, &mut rng)?),
            _ => None,
        };
        let ph = phi.as_ref().map_or(0, Phi::out_dim);
        let rho_in = match kind {
            ScorerKind::PureGnn => d,
            ScorerKind::Ncn => 2 * d,
            ScorerKind::Sp4lp => 2 * d + ph + 1,
            ScorerKind::AblateLenOnly => 2 * d + DISTANCE_BUCKETS,
            ScorerKind::AblateSeqOnly => ph + 1,
        };
        let mut dims = vec![rho_in];
        dims.extend(std::iter::repeat_n(config.hidden, config.pred_layers - 1));
        dims.push(1);
        let rho = Mlp::new(&mut params, "rho", &dims, &mut rng);
        Ok(Self {
            config,
            params,
            feature_dim,
            encoder,
            phi,
            rho,
        })
    }

    pub fn kind(&self) -> ScorerKind {
        self.config.scorer
    }

    pub fn context(&self, g: &Graph, mode: PropagationMode) -> Result<GraphContext<S>> {
        GraphContext::new(g, self.config.encoder.kind, mode)
    }

    /// Attaches paths from `idx` and common neighbours from `g` as needed.
    pub fn prepare(&self, g: &Graph, idx: Option<&PathIndex>, pairs: Vec<(usize, usize)>) -> Result<PairBatch> {
        let paths = if self.kind().uses_paths() {
            let idx = idx.ok_or_else(|| Error::Argument(format!("scorer {} needs a path index", self.kind())))?;
            pairs.iter().map(|&(u, v)| idx.shortest_path(u, v)).collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        self.prepare_with_paths(g, pairs, paths)
    }

    /// Like [`prepare`](Self::prepare) with caller-supplied paths.
    pub fn prepare_with_paths(&self, g: &Graph, pairs: Vec<(usize, usize)>, paths: Vec<Path>) -> Result<PairBatch> {
        for &(u, v) in &pairs {
            g.check_node(u)?;
            g.check_node(v)?;
            if u == v {
                return Err(Error::Argument(format!("cannot score the self-pair ({u}, {u})")));
            }
        }
        if self.kind().uses_paths() && paths.len() != pairs.len() {
            return Err(Error::Shape(format!("{} paths for {} pairs", paths.len(), pairs.len())));
        }
        let common = if self.kind() == ScorerKind::Ncn {
            pairs.iter().map(|&(u, v)| g.common_neighbors(u, v)).collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(PairBatch { pairs, paths, common })
    }

    /// Node representations fed to the scorer: encoder output, or raw
    /// features for the sequence-only ablation.
    pub fn embed(&self, tape: &mut Tape<S>, p: &Bound, ctx: &GraphContext<S>, training: bool, rng: &mut Rng) -> Result<Var> {
        match &self.encoder {
            Some(enc) => enc.forward(tape, p, ctx, training, rng),
            None => Ok(tape.constant(ctx.features.clone())),
        }
    }

    /// Logits `[B, 1]` for a batch given node representations `emb`.
    pub fn score(&self, tape: &mut Tape<S>, p: &Bound, emb: Var, batch: &PairBatch) -> Result<Var> {
        let b = batch.pairs.len();
        let us: Arc<[usize]> = batch.pairs.iter().map(|e| e.0).collect();
        let vs: Arc<[usize]> = batch.pairs.iter().map(|e| e.1).collect();
        let endpoint = |tape: &mut Tape<S>| -> Result<(Var, Var)> {
            let xu = tape.gather_rows(emb, Arc::clone(&us))?;
            let xv = tape.gather_rows(emb, Arc::clone(&vs))?;
            Ok((tape.add(xu, xv)?, tape.mul(xu, xv)?))
        };
        let input = match self.kind() {
            ScorerKind::PureGnn => endpoint(tape)?.1,
            ScorerKind::Ncn => {
                let (_, had) = endpoint(tape)?;
                let flat: Vec<usize> = batch.common.iter().flatten().copied().collect();
                let seg: Vec<Option<usize>> = batch
                    .common
                    .iter()
                    .enumerate()
                    .flat_map(|(i, c)| std::iter::repeat_n(Some(i), c.len()))
                    .collect();
                let rows = tape.gather_rows(emb, Arc::from(flat))?;
                let cn = tape.segment_sum(rows, Arc::from(seg), b)?;
                tape.concat_cols(&[had, cn])?
            }
            ScorerKind::Sp4lp => {
                let (sum, had) = endpoint(tape)?;
                let (hp, flag) = self.path_features(tape, p, emb, batch)?;
                tape.concat_cols(&[sum, had, hp, flag])?
            }
            ScorerKind::AblateSeqOnly => {
                let (hp, flag) = self.path_features(tape, p, emb, batch)?;
                tape.concat_cols(&[hp, flag])?
            }
            ScorerKind::AblateLenOnly => {
                let (sum, had) = endpoint(tape)?;
                let mut onehot = vec![S::zero(); b * DISTANCE_BUCKETS];
                for (i, path) in batch.paths.iter().enumerate() {
                    let bucket = if path.synthetic {
                        DISTANCE_BUCKETS - 1
                    } else {
                        (path.len() - 1).clamp(1, DISTANCE_BUCKETS - 1) - 1
                    };
                    onehot[i * DISTANCE_BUCKETS + bucket] = S::one();
                }
                let oh = tape.constant(Tensor::new(vec![b, DISTANCE_BUCKETS], onehot)?);
                tape.concat_cols(&[sum, had, oh])?
            }
        };
        self.rho.forward(tape, p, input)
    }

    /// `φ(path) + φ(reversed path)` and the synthetic-path indicator column.
    fn path_features(&self, tape: &mut Tape<S>, p: &Bound, emb: Var, batch: &PairBatch) -> Result<(Var, Var)> {
        let phi = self.phi.as_ref().expect("validated: path scorers carry phi");
        let b = batch.paths.len();
        let mut seqs: Vec<Vec<usize>> = batch.paths.iter().map(|p| p.nodes.clone()).collect();
        let hp = if matches!(phi.config.kind, PhiKind::InjectiveSum | PhiKind::Mean) {
            // pooling ignores order, so both orientations encode identically
            let fwd = phi.forward(tape, p, emb, &seqs)?;
            tape.scale(fwd, S::lit(2.0))
        } else {
            seqs.extend(batch.paths.iter().map(|p| p.reversed().nodes));
            let both = phi.forward(tape, p, emb, &seqs)?;
            let fwd = tape.slice_rows(both, 0, b)?;
            let rev = tape.slice_rows(both, b, 2 * b)?;
            tape.add(fwd, rev)?
        };
        let flags = batch
            .paths
            .iter()
            .map(|p| if p.synthetic { S::one() } else { S::zero() })
            .collect();
        let flag = tape.constant(Tensor::new(vec![b, 1], flags)?);
        Ok((hp, flag))
    }

    /// Inference logits, one per pair of `batch`.
    pub fn predict(&self, ctx: &GraphContext<S>, batch: &PairBatch) -> Result<Vec<S>> {
        let emb = self.embeddings(ctx)?;
        self.score_frozen(&emb, batch)
    }

    /// Inference-mode node representations.
    pub fn embeddings(&self, ctx: &GraphContext<S>) -> Result<Tensor<S>> {
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let mut rng = stream(0, "unused");
        let emb = self.embed(&mut tape, &p, ctx, false, &mut rng)?;
        Ok(tape.value(emb).clone())
    }

    /// Inference logits from precomputed [`embeddings`](Self::embeddings).
    pub fn score_frozen(&self, emb: &Tensor<S>, batch: &PairBatch) -> Result<Vec<S>> {
        if batch.pairs.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let p = self.params.bind_frozen(&mut tape);
        let e = tape.constant(emb.clone());
        let out = self.score(&mut tape, &p, e, batch)?;
        Ok(tape.value(out).data().to_vec())
    }
}
