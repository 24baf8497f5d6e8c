//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key is optional except
//! `edges`; unknown keys are rejected so typos surface immediately. The
//! resolved configuration renders back to the same format, which is what
//! manifests and checkpoints store.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path as FsPath, PathBuf};
use std::str::FromStr;

use crate::encoders::EncoderConfig;
use crate::error::{Error, Result};
use crate::eval::parse_negatives;
use crate::graph::{load_graph, Graph, LoadOptions, DEFAULT_MAX_IDENTITY_FEATURES};
use crate::models::{LinkScorerConfig, PhiConfig, ScorerKind};
use crate::train::{ExperimentOptions, SourcePolicy, SplitRatios, TrainOptions};

/// Floating-point width used for model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

impl FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            _ => Err(Error::Config(format!("unknown dtype {s:?} (expected f32 or f64)"))),
        }
    }
}

/// Every recognised key with a one-line description, in rendering order.
pub const KEYS: &[(&str, &str)] = &[
    ("edges", "edge list file, one `u v` pair per line (required)"),
    ("features", "optional node feature CSV, one row per node"),
    ("dataset", "name written to the metrics CSV (default: edge file stem)"),
    ("negatives", "optional test negatives file; one block is shared, several are per positive"),
    ("path_cache", "directory for cached path indices"),
    ("sources", "BFS sources: all, links or auto"),
    ("max_identity_features", "one-hot width cap for featureless graphs"),
    ("seed", "master seed for every random stream"),
    ("dtype", "parameter precision: f32 or f64"),
    ("scorer", "pure_gnn, ncn, sp4lp, ablate_seq_only or ablate_len_only"),
    ("encoder", "gcn or sage"),
    ("layers", "message-passing layers"),
    ("hidden", "encoder width"),
    ("dropout", "encoder dropout rate in [0, 1)"),
    ("activation", "encoder nonlinearity: relu or tanh"),
    ("phi", "path sequence model: injective_sum, recurrent, attention or mean"),
    ("phi_hidden", "sequence model width"),
    ("phi_heads", "attention heads"),
    ("phi_layers", "attention blocks"),
    ("phi_max_len", "attention position table length, grown to fit the longest path"),
    ("pred_hidden", "predictor hidden width"),
    ("pred_layers", "predictor depth"),
    ("lr", "Adam learning rate"),
    ("weight_decay", "decoupled weight decay"),
    ("epochs", "maximum training epochs"),
    ("batch_size", "positive links per step"),
    ("eval_every", "epochs between validation checks"),
    ("patience", "validation checks without improvement before stopping"),
    ("split", "train,valid,test edge fractions"),
    ("num_negatives", "shared evaluation negatives when no file is given"),
    ("hits", "comma-separated Hits@K cut-offs"),
    ("valid_in_mp", "let validation edges join message passing at test time"),
    ("propagation", "encoder operator storage: auto, dense or sparse"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub dataset: Option<String>,
    pub negatives: Option<PathBuf>,
    pub path_cache: Option<PathBuf>,
    pub sources: SourcePolicy,
    pub max_identity_features: usize,
    pub seed: u64,
    pub dtype: Dtype,
    pub scorer: ScorerKind,
    pub encoder: EncoderConfig,
    pub phi: PhiConfig,
    pub pred_hidden: usize,
    pub pred_layers: usize,
    pub train: TrainOptions,
    pub split: SplitRatios,
    pub num_negatives: usize,
    pub valid_in_mp: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = LinkScorerConfig::new(ScorerKind::Sp4lp);
        let experiment = ExperimentOptions::default();
        Self {
            edges: None,
            features: None,
            dataset: None,
            negatives: None,
            path_cache: None,
            sources: experiment.sources,
            max_identity_features: DEFAULT_MAX_IDENTITY_FEATURES,
            seed: 0,
            dtype: Dtype::F64,
            scorer: model.scorer,
            encoder: model.encoder,
            phi: model.phi.unwrap_or_default(),
            pred_hidden: model.hidden,
            pred_layers: model.pred_layers,
            train: TrainOptions::default(),
            split: experiment.ratios,
            num_negatives: experiment.num_negatives,
            valid_in_mp: experiment.valid_in_message_passing,
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("key `{key}`: invalid value {raw:?}")))
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("key `{key}`: expected true or false, got {raw:?}"))),
    }
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',').map(|x| value(key, x.trim())).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Parses config text on top of the defaults. Relative paths resolve
    /// against `base` when given.
    pub fn parse(text: &str, source: &FsPath, base: Option<&FsPath>) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text, source, base)?;
        Ok(cfg)
    }

    /// Applies every setting in `text` on top of the current values.
    pub fn apply_text(&mut self, text: &str, source: &FsPath, base: Option<&FsPath>) -> Result<()> {
        let mut touched = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, raw)) = line.split_once('=') else {
                return Err(Error::Parse {
                    path: source.to_path_buf(),
                    line: i + 1,
                    msg: "expected `key = value`".into(),
                });
            };
            let key = key.trim();
            self.set(key, raw.trim()).map_err(|e| Error::Parse {
                path: source.to_path_buf(),
                line: i + 1,
                msg: e.to_string(),
            })?;
            touched.push(key);
        }
        if let Some(base) = base {
            let paths = [
                ("edges", &mut self.edges),
                ("features", &mut self.features),
                ("negatives", &mut self.negatives),
                ("path_cache", &mut self.path_cache),
            ];
            for (key, slot) in paths {
                match slot {
                    Some(p) if p.is_relative() && touched.contains(&key) => *p = base.join(&*p),
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn from_file(path: &FsPath) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path, path.parent())
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        match key {
            "edges" => self.edges = Some(raw.into()),
            "features" => self.features = Some(raw.into()),
            "dataset" => self.dataset = Some(raw.to_string()),
            "negatives" => self.negatives = Some(raw.into()),
            "path_cache" => self.path_cache = Some(raw.into()),
            "sources" => self.sources = raw.parse()?,
            "max_identity_features" => self.max_identity_features = value(key, raw)?,
            "seed" => self.seed = value(key, raw)?,
            "dtype" => self.dtype = raw.parse()?,
            "scorer" => self.scorer = raw.parse()?,
            "encoder" => self.encoder.kind = raw.parse()?,
            "layers" => self.encoder.layers = value(key, raw)?,
            "hidden" => self.encoder.hidden = value(key, raw)?,
            "dropout" => self.encoder.dropout = value(key, raw)?,
            "activation" => self.encoder.activation = raw.parse()?,
            "phi" => self.phi.kind = raw.parse()?,
            "phi_hidden" => self.phi.hidden = value(key, raw)?,
            "phi_heads" => self.phi.heads = value(key, raw)?,
            "phi_layers" => self.phi.layers = value(key, raw)?,
            "phi_max_len" => self.phi.max_len = value(key, raw)?,
            "pred_hidden" => self.pred_hidden = value(key, raw)?,
            "pred_layers" => self.pred_layers = value(key, raw)?,
            "lr" => self.train.lr = value(key, raw)?,
            "weight_decay" => self.train.weight_decay = value(key, raw)?,
            "epochs" => self.train.epochs = value(key, raw)?,
            "batch_size" => self.train.batch_size = value(key, raw)?,
            "eval_every" => self.train.eval_every = value(key, raw)?,
            "patience" => self.train.patience = value(key, raw)?,
            "split" => {
                let r: Vec<f64> = parse_list(key, raw)?;
                let [train, valid, test] = r[..] else {
                    return Err(Error::Config(format!("key `split`: expected three fractions, got {raw:?}")));
                };
                self.split = SplitRatios { train, valid, test };
            }
            "num_negatives" => self.num_negatives = value(key, raw)?,
            "hits" => {
                let mut ks: Vec<usize> = parse_list(key, raw)?;
                ks.sort_unstable();
                ks.dedup();
                self.train.hits = ks;
            }
            "valid_in_mp" => self.valid_in_mp = parse_bool(key, raw)?,
            "propagation" => self.train.propagation = raw.parse()?,
            _ => return Err(Error::Config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Canonical rendering of one key, or `None` for an unset optional path.
    pub fn get(&self, key: &str) -> Option<String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        Some(match key {
            "edges" => return path(&self.edges),
            "features" => return path(&self.features),
            "dataset" => return self.dataset.clone(),
            "negatives" => return path(&self.negatives),
            "path_cache" => return path(&self.path_cache),
            "sources" => self.sources.name().into(),
            "max_identity_features" => self.max_identity_features.to_string(),
            "seed" => self.seed.to_string(),
            "dtype" => self.dtype.name().into(),
            "scorer" => self.scorer.name().into(),
            "encoder" => self.encoder.kind.name().into(),
            "layers" => self.encoder.layers.to_string(),
            "hidden" => self.encoder.hidden.to_string(),
            "dropout" => self.encoder.dropout.to_string(),
            "activation" => self.encoder.activation.name().into(),
            "phi" => self.phi.kind.name().into(),
            "phi_hidden" => self.phi.hidden.to_string(),
            "phi_heads" => self.phi.heads.to_string(),
            "phi_layers" => self.phi.layers.to_string(),
            "phi_max_len" => self.phi.max_len.to_string(),
            "pred_hidden" => self.pred_hidden.to_string(),
            "pred_layers" => self.pred_layers.to_string(),
            "lr" => self.train.lr.to_string(),
            "weight_decay" => self.train.weight_decay.to_string(),
            "epochs" => self.train.epochs.to_string(),
            "batch_size" => self.train.batch_size.to_string(),
            "eval_every" => self.train.eval_every.to_string(),
            "patience" => self.train.patience.to_string(),
            "split" => join(&[self.split.train, self.split.valid, self.split.test]),
            "num_negatives" => self.num_negatives.to_string(),
            "hits" => join(&self.train.hits),
            "valid_in_mp" => self.valid_in_mp.to_string(),
            "propagation" => self.train.propagation.name().into(),
            _ => return None,
        })
    }

    /// Renders every set key in [`KEYS`] order; parsing the result gives back
    /// an equal configuration.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, _) in KEYS {
            if let Some(v) = self.get(key) {
                let _ = writeln!(out, "{key} = {v}");
            }
        }
        out
    }

    pub fn edges(&self) -> Result<&FsPath> {
        self.edges
            .as_deref()
            .ok_or_else(|| Error::Config("missing required config key `edges`".into()))
    }

    /// Dataset label: the `dataset` key, else the edge file stem.
    pub fn dataset_name(&self) -> String {
        self.dataset.clone().unwrap_or_else(|| {
            self.edges
                .as_ref()
                .and_then(|p| p.file_stem())
                .map_or_else(|| "graph".into(), |s| s.to_string_lossy().into_owned())
        })
    }

    pub fn load_graph(&self) -> Result<Graph> {
        let opts = LoadOptions {
            max_identity_features: self.max_identity_features,
        };
        load_graph(self.edges()?, self.features.as_deref(), &opts)
    }

    /// Model configuration for `kind`, sharing this config's widths.
    pub fn scorer_config(&self, kind: ScorerKind) -> LinkScorerConfig {
        LinkScorerConfig {
            scorer: kind,
            encoder: self.encoder,
            phi: kind.uses_phi().then_some(self.phi),
            hidden: self.pred_hidden,
            pred_layers: self.pred_layers,
        }
    }

    pub fn experiment_options(&self) -> Result<ExperimentOptions> {
        let test_negatives = match &self.negatives {
            Some(p) => Some(parse_negatives(&fs::read_to_string(p)?, p)?),
            None => None,
        };
        Ok(ExperimentOptions {
            ratios: self.split,
            num_negatives: self.num_negatives,
            seed: self.seed,
            sources: self.sources,
            valid_in_message_passing: self.valid_in_mp,
            test_negatives,
            path_cache: self.path_cache.clone(),
        })
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.edges()?;
        self.split.validate()?;
        self.train.validate()?;
        self.scorer_config(self.scorer).validate()?;
        if self.train.hits.is_empty() || self.train.hits.contains(&0) {
            return Err(Error::Config("hits needs at least one positive cut-off".into()));
        }
        Ok(())
    }
}
