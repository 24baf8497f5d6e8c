//! Link scorers built on top of the node encoders.

pub mod phi;
pub mod scorer;

pub use phi::{Phi, PhiConfig, PhiKind};
pub use scorer::{model_visit_order, LinkModel, LinkScorerConfig, PairBatch, ScorerKind};
