//! Anchoring-path evidence for knowledge-graph relation prediction.
//!
//! The pipeline:
//!
//! 1. [`graph`]: load triples and add inverse relations.
//! 2. [`paths`]: enumerate closed and anchoring paths around a query.
//! 3. [`filter`]: score relation chains by accuracy and recall on the
//!    training graph, keep the good ones, and match them at query time.
//! 4. [`text`]: turn paths and queries into sentences and embed them.
//! 5. [`scorer`]: max-cosine triple scores, the cosine embedding loss, and
//!    training pairs.
//! 6. [`eval`]: rank candidate entities and report MRR / Hit@1.

pub mod config;
pub mod error;
pub mod eval;
pub mod filter;
pub mod graph;
pub mod hash;
mod par;
pub mod paths;
pub mod scorer;
pub mod text;

pub use config::{Ablation, EncoderSpec, EvalMode, RunConfig};
pub use error::{ApstError, Result};
pub use eval::{aggregate_metrics, rank_candidates, run_experiment, CandidateSet, Metrics, RankingResult, Report};
pub use filter::{
    ap_metrics, build_logical_ap_store, classify_entities, collect_chain_heads, match_query_aps, ApStatistics,
    EntityCategoryCounts, LogicalApStore, MatchParams, QueryTriple, Thresholds,
};
pub use graph::{EntityId, Graph, GraphStats, RelationId, Triple, TripleFormat, INVERSE_MARKER};
pub use paths::{
    chain_endpoints, classify_path, decompose_concatenated, enumerate_anchoring_paths, enumerate_closed_paths,
    relation_chain, Path, PathCategory, RelationChain, Side,
};
pub use scorer::{cosine_embedding_loss, cosine_similarity, triplet_score, LossConfig, ScoringContext};
pub use text::{DescriptionStore, DescriptionTier, Embedding, Encoder, HashEncoder};

/// Builds the encoder named by a config.
#[cfg(feature = "remote")]
pub fn make_encoder(spec: &EncoderSpec) -> Result<Box<dyn Encoder>> {
    match spec {
        EncoderSpec::Builtin => Ok(Box::new(HashEncoder::default())),
        EncoderSpec::Remote(url) => Ok(Box::new(text::RemoteEncoder::connect(url)?)),
    }
}
