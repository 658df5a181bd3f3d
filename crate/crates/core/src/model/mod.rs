//! The lightweight question-to-program ranker.

use thiserror::Error;

pub mod candidates;
pub mod eval;
pub mod features;
pub mod link;
pub mod ranker;

pub use candidates::{enumerate_candidates, Candidate, CandidateSet, DEFAULT_CAP};
pub use eval::{answer_strings, evaluate, predict, rank, score_pair, set_f1, Metrics, Ranked};
pub use features::{jaccard, FeatureVector, Featurizer};
pub use link::{link_entities, match_surfaces, Mention, Question};
pub use ranker::{
    loss_and_gradient, loss_from_scores, prepare, ranker_loss, score, softmax, train, train_prepared, PreparedExample,
    RankerParams, TrainConfig, TrainReport, TrainState,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("no topic entity found in question: {0:?}")]
    NoTopicEntity(String),
    #[error("no training pair produced any candidates")]
    NoTrainableExamples,
    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}
