//! Clustering of short operational-risk loss descriptions.
//!
//! The stages are plain functions over owned data: [`corpus`] cleans raw
//! records, [`vectorize`] builds TF/TF-IDF matrices, [`semantic`] folds word
//! similarity into those matrices, [`lsa`] projects documents, [`cluster`]
//! fits the models and [`validate`] scores them against analyst tags.

pub mod cluster;
pub mod corpus;
pub mod lsa;
pub mod pipeline;
pub mod semantic;
pub mod synth;
pub mod validate;
pub mod vectorize;

pub use cluster::{ClusterError, ClusterResult, Label, Method, MultiStartPolicy, Selection};
pub use corpus::{CleanDocument, CleaningConfig, CorpusError, EventType, LossEvent};
pub use lsa::{LsaError, Projection2D, SvdFactors};
pub use semantic::{EmbeddingTable, SemanticError, WordSimilarityMatrix};
pub use vectorize::{DocTermMatrix, VectorizeError, Vocabulary, Weighting};
pub use validate::{TagSet, ValidateError, ValidationReport};
pub use pipeline::{MethodSpec, PipelineConfig, PipelineError, RunArtifact};
