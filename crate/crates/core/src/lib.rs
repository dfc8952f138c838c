//! Age and gender profiling of social-media authors from the text they post
//! and the images they share.
//!
//! The crate covers corpus loading, bag-of-words and image-prototype
//! features, a dual coordinate descent linear SVM, subject-independent
//! cross-validation, the evaluation pipelines and qualitative analysis of
//! image categories.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod extract;
pub mod pipelines;
pub mod qualitative;
pub mod report;
pub mod stats;
pub mod svm;
pub mod synth;
pub mod text;
pub mod vector;
pub mod visual;

pub use corpus::{load_corpus, AgeRange, Corpus, Gender, ImageRecord, ImageSource, Language, LoadSummary, Profile, Task, TruthRecord};
pub use error::{Error, Result};
pub use evaluation::{make_folds, Breakdown, EvaluationReport, FoldMode, FoldPlan};
pub use pipelines::{MethodKind, MethodSpec, Pipeline, PipelineConfig, ScenarioVariant, SourceScenario};
pub use svm::{train_binary, train_multiclass, BinaryModel, TrainConfig, TrainedModel};
pub use synth::{generate_synthetic, SynthSpec, SyntheticData};
pub use text::{build_vocabulary, tokenize, vectorize, Vocabulary};
pub use vector::{DenseVector, FeatureVector, SparseVector};
pub use visual::{build_prototype, concat_multimodal, load_embeddings, EmbeddingStore, EmbeddingVector, Layer, Prototype, SourceFilter};
