//! Cross-validated runs of the textual, visual and multimodal methods.
//!
//! Every run follows the same shape: for each fold, features that depend on
//! data (vocabularies, models) are fitted on the training profiles only, then
//! the held-out profiles (or their images, or their text chunks) are
//! predicted. Folds run in parallel and are merged in fold order.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ImageSource, Profile, Task};
use crate::error::{Error, Result};
use crate::evaluation::{mean, Breakdown, Counts, EvaluationReport, FoldPlan, MethodDescriptor};
use crate::svm::{argmax_with_priors, train_multiclass, TrainConfig, TrainedModel};
use crate::text::{build_vocabulary, profile_tokens, vectorize_with, Vocabulary, Weighting, BOW_LARGE, BOW_SMALL};
use crate::vector::{DenseVector, FeatureVector, SparseVector};
use crate::visual::{build_prototype, concat_multimodal, EmbeddingStore, Prototype, SourceFilter};

/// Tokens per text instance in the thousand-words protocol.
pub const CHUNK_TOKENS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodKind {
    Textual2k,
    Textual10k,
    VisualIndividual,
    VisualPrototype,
    Multimodal2k,
    Multimodal10k,
}

impl MethodKind {
    pub const ALL: [MethodKind; 6] = [
        MethodKind::Textual2k,
        MethodKind::Textual10k,
        MethodKind::VisualIndividual,
        MethodKind::VisualPrototype,
        MethodKind::Multimodal2k,
        MethodKind::Multimodal10k,
    ];

    /// Row name in the method comparison table.
    pub fn code(self) -> &'static str {
        match self {
            MethodKind::Textual2k => "t1",
            MethodKind::Textual10k => "t2",
            MethodKind::VisualIndividual => "v3",
            MethodKind::VisualPrototype => "v4",
            MethodKind::Multimodal2k => "m3",
            MethodKind::Multimodal10k => "m6",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            MethodKind::Textual2k => "T1: BoW (2k)",
            MethodKind::Textual10k => "T2: BoW (10k)",
            MethodKind::VisualIndividual => "V3: LL-CNN",
            MethodKind::VisualPrototype => "V4: LL-CNN AVG",
            MethodKind::Multimodal2k => "M3: T1+V4",
            MethodKind::Multimodal10k => "M6: T2+V4",
        }
    }

    pub fn vocabulary_size(self) -> Option<usize> {
        match self {
            MethodKind::Textual2k | MethodKind::Multimodal2k => Some(BOW_SMALL),
            MethodKind::Textual10k | MethodKind::Multimodal10k => Some(BOW_LARGE),
            _ => None,
        }
    }

    pub fn needs_embeddings(self) -> bool {
        !matches!(self, MethodKind::Textual2k | MethodKind::Textual10k)
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodKind::ALL
            .into_iter()
            .find(|m| m.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown method `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub kind: MethodKind,
    pub source_filter: SourceFilter,
    pub task: Task,
}

impl MethodSpec {
    pub fn new(kind: MethodKind, source_filter: SourceFilter, task: Task) -> Result<Self> {
        if matches!(kind, MethodKind::Multimodal2k | MethodKind::Multimodal10k) && source_filter != SourceFilter::All {
            return Err(Error::InvalidConfig(
                "multimodal methods use prototypes over all images".into(),
            ));
        }
        Ok(MethodSpec {
            kind,
            source_filter,
            task,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioVariant {
    /// Train on one source, test on all images.
    A,
    /// Train on all images, test on one source.
    B,
    /// Train and test on one source.
    C,
}

impl ScenarioVariant {
    pub const ALL: [ScenarioVariant; 3] = [ScenarioVariant::A, ScenarioVariant::B, ScenarioVariant::C];

    pub fn letter(self) -> char {
        match self {
            ScenarioVariant::A => 'a',
            ScenarioVariant::B => 'b',
            ScenarioVariant::C => 'c',
        }
    }
}

impl FromStr for ScenarioVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(ScenarioVariant::A),
            "b" => Ok(ScenarioVariant::B),
            "c" => Ok(ScenarioVariant::C),
            _ => Err(Error::InvalidInput(format!("unknown scenario variant `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceScenario {
    pub variant: ScenarioVariant,
    pub source: ImageSource,
}

impl SourceScenario {
    /// `(train filter, test filter)`.
    pub fn filters(self) -> (SourceFilter, SourceFilter) {
        let single = SourceFilter::from(self.source);
        match self.variant {
            ScenarioVariant::A => (single, SourceFilter::All),
            ScenarioVariant::B => (SourceFilter::All, single),
            ScenarioVariant::C => (single, single),
        }
    }
}

impl fmt::Display for SourceScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) {}", self.variant.letter(), SourceFilter::from(self.source).label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub svm: TrainConfig,
    pub weighting: Weighting,
    /// Scale the BoW and visual blocks to unit norm before concatenation.
    pub normalize_blocks: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            svm: TrainConfig::default(),
            weighting: Weighting::Counts,
            normalize_blocks: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditStage {
    Vocabulary,
    Training,
    Prediction,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub fold: usize,
    pub stage: AuditStage,
    pub profile_id: String,
}

/// Records which profiles each fold's fitting steps touched.
#[derive(Debug, Default)]
pub struct FoldAudit {
    events: Mutex<Vec<AuditEvent>>,
}

impl FoldAudit {
    pub fn new() -> Arc<Self> {
        Arc::new(FoldAudit::default())
    }

    fn record<'a>(&self, fold: usize, stage: AuditStage, ids: impl IntoIterator<Item = &'a str>) {
        let mut events = self.events.lock().unwrap();
        events.extend(ids.into_iter().map(|id| AuditEvent {
            fold,
            stage,
            profile_id: id.to_string(),
        }));
    }

    pub fn events(&self) -> Vec<AuditEvent> {
        self.events.lock().unwrap().clone()
    }

    /// Fitting events that touched a profile of the fold being tested.
    pub fn leaks(&self, plan: &FoldPlan) -> Vec<AuditEvent> {
        self.events()
            .into_iter()
            .filter(|e| e.stage != AuditStage::Prediction && plan.fold_of(&e.profile_id) == Some(e.fold))
            .collect()
    }
}

/// Most frequent label; ties go to the larger prior, then lexicographic.
pub fn majority_vote<L: AsRef<str>>(labels: &[L], priors: &BTreeMap<String, f64>) -> Result<String> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("majority vote over no labels".into()));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_ref()).or_default() += 1;
    }
    let names: Vec<&str> = counts.keys().copied().collect();
    let votes: Vec<f64> = counts.values().map(|&c| c as f64).collect();
    let prior: Vec<f64> = names.iter().map(|n| priors.get(*n).copied().unwrap_or(0.0)).collect();
    Ok(names[argmax_with_priors(&votes, &prior)].to_string())
}

/// Consecutive non-overlapping chunks of exactly `size` tokens.
pub fn chunk_tokens<T>(tokens: &[T], size: usize) -> Vec<&[T]> {
    if size == 0 {
        return Vec::new();
    }
    tokens.chunks_exact(size).collect()
}

/// Most frequent label among `labels` (lexicographic on ties).
fn majority_label<'a>(labels: impl IntoIterator<Item = &'a str>) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|&(_, c)| c == best).map(|(l, _)| l.to_string())
}

/// A trained model, or a constant when the training data had one class.
enum Classifier {
    Svm(TrainedModel),
    Constant(String),
}

impl Classifier {
    fn fit<F: FeatureVector + Sync>(x: &[F], labels: &[&str], cfg: &TrainConfig, counts: &mut Counts) -> Result<Self> {
        let mut distinct: Vec<&str> = labels.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        match distinct.len() {
            0 => Err(Error::InvalidInput("fold has no training instances".into())),
            1 => {
                counts.single_class_folds += 1;
                Ok(Classifier::Constant(distinct[0].to_string()))
            }
            _ => Ok(Classifier::Svm(train_multiclass(x, labels, cfg)?)),
        }
    }

    fn predict<F: FeatureVector + ?Sized>(&self, x: &F) -> Result<String> {
        match self {
            Classifier::Svm(m) => Ok(m.predict(x)?.label.to_string()),
            Classifier::Constant(l) => Ok(l.clone()),
        }
    }

    fn priors(&self) -> BTreeMap<String, f64> {
        match self {
            Classifier::Svm(m) => m.classes.iter().cloned().zip(m.priors.iter().copied()).collect(),
            Classifier::Constant(l) => BTreeMap::from([(l.clone(), 1.0)]),
        }
    }
}

/// Outcome of one fold.
#[derive(Default)]
struct FoldResult {
    pairs: Vec<(String, String)>,
    image_pairs: Vec<(String, String)>,
    counts: Counts,
}

/// Image ids used for fitting and for testing in one fold.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct InstanceSplit {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Results of the thousand-words comparison for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThousandWordsReport {
    pub task: Task,
    pub chunk_tokens: usize,
    pub textual_2k: EvaluationReport,
    pub textual_10k: EvaluationReport,
    pub visual_all: EvaluationReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visual_tweets: Option<EvaluationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub visual_retweets: Option<EvaluationReport>,
}

/// All six cells of the image-source comparison for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTable {
    pub task: Task,
    pub cells: Vec<(SourceScenario, EvaluationReport)>,
}

/// Inputs shared by every run.
pub struct Pipeline<'a> {
    corpus: &'a Corpus,
    folds: &'a FoldPlan,
    embeddings: Option<&'a EmbeddingStore>,
    config: PipelineConfig,
    audit: Option<Arc<FoldAudit>>,
}

impl<'a> Pipeline<'a> {
    pub fn new(corpus: &'a Corpus, folds: &'a FoldPlan) -> Result<Self> {
        folds.check_against(corpus)?;
        Ok(Pipeline {
            corpus,
            folds,
            embeddings: None,
            config: PipelineConfig::default(),
            audit: None,
        })
    }

    pub fn with_embeddings(mut self, store: &'a EmbeddingStore) -> Self {
        self.embeddings = Some(store);
        self
    }

    pub fn with_config(mut self, config: PipelineConfig) -> Self {
        self.config = config;
        self
    }

    pub fn with_audit(mut self, audit: Arc<FoldAudit>) -> Self {
        self.audit = Some(audit);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn store(&self) -> Result<&'a EmbeddingStore> {
        self.embeddings
            .ok_or_else(|| Error::InvalidInput("this method needs an embedding file".into()))
    }

    fn audit<'b>(&self, fold: usize, stage: AuditStage, ids: impl IntoIterator<Item = &'b str>) {
        if let Some(a) = &self.audit {
            a.record(fold, stage, ids);
        }
    }

    fn split(&self, fold: usize) -> (Vec<&'a Profile>, Vec<&'a Profile>) {
        let corpus = self.corpus;
        let (test, train): (Vec<&Profile>, Vec<&Profile>) = corpus
            .profiles()
            .iter()
            .partition(|p| self.folds.fold_of(&p.id) == Some(fold));
        (train, test)
    }

    fn snapshot(&self, extra: serde_json::Value) -> serde_json::Value {
        let mut v = serde_json::json!({
            "pipeline": self.config,
            "folds": { "k": self.folds.k, "seed": self.folds.seed, "task": self.folds.task },
            "language": self.corpus.language(),
            "profiles": self.corpus.profiles().len(),
            "images": self.corpus.images().len(),
        });
        if let (Some(obj), serde_json::Value::Object(more)) = (v.as_object_mut(), extra) {
            obj.extend(more);
        }
        v
    }

    fn run_folds<F>(&self, per_fold: F) -> Result<Vec<FoldResult>>
    where
        F: Fn(usize) -> Result<FoldResult> + Sync + Send,
    {
        (0..self.folds.k).into_par_iter().map(per_fold).collect()
    }

    fn assemble(
        &self,
        method: MethodDescriptor,
        results: Vec<FoldResult>,
        base_counts: Counts,
        with_images: bool,
        extra: serde_json::Value,
    ) -> EvaluationReport {
        let mut counts = base_counts;
        let mut fold_accuracies = Vec::new();
        let mut pairs = Vec::new();
        let mut image_pairs = Vec::new();
        for r in results {
            let c = &r.counts;
            counts.majority_fallbacks += c.majority_fallbacks;
            counts.missing_embeddings += c.missing_embeddings;
            counts.single_class_folds += c.single_class_folds;
            if r.pairs.is_empty() {
                counts.empty_folds += 1;
            } else {
                let correct = r.pairs.iter().filter(|(g, p)| g == p).count();
                fold_accuracies.push(correct as f64 / r.pairs.len() as f64);
            }
            pairs.extend(r.pairs);
            image_pairs.extend(r.image_pairs);
        }
        EvaluationReport {
            method,
            language: self.corpus.language(),
            mean_accuracy: mean(&fold_accuracies),
            fold_accuracies,
            pooled: Breakdown::from_pairs(&pairs),
            image_level: with_images.then(|| Breakdown::from_pairs(&image_pairs)),
            counts,
            config: self.snapshot(extra),
            notes: Vec::new(),
        }
    }

    /// Dispatches one row of the method comparison.
    pub fn run_method(&self, spec: MethodSpec) -> Result<EvaluationReport> {
        match spec.kind {
            MethodKind::Textual2k => self.run_textual(BOW_SMALL, spec.task),
            MethodKind::Textual10k => self.run_textual(BOW_LARGE, spec.task),
            MethodKind::VisualIndividual => self.run_visual_individual(spec.source_filter, spec.task),
            MethodKind::VisualPrototype => self.run_visual_prototype(spec.source_filter, spec.task),
            MethodKind::Multimodal2k => self.run_multimodal(BOW_SMALL, spec.task),
            MethodKind::Multimodal10k => self.run_multimodal(BOW_LARGE, spec.task),
        }
    }

    fn method_name(&self, k: usize, textual: bool) -> String {
        match (k, textual) {
            (BOW_SMALL, true) => "t1".into(),
            (BOW_LARGE, true) => "t2".into(),
            (BOW_SMALL, false) => "m3".into(),
            (BOW_LARGE, false) => "m6".into(),
            (k, true) => format!("bow-{k}"),
            (k, false) => format!("bow-{k}+proto"),
        }
    }

    /// Predicts profile-level features, sending all-zero vectors to the
    /// training-majority class.
    fn predict_profiles<F: FeatureVector + Sync>(
        &self,
        fold: usize,
        task: Task,
        train: &[&Profile],
        train_x: Vec<F>,
        test: &[&Profile],
        test_x: Vec<F>,
    ) -> Result<FoldResult> {
        let mut r = FoldResult::default();
        let labels: Vec<&str> = train.iter().map(|p| p.label(task)).collect();
        self.audit(fold, AuditStage::Training, train.iter().map(|p| p.id.as_str()));
        let model = Classifier::fit(&train_x, &labels, &self.config.svm, &mut r.counts)?;
        let majority = majority_label(labels.iter().copied()).expect("training set is non-empty");
        self.audit(fold, AuditStage::Prediction, test.iter().map(|p| p.id.as_str()));
        for (p, x) in test.iter().zip(&test_x) {
            let pred = if x.is_zero() {
                r.counts.majority_fallbacks += 1;
                majority.clone()
            } else {
                model.predict(x)?
            };
            r.pairs.push((p.label(task).to_string(), pred));
        }
        Ok(r)
    }

    fn fold_vocabulary(&self, fold: usize, train: &[&Profile], tokens: &BTreeMap<&str, Vec<String>>, k: usize) -> Result<Vocabulary> {
        self.audit(fold, AuditStage::Vocabulary, train.iter().map(|p| p.id.as_str()));
        build_vocabulary(train.iter().map(|p| &tokens[p.id.as_str()]), k)
    }

    fn all_tokens(&self) -> BTreeMap<&'a str, Vec<String>> {
        let corpus = self.corpus;
        corpus
            .profiles()
            .par_iter()
            .map(|p| (p.id.as_str(), profile_tokens(p)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    }

    /// Bag-of-words over each profile's concatenated tweets.
    pub fn run_textual(&self, k: usize, task: Task) -> Result<EvaluationReport> {
        let tokens = self.all_tokens();
        let weighting = self.config.weighting;
        let results = self.run_folds(|fold| {
            let (train, test) = self.split(fold);
            let vocab = self.fold_vocabulary(fold, &train, &tokens, k)?;
            let vec = |p: &&Profile| vectorize_with(&tokens[p.id.as_str()], &vocab, weighting);
            let train_x: Vec<SparseVector> = train.iter().map(vec).collect();
            let test_x: Vec<SparseVector> = test.iter().map(vec).collect();
            self.predict_profiles(fold, task, &train, train_x, &test, test_x)
        })?;
        let method = MethodDescriptor {
            name: self.method_name(k, true),
            task,
            source: None,
            vocabulary: Some(k),
            unit: "profile".into(),
        };
        Ok(self.assemble(method, results, Counts::default(), false, serde_json::json!({ "vocabulary": k })))
    }

    fn prototypes(&self, filter: SourceFilter) -> Result<BTreeMap<&'a str, Prototype>> {
        let store = self.store()?;
        let corpus = self.corpus;
        Ok(corpus
            .profiles()
            .par_iter()
            .map(|p| (p.id.as_str(), build_prototype(corpus, p, store, filter)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect())
    }

    fn prototype_counts(protos: &BTreeMap<&str, Prototype>) -> Counts {
        Counts {
            degenerate_profiles: protos.values().filter(|p| p.degenerate).count(),
            missing_embeddings: protos.values().map(|p| p.missing).sum(),
            ..Counts::default()
        }
    }

    /// Each profile represented by the mean of its image embeddings.
    pub fn run_visual_prototype(&self, filter: SourceFilter, task: Task) -> Result<EvaluationReport> {
        let protos = self.prototypes(filter)?;
        let results = self.run_folds(|fold| {
            let (train, test) = self.split(fold);
            let dense = |p: &&Profile| protos[p.id.as_str()].dense();
            let train_x: Vec<DenseVector> = train.iter().map(dense).collect();
            let test_x: Vec<DenseVector> = test.iter().map(dense).collect();
            self.predict_profiles(fold, task, &train, train_x, &test, test_x)
        })?;
        let method = MethodDescriptor {
            name: "v4".into(),
            task,
            source: Some(filter.to_string()),
            vocabulary: None,
            unit: "profile".into(),
        };
        let counts = Self::prototype_counts(&protos);
        Ok(self.assemble(method, results, counts, false, serde_json::json!({ "source": filter })))
    }

    /// Concatenation of the fold's BoW vector and the all-images prototype.
    pub fn run_multimodal(&self, k: usize, task: Task) -> Result<EvaluationReport> {
        let tokens = self.all_tokens();
        let protos = self.prototypes(SourceFilter::All)?;
        let weighting = self.config.weighting;
        let normalize = self.config.normalize_blocks;
        let results = self.run_folds(|fold| {
            let (train, test) = self.split(fold);
            let vocab = self.fold_vocabulary(fold, &train, &tokens, k)?;
            let fuse = |p: &&Profile| {
                let bow = vectorize_with(&tokens[p.id.as_str()], &vocab, weighting);
                concat_multimodal(&bow, &protos[p.id.as_str()], normalize)
            };
            let train_x: Vec<DenseVector> = train.iter().map(fuse).collect();
            let test_x: Vec<DenseVector> = test.iter().map(fuse).collect();
            self.predict_profiles(fold, task, &train, train_x, &test, test_x)
        })?;
        let method = MethodDescriptor {
            name: self.method_name(k, false),
            task,
            source: Some(SourceFilter::All.to_string()),
            vocabulary: Some(k),
            unit: "profile".into(),
        };
        let counts = Self::prototype_counts(&protos);
        Ok(self.assemble(method, results, counts, false, serde_json::json!({ "vocabulary": k })))
    }

    /// Embeddings of a profile's images passing `filter`, with the number
    /// of selected images lacking one.
    fn profile_images(&self, store: &'a EmbeddingStore, p: &'a Profile, filter: SourceFilter) -> (Vec<(&'a str, &'a [f32])>, usize) {
        let mut missing = 0;
        let found = self
            .corpus
            .images_of(p)
            .filter(|img| filter.accepts(img.source))
            .filter_map(|img| match store.hidden(&img.id) {
                Some(v) => Some((img.id.as_str(), v)),
                None => {
                    missing += 1;
                    None
                }
            })
            .collect();
        (found, missing)
    }

    /// Image instances from training profiles; the label is the owner's.
    fn train_on_images(
        &self,
        fold: usize,
        task: Task,
        train: &[&'a Profile],
        filter: SourceFilter,
        counts: &mut Counts,
    ) -> Result<Option<Classifier>> {
        let store = self.store()?;
        let mut x: Vec<&[f32]> = Vec::new();
        let mut labels = Vec::new();
        for p in train {
            let (imgs, missing) = self.profile_images(store, p, filter);
            counts.missing_embeddings += missing;
            for (_, v) in imgs {
                x.push(v);
                labels.push(p.label(task));
            }
        }
        self.audit(fold, AuditStage::Training, train.iter().map(|p| p.id.as_str()));
        if x.is_empty() {
            return Ok(None);
        }
        Classifier::fit(&x, &labels, &self.config.svm, counts).map(Some)
    }

    /// Classifies every image, then votes per profile.
    pub fn run_visual_individual(&self, filter: SourceFilter, task: Task) -> Result<EvaluationReport> {
        let store = self.store()?;
        let results = self.run_folds(|fold| {
            let (train, test) = self.split(fold);
            let mut r = FoldResult::default();
            let model = self.train_on_images(fold, task, &train, filter, &mut r.counts)?;
            let majority = majority_label(train.iter().map(|p| p.label(task))).expect("non-empty");
            let priors = model.as_ref().map(Classifier::priors).unwrap_or_default();
            self.audit(fold, AuditStage::Prediction, test.iter().map(|p| p.id.as_str()));
            for p in &test {
                let gold = p.label(task);
                let (imgs, missing) = self.profile_images(store, p, filter);
                r.counts.missing_embeddings += missing;
                let mut votes = Vec::with_capacity(imgs.len());
                if let Some(model) = &model {
                    for (_, v) in &imgs {
                        let pred = model.predict(*v)?;
                        r.image_pairs.push((gold.to_string(), pred.clone()));
                        votes.push(pred);
                    }
                }
                let label = if votes.is_empty() {
                    r.counts.majority_fallbacks += 1;
                    majority.clone()
                } else {
                    majority_vote(&votes, &priors)?
                };
                r.pairs.push((gold.to_string(), label));
            }
            Ok(r)
        })?;
        let method = MethodDescriptor {
            name: "v3".into(),
            task,
            source: Some(filter.to_string()),
            vocabulary: None,
            unit: "profile".into(),
        };
        let degenerate = self
            .corpus
            .profiles()
            .iter()
            .filter(|p| self.profile_images(store, p, filter).0.is_empty())
            .count();
        let counts = Counts {
            degenerate_profiles: degenerate,
            ..Counts::default()
        };
        let mut report = self.assemble(method, results, counts, true, serde_json::json!({ "source": filter }));
        // Missing embeddings were counted once for training and once for testing.
        report.counts.missing_embeddings = self
            .corpus
            .images()
            .iter()
            .filter(|img| filter.accepts(img.source) && store.hidden(&img.id).is_none())
            .count();
        Ok(report)
    }

    /// Image ids that an image-instance run fits on and tests on in `fold`.
    pub fn image_split(&self, fold: usize, train_filter: SourceFilter, test_filter: SourceFilter) -> Result<InstanceSplit> {
        let store = self.store()?;
        let (train, test) = self.split(fold);
        let ids = |ps: &[&'a Profile], f: SourceFilter| -> Vec<String> {
            ps.iter()
                .flat_map(|p| self.profile_images(store, p, f).0)
                .map(|(id, _)| id.to_string())
                .collect()
        };
        Ok(InstanceSplit {
            train: ids(&train, train_filter),
            test: ids(&test, test_filter),
        })
    }

    fn run_image_instances(
        &self,
        name: String,
        source: String,
        train_filter: SourceFilter,
        test_filter: SourceFilter,
        task: Task,
    ) -> Result<EvaluationReport> {
        let store = self.store()?;
        let results = self.run_folds(|fold| {
            let (train, test) = self.split(fold);
            let mut r = FoldResult::default();
            let model = self.train_on_images(fold, task, &train, train_filter, &mut r.counts)?;
            self.audit(fold, AuditStage::Prediction, test.iter().map(|p| p.id.as_str()));
            let Some(model) = model else {
                return Ok(r);
            };
            for p in &test {
                let gold = p.label(task);
                for (_, v) in self.profile_images(store, p, test_filter).0 {
                    r.pairs.push((gold.to_string(), model.predict(v)?));
                }
            }
            Ok(r)
        })?;
        let method = MethodDescriptor {
            name,
            task,
            source: Some(source),
            vocabulary: None,
            unit: "image".into(),
        };
        let extra = serde_json::json!({ "train_source": train_filter, "test_source": test_filter });
        let mut report = self.assemble(method, results, Counts::default(), false, extra);
        report.counts.missing_embeddings = self
            .corpus
            .images()
            .iter()
            .filter(|img| store.hidden(&img.id).is_none())
            .count();
        Ok(report)
    }

    /// Every image is an instance labeled with its owner's class.
    pub fn run_per_image_eval(&self, task: Task) -> Result<EvaluationReport> {
        self.run_image_instances("per-image".into(), "all".into(), SourceFilter::All, SourceFilter::All, task)
    }

    pub fn run_source_scenario(&self, scenario: SourceScenario, task: Task) -> Result<EvaluationReport> {
        if !self.corpus.has_source(scenario.source) {
            return Err(Error::InvalidInput(format!(
                "corpus has no {} images",
                scenario.source.as_str()
            )));
        }
        let (train_filter, test_filter) = scenario.filters();
        self.run_image_instances(
            format!("scenario-{}", scenario.variant.letter()),
            SourceFilter::from(scenario.source).to_string(),
            train_filter,
            test_filter,
            task,
        )
    }

    /// Runs the given variants for both sources.
    pub fn run_scenario_table(&self, variants: &[ScenarioVariant], task: Task) -> Result<ScenarioTable> {
        let mut cells = Vec::new();
        for &variant in variants {
            for source in [ImageSource::Tweeted, ImageSource::Retweeted] {
                let scenario = SourceScenario { variant, source };
                cells.push((scenario, self.run_source_scenario(scenario, task)?));
            }
        }
        Ok(ScenarioTable { task, cells })
    }

    /// Text chunks of `chunk` tokens as instances, vocabulary of size `k`.
    pub fn run_text_chunks(&self, k: usize, chunk: usize, task: Task) -> Result<EvaluationReport> {
        if chunk == 0 {
            return Err(Error::InvalidConfig("chunk size must be positive".into()));
        }
        let tokens = self.all_tokens();
        let weighting = self.config.weighting;
        let chunks: BTreeMap<&str, Vec<&[String]>> = tokens
            .iter()
            .map(|(id, t)| (*id, chunk_tokens(t, chunk)))
            .collect();
        let short = chunks.values().filter(|c| c.is_empty()).count();
        if short > 0 {
            log::warn!("{short} profile(s) have fewer than {chunk} tokens and yield no text instance");
        }
        let results = self.run_folds(|fold| {
            let (train, test) = self.split(fold);
            let mut r = FoldResult::default();
            self.audit(fold, AuditStage::Vocabulary, train.iter().map(|p| p.id.as_str()));
            let vocab = build_vocabulary(train.iter().flat_map(|p| chunks[p.id.as_str()].iter().copied()), k)?;
            let mut x = Vec::new();
            let mut labels = Vec::new();
            for p in &train {
                for c in &chunks[p.id.as_str()] {
                    x.push(vectorize_with(c, &vocab, weighting));
                    labels.push(p.label(task));
                }
            }
            self.audit(fold, AuditStage::Training, train.iter().map(|p| p.id.as_str()));
            if x.is_empty() {
                return Ok(r);
            }
            let model = Classifier::fit(&x, &labels, &self.config.svm, &mut r.counts)?;
            self.audit(fold, AuditStage::Prediction, test.iter().map(|p| p.id.as_str()));
            for p in &test {
                for c in &chunks[p.id.as_str()] {
                    let pred = model.predict(&vectorize_with(c, &vocab, weighting))?;
                    r.pairs.push((p.label(task).to_string(), pred));
                }
            }
            Ok(r)
        })?;
        let method = MethodDescriptor {
            name: format!("chunks-bow-{k}"),
            task,
            source: None,
            vocabulary: Some(k),
            unit: "chunk".into(),
        };
        let counts = Counts {
            short_profiles: short,
            ..Counts::default()
        };
        let extra = serde_json::json!({ "vocabulary": k, "chunk_tokens": chunk });
        Ok(self.assemble(method, results, counts, false, extra))
    }

    /// Text chunks of 1000 tokens against individually classified images.
    pub fn run_thousand_words(&self, task: Task) -> Result<ThousandWordsReport> {
        self.run_thousand_words_with(task, CHUNK_TOKENS)
    }

    pub fn run_thousand_words_with(&self, task: Task, chunk: usize) -> Result<ThousandWordsReport> {
        let visual = |filter: SourceFilter| {
            self.run_image_instances(format!("images-{filter}"), filter.to_string(), filter, filter, task)
        };
        let optional = |source: ImageSource| -> Result<Option<EvaluationReport>> {
            if self.corpus.has_source(source) {
                visual(SourceFilter::from(source)).map(Some)
            } else {
                Ok(None)
            }
        };
        Ok(ThousandWordsReport {
            task,
            chunk_tokens: chunk,
            textual_2k: self.run_text_chunks(BOW_SMALL, chunk, task)?,
            textual_10k: self.run_text_chunks(BOW_LARGE, chunk, task)?,
            visual_all: visual(SourceFilter::All)?,
            visual_tweets: optional(ImageSource::Tweeted)?,
            visual_retweets: optional(ImageSource::Retweeted)?,
        })
    }
}
