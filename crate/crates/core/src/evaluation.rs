//! Subject-independent fold plans, accuracy metrics and evaluation reports.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Language, Task};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FoldMode {
    /// Reject plans where some fold lacks a class.
    #[default]
    Strict,
    /// Accept such plans and record the gaps.
    AllowMissingClass,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingClass {
    pub fold: usize,
    pub class: String,
}

/// Assignment of every profile to exactly one of `k` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub task: Task,
    pub assignment: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_classes: Vec<MissingClass>,
}

pub fn make_folds(corpus: &Corpus, k: usize, task: Task, seed: u64, mode: FoldMode) -> Result<FoldPlan> {
    let labeled: Vec<(&str, &str)> = corpus
        .profiles()
        .iter()
        .map(|p| (p.id.as_str(), p.label(task)))
        .collect();
    make_folds_from_labels(&labeled, k, task, seed, mode)
}

/// Seeded shuffle within each class, then round-robin over folds class by
/// class (classes in lexicographic order, the fold counter carrying over).
pub fn make_folds_from_labels<I: AsRef<str>, L: AsRef<str>>(
    labeled: &[(I, L)],
    k: usize,
    task: Task,
    seed: u64,
    mode: FoldMode,
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Folds(format!("k must be at least 2, got {k}")));
    }
    if labeled.is_empty() {
        return Err(Error::Folds("corpus has no profiles".into()));
    }
    if k > labeled.len() {
        return Err(Error::Folds(format!(
            "k = {k} exceeds the number of profiles ({})",
            labeled.len()
        )));
    }
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, label) in labeled {
        by_class.entry(label.as_ref()).or_default().push(id.as_ref());
    }
    let short: Vec<String> = by_class
        .iter()
        .filter(|(_, ids)| ids.len() < k)
        .map(|(c, ids)| format!("`{c}` ({} profiles)", ids.len()))
        .collect();
    if mode == FoldMode::Strict && !short.is_empty() {
        return Err(Error::Folds(format!(
            "cannot place every class in each of {k} folds: {}",
            short.join(", ")
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut counter = 0usize;
    let mut present: BTreeMap<&str, BTreeSet<usize>> = BTreeMap::new();
    for (class, ids) in &mut by_class {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            let fold = counter % k;
            counter += 1;
            if assignment.insert(id.to_string(), fold).is_some() {
                return Err(Error::Folds(format!("profile `{id}` appears twice")));
            }
            present.entry(class).or_default().insert(fold);
        }
    }
    let mut missing_classes = Vec::new();
    for (class, folds) in &present {
        for fold in (0..k).filter(|f| !folds.contains(f)) {
            missing_classes.push(MissingClass {
                fold,
                class: class.to_string(),
            });
        }
    }
    missing_classes.sort_by(|a, b| a.fold.cmp(&b.fold).then_with(|| a.class.cmp(&b.class)));
    if !missing_classes.is_empty() {
        log::warn!("{} (fold, class) pairs have no profile", missing_classes.len());
    }
    Ok(FoldPlan {
        k,
        seed,
        task,
        assignment,
        missing_classes,
    })
}

impl FoldPlan {
    pub fn fold_of(&self, profile_id: &str) -> Option<usize> {
        self.assignment.get(profile_id).copied()
    }

    pub fn test_ids(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn train_ids(&self, fold: usize) -> Vec<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f != fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// The plan must cover exactly the corpus profiles with in-range folds.
    pub fn check_against(&self, corpus: &Corpus) -> Result<()> {
        for p in corpus.profiles() {
            match self.assignment.get(&p.id) {
                None => return Err(Error::Folds(format!("profile `{}` has no fold", p.id))),
                Some(&f) if f >= self.k => {
                    return Err(Error::Folds(format!("profile `{}` assigned to fold {f} ≥ k", p.id)))
                }
                _ => {}
            }
        }
        if self.assignment.len() != corpus.profiles().len() {
            return Err(Error::Folds("plan names profiles absent from the corpus".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let plan: FoldPlan = serde_json::from_str(text)?;
        if plan.k < 2 || plan.assignment.values().any(|&f| f >= plan.k) {
            return Err(Error::Folds("fold indices out of range".into()));
        }
        Ok(plan)
    }
}

/// Fraction of `(gold, predicted)` pairs that agree.
pub fn accuracy<A: PartialEq<B>, B>(pairs: &[(A, B)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty prediction list".into()));
    }
    let correct = pairs.iter().filter(|(g, p)| g == p).count();
    Ok(correct as f64 / pairs.len() as f64)
}

/// Empirical class frequencies.
pub fn class_probability_baseline<L: AsRef<str>>(labels: &[L]) -> Result<BTreeMap<String, f64>> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("class probabilities of an empty list".into()));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l.as_ref().to_string()).or_default() += 1;
    }
    let n = labels.len() as f64;
    Ok(counts.into_iter().map(|(c, k)| (c, k as f64 / n)).collect())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

/// Pooled (over all folds) correctness counts, overall and per gold class.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    pub per_class: BTreeMap<String, ClassAccuracy>,
    /// Fraction of instances per gold class.
    pub baselines: BTreeMap<String, f64>,
}

impl Breakdown {
    pub fn from_pairs<G: AsRef<str>, P: AsRef<str>>(pairs: &[(G, P)]) -> Breakdown {
        let mut per_class: BTreeMap<String, ClassAccuracy> = BTreeMap::new();
        let mut correct = 0;
        for (g, p) in pairs {
            let e = per_class.entry(g.as_ref().to_string()).or_default();
            e.total += 1;
            if g.as_ref() == p.as_ref() {
                e.correct += 1;
                correct += 1;
            }
        }
        let total = pairs.len();
        for e in per_class.values_mut() {
            e.accuracy = e.correct as f64 / e.total as f64;
        }
        let baselines = per_class
            .iter()
            .map(|(c, e)| (c.clone(), e.total as f64 / total as f64))
            .collect();
        Breakdown {
            correct,
            total,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            per_class,
            baselines,
        }
    }
}

/// What was evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodDescriptor {
    /// Short name, e.g. `t2`, `v3`, `per-image`, `scenario-b`.
    pub name: String,
    pub task: Task,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<usize>,
    /// `profile`, `image` or `chunk`.
    pub unit: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    /// Profiles whose features were all zero (no usable modality).
    pub degenerate_profiles: usize,
    /// Test profiles assigned the training-majority class.
    pub majority_fallbacks: usize,
    /// Selected images without an embedding.
    pub missing_embeddings: usize,
    /// Profiles too short to yield a text chunk.
    pub short_profiles: usize,
    /// Folds without any test instance.
    pub empty_folds: usize,
    /// Folds whose training set held a single class.
    pub single_class_folds: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: MethodDescriptor,
    pub language: Language,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Pooled over folds at the evaluation unit.
    pub pooled: Breakdown,
    /// Image-level results of individual classification.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub image_level: Option<Breakdown>,
    pub counts: Counts,
    pub config: serde_json::Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(counts: &[(&str, usize)]) -> Vec<(String, String)> {
        counts
            .iter()
            .flat_map(|&(c, n)| (0..n).map(move |i| (format!("{c}{i:02}"), c.to_string())))
            .collect()
    }

    #[test]
    fn balanced_round_robin() {
        let l = labeled(&[("f", 10), ("m", 10)]);
        let plan = make_folds_from_labels(&l, 10, Task::Gender, 42, FoldMode::Strict).unwrap();
        for fold in 0..10 {
            let ids = plan.test_ids(fold);
            assert_eq!(ids.len(), 2);
            assert_eq!(ids.iter().filter(|i| i.starts_with('f')).count(), 1);
        }
    }

    #[test]
    fn strict_mode_names_short_class() {
        let l = labeled(&[("18-24", 5), ("25-34", 20)]);
        let err = make_folds_from_labels(&l, 10, Task::Age, 1, FoldMode::Strict).unwrap_err();
        assert!(err.to_string().contains("18-24"), "{err}");
        let plan = make_folds_from_labels(&l, 10, Task::Age, 1, FoldMode::AllowMissingClass).unwrap();
        assert_eq!(plan.missing_classes.len(), 5);
    }

    #[test]
    fn deterministic_given_seed() {
        let l = labeled(&[("a", 13), ("b", 17)]);
        let p1 = make_folds_from_labels(&l, 5, Task::Gender, 7, FoldMode::Strict).unwrap();
        let p2 = make_folds_from_labels(&l, 5, Task::Gender, 7, FoldMode::Strict).unwrap();
        assert_eq!(p1, p2);
        let p3 = make_folds_from_labels(&l, 5, Task::Gender, 8, FoldMode::Strict).unwrap();
        assert_ne!(p1, p3);
    }

    #[test]
    fn fold_errors() {
        let l = labeled(&[("a", 3)]);
        assert!(make_folds_from_labels(&l, 1, Task::Gender, 0, FoldMode::Strict).is_err());
        let empty: Vec<(String, String)> = vec![];
        assert!(make_folds_from_labels(&empty, 2, Task::Gender, 0, FoldMode::Strict).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[("A", "A"), ("A", "B")]).unwrap(), 0.5);
        assert_eq!(accuracy(&[("A", "A"), ("B", "B")]).unwrap(), 1.0);
        assert_eq!(accuracy(&[("A", "B"), ("B", "A")]).unwrap(), 0.0);
        let none: [(&str, &str); 0] = [];
        assert!(accuracy(&none).is_err());
    }

    #[test]
    fn baseline_examples() {
        let mut labels = vec!["female"; 6];
        labels.extend(vec!["male"; 4]);
        let b = class_probability_baseline(&labels).unwrap();
        assert_eq!(b["female"], 0.6);
        assert_eq!(b["male"], 0.4);
        assert_eq!(class_probability_baseline(&["c"]).unwrap()["c"], 1.0);
        let uniform = class_probability_baseline(&["a", "b", "c", "d", "e"]).unwrap();
        assert!(uniform.values().all(|&p| p == 0.2));
        let empty: [&str; 0] = [];
        assert!(class_probability_baseline(&empty).is_err());
    }

    #[test]
    fn folds_json_layout() {
        let l = labeled(&[("a", 2), ("b", 2)]);
        let plan = make_folds_from_labels(&l, 2, Task::Gender, 3, FoldMode::Strict).unwrap();
        let v: serde_json::Value = serde_json::from_str(&plan.to_json().unwrap()).unwrap();
        assert_eq!(v["k"], 2);
        assert_eq!(v["task"], "gender");
        assert!(v["assignment"]["a00"].is_u64());
        assert_eq!(FoldPlan::from_json(&plan.to_json().unwrap()).unwrap(), plan);
    }
}
