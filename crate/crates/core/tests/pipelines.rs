use std::collections::HashSet;

use viprof_core::pipelines::FoldAudit;
use viprof_core::report::{render_report, render_scenarios, render_thousand_words, Format};
use viprof_core::*;

fn data(separation: f64, text_signal: f64, seed: u64) -> SyntheticData {
    let spec = SynthSpec {
        profiles: 20,
        images_per_profile: 8,
        tweets_per_profile: 90,
        separation,
        text_signal,
        ..SynthSpec::default()
    };
    generate_synthetic(&spec, seed).unwrap()
}

fn folds(c: &Corpus, task: Task) -> FoldPlan {
    make_folds(c, 4, task, 3, FoldMode::AllowMissingClass).unwrap()
}

#[test]
fn planted_visual_signal_is_recovered() {
    let d = data(10.0, 0.0, 1);
    let plan = folds(&d.corpus, Task::Gender);
    let p = Pipeline::new(&d.corpus, &plan).unwrap().with_embeddings(&d.embeddings);
    let v4 = p.run_visual_prototype(SourceFilter::All, Task::Gender).unwrap();
    assert!(v4.mean_accuracy >= 0.95, "{}", v4.mean_accuracy);
    let v3 = p.run_visual_individual(SourceFilter::All, Task::Gender).unwrap();
    assert!(v3.image_level.as_ref().unwrap().total == 160);
    assert!(v3.mean_accuracy >= 0.95);
}

#[test]
fn planted_text_signal_is_recovered() {
    let d = data(0.0, 0.2, 2);
    let plan = folds(&d.corpus, Task::Age);
    let p = Pipeline::new(&d.corpus, &plan).unwrap();
    let t1 = p.run_textual(2000, Task::Age).unwrap();
    assert!(t1.mean_accuracy >= 0.9, "{}", t1.mean_accuracy);
    assert_eq!(t1.method.name, "t1");
    assert_eq!(t1.fold_accuracies.len(), 4);
}

#[test]
fn visual_methods_need_embeddings() {
    let d = data(1.0, 0.0, 1);
    let plan = folds(&d.corpus, Task::Gender);
    let p = Pipeline::new(&d.corpus, &plan).unwrap();
    assert!(p.run_visual_prototype(SourceFilter::All, Task::Gender).is_err());
}

#[test]
fn no_fitting_step_sees_test_profiles() {
    let d = data(2.0, 0.1, 4);
    let plan = folds(&d.corpus, Task::Age);
    let audit = FoldAudit::new();
    let p = Pipeline::new(&d.corpus, &plan)
        .unwrap()
        .with_embeddings(&d.embeddings)
        .with_audit(audit.clone());
    for kind in MethodKind::ALL {
        p.run_method(MethodSpec::new(kind, SourceFilter::All, Task::Age).unwrap()).unwrap();
    }
    p.run_thousand_words(Task::Age).unwrap();
    assert!(!audit.events().is_empty());
    assert!(audit.leaks(&plan).is_empty());
}

#[test]
fn scenario_instance_sets_respect_sources() {
    let d = data(1.0, 0.0, 5);
    let plan = folds(&d.corpus, Task::Gender);
    let p = Pipeline::new(&d.corpus, &plan).unwrap().with_embeddings(&d.embeddings);
    let source = |id: &String| d.corpus.image(id).unwrap().source;
    for fold in 0..plan.k {
        for variant in ScenarioVariant::ALL {
            for src in [ImageSource::Tweeted, ImageSource::Retweeted] {
                let (tr, te) = SourceScenario { variant, source: src }.filters();
                let split = p.image_split(fold, tr, te).unwrap();
                for (set, filter) in [(&split.train, tr), (&split.test, te)] {
                    assert!(set.iter().all(|id| filter.accepts(source(id))));
                }
                let test_profiles: HashSet<&str> = plan.test_ids(fold).into_iter().collect();
                assert!(split
                    .train
                    .iter()
                    .all(|id| !test_profiles.contains(d.corpus.image(id).unwrap().profile_id.as_str())));
                assert!(split
                    .test
                    .iter()
                    .all(|id| test_profiles.contains(d.corpus.image(id).unwrap().profile_id.as_str())));
            }
        }
    }
}

#[test]
fn scenario_table_and_render() {
    let d = data(6.0, 0.0, 6);
    let plan = folds(&d.corpus, Task::Age);
    let p = Pipeline::new(&d.corpus, &plan).unwrap().with_embeddings(&d.embeddings);
    let table = p.run_scenario_table(&ScenarioVariant::ALL, Task::Age).unwrap();
    assert_eq!(table.cells.len(), 6);
    let md = render_scenarios(&table, Format::Markdown).unwrap();
    assert!(md.contains("| age (EN) |"), "{md}");
    assert!(md.contains("(a) testing all-imgs"));
}

#[test]
fn per_image_identity() {
    let d = data(1.5, 0.0, 7);
    let plan = folds(&d.corpus, Task::Age);
    let p = Pipeline::new(&d.corpus, &plan).unwrap().with_embeddings(&d.embeddings);
    let r = p.run_per_image_eval(Task::Age).unwrap();
    let b = &r.pooled;
    assert_eq!(b.total, d.corpus.images().len());
    let correct: usize = b.per_class.values().map(|c| c.correct).sum();
    assert_eq!(correct, b.correct);
    let weighted: f64 = b.per_class.iter().map(|(c, a)| b.baselines[c] * a.accuracy).sum();
    assert!((weighted - b.accuracy).abs() < 1e-12);
}

#[test]
fn thousand_words_drops_short_profiles() {
    let spec = SynthSpec {
        profiles: 10,
        images_per_profile: 4,
        tweets_per_profile: 50,
        tokens_per_tweet: 12,
        text_signal: 0.3,
        ..SynthSpec::default()
    };
    let d = generate_synthetic(&spec, 8).unwrap();
    let plan = make_folds(&d.corpus, 2, Task::Gender, 1, FoldMode::AllowMissingClass).unwrap();
    let p = Pipeline::new(&d.corpus, &plan).unwrap().with_embeddings(&d.embeddings);
    // 600 tokens per profile: no chunk of 1000.
    let r = p.run_thousand_words(Task::Gender).unwrap();
    assert_eq!(r.textual_2k.counts.short_profiles, 10);
    assert_eq!(r.textual_2k.pooled.total, 0);
    // Chunks of 200 give three instances per profile.
    let r = p.run_thousand_words_with(Task::Gender, 200).unwrap();
    assert_eq!(r.textual_2k.pooled.total, 30);
    assert!(r.visual_tweets.is_some() && r.visual_retweets.is_some());
    let md = render_thousand_words(&r, Format::Markdown).unwrap();
    assert!(md.contains("| female |"), "{md}");
    assert!(md.contains("BoW (10k)"));
}

#[test]
fn report_json_round_trip_and_markdown() {
    let d = data(4.0, 0.1, 9);
    let plan = folds(&d.corpus, Task::Gender);
    let p = Pipeline::new(&d.corpus, &plan).unwrap().with_embeddings(&d.embeddings);
    let r = p.run_multimodal(2000, Task::Gender).unwrap();
    let json = r.to_json().unwrap();
    assert_eq!(EvaluationReport::from_json(&json).unwrap(), r);
    let md = render_report(&r, Format::Markdown).unwrap();
    assert!(md.contains("| female |"), "{md}");
    assert!(md.contains("[0.500]"), "{md}");
}

#[test]
fn runs_are_deterministic() {
    let run = || {
        let d = data(1.0, 0.05, 10);
        let plan = folds(&d.corpus, Task::Age);
        let p = Pipeline::new(&d.corpus, &plan).unwrap().with_embeddings(&d.embeddings);
        let a = p.run_multimodal(2000, Task::Age).unwrap().to_json().unwrap();
        let b = p.run_visual_individual(SourceFilter::Retweeted, Task::Age).unwrap().to_json().unwrap();
        a + &b
    };
    assert_eq!(run(), run());
}

#[test]
fn degenerate_profiles_fall_back_to_majority() {
    let d = data(3.0, 0.0, 11);
    // Drop the embeddings of the first two profiles.
    let gone: HashSet<&str> = d.corpus.profiles()[..2]
        .iter()
        .flat_map(|p| p.images.iter().map(String::as_str))
        .collect();
    let mut store = EmbeddingStore::new();
    for rec in d.embeddings.records() {
        if !gone.contains(rec.image_id.as_str()) {
            store.insert(rec).unwrap();
        }
    }
    let plan = folds(&d.corpus, Task::Gender);
    let p = Pipeline::new(&d.corpus, &plan).unwrap().with_embeddings(&store);
    let r = p.run_visual_prototype(SourceFilter::All, Task::Gender).unwrap();
    assert_eq!(r.counts.degenerate_profiles, 2);
    assert_eq!(r.counts.missing_embeddings, gone.len());
    assert_eq!(r.counts.majority_fallbacks, 2);
    assert_eq!(r.pooled.total, 20);
}

#[test]
fn fold_plan_must_match_corpus() {
    let a = data(1.0, 0.0, 1);
    let b = generate_synthetic(&SynthSpec { profiles: 12, images_per_profile: 1, tweets_per_profile: 1, ..SynthSpec::default() }, 1).unwrap();
    let plan = folds(&b.corpus, Task::Gender);
    assert!(Pipeline::new(&a.corpus, &plan).is_err());
}
