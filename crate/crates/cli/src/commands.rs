use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use viprof_core::corpus::{load_corpus, parse_manifest, parse_truth_file, AgeRange, Corpus, Gender};
use viprof_core::evaluation::{make_folds, FoldMode, FoldPlan};
use viprof_core::extract::{extract_embeddings, Network};
use viprof_core::pipelines::{MethodSpec, Pipeline, PipelineConfig, ScenarioVariant};
use viprof_core::qualitative::{difference_list, export_cloud, group_histogram, CategoryNames, GroupSelector};
use viprof_core::report::{render_report, render_scenarios, render_thousand_words, to_json};
use viprof_core::stats::corpus_stats;
use viprof_core::svm::{train_multiclass, TrainConfig};
use viprof_core::synth::{generate_synthetic, write_synthetic, SynthSpec};
use viprof_core::text::{build_vocabulary, profile_tokens, vectorize_with, Weighting};
use viprof_core::vector::{DenseVector, FeatureVector, Features, SparseVector};
use viprof_core::visual::{build_prototype, load_embeddings, EmbeddingStore};

use crate::args::*;
use crate::output::{emit, write_atomic, write_snapshot};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn corpus(args: &CorpusArgs) -> Result<Corpus> {
    let path = &args.corpus;
    if path.is_dir() {
        let (c, summary) = load_corpus(path, args.lang)?;
        if !summary.profiles_without_images.is_empty() {
            warn!("{} profile(s) have no images", summary.profiles_without_images.len());
        }
        return Ok(c);
    }
    Corpus::from_json(&read_text(path)?).with_context(|| format!("parsing corpus {}", path.display()))
}

fn embeddings(path: &Path) -> Result<EmbeddingStore> {
    load_embeddings(path).with_context(|| format!("loading embeddings {}", path.display()))
}

fn fold_plan(path: &Path) -> Result<FoldPlan> {
    FoldPlan::from_json(&read_text(path)?).with_context(|| format!("parsing fold plan {}", path.display()))
}

fn train_config(a: &SvmArgs) -> TrainConfig {
    TrainConfig {
        c: a.c,
        tolerance: a.tolerance,
        max_outer_iters: a.max_iters,
        seed: a.svm_seed,
        bias: !a.no_bias,
    }
}

fn weighting(binary: bool) -> Weighting {
    if binary {
        Weighting::Binary
    } else {
        Weighting::Counts
    }
}

fn json_line<T: Serialize>(out: &mut String, value: &T) -> Result<()> {
    out.push_str(&serde_json::to_string(value)?);
    out.push('\n');
    Ok(())
}

fn finish<T: Serialize>(out: Option<&Path>, text: &str, command: &str, args: &T) -> Result<()> {
    emit(out, text)?;
    if let Some(p) = out {
        write_snapshot(p, command, args)?;
    }
    Ok(())
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let (c, summary) = load_corpus(&a.root, a.lang)?;
    info!("loaded {} profiles and {} images", summary.profiles, summary.images);
    if !summary.profiles_without_images.is_empty() {
        warn!(
            "{} profile(s) have no images: {}",
            summary.profiles_without_images.len(),
            summary.profiles_without_images.join(", ")
        );
    }
    finish(Some(&a.out), &c.to_json()?, "ingest", a)
}

pub fn stats(a: &StatsArgs) -> Result<()> {
    let report = corpus_stats(&corpus(&a.corpus)?);
    let text = match a.format {
        FormatArg::Json => to_json(&report)?,
        FormatArg::Markdown => report.to_markdown(),
    };
    finish(a.out.as_deref(), &text, "stats", a)
}

pub fn folds(a: &FoldsArgs) -> Result<()> {
    let c = corpus(&a.corpus)?;
    let mode = if a.allow_missing_class {
        FoldMode::AllowMissingClass
    } else {
        FoldMode::Strict
    };
    let plan = make_folds(&c, a.k, a.task, a.seed, mode)?;
    for m in &plan.missing_classes {
        warn!("fold {} has no `{}` profile", m.fold, m.class);
    }
    finish(Some(&a.out), &plan.to_json()?, "folds", a)
}

#[derive(Serialize)]
struct SparseRow<'a> {
    profile_id: &'a str,
    dim: usize,
    entries: &'a [(u32, f64)],
}

pub fn featurize_text(a: &TextFeatArgs) -> Result<()> {
    let c = corpus(&a.corpus)?;
    let plan = fold_plan(&a.folds)?;
    plan.check_against(&c)?;
    let tokens: HashMap<&str, Vec<String>> = c.profiles().iter().map(|p| (p.id.as_str(), profile_tokens(p))).collect();
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for fold in 0..plan.k {
        let train = plan.train_ids(fold);
        let vocab = build_vocabulary(train.iter().map(|id| &tokens[id]), a.k)?;
        let dir = a.out.join(format!("fold-{fold}"));
        write_atomic(&dir.join("vocabulary.json"), to_json(&vocab)?.as_bytes())?;
        let mut lines = String::new();
        for p in c.profiles() {
            let v = vectorize_with(&tokens[p.id.as_str()], &vocab, weighting(a.binary));
            json_line(
                &mut lines,
                &SparseRow {
                    profile_id: &p.id,
                    dim: v.dim(),
                    entries: v.entries(),
                },
            )?;
        }
        write_atomic(&dir.join("vectors.jsonl"), lines.as_bytes())?;
    }
    write_snapshot(&a.out, "featurize text", a)
}

pub fn featurize_visual(a: &VisualFeatArgs) -> Result<()> {
    let c = corpus(&a.corpus)?;
    let store = embeddings(&a.embeddings)?;
    let mut lines = String::new();
    let mut degenerate = 0;
    for p in c.profiles() {
        let proto = build_prototype(&c, p, &store, a.source);
        degenerate += usize::from(proto.degenerate);
        json_line(&mut lines, &proto)?;
    }
    if degenerate > 0 {
        warn!("{degenerate} profile(s) have no {} embeddings; their prototypes are zero", a.source.label());
    }
    finish(Some(&a.out), &lines, "featurize visual", a)
}

#[derive(Deserialize)]
struct FeatureRow {
    profile_id: String,
    #[serde(default)]
    dim: Option<usize>,
    #[serde(default)]
    entries: Option<Vec<(u32, f64)>>,
    #[serde(default)]
    values: Option<Vec<f64>>,
}

fn read_features(path: &Path) -> Result<Vec<(String, Features)>> {
    let file = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let ctx = || format!("{} line {}", path.display(), n + 1);
        let row: FeatureRow = serde_json::from_str(&line).with_context(ctx)?;
        let features = match (row.values, row.entries, row.dim) {
            (Some(values), _, _) => Features::Dense(DenseVector(values)),
            (None, Some(entries), Some(dim)) => Features::Sparse(SparseVector::new(dim, entries).with_context(ctx)?),
            _ => bail!("{}: expected `values`, or `entries` with `dim`", ctx()),
        };
        rows.push((row.profile_id, features));
    }
    Ok(rows)
}

pub fn train(a: &TrainArgs) -> Result<()> {
    let rows = read_features(&a.features)?;
    let truth = parse_truth_file(&read_text(&a.labels)?).with_context(|| format!("parsing {}", a.labels.display()))?;
    let labels: HashMap<&str, (Gender, AgeRange)> = truth.iter().map(|r| (r.profile_id.as_str(), (r.gender, r.age))).collect();
    let mut y = Vec::with_capacity(rows.len());
    for (id, _) in &rows {
        let (g, age) = labels
            .get(id.as_str())
            .ok_or_else(|| anyhow!("profile `{id}` has no label in {}", a.labels.display()))?;
        y.push(match a.task {
            viprof_core::Task::Gender => g.as_str(),
            viprof_core::Task::Age => age.as_str(),
        });
    }
    let x: Vec<Features> = rows.into_iter().map(|(_, f)| f).collect();
    let model = train_multiclass(&x, &y, &train_config(&a.svm))?;
    let unconverged = model.models.iter().filter(|m| !m.converged).count();
    if unconverged > 0 {
        warn!("{unconverged} class model(s) stopped at the iteration limit");
    }
    finish(Some(&a.out), &model.to_json()?, "train", a)
}

struct Loaded {
    corpus: Corpus,
    plan: FoldPlan,
    store: Option<EmbeddingStore>,
}

fn load_eval(c: &EvalCommon, needs_embeddings: bool) -> Result<Loaded> {
    let corpus = corpus(&c.corpus)?;
    let plan = fold_plan(&c.folds)?;
    if plan.task != c.task && !c.shared_folds {
        bail!(
            "fold plan {} was built for {}, not {}; pass --shared-folds to reuse it",
            c.folds.display(),
            plan.task,
            c.task
        );
    }
    let store = match (&c.embeddings, needs_embeddings) {
        (Some(p), _) => Some(embeddings(p)?),
        (None, true) => bail!("this evaluation needs --embeddings"),
        (None, false) => None,
    };
    Ok(Loaded { corpus, plan, store })
}

fn pipeline<'a>(l: &'a Loaded, config: PipelineConfig) -> Result<Pipeline<'a>> {
    let mut p = Pipeline::new(&l.corpus, &l.plan)?.with_config(config);
    if let Some(s) = &l.store {
        p = p.with_embeddings(s);
    }
    Ok(p)
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let c = &a.common;
    let loaded = load_eval(c, a.method.needs_embeddings())?;
    let config = PipelineConfig {
        svm: train_config(&c.svm),
        weighting: weighting(a.binary),
        normalize_blocks: a.normalize_blocks,
    };
    let p = pipeline(&loaded, config)?;
    let report = p.run_method(MethodSpec::new(a.method, a.source, c.task)?)?;
    if report.counts.degenerate_profiles > 0 {
        warn!("{} profile(s) had no usable images", report.counts.degenerate_profiles);
    }
    let text = render_report(&report, c.format.into())?;
    finish(c.out.as_deref(), &text, "eval", a)
}

fn image_config(c: &EvalCommon) -> PipelineConfig {
    PipelineConfig {
        svm: train_config(&c.svm),
        ..PipelineConfig::default()
    }
}

pub fn eval_scenarios(a: &ScenarioArgs) -> Result<()> {
    let c = &a.common;
    let loaded = load_eval(c, true)?;
    let p = pipeline(&loaded, image_config(c))?;
    let variants = if a.variant.is_empty() {
        ScenarioVariant::ALL.to_vec()
    } else {
        a.variant.clone()
    };
    let table = p.run_scenario_table(&variants, c.task)?;
    let text = render_scenarios(&table, c.format.into())?;
    finish(c.out.as_deref(), &text, "eval-scenarios", a)
}

pub fn eval_per_image(a: &PerImageArgs) -> Result<()> {
    let c = &a.common;
    let loaded = load_eval(c, true)?;
    let p = pipeline(&loaded, image_config(c))?;
    let report = p.run_per_image_eval(c.task)?;
    let text = render_report(&report, c.format.into())?;
    finish(c.out.as_deref(), &text, "eval-per-image", a)
}

pub fn eval_thousand_words(a: &ThousandWordsArgs) -> Result<()> {
    let c = &a.common;
    let loaded = load_eval(c, true)?;
    let config = PipelineConfig {
        weighting: weighting(a.binary),
        ..image_config(c)
    };
    let p = pipeline(&loaded, config)?;
    let report = p.run_thousand_words_with(c.task, a.chunk)?;
    if report.textual_2k.counts.short_profiles > 0 {
        warn!(
            "{} profile(s) are shorter than {} tokens",
            report.textual_2k.counts.short_profiles, a.chunk
        );
    }
    let text = render_thousand_words(&report, c.format.into())?;
    finish(c.out.as_deref(), &text, "eval-thousand-words", a)
}

fn slug(s: &str) -> String {
    s.to_ascii_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

pub fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let c = corpus(&a.corpus)?;
    let store = embeddings(&a.embeddings)?;
    let custom;
    let names: &CategoryNames = match &a.categories {
        Some(p) => {
            custom = CategoryNames::parse(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?;
            &custom
        }
        None => CategoryNames::imagenet(),
    };
    let pairs: Vec<(GroupSelector, GroupSelector)> = match a.group_by {
        GroupBy::Gender => vec![(GroupSelector::Gender(Gender::Female), GroupSelector::Gender(Gender::Male))],
        GroupBy::Age => AgeRange::ALL
            .iter()
            .map(|&age| {
                let rest = GroupSelector::Custom(format!("not {age}"), Box::new(move |p| p.age != age));
                (GroupSelector::Age(age), rest)
            })
            .collect(),
    };
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut written: HashSet<String> = HashSet::new();
    for (sa, sb) in &pairs {
        let mut hists = Vec::new();
        for sel in [sa, sb] {
            match group_histogram(&c, &store, sel) {
                Ok(h) => hists.push(h),
                Err(e) => warn!("skipping {}: {e}", sel.describe()),
            }
        }
        for h in &hists {
            let key = slug(&h.group);
            if written.insert(key.clone()) {
                write_atomic(&a.out.join(format!("histogram-{key}.json")), to_json(h)?.as_bytes())?;
                write_atomic(&a.out.join(format!("cloud-{key}.csv")), export_cloud(h, names)?.as_bytes())?;
            }
        }
        if let [ha, hb] = hists.as_slice() {
            let list = difference_list(ha, hb, a.top, names)?;
            let stem = format!("differences-{}-vs-{}", slug(&sa.describe()), slug(&sb.describe()));
            write_atomic(&a.out.join(format!("{stem}.json")), to_json(&list)?.as_bytes())?;
            write_atomic(&a.out.join(format!("{stem}.md")), list.to_markdown().as_bytes())?;
        }
    }
    write_snapshot(&a.out, "analyze", a)
}

#[derive(Serialize)]
struct SynthRun<'a> {
    seed: u64,
    spec: &'a SynthSpec,
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut spec = match &a.spec {
        Some(p) => serde_json::from_str(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?,
        None => SynthSpec::default(),
    };
    if let Some(v) = a.lang {
        spec.language = v;
    }
    macro_rules! set {
        ($($field:ident <- $arg:ident),*) => {
            $(if let Some(v) = a.$arg { spec.$field = v; })*
        };
    }
    set!(profiles <- profiles, age_classes <- age_classes, gender_classes <- gender_classes,
         images_per_profile <- images, retweet_fraction <- retweet_fraction, separation <- separation,
         spread <- spread, text_signal <- text_signal, tweets_per_profile <- tweets);
    if a.category_scores {
        spec.category_scores = true;
    }
    let data = generate_synthetic(&spec, a.seed)?;
    write_synthetic(&data, &a.out)?;
    info!(
        "wrote {} profiles and {} images to {}",
        data.corpus.profiles().len(),
        data.corpus.images().len(),
        a.out.display()
    );
    write_snapshot(&a.out, "synth", &SynthRun { seed: a.seed, spec: &spec })
}

pub fn extract(a: &ExtractArgs) -> Result<()> {
    let net = Network::load(&a.model)?;
    let manifest = parse_manifest(&read_text(&a.manifest)?).with_context(|| format!("parsing {}", a.manifest.display()))?;
    let root: PathBuf = match &a.root {
        Some(r) => r.clone(),
        None => a.manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let mut jobs = Vec::new();
    let mut unlisted = Vec::new();
    for rec in manifest {
        match rec.path {
            Some(p) => jobs.push((rec.id, root.join(p))),
            None => unlisted.push(rec.id),
        }
    }
    if !unlisted.is_empty() {
        warn!("{} manifest row(s) have no image path", unlisted.len());
    }
    let result = extract_embeddings(&net, &jobs)?;
    let mut store = EmbeddingStore::new();
    for v in result.vectors {
        store.insert(v)?;
    }
    let mut buf = Vec::new();
    store.write_jsonl(&mut buf)?;
    write_atomic(&a.out, &buf)?;
    if !result.failures.is_empty() {
        warn!("{} image(s) could not be processed", result.failures.len());
        let mut lines = String::new();
        for f in &result.failures {
            json_line(&mut lines, f)?;
        }
        let mut name = a.out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".failures.jsonl");
        write_atomic(&a.out.with_file_name(name), lines.as_bytes())?;
    }
    write_snapshot(&a.out, "extract", a)
}
