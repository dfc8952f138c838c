//! JSON and Markdown rendering of evaluation results.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::evaluation::{Breakdown, EvaluationReport};
use crate::pipelines::{ScenarioTable, ScenarioVariant, ThousandWordsReport};
use crate::visual::SourceFilter;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Json,
    Markdown,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            _ => Err(Error::InvalidInput(format!("unknown format `{s}`"))),
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// `0.578 [0.535]`: accuracy followed by the class probability.
pub fn accuracy_cell(accuracy: f64, baseline: f64) -> String {
    format!("{accuracy:.3} [{baseline:.3}]")
}

fn percent(v: f64) -> String {
    let p = v * 100.0;
    if (p - p.round()).abs() < 1e-9 {
        format!("{p:.0}%")
    } else {
        format!("{p:.1}%")
    }
}

fn per_class_rows(s: &mut String, b: &Breakdown) {
    for (class, acc) in &b.per_class {
        let base = b.baselines.get(class).copied().unwrap_or(0.0);
        let _ = writeln!(s, "| {class} | {} |", accuracy_cell(acc.accuracy, base));
    }
}

pub fn render_report(report: &EvaluationReport, format: Format) -> Result<String> {
    match format {
        Format::Json => to_json(report),
        Format::Markdown => Ok(report_markdown(report)),
    }
}

fn report_markdown(r: &EvaluationReport) -> String {
    let m = &r.method;
    let mut s = String::new();
    let source = m.source.as_deref().map(|x| format!(", {x}")).unwrap_or_default();
    let _ = writeln!(s, "### {} ({} {}{source})\n", m.name, m.task, r.language);
    let _ = writeln!(s, "| {} | {} [P*] |", m.task, r.language);
    let _ = writeln!(s, "|---|---|");
    per_class_rows(&mut s, &r.pooled);
    if m.unit == "profile" {
        let _ = writeln!(s, "| *accuracy* | {:.3} |", r.mean_accuracy);
    } else {
        let _ = writeln!(s, "| *accuracy* | {:.3} |", r.pooled.accuracy);
    }
    if let Some(img) = &r.image_level {
        let _ = writeln!(s, "\nImage-level accuracy: {:.3} ({} images)", img.accuracy, img.total);
    }
    let folds: Vec<String> = r.fold_accuracies.iter().map(|a| format!("{a:.3}")).collect();
    let _ = writeln!(s, "\nPer-fold accuracy ({} unit): {}", m.unit, folds.join(", "));
    let _ = writeln!(s, "Mean over folds: {:.3}", r.mean_accuracy);
    let c = &r.counts;
    if c.degenerate_profiles + c.majority_fallbacks + c.missing_embeddings + c.short_profiles + c.empty_folds > 0 {
        let _ = writeln!(
            s,
            "\nDegenerate profiles: {}; majority fallbacks: {}; missing embeddings: {}; short profiles: {}; empty folds: {}",
            c.degenerate_profiles, c.majority_fallbacks, c.missing_embeddings, c.short_profiles, c.empty_folds
        );
    }
    for note in &r.notes {
        let _ = writeln!(s, "\n> {note}");
    }
    s
}

/// One row per report: the method comparison layout.
pub fn render_comparison(reports: &[EvaluationReport]) -> String {
    let mut columns: Vec<String> = Vec::new();
    for r in reports {
        let col = format!("{} ({})", r.method.task, r.language);
        if !columns.contains(&col) {
            columns.push(col);
        }
    }
    let mut rows: Vec<String> = Vec::new();
    for r in reports {
        let name = r.method.name.clone();
        if !rows.contains(&name) {
            rows.push(name);
        }
    }
    let mut s = String::new();
    let _ = writeln!(s, "| methods | {} |", columns.join(" | "));
    let _ = writeln!(s, "|---|{}", "---|".repeat(columns.len()));
    for row in &rows {
        let cells: Vec<String> = columns
            .iter()
            .map(|col| {
                reports
                    .iter()
                    .find(|r| &r.method.name == row && &format!("{} ({})", r.method.task, r.language) == col)
                    .map(|r| format!("{:.3}", r.mean_accuracy))
                    .unwrap_or_else(|| "-".into())
            })
            .collect();
        let _ = writeln!(s, "| {row} | {} |", cells.join(" | "));
    }
    s
}

/// Image-level accuracy for each (variant, source) cell.
pub fn render_scenarios(table: &ScenarioTable, format: Format) -> Result<String> {
    if format == Format::Json {
        return to_json(table);
    }
    let heads = [
        (ScenarioVariant::A, "(a) testing all-imgs / [training with]"),
        (ScenarioVariant::B, "(b) [testing with] / training all-imgs"),
        (ScenarioVariant::C, "(c) [testing/training] with"),
    ];
    let present: Vec<_> = heads
        .iter()
        .filter(|(v, _)| table.cells.iter().any(|(s, _)| s.variant == *v))
        .collect();
    let mut s = String::new();
    let groups: Vec<String> = present.iter().map(|(_, h)| format!("{h} | |")).collect();
    let _ = writeln!(s, "| | {}", groups.join(" "));
    let _ = writeln!(s, "|---|{}", "---|---|".repeat(present.len()));
    let subs: Vec<&str> = present.iter().flat_map(|_| ["tweets", "retweets"]).collect();
    let _ = writeln!(s, "| *evaluating* | {} |", subs.join(" | "));
    let language = table.cells.first().map(|(_, r)| r.language.to_string()).unwrap_or_default();
    let mut cells = Vec::new();
    for (variant, _) in &present {
        for filter in [SourceFilter::Tweeted, SourceFilter::Retweeted] {
            let cell = table
                .cells
                .iter()
                .find(|(sc, _)| sc.variant == *variant && SourceFilter::from(sc.source) == filter)
                .map(|(_, r)| format!("{:.3}", r.pooled.accuracy))
                .unwrap_or_else(|| "-".into());
            cells.push(cell);
        }
    }
    let _ = writeln!(s, "| {} ({language}) | {} |", table.task, cells.join(" | "));
    Ok(s)
}

/// Per-class accuracy, textual chunks against individual images.
pub fn render_thousand_words(report: &ThousandWordsReport, format: Format) -> Result<String> {
    if format == Format::Json {
        return to_json(report);
    }
    let cols: Vec<(&str, Option<&EvaluationReport>)> = vec![
        ("BoW (2k)", Some(&report.textual_2k)),
        ("BoW (10k)", Some(&report.textual_10k)),
        ("all-images", Some(&report.visual_all)),
        ("tweets", report.visual_tweets.as_ref()),
        ("retweets", report.visual_retweets.as_ref()),
    ];
    let mut classes: Vec<String> = Vec::new();
    for (_, r) in &cols {
        if let Some(r) = r {
            for c in r.pooled.per_class.keys() {
                if !classes.contains(c) {
                    classes.push(c.clone());
                }
            }
        }
    }
    classes.sort();
    let mut s = String::new();
    let _ = writeln!(s, "| | Textual | | Visual | | |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    let names: Vec<&str> = cols.iter().map(|(n, _)| *n).collect();
    let _ = writeln!(s, "| *{}* | {} |", report.task, names.join(" | "));
    for class in &classes {
        let cells: Vec<String> = cols
            .iter()
            .map(|(_, r)| {
                r.and_then(|r| r.pooled.per_class.get(class))
                    .map(|a| percent(a.accuracy))
                    .unwrap_or_else(|| "-".into())
            })
            .collect();
        let _ = writeln!(s, "| {class} | {} |", cells.join(" | "));
    }
    let short = report.textual_2k.counts.short_profiles;
    if short > 0 {
        let _ = writeln!(
            s,
            "\n> {short} profile(s) had fewer than {} tokens and contributed no text chunk.",
            report.chunk_tokens
        );
    }
    Ok(s)
}
