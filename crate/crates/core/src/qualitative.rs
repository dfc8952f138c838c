//! Category labeling of images from final-layer scores, normalized group
//! histograms, signed difference lists and word-cloud frequency tables.

use std::fmt::Write as _;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::{AgeRange, Corpus, Gender, Profile};
use crate::error::{Error, Result};
use crate::visual::{EmbeddingStore, EmbeddingVector, Layer, CATEGORY_DIM};

const IMAGENET_NAMES: &str = include_str!("../data/imagenet_categories.txt");

/// Display names for the 1000 categories, indexed by category id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CategoryNames(Vec<String>);

impl CategoryNames {
    pub fn imagenet() -> &'static CategoryNames {
        static NAMES: OnceLock<CategoryNames> = OnceLock::new();
        NAMES.get_or_init(|| CategoryNames::parse(IMAGENET_NAMES).expect("bundled table has 1000 names"))
    }

    /// One name per line.
    pub fn parse(text: &str) -> Result<Self> {
        let names: Vec<String> = text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect();
        if names.len() != CATEGORY_DIM {
            return Err(Error::InvalidInput(format!(
                "category table has {} names, expected {CATEGORY_DIM}",
                names.len()
            )));
        }
        Ok(CategoryNames(names))
    }

    pub fn name(&self, id: usize) -> &str {
        &self.0[id]
    }
}

/// Argmax of the category scores; ties go to the lowest index.
pub fn label_image(scores: &EmbeddingVector) -> Result<usize> {
    if scores.layer != Layer::Softmax1000 {
        return Err(Error::InvalidInput(format!(
            "image `{}`: expected softmax1000 scores, got {}",
            scores.image_id,
            scores.layer.as_str()
        )));
    }
    scores.validate()?;
    Ok(argmax_lowest(&scores.values))
}

fn argmax_lowest(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Which profiles form a group.
pub enum GroupSelector {
    All,
    Gender(Gender),
    Age(AgeRange),
    Custom(String, Box<dyn Fn(&Profile) -> bool + Send + Sync>),
}

impl GroupSelector {
    pub fn describe(&self) -> String {
        match self {
            GroupSelector::All => "all".into(),
            GroupSelector::Gender(g) => g.to_string(),
            GroupSelector::Age(a) => a.to_string(),
            GroupSelector::Custom(name, _) => name.clone(),
        }
    }

    pub fn matches(&self, p: &Profile) -> bool {
        match self {
            GroupSelector::All => true,
            GroupSelector::Gender(g) => p.gender == *g,
            GroupSelector::Age(a) => p.age == *a,
            GroupSelector::Custom(_, f) => f(p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryHistogram {
    /// e.g. `female (EN)`.
    pub group: String,
    pub counts: Vec<u64>,
    pub total: u64,
    pub frequencies: Vec<f64>,
}

impl CategoryHistogram {
    pub fn from_counts(group: impl Into<String>, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != CATEGORY_DIM {
            return Err(Error::DimensionMismatch {
                expected: CATEGORY_DIM,
                found: counts.len(),
            });
        }
        let total: u64 = counts.iter().sum();
        let frequencies = counts
            .iter()
            .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
            .collect();
        Ok(CategoryHistogram {
            group: group.into(),
            counts,
            total,
            frequencies,
        })
    }

    pub fn from_labels(group: impl Into<String>, labels: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut counts = vec![0u64; CATEGORY_DIM];
        for l in labels {
            if l >= CATEGORY_DIM {
                return Err(Error::InvalidInput(format!("category id {l} out of range")));
            }
            counts[l] += 1;
        }
        CategoryHistogram::from_counts(group, counts)
    }
}

/// Histogram of argmax labels over the selected profiles' scored images.
pub fn group_histogram(corpus: &Corpus, store: &EmbeddingStore, selector: &GroupSelector) -> Result<CategoryHistogram> {
    let group = format!("{} ({})", selector.describe(), corpus.language());
    let labels: Vec<usize> = corpus
        .profiles()
        .iter()
        .filter(|p| selector.matches(p))
        .flat_map(|p| corpus.images_of(p))
        .filter_map(|img| store.scores(&img.id))
        .map(argmax_lowest)
        .collect();
    if labels.is_empty() {
        return Err(Error::InvalidInput(format!("group `{group}` has no images with category scores")));
    }
    CategoryHistogram::from_labels(group, labels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceEntry {
    pub category: usize,
    pub name: String,
    /// Frequency in the first group minus frequency in the second.
    pub difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferenceList {
    pub group_a: String,
    pub group_b: String,
    pub n_per_side: usize,
    /// Largest positive differences first.
    pub favor_a: Vec<DifferenceEntry>,
    /// Largest negative differences first.
    pub favor_b: Vec<DifferenceEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl DifferenceList {
    pub fn entries(&self) -> impl Iterator<Item = &DifferenceEntry> {
        self.favor_a.iter().chain(&self.favor_b)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "| {} | diff | {} | diff |", self.group_a, self.group_b);
        let _ = writeln!(s, "|---|---|---|---|");
        let rows = self.favor_a.len().max(self.favor_b.len());
        for i in 0..rows {
            let cell = |e: Option<&DifferenceEntry>| match e {
                Some(e) => (e.name.clone(), format!("{:+.4}", e.difference)),
                None => (String::new(), String::new()),
            };
            let (an, ad) = cell(self.favor_a.get(i));
            let (bn, bd) = cell(self.favor_b.get(i));
            let _ = writeln!(s, "| {an} | {ad} | {bn} | {bd} |");
        }
        if let Some(w) = &self.warning {
            let _ = writeln!(s, "\n> {w}");
        }
        s
    }
}

/// `n / 2` categories most over-represented in `a` and `n / 2` most
/// over-represented in `b`, ties by category id.
pub fn difference_list(
    a: &CategoryHistogram,
    b: &CategoryHistogram,
    n: usize,
    names: &CategoryNames,
) -> Result<DifferenceList> {
    if !n.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!("difference list size must be even, got {n}")));
    }
    if a.frequencies.len() != b.frequencies.len() {
        return Err(Error::DimensionMismatch {
            expected: a.frequencies.len(),
            found: b.frequencies.len(),
        });
    }
    let per_side = n / 2;
    let diffs: Vec<(usize, f64)> = a
        .frequencies
        .iter()
        .zip(&b.frequencies)
        .map(|(x, y)| x - y)
        .enumerate()
        .collect();
    let side = |positive: bool| -> Vec<DifferenceEntry> {
        let mut v: Vec<(usize, f64)> = diffs
            .iter()
            .copied()
            .filter(|&(_, d)| if positive { d > 0.0 } else { d < 0.0 })
            .collect();
        v.sort_by(|x, y| y.1.abs().total_cmp(&x.1.abs()).then(x.0.cmp(&y.0)));
        v.truncate(per_side);
        v.into_iter()
            .map(|(category, difference)| DifferenceEntry {
                category,
                name: names.name(category).to_string(),
                difference,
            })
            .collect()
    };
    let favor_a = side(true);
    let favor_b = side(false);
    let warning = (favor_a.len() < per_side || favor_b.len() < per_side).then(|| {
        format!(
            "requested {per_side} categories per side, found {} favoring {} and {} favoring {}",
            favor_a.len(),
            a.group,
            favor_b.len(),
            b.group
        )
    });
    if let Some(w) = &warning {
        log::warn!("{w}");
    }
    Ok(DifferenceList {
        group_a: a.group.clone(),
        group_b: b.group.clone(),
        n_per_side: per_side,
        favor_a,
        favor_b,
        warning,
    })
}

/// `category,frequency` rows for categories present in the histogram,
/// most frequent first, ties by category id.
pub fn export_cloud(hist: &CategoryHistogram, names: &CategoryNames) -> Result<String> {
    let mut rows: Vec<(usize, f64)> = hist
        .counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, _)| (i, hist.frequencies[i]))
        .collect();
    rows.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["category", "frequency"])?;
    for (id, f) in rows {
        w.write_record([names.name(id), &f.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
