//! Per-image CNN representations, per-profile prototypes and multimodal
//! concatenation.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, ImageSource, Profile};
use crate::error::{Error, Result};
use crate::vector::{DenseVector, FeatureVector, SparseVector};

pub const HIDDEN_DIM: usize = 4096;
pub const CATEGORY_DIM: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    /// Last hidden layer activations.
    #[serde(rename = "hidden4096")]
    Hidden4096,
    /// Final-layer category scores (pre- or post-softmax).
    #[serde(rename = "softmax1000")]
    Softmax1000,
}

impl Layer {
    pub fn dim(self) -> usize {
        match self {
            Layer::Hidden4096 => HIDDEN_DIM,
            Layer::Softmax1000 => CATEGORY_DIM,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Layer::Hidden4096 => "hidden4096",
            Layer::Softmax1000 => "softmax1000",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub image_id: String,
    pub layer: Layer,
    pub values: Vec<f32>,
}

impl EmbeddingVector {
    pub fn new(image_id: impl Into<String>, layer: Layer, values: Vec<f32>) -> Result<Self> {
        let v = EmbeddingVector {
            image_id: image_id.into(),
            layer,
            values,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.layer.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.layer.dim(),
                found: self.values.len(),
            });
        }
        if let Some(bad) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at position {bad} of `{}`",
                self.image_id
            )));
        }
        if self.layer == Layer::Softmax1000 && self.values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "negative category score for `{}`",
                self.image_id
            )));
        }
        Ok(())
    }
}

/// Image embeddings keyed by image id, one map per layer.
#[derive(Clone, Debug, Default)]
pub struct EmbeddingStore {
    hidden: HashMap<String, Vec<f32>>,
    scores: HashMap<String, Vec<f32>>,
}

impl EmbeddingStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn map(&self, layer: Layer) -> &HashMap<String, Vec<f32>> {
        match layer {
            Layer::Hidden4096 => &self.hidden,
            Layer::Softmax1000 => &self.scores,
        }
    }

    pub fn insert(&mut self, v: EmbeddingVector) -> Result<()> {
        v.validate()?;
        let map = match v.layer {
            Layer::Hidden4096 => &mut self.hidden,
            Layer::Softmax1000 => &mut self.scores,
        };
        if map.contains_key(&v.image_id) {
            return Err(Error::InvalidInput(format!(
                "duplicate embedding for image `{}` layer {}",
                v.image_id,
                v.layer.as_str()
            )));
        }
        map.insert(v.image_id, v.values);
        Ok(())
    }

    pub fn get(&self, image_id: &str, layer: Layer) -> Option<&[f32]> {
        self.map(layer).get(image_id).map(Vec::as_slice)
    }

    pub fn hidden(&self, image_id: &str) -> Option<&[f32]> {
        self.get(image_id, Layer::Hidden4096)
    }

    pub fn scores(&self, image_id: &str) -> Option<&[f32]> {
        self.get(image_id, Layer::Softmax1000)
    }

    pub fn len(&self) -> usize {
        self.hidden.len() + self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn count(&self, layer: Layer) -> usize {
        self.map(layer).len()
    }

    /// Records sorted by layer then image id.
    pub fn records(&self) -> Vec<EmbeddingVector> {
        let mut out = Vec::with_capacity(self.len());
        for layer in [Layer::Hidden4096, Layer::Softmax1000] {
            let mut ids: Vec<&String> = self.map(layer).keys().collect();
            ids.sort();
            for id in ids {
                out.push(EmbeddingVector {
                    image_id: id.clone(),
                    layer,
                    values: self.map(layer)[id].clone(),
                });
            }
        }
        out
    }

    pub fn from_jsonl<R: BufRead>(reader: R, context: &str) -> Result<Self> {
        let mut store = EmbeddingStore::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(context, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EmbeddingVector =
                serde_json::from_str(&line).map_err(|e| Error::parse(context, n + 1, e.to_string()))?;
            store
                .insert(rec)
                .map_err(|e| Error::parse(context, n + 1, e.to_string()))?;
        }
        Ok(store)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for rec in self.records() {
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n").map_err(|e| Error::io("<embeddings>", e))?;
        }
        Ok(())
    }
}

/// Reads the JSON-lines embedding file.
pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_jsonl(BufReader::new(file), &path.display().to_string())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceFilter {
    #[default]
    All,
    Tweeted,
    Retweeted,
}

impl SourceFilter {
    pub fn accepts(self, source: ImageSource) -> bool {
        match self {
            SourceFilter::All => true,
            SourceFilter::Tweeted => source == ImageSource::Tweeted,
            SourceFilter::Retweeted => source == ImageSource::Retweeted,
        }
    }

    /// Column label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            SourceFilter::All => "all-images",
            SourceFilter::Tweeted => "tweets",
            SourceFilter::Retweeted => "retweets",
        }
    }
}

impl From<ImageSource> for SourceFilter {
    fn from(s: ImageSource) -> Self {
        match s {
            ImageSource::Tweeted => SourceFilter::Tweeted,
            ImageSource::Retweeted => SourceFilter::Retweeted,
        }
    }
}

impl FromStr for SourceFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "all" => Ok(SourceFilter::All),
            "tweets" | "tweet" | "tweeted" => Ok(SourceFilter::Tweeted),
            "retweets" | "retweet" | "retweeted" => Ok(SourceFilter::Retweeted),
            _ => Err(Error::InvalidInput(format!("unknown image source `{s}`"))),
        }
    }
}

impl fmt::Display for SourceFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SourceFilter::All => "all",
            SourceFilter::Tweeted => "tweets",
            SourceFilter::Retweeted => "retweets",
        })
    }
}

/// Componentwise mean of a profile's image embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prototype {
    pub profile_id: String,
    pub values: Vec<f64>,
    pub image_count: usize,
    /// Selected images that had no embedding.
    pub missing: usize,
    pub source_filter: SourceFilter,
    /// No image was averaged; `values` is all zeros.
    pub degenerate: bool,
}

impl Prototype {
    /// Averages `vectors` in 64-bit arithmetic.
    pub fn from_vectors<'a>(
        profile_id: impl Into<String>,
        source_filter: SourceFilter,
        dim: usize,
        vectors: impl IntoIterator<Item = &'a [f32]>,
    ) -> Result<Prototype> {
        let mut sum = vec![0.0f64; dim];
        let mut n = 0usize;
        for v in vectors {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            for (s, &x) in sum.iter_mut().zip(v) {
                *s += x as f64;
            }
            n += 1;
        }
        if n > 0 {
            let inv = n as f64;
            for s in &mut sum {
                *s /= inv;
            }
        }
        Ok(Prototype {
            profile_id: profile_id.into(),
            values: sum,
            image_count: n,
            missing: 0,
            source_filter,
            degenerate: n == 0,
        })
    }

    pub fn dense(&self) -> DenseVector {
        DenseVector(self.values.clone())
    }
}

pub fn build_prototype(
    corpus: &Corpus,
    profile: &Profile,
    store: &EmbeddingStore,
    source_filter: SourceFilter,
) -> Prototype {
    let mut missing = 0;
    let selected: Vec<&[f32]> = corpus
        .images_of(profile)
        .filter(|img| source_filter.accepts(img.source))
        .filter_map(|img| {
            let v = store.hidden(&img.id);
            if v.is_none() {
                missing += 1;
            }
            v
        })
        .collect();
    let mut proto = Prototype::from_vectors(profile.id.clone(), source_filter, HIDDEN_DIM, selected)
        .expect("store enforces the hidden dimension");
    proto.missing = missing;
    proto
}

/// BoW block followed by the visual block. With `normalize_blocks` each
/// block is scaled to unit L2 norm first (zero blocks stay zero).
pub fn concat_multimodal(bow: &SparseVector, proto: &Prototype, normalize_blocks: bool) -> DenseVector {
    let bow = if normalize_blocks { bow.l2_normalized() } else { bow.clone() };
    let visual = if normalize_blocks {
        DenseVector(proto.values.clone()).l2_normalized()
    } else {
        DenseVector(proto.values.clone())
    };
    let mut out = bow.to_dense().0;
    out.extend_from_slice(&visual.0);
    DenseVector(out)
}

impl FeatureVector for [f32] {
    fn dim(&self) -> usize {
        self.len()
    }

    fn dot(&self, w: &[f64]) -> f64 {
        self.iter().zip(w).map(|(&x, w)| x as f64 * w).sum()
    }

    fn add_scaled_to(&self, w: &mut [f64], scale: f64) {
        for (w, &x) in w.iter_mut().zip(self) {
            *w += scale * x as f64;
        }
    }

    fn squared_norm(&self) -> f64 {
        self.iter().map(|&x| (x as f64) * (x as f64)).sum()
    }

    fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    fn is_zero(&self) -> bool {
        self.iter().all(|&x| x == 0.0)
    }
}
