//! Seeded synthetic corpora with tunable class signal in text and images.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Zipf};
use serde::{Deserialize, Serialize};

use crate::corpus::{serialize_truth, AgeRange, Corpus, Gender, ImageRecord, ImageSource, Language, Profile, TruthRecord};
use crate::error::{Error, Result};
use crate::visual::{EmbeddingStore, EmbeddingVector, Layer, CATEGORY_DIM, HIDDEN_DIM};

/// Parameters of a synthetic corpus. Labels are assigned round-robin so
/// every (age, gender) combination is equally frequent when `profiles` is a
/// multiple of `age_classes * gender_classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub language: Language,
    pub profiles: usize,
    /// Number of age ranges used, taken in order from 18-24.
    pub age_classes: usize,
    pub gender_classes: usize,
    pub images_per_profile: usize,
    /// Fraction of images marked as retweeted.
    pub retweet_fraction: f64,
    /// Distance between class means, in units of `spread`.
    pub separation: f64,
    /// Per-coordinate standard deviation of image embeddings.
    pub spread: f64,
    /// Probability that a token is drawn from the author's class vocabulary.
    pub text_signal: f64,
    pub tweets_per_profile: usize,
    pub tokens_per_tweet: usize,
    pub common_vocabulary: usize,
    pub signal_vocabulary: usize,
    /// Also emit softmax1000 scores.
    pub category_scores: bool,
    /// Probability that an image's top category comes from its class set.
    pub category_signal: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            language: Language::En,
            profiles: 40,
            age_classes: 5,
            gender_classes: 2,
            images_per_profile: 20,
            retweet_fraction: 0.5,
            separation: 10.0,
            spread: 1.0,
            text_signal: 0.0,
            tweets_per_profile: 100,
            tokens_per_tweet: 12,
            common_vocabulary: 500,
            signal_vocabulary: 20,
            category_scores: false,
            category_signal: 0.5,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.age_classes == 0 || self.age_classes > AgeRange::ALL.len() {
            return bad("age_classes must be between 1 and 5");
        }
        if self.gender_classes == 0 || self.gender_classes > Gender::ALL.len() {
            return bad("gender_classes must be 1 or 2");
        }
        if self.profiles == 0 {
            return bad("profiles must be positive");
        }
        for (name, p) in [
            ("retweet_fraction", self.retweet_fraction),
            ("text_signal", self.text_signal),
            ("category_signal", self.category_signal),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return bad("separation must be finite and non-negative");
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return bad("spread must be finite and positive");
        }
        if self.common_vocabulary == 0 {
            return bad("common_vocabulary must be positive");
        }
        if self.text_signal > 0.0 && self.signal_vocabulary == 0 {
            return bad("signal_vocabulary must be positive when text_signal > 0");
        }
        if self.age_classes + self.gender_classes > HIDDEN_DIM {
            return bad("too many classes for the embedding dimension");
        }
        Ok(())
    }

    fn age(&self, i: usize) -> AgeRange {
        AgeRange::ALL[i % self.age_classes]
    }

    fn gender(&self, i: usize) -> Gender {
        Gender::ALL[(i / self.age_classes) % self.gender_classes]
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub corpus: Corpus,
    pub embeddings: EmbeddingStore,
}

fn age_index(a: AgeRange) -> usize {
    AgeRange::ALL.iter().position(|&x| x == a).unwrap_or(0)
}

fn gender_index(g: Gender) -> usize {
    Gender::ALL.iter().position(|&x| x == g).unwrap_or(0)
}

fn signal_word(kind: &str, class: usize, k: usize) -> String {
    format!("{kind}{class}w{k}")
}

/// Class means lie on distinct coordinate axes; the scale makes the distance
/// between two age (or gender) means equal `separation * spread`.
pub fn generate_synthetic(spec: &SynthSpec, seed: u64) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.spread).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let zipf = Zipf::new(spec.common_vocabulary as f64, 1.1).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let offset = spec.separation * spec.spread / std::f64::consts::SQRT_2;

    let mut profiles = Vec::with_capacity(spec.profiles);
    let mut images = Vec::new();
    let mut store = EmbeddingStore::new();

    for i in 0..spec.profiles {
        let id = format!("u{i:04}");
        let age = spec.age(i);
        let gender = spec.gender(i);
        let (ai, gi) = (age_index(age), gender_index(gender));

        let mut tweets = Vec::with_capacity(spec.tweets_per_profile);
        for _ in 0..spec.tweets_per_profile {
            let mut tweet = String::new();
            for t in 0..spec.tokens_per_tweet {
                if t > 0 {
                    tweet.push(' ');
                }
                if rng.random_bool(spec.text_signal) {
                    let k = rng.random_range(0..spec.signal_vocabulary);
                    if rng.random_bool(0.5) {
                        tweet.push_str(&signal_word("age", ai, k));
                    } else {
                        tweet.push_str(&signal_word("gen", gi, k));
                    }
                } else {
                    let r = zipf.sample(&mut rng) as usize;
                    let _ = write!(tweet, "tok{r}");
                }
            }
            tweets.push(tweet);
        }

        for j in 0..spec.images_per_profile {
            let image_id = format!("{id}_img{j:03}");
            let source = if rng.random_bool(spec.retweet_fraction) {
                ImageSource::Retweeted
            } else {
                ImageSource::Tweeted
            };
            let mut values: Vec<f32> = (0..HIDDEN_DIM).map(|_| noise.sample(&mut rng) as f32).collect();
            values[ai] += offset as f32;
            values[AgeRange::ALL.len() + gi] += offset as f32;
            store.insert(EmbeddingVector::new(image_id.clone(), Layer::Hidden4096, values)?)?;

            if spec.category_scores {
                let top = if rng.random_bool(spec.category_signal) {
                    if rng.random_bool(0.5) {
                        ai * 10 + rng.random_range(0..10)
                    } else {
                        500 + gi * 10 + rng.random_range(0..10)
                    }
                } else {
                    rng.random_range(0..CATEGORY_DIM)
                };
                let mut scores: Vec<f32> = (0..CATEGORY_DIM).map(|_| rng.random_range(0.0..0.001f32)).collect();
                scores[top] = 0.5;
                let sum: f32 = scores.iter().sum();
                scores.iter_mut().for_each(|s| *s /= sum);
                store.insert(EmbeddingVector::new(image_id.clone(), Layer::Softmax1000, scores)?)?;
            }

            images.push(ImageRecord {
                id: image_id,
                profile_id: id.clone(),
                source,
                path: None,
            });
        }

        profiles.push(Profile {
            id,
            language: spec.language,
            gender,
            age,
            tweets,
            images: Vec::new(),
        });
    }

    let corpus = Corpus::link(spec.language, profiles, images)?;
    Ok(SyntheticData { corpus, embeddings: store })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `truth.txt`, one `<id>.xml` per author, `images.csv` and
/// `embeddings.jsonl` into `dir`, which is created if needed.
pub fn write_synthetic(data: &SyntheticData, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let corpus = &data.corpus;
    let truth: Vec<TruthRecord> = corpus
        .profiles()
        .iter()
        .map(|p| TruthRecord {
            profile_id: p.id.clone(),
            gender: p.gender,
            age: p.age,
        })
        .collect();
    write_file(&dir.join("truth.txt"), &serialize_truth(&truth))?;

    let lang = corpus.language().as_str().to_ascii_lowercase();
    for p in corpus.profiles() {
        let mut xml = format!("<author lang=\"{lang}\">\n<documents>\n");
        for t in &p.tweets {
            let _ = writeln!(xml, "<document><![CDATA[{}]]></document>", t.replace("]]>", "]]]]><![CDATA[>"));
        }
        xml.push_str("</documents>\n</author>\n");
        write_file(&dir.join(format!("{}.xml", p.id)), &xml)?;
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["image_id", "profile_id", "source", "path"])?;
    for img in corpus.images() {
        w.write_record([
            img.id.as_str(),
            img.profile_id.as_str(),
            img.source.manifest_token(),
            img.path.as_deref().unwrap_or(""),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    let manifest = dir.join("images.csv");
    fs::write(&manifest, bytes).map_err(|e| Error::io(&manifest, e))?;

    let emb = dir.join("embeddings.jsonl");
    let file = fs::File::create(&emb).map_err(|e| Error::io(&emb, e))?;
    let mut out = BufWriter::new(file);
    data.embeddings.write_jsonl(&mut out)?;
    out.flush().map_err(|e| Error::io(&emb, e))?;
    Ok(())
}
