//! Corpus data model and ingestion of PAN-style author directories.
//!
//! A corpus directory holds `truth.txt` (`id:::GENDER:::AGERANGE` per line),
//! one `<id>.xml` document per author and an `images.csv` manifest with the
//! header `image_id,profile_id,source,path`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    #[serde(rename = "EN", alias = "en")]
    En,
    #[serde(rename = "SP", alias = "sp")]
    Sp,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::En => "EN",
            Language::Sp => "SP",
        }
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "sp" | "es" => Ok(Language::Sp),
            _ => Err(Error::InvalidInput(format!("unknown language `{s}`"))),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Female, Gender::Male];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }

    /// Case-insensitive; only the full words are accepted.
    pub fn parse(token: &str) -> Option<Gender> {
        match token.to_ascii_lowercase().as_str() {
            "female" => Some(Gender::Female),
            "male" => Some(Gender::Male),
            _ => None,
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The five non-overlapping age ranges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AgeRange {
    #[serde(rename = "18-24")]
    From18To24,
    #[serde(rename = "25-34")]
    From25To34,
    #[serde(rename = "35-49")]
    From35To49,
    #[serde(rename = "50-64")]
    From50To64,
    #[serde(rename = "65-N")]
    From65,
}

impl AgeRange {
    pub const ALL: [AgeRange; 5] = [
        AgeRange::From18To24,
        AgeRange::From25To34,
        AgeRange::From35To49,
        AgeRange::From50To64,
        AgeRange::From65,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgeRange::From18To24 => "18-24",
            AgeRange::From25To34 => "25-34",
            AgeRange::From35To49 => "35-49",
            AgeRange::From50To64 => "50-64",
            AgeRange::From65 => "65-N",
        }
    }

    pub fn parse(token: &str) -> Option<AgeRange> {
        let upper = token.to_ascii_uppercase();
        AgeRange::ALL.into_iter().find(|a| a.as_str() == upper)
    }
}

impl fmt::Display for AgeRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which demographic attribute is being predicted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Age,
    Gender,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Age => "age",
            Task::Gender => "gender",
        }
    }

    /// Every label of the task, in lexicographic order.
    pub fn classes(self) -> Vec<&'static str> {
        match self {
            Task::Age => AgeRange::ALL.iter().map(|a| a.as_str()).collect(),
            Task::Gender => Gender::ALL.iter().map(|g| g.as_str()).collect(),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "age" => Ok(Task::Age),
            "gender" => Ok(Task::Gender),
            _ => Err(Error::InvalidInput(format!("unknown task `{s}`"))),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageSource {
    Tweeted,
    Retweeted,
}

impl ImageSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ImageSource::Tweeted => "tweeted",
            ImageSource::Retweeted => "retweeted",
        }
    }

    /// Manifest token: `tweet` or `retweet`.
    pub fn manifest_token(self) -> &'static str {
        match self {
            ImageSource::Tweeted => "tweet",
            ImageSource::Retweeted => "retweet",
        }
    }

    pub fn from_manifest_token(token: &str) -> Option<ImageSource> {
        match token.trim().to_ascii_lowercase().as_str() {
            "tweet" => Some(ImageSource::Tweeted),
            "retweet" => Some(ImageSource::Retweeted),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub profile_id: String,
    pub gender: Gender,
    pub age: AgeRange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub id: String,
    pub language: Language,
    pub gender: Gender,
    pub age: AgeRange,
    pub tweets: Vec<String>,
    pub images: Vec<String>,
}

impl Profile {
    pub fn label(&self, task: Task) -> &'static str {
        match task {
            Task::Age => self.age.as_str(),
            Task::Gender => self.gender.as_str(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub profile_id: String,
    pub source: ImageSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

/// A fully linked, immutable corpus for one language.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CorpusData", into = "CorpusData")]
pub struct Corpus {
    language: Language,
    profiles: Vec<Profile>,
    images: Vec<ImageRecord>,
    profile_index: HashMap<String, usize>,
    image_index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct CorpusData {
    language: Language,
    profiles: Vec<Profile>,
    images: Vec<ImageRecord>,
}

impl TryFrom<CorpusData> for Corpus {
    type Error = Error;

    fn try_from(data: CorpusData) -> Result<Self> {
        Corpus::new(data.language, data.profiles, data.images)
    }
}

impl From<Corpus> for CorpusData {
    fn from(c: Corpus) -> Self {
        CorpusData {
            language: c.language,
            profiles: c.profiles,
            images: c.images,
        }
    }
}

impl Corpus {
    /// Validates identifiers and cross references.
    pub fn new(language: Language, profiles: Vec<Profile>, images: Vec<ImageRecord>) -> Result<Self> {
        let mut profile_index = HashMap::with_capacity(profiles.len());
        for (i, p) in profiles.iter().enumerate() {
            if profile_index.insert(p.id.clone(), i).is_some() {
                return Err(Error::InvalidCorpus(format!("duplicate profile id `{}`", p.id)));
            }
        }
        let mut image_index = HashMap::with_capacity(images.len());
        for (i, img) in images.iter().enumerate() {
            if image_index.insert(img.id.clone(), i).is_some() {
                return Err(Error::InvalidCorpus(format!("duplicate image_id `{}`", img.id)));
            }
            if !profile_index.contains_key(&img.profile_id) {
                return Err(Error::InvalidCorpus(format!(
                    "dangling profile_id `{}` for image `{}`",
                    img.profile_id, img.id
                )));
            }
        }
        let mut listed = 0usize;
        for p in &profiles {
            for id in &p.images {
                match image_index.get(id) {
                    Some(&i) if images[i].profile_id == p.id => listed += 1,
                    Some(_) => {
                        return Err(Error::InvalidCorpus(format!(
                            "image `{id}` listed by profile `{}` belongs to another profile",
                            p.id
                        )))
                    }
                    None => {
                        return Err(Error::InvalidCorpus(format!(
                            "profile `{}` references unknown image `{id}`",
                            p.id
                        )))
                    }
                }
            }
        }
        if listed != images.len() {
            return Err(Error::InvalidCorpus(
                "every image must be listed exactly once by its owning profile".into(),
            ));
        }
        Ok(Corpus {
            language,
            profiles,
            images,
            profile_index,
            image_index,
        })
    }

    /// Builds a corpus from profiles and image records, filling each
    /// profile's image list from the records (in record order).
    pub fn link(language: Language, mut profiles: Vec<Profile>, images: Vec<ImageRecord>) -> Result<Self> {
        let index: HashMap<&str, usize> = profiles
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.as_str(), i))
            .collect();
        let mut lists: Vec<Vec<String>> = vec![Vec::new(); profiles.len()];
        for img in &images {
            let i = *index.get(img.profile_id.as_str()).ok_or_else(|| {
                Error::InvalidCorpus(format!(
                    "dangling profile_id `{}` for image `{}`",
                    img.profile_id, img.id
                ))
            })?;
            lists[i].push(img.id.clone());
        }
        for (p, list) in profiles.iter_mut().zip(lists) {
            p.images = list;
        }
        Corpus::new(language, profiles, images)
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.profiles
    }

    pub fn images(&self) -> &[ImageRecord] {
        &self.images
    }

    pub fn profile(&self, id: &str) -> Option<&Profile> {
        self.profile_index.get(id).map(|&i| &self.profiles[i])
    }

    pub fn image(&self, id: &str) -> Option<&ImageRecord> {
        self.image_index.get(id).map(|&i| &self.images[i])
    }

    pub fn images_of<'a>(&'a self, profile: &'a Profile) -> impl Iterator<Item = &'a ImageRecord> + 'a {
        profile.images.iter().filter_map(move |id| self.image(id))
    }

    pub fn has_source(&self, source: ImageSource) -> bool {
        self.images.iter().any(|i| i.source == source)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// What happened while loading a corpus directory.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub profiles: usize,
    pub images: usize,
    pub profiles_without_images: Vec<String>,
}

/// Parses `id:::gender:::agerange` lines. Blank lines are skipped but still
/// counted for error line numbers.
pub fn parse_truth_file(text: &str) -> Result<Vec<TruthRecord>> {
    const CTX: &str = "truth file";
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let line_no = n + 1;
        let fields: Vec<&str> = line.split(":::").collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                CTX,
                line_no,
                format!("expected 3 fields, found {}", fields.len()),
            ));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(Error::parse(CTX, line_no, "empty profile id"));
        }
        let gender = Gender::parse(fields[1].trim())
            .ok_or_else(|| Error::parse(CTX, line_no, "unknown gender token"))?;
        let age = AgeRange::parse(fields[2].trim())
            .ok_or_else(|| Error::parse(CTX, line_no, "unknown age range token"))?;
        out.push(TruthRecord {
            profile_id: id.to_string(),
            gender,
            age,
        });
    }
    Ok(out)
}

/// Writes records in the truth-file convention (upper-case gender).
pub fn serialize_truth(records: &[TruthRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&r.profile_id);
        s.push_str(":::");
        s.push_str(&r.gender.as_str().to_ascii_uppercase());
        s.push_str(":::");
        s.push_str(r.age.as_str());
        s.push('\n');
    }
    s
}

/// Extracts the text of every `document` element, verbatim.
pub fn parse_author_xml(text: &str) -> Result<Vec<String>> {
    let doc = roxmltree::Document::parse(text)
        .map_err(|e| Error::parse("author xml", e.pos().row as usize, e.to_string()))?;
    let docs = doc
        .descendants()
        .filter(|n| n.has_tag_name("document"))
        .map(|n| {
            n.descendants()
                .filter(|c| c.is_text())
                .filter_map(|c| c.text())
                .collect::<String>()
        })
        .collect();
    Ok(docs)
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    image_id: String,
    profile_id: String,
    source: String,
    #[serde(default)]
    path: Option<String>,
}

pub fn parse_manifest(text: &str) -> Result<Vec<ImageRecord>> {
    const CTX: &str = "images.csv";
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let expected = ["image_id", "profile_id", "source", "path"];
    if headers.len() < 3 || !headers.iter().zip(expected).all(|(h, e)| h == e) {
        return Err(Error::parse(
            CTX,
            1,
            "header must be `image_id,profile_id,source,path`",
        ));
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<ManifestRow>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::parse(CTX, line, e.to_string()))?;
        let source = ImageSource::from_manifest_token(&row.source).ok_or_else(|| {
            Error::parse(CTX, line, format!("unknown source token `{}`", row.source))
        })?;
        out.push(ImageRecord {
            id: row.image_id,
            profile_id: row.profile_id,
            source,
            path: row.path.filter(|p| !p.is_empty()),
        });
    }
    Ok(out)
}

/// Loads `truth.txt`, the per-author XML files and `images.csv` from `root`.
pub fn load_corpus(root: &Path, language: Language) -> Result<(Corpus, LoadSummary)> {
    let truth = parse_truth_file(&read_to_string(&root.join("truth.txt"))?)?;

    let mut seen = BTreeSet::new();
    for r in &truth {
        if !seen.insert(r.profile_id.as_str()) {
            return Err(Error::InvalidCorpus(format!(
                "duplicate profile id `{}` in truth.txt",
                r.profile_id
            )));
        }
    }

    let profiles = truth
        .par_iter()
        .map(|r| {
            let path = root.join(format!("{}.xml", r.profile_id));
            if !path.is_file() {
                return Err(Error::InvalidCorpus(format!(
                    "author `{}` has no XML file at {}",
                    r.profile_id,
                    path.display()
                )));
            }
            let tweets = parse_author_xml(&read_to_string(&path)?).map_err(|e| match e {
                Error::Parse { line, message, .. } => {
                    Error::parse(path.display().to_string(), line, message)
                }
                other => other,
            })?;
            Ok(Profile {
                id: r.profile_id.clone(),
                language,
                gender: r.gender,
                age: r.age,
                tweets,
                images: Vec::new(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let images = parse_manifest(&read_to_string(&root.join("images.csv"))?)?;
    let corpus = Corpus::link(language, profiles, images)?;
    let profiles_without_images: Vec<String> = corpus
        .profiles()
        .iter()
        .filter(|p| p.images.is_empty())
        .map(|p| p.id.clone())
        .collect();
    if !profiles_without_images.is_empty() {
        log::warn!(
            "{} profile(s) have no images in the manifest",
            profiles_without_images.len()
        );
    }
    let summary = LoadSummary {
        profiles: corpus.profiles().len(),
        images: corpus.images().len(),
        profiles_without_images,
    };
    Ok((corpus, summary))
}
