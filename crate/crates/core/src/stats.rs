//! Descriptive image statistics per language, age range and gender.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{AgeRange, Corpus, Gender, ImageSource, Language, Profile};

/// Mean and population standard deviation; both absent for an empty sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> MeanStd {
        if values.is_empty() {
            return MeanStd::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        MeanStd {
            mean: Some(mean),
            std: Some(var.sqrt()),
        }
    }

    /// `304 (±340)`, rounded to integers; `-` when absent.
    pub fn render(&self) -> String {
        match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{m:.0} (±{s:.0})"),
            _ => "-".to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: String,
    pub profiles: usize,
    pub by_profile: MeanStd,
    pub in_tweets: MeanStd,
    pub in_retweets: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub language: Language,
    pub profiles: usize,
    pub tweeted_images: usize,
    pub retweeted_images: usize,
    pub total_images: usize,
    pub profiles_without_images: usize,
    pub overall: GroupStats,
    pub by_age: Vec<GroupStats>,
    pub by_gender: Vec<GroupStats>,
}

fn group_stats<'a>(group: String, corpus: &Corpus, members: impl Iterator<Item = &'a Profile>) -> GroupStats {
    let mut all = Vec::new();
    let mut tweeted = Vec::new();
    let mut retweeted = Vec::new();
    for p in members {
        let (mut t, mut r) = (0usize, 0usize);
        for img in corpus.images_of(p) {
            match img.source {
                ImageSource::Tweeted => t += 1,
                ImageSource::Retweeted => r += 1,
            }
        }
        all.push((t + r) as f64);
        tweeted.push(t as f64);
        retweeted.push(r as f64);
    }
    GroupStats {
        group,
        profiles: all.len(),
        by_profile: MeanStd::of(&all),
        in_tweets: MeanStd::of(&tweeted),
        in_retweets: MeanStd::of(&retweeted),
    }
}

pub fn corpus_stats(corpus: &Corpus) -> StatsReport {
    let profiles = corpus.profiles();
    let tweeted = corpus
        .images()
        .iter()
        .filter(|i| i.source == ImageSource::Tweeted)
        .count();
    let total = corpus.images().len();
    let by_age = AgeRange::ALL
        .iter()
        .map(|&a| group_stats(a.to_string(), corpus, profiles.iter().filter(move |p| p.age == a)))
        .collect();
    let by_gender = Gender::ALL
        .iter()
        .map(|&g| group_stats(g.to_string(), corpus, profiles.iter().filter(move |p| p.gender == g)))
        .collect();
    StatsReport {
        language: corpus.language(),
        profiles: profiles.len(),
        tweeted_images: tweeted,
        retweeted_images: total - tweeted,
        total_images: total,
        profiles_without_images: profiles.iter().filter(|p| p.images.is_empty()).count(),
        overall: group_stats("all".into(), corpus, profiles.iter()),
        by_age,
        by_gender,
    }
}

impl StatsReport {
    /// General, per-age and per-gender tables.
    pub fn to_markdown(&self) -> String {
        let lang = self.language.as_str();
        let mut s = String::new();
        let _ = writeln!(s, "### General statistics ({lang})\n");
        let _ = writeln!(s, "| | {lang} |");
        let _ = writeln!(s, "|---|---|");
        let _ = writeln!(s, "| # Profiles used | {} |", self.profiles);
        let _ = writeln!(s, "| Images tweeted | {} |", self.tweeted_images);
        let _ = writeln!(s, "| Images retweeted | {} |", self.retweeted_images);
        let _ = writeln!(s, "| Average images (σ) by profile | {} |", self.overall.by_profile.render());
        let _ = writeln!(s, "| Average images (σ) in tweet set | {} |", self.overall.in_tweets.render());
        let _ = writeln!(s, "| Average images (σ) in retweet set | {} |", self.overall.in_retweets.render());
        if self.profiles_without_images > 0 {
            let _ = writeln!(s, "\nProfiles without images: {}", self.profiles_without_images);
        }
        for (title, key, rows) in [
            ("Images by age range", "ages", &self.by_age),
            ("Images by gender", "gender", &self.by_gender),
        ] {
            let _ = writeln!(s, "\n### {title} ({lang})\n");
            let _ = writeln!(s, "| {key} | # | by profile | in tweets | in retweets |");
            let _ = writeln!(s, "|---|---|---|---|---|");
            for g in rows {
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {} |",
                    g.group,
                    g.profiles,
                    g.by_profile.render(),
                    g.in_tweets.render(),
                    g.in_retweets.render()
                );
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{ImageRecord, Profile};

    fn corpus(counts: &[(usize, usize)]) -> Corpus {
        let mut profiles = Vec::new();
        let mut images = Vec::new();
        for (i, &(t, r)) in counts.iter().enumerate() {
            let id = format!("p{i}");
            profiles.push(Profile {
                id: id.clone(),
                language: Language::En,
                gender: Gender::Female,
                age: AgeRange::From35To49,
                tweets: vec![],
                images: vec![],
            });
            for j in 0..t + r {
                images.push(ImageRecord {
                    id: format!("{id}-{j}"),
                    profile_id: id.clone(),
                    source: if j < t { ImageSource::Tweeted } else { ImageSource::Retweeted },
                    path: None,
                });
            }
        }
        Corpus::link(Language::En, profiles, images).unwrap()
    }

    #[test]
    fn population_std() {
        let r = corpus_stats(&corpus(&[(3, 0), (5, 0)]));
        assert_eq!(r.overall.by_profile.mean, Some(4.0));
        assert_eq!(r.overall.by_profile.std, Some(1.0));
    }

    #[test]
    fn source_totals() {
        let r = corpus_stats(&corpus(&[(2, 0)]));
        assert_eq!(r.tweeted_images, 2);
        assert_eq!(r.retweeted_images, 0);
        assert_eq!(r.tweeted_images + r.retweeted_images, r.total_images);
    }

    #[test]
    fn empty_corpus_renders_absent() {
        let c = Corpus::new(Language::En, vec![], vec![]).unwrap();
        let r = corpus_stats(&c);
        assert_eq!(r.total_images, 0);
        assert_eq!(r.overall.by_profile, MeanStd::default());
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["overall"]["by_profile"].get("std").is_none());
        assert!(r.to_markdown().contains("| 18-24 | 0 | - | - | - |"));
    }

    #[test]
    fn markdown_uses_plus_minus_integers() {
        let r = corpus_stats(&corpus(&[(3, 1), (5, 3)]));
        let md = r.to_markdown();
        assert!(md.contains("| Average images (σ) by profile | 6 (±2) |"), "{md}");
    }
}
