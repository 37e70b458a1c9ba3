//! Profile corpora: loading, validation, binarization, splitting and summaries.
//!
//! The on-disk format is line-delimited JSON, one profile per line:
//!
//! ```text
//! {"profile_id":"u1","posts":["first post","second post"],"labels":{"neuroticism":{"score":0.2,"level":"high"}}}
//! ```
//!
//! `level` is optional on input and recomputed from `score`; it is always
//! written on output. A post may also be given as an object
//! `{"text": "...", "artificial": true}` to mark injected posts.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: profile `{profile_id}` has no label for {target}")]
    MissingLabel {
        line: usize,
        profile_id: String,
        target: Trait,
    },
    #[error("line {line}: duplicate profile id `{profile_id}`")]
    DuplicateProfile { line: usize, profile_id: String },
    #[error("score {0} is outside [-0.5, 0.5]")]
    ScoreOutOfRange(f64),
    #[error("dataset is empty")]
    Empty,
    #[error("unknown trait `{0}`")]
    UnknownTrait(String),
    #[error("invalid split fraction {0}; expected 0 < fraction < 1")]
    InvalidFraction(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The Big Five personality traits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trait {
    Openness,
    Conscientiousness,
    Extraversion,
    Agreeableness,
    Neuroticism,
}

impl Trait {
    pub const ALL: [Trait; 5] = [
        Trait::Openness,
        Trait::Conscientiousness,
        Trait::Extraversion,
        Trait::Agreeableness,
        Trait::Neuroticism,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Trait::Openness => "openness",
            Trait::Conscientiousness => "conscientiousness",
            Trait::Extraversion => "extraversion",
            Trait::Agreeableness => "agreeableness",
            Trait::Neuroticism => "neuroticism",
        }
    }
}

impl fmt::Display for Trait {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Trait {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Trait::ALL
            .into_iter()
            .find(|t| t.name() == lower || t.name()[..5] == lower)
            .ok_or_else(|| CorpusError::UnknownTrait(s.to_string()))
    }
}

/// Binary trait level. `Low` is class 0, `High` is class 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    High,
}

impl Level {
    pub const BOTH: [Level; 2] = [Level::Low, Level::High];

    pub fn index(self) -> usize {
        match self {
            Level::Low => 0,
            Level::High => 1,
        }
    }

    pub fn from_index(i: usize) -> Level {
        if i == 0 {
            Level::Low
        } else {
            Level::High
        }
    }

    pub fn opposite(self) -> Level {
        match self {
            Level::Low => Level::High,
            Level::High => Level::Low,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Level::Low => "low",
            Level::High => "high",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Maps a raw trait score to a level. Scores strictly above zero are high;
/// zero itself is low.
pub fn binarize_score(score: f64) -> Result<Level, CorpusError> {
    if !(-0.5..=0.5).contains(&score) {
        return Err(CorpusError::ScoreOutOfRange(score));
    }
    Ok(if score > 0.0 { Level::High } else { Level::Low })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Post {
    pub text: String,
    /// Position within the owning profile.
    pub index: usize,
    /// Set on posts injected by enrichment; ignored by every pipeline.
    pub artificial: bool,
}

impl Post {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            index,
            artificial: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraitLabel {
    pub score: f64,
    pub level: Level,
}

impl TraitLabel {
    pub fn from_score(score: f64) -> Result<Self, CorpusError> {
        Ok(Self {
            score,
            level: binarize_score(score)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Profile {
    pub id: String,
    pub posts: Vec<Post>,
    pub labels: BTreeMap<Trait, TraitLabel>,
}

impl Profile {
    /// Builds a profile from raw texts, numbering posts in order.
    pub fn new<S: Into<String>>(id: impl Into<String>, texts: impl IntoIterator<Item = S>) -> Self {
        Self {
            id: id.into(),
            posts: texts
                .into_iter()
                .enumerate()
                .map(|(i, t)| Post::new(i, t))
                .collect(),
            labels: BTreeMap::new(),
        }
    }

    pub fn with_label(mut self, target: Trait, score: f64) -> Result<Self, CorpusError> {
        self.labels.insert(target, TraitLabel::from_score(score)?);
        Ok(self)
    }

    pub fn level(&self, target: Trait) -> Option<Level> {
        self.labels.get(&target).map(|l| l.level)
    }

    /// Renumbers posts so that `index` matches position.
    pub fn reindex(&mut self) {
        for (i, p) in self.posts.iter_mut().enumerate() {
            p.index = i;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Profiles labelled for one target trait.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub target: Trait,
    pub profiles: Vec<Profile>,
}

impl Dataset {
    /// Wraps profiles, checking every one carries a label for `target`.
    pub fn new(split: Split, target: Trait, profiles: Vec<Profile>) -> Result<Self, CorpusError> {
        for (i, p) in profiles.iter().enumerate() {
            if p.level(target).is_none() {
                return Err(CorpusError::MissingLabel {
                    line: i + 1,
                    profile_id: p.id.clone(),
                    target,
                });
            }
        }
        Ok(Self {
            split,
            target,
            profiles,
        })
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Ground-truth level of profile `i` for the dataset's target.
    pub fn gold(&self, i: usize) -> Level {
        self.profiles[i]
            .level(self.target)
            .expect("dataset invariant: every profile is labelled")
    }

    pub fn golds(&self) -> Vec<Level> {
        (0..self.len()).map(|i| self.gold(i)).collect()
    }

    pub fn num_posts(&self) -> usize {
        self.profiles.iter().map(|p| p.posts.len()).sum()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawPost {
    Text(String),
    Annotated {
        text: String,
        #[serde(default)]
        artificial: bool,
    },
}

#[derive(Deserialize)]
struct RawLabel {
    score: f64,
    level: Option<Level>,
}

#[derive(Deserialize)]
struct RawProfile {
    profile_id: String,
    posts: Vec<RawPost>,
    labels: BTreeMap<String, RawLabel>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum OutPost<'a> {
    Text(&'a str),
    Annotated { text: &'a str, artificial: bool },
}

#[derive(Serialize)]
struct OutProfile<'a> {
    profile_id: &'a str,
    posts: Vec<OutPost<'a>>,
    labels: &'a BTreeMap<Trait, TraitLabel>,
}

fn malformed(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Malformed {
        line,
        message: message.into(),
    }
}

fn parse_profile(line_no: usize, line: &str) -> Result<Profile, CorpusError> {
    let raw: RawProfile =
        serde_json::from_str(line).map_err(|e| malformed(line_no, e.to_string()))?;
    if raw.posts.is_empty() {
        return Err(malformed(line_no, "profile has no posts"));
    }
    let mut posts = Vec::with_capacity(raw.posts.len());
    for (index, rp) in raw.posts.into_iter().enumerate() {
        let (text, artificial) = match rp {
            RawPost::Text(t) => (t, false),
            RawPost::Annotated { text, artificial } => (text, artificial),
        };
        if text.trim().is_empty() {
            return Err(malformed(line_no, format!("post {index} is empty")));
        }
        posts.push(Post {
            text,
            index,
            artificial,
        });
    }
    let mut labels = BTreeMap::new();
    for (name, rl) in raw.labels {
        let target: Trait = name
            .parse()
            .map_err(|_| malformed(line_no, format!("unknown trait `{name}`")))?;
        let level = binarize_score(rl.score).map_err(|e| malformed(line_no, e.to_string()))?;
        if let Some(given) = rl.level {
            if given != level {
                return Err(malformed(
                    line_no,
                    format!("level `{given}` disagrees with score {}", rl.score),
                ));
            }
        }
        if labels
            .insert(target, TraitLabel { score: rl.score, level })
            .is_some()
        {
            return Err(malformed(line_no, format!("duplicate label for {target}")));
        }
    }
    Ok(Profile {
        id: raw.profile_id,
        posts,
        labels,
    })
}

/// Reads every profile in a corpus file without requiring any particular label.
pub fn read_profiles(path: impl AsRef<Path>) -> Result<Vec<Profile>, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut seen = HashSet::new();
    let mut profiles = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let profile = parse_profile(line_no, &line)?;
        if !seen.insert(profile.id.clone()) {
            return Err(CorpusError::DuplicateProfile {
                line: line_no,
                profile_id: profile.id,
            });
        }
        profiles.push(profile);
    }
    Ok(profiles)
}

/// Loads a corpus file as a dataset for `target`.
pub fn load_corpus(
    path: impl AsRef<Path>,
    target: Trait,
    split: Split,
) -> Result<Dataset, CorpusError> {
    let reader = BufReader::new(File::open(path)?);
    let mut seen = HashSet::new();
    let mut profiles = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let profile = parse_profile(line_no, &line)?;
        if profile.level(target).is_none() {
            return Err(CorpusError::MissingLabel {
                line: line_no,
                profile_id: profile.id,
                target,
            });
        }
        if !seen.insert(profile.id.clone()) {
            return Err(CorpusError::DuplicateProfile {
                line: line_no,
                profile_id: profile.id,
            });
        }
        profiles.push(profile);
    }
    Ok(Dataset {
        split,
        target,
        profiles,
    })
}

/// Serializes one profile as a canonical corpus line (no trailing newline).
pub fn profile_to_line(profile: &Profile) -> String {
    let out = OutProfile {
        profile_id: &profile.id,
        posts: profile
            .posts
            .iter()
            .map(|p| {
                if p.artificial {
                    OutPost::Annotated {
                        text: &p.text,
                        artificial: true,
                    }
                } else {
                    OutPost::Text(&p.text)
                }
            })
            .collect(),
        labels: &profile.labels,
    };
    serde_json::to_string(&out).expect("profile serialization cannot fail")
}

pub fn write_profiles<'a, W: Write>(
    mut writer: W,
    profiles: impl IntoIterator<Item = &'a Profile>,
) -> std::io::Result<()> {
    for p in profiles {
        writeln!(writer, "{}", profile_to_line(p))?;
    }
    writer.flush()
}

pub fn save_corpus(path: impl AsRef<Path>, profiles: &[Profile]) -> std::io::Result<()> {
    let file = File::create(path)?;
    write_profiles(std::io::BufWriter::new(file), profiles)
}

/// Number of validation profiles drawn from a class of `class_count` members.
///
/// The rounded share is clamped to `[1, n - 1]` for classes with at least two
/// members so neither split loses the class; singleton classes stay in train.
pub fn valid_count(class_count: usize, valid_fraction: f64) -> usize {
    match class_count {
        0 | 1 => 0,
        n => ((n as f64 * valid_fraction).round() as usize).clamp(1, n - 1),
    }
}

/// Class-stratified train/validation split, deterministic in `seed`.
/// Both outputs keep the original profile order.
pub fn stratified_split(
    dataset: &Dataset,
    valid_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset), CorpusError> {
    if !(valid_fraction > 0.0 && valid_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(valid_fraction));
    }
    if dataset.is_empty() {
        return Err(CorpusError::Empty);
    }
    let mut in_valid = vec![false; dataset.len()];
    for level in Level::BOTH {
        let mut members: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.gold(i) == level)
            .collect();
        let k = valid_count(members.len(), valid_fraction);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((level.index() as u64) << 32));
        members.shuffle(&mut rng);
        for &i in &members[..k] {
            in_valid[i] = true;
        }
    }
    let pick = |want: bool| -> Vec<Profile> {
        dataset
            .profiles
            .iter()
            .zip(&in_valid)
            .filter(|(_, &v)| v == want)
            .map(|(p, _)| p.clone())
            .collect()
    };
    Ok((
        Dataset {
            split: Split::Train,
            target: dataset.target,
            profiles: pick(false),
        },
        Dataset {
            split: Split::Valid,
            target: dataset.target,
            profiles: pick(true),
        },
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusStats {
    pub target: Trait,
    pub high: usize,
    pub low: usize,
    pub profiles: usize,
    pub posts: usize,
    pub mean_posts_per_profile: f64,
}

pub fn corpus_stats(dataset: &Dataset) -> CorpusStats {
    let high = dataset
        .golds()
        .into_iter()
        .filter(|&l| l == Level::High)
        .count();
    let posts = dataset.num_posts();
    CorpusStats {
        target: dataset.target,
        high,
        low: dataset.len() - high,
        profiles: dataset.len(),
        posts,
        mean_posts_per_profile: if dataset.is_empty() {
            0.0
        } else {
            posts as f64 / dataset.len() as f64
        },
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} profiles ({} high / {} low), {} posts, {:.1} posts/profile",
            self.target, self.profiles, self.high, self.low, self.posts, self.mean_posts_per_profile
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn labelled(n_high: usize, n_low: usize) -> Dataset {
        let mut profiles = Vec::new();
        for i in 0..n_high {
            profiles.push(
                Profile::new(format!("h{i}"), ["x"])
                    .with_label(Trait::Neuroticism, 0.3)
                    .unwrap(),
            );
        }
        for i in 0..n_low {
            profiles.push(
                Profile::new(format!("l{i}"), ["x"])
                    .with_label(Trait::Neuroticism, -0.3)
                    .unwrap(),
            );
        }
        Dataset::new(Split::Train, Trait::Neuroticism, profiles).unwrap()
    }

    #[test]
    fn binarize_examples() {
        assert_eq!(binarize_score(0.25).unwrap(), Level::High);
        assert_eq!(binarize_score(-0.25).unwrap(), Level::Low);
        assert_eq!(binarize_score(0.0).unwrap(), Level::Low);
        assert!(binarize_score(0.51).is_err());
        assert!(binarize_score(f64::NAN).is_err());
    }

    #[test]
    fn loads_one_profile_in_order() {
        let f = write_tmp(
            "{\"profile_id\":\"a\",\"posts\":[\"one\",\"two\",\"three\"],\"labels\":{\"extraversion\":{\"score\":0.1}}}\n\n",
        );
        let ds = load_corpus(f.path(), Trait::Extraversion, Split::Test).unwrap();
        assert_eq!(ds.len(), 1);
        let texts: Vec<_> = ds.profiles[0].posts.iter().map(|p| p.text.as_str()).collect();
        assert_eq!(texts, ["one", "two", "three"]);
        assert_eq!(ds.gold(0), Level::High);
    }

    #[test]
    fn missing_labels_key_names_line_one() {
        let f = write_tmp("{\"profile_id\":\"a\",\"posts\":[\"one\"]}\n");
        let err = load_corpus(f.path(), Trait::Extraversion, Split::Test).unwrap_err();
        assert!(matches!(err, CorpusError::Malformed { line: 1, .. }), "{err}");
        assert!(err.to_string().starts_with("line 1"));
    }

    #[test]
    fn missing_trait_label_and_duplicates_rejected() {
        let f = write_tmp(
            "{\"profile_id\":\"a\",\"posts\":[\"one\"],\"labels\":{\"openness\":{\"score\":0.1}}}\n",
        );
        assert!(matches!(
            load_corpus(f.path(), Trait::Extraversion, Split::Test),
            Err(CorpusError::MissingLabel { line: 1, .. })
        ));
        let line = "{\"profile_id\":\"a\",\"posts\":[\"one\"],\"labels\":{\"openness\":{\"score\":0.1}}}\n";
        let f = write_tmp(&format!("{line}{line}"));
        assert!(matches!(
            load_corpus(f.path(), Trait::Openness, Split::Test),
            Err(CorpusError::DuplicateProfile { line: 2, .. })
        ));
    }

    #[test]
    fn rejects_blank_posts_and_inconsistent_level() {
        let f = write_tmp(
            "{\"profile_id\":\"a\",\"posts\":[\"  \"],\"labels\":{\"openness\":{\"score\":0.1}}}\n",
        );
        assert!(load_corpus(f.path(), Trait::Openness, Split::Test).is_err());
        let f = write_tmp(
            "{\"profile_id\":\"a\",\"posts\":[\"x\"],\"labels\":{\"openness\":{\"score\":0.1,\"level\":\"low\"}}}\n",
        );
        assert!(load_corpus(f.path(), Trait::Openness, Split::Test).is_err());
    }

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        let canonical = concat!(
            "{\"profile_id\":\"a\",\"posts\":[\"one\",{\"text\":\"two\",\"artificial\":true}],",
            "\"labels\":{\"openness\":{\"score\":0.1,\"level\":\"high\"},\"neuroticism\":{\"score\":-0.25,\"level\":\"low\"}}}\n",
            "{\"profile_id\":\"b\",\"posts\":[\"x \\\"q\\\" \\u00e9\"],\"labels\":{\"neuroticism\":{\"score\":0.0,\"level\":\"low\"}}}\n",
        );
        let f = write_tmp(canonical);
        let profiles = read_profiles(f.path()).unwrap();
        let mut out = Vec::new();
        write_profiles(&mut out, &profiles).unwrap();
        let reparsed = {
            let g = write_tmp(std::str::from_utf8(&out).unwrap());
            read_profiles(g.path()).unwrap()
        };
        assert_eq!(profiles, reparsed);
        let mut again = Vec::new();
        write_profiles(&mut again, &reparsed).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn split_arithmetic() {
        let ds = labelled(80, 20);
        let (train, valid) = stratified_split(&ds, 0.2, 7).unwrap();
        let s = corpus_stats(&valid);
        assert_eq!((s.high, s.low), (16, 4));
        let t = corpus_stats(&train);
        assert_eq!((t.high, t.low), (64, 16));
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ds = labelled(30, 11);
        let a = stratified_split(&ds, 0.2, 99).unwrap();
        let b = stratified_split(&ds, 0.2, 99).unwrap();
        assert_eq!(a, b);
        let ids: HashSet<_> = a.0.profiles.iter().map(|p| &p.id).collect();
        assert!(a.1.profiles.iter().all(|p| !ids.contains(&p.id)));
        assert_eq!(a.0.len() + a.1.len(), ds.len());
    }

    #[test]
    fn tiny_class_stays_in_train() {
        let ds = labelled(5, 1);
        let (train, valid) = stratified_split(&ds, 0.2, 1).unwrap();
        let v = corpus_stats(&valid);
        assert_eq!((v.high, v.low), (1, 0));
        assert_eq!(corpus_stats(&train).low, 1);
    }

    /// Brute-force oracle: the admissible count closest to `n * f`, rounding
    /// half-way cases up.
    fn oracle_valid_count(n: usize, f: f64) -> usize {
        let target = n as f64 * f;
        (0..=n)
            .filter(|&k| match n {
                0 | 1 => k == 0,
                _ => k >= 1 && k < n,
            })
            .min_by(|&a, &b| {
                let da = (a as f64 - target).abs();
                let db = (b as f64 - target).abs();
                da.partial_cmp(&db).unwrap().then(b.cmp(&a))
            })
            .unwrap()
    }

    #[test]
    fn clamping_rule_matches_enumeration_on_tiny_classes() {
        for n in 0..=12 {
            for step in 1..20 {
                let f = step as f64 / 20.0;
                assert_eq!(valid_count(n, f), oracle_valid_count(n, f), "n={n} f={f}");
                assert!((valid_count(n, f) as f64 - f * n as f64).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn split_rejects_bad_input() {
        let ds = labelled(3, 3);
        assert!(stratified_split(&ds, 0.0, 0).is_err());
        assert!(stratified_split(&ds, 1.0, 0).is_err());
        let empty = Dataset::new(Split::Train, Trait::Neuroticism, vec![]).unwrap();
        assert!(matches!(stratified_split(&empty, 0.2, 0), Err(CorpusError::Empty)));
    }

    #[test]
    fn stats_examples() {
        let profiles = vec![
            Profile::new("a", ["1", "2", "3"]).with_label(Trait::Openness, 0.2).unwrap(),
            Profile::new("b", ["1", "2", "3", "4", "5"])
                .with_label(Trait::Openness, 0.4)
                .unwrap(),
        ];
        let ds = Dataset::new(Split::Test, Trait::Openness, profiles).unwrap();
        let s = corpus_stats(&ds);
        assert_eq!(s.mean_posts_per_profile, 4.0);
        assert_eq!((s.high, s.low), (2, 0));
        assert!(s.to_string().contains("2 high / 0 low"));
        assert!(s.to_string().contains("4.0 posts/profile"));
    }

    #[test]
    fn trait_parsing_accepts_abbreviations() {
        assert_eq!("Neurot".parse::<Trait>().ok(), None);
        assert_eq!("neuro".parse::<Trait>().unwrap(), Trait::Neuroticism);
        assert_eq!("EXTRAVERSION".parse::<Trait>().unwrap(), Trait::Extraversion);
        assert!("age".parse::<Trait>().is_err());
    }
}
