//! Artificial posts: generation prompts, response parsing, the single-use
//! pool, dataset enrichment, and a synthetic needle-in-a-haystack corpus.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnet::{LlmClient, LlmError, Prompt, TraitContext};
use crate::corpus::{CorpusError, Dataset, Level, Post, Profile, Split, Trait};

const TOPICS: &str = include_str!("../data/topics.txt");

/// The bundled topic list, in file order.
pub fn default_topics() -> Vec<String> {
    TOPICS.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect()
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("trait context is for {found}, request is for {expected}")]
    ContextMismatch { expected: Trait, found: Trait },
    #[error("response contained no usable posts")]
    NoPosts,
    #[error("pool has {available} unused {target} {level} posts, {needed} needed")]
    PoolExhausted {
        target: Trait,
        level: Level,
        needed: usize,
        available: usize,
    },
    #[error("invalid synthetic corpus spec: {0}")]
    InvalidSpec(String),
    #[error("pool line {line}: {message}")]
    MalformedPool { line: usize, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

const COUNT_WORDS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
];

/// `10` → `"ten"`; numbers above twenty stay numeric.
pub fn count_word(n: usize) -> String {
    COUNT_WORDS.get(n).map_or_else(|| n.to_string(), |w| w.to_string())
}

/// Inverse of [`count_word`]; also accepts digits.
pub fn parse_count_word(word: &str) -> Option<usize> {
    let w = word.trim().to_ascii_lowercase();
    COUNT_WORDS.iter().position(|c| *c == w).or_else(|| w.parse().ok())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub target: Trait,
    pub level: Level,
    pub topic: String,
    pub count: usize,
}

impl GenerationRequest {
    pub fn new(target: Trait, level: Level, topic: impl Into<String>) -> Self {
        Self {
            target,
            level,
            topic: topic.into(),
            count: 10,
        }
    }
}

/// Trait recall with the level's items, then the generation instruction.
pub fn build_generation_prompt(
    req: &GenerationRequest,
    ctx: &TraitContext,
    topics: &[String],
) -> Result<Prompt, AugmentError> {
    if ctx.target != req.target {
        return Err(AugmentError::ContextMismatch {
            expected: req.target,
            found: ctx.target,
        });
    }
    if !topics.contains(&req.topic) {
        return Err(AugmentError::UnknownTopic(req.topic.clone()));
    }
    let t = req.target.name();
    let level = req.level.name();
    let user = format!(
        "Recall the personality trait {t}.\n\
         A person with a {level} level of {t} may see themselves as someone who {items}.\n\
         Generate {count} tweets that are likely written by a person with a {level} level of {t}. \
         Do not use emojis or hashtags. Try to include the topic {topic}.",
        items = ctx.item_phrase(req.level),
        count = count_word(req.count),
        topic = req.topic,
    );
    Ok(Prompt {
        system: String::new(),
        user,
    })
}

/// Strips `1.`, `2)`, `-`, `*` or `•` list markers; `None` when the line has none.
fn strip_list_marker(line: &str) -> Option<&str> {
    let digits = line.len() - line.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 {
        let rest = &line[digits..];
        return rest.strip_prefix(['.', ')', ':']).map(str::trim_start);
    }
    ["- ", "* ", "• "].iter().find_map(|m| line.strip_prefix(m)).map(str::trim_start)
}

fn strip_quotes(s: &str) -> &str {
    let quotes: &[char] = &['"', '\'', '“', '”', '‘', '’'];
    let t = s.trim();
    let inner = t.trim_start_matches(quotes).trim_end_matches(quotes);
    if inner.len() + 2 <= t.len() || inner.len() == t.len() {
        inner.trim()
    } else {
        t
    }
}

/// Splits a generation response into posts. When any line is a list item
/// only list items are kept (dropping chatty preambles); otherwise every
/// non-empty line is a post. At most `expected` posts are returned.
pub fn parse_generated_posts(response: &str, expected: usize) -> Result<Vec<String>, AugmentError> {
    let lines: Vec<&str> = response.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
    let listed: Vec<&str> = lines.iter().filter_map(|l| strip_list_marker(l)).collect();
    let raw = if listed.is_empty() { lines } else { listed };
    let mut posts: Vec<String> = raw
        .into_iter()
        .map(strip_quotes)
        .filter(|p| !p.is_empty())
        .map(String::from)
        .collect();
    if posts.is_empty() {
        return Err(AugmentError::NoPosts);
    }
    if posts.len() < expected {
        warn!("expected {expected} generated posts, parsed {}", posts.len());
    }
    posts.truncate(expected);
    Ok(posts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    #[serde(rename = "trait")]
    pub target: Trait,
    pub level: Level,
    pub topic: String,
    pub text: String,
    pub used: bool,
}

/// Generated posts; each may be injected at most once.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ArtificialPool {
    pub entries: Vec<PoolEntry>,
}

impl ArtificialPool {
    pub fn add(&mut self, target: Trait, level: Level, topic: &str, texts: impl IntoIterator<Item = String>) {
        self.entries.extend(texts.into_iter().map(|text| PoolEntry {
            target,
            level,
            topic: topic.to_string(),
            text,
            used: false,
        }));
    }

    fn unused_indices(&self, target: Trait, level: Level) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.used && e.target == target && e.level == level)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn unused(&self, target: Trait, level: Level) -> usize {
        self.unused_indices(target, level).len()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, AugmentError> {
        let mut entries = Vec::new();
        for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(|e| AugmentError::MalformedPool {
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Self { entries })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AugmentError> {
        let mut out = BufWriter::new(File::create(path)?);
        for e in &self.entries {
            serde_json::to_writer(&mut out, e).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Requests `rounds` generations per (level, topic) from `client` and pools
/// the parsed posts.
pub fn generate_pool(
    client: &LlmClient,
    ctx: &TraitContext,
    topics: &[String],
    rounds: usize,
    count: usize,
    max_tokens: u32,
) -> Result<ArtificialPool, AugmentError> {
    let mut pool = ArtificialPool::default();
    for level in Level::BOTH {
        for topic in topics {
            for _ in 0..rounds {
                let req = GenerationRequest {
                    count,
                    ..GenerationRequest::new(ctx.target, level, topic.clone())
                };
                let prompt = build_generation_prompt(&req, ctx, topics)?;
                let response = client.complete(&prompt, Some(max_tokens))?;
                match parse_generated_posts(&response, count) {
                    Ok(posts) => pool.add(ctx.target, level, topic, posts),
                    Err(AugmentError::NoPosts) => warn!("empty generation for {level} / {topic}"),
                    Err(e) => return Err(e),
                }
            }
        }
    }
    Ok(pool)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnrichConfig {
    pub per_class_cap: usize,
    pub per_profile: usize,
    pub seed: u64,
}

impl Default for EnrichConfig {
    fn default() -> Self {
        Self {
            per_class_cap: 15,
            per_profile: 5,
            seed: 0,
        }
    }
}

/// Keeps up to `per_class_cap` random profiles per class and inserts
/// `per_profile` unused level-matched pool posts into each at random
/// positions. The pool is checked before anything is consumed, so a failed
/// call leaves it untouched.
pub fn enrich_dataset(dataset: &Dataset, pool: &mut ArtificialPool, config: &EnrichConfig) -> Result<Dataset, AugmentError> {
    let target = dataset.target;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut keep = vec![false; dataset.len()];
    let mut kept_per_level = [0usize; 2];
    for level in Level::BOTH {
        let members: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.gold(i) == level).collect();
        let chosen: Vec<usize> = if members.len() > config.per_class_cap {
            members.choose_multiple(&mut rng, config.per_class_cap).copied().collect()
        } else {
            members
        };
        kept_per_level[level.index()] = chosen.len();
        for i in chosen {
            keep[i] = true;
        }
    }
    for level in Level::BOTH {
        let needed = kept_per_level[level.index()] * config.per_profile;
        let available = pool.unused(target, level);
        if needed > available {
            return Err(AugmentError::PoolExhausted {
                target,
                level,
                needed,
                available,
            });
        }
    }

    let mut profiles = Vec::with_capacity(kept_per_level.iter().sum());
    for (i, profile) in dataset.profiles.iter().enumerate() {
        if !keep[i] {
            continue;
        }
        let level = dataset.gold(i);
        let mut available = pool.unused_indices(target, level);
        let mut enriched = profile.clone();
        for _ in 0..config.per_profile {
            let pick = available.swap_remove(rng.gen_range(0..available.len()));
            let entry = &mut pool.entries[pick];
            entry.used = true;
            let at = rng.gen_range(0..=enriched.posts.len());
            enriched.posts.insert(
                at,
                Post {
                    text: entry.text.clone(),
                    index: 0,
                    artificial: true,
                },
            );
        }
        enriched.reindex();
        profiles.push(enriched);
    }
    Ok(Dataset {
        split: dataset.split,
        target,
        profiles,
    })
}

const DEFAULT_FILLER: &str = "the a of and to in is it for on that this with was at just my your so but day time \
    today really got new all out about like some more get going think one back now still know see week night \
    morning work lunch coffee bus train weather rain sun city street phone email news game show film book \
    music song car house room door table window paper shop market bread water tea walk dog cat garden";

const DEFAULT_HIGH_CUES: [&str; 6] = ["party", "friends", "concert", "crowd", "dancing", "festival"];
const DEFAULT_LOW_CUES: [&str; 6] = ["alone", "quiet", "reading", "solitude", "silence", "indoors"];

/// Shape of a synthetic corpus. Needle posts carry the marker of the
/// profile's level plus one level cue word; distractor posts are filler
/// salted with the opposite marker; the rest is plain filler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub target: Trait,
    pub split: Split,
    pub id_prefix: String,
    pub profiles_per_class: usize,
    pub posts_per_profile: usize,
    pub needles: usize,
    pub distractors: usize,
    pub words_per_post: usize,
    pub high_marker: String,
    pub low_marker: String,
    pub high_cues: Vec<String>,
    pub low_cues: Vec<String>,
    pub filler: Vec<String>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            target: Trait::Extraversion,
            split: Split::Train,
            id_prefix: "synth".into(),
            profiles_per_class: 50,
            posts_per_profile: 40,
            needles: 3,
            distractors: 0,
            words_per_post: 8,
            high_marker: crate::cnet::DEFAULT_HIGH_MARKER.into(),
            low_marker: crate::cnet::DEFAULT_LOW_MARKER.into(),
            high_cues: DEFAULT_HIGH_CUES.iter().map(|s| s.to_string()).collect(),
            low_cues: DEFAULT_LOW_CUES.iter().map(|s| s.to_string()).collect(),
            filler: DEFAULT_FILLER.split_whitespace().map(String::from).collect(),
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::InvalidSpec(m));
        if self.needles + self.distractors > self.posts_per_profile {
            return bad(format!(
                "{} needles + {} distractors exceed {} posts",
                self.needles, self.distractors, self.posts_per_profile
            ));
        }
        if self.posts_per_profile == 0 || self.profiles_per_class == 0 {
            return bad("profiles and posts must be non-empty".into());
        }
        if self.words_per_post < 2 {
            return bad("words_per_post must be at least 2".into());
        }
        if self.filler.is_empty() || self.high_cues.is_empty() || self.low_cues.is_empty() {
            return bad("filler and cue vocabularies must be non-empty".into());
        }
        if self.high_marker == self.low_marker {
            return bad("markers must differ".into());
        }
        let reserved = [&self.high_marker, &self.low_marker];
        if self.filler.iter().any(|w| reserved.contains(&w)) {
            return bad("filler vocabulary contains a marker".into());
        }
        Ok(())
    }

    pub fn marker(&self, level: Level) -> &str {
        match level {
            Level::High => &self.high_marker,
            Level::Low => &self.low_marker,
        }
    }

    fn cues(&self, level: Level) -> &[String] {
        match level {
            Level::High => &self.high_cues,
            Level::Low => &self.low_cues,
        }
    }
}

fn filler_words<R: Rng>(spec: &SynthSpec, n: usize, rng: &mut R) -> Vec<String> {
    (0..n).map(|_| spec.filler.choose(rng).expect("validated").clone()).collect()
}

/// Builds a labelled corpus whose profiles interleave the two classes.
pub fn generate_synthetic_corpus(spec: &SynthSpec) -> Result<Dataset, AugmentError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut profiles = Vec::with_capacity(2 * spec.profiles_per_class);
    for i in 0..spec.profiles_per_class {
        for level in [Level::High, Level::Low] {
            let mut texts: Vec<String> = Vec::with_capacity(spec.posts_per_profile);
            for _ in 0..spec.needles {
                let mut words = filler_words(spec, spec.words_per_post - 2, &mut rng);
                words.insert(rng.gen_range(0..=words.len()), spec.cues(level).choose(&mut rng).expect("validated").clone());
                words.insert(rng.gen_range(0..=words.len()), spec.marker(level).to_string());
                texts.push(words.join(" "));
            }
            for _ in 0..spec.distractors {
                let mut words = filler_words(spec, spec.words_per_post - 1, &mut rng);
                words.insert(rng.gen_range(0..=words.len()), spec.marker(level.opposite()).to_string());
                texts.push(words.join(" "));
            }
            while texts.len() < spec.posts_per_profile {
                texts.push(filler_words(spec, spec.words_per_post, &mut rng).join(" "));
            }
            texts.shuffle(&mut rng);
            let magnitude = rng.gen_range(0.05..=0.5);
            let score = if level == Level::High { magnitude } else { -magnitude };
            let id = format!("{}-{}-{:04}", spec.id_prefix, &level.name()[..1], i);
            profiles.push(Profile::new(id, texts).with_label(spec.target, score)?);
        }
    }
    Ok(Dataset::new(spec.split, spec.target, profiles)?)
}

/// Positions of posts containing the marker of the profile's own level.
pub fn needle_indices(profile: &Profile, level: Level, spec: &SynthSpec) -> Vec<usize> {
    let marker = spec.marker(level);
    profile
        .posts
        .iter()
        .enumerate()
        .filter(|(_, p)| p.text.split_whitespace().any(|w| w == marker))
        .map(|(i, _)| i)
        .collect()
}

/// Fraction of a profile's needles found among `selected`.
pub fn needle_recall(profile: &Profile, level: Level, spec: &SynthSpec, selected: &[usize]) -> f64 {
    let needles = needle_indices(profile, level, spec);
    if needles.is_empty() {
        return 1.0;
    }
    needles.iter().filter(|i| selected.contains(i)).count() as f64 / needles.len() as f64
}

/// Count of artificial posts per profile id; handy for audits.
pub fn artificial_counts(dataset: &Dataset) -> BTreeMap<String, usize> {
    dataset
        .profiles
        .iter()
        .map(|p| (p.id.clone(), p.posts.iter().filter(|q| q.artificial).count()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnet::{mock_classify, LlmEndpoint, MockMarkers, PromptSpec};

    fn ctx() -> TraitContext {
        TraitContext::default_for(Trait::Extraversion)
    }

    #[test]
    fn generation_prompt_fields() {
        let req = GenerationRequest::new(Trait::Extraversion, Level::High, "Music");
        let p = build_generation_prompt(&req, &ctx(), &default_topics()).unwrap();
        assert!(p.user.contains("high level of extraversion"));
        assert!(p.user.contains("the topic Music."));
        assert!(p.user.contains("Generate ten tweets"));
        assert!(p.user.contains("Do not use emojis or hashtags."));
        assert!(p.user.contains(&ctx().item_phrase(Level::High)));
    }

    #[test]
    fn low_request_uses_low_items() {
        let req = GenerationRequest::new(Trait::Extraversion, Level::Low, "Sports");
        let p = build_generation_prompt(&req, &ctx(), &default_topics()).unwrap();
        assert!(p.user.contains(&ctx().item_phrase(Level::Low)));
        assert!(!p.user.contains(&ctx().item_phrase(Level::High)));
    }

    #[test]
    fn generation_prompt_errors() {
        let req = GenerationRequest::new(Trait::Extraversion, Level::Low, "Gardening");
        assert!(matches!(
            build_generation_prompt(&req, &ctx(), &default_topics()),
            Err(AugmentError::UnknownTopic(_))
        ));
        let req = GenerationRequest::new(Trait::Openness, Level::Low, "Music");
        assert!(matches!(
            build_generation_prompt(&req, &ctx(), &default_topics()),
            Err(AugmentError::ContextMismatch { .. })
        ));
    }

    #[test]
    fn twelve_topics() {
        let t = default_topics();
        assert_eq!(t.len(), 12);
        assert_eq!(t[5], "Film, TV & Video");
    }

    #[test]
    fn count_words() {
        assert_eq!(count_word(10), "ten");
        assert_eq!(count_word(25), "25");
        for n in 0..30 {
            assert_eq!(parse_count_word(&count_word(n)), Some(n));
        }
        assert_eq!(parse_count_word("Ten"), Some(10));
        assert_eq!(parse_count_word("many"), None);
    }

    #[test]
    fn parse_examples() {
        assert_eq!(parse_generated_posts("1. A\n2. B", 10).unwrap(), vec!["A", "B"]);
        assert_eq!(parse_generated_posts("first\n\nsecond\n", 10).unwrap(), vec!["first", "second"]);
        assert!(matches!(parse_generated_posts("  \n ", 10), Err(AugmentError::NoPosts)));
        let chatty = "Sure! Here are some tweets:\n\n1. \"Loving this gig\"\n2) Out with friends\n3. third";
        assert_eq!(
            parse_generated_posts(chatty, 2).unwrap(),
            vec!["Loving this gig", "Out with friends"]
        );
    }

    #[test]
    fn mock_generation_round_trip() {
        let client = LlmClient::connect(LlmEndpoint::mock()).unwrap();
        let topics = vec!["Music".to_string(), "Family".to_string()];
        let pool = generate_pool(&client, &ctx(), &topics, 1, 10, 512).unwrap();
        assert_eq!(pool.entries.len(), 40);
        assert_eq!(pool.unused(Trait::Extraversion, Level::High), 20);
        assert!(pool
            .entries
            .iter()
            .all(|e| e.text.contains(if e.level == Level::High { "hi-marker" } else { "lo-marker" })));
    }

    fn pool(n_each: usize) -> ArtificialPool {
        let mut pool = ArtificialPool::default();
        for level in Level::BOTH {
            pool.add(
                Trait::Extraversion,
                level,
                "Music",
                (0..n_each).map(|i| format!("{level} generated {i}")),
            );
        }
        pool
    }

    fn dataset(high: usize, low: usize) -> Dataset {
        let profiles = (0..high + low)
            .map(|i| {
                Profile::new(format!("u{i}"), (0..20).map(|j| format!("real {i} {j}")))
                    .with_label(Trait::Extraversion, if i < high { 0.2 } else { -0.2 })
                    .unwrap()
            })
            .collect();
        Dataset::new(Split::Valid, Trait::Extraversion, profiles).unwrap()
    }

    #[test]
    fn small_class_kept_whole() {
        let mut p = pool(100);
        let out = enrich_dataset(&dataset(3, 2), &mut p, &EnrichConfig::default()).unwrap();
        assert_eq!(out.len(), 5);
        for (i, prof) in out.profiles.iter().enumerate() {
            assert_eq!(prof.posts.len(), 25);
            let level = out.gold(i);
            for post in prof.posts.iter().filter(|q| q.artificial) {
                assert!(post.text.starts_with(level.name()));
            }
            assert!(prof.posts.iter().enumerate().all(|(j, q)| q.index == j));
        }
    }

    #[test]
    fn deterministic_and_exhaustion_checked_upfront() {
        let ds = dataset(4, 4);
        let run = || {
            let mut p = pool(40);
            enrich_dataset(&ds, &mut p, &EnrichConfig::default()).unwrap()
        };
        assert_eq!(run(), run());
        let mut small = pool(19);
        let before = small.clone();
        assert!(matches!(
            enrich_dataset(&ds, &mut small, &EnrichConfig::default()),
            Err(AugmentError::PoolExhausted { needed: 20, available: 19, .. })
        ));
        assert_eq!(small, before);
    }

    #[test]
    fn about_five_percent_artificial() {
        let frac = 5.0 / (92.0 + 5.0);
        assert!((0.04..0.06).contains(&frac));
    }

    fn spec() -> SynthSpec {
        SynthSpec {
            profiles_per_class: 5,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn synthetic_needle_counts() {
        let ds = generate_synthetic_corpus(&spec()).unwrap();
        assert_eq!(ds.len(), 10);
        for (i, p) in ds.profiles.iter().enumerate() {
            assert_eq!(p.posts.len(), 40);
            assert_eq!(needle_indices(p, ds.gold(i), &spec()).len(), 3);
        }
        let none = SynthSpec {
            needles: 0,
            ..spec()
        };
        let ds = generate_synthetic_corpus(&none).unwrap();
        assert!(ds
            .profiles
            .iter()
            .flat_map(|p| &p.posts)
            .all(|q| !q.text.contains("marker")));
    }

    #[test]
    fn synthetic_is_deterministic_and_validated() {
        assert_eq!(generate_synthetic_corpus(&spec()).unwrap(), generate_synthetic_corpus(&spec()).unwrap());
        let bad = SynthSpec {
            needles: 30,
            distractors: 20,
            ..spec()
        };
        assert!(matches!(generate_synthetic_corpus(&bad), Err(AugmentError::InvalidSpec(_))));
    }

    #[test]
    fn distractors_flip_the_mock_on_all_posts() {
        let s = SynthSpec {
            distractors: 6,
            ..spec()
        };
        let ds = generate_synthetic_corpus(&s).unwrap();
        let markers = MockMarkers::default();
        let classify = |posts: Vec<&Post>| {
            let p = crate::cnet::build_prompt(&PromptSpec::default(), &ctx(), &posts).unwrap();
            mock_classify(&p.to_raw(), &markers).unwrap()
        };
        for (i, p) in ds.profiles.iter().enumerate() {
            let gold = ds.gold(i);
            // 3 own markers against 6 opposing ones
            assert_eq!(classify(p.posts.iter().collect()), gold.opposite());
            let needles = needle_indices(p, gold, &s);
            assert_eq!(classify(needles.iter().map(|&j| &p.posts[j]).collect()), gold);
        }
    }
}
