use proptest::prelude::*;
use relprof_core::augmentation::parse_generated_posts;
use relprof_core::baselines::majority_vote;
use relprof_core::cnet::parse_level;
use relprof_core::corpus::{Dataset, Level, Post, Profile, Split, Trait};
use relprof_core::evaluation::ConfusionTable;
use relprof_core::npmi::{rank_descending, NpmiConfig, NpmiTable};
use relprof_core::policy::{featurize, rank_top_n, FeaturizerConfig, LinearPolicy, SelectionPolicy};

const WORDS: &[&str] = &["gym", "party", "book", "quiet", "tea", "crowd", "alone", "music", "rain", "friends"];

fn post_text() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..6).prop_map(|w| w.join(" "))
}

/// Profiles with non-zero scores so negation flips every label.
fn labelled_profiles() -> impl Strategy<Value = Vec<(Vec<String>, bool)>> {
    prop::collection::vec((prop::collection::vec(post_text(), 1..5), any::<bool>()), 2..8).prop_filter(
        "both classes",
        |ps| ps.iter().any(|(_, h)| *h) && ps.iter().any(|(_, h)| !*h),
    )
}

fn dataset(rows: &[(Vec<String>, bool)], flip: bool, copies: usize) -> Dataset {
    let mut profiles = Vec::new();
    for c in 0..copies {
        for (i, (posts, high)) in rows.iter().enumerate() {
            let score = if *high != flip { 0.25 } else { -0.25 };
            profiles.push(
                Profile::new(format!("p{c}-{i}"), posts.clone())
                    .with_label(Trait::Openness, score)
                    .unwrap(),
            );
        }
    }
    Dataset::new(Split::Train, Trait::Openness, profiles).unwrap()
}

fn small_features() -> FeaturizerConfig {
    FeaturizerConfig {
        dims: 64,
        ..FeaturizerConfig::default()
    }
}

fn level() -> impl Strategy<Value = Level> {
    prop_oneof![Just(Level::Low), Just(Level::High)]
}

proptest! {
    #[test]
    fn r_score_ignores_which_class_is_called_high(rows in labelled_profiles(), probe in post_text()) {
        let a = NpmiTable::build(&dataset(&rows, false, 1), NpmiConfig::default()).unwrap();
        let b = NpmiTable::build(&dataset(&rows, true, 1), NpmiConfig::default()).unwrap();
        let post = Post::new(0, probe);
        prop_assert!((a.r_score(&post) - b.r_score(&post)).abs() < 1e-12);
        prop_assert!(a.r_score(&post) >= 0.0);
    }

    #[test]
    fn npmi_unchanged_by_duplicating_the_corpus(rows in labelled_profiles()) {
        let cfg = NpmiConfig { smoothing: 0.0, ..NpmiConfig::default() };
        let once = NpmiTable::build(&dataset(&rows, false, 1), cfg.clone()).unwrap();
        let twice = NpmiTable::build(&dataset(&rows, false, 2), cfg).unwrap();
        prop_assert_eq!(once.weights.len(), twice.weights.len());
        for (word, w) in &once.weights {
            let v = &twice.weights[word];
            prop_assert!((w.low - v.low).abs() < 1e-12 && (w.high - v.high).abs() < 1e-12, "{}", word);
            prop_assert!((-1.0..=1.0).contains(&w.low) && (-1.0..=1.0).contains(&w.high));
        }
    }

    #[test]
    fn select_probability_stays_open(
        params in prop::collection::vec(-1e6f64..1e6, 65),
        text in ".{0,80}",
    ) {
        let policy = LinearPolicy::from_params(small_features(), params).unwrap();
        let x = featurize(&text, &small_features());
        let p = policy.select_probability(&x);
        prop_assert!(p > 0.0 && p < 1.0, "{}", p);
    }

    #[test]
    fn ranking_survives_monotone_rescaling(scores in prop::collection::vec(-5.0f64..5.0, 0..30), k in 0.1f64..10.0, c in -3.0f64..3.0) {
        let shifted: Vec<f64> = scores.iter().map(|s| k * s + c).collect();
        let squashed: Vec<f64> = scores.iter().map(|s| s.tanh()).collect();
        let base = rank_descending(&scores);
        prop_assert_eq!(&base, &rank_descending(&shifted));
        // tanh may merge distinct floats into ties; compare only where it does not.
        if squashed.iter().zip(&scores).all(|(t, s)| t.atanh() == *s) {
            prop_assert_eq!(&base, &rank_descending(&squashed));
        }
    }

    #[test]
    fn top_n_selections_are_nested(
        params in prop::collection::vec(-2.0f64..2.0, 65),
        texts in prop::collection::vec(post_text(), 1..25),
        n in 1usize..25,
        extra in 0usize..10,
    ) {
        let policy = LinearPolicy::from_params(small_features(), params).unwrap();
        let profile = Profile::new("p", texts.clone());
        let small = rank_top_n(&policy, &profile, n);
        let large = rank_top_n(&policy, &profile, n + extra);
        prop_assert_eq!(small.len(), n.min(texts.len()));
        prop_assert_eq!(&large[..small.len()], &small[..]);
    }

    #[test]
    fn f1_scores_are_bounded(pairs in prop::collection::vec((level(), level()), 1..60)) {
        let (pred, gold): (Vec<Level>, Vec<Level>) = pairs.into_iter().unzip();
        let t = ConfusionTable::from_levels(&pred, &gold).unwrap();
        for v in [t.macro_f1(), t.weighted_f1()] {
            prop_assert!((0.0..=1.0).contains(&v), "{}", v);
        }
        if pred == gold {
            prop_assert!((t.weighted_f1() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn majority_vote_ignores_order(votes in prop::collection::vec(level(), 0..40), seed in any::<u64>()) {
        let mut shuffled = votes.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(majority_vote(&votes), majority_vote(&shuffled));
    }

    #[test]
    fn level_parser_is_total(text in any::<String>()) {
        let got = parse_level(&text);
        let lower = text.to_lowercase();
        let words: Vec<&str> = lower.split(|c: char| !c.is_alphanumeric()).collect();
        let (low, high) = (words.contains(&"low"), words.contains(&"high"));
        if low == high {
            prop_assert_eq!(got, None);
        } else {
            prop_assert_eq!(got, Some(if high { Level::High } else { Level::Low }));
        }
    }

    #[test]
    fn generated_post_parser_never_panics(text in any::<String>(), expected in 0usize..20) {
        if let Ok(posts) = parse_generated_posts(&text, expected) {
            prop_assert!(posts.iter().all(|p| !p.trim().is_empty()));
        }
    }
}
