use super::*;
use crate::corpus::{build_pool, generate_synthetic, SynthConfig};

fn item(id: &str, stem: &str, key: &str, ds: &[&str]) -> McqItem {
    McqItem {
        id: id.into(),
        stem: stem.into(),
        key: key.into(),
        distractors: ds.iter().map(|d| d.to_string()).collect(),
        language: None,
        subject: None,
    }
}

fn toy_corpus() -> Corpus {
    Corpus {
        items: vec![
            item("q1", "How old was he when he died?", "56 years", &["60 years", "48 years"]),
            item("q2", "What is the capital of France?", "Paris", &["Lyon", "Marseille", "Nice"]),
            item("q3", "Which city is on the Rhone?", "Lyon", &["Paris", "Lille"]),
            item("q4", "How long did the war last?", "6 years", &["60 years", "4 years"]),
        ],
        metadata: Default::default(),
    }
}

fn small_config() -> ResourceConfig {
    let sg = SkipGramConfig {
        dim: 8,
        epochs: 2,
        ..SkipGramConfig::default()
    };
    ResourceConfig {
        w2v: sg.clone(),
        glove: SkipGramConfig { dim: 6, ..sg },
        glove_file: None,
    }
}

fn toy_resources() -> FeatureResources {
    build_resources(&toy_corpus(), &small_config(), 3).unwrap()
}

fn feature(f: &FeatureVector, name: &str) -> f64 {
    f.get(name).unwrap()
}

#[test]
fn feature_names_are_unique_and_twenty() {
    let set: HashSet<&str> = FEATURE_NAMES.iter().copied().collect();
    assert_eq!(set.len(), 20);
    assert_eq!(FEATURE_NAMES[0], "tfidf_word_match_share");
    assert_eq!(FEATURE_NAMES[19], "lang_prior");
}

#[test]
fn numeric_key_and_distractor() {
    let res = toy_resources();
    let f = extract_features("How old was he when he died?", "56 years", "60 years", &res);
    assert_eq!(feature(&f, "equal_num"), 1.0);
    assert_eq!(feature(&f, "token_len_sim"), 1.0);
    assert_eq!(feature(&f, "first_char_match"), 0.0);
    assert_eq!(feature(&f, "last_char_match"), 1.0);
    assert_eq!(feature(&f, "has_num"), 1.0);
    assert_eq!(feature(&f, "char_len_diff"), 0.0);
    // " years" is the longest shared run: 6 of 8 characters.
    assert_eq!(feature(&f, "longest_substring"), 6.0 / 8.0);
    // "60 years" occurs twice as an option in the toy corpus.
    assert_eq!(feature(&f, "get_count"), 3f64.ln());
}

#[test]
fn identical_key_and_distractor() {
    let res = toy_resources();
    let f = extract_features("What is the capital of France?", "Paris", "Paris", &res);
    assert_eq!(feature(&f, "longest_substring"), 1.0);
    assert_eq!(feature(&f, "token_len_diff"), 0.0);
    assert_eq!(feature(&f, "char_len_diff"), 0.0);
    assert_eq!(feature(&f, "word_match_share"), 1.0);
    assert_eq!(feature(&f, "tfidf_word_match_share"), 1.0);
    assert_eq!(feature(&f, "is_caps"), 1.0);
    assert_eq!(feature(&f, "first_char_match"), 1.0);
    assert!((feature(&f, "w2v_ad_sim") - 1.0).abs() < 1e-6);
    assert!(feature(&f, "wmd_w2v_ad").abs() < 1e-6);
}

#[test]
fn short_strings_match_only_when_equal() {
    let a: Vec<char> = "Lyon".chars().collect();
    let b: Vec<char> = "Lyons".chars().collect();
    assert!(affix_match(&a, &a, true));
    assert!(!affix_match(&a, &b, true));
    assert!(!affix_match(&a, &b, false));
}

#[test]
fn longest_common_substring_cases() {
    let c = |s: &str| s.chars().collect::<Vec<_>>();
    assert_eq!(longest_common_substring(&c("abcdef"), &c("zcdez")), 3);
    assert_eq!(longest_common_substring(&c(""), &c("abc")), 0);
    assert_eq!(longest_common_substring(&c("abc"), &c("xyz")), 0);
}

#[test]
fn features_are_finite_and_flags_binary() {
    let res = toy_resources();
    let flags = [
        "equal_num",
        "token_len_sim",
        "char_len_sim",
        "is_caps",
        "count_caps",
        "has_num",
        "first_char_match",
        "last_char_match",
    ];
    for (s, k, d) in [("", "", ""), ("Who?", "Paris", "unseen words here"), ("x", "12", "1 2 3 4 5 6")] {
        let f = extract_features(s, k, d, &res);
        assert!(f.0.iter().all(|v| v.is_finite()), "{f:?}");
        for name in flags {
            let v = feature(&f, name);
            assert!(v == 0.0 || v == 1.0, "{name} = {v}");
        }
    }
}

#[test]
fn extraction_is_deterministic() {
    let a = extract_features("Which city is on the Rhone?", "Lyon", "Lille", &toy_resources());
    let b = extract_features("Which city is on the Rhone?", "Lyon", "Lille", &toy_resources());
    assert_eq!(a.0.map(f64::to_bits), b.0.map(f64::to_bits));
}

#[test]
fn resources_round_trip() {
    let res = toy_resources();
    let dir = tempfile::tempdir().unwrap();
    res.save(dir.path()).unwrap();
    assert_eq!(FeatureResources::load(dir.path()).unwrap(), res);
}

#[test]
fn tagged_items_train_their_own_language_model() {
    let mut corpus = toy_corpus();
    for it in &mut corpus.items {
        it.language = Some("en".into());
    }
    let res = build_resources(&corpus, &small_config(), 3).unwrap();
    assert_eq!(res.lang.languages(), ["en".to_string()]);
    let f = extract_features("Which city?", "Lyon", "Paris", &res);
    assert!((feature(&f, "lang_prior") - 1.0).abs() < 1e-12);
}

#[test]
fn negatives_exclude_key_and_gold() {
    let corpus = toy_corpus();
    let pool = build_pool(&corpus);
    let it = &corpus.items[1];
    let s = sample_negatives(it, &pool, 100, 9);
    assert!(!s.empty);
    let banned: HashSet<usize> = pool.gold_ids(it).into_iter().chain(pool.id_of(&it.key)).collect();
    assert!(s.ids.iter().all(|i| !banned.contains(i)));
    // Clamped: every eligible entry, once.
    assert_eq!(s.ids.len(), pool.len() - banned.len());
    let uniq: HashSet<usize> = s.ids.iter().copied().collect();
    assert_eq!(uniq.len(), s.ids.len());
    assert_eq!(sample_negatives(it, &pool, 100, 9), s);
}

#[test]
fn negatives_default_count_and_empty_flag() {
    let corpus = generate_synthetic(&SynthConfig::default(), 1).unwrap();
    let pool = build_pool(&corpus);
    let s = sample_negatives(&corpus.items[0], &pool, 100, 4);
    assert_eq!(s.ids.len(), 100);

    let lone = item("x", "stem", "a", &["b"]);
    let pool = DistractorPool::from_surfaces(["a", "B "]);
    let s = sample_negatives(&lone, &pool, 100, 4);
    assert!(s.empty && s.ids.is_empty());
}

fn toy_examples(xs: &[(f64, bool)]) -> Vec<TrainingExample> {
    xs.iter()
        .map(|&(x, label)| {
            let mut f = [0.0; FEATURE_COUNT];
            f[0] = x;
            TrainingExample {
                features: FeatureVector(f),
                label,
                item_id: "t".into(),
            }
        })
        .collect()
}

#[test]
fn separable_toy_is_fitted() {
    let data: Vec<(f64, bool)> = (0..40).map(|i| (i as f64 / 4.0, i >= 20)).collect();
    let ex = toy_examples(&data);
    let model = train_logreg(&ex, &LogRegConfig::default(), 1).unwrap();
    for e in &ex {
        assert_eq!(model.probability(&e.features) > 0.5, e.label, "{:?}", e.features.0[0]);
    }
    assert_eq!(model.stds[1], 1.0, "constant feature keeps std 1");
}

#[test]
fn zero_epochs_leave_zero_weights() {
    let ex = toy_examples(&[(0.0, false), (1.0, true)]);
    let cfg = LogRegConfig {
        epochs: 0,
        ..LogRegConfig::default()
    };
    let model = train_logreg(&ex, &cfg, 1).unwrap();
    assert!(model.weights.iter().all(|w| *w == 0.0));
    assert_eq!(model.bias, 0.0);
    assert_eq!(model.probability(&ex[0].features), 0.5);
    assert!(model.loss_trace.is_empty());
}

#[test]
fn single_label_is_degenerate() {
    let ex = toy_examples(&[(0.0, true), (1.0, true)]);
    assert!(matches!(
        train_logreg(&ex, &LogRegConfig::default(), 1),
        Err(Error::DegenerateTrainingSet(_))
    ));
    assert!(train_logreg(&[], &LogRegConfig::default(), 1).is_err());
}

#[test]
fn full_batch_loss_never_increases() {
    let data: Vec<(f64, bool)> = (0..50).map(|i| ((i * 7 % 13) as f64, i % 3 == 0)).collect();
    let cfg = LogRegConfig {
        batch: 0,
        lr: 0.05,
        epochs: 60,
        l2: 0.01,
        pos_weight: 1.0,
    };
    let model = train_logreg(&toy_examples(&data), &cfg, 2).unwrap();
    for w in model.loss_trace.windows(2) {
        assert!(w[1] <= w[0] + 1e-15, "{w:?}");
    }
}

#[test]
fn bias_raises_score_monotonically() {
    let ex = toy_examples(&[(0.0, false), (1.0, true)]);
    let mut model = train_logreg(&ex, &LogRegConfig::default(), 1).unwrap();
    let f = ex[0].features;
    let before = model.probability(&f);
    model.bias += 0.5;
    assert!(model.probability(&f) > before);
    assert!(model.probability(&f) > 0.0 && model.probability(&f) < 1.0);
}

#[test]
fn model_json_round_trip_and_validation() {
    let ex = toy_examples(&[(0.0, false), (1.0, true), (2.0, true)]);
    let model = train_logreg(&ex, &LogRegConfig::default(), 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    assert_eq!(BaselineModel::load(&path).unwrap(), model);

    let mut bad = model.clone();
    bad.feature_order.swap(0, 1);
    bad.save(&path).unwrap();
    assert!(BaselineModel::load(&path).is_err());
}

fn trained_toy() -> (Corpus, DistractorPool, FeatureResources, BaselineModel) {
    let corpus = generate_synthetic(
        &SynthConfig {
            topics: 4,
            questions_per_topic: 10,
            ..SynthConfig::default()
        },
        11,
    )
    .unwrap();
    let pool = build_pool(&corpus);
    let cfg = BaselineTrainConfig {
        resources: small_config(),
        negatives: 20,
        ..BaselineTrainConfig::default()
    };
    let (res, model) = train_baseline(&corpus, &pool, &cfg, 11).unwrap();
    (corpus, pool, res, model)
}

#[test]
fn ranking_contract() {
    let (corpus, pool, res, model) = trained_toy();
    let it = &corpus.items[0];
    let q = Query::new(&it.stem, &it.key);
    let ranker = BaselineRanker::new(&model, &res, &pool);
    let all = ranker.rank(&q, pool.len() + 10);
    assert_eq!(all.len(), pool.len() - 1, "key excluded, everything else kept");
    assert!(!all.pool_ids().contains(&pool.id_of(&it.key).unwrap()));
    for w in all.entries.windows(2) {
        assert!(w[0].score >= w[1].score);
        if w[0].score == w[1].score {
            assert!(w[0].pool_id < w[1].pool_id);
        }
    }
    let best = (0..pool.len())
        .filter(|&i| Some(i) != pool.id_of(&it.key))
        .map(|i| (i, score_baseline(&model, &it.stem, &it.key, pool.surface(i), &res)))
        .fold((usize::MAX, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    assert_eq!(all.entries[0].pool_id, best.0);
    assert_eq!(rank_baseline(&model, &res, &pool, &q, 5).pool_ids(), all.pool_ids()[..5]);
    assert!(rank_baseline(&model, &res, &DistractorPool::default(), &q, 5).is_empty());
}

#[test]
fn pool_order_does_not_change_ranking() {
    let (corpus, pool, res, model) = trained_toy();
    let mut surfaces = pool.entries().to_vec();
    surfaces.reverse();
    let shuffled = DistractorPool::from_surfaces(surfaces);
    let q = Query::new(&corpus.items[3].stem, &corpus.items[3].key);
    assert_eq!(
        rank_baseline(&model, &res, &pool, &q, 20).surfaces(),
        rank_baseline(&model, &res, &shuffled, &q, 20).surfaces()
    );
}

#[test]
fn gold_triplets_outscore_random_ones() {
    let (corpus, pool, res, model) = trained_toy();
    let (mut gold, mut rand) = (Vec::new(), Vec::new());
    for (i, it) in corpus.items.iter().enumerate() {
        for id in pool.gold_ids(it) {
            gold.push(score_baseline(&model, &it.stem, &it.key, pool.surface(id), &res));
        }
        for id in sample_negatives(it, &pool, 5, i as u64).ids {
            rand.push(score_baseline(&model, &it.stem, &it.key, pool.surface(id), &res));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&gold) > mean(&rand), "{} vs {}", mean(&gold), mean(&rand));
}
