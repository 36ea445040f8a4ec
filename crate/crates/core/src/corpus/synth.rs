use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusMetadata, McqItem, DEFAULT_LANGUAGES};
use crate::error::{Error, Result};

/// Shape of a generated corpus.
///
/// Each topic owns a ring of `options_per_topic` option surfaces. A question
/// picks a key on the ring; its distractors are ring neighbours of the key,
/// and the stem carries a cue word tied to the key position. With
/// `option_reuse` the first ring slot is a topic-wide common distractor
/// included in every question, so any two same-topic questions share an
/// option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub topics: usize,
    pub questions_per_topic: usize,
    pub options_per_topic: usize,
    pub distractors_per_question: usize,
    pub languages: Vec<String>,
    pub option_reuse: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            topics: 40,
            questions_per_topic: 50,
            options_per_topic: 16,
            distractors_per_question: 3,
            languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            option_reuse: true,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.topics == 0 || self.questions_per_topic == 0 || self.options_per_topic == 0 {
            return bad("topics, questions_per_topic and options_per_topic must be >= 1");
        }
        if self.distractors_per_question == 0 {
            return bad("distractors_per_question must be >= 1");
        }
        if self.languages.is_empty() {
            return bad("at least one language is required");
        }
        if self.options_per_topic <= self.distractors_per_question {
            return bad("options_per_topic must exceed distractors_per_question");
        }
        Ok(())
    }
}

const CONSONANTS: &[u8] = b"bcdfghjklmnprstvwz";
const VOWELS: &[u8] = b"aeiouy";

/// Pseudo-word generator with a language-specific syllable inventory and a
/// global uniqueness constraint, which keeps vocabularies disjoint across
/// languages and topics.
struct WordForge {
    syllables: Vec<Vec<String>>,
    used: HashSet<String>,
}

impl WordForge {
    fn new(languages: usize, rng: &mut ChaCha8Rng) -> Self {
        let all: Vec<String> = CONSONANTS
            .iter()
            .flat_map(|&c| VOWELS.iter().map(move |&v| format!("{}{}", c as char, v as char)))
            .collect();
        let syllables = (0..languages)
            .map(|_| {
                let mut s = all.clone();
                s.shuffle(rng);
                s.truncate(16);
                s
            })
            .collect();
        WordForge {
            syllables,
            used: HashSet::new(),
        }
    }

    fn word(&mut self, lang: usize, rng: &mut ChaCha8Rng) -> String {
        let inventory = &self.syllables[lang];
        loop {
            let n = rng.random_range(2..=3);
            let w: String = (0..n)
                .map(|_| inventory.choose(rng).expect("non-empty inventory").as_str())
                .collect();
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Generates a deterministic synthetic MCQ corpus.
pub fn generate_synthetic(cfg: &SynthConfig, seed: u64) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_lang = cfg.languages.len();
    let mut forge = WordForge::new(n_lang, &mut rng);
    let fillers: Vec<Vec<String>> = (0..n_lang)
        .map(|l| (0..24).map(|_| forge.word(l, &mut rng)).collect())
        .collect();

    let d = cfg.distractors_per_question;
    let o = cfg.options_per_topic;
    let mut items = Vec::with_capacity(cfg.topics * cfg.questions_per_topic);
    for t in 0..cfg.topics {
        let lang = t % n_lang;
        let concepts: Vec<String> = (0..4).map(|_| forge.word(lang, &mut rng)).collect();
        let cues: Vec<String> = (0..o).map(|_| forge.word(lang, &mut rng)).collect();
        let options: Vec<String> = (0..o)
            .map(|_| {
                let n = rng.random_range(1..=2);
                (0..n)
                    .map(|_| forge.word(lang, &mut rng))
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        // Ring of candidate key slots; slot 0 is the shared distractor when
        // reuse is on.
        let ring: Vec<usize> = if cfg.option_reuse { (1..o).collect() } else { (0..o).collect() };
        let needed = if cfg.option_reuse { d - 1 } else { d };
        for q in 0..cfg.questions_per_topic {
            let pos = rng.random_range(0..ring.len());
            let key_slot = ring[pos];
            let m = ring.len();
            let radius = d.max(1);
            let mut near: Vec<usize> = Vec::new();
            for step in 1..=radius {
                for cand in [(pos + step) % m, (pos + m - step % m) % m] {
                    let slot = ring[cand];
                    if slot != key_slot && !near.contains(&slot) {
                        near.push(slot);
                    }
                }
            }
            if near.len() < needed {
                for &slot in &ring {
                    if slot != key_slot && !near.contains(&slot) {
                        near.push(slot);
                    }
                }
            }
            near.shuffle(&mut rng);
            let mut slots: Vec<usize> = near.into_iter().take(needed).collect();
            if cfg.option_reuse {
                slots.insert(0, 0);
            }

            let f = &fillers[lang];
            let mut words: Vec<&str> = Vec::new();
            words.push(f.choose(&mut rng).unwrap());
            words.push(f.choose(&mut rng).unwrap());
            words.push(concepts.choose(&mut rng).unwrap());
            words.push(f.choose(&mut rng).unwrap());
            words.push(cues[key_slot].as_str());
            words.push(concepts.choose(&mut rng).unwrap());
            words.push(f.choose(&mut rng).unwrap());
            let stem = format!("{}?", capitalize(&words.join(" ")));
            items.push(McqItem {
                id: format!("syn-{t:03}-{q:03}"),
                stem,
                key: capitalize(&options[key_slot]),
                distractors: slots.iter().map(|&s| capitalize(&options[s])).collect(),
                language: Some(cfg.languages[lang].clone()),
                subject: Some(format!("topic-{t:02}")),
            });
        }
    }
    Ok(Corpus {
        items,
        metadata: CorpusMetadata {
            source: "synthetic".into(),
            seed: Some(seed),
        },
    })
}
