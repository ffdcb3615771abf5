//! Bundled toy corpus and a planted-token synthetic corpus.
//!
//! The synthetic generator stands in for a real sentence-polarity corpus.
//! Each sentence mixes filler words with sentiment cue words; the true label
//! is the polarity with more cues, and a sentence may also carry a minority
//! of cues from the other polarity. Filler words are drawn from a large
//! vocabulary so that individual sentences are easy to memorize.

use serde::{Deserialize, Serialize};

use crate::numeric::Rng;
use crate::text::{parse_records, Record, NEGATIVE, POSITIVE};

const TOY_CSV: &str = include_str!("../data/toy.csv");

/// Forty hand-written sentences; every positive one contains "great" and
/// every negative one contains "awful".
pub fn toy_corpus() -> Vec<Record> {
    parse_records(TOY_CSV.as_bytes(), b',').expect("bundled toy corpus parses")
}

pub fn toy_csv() -> &'static str {
    TOY_CSV
}

const POSITIVE_CUES: [&str; 16] = [
    "great", "superb", "moving", "charming", "brilliant", "delightful", "touching", "witty", "gripping", "lovely", "stunning", "clever",
    "heartfelt", "riveting", "masterful", "joyous",
];

const NEGATIVE_CUES: [&str; 16] = [
    "awful", "dull", "tedious", "clumsy", "boring", "lifeless", "bland", "shallow", "messy", "tiresome", "forgettable", "hollow",
    "sloppy", "grating", "pointless", "stale",
];

const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub sentences: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Distinct filler words.
    pub filler_vocab: usize,
    /// Largest number of majority-polarity cues in one sentence.
    pub max_cues: usize,
    /// Chance that a sentence also carries minority-polarity cues.
    pub distractor_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { sentences: 2000, min_words: 6, max_words: 16, filler_vocab: 720, max_cues: 3, distractor_prob: 0.5 }
    }
}

fn filler_word(k: usize) -> String {
    // onset-vowel syllables: 60 per syllable, three syllables cover 216000 words
    let syllable = |i: usize| format!("{}{}", ONSETS[i % ONSETS.len()], VOWELS[(i / ONSETS.len()) % VOWELS.len()]);
    let per = ONSETS.len() * VOWELS.len();
    format!("{}{}{}", syllable(k % per), syllable((k / per) % per), syllable(k / (per * per)))
}

/// Balanced planted-token corpus, shuffled with `rng`.
pub fn synthetic_corpus(config: &SynthConfig, rng: &mut Rng) -> Vec<Record> {
    assert!(config.min_words >= 1 && config.min_words <= config.max_words, "word count range");
    assert!(config.max_cues >= 1 && config.filler_vocab >= 1, "cue and filler counts");
    let fillers: Vec<String> = (0..config.filler_vocab).map(filler_word).collect();
    let mut records = Vec::with_capacity(config.sentences);
    for i in 0..config.sentences {
        let label = if i % 2 == 0 { POSITIVE } else { NEGATIVE };
        let (own, other) = if label == POSITIVE { (&POSITIVE_CUES, &NEGATIVE_CUES) } else { (&NEGATIVE_CUES, &POSITIVE_CUES) };
        let cues = 1 + rng.below(config.max_cues);
        let distractors = if cues > 1 && rng.next_f64() < config.distractor_prob { 1 + rng.below(cues - 1) } else { 0 };
        let len = config.min_words + rng.below(config.max_words - config.min_words + 1);
        let mut words: Vec<String> = (0..len.max(cues + distractors)).map(|_| fillers[rng.below(fillers.len())].clone()).collect();
        let slots = rng.sample_indices(words.len(), cues + distractors);
        for (k, &slot) in slots.iter().enumerate() {
            let pool = if k < cues { own } else { other };
            words[slot] = pool[rng.below(pool.len())].to_string();
        }
        records.push(Record { label, text: words.join(" ") });
    }
    rng.shuffle(&mut records);
    records
}
