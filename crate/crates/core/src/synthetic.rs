//! Synthetic two-class corpora for simulations and benchmarks.
//!
//! Each class draws its words from its own vocabulary with a skewed
//! (squared-uniform) rank distribution; a `noise` fraction of tokens comes
//! from the other class's vocabulary instead.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDoc {
    pub text: String,
    pub class: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSpec {
    pub docs: usize,
    pub words_per_class: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub noise: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            docs: 1000,
            words_per_class: 400,
            min_len: 4,
            max_len: 12,
            noise: 0.1,
        }
    }
}

fn word(class: usize, rank: usize) -> String {
    const SYLLABLES: [&str; 16] = [
        "ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "vu", "we", "xo", "ya", "ze", "bo", "du", "fi",
    ];
    let mut out = String::from(["q", "j"][class % 2]);
    let mut r = rank + class / 2 * 100_000;
    loop {
        out.push_str(SYLLABLES[r % 16]);
        r /= 16;
        if r == 0 {
            break;
        }
    }
    out
}

/// Documents alternate between the two classes.
pub fn two_class_corpus(spec: &CorpusSpec, seed: u64) -> Vec<SyntheticDoc> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.docs)
        .map(|i| {
            let class = i % 2;
            let len = rng.random_range(spec.min_len..=spec.max_len);
            let tokens: Vec<String> = (0..len)
                .map(|_| {
                    let source = if rng.random_bool(spec.noise) { 1 - class } else { class };
                    let u: f64 = rng.random();
                    word(source, (u * u * spec.words_per_class as f64) as usize)
                })
                .collect();
            SyntheticDoc {
                text: tokens.join(" "),
                class,
            }
        })
        .collect()
}
