//! Text signatures used for blocking: SimHash over character 3-grams and
//! sign-random-projection LSH over word TF-IDF vectors.

use std::collections::HashMap;

use crate::text::{char_ngrams, hash64, mix64, tokenize};

/// 64-bit SimHash over character 3-gram shingles of the lowercased,
/// whitespace-collapsed text. Shingles are weighted by their count. Empty
/// text maps to 0.
pub fn simhash(text: &str, seed: u64) -> u64 {
    let clean = text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ");
    if clean.is_empty() {
        return 0;
    }
    let mut counts: HashMap<String, i64> = HashMap::new();
    for g in char_ngrams(&clean, 3..=3) {
        *counts.entry(g).or_insert(0) += 1;
    }
    let mut acc = [0i64; 64];
    for (g, w) in &counts {
        let h = hash64(seed, g.as_bytes());
        for (bit, slot) in acc.iter_mut().enumerate() {
            if (h >> bit) & 1 == 1 {
                *slot += w;
            } else {
                *slot -= w;
            }
        }
    }
    acc.iter().enumerate().filter(|(_, v)| **v > 0).fold(0u64, |sig, (bit, _)| sig | (1u64 << bit))
}

/// Splits a 64-bit signature into `bands` contiguous bands of equal width.
pub fn simhash_bands(sig: u64, bands: usize) -> Vec<u64> {
    let width = 64 / bands;
    let mask = if width == 64 { u64::MAX } else { (1u64 << width) - 1 };
    (0..bands).map(|b| (sig >> (b * width)) & mask).collect()
}

/// Word-level TF-IDF over a corpus snapshot. IDF is `ln((1 + N) / (1 + df)) + 1`.
#[derive(Debug, Clone)]
pub struct TfIdfModel {
    idf: HashMap<String, f64>,
    n_docs: usize,
}

impl TfIdfModel {
    pub fn fit<'a>(docs: impl IntoIterator<Item = &'a str>) -> Self {
        let mut df: HashMap<String, usize> = HashMap::new();
        let mut n_docs = 0;
        for d in docs {
            n_docs += 1;
            let mut toks = tokenize(d);
            toks.sort_unstable();
            toks.dedup();
            for t in toks {
                *df.entry(t).or_insert(0) += 1;
            }
        }
        let idf = df.into_iter().map(|(t, c)| (t, ((1.0 + n_docs as f64) / (1.0 + c as f64)).ln() + 1.0)).collect();
        Self { idf, n_docs }
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// Sparse L2-normalized TF-IDF vector, sorted by term.
    pub fn vectorize(&self, text: &str) -> Vec<(String, f64)> {
        let mut tf: HashMap<String, f64> = HashMap::new();
        for t in tokenize(text) {
            *tf.entry(t).or_insert(0.0) += 1.0;
        }
        let unseen = ((1.0 + self.n_docs as f64) / 1.0).ln() + 1.0;
        let mut v: Vec<(String, f64)> = tf
            .into_iter()
            .map(|(t, c)| {
                let idf = self.idf.get(&t).copied().unwrap_or(unseen);
                (t, c * idf)
            })
            .collect();
        let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|(_, w)| *w /= norm);
        }
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}

/// Random-hyperplane LSH. Hyperplane `h` has component `±1` for term `t`,
/// drawn from a seeded hash of `(h, t)`, so hyperplanes are defined over an
/// unbounded vocabulary without materializing them.
#[derive(Debug, Clone, Copy)]
pub struct HyperplaneLsh {
    pub bands: usize,
    pub rows: usize,
    pub seed: u64,
}

impl HyperplaneLsh {
    fn component(&self, plane: usize, term_hash: u64) -> f64 {
        let h = mix64(term_hash ^ mix64(self.seed.wrapping_add(plane as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)));
        if h & 1 == 1 {
            1.0
        } else {
            -1.0
        }
    }

    /// One sign bit per hyperplane, packed band by band. `None` for the zero
    /// vector, which has no meaningful projection.
    pub fn band_signatures(&self, vector: &[(String, f64)]) -> Option<Vec<u64>> {
        if vector.is_empty() {
            return None;
        }
        let hashed: Vec<(u64, f64)> = vector.iter().map(|(t, w)| (hash64(self.seed, t.as_bytes()), *w)).collect();
        let mut out = Vec::with_capacity(self.bands);
        for band in 0..self.bands {
            let mut bits = 0u64;
            for row in 0..self.rows {
                let plane = band * self.rows + row;
                let dot: f64 = hashed.iter().map(|(h, w)| w * self.component(plane, *h)).sum();
                if dot >= 0.0 {
                    bits |= 1 << row;
                }
            }
            out.push(bits);
        }
        Some(out)
    }
}
