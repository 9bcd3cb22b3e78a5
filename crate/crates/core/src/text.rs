//! Tokenization and hashing shared across modules.

use std::collections::BTreeMap;

/// Lowercase alphanumeric tokens; everything else is a separator.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "all", "also", "an", "and", "any", "are", "as", "at", "be", "been",
    "being", "between", "both", "but", "by", "can", "contains", "could", "data", "dataset", "datasets", "do", "does",
    "each", "for", "from", "has", "have", "here", "how", "in", "into", "is", "it", "its", "more", "most", "new", "no",
    "not", "of", "on", "one", "or", "other", "our", "over", "provided", "provides", "such", "than", "that", "the",
    "their", "them", "then", "there", "these", "this", "those", "through", "to", "under", "up", "use", "used", "using",
    "very", "was", "we", "were", "what", "when", "where", "which", "while", "who", "will", "with", "within", "would",
    "you",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.binary_search(&token).is_ok()
}

/// Adjacent token pairs where neither token is a stopword, a bare number, or
/// shorter than three characters. Returned in text order, with repeats.
pub fn content_bigrams(text: &str) -> Vec<String> {
    let toks = tokenize(text);
    let ok = |t: &str| t.chars().count() >= 3 && !is_stopword(t) && !t.chars().all(|c| c.is_numeric());
    toks.windows(2).filter(|w| ok(&w[0]) && ok(&w[1]) && w[0] != w[1]).map(|w| format!("{} {}", w[0], w[1])).collect()
}

/// Bigram counts for a text.
pub fn bigram_counts(text: &str) -> BTreeMap<String, u32> {
    let mut counts = BTreeMap::new();
    for bg in content_bigrams(text) {
        *counts.entry(bg).or_insert(0) += 1;
    }
    counts
}

/// Seeded 64-bit hash with a frozen definition (FNV-1a followed by a
/// SplitMix64 finalizer). Unlike `std`'s hashers its output never changes
/// between toolchains, so golden values can be recorded against it.
pub fn hash64(seed: u64, bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    mix64(h)
}

pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Character n-grams of `text` for every n in `sizes`, over Unicode scalar
/// values. Texts shorter than n contribute a single gram (the whole text).
pub fn char_ngrams(text: &str, sizes: std::ops::RangeInclusive<usize>) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    if chars.is_empty() {
        return out;
    }
    for n in sizes {
        if chars.len() < n {
            out.push(chars.iter().collect());
            continue;
        }
        for w in chars.windows(n) {
            out.push(w.iter().collect());
        }
    }
    out
}
