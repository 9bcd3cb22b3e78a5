//! Seeded synthetic corpora for tests, benchmarks and the acceptance run.
//! Everything here is a pure function of its seed.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::schema::{DatasetId, DatasetRecord, Liveness};

const ONSETS: [&str; 16] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st"];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "ai"];
const CODAS: [&str; 6] = ["", "n", "r", "s", "l", "x"];

/// A pronounceable pseudo-word of 2 or 3 syllables.
pub fn pseudo_word(rng: &mut impl Rng) -> String {
    let syllables = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..syllables {
        w.push_str(ONSETS.choose(rng).unwrap());
        w.push_str(VOWELS.choose(rng).unwrap());
    }
    w.push_str(CODAS.choose(rng).unwrap());
    w
}

fn lexicon(rng: &mut impl Rng, n: usize) -> Vec<String> {
    let mut words: Vec<String> = Vec::with_capacity(n);
    while words.len() < n {
        let w = pseudo_word(rng);
        if !words.contains(&w) {
            words.push(w);
        }
    }
    words
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next().map(|f| f.to_uppercase().chain(c).collect()).unwrap_or_default()
}

fn phrase(rng: &mut impl Rng, words: &[String], n: usize) -> Vec<String> {
    (0..n).map(|_| words.choose(rng).unwrap().clone()).collect()
}

fn with_epoch(mut r: DatasetRecord) -> DatasetRecord {
    r.created_at = chrono::DateTime::<chrono::Utc>::UNIX_EPOCH;
    r.updated_at = r.created_at;
    r
}

pub struct DedupCorpus {
    pub records: Vec<DatasetRecord>,
    /// Indices of the planted groups (base record first).
    pub planted: Vec<Vec<usize>>,
}

/// `n` records over 8 sources. About a third belong to planted groups of 2
/// to 4: copies of a base record with a reformatted name on another source
/// (identifier match) or a lightly edited description under a new name and
/// URL (semantic match). The rest are independent.
pub fn dedup_corpus(n: usize, seed: u64) -> DedupCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = lexicon(&mut rng, 400);
    let sources: Vec<String> = (0..8).map(|i| format!("repo-{i}")).collect();
    let mut records = Vec::with_capacity(n);
    let mut planted = Vec::new();
    let mut serial = 0usize;
    while records.len() < n {
        serial += 1;
        let len = rng.random_range(2..=3);
        let name_words = phrase(&mut rng, &words, len);
        let name = name_words.iter().map(|w| capitalize(w)).collect::<Vec<_>>().join(" ");
        let len = rng.random_range(14..=22);
        let desc_words = phrase(&mut rng, &words, len);
        let desc = format!("{}.", desc_words.join(" "));
        let src = sources.choose(&mut rng).unwrap().clone();
        let url = format!("https://{src}.example.org/d/{serial}");
        let base = DatasetRecord::new(&name, &desc, &url, &src);
        let base_idx = records.len();
        records.push(with_epoch(base));
        if records.len() >= n || rng.random_bool(0.7) {
            continue;
        }
        let copies = rng.random_range(1..=3).min(n - records.len());
        let mut group = vec![base_idx];
        for c in 0..copies {
            let other_src = sources.choose(&mut rng).unwrap().clone();
            let rec = if rng.random_bool(0.4) {
                let variant = name_words.join(if c % 2 == 0 { "_" } else { "-" });
                let mut r = DatasetRecord::new(
                    &variant,
                    &desc,
                    &format!("https://{other_src}.example.org/m/{serial}-{c}"),
                    &other_src,
                );
                r.data_type = "tabular".into();
                r
            } else {
                let mut edited = desc_words.clone();
                let pos = rng.random_range(0..edited.len());
                edited[pos] = words.choose(&mut rng).unwrap().clone();
                let new_name = format!("{} v{}", name, c + 2);
                DatasetRecord::new(
                    &new_name,
                    &format!("{}.", edited.join(" ")),
                    &format!("https://{other_src}.example.org/mirror/{serial}/{c}"),
                    &other_src,
                )
            };
            group.push(records.len());
            records.push(with_epoch(rec));
        }
        planted.push(group);
    }
    DedupCorpus { records, planted }
}

/// Topic label, tag labels, and vocabulary used in the texts.
pub const TOPICS: [(&str, [&str; 3], [&str; 6]); 8] = [
    (
        "driving",
        ["autonomous driving", "pedestrian detection", "traffic perception"],
        ["road", "vehicle", "lidar", "lane", "camera", "traffic"],
    ),
    (
        "medicine",
        ["medical imaging", "tumor segmentation", "radiology"],
        ["scan", "patient", "tumor", "mri", "clinical", "lesion"],
    ),
    (
        "language",
        ["machine translation", "question answering", "text classification"],
        ["sentence", "corpus", "translation", "question", "language", "token"],
    ),
    (
        "climate",
        ["climate science", "weather forecasting", "remote sensing"],
        ["temperature", "satellite", "rainfall", "ocean", "weather", "climate"],
    ),
    (
        "finance",
        ["stock prediction", "fraud detection", "financial news"],
        ["market", "price", "stock", "transaction", "bank", "trading"],
    ),
    (
        "speech",
        ["speech recognition", "speaker identification", "audio classification"],
        ["audio", "speaker", "speech", "utterance", "acoustic", "voice"],
    ),
    (
        "biology",
        ["protein structure", "gene expression", "single cell"],
        ["protein", "gene", "cell", "sequence", "genome", "expression"],
    ),
    (
        "retail",
        ["recommendation", "customer reviews", "product search"],
        ["product", "customer", "review", "purchase", "rating", "shop"],
    ),
];

/// `n` records spread over the topics. Every fifth record carries two
/// platform tags; every third has all six fields and a long description.
pub fn tagging_corpus(n: usize, seed: u64) -> Vec<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let filler = lexicon(&mut rng, 120);
    (0..n)
        .map(|i| {
            let (topic, tags, vocab) = TOPICS[i % TOPICS.len()];
            let vocab: Vec<String> = vocab.iter().map(|s| s.to_string()).collect();
            let mut words = phrase(&mut rng, &vocab, 8);
            words.extend(phrase(&mut rng, &filler, 6));
            words.shuffle(&mut rng);
            let name = format!(
                "{} {} {}",
                capitalize(&vocab[i % vocab.len()]),
                capitalize(filler.choose(&mut rng).unwrap()),
                i
            );
            let desc = format!("A {topic} collection about {}.", words.join(" "));
            let src = format!("{topic}-hub");
            let mut r = DatasetRecord::new(&name, &desc, &format!("https://{src}.example.org/{i}"), &src);
            if i % 5 == 0 {
                r.source_tags = vec![tags[0].to_string(), tags[1 + (i / 5) % 2].to_string()];
            }
            if i % 3 == 0 {
                r.data_type = "mixed".into();
                r.scale = format!("{} GB", 1 + i % 50);
                if r.dataset_desc.len() < 80 {
                    r.dataset_desc.push_str(" Collected and curated for benchmarking research methods.");
                }
            }
            with_epoch(r)
        })
        .collect()
}

/// A navigation/search corpus: `n` records over 20 sources and 40 tags,
/// each with two selected tags and up to two weak tags. Roughly 5% are dead
/// and 5% are duplicates of an earlier record.
pub fn nav_corpus(n: usize, seed: u64) -> Vec<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = lexicon(&mut rng, 300);
    let tags: Vec<String> = (0..40).map(|i| format!("topic {i}")).collect();
    let mut out: Vec<DatasetRecord> = Vec::with_capacity(n);
    for i in 0..n {
        let name = phrase(&mut rng, &words, 2).iter().map(|w| capitalize(w)).collect::<Vec<_>>().join(" ");
        let len = rng.random_range(5..=30);
        let desc = phrase(&mut rng, &words, len).join(" ");
        let src = format!("source-{}", rng.random_range(0..20));
        let mut r = DatasetRecord::new(&name, &desc, &format!("https://{src}.example.org/{i}"), &src);
        let picks: Vec<&String> = tags.choose_multiple(&mut rng, 4).collect();
        r.tags_selected = vec![picks[0].clone(), picks[1].clone()];
        r.tags_weak = picks[2..2 + rng.random_range(0..=2)].iter().map(|s| s.to_string()).collect();
        r.alive = if rng.random_bool(0.05) { Liveness::Dead } else { Liveness::Alive };
        if i > 0 && rng.random_bool(0.05) {
            let target = rng.random_range(0..out.len());
            r.canonical_of = Some(out[target].id.clone());
        }
        out.push(with_epoch(r));
    }
    out
}

/// Small corpus with explicit ids `doc-00..` for scoring checks.
pub fn bm25_corpus(n: usize, seed: u64) -> Vec<DatasetRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = lexicon(&mut rng, 40);
    (0..n)
        .map(|i| {
            let name = phrase(&mut rng, &words, 2).join(" ");
            let len = rng.random_range(3..=40);
            let desc = phrase(&mut rng, &words, len).join(" ");
            let mut r = DatasetRecord::new(&name, &desc, &format!("https://bm25.example.org/{i}"), "bm25");
            r.id = DatasetId::new(format!("doc-{i:04}"));
            with_epoch(r)
        })
        .collect()
}

/// Words that occur in [`bm25_corpus`] / [`nav_corpus`] texts, for building
/// queries.
pub fn corpus_words(records: &[DatasetRecord]) -> Vec<String> {
    let mut words: Vec<String> =
        records.iter().flat_map(|r| crate::text::tokenize(&format!("{} {}", r.dataset_name, r.dataset_desc))).collect();
    words.sort();
    words.dedup();
    words
}
