//! Seeded synthetic corpus with planted topics, synonym pairs that only the
//! embeddings reveal, and weak cross-topic similarities.
//!
//! Words are pronounceable pseudo-words. Topic A documents state a handful of
//! concepts, each of which has two synonymous spellings; every document leans
//! towards one spelling family (its register), so without the semantic step
//! topic A falls apart into two sub-groups. Topic B has its own small word
//! list and topic C carries only rare background words, which every document
//! also gets a few of. Those rare words dominate once IDF is applied.
//!
//! Embeddings use explicit orthogonal axes: each concept owns one axis and
//! every word owns a private axis. A concept variant is
//! `sqrt(s) * e_concept + sqrt(1 - s) * e_word` with `s` in `synonym_range`,
//! so two variants have cosine `sqrt(s1 * s2)`. Some background and topic B
//! words lean on a topic A concept with cosine in `noise_range`, which only
//! the lowest thresholds pick up.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::ops::RangeInclusive;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cluster::restart_rng;
use crate::corpus::{self, EventType, LossEvent};
use crate::pipeline::{write_tags, BaseWeighting, MethodSpec, PipelineConfig, PipelineError};
use crate::validate::TagSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_docs: usize,
    /// Shares of topics A and B; topic C takes the rest.
    pub share_a: f64,
    pub share_b: f64,
    pub n_concepts: usize,
    pub concepts_per_doc: usize,
    /// Probability that a concept is written in the document's register.
    pub register_consistency: f64,
    pub n_b_words: usize,
    pub b_words_per_doc: usize,
    pub n_background: usize,
    pub background_per_doc: usize,
    pub c_words_per_doc: usize,
    /// Words that always occur together, in a random share of documents
    /// regardless of topic (think branch or city names).
    pub n_nuisance: usize,
    pub nuisance_share: f64,
    /// Squared cosine between a concept variant and the concept axis.
    pub synonym_range: (f64, f64),
    /// Cosine between a noisy word and the concept it leans on.
    pub noise_range: (f64, f64),
    pub noisy_background_share: f64,
    pub noisy_b_share: f64,
    /// Fraction of documents that are topic-A reports repeating both
    /// synonyms of every concept `outlier_repeats` times.
    pub outlier_rate: f64,
    pub outlier_repeats: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_docs: 300,
            share_a: 0.6,
            share_b: 0.1,
            n_concepts: 5,
            concepts_per_doc: 4,
            register_consistency: 0.9,
            n_b_words: 4,
            b_words_per_doc: 4,
            n_background: 300,
            background_per_doc: 2,
            c_words_per_doc: 5,
            n_nuisance: 6,
            nuisance_share: 0.05,
            synonym_range: (0.81, 0.89),
            noise_range: (0.705, 0.745),
            noisy_background_share: 0.3,
            noisy_b_share: 1.0,
            outlier_rate: 0.0,
            outlier_repeats: 3,
            seed: 7,
        }
    }
}

pub const TAG_A: &str = "card forgery";
pub const TAG_B: &str = "interest rate dispute";
pub const TAG_C: &str = "other";

/// Generated corpus, tags and embeddings.
#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub events: Vec<LossEvent>,
    pub tags: TagSet,
    /// Indices of outlier documents.
    pub outliers: Vec<usize>,
    pub dim: usize,
    pub embeddings: Vec<(String, Vec<f64>)>,
    pub stopwords: BTreeSet<String>,
}

const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];
// Function words sprinkled into descriptions; cleaning must remove them.
const FILLERS: &[&str] = &["the", "of", "and", "on", "for", "with", "was", "by", "a", "to"];

fn pseudo_word(rng: &mut ChaCha8Rng, syllables: RangeInclusive<usize>) -> String {
    let syllables = rng.random_range(syllables);
    (0..syllables)
        .flat_map(|_| [*CONSONANTS.choose(rng).unwrap(), *VOWELS.choose(rng).unwrap()])
        .collect()
}

fn unique_words(n: usize, syllables: RangeInclusive<usize>, taken: &mut HashSet<String>, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let w = pseudo_word(rng, syllables.clone());
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

struct Embedder {
    dim: usize,
    rows: Vec<(String, Vec<(usize, f64)>)>,
    next_private: usize,
}

impl Embedder {
    fn push(&mut self, word: &str, shared: Option<(usize, f64)>) {
        let private = self.next_private;
        self.next_private += 1;
        let mut entries = Vec::new();
        let mut rest = 1.0;
        if let Some((axis, x)) = shared {
            entries.push((axis, x));
            rest -= x * x;
        }
        entries.push((private, rest.sqrt()));
        self.rows.push((word.to_string(), entries));
    }
}

pub fn generate(cfg: &SynthConfig) -> SynthCorpus {
    let mut rng = restart_rng(cfg.seed, 0);
    let stopwords = corpus::english_stopwords();
    let mut taken: HashSet<String> = stopwords.iter().cloned().collect();

    // concept c has spellings variants[c][0] and variants[c][1]
    let variants: Vec<[String; 2]> = (0..cfg.n_concepts)
        .map(|_| {
            // short, so that verbose outlier reports fit the description limit
            let w = unique_words(2, 2..=3, &mut taken, &mut rng);
            [w[0].clone(), w[1].clone()]
        })
        .collect();
    let b_words = unique_words(cfg.n_b_words, 3..=4, &mut taken, &mut rng);
    let background = unique_words(cfg.n_background, 3..=4, &mut taken, &mut rng);
    let nuisance = unique_words(cfg.n_nuisance, 3..=4, &mut taken, &mut rng);

    let n_words = 2 * cfg.n_concepts + cfg.n_b_words + cfg.n_background + cfg.n_nuisance;
    let mut emb = Embedder {
        dim: cfg.n_concepts + n_words,
        rows: Vec::new(),
        next_private: cfg.n_concepts,
    };
    let mut strength = vec![[0.0; 2]; cfg.n_concepts];
    for (c, pair) in variants.iter().enumerate() {
        for (v, word) in pair.iter().enumerate() {
            let s = rng.random_range(cfg.synonym_range.0..cfg.synonym_range.1);
            strength[c][v] = s;
            emb.push(word, Some((c, s.sqrt())));
        }
    }
    // a noisy word reaches cosine nu with the stronger variant of its concept
    // and stays below nu with the weaker one
    let noisy = |rng: &mut ChaCha8Rng, share: f64| -> Option<(usize, f64)> {
        if rng.random::<f64>() >= share {
            return None;
        }
        let c = rng.random_range(0..cfg.n_concepts);
        let nu = rng.random_range(cfg.noise_range.0..cfg.noise_range.1);
        let top = strength[c][0].max(strength[c][1]);
        Some((c, nu / top.sqrt()))
    };
    for w in &b_words {
        let link = noisy(&mut rng, cfg.noisy_b_share);
        emb.push(w, link);
    }
    for w in &background {
        let link = noisy(&mut rng, cfg.noisy_background_share);
        emb.push(w, link);
    }
    for w in &nuisance {
        emb.push(w, None);
    }

    let n_a = (cfg.share_a * cfg.n_docs as f64).round() as usize;
    let n_b = (cfg.share_b * cfg.n_docs as f64).round() as usize;
    let mut topics: Vec<usize> = (0..cfg.n_docs).map(|i| if i < n_a { 0 } else if i < n_a + n_b { 1 } else { 2 }).collect();
    topics.shuffle(&mut rng);
    let n_outliers = (cfg.outlier_rate * cfg.n_docs as f64).round() as usize;
    let mut order: Vec<usize> = (0..cfg.n_docs).filter(|&i| topics[i] == 0).collect();
    order.shuffle(&mut rng);
    let mut outliers: Vec<usize> = order[..n_outliers].to_vec();
    outliers.sort_unstable();

    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let mut events = Vec::with_capacity(cfg.n_docs);
    let mut labels = Vec::with_capacity(cfg.n_docs);
    for (i, &topic) in topics.iter().enumerate() {
        let mut words: Vec<String> = Vec::new();
        let outlier = outliers.binary_search(&i).is_ok();
        if outlier {
            // a verbose report: both synonyms of every concept, repeated, so it
            // sits far out along the topic axis without favouring a register
            for pair in &variants {
                for variant in pair {
                    words.extend(std::iter::repeat_n(variant.clone(), cfg.outlier_repeats));
                }
            }
        } else {
            match topic {
                0 => {
                    let register = rng.random_range(0..2);
                    let mut concepts: Vec<usize> = (0..cfg.n_concepts).collect();
                    concepts.shuffle(&mut rng);
                    for &c in &concepts[..cfg.concepts_per_doc] {
                        let v = if rng.random::<f64>() < cfg.register_consistency { register } else { 1 - register };
                        words.push(variants[c][v].clone());
                    }
                    words.extend(background.choose_multiple(&mut rng, cfg.background_per_doc).cloned());
                }
                1 => {
                    words.extend(b_words.choose_multiple(&mut rng, cfg.b_words_per_doc).cloned());
                    words.extend(background.choose_multiple(&mut rng, cfg.background_per_doc).cloned());
                }
                _ => words.extend(background.choose_multiple(&mut rng, cfg.c_words_per_doc).cloned()),
            }
            if rng.random::<f64>() < cfg.nuisance_share {
                words.extend(nuisance.iter().cloned());
            }
            words.shuffle(&mut rng);
            // function words and a number that cleaning removes
            for _ in 0..rng.random_range(1..=3) {
                let at = rng.random_range(0..=words.len());
                words.insert(at, FILLERS.choose(&mut rng).unwrap().to_string());
            }
            if rng.random::<f64>() < 0.3 {
                words.push(format!("{}.", rng.random_range(2..99)));
            }
        }
        let mut description = words.join(" ");
        if let Some(first) = description.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        let event_type = match topic {
            0 => EventType::ExternalFraud,
            1 => EventType::ClientsProducts,
            _ => *[EventType::ExecutionDelivery, EventType::DamageToAssets, EventType::BusinessDisruption]
                .choose(&mut rng)
                .unwrap(),
        };
        events.push(LossEvent {
            event_id: format!("EV{:05}", i + 1),
            date_accounting: start + Duration::days(rng.random_range(0..2000)),
            event_type,
            gross_loss: (rng.random_range(100_000.0..2_000_000.0f64) * 100.0).round() / 100.0,
            description,
        });
        labels.push(Some([TAG_A, TAG_B, TAG_C][topic].to_string()));
    }
    let tags = TagSet::with_names(labels, vec![TAG_A.into(), TAG_B.into(), TAG_C.into()]).expect("fixed tag names");

    let dim = emb.dim;
    let embeddings = emb
        .rows
        .into_iter()
        .map(|(w, entries)| {
            let mut v = vec![0.0; dim];
            for (axis, x) in entries {
                v[axis] = x;
            }
            (w, v)
        })
        .collect();
    SynthCorpus {
        events,
        tags,
        outliers,
        dim,
        embeddings,
        stopwords,
    }
}

impl SynthCorpus {
    pub fn doc_ids(&self) -> Vec<String> {
        self.events.iter().map(|e| e.event_id.clone()).collect()
    }

    pub fn write_embeddings<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.embeddings.len(), self.dim)?;
        for (word, v) in &self.embeddings {
            write!(w, "{word}")?;
            for x in v {
                if *x == 0.0 {
                    write!(w, " 0")?;
                } else {
                    write!(w, " {x:.9}")?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Writes corpus, tags, embeddings, stop-words and a ready-to-run
    /// `config.toml` into `dir`, returning the config path.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf, PipelineError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| PipelineError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let corpus_path = dir.join("corpus.csv");
        let file = fs::File::create(&corpus_path).map_err(io(&corpus_path))?;
        corpus::write_corpus(file, &self.events).map_err(|source| PipelineError::Corpus { stage: "synth", source })?;

        let tags_path = dir.join("tags.csv");
        let file = fs::File::create(&tags_path).map_err(io(&tags_path))?;
        write_tags(file, &self.doc_ids(), &self.tags)?;

        let emb_path = dir.join("embeddings.txt");
        let file = fs::File::create(&emb_path).map_err(io(&emb_path))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_embeddings(&mut w).map_err(io(&emb_path))?;
        w.flush().map_err(io(&emb_path))?;

        let stop_path = dir.join("stopwords.txt");
        let text: String = self.stopwords.iter().map(|s| format!("{s}\n")).collect();
        fs::write(&stop_path, text).map_err(io(&stop_path))?;

        let cfg = PipelineConfig {
            corpus_path: "corpus.csv".into(),
            stopword_path: Some("stopwords.txt".into()),
            lemma_path: None,
            embedding_path: "embeddings.txt".into(),
            tags_path: Some("tags.csv".into()),
            weighting: BaseWeighting::Tf,
            similarity_threshold: 0.8,
            lsa_rank: 2,
            seed: 1,
            output_dir: "out".into(),
            methods: vec![MethodSpec::Kmeans { k: 3, restarts: 1000 }],
        };
        let cfg_path = dir.join("config.toml");
        fs::write(&cfg_path, cfg.to_toml()?).map_err(io(&cfg_path))?;
        Ok(cfg_path)
    }
}
