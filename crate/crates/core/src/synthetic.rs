//! Synthetic debates with planted topic and discourse signal.
//!
//! Winning chains keep one topic cluster in focus for every turn; losing
//! chains by default draw every content word uniformly from all clusters
//! (see [`LoserTopics`]). Each turn carries discourse-marker words of one of
//! two styles, with the first style more frequent on the winning side.
//! Output is CMV-format posts, so it runs through the ordinary corpus path.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ModelConfig;
use crate::corpus::{CorpusOptions, RawPost};
use crate::error::{Error, Result};
use crate::rng::{StreamRng, Streams};

const CLUSTERS: [[&str; 12]; 6] = [
    [
        "tax",
        "wage",
        "market",
        "price",
        "budget",
        "trade",
        "income",
        "jobs",
        "inflation",
        "business",
        "profit",
        "debt",
    ],
    [
        "doctor",
        "patient",
        "hospital",
        "disease",
        "vaccine",
        "medicine",
        "nurse",
        "insurance",
        "treatment",
        "clinic",
        "surgery",
        "diet",
    ],
    [
        "climate",
        "carbon",
        "forest",
        "ocean",
        "pollution",
        "energy",
        "solar",
        "wildlife",
        "emission",
        "recycling",
        "drought",
        "species",
    ],
    [
        "school",
        "teacher",
        "student",
        "exam",
        "college",
        "tuition",
        "classroom",
        "homework",
        "degree",
        "curriculum",
        "lecture",
        "library",
    ],
    [
        "police", "prison", "court", "judge", "crime", "lawyer", "sentence", "arrest", "jury",
        "verdict", "parole", "witness",
    ],
    [
        "software",
        "internet",
        "robot",
        "computer",
        "phone",
        "network",
        "privacy",
        "data",
        "algorithm",
        "startup",
        "hardware",
        "browser",
    ],
];

const STYLE_A: [&str; 6] = [
    "because",
    "therefore",
    "evidence",
    "research",
    "study",
    "source",
];
const STYLE_B: [&str; 6] = [
    "honestly",
    "literally",
    "obviously",
    "seriously",
    "whatever",
    "basically",
];

/// How losing chains spread their content over the clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoserTopics {
    /// Every content word is uniform over all clusters.
    Uniform,
    /// Each turn focuses on a cluster like a winning turn does, but the
    /// focus rotates through a shuffled cluster order, so a single turn looks
    /// like a winning one and only the sequence reveals the difference.
    Rotating,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_moots: usize,
    pub n_topics: usize,
    pub seed: u64,
    pub cluster_size: usize,
    pub winners_per_moot: usize,
    pub losers_per_moot: usize,
    /// Inclusive turn-count ranges for winning and losing chains.
    pub winner_turns: (usize, usize),
    pub loser_turns: (usize, usize),
    pub content_words: usize,
    pub marker_words: usize,
    /// Probability that a winning turn's content word comes from its focus
    /// cluster; the rest are uniform over all clusters.
    pub focus_share: f64,
    pub loser_topics: LoserTopics,
    /// Probability that a turn uses the first discourse style.
    pub winner_style_rate: f64,
    pub loser_style_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_moots: 200,
            n_topics: 3,
            seed: 42,
            cluster_size: 12,
            winners_per_moot: 6,
            losers_per_moot: 7,
            winner_turns: (3, 5),
            loser_turns: (3, 5),
            content_words: 52,
            marker_words: 15,
            focus_share: 0.6,
            loser_topics: LoserTopics::Uniform,
            winner_style_rate: 0.7,
            loser_style_rate: 0.3,
        }
    }
}

/// Sequence length used for the synthetic corpus. Short enough that the
/// sequence encoder sees only part of each turn, so the memory addressing
/// carries signal the recurrent path alone does not.
pub const DESK_MAX_LEN: usize = 6;

/// Corpus settings paired with [`desk_model_config`].
pub fn desk_corpus_options(seed: u64) -> CorpusOptions {
    CorpusOptions {
        max_len: DESK_MAX_LEN,
        seed,
        ..CorpusOptions::default()
    }
}

/// A small model that trains on the synthetic corpus in seconds per epoch.
pub fn desk_model_config(vocab_size: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        topics: 3,
        discourse: 2,
        vocab_size,
        hidden: 16,
        memory_dim: 16,
        word_embedding: 16,
        encoder_hidden: 32,
        latent_dim: 8,
        max_len: DESK_MAX_LEN,
        max_epochs: 40,
        learning_rate: 3e-3,
        batch_size: 16,
        seed,
        ..ModelConfig::default()
    }
}

/// Ground truth written next to every synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedTruth {
    pub config: SyntheticConfig,
    pub clusters: Vec<Vec<String>>,
    pub style_markers: [Vec<String>; 2],
}

impl PlantedTruth {
    pub fn marker_words(&self) -> impl Iterator<Item = &str> {
        self.style_markers.iter().flatten().map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub posts: Vec<RawPost>,
    pub truth: PlantedTruth,
}

impl SyntheticCorpus {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for p in &self.posts {
            out.push_str(&serde_json::to_string(p)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Letters-only pseudo-word for clusters beyond the built-in lists.
fn pseudo_word(cluster: usize, index: usize) -> String {
    const SYL: [&str; 16] = [
        "ka", "lo", "mi", "nu", "pe", "ra", "si", "to", "vu", "ze", "bo", "de", "fi", "gu", "ha",
        "jo",
    ];
    let mut s = String::from("q");
    let mut n = cluster * 64 + index;
    loop {
        s.push_str(SYL[n % 16]);
        n /= 16;
        if n == 0 {
            break;
        }
    }
    s
}

fn cluster_words(cluster: usize, size: usize) -> Vec<String> {
    (0..size)
        .map(|j| match CLUSTERS.get(cluster).and_then(|c| c.get(j)) {
            Some(w) => w.to_string(),
            None => pseudo_word(cluster, j),
        })
        .collect()
}

fn validate(cfg: &SyntheticConfig) -> Result<()> {
    let positive = [
        ("n_moots", cfg.n_moots),
        ("n_topics", cfg.n_topics),
        ("cluster_size", cfg.cluster_size),
        ("winners_per_moot", cfg.winners_per_moot),
        ("losers_per_moot", cfg.losers_per_moot),
        ("content_words", cfg.content_words),
    ];
    for (name, v) in positive {
        if v == 0 {
            return Err(Error::config(format!(
                "synthetic `{name}` must be positive"
            )));
        }
    }
    for (name, (lo, hi)) in [
        ("winner_turns", cfg.winner_turns),
        ("loser_turns", cfg.loser_turns),
    ] {
        if lo < 2 || lo > hi {
            return Err(Error::config(format!(
                "synthetic `{name}` must satisfy 2 <= lo <= hi"
            )));
        }
    }
    for (name, p) in [
        ("focus_share", cfg.focus_share),
        ("winner_style_rate", cfg.winner_style_rate),
        ("loser_style_rate", cfg.loser_style_rate),
    ] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::config(format!(
                "synthetic `{name}` must lie in [0, 1]"
            )));
        }
    }
    Ok(())
}

struct Generator<'a> {
    cfg: &'a SyntheticConfig,
    clusters: Vec<Vec<String>>,
    all_content: Vec<String>,
}

impl Generator<'_> {
    /// `focus = None` draws all content uniformly.
    fn turn_body(&self, focus: Option<usize>, style_a: bool, rng: &mut StreamRng) -> String {
        let mut words: Vec<&str> =
            Vec::with_capacity(self.cfg.content_words + self.cfg.marker_words);
        for _ in 0..self.cfg.content_words {
            let w = match focus {
                Some(f) if rng.random::<f64>() < self.cfg.focus_share => {
                    self.clusters[f].choose(rng)
                }
                _ => self.all_content.choose(rng),
            };
            words.push(w.expect("nonempty cluster"));
        }
        let markers: &[&str] = if style_a { &STYLE_A } else { &STYLE_B };
        for _ in 0..self.cfg.marker_words {
            words.push(markers.choose(rng).expect("nonempty markers"));
        }
        words.shuffle(rng);
        words.join(" ") + "."
    }

    fn moot(&self, m: usize, rng: &mut StreamRng) -> Vec<RawPost> {
        let moot_id = format!("moot{m:04}");
        let root_id = format!("{moot_id}_op");
        let op_topic = rng.random_range(0..self.cfg.n_topics);
        let mut posts = vec![RawPost {
            post_id: root_id.clone(),
            parent_id: None,
            moot_id: moot_id.clone(),
            author: format!("op{m}"),
            body: self.turn_body(Some(op_topic), rng.random::<bool>(), rng),
            delta: false,
        }];
        let chains = self.cfg.winners_per_moot + self.cfg.losers_per_moot;
        for chain in 0..chains {
            let winning = chain < self.cfg.winners_per_moot;
            let (lo, hi) = if winning {
                self.cfg.winner_turns
            } else {
                self.cfg.loser_turns
            };
            let turns = rng.random_range(lo..=hi);
            let focus: Vec<Option<usize>> = if winning {
                vec![Some(rng.random_range(0..self.cfg.n_topics)); turns]
            } else {
                match self.cfg.loser_topics {
                    LoserTopics::Uniform => vec![None; turns],
                    LoserTopics::Rotating => {
                        let mut order: Vec<usize> = (0..self.cfg.n_topics).collect();
                        order.shuffle(rng);
                        (0..turns).map(|t| Some(order[t % order.len()])).collect()
                    }
                }
            };
            let style_rate = if winning {
                self.cfg.winner_style_rate
            } else {
                self.cfg.loser_style_rate
            };
            let mut parent = root_id.clone();
            for (t, &focus) in focus.iter().enumerate() {
                let post_id = format!("{moot_id}_c{chain:02}_t{t}");
                let style_a = rng.random::<f64>() < style_rate;
                posts.push(RawPost {
                    post_id: post_id.clone(),
                    parent_id: Some(parent),
                    moot_id: moot_id.clone(),
                    author: format!("u{m}_{chain}_{t}"),
                    body: self.turn_body(focus, style_a, rng),
                    delta: winning && t + 1 == turns,
                });
                parent = post_id;
            }
        }
        posts
    }
}

/// Generate a corpus; identical configs give identical posts.
pub fn synthesize(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    validate(cfg)?;
    let clusters: Vec<Vec<String>> = (0..cfg.n_topics)
        .map(|k| cluster_words(k, cfg.cluster_size))
        .collect();
    let all_content = clusters.iter().flatten().cloned().collect();
    let generator = Generator {
        cfg,
        clusters: clusters.clone(),
        all_content,
    };
    let streams = Streams::new(cfg.seed);
    let mut posts = Vec::new();
    for m in 0..cfg.n_moots {
        posts.extend(generator.moot(m, &mut streams.rng("synthetic", &[m as u64])));
    }
    Ok(SyntheticCorpus {
        posts,
        truth: PlantedTruth {
            config: cfg.clone(),
            clusters,
            style_markers: [
                STYLE_A.iter().map(|s| s.to_string()).collect(),
                STYLE_B.iter().map(|s| s.to_string()).collect(),
            ],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{flatten_forest, normalize_text, FlattenOptions, Label};

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            n_moots: 4,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = synthesize(&small()).unwrap().to_jsonl().unwrap();
        let b = synthesize(&small()).unwrap().to_jsonl().unwrap();
        assert_eq!(a, b);
        let c = synthesize(&SyntheticConfig { seed: 7, ..small() })
            .unwrap()
            .to_jsonl()
            .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn winners_concentrate_on_one_cluster() {
        let corpus = synthesize(&small()).unwrap();
        let convs = flatten_forest(&corpus.posts, FlattenOptions::default()).unwrap();
        assert_eq!(convs.len(), 4 * 13);
        for c in convs.iter().filter(|c| c.label == Label::Winning) {
            let content: Vec<&String> = c
                .turns
                .iter()
                .flatten()
                .filter(|w| corpus.truth.clusters.iter().flatten().any(|x| x == *w))
                .collect();
            let best = corpus
                .truth
                .clusters
                .iter()
                .map(|cl| content.iter().filter(|w| cl.contains(w)).count())
                .max()
                .unwrap();
            assert!(best as f64 >= 0.6 * content.len() as f64);
        }
    }

    #[test]
    fn one_planted_topic_is_shared_by_all_winners() {
        let corpus = synthesize(&SyntheticConfig {
            n_topics: 1,
            ..small()
        })
        .unwrap();
        let cluster = &corpus.truth.clusters[0];
        for p in corpus.posts.iter().filter(|p| p.parent_id.is_some()) {
            let toks = normalize_text(&p.body);
            assert!(toks.iter().filter(|t| cluster.contains(t)).count() >= 52);
        }
    }

    #[test]
    fn extra_clusters_use_letter_words() {
        let words = cluster_words(9, 12);
        assert_eq!(words.len(), 12);
        for w in &words {
            assert_eq!(normalize_text(w), vec![w.clone()]);
        }
        let mut unique = words.clone();
        unique.dedup();
        assert_eq!(unique.len(), 12);
    }
}
