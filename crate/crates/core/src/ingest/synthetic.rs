//! Planted-topic synthetic corpus.
//!
//! Every item belongs to one topic and its text mixes that topic's private
//! words with shared filler words. Every user has a home topic and draws
//! most likes from it. Item tags are the topic label, flipped to a random
//! other topic with probability `tag_noise`.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seeded_rng;

/// Shared words. Includes everything needed for the word-order probe
/// "this paper is about deep learning , not lda".
pub const FILLER_WORDS: &[&str] = &[
    "this", "paper", "is", "about", "deep", "learning", ",", "not", "lda", ".", "the", "of",
    "and", "a", "in", "we", "model", "method", "results", "show", "data", "propose", "for",
    "with", "on", "new", "approach", "using",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub num_topics: usize,
    pub doc_len: usize,
    pub words_per_topic: usize,
    /// Probability that a token is drawn from the item's topic words.
    pub topic_word_prob: f64,
    pub min_likes: usize,
    pub max_likes: usize,
    /// Probability that a like falls outside the user's home topic.
    pub off_topic_prob: f64,
    pub tag_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_users: 50,
            num_items: 100,
            num_topics: 4,
            doc_len: 30,
            words_per_topic: 25,
            topic_word_prob: 0.5,
            min_likes: 5,
            max_likes: 10,
            off_topic_prob: 0.0,
            tag_noise: 0.2,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub texts: Vec<String>,
    pub likes: Vec<Vec<u32>>,
    pub item_tags: Vec<Vec<u32>>,
    pub item_topic: Vec<usize>,
    pub user_topic: Vec<usize>,
}

pub fn topic_word(topic: usize, k: usize) -> String {
    format!("topic{topic}word{k}")
}

pub fn generate(cfg: &SyntheticConfig) -> SyntheticData {
    assert!(cfg.num_topics >= 1 && cfg.num_items >= cfg.num_topics);
    assert!(cfg.min_likes <= cfg.max_likes);
    let mut rng = seeded_rng(cfg.seed);
    let item_topic: Vec<usize> = (0..cfg.num_items).map(|j| j % cfg.num_topics).collect();
    let mut by_topic = vec![Vec::new(); cfg.num_topics];
    for (j, &t) in item_topic.iter().enumerate() {
        by_topic[t].push(j as u32);
    }

    let texts = item_topic
        .iter()
        .map(|&t| {
            (0..cfg.doc_len)
                .map(|_| {
                    if rng.gen::<f64>() < cfg.topic_word_prob {
                        topic_word(t, rng.gen_range(0..cfg.words_per_topic))
                    } else {
                        FILLER_WORDS.choose(&mut rng).unwrap().to_string()
                    }
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();

    let user_topic: Vec<usize> = (0..cfg.num_users).map(|u| u % cfg.num_topics).collect();
    let likes = user_topic
        .iter()
        .map(|&home| {
            let want = rng.gen_range(cfg.min_likes..=cfg.max_likes);
            let mut chosen: Vec<u32> = Vec::with_capacity(want);
            let mut attempts = 0;
            while chosen.len() < want && attempts < 100 * want {
                attempts += 1;
                let topic = if rng.gen::<f64>() < cfg.off_topic_prob {
                    rng.gen_range(0..cfg.num_topics)
                } else {
                    home
                };
                let j = *by_topic[topic].choose(&mut rng).unwrap();
                if !chosen.contains(&j) {
                    chosen.push(j);
                }
            }
            chosen.sort_unstable();
            chosen
        })
        .collect();

    let item_tags = item_topic
        .iter()
        .map(|&t| {
            let tag = if cfg.num_topics > 1 && rng.gen::<f64>() < cfg.tag_noise {
                let other = rng.gen_range(0..cfg.num_topics - 1);
                if other >= t {
                    other + 1
                } else {
                    other
                }
            } else {
                t
            };
            vec![tag as u32]
        })
        .collect();

    SyntheticData {
        texts,
        likes,
        item_tags,
        item_topic,
        user_topic,
    }
}

impl SyntheticData {
    pub fn corpus_text(&self) -> String {
        self.texts
            .iter()
            .enumerate()
            .map(|(j, t)| format!("{j}\t{t}\n"))
            .collect()
    }

    pub fn likes_text(&self) -> String {
        counted_lines(&self.likes)
    }

    pub fn tags_text(&self) -> String {
        counted_lines(&self.item_tags)
    }
}

fn counted_lines(lists: &[Vec<u32>]) -> String {
    lists
        .iter()
        .map(|l| {
            let mut line = l.len().to_string();
            for id in l {
                line.push(' ');
                line.push_str(&id.to_string());
            }
            line.push('\n');
            line
        })
        .collect()
}
