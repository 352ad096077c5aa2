use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::tokenize::{is_number, tokenize};
use crate::{Error, Result};

pub const UNK_TOKEN: &str = "<UNK>";
pub const NUM_TOKEN: &str = "<NUM>";

/// Frozen token ↔ id mapping. Ids `0` and `1` are `<UNK>` and `<NUM>`;
/// other tokens follow in order of decreasing corpus frequency, ties broken
/// lexicographically.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    pub const UNK: u32 = 0;
    pub const NUM: u32 = 1;

    pub fn build<S: AsRef<str>>(raw_texts: &[S], min_word_freq: usize) -> Result<Self> {
        if raw_texts.is_empty() {
            return Err(Error::config("cannot build a vocabulary from an empty corpus"));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in raw_texts {
            for tok in tokenize(text.as_ref()) {
                if !is_number(&tok) {
                    *counts.entry(tok).or_default() += 1;
                }
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_word_freq)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(kept.into_iter().map(|(t, _)| t))
    }

    /// Vocabulary with the special tokens followed by `tokens` in order.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut id_to_token = vec![UNK_TOKEN.to_string(), NUM_TOKEN.to_string()];
        id_to_token.extend(tokens);
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (i, t) in id_to_token.iter().enumerate() {
            if token_to_id.insert(t.clone(), i as u32).is_some() {
                return Err(Error::config(format!("duplicate vocabulary token `{t}`")));
            }
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Id for an already tokenized word, applying the number and unknown-word
    /// rules.
    pub fn lookup(&self, token: &str) -> u32 {
        if is_number(token) {
            Self::NUM
        } else {
            self.id(token).unwrap_or(Self::UNK)
        }
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|t| self.lookup(t)).collect()
    }

    /// `token<TAB>id` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.id_to_token.iter().enumerate() {
            out.push_str(t);
            out.push('\t');
            out.push_str(&i.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut tokens = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let (tok, id) = line.rsplit_once('\t').ok_or(Error::Parse {
                line: n + 1,
                msg: "expected `token<TAB>id`".into(),
            })?;
            let id: usize = id.parse().map_err(|_| Error::Parse {
                line: n + 1,
                msg: format!("bad id `{id}`"),
            })?;
            if id != n {
                return Err(Error::Parse {
                    line: n + 1,
                    msg: format!("ids must be dense and ordered, got {id}"),
                });
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < 2 || tokens[0] != UNK_TOKEN || tokens[1] != NUM_TOKEN {
            return Err(Error::config("vocabulary must start with <UNK> and <NUM>"));
        }
        Self::from_tokens(tokens.into_iter().skip(2))
    }
}

/// Tokenized item text.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub item_id: u32,
    pub tokens: Vec<u32>,
}

impl Document {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub fn encode_document(item_id: u32, text: &str, vocab: &Vocabulary) -> Document {
    Document {
        item_id,
        tokens: vocab.encode(text),
    }
}
