//! Tokenization and vocabulary.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Instance};
use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const UNK_ID: u32 = 0;

/// Lowercases and splits on anything that is not alphanumeric or `_`.
///
/// Underscores are kept so that synthetic marker tokens such as `zz_cue`
/// survive as a single token.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Dense token-to-id map. Id 0 is reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab {
            tokens: vec![UNK.to_owned()],
            index: HashMap::from([(UNK.to_owned(), UNK_ID)]),
        };
        for t in tokens {
            vocab.insert(t.into());
        }
        vocab
    }

    fn insert(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len() as u32);
            self.tokens.push(token);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Always false: the unknown token is present in every vocabulary.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode_text(&self, text: &str) -> Vec<u32> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }

    pub fn encode(&self, instance: &Instance) -> EncodedInstance {
        EncodedInstance {
            context: self.encode_text(&instance.context),
            choices: instance
                .choices
                .iter()
                .map(|c| self.encode_text(c))
                .collect(),
            label: instance.label,
        }
    }

    pub fn encode_dataset(&self, dataset: &Dataset) -> Vec<EncodedInstance> {
        dataset.instances.iter().map(|i| self.encode(i)).collect()
    }
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        // The first entry is the unknown token by construction.
        Vocab::from_tokens(tokens.into_iter().filter(|t| t != UNK))
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

/// Builds a vocabulary from every context and choice in `datasets`.
///
/// Tokens are ordered by first occurrence and kept when they occur at
/// least `min_count` times in total.
pub fn build_vocab(datasets: &[&Dataset], min_count: usize) -> Result<Vocab> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut order: Vec<String> = Vec::new();
    for ds in datasets {
        for inst in &ds.instances {
            let texts = std::iter::once(&inst.context).chain(inst.choices.iter());
            for text in texts {
                for tok in tokenize(text) {
                    let c = counts.entry(tok.clone()).or_insert(0);
                    if *c == 0 {
                        order.push(tok);
                    }
                    *c += 1;
                }
            }
        }
    }
    if order.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let min_count = min_count.max(1);
    Ok(Vocab::from_tokens(
        order.into_iter().filter(|t| counts[t] >= min_count),
    ))
}

/// An instance with its texts mapped to vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInstance {
    pub context: Vec<u32>,
    pub choices: Vec<Vec<u32>>,
    pub label: usize,
}
