use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An ordered token inventory with a designated separator (used to join
/// multi-segment inputs) and an end-of-sequence token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    separator_id: usize,
    eos_id: usize,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, separator_id: usize, eos_id: usize) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "vocabulary needs at least 2 tokens, got {}",
                tokens.len()
            )));
        }
        if separator_id >= tokens.len() || eos_id >= tokens.len() {
            return Err(Error::InvalidInput(format!(
                "separator_id {separator_id} / eos_id {eos_id} out of range for {} tokens",
                tokens.len()
            )));
        }
        let mut seen = HashMap::new();
        for (i, tok) in tokens.iter().enumerate() {
            if let Some(prev) = seen.insert(tok.clone(), i) {
                return Err(Error::InvalidInput(format!(
                    "duplicate token {tok:?} at indices {prev} and {i}"
                )));
            }
        }
        Ok(Self {
            tokens,
            separator_id,
            eos_id,
        })
    }

    /// `n` content tokens named `{prefix}0..{prefix}{n-1}`, then `<sep>` and
    /// `</s>`. Content tokens occupy indices `0..n`.
    pub fn synthetic(prefix: &str, n: usize) -> Self {
        let mut tokens: Vec<String> = (0..n).map(|i| format!("{prefix}{i}")).collect();
        tokens.push("<sep>".to_string());
        tokens.push("</s>".to_string());
        let sep = n;
        let eos = n + 1;
        Self::new(tokens, sep, eos).expect("synthetic vocabulary is well-formed")
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn separator_id(&self) -> usize {
        self.separator_id
    }

    pub fn eos_id(&self) -> usize {
        self.eos_id
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }
}

/// A sequence of vocabulary indices. No EOS is stored.
///
/// `Ord` is lexicographic on token ids; beam-search tie-breaking relies on
/// this.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Sequence {
    pub token_ids: Vec<usize>,
}

impl Sequence {
    pub fn new(token_ids: Vec<usize>) -> Self {
        Self { token_ids }
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn validate(&self, vocab: &Vocabulary) -> Result<()> {
        for &id in &self.token_ids {
            if id >= vocab.size() {
                return Err(Error::InvalidInput(format!(
                    "token id {id} out of range for vocabulary of size {}",
                    vocab.size()
                )));
            }
        }
        Ok(())
    }

    /// Token strings under `vocab`; ids must be in range.
    pub fn render(&self, vocab: &Vocabulary) -> Vec<String> {
        self.token_ids
            .iter()
            .map(|&id| vocab.token(id).to_string())
            .collect()
    }

    /// Parse token strings against `vocab`.
    pub fn from_tokens(tokens: &[String], vocab: &Vocabulary) -> Result<Self> {
        let mut ids = Vec::with_capacity(tokens.len());
        for tok in tokens {
            match vocab.id_of(tok) {
                Some(id) => ids.push(id),
                None => {
                    return Err(Error::InvalidInput(format!(
                        "token {tok:?} not in vocabulary"
                    )))
                }
            }
        }
        Ok(Self::new(ids))
    }
}

impl From<Vec<usize>> for Sequence {
    fn from(token_ids: Vec<usize>) -> Self {
        Self::new(token_ids)
    }
}
