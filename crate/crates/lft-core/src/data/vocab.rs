//! Closed token vocabulary with reserved special ids.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// An ordered list of distinct token strings plus the ids of the four
/// reserved specials (BOS, EOS, PAD, SEP).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    pub bos: u32,
    pub eos: u32,
    pub pad: u32,
    pub sep: u32,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, bos: u32, eos: u32, pad: u32, sep: u32) -> Result<Self> {
        let v = Vocabulary {
            tokens,
            bos,
            eos,
            pad,
            sep,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.len() < 8 {
            return Err(Error::config(format!(
                "vocabulary has {} tokens, need at least 8",
                self.tokens.len()
            )));
        }
        let mut seen = HashMap::new();
        for (i, t) in self.tokens.iter().enumerate() {
            if let Some(prev) = seen.insert(t.as_str(), i) {
                return Err(Error::config(format!(
                    "token `{t}` appears at ids {prev} and {i}"
                )));
            }
        }
        let specials = [self.bos, self.eos, self.pad, self.sep];
        for &s in &specials {
            if s as usize >= self.tokens.len() {
                return Err(Error::config(format!("special id {s} out of range")));
            }
        }
        let mut uniq = specials;
        uniq.sort_unstable();
        if uniq.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("special ids must be distinct"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.tokens.iter().position(|t| t == token).map(|i| i as u32)
    }

    /// Render a token sequence for human-readable output.
    pub fn decode(&self, ids: &[u32]) -> String {
        ids.iter()
            .map(|&i| self.token(i).unwrap_or("<?>"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
