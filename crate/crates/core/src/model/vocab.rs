use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::TokenId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Bos,
    Eos,
    /// Carries input-specific information; can be grounded or hallucinated.
    Content,
    /// Structural token, never counted as a mention.
    Function,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub token: String,
    pub kind: TokenKind,
}

/// Ordered token list. Index 0 is BOS and index 1 is EOS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<VocabEntry>", into = "Vec<VocabEntry>")]
pub struct Vocab {
    entries: Vec<VocabEntry>,
    #[serde(skip)]
    lookup: HashMap<String, TokenId>,
}

pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";

impl Vocab {
    pub fn new(entries: Vec<VocabEntry>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::InvariantViolation(
                "vocabulary must contain BOS and EOS".into(),
            ));
        }
        if entries[0].kind != TokenKind::Bos || entries[1].kind != TokenKind::Eos {
            return Err(Error::InvariantViolation(
                "BOS and EOS must occupy indices 0 and 1".into(),
            ));
        }
        let mut lookup = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if i >= 2 && matches!(e.kind, TokenKind::Bos | TokenKind::Eos) {
                return Err(Error::InvariantViolation(format!(
                    "reserved kind {:?} repeated at index {i}",
                    e.kind
                )));
            }
            if lookup.insert(e.token.clone(), TokenId(i as u32)).is_some() {
                return Err(Error::InvariantViolation(format!(
                    "duplicate token string `{}`",
                    e.token
                )));
            }
        }
        Ok(Vocab { entries, lookup })
    }

    /// BOS, EOS, then the given content and function tokens in order.
    pub fn from_words<S: AsRef<str>>(content: &[S], function: &[S]) -> Result<Self> {
        let mut entries = vec![
            VocabEntry {
                token: BOS_TOKEN.into(),
                kind: TokenKind::Bos,
            },
            VocabEntry {
                token: EOS_TOKEN.into(),
                kind: TokenKind::Eos,
            },
        ];
        let tagged = content
            .iter()
            .map(|w| (w, TokenKind::Content))
            .chain(function.iter().map(|w| (w, TokenKind::Function)));
        for (w, kind) in tagged {
            entries.push(VocabEntry {
                token: w.as_ref().to_string(),
                kind,
            });
        }
        Vocab::new(entries)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn kind(&self, t: TokenId) -> Result<TokenKind> {
        self.entries
            .get(t.index())
            .map(|e| e.kind)
            .ok_or(Error::OutOfVocab {
                token: t.0,
                vocab_size: self.len(),
            })
    }

    pub fn is_content(&self, t: TokenId) -> bool {
        self.entries
            .get(t.index())
            .is_some_and(|e| e.kind == TokenKind::Content)
    }

    pub fn token(&self, t: TokenId) -> Option<&str> {
        self.entries.get(t.index()).map(|e| e.token.as_str())
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.lookup.get(token).copied()
    }

    pub fn content_tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.ids_of(TokenKind::Content)
    }

    pub fn function_tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.ids_of(TokenKind::Function)
    }

    fn ids_of(&self, kind: TokenKind) -> impl Iterator<Item = TokenId> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.kind == kind)
            .map(|(i, _)| TokenId(i as u32))
    }

    /// Space-joined token strings; BOS and EOS are dropped.
    pub fn detokenize(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .filter(|t| **t != TokenId::BOS && **t != TokenId::EOS)
            .map(|&t| self.token(t).unwrap_or("<unk>"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl TryFrom<Vec<VocabEntry>> for Vocab {
    type Error = Error;
    fn try_from(entries: Vec<VocabEntry>) -> Result<Self> {
        Vocab::new(entries)
    }
}

impl From<Vocab> for Vec<VocabEntry> {
    fn from(v: Vocab) -> Self {
        v.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reserved_indices() {
        let v = Vocab::from_words(&["cat", "dog"], &["a"]).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.kind(TokenId::BOS).unwrap(), TokenKind::Bos);
        assert_eq!(v.kind(TokenId::EOS).unwrap(), TokenKind::Eos);
        assert_eq!(v.id("dog"), Some(TokenId(3)));
        assert_eq!(v.content_tokens().collect::<Vec<_>>(), vec![TokenId(2), TokenId(3)]);
        assert_eq!(v.function_tokens().collect::<Vec<_>>(), vec![TokenId(4)]);
        assert_eq!(v.detokenize(&[TokenId(4), TokenId(2), TokenId::EOS]), "a cat");
    }

    #[test]
    fn rejects_duplicates_and_misplaced_markers() {
        assert!(Vocab::from_words(&["cat", "cat"], &[] as &[&str]).is_err());
        assert!(Vocab::from_words(&["<eos>"], &[] as &[&str]).is_err());
        let mut entries: Vec<VocabEntry> = Vocab::from_words(&["x"], &[] as &[&str]).unwrap().into();
        entries.swap(0, 1);
        assert!(Vocab::new(entries).is_err());
    }

    #[test]
    fn serde_round_trip_rebuilds_lookup() {
        let v = Vocab::from_words(&["cat"], &["on"]).unwrap();
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocab = serde_json::from_str(&s).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("on"), Some(TokenId(3)));
    }
}
