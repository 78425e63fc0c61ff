//! Conditional sequence scorers and the synthetic grounded world.

mod io;
mod perturb;
mod tabular;
mod vocab;
mod world;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::TokenId;

pub use io::{
    load_ensemble, load_world, save_ensemble, save_world, ensemble_from_str, ensemble_to_string,
    world_from_str, world_to_string, ENSEMBLE_SCHEMA_VERSION, WORLD_SCHEMA_VERSION,
};
pub use perturb::{perturb_members, perturb_members_with};
pub use tabular::{EnsembleModel, EnsembleScorer, PerturbConfig, SequenceScorer, TabularModel};
pub use vocab::{TokenKind, Vocab, VocabEntry, BOS_TOKEN, EOS_TOKEN};
pub use world::{generate_world, WorldConfig, WorldSpec};

/// Index of an input (the conditioning `x`) within a world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputId(pub u32);

impl InputId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for InputId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Input plus the tokens generated so far.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Context {
    pub input: InputId,
    pub prefix: Vec<TokenId>,
}

impl Context {
    pub fn new(input: InputId, prefix: Vec<TokenId>) -> Result<Self> {
        if let Some(pos) = prefix.iter().position(|&t| t == TokenId::EOS) {
            if pos + 1 != prefix.len() {
                return Err(Error::InvalidContext("tokens after EOS".into()));
            }
        }
        Ok(Context { input, prefix })
    }

    pub fn start(input: InputId) -> Self {
        Context {
            input,
            prefix: Vec::new(),
        }
    }

    pub fn is_finished(&self) -> bool {
        self.prefix.last() == Some(&TokenId::EOS)
    }
}

/// Rejects out-of-vocabulary ids, BOS inside a prefix and tokens after EOS.
pub(crate) fn check_prefix(prefix: &[TokenId], vocab_size: usize) -> Result<()> {
    for (i, &t) in prefix.iter().enumerate() {
        if t.index() >= vocab_size {
            return Err(Error::OutOfVocab {
                token: t.0,
                vocab_size,
            });
        }
        if t == TokenId::BOS {
            return Err(Error::InvalidContext("BOS inside a prefix".into()));
        }
        if t == TokenId::EOS && i + 1 != prefix.len() {
            return Err(Error::InvalidContext("tokens after EOS".into()));
        }
    }
    Ok(())
}
