use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_prefix, InputId};
use crate::ensemble::EnsembleDistribution;
use crate::error::{Error, Result};
use crate::prob::{Categorical, TokenId};

/// Next-token predictor conditioned on an input and the generated prefix.
///
/// After EOS every scorer must put all mass on EOS.
pub trait SequenceScorer {
    fn vocab_size(&self) -> usize;
    fn num_inputs(&self) -> usize;
    fn score(&self, input: InputId, prefix: &[TokenId]) -> Result<Cow<'_, Categorical>>;
}

/// A collection of scorers whose predictions form one ensemble per step.
pub trait EnsembleScorer {
    fn vocab_size(&self) -> usize;
    fn num_inputs(&self) -> usize;
    fn ensemble_score(&self, input: InputId, prefix: &[TokenId]) -> Result<EnsembleDistribution>;
}

/// Order-k Markov lookup table keyed by `(input, last k tokens)`.
///
/// The prefix is left-padded with BOS, so the first step looks up
/// `[BOS; k]`. Windows missing from the table use `fallback`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableDoc", into = "TableDoc")]
pub struct TabularModel {
    order: usize,
    vocab_size: usize,
    table: Vec<BTreeMap<Vec<TokenId>, Categorical>>,
    fallback: Categorical,
    eos: Categorical,
}

impl TabularModel {
    pub fn new(
        order: usize,
        vocab_size: usize,
        inputs: usize,
        fallback: Categorical,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid_config("order", "must be at least 1"));
        }
        if vocab_size < 2 {
            return Err(Error::invalid_config("vocab_size", "must hold BOS and EOS"));
        }
        if fallback.len() != vocab_size {
            return Err(Error::ShapeMismatch {
                expected: vocab_size,
                found: fallback.len(),
            });
        }
        Ok(TabularModel {
            order,
            vocab_size,
            table: vec![BTreeMap::new(); inputs],
            fallback,
            eos: Categorical::one_hot(vocab_size, TokenId::EOS),
        })
    }

    pub fn insert(&mut self, input: InputId, window: Vec<TokenId>, dist: Categorical) -> Result<()> {
        let inputs = self.table.len();
        if window.len() != self.order {
            return Err(Error::InvalidContext(format!(
                "window of length {} for an order-{} model",
                window.len(),
                self.order
            )));
        }
        if dist.len() != self.vocab_size {
            return Err(Error::ShapeMismatch {
                expected: self.vocab_size,
                found: dist.len(),
            });
        }
        if let Some(&t) = window.iter().find(|t| t.index() >= self.vocab_size) {
            return Err(Error::OutOfVocab {
                token: t.0,
                vocab_size: self.vocab_size,
            });
        }
        let slot = self
            .table
            .get_mut(input.index())
            .ok_or(Error::UnknownInput {
                input: input.0,
                inputs,
            })?;
        slot.insert(window, dist);
        Ok(())
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_inputs(&self) -> usize {
        self.table.len()
    }

    pub fn fallback(&self) -> &Categorical {
        &self.fallback
    }

    /// Stored entries of one input, in window order.
    pub fn entries(&self, input: InputId) -> impl Iterator<Item = (&[TokenId], &Categorical)> {
        self.table
            .get(input.index())
            .into_iter()
            .flat_map(|m| m.iter().map(|(w, d)| (w.as_slice(), d)))
    }

    pub fn entries_mut(
        &mut self,
        input: InputId,
    ) -> impl Iterator<Item = (&[TokenId], &mut Categorical)> {
        self.table
            .get_mut(input.index())
            .into_iter()
            .flat_map(|m| m.iter_mut().map(|(w, d)| (w.as_slice(), d)))
    }

    pub fn num_entries(&self) -> usize {
        self.table.iter().map(BTreeMap::len).sum()
    }

    /// Lookup window for `prefix`: the last `order` tokens, BOS-padded.
    pub fn window<'a>(&self, prefix: &'a [TokenId]) -> Cow<'a, [TokenId]> {
        window_of(self.order, prefix)
    }

    pub fn lookup(&self, input: InputId, prefix: &[TokenId]) -> Result<&Categorical> {
        let map = self.table.get(input.index()).ok_or(Error::UnknownInput {
            input: input.0,
            inputs: self.table.len(),
        })?;
        check_prefix(prefix, self.vocab_size)?;
        if prefix.last() == Some(&TokenId::EOS) {
            return Ok(&self.eos);
        }
        let window = window_of(self.order, prefix);
        Ok(map.get(window.as_ref()).unwrap_or(&self.fallback))
    }

    /// Lookup by an explicit window of length `order`.
    pub fn lookup_window(&self, input: InputId, window: &[TokenId]) -> Result<&Categorical> {
        let map = self.table.get(input.index()).ok_or(Error::UnknownInput {
            input: input.0,
            inputs: self.table.len(),
        })?;
        if window.len() != self.order {
            return Err(Error::InvalidContext(format!(
                "window of length {} for an order-{} model",
                window.len(),
                self.order
            )));
        }
        if window.last() == Some(&TokenId::EOS) {
            return Ok(&self.eos);
        }
        Ok(map.get(window).unwrap_or(&self.fallback))
    }

    pub(crate) fn same_shape(&self, other: &TabularModel) -> bool {
        self.order == other.order
            && self.vocab_size == other.vocab_size
            && self.table.len() == other.table.len()
    }
}

pub(crate) fn window_of(order: usize, prefix: &[TokenId]) -> Cow<'_, [TokenId]> {
    if prefix.len() >= order {
        Cow::Borrowed(&prefix[prefix.len() - order..])
    } else {
        let mut w = vec![TokenId::BOS; order - prefix.len()];
        w.extend_from_slice(prefix);
        Cow::Owned(w)
    }
}

impl SequenceScorer for TabularModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn num_inputs(&self) -> usize {
        TabularModel::num_inputs(self)
    }

    fn score(&self, input: InputId, prefix: &[TokenId]) -> Result<Cow<'_, Categorical>> {
        self.lookup(input, prefix).map(Cow::Borrowed)
    }
}

#[derive(Serialize, Deserialize)]
struct TableEntry {
    input: InputId,
    window: Vec<TokenId>,
    probs: Categorical,
}

#[derive(Serialize, Deserialize)]
struct TableDoc {
    order: usize,
    vocab_size: usize,
    inputs: usize,
    fallback: Categorical,
    entries: Vec<TableEntry>,
}

impl TryFrom<TableDoc> for TabularModel {
    type Error = Error;
    fn try_from(doc: TableDoc) -> Result<Self> {
        let mut m = TabularModel::new(doc.order, doc.vocab_size, doc.inputs, doc.fallback)?;
        for e in doc.entries {
            m.insert(e.input, e.window, e.probs)?;
        }
        Ok(m)
    }
}

impl From<TabularModel> for TableDoc {
    fn from(m: TabularModel) -> Self {
        let inputs = m.table.len();
        let entries = m
            .table
            .into_iter()
            .enumerate()
            .flat_map(|(i, map)| {
                map.into_iter().map(move |(window, probs)| TableEntry {
                    input: InputId(i as u32),
                    window,
                    probs,
                })
            })
            .collect();
        TableDoc {
            order: m.order,
            vocab_size: m.vocab_size,
            inputs,
            fallback: m.fallback,
            entries,
        }
    }
}

/// Perturbation settings an ensemble was built with, kept for provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbConfig {
    pub members: usize,
    /// Log-normal scale of the multiplicative noise on member probabilities.
    pub noise: f64,
    /// Dirichlet concentration used to spread leaked mass over hallucinated
    /// tokens. Small values make each member favour a different token.
    pub leak_spread: f64,
    /// Share of each member's mass, in contexts that already contain a
    /// hallucinated token, redrawn from a member-specific distribution over
    /// every non-BOS token. Members then disagree where no grounded
    /// evidence exists.
    #[serde(default)]
    pub unseen_mix: f64,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            members: crate::ensemble::DEFAULT_MEMBERS,
            noise: 0.1,
            leak_spread: 0.3,
            unseen_mix: 0.05,
            seed: 0,
        }
    }
}

/// M tabular members over one vocabulary and input set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    members: Vec<TabularModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<PerturbConfig>,
}

impl EnsembleModel {
    pub fn new(members: Vec<TabularModel>) -> Result<Self> {
        let first = members.first().ok_or(Error::EmptyEnsemble)?;
        if let Some(bad) = members.iter().find(|m| !first.same_shape(m)) {
            return Err(Error::ShapeMismatch {
                expected: first.vocab_size,
                found: bad.vocab_size,
            });
        }
        Ok(EnsembleModel {
            members,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, cfg: PerturbConfig) -> Self {
        self.provenance = Some(cfg);
        self
    }

    pub fn provenance(&self) -> Option<&PerturbConfig> {
        self.provenance.as_ref()
    }

    pub fn members(&self) -> &[TabularModel] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub(crate) fn validate(&self) -> Result<()> {
        EnsembleModel::new(self.members.clone()).map(|_| ())
    }
}

impl EnsembleScorer for EnsembleModel {
    fn vocab_size(&self) -> usize {
        self.members[0].vocab_size
    }

    fn num_inputs(&self) -> usize {
        self.members[0].table.len()
    }

    fn ensemble_score(&self, input: InputId, prefix: &[TokenId]) -> Result<EnsembleDistribution> {
        let members = self
            .members
            .iter()
            .map(|m| m.lookup(input, prefix).cloned())
            .collect::<Result<Vec<_>>>()?;
        EnsembleDistribution::new(members)
    }
}
