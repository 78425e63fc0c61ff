//! Hallucination rates by uncertainty level.

use serde::{Deserialize, Serialize};

use super::LabeledPrediction;
use crate::ensemble::UncertaintyKind;
use crate::error::{Error, Result};

/// Bin boundaries in nats: `≤0.8`, `(0.8, 1.6]`, ..., `>4.0`.
pub const DEFAULT_BIN_EDGES: [f64; 5] = [0.8, 1.6, 2.4, 3.2, 4.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    /// Exclusive lower bound; `None` for the first bin.
    pub lower: Option<f64>,
    /// Inclusive upper bound; `None` for the last bin.
    pub upper: Option<f64>,
    pub count: usize,
    pub hallucinated: usize,
    /// `None` when the bin is empty.
    pub rate: Option<f64>,
}

impl Bin {
    pub fn label(&self) -> String {
        match (self.lower, self.upper) {
            (None, Some(u)) => format!("<={u}"),
            (Some(l), None) => format!(">{l}"),
            (Some(l), Some(u)) => format!("({l},{u}]"),
            (None, None) => "all".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinTable {
    pub kind: UncertaintyKind,
    pub edges: Vec<f64>,
    pub bins: Vec<Bin>,
}

impl BinTable {
    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// `(bin index, rate)` for every non-empty bin.
    pub fn occupied(&self) -> Vec<(usize, f64)> {
        self.bins
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.rate.map(|r| (i, r)))
            .collect()
    }
}

/// Counts predictions into `edges.len() + 1` bins of the chosen component.
pub fn bin_rates(preds: &[LabeledPrediction], edges: &[f64], kind: UncertaintyKind) -> Result<BinTable> {
    if edges.iter().any(|e| !e.is_finite()) || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::UnsortedEdges);
    }
    let mut counts = vec![(0usize, 0usize); edges.len() + 1];
    for p in preds {
        let v = p.breakdown.get(kind);
        let i = edges.partition_point(|&e| e < v);
        counts[i].0 += 1;
        counts[i].1 += p.hallucinated as usize;
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(i, (count, hallucinated))| Bin {
            lower: i.checked_sub(1).map(|j| edges[j]),
            upper: edges.get(i).copied(),
            count,
            hallucinated,
            rate: (count > 0).then(|| hallucinated as f64 / count as f64),
        })
        .collect();
    Ok(BinTable {
        kind,
        edges: edges.to_vec(),
        bins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::UncertaintyBreakdown;
    use crate::model::{Context, InputId};
    use crate::prob::TokenId;
    use proptest::prelude::*;

    fn pred(total: f64, hallucinated: bool) -> LabeledPrediction {
        LabeledPrediction {
            context: Context::start(InputId(0)),
            token: TokenId(2),
            breakdown: UncertaintyBreakdown::from_total_and_aleatoric(total, total / 2.0),
            hallucinated,
        }
    }

    #[test]
    fn default_edges_give_six_bins() {
        let t = bin_rates(&[], &DEFAULT_BIN_EDGES, UncertaintyKind::Total).unwrap();
        let labels: Vec<String> = t.bins.iter().map(Bin::label).collect();
        assert_eq!(labels, ["<=0.8", "(0.8,1.6]", "(1.6,2.4]", "(2.4,3.2]", "(3.2,4]", ">4"]);
        assert!(t.bins.iter().all(|b| b.count == 0 && b.rate.is_none()));
    }

    #[test]
    fn hand_counted_bins() {
        let preds = [
            pred(0.3, false),
            pred(0.8, true),
            pred(1.0, false),
            pred(1.5, true),
            pred(1.6, true),
            pred(4.5, true),
        ];
        let t = bin_rates(&preds, &DEFAULT_BIN_EDGES, UncertaintyKind::Total).unwrap();
        let rates: Vec<Option<f64>> = t.bins.iter().map(|b| b.rate).collect();
        assert_eq!(rates, [Some(0.5), Some(2.0 / 3.0), None, None, None, Some(1.0)]);
        assert_eq!(t.total_count(), 6);
        assert_eq!(t.occupied(), vec![(0, 0.5), (1, 2.0 / 3.0), (5, 1.0)]);

        let t = bin_rates(&preds, &DEFAULT_BIN_EDGES, UncertaintyKind::Aleatoric).unwrap();
        assert_eq!(t.bins[0].count, 5);
    }

    #[test]
    fn all_hallucinated() {
        let preds: Vec<_> = [0.1, 0.9, 2.0, 3.3, 7.0].iter().map(|&u| pred(u, true)).collect();
        let t = bin_rates(&preds, &DEFAULT_BIN_EDGES, UncertaintyKind::Total).unwrap();
        assert!(t.bins.iter().all(|b| b.rate.is_none_or(|r| r == 1.0)));
    }

    #[test]
    fn unsorted_edges() {
        assert!(matches!(bin_rates(&[], &[1.0, 0.5], UncertaintyKind::Total), Err(Error::UnsortedEdges)));
        assert!(matches!(bin_rates(&[], &[1.0, 1.0], UncertaintyKind::Total), Err(Error::UnsortedEdges)));
        assert!(matches!(bin_rates(&[], &[f64::NAN], UncertaintyKind::Total), Err(Error::UnsortedEdges)));
    }

    proptest! {
        #[test]
        fn shuffle_invariant(raw in prop::collection::vec((0.0f64..6.0, any::<bool>()), 0..60), rot in 0usize..60) {
            let preds: Vec<_> = raw.iter().map(|&(u, h)| pred(u, h)).collect();
            let mut moved = preds.clone();
            moved.reverse();
            if !moved.is_empty() {
                let k = rot % moved.len();
                moved.rotate_left(k);
            }
            let a = bin_rates(&preds, &DEFAULT_BIN_EDGES, UncertaintyKind::Total).unwrap();
            let b = bin_rates(&moved, &DEFAULT_BIN_EDGES, UncertaintyKind::Total).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.total_count(), preds.len());
            for bin in &a.bins {
                if let Some(r) = bin.rate {
                    prop_assert!((0.0..=1.0).contains(&r));
                }
            }
        }
    }
}
