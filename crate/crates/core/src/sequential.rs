//! Sequential influence: a location-to-location transition graph mined from
//! consecutive training check-ins, scored with an additive Markov chain over
//! the most recent part of a user's history.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{CheckIn, PoiId, SplitDataset};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransitionGraph {
    edges: BTreeMap<PoiId, BTreeMap<PoiId, u64>>,
    out_degree: BTreeMap<PoiId, u64>,
}

impl TransitionGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_transition(&mut self, from: PoiId, to: PoiId) {
        *self.edges.entry(from).or_default().entry(to).or_insert(0) += 1;
        *self.out_degree.entry(from).or_insert(0) += 1;
    }

    /// Adds the transitions between consecutive check-ins of one user whose
    /// time gap is at most `max_gap_seconds`. `sequence` must be in time order.
    pub fn add_sequence(&mut self, sequence: &[CheckIn], max_gap_seconds: i64) {
        for w in sequence.windows(2) {
            if w[1].timestamp - w[0].timestamp <= max_gap_seconds {
                self.add_transition(w[0].poi, w[1].poi);
            }
        }
    }

    pub fn count(&self, from: PoiId, to: PoiId) -> u64 {
        self.edges.get(&from).and_then(|m| m.get(&to)).copied().unwrap_or(0)
    }

    pub fn out_degree(&self, from: PoiId) -> u64 {
        self.out_degree.get(&from).copied().unwrap_or(0)
    }

    /// `count(from -> to) / out_degree(from)`, or 0 without out-edges.
    pub fn probability(&self, from: PoiId, to: PoiId) -> f64 {
        match self.out_degree(from) {
            0 => 0.0,
            d => self.count(from, to) as f64 / d as f64,
        }
    }

    pub fn successors(&self, from: PoiId) -> impl Iterator<Item = (PoiId, u64)> + '_ {
        self.edges
            .get(&from)
            .into_iter()
            .flat_map(|m| m.iter().map(|(&p, &c)| (p, c)))
    }

    pub fn n_edges(&self) -> usize {
        self.edges.values().map(BTreeMap::len).sum()
    }

    pub fn sources(&self) -> impl Iterator<Item = PoiId> + '_ {
        self.edges.keys().copied()
    }

    /// `src<TAB>dst<TAB>count` lines, sorted by source then destination.
    pub fn to_tsv(&self, poi_name: impl Fn(PoiId) -> String) -> String {
        let mut out = String::new();
        for (&a, m) in &self.edges {
            for (&b, &c) in m {
                out.push_str(&format!("{}\t{}\t{}\n", poi_name(a), poi_name(b), c));
            }
        }
        out
    }
}

pub const DEFAULT_SESSION_GAP_HOURS: f64 = 24.0;

/// Builds the transition graph over every user's training sequence.
pub fn build_l2tg(split: &SplitDataset, session_gap_hours: f64) -> TransitionGraph {
    let max_gap = (session_gap_hours * 3600.0).round() as i64;
    let mut g = TransitionGraph::new();
    for (_, s) in split.iter() {
        g.add_sequence(&s.train, max_gap);
    }
    g
}

/// Memory of the additive Markov chain: the `memory` most recent history
/// entries, weighted by `decay^k` (k = 1 for the latest) and normalized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmcParams {
    pub decay: f64,
    pub memory: usize,
}

impl Default for AmcParams {
    fn default() -> Self {
        AmcParams { decay: 0.5, memory: 5 }
    }
}

impl AmcParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay > 0.0 && self.decay < 1.0) || self.memory == 0 {
            return Err(Error::InvalidParameter(format!(
                "AMC needs decay in (0, 1) and memory >= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Normalized weights for a history of length `len`, latest first.
    pub fn weights(&self, len: usize) -> Vec<f64> {
        let m = self.memory.min(len);
        let raw: Vec<f64> = (1..=m).map(|k| self.decay.powi(k as i32)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// `Σ_k w_k · T(h_{last-k+1} -> poi)` over the recent history (most recent
/// last). History entries without out-edges still consume their weight.
pub fn amc_score(graph: &TransitionGraph, history: &[PoiId], poi: PoiId, params: &AmcParams) -> f64 {
    params
        .weights(history.len())
        .iter()
        .zip(history.iter().rev())
        .map(|(w, &h)| w * graph.probability(h, poi))
        .sum()
}

/// Scores for every reachable POI at once: the sparse form of [`amc_score`]
/// over all candidates.
pub fn amc_scores(graph: &TransitionGraph, history: &[PoiId], params: &AmcParams) -> BTreeMap<PoiId, f64> {
    let mut out = BTreeMap::new();
    for (w, &h) in params.weights(history.len()).iter().zip(history.iter().rev()) {
        let d = graph.out_degree(h);
        if d == 0 {
            continue;
        }
        for (p, c) in graph.successors(h) {
            *out.entry(p).or_insert(0.0) += w * c as f64 / d as f64;
        }
    }
    out
}
