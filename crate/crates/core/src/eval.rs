//! Top-N ranking metrics and the group-fairness view of them: nDCG of the
//! leisure-focused and working-focused groups, their gap, and the ratio of
//! overall accuracy to that gap.

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use serde::{Deserialize, Serialize};

use crate::data::{PoiId, SplitDataset, UserId};
use crate::error::{Error, Result};
use crate::temporal::{GroupAssignment, UserGroup};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
}

/// Binary-relevance metrics at cutoff `n`. Precision divides by `n` even when
/// fewer items were recommended. An empty relevant set yields all zeros.
pub fn ranking_metrics(recommended: &[PoiId], relevant: &BTreeSet<PoiId>, n: usize) -> RankingMetrics {
    assert!(n >= 1, "cutoff must be at least 1");
    if relevant.is_empty() {
        return RankingMetrics::default();
    }
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (i, p) in recommended.iter().take(n).enumerate() {
        if relevant.contains(p) {
            hits += 1;
            dcg += 1.0 / ((i + 2) as f64).log2();
        }
    }
    let ideal: f64 = (0..n.min(relevant.len())).map(|i| 1.0 / ((i + 2) as f64).log2()).sum();
    RankingMetrics {
        precision: hits as f64 / n as f64,
        recall: hits as f64 / relevant.len() as f64,
        ndcg: dcg / ideal,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub ndcg_all: f64,
    pub ndcg_leisure: f64,
    pub ndcg_working: f64,
    /// `ndcg_leisure - ndcg_working`.
    pub delta_signed: f64,
    /// `|ndcg_leisure - ndcg_working|`.
    pub delta_ndcg: f64,
    /// `ndcg_all / delta_ndcg`; `None` when the gap is zero.
    pub acc_unf: Option<f64>,
    /// Relative reduction of the gap against a baseline gap; 0 without a
    /// baseline, `None` when the baseline gap is zero but this one is not.
    pub pct_delta: Option<f64>,
}

impl GroupMetrics {
    pub fn from_means(ndcg_all: f64, ndcg_leisure: f64, ndcg_working: f64, baseline_delta: Option<f64>) -> Self {
        let delta_signed = ndcg_leisure - ndcg_working;
        let delta_ndcg = delta_signed.abs();
        let acc_unf = (delta_ndcg > 0.0).then(|| ndcg_all / delta_ndcg);
        let pct_delta = match baseline_delta {
            None => Some(0.0),
            Some(b) if b > 0.0 => Some((b - delta_ndcg) / b),
            Some(_) if delta_ndcg == 0.0 => Some(0.0),
            Some(_) => None,
        };
        GroupMetrics {
            ndcg_all,
            ndcg_leisure,
            ndcg_working,
            delta_signed,
            delta_ndcg,
            acc_unf,
            pct_delta,
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (n, s) = values.fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    (n > 0).then(|| s / n as f64)
}

/// Macro-averaged nDCG over all evaluated users and over each group.
pub fn group_metrics(
    per_user: &BTreeMap<UserId, RankingMetrics>,
    assignment: &GroupAssignment,
    baseline_delta: Option<f64>,
) -> Result<GroupMetrics> {
    let all = mean(per_user.values().map(|m| m.ndcg)).ok_or(Error::EmptyGroup("all users"))?;
    let of = |group: UserGroup| {
        mean(
            per_user
                .iter()
                .filter(|(u, _)| assignment.group_of(**u) == group)
                .map(|(_, m)| m.ndcg),
        )
        .ok_or(Error::EmptyGroup(group.as_str()))
    };
    Ok(GroupMetrics::from_means(
        all,
        of(UserGroup::LeisureFocused)?,
        of(UserGroup::WorkingFocused)?,
        baseline_delta,
    ))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerUserMetrics {
    pub metrics: BTreeMap<UserId, RankingMetrics>,
    /// Users with recommendations but nothing relevant.
    pub users_without_relevant: usize,
    /// Users with relevant items but no recommendation list.
    pub users_without_recommendations: usize,
}

/// Metrics at cutoff `n` for every user that has both a list and a nonempty
/// relevant set.
pub fn per_user_metrics(
    recommendations: &BTreeMap<UserId, Vec<PoiId>>,
    relevant: &BTreeMap<UserId, BTreeSet<PoiId>>,
    n: usize,
) -> PerUserMetrics {
    let mut out = PerUserMetrics::default();
    for (user, list) in recommendations {
        match relevant.get(user) {
            Some(r) if !r.is_empty() => {
                out.metrics.insert(*user, ranking_metrics(list, r, n));
            }
            _ => out.users_without_relevant += 1,
        }
    }
    out.users_without_recommendations = relevant
        .iter()
        .filter(|(u, r)| !r.is_empty() && !recommendations.contains_key(u))
        .count();
    out
}

pub fn test_relevance(split: &SplitDataset) -> BTreeMap<UserId, BTreeSet<PoiId>> {
    split
        .iter()
        .map(|(u, s)| (u, s.test.iter().map(|c| c.poi).collect()))
        .collect()
}

pub fn validation_relevance(split: &SplitDataset) -> BTreeMap<UserId, BTreeSet<PoiId>> {
    split
        .iter()
        .map(|(u, s)| (u, s.validation.iter().map(|c| c.poi).collect()))
        .collect()
}

/// One cutoff of a report: the columns of the results table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub cutoff: usize,
    pub precision: f64,
    pub recall: f64,
    pub group: GroupMetrics,
    pub n_users: usize,
    pub n_leisure: usize,
    pub n_working: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub fusion: String,
    pub rows: Vec<EvalRow>,
    pub users_without_test: usize,
    pub users_without_recommendations: usize,
}

impl EvalReport {
    pub fn row(&self, cutoff: usize) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.cutoff == cutoff)
    }
}

/// Evaluates one (model, fusion) run against the test split at each cutoff.
/// `baseline` supplies the product-rule gaps for the relative-improvement
/// column; pass `None` when this run is the baseline.
pub fn evaluate_run(
    model: &str,
    fusion: &str,
    recommendations: &BTreeMap<UserId, Vec<PoiId>>,
    relevant: &BTreeMap<UserId, BTreeSet<PoiId>>,
    assignment: &GroupAssignment,
    cutoffs: &[usize],
    baseline: Option<&EvalReport>,
) -> Result<EvalReport> {
    let mut rows = Vec::with_capacity(cutoffs.len());
    let mut without_test = 0;
    let mut without_recs = 0;
    for &n in cutoffs {
        if n == 0 {
            return Err(Error::InvalidParameter("cutoff must be at least 1".into()));
        }
        let per_user = per_user_metrics(recommendations, relevant, n);
        without_test = per_user.users_without_relevant;
        without_recs = per_user.users_without_recommendations;
        let m = &per_user.metrics;
        let baseline_delta = baseline.and_then(|b| b.row(n)).map(|r| r.group.delta_ndcg);
        let group = group_metrics(m, assignment, baseline_delta)?;
        let count = |g: UserGroup| m.keys().filter(|u| assignment.group_of(**u) == g).count();
        rows.push(EvalRow {
            cutoff: n,
            precision: mean(m.values().map(|x| x.precision)).unwrap_or(0.0),
            recall: mean(m.values().map(|x| x.recall)).unwrap_or(0.0),
            group,
            n_users: m.len(),
            n_leisure: count(UserGroup::LeisureFocused),
            n_working: count(UserGroup::WorkingFocused),
        });
    }
    Ok(EvalReport {
        model: model.to_owned(),
        fusion: fusion.to_owned(),
        rows,
        users_without_test: without_test,
        users_without_recommendations: without_recs,
    })
}

/// Flat CSV row of the results table, one per (model, fusion, cutoff).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub fusion: String,
    #[serde(rename = "N")]
    pub cutoff: usize,
    #[serde(rename = "Pre")]
    pub precision: f64,
    #[serde(rename = "Rec")]
    pub recall: f64,
    #[serde(rename = "nDCG")]
    pub ndcg: f64,
    #[serde(rename = "nDCG_L")]
    pub ndcg_leisure: f64,
    #[serde(rename = "nDCG_W")]
    pub ndcg_working: f64,
    #[serde(rename = "dnDCG")]
    pub delta_ndcg: f64,
    pub pct_delta: Option<f64>,
    pub acc_unf: Option<f64>,
}

impl EvalReport {
    pub fn table_rows(&self) -> Vec<TableRow> {
        self.rows
            .iter()
            .map(|r| TableRow {
                model: self.model.clone(),
                fusion: self.fusion.clone(),
                cutoff: r.cutoff,
                precision: r.precision,
                recall: r.recall,
                ndcg: r.group.ndcg_all,
                ndcg_leisure: r.group.ndcg_leisure,
                ndcg_working: r.group.ndcg_working,
                delta_ndcg: r.group.delta_ndcg,
                pct_delta: r.group.pct_delta,
                acc_unf: r.group.acc_unf,
            })
            .collect()
    }
}

pub fn write_table_csv<W: io::Write>(reports: &[EvalReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        for row in r.table_rows() {
            w.serialize(row)?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn read_table_csv<R: io::Read>(input: R) -> Result<Vec<TableRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
