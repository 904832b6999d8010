//! GeoSoCa- and LORE-style scorers built from the context components, and
//! top-N recommendation over each user's unvisited POIs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::categorical::CategoryIndex;
use crate::data::{Dataset, PoiId, SplitDataset, UserId, VisitCounts};
use crate::error::{Error, Result};
use crate::fusion::{fuse, normalize_scores, ContextScores, FusionRule, FusionWeights};
use crate::geo::{distance_km, fit_kde, Bandwidth, KdeMode, KdeModel, KdeSummary};
use crate::sequential::{amc_scores, build_l2tg, AmcParams, TransitionGraph};
use crate::social::{all_social_frequencies, fit_power_law, social_frequencies, FriendCf, PowerLawFit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Geographical (per-user KDE) × social (power law) × categorical.
    #[serde(rename = "geosoca")]
    GeoSoCa,
    /// Geographical (global bandwidth) × friend CF × additive Markov chain.
    #[serde(rename = "lore")]
    Lore,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GeoSoCa => "GeoSoCa",
            ModelKind::Lore => "LORE",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "geosoca" => Ok(ModelKind::GeoSoCa),
            "lore" => Ok(ModelKind::Lore),
            _ => Err(Error::InvalidParameter(format!("unknown model {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub rule: FusionRule,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub session_gap_hours: f64,
    pub amc: AmcParams,
    /// Restrict candidates to POIs within this distance of the user's
    /// residence. `None` ranks every unvisited POI.
    pub candidate_radius_km: Option<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            session_gap_hours: crate::sequential::DEFAULT_SESSION_GAP_HOURS,
            amc: AmcParams::default(),
            candidate_radius_km: None,
        }
    }
}

/// Every component fitted on the training split.
pub struct FittedComponents<'a> {
    dataset: &'a Dataset,
    split: &'a SplitDataset,
    counts: VisitCounts,
    user_kde: Vec<Option<KdeModel>>,
    global_kde: Vec<Option<KdeModel>>,
    global_bandwidth: Bandwidth,
    social_fit: Option<PowerLawFit>,
    categories: CategoryIndex,
    categorical_fit: Option<PowerLawFit>,
    friend_cf: FriendCf,
    graph: TransitionGraph,
    config: FitConfig,
}

fn train_points(split: &SplitDataset, user: UserId) -> Vec<(f64, f64)> {
    split
        .user(user)
        .train
        .iter()
        .map(|c| (c.latitude, c.longitude))
        .collect()
}

impl<'a> FittedComponents<'a> {
    pub fn fit(dataset: &'a Dataset, split: &'a SplitDataset, config: FitConfig) -> Result<Self> {
        config.amc.validate()?;
        let counts = VisitCounts::from_train(split, dataset.n_pois());
        let all_points: Vec<(f64, f64)> = split.train().map(|c| (c.latitude, c.longitude)).collect();
        let global_bandwidth = fit_kde(&all_points, KdeMode::Global)?.bandwidth();
        let users: Vec<UserId> = dataset.users().collect();
        let user_kde = users
            .par_iter()
            .map(|&u| fit_kde(&train_points(split, u), KdeMode::PerUser).ok())
            .collect();
        let global_kde = users
            .par_iter()
            .map(|&u| KdeModel::with_bandwidth(&train_points(split, u), global_bandwidth, KdeMode::Global).ok())
            .collect();

        let social_fit = if dataset.social().n_edges() == 0 {
            None
        } else {
            match fit_power_law(&all_social_frequencies(&counts, dataset.social())) {
                Ok(f) => Some(f),
                Err(e) => {
                    log::warn!("social context disabled: {e}");
                    None
                }
            }
        };
        let categories = CategoryIndex::new(dataset, &counts);
        let categorical_fit = if categories.has_categories() {
            match fit_power_law(&categories.all_frequencies()) {
                Ok(f) => Some(f),
                Err(e) => {
                    log::warn!("categorical context disabled: {e}");
                    None
                }
            }
        } else {
            None
        };
        let friend_cf = FriendCf::new(dataset, &counts);
        let graph = build_l2tg(split, config.session_gap_hours);
        Ok(FittedComponents {
            dataset,
            split,
            counts,
            user_kde,
            global_kde,
            global_bandwidth,
            social_fit,
            categories,
            categorical_fit,
            friend_cf,
            graph,
            config,
        })
    }

    pub fn counts(&self) -> &VisitCounts {
        &self.counts
    }

    pub fn graph(&self) -> &TransitionGraph {
        &self.graph
    }

    pub fn social_fit(&self) -> Option<&PowerLawFit> {
        self.social_fit.as_ref()
    }

    pub fn categorical_fit(&self) -> Option<&PowerLawFit> {
        self.categorical_fit.as_ref()
    }

    pub fn global_bandwidth(&self) -> Bandwidth {
        self.global_bandwidth
    }

    pub fn user_kde(&self, user: UserId) -> Option<&KdeModel> {
        self.user_kde.get(user.index()).and_then(Option::as_ref)
    }

    pub fn global_kde(&self, user: UserId) -> Option<&KdeModel> {
        self.global_kde.get(user.index()).and_then(Option::as_ref)
    }

    /// Which contexts carry a signal for `kind`.
    pub fn enabled(&self, kind: ModelKind) -> [bool; 3] {
        match kind {
            ModelKind::GeoSoCa => [true, self.social_fit.is_some(), self.categorical_fit.is_some()],
            ModelKind::Lore => [true, self.dataset.social().n_edges() > 0, true],
        }
    }

    pub fn summary(&self) -> serde_json::Value {
        let per_user: Vec<KdeSummary> = self.user_kde.iter().flatten().map(KdeModel::summary).collect();
        let mean_bw = |f: fn(&KdeSummary) -> f64| {
            if per_user.is_empty() {
                0.0
            } else {
                per_user.iter().map(f).sum::<f64>() / per_user.len() as f64
            }
        };
        serde_json::json!({
            "global_bandwidth_km": self.global_bandwidth,
            "mean_user_bandwidth_km": {
                "lat_km": mean_bw(|s| s.bandwidth.lat_km),
                "lon_km": mean_bw(|s| s.bandwidth.lon_km),
            },
            "social_power_law": self.social_fit,
            "categorical_power_law": self.categorical_fit,
            "transition_edges": self.graph.n_edges(),
        })
    }

    fn candidates(&self, user: UserId) -> Vec<PoiId> {
        let residence = self.config.candidate_radius_km.and_then(|r| {
            crate::social::residence(user, &self.counts).ok().map(|p| {
                let poi = self.dataset.poi(p);
                ((poi.latitude, poi.longitude), r)
            })
        });
        self.dataset
            .poi_ids()
            .filter(|&p| !self.counts.has_visited(user, p))
            .filter(|&p| match residence {
                Some((home, r)) => {
                    let poi = self.dataset.poi(p);
                    distance_km(home, (poi.latitude, poi.longitude)) <= r
                }
                None => true,
            })
            .collect()
    }

    /// Context scores for every POI `user` has not visited in training.
    pub fn score_candidates(&self, kind: ModelKind, user: UserId) -> Result<ScoredCandidates> {
        if user.index() >= self.split.n_users() || self.split.user(user).train.is_empty() {
            return Err(Error::UnknownUser(user.to_string()));
        }
        let pois = self.candidates(user);
        let enabled = self.enabled(kind);
        let raw: Vec<ContextScores> = match kind {
            ModelKind::GeoSoCa => {
                let kde = self.user_kde(user).expect("users with training data have a model");
                let social = social_frequencies(user, &self.counts, self.dataset.social());
                pois.iter()
                    .map(|&p| {
                        let poi = self.dataset.poi(p);
                        let geo = kde.score(poi.latitude, poi.longitude);
                        let soc = self
                            .social_fit
                            .map_or(0.0, |f| f.score(social.get(&p).copied().unwrap_or(0.0)));
                        let cat = self.categorical_fit.map_or(0.0, |f| {
                            crate::categorical::categorical_score(&f, self.categories.frequency(user, p))
                        });
                        ContextScores::with_enabled([geo, soc, cat], enabled)
                    })
                    .collect()
            }
            ModelKind::Lore => {
                let kde = self.global_kde(user).expect("users with training data have a model");
                let history: Vec<PoiId> = self.split.user(user).train.iter().map(|c| c.poi).collect();
                let seq = amc_scores(&self.graph, &history, &self.config.amc);
                pois.iter()
                    .map(|&p| {
                        let poi = self.dataset.poi(p);
                        let geo = kde.score(poi.latitude, poi.longitude);
                        let fcf = self.friend_cf.score(user, p, &self.counts, self.dataset.social());
                        let amc = seq.get(&p).copied().unwrap_or(0.0);
                        ContextScores::with_enabled([geo, fcf, amc], enabled)
                    })
                    .collect()
            }
        };
        if pois.is_empty() {
            log::debug!("user {user} has no unvisited candidates");
        }
        Ok(ScoredCandidates::new(user, pois, raw))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredCandidates {
    pub user: UserId,
    pub pois: Vec<PoiId>,
    pub raw: Vec<ContextScores>,
    /// Per-context min-max normalization of `raw` over this candidate set.
    pub normalized: Vec<ContextScores>,
}

impl ScoredCandidates {
    pub fn new(user: UserId, pois: Vec<PoiId>, raw: Vec<ContextScores>) -> Self {
        let normalized = normalize_scores(&raw);
        ScoredCandidates {
            user,
            pois,
            raw,
            normalized,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub user: UserId,
    pub items: Vec<(PoiId, f64)>,
}

impl RankedList {
    pub fn pois(&self) -> Vec<PoiId> {
        self.items.iter().map(|i| i.0).collect()
    }
}

/// Fuses every candidate, sorts by score (descending, ties by POI) and keeps
/// the first `n`. Linear weights fuse normalized scores, others raw scores.
pub fn recommend_topn(scored: &ScoredCandidates, weights: &FusionWeights, n: usize) -> RankedList {
    let source = if weights.is_linear() {
        &scored.normalized
    } else {
        &scored.raw
    };
    let mut items: Vec<(PoiId, f64)> = scored
        .pois
        .iter()
        .zip(source)
        .map(|(&p, s)| (p, fuse(s, weights)))
        .collect();
    let cmp = |a: &(PoiId, f64), b: &(PoiId, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if items.len() > n {
        items.select_nth_unstable_by(n, cmp);
        items.truncate(n);
    }
    items.sort_by(cmp);
    RankedList {
        user: scored.user,
        items,
    }
}

/// Ranks every user with training data under each of `weights`, returning one
/// map per weight vector. Users are scored in parallel; output order is by
/// user regardless of thread count.
pub fn recommend_all(
    components: &FittedComponents<'_>,
    kind: ModelKind,
    weights: &[FusionWeights],
    n: usize,
) -> Result<Vec<BTreeMap<UserId, RankedList>>> {
    let users: Vec<UserId> = components
        .split
        .iter()
        .filter(|(_, s)| !s.train.is_empty())
        .map(|(u, _)| u)
        .collect();
    let per_user: Vec<Vec<RankedList>> = users
        .par_iter()
        .map(|&u| {
            let scored = components.score_candidates(kind, u)?;
            Ok(weights.iter().map(|w| recommend_topn(&scored, w, n)).collect())
        })
        .collect::<Result<_>>()?;
    let mut out = vec![BTreeMap::new(); weights.len()];
    for (u, lists) in users.into_iter().zip(per_user) {
        for (slot, list) in out.iter_mut().zip(lists) {
            slot.insert(u, list);
        }
    }
    Ok(out)
}

/// POI lists truncated to `n`, as consumed by the evaluation.
pub fn top_pois(lists: &BTreeMap<UserId, RankedList>, n: usize) -> BTreeMap<UserId, Vec<PoiId>> {
    lists
        .iter()
        .map(|(&u, l)| (u, l.items.iter().take(n).map(|i| i.0).collect()))
        .collect()
}

/// `user_id<TAB>rank<TAB>poi_id<TAB>score`, ranks starting at 1.
pub fn recommendations_tsv(dataset: &Dataset, lists: &BTreeMap<UserId, RankedList>) -> String {
    let mut out = String::new();
    for (u, l) in lists {
        for (rank, (p, score)) in l.items.iter().enumerate() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                dataset.user_name(*u),
                rank + 1,
                dataset.poi(*p).name,
                score
            ));
        }
    }
    out
}

/// Users whose training profile contains any recommended POI; empty for a
/// correct recommender.
pub fn leaked_users(components: &FittedComponents<'_>, lists: &BTreeMap<UserId, RankedList>) -> BTreeSet<UserId> {
    lists
        .iter()
        .filter(|(u, l)| l.items.iter().any(|(p, _)| components.counts.has_visited(**u, *p)))
        .map(|(u, _)| *u)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fusion::rule_weights;

    fn scored(values: &[(u32, f64)]) -> ScoredCandidates {
        ScoredCandidates::new(
            UserId(0),
            values.iter().map(|v| PoiId(v.0)).collect(),
            values.iter().map(|v| ContextScores::new([v.1, 1.0, 1.0])).collect(),
        )
    }

    #[test]
    fn argmax_and_ties() {
        let product = rule_weights(&FusionRule::Product).unwrap();
        let s = scored(&[(1, 0.1), (0, 0.9)]);
        assert_eq!(recommend_topn(&s, &product, 1).pois(), vec![PoiId(0)]);
        let t = scored(&[(5, 0.5), (3, 0.5), (4, 0.2)]);
        assert_eq!(
            recommend_topn(&t, &product, 3).pois(),
            vec![PoiId(3), PoiId(5), PoiId(4)]
        );
        assert_eq!(recommend_topn(&t, &product, 10).items.len(), 3);
    }

    #[test]
    fn linear_weights_use_normalized_scores() {
        let sum = rule_weights(&FusionRule::Sum).unwrap();
        let s = ScoredCandidates::new(
            UserId(0),
            vec![PoiId(0), PoiId(1)],
            vec![
                ContextScores::new([100.0, 0.0, 0.0]),
                ContextScores::new([0.0, 1.0, 1.0]),
            ],
        );
        // raw sums would favour POI 0; normalized sums favour POI 1
        let l = recommend_topn(&s, &sum, 2);
        assert_eq!(l.pois(), vec![PoiId(1), PoiId(0)]);
        assert_eq!(l.items[0].1, 2.0);
    }

    #[test]
    fn model_names_parse() {
        assert_eq!("GeoSoCa".parse::<ModelKind>().unwrap(), ModelKind::GeoSoCa);
        assert_eq!("lore".parse::<ModelKind>().unwrap(), ModelKind::Lore);
        assert!("bpr".parse::<ModelKind>().is_err());
    }
}
