//! Social influence: friends' check-in frequencies transformed through a
//! fitted power-law CDF, and friend-based collaborative filtering weighted by
//! residence proximity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PoiId, SocialGraph, UserId, VisitCounts};
use crate::error::{Error, Result};
use crate::geo::distance_km;

pub const MIN_POWER_LAW_OBSERVATIONS: usize = 10;
pub const MAX_POWER_LAW_EXPONENT: f64 = 10.0;

/// Continuous power law `p(x) ∝ x^(-beta)` for `x >= x_min`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub beta: f64,
    pub x_min: f64,
    pub n_observations: usize,
    /// Set when the estimate hit the upper clamp.
    pub clamped: bool,
}

impl PowerLawFit {
    /// CDF `1 - (x / x_min)^(1 - beta)`, and 0 below `x_min`.
    pub fn score(&self, x: f64) -> f64 {
        if x < self.x_min {
            0.0
        } else {
            1.0 - (x / self.x_min).powf(1.0 - self.beta)
        }
    }
}

/// Closed-form continuous maximum-likelihood exponent
/// `1 + n / Σ ln(x_i / x_min)` over the values at or above `x_min`.
/// Infinite when every value equals `x_min`.
pub fn power_law_mle(values: &[f64], x_min: f64) -> f64 {
    let (n, log_sum) = values
        .iter()
        .filter(|&&x| x >= x_min)
        .fold((0usize, 0.0), |(n, s), &x| (n + 1, s + (x / x_min).ln()));
    1.0 + n as f64 / log_sum
}

/// Fits the exponent with `x_min = 1`, clamping it to `(1, 10]`.
pub fn fit_power_law(frequencies: &[f64]) -> Result<PowerLawFit> {
    let x_min = 1.0;
    let n = frequencies.iter().filter(|&&x| x >= x_min).count();
    if n < MIN_POWER_LAW_OBSERVATIONS {
        return Err(Error::InsufficientData(format!(
            "power-law fit needs {MIN_POWER_LAW_OBSERVATIONS} observations >= {x_min}, got {n}"
        )));
    }
    let raw = power_law_mle(frequencies, x_min);
    let clamped = raw.is_nan() || raw > MAX_POWER_LAW_EXPONENT;
    if clamped {
        log::warn!("power-law exponent {raw} clamped to {MAX_POWER_LAW_EXPONENT}");
    }
    Ok(PowerLawFit {
        beta: if clamped { MAX_POWER_LAW_EXPONENT } else { raw },
        x_min,
        n_observations: n,
        clamped,
    })
}

pub fn power_law_score(fit: &PowerLawFit, x: f64) -> f64 {
    fit.score(x)
}

/// Total training check-ins of `user`'s friends at `poi`.
pub fn social_frequency(user: UserId, poi: PoiId, counts: &VisitCounts, social: &SocialGraph) -> f64 {
    social.friends(user).iter().map(|&v| counts.count(v, poi) as f64).sum()
}

/// Social frequency of every POI that at least one friend of `user` visited,
/// sorted by POI.
pub fn social_frequencies(user: UserId, counts: &VisitCounts, social: &SocialGraph) -> BTreeMap<PoiId, f64> {
    let mut out = BTreeMap::new();
    for &v in social.friends(user) {
        for &(p, c) in counts.of_user(v) {
            *out.entry(p).or_insert(0.0) += c as f64;
        }
    }
    out
}

/// All positive social frequencies in the dataset, the sample for the
/// global power-law fit.
pub fn all_social_frequencies(counts: &VisitCounts, social: &SocialGraph) -> Vec<f64> {
    (0..counts.n_users() as u32)
        .flat_map(|u| social_frequencies(UserId(u), counts, social).into_values())
        .filter(|&x| x > 0.0)
        .collect()
}

/// The most visited training POI, ties to the smallest id.
pub fn residence(user: UserId, counts: &VisitCounts) -> Result<PoiId> {
    counts
        .of_user(user)
        .iter()
        // sorted by poi, so a strict comparison keeps the first maximum
        .fold(None, |best: Option<(PoiId, u32)>, &(p, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((p, c)),
        })
        .map(|(p, _)| p)
        .ok_or_else(|| Error::UnknownUser(user.to_string()))
}

/// Friend-based collaborative filtering with residence similarity
/// `1 / (1 + distance_km)`.
#[derive(Clone, Debug)]
pub struct FriendCf {
    residences: Vec<Option<(f64, f64)>>,
}

impl FriendCf {
    pub fn new(dataset: &Dataset, counts: &VisitCounts) -> Self {
        let residences = (0..counts.n_users() as u32)
            .map(|u| {
                residence(UserId(u), counts).ok().map(|p| {
                    let poi = dataset.poi(p);
                    (poi.latitude, poi.longitude)
                })
            })
            .collect();
        FriendCf { residences }
    }

    pub fn similarity(&self, a: UserId, b: UserId) -> Option<f64> {
        let ra = self.residences.get(a.index()).copied().flatten()?;
        let rb = self.residences.get(b.index()).copied().flatten()?;
        Some(1.0 / (1.0 + distance_km(ra, rb)))
    }

    /// Similarity-weighted mean of friends' visit counts at `poi`; friends
    /// without a residence are skipped, and no friends gives 0.
    pub fn score(&self, user: UserId, poi: PoiId, counts: &VisitCounts, social: &SocialGraph) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for &v in social.friends(user) {
            if let Some(sim) = self.similarity(user, v) {
                num += sim * counts.count(v, poi) as f64;
                den += sim;
            }
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

pub fn fcf_score(user: UserId, poi: PoiId, dataset: &Dataset, counts: &VisitCounts, social: &SocialGraph) -> f64 {
    FriendCf::new(dataset, counts).score(user, poi, counts, social)
}
