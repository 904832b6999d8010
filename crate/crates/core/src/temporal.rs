//! Working/leisure labelling of check-ins, per-user temporal profiles and
//! the leisure-focused / working-focused user groups.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::data::{CheckIn, SplitDataset, UserId};
use crate::error::{Error, Result};

const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PeriodLabel {
    Working,
    Leisure,
}

/// Half-open working window `[start_hour, end_hour)` in local hours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkingHours {
    pub start_hour: u32,
    pub end_hour: u32,
}

impl Default for WorkingHours {
    fn default() -> Self {
        WorkingHours {
            start_hour: 8,
            end_hour: 18,
        }
    }
}

impl WorkingHours {
    pub fn validate(&self) -> Result<()> {
        if self.start_hour >= self.end_hour || self.end_hour > 24 {
            return Err(Error::InvalidParameter(format!(
                "working hours must satisfy start < end <= 24, got [{}, {})",
                self.start_hour, self.end_hour
            )));
        }
        Ok(())
    }

    pub fn label(&self, timestamp: i64) -> PeriodLabel {
        let h = hour_of_day(timestamp);
        if (self.start_hour..self.end_hour).contains(&h) {
            PeriodLabel::Working
        } else {
            PeriodLabel::Leisure
        }
    }
}

/// Timestamps are treated as local time, so no zone conversion happens.
pub fn hour_of_day(timestamp: i64) -> u32 {
    (timestamp.rem_euclid(SECONDS_PER_DAY) / 3600) as u32
}

pub fn label_period(timestamp: i64) -> PeriodLabel {
    WorkingHours::default().label(timestamp)
}

pub fn temporal_histogram<'a>(checkins: impl IntoIterator<Item = &'a CheckIn>) -> [u64; 24] {
    let mut bins = [0u64; 24];
    for c in checkins {
        bins[hour_of_day(c.timestamp) as usize] += 1;
    }
    bins
}

/// Fraction of all users who visited each POI in training, indexed by
/// [`crate::data::PoiId`].
pub fn poi_popularity(split: &SplitDataset, n_pois: usize) -> Vec<f64> {
    let mut visitors = vec![0usize; n_pois];
    for (_, s) in split.iter() {
        let distinct: HashSet<_> = s.train.iter().map(|c| c.poi).collect();
        for p in distinct {
            visitors[p.index()] += 1;
        }
    }
    let n_users = split.n_users().max(1) as f64;
    visitors.into_iter().map(|v| v as f64 / n_users).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserTemporalProfile {
    pub user: UserId,
    pub n_checkins: usize,
    pub n_working: usize,
    pub n_leisure: usize,
    pub leisure_ratio: f64,
    /// Mean popularity over the distinct POIs in the training profile.
    pub avg_popularity_consumption: f64,
}

impl UserTemporalProfile {
    pub fn working_ratio(&self) -> f64 {
        self.n_working as f64 / self.n_checkins as f64
    }
}

/// Profiles from training check-ins only, ordered by user. Users without
/// training data are skipped.
pub fn build_profiles(split: &SplitDataset, popularity: &[f64], hours: &WorkingHours) -> Vec<UserTemporalProfile> {
    let mut out = Vec::with_capacity(split.n_users());
    for (user, s) in split.iter() {
        if s.train.is_empty() {
            log::warn!("user {user} has no training check-ins; no temporal profile");
            continue;
        }
        let n_leisure = s
            .train
            .iter()
            .filter(|c| hours.label(c.timestamp) == PeriodLabel::Leisure)
            .count();
        let n = s.train.len();
        let distinct: BTreeSet<_> = s.train.iter().map(|c| c.poi).collect();
        let pop = distinct.iter().map(|p| popularity[p.index()]).sum::<f64>() / distinct.len() as f64;
        out.push(UserTemporalProfile {
            user,
            n_checkins: n,
            n_working: n - n_leisure,
            n_leisure,
            leisure_ratio: n_leisure as f64 / n as f64,
            avg_popularity_consumption: pop,
        });
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserGroup {
    LeisureFocused,
    WorkingFocused,
    Unassigned,
}

impl UserGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            UserGroup::LeisureFocused => "leisure_focused",
            UserGroup::WorkingFocused => "working_focused",
            UserGroup::Unassigned => "unassigned",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub leisure_focused: BTreeSet<UserId>,
    pub working_focused: BTreeSet<UserId>,
    pub unassigned: BTreeSet<UserId>,
}

impl GroupAssignment {
    pub fn group_of(&self, user: UserId) -> UserGroup {
        if self.leisure_focused.contains(&user) {
            UserGroup::LeisureFocused
        } else if self.working_focused.contains(&user) {
            UserGroup::WorkingFocused
        } else {
            UserGroup::Unassigned
        }
    }
}

/// Ranks users by leisure ratio (descending, ties by user ascending) and
/// takes the top and bottom `⌊quantile·|U|⌋` as the two groups.
pub fn assign_groups(profiles: &[UserTemporalProfile], quantile: f64) -> Result<GroupAssignment> {
    if !(0.0..=0.5).contains(&quantile) {
        return Err(Error::InvalidParameter(format!(
            "group quantile must be in [0, 0.5] so groups cannot overlap, got {quantile}"
        )));
    }
    if profiles.len() < 5 {
        return Err(Error::InsufficientData(format!(
            "grouping needs at least 5 users, got {}",
            profiles.len()
        )));
    }
    let mut ranked: Vec<(f64, UserId)> = profiles.iter().map(|p| (p.leisure_ratio, p.user)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let k = (quantile * ranked.len() as f64 + 1e-9).floor() as usize;
    let n = ranked.len();
    let mut out = GroupAssignment::default();
    for (i, &(_, user)) in ranked.iter().enumerate() {
        if i < k {
            out.leisure_focused.insert(user);
        } else if i >= n - k {
            out.working_focused.insert(user);
        } else {
            out.unassigned.insert(user);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub group: UserGroup,
    pub n_checkins: usize,
    pub avg_popularity_consumption: f64,
    /// Mean training profile size.
    pub avg_activity_level: f64,
    pub n_users: usize,
}

/// Statistics of the leisure-focused and working-focused groups, in that order.
pub fn group_stats(assignment: &GroupAssignment, profiles: &[UserTemporalProfile]) -> Result<Vec<GroupStats>> {
    let mut out = Vec::with_capacity(2);
    for (group, members) in [
        (UserGroup::LeisureFocused, &assignment.leisure_focused),
        (UserGroup::WorkingFocused, &assignment.working_focused),
    ] {
        let rows: Vec<&UserTemporalProfile> = profiles.iter().filter(|p| members.contains(&p.user)).collect();
        if rows.is_empty() {
            return Err(Error::EmptyGroup(group.as_str()));
        }
        let n = rows.len() as f64;
        let n_checkins: usize = rows.iter().map(|p| p.n_checkins).sum();
        out.push(GroupStats {
            group,
            n_checkins,
            avg_popularity_consumption: rows.iter().map(|p| p.avg_popularity_consumption).sum::<f64>() / n,
            avg_activity_level: n_checkins as f64 / n,
            n_users: rows.len(),
        });
    }
    Ok(out)
}

/// Ordinary least squares fit of `y` on `x` with Pearson correlation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub n: usize,
    pub slope: f64,
    pub intercept: f64,
    /// Zero when `y` is constant.
    pub pearson_r: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64], what: &'static str) -> Result<LinearFit> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("{what}: need at least 2 points")));
    }
    let mean_x = xs.iter().sum::<f64>() / n as f64;
    let mean_y = ys.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Err(Error::ZeroVariance(what));
    }
    let slope = sxy / sxx;
    let pearson_r = if syy == 0.0 {
        0.0
    } else {
        (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
    };
    Ok(LinearFit {
        n,
        slope,
        intercept: mean_y - slope * mean_x,
        pearson_r,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    /// Leisure check-ins (y) against working check-ins (x) per user.
    pub leisure_vs_working: LinearFit,
    pub leisure_ratio_vs_size: LinearFit,
    pub working_ratio_vs_size: LinearFit,
}

pub fn correlation_analysis(profiles: &[UserTemporalProfile]) -> Result<CorrelationReport> {
    let working: Vec<f64> = profiles.iter().map(|p| p.n_working as f64).collect();
    let leisure: Vec<f64> = profiles.iter().map(|p| p.n_leisure as f64).collect();
    let size: Vec<f64> = profiles.iter().map(|p| p.n_checkins as f64).collect();
    let lr: Vec<f64> = profiles.iter().map(|p| p.leisure_ratio).collect();
    let wr: Vec<f64> = profiles.iter().map(|p| p.working_ratio()).collect();
    Ok(CorrelationReport {
        leisure_vs_working: linear_fit(&working, &leisure, "working check-in counts")?,
        leisure_ratio_vs_size: linear_fit(&size, &lr, "profile sizes")?,
        working_ratio_vs_size: linear_fit(&size, &wr, "profile sizes")?,
    })
}
