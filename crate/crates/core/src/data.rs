//! Check-in datasets: loading, preprocessing filters, per-user temporal
//! splits and the summary statistics reported for a dataset.
//!
//! Identifiers are opaque strings on disk. In memory they are interned into
//! dense indices ([`UserId`], [`PoiId`], [`CategoryId`]) assigned in sorted
//! string order, so comparing two indices gives the same answer as comparing
//! the identifiers they stand for.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PoiId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CategoryId(pub u32);

impl UserId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl PoiId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl CategoryId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u#{}", self.0)
    }
}

impl fmt::Display for PoiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p#{}", self.0)
    }
}

/// A single visit of a user to a POI. Coordinates are copied from the POI.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckIn {
    pub user: UserId,
    pub poi: PoiId,
    /// Seconds since the epoch, already in local time.
    pub timestamp: i64,
    pub latitude: f64,
    pub longitude: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Poi {
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub category: Option<CategoryId>,
}

/// Undirected friendship graph without self-loops.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SocialGraph {
    adjacency: Vec<Vec<UserId>>,
    n_edges: usize,
}

impl SocialGraph {
    /// Builds the graph over `n_users` users. Self-loops and duplicate or
    /// reversed pairs collapse; endpoints outside the user range are ignored.
    pub fn new(n_users: usize, edges: impl IntoIterator<Item = (UserId, UserId)>) -> Self {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b || a.index() >= n_users || b.index() >= n_users {
                continue;
            }
            set.insert((a.min(b), a.max(b)));
        }
        let mut adjacency = vec![Vec::new(); n_users];
        for &(a, b) in &set {
            adjacency[a.index()].push(b);
            adjacency[b.index()].push(a);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        SocialGraph {
            adjacency,
            n_edges: set.len(),
        }
    }

    pub fn friends(&self, user: UserId) -> &[UserId] {
        self.adjacency.get(user.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn are_friends(&self, a: UserId, b: UserId) -> bool {
        self.friends(a).binary_search(&b).is_ok()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// Each unordered edge once, smaller endpoint first.
    pub fn edges(&self) -> impl Iterator<Item = (UserId, UserId)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, list)| {
            let a = UserId(a as u32);
            list.iter().filter(move |&&b| a < b).map(move |&b| (a, b))
        })
    }
}

/// String-keyed check-in record, the on-disk shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckInRecord {
    pub user: String,
    pub poi: String,
    pub timestamp: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoiRecord {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub category: Option<String>,
}

/// Counts gathered while assembling a [`Dataset`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub checkin_lines: usize,
    pub checkins_parsed: usize,
    pub checkins_malformed: usize,
    pub checkins_duplicate: usize,
    pub poi_lines: usize,
    pub pois_parsed: usize,
    pub pois_malformed: usize,
    pub social_lines: usize,
    pub social_parsed: usize,
    pub social_malformed: usize,
    pub social_dropped_unknown_user: usize,
    pub social_dropped_self_loop: usize,
    pub social_duplicate: usize,
    /// Line numbers (1-based) of the first malformed lines, per file.
    pub malformed_checkin_lines: Vec<usize>,
    pub malformed_poi_lines: Vec<usize>,
    pub malformed_social_lines: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    user_names: Vec<String>,
    pois: Vec<Poi>,
    category_names: Vec<String>,
    checkins: Vec<CheckIn>,
    social: SocialGraph,
}

impl Dataset {
    /// Assembles a dataset from string-keyed records, enforcing referential
    /// integrity. Users are exactly those with at least one check-in; social
    /// edges touching other users are dropped and counted in the report.
    pub fn from_records(
        checkins: Vec<CheckInRecord>,
        pois: Vec<PoiRecord>,
        edges: Vec<(String, String)>,
    ) -> Result<(Dataset, LoadReport)> {
        let mut report = LoadReport::default();

        let mut poi_records: BTreeMap<String, PoiRecord> = BTreeMap::new();
        for p in pois {
            poi_records.entry(p.id.clone()).or_insert(p);
        }
        let category_names: Vec<String> = poi_records
            .values()
            .filter_map(|p| p.category.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let category_index: HashMap<&str, CategoryId> = category_names
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), CategoryId(i as u32)))
            .collect();
        let poi_index: HashMap<&str, PoiId> = poi_records
            .keys()
            .enumerate()
            .map(|(i, k)| (k.as_str(), PoiId(i as u32)))
            .collect();
        let poi_table: Vec<Poi> = poi_records
            .values()
            .map(|p| Poi {
                name: p.id.clone(),
                latitude: p.latitude,
                longitude: p.longitude,
                category: p.category.as_deref().map(|c| category_index[c]),
            })
            .collect();

        for (i, c) in checkins.iter().enumerate() {
            if !poi_index.contains_key(c.poi.as_str()) {
                return Err(Error::UnknownPoi {
                    poi_id: c.poi.clone(),
                    record: i + 1,
                });
            }
        }
        let user_names: Vec<String> = checkins
            .iter()
            .map(|c| c.user.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let user_index: HashMap<&str, UserId> = user_names
            .iter()
            .enumerate()
            .map(|(i, u)| (u.as_str(), UserId(i as u32)))
            .collect();

        let mut seen = HashSet::new();
        let mut interned = Vec::with_capacity(checkins.len());
        for c in &checkins {
            let user = user_index[c.user.as_str()];
            let poi = poi_index[c.poi.as_str()];
            if !seen.insert((user, poi, c.timestamp)) {
                report.checkins_duplicate += 1;
                continue;
            }
            let p = &poi_table[poi.index()];
            interned.push(CheckIn {
                user,
                poi,
                timestamp: c.timestamp,
                latitude: p.latitude,
                longitude: p.longitude,
            });
        }

        let mut pairs = Vec::with_capacity(edges.len());
        let mut edge_set = HashSet::new();
        for (a, b) in &edges {
            let (Some(&ua), Some(&ub)) = (user_index.get(a.as_str()), user_index.get(b.as_str())) else {
                report.social_dropped_unknown_user += 1;
                continue;
            };
            if ua == ub {
                report.social_dropped_self_loop += 1;
                continue;
            }
            if !edge_set.insert((ua.min(ub), ua.max(ub))) {
                report.social_duplicate += 1;
                continue;
            }
            pairs.push((ua, ub));
        }
        let social = SocialGraph::new(user_names.len(), pairs);

        Ok((
            Dataset {
                user_names,
                pois: poi_table,
                category_names,
                checkins: interned,
                social,
            },
            report,
        ))
    }

    pub fn n_users(&self) -> usize {
        self.user_names.len()
    }

    pub fn n_pois(&self) -> usize {
        self.pois.len()
    }

    pub fn n_categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> {
        (0..self.user_names.len() as u32).map(UserId)
    }

    pub fn poi_ids(&self) -> impl Iterator<Item = PoiId> {
        (0..self.pois.len() as u32).map(PoiId)
    }

    pub fn user_name(&self, user: UserId) -> &str {
        &self.user_names[user.index()]
    }

    pub fn user_id(&self, name: &str) -> Option<UserId> {
        self.user_names
            .binary_search_by(|u| u.as_str().cmp(name))
            .ok()
            .map(|i| UserId(i as u32))
    }

    pub fn poi(&self, poi: PoiId) -> &Poi {
        &self.pois[poi.index()]
    }

    pub fn pois(&self) -> &[Poi] {
        &self.pois
    }

    pub fn poi_id(&self, name: &str) -> Option<PoiId> {
        self.pois
            .binary_search_by(|p| p.name.as_str().cmp(name))
            .ok()
            .map(|i| PoiId(i as u32))
    }

    pub fn category_name(&self, category: CategoryId) -> &str {
        &self.category_names[category.index()]
    }

    /// Check-ins in input order.
    pub fn checkins(&self) -> &[CheckIn] {
        &self.checkins
    }

    pub fn social(&self) -> &SocialGraph {
        &self.social
    }

    pub fn checkin_records(&self) -> Vec<CheckInRecord> {
        self.checkins
            .iter()
            .map(|c| CheckInRecord {
                user: self.user_name(c.user).to_owned(),
                poi: self.poi(c.poi).name.clone(),
                timestamp: c.timestamp,
            })
            .collect()
    }

    pub fn poi_records(&self) -> Vec<PoiRecord> {
        self.pois
            .iter()
            .map(|p| PoiRecord {
                id: p.name.clone(),
                latitude: p.latitude,
                longitude: p.longitude,
                category: p.category.map(|c| self.category_name(c).to_owned()),
            })
            .collect()
    }

    pub fn social_records(&self) -> Vec<(String, String)> {
        self.social
            .edges()
            .map(|(a, b)| (self.user_name(a).to_owned(), self.user_name(b).to_owned()))
            .collect()
    }

    /// Writes `checkins.tsv`, `pois.tsv` and `social.tsv` into `dir` in the
    /// canonical formats read by [`parse_dataset`].
    pub fn write_tsv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut out = String::new();
        for c in self.checkin_records() {
            out.push_str(&format!("{}\t{}\t{}\n", c.user, c.poi, c.timestamp));
        }
        write_file(&dir.join("checkins.tsv"), out.as_bytes())?;
        let mut out = String::new();
        for p in self.poi_records() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                p.id,
                p.latitude,
                p.longitude,
                p.category.unwrap_or_default()
            ));
        }
        write_file(&dir.join("pois.tsv"), out.as_bytes())?;
        let mut out = String::new();
        for (a, b) in self.social_records() {
            out.push_str(&format!("{a}\t{b}\n"));
        }
        write_file(&dir.join("social.tsv"), out.as_bytes())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParseOptions {
    /// Fraction of malformed lines tolerated per file before loading fails.
    pub max_malformed_fraction: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            max_malformed_fraction: 0.01,
        }
    }
}

const REPORTED_BAD_LINES: usize = 20;

struct LineStats {
    total: usize,
    bad: Vec<usize>,
}

fn scan_lines<T>(
    path: &Path,
    opts: &ParseOptions,
    mut parse: impl FnMut(&str) -> Option<T>,
) -> Result<(Vec<T>, LineStats)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut stats = LineStats {
        total: 0,
        bad: Vec::new(),
    };
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        stats.total += 1;
        match parse(line) {
            Some(v) => out.push(v),
            None => stats.bad.push(i + 1),
        }
    }
    if stats.total > 0 && stats.bad.len() as f64 > opts.max_malformed_fraction * stats.total as f64 {
        return Err(Error::TooManyMalformed {
            path: path.to_path_buf(),
            malformed: stats.bad.len(),
            total: stats.total,
            limit: opts.max_malformed_fraction * 100.0,
            lines: stats.bad.iter().take(REPORTED_BAD_LINES).copied().collect(),
        });
    }
    Ok((out, stats))
}

fn parse_checkin_line(line: &str) -> Option<CheckInRecord> {
    let mut fields = line.split('\t');
    let user = fields.next()?.trim();
    let poi = fields.next()?.trim();
    let ts: i64 = fields.next()?.trim().parse().ok()?;
    if fields.next().is_some() || user.is_empty() || poi.is_empty() || ts <= 0 {
        return None;
    }
    Some(CheckInRecord {
        user: user.to_owned(),
        poi: poi.to_owned(),
        timestamp: ts,
    })
}

fn parse_poi_line(line: &str) -> Option<PoiRecord> {
    let mut fields = line.split('\t');
    let id = fields.next()?.trim();
    let latitude: f64 = fields.next()?.trim().parse().ok()?;
    let longitude: f64 = fields.next()?.trim().parse().ok()?;
    let category = fields.next().map(str::trim).filter(|c| !c.is_empty());
    if fields.next().is_some()
        || id.is_empty()
        || !(-90.0..=90.0).contains(&latitude)
        || !(-180.0..=180.0).contains(&longitude)
    {
        return None;
    }
    Some(PoiRecord {
        id: id.to_owned(),
        latitude,
        longitude,
        category: category.map(str::to_owned),
    })
}

fn parse_social_line(line: &str) -> Option<(String, String)> {
    let mut fields = line.split('\t');
    let a = fields.next()?.trim();
    let b = fields.next()?.trim();
    if fields.next().is_some() || a.is_empty() || b.is_empty() {
        return None;
    }
    Some((a.to_owned(), b.to_owned()))
}

/// Loads the canonical TSV files. Malformed lines are skipped and counted;
/// more than `opts.max_malformed_fraction` of them in any file is an error.
pub fn parse_dataset(
    checkin_path: &Path,
    poi_path: &Path,
    social_path: Option<&Path>,
    opts: &ParseOptions,
) -> Result<(Dataset, LoadReport)> {
    let (pois, poi_stats) = scan_lines(poi_path, opts, parse_poi_line)?;
    let mut unique = HashSet::new();
    let mut poi_dups = Vec::new();
    let pois: Vec<PoiRecord> = pois
        .into_iter()
        .enumerate()
        .filter_map(|(i, p)| {
            if unique.insert(p.id.clone()) {
                Some(p)
            } else {
                poi_dups.push(i);
                None
            }
        })
        .collect();
    let (checkins, checkin_stats) = scan_lines(checkin_path, opts, parse_checkin_line)?;
    let (edges, social_stats) = match social_path {
        Some(p) => scan_lines(p, opts, parse_social_line)?,
        None => (
            Vec::new(),
            LineStats {
                total: 0,
                bad: Vec::new(),
            },
        ),
    };
    let n_checkins = checkins.len();
    let n_edges = edges.len();
    let n_pois = pois.len();
    let (dataset, mut report) = Dataset::from_records(checkins, pois, edges)?;
    report.checkin_lines = checkin_stats.total;
    report.checkins_parsed = n_checkins;
    report.checkins_malformed = checkin_stats.bad.len();
    report.malformed_checkin_lines = checkin_stats.bad.into_iter().take(REPORTED_BAD_LINES).collect();
    report.poi_lines = poi_stats.total;
    report.pois_parsed = n_pois;
    report.pois_malformed = poi_stats.bad.len() + poi_dups.len();
    report.malformed_poi_lines = poi_stats.bad.into_iter().take(REPORTED_BAD_LINES).collect();
    report.social_lines = social_stats.total;
    report.social_parsed = n_edges;
    report.social_malformed = social_stats.bad.len();
    report.malformed_social_lines = social_stats.bad.into_iter().take(REPORTED_BAD_LINES).collect();
    Ok((dataset, report))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub users_removed: usize,
    pub pois_removed: usize,
    pub checkins_removed: usize,
    pub social_edges_removed: usize,
    /// Users that passed the user threshold but lost every check-in to POI
    /// removal; they leave the dataset.
    pub users_emptied: usize,
    /// Users that passed the user threshold but fell below it after POI
    /// removal. They are kept.
    pub users_below_threshold_after: usize,
}

/// One pass of cold-start filtering: drop users with fewer than
/// `min_user_checkins` raw check-ins, then POIs with fewer than
/// `min_poi_checkins` check-ins among the survivors, then orphaned
/// check-ins. Counts are not recomputed afterwards, so a surviving user can
/// end up below the user threshold.
pub fn preprocess_filter(
    d: &Dataset,
    min_user_checkins: usize,
    min_poi_checkins: usize,
) -> Result<(Dataset, FilterReport)> {
    let mut user_counts = vec![0usize; d.n_users()];
    for c in d.checkins() {
        user_counts[c.user.index()] += 1;
    }
    let keep_user: Vec<bool> = user_counts.iter().map(|&n| n >= min_user_checkins).collect();

    let mut poi_counts = vec![0usize; d.n_pois()];
    for c in d.checkins().iter().filter(|c| keep_user[c.user.index()]) {
        poi_counts[c.poi.index()] += 1;
    }
    let keep_poi: Vec<bool> = poi_counts.iter().map(|&n| n >= min_poi_checkins).collect();

    let kept: Vec<&CheckIn> = d
        .checkins()
        .iter()
        .filter(|c| keep_user[c.user.index()] && keep_poi[c.poi.index()])
        .collect();
    if kept.is_empty() {
        return Err(Error::DatasetExhausted);
    }

    let mut after = vec![0usize; d.n_users()];
    for c in &kept {
        after[c.user.index()] += 1;
    }
    let users_emptied = (0..d.n_users()).filter(|&u| keep_user[u] && after[u] == 0).count();
    let users_below_threshold_after = (0..d.n_users())
        .filter(|&u| keep_user[u] && after[u] > 0 && after[u] < min_user_checkins)
        .count();

    let checkins: Vec<CheckInRecord> = kept
        .iter()
        .map(|c| CheckInRecord {
            user: d.user_name(c.user).to_owned(),
            poi: d.poi(c.poi).name.clone(),
            timestamp: c.timestamp,
        })
        .collect();
    let pois: Vec<PoiRecord> = d
        .poi_records()
        .into_iter()
        .zip(&keep_poi)
        .filter_map(|(p, &k)| k.then_some(p))
        .collect();
    let (out, _) = Dataset::from_records(checkins, pois, d.social_records())?;

    let report = FilterReport {
        users_removed: d.n_users() - out.n_users(),
        pois_removed: d.n_pois() - out.n_pois(),
        checkins_removed: d.checkins().len() - out.checkins().len(),
        social_edges_removed: d.social().n_edges() - out.social().n_edges(),
        users_emptied,
        users_below_threshold_after,
    };
    Ok((out, report))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidParameter(format!(
                "split fractions must lie in [0, 1], got {parts:?}"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "split fractions must sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// `(train, validation, test)` sizes for a user with `n` check-ins.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // the epsilon absorbs representation error, e.g. 0.7 * 10 < 7
        let floor = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = floor(self.train).min(n);
        let test = floor(self.test).min(n - train);
        (train, n - train - test, test)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UserSplit {
    pub train: Vec<CheckIn>,
    pub validation: Vec<CheckIn>,
    pub test: Vec<CheckIn>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    pub users: usize,
    pub users_with_empty_validation: usize,
    pub users_with_empty_test: usize,
}

/// Per-user chronological split, indexed by [`UserId`].
#[derive(Clone, Debug, PartialEq)]
pub struct SplitDataset {
    users: Vec<UserSplit>,
    pub report: SplitReport,
}

impl SplitDataset {
    pub fn user(&self, user: UserId) -> &UserSplit {
        &self.users[user.index()]
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserId, &UserSplit)> {
        self.users.iter().enumerate().map(|(i, s)| (UserId(i as u32), s))
    }

    pub fn train(&self) -> impl Iterator<Item = &CheckIn> {
        self.users.iter().flat_map(|s| s.train.iter())
    }
}

/// Sorts each user's check-ins by `(timestamp, poi_id, input order)` and cuts
/// them into train / validation / test with `⌊train·n⌋` oldest check-ins
/// for training, `⌊test·n⌋` newest for testing, and the rest in between.
pub fn temporal_split(d: &Dataset, fractions: &SplitFractions) -> Result<SplitDataset> {
    fractions.validate()?;
    let mut per_user: Vec<Vec<CheckIn>> = vec![Vec::new(); d.n_users()];
    for c in d.checkins() {
        per_user[c.user.index()].push(*c);
    }
    let mut report = SplitReport {
        users: d.n_users(),
        ..SplitReport::default()
    };
    let mut users = Vec::with_capacity(per_user.len());
    for (i, mut list) in per_user.into_iter().enumerate() {
        if list.len() < 3 {
            return Err(Error::TooFewCheckins {
                user: d.user_name(UserId(i as u32)).to_owned(),
                count: list.len(),
                min: 3,
            });
        }
        // stable sort keeps input order among equal keys
        list.sort_by_key(|c| (c.timestamp, c.poi));
        let (n_train, n_val, _) = fractions.sizes(list.len());
        let test = list.split_off(n_train + n_val);
        let validation = list.split_off(n_train);
        if validation.is_empty() {
            report.users_with_empty_validation += 1;
        }
        if test.is_empty() {
            report.users_with_empty_test += 1;
        }
        users.push(UserSplit {
            train: list,
            validation,
            test,
        });
    }
    Ok(SplitDataset { users, report })
}

/// Training visit counts per user and per POI.
#[derive(Clone, Debug, PartialEq)]
pub struct VisitCounts {
    per_user: Vec<Vec<(PoiId, u32)>>,
    per_poi: Vec<u32>,
}

impl VisitCounts {
    pub fn from_train(split: &SplitDataset, n_pois: usize) -> Self {
        let mut per_poi = vec![0u32; n_pois];
        let per_user = split
            .iter()
            .map(|(_, s)| {
                let mut m: BTreeMap<PoiId, u32> = BTreeMap::new();
                for c in &s.train {
                    *m.entry(c.poi).or_default() += 1;
                    per_poi[c.poi.index()] += 1;
                }
                m.into_iter().collect()
            })
            .collect();
        VisitCounts { per_user, per_poi }
    }

    /// `(poi, count)` pairs sorted by POI.
    pub fn of_user(&self, user: UserId) -> &[(PoiId, u32)] {
        self.per_user.get(user.index()).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn count(&self, user: UserId, poi: PoiId) -> u32 {
        let list = self.of_user(user);
        list.binary_search_by_key(&poi, |e| e.0).map(|i| list[i].1).unwrap_or(0)
    }

    pub fn has_visited(&self, user: UserId, poi: PoiId) -> bool {
        self.count(user, poi) > 0
    }

    pub fn poi_total(&self, poi: PoiId) -> u32 {
        self.per_poi[poi.index()]
    }

    pub fn n_users(&self) -> usize {
        self.per_user.len()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_pois: usize,
    pub n_checkins: usize,
    pub n_unique_checkins: usize,
    pub n_social_links: usize,
    pub n_categories: usize,
    pub checkins_per_user: f64,
    pub checkins_per_poi: f64,
    /// Raw check-ins over the size of the user-POI matrix.
    pub density: f64,
}

pub fn dataset_stats(d: &Dataset) -> DatasetStats {
    let n_users = d.n_users();
    let n_pois = d.n_pois();
    let n_checkins = d.checkins().len();
    let n_unique_checkins = d
        .checkins()
        .iter()
        .map(|c| (c.user, c.poi))
        .collect::<HashSet<_>>()
        .len();
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    DatasetStats {
        n_users,
        n_pois,
        n_checkins,
        n_unique_checkins,
        n_social_links: d.social().n_edges(),
        n_categories: d.n_categories(),
        checkins_per_user: ratio(n_checkins, n_users),
        checkins_per_poi: ratio(n_checkins, n_pois),
        density: if n_users == 0 || n_pois == 0 {
            0.0
        } else {
            n_checkins as f64 / (n_users as f64 * n_pois as f64)
        },
    }
}

/// Truncates (not rounds) to `decimals` places, the convention used by the
/// published dataset tables (e.g. 19.5165 -> 19.51, 0.003468 -> 0.0034).
pub fn truncate_decimals(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    // nudge so values that are exact in decimal are not truncated one step low
    (x * scale + 1e-9).floor() / scale
}

impl DatasetStats {
    /// The table-style rendering: ratios at 2 decimals, density at 4.
    pub fn to_report_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_users": self.n_users,
            "n_pois": self.n_pois,
            "n_checkins": self.n_checkins,
            "n_unique_checkins": self.n_unique_checkins,
            "n_social_links": self.n_social_links,
            "n_categories": self.n_categories,
            "checkins_per_user": truncate_decimals(self.checkins_per_user, 2),
            "checkins_per_poi": truncate_decimals(self.checkins_per_poi, 2),
            "density": truncate_decimals(self.density, 4),
            "raw": self,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn rec(user: &str, poi: &str, ts: i64) -> CheckInRecord {
        CheckInRecord {
            user: user.into(),
            poi: poi.into(),
            timestamp: ts,
        }
    }

    pub(crate) fn poi(id: &str, lat: f64, lon: f64, cat: Option<&str>) -> PoiRecord {
        PoiRecord {
            id: id.into(),
            latitude: lat,
            longitude: lon,
            category: cat.map(Into::into),
        }
    }

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn parses_small_files() {
        let dir = tempfile::tempdir().unwrap();
        let c = write(dir.path(), "c.tsv", "u1\tA\t100\nu1\tB\t200\nu2\tA\t300\n");
        let p = write(dir.path(), "p.tsv", "A\t10.0\t20.0\tcafe\nB\t11.0\t21.0\t\n");
        let s = write(dir.path(), "s.tsv", "u1\tu2\nu1\tu1\nu1\tghost\n");
        let (d, report) = parse_dataset(&c, &p, Some(&s), &ParseOptions::default()).unwrap();
        assert_eq!(d.checkins().len(), 3);
        assert_eq!(d.n_pois(), 2);
        assert_eq!(d.n_users(), 2);
        assert_eq!(d.n_categories(), 1);
        assert_eq!(d.poi(d.poi_id("B").unwrap()).category, None);
        assert_eq!(d.social().n_edges(), 1);
        assert_eq!(report.social_dropped_self_loop, 1);
        assert_eq!(report.social_dropped_unknown_user, 1);
        let u1 = d.user_id("u1").unwrap();
        let u2 = d.user_id("u2").unwrap();
        assert!(d.social().are_friends(u2, u1));
        assert_eq!(d.checkins()[1].latitude, 11.0);
    }

    #[test]
    fn unknown_poi_is_an_error_naming_it() {
        let err = Dataset::from_records(
            vec![rec("u", "A", 1), rec("u", "Z", 2)],
            vec![poi("A", 0.0, 0.0, None)],
            vec![],
        )
        .unwrap_err();
        assert!(err.to_string().contains("\"Z\""), "{err}");
    }

    #[test]
    fn malformed_lines_over_threshold_fail_with_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::new();
        for i in 0..50 {
            body.push_str(&format!("u\tA\t{}\n", i + 1));
        }
        body.push_str("u\tA\tnot-a-time\n");
        let c = write(dir.path(), "c.tsv", &body);
        let p = write(dir.path(), "p.tsv", "A\t1\t1\n");
        let err = parse_dataset(&c, &p, None, &ParseOptions::default()).unwrap_err();
        match err {
            Error::TooManyMalformed { lines, .. } => assert_eq!(lines, vec![51]),
            e => panic!("unexpected {e}"),
        }
        let lenient = ParseOptions {
            max_malformed_fraction: 0.05,
        };
        let (d, report) = parse_dataset(&c, &p, None, &lenient).unwrap();
        assert_eq!(d.checkins().len(), 50);
        assert_eq!(report.checkins_malformed, 1);
        assert_eq!(report.malformed_checkin_lines, vec![51]);
    }

    #[test]
    fn rejects_out_of_range_and_nonpositive_fields() {
        assert!(parse_checkin_line("u\tA\t0").is_none());
        assert!(parse_checkin_line("u\tA\t-5").is_none());
        assert!(parse_checkin_line("u\tA").is_none());
        assert!(parse_poi_line("A\t91\t0").is_none());
        assert!(parse_poi_line("A\t0\t-181").is_none());
        assert!(parse_poi_line("A\t45.5\t-73.6\t").unwrap().category.is_none());
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = parse_dataset(
            Path::new("/nonexistent/c.tsv"),
            Path::new("/nonexistent/p.tsv"),
            None,
            &ParseOptions::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("/nonexistent/p.tsv"));
    }

    fn counts_dataset(counts: &[(&str, &str, usize)]) -> Dataset {
        let mut checkins = Vec::new();
        let mut pois = BTreeSet::new();
        let mut ts = 1;
        for &(u, p, n) in counts {
            pois.insert(p);
            for _ in 0..n {
                checkins.push(rec(u, p, ts));
                ts += 1;
            }
        }
        let pois = pois.into_iter().map(|p| poi(p, 0.0, 0.0, None)).collect();
        Dataset::from_records(checkins, pois, vec![]).unwrap().0
    }

    #[test]
    fn filter_removes_cold_users() {
        let d = counts_dataset(&[("A", "x", 16), ("B", "x", 3)]);
        let (f, report) = preprocess_filter(&d, 15, 10).unwrap();
        assert_eq!(f.n_users(), 1);
        assert!(f.user_id("B").is_none());
        assert_eq!(report.users_removed, 1);
    }

    #[test]
    fn filter_is_single_pass() {
        // u1 passes the user threshold with 15 check-ins, but 6 of them sit on
        // a POI that the POI threshold removes; u1 survives with 9.
        let d = counts_dataset(&[("u1", "big", 9), ("u1", "small", 6), ("u2", "big", 15)]);
        let (f, report) = preprocess_filter(&d, 15, 10).unwrap();
        let u1 = f.user_id("u1").unwrap();
        assert_eq!(f.checkins().iter().filter(|c| c.user == u1).count(), 9);
        assert_eq!(report.users_below_threshold_after, 1);
        assert_eq!(report.pois_removed, 1);
        // a second pass now removes u1: the policy is not a fixpoint
        let (g, _) = preprocess_filter(&f, 15, 10).unwrap();
        assert!(g.user_id("u1").is_none());
    }

    #[test]
    fn filter_exhaustion_is_an_error() {
        let d = counts_dataset(&[("a", "x", 2)]);
        assert!(matches!(preprocess_filter(&d, 15, 10), Err(Error::DatasetExhausted)));
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let f = SplitFractions::default();
        assert_eq!(f.sizes(10), (7, 1, 2));
        assert_eq!(f.sizes(3), (2, 1, 0));
        assert_eq!(f.sizes(20), (14, 2, 4));
    }

    #[test]
    fn split_orders_by_time_then_poi() {
        let d = Dataset::from_records(
            vec![rec("u", "B", 5), rec("u", "A", 5), rec("u", "C", 1)],
            vec![
                poi("A", 0.0, 0.0, None),
                poi("B", 0.0, 0.0, None),
                poi("C", 0.0, 0.0, None),
            ],
            vec![],
        )
        .unwrap()
        .0;
        let s = temporal_split(&d, &SplitFractions::default()).unwrap();
        let u = s.user(UserId(0));
        let names: Vec<&str> = u
            .train
            .iter()
            .chain(&u.validation)
            .map(|c| d.poi(c.poi).name.as_str())
            .collect();
        assert_eq!(names, ["C", "A", "B"]);
        assert_eq!(s.report.users_with_empty_test, 1);
    }

    #[test]
    fn split_rejects_tiny_users_and_bad_fractions() {
        let d = counts_dataset(&[("a", "x", 2)]);
        assert!(matches!(
            temporal_split(&d, &SplitFractions::default()),
            Err(Error::TooFewCheckins { .. })
        ));
        let bad = SplitFractions {
            train: 0.7,
            validation: 0.2,
            test: 0.2,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn stats_density_and_ratios() {
        let d = counts_dataset(&[("a", "x", 1), ("a", "y", 1), ("b", "x", 1), ("b", "y", 1)]);
        let s = dataset_stats(&d);
        assert_eq!(s.density, 1.0);
        let d = counts_dataset(&[("a", "x", 1), ("b", "y", 1)]);
        assert_eq!(dataset_stats(&d).density, 0.5);
        assert_eq!(dataset_stats(&d).n_unique_checkins, 2);
    }

    #[test]
    fn published_table_values_truncate() {
        // Yelp and Gowalla rows
        assert_eq!(truncate_decimals(1_137_521.0 / 7_135.0, 2), 159.42);
        assert_eq!(truncate_decimals(1_137_521.0 / 16_621.0, 2), 68.43);
        assert_eq!(truncate_decimals(1_137_521.0 / (7_135.0 * 16_621.0), 4), 0.0095);
        assert_eq!(truncate_decimals(620_683.0 / 5_628.0, 2), 110.28);
        assert_eq!(truncate_decimals(620_683.0 / 31_803.0, 2), 19.51);
        assert_eq!(truncate_decimals(620_683.0 / (5_628.0 * 31_803.0), 4), 0.0034);
    }
}
