//! Independent reference implementations shared by the property and
//! acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeSet;

use poifair::data::{CheckInRecord, PoiRecord};

/// Precision, recall and nDCG by direct enumeration of the list.
pub fn brute_metrics(list: &[u32], relevant: &BTreeSet<u32>, n: usize) -> (f64, f64, f64) {
    let top: Vec<u32> = list.iter().take(n).copied().collect();
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (i, p) in top.iter().enumerate() {
        if relevant.contains(p) {
            hits += 1;
            dcg += 1.0 / ((i + 2) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for i in 0..n.min(relevant.len()) {
        idcg += 1.0 / ((i + 2) as f64).log2();
    }
    let precision = hits as f64 / n as f64;
    let recall = if relevant.is_empty() {
        0.0
    } else {
        hits as f64 / relevant.len() as f64
    };
    let ndcg = if idcg == 0.0 { 0.0 } else { dcg / idcg };
    (precision, recall, ndcg)
}

/// Split sizes with integer arithmetic only: 7n/10 train, 2n/10 test.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let train = 7 * n / 10;
    let test = 2 * n / 10;
    (train, n - train - test, test)
}

/// One-pass cold-start filter over string records.
pub fn brute_filter(checkins: &[CheckInRecord], min_user: usize, min_poi: usize) -> Vec<(String, String, i64)> {
    let users: BTreeSet<&str> = checkins
        .iter()
        .map(|c| c.user.as_str())
        .filter(|u| checkins.iter().filter(|c| c.user == *u).count() >= min_user)
        .collect();
    let survivors: Vec<&CheckInRecord> = checkins.iter().filter(|c| users.contains(c.user.as_str())).collect();
    let pois: BTreeSet<&str> = survivors
        .iter()
        .map(|c| c.poi.as_str())
        .filter(|p| survivors.iter().filter(|c| c.poi == *p).count() >= min_poi)
        .collect();
    let mut out: Vec<_> = survivors
        .iter()
        .filter(|c| pois.contains(c.poi.as_str()))
        .map(|c| (c.user.clone(), c.poi.clone(), c.timestamp))
        .collect();
    out.sort();
    out
}

pub fn poi(id: &str, lat: f64, lon: f64) -> PoiRecord {
    PoiRecord {
        id: id.into(),
        latitude: lat,
        longitude: lon,
        category: None,
    }
}

pub fn checkin(user: &str, poi: &str, ts: i64) -> CheckInRecord {
    CheckInRecord {
        user: user.into(),
        poi: poi.into(),
        timestamp: ts,
    }
}

/// Midpoint-rule quadrature of `f` over a square of half-width
/// `half` around `(cy, cx)` with `steps` cells per side.
pub fn integrate(f: impl Fn(f64, f64) -> f64, cy: f64, cx: f64, half: f64, steps: usize) -> f64 {
    let h = 2.0 * half / steps as f64;
    let mut total = 0.0;
    for i in 0..steps {
        let y = cy - half + (i as f64 + 0.5) * h;
        for j in 0..steps {
            let x = cx - half + (j as f64 + 0.5) * h;
            total += f(y, x);
        }
    }
    total * h * h
}
