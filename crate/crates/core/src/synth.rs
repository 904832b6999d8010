//! Seeded synthetic check-in data with a built-in temporal bias.
//!
//! POIs sit in neighbourhoods spread over a city-sized box. Leisure-type
//! users check in mostly outside working hours and belong to circles of
//! friends who share a few favourite categories and a pool of venues across
//! the city. Working-type users check in mostly during working hours, stay
//! around their own neighbourhood and have friends who go elsewhere. Mixed
//! users do a bit of both.

use rand::distributions::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{CheckInRecord, Dataset, LoadReport, PoiRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Archetype {
    Leisure,
    Working,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_pois: usize,
    pub n_neighborhoods: usize,
    pub n_categories: usize,
    pub min_checkins: usize,
    pub max_checkins: usize,
    pub friends_per_user: usize,
    /// Share of leisure-type and working-type users; the rest is mixed.
    pub leisure_share: f64,
    pub working_share: f64,
    /// Leisure-type users per circle.
    pub circle_size: usize,
    /// Venues shared by a circle.
    pub circle_pool: usize,
    /// Neighbourhood spread in degrees.
    pub spread_deg: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 200,
            n_pois: 800,
            n_neighborhoods: 16,
            n_categories: 12,
            min_checkins: 30,
            max_checkins: 60,
            friends_per_user: 5,
            leisure_share: 0.35,
            working_share: 0.35,
            circle_size: 8,
            circle_pool: 40,
            spread_deg: 0.006,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("synthetic config: {m}")));
        if self.n_users < 2 || self.n_pois < 2 || self.n_neighborhoods == 0 || self.n_categories == 0 {
            return bad("needs at least 2 users, 2 POIs, one neighbourhood and one category");
        }
        if self.min_checkins < 3 || self.max_checkins < self.min_checkins {
            return bad("check-in range must satisfy 3 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.leisure_share)
            || !(0.0..=1.0).contains(&self.working_share)
            || self.leisure_share + self.working_share > 1.0
        {
            return bad("archetype shares must lie in [0, 1] and sum to at most 1");
        }
        if self.circle_size == 0 || self.circle_pool == 0 || self.spread_deg <= 0.0 {
            return bad("circle size, circle pool and spread must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthData {
    pub checkins: Vec<CheckInRecord>,
    pub pois: Vec<PoiRecord>,
    pub social: Vec<(String, String)>,
    /// Archetype per generated user, indexed like the `u#####` names.
    pub archetypes: Vec<Archetype>,
}

impl SynthData {
    pub fn into_dataset(self) -> Result<(Dataset, LoadReport)> {
        Dataset::from_records(self.checkins, self.pois, self.social)
    }
}

const LAT_RANGE: (f64, f64) = (40.60, 40.90);
const LON_RANGE: (f64, f64) = (-74.05, -73.75);
const START: i64 = 1_500_000_000;
const LEISURE_HOURS: [i64; 14] = [0, 1, 6, 7, 18, 18, 19, 19, 20, 20, 21, 21, 22, 23];

fn user_name(i: usize) -> String {
    format!("u{i:05}")
}

fn poi_name(i: usize) -> String {
    format!("p{i:05}")
}

struct Circle {
    members: Vec<usize>,
    pool: Vec<usize>,
    popularity: WeightedIndex<f64>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jitter = Normal::new(0.0, cfg.spread_deg).expect("positive spread");

    let centers: Vec<(f64, f64)> = (0..cfg.n_neighborhoods)
        .map(|_| {
            (
                rng.gen_range(LAT_RANGE.0..LAT_RANGE.1),
                rng.gen_range(LON_RANGE.0..LON_RANGE.1),
            )
        })
        .collect();
    let mut pois = Vec::with_capacity(cfg.n_pois);
    let mut by_hood: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_neighborhoods];
    let mut by_category: Vec<Vec<usize>> = vec![Vec::new(); cfg.n_categories];
    for i in 0..cfg.n_pois {
        let h = i % cfg.n_neighborhoods;
        let c = rng.gen_range(0..cfg.n_categories);
        pois.push(PoiRecord {
            id: poi_name(i),
            latitude: centers[h].0 + jitter.sample(&mut rng),
            longitude: centers[h].1 + jitter.sample(&mut rng),
            category: Some(format!("c{c:02}")),
        });
        by_hood[h].push(i);
        by_category[c].push(i);
    }

    let mut archetypes = Vec::with_capacity(cfg.n_users);
    let mut home = Vec::with_capacity(cfg.n_users);
    for _ in 0..cfg.n_users {
        let r: f64 = rng.gen();
        archetypes.push(if r < cfg.leisure_share {
            Archetype::Leisure
        } else if r < cfg.leisure_share + cfg.working_share {
            Archetype::Working
        } else {
            Archetype::Mixed
        });
        home.push(rng.gen_range(0..cfg.n_neighborhoods));
    }

    let leisure_users: Vec<usize> = (0..cfg.n_users)
        .filter(|&u| archetypes[u] == Archetype::Leisure)
        .collect();
    let mut circles = Vec::new();
    let mut circle_of = vec![None; cfg.n_users];
    for members in leisure_users.chunks(cfg.circle_size) {
        let mut tastes: Vec<usize> = (0..cfg.n_categories).collect();
        tastes.shuffle(&mut rng);
        let candidates: Vec<usize> = tastes[..2.min(tastes.len())]
            .iter()
            .flat_map(|&c| by_category[c].iter().copied())
            .collect();
        let pool: Vec<usize> = candidates
            .choose_multiple(&mut rng, cfg.circle_pool.min(candidates.len()))
            .copied()
            .collect();
        if pool.is_empty() {
            continue;
        }
        let popularity =
            WeightedIndex::new((0..pool.len()).map(|k| 1.0 / (k as f64 + 1.0).sqrt())).expect("positive weights");
        for &m in members {
            circle_of[m] = Some(circles.len());
        }
        circles.push(Circle {
            members: members.to_vec(),
            pool,
            popularity,
        });
    }

    let mut social = Vec::new();
    for (u, circle) in circle_of.iter().enumerate() {
        for _ in 0..cfg.friends_per_user {
            let v = match *circle {
                Some(c) => *circles[c].members.choose(&mut rng).expect("nonempty circle"),
                None => rng.gen_range(0..cfg.n_users),
            };
            if v != u {
                social.push((user_name(u.min(v)), user_name(u.max(v))));
            }
        }
    }
    social.sort();
    social.dedup();

    let mut checkins = Vec::new();
    for u in 0..cfg.n_users {
        let local = &by_hood[home[u]];
        let leisure_prob = match archetypes[u] {
            Archetype::Leisure => 0.85,
            Archetype::Working => 0.15,
            Archetype::Mixed => 0.5,
        };
        let n = rng.gen_range(cfg.min_checkins..=cfg.max_checkins);
        let mut day = 0i64;
        for _ in 0..n {
            day += rng.gen_range(1..3);
            let leisure = rng.gen_bool(leisure_prob);
            let hour = if leisure {
                *LEISURE_HOURS.choose(&mut rng).expect("nonempty")
            } else {
                rng.gen_range(8..18)
            };
            let ts = START + day * 86_400 + hour * 3600 + rng.gen_range(0..3600);
            let poi = match (circle_of[u], archetypes[u]) {
                (Some(c), _) => circles[c].pool[circles[c].popularity.sample(&mut rng)],
                (None, Archetype::Mixed) if leisure => rng.gen_range(0..cfg.n_pois),
                _ => match local.choose(&mut rng) {
                    Some(&p) => p,
                    None => rng.gen_range(0..cfg.n_pois),
                },
            };
            checkins.push(CheckInRecord {
                user: user_name(u),
                poi: poi_name(poi),
                timestamp: ts,
            });
        }
    }

    Ok(SynthData {
        checkins,
        pois,
        social,
        archetypes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_data() {
        let cfg = SynthConfig {
            n_users: 20,
            ..SynthConfig::default()
        };
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.checkins, b.checkins);
        assert_eq!(a.social, b.social);
        let c = generate(&SynthConfig { seed: 7, ..cfg }).unwrap();
        assert_ne!(a.checkins, c.checkins);
    }

    #[test]
    fn sizes_follow_config() {
        let cfg = SynthConfig {
            n_users: 30,
            ..SynthConfig::default()
        };
        let data = generate(&cfg).unwrap();
        assert_eq!(data.pois.len(), cfg.n_pois);
        assert_eq!(data.archetypes.len(), 30);
        let (d, report) = data.into_dataset().unwrap();
        assert_eq!(d.n_users(), 30);
        assert!(d.checkins().len() + report.checkins_duplicate >= 30 * cfg.min_checkins);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SynthConfig {
            min_checkins: 2,
            ..SynthConfig::default()
        };
        assert!(generate(&bad).is_err());
    }
}
