//! Categorical influence: how much a user checks in within a POI's category,
//! weighted by the POI's popularity inside that category.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{CategoryId, Dataset, PoiId, UserId, VisitCounts};
use crate::social::PowerLawFit;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalFrequency {
    pub value: f64,
    /// False when the POI has no category; the value is then 0.
    pub has_category: bool,
}

#[derive(Clone, Debug)]
pub struct CategoryIndex {
    category_of: Vec<Option<CategoryId>>,
    /// Training count over the maximum training count in the category.
    popularity_in_category: Vec<f64>,
    members: Vec<Vec<PoiId>>,
    user_category_counts: Vec<BTreeMap<CategoryId, u32>>,
}

impl CategoryIndex {
    pub fn new(dataset: &Dataset, counts: &VisitCounts) -> Self {
        let category_of: Vec<Option<CategoryId>> = dataset.pois().iter().map(|p| p.category).collect();
        let mut members = vec![Vec::new(); dataset.n_categories()];
        let mut max_count = vec![0u32; dataset.n_categories()];
        for (i, c) in category_of.iter().enumerate() {
            if let Some(c) = c {
                let p = PoiId(i as u32);
                members[c.index()].push(p);
                max_count[c.index()] = max_count[c.index()].max(counts.poi_total(p));
            }
        }
        let popularity_in_category = category_of
            .iter()
            .enumerate()
            .map(|(i, c)| match c {
                Some(c) if max_count[c.index()] > 0 => {
                    counts.poi_total(PoiId(i as u32)) as f64 / max_count[c.index()] as f64
                }
                _ => 0.0,
            })
            .collect();
        let user_category_counts = (0..counts.n_users() as u32)
            .map(|u| {
                let mut m = BTreeMap::new();
                for &(p, n) in counts.of_user(UserId(u)) {
                    if let Some(c) = category_of[p.index()] {
                        *m.entry(c).or_insert(0) += n;
                    }
                }
                m
            })
            .collect();
        CategoryIndex {
            category_of,
            popularity_in_category,
            members,
            user_category_counts,
        }
    }

    pub fn has_categories(&self) -> bool {
        !self.members.is_empty()
    }

    pub fn popularity_in_category(&self, poi: PoiId) -> f64 {
        self.popularity_in_category[poi.index()]
    }

    pub fn frequency(&self, user: UserId, poi: PoiId) -> CategoricalFrequency {
        match self.category_of[poi.index()] {
            None => CategoricalFrequency {
                value: 0.0,
                has_category: false,
            },
            Some(c) => {
                let n = self
                    .user_category_counts
                    .get(user.index())
                    .and_then(|m| m.get(&c))
                    .copied()
                    .unwrap_or(0);
                CategoricalFrequency {
                    value: n as f64 * self.popularity_in_category[poi.index()],
                    has_category: true,
                }
            }
        }
    }

    /// Every positive categorical frequency over all (user, POI) pairs, the
    /// sample for the global power-law fit.
    pub fn all_frequencies(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for cats in &self.user_category_counts {
            for (&c, &n) in cats {
                for &p in &self.members[c.index()] {
                    let y = n as f64 * self.popularity_in_category[p.index()];
                    if y > 0.0 {
                        out.push(y);
                    }
                }
            }
        }
        out
    }
}

pub fn categorical_frequency(
    user: UserId,
    poi: PoiId,
    dataset: &Dataset,
    counts: &VisitCounts,
) -> CategoricalFrequency {
    CategoryIndex::new(dataset, counts).frequency(user, poi)
}

pub fn categorical_score(fit: &PowerLawFit, y: CategoricalFrequency) -> f64 {
    if y.has_category {
        fit.score(y.value)
    } else {
        0.0
    }
}
