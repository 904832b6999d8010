//! Polynomial context fusion
//!
//! ```text
//! score = λ1·c1 + λ2·c2 + λ3·c3 + λ12·c1·c2 + λ13·c1·c3 + λ23·c2·c3 + λ123·c1·c2·c3
//! ```
//!
//! with the product, sum and weighted-sum rules as presets, per-user min-max
//! normalization of context scores, and a grid search of weighted-sum weights
//! over the probability simplex.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::GroupMetrics;

/// Three context scores for one (user, POI) pair. A disabled context (e.g.
/// categories on a dataset without them) is neutral under fusion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextScores {
    pub values: [f64; 3],
    pub enabled: [bool; 3],
}

impl ContextScores {
    pub fn new(values: [f64; 3]) -> Self {
        ContextScores {
            values,
            enabled: [true; 3],
        }
    }

    pub fn with_enabled(values: [f64; 3], enabled: [bool; 3]) -> Self {
        ContextScores { values, enabled }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda12: f64,
    pub lambda13: f64,
    pub lambda23: f64,
    pub lambda123: f64,
}

impl FusionWeights {
    pub fn as_array(&self) -> [f64; 7] {
        [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda12,
            self.lambda13,
            self.lambda23,
            self.lambda123,
        ]
    }

    /// No interaction terms: the fusion is a linear combination.
    pub fn is_linear(&self) -> bool {
        self.lambda12 == 0.0 && self.lambda13 == 0.0 && self.lambda23 == 0.0 && self.lambda123 == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionRule {
    Product,
    Sum,
    WeightedSum([f64; 3]),
}

impl FusionRule {
    pub fn name(&self) -> &'static str {
        match self {
            FusionRule::Product => "product",
            FusionRule::Sum => "sum",
            FusionRule::WeightedSum(_) => "weighted_sum",
        }
    }

    /// Additive rules combine normalized scores; the product works on raw
    /// scores as the original models do.
    pub fn uses_normalized_scores(&self) -> bool {
        !matches!(self, FusionRule::Product)
    }
}

impl fmt::Display for FusionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FusionRule::WeightedSum([a, b, c]) => write!(f, "weighted_sum({a},{b},{c})"),
            r => f.write_str(r.name()),
        }
    }
}

pub fn rule_weights(rule: &FusionRule) -> Result<FusionWeights> {
    Ok(match *rule {
        FusionRule::Product => FusionWeights {
            lambda123: 1.0,
            ..FusionWeights::default()
        },
        FusionRule::Sum => FusionWeights {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            ..FusionWeights::default()
        },
        FusionRule::WeightedSum(l) => {
            if l.iter().any(|&x| !x.is_finite() || x < 0.0) || (l.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter(format!(
                    "weighted-sum weights must be a point of the simplex, got {l:?}"
                )));
            }
            FusionWeights {
                lambda1: l[0],
                lambda2: l[1],
                lambda3: l[2],
                ..FusionWeights::default()
            }
        }
    })
}

/// Evaluates the fusion polynomial. Disabled contexts take the value 1 inside
/// interaction terms; their linear terms are dropped and the remaining linear
/// weights rescaled to keep the same total.
pub fn fuse(s: &ContextScores, w: &FusionWeights) -> f64 {
    let c = |i: usize| if s.enabled[i] { s.values[i] } else { 1.0 };
    let (c1, c2, c3) = (c(0), c(1), c(2));
    let linear = [w.lambda1, w.lambda2, w.lambda3];
    let mut linear_part = 0.0;
    if s.enabled.iter().all(|&e| e) {
        linear_part = w.lambda1 * c1 + w.lambda2 * c2 + w.lambda3 * c3;
    } else {
        let total: f64 = linear.iter().sum();
        let kept: f64 = (0..3).filter(|&i| s.enabled[i]).map(|i| linear[i]).sum();
        if kept != 0.0 {
            let scale = total / kept;
            linear_part = (0..3)
                .filter(|&i| s.enabled[i])
                .map(|i| scale * linear[i] * s.values[i])
                .sum();
        }
    }
    linear_part + w.lambda12 * c1 * c2 + w.lambda13 * c1 * c3 + w.lambda23 * c2 * c3 + w.lambda123 * c1 * c2 * c3
}

/// Min-max scaling to `[0, 1]`; a constant vector maps to 0.5.
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    });
    let range = hi - lo;
    values
        .iter()
        .map(|&v| if range > 0.0 { (v - lo) / range } else { 0.5 })
        .collect()
}

/// Normalizes each context independently over one user's candidate set.
pub fn normalize_scores(candidates: &[ContextScores]) -> Vec<ContextScores> {
    let mut out = candidates.to_vec();
    for i in 0..3 {
        let column: Vec<f64> = candidates.iter().map(|s| s.values[i]).collect();
        for (o, v) in out.iter_mut().zip(min_max(&column)) {
            o.values[i] = v;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepObjective {
    MinDeltaNdcg,
    MaxAccUnf,
}

/// All `(λ1, λ2, λ3)` with `λi = k_i · step`, `Σ k_i = 1/step`, in
/// lexicographic order.
pub fn simplex_grid(step: f64) -> Result<Vec<[f64; 3]>> {
    let m = (1.0 / step).round();
    if step.is_nan() || step <= 0.0 || m < 1.0 || (m * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!("grid step must divide 1, got {step}")));
    }
    let m = m as u32;
    let mut out = Vec::new();
    for i in 0..=m {
        for j in 0..=(m - i) {
            let k = m - i - j;
            out.push([i as f64 / m as f64, j as f64 / m as f64, k as f64 / m as f64]);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub lambdas: [f64; 3],
    pub metrics: GroupMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub best: SweepPoint,
    /// Every evaluated grid point in grid order.
    pub table: Vec<SweepPoint>,
}

fn objective_value(objective: SweepObjective, m: &GroupMetrics) -> f64 {
    match objective {
        // lower is better: negate so that larger is always better
        SweepObjective::MinDeltaNdcg => -m.delta_ndcg,
        SweepObjective::MaxAccUnf => match m.acc_unf {
            Some(v) => v,
            None if m.ndcg_all > 0.0 => f64::INFINITY,
            None => f64::NEG_INFINITY,
        },
    }
}

/// Orders sweep points best first: objective, then overall nDCG, then the
/// lexicographically smaller weight vector.
pub fn compare_points(objective: SweepObjective, a: &SweepPoint, b: &SweepPoint) -> Ordering {
    objective_value(objective, &b.metrics)
        .total_cmp(&objective_value(objective, &a.metrics))
        .then(b.metrics.ndcg_all.total_cmp(&a.metrics.ndcg_all))
        .then_with(|| {
            a.lambdas
                .iter()
                .zip(&b.lambdas)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
}

/// Evaluates every simplex grid point with `evaluate` (in parallel) and picks
/// the best one under `objective`.
pub fn weight_sweep<F>(step: f64, objective: SweepObjective, evaluate: F) -> Result<SweepResult>
where
    F: Fn([f64; 3]) -> Result<GroupMetrics> + Sync,
{
    let grid = simplex_grid(step)?;
    let table: Vec<SweepPoint> = grid
        .par_iter()
        .map(|&lambdas| evaluate(lambdas).map(|metrics| SweepPoint { lambdas, metrics }))
        .collect::<Result<_>>()?;
    let best = table
        .iter()
        .min_by(|a, b| compare_points(objective, a, b))
        .cloned()
        .expect("grid is never empty");
    Ok(SweepResult { best, table })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        assert_eq!(
            rule_weights(&FusionRule::Product).unwrap().as_array(),
            [0., 0., 0., 0., 0., 0., 1.]
        );
        assert_eq!(
            rule_weights(&FusionRule::Sum).unwrap().as_array(),
            [1., 1., 1., 0., 0., 0., 0.]
        );
        let w = rule_weights(&FusionRule::WeightedSum([1.0, 0.0, 0.0])).unwrap();
        assert_eq!(fuse(&ContextScores::new([0.37, 0.9, 0.1]), &w), 0.37);
        assert!(rule_weights(&FusionRule::WeightedSum([0.5, 0.6, 0.0])).is_err());
        assert!(rule_weights(&FusionRule::WeightedSum([1.5, -0.5, 0.0])).is_err());
        assert!(rule_weights(&FusionRule::WeightedSum([f64::NAN, 0.5, 0.5])).is_err());
    }

    #[test]
    fn fuse_examples() {
        let s = ContextScores::new([0.5, 0.4, 0.2]);
        let p = fuse(&s, &rule_weights(&FusionRule::Product).unwrap());
        assert!((p - 0.04).abs() < 1e-15);
        let q = fuse(&s, &rule_weights(&FusionRule::Sum).unwrap());
        assert!((q - 1.1).abs() < 1e-15);
        let zero = ContextScores::new([0.0; 3]);
        for rule in [
            FusionRule::Product,
            FusionRule::Sum,
            FusionRule::WeightedSum([0.2, 0.3, 0.5]),
        ] {
            assert_eq!(fuse(&zero, &rule_weights(&rule).unwrap()), 0.0);
        }
    }

    #[test]
    fn disabled_context_is_neutral() {
        let s = ContextScores::with_enabled([0.5, 0.4, 123.0], [true, true, false]);
        let p = fuse(&s, &rule_weights(&FusionRule::Product).unwrap());
        assert!((p - 0.2).abs() < 1e-15);
        let q = fuse(&s, &rule_weights(&FusionRule::Sum).unwrap());
        assert!((q - 1.5 * 0.9).abs() < 1e-15);
        let w = fuse(&s, &rule_weights(&FusionRule::WeightedSum([0.2, 0.3, 0.5])).unwrap());
        assert!((w - (0.4 * 0.5 + 0.6 * 0.4)).abs() < 1e-15);
    }

    #[test]
    fn normalization() {
        assert_eq!(min_max(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(min_max(&[3.0, 3.0, 3.0]), vec![0.5; 3]);
        let c = [ContextScores::new([1.0, 5.0, 2.0]), ContextScores::new([3.0, 5.0, 0.0])];
        let n = normalize_scores(&c);
        assert_eq!(n[0].values, [0.0, 0.5, 1.0]);
        assert_eq!(n[1].values, [1.0, 0.5, 0.0]);
    }

    #[test]
    fn grid_sizes() {
        assert_eq!(simplex_grid(0.1).unwrap().len(), 66);
        assert_eq!(simplex_grid(0.5).unwrap().len(), 6);
        assert_eq!(simplex_grid(1.0).unwrap().len(), 3);
        assert!(simplex_grid(0.3).is_err());
        assert!(simplex_grid(0.0).is_err());
        for p in simplex_grid(0.1).unwrap() {
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    fn metrics(ndcg: f64, delta: f64) -> GroupMetrics {
        GroupMetrics::from_means(ndcg, ndcg + delta / 2.0, ndcg - delta / 2.0, None)
    }

    #[test]
    fn sweep_picks_smallest_delta_then_ndcg_then_lexicographic() {
        let r = weight_sweep(0.5, SweepObjective::MinDeltaNdcg, |l| {
            Ok(if l == [0.5, 0.5, 0.0] || l == [0.0, 0.5, 0.5] {
                metrics(0.3, 0.01)
            } else if l == [1.0, 0.0, 0.0] {
                metrics(0.2, 0.01)
            } else {
                metrics(0.5, 0.2)
            })
        })
        .unwrap();
        assert_eq!(r.table.len(), 6);
        assert_eq!(r.best.lambdas, [0.0, 0.5, 0.5]);
        let r = weight_sweep(0.5, SweepObjective::MaxAccUnf, |l| Ok(metrics(0.1 + l[2], 0.1))).unwrap();
        assert_eq!(r.best.lambdas, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn sweep_propagates_errors() {
        let r = weight_sweep(0.5, SweepObjective::MinDeltaNdcg, |_| {
            Err(Error::EmptyGroup("leisure_focused"))
        });
        assert!(r.is_err());
    }
}
