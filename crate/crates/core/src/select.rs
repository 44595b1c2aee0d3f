//! Active-learning batch selection over the pool of unannotated images.
//!
//! Built-in strategies:
//!
//! * `entropy`: mean binary entropy (nats) of the pre-segmentation map,
//!   most uncertain first.
//! * `margin`: mean `|p - 0.5|`, smallest first.
//! * `random`: uniform sample without replacement. The pool is sorted by
//!   image id, then a partial Fisher-Yates shuffle draws `k` items using
//!   SplitMix64 seeded with the given seed and rejection-sampled bounded
//!   integers. This sequence is part of the public contract and never
//!   changes.
//!
//! Ties are broken by ascending image id. Images without a probability map
//! rank after every scored image.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vision::ProbabilityMap;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SelectError {
    #[error("unknown strategy {0:?} (expected random, entropy or margin)")]
    UnknownStrategy(String),
    #[error("batch size must be at least 1")]
    InvalidBatchSize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyName {
    Random,
    Entropy,
    Margin,
}

impl std::str::FromStr for StrategyName {
    type Err = SelectError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Self::Random),
            "entropy" => Ok(Self::Entropy),
            "margin" => Ok(Self::Margin),
            other => Err(SelectError::UnknownStrategy(other.to_owned())),
        }
    }
}

impl StrategyName {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Entropy => "entropy",
            Self::Margin => "margin",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySpec {
    pub name: StrategyName,
    pub seed: u64,
    pub k: usize,
}

impl StrategySpec {
    pub fn parse(name: &str, k: usize, seed: Option<u64>) -> Result<Self, SelectError> {
        if k == 0 {
            return Err(SelectError::InvalidBatchSize);
        }
        Ok(Self {
            name: name.parse()?,
            seed: seed.unwrap_or(0),
            k,
        })
    }

    pub fn needs_maps(&self) -> bool {
        self.name != StrategyName::Random
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub image_id: String,
    pub score: f64,
    pub strategy: String,
}

/// A scoring rule that can be plugged into [`rank`].
pub trait AcquisitionScorer {
    fn name(&self) -> &str;
    fn score(&self, map: &ProbabilityMap) -> f64;
    /// Whether larger scores mean "annotate sooner".
    fn descending(&self) -> bool;
}

pub struct EntropyScorer;
pub struct MarginScorer;

impl AcquisitionScorer for EntropyScorer {
    fn name(&self) -> &str {
        "entropy"
    }
    fn score(&self, map: &ProbabilityMap) -> f64 {
        score_entropy(map)
    }
    fn descending(&self) -> bool {
        true
    }
}

impl AcquisitionScorer for MarginScorer {
    fn name(&self) -> &str {
        "margin"
    }
    fn score(&self, map: &ProbabilityMap) -> f64 {
        score_margin(map)
    }
    fn descending(&self) -> bool {
        false
    }
}

fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        0.0
    } else {
        -p * p.ln() - (1.0 - p) * (1.0 - p).ln()
    }
}

/// Mean per-pixel binary entropy in nats.
pub fn score_entropy(map: &ProbabilityMap) -> f64 {
    let v = map.values();
    v.iter().map(|&p| binary_entropy(p)).sum::<f64>() / v.len() as f64
}

/// Mean distance from 0.5; lower is more uncertain.
pub fn score_margin(map: &ProbabilityMap) -> f64 {
    let v = map.values();
    v.iter().map(|&p| (p - 0.5).abs()).sum::<f64>() / v.len() as f64
}

/// SplitMix64.
#[derive(Clone, Debug)]
pub struct SplitMix64(u64);

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform integer in `0..n` by rejection of the biased low range.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let threshold = n.wrapping_neg() % n;
        loop {
            let r = self.next_u64();
            if r >= threshold {
                return r % n;
            }
        }
    }
}

/// Sorts by score (unscored last), ties by image id.
fn order(mut items: Vec<(String, Option<f64>)>, descending: bool) -> Vec<(String, Option<f64>)> {
    items.sort_by(|(ia, a), (ib, b)| {
        let by_score = match (a, b) {
            (Some(a), Some(b)) if descending => b.partial_cmp(a).unwrap_or(Ordering::Equal),
            (Some(a), Some(b)) => a.partial_cmp(b).unwrap_or(Ordering::Equal),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        by_score.then_with(|| ia.cmp(ib))
    });
    items
}

/// Scores and orders a pool with any scorer. Unscored images come last with
/// a NaN score.
pub fn rank(pool: &[(&str, Option<&ProbabilityMap>)], scorer: &dyn AcquisitionScorer) -> Vec<CandidateScore> {
    let items = pool
        .iter()
        .map(|&(id, map)| (id.to_owned(), map.map(|m| scorer.score(m))))
        .collect();
    order(items, scorer.descending())
        .into_iter()
        .map(|(image_id, score)| CandidateScore {
            image_id,
            score: score.unwrap_or(f64::NAN),
            strategy: scorer.name().to_owned(),
        })
        .collect()
}

fn random_batch<'a>(ids: impl Iterator<Item = &'a str>, seed: u64, k: usize) -> Vec<String> {
    let mut ids: Vec<&str> = ids.collect();
    ids.sort_unstable();
    ids.dedup();
    let n = ids.len();
    let take = k.min(n);
    let mut rng = SplitMix64::new(seed);
    for i in 0..take {
        let j = i + rng.below((n - i) as u64) as usize;
        ids.swap(i, j);
    }
    ids[..take].iter().map(|s| (*s).to_owned()).collect()
}

/// Picks the next `min(k, |pool|)` images to annotate. An empty pool gives an
/// empty batch.
pub fn next_batch(pool: &[(&str, Option<&ProbabilityMap>)], spec: &StrategySpec) -> Vec<String> {
    let scored: Vec<(&str, Option<f64>)> = match spec.name {
        StrategyName::Random => pool.iter().map(|&(id, _)| (id, None)).collect(),
        StrategyName::Entropy => pool.iter().map(|&(id, m)| (id, m.map(score_entropy))).collect(),
        StrategyName::Margin => pool.iter().map(|&(id, m)| (id, m.map(score_margin))).collect(),
    };
    next_batch_scored(&scored, spec)
}

/// [`next_batch`] for callers that already hold each image's score under
/// `spec`'s strategy, e.g. from a cache. Scores are ignored by `random`.
pub fn next_batch_scored(pool: &[(&str, Option<f64>)], spec: &StrategySpec) -> Vec<String> {
    if spec.name == StrategyName::Random {
        return random_batch(pool.iter().map(|&(id, _)| id), spec.seed, spec.k);
    }
    let items = pool.iter().map(|&(id, s)| (id.to_owned(), s)).collect();
    let mut seen = std::collections::HashSet::new();
    order(items, spec.name == StrategyName::Entropy)
        .into_iter()
        .filter(|(id, _)| seen.insert(id.clone()))
        .take(spec.k)
        .map(|(id, _)| id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(values: &[f64]) -> ProbabilityMap {
        ProbabilityMap::new(values.len() as u32, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        assert!((score_entropy(&map(&[0.5; 4])) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(score_entropy(&map(&[0.0, 1.0, 1.0, 0.0])), 0.0);
        let e = score_entropy(&map(&[0.1, 0.9, 0.5, 0.5]));
        assert!((e - 0.509115).abs() < 1e-6, "{e}");
    }

    #[test]
    fn margin_examples() {
        assert_eq!(score_margin(&map(&[0.5; 3])), 0.0);
        assert_eq!(score_margin(&map(&[1.0; 3])), 0.5);
        assert!((score_margin(&map(&[0.1, 0.9, 0.5, 0.5])) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!(StrategySpec::parse("entropy", 3, None).unwrap().name, StrategyName::Entropy);
        assert_eq!(
            StrategySpec::parse("deal", 3, None),
            Err(SelectError::UnknownStrategy("deal".into()))
        );
        assert_eq!(StrategySpec::parse("random", 0, None), Err(SelectError::InvalidBatchSize));
    }

    #[test]
    fn entropy_orders_by_score_and_truncates() {
        let hi = map(&[0.5, 0.5]);
        let zero = map(&[0.0, 1.0]);
        let mid = map(&[0.1, 0.9]);
        let pool = [("b", Some(&hi)), ("c", Some(&zero)), ("a", Some(&mid))];
        let spec = StrategySpec::parse("entropy", 2, None).unwrap();
        assert_eq!(next_batch(&pool, &spec), ["b", "a"]);
        let spec = StrategySpec::parse("margin", 10, None).unwrap();
        assert_eq!(next_batch(&pool, &spec), ["b", "a", "c"]);
    }

    #[test]
    fn missing_maps_rank_last_and_ties_use_ids() {
        let m = map(&[0.3]);
        let pool = [("z", None), ("d", Some(&m)), ("c", Some(&m)), ("a", None)];
        let spec = StrategySpec::parse("entropy", 4, None).unwrap();
        assert_eq!(next_batch(&pool, &spec), ["c", "d", "a", "z"]);
    }

    #[test]
    fn random_is_deterministic_and_a_subset() {
        let ids: Vec<String> = (0..20).map(|i| format!("img{i:02}")).collect();
        let pool: Vec<(&str, Option<&ProbabilityMap>)> = ids.iter().map(|s| (s.as_str(), None)).collect();
        let spec = StrategySpec::parse("random", 5, Some(7)).unwrap();
        let a = next_batch(&pool, &spec);
        assert_eq!(a, next_batch(&pool, &spec));
        assert_eq!(a.len(), 5);
        let mut uniq = a.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 5);
        assert!(next_batch(&[], &spec).is_empty());
        let all = next_batch(&pool, &StrategySpec::parse("random", 50, Some(7)).unwrap());
        assert_eq!(all.len(), 20);
    }
}
