use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corruption::CorruptionKind;
use crate::error::{Error, Result};

/// How per-severity cells collapse to one per-corruption score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum AggregationPolicy {
    #[default]
    Mean,
    Worst,
    Severity(u32),
}

impl fmt::Display for AggregationPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AggregationPolicy::Mean => f.write_str("mean"),
            AggregationPolicy::Worst => f.write_str("worst"),
            AggregationPolicy::Severity(s) => write!(f, "severity:{s}"),
        }
    }
}

impl FromStr for AggregationPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mean" => Ok(AggregationPolicy::Mean),
            "worst" => Ok(AggregationPolicy::Worst),
            other => other
                .strip_prefix("severity:")
                .and_then(|n| n.parse().ok())
                .map(AggregationPolicy::Severity)
                .ok_or_else(|| Error::Manifest(format!("unknown aggregation `{other}` (mean | worst | severity:N)"))),
        }
    }
}

impl From<AggregationPolicy> for String {
    fn from(p: AggregationPolicy) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for AggregationPolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Collapses `(severity, score)` cells of one corruption.
pub fn aggregate(cells: &[(u32, f64)], policy: AggregationPolicy) -> Result<f64> {
    if cells.is_empty() {
        return Err(Error::EmptyCellSet);
    }
    match policy {
        AggregationPolicy::Mean => Ok(cells.iter().map(|c| c.1).sum::<f64>() / cells.len() as f64),
        AggregationPolicy::Worst => Ok(cells.iter().map(|c| c.1).fold(f64::INFINITY, f64::min)),
        AggregationPolicy::Severity(s) => cells.iter().find(|c| c.0 == s).map(|c| c.1).ok_or(Error::EmptyCellSet),
    }
}

/// Evaluation condition of a score cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Condition {
    Clean,
    Corrupted(CorruptionKind),
}

impl From<Condition> for String {
    fn from(c: Condition) -> String {
        match c {
            Condition::Clean => "clean".into(),
            Condition::Corrupted(k) => k.name().into(),
        }
    }
}

impl TryFrom<String> for Condition {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        if s == "clean" {
            Ok(Condition::Clean)
        } else {
            Ok(Condition::Corrupted(s.parse()?))
        }
    }
}

/// One evaluated number: a model under a condition, at one severity or
/// already aggregated over severities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreCell {
    pub model: String,
    #[serde(rename = "corruption")]
    pub condition: Condition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub severity: Option<u32>,
    pub metric: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregation: Option<AggregationPolicy>,
}

/// Clean score, per-corruption scores and the relative performance drop
/// `100 * (clean - sum_k w_k score_k) / clean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub model: String,
    pub clean: f64,
    pub columns: Vec<(CorruptionKind, f64)>,
    pub weights: Vec<f64>,
    pub corrupted_avg: f64,
    pub r_tp: f64,
    pub aggregation: AggregationPolicy,
}

pub fn r_tp(clean: f64, corrupted: &[(CorruptionKind, f64)], weights: Option<&[f64]>) -> Result<RobustnessReport> {
    if !(clean > 0.0 && clean.is_finite()) {
        return Err(Error::ZeroCleanScore(clean));
    }
    if corrupted.is_empty() {
        return Err(Error::EmptyCellSet);
    }
    let weights = match weights {
        None => vec![1.0 / corrupted.len() as f64; corrupted.len()],
        Some(w) => {
            if w.len() != corrupted.len() {
                return Err(Error::InvalidWeights(format!(
                    "{} weights for {} corruptions",
                    w.len(),
                    corrupted.len()
                )));
            }
            if w.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidWeights("every weight must be positive".into()));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidWeights(format!("weights sum to {sum}, not 1")));
            }
            w.to_vec()
        }
    };
    let corrupted_avg = corrupted.iter().zip(&weights).map(|((_, s), w)| s * w).sum::<f64>();
    Ok(RobustnessReport {
        model: String::new(),
        clean,
        columns: corrupted.to_vec(),
        weights,
        corrupted_avg,
        r_tp: 100.0 * (clean - corrupted_avg) / clean,
        aggregation: AggregationPolicy::Mean,
    })
}

impl RobustnessReport {
    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(scores: &[f64]) -> Vec<(CorruptionKind, f64)> {
        CorruptionKind::ALL
            .iter()
            .copied()
            .zip(scores.iter().copied())
            .collect()
    }

    #[test]
    fn aggregation_policies() {
        let cells = [(1, 50.0), (2, 60.0), (3, 70.0)];
        assert_eq!(aggregate(&cells, AggregationPolicy::Mean).unwrap(), 60.0);
        assert_eq!(aggregate(&cells, AggregationPolicy::Worst).unwrap(), 50.0);
        assert_eq!(aggregate(&cells, AggregationPolicy::Severity(2)).unwrap(), 60.0);
        assert_eq!(aggregate(&[(1, 60.0); 5], AggregationPolicy::Mean).unwrap(), 60.0);
        assert!(matches!(
            aggregate(&[], AggregationPolicy::Mean),
            Err(Error::EmptyCellSet)
        ));
        assert!(aggregate(&cells, AggregationPolicy::Severity(5)).is_err());
    }

    #[test]
    fn policy_strings_round_trip() {
        for p in [
            AggregationPolicy::Mean,
            AggregationPolicy::Worst,
            AggregationPolicy::Severity(3),
        ] {
            assert_eq!(p.to_string().parse::<AggregationPolicy>().unwrap(), p);
        }
    }

    #[test]
    fn zero_drop_and_errors() {
        let rep = r_tp(80.0, &uniform(&[80.0, 80.0]), None).unwrap();
        assert_eq!(rep.r_tp, 0.0);
        assert!(matches!(
            r_tp(0.0, &uniform(&[1.0]), None),
            Err(Error::ZeroCleanScore(_))
        ));
        assert!(r_tp(1.0, &uniform(&[1.0, 1.0]), Some(&[0.5, 0.6])).is_err());
        assert!(r_tp(1.0, &uniform(&[1.0, 1.0]), Some(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn weighted_average() {
        let rep = r_tp(100.0, &uniform(&[50.0, 90.0]), Some(&[0.25, 0.75])).unwrap();
        assert!((rep.corrupted_avg - 80.0).abs() < 1e-12);
        assert!((rep.r_tp - 20.0).abs() < 1e-12);
    }

    #[test]
    fn cells_serialize_with_condition_names() {
        let cell = ScoreCell {
            model: "m".into(),
            condition: Condition::Corrupted(CorruptionKind::Compression),
            severity: Some(2),
            metric: "accuracy".into(),
            value: 12.5,
            aggregation: None,
        };
        let json = serde_json::to_string(&cell).unwrap();
        assert!(json.contains("\"corruption\":\"compression_artifacts\""), "{json}");
        assert_eq!(serde_json::from_str::<ScoreCell>(&json).unwrap(), cell);
    }

    proptest! {
        #[test]
        fn identity_and_scale_invariance(
            clean in 1.0f64..100.0,
            scores in prop::collection::vec(0.0f64..100.0, 1..12),
            lambda in 0.01f64..100.0,
        ) {
            let rep = r_tp(clean, &uniform(&scores), None).unwrap();
            prop_assert!((clean * (1.0 - rep.r_tp / 100.0) - rep.corrupted_avg).abs() < 1e-9);
            let scaled: Vec<f64> = scores.iter().map(|s| s * lambda).collect();
            let rep2 = r_tp(clean * lambda, &uniform(&scaled), None).unwrap();
            prop_assert!((rep.r_tp - rep2.r_tp).abs() < 1e-9);
            let mean = aggregate(&scores.iter().map(|&s| (1, s)).collect::<Vec<_>>(), AggregationPolicy::Mean).unwrap();
            let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(mean >= lo - 1e-12 && mean <= hi + 1e-12);
        }
    }
}
