//! Statistics behind a feature-based detector: correspondence acceptance,
//! weighted-inlier support, and the automatic detection threshold.
//!
//! Feature extraction and pose estimation live outside this crate; these
//! functions take the distances and inlier flags such a frontend produces.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Maximum nearest-foreground to nearest-background distance ratio.
pub const RATIO_THRESHOLD: f64 = 0.8;
/// Maximum probability that a match distance comes from the non-corresponding
/// distance distribution.
pub const SIGNIFICANCE: f64 = 0.001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("standard deviation must be positive, got {0}")]
    Sigma(f64),
    #[error("weights ({weights}) and inlier flags ({flags}) differ in length")]
    Length { weights: usize, flags: usize },
    #[error("feature type {index} has no reference features")]
    EmptyFeatureType { index: usize },
}

/// Distance distribution of features that do *not* correspond to a given
/// template feature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatchStats {
    mu: f64,
    sigma: f64,
}

impl FeatureMatchStats {
    pub fn new(mu: f64, sigma: f64) -> Result<Self, DetectorError> {
        if sigma > 0.0 && sigma.is_finite() && mu.is_finite() {
            Ok(Self { mu, sigma })
        } else {
            Err(DetectorError::Sigma(sigma))
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

/// Normal CDF, `0.5 * erfc(-(x - mu) / (sigma * sqrt 2))`.
pub fn normal_cdf(x: f64, mu: f64, sigma: f64) -> Result<f64, DetectorError> {
    if !(sigma > 0.0) {
        return Err(DetectorError::Sigma(sigma));
    }
    Ok(0.5 * libm::erfc(-(x - mu) / (sigma * std::f64::consts::SQRT_2)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    /// Foreground match not distinctive enough against the background.
    Ratio,
    /// Distance plausibly drawn from the non-corresponding distribution.
    Significance,
    /// Zero background distance; the ratio is undefined.
    ZeroBackgroundDistance,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchVerdict {
    Accept,
    Reject(RejectReason),
}

impl MatchVerdict {
    pub fn is_accept(self) -> bool {
        self == MatchVerdict::Accept
    }
}

/// Tentative correspondence test: accept iff `d_fg / d_bg < 0.8` and the
/// foreground distance falls below the 0.1% tail of the outlier distribution.
pub fn correspondence_test(d_fg: f64, d_bg: f64, stats: &FeatureMatchStats) -> MatchVerdict {
    if !(d_bg > 0.0) {
        return MatchVerdict::Reject(RejectReason::ZeroBackgroundDistance);
    }
    if !(d_fg / d_bg < RATIO_THRESHOLD) {
        return MatchVerdict::Reject(RejectReason::Ratio);
    }
    let p = normal_cdf(d_fg, stats.mu, stats.sigma).expect("stats hold a positive sigma");
    if p < SIGNIFICANCE {
        MatchVerdict::Accept
    } else {
        MatchVerdict::Reject(RejectReason::Significance)
    }
}

/// Per-feature-type weights, inversely proportional to how many reference
/// features each type has on the template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureTypeWeights {
    weights: Vec<f64>,
}

impl FeatureTypeWeights {
    pub fn from_counts(counts: &[usize]) -> Result<Self, DetectorError> {
        let weights = counts
            .iter()
            .enumerate()
            .map(|(index, &c)| {
                if c == 0 {
                    Err(DetectorError::EmptyFeatureType { index })
                } else {
                    Ok(1.0 / c as f64)
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { weights })
    }

    pub fn weight(&self, feature_type: usize) -> f64 {
        self.weights[feature_type]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

/// Sum of the weights of inlying matches.
pub fn inlier_cost(weights: &[f64], inliers: &[bool]) -> Result<f64, DetectorError> {
    if weights.len() != inliers.len() {
        return Err(DetectorError::Length {
            weights: weights.len(),
            flags: inliers.len(),
        });
    }
    Ok(weights
        .iter()
        .zip(inliers)
        .filter(|(_, &inlier)| inlier)
        .map(|(w, _)| w)
        .sum())
}

/// Minimum weighted-inlier support for a detection, computed once from the
/// number of features inside the initial target box: `max(5, min(0.03 n, 10))`.
pub fn detection_threshold(max_features_in_target: usize) -> f64 {
    (0.03 * max_features_in_target as f64).clamp(5.0, 10.0)
}
