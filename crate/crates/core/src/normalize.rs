//! Per-image normalization of predicted depth.
//!
//! Statistics are always taken over every pixel of the prediction that
//! carries a value (optionally restricted by a mask), never over the sparse
//! calibration samples: at inference time there are no samples, and
//! calibration and inference must see the same estimator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::depth::{DepthMap, Mask};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationMethod {
    /// `(z - z_min) / (z_max - z_min) + z_min`
    #[default]
    MinMax,
    /// `(z - median) / mean|z - median|`
    #[serde(rename = "median")]
    MedianMad,
    None,
}

impl NormalizationMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::MinMax => "minmax",
            Self::MedianMad => "median",
            Self::None => "none",
        }
    }
}

impl fmt::Display for NormalizationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormalizationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minmax" => Ok(Self::MinMax),
            "median" => Ok(Self::MedianMad),
            "none" => Ok(Self::None),
            other => Err(Error::Parse(format!(
                "unknown normalization '{other}' (expected minmax, median or none)"
            ))),
        }
    }
}

/// Statistics of one prediction, enough to replay its normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum NormStats {
    MinMax {
        z_min: f64,
        z_max: f64,
    },
    #[serde(rename = "median")]
    MedianMad {
        median: f64,
        mad: f64,
    },
    None,
}

impl NormStats {
    pub fn method(&self) -> NormalizationMethod {
        match self {
            Self::MinMax { .. } => NormalizationMethod::MinMax,
            Self::MedianMad { .. } => NormalizationMethod::MedianMad,
            Self::None => NormalizationMethod::None,
        }
    }

    /// Normalizes a single value. For min-max the additive term is `z_min`
    /// of this image unless `offset` overrides it.
    #[inline]
    pub fn apply(&self, z: f64, offset: Option<f64>) -> f64 {
        match *self {
            Self::MinMax { z_min, z_max } => {
                (z - z_min) / (z_max - z_min) + offset.unwrap_or(z_min)
            }
            Self::MedianMad { median, mad } => (z - median) / mad,
            Self::None => z,
        }
    }
}

/// Collects the values that feed the statistics.
fn gather(pred: &DepthMap, mask: Option<&Mask>) -> Result<Vec<f64>> {
    if let Some(m) = mask {
        pred.check_dims(m.dims())?;
    }
    Ok(pred
        .data()
        .iter()
        .enumerate()
        .filter(|&(i, z)| z.is_finite() && mask.map_or(true, |m| m.get(i)))
        .map(|(_, &z)| z)
        .collect())
}

/// Lower median: the element of rank `(n - 1) / 2` in sorted order.
pub fn lower_median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let k = (values.len() - 1) / 2;
    let (_, m, _) = values.select_nth_unstable_by(k, f64::total_cmp);
    Some(*m)
}

pub fn compute_stats(
    pred: &DepthMap,
    method: NormalizationMethod,
    mask: Option<&Mask>,
) -> Result<NormStats> {
    if method == NormalizationMethod::None {
        return Ok(NormStats::None);
    }
    let mut values = gather(pred, mask)?;
    if values.is_empty() {
        return Err(Error::NoValidPixels);
    }
    match method {
        NormalizationMethod::MinMax => {
            let (z_min, z_max) = values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| {
                    (lo.min(z), hi.max(z))
                });
            if !(z_max > z_min) {
                return Err(Error::DegenerateRange);
            }
            Ok(NormStats::MinMax { z_min, z_max })
        }
        NormalizationMethod::MedianMad => {
            let median = lower_median(&mut values).expect("non-empty");
            let mad = values.iter().map(|z| (z - median).abs()).sum::<f64>() / values.len() as f64;
            if !(mad > 0.0) {
                return Err(Error::DegenerateMad);
            }
            Ok(NormStats::MedianMad { median, mad })
        }
        NormalizationMethod::None => unreachable!(),
    }
}

/// Normalizes every pixel with statistics of the whole map.
pub fn normalize(pred: &DepthMap, method: NormalizationMethod) -> Result<(DepthMap, NormStats)> {
    normalize_masked(pred, method, None)
}

/// As [`normalize`], with statistics restricted to `mask`. Every pixel of
/// the map is still transformed.
pub fn normalize_masked(
    pred: &DepthMap,
    method: NormalizationMethod,
    mask: Option<&Mask>,
) -> Result<(DepthMap, NormStats)> {
    let stats = compute_stats(pred, method, mask)?;
    if stats == NormStats::None {
        return Ok((pred.clone(), stats));
    }
    Ok((pred.map_values(|_, _, z| stats.apply(z, None)), stats))
}
