//! Depth accuracy metrics over a masked region.
//!
//! A pixel is scored when the ground truth is a valid depth, the mask is
//! set, and the prediction carries a value. Predictions that are finite but
//! not positive (alignment can produce them) are scored as threshold
//! failures and still contribute their absolute error.

use serde::{Deserialize, Serialize};

use crate::depth::{DepthMap, Mask};
use crate::error::{Error, Result};

pub const DELTA_THRESHOLDS: [f64; 3] = [1.05, 1.10, 1.25];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub delta_105: f64,
    pub delta_110: f64,
    pub delta_125: f64,
    pub rel: f64,
    pub rmse: f64,
    pub mae: f64,
    pub pixel_count: usize,
}

impl MetricsReport {
    /// Flat `name=value` lines.
    pub fn to_key_value(&self) -> String {
        format!(
            "delta_105={}\ndelta_110={}\ndelta_125={}\nrel={}\nrmse={}\nmae={}\npixel_count={}\n",
            self.delta_105,
            self.delta_110,
            self.delta_125,
            self.rel,
            self.rmse,
            self.mae,
            self.pixel_count
        )
    }

    /// Header and row in the column order d1.05, d1.10, d1.25, REL, RMSE, MAE.
    pub fn to_table(&self) -> String {
        format!(
            "{:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n{:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}\n",
            "d1.05", "d1.10", "d1.25", "REL", "RMSE", "MAE",
            self.delta_105, self.delta_110, self.delta_125, self.rel, self.rmse, self.mae
        )
    }
}

/// max(d / d_p, d_p / d) for positive pairs, +inf otherwise.
#[inline]
pub fn ratio_error(d: f64, d_p: f64) -> f64 {
    if d_p > 0.0 {
        (d / d_p).max(d_p / d)
    } else {
        f64::INFINITY
    }
}

pub fn evaluate(pred: &DepthMap, gt: &DepthMap, mask: Option<&Mask>) -> Result<MetricsReport> {
    gt.check_dims(pred.dims())?;
    if let Some(m) = mask {
        gt.check_dims(m.dims())?;
    }
    let mut count = 0usize;
    let (mut abs, mut sq, mut rel) = (0.0, 0.0, 0.0);
    let mut hits = [0usize; 3];
    for i in 0..gt.len() {
        if !(gt.is_valid(i) && pred.has_value(i) && mask.map_or(true, |m| m.get(i))) {
            continue;
        }
        let d = gt.data()[i];
        let d_p = pred.data()[i];
        let e = (d - d_p).abs();
        count += 1;
        abs += e;
        sq += e * e;
        rel += e / d;
        let r = ratio_error(d, d_p);
        for (h, &t) in hits.iter_mut().zip(&DELTA_THRESHOLDS) {
            if r < t {
                *h += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::NoValidPixels);
    }
    let n = count as f64;
    Ok(MetricsReport {
        delta_105: hits[0] as f64 / n,
        delta_110: hits[1] as f64 / n,
        delta_125: hits[2] as f64 / n,
        rel: rel / n,
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        pixel_count: count,
    })
}
