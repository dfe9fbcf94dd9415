//! Global scale-shift alignment: one `(s, t)` for the whole image, fitted in
//! closed form by ordinary least squares.

use serde::{Deserialize, Serialize};

use crate::depth::{paired_values, DepthMap, SamplePoint};
use crate::error::{Error, Result};

/// Variance of the predicted depths below which the design is singular.
pub const MIN_VARIANCE: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlobalScaleShift {
    pub s: f64,
    pub t: f64,
}

impl GlobalScaleShift {
    pub const IDENTITY: Self = Self { s: 1.0, t: 0.0 };

    #[inline]
    pub fn eval(&self, z_p: f64) -> f64 {
        self.s * z_p + self.t
    }

    /// Sum of squared residuals over paired samples.
    pub fn cost(&self, points: &[SamplePoint]) -> Result<f64> {
        Ok(paired_values(points)?
            .iter()
            .map(|&(_, _, z_p, z_c)| (z_c - self.eval(z_p)).powi(2))
            .sum())
    }
}

/// Minimizes `sum (z_c - (s z_p + t))^2` over paired samples.
pub fn fit_gssa(points: &[SamplePoint]) -> Result<GlobalScaleShift> {
    let values = paired_values(points)?;
    fit_weighted(values.iter().map(|&(_, _, z_p, z_c)| (z_p, z_c, 1.0)))
}

/// Weighted 2-parameter least squares in centered form. Shared with the
/// locally weighted fit, which passes Gaussian weights.
pub(crate) fn fit_weighted<I>(rows: I) -> Result<GlobalScaleShift>
where
    I: Iterator<Item = (f64, f64, f64)> + Clone,
{
    let (mut sw, mut sp, mut sc) = (0.0, 0.0, 0.0);
    let mut count = 0usize;
    for (p, c, w) in rows.clone() {
        sw += w;
        sp += w * p;
        sc += w * c;
        count += 1;
    }
    if count < 2 || !(sw > 0.0) {
        return Err(Error::DegenerateDesign);
    }
    let (mp, mc) = (sp / sw, sc / sw);
    let (mut spp, mut spc) = (0.0, 0.0);
    for (p, c, w) in rows {
        let dp = p - mp;
        spp += w * dp * dp;
        spc += w * dp * (c - mc);
    }
    if !(spp / sw >= MIN_VARIANCE) {
        return Err(Error::DegenerateDesign);
    }
    let s = spc / spp;
    Ok(GlobalScaleShift { s, t: mc - s * mp })
}

pub fn apply_gssa(pred_norm: &DepthMap, p: GlobalScaleShift) -> DepthMap {
    pred_norm.map_values(|_, _, z| p.eval(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn samples(z_p: &[f64], z_c: &[f64]) -> Vec<SamplePoint> {
        z_p.iter()
            .zip(z_c)
            .enumerate()
            .map(|(k, (&p, &c))| SamplePoint::paired(k, 0, c, p))
            .collect()
    }

    /// Independent oracle: brute-force grid over (s, t).
    fn grid_min(pts: &[SamplePoint], n: usize, lo: f64, hi: f64) -> (f64, f64, f64) {
        let step = (hi - lo) / (n - 1) as f64;
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                let c = GlobalScaleShift {
                    s: lo + i as f64 * step,
                    t: lo + j as f64 * step,
                };
                let cost = c.cost(pts).unwrap();
                if cost < best.0 {
                    best = (cost, c.s, c.t);
                }
            }
        }
        best
    }

    #[test]
    fn exact_affine_relation() {
        let p = fit_gssa(&samples(&[1.0, 2.0, 3.0], &[2.6, 4.1, 5.6])).unwrap();
        assert!((p.s - 1.5).abs() < 1e-12);
        assert!((p.t - 1.1).abs() < 1e-12);
    }

    #[test]
    fn least_squares_example_matches_grid_and_normal_equations() {
        let pts = samples(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]);
        let p = fit_gssa(&pts).unwrap();
        // normal equations by hand: [5 3; 3 3][s t]' = [3 2]' -> s = 1/2, t = 1/6
        assert!((p.s - 0.5).abs() < 1e-14);
        assert!((p.t - 1.0 / 6.0).abs() < 1e-14);
        // grid with step 1/600 hits (0.5, 1/6) exactly
        let (cost, s, t) = grid_min(&pts, 1201, -1.0, 1.0);
        assert!((s - 0.5).abs() < 1e-9 && (t - 1.0 / 6.0).abs() < 1e-9);
        assert!(p.cost(&pts).unwrap() <= cost + 1e-15);
    }

    #[test]
    fn identity_samples() {
        let pts = samples(&[0.7, 1.3, 2.2, 4.0], &[0.7, 1.3, 2.2, 4.0]);
        let p = fit_gssa(&pts).unwrap();
        assert!((p.s - 1.0).abs() < 1e-14 && p.t.abs() < 1e-14);
    }

    #[test]
    fn residual_gradient_vanishes() {
        let pts = samples(&[0.3, 1.9, 2.4, 3.3, 4.1], &[1.0, 0.2, 2.5, 2.0, 3.9]);
        let p = fit_gssa(&pts).unwrap();
        let (mut gs, mut gt) = (0.0, 0.0);
        for q in &pts {
            let r = q.z_c - p.eval(q.z_p.unwrap());
            gs += r * q.z_p.unwrap();
            gt += r;
        }
        assert!(gs.abs() < 1e-12 && gt.abs() < 1e-12);
    }

    #[test]
    fn degenerate_designs() {
        assert!(matches!(
            fit_gssa(&samples(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0])),
            Err(Error::DegenerateDesign)
        ));
        assert!(matches!(
            fit_gssa(&samples(&[2.0], &[1.0])),
            Err(Error::DegenerateDesign)
        ));
        let unpaired = vec![SamplePoint {
            u: 0,
            v: 0,
            z_c: 1.0,
            z_p: None,
        }];
        assert!(matches!(
            fit_gssa(&unpaired),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn negative_scale_is_allowed() {
        let p = fit_gssa(&samples(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0])).unwrap();
        assert!((p.s + 1.0).abs() < 1e-12 && (p.t - 4.0).abs() < 1e-12);
    }

    #[test]
    fn apply_cases() {
        let m = DepthMap::new(3, 1, vec![1.0, f64::NAN, 1.0]).unwrap();
        assert_eq!(apply_gssa(&m, GlobalScaleShift::IDENTITY).data()[0], 1.0);
        let out = apply_gssa(&m, GlobalScaleShift { s: 2.0, t: 0.6 });
        assert!((out.data()[0] - 2.6).abs() < 1e-15);
        assert!(out.data()[1].is_nan());
    }

    proptest! {
        #[test]
        fn shifting_ground_truth_shifts_t(
            vals in proptest::collection::vec((0.1f64..5.0, 0.1f64..5.0), 3..10),
            c in -3.0f64..3.0,
        ) {
            let z_p: Vec<f64> = vals.iter().map(|v| v.0).collect();
            let z_c: Vec<f64> = vals.iter().map(|v| v.1).collect();
            let shifted: Vec<f64> = z_c.iter().map(|z| z + c).collect();
            let a = fit_gssa(&samples(&z_p, &z_c));
            let b = fit_gssa(&samples(&z_p, &shifted));
            if let (Ok(a), Ok(b)) = (a, b) {
                prop_assert!((a.s - b.s).abs() < 1e-12);
                prop_assert!((b.t - a.t - c).abs() < 1e-12);
            }
        }
    }
}
