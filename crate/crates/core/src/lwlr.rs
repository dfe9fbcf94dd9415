//! Locally weighted linear regression: a per-pixel `(s, t)` map where every
//! pixel solves its own weighted least-squares problem, with samples weighted
//! by a Gaussian kernel of their pixel distance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::depth::{paired_values, DepthMap, SamplePoint};
use crate::error::{Error, Result};
use crate::gssa::{self, GlobalScaleShift};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Condition number of the local 2x2 normal matrix above which ridge
/// regularization is applied.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LwlrConfig {
    /// Gaussian kernel bandwidth in pixels.
    pub bandwidth: f64,
    /// Ridge strength, relative to the trace of the local normal matrix.
    pub epsilon: f64,
}

impl Default for LwlrConfig {
    fn default() -> Self {
        Self {
            bandwidth: 100.0,
            epsilon: 1e-6,
        }
    }
}

impl LwlrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "ridge epsilon must be finite and non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Gaussian kernel weight `exp(-d^2 / 2b^2) / sqrt(2 pi)`.
#[inline]
pub fn lwlr_weight(distance: f64, bandwidth: f64) -> f64 {
    INV_SQRT_2PI * (-(distance * distance) / (2.0 * bandwidth * bandwidth)).exp()
}

/// Per-pixel scale and shift rasters.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleShiftField {
    width: usize,
    height: usize,
    scale: Vec<f64>,
    shift: Vec<f64>,
}

impl ScaleShiftField {
    pub fn constant(width: usize, height: usize, p: GlobalScaleShift) -> Self {
        Self {
            width,
            height,
            scale: vec![p.s; width * height],
            shift: vec![p.t; width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn at(&self, u: usize, v: usize) -> GlobalScaleShift {
        let i = v * self.width + u;
        GlobalScaleShift {
            s: self.scale[i],
            t: self.shift[i],
        }
    }
}

/// Solves the weighted regression at one pixel.
///
/// Weights are evaluated relative to the nearest sample (a common factor
/// that cancels in the solution) so that far-away pixels never see every
/// weight underflow to zero. When the local normal matrix is too badly
/// conditioned, `epsilon * trace` is added to its diagonal and the solution
/// is shrunk toward the global fit, which keeps exact affine data exact.
fn solve_pixel(
    u: f64,
    v: f64,
    samples: &[(f64, f64, f64, f64)],
    cfg: &LwlrConfig,
    global: GlobalScaleShift,
    weights: &mut Vec<f64>,
) -> GlobalScaleShift {
    weights.clear();
    let mut d2_min = f64::INFINITY;
    for &(su, sv, _, _) in samples {
        let d2 = (su - u).powi(2) + (sv - v).powi(2);
        d2_min = d2_min.min(d2);
        weights.push(d2);
    }
    let inv_two_b2 = 1.0 / (2.0 * cfg.bandwidth * cfg.bandwidth);
    for w in weights.iter_mut() {
        *w = INV_SQRT_2PI * (-(*w - d2_min) * inv_two_b2).exp();
    }

    let (mut sw, mut sp, mut spp, mut sc, mut spc) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&w, &(_, _, p, c)) in weights.iter().zip(samples) {
        sw += w;
        sp += w * p;
        spp += w * p * p;
        sc += w * c;
        spc += w * p * c;
    }

    if condition_number(spp, sp, sw) <= MAX_CONDITION {
        let rows = weights
            .iter()
            .zip(samples)
            .map(|(&w, &(_, _, p, c))| (p, c, w));
        if let Ok(fit) = gssa::fit_weighted(rows) {
            return fit;
        }
    }

    // ridge: (A + lambda I) beta = b + lambda beta_global
    let lambda = cfg.epsilon * (spp + sw);
    let (a11, a12, a22) = (spp + lambda, sp, sw + lambda);
    let (b1, b2) = (spc + lambda * global.s, sc + lambda * global.t);
    let det = a11 * a22 - a12 * a12;
    if det.abs() > 0.0 && det.is_finite() {
        GlobalScaleShift {
            s: (b1 * a22 - a12 * b2) / det,
            t: (a11 * b2 - a12 * b1) / det,
        }
    } else {
        global
    }
}

/// Condition number of the symmetric PSD matrix `[[a, b], [b, d]]`.
fn condition_number(a: f64, b: f64, d: f64) -> f64 {
    let half_tr = 0.5 * (a + d);
    let disc = (0.25 * (a - d).powi(2) + b * b).sqrt();
    let (hi, lo) = (half_tr + disc, half_tr - disc);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Fits the scale-shift field for a `dims.0 x dims.1` raster.
pub fn fit_lwlr(
    points: &[SamplePoint],
    dims: (usize, usize),
    cfg: &LwlrConfig,
) -> Result<ScaleShiftField> {
    cfg.validate()?;
    let (width, height) = dims;
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(
            "field dimensions must be nonzero".into(),
        ));
    }
    let samples = paired_values(points)?;
    let global = gssa::fit_gssa(points)?;

    let mut scale = vec![0.0; width * height];
    let mut shift = vec![0.0; width * height];
    scale
        .par_chunks_mut(width)
        .zip(shift.par_chunks_mut(width))
        .enumerate()
        .for_each_init(Vec::new, |weights, (v, (srow, trow))| {
            for u in 0..width {
                let fit = solve_pixel(u as f64, v as f64, &samples, cfg, global, weights);
                srow[u] = fit.s;
                trow[u] = fit.t;
            }
        });
    Ok(ScaleShiftField {
        width,
        height,
        scale,
        shift,
    })
}

pub fn apply_lwlr(pred_norm: &DepthMap, field: &ScaleShiftField) -> Result<DepthMap> {
    pred_norm.check_dims(field.dims())?;
    let width = field.width;
    Ok(pred_norm.map_values(|u, v, z| {
        let i = v * width + u;
        field.scale[i] * z + field.shift[i]
    }))
}
