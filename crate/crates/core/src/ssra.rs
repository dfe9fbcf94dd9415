//! Scale-shift-rotation alignment.
//!
//! The normalized prediction is treated as the output of a pseudo depth
//! sensor with intrinsics `(cxp, cyp, fp)`. Each pixel is back-projected to
//! a pseudo 3-D point, and metric depth is the depth row of a scaled rigid
//! transform of that point:
//!
//! ```text
//! x = z (u - cxp) / fp,   y = z (v - cyp) / fp
//! F = s (-x sin(phi) + y sin(theta) cos(phi) + z cos(theta) cos(phi)) + t3
//! ```
//!
//! Only the third row of the rotation and the depth translation are
//! estimated, over `[s, theta, phi, t3, cxp, cyp, fp]`, by minimizing the
//! mean squared depth residual over the calibration samples.

use std::f64::consts::PI;

use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::depth::{paired_values, DepthMap, SamplePoint};
use crate::error::{Error, Result};
use crate::gssa;
use crate::solver::{self, LeastSquares, SolverConfig, SolverReport};

pub const PARAM_COUNT: usize = 7;
pub const PARAM_NAMES: [&str; PARAM_COUNT] = ["s", "theta", "phi", "t3", "cxp", "cyp", "fp"];

pub type ParamVector = SVector<f64, PARAM_COUNT>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub s: f64,
    pub theta: f64,
    pub phi: f64,
    pub t3: f64,
    pub cxp: f64,
    pub cyp: f64,
    pub fp: f64,
}

impl ThetaParams {
    /// Unrotated parameters that reduce to `s z + t3`.
    pub fn scale_shift(s: f64, t3: f64, dims: (usize, usize)) -> Self {
        Self {
            s,
            theta: 0.0,
            phi: 0.0,
            t3,
            cxp: dims.0 as f64 / 2.0,
            cyp: dims.1 as f64 / 2.0,
            fp: dims.0.max(dims.1) as f64,
        }
    }

    pub fn to_vector(&self) -> ParamVector {
        ParamVector::from([
            self.s, self.theta, self.phi, self.t3, self.cxp, self.cyp, self.fp,
        ])
    }

    pub fn from_vector(x: &ParamVector) -> Self {
        Self {
            s: x[0],
            theta: x[1],
            phi: x[2],
            t3: x[3],
            cxp: x[4],
            cyp: x[5],
            fp: x[6],
        }
    }

    /// Same parameters with both angles wrapped into `(-pi, pi]`.
    pub fn wrapped(mut self) -> Self {
        self.theta = wrap_angle(self.theta);
        self.phi = wrap_angle(self.phi);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.to_vector();
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alignment parameters must be finite: {self:?}"
            )));
        }
        if self.fp == 0.0 {
            return Err(Error::ZeroFocal);
        }
        Ok(())
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoPoint3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub fn back_project(
    u: f64,
    v: f64,
    z_p: f64,
    cxp: f64,
    cyp: f64,
    fp: f64,
) -> Result<PseudoPoint3D> {
    if fp == 0.0 {
        return Err(Error::ZeroFocal);
    }
    Ok(PseudoPoint3D {
        x: z_p * (u - cxp) / fp,
        y: z_p * (v - cyp) / fp,
        z: z_p,
    })
}

/// The forward model with its trigonometric terms evaluated once.
#[derive(Debug, Clone, Copy)]
pub struct ForwardModel {
    p: ThetaParams,
    r31: f64,
    r32: f64,
    r33: f64,
    inv_fp: f64,
}

impl ForwardModel {
    pub fn new(p: &ThetaParams) -> Result<Self> {
        if p.fp == 0.0 {
            return Err(Error::ZeroFocal);
        }
        Ok(Self::unchecked(p))
    }

    fn unchecked(p: &ThetaParams) -> Self {
        let (st, ct) = p.theta.sin_cos();
        let (sp, cp) = p.phi.sin_cos();
        Self {
            p: *p,
            r31: -sp,
            r32: st * cp,
            r33: ct * cp,
            inv_fp: 1.0 / p.fp,
        }
    }

    #[inline]
    pub fn eval(&self, u: f64, v: f64, z: f64) -> f64 {
        let x = z * (u - self.p.cxp) * self.inv_fp;
        let y = z * (v - self.p.cyp) * self.inv_fp;
        self.p.s * (self.r31 * x + self.r32 * y + self.r33 * z) + self.p.t3
    }

    /// Multiplicative depth gain `g(u, v)` such that `F = z g(u, v) + t3`.
    #[inline]
    pub fn gain(&self, u: f64, v: f64) -> f64 {
        self.p.s
            * (self.r31 * (u - self.p.cxp) * self.inv_fp
                + self.r32 * (v - self.p.cyp) * self.inv_fp
                + self.r33)
    }

    /// Partial derivatives of `F` with respect to `[s, theta, phi, t3, cxp, cyp, fp]`.
    pub fn gradient(&self, u: f64, v: f64, z: f64) -> ParamVector {
        let p = &self.p;
        let (st, ct) = p.theta.sin_cos();
        let (sp, cp) = p.phi.sin_cos();
        let x = z * (u - p.cxp) * self.inv_fp;
        let y = z * (v - p.cyp) * self.inv_fp;
        let a = -x * sp + y * st * cp + z * ct * cp;
        ParamVector::from([
            a,
            p.s * (y * ct * cp - z * st * cp),
            p.s * (-x * cp - y * st * sp - z * ct * sp),
            1.0,
            p.s * z * sp * self.inv_fp,
            -p.s * z * st * cp * self.inv_fp,
            p.s * (x * sp - y * st * cp) * self.inv_fp,
        ])
    }
}

pub fn forward_model(u: f64, v: f64, z_p: f64, theta: &ThetaParams) -> Result<f64> {
    Ok(ForwardModel::new(theta)?.eval(u, v, z_p))
}

struct SsraProblem {
    samples: Vec<(f64, f64, f64, f64)>,
}

impl LeastSquares<PARAM_COUNT> for SsraProblem {
    fn residual_count(&self) -> usize {
        self.samples.len()
    }

    fn residuals(&self, x: &ParamVector, out: &mut [f64]) {
        let model = ForwardModel::unchecked(&ThetaParams::from_vector(x));
        for (o, &(u, v, z_p, z_c)) in out.iter_mut().zip(&self.samples) {
            *o = z_c - model.eval(u, v, z_p);
        }
    }

    fn model_gradient(&self, x: &ParamVector, k: usize) -> ParamVector {
        let (u, v, z_p, _) = self.samples[k];
        ForwardModel::unchecked(&ThetaParams::from_vector(x)).gradient(u, v, z_p)
    }
}

/// Which parameters the solver may move; `true` means free.
pub type ParamMask = [bool; PARAM_COUNT];

pub const ALL_FREE: ParamMask = [true; PARAM_COUNT];

/// Freezes `theta` and `phi`, leaving the scale-shift special case.
pub const NO_ROTATION: ParamMask = [true, false, false, true, true, true, true];

/// The starting point used by [`fit_ssra`]: global scale-shift for `(s, t3)`,
/// no rotation, principal point at the image center, focal length equal to
/// the larger image side.
pub fn initial_params(points: &[SamplePoint], dims: (usize, usize)) -> Result<ThetaParams> {
    let g = gssa::fit_gssa(points)?;
    Ok(ThetaParams::scale_shift(g.s, g.t, dims))
}

/// Fits all seven parameters to paired (normalized) samples. Samples from
/// several scenes taken at the same pose can simply be concatenated.
pub fn fit_ssra(
    points: &[SamplePoint],
    cfg: &SolverConfig,
    dims: (usize, usize),
) -> Result<(ThetaParams, SolverReport)> {
    let init = initial_params(points, dims)?;
    fit_ssra_from(points, cfg, init, ALL_FREE)
}

/// Fits from an explicit starting point with a subset of parameters frozen.
pub fn fit_ssra_from(
    points: &[SamplePoint],
    cfg: &SolverConfig,
    init: ThetaParams,
    free: ParamMask,
) -> Result<(ThetaParams, SolverReport)> {
    init.validate()?;
    let samples = paired_values(points)?;
    if samples
        .iter()
        .any(|s| !(s.2.is_finite() && s.3.is_finite()))
    {
        return Err(Error::NonFinite);
    }
    let problem = SsraProblem { samples };
    let (x, report) = solver::minimize(&problem, init.to_vector(), free, cfg)?;
    let fitted = ThetaParams::from_vector(&x);
    if fitted.fp == 0.0 {
        return Err(Error::ZeroFocal);
    }
    Ok((fitted.wrapped(), report))
}

/// Mean squared depth residual of `theta` over paired samples.
pub fn ssra_cost(points: &[SamplePoint], theta: &ThetaParams) -> Result<f64> {
    let model = ForwardModel::new(theta)?;
    let samples = paired_values(points)?;
    Ok(samples
        .iter()
        .map(|&(u, v, z_p, z_c)| (z_c - model.eval(u, v, z_p)).powi(2))
        .sum::<f64>()
        / samples.len() as f64)
}

pub fn apply_ssra(pred_norm: &DepthMap, theta: &ThetaParams) -> Result<DepthMap> {
    let model = ForwardModel::new(theta)?;
    Ok(pred_norm.map_values(|u, v, z| model.eval(u as f64, v as f64, z)))
}
