//! Calibrate once, apply many times.
//!
//! Calibration samples ground truth, normalizes the prediction with
//! whole-image statistics, pairs the two and fits the chosen method.
//! Inference replays the stored normalization on each new prediction and
//! applies the stored parameters.
//!
//! Min-max normalization carries an additive `z_min` term. If that term
//! followed every image it would shift the normalized depth by a different
//! constant per image, which the rotation model cannot absorb. The value
//! observed on the (first) calibration image is therefore stored in the
//! model and reused for every later image, making the additive term a fixed
//! reparameterization and the pipeline immune to per-image affine
//! fluctuation of the prediction.

use serde::{Deserialize, Serialize};

use crate::depth::{pair_predictions, sample_points, DepthMap, Mask, SamplePoint};
use crate::error::{Error, Result};
use crate::gssa::{apply_gssa, fit_gssa};
use crate::lwlr::{apply_lwlr, fit_lwlr, LwlrConfig};
use crate::model::{timestamp, Alignment, AlignmentModel, LwlrPayload, Method, FORMAT_VERSION};
use crate::normalize::{compute_stats, NormStats, NormalizationMethod};
use crate::solver::{SolverConfig, SolverReport};
use crate::ssra::{apply_ssra, fit_ssra, ForwardModel};

/// One calibration shot: metric ground truth and the raw prediction for the
/// same image.
#[derive(Debug, Clone, Copy)]
pub struct Shot<'a> {
    pub gt: &'a DepthMap,
    pub pred: &'a DepthMap,
}

#[derive(Debug, Clone)]
pub struct CalibrateOptions {
    pub method: Method,
    pub norm: NormalizationMethod,
    /// Samples drawn per shot.
    pub n: usize,
    pub seed: u64,
    /// Restricts where calibration samples are drawn.
    pub mask: Option<Mask>,
    /// Restricts which pixels feed the normalization statistics.
    pub norm_mask: Option<Mask>,
    pub lwlr: LwlrConfig,
    pub solver: SolverConfig,
}

impl Default for CalibrateOptions {
    fn default() -> Self {
        Self {
            method: Method::Ssra,
            norm: NormalizationMethod::MinMax,
            n: 100,
            seed: 0,
            mask: None,
            norm_mask: None,
            lwlr: LwlrConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

/// Summary of sample residuals `z_c - aligned` after the fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualStats {
    pub count: usize,
    pub mean_abs: f64,
    pub rms: f64,
    pub max_abs: f64,
}

impl ResidualStats {
    fn from_residuals(r: impl Iterator<Item = f64>) -> Self {
        let (mut count, mut abs, mut sq, mut max) = (0usize, 0.0, 0.0, 0.0f64);
        for e in r {
            count += 1;
            abs += e.abs();
            sq += e * e;
            max = max.max(e.abs());
        }
        let n = count.max(1) as f64;
        Self {
            count,
            mean_abs: abs / n,
            rms: (sq / n).sqrt(),
            max_abs: max,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub model: AlignmentModel,
    /// Present for the rotation model.
    pub report: Option<SolverReport>,
    pub residuals: ResidualStats,
    /// The paired, normalized samples the fit saw.
    pub samples: Vec<SamplePoint>,
}

/// Normalizes a raw prediction the way a model with `norm` / `offset`
/// expects.
pub fn normalize_for(
    pred: &DepthMap,
    norm: NormalizationMethod,
    offset: Option<f64>,
    mask: Option<&Mask>,
) -> Result<(DepthMap, NormStats)> {
    let stats = compute_stats(pred, norm, mask)?;
    if stats == NormStats::None {
        return Ok((pred.clone(), stats));
    }
    Ok((pred.map_values(|_, _, z| stats.apply(z, offset)), stats))
}

pub fn calibrate(shots: &[Shot<'_>], opts: &CalibrateOptions) -> Result<Calibration> {
    let first = shots.first().ok_or_else(|| {
        Error::InvalidArgument("at least one calibration shot is required".into())
    })?;
    let dims = first.gt.dims();
    if opts.n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }

    let mut offset = None;
    let mut samples = Vec::new();
    for (k, shot) in shots.iter().enumerate() {
        dims_match(dims, shot.gt.dims())?;
        dims_match(dims, shot.pred.dims())?;
        let full;
        let mask = match &opts.mask {
            Some(m) => m,
            None => {
                full = Mask::full(dims.0, dims.1);
                &full
            }
        };
        let drawn = sample_points(shot.gt, mask, opts.n, opts.seed.wrapping_add(k as u64))?;
        let (normalized, stats) =
            normalize_for(shot.pred, opts.norm, offset, opts.norm_mask.as_ref())?;
        if let (None, NormStats::MinMax { z_min, .. }) = (offset, stats) {
            offset = Some(z_min);
        }
        samples.extend(pair_predictions(&drawn, &normalized)?.into_points());
    }

    let mut report = None;
    let alignment = match opts.method {
        Method::Gssa => Alignment::Gssa(fit_gssa(&samples)?),
        Method::Lwlr => {
            opts.lwlr.validate()?;
            // fail early on singular designs
            fit_gssa(&samples)?;
            Alignment::Lwlr(LwlrPayload::new(opts.lwlr, &samples)?)
        }
        Method::Ssra => {
            let (theta, rep) = fit_ssra(&samples, &opts.solver, dims)?;
            report = Some(rep);
            Alignment::Ssra(theta)
        }
    };

    let residuals = sample_residuals(&alignment, &samples, dims)?;
    let model = AlignmentModel {
        format_version: FORMAT_VERSION,
        alignment,
        norm: opts.norm,
        norm_offset: offset,
        calib_dims: [dims.0, dims.1],
        created_at: timestamp(),
        sample_count: samples.len(),
    };
    Ok(Calibration {
        model,
        report,
        residuals,
        samples,
    })
}

fn dims_match(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn sample_residuals(
    alignment: &Alignment,
    samples: &[SamplePoint],
    dims: (usize, usize),
) -> Result<ResidualStats> {
    let paired = samples.iter().filter_map(|p| p.z_p.map(|z| (p, z)));
    Ok(match alignment {
        Alignment::Gssa(g) => ResidualStats::from_residuals(paired.map(|(p, z)| p.z_c - g.eval(z))),
        Alignment::Ssra(t) => {
            let m = ForwardModel::new(t)?;
            ResidualStats::from_residuals(
                paired.map(|(p, z)| p.z_c - m.eval(p.u as f64, p.v as f64, z)),
            )
        }
        Alignment::Lwlr(l) => {
            let field = fit_lwlr(samples, dims, &l.config())?;
            ResidualStats::from_residuals(paired.map(|(p, z)| {
                let st = field.at(p.u, p.v);
                p.z_c - st.eval(z)
            }))
        }
    })
}

/// Normalizes `pred` as recorded in the model and applies the alignment.
pub fn apply(
    model: &AlignmentModel,
    pred: &DepthMap,
    norm_mask: Option<&Mask>,
) -> Result<DepthMap> {
    if model.method() != Method::Gssa {
        dims_match(model.calib_dims(), pred.dims())?;
    }
    let (normalized, _) = normalize_for(pred, model.norm, model.norm_offset, norm_mask)?;
    match &model.alignment {
        Alignment::Gssa(g) => Ok(apply_gssa(&normalized, *g)),
        Alignment::Ssra(t) => apply_ssra(&normalized, t),
        Alignment::Lwlr(l) => {
            let field = fit_lwlr(&l.points()?, pred.dims(), &l.config())?;
            apply_lwlr(&normalized, &field)
        }
    }
}
