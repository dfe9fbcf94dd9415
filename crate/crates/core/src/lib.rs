//! Metric depth from affine-invariant monocular depth predictions.
//!
//! A fixed camera is calibrated once from sparse ground-truth depth: the
//! prediction is normalized per image, paired with the samples and fitted
//! with one of three alignments:
//!
//! - [`gssa`]: one global scale and shift,
//! - [`lwlr`]: a per-pixel scale and shift from Gaussian-weighted samples,
//! - [`ssra`]: scale, two rotation angles, depth translation and
//!   pseudo-intrinsics, fitted by damped Gauss-Newton.
//!
//! The resulting [`model::AlignmentModel`] is applied to every later
//! prediction from the same pose with [`pipeline::apply`].

pub mod bench;
pub mod depth;
pub mod error;
pub mod gssa;
pub mod io;
pub mod lwlr;
pub mod metrics;
pub mod model;
pub mod normalize;
pub mod pipeline;
pub mod solver;
pub mod ssra;
pub mod synth;

pub use depth::{pair_predictions, sample_points, DepthMap, Mask, SamplePoint, SampleSet};
pub use error::{Error, Result};
pub use gssa::{apply_gssa, fit_gssa, GlobalScaleShift};
pub use lwlr::{apply_lwlr, fit_lwlr, lwlr_weight, LwlrConfig, ScaleShiftField};
pub use metrics::{evaluate, MetricsReport};
pub use model::{Alignment, AlignmentModel, Method};
pub use normalize::{normalize, NormStats, NormalizationMethod};
pub use solver::{SolverConfig, SolverReport};
pub use ssra::{apply_ssra, back_project, fit_ssra, forward_model, PseudoPoint3D, ThetaParams};
