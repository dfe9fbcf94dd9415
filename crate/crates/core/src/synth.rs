//! Synthetic scenes with exactly known alignment.
//!
//! [`render_scene`] ray-casts a pinhole camera against a plane and a few
//! axis-aligned boxes and returns z-depth (distance along the optical axis).
//! [`perturb`] inverts the scale-shift-rotation forward model for a chosen
//! generating parameter vector, producing a pseudo-prediction that the
//! forward model maps back onto the ground truth exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::depth::DepthMap;
use crate::error::{Error, Result};
use crate::ssra::{ForwardModel, ThetaParams};

/// Smallest |g(u, v)| accepted when inverting the forward model.
pub const MIN_GAIN: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Camera {
    /// Ray direction through pixel `(u, v)` scaled so its z component is 1.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        [(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0]
    }
}

/// Points `X` with `normal . X = offset`, in camera coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub normal: [f64; 3],
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cuboid {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub camera: Camera,
    pub plane: Plane,
    #[serde(default)]
    pub boxes: Vec<Cuboid>,
}

impl SceneSpec {
    /// A table tilted away from the camera with three objects on it, roughly
    /// a camera looking down at a desk from 0.9 m.
    pub fn tabletop(width: usize, height: usize) -> Self {
        let f = 0.9 * width.max(height) as f64;
        let tilt: f64 = 0.5;
        let normal = [0.0, tilt.sin(), tilt.cos()];
        let offset = 0.8;
        // center of a box resting on the plane at lateral position (x, y)
        let on_table = |x: f64, y: f64, half: [f64; 3]| {
            let z = (offset - normal[1] * y) / normal[2];
            Cuboid {
                center: [x, y - half[1] * 0.5, z - half[2] * 1.2],
                half_extents: half,
            }
        };
        Self {
            camera: Camera {
                width,
                height,
                fx: f,
                fy: f,
                cx: width as f64 / 2.0,
                cy: height as f64 / 2.0,
            },
            plane: Plane { normal, offset },
            boxes: vec![
                on_table(-0.12, 0.02, [0.04, 0.04, 0.04]),
                on_table(0.08, -0.05, [0.03, 0.06, 0.03]),
                on_table(0.02, 0.12, [0.06, 0.02, 0.05]),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.camera;
        if c.width == 0 || c.height == 0 {
            return Err(Error::InvalidArgument("camera must be at least 1x1".into()));
        }
        if !(c.fx > 0.0 && c.fy > 0.0) {
            return Err(Error::InvalidArgument(
                "focal lengths must be positive".into(),
            ));
        }
        let n = self.plane.normal;
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if !(len > 0.0) || (len - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "plane normal must be a unit vector, has length {len}"
            )));
        }
        for b in &self.boxes {
            if b.half_extents.iter().any(|&h| !(h > 0.0)) {
                return Err(Error::InvalidArgument(
                    "box half extents must be positive".into(),
                ));
            }
            if b.center[2] - b.half_extents[2] <= 0.0 {
                return Err(Error::InvalidArgument(
                    "boxes must lie entirely in front of the camera".into(),
                ));
            }
        }
        Ok(())
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Depth parameter at which the ray `t * dir` hits the plane, if in front.
pub fn intersect_plane(plane: &Plane, dir: [f64; 3]) -> Option<f64> {
    let denom = dot(plane.normal, dir);
    if denom == 0.0 {
        return None;
    }
    let t = plane.offset / denom;
    (t > 0.0).then_some(t)
}

/// Slab test for the ray `t * dir` from the origin; returns the entry `t`.
pub fn intersect_box(b: &Cuboid, dir: [f64; 3]) -> Option<f64> {
    let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
    for axis in 0..3 {
        let lo = b.center[axis] - b.half_extents[axis];
        let hi = b.center[axis] + b.half_extents[axis];
        if dir[axis] == 0.0 {
            if lo > 0.0 || hi < 0.0 {
                return None;
            }
            continue;
        }
        let (mut t0, mut t1) = (lo / dir[axis], hi / dir[axis]);
        if t0 > t1 {
            std::mem::swap(&mut t0, &mut t1);
        }
        t_near = t_near.max(t0);
        t_far = t_far.min(t1);
        if t_near > t_far {
            return None;
        }
    }
    (t_near > 0.0).then_some(t_near)
}

/// Ray-casts every pixel; fails if any pixel sees no surface.
pub fn render_scene(spec: &SceneSpec) -> Result<DepthMap> {
    spec.validate()?;
    let cam = spec.camera;
    let mut data = Vec::with_capacity(cam.width * cam.height);
    for v in 0..cam.height {
        for u in 0..cam.width {
            let dir = cam.ray(u as f64, v as f64);
            let depth = spec
                .boxes
                .iter()
                .filter_map(|b| intersect_box(b, dir))
                .chain(intersect_plane(&spec.plane, dir))
                .fold(f64::INFINITY, f64::min);
            if !depth.is_finite() {
                return Err(Error::EmptyScene);
            }
            data.push(depth);
        }
    }
    DepthMap::from_measured(cam.width, cam.height, data)
}

/// How a ground-truth map is turned into a pseudo-prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub theta_star: ThetaParams,
    /// Standard deviation of Gaussian noise added to the returned ground truth (m).
    #[serde(default)]
    pub gt_noise_sigma: f64,
    /// Per-image affine jitter `a z + b` applied to the pseudo-prediction.
    #[serde(default = "one")]
    pub jitter_a: f64,
    #[serde(default)]
    pub jitter_b: f64,
}

fn one() -> f64 {
    1.0
}

impl PerturbationSpec {
    pub fn exact(theta_star: ThetaParams) -> Self {
        Self {
            theta_star,
            gt_noise_sigma: 0.0,
            jitter_a: 1.0,
            jitter_b: 0.0,
        }
    }
}

/// A pseudo-prediction together with the ground truth it is paired with.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbed {
    pub pred: DepthMap,
    /// Ground truth with the configured noise added; equal to the input when
    /// the noise level is zero.
    pub gt: DepthMap,
}

/// Inverts the forward model: `z_p = (z_c - t3) / g(u, v)`, then applies the
/// jitter. Noise, when configured, is added to the returned ground truth
/// only; the prediction is always derived from the clean input.
pub fn perturb(gt: &DepthMap, pspec: &PerturbationSpec, seed: u64) -> Result<Perturbed> {
    let model = ForwardModel::new(&pspec.theta_star)?;
    if !(pspec.gt_noise_sigma >= 0.0) {
        return Err(Error::InvalidArgument(
            "noise sigma must be non-negative".into(),
        ));
    }
    let t3 = pspec.theta_star.t3;
    for v in 0..gt.height() {
        for u in 0..gt.width() {
            if gt.is_valid(gt.index(u, v)) && !(model.gain(u as f64, v as f64).abs() > MIN_GAIN) {
                return Err(Error::DegenerateG { u, v });
            }
        }
    }
    let pred = gt.map_values(|u, v, z| {
        let z_p = (z - t3) / model.gain(u as f64, v as f64);
        pspec.jitter_a * z_p + pspec.jitter_b
    });

    let noisy = if pspec.gt_noise_sigma > 0.0 {
        let normal = Normal::new(0.0, pspec.gt_noise_sigma)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = gt
            .data()
            .iter()
            .map(|&z| {
                if z.is_finite() {
                    z + normal.sample(&mut rng)
                } else {
                    z
                }
            })
            .collect();
        DepthMap::from_measured(gt.width(), gt.height(), data)?
    } else {
        gt.clone()
    };
    Ok(Perturbed { pred, gt: noisy })
}

/// Scene plus perturbation, as read from a synth configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(flatten)]
    pub scene: SceneSpec,
    pub perturbation: PerturbationSpec,
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.scene.validate()?;
        cfg.perturbation.theta_star.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn generate(&self, seed: u64) -> Result<Perturbed> {
        perturb(&render_scene(&self.scene)?, &self.perturbation, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_scene(normal: [f64; 3], offset: f64) -> SceneSpec {
        SceneSpec {
            camera: Camera {
                width: 32,
                height: 24,
                fx: 30.0,
                fy: 30.0,
                cx: 16.0,
                cy: 12.0,
            },
            plane: Plane { normal, offset },
            boxes: vec![],
        }
    }

    #[test]
    fn fronto_parallel_plane_is_constant() {
        let d = render_scene(&plane_scene([0.0, 0.0, 1.0], 1.0)).unwrap();
        assert!(d.data().iter().all(|&z| z == 1.0));
    }

    #[test]
    fn tilted_plane_matches_closed_form() {
        let n = [0.2f64, -0.3, 0.9];
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        let n = [n[0] / len, n[1] / len, n[2] / len];
        let spec = plane_scene(n, 1.3);
        let d = render_scene(&spec).unwrap();
        let c = spec.camera;
        for v in 0..c.height {
            for u in 0..c.width {
                // n . (z x, z y, z) = offset with x = (u - cx)/fx, y = (v - cy)/fy
                let x = (u as f64 - c.cx) / c.fx;
                let y = (v as f64 - c.cy) / c.fy;
                let z = 1.3 / (n[0] * x + n[1] * y + n[2]);
                assert!((d.get(u, v) - z).abs() < 1e-12);
            }
        }
        // inverse depth is affine in pixel coordinates
        let g = |u: usize, v: usize| 1.0 / d.get(u, v);
        let lhs = g(5, 3) - g(4, 3);
        assert!((lhs - (g(20, 9) - g(19, 9))).abs() < 1e-12);
    }

    #[test]
    fn boxes_occlude_the_plane() {
        let mut spec = plane_scene([0.0, 0.0, 1.0], 2.0);
        spec.boxes.push(Cuboid {
            center: [0.0, 0.0, 1.5],
            half_extents: [0.2, 0.2, 0.2],
        });
        let d = render_scene(&spec).unwrap();
        let center = d.get(16, 12);
        assert!((center - 1.3).abs() < 1e-12);
        assert!(center < 2.0);
        assert_eq!(d.get(0, 0), 2.0);
    }

    #[test]
    fn plane_behind_camera_is_empty() {
        assert!(matches!(
            render_scene(&plane_scene([0.0, 0.0, 1.0], -1.0)),
            Err(Error::EmptyScene)
        ));
    }

    #[test]
    fn tabletop_renders() {
        let spec = SceneSpec::tabletop(160, 120);
        let d = render_scene(&spec).unwrap();
        assert_eq!(d.valid_count(), 160 * 120);
        let (lo, hi) = d
            .data()
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &z| {
                (lo.min(z), hi.max(z))
            });
        assert!(lo > 0.5 && hi < 1.5 && hi - lo > 0.2, "{lo} {hi}");
    }

    fn theta(s: f64, th: f64, ph: f64, t3: f64) -> ThetaParams {
        ThetaParams {
            s,
            theta: th,
            phi: ph,
            t3,
            cxp: 80.0,
            cyp: 60.0,
            fp: 160.0,
        }
    }

    #[test]
    fn identity_parameters_copy_ground_truth() {
        let gt = render_scene(&SceneSpec::tabletop(40, 30)).unwrap();
        let out = perturb(&gt, &PerturbationSpec::exact(theta(1.0, 0.0, 0.0, 0.0)), 0).unwrap();
        assert_eq!(out.pred, gt);
        assert_eq!(out.gt, gt);
    }

    #[test]
    fn forward_model_inverts_perturbation() {
        let gt = render_scene(&SceneSpec::tabletop(160, 120)).unwrap();
        let p = theta(1.7, 0.25, -0.2, 0.4);
        let out = perturb(&gt, &PerturbationSpec::exact(p), 3).unwrap();
        let m = ForwardModel::new(&p).unwrap();
        for v in 0..120 {
            for u in 0..160 {
                let back = m.eval(u as f64, v as f64, out.pred.get(u, v));
                assert!((back - gt.get(u, v)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn vanishing_gain_is_rejected() {
        let gt = DepthMap::from_measured(3, 1, vec![1.0; 3]).unwrap();
        let mut p = theta(1.0, 0.0, std::f64::consts::FRAC_PI_2, 0.0);
        p.cxp = 1.0;
        assert!(matches!(
            perturb(&gt, &PerturbationSpec::exact(p), 0),
            Err(Error::DegenerateG { u: 1, v: 0 })
        ));
    }

    #[test]
    fn noise_is_seeded_and_only_touches_ground_truth() {
        let gt = render_scene(&SceneSpec::tabletop(40, 30)).unwrap();
        let mut spec = PerturbationSpec::exact(theta(1.0, 0.1, 0.1, 0.0));
        spec.gt_noise_sigma = 0.005;
        let a = perturb(&gt, &spec, 11).unwrap();
        let b = perturb(&gt, &spec, 11).unwrap();
        let c = perturb(&gt, &spec, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.gt, c.gt);
        assert_eq!(a.pred, c.pred);
        let spread: f64 =
            a.gt.data()
                .iter()
                .zip(gt.data())
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                / gt.len() as f64;
        assert!((spread.sqrt() - 0.005).abs() < 0.001);
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = SynthConfig {
            scene: SceneSpec::tabletop(64, 48),
            perturbation: PerturbationSpec {
                theta_star: theta(1.2, 0.1, -0.1, 0.3),
                gt_noise_sigma: 0.002,
                jitter_a: 0.8,
                jitter_b: 0.1,
            },
        };
        let text = cfg.to_toml().unwrap();
        assert!(text.contains("[camera]") && text.contains("[perturbation.theta_star]"));
        assert_eq!(SynthConfig::from_toml(&text).unwrap(), cfg);
    }
}
