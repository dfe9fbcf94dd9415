//! Dense depth rasters, validity masks and sparse calibration samples.
//!
//! Depth values are stored as `f64` in row-major order. Missing pixels are
//! canonicalized to `NaN`. Ground-truth maps go through
//! [`DepthMap::from_measured`], which additionally maps `0.0` and any
//! nonpositive value to `NaN`, so that for those maps "has a value" and
//! "is a valid depth" coincide. Raw predictions use
//! [`DepthMap::from_prediction`] (`0.0` means missing). Derived maps
//! (normalized predictions, aligned output) may legitimately carry zero or
//! negative values and keep them.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthMap {
    /// Builds a map from raw values, turning non-finite entries into `NaN`.
    pub fn new(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        for z in &mut data {
            if !z.is_finite() {
                *z = f64::NAN;
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a map of measured depth in meters. Anything that is not a
    /// finite, strictly positive number becomes `NaN`.
    pub fn from_measured(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        for z in &mut data {
            if !(z.is_finite() && *z > 0.0) {
                *z = f64::NAN;
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a map of raw predictions: `0.0` and non-finite values mark
    /// missing pixels, negative values are kept (relative depth has no sign
    /// constraint).
    pub fn from_prediction(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        for z in &mut data {
            if !z.is_finite() || *z == 0.0 {
                *z = f64::NAN;
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[self.index(u, v)]
    }

    /// True when the pixel carries a value (not `NaN`).
    #[inline]
    pub fn has_value(&self, idx: usize) -> bool {
        self.data[idx].is_finite()
    }

    /// True when the pixel holds a usable metric depth: finite and `> 0`.
    #[inline]
    pub fn is_valid(&self, idx: usize) -> bool {
        let z = self.data[idx];
        z.is_finite() && z > 0.0
    }

    pub fn valid_count(&self) -> usize {
        (0..self.len()).filter(|&i| self.is_valid(i)).count()
    }

    /// Applies `f(u, v, z)` to every pixel that has a value; missing pixels
    /// stay missing. Rows are processed in parallel; each output pixel only
    /// depends on its own input, so the result is deterministic.
    pub fn map_values<F>(&self, f: F) -> DepthMap
    where
        F: Fn(usize, usize, f64) -> f64 + Sync,
    {
        use rayon::prelude::*;
        let width = self.width;
        let mut out = vec![f64::NAN; self.data.len()];
        out.par_chunks_mut(width)
            .zip(self.data.par_chunks(width))
            .enumerate()
            .for_each(|(v, (dst, src))| {
                for (u, (d, &z)) in dst.iter_mut().zip(src).enumerate() {
                    if z.is_finite() {
                        let y = f(u, v, z);
                        *d = if y.is_finite() { y } else { f64::NAN };
                    }
                }
            });
        DepthMap {
            width: self.width,
            height: self.height,
            data: out,
        }
    }

    pub fn check_dims(&self, other: (usize, usize)) -> Result<()> {
        if self.dims() != other {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other,
            });
        }
        Ok(())
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!(
            "depth map must be at least 1x1, got {width}x{height}"
        )));
    }
    if width * height != len {
        return Err(Error::InvalidArgument(format!(
            "data length {len} does not match {width}x{height}"
        )));
    }
    Ok(())
}

/// Per-pixel boolean gate over a depth map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height, bits.len())?;
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    /// A mask that admits every pixel.
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, idx: usize) -> bool {
        self.bits[idx]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// One calibration point: pixel coordinates, ground-truth depth and, once
/// paired, the (normalized) predicted depth at the same pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplePoint {
    pub u: usize,
    pub v: usize,
    pub z_c: f64,
    pub z_p: Option<f64>,
}

impl SamplePoint {
    pub fn paired(u: usize, v: usize, z_c: f64, z_p: f64) -> Self {
        Self {
            u,
            v,
            z_c,
            z_p: Some(z_p),
        }
    }
}

/// A non-empty set of calibration points with distinct pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    points: Vec<SamplePoint>,
    dims: Option<(usize, usize)>,
}

impl SampleSet {
    pub fn new(points: Vec<SamplePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("sample set is empty".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(points.len());
        for p in &points {
            if !(p.z_c.is_finite() && p.z_c > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "sample ({}, {}) has invalid ground-truth depth {}",
                    p.u, p.v, p.z_c
                )));
            }
            if !seen.insert((p.u, p.v)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate sample pixel ({}, {})",
                    p.u, p.v
                )));
            }
        }
        Ok(Self { points, dims: None })
    }

    /// Like [`SampleSet::new`] but records the raster dimensions the points
    /// were drawn from, which bounds-checks every point.
    pub fn with_dims(points: Vec<SamplePoint>, dims: (usize, usize)) -> Result<Self> {
        let mut set = Self::new(points)?;
        if let Some(p) = set.points.iter().find(|p| p.u >= dims.0 || p.v >= dims.1) {
            return Err(Error::InvalidArgument(format!(
                "sample ({}, {}) lies outside {}x{}",
                p.u, p.v, dims.0, dims.1
            )));
        }
        set.dims = Some(dims);
        Ok(set)
    }

    pub fn points(&self) -> &[SamplePoint] {
        &self.points
    }

    pub fn into_points(self) -> Vec<SamplePoint> {
        self.points
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl std::ops::Deref for SampleSet {
    type Target = [SamplePoint];

    fn deref(&self) -> &[SamplePoint] {
        &self.points
    }
}

/// Draws `min(n, #valid)` distinct pixels uniformly without replacement from
/// the pixels that are valid in `gt` and set in `mask`.
pub fn sample_points(gt: &DepthMap, mask: &Mask, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    gt.check_dims(mask.dims())?;
    let candidates: Vec<usize> = (0..gt.len())
        .filter(|&i| mask.get(i) && gt.is_valid(i))
        .collect();
    if candidates.is_empty() {
        return Err(Error::NoValidPixels);
    }
    let amount = n.min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = index::sample(&mut rng, candidates.len(), amount)
        .into_iter()
        .map(|k| {
            let idx = candidates[k];
            SamplePoint {
                u: idx % gt.width(),
                v: idx / gt.width(),
                z_c: gt.data()[idx],
                z_p: None,
            }
        })
        .collect();
    SampleSet::with_dims(points, gt.dims())
}

/// Reads the prediction at every sample pixel. Points whose predicted pixel
/// carries no value are dropped.
pub fn pair_predictions(samples: &SampleSet, pred: &DepthMap) -> Result<SampleSet> {
    match samples.dims() {
        Some(dims) => pred
            .check_dims(dims)
            .map_err(|_| Error::DimensionMismatch {
                expected: dims,
                found: pred.dims(),
            })?,
        None => {
            if let Some(p) = samples
                .iter()
                .find(|p| p.u >= pred.width() || p.v >= pred.height())
            {
                return Err(Error::DimensionMismatch {
                    expected: (p.u + 1, p.v + 1),
                    found: pred.dims(),
                });
            }
        }
    }
    let points: Vec<SamplePoint> = samples
        .iter()
        .filter_map(|p| {
            let z = pred.get(p.u, p.v);
            z.is_finite().then_some(SamplePoint { z_p: Some(z), ..*p })
        })
        .collect();
    if points.is_empty() {
        return Err(Error::EmptyAfterPairing);
    }
    Ok(SampleSet {
        points,
        dims: samples.dims(),
    })
}

/// Extracts `(u, v, z_p, z_c)` tuples, failing if any point is unpaired.
pub(crate) fn paired_values(points: &[SamplePoint]) -> Result<Vec<(f64, f64, f64, f64)>> {
    points
        .iter()
        .map(|p| match p.z_p {
            Some(z_p) => Ok((p.u as f64, p.v as f64, z_p, p.z_c)),
            None => Err(Error::InvalidArgument(format!(
                "sample ({}, {}) has no predicted depth; pair it first",
                p.u, p.v
            ))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(width: usize, height: usize) -> DepthMap {
        let data = (0..width * height).map(|i| 1.0 + i as f64 * 0.01).collect();
        DepthMap::from_measured(width, height, data).unwrap()
    }

    #[test]
    fn measured_maps_canonicalize_invalid_values() {
        let m = DepthMap::from_measured(2, 2, vec![0.0, -1.0, f64::INFINITY, 2.0]).unwrap();
        assert!(m.data()[..3].iter().all(|z| z.is_nan()));
        assert_eq!(m.valid_count(), 1);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(DepthMap::new(0, 3, vec![]).is_err());
        assert!(DepthMap::new(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn exhaustive_draw_returns_every_valid_pixel_once() {
        let mut data = vec![f64::NAN; 12];
        for i in [0, 3, 5, 8, 11] {
            data[i] = 1.0 + i as f64;
        }
        let gt = DepthMap::from_measured(4, 3, data).unwrap();
        let s = sample_points(&gt, &Mask::full(4, 3), 5, 1).unwrap();
        let mut idx: Vec<usize> = s.iter().map(|p| p.v * 4 + p.u).collect();
        idx.sort_unstable();
        assert_eq!(idx, vec![0, 3, 5, 8, 11]);
        // asking for more than exists returns what exists
        assert_eq!(
            sample_points(&gt, &Mask::full(4, 3), 50, 1).unwrap().len(),
            5
        );
    }

    #[test]
    fn zero_samples_is_an_argument_error() {
        let gt = ramp(3, 3);
        assert!(matches!(
            sample_points(&gt, &Mask::full(3, 3), 0, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn empty_masked_region_has_no_valid_pixels() {
        let gt = ramp(3, 3);
        let mask = Mask::new(3, 3, vec![false; 9]).unwrap();
        assert!(matches!(
            sample_points(&gt, &mask, 4, 0),
            Err(Error::NoValidPixels)
        ));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let gt = ramp(640, 480);
        let mask = Mask::full(640, 480);
        let a = sample_points(&gt, &mask, 100, 7).unwrap();
        let b = sample_points(&gt, &mask, 100, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_points(&gt, &mask, 100, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn pairing_identity_copies_depth() {
        let gt = ramp(5, 4);
        let s = sample_points(&gt, &Mask::full(5, 4), 10, 3).unwrap();
        let paired = pair_predictions(&s, &gt).unwrap();
        assert!(paired.iter().all(|p| p.z_p == Some(p.z_c)));
    }

    #[test]
    fn pairing_drops_missing_predictions() {
        let gt = ramp(5, 4);
        let s = sample_points(&gt, &Mask::full(5, 4), 10, 3).unwrap();
        let mut data = gt.data().to_vec();
        let first = s.points()[0];
        data[first.v * 5 + first.u] = f64::NAN;
        let pred = DepthMap::new(5, 4, data).unwrap();
        let paired = pair_predictions(&s, &pred).unwrap();
        assert_eq!(paired.len(), s.len() - 1);
        assert!(!paired.iter().any(|p| (p.u, p.v) == (first.u, first.v)));
    }

    #[test]
    fn pairing_checks_dimensions() {
        let gt = ramp(5, 4);
        let s = sample_points(&gt, &Mask::full(5, 4), 3, 3).unwrap();
        assert!(matches!(
            pair_predictions(&s, &ramp(4, 5)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pairing_everything_away_is_an_error() {
        let gt = ramp(3, 3);
        let s = sample_points(&gt, &Mask::full(3, 3), 3, 3).unwrap();
        let pred = DepthMap::filled(3, 3, f64::NAN).unwrap();
        assert!(matches!(
            pair_predictions(&s, &pred),
            Err(Error::EmptyAfterPairing)
        ));
    }

    #[test]
    fn duplicate_pixels_are_rejected() {
        let p = SamplePoint::paired(1, 1, 1.0, 1.0);
        assert!(SampleSet::new(vec![p, p]).is_err());
    }

    proptest! {
        #[test]
        fn samples_are_valid_masked_and_distinct(
            w in 1usize..12,
            h in 1usize..12,
            seed in any::<u64>(),
            n in 1usize..40,
            values in proptest::collection::vec(-1.0f64..3.0, 144),
            gate in proptest::collection::vec(any::<bool>(), 144),
        ) {
            let len = w * h;
            let gt = DepthMap::from_measured(w, h, values[..len].to_vec()).unwrap();
            let mask = Mask::new(w, h, gate[..len].to_vec()).unwrap();
            let valid = (0..len).filter(|&i| mask.get(i) && gt.is_valid(i)).count();
            match sample_points(&gt, &mask, n, seed) {
                Ok(s) => {
                    prop_assert_eq!(s.len(), n.min(valid));
                    for p in s.iter() {
                        let i = gt.index(p.u, p.v);
                        prop_assert!(mask.get(i) && gt.is_valid(i));
                        prop_assert_eq!(p.z_c, gt.data()[i]);
                    }
                    let again = sample_points(&gt, &mask, n, seed).unwrap();
                    prop_assert_eq!(&s, &again);
                }
                Err(Error::NoValidPixels) => prop_assert_eq!(valid, 0),
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }

        #[test]
        fn pairing_preserves_surviving_points(
            seed in any::<u64>(),
            holes in proptest::collection::vec(any::<bool>(), 30),
        ) {
            let gt = ramp(6, 5);
            let s = sample_points(&gt, &Mask::full(6, 5), 12, seed).unwrap();
            let pred_data: Vec<f64> = gt.data().iter().zip(&holes)
                .map(|(&z, &hole)| if hole { f64::NAN } else { 2.0 * z })
                .collect();
            let pred = DepthMap::new(6, 5, pred_data).unwrap();
            if let Ok(paired) = pair_predictions(&s, &pred) {
                for p in paired.iter() {
                    let orig = s.iter().find(|q| (q.u, q.v) == (p.u, p.v)).unwrap();
                    prop_assert_eq!(orig.z_c, p.z_c);
                    prop_assert_eq!(p.z_p, Some(2.0 * p.z_c));
                }
            }
        }
    }
}
