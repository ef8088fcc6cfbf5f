//! Projection mask: the virtual object dropped straight down (world -y) onto
//! the ground plane, and the (background CoC, object disparity) pairs read
//! inside it.
//!
//! Dropping a point along -y leaves its world x and z untouched, so for a
//! camera looking along world +z the ground point has exactly the camera
//! depth of the object point that generated it. That is what makes the
//! background CoC at the ground pixel a valid sample of the object's blur.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, Pixel, WorldPoint};
use crate::error::{Error, Result};
use crate::raster::{Mask, Raster, ScalarMap};
use crate::scalar::Real;

/// Horizontal plane `y = height` in world coordinates, normal +y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundPlane<T> {
    pub height: T,
}

impl<T: Real> GroundPlane<T> {
    pub fn new(height: T) -> Self {
        Self { height }
    }

    /// Plane through the lowest object surface point seen in `object_mask`.
    pub fn through_lowest_point(
        object_depth: &ScalarMap,
        object_mask: &Mask,
        camera: &CameraModel<T>,
    ) -> Result<Self> {
        let points = object_points(object_depth, object_mask, camera)?;
        let lowest = points
            .iter()
            .map(|(_, p)| p.y())
            .fold(T::infinity(), |a, b| a.min(b));
        if !lowest.is_finite() {
            return Err(Error::EmptyMask);
        }
        Ok(Self::new(lowest))
    }
}

pub fn project_point_to_ground<T: Real>(p: WorldPoint<T>, ground: &GroundPlane<T>) -> Result<WorldPoint<T>> {
    if !(p.y() > ground.height) {
        return Err(Error::BelowGround { y: p.y().to_f64_lossy(), ground: ground.height.to_f64_lossy() });
    }
    Ok(WorldPoint::new(p.x(), ground.height, p.z()))
}

/// One object surface point and where its drop onto the ground lands.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundRecord<T> {
    pub object_pixel: (usize, usize),
    /// Camera depth of the object surface point.
    pub generating_depth: T,
    /// Camera depth of the dropped ground point.
    pub ground_depth: T,
    /// Continuous image position of the ground point.
    pub ground_pixel: Pixel<T>,
}

/// Rendered projection mask plus the per-pixel generating records.
#[derive(Debug, Clone)]
pub struct ProjectionMask<T> {
    mask: Mask,
    records: Vec<GroundRecord<T>>,
    /// For each pixel of `mask`: index into `records`.
    source: Vec<Option<u32>>,
    /// Pixels that received a dropped point directly (not via closing).
    splatted: Vec<bool>,
    closed_count: usize,
}

impl<T: Real> ProjectionMask<T> {
    pub fn mask(&self) -> &Mask {
        &self.mask
    }

    pub fn records(&self) -> &[GroundRecord<T>] {
        &self.records
    }

    /// Generating record assigned to pixel `(x, y)` of the mask.
    pub fn record_at(&self, x: usize, y: usize) -> Option<&GroundRecord<T>> {
        let i = self.mask.index(x, y);
        self.source.get(i).copied().flatten().map(|r| &self.records[r as usize])
    }

    /// Whether `(x, y)` received a dropped point directly rather than through
    /// the closing.
    pub fn is_splatted(&self, x: usize, y: usize) -> bool {
        self.splatted[self.mask.index(x, y)]
    }

    /// Fraction of the closed shadow that survives removal of the object's
    /// own footprint.
    pub fn coverage(&self) -> f64 {
        if self.closed_count == 0 {
            0.0
        } else {
            self.mask.count() as f64 / self.closed_count as f64
        }
    }
}

fn object_points<T: Real>(
    object_depth: &ScalarMap,
    object_mask: &Mask,
    camera: &CameraModel<T>,
) -> Result<Vec<((usize, usize), WorldPoint<T>)>> {
    object_depth.same_dims(object_mask)?;
    if !object_mask.any() {
        return Err(Error::EmptyMask);
    }
    let width = object_mask.width();
    object_mask
        .data()
        .par_iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(i, _)| {
            let (x, y) = (i % width, i / width);
            let depth = object_depth.data()[i];
            if !(depth > 0.0) {
                return Err(Error::NonPositiveDepth { depth: depth as f64, pixel: Some((x, y)) });
            }
            let cam_point = camera.unproject(Pixel::center_of(x, y), T::from_sample(depth))?;
            Ok(((x, y), camera.camera_to_world(cam_point)))
        })
        .collect()
}

/// Drops every object pixel onto the ground, splats a one-pixel footprint,
/// closes the result with a 3x3 kernel and removes the object's own mask.
pub fn render_projection_mask<T: Real>(
    object_depth: &ScalarMap,
    object_mask: &Mask,
    camera: &CameraModel<T>,
    ground: &GroundPlane<T>,
) -> Result<ProjectionMask<T>> {
    let (width, height) = object_mask.dims();
    if !(camera.center().y() > ground.height) {
        return Err(Error::DegenerateGeometry(format!(
            "camera height {} is not above the ground plane {}",
            camera.center().y(),
            ground.height
        )));
    }
    let points = object_points(object_depth, object_mask, camera)?;

    let records: Vec<GroundRecord<T>> = points
        .par_iter()
        .filter_map(|&(object_pixel, p)| {
            // contact points (on the plane) cast no usable shadow
            let g = project_point_to_ground(p, ground).ok()?;
            let g_cam = camera.world_to_camera(g);
            let ground_pixel = camera.project_to_image(g_cam).ok()?;
            ground_pixel.to_index(width, height)?;
            let generating_depth = camera.world_to_camera(p).z();
            Some(GroundRecord { object_pixel, generating_depth, ground_depth: g_cam.z(), ground_pixel })
        })
        .collect();

    // Splat: each pixel keeps the record whose ground point lands closest to
    // its centre; ties go to the earlier object pixel.
    let n = width * height;
    let mut source: Vec<Option<u32>> = vec![None; n];
    let mut best = vec![T::infinity(); n];
    for (ri, r) in records.iter().enumerate() {
        let (ix, iy) = r.ground_pixel.to_index(width, height).expect("filtered above");
        let i = iy * width + ix;
        let d = dist2(r.ground_pixel, Pixel::center_of(ix, iy));
        if d < best[i] {
            best[i] = d;
            source[i] = Some(ri as u32);
        }
    }
    let splatted: Vec<bool> = source.iter().map(Option::is_some).collect();
    let splat_mask = Raster::from_vec_unchecked(width, height, splatted.clone());
    let closed = splat_mask.closed_3x3();
    let closed_count = closed.count();

    // Pixels filled by the closing borrow the nearest splatted neighbour.
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            if !closed.data()[i] || splatted[i] {
                continue;
            }
            let centre = Pixel::center_of(x, y);
            let mut pick: Option<(T, u32)> = None;
            for ny in y.saturating_sub(1)..=(y + 1).min(height - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(width - 1) {
                    if let Some(ri) = source[ny * width + nx].filter(|_| splatted[ny * width + nx]) {
                        let d = dist2(records[ri as usize].ground_pixel, centre);
                        if pick.map_or(true, |(bd, _)| d < bd) {
                            pick = Some((d, ri));
                        }
                    }
                }
            }
            source[i] = pick.map(|(_, ri)| ri);
        }
    }

    let mask = closed.and_not(object_mask)?;
    for (i, on) in mask.data().iter().enumerate() {
        if !on {
            source[i] = None;
        }
    }
    if !mask.any() {
        return Err(Error::DegenerateGeometry(
            "no dropped object point lands inside the image outside the object mask".into(),
        ));
    }
    let result = ProjectionMask { mask, records, source, splatted, closed_count };
    if result.coverage() < 0.25 {
        log::warn!(
            "projection mask keeps only {:.1}% of the dropped footprint; fit may be poorly constrained",
            100.0 * result.coverage()
        );
    }
    Ok(result)
}

#[inline]
fn dist2<T: Real>(a: Pixel<T>, b: Pixel<T>) -> T {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    dx * dx + dy * dy
}

/// One regression sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence<T> {
    /// Background CoC (pixels) sampled at the ground position.
    pub coc: T,
    /// Disparity `1 / z` of the generating object point.
    pub disparity: T,
    /// Mask pixel this pair was read for.
    pub mask_pixel: (usize, usize),
    pub object_pixel: (usize, usize),
    pub generating_depth: T,
    pub ground_depth: T,
}

#[derive(Debug, Clone)]
pub struct CorrespondenceSet<T> {
    pairs: Vec<Correspondence<T>>,
}

/// Spread between generating-point and ground-point camera depths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthDelta {
    pub max_abs: f64,
    pub mean_abs: f64,
}

impl<T: Real> CorrespondenceSet<T> {
    pub fn from_pairs(pairs: Vec<Correspondence<T>>) -> Result<Self> {
        if pairs.len() < 2 {
            return Err(Error::TooFewSamples(pairs.len()));
        }
        if pairs.iter().any(|p| !p.coc.is_finite() || !(p.disparity > T::zero()) || !p.disparity.is_finite()) {
            return Err(Error::NonFiniteInput { pixel: None });
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[Correspondence<T>] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn cocs(&self) -> Vec<T> {
        self.pairs.iter().map(|p| p.coc).collect()
    }

    pub fn disparities(&self) -> Vec<T> {
        self.pairs.iter().map(|p| p.disparity).collect()
    }

    pub fn depth_delta(&self) -> DepthDelta {
        let deltas: Vec<f64> = self
            .pairs
            .iter()
            .map(|p| (p.generating_depth - p.ground_depth).abs().to_f64_lossy())
            .collect();
        DepthDelta {
            max_abs: deltas.iter().copied().fold(0.0, f64::max),
            mean_abs: deltas.iter().sum::<f64>() / deltas.len() as f64,
        }
    }

    /// `coc,disparity` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("coc,disparity\n");
        for p in &self.pairs {
            s.push_str(&format!("{},{}\n", p.coc, p.disparity));
        }
        s
    }
}

/// Bilinear sample at continuous position `at`, or `None` when a tap with
/// non-zero weight falls outside the image or outside `valid`.
pub fn bilinear_in_mask<T: Real>(map: &ScalarMap, valid: &Mask, at: Pixel<T>) -> Option<T> {
    let half = T::lit(0.5);
    let (u, v) = (at.x - half, at.y - half);
    let (x0, y0) = (u.floor(), v.floor());
    let (fx, fy) = (u - x0, v - y0);
    let (w, h) = (map.width() as i64, map.height() as i64);
    let (x0, y0) = (x0.to_i64()?, y0.to_i64()?);
    let mut acc = T::zero();
    for (dx, wx) in [(0, T::one() - fx), (1, fx)] {
        for (dy, wy) in [(0, T::one() - fy), (1, fy)] {
            let wt = wx * wy;
            if wt == T::zero() {
                continue;
            }
            let (x, y) = (x0 + dx, y0 + dy);
            if x < 0 || y < 0 || x >= w || y >= h {
                return None;
            }
            let i = (y * w + x) as usize;
            if !valid.data()[i] {
                return None;
            }
            acc = acc + wt * T::from_sample(map.data()[i]);
        }
    }
    Some(acc)
}

/// One pair per mask pixel, dropping pixels whose CoC sample would read
/// outside the mask.
pub fn build_correspondences<T: Real>(
    projection: &ProjectionMask<T>,
    background_coc: &ScalarMap,
) -> Result<CorrespondenceSet<T>> {
    let mask = projection.mask();
    mask.same_dims(background_coc)?;
    if !mask.any() {
        return Err(Error::EmptyMask);
    }
    let width = mask.width();
    let pairs: Vec<Correspondence<T>> = mask
        .data()
        .par_iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .filter_map(|(i, _)| {
            let (x, y) = (i % width, i / width);
            let r = projection.records[projection.source[i]? as usize];
            let at = if projection.splatted[i] { r.ground_pixel } else { Pixel::center_of(x, y) };
            let coc = bilinear_in_mask(background_coc, mask, at)?;
            Some(Correspondence {
                coc,
                disparity: T::one() / r.generating_depth,
                mask_pixel: (x, y),
                object_pixel: r.object_pixel,
                generating_depth: r.generating_depth,
                ground_depth: r.ground_depth,
            })
        })
        .collect();
    CorrespondenceSet::from_pairs(pairs)
}
