//! Thin-lens circle-of-confusion math.
//!
//! Pipeline rasters carry CoC diameters in pixels. Metres only appear here
//! and in the synthetic oracle. Disparity is exactly `1 / z`; any external
//! disparity scale is absorbed by the fitted slope.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::ScalarMap;
use crate::scalar::Real;

/// Aperture diameter, focal length and focus distance, all in metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LensSpec<T>", into = "LensSpec<T>")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct LensParams<T> {
    aperture: T,
    focal_length: T,
    focus_distance: T,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LensSpec<T> {
    pub aperture: T,
    pub focal_length: T,
    pub focus_distance: T,
}

impl<T: Real> TryFrom<LensSpec<T>> for LensParams<T> {
    type Error = Error;
    fn try_from(s: LensSpec<T>) -> Result<Self> {
        LensParams::new(s.aperture, s.focal_length, s.focus_distance)
    }
}

impl<T: Real> From<LensParams<T>> for LensSpec<T> {
    fn from(l: LensParams<T>) -> Self {
        LensSpec { aperture: l.aperture, focal_length: l.focal_length, focus_distance: l.focus_distance }
    }
}

impl<T: Real> LensParams<T> {
    pub fn new(aperture: T, focal_length: T, focus_distance: T) -> Result<Self> {
        let finite = aperture.is_finite() && focal_length.is_finite() && focus_distance.is_finite();
        if !finite || !(aperture > T::zero()) || !(focal_length > T::zero()) || !(focus_distance > focal_length) {
            return Err(Error::InvalidParameter(format!(
                "lens needs A > 0, f > 0, z1 > f (got A={aperture}, f={focal_length}, z1={focus_distance})"
            )));
        }
        Ok(Self { aperture, focal_length, focus_distance })
    }

    #[inline]
    pub fn aperture(&self) -> T {
        self.aperture
    }
    #[inline]
    pub fn focal_length(&self) -> T {
        self.focal_length
    }
    #[inline]
    pub fn focus_distance(&self) -> T {
        self.focus_distance
    }

    /// Lens-to-sensor distance that focuses `focus_distance`.
    pub fn image_distance(&self) -> T {
        self.focal_length * self.focus_distance / (self.focus_distance - self.focal_length)
    }

    /// Blur scale `B = A f` of the signed simplified model.
    pub fn blur_scale(&self) -> T {
        self.aperture * self.focal_length
    }

    pub fn focus_disparity(&self) -> T {
        T::one() / self.focus_distance
    }
}

fn check_depth<T: Real>(z: T) -> Result<()> {
    if z > T::zero() && z.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveDepth { depth: z.to_f64_lossy(), pixel: None })
    }
}

/// Exact thin-lens CoC diameter on the sensor for a point at depth `z2`.
pub fn coc_exact<T: Real>(lens: &LensParams<T>, z2: T) -> Result<T> {
    check_depth(z2)?;
    let z1 = lens.focus_distance;
    let f = lens.focal_length;
    Ok(lens.aperture * (z2 - z1).abs() / z2 * f / (z1 - f))
}

/// Far-focus approximation `A f |1/z1 - 1/z2|`.
pub fn coc_simplified<T: Real>(lens: &LensParams<T>, z2: T) -> Result<T> {
    check_depth(z2)?;
    Ok(lens.blur_scale() * (lens.focus_disparity() - T::one() / z2).abs())
}

/// Signed defocus `B (d - d1)`: positive in front of the focus plane,
/// negative behind it.
#[inline]
pub fn signed_coc<T: Real>(blur_scale: T, disparity: T, focus_disparity: T) -> T {
    blur_scale * (disparity - focus_disparity)
}

/// Gaussian sigma equivalent to a CoC diameter (one quarter of it).
pub fn coc_to_sigma<T: Real>(coc: T) -> Result<T> {
    if coc < T::zero() || !coc.is_finite() {
        return Err(Error::NegativeBlur(coc.to_f64_lossy()));
    }
    Ok(coc / T::lit(4.0))
}

pub fn sigma_to_coc<T: Real>(sigma: T) -> Result<T> {
    if sigma < T::zero() || !sigma.is_finite() {
        return Err(Error::NegativeBlur(sigma.to_f64_lossy()));
    }
    Ok(sigma * T::lit(4.0))
}

pub fn disparity_from_depth<T: Real>(z: T) -> Result<T> {
    check_depth(z)?;
    Ok(T::one() / z)
}

/// Per-pixel simplified CoC in pixels: `coc_simplified * pixels_per_meter`.
///
/// For a camera with pinhole focal length `f_px` the consistent scale is
/// `f_px / f`, which makes the result equal to `f_px A |1/z1 - 1/z|`.
pub fn coc_map_from_depth<T: Real>(depth: &ScalarMap, lens: &LensParams<T>, pixels_per_meter: T) -> Result<ScalarMap> {
    if !(pixels_per_meter > T::zero()) {
        return Err(Error::InvalidParameter(format!("pixel scale must be > 0, got {pixels_per_meter}")));
    }
    let width = depth.width();
    let out: Result<Vec<f32>> = depth
        .data()
        .par_iter()
        .enumerate()
        .map(|(i, &z)| {
            coc_simplified(lens, T::from_sample(z))
                .map(|c| (c * pixels_per_meter).to_sample())
                .map_err(|_| Error::NonPositiveDepth { depth: z as f64, pixel: Some((i % width, i / width)) })
        })
        .collect();
    Ok(ScalarMap::from_vec_unchecked(width, depth.height(), out?))
}
