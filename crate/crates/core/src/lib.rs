//! Defocus-consistent compositing of virtual objects into photographs
//! without camera metadata.
//!
//! The core math is generic over the scalar type (`f32` or `f64`); the
//! aliases below fix it to `f64`, which is what the pipeline uses.

// `!(x > 0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod error;
pub mod io;
pub mod lens;
pub mod metrics;
pub mod pipeline;
pub mod projection;
pub mod raster;
pub mod reblur;
pub mod regression;
pub mod scalar;
pub mod synthetic;

pub use error::{Error, ErrorKind, Result};
pub use raster::{Mask, Raster, Rgb, RgbImage, Rgba, RgbaImage, ScalarMap};
pub use scalar::Real;

pub type Lens = lens::LensParams<f64>;
pub type Camera = camera::CameraModel<f64>;
pub type BlurModel = regression::LinearBlurModel<f64>;
pub type Ground = projection::GroundPlane<f64>;
pub type ProjectionMask = projection::ProjectionMask<f64>;
pub type Correspondences = projection::CorrespondenceSet<f64>;
