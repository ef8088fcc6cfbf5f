//! Job configuration files.
//!
//! Relative paths are resolved against the directory holding the config.
//! Every input is loaded and validated by [`Job::load`] before a command
//! writes anything.

use std::path::{Path, PathBuf};

use defocus_core::camera::CameraModel;
use defocus_core::io;
use defocus_core::lens::{coc_map_from_depth, LensParams};
use defocus_core::pipeline::GroundSpec;
use defocus_core::reblur::DEFAULT_MAX_COC;
use defocus_core::regression::DEFAULT_TAU_ZERO;
use defocus_core::{Camera, Error, Result, RgbImage, RgbaImage, ScalarMap};
use serde::{Deserialize, Serialize};

/// Background CoC synthesised from a lens and a depth map.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LensDepth {
    pub lens: LensParams<f64>,
    pub depth: PathBuf,
    /// Sensor pixels per metre; defaults to `focal_px / focal_length`.
    #[serde(default)]
    pub pixels_per_meter: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroundField {
    Height(f64),
    Keyword(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub background: PathBuf,
    #[serde(default)]
    pub background_coc: Option<PathBuf>,
    #[serde(default)]
    pub lens_depth: Option<LensDepth>,
    /// RGBA PNG; alpha is coverage.
    pub object: PathBuf,
    pub object_depth: PathBuf,
    pub camera: CameraModel<f64>,
    /// Plane height in world units or `"auto"`.
    #[serde(default = "auto_ground")]
    pub ground: GroundField,
    #[serde(default)]
    pub tau_zero: Option<f64>,
    #[serde(default)]
    pub max_coc: Option<f32>,
}

fn auto_ground() -> GroundField {
    GroundField::Keyword("auto".into())
}

/// A validated job with every input loaded.
#[derive(Debug)]
pub struct Job {
    pub background: RgbImage,
    pub background_coc: ScalarMap,
    pub object: RgbaImage,
    pub object_depth: ScalarMap,
    pub camera: Camera,
    pub ground: GroundSpec,
    pub tau_zero: f64,
    pub max_coc: f32,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl Job {
    pub fn load(path: &Path, tau_zero: Option<f64>, max_coc: Option<f32>) -> Result<Job> {
        let cfg: JobConfig = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let ground = match cfg.ground {
            GroundField::Height(h) if h.is_finite() => GroundSpec::Height(h),
            GroundField::Keyword(ref k) if k == "auto" => GroundSpec::Auto,
            other => return Err(Error::InvalidParameter(format!("ground must be a number or \"auto\", got {other:?}"))),
        };
        let tau_zero = tau_zero.or(cfg.tau_zero).unwrap_or(DEFAULT_TAU_ZERO);
        if !(tau_zero >= 0.0) || !tau_zero.is_finite() {
            return Err(Error::InvalidParameter(format!("tau_zero must be a finite non-negative value, got {tau_zero}")));
        }
        let max_coc = max_coc.or(cfg.max_coc).unwrap_or(DEFAULT_MAX_COC);
        if !(max_coc >= 1.0) || !max_coc.is_finite() {
            return Err(Error::InvalidParameter(format!("max_coc must be >= 1 px, got {max_coc}")));
        }

        let background = io::read_png_rgb(resolve(base, &cfg.background))?;
        let background_coc = match (&cfg.background_coc, &cfg.lens_depth) {
            (Some(p), None) => io::read_pfm(resolve(base, p))?,
            (None, Some(ld)) => {
                let depth = io::read_pfm(resolve(base, &ld.depth))?;
                let ppm = ld.pixels_per_meter.unwrap_or(cfg.camera.focal_px() / ld.lens.focal_length());
                coc_map_from_depth(&depth, &ld.lens, ppm)?
            }
            _ => {
                return Err(Error::InvalidParameter(
                    "specify exactly one of background_coc or lens_depth".into(),
                ))
            }
        };
        let object = io::read_png_rgba(resolve(base, &cfg.object))?;
        let object_depth = io::read_pfm(resolve(base, &cfg.object_depth))?;
        background.same_dims(&background_coc)?;
        background.same_dims(&object)?;
        background.same_dims(&object_depth)?;
        check_object_depth(&object, &object_depth)?;
        Ok(Job {
            background,
            background_coc,
            object,
            object_depth,
            camera: cfg.camera,
            ground,
            tau_zero,
            max_coc,
        })
    }
}

/// Object depth must be positive wherever the object has coverage.
pub fn check_object_depth(object: &RgbaImage, depth: &ScalarMap) -> Result<()> {
    object.same_dims(depth)?;
    let w = object.width();
    for (i, (px, &z)) in object.data().iter().zip(depth.data()).enumerate() {
        if px[3] > 0.0 && !(z > 0.0) {
            return Err(Error::NonPositiveDepth { depth: z as f64, pixel: Some((i % w, i / w)) });
        }
    }
    Ok(())
}
