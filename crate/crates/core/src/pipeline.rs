//! End-to-end wiring: fit a blur model from a background CoC map and an
//! object's layers, then composite objects with predicted CoC.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::{build_correspondences, render_projection_mask, GroundPlane};
use crate::raster::{Mask, RgbImage, RgbaImage, ScalarMap};
use crate::reblur::{gaussian_composite, render_composite, CompositeJob};
use crate::regression::{disambiguate_sign, fit_linear, predict_object_coc, refit_report, FitReport, SignDecision};
use crate::{BlurModel, Camera, Correspondences, ProjectionMask};

/// Ground plane source for the projection mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroundSpec {
    /// Plane through the lowest visible object point.
    Auto,
    Height(f64),
}

#[derive(Debug, Clone, Copy)]
pub struct FitInputs<'a> {
    /// Unsigned background CoC in pixels.
    pub plate_coc: &'a ScalarMap,
    pub object_depth: &'a ScalarMap,
    pub object_mask: &'a Mask,
    pub camera: &'a Camera,
    pub ground: GroundSpec,
    pub tau_zero: f64,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: BlurModel,
    pub decision: SignDecision,
    pub ground: GroundPlane<f64>,
    pub projection: ProjectionMask,
    pub pairs: Correspondences,
    pub report: FitReport,
}

pub fn fit_blur_model(inputs: &FitInputs<'_>) -> Result<FitOutcome> {
    let ground = match inputs.ground {
        GroundSpec::Auto => GroundPlane::through_lowest_point(inputs.object_depth, inputs.object_mask, inputs.camera)?,
        GroundSpec::Height(h) => GroundPlane::new(h),
    };
    let projection = render_projection_mask(inputs.object_depth, inputs.object_mask, inputs.camera, &ground)?;
    let pairs = build_correspondences(&projection, inputs.plate_coc)?;
    let disparities = pairs.disparities();
    let (signed, decision) = disambiguate_sign(&pairs.cocs(), &disparities, inputs.tau_zero)?;
    let mut model = fit_linear(&signed, &disparities)?;
    model.sign_mode = decision.mode;
    model.tau_zero = inputs.tau_zero;
    let report = refit_report(&model, &signed, &disparities)?;
    log::info!(
        "fitted c = {:.6} d + {:.6} from {} pairs ({:?}, R^2 {:.4})",
        model.a,
        model.b,
        model.n_samples,
        decision.mode,
        report.r_squared
    );
    Ok(FitOutcome { model, decision, ground, projection, pairs, report })
}

/// Reblur method used for compositing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reblur {
    #[default]
    Scatter,
    Gaussian,
}

/// Object mask implied by a coverage channel.
pub fn coverage_mask(object: &RgbaImage) -> Mask {
    object.coverage().map(|&a| a > 0.0).expect("coverage is finite")
}

/// Predicts the object's signed CoC with `model` and composites it over
/// `plate`. Returns the composite and the signed CoC map used.
pub fn composite_object(
    model: &BlurModel,
    plate: &RgbImage,
    object: &RgbaImage,
    object_depth: &ScalarMap,
    max_coc: f32,
    method: Reblur,
) -> Result<(RgbImage, ScalarMap)> {
    plate.same_dims(object)?;
    let mask = coverage_mask(object);
    if !mask.any() {
        return Err(Error::EmptyMask);
    }
    let coc = predict_object_coc(model, object_depth, &mask)?;
    let job = CompositeJob::new(plate, object, &coc, max_coc)?;
    let out = match method {
        Reblur::Scatter => render_composite(&job),
        Reblur::Gaussian => gaussian_composite(&job)?,
    };
    Ok((out, coc))
}

/// Pixels where `composite` differs from `plate`: the footprint of an
/// inserted object including its blur.
pub fn footprint_mask(composite: &RgbImage, plate: &RgbImage) -> Result<Mask> {
    composite.same_dims(plate)?;
    Mask::from_vec(
        plate.width(),
        plate.height(),
        composite.data().iter().zip(plate.data()).map(|(a, b)| a != b).collect(),
    )
}
