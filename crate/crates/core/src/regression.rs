//! Linear model between signed background CoC and object disparity.
//!
//! The background CoC estimator only yields magnitudes, so samples are first
//! given a sign ([`disambiguate_sign`]) and then fitted by ordinary least
//! squares ([`fit_linear`]). The fitted slope absorbs the unknown disparity
//! scale and the unknown lens, so the model is all that is needed to predict
//! the CoC of any other virtual object or frame.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::projection::CorrespondenceSet;
use crate::raster::{Mask, ScalarMap};
use crate::scalar::Real;

/// CoC (pixels) below which a sample counts as in focus.
pub const DEFAULT_TAU_ZERO: f64 = 1.0;
/// Disparity variance at or below which the design is rank deficient.
pub const DEGENERATE_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignMode {
    MonotonePositive,
    MonotoneNegative,
    VUnfolded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChosenBy {
    Trend,
    ResidualComparison,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignDecision {
    pub mode: SignMode,
    pub near_zero_fraction: f64,
    pub chosen_by: ChosenBy,
    /// Samples with disparity below this value were negated (V mode only).
    pub split_disparity: Option<f64>,
}

/// Fitted `signed_coc = a * disparity + b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearBlurModel<T> {
    pub a: T,
    pub b: T,
    pub residual_rmse: T,
    pub n_samples: usize,
    pub sign_mode: SignMode,
    pub tau_zero: T,
}

impl<T: Real> LinearBlurModel<T> {
    /// Focus disparity `-b / a`; `None` for a flat model.
    pub fn focus_disparity(&self) -> Option<T> {
        (self.a != T::zero()).then(|| -self.b / self.a).filter(|d| d.is_finite())
    }

    #[inline]
    pub fn predict_signed(&self, disparity: T) -> T {
        self.a * disparity + self.b
    }

    pub fn to_json(&self) -> String
    where
        T: Serialize,
    {
        serde_json::to_string_pretty(self).expect("model serializes") + "\n"
    }

    pub fn from_json(s: &str) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let m: Self = serde_json::from_str(s).map_err(|e| Error::InvalidParameter(format!("model JSON: {e}")))?;
        if m.n_samples < 2 || !m.a.is_finite() || !m.b.is_finite() || !(m.residual_rmse >= T::zero()) {
            return Err(Error::InvalidParameter("model JSON violates model invariants".into()));
        }
        Ok(m)
    }
}

fn check_samples<T: Real>(cocs: &[T], disparities: &[T]) -> Result<()> {
    if cocs.len() != disparities.len() {
        return Err(Error::InvalidParameter(format!(
            "{} CoC samples vs {} disparities",
            cocs.len(),
            disparities.len()
        )));
    }
    if cocs.iter().chain(disparities).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput { pixel: None });
    }
    Ok(())
}

/// Closed-form least squares on mean-centred disparities.
pub fn fit_linear<T: Real>(signed_cocs: &[T], disparities: &[T]) -> Result<LinearBlurModel<T>> {
    check_samples(signed_cocs, disparities)?;
    let n = signed_cocs.len();
    if n < 2 {
        return Err(Error::TooFewSamples(n));
    }
    let nf = T::from_usize(n).unwrap();
    let mean_d = disparities.iter().fold(T::zero(), |s, &d| s + d) / nf;
    let mean_f = signed_cocs.iter().fold(T::zero(), |s, &f| s + f) / nf;
    let (mut sdd, mut sdf) = (T::zero(), T::zero());
    for (&f, &d) in signed_cocs.iter().zip(disparities) {
        let dc = d - mean_d;
        sdd = sdd + dc * dc;
        sdf = sdf + dc * (f - mean_f);
    }
    let variance = sdd / nf;
    if !(variance > T::lit(DEGENERATE_VARIANCE)) {
        return Err(Error::DegenerateFit { variance: variance.to_f64_lossy(), threshold: DEGENERATE_VARIANCE });
    }
    let a = sdf / sdd;
    let b = mean_f - a * mean_d;
    let sse = signed_cocs
        .iter()
        .zip(disparities)
        .fold(T::zero(), |s, (&f, &d)| {
            let r = f - (a * d + b);
            s + r * r
        });
    Ok(LinearBlurModel {
        a,
        b,
        residual_rmse: (sse / nf).sqrt(),
        n_samples: n,
        sign_mode: SignMode::MonotonePositive,
        tau_zero: T::lit(DEFAULT_TAU_ZERO),
    })
}

/// Assigns signs to unsigned CoC samples.
///
/// Without near-zero samples the data is one branch of the V and the sign is
/// the one giving a non-negative slope. With near-zero samples every split
/// between consecutive distinct disparities is scored by its least-squares
/// residual, starting from the split at the minimum-CoC sample; the lower
/// disparity side (farther away) is negated.
pub fn disambiguate_sign<T: Real>(cocs: &[T], disparities: &[T], tau_zero: T) -> Result<(Vec<T>, SignDecision)> {
    check_samples(cocs, disparities)?;
    let n = cocs.len();
    if n == 0 {
        return Err(Error::EmptySamples);
    }
    let near_zero = cocs.iter().filter(|&&c| c <= tau_zero).count();
    let near_zero_fraction = near_zero as f64 / n as f64;

    if near_zero == 0 {
        let trend = fit_linear(cocs, disparities)?;
        let (signed, mode) = if trend.a >= T::zero() {
            (cocs.to_vec(), SignMode::MonotonePositive)
        } else {
            (cocs.iter().map(|&c| -c).collect(), SignMode::MonotoneNegative)
        };
        let decision = SignDecision { mode, near_zero_fraction, chosen_by: ChosenBy::Trend, split_disparity: None };
        return Ok((signed, decision));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| disparities[i].partial_cmp(&disparities[j]).unwrap().then(i.cmp(&j)));
    let d: Vec<T> = order.iter().map(|&i| disparities[i]).collect();
    let f: Vec<T> = order.iter().map(|&i| cocs[i]).collect();

    // centre disparities for conditioning
    let nf = T::from_usize(n).unwrap();
    let mean_d = d.iter().fold(T::zero(), |s, &v| s + v) / nf;
    let dc: Vec<T> = d.iter().map(|&v| v - mean_d).collect();
    let sdd = dc.iter().fold(T::zero(), |s, &v| s + v * v);
    if !(sdd / nf > T::lit(DEGENERATE_VARIANCE)) {
        return Err(Error::DegenerateFit { variance: (sdd / nf).to_f64_lossy(), threshold: DEGENERATE_VARIANCE });
    }
    let sff = f.iter().fold(T::zero(), |s, &v| s + v * v);
    let total_f = f.iter().fold(T::zero(), |s, &v| s + v);
    let total_df = dc.iter().zip(&f).fold(T::zero(), |s, (&a, &b)| s + a * b);

    // SSE of the best line when the first k sorted samples are negated
    let sse_at = |neg_f: T, neg_df: T| {
        let sum_f = total_f - neg_f - neg_f;
        let sum_df = total_df - neg_df - neg_df;
        let syy = sff - sum_f * sum_f / nf;
        (syy - sum_df * sum_df / sdd).max(T::zero())
    };

    let mut prefix_f = Vec::with_capacity(n + 1);
    let mut prefix_df = Vec::with_capacity(n + 1);
    let (mut pf, mut pdf) = (T::zero(), T::zero());
    prefix_f.push(pf);
    prefix_df.push(pdf);
    for k in 0..n {
        pf = pf + f[k];
        pdf = pdf + dc[k] * f[k];
        prefix_f.push(pf);
        prefix_df.push(pdf);
    }

    // initial split: negate everything strictly below the minimum-CoC sample
    let min_idx = (0..n).fold(0, |best, k| if f[k] < f[best] { k } else { best });
    let mut k_best = d.partition_point(|&v| v < d[min_idx]);
    let mut sse_best = sse_at(prefix_f[k_best], prefix_df[k_best]);
    let tol = T::lit(1e-12) * (sff + T::epsilon());
    for k in 0..=n {
        if k > 0 && k < n && d[k - 1] == d[k] {
            continue;
        }
        let sse = sse_at(prefix_f[k], prefix_df[k]);
        if sse + tol < sse_best {
            sse_best = sse;
            k_best = k;
        }
    }

    let mut signed = cocs.to_vec();
    for &i in &order[..k_best] {
        signed[i] = -signed[i];
    }
    let mode = match k_best {
        0 => SignMode::MonotonePositive,
        k if k == n => SignMode::MonotoneNegative,
        _ => SignMode::VUnfolded,
    };
    let split_disparity = (k_best < n).then(|| d[k_best].to_f64_lossy());
    Ok((
        signed,
        SignDecision { mode, near_zero_fraction, chosen_by: ChosenBy::ResidualComparison, split_disparity },
    ))
}

/// Sign disambiguation followed by the least-squares fit.
pub fn fit_unsigned<T: Real>(cocs: &[T], disparities: &[T], tau_zero: T) -> Result<(LinearBlurModel<T>, SignDecision)> {
    let (signed, decision) = disambiguate_sign(cocs, disparities, tau_zero)?;
    let mut model = fit_linear(&signed, disparities)?;
    model.sign_mode = decision.mode;
    model.tau_zero = tau_zero;
    Ok((model, decision))
}

pub fn fit_correspondences<T: Real>(
    pairs: &CorrespondenceSet<T>,
    tau_zero: T,
) -> Result<(LinearBlurModel<T>, SignDecision)> {
    fit_unsigned(&pairs.cocs(), &pairs.disparities(), tau_zero)
}

/// Signed object CoC in pixels: `a / z + b` inside the mask, exactly zero
/// elsewhere.
pub fn predict_object_coc<T: Real>(
    model: &LinearBlurModel<T>,
    object_depth: &ScalarMap,
    object_mask: &Mask,
) -> Result<ScalarMap> {
    object_depth.same_dims(object_mask)?;
    let width = object_depth.width();
    let data: Result<Vec<f32>> = object_depth
        .data()
        .par_iter()
        .zip(object_mask.data().par_iter())
        .enumerate()
        .map(|(i, (&z, &on))| {
            if !on {
                return Ok(0.0);
            }
            if !(z > 0.0) {
                return Err(Error::NonPositiveDepth { depth: z as f64, pixel: Some((i % width, i / width)) });
            }
            let c = model.predict_signed(T::one() / T::from_sample(z)).to_sample();
            if c.is_finite() {
                Ok(c)
            } else {
                Err(Error::NonFiniteInput { pixel: Some((i % width, i / width)) })
            }
        })
        .collect();
    Ok(ScalarMap::from_vec_unchecked(width, object_depth.height(), data?))
}

/// Absolute value of a signed CoC map.
pub fn coc_magnitude(signed: &ScalarMap) -> ScalarMap {
    ScalarMap::from_vec_unchecked(signed.width(), signed.height(), signed.data().iter().map(|c| c.abs()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualHistogram {
    /// `bins + 1` ascending bin edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub a: f64,
    pub b: f64,
    pub r_squared: f64,
    pub residual_rmse: f64,
    pub n_samples: usize,
    pub focus_disparity: Option<f64>,
    pub histogram: ResidualHistogram,
}

const HISTOGRAM_BINS: usize = 16;

/// Goodness-of-fit summary. With zero variance in the signed CoC, R² is
/// reported as 0.
pub fn refit_report<T: Real>(model: &LinearBlurModel<T>, signed_cocs: &[T], disparities: &[T]) -> Result<FitReport> {
    check_samples(signed_cocs, disparities)?;
    if signed_cocs.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = signed_cocs.len() as f64;
    let residuals: Vec<f64> = signed_cocs
        .iter()
        .zip(disparities)
        .map(|(&f, &d)| (f - model.predict_signed(d)).to_f64_lossy())
        .collect();
    let mean_f = signed_cocs.iter().map(|f| f.to_f64_lossy()).sum::<f64>() / n;
    let ss_tot: f64 = signed_cocs.iter().map(|f| (f.to_f64_lossy() - mean_f).powi(2)).sum();
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 0.0 };

    let lo = residuals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|i| lo + span * i as f64 / HISTOGRAM_BINS as f64).collect();
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for r in &residuals {
        let bin = (((r - lo) / span) * HISTOGRAM_BINS as f64).floor() as usize;
        counts[bin.min(HISTOGRAM_BINS - 1)] += 1;
    }
    Ok(FitReport {
        a: model.a.to_f64_lossy(),
        b: model.b.to_f64_lossy(),
        r_squared,
        residual_rmse: (ss_res / n).sqrt(),
        n_samples: signed_cocs.len(),
        focus_disparity: model.focus_disparity().map(|d| d.to_f64_lossy()),
        histogram: ResidualHistogram { edges, counts },
    })
}
