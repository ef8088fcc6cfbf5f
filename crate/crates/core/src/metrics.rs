//! Image and CoC-map quality metrics restricted to rectangular regions.
//!
//! PSNR and SSIM use a peak of 1.0 and operate on whatever values they are
//! given; the evaluation harness feeds them display-encoded (sRGB) images via
//! [`display_encoded`]. SSIM is the single-scale form with an 11x11 Gaussian
//! window (sigma 1.5), `K1 = 0.01`, `K2 = 0.03`, computed on Rec.601 luma
//! over every window position that lies fully inside the region.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::linear_to_srgb;
use crate::raster::{ChannelTexel, Mask, Raster, RgbImage, ScalarMap, Texel};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl RegionRect {
    pub fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Result<Self> {
        if x1 < x0 || y1 < y0 {
            return Err(Error::InvalidParameter(format!("empty region ({x0}, {y0})-({x1}, {y1})")));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { x0: 0, y0: 0, x1: width - 1, y1: height - 1 }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    fn check_fits(&self, width: usize, height: usize) -> Result<()> {
        if self.x1 >= width || self.y1 >= height {
            return Err(Error::InvalidParameter(format!(
                "region ({}, {})-({}, {}) outside {width}x{height} image",
                self.x0, self.y0, self.x1, self.y1
            )));
        }
        Ok(())
    }
}

/// Tightest rectangle enclosing every set pixel.
pub fn bounding_box_of_mask(mask: &Mask) -> Result<RegionRect> {
    let mut rect: Option<RegionRect> = None;
    for (y, row) in mask.rows().enumerate() {
        for (x, _) in row.iter().enumerate().filter(|(_, &on)| on) {
            rect = Some(match rect {
                None => RegionRect { x0: x, y0: y, x1: x, y1: y },
                Some(r) => RegionRect { x0: r.x0.min(x), y0: r.y0.min(y), x1: r.x1.max(x), y1: r.y1.max(y) },
            });
        }
    }
    rect.ok_or(Error::EmptyMask)
}

fn resolve<P: Texel, Q: Texel>(a: &Raster<P>, b: &Raster<Q>, region: Option<RegionRect>) -> Result<RegionRect> {
    a.same_dims(b)?;
    let r = region.unwrap_or_else(|| RegionRect::full(a.width(), a.height()));
    r.check_fits(a.width(), a.height())?;
    Ok(r)
}

fn mean_squared_error<P: ChannelTexel>(a: &Raster<P>, b: &Raster<P>, r: RegionRect) -> f64 {
    let mut sum = 0.0f64;
    for y in r.y0..=r.y1 {
        for x in r.x0..=r.x1 {
            let (p, q) = (a.at(x, y), b.at(x, y));
            for c in 0..P::CHANNELS {
                let d = p.channel(c) as f64 - q.channel(c) as f64;
                sum += d * d;
            }
        }
    }
    sum / (r.width() * r.height() * P::CHANNELS) as f64
}

/// Root mean squared difference over the region (channels pooled).
pub fn rmse<P: ChannelTexel>(a: &Raster<P>, b: &Raster<P>, region: Option<RegionRect>) -> Result<f64> {
    let r = resolve(a, b, region)?;
    Ok(mean_squared_error(a, b, r).sqrt())
}

/// `10 log10(1 / MSE)` over the region, channels pooled. Identical inputs
/// give `f64::INFINITY`.
pub fn psnr<P: ChannelTexel>(img: &Raster<P>, reference: &Raster<P>, region: Option<RegionRect>) -> Result<f64> {
    let r = resolve(img, reference, region)?;
    let mse = mean_squared_error(img, reference, r);
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    let mut total = 0.0;
    for j in 0..SSIM_WINDOW {
        for i in 0..SSIM_WINDOW {
            let (dx, dy) = (i as f64 - half, j as f64 - half);
            let v = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[j * SSIM_WINDOW + i] = v;
            total += v;
        }
    }
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Mean SSIM over all window positions inside the region.
pub fn ssim<P: ChannelTexel>(img: &Raster<P>, reference: &Raster<P>, region: Option<RegionRect>) -> Result<f64> {
    let r = resolve(img, reference, region)?;
    if r.width() < SSIM_WINDOW || r.height() < SSIM_WINDOW {
        return Err(Error::RegionTooSmall(r.width(), r.height(), SSIM_WINDOW));
    }
    let window = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let (rw, rh) = (r.width(), r.height());
    let luma = |im: &Raster<P>| -> Vec<f64> {
        (r.y0..=r.y1).flat_map(|y| (r.x0..=r.x1).map(move |x| im.at(x, y).luma() as f64)).collect()
    };
    let (a, b) = (luma(img), luma(reference));
    let (nx, ny) = (rw - SSIM_WINDOW + 1, rh - SSIM_WINDOW + 1);
    let total: f64 = (0..ny)
        .into_par_iter()
        .map(|wy| {
            let mut row_sum = 0.0;
            for wx in 0..nx {
                let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for j in 0..SSIM_WINDOW {
                    let base = (wy + j) * rw + wx;
                    for i in 0..SSIM_WINDOW {
                        let wgt = window[j * SSIM_WINDOW + i];
                        let (p, q) = (a[base + i], b[base + i]);
                        ma += wgt * p;
                        mb += wgt * q;
                        aa += wgt * p * p;
                        bb += wgt * q * q;
                        ab += wgt * (p * q);
                    }
                }
                let (va, vb, cov) = (aa - ma * ma, bb - mb * mb, ab - ma * mb);
                row_sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            }
            row_sum
        })
        .collect::<Vec<f64>>()
        .into_iter()
        .sum();
    Ok(total / (nx * ny) as f64)
}

/// Linear-light image re-encoded to sRGB values in `[0, 1]`, the space the
/// image metrics are reported in.
pub fn display_encoded(img: &RgbImage) -> RgbImage {
    let data = img.data().iter().map(|p| [linear_to_srgb(p[0]), linear_to_srgb(p[1]), linear_to_srgb(p[2])]).collect();
    Raster::from_vec_unchecked(img.width(), img.height(), data)
}

/// What a blur map holds: CoC diameters or Gaussian sigmas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlurMapKind {
    Coc,
    Sigma,
}

/// Converts a blur map to CoC diameters (sigma maps are scaled by 4).
pub fn as_coc_map(map: &ScalarMap, kind: BlurMapKind) -> ScalarMap {
    match kind {
        BlurMapKind::Coc => map.clone(),
        BlurMapKind::Sigma => Raster::from_vec_unchecked(
            map.width(),
            map.height(),
            map.data().iter().map(|&s| s * 4.0).collect(),
        ),
    }
}

/// One line of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub scene: String,
    pub focus: f64,
    pub aperture: f64,
    pub psnr: f64,
    pub ssim: f64,
    /// CoC-map RMSE in pixels, when a map was evaluated.
    pub rmse: Option<f64>,
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.4}")
    }
}

pub fn report_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from("method,scene,focus,aperture,psnr,ssim,rmse\n");
    for r in rows {
        let rmse = r.rmse.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.6},{}",
            r.method,
            r.scene,
            r.focus,
            r.aperture,
            fmt_db(r.psnr),
            r.ssim,
            rmse
        );
    }
    s
}

/// Fixed-width table for terminals.
pub fn report_table(rows: &[EvalRow]) -> String {
    let mut s = format!(
        "{:<12} {:<16} {:>8} {:>9} {:>10} {:>8} {:>9}\n",
        "method", "scene", "focus", "aperture", "PSNR", "SSIM", "RMSE"
    );
    for r in rows {
        let rmse = r.rmse.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "{:<12} {:<16} {:>8.3} {:>9.4} {:>10} {:>8.4} {:>9}",
            r.method,
            r.scene,
            r.focus,
            r.aperture,
            fmt_db(r.psnr),
            r.ssim,
            rmse
        );
    }
    s
}
