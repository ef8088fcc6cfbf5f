//! Occlusion-aware scatter renderer for spatially varying lens blur.
//!
//! Every source pixel spreads its (coverage-premultiplied) color over an
//! anti-aliased disc whose diameter is its |CoC|. Sources are split into
//! three layers by signed CoC: back (`< -1 px`), focal and front (`> +1 px`).
//! Each layer is accumulated separately and the layers are composited back
//! to front, so a blurred front layer spreads over what lies behind it while
//! a sharp focal layer is never overdrawn by blur from behind.
//!
//! Compositing a virtual object ([`render_composite`]) uses the background
//! plate as the bottom layer: the plate keeps a zero CoC and is reproduced
//! untouched wherever no object blur reaches.
//!
//! Work is split into fixed bands of source rows; each band owns an
//! accumulator covering its rows plus a halo, and bands are merged in index
//! order, so the output is bitwise independent of the thread count.

use rayon::prelude::*;

use crate::camera::Pixel;
use crate::error::{Error, Result};
use crate::raster::{Raster, Rgb, RgbImage, RgbaImage, ScalarMap};

pub const DEFAULT_MAX_COC: f32 = 64.0;
/// |CoC| in pixels separating the focal layer from the back/front layers.
pub const LAYER_THRESHOLD: f32 = 1.0;

const BAND_ROWS: usize = 32;
const BAND_GROUP: usize = 8;

/// Inputs of the object compositing render.
#[derive(Debug, Clone, Copy)]
pub struct CompositeJob<'a> {
    background: &'a RgbImage,
    object: &'a RgbaImage,
    object_coc: &'a ScalarMap,
    max_coc: f32,
}

impl<'a> CompositeJob<'a> {
    /// `object_coc` is the signed object CoC in pixels; it must be zero
    /// wherever the object has no coverage.
    pub fn new(background: &'a RgbImage, object: &'a RgbaImage, object_coc: &'a ScalarMap, max_coc: f32) -> Result<Self> {
        background.same_dims(object)?;
        background.same_dims(object_coc)?;
        check_clamp(object_coc, max_coc)?;
        let width = object.width();
        for (i, (px, &c)) in object.data().iter().zip(object_coc.data()).enumerate() {
            if !(0.0..=1.0).contains(&px[3]) {
                return Err(Error::InvalidParameter(format!(
                    "object coverage {} at ({}, {}) outside [0, 1]",
                    px[3],
                    i % width,
                    i / width
                )));
            }
            if px[3] == 0.0 && c != 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "non-zero CoC {c} at uncovered pixel ({}, {})",
                    i % width,
                    i / width
                )));
            }
        }
        Ok(Self { background, object, object_coc, max_coc })
    }

    pub fn max_coc(&self) -> f32 {
        self.max_coc
    }
}

fn check_clamp(coc: &ScalarMap, max_coc: f32) -> Result<()> {
    if !(max_coc >= 1.0) || !max_coc.is_finite() {
        return Err(Error::InvalidParameter(format!("max CoC must be >= 1 px, got {max_coc}")));
    }
    let width = coc.width();
    if let Some((i, &c)) = coc.data().iter().enumerate().find(|(_, c)| c.abs() > max_coc) {
        return Err(Error::CocExceedsClamp { coc: c, max_coc, x: i % width, y: i / width });
    }
    Ok(())
}

/// Premultiplied color and weight sums for a window of image rows.
#[derive(Debug, Clone)]
pub struct ScatterAccumulator {
    width: usize,
    height: usize,
    row0: usize,
    rows: usize,
    /// `[r, g, b, weight]` per pixel of the window.
    cells: Vec<[f64; 4]>,
}

impl ScatterAccumulator {
    /// Accumulator covering the whole image.
    pub fn new(width: usize, height: usize) -> Self {
        Self::window(width, height, 0, height)
    }

    fn window(width: usize, height: usize, row0: usize, rows: usize) -> Self {
        Self { width, height, row0, rows, cells: vec![[0.0; 4]; width * rows] }
    }

    /// `(premultiplied rgb, weight)` at an image pixel inside the window.
    pub fn get(&self, x: usize, y: usize) -> Option<([f64; 3], f64)> {
        if x >= self.width || y < self.row0 || y >= self.row0 + self.rows {
            return None;
        }
        let c = self.cells[(y - self.row0) * self.width + x];
        Some(([c[0], c[1], c[2]], c[3]))
    }

    pub fn total_weight(&self) -> f64 {
        self.cells.iter().map(|c| c[3]).sum()
    }

    #[inline]
    fn deposit(&mut self, x: usize, y: usize, color: Rgb, mass: f64) {
        debug_assert!(y >= self.row0 && y < self.row0 + self.rows);
        let cell = &mut self.cells[(y - self.row0) * self.width + x];
        cell[0] += color[0] as f64 * mass;
        cell[1] += color[1] as f64 * mass;
        cell[2] += color[2] as f64 * mass;
        cell[3] += mass;
    }
}

/// Disc weight at distance `dist` from the centre for radius `radius`,
/// with a one-pixel smoothstep edge centred on the radius.
#[inline]
pub fn disc_weight(dist: f64, radius: f64) -> f64 {
    let t = (radius + 0.5 - dist).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Scatters `coverage * color` over an anti-aliased disc of diameter
/// `max(coc, 1)` centred at `center`, normalised to unit mass over the taps
/// that fall inside the image. A CoC below one pixel deposits everything on
/// the pixel containing the centre.
pub fn disc_splat(center: Pixel<f64>, color: Rgb, coverage: f32, coc: f32, acc: &mut ScatterAccumulator) {
    let (w, h) = (acc.width, acc.height);
    let coverage = coverage as f64;
    if coc < 1.0 {
        if let Some((x, y)) = center.to_index(w, h) {
            acc.deposit(x, y, color, coverage);
        }
        return;
    }
    let radius = coc as f64 * 0.5;
    let reach = radius + 0.5;
    let x_lo = (center.x - 0.5 - reach).ceil().max(0.0) as usize;
    let y_lo = (center.y - 0.5 - reach).ceil().max(0.0) as usize;
    let x_hi = ((center.x - 0.5 + reach).floor() as i64).min(w as i64 - 1);
    let y_hi = ((center.y - 0.5 + reach).floor() as i64).min(h as i64 - 1);
    if x_hi < x_lo as i64 || y_hi < y_lo as i64 {
        return;
    }
    let (x_hi, y_hi) = (x_hi as usize, y_hi as usize);

    let mut norm = 0.0;
    for ty in y_lo..=y_hi {
        let dy = ty as f64 + 0.5 - center.y;
        for tx in x_lo..=x_hi {
            let dx = tx as f64 + 0.5 - center.x;
            norm += disc_weight((dx * dx + dy * dy).sqrt(), radius);
        }
    }
    if norm <= 0.0 {
        return;
    }
    let scale = coverage / norm;
    for ty in y_lo..=y_hi {
        let dy = ty as f64 + 0.5 - center.y;
        for tx in x_lo..=x_hi {
            let dx = tx as f64 + 0.5 - center.x;
            let k = disc_weight((dx * dx + dy * dy).sqrt(), radius);
            if k > 0.0 {
                acc.deposit(tx, ty, color, k * scale);
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Layer {
    Back = 0,
    Focal = 1,
    Front = 2,
}

#[inline]
fn layer_of(signed_coc: f32) -> Layer {
    if signed_coc > LAYER_THRESHOLD {
        Layer::Front
    } else if signed_coc < -LAYER_THRESHOLD {
        Layer::Back
    } else {
        Layer::Focal
    }
}

/// One scattering source: color, coverage and signed CoC.
type Source = Option<(Rgb, f32, f32)>;

/// Scatters all sources into three full-image layer accumulators.
fn scatter_layers<F>(width: usize, height: usize, source: F) -> [ScatterAccumulator; 3]
where
    F: Fn(usize, usize) -> Source + Sync,
{
    let mut max_abs = 0.0f32;
    let mut used = [false; 3];
    for y in 0..height {
        for x in 0..width {
            if let Some((_, cov, c)) = source(x, y) {
                if cov > 0.0 {
                    max_abs = max_abs.max(c.abs());
                    used[layer_of(c) as usize] = true;
                }
            }
        }
    }
    let halo = (max_abs as f64 * 0.5 + 1.0).ceil() as usize;
    let band = BAND_ROWS.max(2 * halo);
    let bands: Vec<usize> = (0..height).step_by(band).collect();

    let mut layers = [
        ScatterAccumulator::new(width, height),
        ScatterAccumulator::new(width, height),
        ScatterAccumulator::new(width, height),
    ];
    for group in bands.chunks(BAND_GROUP) {
        let partial: Vec<(usize, Vec<Option<ScatterAccumulator>>)> = group
            .par_iter()
            .map(|&y0| {
                let y1 = (y0 + band).min(height);
                let row0 = y0.saturating_sub(halo);
                let rows = (y1 + halo).min(height) - row0;
                let mut accs: Vec<Option<ScatterAccumulator>> = used
                    .iter()
                    .map(|&u| u.then(|| ScatterAccumulator::window(width, height, row0, rows)))
                    .collect();
                for y in y0..y1 {
                    for x in 0..width {
                        let Some((color, cov, c)) = source(x, y) else { continue };
                        if cov <= 0.0 {
                            continue;
                        }
                        let acc = accs[layer_of(c) as usize].as_mut().expect("layer allocated");
                        disc_splat(Pixel::center_of(x, y), color, cov, c.abs(), acc);
                    }
                }
                (row0, accs)
            })
            .collect();
        for (row0, accs) in partial {
            for (layer, acc) in layers.iter_mut().zip(accs) {
                let Some(acc) = acc else { continue };
                let start = row0 * width;
                for (dst, src) in layer.cells[start..start + acc.cells.len()].iter_mut().zip(&acc.cells) {
                    for k in 0..4 {
                        dst[k] += src[k];
                    }
                }
            }
        }
    }
    layers
}

/// Composites the three layers over `base` (premultiplied rgb, alpha).
#[inline]
fn composite_layers(layers: &[ScatterAccumulator; 3], i: usize, mut rgb: [f64; 3], mut alpha: f64) -> ([f64; 3], f64) {
    for layer in layers {
        let [r, g, b, w] = layer.cells[i];
        if w <= 0.0 {
            continue;
        }
        let (c, a) = if w >= 1.0 { ([r / w, g / w, b / w], 1.0) } else { ([r, g, b], w) };
        for k in 0..3 {
            rgb[k] = c[k] + (1.0 - a) * rgb[k];
        }
        alpha = a + (1.0 - a) * alpha;
    }
    (rgb, alpha)
}

#[inline]
fn to_output(rgb: [f64; 3]) -> Rgb {
    [rgb[0].clamp(0.0, 1.0) as f32, rgb[1].clamp(0.0, 1.0) as f32, rgb[2].clamp(0.0, 1.0) as f32]
}

/// Sharp object alpha-blended over the plate, computed with the same
/// arithmetic the renderer uses for unblurred pixels.
pub fn naive_composite(background: &RgbImage, object: &RgbaImage) -> Result<RgbImage> {
    background.same_dims(object)?;
    let data = background
        .data()
        .par_iter()
        .zip(object.data().par_iter())
        .map(|(bg, o)| {
            let a = o[3] as f64;
            let mut rgb = [0.0; 3];
            for k in 0..3 {
                rgb[k] = o[k] as f64 * a + (1.0 - a) * bg[k] as f64;
            }
            to_output(rgb)
        })
        .collect();
    Ok(Raster::from_vec_unchecked(background.width(), background.height(), data))
}

/// Defocused composite: the object's layers scattered over the unchanged
/// background plate.
pub fn render_composite(job: &CompositeJob<'_>) -> RgbImage {
    let (width, height) = job.background.dims();
    let object = job.object.data();
    let coc = job.object_coc.data();
    let layers = scatter_layers(width, height, |x, y| {
        let i = y * width + x;
        let o = object[i];
        (o[3] > 0.0).then(|| ([o[0], o[1], o[2]], o[3], coc[i]))
    });
    let data = job
        .background
        .data()
        .par_iter()
        .enumerate()
        .map(|(i, bg)| {
            let base = [bg[0] as f64, bg[1] as f64, bg[2] as f64];
            let (rgb, _) = composite_layers(&layers, i, base, 1.0);
            to_output(rgb)
        })
        .collect();
    Raster::from_vec_unchecked(width, height, data)
}

/// Scatter-renders a whole all-in-focus image with a signed CoC map.
/// Pixels no layer reaches with full weight are renormalised by the total
/// accumulated coverage.
pub fn render_full_reblur(image: &RgbImage, signed_coc: &ScalarMap, max_coc: f32) -> Result<RgbImage> {
    image.same_dims(signed_coc)?;
    check_clamp(signed_coc, max_coc)?;
    let (width, height) = image.dims();
    let pixels = image.data();
    let coc = signed_coc.data();
    let layers = scatter_layers(width, height, |x, y| {
        let i = y * width + x;
        Some((pixels[i], 1.0, coc[i]))
    });
    let data = pixels
        .par_iter()
        .enumerate()
        .map(|(i, px)| {
            let (rgb, alpha) = composite_layers(&layers, i, [0.0; 3], 0.0);
            if alpha >= 1.0 {
                to_output(rgb)
            } else if alpha > 0.0 {
                to_output([rgb[0] / alpha, rgb[1] / alpha, rgb[2] / alpha])
            } else {
                *px
            }
        })
        .collect();
    Ok(Raster::from_vec_unchecked(width, height, data))
}

/// Gather blur with a per-pixel Gaussian of sigma `|coc| / 4`, truncated at
/// 3 sigma and renormalised over in-image taps.
pub fn gaussian_reblur_baseline(image: &RgbImage, coc: &ScalarMap) -> Result<RgbImage> {
    image.same_dims(coc)?;
    let (width, height) = image.dims();
    let pixels = image.data();
    let data = (0..width * height)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % width, i / width);
            let sigma = coc.data()[i].abs() as f64 / 4.0;
            let reach = 3.0 * sigma;
            if reach < 1.0 {
                return pixels[i];
            }
            let r = reach.floor() as i64;
            let inv = 1.0 / (2.0 * sigma * sigma);
            let (mut acc, mut norm) = ([0.0f64; 3], 0.0f64);
            for dy in -r..=r {
                let ty = y as i64 + dy;
                if ty < 0 || ty >= height as i64 {
                    continue;
                }
                for dx in -r..=r {
                    let tx = x as i64 + dx;
                    let d2 = (dx * dx + dy * dy) as f64;
                    if tx < 0 || tx >= width as i64 || d2 > reach * reach {
                        continue;
                    }
                    let wgt = (-d2 * inv).exp();
                    let p = pixels[ty as usize * width + tx as usize];
                    for k in 0..3 {
                        acc[k] += wgt * p[k] as f64;
                    }
                    norm += wgt;
                }
            }
            to_output([acc[0] / norm, acc[1] / norm, acc[2] / norm])
        })
        .collect();
    Ok(Raster::from_vec_unchecked(width, height, data))
}

/// Comparison path: naive composite followed by the Gaussian gather using
/// the object CoC magnitude (zero outside the object).
pub fn gaussian_composite(job: &CompositeJob<'_>) -> Result<RgbImage> {
    let naive = naive_composite(job.background, job.object)?;
    gaussian_reblur_baseline(&naive, job.object_coc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn total(acc: &ScatterAccumulator) -> f64 {
        acc.total_weight()
    }

    #[test]
    fn zero_coc_splat_is_a_single_deposit() {
        let mut acc = ScatterAccumulator::new(8, 8);
        disc_splat(Pixel::center_of(3, 4), [1.0, 0.5, 0.25], 1.0, 0.0, &mut acc);
        assert_eq!(acc.get(3, 4), Some(([1.0, 0.5, 0.25], 1.0)));
        assert_eq!(total(&acc), 1.0);
    }

    #[test]
    fn splat_mass_is_normalised() {
        let mut acc = ScatterAccumulator::new(32, 32);
        disc_splat(Pixel::center_of(16, 16), [1.0; 3], 1.0, 4.0, &mut acc);
        assert_abs_diff_eq!(total(&acc), 1.0, epsilon = 1e-6);

        // corner: clipped taps are renormalised over the in-image ones
        let mut acc = ScatterAccumulator::new(32, 32);
        disc_splat(Pixel::center_of(0, 0), [1.0; 3], 1.0, 9.0, &mut acc);
        assert_abs_diff_eq!(total(&acc), 1.0, epsilon = 1e-6);
        let in_image = (0..32)
            .flat_map(|y| (0..32).map(move |x| (x, y)))
            .filter(|&(x, y)| disc_weight(((x * x + y * y) as f64).sqrt(), 4.5) > 0.0)
            .count();
        let touched = (0..32)
            .flat_map(|y| (0..32).map(move |x| (x, y)))
            .filter(|&(x, y)| acc.get(x, y).unwrap().1 > 0.0)
            .count();
        assert_eq!(in_image, touched);
    }

    #[test]
    fn disc_weight_edge() {
        assert_eq!(disc_weight(0.0, 3.0), 1.0);
        assert_eq!(disc_weight(3.0, 3.0), 0.5);
        assert_eq!(disc_weight(3.5, 3.0), 0.0);
        assert_eq!(disc_weight(2.5, 3.0), 1.0);
    }

    #[test]
    fn clamp_is_enforced() {
        let img = RgbImage::filled(4, 4, [0.5; 3]).unwrap();
        let coc = ScalarMap::filled(4, 4, 70.0).unwrap();
        assert!(matches!(render_full_reblur(&img, &coc, 64.0), Err(Error::CocExceedsClamp { .. })));
        let obj = RgbaImage::filled(4, 4, [0.1, 0.2, 0.3, 1.0]).unwrap();
        assert!(matches!(CompositeJob::new(&img, &obj, &coc, 64.0), Err(Error::CocExceedsClamp { .. })));
        let small = RgbImage::filled(3, 4, [0.5; 3]).unwrap();
        assert!(matches!(
            CompositeJob::new(&small, &obj, &coc, 64.0),
            Err(Error::DimensionMismatch(..))
        ));
    }

    #[test]
    fn coc_must_vanish_without_coverage() {
        let img = RgbImage::filled(4, 4, [0.5; 3]).unwrap();
        let obj = RgbaImage::filled(4, 4, [0.1, 0.2, 0.3, 0.0]).unwrap();
        let coc = ScalarMap::filled(4, 4, 2.0).unwrap();
        assert!(CompositeJob::new(&img, &obj, &coc, 64.0).is_err());
    }

    #[test]
    fn zero_coc_reproduces_naive_composite() {
        let bg = RgbImage::from_fn(16, 12, |x, y| [x as f32 / 16.0, y as f32 / 12.0, 0.3]).unwrap();
        let obj = RgbaImage::from_fn(16, 12, |x, y| {
            let a = if (4..10).contains(&x) && (3..8).contains(&y) { 1.0 } else if x == 10 { 0.37 } else { 0.0 };
            [0.9, 0.1, (x * y) as f32 / 200.0, a]
        })
        .unwrap();
        let coc = ScalarMap::filled(16, 12, 0.0).unwrap();
        let job = CompositeJob::new(&bg, &obj, &coc, DEFAULT_MAX_COC).unwrap();
        assert_eq!(render_composite(&job), naive_composite(&bg, &obj).unwrap());
    }

    #[test]
    fn zero_map_full_reblur_is_identity() {
        let img = RgbImage::from_fn(20, 10, |x, y| [(x * 7 % 11) as f32 / 11.0, y as f32 / 10.0, 0.123]).unwrap();
        let coc = ScalarMap::filled(20, 10, 0.0).unwrap();
        assert_eq!(render_full_reblur(&img, &coc, DEFAULT_MAX_COC).unwrap(), img);
    }

    #[test]
    fn spot_energy_and_radius() {
        let (w, h) = (64, 64);
        let bg = RgbImage::filled(w, h, [0.0; 3]).unwrap();
        let mut obj = RgbaImage::filled(w, h, [0.0; 4]).unwrap();
        obj.set(32, 32, [1.0, 1.0, 1.0, 1.0]).unwrap();
        for d in [5.0f32, 12.0, 21.0] {
            let mut coc = ScalarMap::filled(w, h, 0.0).unwrap();
            coc.set(32, 32, d).unwrap();
            let out = render_composite(&CompositeJob::new(&bg, &obj, &coc, DEFAULT_MAX_COC).unwrap());
            let energy: f64 = out.data().iter().map(|p| p[0] as f64).sum();
            assert!((energy - 1.0).abs() < 1e-3, "energy {energy}");
            // half-max crossing along the centre row
            let peak = out.at(32, 32)[0];
            let row: Vec<f32> = (32..w).map(|x| out.at(x, 32)[0]).collect();
            let k = row.iter().position(|&v| v < 0.5 * peak).unwrap();
            let (a, b) = (row[k - 1], row[k]);
            let crossing = (k - 1) as f32 + (a - 0.5 * peak) / (a - b);
            assert!((crossing - d / 2.0).abs() <= 0.5, "d={d} crossing={crossing}");
        }
    }

    #[test]
    fn gaussian_zero_is_identity_and_matches_analytic() {
        let img = RgbImage::from_fn(9, 7, |x, y| [x as f32 / 9.0, y as f32 / 7.0, 0.5]).unwrap();
        let zero = ScalarMap::filled(9, 7, 0.0).unwrap();
        assert_eq!(gaussian_reblur_baseline(&img, &zero).unwrap(), img);

        let (w, h) = (31, 31);
        let mut imp = RgbImage::filled(w, h, [0.0; 3]).unwrap();
        imp.set(15, 15, [1.0; 3]).unwrap();
        let coc = ScalarMap::filled(w, h, 8.0).unwrap();
        let out = gaussian_reblur_baseline(&imp, &coc).unwrap();
        // analytic normalised samples of a sigma = 2 Gaussian truncated at r <= 6
        let g = |d2: f64| (-d2 / 8.0).exp();
        let mut norm = 0.0;
        for dy in -6i64..=6 {
            for dx in -6i64..=6 {
                let d2 = (dx * dx + dy * dy) as f64;
                if d2 <= 36.0 {
                    norm += g(d2);
                }
            }
        }
        for y in 0..h {
            for x in 0..w {
                let d2 = ((x as f64 - 15.0).powi(2) + (y as f64 - 15.0).powi(2)) as f64;
                let expect = if d2 <= 36.0 { g(d2) / norm } else { 0.0 };
                assert!((out.at(x, y)[0] as f64 - expect).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn sharp_front_is_not_overdrawn_by_blurred_back() {
        // left half in focus (focal), right half far behind focus (back layer)
        let (w, h) = (64, 32);
        let img = RgbImage::from_fn(w, h, |x, _| if x < 32 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] }).unwrap();
        let coc = ScalarMap::from_fn(w, h, |x, _| if x < 32 { 0.0 } else { -12.0 }).unwrap();
        let out = render_full_reblur(&img, &coc, DEFAULT_MAX_COC).unwrap();
        for y in 0..h {
            for x in 0..32 {
                assert_eq!(out.at(x, y), [1.0, 0.0, 0.0]);
            }
        }
        // the reverse: blurred front spills over the sharp region
        let coc = ScalarMap::from_fn(w, h, |x, _| if x < 32 { 0.0 } else { 12.0 }).unwrap();
        let out = render_full_reblur(&img, &coc, DEFAULT_MAX_COC).unwrap();
        assert!(out.at(30, 16)[2] > 0.05);
    }

    #[test]
    fn output_stays_in_gamut() {
        let img = RgbImage::from_fn(40, 40, |x, y| [((x * 13 + y * 7) % 17) as f32 / 16.0, 1.0, 0.0]).unwrap();
        let coc = ScalarMap::from_fn(40, 40, |x, y| ((x as f32 - 20.0) * 0.7 + y as f32 * 0.1).clamp(-15.0, 15.0)).unwrap();
        let out = render_full_reblur(&img, &coc, DEFAULT_MAX_COC).unwrap();
        for p in out.data() {
            assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn bitwise_identical_across_thread_counts() {
        let img = RgbImage::from_fn(120, 90, |x, y| [((x * 31 + y * 17) % 97) as f32 / 96.0, (y % 7) as f32 / 6.0, 0.4]).unwrap();
        let coc = ScalarMap::from_fn(120, 90, |x, y| ((x as f32 - 60.0) * 0.3 - (y as f32 - 45.0) * 0.2).clamp(-20.0, 20.0)).unwrap();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| render_full_reblur(&img, &coc, DEFAULT_MAX_COC).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one, run(8));
    }

    #[test]
    fn output_is_local() {
        // perturbing a pixel only changes outputs within max_coc / 2 + 1
        let (w, h) = (80, 80);
        let max_coc = 10.0;
        let img = RgbImage::from_fn(w, h, |x, y| [((x + 3 * y) % 11) as f32 / 10.0, 0.5, 0.25]).unwrap();
        let coc = ScalarMap::from_fn(w, h, |x, _| if x % 2 == 0 { 9.5 } else { -7.0 }).unwrap();
        let base = render_full_reblur(&img, &coc, max_coc).unwrap();
        let mut img2 = img.clone();
        img2.set(40, 40, [0.0, 0.0, 1.0]).unwrap();
        let out = render_full_reblur(&img2, &coc, max_coc).unwrap();
        let reach = max_coc as f64 / 2.0 + 1.0;
        for y in 0..h {
            for x in 0..w {
                let d = ((x as f64 - 40.0).powi(2) + (y as f64 - 40.0).powi(2)).sqrt();
                if d > reach {
                    assert_eq!(out.at(x, y), base.at(x, y), "({x},{y})");
                }
            }
        }
    }
}
