//! Brute-force thin-lens oracle.
//!
//! Renders small analytic scenes (a checkered ground plane plus spheres,
//! axis-aligned boxes and quads) with a pinhole camera and with a
//! distributed-ray thin lens, and derives the depth, disparity and CoC maps
//! that go with them. All geometry runs in `f64`.
//!
//! The thin lens sits at the camera centre, perpendicular to the optical
//! axis, and focuses the plane at camera depth `z1`. Each sample picks a lens
//! point on the aperture disc and traces towards the point where the pixel's
//! pinhole ray meets the focal plane, so a point at depth `z` images to a
//! disc of `f_px * A * |1/z1 - 1/z|` pixels.
//!
//! Lighting is an ambient term plus one directional light without shadows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, Pixel, Point3, Vec3};
use crate::error::{Error, Result};
use crate::lens::{coc_exact, LensParams};
use crate::raster::{Mask, Raster, Rgb, RgbImage, RgbaImage, ScalarMap};

const EPS: f64 = 1e-9;

type V = Vec3<f64>;

fn v3(a: [f64; 3]) -> V {
    Vec3::new(a[0], a[1], a[2])
}

/// Two-color checker in the surface's own 2D coordinates (metres).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checker {
    pub albedo: [f64; 3],
    pub size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub albedo: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checker: Option<Checker>,
    /// Emit the albedo directly, ignoring the lights.
    #[serde(default)]
    pub unlit: bool,
}

impl Material {
    fn albedo_at(&self, u: f64, v: f64) -> [f64; 3] {
        match self.checker {
            Some(c) if ((u / c.size).floor() + (v / c.size).floor()).rem_euclid(2.0) == 1.0 => c.albedo,
            _ => self.albedo,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    /// Axis-aligned box.
    Box { min: [f64; 3], max: [f64; 3] },
    /// Parallelogram `center + s*u + t*v` for `s, t` in `[-1, 1]`.
    Quad { center: [f64; 3], u: [f64; 3], v: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub name: String,
    pub shape: Shape,
    pub material: Material,
}

/// Horizontal plane `y = height`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ground {
    pub height: f64,
    pub material: Material,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Light {
    pub ambient: f64,
    pub intensity: f64,
    /// Direction the light travels in.
    pub direction: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub width: usize,
    pub height: usize,
    /// Pinhole supersampling per axis (1 = one ray through each centre).
    #[serde(default = "one")]
    pub supersample: usize,
    #[serde(default = "default_spp")]
    pub spp: usize,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}
fn default_spp() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub camera: CameraModel<f64>,
    pub lens: LensParams<f64>,
    pub ground: Ground,
    #[serde(default)]
    pub primitives: Vec<Primitive>,
    pub light: Light,
    pub render: RenderSettings,
}

impl Scene {
    pub fn from_json(s: &str) -> Result<Self> {
        let scene: Scene =
            serde_json::from_str(s).map_err(|e| Error::InvalidScene(format!("scene JSON: {e}")))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene serialises");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.render;
        if r.width == 0 || r.height == 0 || r.supersample == 0 {
            return Err(Error::InvalidScene("image size and supersampling must be positive".into()));
        }
        let h = self.ground.height;
        if !(self.camera.center().y() > h) {
            return Err(Error::BelowGround { y: self.camera.center().y(), ground: h });
        }
        for p in &self.primitives {
            let (lo, hi) = p.shape.bounds();
            if !(lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidScene(format!("primitive '{}' has non-finite geometry", p.name)));
            }
            if lo.y < h - EPS {
                return Err(Error::InvalidScene(format!("primitive '{}' reaches below the ground", p.name)));
            }
            if let Shape::Sphere { radius, .. } = p.shape {
                if !(radius > 0.0) {
                    return Err(Error::InvalidScene(format!("sphere '{}' needs a positive radius", p.name)));
                }
            }
            for corner in p.shape.corners() {
                if !(self.camera.world_to_camera(Point3::from_vec(corner)).z() > 0.0) {
                    return Err(Error::InvalidScene(format!("primitive '{}' is not in front of the camera", p.name)));
                }
            }
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.render.width
    }

    pub fn height(&self) -> usize {
        self.render.height
    }

    /// Index of the primitive called `name`.
    pub fn primitive_id(&self, name: &str) -> Option<usize> {
        self.primitives.iter().position(|p| p.name == name)
    }

    /// The scene with primitive `id` removed.
    pub fn without(&self, id: usize) -> Result<Scene> {
        if id >= self.primitives.len() {
            return Err(Error::UnknownObject(id));
        }
        let mut s = self.clone();
        s.primitives.remove(id);
        Ok(s)
    }

    pub fn with_lens(&self, lens: LensParams<f64>) -> Scene {
        Scene { lens, ..self.clone() }
    }

    /// Pixels per metre of sensor for converting sensor CoC to pixels:
    /// `f_px / s` with `s` the lens-to-sensor distance.
    pub fn sensor_scale(&self) -> f64 {
        self.camera.focal_px() / self.lens.image_distance()
    }
}

impl Shape {
    fn bounds(&self) -> (V, V) {
        match *self {
            Shape::Sphere { center, radius } => {
                let c = v3(center);
                let r = Vec3::new(radius, radius, radius);
                (c - r, c + r)
            }
            Shape::Box { min, max } => (v3(min), v3(max)),
            Shape::Quad { .. } => {
                let cs = self.corners();
                let lo = cs.iter().fold(cs[0], |a, c| Vec3::new(a.x.min(c.x), a.y.min(c.y), a.z.min(c.z)));
                let hi = cs.iter().fold(cs[0], |a, c| Vec3::new(a.x.max(c.x), a.y.max(c.y), a.z.max(c.z)));
                (lo, hi)
            }
        }
    }

    fn corners(&self) -> Vec<V> {
        match *self {
            Shape::Quad { center, u, v } => {
                let (c, u, v) = (v3(center), v3(u), v3(v));
                vec![c - u - v, c + u - v, c + u + v, c - u + v]
            }
            _ => {
                let (lo, hi) = self.bounds();
                (0..8)
                    .map(|k| {
                        Vec3::new(
                            if k & 1 == 0 { lo.x } else { hi.x },
                            if k & 2 == 0 { lo.y } else { hi.y },
                            if k & 4 == 0 { lo.z } else { hi.z },
                        )
                    })
                    .collect()
            }
        }
    }

    /// Nearest hit beyond `t_min`: `(t, normal, surface u, surface v)`.
    fn intersect(&self, o: V, d: V, t_min: f64) -> Option<(f64, V, f64, f64)> {
        match *self {
            Shape::Sphere { center, radius } => {
                let c = v3(center);
                let oc = o - c;
                let a = d.dot(d);
                let b = oc.dot(d);
                let cc = oc.dot(oc) - radius * radius;
                let disc = b * b - a * cc;
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                let t = [(-b - sq) / a, (-b + sq) / a].into_iter().find(|&t| t > t_min)?;
                let p = o + d * t;
                let n = (p - c).scale(1.0 / radius);
                // solid checker on the unit sphere: longitude / latitude arcs
                let (su, sv) = (n.z.atan2(n.x) * radius, n.y.asin() * radius);
                Some((t, n, su, sv))
            }
            Shape::Box { min, max } => {
                let (lo, hi) = (min, max);
                let (o_, d_) = ([o.x, o.y, o.z], [d.x, d.y, d.z]);
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                let (mut near_axis, mut far_axis) = (0, 0);
                for k in 0..3 {
                    if d_[k] == 0.0 {
                        if o_[k] < lo[k] || o_[k] > hi[k] {
                            return None;
                        }
                        continue;
                    }
                    let (mut a, mut b) = ((lo[k] - o_[k]) / d_[k], (hi[k] - o_[k]) / d_[k]);
                    if a > b {
                        std::mem::swap(&mut a, &mut b);
                    }
                    if a > t0 {
                        t0 = a;
                        near_axis = k;
                    }
                    if b < t1 {
                        t1 = b;
                        far_axis = k;
                    }
                }
                if t0 > t1 {
                    return None;
                }
                let (t, axis) = if t0 > t_min {
                    (t0, near_axis)
                } else if t1 > t_min {
                    (t1, far_axis)
                } else {
                    return None;
                };
                let mut n = [0.0; 3];
                n[axis] = -d_[axis].signum();
                let p = o + d * t;
                let p_ = [p.x, p.y, p.z];
                let (su, sv) = (p_[(axis + 1) % 3], p_[(axis + 2) % 3]);
                Some((t, v3(n), su, sv))
            }
            Shape::Quad { center, u, v } => {
                let (c, u, v) = (v3(center), v3(u), v3(v));
                let n = u.cross(v);
                let denom = n.dot(d);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let t = n.dot(c - o) / denom;
                if !(t > t_min) {
                    return None;
                }
                let q = o + d * t - c;
                let (s, r) = (q.dot(u) / u.dot(u), q.dot(v) / v.dot(v));
                if s.abs() > 1.0 || r.abs() > 1.0 {
                    return None;
                }
                Some((t, n.normalized(), s * u.norm(), r * v.norm()))
            }
        }
    }
}

/// Which surface a ray hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Surface {
    Ground,
    Primitive(usize),
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    t: f64,
    surface: Surface,
    color: [f64; 3],
}

fn trace(scene: &Scene, o: V, d: V) -> Option<Hit> {
    let mut best: Option<(f64, Surface, V, &Material, f64, f64)> = None;
    let h = scene.ground.height;
    if d.y < 0.0 {
        let t = (h - o.y) / d.y;
        if t > EPS {
            let p = o + d * t;
            best = Some((t, Surface::Ground, Vec3::new(0.0, 1.0, 0.0), &scene.ground.material, p.x, p.z));
        }
    }
    for (i, prim) in scene.primitives.iter().enumerate() {
        if let Some((t, n, su, sv)) = prim.shape.intersect(o, d, EPS) {
            if best.as_ref().is_none_or(|b| t < b.0) {
                best = Some((t, Surface::Primitive(i), n, &prim.material, su, sv));
            }
        }
    }
    let (t, surface, mut n, material, su, sv) = best?;
    let albedo = material.albedo_at(su, sv);
    let color = if material.unlit {
        albedo
    } else {
        if n.dot(d) > 0.0 {
            n = -n;
        }
        let l = scene.light;
        let to_light = -v3(l.direction).normalized();
        let shade = (l.ambient + l.intensity * n.dot(to_light).max(0.0)).min(1.0);
        [albedo[0] * shade, albedo[1] * shade, albedo[2] * shade]
    };
    Some(Hit { t, surface, color })
}

/// Pinhole ray through a continuous pixel position: world origin and a world
/// direction whose camera-frame z component is one, so `t` is camera depth.
fn pinhole_ray(scene: &Scene, px: Pixel<f64>) -> (V, V) {
    let cam = &scene.camera;
    (cam.center().coords, cam.direction_to_world(cam.ray_direction(px)))
}

fn subsample_offset(k: usize, n: usize) -> (f64, f64) {
    (((k % n) as f64 + 0.5) / n as f64, ((k / n) as f64 + 0.5) / n as f64)
}

fn to_rgb(c: [f64; 3]) -> Rgb {
    [c[0] as f32, c[1] as f32, c[2] as f32]
}

/// Object-only layers from the pinhole pass: color with coverage, the
/// visibility mask and the mean object depth (zero off the mask).
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectLayers {
    pub color: RgbaImage,
    pub mask: Mask,
    pub depth: ScalarMap,
}

struct PinholePass {
    color: RgbImage,
    depth: ScalarMap,
    object: Option<ObjectLayers>,
}

fn pinhole_pass(scene: &Scene, object: Option<usize>) -> Result<PinholePass> {
    let (w, h) = (scene.width(), scene.height());
    let ss = scene.render.supersample;
    let n_sub = ss * ss;
    let rows: Vec<Vec<(Rgb, f32, [f32; 4], f32)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let (o, d) = pinhole_ray(scene, Pixel::center_of(x, y));
                    let centre = trace(scene, o, d).ok_or(Error::SkyPixel(x, y))?;
                    let mut sum = [0.0f64; 3];
                    let (mut obj_sum, mut obj_depth, mut obj_hits) = ([0.0f64; 3], 0.0f64, 0usize);
                    for k in 0..n_sub {
                        let (dx, dy) = subsample_offset(k, ss);
                        let (o, d) = pinhole_ray(scene, Pixel::new(x as f64 + dx, y as f64 + dy));
                        let hit = trace(scene, o, d).ok_or(Error::SkyPixel(x, y))?;
                        for c in 0..3 {
                            sum[c] += hit.color[c];
                        }
                        if object.is_some_and(|id| hit.surface == Surface::Primitive(id)) {
                            for c in 0..3 {
                                obj_sum[c] += hit.color[c];
                            }
                            obj_depth += hit.t;
                            obj_hits += 1;
                        }
                    }
                    let inv = 1.0 / n_sub as f64;
                    let color = to_rgb([sum[0] * inv, sum[1] * inv, sum[2] * inv]);
                    let (layer, depth) = if obj_hits > 0 {
                        let k = 1.0 / obj_hits as f64;
                        let cov = obj_hits as f64 * inv;
                        (
                            [(obj_sum[0] * k) as f32, (obj_sum[1] * k) as f32, (obj_sum[2] * k) as f32, cov as f32],
                            (obj_depth * k) as f32,
                        )
                    } else {
                        ([0.0; 4], 0.0)
                    };
                    Ok((color, centre.t as f32, layer, depth))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let flat: Vec<_> = rows.into_iter().flatten().collect();
    let color = Raster::from_vec(w, h, flat.iter().map(|p| p.0).collect())?;
    let depth = Raster::from_vec(w, h, flat.iter().map(|p| p.1).collect())?;
    let object = object.map(|_| -> Result<ObjectLayers> {
        Ok(ObjectLayers {
            color: Raster::from_vec(w, h, flat.iter().map(|p| p.2).collect())?,
            mask: Raster::from_vec(w, h, flat.iter().map(|p| p.2[3] > 0.0).collect())?,
            depth: Raster::from_vec(w, h, flat.iter().map(|p| p.3).collect())?,
        })
    });
    Ok(PinholePass { color, depth, object: object.transpose()? })
}

/// All-in-focus render and camera-depth map (depth from the ray through
/// each pixel centre).
pub fn render_pinhole(scene: &Scene) -> Result<(RgbImage, ScalarMap)> {
    let pass = pinhole_pass(scene, None)?;
    Ok((pass.color, pass.depth))
}

/// Shirley's concentric map from the unit square to the unit disc.
fn concentric_disc(u: f64, v: f64) -> (f64, f64) {
    let (a, b) = (2.0 * u - 1.0, 2.0 * v - 1.0);
    if a == 0.0 && b == 0.0 {
        return (0.0, 0.0);
    }
    let (r, phi) = if a.abs() > b.abs() {
        (a, std::f64::consts::FRAC_PI_4 * (b / a))
    } else {
        (b, std::f64::consts::FRAC_PI_2 - std::f64::consts::FRAC_PI_4 * (a / b))
    };
    (r * phi.cos(), r * phi.sin())
}

/// Distributed-ray thin-lens render. Lens samples are stratified over an
/// `n x n` grid (`n = ceil(sqrt(spp))`) with jitter drawn from a ChaCha8
/// stream keyed by `seed` and the pixel index; subpixel positions cycle
/// through the pinhole supersample pattern.
pub fn render_thin_lens(scene: &Scene, spp: usize, seed: u64) -> Result<RgbImage> {
    if spp < 16 {
        return Err(Error::InvalidParameter(format!("thin-lens render needs >= 16 samples per pixel, got {spp}")));
    }
    let (w, h) = (scene.width(), scene.height());
    let ss = scene.render.supersample;
    let n = (spp as f64).sqrt().ceil() as usize;
    let half_aperture = 0.5 * scene.lens.aperture();
    let z1 = scene.lens.focus_distance();
    let cam = &scene.camera;
    let data = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut sum = [0.0f64; 3];
            for s in 0..spp {
                let (jx, jy): (f64, f64) = (rng.random(), rng.random());
                let (lu, lv) = concentric_disc(((s % n) as f64 + jx) / n as f64, ((s / n) as f64 + jy) / n as f64);
                let (dx, dy) = subsample_offset(s % (ss * ss), ss);
                let focal = cam.ray_direction(Pixel::new(x as f64 + dx, y as f64 + dy)) * z1;
                let lens_pt = Vec3::new(lu * half_aperture, lv * half_aperture, 0.0);
                let o = cam.camera_to_world(Point3::from_vec(lens_pt)).coords;
                let d = cam.direction_to_world(focal - lens_pt);
                let hit = trace(scene, o, d).ok_or(Error::SkyPixel(x, y))?;
                for c in 0..3 {
                    sum[c] += hit.color[c];
                }
            }
            let inv = 1.0 / spp as f64;
            Ok(to_rgb([sum[0] * inv, sum[1] * inv, sum[2] * inv]))
        })
        .collect::<Result<Vec<_>>>()?;
    Raster::from_vec(w, h, data)
}

fn coc_from_depth(scene: &Scene, depth: &ScalarMap, signed: bool) -> Result<ScalarMap> {
    let scale = scene.sensor_scale();
    let z1 = scene.lens.focus_distance();
    let w = depth.width();
    let data = depth
        .data()
        .par_iter()
        .enumerate()
        .map(|(i, &z)| {
            let z = z as f64;
            let c = coc_exact(&scene.lens, z).map_err(|_| Error::NonPositiveDepth { depth: z, pixel: Some((i % w, i / w)) })?
                * scale;
            Ok(if signed && z > z1 { -c as f32 } else { c as f32 })
        })
        .collect::<Result<Vec<_>>>()?;
    Raster::from_vec(depth.width(), depth.height(), data)
}

/// Exact thin-lens CoC diameter in pixels at every pixel's depth.
pub fn analytic_coc_map(scene: &Scene) -> Result<ScalarMap> {
    let (_, depth) = render_pinhole(scene)?;
    coc_from_depth(scene, &depth, false)
}

/// As [`analytic_coc_map`] but negative beyond the focus distance.
pub fn analytic_signed_coc_map(scene: &Scene) -> Result<ScalarMap> {
    let (_, depth) = render_pinhole(scene)?;
    coc_from_depth(scene, &depth, true)
}

/// Paired plates and maps for one scene. For a ground-truth bundle the
/// plates and maps describe the scene without the object, and `object` and
/// `composite` hold the object layers and the full-scene defocused render.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderBundle {
    pub sharp: RgbImage,
    pub defocused: RgbImage,
    pub depth: ScalarMap,
    pub disparity: ScalarMap,
    /// Unsigned CoC in pixels.
    pub coc: ScalarMap,
    pub object: Option<ObjectLayers>,
    pub composite: Option<RgbImage>,
}

fn plate_bundle(scene: &Scene) -> Result<RenderBundle> {
    let (sharp, depth) = render_pinhole(scene)?;
    let defocused = render_thin_lens(scene, scene.render.spp, scene.render.seed)?;
    let disparity = depth.map(|&z| 1.0 / z)?;
    let coc = coc_from_depth(scene, &depth, false)?;
    Ok(RenderBundle { sharp, defocused, depth, disparity, coc, object: None, composite: None })
}

/// Plates and maps of the whole scene.
pub fn render_bundle(scene: &Scene) -> Result<RenderBundle> {
    scene.validate()?;
    plate_bundle(scene)
}

/// Ground-truth bundle for compositing primitive `object`: background-only
/// plates, the object's pinhole layers and the full-scene thin-lens render.
pub fn render_composite_gt(scene: &Scene, object: usize) -> Result<RenderBundle> {
    scene.validate()?;
    let background = scene.without(object)?;
    let mut bundle = plate_bundle(&background)?;
    bundle.object = pinhole_pass(scene, Some(object))?.object;
    bundle.composite = Some(render_thin_lens(scene, scene.render.spp, scene.render.seed)?);
    Ok(bundle)
}

/// Every combination of focus distance and aperture, focus-major. Names are
/// `f{i}_a{j}` with zero-based indices into the two lists.
pub fn sweep_generator(
    template: &Scene,
    focus_distances: &[f64],
    apertures: &[f64],
    object: Option<usize>,
) -> Result<Vec<(String, RenderBundle)>> {
    for values in [focus_distances, apertures] {
        if values.is_empty() || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("sweep values must be positive and finite".into()));
        }
        for (i, a) in values.iter().enumerate() {
            if values[..i].contains(a) {
                return Err(Error::InvalidParameter(format!("duplicate sweep value {a}")));
            }
        }
    }
    let f = template.lens.focal_length();
    let mut out = Vec::with_capacity(focus_distances.len() * apertures.len());
    for (i, &z1) in focus_distances.iter().enumerate() {
        for (j, &a) in apertures.iter().enumerate() {
            let scene = template.with_lens(LensParams::new(a, f, z1)?);
            let bundle = match object {
                Some(id) => render_composite_gt(&scene, id)?,
                None => render_bundle(&scene)?,
            };
            out.push((format!("f{i}_a{j}"), bundle));
        }
    }
    Ok(out)
}

/// Diameter in pixels of a defocused spot on a black background.
///
/// A small source of energy `E` blurred by a uniform disc of diameter `D`
/// has a flat top of height `4E / (pi D^2)` as long as the disc is wider
/// than the source, so `D = sqrt(4E / (pi P))` with `P` the plateau height,
/// independent of the source footprint. The plateau is averaged over the
/// pixels inside half the first-pass radius around the centroid.
pub fn measure_spot_diameter(image: &RgbImage) -> Result<f64> {
    let lum: Vec<f64> = image.data().iter().map(|p| (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0).collect();
    let energy: f64 = lum.iter().sum();
    if !(energy > 0.0) {
        return Err(Error::EmptyMask);
    }
    let w = image.width();
    let (mut cx, mut cy) = (0.0, 0.0);
    for (i, &v) in lum.iter().enumerate() {
        cx += v * ((i % w) as f64 + 0.5);
        cy += v * ((i / w) as f64 + 0.5);
    }
    let (cx, cy) = (cx / energy, cy / energy);
    let peak = lum.iter().cloned().fold(0.0, f64::max);
    let mut diameter = (4.0 * energy / (std::f64::consts::PI * peak)).sqrt();
    for _ in 0..3 {
        let r = 0.25 * diameter;
        let (mut sum, mut count) = (0.0, 0usize);
        for (i, &v) in lum.iter().enumerate() {
            let dx = (i % w) as f64 + 0.5 - cx;
            let dy = (i / w) as f64 + 0.5 - cy;
            if dx * dx + dy * dy <= r * r {
                sum += v;
                count += 1;
            }
        }
        if count == 0 {
            break;
        }
        diameter = (4.0 * energy / (std::f64::consts::PI * (sum / count as f64))).sqrt();
    }
    Ok(diameter)
}

/// Scene with a small unlit white square at camera depth `z` on the optical
/// axis, in front of a black backdrop, seen by an axis-aligned camera.
pub fn spot_scene(lens: LensParams<f64>, focal_px: f64, size: usize, z: f64, footprint_px: f64) -> Result<Scene> {
    let half = 0.5 * footprint_px * z / focal_px;
    let c = 0.5 * size as f64;
    let camera = CameraModel::axis_aligned(focal_px, Pixel::new(c, c), Vec3::new(0.0, 1.0, 0.0))?;
    let black = Material { albedo: [0.0; 3], checker: None, unlit: true };
    let backdrop_z = 4.0 * z.max(lens.focus_distance());
    let extent = backdrop_z * size as f64 / focal_px;
    Ok(Scene {
        camera,
        lens,
        ground: Ground { height: -extent, material: black },
        primitives: vec![
            Primitive {
                name: "spot".into(),
                shape: Shape::Quad { center: [0.0, 1.0, z], u: [half, 0.0, 0.0], v: [0.0, half, 0.0] },
                material: Material { albedo: [1.0; 3], checker: None, unlit: true },
            },
            Primitive {
                name: "backdrop".into(),
                shape: Shape::Quad {
                    center: [0.0, 1.0, backdrop_z],
                    u: [extent, 0.0, 0.0],
                    v: [0.0, extent, 0.0],
                },
                material: black,
            },
        ],
        light: Light { ambient: 1.0, intensity: 0.0, direction: [0.0, -1.0, 0.0] },
        render: RenderSettings { width: size, height: size, supersample: 1, spp: 256, seed: 0 },
    })
}
