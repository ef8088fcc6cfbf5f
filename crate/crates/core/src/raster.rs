//! Row-major rasters shared by every pipeline stage.
//!
//! A raster never holds NaN or infinity: every constructor validates its
//! input, and crate-internal mutation paths preserve the invariant.

use crate::error::{Error, Result};

/// Linear RGB color.
pub type Rgb = [f32; 3];
/// Linear RGB color with coverage in the last channel (straight, not
/// premultiplied).
pub type Rgba = [f32; 4];

/// Per-pixel value type storable in a [`Raster`].
pub trait Texel: Copy + Send + Sync + 'static {
    const CHANNELS: usize;
    fn is_finite(&self) -> bool;
}

impl Texel for f32 {
    const CHANNELS: usize = 1;
    #[inline]
    fn is_finite(&self) -> bool {
        f32::is_finite(*self)
    }
}

impl Texel for bool {
    const CHANNELS: usize = 1;
    #[inline]
    fn is_finite(&self) -> bool {
        true
    }
}

impl<const N: usize> Texel for [f32; N] {
    const CHANNELS: usize = N;
    #[inline]
    fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }
}

/// Texels whose channels can be read as floats (used by the metrics).
pub trait ChannelTexel: Texel {
    fn channel(&self, c: usize) -> f32;

    /// Rec.601 luma for color texels, the value itself for scalars.
    fn luma(&self) -> f32;
}

impl ChannelTexel for f32 {
    #[inline]
    fn channel(&self, _c: usize) -> f32 {
        *self
    }
    #[inline]
    fn luma(&self) -> f32 {
        *self
    }
}

impl ChannelTexel for Rgb {
    #[inline]
    fn channel(&self, c: usize) -> f32 {
        self[c]
    }
    #[inline]
    fn luma(&self) -> f32 {
        0.299 * self[0] + 0.587 * self[1] + 0.114 * self[2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Raster<P> {
    width: usize,
    height: usize,
    data: Vec<P>,
}

/// Single-channel float map (depth, disparity, CoC).
pub type ScalarMap = Raster<f32>;
/// Binary mask.
pub type Mask = Raster<bool>;
pub type RgbImage = Raster<Rgb>;
pub type RgbaImage = Raster<Rgba>;

impl<P: Texel> Raster<P> {
    pub fn from_vec(width: usize, height: usize, data: Vec<P>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyRaster(width, height));
        }
        let expected = width * height;
        if data.len() != expected {
            return Err(Error::BufferSize { expected, actual: data.len() });
        }
        if let Some(i) = data.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFiniteInput { pixel: Some((i % width, i / width)) });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: P) -> Result<Self> {
        Self::from_vec(width, height, vec![value; width.saturating_mul(height)])
    }

    /// Builds a raster by evaluating `f(x, y)` for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> P) -> Result<Self> {
        let mut data = Vec::with_capacity(width.saturating_mul(height));
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_vec(width, height, data)
    }

    /// Wraps a buffer the crate produced itself; finiteness is checked in
    /// debug builds only.
    pub(crate) fn from_vec_unchecked(width: usize, height: usize, data: Vec<P>) -> Self {
        debug_assert!(width > 0 && height > 0);
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|p| p.is_finite()));
        Self { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[P] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<P> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<&P> {
        (x < self.width && y < self.height).then(|| &self.data[y * self.width + x])
    }

    /// Panicking accessor for in-bounds coordinates.
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> P {
        assert!(x < self.width && y < self.height, "({x}, {y}) outside {}x{}", self.width, self.height);
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, value: P) -> Result<()> {
        if x >= self.width || y >= self.height {
            return Err(Error::InvalidParameter(format!(
                "({x}, {y}) outside {}x{}",
                self.width, self.height
            )));
        }
        if !value.is_finite() {
            return Err(Error::NonFiniteInput { pixel: Some((x, y)) });
        }
        self.data[y * self.width + x] = value;
        Ok(())
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, P> {
        self.data.chunks_exact(self.width)
    }

    pub fn map<Q: Texel>(&self, f: impl FnMut(&P) -> Q) -> Result<Raster<Q>> {
        Raster::from_vec(self.width, self.height, self.data.iter().map(f).collect())
    }

    pub fn same_dims<Q>(&self, other: &Raster<Q>) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch(self.width, self.height, other.width, other.height));
        }
        Ok(())
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Result<Self> {
        if x0 + width > self.width || y0 + height > self.height {
            return Err(Error::InvalidParameter(format!(
                "crop {width}x{height}+{x0}+{y0} outside {}x{}",
                self.width, self.height
            )));
        }
        Self::from_fn(width, height, |x, y| self.data[(y0 + y) * self.width + x0 + x])
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    pub fn and_not(&self, other: &Mask) -> Result<Mask> {
        self.same_dims(other)?;
        Ok(Raster::from_vec_unchecked(
            self.width,
            self.height,
            self.data.iter().zip(&other.data).map(|(&a, &b)| a && !b).collect(),
        ))
    }

    /// 3x3 binary dilation followed by 3x3 erosion. Out-of-image neighbours
    /// count as "on" for the erosion so the closing never shrinks a mask that
    /// touches the border.
    pub fn closed_3x3(&self) -> Mask {
        let dilated = self.morph(|acc, v| acc || v, false, false);
        dilated.morph(|acc, v| acc && v, true, true)
    }

    fn morph(&self, combine: impl Fn(bool, bool) -> bool, init: bool, outside: bool) -> Mask {
        let (w, h) = (self.width as isize, self.height as isize);
        let mut out = Vec::with_capacity(self.data.len());
        for y in 0..h {
            for x in 0..w {
                let mut acc = init;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let (nx, ny) = (x + dx, y + dy);
                        let v = if nx < 0 || ny < 0 || nx >= w || ny >= h {
                            outside
                        } else {
                            self.data[(ny * w + nx) as usize]
                        };
                        acc = combine(acc, v);
                    }
                }
                out.push(acc);
            }
        }
        Raster::from_vec_unchecked(self.width, self.height, out)
    }
}

impl RgbaImage {
    pub fn coverage(&self) -> ScalarMap {
        Raster::from_vec_unchecked(self.width, self.height, self.data.iter().map(|p| p[3]).collect())
    }
}
