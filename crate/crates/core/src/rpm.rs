//! Illumination-guided detail restoration on a Laplacian pyramid.
//!
//! Each band of the reflectance is resampled along the gradient of the
//! inverted illumination (pulling samples toward darker surroundings) and
//! amplified by `1 + alpha * (1 - I)`, so detail gain concentrates in dark
//! regions. The illumination pyramid is built by repeated 2x2 max pooling
//! so it lines up with the Laplacian levels.

use crate::error::{Error, Result};
use crate::image::{merge_channels, split_channels, Image};

pub const DEFAULT_LEVELS: usize = 3;
pub const DEFAULT_ALPHA: f64 = 0.8;
pub const DEFAULT_RHO: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianPyramid {
    /// Band-pass detail, finest first.
    pub bands: Vec<Image>,
    /// Coarsest Gaussian level.
    pub base: Image,
}

impl LaplacianPyramid {
    pub fn levels(&self) -> usize {
        self.bands.len() + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IllumPyramid {
    pub levels: Vec<Image>,
}

/// Per-pixel sampling displacement in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct OffsetField {
    pub width: usize,
    pub height: usize,
    pub dx: Vec<f32>,
    pub dy: Vec<f32>,
}

impl OffsetField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            dx: vec![0.0; width * height],
            dy: vec![0.0; width * height],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.dx.iter().chain(&self.dy).all(|&v| v == 0.0)
    }
}

#[inline]
fn half(n: usize) -> usize {
    n.div_ceil(2)
}

const BINOMIAL: [f64; 5] = [1.0, 4.0, 6.0, 4.0, 1.0];

/// 5-tap binomial blur with replicated borders, evaluated only at even
/// coordinates of a `w x h` plane.
fn blur_decimate(src: &[f32], w: usize, h: usize) -> (Vec<f32>, usize, usize) {
    let (ow, oh) = (half(w), half(h));
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut rows = vec![0.0f64; ow * h];
    for y in 0..h {
        for ox in 0..ow {
            let x = (2 * ox) as isize;
            rows[y * ow + ox] = BINOMIAL
                .iter()
                .enumerate()
                .map(|(k, t)| t * src[y * w + clamp(x + k as isize - 2, w)] as f64)
                .sum::<f64>()
                / 16.0;
        }
    }
    let mut out = vec![0.0f32; ow * oh];
    for oy in 0..oh {
        let y = (2 * oy) as isize;
        for ox in 0..ow {
            let v: f64 = BINOMIAL
                .iter()
                .enumerate()
                .map(|(k, t)| t * rows[clamp(y + k as isize - 2, h) * ow + ox])
                .sum::<f64>()
                / 16.0;
            out[oy * ow + ox] = v as f32;
        }
    }
    (out, ow, oh)
}

/// Zero insertion followed by the binomial blur scaled by 4, written in
/// polyphase form: even outputs take `(s[j-1] + 6 s[j] + s[j+1]) / 8`, odd
/// outputs `(s[j] + s[j+1]) / 2`, with replicated source borders. The
/// result is cropped to `tw x th`.
fn upsample(src: &[f32], sw: usize, sh: usize, tw: usize, th: usize) -> Vec<f32> {
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let taps = |i: usize, n: usize| -> [(usize, f64); 3] {
        let j = (i / 2) as isize;
        if i.is_multiple_of(2) {
            [
                (clamp(j - 1, n), 1.0 / 8.0),
                (clamp(j, n), 6.0 / 8.0),
                (clamp(j + 1, n), 1.0 / 8.0),
            ]
        } else {
            [(clamp(j, n), 0.5), (clamp(j + 1, n), 0.5), (0, 0.0)]
        }
    };
    let mut rows = vec![0.0f64; tw * sh];
    for y in 0..sh {
        for x in 0..tw {
            rows[y * tw + x] = taps(x, sw)
                .iter()
                .map(|&(j, k)| k * src[y * sw + j] as f64)
                .sum();
        }
    }
    let mut out = vec![0.0f32; tw * th];
    for y in 0..th {
        let ty = taps(y, sh);
        for x in 0..tw {
            let v: f64 = ty.iter().map(|&(j, k)| k * rows[j * tw + x]).sum();
            out[y * tw + x] = v as f32;
        }
    }
    out
}

/// Upsamples a single-channel image to `tw x th`.
pub fn upsample_to(img: &Image, tw: usize, th: usize) -> Result<Image> {
    img.expect_channels(1, "upsample input")?;
    if half(tw) != img.width() || half(th) != img.height() {
        return Err(Error::Structure(format!(
            "{}x{} cannot be upsampled to {tw}x{th}",
            img.width(),
            img.height()
        )));
    }
    let data = upsample(img.data(), img.width(), img.height(), tw, th);
    Ok(Image::from_parts_unchecked(tw, th, 1, data))
}

/// One reduction step: binomial blur then 2x decimation.
pub fn downsample(img: &Image) -> Result<Image> {
    img.expect_channels(1, "downsample input")?;
    let (data, w, h) = blur_decimate(img.data(), img.width(), img.height());
    Ok(Image::from_parts_unchecked(w, h, 1, data))
}

fn subtract(a: &Image, b: &Image) -> Image {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
    Image::from_parts_unchecked(a.width(), a.height(), 1, data)
}

fn add(a: &Image, b: &Image) -> Image {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Image::from_parts_unchecked(a.width(), a.height(), 1, data)
}

/// Laplacian pyramid of a single-channel image.
pub fn build_laplacian(img: &Image, levels: usize) -> Result<LaplacianPyramid> {
    img.expect_channels(1, "laplacian input")?;
    if levels == 0 {
        return Err(Error::Param("pyramid needs at least one level".into()));
    }
    let need = 1usize << (levels - 1);
    if img.width().min(img.height()) < need {
        return Err(Error::Size(format!(
            "{}x{} is too small for a {levels}-level pyramid (needs >= {need})",
            img.width(),
            img.height()
        )));
    }
    let mut bands = Vec::with_capacity(levels - 1);
    let mut current = img.clone();
    for _ in 1..levels {
        let coarse = downsample(&current)?;
        let up = upsample_to(&coarse, current.width(), current.height())?;
        bands.push(subtract(&current, &up));
        current = coarse;
    }
    Ok(LaplacianPyramid {
        bands,
        base: current,
    })
}

/// Collapses the pyramid and clamps the result to `[0, 1]`.
pub fn reconstruct(pyr: &LaplacianPyramid) -> Result<Image> {
    Ok(collapse(pyr)?.clamped())
}

/// Collapses the pyramid without the final clamp.
pub fn collapse(pyr: &LaplacianPyramid) -> Result<Image> {
    let mut current = pyr.base.clone();
    for band in pyr.bands.iter().rev() {
        if band.channels() != 1 || current.channels() != 1 {
            return Err(Error::Structure("pyramid levels must be single-channel".into()));
        }
        let up = upsample_to(&current, band.width(), band.height())?;
        current = add(&up, band);
    }
    Ok(current)
}

/// 2x2 max pooling; odd trailing rows/columns pool over partial windows.
pub fn max_pool2(img: &Image) -> Image {
    let (w, h) = (img.width(), img.height());
    let (ow, oh) = (half(w), half(h));
    let ch = img.channels();
    Image::from_fn(ow, oh, ch, |x, y, c| {
        let mut m = f32::NEG_INFINITY;
        for sy in 2 * y..(2 * y + 2).min(h) {
            for sx in 2 * x..(2 * x + 2).min(w) {
                m = m.max(img.get(sx, sy, c));
            }
        }
        m
    })
}

pub fn build_illum_pyramid(i: &Image, levels: usize) -> Result<IllumPyramid> {
    i.expect_channels(1, "illumination")?;
    let mut out = vec![i.clone()];
    for _ in 1..levels {
        let next = max_pool2(out.last().unwrap());
        out.push(next);
    }
    Ok(IllumPyramid { levels: out })
}

pub fn invert_illum(i: &Image) -> Image {
    i.map(|v| 1.0 - v)
}

/// `rho * grad(D)` by central differences with replicated borders, each
/// component clamped to `[-rho, rho]`.
pub fn offsets_from_illum(d: &Image, rho: f64) -> Result<OffsetField> {
    d.expect_channels(1, "inverted illumination")?;
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::Param(format!("rho must be >= 0, got {rho}")));
    }
    let (w, h) = (d.width(), d.height());
    let mut field = OffsetField::zeros(w, h);
    if rho == 0.0 {
        return Ok(field);
    }
    let at = |x: usize, y: usize| d.get(x, y, 0) as f64;
    for y in 0..h {
        for x in 0..w {
            let gx = (at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y)) / 2.0;
            let gy = (at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1))) / 2.0;
            field.dx[y * w + x] = (rho * gx).clamp(-rho, rho) as f32;
            field.dy[y * w + x] = (rho * gy).clamp(-rho, rho) as f32;
        }
    }
    Ok(field)
}

/// Bilinear resampling at `p + field(p)`, coordinates clamped to the image.
pub fn nonrigid_sample(plane: &Image, field: &OffsetField) -> Result<Image> {
    plane.expect_channels(1, "sampled plane")?;
    let (w, h) = (plane.width(), plane.height());
    if field.width != w || field.height != h {
        return Err(Error::Shape(format!(
            "offset field {}x{} does not match plane {w}x{h}",
            field.width, field.height
        )));
    }
    let src = plane.data();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let k = y * w + x;
            let sx = (x as f64 + field.dx[k] as f64).clamp(0.0, (w - 1) as f64);
            let sy = (y as f64 + field.dy[k] as f64).clamp(0.0, (h - 1) as f64);
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            let (tx, ty) = (sx - x0 as f64, sy - y0 as f64);
            let v = |xx: usize, yy: usize| src[yy * w + xx] as f64;
            let top = v(x0, y0) + tx * (v(x1, y0) - v(x0, y0));
            let bottom = v(x0, y1) + tx * (v(x1, y1) - v(x0, y1));
            out.push((top + ty * (bottom - top)) as f32);
        }
    }
    Ok(Image::from_parts_unchecked(w, h, 1, out))
}

/// Restoration parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RpmParams {
    pub alpha: f64,
    pub rho: f64,
    pub levels: usize,
}

impl Default for RpmParams {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            rho: DEFAULT_RHO,
            levels: DEFAULT_LEVELS,
        }
    }
}

/// Resamples and amplifies every band of one plane, guided by the
/// illumination pyramid.
pub fn restore_plane(plane: &Image, illum: &IllumPyramid, p: &RpmParams) -> Result<Image> {
    let mut pyr = build_laplacian(plane, p.levels)?;
    for (k, band) in pyr.bands.iter_mut().enumerate() {
        let lit = &illum.levels[k];
        if !lit.same_dims(band) {
            return Err(Error::Shape(format!(
                "illumination level {k} is {}x{}, band is {}x{}",
                lit.width(),
                lit.height(),
                band.width(),
                band.height()
            )));
        }
        let dark = invert_illum(lit);
        let field = offsets_from_illum(&dark, p.rho)?;
        let sampled = if field.is_zero() {
            band.clone()
        } else {
            nonrigid_sample(band, &field)?
        };
        let data = sampled
            .data()
            .iter()
            .zip(dark.data())
            .map(|(&v, &d)| (v as f64 * (1.0 + p.alpha * d as f64)) as f32)
            .collect();
        *band = Image::from_parts_unchecked(band.width(), band.height(), 1, data);
    }
    reconstruct(&pyr)
}

pub fn rpm_restore(r: &Image, i: &Image, p: &RpmParams) -> Result<Image> {
    r.expect_channels(3, "rpm reflectance")?;
    i.expect_channels(1, "rpm illumination")?;
    r.expect_same_dims(i, "reflectance/illumination dimensions")?;
    if !(p.alpha >= 0.0) || !p.alpha.is_finite() {
        return Err(Error::Param(format!("alpha must be >= 0, got {}", p.alpha)));
    }
    let illum = build_illum_pyramid(i, p.levels)?;
    let planes = split_channels(r)?;
    let restored = [
        restore_plane(&planes[0], &illum, p)?,
        restore_plane(&planes[1], &illum, p)?,
        restore_plane(&planes[2], &illum, p)?,
    ];
    merge_channels(&restored)
}
