//! Interleaved floating-point image buffer.
//!
//! Every stage of the pipeline reads and writes [`Image`]. Samples are
//! stored row-major with channels interleaved, so the sample for pixel
//! `(x, y)` and channel `c` lives at `(y * width + x) * channels + c`.
//! Intermediate results may leave the unit interval; values are clamped
//! to `[0, 1]` only when crossing the codec boundary or where an operation
//! says so.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    /// Wraps an existing buffer, checking its length and that every sample is finite.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidImage("zero channels".into()));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::InvalidImage("dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(Error::Shape(format!(
                "buffer holds {} samples but {width}x{height}x{channels} needs {expected}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite sample at index {pos}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Self {
        assert!(channels > 0 && value.is_finite());
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    /// Builds an image by evaluating `f(x, y, c)` for every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        assert!(channels > 0);
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let v = f(x, y, c);
                    assert!(v.is_finite(), "non-finite sample at ({x}, {y}, {c})");
                    data.push(v);
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
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
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[self.index(x, y, c)]
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let start = self.index(x, y, 0);
        &self.data[start..start + self.channels]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, f32> {
        self.data.chunks_exact(self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.same_dims(other) && self.channels == other.channels
    }

    /// Applies `f` to every sample.
    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Image {
        let data: Vec<f32> = self.data.iter().map(|&v| f(v)).collect();
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Image { data, ..*self }
    }

    pub fn clamped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub(crate) fn from_parts_unchecked(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f32>,
    ) -> Image {
        debug_assert_eq!(data.len(), width * height * channels);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Image {
            width,
            height,
            channels,
            data,
        }
    }

    pub(crate) fn expect_channels(&self, channels: usize, what: &str) -> Result<()> {
        if self.channels != channels {
            return Err(Error::Shape(format!(
                "{what} must have {channels} channel(s), got {}",
                self.channels
            )));
        }
        Ok(())
    }

    pub(crate) fn expect_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )));
        }
        Ok(())
    }

    pub(crate) fn expect_same_dims(&self, other: &Image, what: &str) -> Result<()> {
        if !self.same_dims(other) {
            return Err(Error::Shape(format!(
                "{what}: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Splits a 3-channel image into three single-channel planes.
pub fn split_channels(img: &Image) -> Result<[Image; 3]> {
    img.expect_channels(3, "split_channels input")?;
    let n = img.width * img.height;
    let mut planes = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for px in img.pixels() {
        for (plane, &v) in planes.iter_mut().zip(px) {
            plane.push(v);
        }
    }
    Ok(planes.map(|data| Image::from_parts_unchecked(img.width, img.height, 1, data)))
}

/// Interleaves three single-channel planes of equal dimensions.
pub fn merge_channels(planes: &[Image]) -> Result<Image> {
    if planes.len() != 3 {
        return Err(Error::Shape(format!(
            "merge_channels needs 3 planes, got {}",
            planes.len()
        )));
    }
    let (w, h) = (planes[0].width, planes[0].height);
    for p in planes {
        p.expect_channels(1, "merge_channels plane")?;
        p.expect_same_dims(&planes[0], "merge_channels planes differ")?;
    }
    let mut data = Vec::with_capacity(w * h * 3);
    for i in 0..w * h {
        data.extend(planes.iter().map(|p| p.data[i]));
    }
    Ok(Image::from_parts_unchecked(w, h, 3, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_mismatched_length() {
        assert!(matches!(
            Image::new(2, 2, 3, vec![0.0; 11]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Image::new(1, 1, 1, vec![f32::NAN]).is_err());
    }

    #[test]
    fn index_is_row_major_interleaved() {
        let img = Image::from_fn(3, 2, 3, |x, y, c| (100 * y + 10 * x + c) as f32);
        assert_eq!(img.index(2, 1, 1), (3 + 2) * 3 + 1);
        assert_eq!(img.get(2, 1, 1), 121.0);
    }

    #[test]
    fn split_single_pixel() {
        let img = Image::new(1, 1, 3, vec![0.1, 0.2, 0.3]).unwrap();
        let [r, g, b] = split_channels(&img).unwrap();
        assert_eq!(r.data(), &[0.1]);
        assert_eq!(g.data(), &[0.2]);
        assert_eq!(b.data(), &[0.3]);
        assert_eq!(merge_channels(&[r, g, b]).unwrap(), img);
    }

    #[test]
    fn split_requires_three_channels() {
        assert!(split_channels(&Image::filled(2, 2, 1, 0.0)).is_err());
    }

    #[test]
    fn merge_rejects_dimension_mismatch() {
        let a = Image::filled(2, 2, 1, 0.0);
        let b = Image::filled(2, 3, 1, 0.0);
        assert!(matches!(
            merge_channels(&[a.clone(), a, b]),
            Err(Error::Shape(_))
        ));
    }

    proptest! {
        #[test]
        fn merge_split_is_identity(data in proptest::collection::vec(0.0f32..1.0, 16 * 16 * 3)) {
            let img = Image::new(16, 16, 3, data).unwrap();
            let planes = split_channels(&img).unwrap();
            let back = merge_channels(&planes).unwrap();
            prop_assert_eq!(back.data(), img.data());
        }
    }
}
