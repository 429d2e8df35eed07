//! Quadratic ("binomial") color correction.
//!
//! A pixel `(r, g, b)` is lifted to the ten monomials of the upper triangle
//! of `[1, r, g, b]^T [1, r, g, b]`, and a 3x10 matrix maps those back to
//! RGB. The progressive form applies one matrix to a max-pooled copy of the
//! image (coarse, regional color) and adds the per-pixel residual of a
//! second matrix (fine detail).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::Image;

pub const FEATURES: usize = 10;
pub const DEFAULT_POOL: usize = 4;
pub const DEFAULT_RIDGE: f64 = 1e-6;

pub const FEATURE_NAMES: [&str; FEATURES] =
    ["1", "r", "g", "b", "r*r", "r*g", "r*b", "g*g", "g*b", "b*b"];

/// `[1, r, g, b, r^2, rg, rb, g^2, gb, b^2]`.
#[inline]
pub fn binomial_expand(r: f64, g: f64, b: f64) -> [f64; FEATURES] {
    [1.0, r, g, b, r * r, r * g, r * b, g * g, g * b, b * b]
}

#[inline]
fn expand_pixel(px: &[f32]) -> [f64; FEATURES] {
    binomial_expand(px[0] as f64, px[1] as f64, px[2] as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColorMatrix {
    pub rows: [[f64; FEATURES]; 3],
}

impl ColorMatrix {
    /// Selects the linear r, g, b features: maps every pixel to itself.
    pub fn identity() -> Self {
        let mut rows = [[0.0; FEATURES]; 3];
        for (c, row) in rows.iter_mut().enumerate() {
            row[1 + c] = 1.0;
        }
        Self { rows }
    }

    pub fn zeros() -> Self {
        Self {
            rows: [[0.0; FEATURES]; 3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.rows.iter().flatten().all(|v| v.is_finite())
    }

    #[inline]
    pub fn apply_features(&self, phi: &[f64; FEATURES]) -> [f64; 3] {
        self.rows
            .map(|row| row.iter().zip(phi).map(|(m, f)| m * f).sum())
    }

    /// Frobenius norm of the difference, relative to `self`.
    pub fn relative_distance(&self, other: &ColorMatrix) -> f64 {
        let diff: f64 = self
            .rows
            .iter()
            .flatten()
            .zip(other.rows.iter().flatten())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let norm: f64 = self.rows.iter().flatten().map(|a| a * a).sum();
        (diff / norm).sqrt()
    }
}

impl fmt::Display for ColorMatrix {
    /// Three lines of ten whitespace-separated decimals; values round-trip.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

impl FromStr for ColorMatrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lines: Vec<&str> = s.lines().filter(|l| !l.trim().is_empty()).collect();
        if lines.len() != 3 {
            return Err(Error::Config(format!(
                "color matrix needs 3 rows, found {}",
                lines.len()
            )));
        }
        let mut m = ColorMatrix::zeros();
        for (row, line) in m.rows.iter_mut().zip(&lines) {
            let values: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::Config(format!("bad matrix entry {t:?}")))
                })
                .collect::<Result<_>>()?;
            if values.len() != FEATURES {
                return Err(Error::Config(format!(
                    "color matrix row needs {FEATURES} entries, found {}",
                    values.len()
                )));
            }
            row.copy_from_slice(&values);
        }
        if !m.is_finite() {
            return Err(Error::Config("color matrix has non-finite entries".into()));
        }
        Ok(m)
    }
}

/// Solves `A X = B` for symmetric positive definite `A` (`n x n`) and
/// `B` (`n x 3`) by Cholesky. A pivot that vanishes relative to its
/// diagonal entry is reported as a rank deficiency at that feature.
fn cholesky_solve<const N: usize>(
    mut a: [[f64; N]; N],
    b: [[f64; 3]; N],
) -> Result<[[f64; 3]; N]> {
    let diag: [f64; N] = std::array::from_fn(|i| a[i][i]);
    for j in 0..N {
        let mut d = a[j][j];
        for k in 0..j {
            d -= a[j][k] * a[j][k];
        }
        if !(d > 1e-12 * diag[j].abs().max(f64::MIN_POSITIVE)) {
            return Err(Error::RankDeficient {
                index: j,
                name: FEATURE_NAMES[j],
            });
        }
        let l = d.sqrt();
        a[j][j] = l;
        for i in j + 1..N {
            let mut s = a[i][j];
            for k in 0..j {
                s -= a[i][k] * a[j][k];
            }
            a[i][j] = s / l;
        }
    }
    let mut x = b;
    for col in 0..3 {
        for i in 0..N {
            let mut s = x[i][col];
            for k in 0..i {
                s -= a[i][k] * x[k][col];
            }
            x[i][col] = s / a[i][i];
        }
        for i in (0..N).rev() {
            let mut s = x[i][col];
            for k in i + 1..N {
                s -= a[k][i] * x[k][col];
            }
            x[i][col] = s / a[i][i];
        }
    }
    Ok(x)
}

/// Least squares over the first `N` features, with the remaining columns
/// of the returned matrix left at zero.
fn fit_with<const N: usize>(src: &Image, reference: &Image, ridge: f64) -> Result<ColorMatrix> {
    src.expect_channels(3, "color fit source")?;
    src.expect_same_shape(reference, "color fit source/reference")?;
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::Param(format!("ridge must be >= 0, got {ridge}")));
    }
    let mut gram = [[0.0f64; N]; N];
    let mut rhs = [[0.0f64; 3]; N];
    for (px, target) in src.pixels().zip(reference.pixels()) {
        let phi = expand_pixel(px);
        for i in 0..N {
            for j in 0..=i {
                gram[i][j] += phi[i] * phi[j];
            }
            for c in 0..3 {
                rhs[i][c] += phi[i] * target[c] as f64;
            }
        }
    }
    for i in 0..N {
        for j in 0..i {
            gram[j][i] = gram[i][j];
        }
        gram[i][i] += ridge;
    }
    let solution = cholesky_solve(gram, rhs)?;
    let mut m = ColorMatrix::zeros();
    for (i, coeffs) in solution.iter().enumerate() {
        for c in 0..3 {
            m.rows[c][i] = coeffs[c];
        }
    }
    Ok(m)
}

/// `argmin_M sum ||M phi(src) - ref||^2 + ridge ||M||_F^2` over all ten features.
pub fn fit_color_matrix(src: &Image, reference: &Image, ridge: f64) -> Result<ColorMatrix> {
    fit_with::<FEATURES>(src, reference, ridge)
}

/// Best affine (3x4) map, i.e. a fit restricted to `[1, r, g, b]`.
pub fn fit_affine_color_matrix(src: &Image, reference: &Image, ridge: f64) -> Result<ColorMatrix> {
    fit_with::<4>(src, reference, ridge)
}

/// `clamp(M phi(p), 0, 1)` per pixel.
pub fn apply_color_matrix(img: &Image, m: &ColorMatrix) -> Result<Image> {
    img.expect_channels(3, "color matrix input")?;
    let mut data = Vec::with_capacity(img.len());
    for px in img.pixels() {
        let out = m.apply_features(&expand_pixel(px));
        data.extend(out.iter().map(|&v| v.clamp(0.0, 1.0) as f32));
    }
    Ok(Image::from_parts_unchecked(img.width(), img.height(), 3, data))
}

/// Per-channel max over non-overlapping `pool x pool` blocks, written back
/// to every pixel of its block.
pub fn block_max(img: &Image, pool: usize) -> Result<Image> {
    if pool == 0 {
        return Err(Error::Param("pool must be >= 1".into()));
    }
    if pool > img.width() || pool > img.height() {
        return Err(Error::Size(format!(
            "pool {pool} exceeds {}x{} image",
            img.width(),
            img.height()
        )));
    }
    if pool == 1 {
        return Ok(img.clone());
    }
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let (bw, bh) = (w.div_ceil(pool), h.div_ceil(pool));
    let mut blocks = vec![f32::NEG_INFINITY; bw * bh * ch];
    for y in 0..h {
        for x in 0..w {
            let base = ((y / pool) * bw + x / pool) * ch;
            for c in 0..ch {
                let slot = &mut blocks[base + c];
                *slot = slot.max(img.get(x, y, c));
            }
        }
    }
    Ok(Image::from_fn(w, h, ch, |x, y, c| {
        blocks[((y / pool) * bw + x / pool) * ch + c]
    }))
}

/// Coarse correction of the pooled image plus the fine residual
/// `M_fine phi(C1) - M_fine phi(C2)`.
pub fn pcm_correct(
    img: &Image,
    coarse: &ColorMatrix,
    fine: &ColorMatrix,
    pool: usize,
) -> Result<Image> {
    img.expect_channels(3, "pcm input")?;
    let pooled = block_max(img, pool)?;
    let mut data = Vec::with_capacity(img.len());
    for (c1, c2) in img.pixels().zip(pooled.pixels()) {
        let phi1 = expand_pixel(c1);
        let phi2 = expand_pixel(c2);
        let base = coarse.apply_features(&phi2);
        let own = fine.apply_features(&phi1);
        let pooled_fine = fine.apply_features(&phi2);
        for c in 0..3 {
            let v = base[c] + (own[c] - pooled_fine[c]);
            data.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    Ok(Image::from_parts_unchecked(img.width(), img.height(), 3, data))
}
