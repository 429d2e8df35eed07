//! Reflectance/illumination decomposition `S = R * I`.
//!
//! The illumination starts from the max-RGB prior and is smoothed by an
//! edge-aware quadratic energy, so it stays piecewise smooth while the
//! reflectance carries texture. Illumination is a single channel shared by
//! all three colors.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::metrics::broadcast_product;

pub const DEFAULT_EPSILON: f32 = 1e-4;
pub const DEFAULT_LAMBDA: f64 = 0.15;
pub const DEFAULT_ITERATIONS: usize = 30;

/// Scale of the intensity differences used for the smoothness weights.
pub const EDGE_SIGMA: f64 = 0.1;
/// Relaxation factor of the Jacobi sweep.
pub const DAMPING: f64 = 0.8;

#[derive(Clone, Debug)]
pub struct RetinexDecomposition {
    pub reflectance: Image,
    pub illumination: Image,
    /// `S - R * I`, taken after the reflectance has been denoised.
    pub residual: Image,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecomposeParams {
    pub epsilon: f32,
    pub lambda: f64,
    pub iterations: usize,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            lambda: DEFAULT_LAMBDA,
            iterations: DEFAULT_ITERATIONS,
        }
    }
}

/// Per-pixel maximum over the color channels.
pub fn init_illumination(s: &Image) -> Result<Image> {
    s.expect_channels(3, "init_illumination input")?;
    let data = s
        .pixels()
        .map(|px| px[0].max(px[1]).max(px[2]))
        .collect();
    Ok(Image::from_parts_unchecked(s.width(), s.height(), 1, data))
}

/// Weight of the edge between two pixels of the initial illumination.
#[inline]
pub fn edge_weight(a: f32, b: f32) -> f64 {
    (-(a as f64 - b as f64).abs() / EDGE_SIGMA).exp()
}

/// Smooths `i0` by damped Jacobi sweeps on
/// `E(I) = sum (I - I0)^2 + lambda * sum_edges w_pq (I_p - I_q)^2`
/// over the 4-neighbourhood, projecting each iterate onto `[I0, 1]`.
///
/// The energy is non-increasing from one sweep to the next: with damping
/// 0.8 the scaled step stays inside the descent region of the quadratic,
/// and the box projection is separable.
pub fn refine_illumination(i0: &Image, lambda: f64, iterations: usize) -> Result<Image> {
    i0.expect_channels(1, "refine_illumination input")?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Param(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 || iterations == 0 {
        return Ok(i0.clone());
    }
    let (w, h) = (i0.width(), i0.height());
    let src = i0.data();
    // Right and down edge weights; the last column/row have no such edge.
    let mut right = vec![0.0f64; w * h];
    let mut down = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            if x + 1 < w {
                right[p] = edge_weight(src[p], src[p + 1]);
            }
            if y + 1 < h {
                down[p] = edge_weight(src[p], src[p + w]);
            }
        }
    }

    let lower: Vec<f64> = src.iter().map(|&v| v as f64).collect();
    let mut cur = lower.clone();
    let mut next = vec![0.0f64; w * h];
    for _ in 0..iterations {
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                let mut wsum = 0.0;
                let mut acc = 0.0;
                if x + 1 < w {
                    wsum += right[p];
                    acc += right[p] * cur[p + 1];
                }
                if x > 0 {
                    wsum += right[p - 1];
                    acc += right[p - 1] * cur[p - 1];
                }
                if y + 1 < h {
                    wsum += down[p];
                    acc += down[p] * cur[p + w];
                }
                if y > 0 {
                    wsum += down[p - w];
                    acc += down[p - w] * cur[p - w];
                }
                let target = (lower[p] + lambda * acc) / (1.0 + lambda * wsum);
                let relaxed = (1.0 - DAMPING) * cur[p] + DAMPING * target;
                next[p] = relaxed.clamp(lower[p], 1.0);
            }
        }
        std::mem::swap(&mut cur, &mut next);
    }
    let data = cur
        .iter()
        .zip(src)
        .map(|(&v, &floor)| (v as f32).max(floor))
        .collect();
    Ok(Image::from_parts_unchecked(w, h, 1, data))
}

/// `R_c = clamp(S_c / max(I, epsilon), 0, 1)`.
pub fn compute_reflectance(s: &Image, i: &Image, epsilon: f32) -> Result<Image> {
    s.expect_channels(3, "compute_reflectance source")?;
    i.expect_channels(1, "compute_reflectance illumination")?;
    s.expect_same_dims(i, "source/illumination dimensions")?;
    if !(epsilon > 0.0) {
        return Err(Error::Param(format!("epsilon must be > 0, got {epsilon}")));
    }
    let data = s
        .data()
        .iter()
        .enumerate()
        .map(|(k, &v)| (v / i.data()[k / 3].max(epsilon)).clamp(0.0, 1.0))
        .collect();
    Ok(Image::from_parts_unchecked(s.width(), s.height(), 3, data))
}

/// `out_c = clamp(R_c * I, 0, 1)`.
pub fn recompose(r: &Image, i: &Image) -> Result<Image> {
    r.expect_channels(3, "recompose reflectance")?;
    Ok(broadcast_product(r, i)?.clamped())
}

/// Full decomposition of `s` with the residual taken against the
/// undenoised reflectance.
pub fn decompose(s: &Image, params: &DecomposeParams) -> Result<RetinexDecomposition> {
    let i0 = init_illumination(s)?;
    let illumination = refine_illumination(&i0, params.lambda, params.iterations)?;
    let reflectance = compute_reflectance(s, &illumination, params.epsilon)?;
    let residual = residual(s, &reflectance, &illumination)?;
    Ok(RetinexDecomposition {
        reflectance,
        illumination,
        residual,
    })
}

/// `S - R * I` (unclamped).
pub fn residual(s: &Image, r: &Image, i: &Image) -> Result<Image> {
    let product = broadcast_product(r, i)?;
    s.expect_same_shape(&product, "residual operands")?;
    let data = s
        .data()
        .iter()
        .zip(product.data())
        .map(|(a, b)| a - b)
        .collect();
    Ok(Image::from_parts_unchecked(s.width(), s.height(), 3, data))
}
