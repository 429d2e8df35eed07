//! Fidelity metrics and the training objectives of the decomposition,
//! restoration and illumination-adjustment stages, evaluated as plain
//! functions of images.
//!
//! Norms are taken as means over samples so values are comparable across
//! resolutions.

use crate::error::{Error, Result};
use crate::image::Image;

/// Windowed SSIM constants.
#[derive(Clone, Debug, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn kernel(&self) -> Vec<f64> {
        let half = (self.window as f64 - 1.0) / 2.0;
        let taps: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - half;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.into_iter().map(|t| t / sum).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.window == 0 || !(self.sigma > 0.0) || !(self.k1 > 0.0) || !(self.k2 > 0.0) {
            return Err(Error::Param(format!("invalid SSIM parameters {self:?}")));
        }
        Ok(())
    }
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.expect_same_shape(b, "mse operands")?;
    Ok(mean_by(a, b, |d| d * d))
}

pub fn mae(a: &Image, b: &Image) -> Result<f64> {
    a.expect_same_shape(b, "mae operands")?;
    Ok(mean_by(a, b, f64::abs))
}

fn mean_by(a: &Image, b: &Image, f: impl Fn(f64) -> f64) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x as f64 - y as f64))
        .sum();
    sum / a.len() as f64
}

/// Peak signal-to-noise ratio in dB with a peak of 1. Identical images give
/// `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let err = mse(a, b)?;
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / err).log10())
}

/// Mean SSIM over every valid window position and every channel.
pub fn ssim(a: &Image, b: &Image, p: &SsimParams) -> Result<f64> {
    a.expect_same_shape(b, "ssim operands")?;
    p.validate()?;
    let win = p.window;
    if a.width() < win || a.height() < win {
        return Err(Error::Size(format!(
            "{}x{} image is smaller than the {win}x{win} SSIM window",
            a.width(),
            a.height()
        )));
    }
    let kernel = p.kernel();
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    let (ow, oh) = (w - win + 1, h - win + 1);

    let mut total = 0.0;
    for c in 0..ch {
        let plane = |img: &Image| -> Vec<f64> {
            img.data()
                .iter()
                .skip(c)
                .step_by(ch)
                .map(|&v| v as f64)
                .collect()
        };
        let x = plane(a);
        let y = plane(b);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u * v).collect();

        let mu_x = filter_valid(&x, w, h, &kernel);
        let mu_y = filter_valid(&y, w, h, &kernel);
        let s_xx = filter_valid(&xx, w, h, &kernel);
        let s_yy = filter_valid(&yy, w, h, &kernel);
        let s_xy = filter_valid(&xy, w, h, &kernel);

        for i in 0..ow * oh {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = s_xx[i] - mx * mx;
            let var_y = s_yy[i] - my * my;
            let cov = s_xy[i] - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (var_x + var_y + c2));
        }
    }
    Ok(total / (ow * oh * ch) as f64)
}

/// Separable correlation keeping only positions where the window fits.
fn filter_valid(src: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let k = kernel.len();
    let ow = w - k + 1;
    let oh = h - k + 1;
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = kernel.iter().zip(&line[x..x + k]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = kernel
                .iter()
                .enumerate()
                .map(|(j, kv)| kv * rows[(y + j) * ow + x])
                .sum();
        }
    }
    out
}

/// Forward differences per channel; the last column of `gx` and the last
/// row of `gy` are zero.
pub fn gradient(img: &Image) -> (Image, Image) {
    let (w, h, ch) = (img.width(), img.height(), img.channels());
    let gx = Image::from_fn(w, h, ch, |x, y, c| {
        if x + 1 < w {
            img.get(x + 1, y, c) - img.get(x, y, c)
        } else {
            0.0
        }
    });
    let gy = Image::from_fn(w, h, ch, |x, y, c| {
        if y + 1 < h {
            img.get(x, y + 1, c) - img.get(x, y, c)
        } else {
            0.0
        }
    });
    (gx, gy)
}

/// Mean squared difference of the two gradient fields, summed over the
/// horizontal and vertical directions.
pub fn gradient_mse(a: &Image, b: &Image) -> Result<f64> {
    a.expect_same_shape(b, "gradient operands")?;
    let (ax, ay) = gradient(a);
    let (bx, by) = gradient(b);
    Ok(mse(&ax, &bx)? + mse(&ay, &by)?)
}

/// `R * I` with the single-channel illumination broadcast over channels.
pub(crate) fn broadcast_product(r: &Image, i: &Image) -> Result<Image> {
    i.expect_channels(1, "illumination")?;
    r.expect_same_dims(i, "reflectance/illumination dimensions")?;
    let ch = r.channels();
    let data = r
        .data()
        .iter()
        .enumerate()
        .map(|(k, &v)| v * i.data()[k / ch])
        .collect();
    Ok(Image::from_parts_unchecked(r.width(), r.height(), ch, data))
}

/// Decomposition objective: reflectance consistency between the pair plus
/// the reconstruction error of each image.
pub fn loss_decom(
    r_low: &Image,
    r_high: &Image,
    i_low: &Image,
    i_high: &Image,
    s_low: &Image,
    s_high: &Image,
) -> Result<f64> {
    r_low.expect_channels(3, "low reflectance")?;
    r_high.expect_channels(3, "high reflectance")?;
    r_low.expect_same_shape(r_high, "reflectance pair")?;
    r_low.expect_same_shape(s_low, "low reflectance vs source")?;
    r_high.expect_same_shape(s_high, "high reflectance vs source")?;
    let consistency = mae(r_low, r_high)?;
    let rec_low = mae(&broadcast_product(r_low, i_low)?, s_low)?;
    let rec_high = mae(&broadcast_product(r_high, i_high)?, s_high)?;
    Ok(consistency + rec_low + rec_high)
}

/// Restoration objective: MSE minus SSIM plus gradient MSE. Equals -1 at
/// the ground truth.
pub fn loss_restore(r_hat: &Image, r_high: &Image) -> Result<f64> {
    r_hat.expect_channels(3, "restored reflectance")?;
    r_hat.expect_same_shape(r_high, "restoration pair")?;
    Ok(mse(r_hat, r_high)? - ssim(r_hat, r_high, &SsimParams::default())?
        + gradient_mse(r_hat, r_high)?)
}

/// Illumination objective: MSE plus gradient MSE.
pub fn loss_illum(i_hat: &Image, i_high: &Image) -> Result<f64> {
    i_hat.expect_channels(1, "adjusted illumination")?;
    i_hat.expect_same_shape(i_high, "illumination pair")?;
    Ok(mse(i_hat, i_high)? + gradient_mse(i_hat, i_high)?)
}
