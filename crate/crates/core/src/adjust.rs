//! Gamma curve on the illumination map.

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AdjustParams {
    Gamma(f64),
    /// Calibrate gamma against a reference illumination (paired data only).
    Auto,
}

impl Default for AdjustParams {
    fn default() -> Self {
        AdjustParams::Gamma(1.0)
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::Param(format!("gamma must be finite and > 0, got {gamma}")));
    }
    Ok(())
}

/// `I^gamma` pointwise. `gamma < 1` brightens.
pub fn adjust_illumination(i: &Image, gamma: f64) -> Result<Image> {
    i.expect_channels(1, "illumination")?;
    check_gamma(gamma)?;
    if gamma == 1.0 {
        return Ok(i.clone());
    }
    Ok(i.map(|v| (v.clamp(0.0, 1.0) as f64).powf(gamma) as f32))
}

/// `ln(mean(I_ref)) / ln(mean(I_low))`.
pub fn auto_gamma(i_low: &Image, i_ref: &Image) -> Result<f64> {
    i_low.expect_channels(1, "low illumination")?;
    i_ref.expect_channels(1, "reference illumination")?;
    let (low, target) = (i_low.mean(), i_ref.mean());
    for (what, m) in [("low", low), ("reference", target)] {
        if !(m > 0.0 && m < 1.0) {
            return Err(Error::Calibration(format!(
                "{what} illumination mean {m} must lie strictly inside (0, 1)"
            )));
        }
    }
    let gamma = target.ln() / low.ln();
    check_gamma(gamma).map_err(|_| Error::Calibration(format!("degenerate gamma {gamma}")))?;
    Ok(gamma)
}
