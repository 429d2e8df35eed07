//! End-to-end enhancement: decompose, denoise the reflectance, restore its
//! detail, correct its color, brighten the illumination, recompose.

use crate::adjust::{adjust_illumination, auto_gamma, AdjustParams};
use crate::cdm::{bilateral_denoise, cdm_denoise};
use crate::config::{ColorSource, DenoiseMode, PipelineConfig};
use crate::decomp::{
    compute_reflectance, decompose, init_illumination, recompose, refine_illumination, residual,
    RetinexDecomposition,
};
use crate::error::{Error, Result, Stage};
use crate::image::Image;
use crate::pcm::{block_max, fit_color_matrix, pcm_correct, ColorMatrix};
use crate::rpm::rpm_restore;

#[derive(Clone, Debug)]
pub struct Diagnostics {
    pub gamma: f64,
    pub coarse_matrix: ColorMatrix,
    pub fine_matrix: ColorMatrix,
    /// Reflectance after restoration and color correction.
    pub restored_reflectance: Image,
    pub adjusted_illumination: Image,
    /// Decomposition of the reference image, when one was given.
    pub reference: Option<RetinexDecomposition>,
}

#[derive(Clone, Debug)]
pub struct Enhanced {
    pub output: Image,
    /// Reflectance after denoising, the illumination it was divided by, and
    /// the residual between the two and the input.
    pub decomposition: RetinexDecomposition,
    pub diagnostics: Diagnostics,
}

/// Runs the pipeline on `s_low`. A reference image enables automatic gamma
/// and color-matrix fitting.
pub fn enhance(s_low: &Image, cfg: &PipelineConfig, reference: Option<&Image>) -> Result<Enhanced> {
    cfg.validate()?;
    let decompose_err = Error::at(Stage::Decompose);
    s_low.expect_channels(3, "input image").map_err(Error::at(Stage::Decompose))?;
    let min_side = 1usize << cfg.levels.saturating_sub(1);
    if cfg.restore && s_low.width().min(s_low.height()) < min_side {
        return Err(decompose_err(Error::Size(format!(
            "{}x{} input is smaller than the {min_side}px pyramid minimum",
            s_low.width(),
            s_low.height()
        ))));
    }

    let reference_decomp = reference
        .map(|r| {
            r.expect_same_shape(s_low, "reference vs input")?;
            decompose(r, &cfg.decompose_params())
        })
        .transpose()
        .map_err(Error::at(Stage::Decompose))?;

    let (illumination, reflectance) = (|| {
        let i0 = init_illumination(s_low)?;
        let i = refine_illumination(&i0, cfg.lambda, cfg.iterations)?;
        let r = compute_reflectance(s_low, &i, cfg.epsilon)?;
        Ok((i, r))
    })()
    .map_err(Error::at(Stage::Decompose))?;

    let denoised = match cfg.denoise {
        DenoiseMode::Grid => cdm_denoise(&reflectance, cfg.grid),
        DenoiseMode::Bilateral => bilateral_denoise(&reflectance, cfg.sigma_s, cfg.sigma_r),
        DenoiseMode::Off => Ok(reflectance),
    }
    .map_err(Error::at(Stage::Denoise))?;

    let restored = if cfg.restore {
        rpm_restore(&denoised, &illumination, &cfg.rpm_params()).map_err(Error::at(Stage::Restore))?
    } else {
        denoised.clone()
    };

    let (coarse_matrix, fine_matrix, corrected) = (|| {
        let (coarse, fine) = match &cfg.color {
            ColorSource::Identity => (ColorMatrix::identity(), ColorMatrix::identity()),
            ColorSource::Matrix(m) => (m.clone(), m.clone()),
            ColorSource::FitFromReference => {
                let target = reference_decomp.as_ref().ok_or_else(|| {
                    Error::Param("color_matrix = fit needs a reference image".into())
                })?;
                let fine = fit_color_matrix(&restored, &target.reflectance, cfg.ridge)?;
                let coarse = fit_color_matrix(
                    &block_max(&restored, cfg.pool)?,
                    &block_max(&target.reflectance, cfg.pool)?,
                    cfg.ridge,
                )?;
                (coarse, fine)
            }
        };
        let corrected = if cfg.correct {
            pcm_correct(&restored, &coarse, &fine, cfg.pool)?
        } else {
            restored.clone()
        };
        Ok((coarse, fine, corrected))
    })()
    .map_err(Error::at(Stage::Correct))?;

    let (gamma, adjusted) = (|| {
        let gamma = match cfg.adjust {
            AdjustParams::Gamma(g) => g,
            AdjustParams::Auto => {
                let target = reference_decomp.as_ref().ok_or_else(|| {
                    Error::Param("automatic gamma needs a reference image".into())
                })?;
                auto_gamma(&illumination, &target.illumination)?
            }
        };
        Ok((gamma, adjust_illumination(&illumination, gamma)?))
    })()
    .map_err(Error::at(Stage::Adjust))?;

    let output = recompose(&corrected, &adjusted).map_err(Error::at(Stage::Adjust))?;
    let residual = residual(s_low, &denoised, &illumination).map_err(Error::at(Stage::Denoise))?;

    Ok(Enhanced {
        output,
        decomposition: RetinexDecomposition {
            reflectance: denoised,
            illumination,
            residual,
        },
        diagnostics: Diagnostics {
            gamma,
            coarse_matrix,
            fine_matrix,
            restored_reflectance: corrected,
            adjusted_illumination: adjusted,
            reference: reference_decomp,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdm::GridDims;
    use crate::metrics::psnr;
    use crate::synth;

    #[test]
    fn neutral_configuration_reproduces_input() {
        let s = synth::smooth_image(48, 40, 3);
        let out = enhance(&s, &PipelineConfig::neutral(), None).unwrap().output;
        let worst = s
            .data()
            .iter()
            .zip(out.data())
            .fold(0.0f32, |m, (a, b)| m.max((a - b).abs()));
        assert!(worst <= 1e-3, "{worst}");
    }

    #[test]
    fn neutral_with_grid_is_recomposed_denoise() {
        let s = synth::smooth_image(48, 40, 4);
        let cfg = PipelineConfig {
            denoise: DenoiseMode::Grid,
            ..PipelineConfig::neutral()
        };
        let got = enhance(&s, &cfg, None).unwrap().output;
        let i = init_illumination(&s).unwrap();
        let r = compute_reflectance(&s, &i, cfg.epsilon).unwrap();
        let expected = recompose(&cdm_denoise(&r, GridDims::default()).unwrap(), &i).unwrap();
        for (a, b) in got.data().iter().zip(expected.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn dimmed_pair_improves_with_auto_gamma() {
        let (low, high) = synth::dimmed_pair(64, 64, 5, 0.25);
        let cfg = PipelineConfig {
            adjust: AdjustParams::Auto,
            ..PipelineConfig::default()
        };
        let out = enhance(&low, &cfg, Some(&high)).unwrap().output;
        let before = psnr(&low, &high).unwrap();
        let after = psnr(&out, &high).unwrap();
        assert!(after >= before + 10.0, "{before} -> {after}");
    }

    #[test]
    fn output_shape_and_range() {
        let s = synth::smooth_image(33, 35, 6).map(|v| v * 0.3);
        let out = enhance(&s, &PipelineConfig::default(), None).unwrap().output;
        assert!(out.same_shape(&s));
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn auto_gamma_without_reference_is_adjust_error() {
        let s = synth::smooth_image(16, 16, 7);
        let cfg = PipelineConfig {
            adjust: AdjustParams::Auto,
            ..PipelineConfig::default()
        };
        match enhance(&s, &cfg, None).unwrap_err() {
            Error::Stage { stage, .. } => assert_eq!(stage, Stage::Adjust),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn gray_input_is_decompose_error() {
        let s = Image::filled(16, 16, 1, 0.5);
        let err = enhance(&s, &PipelineConfig::default(), None).unwrap_err();
        assert!(err.to_string().starts_with("decompose:"), "{err}");
    }

    #[test]
    fn tiny_input_rejected_not_panicking() {
        let s = Image::filled(3, 3, 3, 0.5);
        assert!(enhance(&s, &PipelineConfig::default(), None).is_err());
    }

    #[test]
    fn deterministic() {
        let s = synth::smooth_image(40, 40, 8).map(|v| v * 0.4);
        let a = enhance(&s, &PipelineConfig::default(), None).unwrap().output;
        let b = enhance(&s, &PipelineConfig::default(), None).unwrap().output;
        assert_eq!(a, b);
    }
}
