//! Seeded synthetic images and degradation pairs for tests and demos.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;

/// Smooth RGB image: a few random low-frequency cosines per channel, mapped
/// into `[0.15, 0.95]`.
pub fn smooth_image(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let waves: Vec<[(f32, f32, f32, f32); 3]> = (0..3)
        .map(|_| {
            std::array::from_fn(|_| {
                (
                    rng.gen_range(0.5..2.5),
                    rng.gen_range(0.5..2.5),
                    rng.gen_range(0.0..std::f32::consts::TAU),
                    rng.gen_range(0.3..1.0),
                )
            })
        })
        .collect();
    let (w, h) = (width as f32, height as f32);
    Image::from_fn(width, height, 3, |x, y, c| {
        let (u, v) = (x as f32 / w, y as f32 / h);
        let (mut acc, mut norm) = (0.0, 0.0);
        for &(fx, fy, phase, amp) in &waves[c] {
            acc += amp * (std::f32::consts::TAU * (fx * u + fy * v) + phase).cos();
            norm += amp;
        }
        0.55 + 0.4 * acc / norm
    })
}

/// `(low, high)` where `low = high * factor`.
pub fn dimmed_pair(width: usize, height: usize, seed: u64, factor: f32) -> (Image, Image) {
    let high = smooth_image(width, height, seed);
    let low = high.map(|v| v * factor);
    (low, high)
}

/// Uniform noise in `[-amplitude, amplitude]` added to every sample.
pub fn add_uniform_noise(img: &Image, amplitude: f32, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    img.map(|v| v + rng.gen_range(-amplitude..=amplitude))
}

/// Independent uniform samples in `[0, 1)`.
pub fn random_image(width: usize, height: usize, channels: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(width, height, channels, |_, _, _| rng.gen())
}
