//! Synthetic test images on `[0, 1]` and keyed Gaussian noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::grid::ScalarField;

/// Names accepted by [`synthetic_image`].
pub const SYNTHETIC_IMAGES: [&str; 3] = ["ramp", "eye", "smooth"];

/// A named synthetic image of size `size x size`:
/// `ramp` is affine, `eye` is a disk with a dark pupil on a flat
/// background, `smooth` has smooth regions separated by a curved edge.
pub fn synthetic_image(name: &str, size: usize) -> Option<ScalarField> {
    let size = size.max(2);
    let h = (size - 1).max(1) as f64;
    let image = match name {
        "ramp" => ScalarField::from_fn(size, size, |i, j, _| 0.15 + 0.7 * (0.6 * i as f64 + 0.4 * j as f64) / h),
        "eye" => ScalarField::from_fn(size, size, |i, j, _| {
            let (y, x) = (i as f64 / h - 0.5, j as f64 / h - 0.5);
            let r = (x * x + y * y).sqrt();
            if r < 0.12 {
                0.1
            } else if r < 0.32 {
                0.75
            } else {
                0.3
            }
        }),
        "smooth" => ScalarField::from_fn(size, size, |i, j, _| {
            let (y, x) = (i as f64 / h, j as f64 / h);
            if y > 0.3 + 0.25 * (std::f64::consts::PI * x).sin() {
                0.2 + 0.5 * x * y
            } else {
                0.9 - 0.4 * (x - 0.5) * (x - 0.5) - 0.3 * y
            }
        }),
        _ => return None,
    };
    Some(image)
}

/// 64-bit FNV-1a.
fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes
        .into_iter()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Stream seed for the noise of `(image id, factor, seed)`.
pub fn noise_key(image_id: &str, factor: f64, seed: u64) -> u64 {
    let bytes = image_id
        .bytes()
        .chain([0u8])
        .chain(factor.to_bits().to_le_bytes())
        .chain(seed.to_le_bytes());
    fnv1a(bytes)
}

/// `clean + factor * N(0, 1)` per pixel, without clipping, from a generator
/// keyed by `(image_id, factor, seed)`.
pub fn add_noise(clean: &ScalarField, image_id: &str, factor: f64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(noise_key(image_id, factor, seed));
    let mut noisy = clean.clone();
    for v in noisy.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += factor * z;
    }
    noisy
}
