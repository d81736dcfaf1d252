#![allow(dead_code)]

use olat_relight::imagecore::{ImageDims, ImageF, MaskImage};
use olat_relight::probe::{LatLongMap, LightingWeights};
use olat_relight::relight::ReflectanceField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn dims(w: usize, h: usize) -> ImageDims {
    ImageDims::new(w, h).unwrap()
}

pub fn image(rng: &mut ChaCha8Rng, d: ImageDims) -> ImageF {
    ImageF::from_fn(d, |_, _| [rng.random(), rng.random(), rng.random()])
}

pub fn field(rng: &mut ChaCha8Rng, n: usize, d: ImageDims) -> ReflectanceField {
    ReflectanceField::new((0..n).map(|_| image(rng, d)).collect()).unwrap()
}

pub fn weights(rng: &mut ChaCha8Rng, n: usize) -> LightingWeights {
    LightingWeights::new((0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect()).unwrap()
}

pub fn mask(rng: &mut ChaCha8Rng, d: ImageDims) -> MaskImage {
    MaskImage::from_fn(d, |_, _| if rng.random_bool(0.2) { 0.0 } else { rng.random() })
}

pub fn env(rng: &mut ChaCha8Rng, d: ImageDims) -> LatLongMap {
    LatLongMap::new(image(rng, d).scaled(4.0)).unwrap()
}

/// `||a − b|| / ||b||` over all samples.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

pub fn close_slices(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}
