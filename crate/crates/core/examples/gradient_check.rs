//! Compares the analytic gradient of the squared rendering loss against central
//! finite differences at a few random samples.

use olat_relight::imagecore::{ImageDims, ImageF, MaskImage};
use olat_relight::relight::{rendering_loss_gradient, squared_rendering_loss};
use olat_relight::{LightingWeights, ReflectanceField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let dims = ImageDims::new(6, 5)?;
    let n = 4;
    let random_image = |rng: &mut ChaCha8Rng| ImageF::from_fn(dims, |_, _| [rng.random(), rng.random(), rng.random()]);
    let olats: Vec<ImageF> = (0..n).map(|_| random_image(&mut rng)).collect();
    let target = random_image(&mut rng);
    let w = LightingWeights::new((0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect())?;
    let mask = MaskImage::from_fn(dims, |x, _| if x == 0 { 0.0 } else { 1.0 });

    let field = ReflectanceField::new(olats.clone())?;
    let grad = rendering_loss_gradient(&field, &w, &target, &mask)?;
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (k, i) = (rng.random_range(0..n), rng.random_range(0..dims.pixel_count() * 3));
        let loss_at = |delta: f64| -> anyhow::Result<f64> {
            let mut moved = olats.clone();
            let mut data = moved[k].clone().into_data();
            data[i] += delta;
            moved[k] = ImageF::from_dims(dims, data)?;
            Ok(squared_rendering_loss(
                &ReflectanceField::new(moved)?,
                &w,
                &target,
                &mask,
            )?)
        };
        let numeric = (loss_at(h)? - loss_at(-h)?) / (2.0 * h);
        let analytic = grad.slice(k)[i];
        let rel = (numeric - analytic).abs() / analytic.abs().max(1e-12);
        println!("olat {k} sample {i:3}: analytic {analytic:+.6e} numeric {numeric:+.6e}");
        if analytic != 0.0 {
            worst = worst.max(rel);
        }
    }
    println!("worst relative error {worst:.2e}");
    Ok(())
}
