//! Recovers a dual-gamma camera response from raw OLATs and a frame of the
//! same subject under a known environment.

use olat_relight::gamma::{apply_dual_gamma_field, fit_dual_gamma, DualGamma};
use olat_relight::imagecore::{ImageDims, MaskImage};
use olat_relight::stagesim::{fibonacci_directions, generate_dataset, overhead_environment, SphereScene};
use olat_relight::{project_environment, relight, ReflectanceField};

fn main() -> anyhow::Result<()> {
    let truth = DualGamma::new(2.2, 0.8)?;
    let env_dims = ImageDims::new(64, 32)?;
    let scene = SphereScene::new([0.7, 0.7, 0.7], 0.85, ImageDims::new(32, 32)?, [0.0; 3])?;
    let ds = generate_dataset(&scene, &fibonacci_directions(41), env_dims)?;

    // stored OLATs are camera-encoded and peak-normalized
    let peak = ds
        .field
        .olats()
        .iter()
        .flat_map(|o| o.data().iter().copied())
        .fold(0.0, f64::max);
    let linear = ds.field.map_images(|o| o.scaled(1.0 / peak));
    let raw = ReflectanceField::new(linear.olats().iter().map(|o| o.map(|v| truth.invert(v))).collect())?;

    let w = project_environment(&overhead_environment(env_dims, 0.3)?, &ds.footprints)?.scaled(0.1);
    let frame = relight(&apply_dual_gamma_field(&raw, truth), &w)?;
    let mask = MaskImage::from_fn(
        scene.dims,
        |x, y| if scene.normal_at(x, y).is_some() { 1.0 } else { 0.0 },
    );

    let fit = fit_dual_gamma(&raw, &w, &frame, &mask)?;
    println!(
        "true ({}, {}), fitted ({:.4}, {:.4}), residual {:.2e}, {} simplex iterations",
        truth.gamma1, truth.gamma2, fit.gamma.gamma1, fit.gamma.gamma2, fit.residual, fit.iterations
    );
    Ok(())
}
