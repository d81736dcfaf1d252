//! Relights a captured subject under a new environment and writes the result.
//!
//! cargo run --release --example relight_environment -- [output.pfm]

use olat_relight::imagecore::{save_image, ImageDims};
use olat_relight::probe::footprint_from_probe;
use olat_relight::stagesim::{fibonacci_directions, generate_dataset, smooth_random_environment, SphereScene};
use olat_relight::{project_environment, relight, LightingWeights};

fn main() -> anyhow::Result<()> {
    let output = std::env::args().nth(1).unwrap_or_else(|| "relit.pfm".into());
    let env_dims = ImageDims::new(64, 32)?;
    let scene = SphereScene::new([0.9, 0.5, 0.3], 0.8, ImageDims::new(64, 64)?, [0.0; 3])?;
    let ds = generate_dataset(&scene, &fibonacci_directions(146), env_dims)?;

    // footprints measured from the probe captures agree with the analytic ones
    let measured = ds
        .probes
        .iter()
        .map(footprint_from_probe)
        .collect::<Result<Vec<_>, _>>()?;
    let env = smooth_random_environment(3, env_dims)?;
    let w = project_environment(&env, &measured)?;
    let img = relight(&ds.field, &w)?;
    save_image(&img, &output)?;

    let brightest = (0..w.basis_count())
        .max_by(|&a, &b| w.get(a)[1].total_cmp(&w.get(b)[1]))
        .unwrap_or(0);
    let key = relight(&ds.field, &LightingWeights::one_hot(w.basis_count(), brightest))?;
    println!(
        "wrote {output}; brightest light {brightest} alone contributes peak {:.4}",
        key.data().iter().fold(0.0f64, |a, &b| a.max(b))
    );
    Ok(())
}
