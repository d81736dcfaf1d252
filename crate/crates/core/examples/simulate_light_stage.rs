//! Renders a synthetic light stage capture of a diffuse sphere and checks that
//! relighting it with projected weights matches a direct render.
//!
//! cargo run --release --example simulate_light_stage -- [basis_count]

use olat_relight::imagecore::ImageDims;
use olat_relight::stagesim::{
    fibonacci_directions, generate_dataset, render_env, smooth_random_environment, SphereScene,
};
use olat_relight::{project_environment, relight};

fn main() -> anyhow::Result<()> {
    let n: usize = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(146);
    let env_dims = ImageDims::new(64, 32)?;
    let scene = SphereScene::new([0.8, 0.6, 0.4], 0.9, ImageDims::new(48, 48)?, [0.0; 3])?;
    let dataset = generate_dataset(&scene, &fibonacci_directions(n), env_dims)?;
    println!(
        "{} lights, cell solid angles sum to {:.4}",
        n,
        dataset.cell_solid_angles.iter().sum::<f64>()
    );

    for seed in 0..3 {
        let env = smooth_random_environment(seed, env_dims)?;
        let relit = relight(&dataset.field, &project_environment(&env, &dataset.footprints)?)?;
        let direct = render_env(&scene, &env)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (a, b) in relit.data().iter().zip(direct.data()) {
            num += (a - b) * (a - b);
            den += b * b;
        }
        println!("env {seed}: relative L2 error {:.5}", (num / den).sqrt());
    }
    Ok(())
}
