//! Unwraps a mirror ball photograph into a latitude-longitude map.
//!
//! cargo run --release --example probe_to_latlong -- ball.pfm env.pfm
//!
//! Without arguments, a ball is rendered from a synthetic environment and
//! unwrapped again.

use olat_relight::imagecore::{load_image, save_image, ImageDims};
use olat_relight::probe::{mirrorball_to_latlong, solid_angle_map};
use olat_relight::stagesim::{render_mirror_ball, smooth_random_environment};
use olat_relight::MirrorBall;

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out_dims = ImageDims::new(128, 64)?;
    let map = match args.as_slice() {
        [input, output] => {
            let ball = MirrorBall::inscribed(load_image(input)?)?;
            let map = mirrorball_to_latlong(&ball, out_dims)?;
            save_image(map.image(), output)?;
            map
        }
        _ => {
            let env = smooth_random_environment(7, out_dims)?;
            let ball = render_mirror_ball(&env, 256)?;
            let map = mirrorball_to_latlong(&ball, out_dims)?;
            // the direction straight behind the ball collapses onto its rim, so
            // compare in aggregate
            let (mut num, mut den) = (0.0, 0.0);
            for (a, b) in map.image().data().iter().zip(env.image().data()) {
                num += (a - b) * (a - b);
                den += b * b;
            }
            println!(
                "round trip through a 256px ball: relative L2 error {:.4}",
                (num / den).sqrt()
            );
            map
        }
    };
    let omega = solid_angle_map(map.dims())?;
    let energy: f64 = map
        .image()
        .data()
        .chunks_exact(3)
        .zip(omega.values())
        .map(|(p, w)| p[1] * w)
        .sum();
    println!("green channel irradiance integral: {energy:.4}");
    Ok(())
}
