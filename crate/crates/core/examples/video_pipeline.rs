//! End-to-end pipeline on a simulated dataset written to disk: unwrap the
//! interview probe, project it, fit the camera response, and estimate every
//! tracking frame in parallel.
//!
//! cargo run --release --example video_pipeline -- [work_dir]

use olat_relight::cli::Dataset;
use olat_relight::estimate::{estimate_video, EstimationConfig, ExemplarSet};
use olat_relight::gamma::fit_dual_gamma;
use olat_relight::imagecore::{load_image, ImageDims};
use olat_relight::probe::mirrorball_to_latlong;
use olat_relight::relight::{reconstruction_loss, IdentityFeatures, LossWeights};
use olat_relight::{project_environment, MirrorBall};

fn main() -> anyhow::Result<()> {
    let work = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("olat-video-pipeline"));
    let out = work.to_string_lossy().into_owned();
    let cli = olat_relight::cli::parse_from([
        "olat-relight",
        "simulate",
        "--output-dir",
        &out,
        "--size",
        "32",
        "--frames",
        "4",
    ])?;
    olat_relight::cli::run(cli)?;
    let ds = Dataset::load(&work.join("manifest.json"))?;

    let ball = MirrorBall::inscribed(load_image(work.join("interview_ball.pfm"))?)?;
    let env = mirrorball_to_latlong(&ball, ImageDims::new(64, 32)?)?;
    let w = project_environment(&env, &ds.footprints(0.05)?)?;

    let raw = ds.field()?;
    let frames = (0..ds.manifest.frames.len())
        .map(|i| ds.frame(i))
        .collect::<Result<Vec<_>, _>>()?;
    let masks = (0..frames.len())
        .map(|i| ds.frame_mask(i))
        .collect::<Result<Vec<_>, _>>()?;
    let fit = fit_dual_gamma(&raw, &w, &frames[0], &masks[0])?;
    println!(
        "camera response ({:.3}, {:.3}), residual {:.2e}",
        fit.gamma.gamma1, fit.gamma.gamma2, fit.residual
    );

    let exemplars = ExemplarSet::synthesize(ds.exemplar_fields()?, &w, fit.gamma)?;
    let estimates = estimate_video(
        &frames,
        &masks,
        &w,
        &exemplars,
        &EstimationConfig::default(),
        LossWeights::default(),
    )?;
    for (i, (est, mask)) in estimates.iter().zip(&masks).enumerate() {
        let truth = olat_relight::cli::load_field_dir(&work.join(format!("truth/frame_{i:03}")))?;
        let err = reconstruction_loss(&est.field, &truth, mask, &IdentityFeatures)?;
        println!("frame {i}: reconstruction error {err:.3e}");
    }
    Ok(())
}
