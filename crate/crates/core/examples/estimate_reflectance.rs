//! Estimates a reflectance field for a new pose from a single frame, using
//! exemplar poses as the prior. Compares the closed-form and iterative solvers.

use olat_relight::estimate::{estimate_frame, EstimationConfig, ExemplarSet, Solver};
use olat_relight::gamma::DualGamma;
use olat_relight::imagecore::{ImageDims, MaskImage};
use olat_relight::relight::{reconstruction_loss, IdentityFeatures, LossWeights};
use olat_relight::stagesim::{fibonacci_directions, generate_dataset, overhead_environment, SphereScene};
use olat_relight::{project_environment, relight};

fn main() -> anyhow::Result<()> {
    let env_dims = ImageDims::new(64, 32)?;
    let dims = ImageDims::new(32, 32)?;
    let dirs = fibonacci_directions(41);
    let field_for = |albedo: [f64; 3], radius: f64| -> anyhow::Result<_> {
        let scene = SphereScene::new(albedo, radius, dims, [0.0; 3])?;
        Ok((generate_dataset(&scene, &dirs, env_dims)?, scene))
    };
    let exemplar_fields = vec![
        field_for([0.4, 0.4, 0.4], 0.7)?.0.field,
        field_for([0.8, 0.5, 0.3], 0.8)?.0.field,
        field_for([0.6, 0.6, 0.8], 0.9)?.0.field,
    ];
    let (target, scene) = field_for([0.7, 0.5, 0.35], 0.8)?;

    let w = project_environment(&overhead_environment(env_dims, 0.3)?, &target.footprints)?;
    let exemplars = ExemplarSet::synthesize(exemplar_fields, &w, DualGamma::IDENTITY)?;
    let frame = relight(&target.field, &w)?;
    let mask = MaskImage::from_fn(dims, |x, y| if scene.normal_at(x, y).is_some() { 1.0 } else { 0.0 });

    for solver in [Solver::Ridge, Solver::Iterative] {
        let cfg = EstimationConfig {
            solver,
            iterations: 300,
            ..Default::default()
        };
        let est = estimate_frame(&frame, &mask, &w, &exemplars, &cfg, LossWeights::default())?;
        let err = reconstruction_loss(&est.field, &target.field, &mask, &IdentityFeatures)?;
        let blend: Vec<String> = est.blend.iter().map(|b| format!("{b:.3}")).collect();
        println!(
            "{solver:?}: blend [{}], reconstruction error {err:.3e}",
            blend.join(", ")
        );
        if let (Some(first), Some(last)) = (est.loss_trace.first(), est.loss_trace.last()) {
            println!(
                "  objective {first:.4e} -> {last:.4e} over {} steps",
                est.loss_trace.len() - 1
            );
        }
    }
    Ok(())
}
