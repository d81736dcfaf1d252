use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use super::config::JobConfig;
use super::manifest::{load_field_dir, write_json, BasisEntry, Dataset, DatasetManifest, ExemplarEntry, WeightsFile};
use super::{
    Command, EstimateArgs, GammaFitArgs, LossArgs, ProbeArgs, ProjectArgs, RelightArgs, SimulateArgs, SynthArgs,
};
use crate::estimate::{estimate_video, ExemplarSet};
use crate::gamma::{apply_dual_gamma_field, fit_dual_gamma_with, DualGamma};
use crate::imagecore::{load_image, load_mask, save_image, save_mask, ImageDims, ImageF, MaskImage};
use crate::probe::{mirrorball_to_latlong, project_environment, LatLongMap, LightingWeights, MirrorBall};
use crate::relight::{
    combined_loss, reconstruction_loss, relight, rendering_loss, synth_tracking_frame, IdentityFeatures,
    ReflectanceField,
};
use crate::stagesim::{
    fibonacci_directions, generate_dataset, overhead_environment, render_mirror_ball, smooth_random_environment,
    SphereScene,
};

pub(super) fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Probe(a) => probe(a),
        Command::Project(a) => project(a),
        Command::Relight(a) => relight_cmd(a),
        Command::GammaFit(a) => gamma_fit(a),
        Command::Synth(a) => synth(a),
        Command::Estimate(a) => estimate(a),
        Command::Simulate(a) => simulate(a),
        Command::Loss(a) => loss(a),
    }
}

fn save(img: &ImageF, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    save_image(img, path).with_context(|| format!("writing {}", path.display()))
}

fn load(path: &Path) -> Result<ImageF> {
    load_image(path).with_context(|| format!("loading {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

/// `g1,g2` or a JSON file with `gamma1` and `gamma2`.
pub(super) fn parse_gamma(arg: Option<&str>) -> Result<DualGamma> {
    let Some(arg) = arg else {
        return Ok(DualGamma::IDENTITY);
    };
    if let Some((a, b)) = arg.split_once(',') {
        if let (Ok(a), Ok(b)) = (a.trim().parse(), b.trim().parse()) {
            return Ok(DualGamma::new(a, b)?);
        }
    }
    let text = std::fs::read_to_string(arg).with_context(|| format!("reading gamma file {arg}"))?;
    let g: DualGamma = serde_json::from_str(&text).with_context(|| format!("parsing gamma file {arg}"))?;
    Ok(DualGamma::new(g.gamma1, g.gamma2)?)
}

fn probe(a: ProbeArgs) -> Result<()> {
    let img = load(&a.input)?;
    let ball = match (a.center_x, a.center_y, a.radius) {
        (Some(x), Some(y), Some(r)) => MirrorBall::new(img, (x, y), r)?,
        _ => MirrorBall::inscribed(img)?,
    };
    let dims = ImageDims::new(2 * a.height, a.height)?;
    let map = mirrorball_to_latlong(&ball, dims)?;
    save(map.image(), &a.output)
}

fn project(a: ProjectArgs) -> Result<()> {
    let cfg = JobConfig::load(a.config.as_deref())?;
    let ds = Dataset::load(&a.manifest)?;
    let env = LatLongMap::new(load(&a.env)?)?;
    let w = project_environment(&env, &ds.footprints(cfg.noise_floor)?)?;
    WeightsFile::save(&w, &a.output)
}

fn relight_cmd(a: RelightArgs) -> Result<()> {
    let cfg = JobConfig::load(a.config.as_deref())?;
    let ds = a.manifest.as_deref().map(Dataset::load).transpose()?;
    let field = match (&a.field, &ds) {
        (Some(dir), _) => load_field_dir(dir)?,
        (None, Some(ds)) => ds.field()?,
        (None, None) => bail!("relight needs --field or --manifest"),
    };
    let w = match (&a.weights, &a.env) {
        (Some(p), _) => WeightsFile::load(p)?,
        (None, Some(env)) => {
            let ds = ds.as_ref().context("--env needs --manifest for the footprints")?;
            project_environment(&LatLongMap::new(load(env)?)?, &ds.footprints(cfg.noise_floor)?)?
        }
        (None, None) => bail!("relight needs --weights or --env"),
    };
    let g = parse_gamma(a.gamma.as_deref())?;
    let field = if g == DualGamma::IDENTITY {
        field
    } else {
        apply_dual_gamma_field(&field, g)
    };
    save(&relight(&field, &w)?, &a.output)
}

fn gamma_fit(a: GammaFitArgs) -> Result<()> {
    let cfg = JobConfig::load(a.config.as_deref())?;
    let ds = Dataset::load(&a.manifest)?;
    let w = WeightsFile::load(&a.weights)?;
    let frame = match &a.frame {
        Some(p) => load(p)?,
        None => ds.frame(0).context("no --frame given")?,
    };
    let mask = match &a.mask {
        Some(p) => load_mask(p).with_context(|| format!("loading {}", p.display()))?,
        None if a.frame.is_none() => ds.frame_mask(0)?,
        None => MaskImage::ones(frame.dims()),
    };
    let fit = fit_dual_gamma_with(&ds.field()?, &w, &frame, &mask, &cfg.gamma)?;
    info!("gamma fit took {} refinement iterations", fit.iterations);
    if let Some(out) = &a.output {
        write_json(out, &fit)?;
    }
    print_json(&fit)
}

fn exemplars(ds: &Dataset, w: &LightingWeights, g: DualGamma) -> Result<ExemplarSet> {
    let fields = ds.exemplar_fields()?;
    if fields.is_empty() {
        bail!("manifest has no exemplar poses");
    }
    Ok(ExemplarSet::synthesize(fields, w, g)?)
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = JobConfig::load(a.config.as_deref())?;
    let ds = Dataset::load(&a.manifest)?;
    let w = WeightsFile::load(&a.weights)?;
    let g = parse_gamma(a.gamma.as_deref())?;
    for (ex, fields) in ds.manifest.exemplars.iter().zip(ds.exemplar_fields()?) {
        let img = synth_tracking_frame(&fields, &w, g)?;
        let path = a
            .output_dir
            .join(format!("pose_{:03}.{}", ex.pose, cfg.output_format.extension()));
        save(&img, &path)?;
    }
    Ok(())
}

fn save_field(field: &ReflectanceField, dir: &Path, ext: &str) -> Result<()> {
    for (k, img) in field.olats().iter().enumerate() {
        save(img, &dir.join(format!("olat_{k:03}.{ext}")))?;
    }
    Ok(())
}

fn estimate(a: EstimateArgs) -> Result<()> {
    let cfg = JobConfig::load(a.config.as_deref())?;
    let ds = Dataset::load(&a.manifest)?;
    let w = WeightsFile::load(&a.weights)?;
    let g = parse_gamma(a.gamma.as_deref())?;
    let ex = exemplars(&ds, &w, g)?;

    let (frames, masks) = if a.frame.is_empty() {
        if !a.mask.is_empty() {
            bail!("--mask needs matching --frame arguments");
        }
        let n = ds.manifest.frames.len();
        let frames = (0..n).map(|i| ds.frame(i)).collect::<Result<Vec<_>>>()?;
        let masks = (0..n).map(|i| ds.frame_mask(i)).collect::<Result<Vec<_>>>()?;
        (frames, masks)
    } else {
        let frames = a.frame.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
        let masks = match a.mask.len() {
            0 => frames.iter().map(|f| MaskImage::ones(f.dims())).collect(),
            n if n == frames.len() => a
                .mask
                .iter()
                .map(|p| load_mask(p).with_context(|| format!("loading {}", p.display())))
                .collect::<Result<Vec<_>>>()?,
            n => bail!("{n} masks for {} frames", frames.len()),
        };
        (frames, masks)
    };
    if frames.is_empty() {
        bail!("no frames to estimate");
    }

    let results = estimate_video(&frames, &masks, &w, &ex, &cfg.estimation, cfg.loss)?;
    let ext = cfg.output_format.extension();
    let mut report = Vec::with_capacity(results.len());
    for (i, r) in results.iter().enumerate() {
        save_field(&r.field, &a.output_dir.join(format!("frame_{i:03}")), ext).with_context(|| format!("frame {i}"))?;
        report.push(json!({
            "frame": i,
            "temperature": r.temperature,
            "blend": r.blend,
            "loss_trace": r.loss_trace,
        }));
    }
    write_json(&a.output_dir.join("estimate.json"), &report)
}

fn loss(a: LossArgs) -> Result<()> {
    let cfg = JobConfig::load(a.config.as_deref())?;
    let pred = load_field_dir(&a.prediction)?;
    let gt = a.ground_truth.as_deref().map(load_field_dir).transpose()?;
    let frame = load(&a.frame)?;
    let w = WeightsFile::load(&a.weights)?;
    let mask = match &a.mask {
        Some(p) => load_mask(p).with_context(|| format!("loading {}", p.display()))?,
        None => MaskImage::ones(frame.dims()),
    };
    let fx = IdentityFeatures;
    let reconstruction = gt
        .as_ref()
        .map(|gt| reconstruction_loss(&pred, gt, &mask, &fx))
        .transpose()?;
    let rendering = rendering_loss(&relight(&pred, &w)?, &frame, &mask, &fx)?;
    let combined = combined_loss(&pred, gt.as_ref(), &frame, &w, &mask, &fx, cfg.loss)?;
    print_json(&json!({
        "reconstruction": reconstruction,
        "rendering": rendering,
        "combined": combined,
    }))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    if a.poses == 0 {
        bail!("--poses must be at least 1");
    }
    let g = DualGamma::new(a.gamma1, a.gamma2)?;
    let dims = ImageDims::new(a.size, a.size)?;
    let env_dims = ImageDims::new(2 * a.env_height, a.env_height)?;
    let directions = fibonacci_directions(a.basis_count);
    let out = &a.output_dir;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let scenes = (0..a.poses)
        .map(|_| {
            let albedo = [
                rng.random_range(0.3..0.9),
                rng.random_range(0.3..0.9),
                rng.random_range(0.3..0.9),
            ];
            SphereScene::new(albedo, rng.random_range(0.6..0.9), dims, [0.0; 3])
        })
        .collect::<Result<Vec<_>, _>>()?;
    let described: Vec<_> = scenes
        .iter()
        .map(|s| json!({"albedo": s.albedo, "radius": s.radius}))
        .collect();
    write_json(&out.join("scenes.json"), &described)?;
    let datasets = scenes
        .iter()
        .map(|s| generate_dataset(s, &directions, env_dims))
        .collect::<Result<Vec<_>, _>>()
        .context("basis directions")?;
    let encode = |f: &ReflectanceField| -> Result<ReflectanceField> {
        let olats = f.olats().par_iter().map(|img| img.map(|v| g.invert(v))).collect();
        Ok(ReflectanceField::new(olats)?)
    };

    // The subject's own capture is pose 0.
    let mut basis = Vec::with_capacity(a.basis_count);
    for (k, (img, probe)) in encode(&datasets[0].field)?
        .olats()
        .iter()
        .zip(&datasets[0].probes)
        .enumerate()
    {
        let entry = BasisEntry {
            id: k,
            olat: format!("olat/olat_{k:03}.pfm").into(),
            probe: format!("probes/probe_{k:03}.pfm").into(),
        };
        save(img, &out.join(&entry.olat))?;
        save(probe.image(), &out.join(&entry.probe))?;
        basis.push(entry);
    }

    let mut exemplars = Vec::with_capacity(a.poses);
    for (p, ds) in datasets.iter().enumerate() {
        let dir = PathBuf::from(format!("exemplars/pose_{p:03}"));
        let mut olats = Vec::with_capacity(a.basis_count);
        for (k, img) in encode(&ds.field)?.olats().iter().enumerate() {
            let rel = dir.join(format!("olat_{k:03}.pfm"));
            save(img, &out.join(&rel))?;
            olats.push(rel);
        }
        exemplars.push(ExemplarEntry {
            pose: p,
            olats,
            relit: None,
        });
    }

    // Interview lighting goes through the same files the probe and project
    // commands read, so the frames match what the pipeline recovers.
    let ball_path = out.join("interview_ball.pfm");
    let ball = render_mirror_ball(&overhead_environment(env_dims, 0.3)?, 8 * a.env_height)?;
    save(ball.image(), &ball_path)?;
    let interview = mirrorball_to_latlong(&MirrorBall::inscribed(load(&ball_path)?)?, env_dims)?;
    save(interview.image(), &out.join("interview_env.pfm"))?;
    let interview = LatLongMap::new(load(&out.join("interview_env.pfm"))?)?;
    let w = project_environment(&interview, &datasets[0].footprints)?;

    save(
        smooth_random_environment(a.seed, env_dims)?.image(),
        &out.join("environments/target.pfm"),
    )?;

    let mut frames = Vec::with_capacity(a.frames);
    for i in 0..a.frames {
        let p = i % a.poses;
        let frame = PathBuf::from(format!("frames/frame_{i:03}.pfm"));
        save(&relight(&datasets[p].field, &w)?, &out.join(&frame))?;
        frames.push(frame);
        let cover = scenes[p].coverage();
        let mask = MaskImage::new(dims, cover.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect())?;
        let mask_path = out.join(format!("masks/mask_{i:03}.png"));
        std::fs::create_dir_all(out.join("masks"))?;
        save_mask(&mask, &mask_path).with_context(|| format!("writing {}", mask_path.display()))?;
        save_field(&datasets[p].field, &out.join(format!("truth/frame_{i:03}")), "pfm")?;
    }

    let manifest = DatasetManifest {
        dims,
        basis,
        exemplars,
        interview_probe: Some("interview_ball.pfm".into()),
        mask_dir: Some("masks".into()),
        frames,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    info!(
        "simulated {} lights, {} poses, {} frames in {}",
        a.basis_count,
        a.poses,
        a.frames,
        out.display()
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_argument_forms() {
        assert_eq!(parse_gamma(None).unwrap(), DualGamma::IDENTITY);
        assert_eq!(
            parse_gamma(Some("1.5, 0.7")).unwrap(),
            DualGamma::new(1.5, 0.7).unwrap()
        );
        assert!(parse_gamma(Some("9,1")).is_err());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.json");
        std::fs::write(&p, r#"{"gamma1": 2.0, "gamma2": 0.5, "residual": 0.0}"#).unwrap();
        assert_eq!(parse_gamma(p.to_str()).unwrap(), DualGamma::new(2.0, 0.5).unwrap());
        assert!(parse_gamma(Some("/nonexistent/g.json")).is_err());
    }
}
