//! Per-frame reflectance-field estimation from a single lit frame.
//!
//! Relighting is linear in the field, so one frame constrains each pixel's
//! N-vector of OLAT values only along the lighting weights. The missing
//! directions come from an exemplar prior: the frame is compared against
//! every exemplar's synthetic tracking frame, the exemplar fields are
//! blended by a softmax of those distances, and the blend is refined
//! against the frame by per-pixel ridge regression (closed form) or by
//! gradient descent on the same objective plus optional supervision.

use rayon::prelude::*;
use thiserror::Error;

use crate::gamma::DualGamma;
use crate::imagecore::{ImageDims, ImageError, ImageF, MaskImage};
use crate::probe::LightingWeights;
use crate::relight::{relight, synth_tracking_frame, LossWeights, ReflectanceField, RelightError};

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("exemplar set is empty")]
    NoExemplars,
    #[error("exemplar {index} has {found_n} OLATs at {found_dims}, expected {expected_n} at {expected_dims}")]
    ExemplarShape {
        index: usize,
        expected_n: usize,
        expected_dims: ImageDims,
        found_n: usize,
        found_dims: ImageDims,
    },
    #[error("{blend} blend weights for {exemplars} exemplars")]
    BlendLength { blend: usize, exemplars: usize },
    #[error("blend weights sum to {0}, expected 1")]
    BlendNotNormalized(f64),
    #[error("channel {channel} has zero lighting weight and lambda_prior = 0")]
    Degenerate { channel: usize },
    #[error("invalid estimation config: {0}")]
    InvalidConfig(String),
    #[error("mask has zero mass")]
    EmptyMask,
    #[error("iterative estimate diverged: loss rose for {steps} consecutive steps (last {loss})")]
    Diverged { steps: usize, loss: f64 },
    #[error("ground truth must match the prior field's shape")]
    GroundTruthShape,
    #[error("{frames} frames but {masks} masks")]
    MaskCount { frames: usize, masks: usize },
    #[error("frame {index}: {source}")]
    Frame {
        index: usize,
        #[source]
        source: Box<EstimateError>,
    },
    #[error(transparent)]
    Relight(#[from] RelightError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// A static pose: its measured field and its synthetic tracking frame.
#[derive(Debug, Clone)]
pub struct ExemplarPose {
    pub field: ReflectanceField,
    pub relit: ImageF,
}

#[derive(Debug, Clone)]
pub struct ExemplarSet {
    poses: Vec<ExemplarPose>,
}

impl ExemplarSet {
    pub fn new(poses: Vec<ExemplarPose>) -> Result<Self, EstimateError> {
        let first = poses.first().ok_or(EstimateError::NoExemplars)?;
        let (n, dims) = (first.field.len(), first.field.dims());
        for (index, pose) in poses.iter().enumerate() {
            let (found_n, found_dims) = (pose.field.len(), pose.field.dims());
            if found_n != n || found_dims != dims || pose.relit.dims() != dims {
                return Err(EstimateError::ExemplarShape {
                    index,
                    expected_n: n,
                    expected_dims: dims,
                    found_n,
                    found_dims: pose.relit.dims(),
                });
            }
        }
        Ok(Self { poses })
    }

    /// Builds the set from raw exemplar fields: each field is linearized with
    /// `g`, and its tracking frame is rendered under `w`.
    pub fn synthesize(fields: Vec<ReflectanceField>, w: &LightingWeights, g: DualGamma) -> Result<Self, EstimateError> {
        let poses = fields
            .into_iter()
            .map(|raw| {
                let relit = synth_tracking_frame(&raw, w, g)?;
                let field = crate::gamma::apply_dual_gamma_field(&raw, g);
                Ok(ExemplarPose { field, relit })
            })
            .collect::<Result<Vec<_>, EstimateError>>()?;
        Self::new(poses)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn poses(&self) -> &[ExemplarPose] {
        &self.poses
    }

    pub fn basis_count(&self) -> usize {
        self.poses[0].field.len()
    }

    pub fn dims(&self) -> ImageDims {
        self.poses[0].field.dims()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    #[default]
    Ridge,
    Iterative,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationConfig {
    pub lambda_prior: f64,
    /// Softmax temperature; `None` uses 0.01 × the frame's mean masked energy.
    pub blend_temperature: Option<f64>,
    pub iterations: usize,
    /// Gradient step; `None` picks a step that keeps descent monotone.
    pub step_size: Option<f64>,
    pub solver: Solver,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            lambda_prior: 0.1,
            blend_temperature: None,
            iterations: 200,
            step_size: None,
            solver: Solver::Ridge,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<(), EstimateError> {
        let bad = |msg: String| Err(EstimateError::InvalidConfig(msg));
        if !(self.lambda_prior >= 0.0 && self.lambda_prior.is_finite()) {
            return bad(format!("lambda_prior = {}", self.lambda_prior));
        }
        if let Some(t) = self.blend_temperature {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("blend_temperature = {t}"));
            }
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("step_size = {s}"));
            }
        }
        Ok(())
    }

    /// 0.1 over the largest curvature of the iterative objective,
    /// `λ2·max_c ||w_c||² + λ_prior + λ1`.
    pub fn default_step(&self, w: &LightingWeights, lw: LossWeights) -> f64 {
        let max_norm = (0..3)
            .map(|c| w.channel(c).iter().map(|v| v * v).sum::<f64>())
            .fold(0.0, f64::max);
        0.1 / (lw.lambda2 * max_norm + self.lambda_prior + lw.lambda1)
    }
}

fn masked_sq_sum(a: &ImageF, b: Option<&ImageF>, mask: &MaskImage) -> f64 {
    let zeros = [0.0; 3];
    a.data()
        .chunks_exact(3)
        .enumerate()
        .zip(mask.data())
        .map(|((i, p), &m)| {
            let q = b.map_or(&zeros[..], |b| &b.data()[i * 3..i * 3 + 3]);
            m * ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2))
        })
        .sum()
}

fn checked_mass(mask: &MaskImage, dims: ImageDims) -> Result<f64, EstimateError> {
    mask.ensure_matches(dims)?;
    let mass = mask.mass();
    if !(mass > 0.0) {
        return Err(EstimateError::EmptyMask);
    }
    Ok(mass)
}

/// `0.01 × Σ m·||frame||² / (3·mass)`.
pub fn default_temperature(frame: &ImageF, mask: &MaskImage) -> Result<f64, EstimateError> {
    let mass = checked_mass(mask, frame.dims())?;
    let energy = masked_sq_sum(frame, None, mask) / (3.0 * mass);
    Ok(if energy > 0.0 { 0.01 * energy } else { f64::MIN_POSITIVE })
}

/// Softmax of `−MSE(frame, relit_p)/temperature` over the exemplars, where
/// MSE is `Σ m·||·||² / (3·mass)`.
pub fn exemplar_blend(
    frame: &ImageF,
    ex: &ExemplarSet,
    mask: &MaskImage,
    temperature: f64,
) -> Result<Vec<f64>, EstimateError> {
    if !(temperature > 0.0) {
        return Err(EstimateError::InvalidConfig(format!("blend temperature {temperature}")));
    }
    let mass = checked_mass(mask, frame.dims())?;
    let logits: Vec<f64> = ex
        .poses
        .iter()
        .map(|p| {
            mask.ensure_matches(p.relit.dims())?;
            Ok(-masked_sq_sum(frame, Some(&p.relit), mask) / (3.0 * mass) / temperature)
        })
        .collect::<Result<_, EstimateError>>()?;
    let peak = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Convex combination `Σ_p b_p·field_p`.
pub fn prior_field(blend: &[f64], ex: &ExemplarSet) -> Result<ReflectanceField, EstimateError> {
    if blend.len() != ex.len() {
        return Err(EstimateError::BlendLength {
            blend: blend.len(),
            exemplars: ex.len(),
        });
    }
    let sum: f64 = blend.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || blend.iter().any(|b| !(*b >= 0.0)) {
        return Err(EstimateError::BlendNotNormalized(sum));
    }
    let dims = ex.dims();
    let olats = (0..ex.basis_count())
        .map(|k| {
            let mut acc = vec![0.0; dims.pixel_count() * 3];
            for (b, pose) in blend.iter().zip(&ex.poses) {
                if *b == 0.0 {
                    continue;
                }
                for (a, v) in acc.iter_mut().zip(pose.field.olat(k).data()) {
                    *a += b * v;
                }
            }
            ImageF::from_dims(dims, acc)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReflectanceField::new(olats)?)
}

fn check_weights(w: &LightingWeights, r0: &ReflectanceField) -> Result<(), EstimateError> {
    if w.basis_count() != r0.len() {
        return Err(RelightError::CountMismatch {
            weights: w.basis_count(),
            field: r0.len(),
        }
        .into());
    }
    Ok(())
}

/// Per pixel and channel, the minimizer of
/// `m·(w_c·r − i)² + λ·||r − r0||²`:
///
/// ```text
/// r = r0 + m·w_c·(i − w_c·r0) / (m·||w_c||² + λ)
/// ```
///
/// Pixels with zero mask weight keep `r0`.
pub fn estimate_field_ridge(
    frame: &ImageF,
    w: &LightingWeights,
    r0: &ReflectanceField,
    mask: &MaskImage,
    lambda_prior: f64,
) -> Result<ReflectanceField, EstimateError> {
    check_weights(w, r0)?;
    let dims = r0.dims();
    if frame.dims() != dims {
        return Err(ImageError::DimsMismatch {
            left: frame.dims(),
            right: dims,
        }
        .into());
    }
    mask.ensure_matches(dims)?;
    if !(lambda_prior >= 0.0 && lambda_prior.is_finite()) {
        return Err(EstimateError::InvalidConfig(format!("lambda_prior = {lambda_prior}")));
    }

    let n = r0.len();
    let wc: [Vec<f64>; 3] = [w.channel(0), w.channel(1), w.channel(2)];
    let norms: [f64; 3] = wc.clone().map(|v| v.iter().map(|x| x * x).sum());
    if lambda_prior == 0.0 {
        if let Some(channel) = (0..3).find(|&c| norms[c] == 0.0) {
            return Err(EstimateError::Degenerate { channel });
        }
    }

    let mut out: Vec<Vec<f64>> = r0.olats().iter().map(|img| img.data().to_vec()).collect();
    let mut r = vec![0.0; n];
    for p in 0..dims.pixel_count() {
        let m = mask.data()[p];
        if m == 0.0 {
            continue;
        }
        for c in 0..3 {
            let idx = p * 3 + c;
            let denom = m * norms[c] + lambda_prior;
            if denom == 0.0 {
                continue;
            }
            for k in 0..n {
                r[k] = r0.olat(k).data()[idx];
            }
            let predicted: f64 = wc[c].iter().zip(&r).map(|(a, b)| a * b).sum();
            let scale = m * (frame.data()[idx] - predicted) / denom;
            for k in 0..n {
                out[k][idx] = r[k] + scale * wc[c][k];
            }
        }
    }
    let olats = out
        .into_iter()
        .map(|data| ImageF::from_dims(dims, data))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReflectanceField::new(olats)?)
}

/// Output of [`estimate_field_iterative`].
#[derive(Debug, Clone)]
pub struct IterativeEstimate {
    pub field: ReflectanceField,
    /// Objective before the first step and after every step.
    pub loss_trace: Vec<f64>,
}

/// Objective minimized by [`estimate_field_iterative`]:
///
/// ```text
/// λ2·Σ_p m·||relight(R) − frame||² + λ_prior·||R − r0||² + λ1·Σ_k Σ_p m·||R_k − gt_k||²
/// ```
pub fn iterative_objective(
    field: &ReflectanceField,
    frame: &ImageF,
    w: &LightingWeights,
    r0: &ReflectanceField,
    mask: &MaskImage,
    lambda_prior: f64,
    gt: Option<&ReflectanceField>,
    lw: LossWeights,
) -> Result<f64, EstimateError> {
    let relit = relight(field, w)?;
    let mut j = lw.lambda2 * masked_sq_sum(&relit, Some(frame), mask);
    let prior: f64 = field
        .olats()
        .iter()
        .zip(r0.olats())
        .flat_map(|(a, b)| a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)))
        .sum();
    j += lambda_prior * prior;
    if let Some(gt) = gt {
        if lw.lambda1 > 0.0 {
            let rec: f64 = field
                .olats()
                .iter()
                .zip(gt.olats())
                .map(|(a, b)| masked_sq_sum(a, Some(b), mask))
                .sum();
            j += lw.lambda1 * rec;
        }
    }
    Ok(j)
}

const DIVERGENCE_STEPS: usize = 5;
/// Relative objective change treated as convergence.
const CONVERGED_CHANGE: f64 = 1e-13;

/// Fixed-step gradient descent on [`iterative_objective`] starting at `r0`.
/// Stops after `cfg.iterations` steps or once a step changes the objective
/// by less than 1e-13 relative; five rising steps in a row are an error.
///
/// With `λ1 = 0` and `λ2 = 1` the minimizer is the ridge solution with the
/// same `λ_prior`.
pub fn estimate_field_iterative(
    frame: &ImageF,
    w: &LightingWeights,
    r0: &ReflectanceField,
    mask: &MaskImage,
    cfg: &EstimationConfig,
    gt: Option<&ReflectanceField>,
    lw: LossWeights,
) -> Result<IterativeEstimate, EstimateError> {
    cfg.validate()?;
    check_weights(w, r0)?;
    let dims = r0.dims();
    mask.ensure_matches(dims)?;
    mask.ensure_matches(frame.dims())?;
    if let Some(gt) = gt {
        if gt.len() != r0.len() || gt.dims() != dims {
            return Err(EstimateError::GroundTruthShape);
        }
    }
    let lambda1 = if gt.is_some() { lw.lambda1 } else { 0.0 };
    let lw = LossWeights {
        lambda1,
        lambda2: lw.lambda2,
    };
    let step = cfg.step_size.unwrap_or_else(|| cfg.default_step(w, lw));
    let n = r0.len();

    let mut field: Vec<Vec<f64>> = r0.olats().iter().map(|img| img.data().to_vec()).collect();
    let as_field = |data: &[Vec<f64>]| -> Result<ReflectanceField, EstimateError> {
        let olats = data
            .iter()
            .map(|d| ImageF::from_dims(dims, d.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ReflectanceField::new(olats)?)
    };

    let mut current = r0.clone();
    let mut trace = vec![iterative_objective(
        &current,
        frame,
        w,
        r0,
        mask,
        cfg.lambda_prior,
        gt,
        lw,
    )?];
    let mut rising = 0;
    let mut next = field.clone();
    for _ in 0..cfg.iterations {
        let relit = relight(&current, w)?;
        for p in 0..dims.pixel_count() {
            let m = mask.data()[p];
            for c in 0..3 {
                let idx = p * 3 + c;
                let residual = 2.0 * lw.lambda2 * m * (relit.data()[idx] - frame.data()[idx]);
                for k in 0..n {
                    let mut g =
                        residual * w.get(k)[c] + 2.0 * cfg.lambda_prior * (field[k][idx] - r0.olat(k).data()[idx]);
                    if let Some(gt) = gt {
                        g += 2.0 * lw.lambda1 * m * (field[k][idx] - gt.olat(k).data()[idx]);
                    }
                    next[k][idx] = field[k][idx] - step * g;
                }
            }
        }
        if next.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EstimateError::Diverged {
                steps: rising + 1,
                loss: f64::INFINITY,
            });
        }
        let candidate = as_field(&next)?;
        let loss = iterative_objective(&candidate, frame, w, r0, mask, cfg.lambda_prior, gt, lw)?;
        let prev = *trace.last().expect("trace is non-empty");
        if (prev - loss).abs() <= CONVERGED_CHANGE * prev {
            // The step is below the objective's rounding noise.
            if loss <= prev {
                current = candidate;
                trace.push(loss);
            }
            break;
        }
        rising = if loss > prev { rising + 1 } else { 0 };
        std::mem::swap(&mut field, &mut next);
        current = candidate;
        trace.push(loss);
        if rising >= DIVERGENCE_STEPS {
            return Err(EstimateError::Diverged { steps: rising, loss });
        }
    }
    Ok(IterativeEstimate {
        field: current,
        loss_trace: trace,
    })
}

/// Result for one video frame.
#[derive(Debug, Clone)]
pub struct FrameEstimate {
    /// Estimated field, clamped to nonnegative radiance.
    pub field: ReflectanceField,
    pub blend: Vec<f64>,
    pub temperature: f64,
    /// Iterative solver only; empty for the ridge solver.
    pub loss_trace: Vec<f64>,
}

/// Blend → prior → solve for one frame.
pub fn estimate_frame(
    frame: &ImageF,
    mask: &MaskImage,
    w: &LightingWeights,
    ex: &ExemplarSet,
    cfg: &EstimationConfig,
    lw: LossWeights,
) -> Result<FrameEstimate, EstimateError> {
    cfg.validate()?;
    let temperature = match cfg.blend_temperature {
        Some(t) => t,
        None => default_temperature(frame, mask)?,
    };
    let blend = exemplar_blend(frame, ex, mask, temperature)?;
    let r0 = prior_field(&blend, ex)?;
    let (field, loss_trace) = match cfg.solver {
        Solver::Ridge => (estimate_field_ridge(frame, w, &r0, mask, cfg.lambda_prior)?, Vec::new()),
        Solver::Iterative => {
            let lw = LossWeights {
                lambda1: 0.0,
                lambda2: lw.lambda2,
            };
            let est = estimate_field_iterative(frame, w, &r0, mask, cfg, None, lw)?;
            (est.field, est.loss_trace)
        }
    };
    Ok(FrameEstimate {
        field: field.map_images(ImageF::clamp_nonnegative),
        blend,
        temperature,
        loss_trace,
    })
}

/// Estimates every frame independently, in parallel on the current rayon pool.
pub fn estimate_video(
    frames: &[ImageF],
    masks: &[MaskImage],
    w: &LightingWeights,
    ex: &ExemplarSet,
    cfg: &EstimationConfig,
    lw: LossWeights,
) -> Result<Vec<FrameEstimate>, EstimateError> {
    if frames.len() != masks.len() {
        return Err(EstimateError::MaskCount {
            frames: frames.len(),
            masks: masks.len(),
        });
    }
    frames
        .par_iter()
        .zip(masks)
        .enumerate()
        .map(|(index, (frame, mask))| {
            estimate_frame(frame, mask, w, ex, cfg, lw).map_err(|e| EstimateError::Frame {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}
