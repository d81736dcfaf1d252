//! Dual-gamma camera linearization and its two-parameter fit.
//!
//! The curve blends a lower and an upper power law by pixel brightness:
//!
//! ```text
//! I' = (1 − I)·I^γ1 + I·I^γ2
//! ```
//!
//! It fixes 0 and 1 for every parameter pair and reduces to `I^g` when
//! `γ1 = γ2 = g`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{ImageError, ImageF, MaskImage};
use crate::probe::LightingWeights;
use crate::relight::{ReflectanceField, RelightError};

pub const GAMMA_MIN: f64 = 0.2;
pub const GAMMA_MAX: f64 = 5.0;

#[derive(Debug, Error)]
pub enum GammaError {
    #[error("gamma pair ({0}, {1}) outside [{GAMMA_MIN}, {GAMMA_MAX}]")]
    OutOfRange(f64, f64),
    #[error("invalid search bounds [{0}, {1}]")]
    InvalidBounds(f64, f64),
    #[error("mask has zero mass")]
    EmptyMask,
    #[error("loss is not finite at gamma ({0}, {1})")]
    NonFiniteLoss(f64, f64),
    #[error(transparent)]
    Relight(#[from] RelightError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Exponents of the lower and upper curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualGamma {
    pub gamma1: f64,
    pub gamma2: f64,
}

impl DualGamma {
    pub const IDENTITY: DualGamma = DualGamma {
        gamma1: 1.0,
        gamma2: 1.0,
    };

    pub fn new(gamma1: f64, gamma2: f64) -> Result<Self, GammaError> {
        let ok = |g: f64| (GAMMA_MIN..=GAMMA_MAX).contains(&g);
        if !ok(gamma1) || !ok(gamma2) {
            return Err(GammaError::OutOfRange(gamma1, gamma2));
        }
        Ok(Self { gamma1, gamma2 })
    }

    /// Evaluates the curve at `i ∈ [0, 1]`.
    pub fn eval(&self, i: f64) -> f64 {
        (1.0 - i) * i.powf(self.gamma1) + i * i.powf(self.gamma2)
    }

    /// Numerical inverse on `[0, 1]`: safeguarded Newton iteration.
    ///
    /// Exact where the curve is monotone; elsewhere one preimage is returned.
    pub fn invert(&self, y: f64) -> f64 {
        let y = y.clamp(0.0, 1.0);
        if y == 0.0 || y == 1.0 {
            return y;
        }
        // Newton steps kept inside a shrinking bracket, bisecting when a step
        // would leave it.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut x = y;
        for _ in 0..100 {
            let fx = self.eval(x) - y;
            if fx == 0.0 {
                return x;
            }
            if fx < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let (a, b) = (self.gamma1, self.gamma2);
            let slope = -x.powf(a) + (1.0 - x) * a * x.powf(a - 1.0) + (b + 1.0) * x.powf(b);
            let newton = x - fx / slope;
            let next = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if next == x || hi - lo <= f64::EPSILON * hi {
                return next;
            }
            x = next;
        }
        x
    }
}

impl Default for DualGamma {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// Result of [`apply_dual_gamma_counted`].
#[derive(Debug, Clone)]
pub struct Linearized {
    pub image: ImageF,
    /// Samples outside `[0, 1]` that were clamped before evaluation.
    pub clamped: usize,
}

pub fn apply_dual_gamma(img: &ImageF, g: DualGamma) -> ImageF {
    let out = apply_dual_gamma_counted(img, g);
    if out.clamped > 0 {
        log::warn!("dual gamma: clamped {} samples into [0, 1]", out.clamped);
    }
    out.image
}

pub fn apply_dual_gamma_counted(img: &ImageF, g: DualGamma) -> Linearized {
    let clamped = img.data().iter().filter(|v| !(0.0..=1.0).contains(*v)).count();
    Linearized {
        image: img.map(|v| g.eval(v.clamp(0.0, 1.0))),
        clamped,
    }
}

/// Applies the curve to every OLAT image of a field.
pub fn apply_dual_gamma_field(field: &ReflectanceField, g: DualGamma) -> ReflectanceField {
    field.map_images(|img| apply_dual_gamma(img, g))
}

/// Search settings for [`fit_dual_gamma_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaFitConfig {
    pub lower: f64,
    pub upper: f64,
    /// Points per axis of the coarse grid.
    pub grid: usize,
    pub max_iterations: usize,
    /// Simplex diameter at which refinement stops.
    pub tolerance: f64,
}

impl Default for GammaFitConfig {
    fn default() -> Self {
        Self {
            lower: GAMMA_MIN,
            upper: GAMMA_MAX,
            grid: 11,
            max_iterations: 200,
            tolerance: 1e-4,
        }
    }
}

impl GammaFitConfig {
    pub fn validate(&self) -> Result<(), GammaError> {
        if !(GAMMA_MIN <= self.lower && self.lower < self.upper && self.upper <= GAMMA_MAX) || self.grid < 2 {
            return Err(GammaError::InvalidBounds(self.lower, self.upper));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    #[serde(flatten)]
    pub gamma: DualGamma,
    /// Masked mean squared error at `gamma`.
    pub residual: f64,
    #[serde(skip)]
    pub iterations: usize,
}

/// Masked MSE between the linearized, relit field and `target`.
pub fn gamma_fit_residual(
    olats: &ReflectanceField,
    weights: &LightingWeights,
    target: &ImageF,
    mask: &MaskImage,
    g: DualGamma,
) -> Result<f64, GammaError> {
    FitProblem::new(olats, weights, target, mask)?.residual(g)
}

/// The fit restricted to samples with nonzero mask weight, with `ln I`
/// precomputed so each curve evaluation costs two `exp`.
struct FitProblem {
    /// `(I, ln I)` per basis, sample-major within each basis.
    samples: Vec<Vec<(f64, f64)>>,
    weights: Vec<[f64; 3]>,
    target: Vec<f64>,
    /// Mask weight per sample.
    mask: Vec<f64>,
    mass: f64,
}

const CHUNK: usize = 4096;

impl FitProblem {
    fn new(
        olats: &ReflectanceField,
        weights: &LightingWeights,
        target: &ImageF,
        mask: &MaskImage,
    ) -> Result<Self, GammaError> {
        if weights.basis_count() != olats.len() {
            return Err(RelightError::CountMismatch {
                weights: weights.basis_count(),
                field: olats.len(),
            }
            .into());
        }
        mask.ensure_matches(olats.dims())?;
        mask.ensure_matches(target.dims())?;
        let mass = mask.mass();
        if !(mass > 0.0) {
            return Err(GammaError::EmptyMask);
        }
        let active: Vec<usize> = (0..mask.data().len())
            .filter(|&p| mask.data()[p] > 0.0)
            .flat_map(|p| [3 * p, 3 * p + 1, 3 * p + 2])
            .collect();
        let samples = olats
            .olats()
            .iter()
            .map(|img| {
                active
                    .iter()
                    .map(|&i| {
                        let v = img.data()[i].clamp(0.0, 1.0);
                        (v, v.ln())
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            samples,
            weights: weights.as_slice().to_vec(),
            target: active.iter().map(|&i| target.data()[i]).collect(),
            mask: active.iter().map(|&i| mask.data()[i / 3]).collect(),
            mass,
        })
    }

    fn residual(&self, g: DualGamma) -> Result<f64, GammaError> {
        let n = self.target.len();
        // Fixed chunks summed in order keep the result independent of the
        // thread count.
        let partials: Vec<f64> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let range = chunk * CHUNK..((chunk + 1) * CHUNK).min(n);
                let mut acc = vec![0.0; range.len()];
                for (samples, w) in self.samples.iter().zip(&self.weights) {
                    for (j, &(v, ln)) in samples[range.clone()].iter().enumerate() {
                        let c = (range.start + j) % 3;
                        let lin = (1.0 - v) * (g.gamma1 * ln).exp() + v * (g.gamma2 * ln).exp();
                        acc[j] += w[c] * lin;
                    }
                }
                range
                    .zip(acc)
                    .map(|(i, a)| self.mask[i] * (a - self.target[i]).powi(2))
                    .sum::<f64>()
            })
            .collect();
        Ok(partials.iter().sum::<f64>() / (3.0 * self.mass))
    }
}

pub fn fit_dual_gamma(
    olats: &ReflectanceField,
    weights: &LightingWeights,
    target: &ImageF,
    mask: &MaskImage,
) -> Result<GammaFit, GammaError> {
    fit_dual_gamma_with(olats, weights, target, mask, &GammaFitConfig::default())
}

/// Fits (γ1, γ2) with a coarse grid followed by Nelder–Mead refinement.
pub fn fit_dual_gamma_with(
    olats: &ReflectanceField,
    weights: &LightingWeights,
    target: &ImageF,
    mask: &MaskImage,
    cfg: &GammaFitConfig,
) -> Result<GammaFit, GammaError> {
    cfg.validate()?;
    if !(mask.mass() > 0.0) {
        return Err(GammaError::EmptyMask);
    }
    let problem = FitProblem::new(olats, weights, target, mask)?;
    let loss = |p: [f64; 2]| -> Result<f64, GammaError> {
        let g = DualGamma {
            gamma1: p[0],
            gamma2: p[1],
        };
        let r = problem.residual(g)?;
        if !r.is_finite() {
            return Err(GammaError::NonFiniteLoss(p[0], p[1]));
        }
        Ok(r)
    };

    let step = (cfg.upper - cfg.lower) / (cfg.grid - 1) as f64;
    let n = cfg.grid;
    let at = |i: usize, j: usize| [cfg.lower + i as f64 * step, cfg.lower + j as f64 * step];
    let mut grid = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            grid[i * n + j] = loss(at(i, j))?;
        }
    }

    // The residual surface can have several basins along the γ1/γ2 trade-off,
    // so every grid local minimum is refined.
    let mut starts = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let r = grid[i * n + j];
            let lowest = (i.saturating_sub(1)..(i + 2).min(n))
                .flat_map(|a| (j.saturating_sub(1)..(j + 2).min(n)).map(move |b| (a, b)))
                .all(|(a, b)| grid[a * n + b] >= r);
            if lowest {
                starts.push((at(i, j), r));
            }
        }
    }

    let mut best: Option<([f64; 2], f64)> = None;
    let mut iterations = 0;
    for (p, r) in starts {
        let (point, residual, it) = nelder_mead(loss, p, r, 0.5 * step, cfg)?;
        iterations += it;
        if best.is_none_or(|b| residual < b.1) {
            best = Some((point, residual));
        }
    }
    let (point, residual) = best.expect("a finite grid has a minimum");
    Ok(GammaFit {
        gamma: DualGamma {
            gamma1: point[0],
            gamma2: point[1],
        },
        residual,
        iterations,
    })
}

/// Box-constrained 2-D Nelder–Mead. Vertices are clamped into the box, which
/// can flatten the simplex against a wall, so a converged run is restarted
/// from its best vertex until it stops moving or the iteration budget is
/// spent. The best vertex never gets worse, so the result is no worse than
/// `start`.
fn nelder_mead<F>(
    f: F,
    start: [f64; 2],
    start_value: f64,
    initial_step: f64,
    cfg: &GammaFitConfig,
) -> Result<([f64; 2], f64, usize), GammaError>
where
    F: Fn([f64; 2]) -> Result<f64, GammaError>,
{
    let (mut point, mut value, mut used) = (start, start_value, 0);
    while used < cfg.max_iterations {
        let (p, v, it) = nelder_mead_run(&f, point, value, initial_step, cfg.max_iterations - used, cfg)?;
        let moved = ((p[0] - point[0]).powi(2) + (p[1] - point[1]).powi(2)).sqrt();
        (point, value, used) = (p, v, used + it);
        if moved < cfg.tolerance {
            break;
        }
    }
    Ok((point, value, used))
}

fn nelder_mead_run<F>(
    f: &F,
    start: [f64; 2],
    start_value: f64,
    initial_step: f64,
    budget: usize,
    cfg: &GammaFitConfig,
) -> Result<([f64; 2], f64, usize), GammaError>
where
    F: Fn([f64; 2]) -> Result<f64, GammaError>,
{
    let clamp = |p: [f64; 2]| p.map(|v| v.clamp(cfg.lower, cfg.upper));
    // Offsets point inward so the clamped simplex stays non-degenerate.
    let offset = |v: f64| {
        if v + initial_step <= cfg.upper {
            initial_step
        } else {
            -initial_step
        }
    };
    let p1 = clamp([start[0] + offset(start[0]), start[1]]);
    let p2 = clamp([start[0], start[1] + offset(start[1])]);
    let mut simplex = [(start, start_value), (p1, f(p1)?), (p2, f(p2)?)];

    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| clamp([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();

    let mut iterations = 0;
    while iterations < budget {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = dist(simplex[0].0, simplex[1].0)
            .max(dist(simplex[0].0, simplex[2].0))
            .max(dist(simplex[1].0, simplex[2].0));
        if diameter < cfg.tolerance {
            break;
        }
        iterations += 1;

        let centroid = [
            0.5 * (simplex[0].0[0] + simplex[1].0[0]),
            0.5 * (simplex[0].0[1] + simplex[1].0[1]),
        ];
        let worst = simplex[2];
        let reflected = lerp(centroid, worst.0, -1.0);
        let fr = f(reflected)?;
        if fr < simplex[0].1 {
            let expanded = lerp(centroid, worst.0, -2.0);
            let fe = f(expanded)?;
            simplex[2] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[1].1 {
            simplex[2] = (reflected, fr);
        } else {
            let contracted = if fr < worst.1 {
                lerp(centroid, reflected, 0.5)
            } else {
                lerp(centroid, worst.0, 0.5)
            };
            let fc = f(contracted)?;
            if fc < worst.1.min(fr) {
                simplex[2] = (contracted, fc);
            } else {
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let p = lerp(best, v.0, 0.5);
                    *v = (p, f(p)?);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok((simplex[0].0, simplex[0].1, iterations))
}
