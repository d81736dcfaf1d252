//! Image-based relighting, masked feature losses, and the analytic
//! gradient of the pixel rendering loss.

use thiserror::Error;

use crate::gamma::{apply_dual_gamma_field, DualGamma};
use crate::imagecore::{ImageDims, ImageError, ImageF, MaskImage};
use crate::probe::LightingWeights;

#[derive(Debug, Error)]
pub enum RelightError {
    #[error("reflectance field needs at least one OLAT image")]
    EmptyField,
    #[error("OLAT {index} is {found}, expected {expected}")]
    OlatDims {
        index: usize,
        expected: ImageDims,
        found: ImageDims,
    },
    #[error("{weights} lighting weights for a field of {field} OLAT images")]
    CountMismatch { weights: usize, field: usize },
    #[error("fields have {0} and {1} OLAT images")]
    FieldLengthMismatch(usize, usize),
    #[error("mask has zero mass")]
    EmptyMask,
    #[error("feature extractor returned {found} maps, declared {declared}")]
    FeatureCount { declared: usize, found: usize },
    #[error("invalid loss weights ({0}, {1}): both must be >= 0 and not both zero")]
    InvalidLossWeights(f64, f64),
    #[error("ground-truth field required when lambda1 > 0")]
    MissingGroundTruth,
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// A stack of N OLAT images sharing dimensions; image `k` is basis `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectanceField {
    olats: Vec<ImageF>,
}

impl ReflectanceField {
    pub fn new(olats: Vec<ImageF>) -> Result<Self, RelightError> {
        let first = olats.first().ok_or(RelightError::EmptyField)?.dims();
        if let Some((index, img)) = olats.iter().enumerate().find(|(_, img)| img.dims() != first) {
            return Err(RelightError::OlatDims {
                index,
                expected: first,
                found: img.dims(),
            });
        }
        Ok(Self { olats })
    }

    pub fn len(&self) -> usize {
        self.olats.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dims(&self) -> ImageDims {
        self.olats[0].dims()
    }

    pub fn olats(&self) -> &[ImageF] {
        &self.olats
    }

    pub fn olat(&self, k: usize) -> &ImageF {
        &self.olats[k]
    }

    pub fn into_olats(self) -> Vec<ImageF> {
        self.olats
    }

    pub fn map_images(&self, f: impl Fn(&ImageF) -> ImageF) -> ReflectanceField {
        let olats: Vec<ImageF> = self.olats.iter().map(f).collect();
        ReflectanceField::new(olats).expect("map_images must preserve dimensions")
    }

    pub fn max_abs_diff(&self, other: &ReflectanceField) -> Result<f64, RelightError> {
        self.ensure_same_shape(other)?;
        let mut worst = 0.0f64;
        for (a, b) in self.olats.iter().zip(&other.olats) {
            worst = worst.max(a.max_abs_diff(b)?);
        }
        Ok(worst)
    }

    fn ensure_same_shape(&self, other: &ReflectanceField) -> Result<(), RelightError> {
        if self.len() != other.len() {
            return Err(RelightError::FieldLengthMismatch(self.len(), other.len()));
        }
        if self.dims() != other.dims() {
            return Err(ImageError::DimsMismatch {
                left: self.dims(),
                right: other.dims(),
            }
            .into());
        }
        Ok(())
    }
}

fn check_count(field: &ReflectanceField, w: &LightingWeights) -> Result<(), RelightError> {
    if w.basis_count() != field.len() {
        return Err(RelightError::CountMismatch {
            weights: w.basis_count(),
            field: field.len(),
        });
    }
    Ok(())
}

/// `I(x, y, c) = Σ_k w[k][c]·olat_k(x, y, c)`.
pub fn relight(field: &ReflectanceField, w: &LightingWeights) -> Result<ImageF, RelightError> {
    check_count(field, w)?;
    let dims = field.dims();
    let mut out = vec![0.0; dims.pixel_count() * 3];
    for (img, wk) in field.olats.iter().zip(w.as_slice()) {
        if *wk == [0.0; 3] {
            continue;
        }
        for (o, px) in out.chunks_exact_mut(3).zip(img.data().chunks_exact(3)) {
            o[0] += wk[0] * px[0];
            o[1] += wk[1] * px[1];
            o[2] += wk[2] * px[2];
        }
    }
    Ok(ImageF::from_vec_unchecked(dims, out))
}

/// Maps an image to `layer_count()` feature images at the input resolution.
///
/// Implementations must be deterministic. A learned extractor with many
/// channels packs them into several three-channel maps.
pub trait FeatureExtractor: Sync {
    fn layer_count(&self) -> usize;
    fn extract(&self, img: &ImageF) -> Vec<ImageF>;
}

/// Features are the pixels themselves.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityFeatures;

impl FeatureExtractor for IdentityFeatures {
    fn layer_count(&self) -> usize {
        1
    }

    fn extract(&self, img: &ImageF) -> Vec<ImageF> {
        vec![img.clone()]
    }
}

/// Relative weights of the reconstruction and rendering terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64) -> Result<Self, RelightError> {
        let valid = |l: f64| l.is_finite() && l >= 0.0;
        if !valid(lambda1) || !valid(lambda2) || (lambda1 == 0.0 && lambda2 == 0.0) {
            return Err(RelightError::InvalidLossWeights(lambda1, lambda2));
        }
        Ok(Self { lambda1, lambda2 })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
        }
    }
}

fn mask_mass(mask: &MaskImage) -> Result<f64, RelightError> {
    let mass = mask.mass();
    if !(mass > 0.0) {
        return Err(RelightError::EmptyMask);
    }
    Ok(mass)
}

/// `Σ_p m(p)·||a(p) − b(p)||²` over all channels.
fn masked_sq_distance(a: &ImageF, b: &ImageF, mask: &MaskImage) -> f64 {
    a.data()
        .chunks_exact(3)
        .zip(b.data().chunks_exact(3))
        .zip(mask.data())
        .map(|((p, q), &m)| m * ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)))
        .sum()
}

/// `Σ_j sqrt(Σ_p m(p)·||F_j(relit)(p) − F_j(target)(p)||²) / mass`.
pub fn rendering_loss(
    relit: &ImageF,
    target: &ImageF,
    mask: &MaskImage,
    fx: &dyn FeatureExtractor,
) -> Result<f64, RelightError> {
    mask.ensure_matches(relit.dims())?;
    mask.ensure_matches(target.dims())?;
    let mass = mask_mass(mask)?;
    let (fa, fb) = (fx.extract(relit), fx.extract(target));
    for found in [fa.len(), fb.len()] {
        if found != fx.layer_count() {
            return Err(RelightError::FeatureCount {
                declared: fx.layer_count(),
                found,
            });
        }
    }
    let mut total = 0.0;
    for (a, b) in fa.iter().zip(&fb) {
        mask.ensure_matches(a.dims())?;
        mask.ensure_matches(b.dims())?;
        total += masked_sq_distance(a, b, mask).sqrt();
    }
    Ok(total / mass)
}

/// Sum of [`rendering_loss`] over corresponding OLAT pairs.
pub fn reconstruction_loss(
    pred: &ReflectanceField,
    gt: &ReflectanceField,
    mask: &MaskImage,
    fx: &dyn FeatureExtractor,
) -> Result<f64, RelightError> {
    pred.ensure_same_shape(gt)?;
    pred.olats
        .iter()
        .zip(&gt.olats)
        .map(|(p, g)| rendering_loss(p, g, mask, fx))
        .sum()
}

/// `λ1·L_rec + λ2·L_render`; without ground truth the first term is dropped,
/// which requires `λ1 = 0`.
pub fn combined_loss(
    pred: &ReflectanceField,
    gt: Option<&ReflectanceField>,
    frame: &ImageF,
    w: &LightingWeights,
    mask: &MaskImage,
    fx: &dyn FeatureExtractor,
    lw: LossWeights,
) -> Result<f64, RelightError> {
    let rec = match gt {
        Some(gt) if lw.lambda1 > 0.0 => reconstruction_loss(pred, gt, mask, fx)?,
        None if lw.lambda1 > 0.0 => return Err(RelightError::MissingGroundTruth),
        _ => 0.0,
    };
    let render = if lw.lambda2 > 0.0 {
        rendering_loss(&relight(pred, w)?, frame, mask, fx)?
    } else {
        0.0
    };
    Ok(lw.lambda1 * rec + lw.lambda2 * render)
}

/// `(1/mass)·Σ_p m(p)·||relight(field, w)(p) − target(p)||²`, the smooth
/// pixel-space rendering objective differentiated by
/// [`rendering_loss_gradient`].
pub fn squared_rendering_loss(
    field: &ReflectanceField,
    w: &LightingWeights,
    target: &ImageF,
    mask: &MaskImage,
) -> Result<f64, RelightError> {
    let relit = relight(field, w)?;
    mask.ensure_matches(relit.dims())?;
    mask.ensure_matches(target.dims())?;
    let mass = mask_mass(mask)?;
    Ok(masked_sq_distance(&relit, target, mask) / mass)
}

/// Signed, field-shaped gradient: one slice of `width·height·3` per basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGradient {
    dims: ImageDims,
    slices: Vec<Vec<f64>>,
}

impl FieldGradient {
    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        &self.slices[k]
    }

    pub fn slices(&self) -> &[Vec<f64>] {
        &self.slices
    }
}

/// Gradient of [`squared_rendering_loss`] with respect to every OLAT sample:
/// `(2/mass)·m(x,y)·(relit(x,y,c) − target(x,y,c))·w[k][c]`.
pub fn rendering_loss_gradient(
    field: &ReflectanceField,
    w: &LightingWeights,
    target: &ImageF,
    mask: &MaskImage,
) -> Result<FieldGradient, RelightError> {
    let relit = relight(field, w)?;
    mask.ensure_matches(relit.dims())?;
    mask.ensure_matches(target.dims())?;
    let mass = mask_mass(mask)?;
    let residual: Vec<f64> = relit
        .data()
        .iter()
        .zip(target.data())
        .enumerate()
        .map(|(i, (r, t))| 2.0 / mass * mask.data()[i / 3] * (r - t))
        .collect();
    let slices = w
        .as_slice()
        .iter()
        .map(|wk| residual.iter().enumerate().map(|(i, r)| r * wk[i % 3]).collect())
        .collect();
    Ok(FieldGradient {
        dims: field.dims(),
        slices,
    })
}

/// An exemplar linearized with `g` and relit under `w`.
pub fn synth_tracking_frame(
    exemplar: &ReflectanceField,
    w: &LightingWeights,
    g: DualGamma,
) -> Result<ImageF, RelightError> {
    relight(&apply_dual_gamma_field(exemplar, g), w)
}
