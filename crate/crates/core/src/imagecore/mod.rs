//! Floating-point RGB images, per-pixel masks, and file I/O.
//!
//! Samples are stored as `f64` in row-major order, three channels per
//! pixel, row 0 at the top. Files are exchanged as PFM (exact, `f32` on
//! disk) or 8-bit PNG. PNG bytes are mapped to `[0, 1]` linearly: no
//! transfer curve is removed on load, that is the job of [`crate::gamma`].

mod pfm;
mod resize;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use resize::pad_and_resize;

/// Errors raised by image construction and I/O.
#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("malformed PFM: {0}")]
    MalformedPfm(String),
    #[error("PNG codec error: {0}")]
    Png(String),
    #[error("image dimensions {width}x{height} overflow")]
    DimensionOverflow { width: usize, height: usize },
    #[error("image dimensions must be at least 1x1, got {width}x{height}")]
    EmptyDims { width: usize, height: usize },
    #[error("expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimsMismatch { left: ImageDims, right: ImageDims },
}

/// Width and height in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct ImageDims {
    pub width: usize,
    pub height: usize,
}

impl ImageDims {
    pub fn new(width: usize, height: usize) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::EmptyDims { width, height });
        }
        width
            .checked_mul(height)
            .and_then(|p| p.checked_mul(3))
            .ok_or(ImageError::DimensionOverflow { width, height })?;
        Ok(Self { width, height })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    fn ensure_same(self, other: ImageDims) -> Result<(), ImageError> {
        if self != other {
            return Err(ImageError::DimsMismatch {
                left: self,
                right: other,
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for ImageDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

/// An RGB radiance image.
///
/// Every sample is finite. Results of the raw-data constructors are not
/// clamped, so unconstrained estimates may carry negative samples; loaders
/// and renderers only ever produce nonnegative data.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageF {
    dims: ImageDims,
    data: Vec<f64>,
}

impl ImageF {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        let dims = ImageDims::new(width, height)?;
        Self::from_dims(dims, data)
    }

    pub fn from_dims(dims: ImageDims, data: Vec<f64>) -> Result<Self, ImageError> {
        let expected = dims.pixel_count() * 3;
        if data.len() != expected {
            return Err(ImageError::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite(i));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: ImageDims) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.pixel_count() * 3],
        }
    }

    pub fn filled(dims: ImageDims, rgb: [f64; 3]) -> Self {
        Self::from_fn(dims, |_, _| rgb)
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    ///
    /// Panics if `f` returns a non-finite sample.
    pub fn from_fn(dims: ImageDims, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(dims.pixel_count() * 3);
        for y in 0..dims.height {
            for x in 0..dims.width {
                let px = f(x, y);
                assert!(px.iter().all(|v| v.is_finite()), "non-finite pixel at ({x}, {y})");
                data.extend_from_slice(&px);
            }
        }
        Self { dims, data }
    }

    pub(crate) fn from_vec_unchecked(dims: ImageDims, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), dims.pixel_count() * 3);
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { dims, data }
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.dims.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageF {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        assert!(data.iter().all(|v| v.is_finite()), "map produced a non-finite sample");
        Self::from_vec_unchecked(self.dims, data)
    }

    pub fn scaled(&self, s: f64) -> ImageF {
        self.map(|v| v * s)
    }

    pub fn add(&self, other: &ImageF) -> Result<ImageF, ImageError> {
        self.dims.ensure_same(other.dims)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self::from_vec_unchecked(self.dims, data))
    }

    pub fn clamp_nonnegative(&self) -> ImageF {
        self.map(|v| v.max(0.0))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    pub fn max_abs_diff(&self, other: &ImageF) -> Result<f64, ImageError> {
        self.dims.ensure_same(other.dims)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }
}

/// Per-pixel weights in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskImage {
    dims: ImageDims,
    data: Vec<f64>,
}

impl MaskImage {
    /// Values are clamped into `[0, 1]`.
    pub fn new(dims: ImageDims, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != dims.pixel_count() {
            return Err(ImageError::LengthMismatch {
                expected: dims.pixel_count(),
                actual: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite(i));
        }
        let data = data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Self { dims, data })
    }

    pub fn ones(dims: ImageDims) -> Self {
        Self {
            dims,
            data: vec![1.0; dims.pixel_count()],
        }
    }

    pub fn from_fn(dims: ImageDims, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.pixel_count());
        for y in 0..dims.height {
            for x in 0..dims.width {
                data.push(f(x, y));
            }
        }
        Self::new(dims, data).expect("mask function produced a non-finite weight")
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn weight(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.dims.width + x]
    }

    /// Total weight, the normalizer of every masked loss.
    pub fn mass(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn ensure_matches(&self, dims: ImageDims) -> Result<(), ImageError> {
        self.dims.ensure_same(dims)
    }
}

/// Multiplies every channel of each pixel by its mask weight.
pub fn apply_mask(img: &ImageF, mask: &MaskImage) -> Result<ImageF, ImageError> {
    mask.ensure_matches(img.dims())?;
    let data = img
        .data
        .chunks_exact(3)
        .zip(&mask.data)
        .flat_map(|(px, &m)| [px[0] * m, px[1] * m, px[2] * m])
        .collect();
    Ok(ImageF::from_vec_unchecked(img.dims, data))
}

/// An image together with load diagnostics.
#[derive(Debug, Clone)]
pub struct LoadedImage {
    pub image: ImageF,
    /// Number of negative PFM samples that were clamped to zero.
    pub clamped_negatives: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Pfm,
    Png,
}

fn format_of(path: &Path) -> Result<Format, ImageError> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("pfm") => Ok(Format::Pfm),
        Some("png") => Ok(Format::Png),
        _ => Err(ImageError::UnsupportedFormat(path.display().to_string())),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, ImageError> {
    fs::read(path).map_err(|source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageF, ImageError> {
    let loaded = load_image_report(path.as_ref())?;
    if loaded.clamped_negatives > 0 {
        log::warn!(
            "{}: clamped {} negative samples to zero",
            path.as_ref().display(),
            loaded.clamped_negatives
        );
    }
    Ok(loaded.image)
}

/// Loads a PFM or 8-bit PNG, reporting how many samples were clamped.
pub fn load_image_report(path: &Path) -> Result<LoadedImage, ImageError> {
    let bytes = read_bytes(path)?;
    match format_of(path)? {
        Format::Pfm => pfm::decode(&bytes),
        Format::Png => Ok(LoadedImage {
            image: decode_png_rgb(&bytes)?,
            clamped_negatives: 0,
        }),
    }
}

fn decode_png(bytes: &[u8]) -> Result<image::DynamicImage, ImageError> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| ImageError::Png(e.to_string()))?;
    use image::DynamicImage as D;
    match img {
        D::ImageLuma8(_) | D::ImageLumaA8(_) | D::ImageRgb8(_) | D::ImageRgba8(_) => Ok(img),
        other => Err(ImageError::UnsupportedFormat(format!(
            "PNG color type {:?} (only 8-bit is supported)",
            other.color()
        ))),
    }
}

fn decode_png_rgb(bytes: &[u8]) -> Result<ImageF, ImageError> {
    let rgb = decode_png(bytes)?.to_rgb8();
    let dims = ImageDims::new(rgb.width() as usize, rgb.height() as usize)?;
    let data = rgb.as_raw().iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(ImageF::from_vec_unchecked(dims, data))
}

/// Loads the alpha channel of a PNG as a mask, or `None` when it has none.
pub fn load_alpha_mask(path: impl AsRef<Path>) -> Result<Option<MaskImage>, ImageError> {
    let path = path.as_ref();
    if format_of(path)? != Format::Png {
        return Ok(None);
    }
    let img = decode_png(&read_bytes(path)?)?;
    if !img.color().has_alpha() {
        return Ok(None);
    }
    let rgba = img.to_rgba8();
    let dims = ImageDims::new(rgba.width() as usize, rgba.height() as usize)?;
    let data = rgba.pixels().map(|p| f64::from(p.0[3]) / 255.0).collect();
    MaskImage::new(dims, data).map(Some)
}

/// Loads a mask file: PNG alpha if present, otherwise the first channel.
pub fn load_mask(path: impl AsRef<Path>) -> Result<MaskImage, ImageError> {
    let path = path.as_ref();
    if let Some(mask) = load_alpha_mask(path)? {
        return Ok(mask);
    }
    let img = load_image(path)?;
    let data = img.data().chunks_exact(3).map(|px| px[0]).collect();
    MaskImage::new(img.dims(), data)
}

/// Writes the image as PFM or PNG depending on the file extension.
///
/// PNG output clamps to `[0, 1]` and rounds half up. The file is written
/// to a temporary sibling and renamed into place.
pub fn save_image(img: &ImageF, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let bytes = match format_of(path)? {
        Format::Pfm => pfm::encode(img),
        Format::Png => encode_png(img)?,
    };
    write_atomic(path, &bytes)
}

pub fn save_mask(mask: &MaskImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let data = mask.data.iter().flat_map(|&m| [m, m, m]).collect();
    save_image(&ImageF::from_vec_unchecked(mask.dims, data), path)
}

pub(crate) fn to_png_byte(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

fn encode_png(img: &ImageF) -> Result<Vec<u8>, ImageError> {
    let bytes: Vec<u8> = img.data.iter().map(|&v| to_png_byte(v)).collect();
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .ok_or_else(|| ImageError::Png("buffer size mismatch".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| ImageError::Png(e.to_string()))?;
    Ok(out.into_inner())
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), ImageError> {
    let io_err = |source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut file = fs::File::create(&tmp).map_err(io_err)?;
    file.write_all(bytes).map_err(io_err)?;
    file.sync_all().map_err(io_err)?;
    drop(file);
    fs::rename(&tmp, path).map_err(io_err)
}
