//! Dataset manifests and weights files. Paths inside a manifest are relative
//! to the manifest's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::imagecore::{load_image, load_mask, write_atomic, ImageDims, ImageF, MaskImage};
use crate::probe::{footprint_from_probe_with_floor, BasisFootprint, LatLongMap, LightingWeights};
use crate::relight::ReflectanceField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisEntry {
    pub id: usize,
    pub olat: PathBuf,
    /// Lat-long probe image of this lighting condition.
    pub probe: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarEntry {
    pub pose: usize,
    pub olats: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relit: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dims: ImageDims,
    pub basis: Vec<BasisEntry>,
    #[serde(default)]
    pub exemplars: Vec<ExemplarEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interview_probe: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_dir: Option<PathBuf>,
    #[serde(default)]
    pub frames: Vec<PathBuf>,
}

/// A manifest plus the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub root: PathBuf,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let ds = Dataset { manifest, root };
        ds.check().with_context(|| format!("manifest {}", path.display()))?;
        Ok(ds)
    }

    fn check(&self) -> Result<()> {
        let m = &self.manifest;
        if m.basis.is_empty() {
            bail!("no basis entries");
        }
        for (k, entry) in m.basis.iter().enumerate() {
            if entry.id != k {
                bail!(
                    "basis ids must be 0..{} in order; entry {k} has id {}",
                    m.basis.len() - 1,
                    entry.id
                );
            }
        }
        for ex in &m.exemplars {
            if ex.olats.len() != m.basis.len() {
                bail!(
                    "exemplar pose {} lists {} OLATs, expected {}",
                    ex.pose,
                    ex.olats.len(),
                    m.basis.len()
                );
            }
        }
        let mut paths: Vec<&PathBuf> = m.basis.iter().flat_map(|b| [&b.olat, &b.probe]).collect();
        paths.extend(m.exemplars.iter().flat_map(|e| e.olats.iter().chain(&e.relit)));
        paths.extend(m.interview_probe.iter().chain(&m.mask_dir).chain(&m.frames));
        for p in paths {
            let full = self.resolve(p);
            if !full.exists() {
                bail!("referenced path {} does not exist", full.display());
            }
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    pub fn basis_count(&self) -> usize {
        self.manifest.basis.len()
    }

    fn load_checked(&self, p: &Path) -> Result<ImageF> {
        let full = self.resolve(p);
        let img = load_image(&full).with_context(|| format!("loading {}", full.display()))?;
        if img.dims() != self.manifest.dims {
            bail!(
                "{} is {}, manifest says {}",
                full.display(),
                img.dims(),
                self.manifest.dims
            );
        }
        Ok(img)
    }

    pub fn field(&self) -> Result<ReflectanceField> {
        let olats = self
            .manifest
            .basis
            .iter()
            .map(|b| self.load_checked(&b.olat).with_context(|| format!("basis {}", b.id)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ReflectanceField::new(olats)?)
    }

    pub fn footprints(&self, noise_floor: f64) -> Result<Vec<BasisFootprint>> {
        self.manifest
            .basis
            .iter()
            .map(|b| {
                let full = self.resolve(&b.probe);
                let load = || -> Result<BasisFootprint> {
                    let probe = LatLongMap::new(load_image(&full)?)?;
                    Ok(footprint_from_probe_with_floor(&probe, noise_floor)?)
                };
                load().with_context(|| format!("probe of basis {} ({})", b.id, full.display()))
            })
            .collect()
    }

    pub fn exemplar_fields(&self) -> Result<Vec<ReflectanceField>> {
        self.manifest
            .exemplars
            .iter()
            .map(|ex| {
                let olats = ex
                    .olats
                    .iter()
                    .map(|p| self.load_checked(p))
                    .collect::<Result<Vec<_>>>()
                    .with_context(|| format!("exemplar pose {}", ex.pose))?;
                Ok(ReflectanceField::new(olats)?)
            })
            .collect()
    }

    pub fn frame(&self, index: usize) -> Result<ImageF> {
        match self.manifest.frames.get(index) {
            Some(p) => self.load_checked(p),
            None => bail!("manifest lists {} frames, no frame {index}", self.manifest.frames.len()),
        }
    }

    /// `mask_dir/mask_{index:03}.png` when present, otherwise all ones.
    pub fn frame_mask(&self, index: usize) -> Result<MaskImage> {
        if let Some(dir) = &self.manifest.mask_dir {
            let p = self.resolve(dir).join(format!("mask_{index:03}.png"));
            if p.exists() {
                let mask = load_mask(&p).with_context(|| format!("loading {}", p.display()))?;
                mask.ensure_matches(self.manifest.dims)?;
                return Ok(mask);
            }
        }
        Ok(MaskImage::ones(self.manifest.dims))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub basis_ids: Vec<usize>,
    pub weights: Vec<[f64; 3]>,
}

impl WeightsFile {
    pub fn from_weights(w: &LightingWeights) -> Self {
        Self {
            basis_ids: (0..w.basis_count()).collect(),
            weights: w.as_slice().to_vec(),
        }
    }

    /// Weights in basis-id order. Ids must be a permutation of `0..N`.
    pub fn to_weights(&self) -> Result<LightingWeights> {
        let n = self.weights.len();
        if self.basis_ids.len() != n {
            bail!("{} basis ids for {} weights", self.basis_ids.len(), n);
        }
        let mut ordered = vec![None; n];
        for (&id, w) in self.basis_ids.iter().zip(&self.weights) {
            match ordered.get_mut(id) {
                Some(slot @ None) => *slot = Some(*w),
                Some(Some(_)) => bail!("basis id {id} appears twice"),
                None => bail!("basis id {id} out of range for {n} weights"),
            }
        }
        Ok(LightingWeights::new(
            ordered.into_iter().map(|w| w.expect("filled")).collect(),
        )?)
    }

    pub fn load(path: &Path) -> Result<LightingWeights> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading weights {}", path.display()))?;
        let file: WeightsFile =
            serde_json::from_str(&text).with_context(|| format!("parsing weights {}", path.display()))?;
        file.to_weights().with_context(|| format!("weights {}", path.display()))
    }

    pub fn save(w: &LightingWeights, path: &Path) -> Result<()> {
        write_json(path, &WeightsFile::from_weights(w))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Loads `olat_*` images of a field directory in name order.
pub fn load_field_dir(dir: &Path) -> Result<ReflectanceField> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading field directory {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| {
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        name.starts_with("olat_") && (name.ends_with(".pfm") || name.ends_with(".png"))
    });
    paths.sort();
    if paths.is_empty() {
        bail!("no olat_* images in {}", dir.display());
    }
    let olats = paths
        .iter()
        .map(|p| load_image(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReflectanceField::new(olats)?)
}
