//! Synthetic light stage: an orthographic Lambertian sphere rendered under
//! single lights and under full environments.
//!
//! [`render_env`] integrates an environment directly over every lat-long
//! pixel, which makes it the reference the discrete OLAT pipeline is
//! checked against.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::imagecore::{ImageDims, ImageF};
use crate::probe::{
    delta_footprints, direction_pixels, direction_vector, pixel_direction, solid_angle_map, BasisFootprint, LatLongMap,
    MirrorBall, ProbeError,
};
use crate::relight::{ReflectanceField, RelightError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Relight(#[from] RelightError),
}

/// A diffuse sphere centered in the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereScene {
    pub albedo: [f64; 3],
    /// Radius as a fraction of half the image width.
    pub radius: f64,
    pub dims: ImageDims,
    pub ambient: [f64; 3],
}

impl SphereScene {
    pub fn new(albedo: [f64; 3], radius: f64, dims: ImageDims, ambient: [f64; 3]) -> Result<Self, SimError> {
        if !(radius > 0.0 && radius <= 1.0) {
            return Err(SimError::InvalidScene(format!("radius {radius} not in (0, 1]")));
        }
        if albedo.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(SimError::InvalidScene(format!("albedo {albedo:?} not in [0, 1]")));
        }
        if ambient.iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(SimError::InvalidScene(format!("ambient {ambient:?} must be >= 0")));
        }
        Ok(Self {
            albedo,
            radius,
            dims,
            ambient,
        })
    }

    fn without_ambient(&self) -> Self {
        Self {
            ambient: [0.0; 3],
            ..*self
        }
    }

    /// Surface normal seen through pixel `(x, y)`, if the sphere covers it.
    pub fn normal_at(&self, x: usize, y: usize) -> Option<[f64; 3]> {
        let (w, h) = (self.dims.width as f64, self.dims.height as f64);
        let r = self.radius * w / 2.0;
        let nx = (x as f64 + 0.5 - w / 2.0) / r;
        let ny = -(y as f64 + 0.5 - h / 2.0) / r;
        let rho = nx * nx + ny * ny;
        (rho < 1.0).then(|| [nx, ny, (1.0 - rho).sqrt()])
    }

    /// Pixels covered by the sphere.
    pub fn coverage(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.dims.pixel_count());
        for y in 0..self.dims.height {
            for x in 0..self.dims.width {
                out.push(self.normal_at(x, y).is_some());
            }
        }
        out
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// `albedo·max(0, n·l) + ambient` on the sphere, 0 elsewhere.
pub fn render_olat(scene: &SphereScene, theta: f64, phi: f64) -> ImageF {
    let l = direction_vector(theta, phi);
    ImageF::from_fn(scene.dims, |x, y| match scene.normal_at(x, y) {
        Some(n) => {
            let cos = dot(n, l).max(0.0);
            [0, 1, 2].map(|c| scene.albedo[c] * cos + scene.ambient[c])
        }
        None => [0.0; 3],
    })
}

/// `ambient + albedo·Σ_p env(p)·max(0, n·d(p))·ω(p)/π` on the sphere.
pub fn render_env(scene: &SphereScene, env: &LatLongMap) -> Result<ImageF, SimError> {
    let ed = env.dims();
    let omega = solid_angle_map(ed)?;
    let mut lights = Vec::with_capacity(ed.pixel_count());
    for v in 0..ed.height {
        for u in 0..ed.width {
            let rad = env.radiance(u, v);
            if rad == [0.0; 3] {
                continue;
            }
            let (t, p) = pixel_direction(ed, u, v);
            let wgt = omega.get(u, v) / PI;
            lights.push((direction_vector(t, p), rad.map(|r| r * wgt)));
        }
    }
    Ok(ImageF::from_fn(scene.dims, |x, y| match scene.normal_at(x, y) {
        Some(n) => {
            let mut acc = [0.0; 3];
            for (d, rad) in &lights {
                let cos = dot(n, *d);
                if cos > 0.0 {
                    for c in 0..3 {
                        acc[c] += rad[c] * cos;
                    }
                }
            }
            [0, 1, 2].map(|c| scene.ambient[c] + scene.albedo[c] * acc[c])
        }
        None => [0.0; 3],
    }))
}

/// A synthetic OLAT capture.
#[derive(Debug, Clone)]
pub struct SimulatedDataset {
    pub field: ReflectanceField,
    pub footprints: Vec<BasisFootprint>,
    /// Light directions snapped to their lat-long pixel centers.
    pub directions: Vec<(f64, f64)>,
    /// Solid angle each light stands for: its nearest-direction cell.
    pub cell_solid_angles: Vec<f64>,
    /// One probe map per light: a single lit pixel.
    pub probes: Vec<LatLongMap>,
}

/// Renders one ambient-free OLAT per direction, scaled by the solid angle of
/// the direction's nearest-neighbour cell over `env_dims`, with delta
/// footprints, so that relighting with projected weights approximates
/// [`render_env`].
pub fn generate_dataset(
    scene: &SphereScene,
    directions: &[(f64, f64)],
    env_dims: ImageDims,
) -> Result<SimulatedDataset, SimError> {
    let pixels = direction_pixels(directions, env_dims)?;
    let footprints = delta_footprints(directions, env_dims)?;
    let snapped: Vec<(f64, f64)> = pixels.iter().map(|&(u, v)| pixel_direction(env_dims, u, v)).collect();
    let cells = cell_solid_angles(&snapped, env_dims)?;

    let dark = scene.without_ambient();
    let olats = snapped
        .iter()
        .zip(&cells)
        .map(|(&(t, p), &area)| render_olat(&dark, t, p).scaled(area / PI))
        .collect();
    let probes = pixels
        .iter()
        .map(|&(u, v)| {
            let img = ImageF::from_fn(env_dims, |x, y| if (x, y) == (u, v) { [1.0; 3] } else { [0.0; 3] });
            LatLongMap::new(img)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SimulatedDataset {
        field: ReflectanceField::new(olats)?,
        footprints,
        directions: snapped,
        cell_solid_angles: cells,
        probes,
    })
}

/// Solid angle of each direction's nearest-neighbour cell, accumulated over
/// lat-long pixels. Sums to the total solid angle of the grid.
pub fn cell_solid_angles(directions: &[(f64, f64)], dims: ImageDims) -> Result<Vec<f64>, SimError> {
    let omega = solid_angle_map(dims)?;
    let centers: Vec<[f64; 3]> = directions.iter().map(|&(t, p)| direction_vector(t, p)).collect();
    let mut cells = vec![0.0; centers.len()];
    for v in 0..dims.height {
        for u in 0..dims.width {
            let (t, p) = pixel_direction(dims, u, v);
            let d = direction_vector(t, p);
            let nearest = centers
                .iter()
                .enumerate()
                .max_by(|a, b| dot(*a.1, d).total_cmp(&dot(*b.1, d)))
                .map(|(k, _)| k)
                .expect("at least one direction");
            cells[nearest] += omega.get(u, v);
        }
    }
    Ok(cells)
}

/// `n` near-uniform directions on the sphere (Fibonacci lattice).
pub fn fibonacci_directions(n: usize) -> Vec<(f64, f64)> {
    let golden = PI * (1.0 + 5f64.sqrt());
    (0..n)
        .map(|i| {
            let t = i as f64 + 0.5;
            let y = 1.0 - 2.0 * t / n as f64;
            let theta = y.clamp(-1.0, 1.0).acos();
            let phi = (golden * t).rem_euclid(2.0 * PI) - PI;
            (theta, phi)
        })
        .collect()
}

/// A smooth positive environment: a constant floor plus four broad colored
/// lobes at seeded random directions.
pub fn smooth_random_environment(seed: u64, dims: ImageDims) -> Result<LatLongMap, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lobes: Vec<([f64; 3], [f64; 3], f64)> = (0..4)
        .map(|_| {
            let z: f64 = rng.random_range(-1.0..1.0);
            let a: f64 = rng.random_range(-PI..PI);
            let s = (1.0 - z * z).sqrt();
            let center = [s * a.cos(), z, s * a.sin()];
            let color = [
                rng.random_range(0.2..1.0),
                rng.random_range(0.2..1.0),
                rng.random_range(0.2..1.0),
            ];
            let sharpness = rng.random_range(1.0..3.0);
            (center, color, sharpness)
        })
        .collect();
    Ok(LatLongMap::from_fn(dims, |t, p| {
        let d = direction_vector(t, p);
        let mut rad = [0.3; 3];
        for (center, color, k) in &lobes {
            let falloff = (k * (dot(d, *center) - 1.0)).exp();
            for c in 0..3 {
                rad[c] += color[c] * falloff;
            }
        }
        rad
    })?)
}

/// Soft light from above: `base + (1 − base)·max(0, cos θ)` per channel.
pub fn overhead_environment(dims: ImageDims, base: f64) -> Result<LatLongMap, SimError> {
    Ok(LatLongMap::from_fn(dims, |t, _| {
        let v = base + (1.0 - base) * t.cos().max(0.0);
        [v; 3]
    })?)
}

/// Photographs a mirror ball of `size × size` pixels reflecting `env`.
/// Pixels off the ball are black.
pub fn render_mirror_ball(env: &LatLongMap, size: usize) -> Result<MirrorBall, SimError> {
    let dims = ImageDims::new(size, size).map_err(ProbeError::from)?;
    let r = size as f64 / 2.0;
    let img = ImageF::from_fn(dims, |x, y| {
        let nx = (x as f64 + 0.5 - r) / r;
        let ny = -(y as f64 + 0.5 - r) / r;
        let rho = nx * nx + ny * ny;
        if rho >= 1.0 {
            return [0.0; 3];
        }
        let n = [nx, ny, (1.0 - rho).sqrt()];
        // reflect the view vector (0, 0, 1) about n
        let d = [2.0 * n[2] * n[0], 2.0 * n[2] * n[1], 2.0 * n[2] * n[2] - 1.0];
        env.sample(d)
    });
    Ok(MirrorBall::inscribed(img)?)
}
