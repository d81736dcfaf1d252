//! Light probes, latitude-longitude environments, and projection of an
//! environment onto the OLAT lighting basis.
//!
//! Lat-long pixel `(u, v)` of a `W x H` map looks along
//!
//! ```text
//! φ = 2π·(u + 0.5)/W − π      (longitude)
//! θ = π·(v + 0.5)/H           (colatitude, 0 at the top)
//! d = (sin θ·cos φ, cos θ, sin θ·sin φ)
//! ```
//!
//! so `+y` is up, `+x` is `(θ, φ) = (π/2, 0)` and `+z` (toward the camera)
//! is `(π/2, π/2)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imagecore::{ImageDims, ImageError, ImageF};

/// Default fraction of the peak luminance below which probe pixels are
/// discarded when forming a footprint.
pub const DEFAULT_NOISE_FLOOR: f64 = 0.05;

/// Default environment resolution.
pub const DEFAULT_ENV_DIMS: ImageDims = ImageDims { width: 64, height: 32 };

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("lat-long map must be twice as wide as tall, got {0}")]
    NotTwoToOne(ImageDims),
    #[error("mirror ball radius {0} must exceed 2 px")]
    DegenerateRadius(f64),
    #[error("mirror ball circle (center ({cx}, {cy}), radius {radius}) leaves the {dims} image")]
    BallOutOfBounds {
        cx: f64,
        cy: f64,
        radius: f64,
        dims: ImageDims,
    },
    #[error("probe has no energy above the noise floor")]
    EmptyFootprint,
    #[error("probe radiance must be nonnegative")]
    NegativeRadiance,
    #[error("footprint {index} is {found}, environment is {expected}")]
    FootprintDims {
        index: usize,
        expected: ImageDims,
        found: ImageDims,
    },
    #[error("directions {first} and {second} fall on the same lat-long pixel ({u}, {v})")]
    DirectionCollision {
        first: usize,
        second: usize,
        u: usize,
        v: usize,
    },
    #[error("invalid lighting weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Unit vector for a (colatitude, longitude) pair.
pub fn direction_vector(theta: f64, phi: f64) -> [f64; 3] {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, ct, st * sp]
}

/// Inverse of [`direction_vector`]; `d` need not be normalized.
pub fn vector_direction(d: [f64; 3]) -> (f64, f64) {
    let len = norm(d);
    let theta = (d[1] / len).clamp(-1.0, 1.0).acos();
    let phi = d[2].atan2(d[0]);
    (theta, phi)
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn check_two_to_one(dims: ImageDims) -> Result<(), ProbeError> {
    if dims.width != 2 * dims.height {
        return Err(ProbeError::NotTwoToOne(dims));
    }
    Ok(())
}

/// (θ, φ) at the center of lat-long pixel `(u, v)`.
pub fn pixel_direction(dims: ImageDims, u: usize, v: usize) -> (f64, f64) {
    let phi = 2.0 * PI * (u as f64 + 0.5) / dims.width as f64 - PI;
    let theta = PI * (v as f64 + 0.5) / dims.height as f64;
    (theta, phi)
}

/// Lat-long pixel containing direction (θ, φ).
pub fn nearest_pixel(dims: ImageDims, theta: f64, phi: f64) -> (usize, usize) {
    let w = dims.width as f64;
    let u = ((phi + PI) / (2.0 * PI) * w).floor();
    let u = u.rem_euclid(w) as usize % dims.width;
    let v = (theta / PI * dims.height as f64).floor();
    let v = v.clamp(0.0, (dims.height - 1) as f64) as usize;
    (u, v)
}

/// A latitude-longitude HDR radiance map.
#[derive(Debug, Clone, PartialEq)]
pub struct LatLongMap {
    map: ImageF,
}

impl LatLongMap {
    pub fn new(map: ImageF) -> Result<Self, ProbeError> {
        check_two_to_one(map.dims())?;
        if !map.is_nonnegative() {
            return Err(ProbeError::NegativeRadiance);
        }
        Ok(Self { map })
    }

    pub fn from_fn(dims: ImageDims, mut radiance: impl FnMut(f64, f64) -> [f64; 3]) -> Result<Self, ProbeError> {
        check_two_to_one(dims)?;
        Self::new(ImageF::from_fn(dims, |u, v| {
            let (theta, phi) = pixel_direction(dims, u, v);
            radiance(theta, phi)
        }))
    }

    pub fn dims(&self) -> ImageDims {
        self.map.dims()
    }

    pub fn image(&self) -> &ImageF {
        &self.map
    }

    pub fn into_image(self) -> ImageF {
        self.map
    }

    pub fn radiance(&self, u: usize, v: usize) -> [f64; 3] {
        self.map.pixel(u, v)
    }

    /// Bilinear lookup along `d`, wrapping in longitude.
    pub fn sample(&self, d: [f64; 3]) -> [f64; 3] {
        let dims = self.dims();
        let (theta, phi) = vector_direction(d);
        let fu = (phi + PI) / (2.0 * PI) * dims.width as f64 - 0.5;
        let fv = (theta / PI * dims.height as f64 - 0.5).clamp(0.0, (dims.height - 1) as f64);
        let u0 = fu.floor();
        let tu = fu - u0;
        let v0 = fv.floor() as usize;
        let v1 = (v0 + 1).min(dims.height - 1);
        let tv = fv - v0 as f64;
        let w = dims.width as i64;
        let u0i = (u0 as i64).rem_euclid(w) as usize;
        let u1i = (u0 as i64 + 1).rem_euclid(w) as usize;
        let (a, b) = (self.map.pixel(u0i, v0), self.map.pixel(u1i, v0));
        let (c, e) = (self.map.pixel(u0i, v1), self.map.pixel(u1i, v1));
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * tu;
            let bottom = c[k] + (e[k] - c[k]) * tu;
            out[k] = top + (bottom - top) * tv;
        }
        out
    }
}

/// Per-pixel solid angles of a lat-long grid, `ω(u, v) = sin θ_v·(π/H)·(2π/W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolidAngleMap {
    dims: ImageDims,
    values: Vec<f64>,
}

impl SolidAngleMap {
    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.dims.width + u]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

pub fn solid_angle_map(dims: ImageDims) -> Result<SolidAngleMap, ProbeError> {
    check_two_to_one(dims)?;
    let (w, h) = (dims.width as f64, dims.height as f64);
    let mut values = Vec::with_capacity(dims.pixel_count());
    for v in 0..dims.height {
        let theta = PI * (v as f64 + 0.5) / h;
        let omega = theta.sin() * (PI / h) * (2.0 * PI / w);
        values.extend(std::iter::repeat_n(omega, dims.width));
    }
    Ok(SolidAngleMap { dims, values })
}

/// A photograph of a mirrored sphere. Coordinates are continuous pixel
/// coordinates: pixel `(i, j)` covers `[i, i+1) x [j, j+1)`.
#[derive(Debug, Clone)]
pub struct MirrorBall {
    image: ImageF,
    center: (f64, f64),
    radius: f64,
}

impl MirrorBall {
    pub fn new(image: ImageF, center: (f64, f64), radius: f64) -> Result<Self, ProbeError> {
        if !(radius > 2.0) {
            return Err(ProbeError::DegenerateRadius(radius));
        }
        let dims = image.dims();
        let (cx, cy) = center;
        let eps = 1e-9;
        if cx - radius < -eps
            || cy - radius < -eps
            || cx + radius > dims.width as f64 + eps
            || cy + radius > dims.height as f64 + eps
        {
            return Err(ProbeError::BallOutOfBounds { cx, cy, radius, dims });
        }
        Ok(Self { image, center, radius })
    }

    /// The largest circle inscribed in the image frame.
    pub fn inscribed(image: ImageF) -> Result<Self, ProbeError> {
        let (w, h) = (image.width() as f64, image.height() as f64);
        Self::new(image, (w / 2.0, h / 2.0), w.min(h) / 2.0)
    }

    pub fn image(&self) -> &ImageF {
        &self.image
    }

    pub fn center(&self) -> (f64, f64) {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Ball-image position that reflects world direction `d` toward the camera.
    pub fn reflection_point(&self, d: [f64; 3]) -> (f64, f64) {
        let len = norm(d);
        let half = [d[0] / len, d[1] / len, d[2] / len + 1.0];
        let hl = norm(half);
        // straight behind the ball: every rim point reflects it, take the top
        let (nx, ny) = if hl < 1e-12 {
            (0.0, 1.0)
        } else {
            let (nx, ny) = (half[0] / hl, half[1] / hl);
            let r = (nx * nx + ny * ny).sqrt();
            if r > 1.0 {
                (nx / r, ny / r)
            } else {
                (nx, ny)
            }
        };
        // image rows grow downward
        (self.center.0 + nx * self.radius, self.center.1 - ny * self.radius)
    }

    /// Radiance the ball reflects from world direction `d`.
    pub fn sample_direction(&self, d: [f64; 3]) -> [f64; 3] {
        let (x, y) = self.reflection_point(d);
        bilinear(&self.image, x, y)
    }
}

fn bilinear(img: &ImageF, x: f64, y: f64) -> [f64; 3] {
    let sx = (x - 0.5).clamp(0.0, (img.width() - 1) as f64);
    let sy = (y - 0.5).clamp(0.0, (img.height() - 1) as f64);
    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width() - 1), (y0 + 1).min(img.height() - 1));
    let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
    let (a, b, c, d) = (
        img.pixel(x0, y0),
        img.pixel(x1, y0),
        img.pixel(x0, y1),
        img.pixel(x1, y1),
    );
    let mut out = [0.0; 3];
    for k in 0..3 {
        let top = a[k] + (b[k] - a[k]) * fx;
        let bottom = c[k] + (d[k] - c[k]) * fx;
        out[k] = top + (bottom - top) * fy;
    }
    out
}

/// Unwraps a mirror-ball photograph into a lat-long map.
pub fn mirrorball_to_latlong(ball: &MirrorBall, out_dims: ImageDims) -> Result<LatLongMap, ProbeError> {
    check_two_to_one(out_dims)?;
    let map = ImageF::from_fn(out_dims, |u, v| {
        let (theta, phi) = pixel_direction(out_dims, u, v);
        ball.sample_direction(direction_vector(theta, phi))
    });
    Ok(LatLongMap {
        map: map.clamp_nonnegative(),
    })
}

/// Angular region lit by one OLAT condition, normalized so that
/// `Σ F(p)·ω(p) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisFootprint {
    dims: ImageDims,
    values: Vec<f64>,
}

impl BasisFootprint {
    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.dims.width + u]
    }

    /// `Σ F(p)·ω(p)`; 1 up to rounding for every constructed footprint.
    pub fn integral(&self) -> f64 {
        let omega = solid_angle_map(self.dims).expect("footprint dims are 2:1");
        self.values.iter().zip(omega.values()).map(|(f, w)| f * w).sum()
    }

    fn normalized(dims: ImageDims, mut values: Vec<f64>, omega: &SolidAngleMap) -> Result<Self, ProbeError> {
        let total: f64 = values.iter().zip(omega.values()).map(|(f, w)| f * w).sum();
        if !(total > 0.0) {
            return Err(ProbeError::EmptyFootprint);
        }
        values.iter_mut().for_each(|f| *f /= total);
        Ok(Self { dims, values })
    }
}

fn luminance(rgb: [f64; 3]) -> f64 {
    0.2126 * rgb[0] + 0.7152 * rgb[1] + 0.0722 * rgb[2]
}

pub fn footprint_from_probe(probe: &LatLongMap) -> Result<BasisFootprint, ProbeError> {
    footprint_from_probe_with_floor(probe, DEFAULT_NOISE_FLOOR)
}

/// Luminance of `probe`, zeroed below `noise_floor × max`, normalized.
pub fn footprint_from_probe_with_floor(probe: &LatLongMap, noise_floor: f64) -> Result<BasisFootprint, ProbeError> {
    let dims = probe.dims();
    let lum: Vec<f64> = probe
        .map
        .data()
        .chunks_exact(3)
        .map(|px| luminance([px[0], px[1], px[2]]))
        .collect();
    let peak = lum.iter().copied().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(ProbeError::EmptyFootprint);
    }
    let cut = noise_floor * peak;
    let values = lum.into_iter().map(|l| if l < cut { 0.0 } else { l }).collect();
    BasisFootprint::normalized(dims, values, &solid_angle_map(dims)?)
}

/// One single-pixel footprint per direction, at its nearest lat-long pixel.
pub fn delta_footprints(directions: &[(f64, f64)], dims: ImageDims) -> Result<Vec<BasisFootprint>, ProbeError> {
    let omega = solid_angle_map(dims)?;
    let pixels = direction_pixels(directions, dims)?;
    pixels
        .into_iter()
        .map(|(u, v)| {
            let mut values = vec![0.0; dims.pixel_count()];
            values[v * dims.width + u] = 1.0;
            BasisFootprint::normalized(dims, values, &omega)
        })
        .collect()
}

/// Nearest pixel of every direction, rejecting collisions.
pub fn direction_pixels(directions: &[(f64, f64)], dims: ImageDims) -> Result<Vec<(usize, usize)>, ProbeError> {
    check_two_to_one(dims)?;
    let mut owner = std::collections::HashMap::with_capacity(directions.len());
    let mut pixels = Vec::with_capacity(directions.len());
    for (i, &(theta, phi)) in directions.iter().enumerate() {
        let (u, v) = nearest_pixel(dims, theta, phi);
        if let Some(&first) = owner.get(&(u, v)) {
            return Err(ProbeError::DirectionCollision { first, second: i, u, v });
        }
        owner.insert((u, v), i);
        pixels.push((u, v));
    }
    Ok(pixels)
}

/// Per-basis, per-channel lighting coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LightingWeights {
    weights: Vec<[f64; 3]>,
}

impl LightingWeights {
    pub fn new(weights: Vec<[f64; 3]>) -> Result<Self, ProbeError> {
        if weights.is_empty() {
            return Err(ProbeError::InvalidWeights("no basis conditions".into()));
        }
        if let Some(k) = weights
            .iter()
            .position(|w| w.iter().any(|v| !v.is_finite() || *v < 0.0))
        {
            return Err(ProbeError::InvalidWeights(format!(
                "basis {k} has a negative or non-finite weight"
            )));
        }
        Ok(Self { weights })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            weights: vec![[0.0; 3]; n],
        }
    }

    /// Unit weight on basis `k` in every channel.
    pub fn one_hot(n: usize, k: usize) -> Self {
        let mut w = Self::zeros(n);
        w.weights[k] = [1.0; 3];
        w
    }

    pub fn basis_count(&self) -> usize {
        self.weights.len()
    }

    pub fn as_slice(&self) -> &[[f64; 3]] {
        &self.weights
    }

    pub fn get(&self, k: usize) -> [f64; 3] {
        self.weights[k]
    }

    /// The N-vector of weights for one channel.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.weights.iter().map(|w| w[c]).collect()
    }

    pub fn add(&self, other: &LightingWeights) -> Result<LightingWeights, ProbeError> {
        if self.basis_count() != other.basis_count() {
            return Err(ProbeError::InvalidWeights(format!(
                "cannot add {} and {} weights",
                self.basis_count(),
                other.basis_count()
            )));
        }
        let weights = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| [a[0] + b[0], a[1] + b[1], a[2] + b[2]])
            .collect();
        Ok(Self { weights })
    }

    pub fn scaled(&self, s: f64) -> LightingWeights {
        assert!(
            s >= 0.0 && s.is_finite(),
            "weights scale must be finite and nonnegative"
        );
        Self {
            weights: self.weights.iter().map(|w| w.map(|v| v * s)).collect(),
        }
    }
}

/// `w[k][c] = Σ_p F_k(p)·env_c(p)·ω(p)`: the footprint-weighted average
/// radiance seen by basis `k`.
pub fn project_environment(env: &LatLongMap, footprints: &[BasisFootprint]) -> Result<LightingWeights, ProbeError> {
    let dims = env.dims();
    let omega = solid_angle_map(dims)?;
    let weights = footprints
        .iter()
        .enumerate()
        .map(|(index, fp)| {
            if fp.dims != dims {
                return Err(ProbeError::FootprintDims {
                    index,
                    expected: dims,
                    found: fp.dims,
                });
            }
            let mut acc = [0.0; 3];
            let pixels = env.map.data().chunks_exact(3);
            for ((px, &f), &w) in pixels.zip(&fp.values).zip(omega.values()) {
                if f != 0.0 {
                    for c in 0..3 {
                        acc[c] += f * px[c] * w;
                    }
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>, _>>()?;
    LightingWeights::new(weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims(w: usize, h: usize) -> ImageDims {
        ImageDims::new(w, h).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn direction_conventions() {
        let x = direction_vector(PI / 2.0, 0.0);
        assert!(close(x[0], 1.0, 1e-15) && close(x[1], 0.0, 1e-15) && close(x[2], 0.0, 1e-15));
        let z = direction_vector(PI / 2.0, PI / 2.0);
        assert!(close(z[2], 1.0, 1e-15));
        let up = direction_vector(0.0, 1.234);
        assert!(close(up[1], 1.0, 1e-15));
        let (t, p) = vector_direction(direction_vector(1.1, -2.0));
        assert!(close(t, 1.1, 1e-12) && close(p, -2.0, 1e-12));
    }

    #[test]
    fn solid_angles_cover_the_sphere() {
        for h in [32, 64, 100] {
            let om = solid_angle_map(dims(2 * h, h)).unwrap();
            assert!(((om.total() - 4.0 * PI) / (4.0 * PI)).abs() < 1e-3, "H={h}");
            for v in 0..h {
                let row: Vec<f64> = (0..2 * h).map(|u| om.get(u, v)).collect();
                assert!(row.iter().all(|&x| x == row[0]));
            }
        }
    }

    #[test]
    fn solid_angle_two_by_four_by_hand() {
        let om = solid_angle_map(dims(4, 2)).unwrap();
        let expected = (PI * PI / 4.0) * (2f64.sqrt() / 2.0);
        for &w in om.values() {
            assert!(close(w, expected, 1e-15));
        }
        assert!(matches!(solid_angle_map(dims(4, 4)), Err(ProbeError::NotTwoToOne(_))));
    }

    #[test]
    fn pixel_direction_round_trip() {
        let d = dims(64, 32);
        for v in 0..32 {
            for u in 0..64 {
                let (t, p) = pixel_direction(d, u, v);
                assert_eq!(nearest_pixel(d, t, p), (u, v));
            }
        }
        assert_eq!(nearest_pixel(d, PI / 2.0, 0.0), (32, 16));
        assert_eq!(nearest_pixel(d, PI, PI), (0, 31));
    }

    fn radial_ball(size: usize) -> MirrorBall {
        // value = x coordinate, so bilinear sampling is exact
        let img = ImageF::from_fn(dims(size, size), |x, y| [x as f64 + 0.5, y as f64 + 0.5, 1.0]);
        MirrorBall::inscribed(img).unwrap()
    }

    #[test]
    fn reflection_geometry() {
        let ball = radial_ball(21);
        let (cx, cy) = ball.center();
        let r = ball.radius();
        let toward = ball.sample_direction([0.0, 0.0, 1.0]);
        assert!(close(toward[0], cx, 1e-12) && close(toward[1], cy, 1e-12));

        let (x, y) = ball.reflection_point([1.0, 0.0, 0.0]);
        assert!(close(x - cx, r / 2f64.sqrt(), 1e-12));
        assert!(close(y, cy, 1e-12));
        let px = ball.sample_direction([1.0, 0.0, 0.0]);
        assert!(close(px[0], cx + r / 2f64.sqrt(), 1e-12));

        // up in the world is up in the picture
        let (_, y_up) = ball.reflection_point([0.0, 1.0, 0.0]);
        assert!(y_up < cy);

        let (bx, by) = ball.reflection_point([0.0, 0.0, -1.0]);
        let rim = ((bx - cx).powi(2) + (by - cy).powi(2)).sqrt();
        assert!(close(rim, r, 1e-12));
    }

    #[test]
    fn constant_ball_gives_constant_map() {
        let img = ImageF::filled(dims(31, 31), [0.7, 0.2, 3.0]);
        let ball = MirrorBall::inscribed(img).unwrap();
        let map = mirrorball_to_latlong(&ball, dims(32, 16)).unwrap();
        for px in map.image().data().chunks_exact(3) {
            assert!(close(px[0], 0.7, 1e-12) && close(px[1], 0.2, 1e-12) && close(px[2], 3.0, 1e-12));
        }
    }

    #[test]
    fn mirror_ball_validation() {
        let img = ImageF::zeros(dims(10, 10));
        assert!(matches!(
            MirrorBall::new(img.clone(), (5.0, 5.0), 2.0),
            Err(ProbeError::DegenerateRadius(_))
        ));
        assert!(matches!(
            MirrorBall::new(img.clone(), (4.0, 5.0), 4.5),
            Err(ProbeError::BallOutOfBounds { .. })
        ));
        let ball = MirrorBall::new(img, (5.0, 5.0), 5.0).unwrap();
        assert!(matches!(
            mirrorball_to_latlong(&ball, dims(8, 8)),
            Err(ProbeError::NotTwoToOne(_))
        ));
    }

    #[test]
    fn single_pixel_probe_gives_delta() {
        let d = dims(16, 8);
        let mut data = vec![0.0; d.pixel_count() * 3];
        let p0 = 3 * 16 + 5;
        data[p0 * 3..p0 * 3 + 3].copy_from_slice(&[2.0, 2.0, 2.0]);
        let probe = LatLongMap::new(ImageF::from_dims(d, data).unwrap()).unwrap();
        let fp = footprint_from_probe(&probe).unwrap();
        let omega = solid_angle_map(d).unwrap();
        assert!(close(fp.get(5, 3), 1.0 / omega.get(5, 3), 1e-9));
        assert_eq!(fp.values().iter().filter(|&&v| v != 0.0).count(), 1);
        assert!(close(fp.integral(), 1.0, 1e-12));
    }

    #[test]
    fn footprint_is_scale_invariant_and_thresholded() {
        let d = dims(32, 16);
        let probe = LatLongMap::from_fn(d, |t, p| {
            let lobe = (-(t - 1.0).powi(2) * 4.0 - (p - 0.5).powi(2)).exp();
            [lobe, 0.5 * lobe, 0.1]
        })
        .unwrap();
        let a = footprint_from_probe(&probe).unwrap();
        let doubled = LatLongMap::new(probe.image().scaled(2.0)).unwrap();
        let b = footprint_from_probe(&doubled).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!(close(*x, *y, 1e-12 * x.abs().max(1.0)));
        }
        assert!(close(a.integral(), 1.0, 1e-9));
        // the constant 0.1 blue floor is under 5% of the peak once the lobe fades
        assert!(a.values().contains(&0.0));

        let dark = LatLongMap::new(ImageF::zeros(d)).unwrap();
        assert!(matches!(footprint_from_probe(&dark), Err(ProbeError::EmptyFootprint)));
    }

    #[test]
    fn two_equal_blobs_share_mass() {
        // brute force: each blob's mass is Σ F ω over its own pixels
        let d = dims(32, 16);
        let omega = solid_angle_map(d).unwrap();
        let mut data = vec![0.0; d.pixel_count() * 3];
        // same rows so the per-pixel solid angles match
        let blob_a = [(3, 5), (4, 5), (3, 6)];
        let blob_b = [(20, 5), (21, 5), (20, 6)];
        for &(u, v) in blob_a.iter().chain(&blob_b) {
            let i = (v * 32 + u) * 3;
            data[i..i + 3].copy_from_slice(&[1.0, 1.0, 1.0]);
        }
        let fp = footprint_from_probe(&LatLongMap::new(ImageF::from_dims(d, data).unwrap()).unwrap()).unwrap();
        let mass = |blob: &[(usize, usize)]| -> f64 { blob.iter().map(|&(u, v)| fp.get(u, v) * omega.get(u, v)).sum() };
        assert!(close(mass(&blob_a), 0.5, 1e-12));
        assert!(close(mass(&blob_b), 0.5, 1e-12));
    }

    #[test]
    fn delta_footprints_hit_expected_pixels() {
        let d = dims(64, 32);
        let fps = delta_footprints(&[(PI / 2.0, 0.0)], d).unwrap();
        assert!(fps[0].get(32, 16) > 0.0);
        assert_eq!(fps[0].values().iter().filter(|&&v| v != 0.0).count(), 1);

        let dirs = [(0.3, -2.0), (1.5, 0.1), (2.9, 3.0)];
        let fps = delta_footprints(&dirs, d).unwrap();
        assert_eq!(fps.len(), 3);
        assert!(fps.iter().all(|f| close(f.integral(), 1.0, 1e-12)));
        let permuted = delta_footprints(&[dirs[2], dirs[0], dirs[1]], d).unwrap();
        assert_eq!(permuted, vec![fps[2].clone(), fps[0].clone(), fps[1].clone()]);

        assert!(matches!(
            delta_footprints(&[(1.0, 1.0), (1.0, 1.0001)], d),
            Err(ProbeError::DirectionCollision {
                first: 0,
                second: 1,
                ..
            })
        ));
    }

    #[test]
    fn projection_identities() {
        let d = dims(32, 16);
        let dirs = [(0.4, 0.0), (1.6, 1.0), (2.5, -2.0)];
        let fps = delta_footprints(&dirs, d).unwrap();

        let zero = LatLongMap::new(ImageF::zeros(d)).unwrap();
        assert!(project_environment(&zero, &fps)
            .unwrap()
            .as_slice()
            .iter()
            .all(|w| *w == [0.0; 3]));

        let constant = LatLongMap::new(ImageF::filled(d, [0.25, 1.5, 4.0])).unwrap();
        for w in project_environment(&constant, &fps).unwrap().as_slice() {
            assert!(close(w[0], 0.25, 1e-12) && close(w[1], 1.5, 1e-12) && close(w[2], 4.0, 1e-12));
        }

        // unit radiance over the k-th footprint's support
        let probe = LatLongMap::from_fn(d, |t, _| if t < 0.8 { [1.0; 3] } else { [0.0; 3] }).unwrap();
        let fp = footprint_from_probe(&probe).unwrap();
        let w = project_environment(&probe, &[fp]).unwrap();
        assert!(close(w.get(0)[1], 1.0, 1e-12));

        // delta footprints sample the environment exactly
        let env = LatLongMap::from_fn(d, |t, p| [t, p.abs(), 4.0 + t * p.sin()]).unwrap();
        let w = project_environment(&env, &fps).unwrap();
        for (k, &(t, p)) in dirs.iter().enumerate() {
            let (u, v) = nearest_pixel(d, t, p);
            let expected = env.radiance(u, v);
            for c in 0..3 {
                assert!(close(w.get(k)[c], expected[c], 1e-12 * expected[c].abs().max(1.0)));
            }
        }

        let other = delta_footprints(&dirs, dims(16, 8)).unwrap();
        assert!(matches!(
            project_environment(&env, &other),
            Err(ProbeError::FootprintDims { index: 0, .. })
        ));
    }

    #[test]
    fn latlong_validation_and_sampling() {
        assert!(matches!(
            LatLongMap::new(ImageF::zeros(dims(4, 4))),
            Err(ProbeError::NotTwoToOne(_))
        ));
        let neg = ImageF::new(2, 1, vec![-1.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(LatLongMap::new(neg), Err(ProbeError::NegativeRadiance)));

        let d = dims(16, 8);
        let env = LatLongMap::from_fn(d, |t, p| [t, p + PI, 1.0]).unwrap();
        for v in 0..8 {
            for u in 0..16 {
                let (t, p) = pixel_direction(d, u, v);
                let s = env.sample(direction_vector(t, p));
                let r = env.radiance(u, v);
                for c in 0..3 {
                    assert!(close(s[c], r[c], 1e-9), "({u},{v}) c{c}: {} vs {}", s[c], r[c]);
                }
            }
        }
    }

    #[test]
    fn weights_arithmetic() {
        assert!(LightingWeights::new(vec![]).is_err());
        assert!(LightingWeights::new(vec![[-1.0, 0.0, 0.0]]).is_err());
        let a = LightingWeights::one_hot(3, 1);
        let b = LightingWeights::new(vec![[1.0, 2.0, 3.0]; 3]).unwrap();
        let s = a.add(&b).unwrap();
        assert_eq!(s.get(1), [2.0, 3.0, 4.0]);
        assert_eq!(b.scaled(2.0).get(0), [2.0, 4.0, 6.0]);
        assert_eq!(b.channel(2), vec![3.0; 3]);
        assert!(a.add(&LightingWeights::zeros(2)).is_err());
    }
}
