//! Relighting faces captured under one-light-at-a-time (OLAT) illumination.
//!
//! A reflectance field is a stack of OLAT images. Relighting is a weighted sum
//! of those images, with weights obtained by projecting a lat-long environment
//! map onto per-light footprints measured with a mirror ball. In the other
//! direction, [`estimate`] recovers a per-frame reflectance field from a video
//! frame, its lighting and a set of exemplar fields.
//!
//! Modules, bottom-up:
//!
//! - [`imagecore`]: float RGB images, masks, PFM and PNG I/O, letterboxing
//! - [`probe`]: mirror-ball unwrapping, footprints, environment projection
//! - [`gamma`]: the dual-gamma camera response and its fit
//! - [`relight`]: relighting and the losses with their gradient
//! - [`estimate`]: exemplar blending and per-frame field estimation
//! - [`stagesim`]: a synthetic light stage used for end-to-end checks
//! - [`cli`]: the `olat-relight` command line
//!
//! Runnable walkthroughs live in `examples/`, e.g.
//! `cargo run --release --example simulate_light_stage`.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments,
    clippy::needless_range_loop
)]

pub mod cli;
pub mod estimate;
pub mod gamma;
pub mod imagecore;
pub mod probe;
pub mod relight;
pub mod stagesim;

pub use estimate::{estimate_frame, estimate_video, EstimationConfig, ExemplarSet, Solver};
pub use gamma::{apply_dual_gamma, fit_dual_gamma, DualGamma};
pub use imagecore::{ImageDims, ImageF, MaskImage};
pub use probe::{project_environment, BasisFootprint, LatLongMap, LightingWeights, MirrorBall};
pub use relight::{relight, ReflectanceField};
