//! Two-stage 4D splat reconstruction on planar scenes.
//!
//! A static set of anisotropic 2D Gaussians is fitted first. A tri-plane
//! deformation field is then fitted to the dynamics, one group of timesteps
//! at a time, with an alignment penalty that keeps newly fitted timesteps
//! consistent with their nearest already-fitted neighbour.

pub mod camera;
pub mod checkpoint;
pub mod error;
pub mod field;
pub mod fixtures;
pub mod grad;
pub mod gradcheck;
pub mod metrics;
pub mod raster;
pub mod render;
pub mod scenegen;
pub mod seed;
pub mod splat;
pub mod trainer;

pub use camera::Camera;
pub use error::{Error, Result};
pub use field::{Bounds, DeformationField, FieldShape};
pub use raster::Image;
pub use render::{render, render_naive_reference, render_with, RenderOptions};
pub use splat::{Scene, Splat};
