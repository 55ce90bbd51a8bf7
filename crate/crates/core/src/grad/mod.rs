//! Gradient machinery: the rasterizer's reverse pass, a finite-difference
//! checker, and the Adam optimizer.

mod adam;
mod backward;
mod fd;

pub use adam::{project_splat_params, AdamState, BETA1, BETA2, DEFAULT_LR, EPSILON};
pub use backward::backward_render;
pub use fd::{finite_diff_check, FdEntry, FdReport, FdTolerance};
