//! Cross-representation alignment for 3D human shape and pose estimation
//! from synthetic joint heatmaps and IUV maps.

pub mod autodiff;
pub mod body;
pub mod checks;
pub mod cli;
pub mod camera;
pub mod error;
pub mod io;
pub mod iuv;
pub mod metrics;
pub mod network;
pub mod represent;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Tensor};
