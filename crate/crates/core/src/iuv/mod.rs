//! Software rasterization of dense IUV correspondence maps.
//!
//! Visibility and part indices are piecewise constant; only the U/V
//! interpolation is differentiable, via [`crate::autodiff::Graph::interp_uv`]
//! with a frozen [`UvAssignment`](crate::autodiff::UvAssignment).

mod export;
mod map;
mod raster;

pub use export::{export_iuv_image, quantize_iuv, read_iuv_image};
pub use map::{
    compact_to_onehot, decode_part, downsample_iuv, onehot_to_compact, part_value, warp_crop, IuvMap, OneHotIuv,
};
pub use raster::{iuv_from_buffers, project_vertices, rasterize, rasterize_iuv, uv_assignment, Projection, RasterBuffers};
