//! Minimal dense-tensor reverse-mode automatic differentiation.
//!
//! A [`Graph`] records each operation's output value together with a
//! backward rule. Graphs are built per forward pass and consumed by one
//! call to [`Graph::backward`]. Only scalar-tensor broadcasting is
//! supported; every other op requires explicit, matching shapes.

mod conv;
mod geom_ops;
pub mod gradcheck;
mod graph;
pub mod nn;
mod ops;
pub mod optim;
pub mod params;

pub(crate) use geom_ops::{axis_angle_matrix, rot6d_forward};
pub use geom_ops::{barycentric, edge, PixelFace, SparseRows, UvAssignment, AXIS_ANGLE_TAYLOR, ROT6D_MIN_NORM};
pub use gradcheck::{gradcheck, gradcheck_entries, GradcheckOptions, GradcheckReport};
pub use graph::{Function, Graph, Var};
pub use optim::{AdamConfig, AdamState};
pub use params::{Binding, ParamId, ParamStore};

#[cfg(test)]
mod tests;
