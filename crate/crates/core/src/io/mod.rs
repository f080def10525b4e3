pub mod config;
pub mod container;

pub use config::{Arch, RunConfig};
pub use container::{Container, NamedTensor, TensorData};
