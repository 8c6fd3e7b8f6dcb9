//! Dense feed-forward networks: layout, passes, Adam and Jacobians.

pub mod adam;
pub(crate) mod gemm;
pub mod init;
pub mod jacobian;
pub mod mlp;
pub mod params;
pub mod spec;

pub use adam::{AdamConfig, AdamState};
pub use jacobian::{decoder_jacobian, finite_diff_jacobian, JacobianMatrix};
pub use mlp::{backward, forward, Gradients};
pub use params::ParamVector;
pub use spec::{Activation, MlpSpec};
