//! Scalar numerical kernels used by the optimal-protocol solver.

pub mod minimize;
pub mod quadrature;
pub mod roots;

pub use minimize::{brent_min, Minimum};
pub use quadrature::{Integral, Quadrature};
pub use roots::{brent, RootOptions};
