//! Numerical building blocks: polynomials, quadrature, Laplace inversion and
//! dense linear algebra helpers.

pub mod laplace;
pub mod linalg;
pub mod poly;
pub mod quad;
