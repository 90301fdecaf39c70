//! Boundary-control construction of De Branges spaces.
//!
//! Three dynamical systems are covered: the semi-infinite discrete
//! Schrodinger operator, the half-line wave (Schrodinger) equation and the
//! half-line Dirac system. For each one the crate computes the response
//! kernel from forward dynamics, assembles the connecting operator, solves
//! the Krein equation for the reproducing kernel and compares it against
//! the kernel built directly from the spectral solution and its
//! Hermite-Biehler function.
//!
//! Index conventions used throughout:
//!
//! | object                | storage                                         |
//! |-----------------------|-------------------------------------------------|
//! | discrete control `f`  | `f[t]` is `f_t`, oldest sample first            |
//! | discrete state        | `u[t][n]` is `u_{n,t}`, `n = 0` is the boundary  |
//! | potential `b`         | `b[n-1]` is `b_n`                               |
//! | response vector       | `r[k]` is `r_k`, `r[0] = 1`                     |
//! | connecting matrix     | row/column `i` pairs with control sample `f_i`  |
//! | Krein solution `j^z`  | `j[k]` is `j^z_k`, same layout as a control     |
//! | continuous samples    | node `k` sits at `k * step`                     |

pub mod bridge;
pub mod debranges;
pub mod dirac;
pub mod discrete;
mod error;
pub mod grid;
pub mod measures;
pub mod tridiag;
pub mod validation;
pub mod wave;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Shorthand for a complex number built from its parts.
#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}
