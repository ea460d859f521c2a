//! Differential calculus, optimal transport and curvature checks on finite
//! metric measure spaces.
//!
//! Every differential object lives at an explicit neighborhood scale `h`
//! carried by [`space::FiniteMms`]. Continuum statements are recovered by
//! refining the spacing and the scale together.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::redundant_guards)]

pub mod curvature;
pub mod directional;
pub mod error;
pub mod heatflow;
pub mod io;
pub mod laplacian;
pub mod normed;
pub mod rng;
pub mod sobolev;
pub mod space;
pub mod transport;

pub use error::{MmsError, Result};
pub use space::FiniteMms;

/// One side of a one-sided derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }

    /// `Plus` for nonnegative `s`, `Minus` otherwise.
    pub fn from_sign(s: f64) -> Side {
        if s >= 0.0 {
            Side::Plus
        } else {
            Side::Minus
        }
    }
}
