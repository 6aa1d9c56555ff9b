//! Bubble-tower solutions of `-Δu = |u|^{2*-2} u / [ln(e + |u|)]^ε` on a ball:
//! closed-form profiles, Green and Robin functions, the reduced
//! finite-dimensional system, the tower ansatz, a radial PDE solver and
//! numerical checks of the asymptotic estimates.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod constants;
pub mod error;
pub mod fit;
pub mod green;
pub mod profiles;
pub mod projection;
pub mod quadrature;
pub mod radial;
pub mod reduced;
pub mod tower;

pub use error::{Error, Result};
pub use green::{find_robin_min, BallDomain, GreenProvider, SearchBox};
pub use profiles::{
    bubble_at, bubble_radial, f_eps, f_eps_prime, psi_at, standard_bubble, BubbleParam, Dimension,
};
pub use quadrature::{integrate_rn, QuadResult, QuadSpec, TailBound};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
