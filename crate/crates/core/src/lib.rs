//! Geometry of maximum-principle certificates for homogeneous
//! sum-of-squares operators `L = X_1^2 + ... + X_m^2` on `R^N`, where
//! the generators are polynomial vector fields homogeneous of degree 1
//! under an anisotropic dilation.
//!
//! The crate provides, layer by layer:
//!
//! - [`poly`], [`operator`]: exact symbolic calculus for the generator
//!   fields (brackets, homogeneity, rank checks, presets);
//! - [`volume`]: the commutator-determinant volume polynomial
//!   `Lambda(x,r)`, its profile `E = Lambda/r^2` and inverse `H`;
//! - [`distance`]: upper-bound estimation of the control distance by
//!   subunit path optimization, Monte Carlo ball volumes, and the
//!   empirical volume constant;
//! - [`gamma`]: the surrogate fundamental-solution quasi-metric
//!   `gamma_hat = E(x, d_hat)`, its balls, volumes and quasi-triangle
//!   constant;
//! - [`criteria`]: cones, ball-cover summability certificates, the
//!   dyadic covering construction for discrete potentials, and the
//!   maximum-principle classifier built on them;
//! - [`fd`]: finite-difference verification of discrete maximum and
//!   comparison principles on weighted boxes.

pub mod criteria;
pub mod distance;
pub mod error;
pub mod fd;
pub mod gamma;
pub mod operator;
pub mod poly;
pub mod volume;

pub use error::MpError;
pub use operator::{heisenberg, grushin3, parse_operator_spec, preset, OperatorSpec};

/// Default seed used by CLI and tests for reproducible runs.
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Run one closure per item, in parallel when the `parallel` feature is
/// enabled, collecting results in input order.
pub(crate) fn map_maybe_parallel<T, U, F>(items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}
