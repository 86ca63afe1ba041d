//! Generalized Mehler semigroups on R^d.
//!
//! An operator group `T(t) = exp(tQ)` and a Lévy process `Y` define the
//! Ornstein–Uhlenbeck-type random integrals `V(t) = ∫ T(t−s) dY(s)` and
//! `Z(t) = ∫ T(s) dY(s)`, the cocycle family `ρ_t = L(V(t))`, and the Mehler
//! operators `(𝒯_t f)(x) = E f(T(t)x + V(t))`. This crate builds all of these
//! numerically and checks their algebra by quadrature, Monte Carlo and exact
//! discrete identities.

pub mod cli;
pub mod error;
pub mod integral;
pub mod levy;
pub mod mc;
pub mod mehler;
pub mod par;
pub mod quadrature;
pub mod rng;
pub mod semigroup;
pub mod stats;
pub mod urbanik;

pub use error::{Error, Result};
pub use integral::{
    ou_v, ou_v_at, ou_z, ou_z_trajectory, random_integral, reconstruct_y, Partition, Trajectory,
};
pub use levy::{
    char_exponent, empirical_cf, sample_path, CharExponent, JumpLaw, LevyModel, LevyModelSpec,
    LevyPath,
};
pub use mc::McPlan;
pub use mehler::{mehler_apply, semigroup_residual, FleetFunction, MehlerExponent, TestFunction};
pub use rng::RngStream;
pub use semigroup::OperatorGroup;
pub use stats::{ks_two_sample, project, TwoSampleReport};
pub use urbanik::{factor_convergence, infinitesimality_profile, StationaryExponent};
