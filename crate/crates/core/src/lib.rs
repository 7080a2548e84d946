//! Weighted polynomial spaces on the Riemann sphere: Bergman kernels,
//! weighted equilibrium potentials, random sections and their zeros, and
//! quantum-ergodicity diagnostics.

pub mod dictionary;
pub mod ensembles;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod hilb;
pub mod model;
pub mod onbstats;
pub mod qe;
pub mod quadrature;
pub mod zeros;

pub use error::{Error, Result};
pub use grid::{GridKind, GridSpec, PotentialGrid};
pub use hilb::{gram, log_bergman_potential, orthonormalize, GramMatrix, WeightedSpace};
pub use model::{
    bernstein_markov_ratio, build_measure, build_weight, BuiltinModel, MeasureSpec, Model, SupportKind,
    SupportMeasure, Weight, WeightSpec,
};
