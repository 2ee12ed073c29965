//! Numerical checks of the geometric claims behind representation
//! degeneration.

pub mod decomposition;
pub mod extreme;
pub mod hull2d;
pub mod instances;
pub mod layernorm_check;
pub mod negdir;
pub mod perturbation;

pub use decomposition::{rare_token_decomposition, rare_token_decompositions, DecompositionReport};
pub use extreme::{simulate_extreme_case, ExtremeCaseTrace};
pub use hull2d::hull_contains_origin_2d;
pub use layernorm_check::{layernorm_origin_check, LayerNormReport};
pub use negdir::{check_direction_convexity, find_negative_direction, NegDirCertificate};
pub use perturbation::{verify_perturbation_bound, PerturbationReport};
