//! Background metric construction near a smooth divisor.

pub mod build;
pub mod geometry;
pub mod jets;
pub mod volume;

pub use build::{
    build_background_u, choose_gluing_parameters, q_function, tilde_u, BackgroundParams, BackgroundPotential,
    BackgroundResult, GluingParams, PotentialMode, Region,
};
pub use geometry::{GeometryKind, ModelGeometry, VPotential};
pub use jets::Jet2;
pub use volume::{
    default_k, dw_evidence, log_volume_ratio, log_volume_ratio_at, near_divisor_plan, ricci_identity_check,
    ricci_potential, ricci_potential_at, standard_f0, volume_expansion_coeffs, RicciMode, SliceGrid, VolumeExpansion,
};
