//! Frequency-domain engine for stochastic diffeomorphic image deformation.
//!
//! The crate shoots geodesics of the EPDiff equation on a truncated Fourier
//! representation of the velocity field, perturbs them with Eulerian noise
//! fields under Stratonovich calculus, evolves the first and second moments
//! of the resulting warps through closed ODEs, and estimates the noise-field
//! parameters from image populations by moment matching.
//!
//! Modules follow the pipeline: [`fields`]/[`kernel`]/[`operators`] hold the
//! spectral calculus, [`flow`] the deterministic and stochastic integrators,
//! [`moments`] the moment ODEs, [`similarity`] the image metrics and
//! [`estimation`] the two-stage parameter search.

pub mod error;
pub mod estimation;
pub mod fields;
mod fft;
pub mod flow;
pub mod grid;
pub mod image;
pub mod integrators;
pub mod io;
pub mod kernel;
pub mod moments;
pub mod noise;
pub mod operators;
pub mod similarity;
pub mod testing;

pub use error::{Error, Result};
pub use estimation::{
    estimate, gradient_descent, objective_f, objective_g, random_init, DataMoments,
    DescentOptions, DescentStatus, EstimateOptions, EstimateResult, MomentModel, ParamVector,
    SearchBounds,
};
pub use fields::{to_spatial, to_spectral, FourierVelocity, SpatialVectorField};
pub use flow::{
    derive_seed, epdiff_deterministic_step, epdiff_stochastic_step, integrate_flow,
    integrate_flow_deterministic, warp_image, DeformationGrid, FlowOptions, FlowResult, FlowState,
    RecordMode, WienerPath,
};
pub use grid::GridSpec;
pub use image::Image;
pub use kernel::{momentum_to_velocity, velocity_to_momentum, KernelParams};
pub use moments::{
    evolve_moments, mean_psi_rhs, mean_v_rhs, moment_images, var_psi_rhs, MomentImages,
    MomentState,
};
pub use noise::NoiseField;
pub use operators::{coadjoint, jacobian_contraction, spectral_jacobian, truncated_convolution};
pub use similarity::{
    l2_distance, mutual_information, normalized_mutual_information, HistogramConfig,
};
