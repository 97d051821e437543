//! Simulation and statistical verification of left random walks on GL_d(R).
//!
//! The crate samples iid matrices ε_k from a measure μ, runs the product
//! A_n = ε_n ⋯ ε_1 together with its projective chain W_n, and estimates the
//! quantities that govern the central limit behaviour of log‖A_n x‖: the
//! Lyapunov exponent, the asymptotic variance, coupling dependence
//! coefficients, the m-dependent blocking decomposition and empirical
//! Kolmogorov distances to the Gaussian limit.

// `!(x >= a)` rejects NaN along with small values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blocking;
pub mod depcoef;
pub mod ensemble;
pub mod estimators;
pub mod io;
pub mod error;
pub mod linalg;
pub mod projective;
pub mod rng;
pub mod stats;
pub mod walk;

pub use blocking::{BlockLayout, BlockSample};
pub use depcoef::{DepCoefCurve, PairStrategy};
pub use ensemble::{moment_diagnostic, Ensemble, EnsembleSpec, Family, GroupElement, MomentEstimate, ScalarLaw};
pub use error::{Error, Result};
pub use estimators::{GapReport, KolmogorovReport, LyapunovEstimate, RateFit, RateModel, VarianceEstimate, VarianceMethod};
pub use blocking::{ScalingReport, StructureOptions, StructureReport};
pub use depcoef::DecayReport;
pub use linalg::SquareMatrix;
pub use projective::{act, alignment, cocycle, ProjectivePoint, StationarySampler};
pub use rng::{RngStream, Seed, Stage};
pub use walk::{run_path, run_stationary_batch, BatchOptions, Observable, PathResult, SampleMatrix, WalkAccumulator};
