//! Fluctuations of eigenvalue counts in β-ensembles with polynomial
//! potentials: equilibrium measures, orthonormal polynomial kernels, the
//! β = 1, 4 matrix kernels, Fredholm determinants of the characteristic
//! functional, and a Monte Carlo sampler to cross-check them.

pub mod error;
pub mod experiments;
pub mod fredholm;
pub mod matrix_kernels;
pub mod orthopoly;
pub mod potential;
pub mod quadrature;
pub mod sampler;

pub use error::{Error, Result};
pub use experiments::{
    merge_reports, run_clt, run_equilibrium, run_sample, run_variance_scan, run_verify_identities,
    Check, ExperimentConfig, ExperimentReport, MergedReport, SamplerKind,
};
pub use fredholm::{CharFunctionalResult, Method};
pub use matrix_kernels::Beta;
pub use orthopoly::{DiscretizedKernel, WeightedPolySystem};
pub use potential::{EquilibriumMeasure, PolynomialPotential, SupportSet};
pub use sampler::{CountStatistics, EnsembleSample, SamplerSettings};
