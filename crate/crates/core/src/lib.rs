//! Heteroclinic solutions of `-Δu + A(εx, y) V'(u) = 0` on the cylinder
//! `R x D` with lateral Neumann conditions, connecting `u = 1` at
//! `x -> -∞` to `u = -1` at `x -> +∞`.
//!
//! Solutions are computed by minimizing the renormalized energy
//! `J(U) = Σ_k ∫_{Ω_k} ½|∇U|² + A V(U)` over a truncated cylinder with
//! clamped ends, and the library compares the minimization levels obtained
//! for different coefficient fields.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod gamma;
pub mod grid;
pub mod model;
pub mod optimize;
pub mod solve;

pub use energy::{
    beta_functional, compute_beta, energy_gradient, lagrangian, pde_residual, total_energy,
    BetaConfig, BetaResult, EnergyBreakdown, ResidualReport,
};
pub use error::{Error, Result};
pub use gamma::{
    clip, glue, normalization_shifts, seed_phi, tail_norms, translate, GammaCheck,
    NormalizationShifts, TailProfile,
};
pub use grid::{
    gradient_sq, integral, laplacian, slab_integral, CrossSection, CylinderGrid, Field,
    GridFunction,
};
pub use model::{
    exponential_gap, gaussian_gap, make_class1, make_class2, sample_on_grid, validate_coefficient,
    validate_potential, well_profile, CertificationReport, ClassTag, CoefficientField,
    HypothesisCheck, Potential, Witness,
};
pub use solve::{
    compare_class1, compare_class2, estimate_levels, minimize, minimize_sampled, sweep_epsilon,
    Class1Comparison, Class2Comparison, LevelProblem, LevelRow, LevelTable, Seed, SolveConfig,
    SolveReport, StepRule, SweepRow, SweepTable, TraceEntry,
};
