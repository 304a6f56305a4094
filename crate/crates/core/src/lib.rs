//! Minimum-distance estimation of the mixing distribution in mixtures of
//! discrete exponential-family kernels.
//!
//! Data `X_1, …, X_n` are drawn from `h_Q(x) = ∫ g(θ) w(x) θ^x dQ(θ)` with
//! `Q` supported on `[0, θ*]`. The estimator picks the measure `Ĝ` that
//! minimizes a divergence between the empirical PMF and `h_G`, and its
//! quality is measured by the Wasserstein-1 distance, both exactly and
//! after Gaussian smoothing.
//!
//! * [`measures`]: atomic mixing measures and empirical PMFs.
//! * [`kernels`]: Poisson, geometric and custom kernels, mixture PMFs.
//! * [`divergences`]: the five divergences and their `φ` functions.
//! * [`solver`]: the objective, its directional derivative, the VDM and
//!   ISDM solvers, the weight solver and a dense-grid reference solver.
//! * [`transport`]: `W₁` and its Gaussian-smoothed version.
//! * [`hermite`]: smoothed Lipschitz functions and their Taylor
//!   approximation.
//! * [`experiments`]: sampling and the reproducible Monte Carlo studies.
//!
//! ```
//! use mixdist::divergences::Divergence;
//! use mixdist::kernels::KernelSpec;
//! use mixdist::measures::EmpiricalPmf;
//! use mixdist::solver::{vdm, SolverConfig, SolverStatus};
//!
//! let kernel = KernelSpec::poisson(6.0)?;
//! let emp = EmpiricalPmf::from_samples(&[0, 1, 1, 2, 4, 5, 5, 6])?;
//! let (fit, trace) = vdm(&emp, &kernel, &SolverConfig::new(Divergence::KullbackLeibler))?;
//! assert_eq!(trace.status, SolverStatus::Converged);
//! assert!(trace.final_min_derivative() >= -1e-8);
//! assert!((fit.weights().sum::<f64>() - 1.0).abs() < 1e-12);
//! # Ok::<(), mixdist::Error>(())
//! ```

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod divergences;
pub mod error;
pub mod experiments;
pub mod hermite;
pub mod kernels;
pub mod measures;
pub mod quadrature;
pub mod solver;
pub mod transport;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/measures.md")]
    struct Measures;
    #[doc = include_str!("../../../book/src/kernels.md")]
    struct Kernels;
    #[doc = include_str!("../../../book/src/divergences.md")]
    struct Divergences;
    #[doc = include_str!("../../../book/src/solvers.md")]
    struct Solvers;
    #[doc = include_str!("../../../book/src/transport.md")]
    struct Transport;
    #[doc = include_str!("../../../book/src/smoothing.md")]
    struct Smoothing;
    #[doc = include_str!("../../../book/src/studies.md")]
    struct Studies;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
