//! Minimum-distance estimation of the mixing distribution.
//!
//! For an empirical PMF `α` over the distinct observed values
//! `i_1 < … < i_q`, the estimator minimizes
//!
//! ```text
//! Φ(G) = Σ_x φ(α_x, μ_x(G)),   μ_x(G) = ∫ f(i_x; θ) dG(θ),
//! ```
//!
//! over probability measures on `[0, θ*]`. The constant `w` term of the
//! divergence is left out since it does not move the minimizer.
//!
//! `Φ` is convex in `G`, and its directional derivative toward a point mass
//!
//! ```text
//! Φ′(G, δ_λ) = Σ_x ∂φ/∂y₂(α_x, μ_x(G)) (f(i_x; λ) − μ_x(G))
//! ```
//!
//! is nonnegative for every `λ` exactly at the optimum. Both solvers grow
//! the support where this derivative is most negative:
//!
//! * [`vdm`] adds one point mass per iteration and picks its weight by a
//!   line search;
//! * [`isdm`] adds every local minimizer of the derivative and re-solves the
//!   weights over the whole support with [`fully_corrective_weights`].
//!
//! [`oracle_grid_solver`] solves the same problem over a fixed dense grid
//! and is used as a reference.

mod methods;
mod model;
mod search;
mod weights;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

pub use methods::{isdm, solve, vdm};
pub use weights::{fully_corrective_weights, WeightFit, MAX_WEIGHT_ITERS};

use crate::divergences::Divergence;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::measures::{canonicalize, AtomicMeasure, EmpiricalPmf};
use model::{dot, Model};

/// Solver parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub divergence: Divergence,
    /// Number of points in the uniform λ-grid.
    pub grid_size: usize,
    /// Golden-section steps refining the best grid cell.
    pub refine_iters: usize,
    /// Stop once `min_λ Φ′(G, δ_λ) ≥ −stop_tol`.
    pub stop_tol: f64,
    pub max_outer_iters: usize,
    /// Frank–Wolfe gap tolerance of the weight solver.
    pub fully_corrective_tol: f64,
    pub merge_radius: f64,
    pub prune_eps: f64,
    /// Location of the starting point mass; `θ*/2` when `None`.
    pub initial_location: Option<f64>,
    /// Re-solve all weights after each vertex step of [`vdm`].
    pub polish_weights: bool,
}

impl SolverConfig {
    pub fn new(divergence: Divergence) -> Self {
        Self {
            divergence,
            grid_size: 512,
            refine_iters: 60,
            stop_tol: 1e-8,
            max_outer_iters: 500,
            fully_corrective_tol: 1e-10,
            merge_radius: crate::measures::DEFAULT_MERGE_RADIUS,
            prune_eps: crate::measures::DEFAULT_PRUNE_EPS,
            initial_location: None,
            polish_weights: true,
        }
    }

    pub fn initial_location(&self, theta_star: f64) -> f64 {
        self.initial_location.unwrap_or(0.5 * theta_star)
    }

    pub fn validate(&self, theta_star: f64) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::Config(format!(
                "grid size must be at least 2, got {}",
                self.grid_size
            )));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::Config(format!(
                "stop tolerance must be nonnegative, got {}",
                self.stop_tol
            )));
        }
        if !(self.fully_corrective_tol > 0.0) {
            return Err(Error::Config("weight tolerance must be positive".into()));
        }
        if !(self.merge_radius >= 0.0 && self.prune_eps >= 0.0 && self.prune_eps < 1.0) {
            return Err(Error::Config(
                "merge radius and prune threshold must be nonnegative".into(),
            ));
        }
        let l0 = self.initial_location(theta_star);
        if !(l0 > 0.0 && l0 < theta_star) {
            return Err(Error::Config(format!(
                "initial location {l0} must lie strictly inside (0, {theta_star})"
            )));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::new(Divergence::KullbackLeibler)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Vdm,
    Isdm,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Vdm, Method::Isdm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Vdm => "vdm",
            Method::Isdm => "isdm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vdm" => Ok(Method::Vdm),
            "isdm" => Ok(Method::Isdm),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected vdm or isdm)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStatus {
    /// The derivative certificate `min Φ′ ≥ −τ` holds.
    Converged,
    /// The iteration cap was reached first.
    MaxIters,
    /// No update could lower the objective any further while the
    /// certificate still failed.
    Stalled,
}

impl SolverStatus {
    pub fn name(self) -> &'static str {
        match self {
            SolverStatus::Converged => "converged",
            SolverStatus::MaxIters => "max_iters",
            SolverStatus::Stalled => "stalled",
        }
    }
}

impl fmt::Display for SolverStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// State after one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    /// `Φ(G_N)`.
    pub objective: f64,
    /// Smallest `Φ′(G_N, δ_λ)` found by the λ-search at `G_N`.
    pub min_derivative: f64,
    pub atom_count: usize,
    /// Locations added to reach `G_N`.
    pub new_locations: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace {
    pub entries: Vec<TraceEntry>,
    pub status: SolverStatus,
}

impl SolverTrace {
    pub fn objectives(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.objective).collect()
    }

    /// Number of update steps taken.
    pub fn iterations(&self) -> usize {
        self.entries.len().saturating_sub(1)
    }

    /// `min Φ′` at the returned measure.
    pub fn final_min_derivative(&self) -> f64 {
        self.entries.last().map_or(f64::NAN, |e| e.min_derivative)
    }

    pub fn final_objective(&self) -> f64 {
        self.entries.last().map_or(f64::NAN, |e| e.objective)
    }

    /// Whether `Φ(G_{N+1}) ≤ Φ(G_N) + slack` along the whole trace.
    pub fn is_monotone(&self, slack: f64) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[1].objective <= w[0].objective + slack)
    }

    /// CSV with columns `iteration,objective,min_derivative,atom_count,new_locations`;
    /// the last column joins locations with `;`.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "iteration",
            "objective",
            "min_derivative",
            "atom_count",
            "new_locations",
        ])?;
        for e in &self.entries {
            let locs: Vec<String> = e.new_locations.iter().map(|l| l.to_string()).collect();
            w.write_record([
                e.iteration.to_string(),
                e.objective.to_string(),
                e.min_derivative.to_string(),
                e.atom_count.to_string(),
                locs.join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_measure(kernel: &KernelSpec, g: &AtomicMeasure) -> Result<()> {
    if g.theta_star() > kernel.theta_star() {
        return Err(Error::Domain(format!(
            "measure bound {} exceeds kernel bound {}",
            g.theta_star(),
            kernel.theta_star()
        )));
    }
    Ok(())
}

/// `Φ(G) = Σ_x φ(α_x, μ_x(G))`.
pub fn objective(
    div: Divergence,
    emp: &EmpiricalPmf,
    kernel: &KernelSpec,
    g: &AtomicMeasure,
) -> Result<f64> {
    check_measure(kernel, g)?;
    let model = Model::new(div, emp, kernel);
    model.checked_value(&model.mu_of_measure(g))
}

/// `Φ′(G, δ_λ)`.
pub fn directional_derivative(
    div: Divergence,
    emp: &EmpiricalPmf,
    kernel: &KernelSpec,
    g: &AtomicMeasure,
    lambda: f64,
) -> Result<f64> {
    check_measure(kernel, g)?;
    if !(0.0..=kernel.theta_star()).contains(&lambda) {
        return Err(Error::Domain(format!(
            "lambda = {lambda} outside [0, {}]",
            kernel.theta_star()
        )));
    }
    if g.is_point_mass_at_zero() && emp.values().iter().any(|&x| x > 0) {
        return Err(Error::Domain(
            "the directional derivative is undefined at the point mass at zero when positive values are observed"
                .into(),
        ));
    }
    let model = Model::new(div, emp, kernel);
    let mu = model.mu_of_measure(g);
    if let Some(x) = model.first_infinite_slope(&mu) {
        return Err(Error::SupportViolation { value: x });
    }
    let grad = model.grad(&mu);
    Ok(dot(&grad, &model.column(lambda)) - dot(&grad, &mu))
}

/// Average log-likelihood `(1/n) Σ_i ln h_G(X_i) = Σ_x α_x ln μ_x(G)`.
pub fn log_likelihood(emp: &EmpiricalPmf, kernel: &KernelSpec, g: &AtomicMeasure) -> Result<f64> {
    check_measure(kernel, g)?;
    let model = Model::new(Divergence::KullbackLeibler, emp, kernel);
    let mu = model.mu_of_measure(g);
    if let Some(x) = model.first_infinite_slope(&mu) {
        return Err(Error::SupportViolation { value: x });
    }
    Ok(model.alpha.iter().zip(&mu).map(|(a, m)| a * m.ln()).sum())
}

/// Minimizes `Φ` over measures supported on the uniform grid of
/// `grid_points` points covering `[0, θ*]`. Returns the pruned minimizer
/// and the optimal value.
pub fn oracle_grid_solver(
    emp: &EmpiricalPmf,
    kernel: &KernelSpec,
    div: Divergence,
    grid_points: usize,
) -> Result<(AtomicMeasure, f64)> {
    if grid_points < 2 {
        return Err(Error::Config(format!(
            "grid needs at least 2 points, got {grid_points}"
        )));
    }
    let ts = kernel.theta_star();
    let grid: Vec<f64> = (0..grid_points)
        .map(|i| ts * i as f64 / (grid_points - 1) as f64)
        .collect();
    let model = Model::new(div, emp, kernel);
    let cols = model.columns(&grid);
    let fit = weights::solve_weights(&model, &cols, None, 1e-12, MAX_WEIGHT_ITERS)?;
    let measure = canonicalize(
        ts,
        grid.iter().copied().zip(fit.weights.iter().copied()),
        0.0,
        crate::measures::DEFAULT_PRUNE_EPS,
    )?;
    Ok((measure, fit.objective))
}
