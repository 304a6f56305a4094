//! The vertex-direction and intra-simplex-direction outer loops.

use super::model::{dot, Model};
use super::search::{argmin, golden_section, local_minima, LambdaGrid};
use super::weights::{solve_weights, MAX_WEIGHT_ITERS};
use super::{Method, SolverConfig, SolverStatus, SolverTrace, TraceEntry};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::measures::{canonicalize, AtomicMeasure, EmpiricalPmf};

/// Golden-section steps of the ε line search.
const LINE_SEARCH_ITERS: usize = 80;
/// Consecutive updates without a strict decrease tolerated before stopping.
const MAX_FLAT_UPDATES: usize = 3;
/// Relative increase of `Φ` tolerated when accepting an update, a few ulps.
const ROUNDING_SLACK: f64 = 4.0 * f64::EPSILON;

/// Vertex direction method: one new point mass per iteration at the
/// minimizer of `λ ↦ Φ′(G, δ_λ)`, mixed in with the best ε.
pub fn vdm(
    emp: &EmpiricalPmf,
    kernel: &KernelSpec,
    config: &SolverConfig,
) -> Result<(AtomicMeasure, SolverTrace)> {
    solve(Method::Vdm, emp, kernel, config)
}

/// Intra simplex direction method: every local minimizer of
/// `λ ↦ Φ′(G, δ_λ)` with negative derivative joins the support, then all
/// weights are re-optimized.
pub fn isdm(
    emp: &EmpiricalPmf,
    kernel: &KernelSpec,
    config: &SolverConfig,
) -> Result<(AtomicMeasure, SolverTrace)> {
    solve(Method::Isdm, emp, kernel, config)
}

pub fn solve(
    method: Method,
    emp: &EmpiricalPmf,
    kernel: &KernelSpec,
    config: &SolverConfig,
) -> Result<(AtomicMeasure, SolverTrace)> {
    let ts = kernel.theta_star();
    config.validate(ts)?;
    let model = Model::new(config.divergence, emp, kernel);
    let grid = LambdaGrid::new(&model, config.grid_size);
    let l0 = config.initial_location(ts);

    let mut g = AtomicMeasure::point_mass(ts, l0)?;
    let mut mu = model.mu_of_measure(&g);
    let mut f = model.checked_value(&mu)?;
    let mut entries = Vec::new();
    let mut new_locations = vec![l0];
    let mut flat = 0;
    let mut iteration = 0;
    let status = loop {
        if let Some(x) = model.first_infinite_slope(&mu) {
            return Err(Error::SupportViolation { value: x });
        }
        let grad = model.grad(&mu);
        let base = dot(&grad, &mu);
        let scan = grid.scan(&grad, base);
        let refine = |i: usize| grid.refine(&model, &scan, i, &grad, base, config.refine_iters);
        // Every grid basin is refined: the deepest refined minimum can sit
        // in a basin whose grid value is not the smallest.
        let mut candidates: Vec<(f64, f64)> = local_minima(&scan).into_iter().map(refine).collect();
        if method == Method::Vdm {
            let best = argmin(&candidates.iter().map(|c| c.1).collect::<Vec<_>>());
            candidates = vec![candidates[best]];
        }
        let min_d = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
        entries.push(TraceEntry {
            iteration,
            objective: f,
            min_derivative: min_d,
            atom_count: g.len(),
            new_locations: std::mem::take(&mut new_locations),
        });
        if min_d >= -config.stop_tol {
            break SolverStatus::Converged;
        }
        if iteration >= config.max_outer_iters {
            break SolverStatus::MaxIters;
        }
        iteration += 1;

        let mut steep: Vec<(f64, f64)> = candidates
            .into_iter()
            .filter(|c| c.1 < -config.stop_tol)
            .collect();
        if method == Method::Vdm {
            steep.truncate(1);
        }
        let (raw, predicted) = match method {
            Method::Vdm => vertex_step(&model, &g, &mu, steep[0].0, config)?,
            Method::Isdm => {
                let mut atoms = g.pairs();
                atoms.extend(steep.iter().map(|&(l, _)| (l, 0.0)));
                reweight(&model, atoms, config)?
            }
        };
        new_locations = steep.iter().map(|c| c.0).collect();

        let Some((g_next, mu_next, f_next)) = accept(&model, &raw, f, config) else {
            break SolverStatus::Stalled;
        };
        // Near the optimum the gains can sit below the rounding of `Φ`; the
        // cancellation-free change tracked by the steps still tells them apart.
        if f_next < f || predicted < 0.0 {
            flat = 0;
        } else {
            flat += 1;
        }
        g = g_next;
        mu = mu_next;
        f = f_next;
        if flat >= MAX_FLAT_UPDATES {
            // Record the final state before giving up.
            let grad = model.grad(&mu);
            let base = dot(&grad, &mu);
            let scan = grid.scan(&grad, base);
            let d = local_minima(&scan)
                .into_iter()
                .map(|i| {
                    grid.refine(&model, &scan, i, &grad, base, config.refine_iters)
                        .1
                })
                .fold(f64::INFINITY, f64::min);
            entries.push(TraceEntry {
                iteration,
                objective: f,
                min_derivative: d,
                atom_count: g.len(),
                new_locations: std::mem::take(&mut new_locations),
            });
            break if d >= -config.stop_tol {
                SolverStatus::Converged
            } else {
                SolverStatus::Stalled
            };
        }
    };
    Ok((g, SolverTrace { entries, status }))
}

/// `(1 − ε) G + ε δ_λ` with the ε minimizing `Φ`, optionally followed by a
/// full reweighting of the resulting support.
fn vertex_step(
    model: &Model,
    g: &AtomicMeasure,
    mu: &[f64],
    lambda: f64,
    config: &SolverConfig,
) -> Result<(Vec<(f64, f64)>, f64)> {
    let col = model.column(lambda);
    let mut step = vec![0.0; mu.len()];
    // Minimizing the change rather than the value keeps the comparisons
    // meaningful when the gain is below the rounding of `Φ`.
    let (eps, change) = golden_section(
        |e| {
            for ((s, m), c) in step.iter_mut().zip(mu).zip(&col) {
                *s = ((1.0 - e) * m + e * c) - m;
            }
            model.value_change(mu, &step)
        },
        0.0,
        1.0,
        LINE_SEARCH_ITERS,
    );
    let mut atoms: Vec<(f64, f64)> = g
        .pairs()
        .into_iter()
        .map(|(l, w)| (l, (1.0 - eps) * w))
        .collect();
    let change = if eps > 0.0 && change <= 0.0 {
        atoms.push((lambda, eps));
        change
    } else {
        0.0
    };
    if config.polish_weights {
        let (atoms, decrease) = reweight(model, atoms, config)?;
        Ok((atoms, change + decrease))
    } else {
        Ok((atoms, change))
    }
}

/// Re-solves the weights over the given locations, warm-started from the
/// given weights.
/// Also returns the accumulated change of the objective.
fn reweight(
    model: &Model,
    atoms: Vec<(f64, f64)>,
    config: &SolverConfig,
) -> Result<(Vec<(f64, f64)>, f64)> {
    let locations: Vec<f64> = atoms.iter().map(|a| a.0).collect();
    let init: Vec<f64> = atoms.iter().map(|a| a.1).collect();
    let cols = model.columns(&locations);
    let fit = solve_weights(
        model,
        &cols,
        Some(&init),
        config.fully_corrective_tol,
        MAX_WEIGHT_ITERS,
    )?;
    Ok((
        locations.into_iter().zip(fit.weights).collect(),
        fit.decrease,
    ))
}

/// Canonical form of the updated atoms, backing off to gentler clean-ups
/// whenever merging or pruning would raise the objective above `f_prev`
/// by more than its rounding.
fn accept(
    model: &Model,
    raw: &[(f64, f64)],
    f_prev: f64,
    config: &SolverConfig,
) -> Option<(AtomicMeasure, Vec<f64>, f64)> {
    let ts = model.theta_star();
    let attempts = [
        (config.merge_radius, config.prune_eps),
        (0.0, config.prune_eps),
        (0.0, 0.0),
    ];
    for (radius, prune) in attempts {
        let Ok(g) = canonicalize(ts, raw.iter().copied(), radius, prune) else {
            continue;
        };
        let mu = model.mu_of_measure(&g);
        let f = model.value(&mu);
        if f.is_finite()
            && f <= f_prev + ROUNDING_SLACK * f_prev.abs().max(1.0)
            && model.first_infinite_slope(&mu).is_none()
        {
            return Some((g, mu, f));
        }
    }
    None
}
