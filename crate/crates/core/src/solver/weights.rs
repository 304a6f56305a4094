//! Fully-corrective reweighting: minimize `Σ_x φ(α_x, Σ_j w_j f(i_x; loc_j))`
//! over the probability simplex for fixed locations.
//!
//! The solver is an active-set projected Newton method. Each iteration adds
//! the coordinate with the smallest partial derivative to the current
//! support, takes an equality-constrained Newton step on that working set,
//! shortens it so no weight turns negative and backtracks until the Armijo
//! condition holds. When the Newton step is unusable it falls back to the
//! conditional-gradient direction `e_j − w`. Optimality is measured by the
//! Frank–Wolfe gap `Σ_j w_j g_j − min_j g_j`, which is zero exactly at the
//! KKT points of the simplex-constrained problem.
//!
//! Close to the optimum a step can lower `Φ` by less than one ulp of `Φ`.
//! Steps are therefore judged by `Σ_x [φ(α_x, μ_x + Δμ_x) − φ(α_x, μ_x)]`
//! evaluated term by term without cancellation, with `μ` carried along the
//! iterates and resynchronized with the weights from time to time.

use nalgebra::{DMatrix, DVector};

use super::model::{dot, Model};
use crate::divergences::Divergence;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::measures::EmpiricalPmf;

/// Iteration cap of the weight solver.
pub const MAX_WEIGHT_ITERS: usize = 10_000;

const ARMIJO_C: f64 = 1e-4;
const MIN_STEP: f64 = 1e-20;
/// Iterations between recomputations of `μ` from the weights.
const RESYNC_EVERY: usize = 64;

/// Output of the weight solver.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightFit {
    pub weights: Vec<f64>,
    /// `Σ_x φ(α_x, μ_x)` at the returned weights.
    pub objective: f64,
    /// Frank–Wolfe gap at the returned weights.
    pub gap: f64,
    /// Total change of the objective from the starting weights, summed
    /// step by step without cancellation; negative whenever any step made
    /// progress, even below the rounding of `objective`.
    pub decrease: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Optimal simplex weights for fixed atom locations.
pub fn fully_corrective_weights(
    locations: &[f64],
    emp: &EmpiricalPmf,
    kernel: &KernelSpec,
    div: Divergence,
    tol: f64,
) -> Result<WeightFit> {
    if locations.is_empty() {
        return Err(Error::EmptyInput);
    }
    for &t in locations {
        if !(0.0..=kernel.theta_star()).contains(&t) {
            return Err(Error::Domain(format!(
                "location {t} outside [0, {}]",
                kernel.theta_star()
            )));
        }
    }
    let model = Model::new(div, emp, kernel);
    let cols = model.columns(locations);
    solve_weights(&model, &cols, None, tol, MAX_WEIGHT_ITERS)
}

struct State<'a> {
    model: &'a Model,
    cols: &'a [f64],
    q: usize,
}

impl State<'_> {
    fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.q..(j + 1) * self.q]
    }

    fn m(&self) -> usize {
        self.cols.len() / self.q
    }

    fn mu(&self, w: &[f64]) -> Vec<f64> {
        let mut mu = vec![0.0; self.q];
        for (j, &wj) in w.iter().enumerate() {
            if wj > 0.0 {
                for (m, c) in mu.iter_mut().zip(self.col(j)) {
                    *m += wj * c;
                }
            }
        }
        mu
    }

    /// `Σ_j dir_j · f(·; loc_j)`, skipping coordinates pinned at zero.
    fn direction_mu(&self, w: &[f64], dir: &[f64]) -> Vec<f64> {
        let mut dmu = vec![0.0; self.q];
        for (j, &d) in dir.iter().enumerate() {
            if d != 0.0 && (w[j] > 0.0 || d > 0.0) {
                for (m, c) in dmu.iter_mut().zip(self.col(j)) {
                    *m += d * c;
                }
            }
        }
        dmu
    }

    /// Whether `μ` has a finite objective and finite slopes.
    fn usable(&self, mu: &[f64]) -> bool {
        self.model.value(mu).is_finite() && self.model.first_infinite_slope(mu).is_none()
    }

    fn vertex_value(&self, j: usize) -> f64 {
        self.model.value(self.col(j))
    }

    /// Newton direction on `set`, or `None` if the reduced Hessian cannot be
    /// factored even after regularization.
    fn newton(&self, set: &[usize], curv: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        let k = set.len();
        let mut h = DMatrix::<f64>::zeros(k, k);
        for (a, &ja) in set.iter().enumerate() {
            let ca = self.col(ja);
            for (b, &jb) in set.iter().enumerate().skip(a) {
                let cb = self.col(jb);
                let v: f64 = curv
                    .iter()
                    .zip(ca)
                    .zip(cb)
                    .map(|((d, x), y)| d * x * y)
                    .sum();
                h[(a, b)] = v;
                h[(b, a)] = v;
            }
        }
        let scale = (0..k)
            .map(|i| h[(i, i)])
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let gs = DVector::from_iterator(k, set.iter().map(|&j| g[j]));
        let ones = DVector::from_element(k, 1.0);
        let mut ridge = 1e-12 * scale;
        for _ in 0..6 {
            let mut reg = h.clone();
            for i in 0..k {
                reg[(i, i)] += ridge;
            }
            if let Some(chol) = reg.cholesky() {
                let hg = chol.solve(&gs);
                let h1 = chol.solve(&ones);
                let denom = h1.sum();
                if denom > 0.0 && denom.is_finite() {
                    let lambda = -hg.sum() / denom;
                    let d = -(hg + h1 * lambda);
                    if d.iter().all(|v| v.is_finite()) {
                        return Some(d.iter().copied().collect());
                    }
                }
            }
            ridge *= 1e3;
        }
        None
    }
}

/// Core weight solver over the columns `cols` (row-major, one row per
/// location). `init` is a warm start on the simplex.
pub(crate) fn solve_weights(
    model: &Model,
    cols: &[f64],
    init: Option<&[f64]>,
    tol: f64,
    max_iter: usize,
) -> Result<WeightFit> {
    let q = model.q();
    let st = State { model, cols, q };
    let m = st.m();
    if m == 0 {
        return Err(Error::EmptyInput);
    }

    let mut w = vec![0.0; m];
    let mut started = false;
    if let Some(init) = init {
        let total: f64 = init.iter().filter(|v| **v > 0.0).sum();
        if init.len() == m && total > 0.0 {
            for (wj, &v) in w.iter_mut().zip(init) {
                *wj = v.max(0.0) / total;
            }
            started = st.mu(&w).iter().all(|&v| v > 0.0);
        }
    }
    if !started {
        // Vertices leaving an observed value without mass have an infinite
        // gradient, so they only serve as a last resort.
        let vals: Vec<f64> = (0..m)
            .map(|j| {
                if st.col(j).iter().all(|&c| c > 0.0) {
                    st.vertex_value(j)
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let best = super::search::argmin(&vals);
        w.iter_mut().for_each(|v| *v = 0.0);
        if vals[best].is_finite() {
            w[best] = 1.0;
        } else {
            w.iter_mut().for_each(|v| *v = 1.0 / m as f64);
        }
    }
    let mut mu = st.mu(&w);
    let f0 = model.value(&mu);
    if !f0.is_finite() {
        return Err(match model.first_violation(&mu) {
            Some(x) => Error::SupportViolation { value: x },
            None => Error::Numerical("non-finite weight objective at start".into()),
        });
    }

    let mut g = vec![0.0; m];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let mut flat_steps = 0;
    let mut decrease = 0.0;
    while iterations < max_iter {
        let dphi = model.grad(&mu);
        for (j, gj) in g.iter_mut().enumerate() {
            *gj = dot(&dphi, st.col(j));
        }
        let nu: f64 = w.iter().zip(&g).map(|(a, b)| a * b).sum();
        let jmin = super::search::argmin(&g);
        gap = nu - g[jmin];
        if !gap.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradient in weight solver at iteration {iterations}"
            )));
        }
        if gap <= tol {
            break;
        }
        iterations += 1;

        let support: Vec<usize> = (0..m).filter(|&j| w[j] > 0.0).collect();
        let curv = model.curvature(&mu);
        let mut candidates: Vec<Vec<usize>> = Vec::with_capacity(2);
        if !support.contains(&jmin) {
            let mut with = support.clone();
            with.push(jmin);
            candidates.push(with);
        }
        candidates.push(support);

        let mut stepped = None;
        for set in &candidates {
            let Some(dset) = st.newton(set, &curv, &g) else {
                continue;
            };
            let slope: f64 = set.iter().zip(&dset).map(|(&j, d)| g[j] * d).sum();
            if !(slope < 0.0) {
                continue;
            }
            let mut t_max = f64::INFINITY;
            let mut blocking = None;
            for (&j, &d) in set.iter().zip(&dset) {
                if d < 0.0 {
                    let t = w[j] / -d;
                    if t < t_max {
                        t_max = t;
                        blocking = Some(j);
                    }
                }
            }
            if t_max <= 1e-14 {
                continue;
            }
            let mut dir = vec![0.0; m];
            for (&j, &d) in set.iter().zip(&dset) {
                dir[j] = d;
            }
            let dmu = st.direction_mu(&w, &dir);
            if let Some(res) = line_search(&st, &mu, &dmu, slope, t_max.min(1.0), true) {
                let hit = (res.0 >= t_max).then_some(blocking).flatten();
                stepped = Some((dir, dmu, res, hit));
                break;
            }
        }
        if stepped.is_none() {
            let mut dir: Vec<f64> = w.iter().map(|v| -v).collect();
            dir[jmin] += 1.0;
            let dmu = st.direction_mu(&w, &dir);
            if let Some(res) = line_search(&st, &mu, &dmu, -gap, 1.0, false) {
                stepped = Some((dir, dmu, res, None));
            }
        }
        let Some((dir, dmu, (t, trial, change), hit)) = stepped else {
            break;
        };

        // `μ` is carried along the steps so that each change is exact for
        // the vectors involved. The weights themselves can still put zero
        // mass on an observed value where the carried `μ` keeps a rounding
        // residue (notably when the blocking weight is zeroed); back off
        // until both agree on a usable point.
        let (mut t, mut hit, mut trial, mut change) = (t, hit, trial, change);
        let next = loop {
            let w_new = take_step(&w, &dir, t, hit);
            if st.usable(&st.mu(&w_new)) && st.usable(&trial) && change <= 0.0 {
                break Some(w_new);
            }
            t *= 0.5;
            hit = None;
            if t < MIN_STEP {
                break None;
            }
            trial = mu.iter().zip(&dmu).map(|(m, d)| m + t * d).collect();
            change = model.value_change(&mu, &exact_step(&mu, &trial));
        };
        let Some(w_new) = next else {
            break;
        };
        w = w_new;
        mu = trial;
        decrease += change;
        if iterations % RESYNC_EVERY == 0 {
            mu = st.mu(&w);
        }
        if change < 0.0 || hit.is_some() {
            flat_steps = 0;
        } else {
            flat_steps += 1;
            if flat_steps >= 5 {
                break;
            }
        }
    }
    mu = st.mu(&w);
    let f = model.value(&mu);
    if !f.is_finite() {
        return Err(Error::Numerical(
            "non-finite weight objective at the returned weights".into(),
        ));
    }

    Ok(WeightFit {
        weights: w,
        objective: f,
        gap,
        decrease,
        iterations,
        converged: gap <= tol,
    })
}

/// `w + t·dir` clipped at zero, with the blocking weight set to exactly
/// zero and the result renormalized.
fn take_step(w: &[f64], dir: &[f64], t: f64, hit: Option<usize>) -> Vec<f64> {
    let mut out: Vec<f64> = w
        .iter()
        .zip(dir)
        .map(|(wj, d)| (wj + t * d).max(0.0))
        .collect();
    if let Some(j) = hit {
        out[j] = 0.0;
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    out
}

/// Backtracking from `t0` along `μ + t·Δμ`. Returns the step, the trial
/// `μ` and the exact change of the objective. A full Newton step that does
/// not increase the objective is accepted even if it misses the Armijo
/// threshold, since near the optimum that decrease is at the level of the
/// rounding itself.
fn line_search(
    st: &State<'_>,
    mu: &[f64],
    dmu: &[f64],
    slope: f64,
    t0: f64,
    newton: bool,
) -> Option<(f64, Vec<f64>, f64)> {
    let mut trial = vec![0.0; mu.len()];
    let mut t = t0;
    loop {
        for ((tr, m), d) in trial.iter_mut().zip(mu).zip(dmu) {
            *tr = m + t * d;
        }
        let change = st.model.value_change(mu, &exact_step(mu, &trial));
        // Points with an infinite slope are never optimal and would leave
        // the next gradient undefined.
        if change.is_finite() && st.usable(&trial) {
            if change <= ARMIJO_C * t * slope {
                return Some((t, trial, change));
            }
            if newton && t == t0 && change <= 0.0 {
                return Some((t, trial, change));
            }
        }
        t *= 0.5;
        if t < MIN_STEP {
            return None;
        }
    }
}

/// `trial − μ`, the step actually taken after rounding.
fn exact_step(mu: &[f64], trial: &[f64]) -> Vec<f64> {
    trial.iter().zip(mu).map(|(t, m)| t - m).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pois(n: u64) -> f64 {
        // Pois(n; 2)
        (-2.0f64).exp() * 2f64.powi(n as i32) / (1..=n).product::<u64>() as f64
    }

    #[test]
    fn single_location_gets_all_weight() {
        let emp = EmpiricalPmf::from_samples(&[1, 2, 3]).unwrap();
        let k = KernelSpec::poisson(5.0).unwrap();
        let fit =
            fully_corrective_weights(&[1.7], &emp, &k, Divergence::KullbackLeibler, 1e-10).unwrap();
        assert_eq!(fit.weights, vec![1.0]);
    }

    #[test]
    fn kl_at_the_mle() {
        let emp = EmpiricalPmf::from_samples(&[2; 30]).unwrap();
        let k = KernelSpec::poisson(5.0).unwrap();
        let fit =
            fully_corrective_weights(&[2.0], &emp, &k, Divergence::KullbackLeibler, 1e-10).unwrap();
        assert!((fit.objective + pois(2).ln()).abs() < 1e-14);
    }

    #[test]
    fn two_point_closed_form() {
        // emp = [0, 1] with atoms at 0 and at θ*: the KL optimum is the
        // solution of a one-dimensional concave likelihood, found here by
        // bisection on its derivative.
        let emp = EmpiricalPmf::from_samples(&[0, 1]).unwrap();
        let k = KernelSpec::poisson(2.0).unwrap();
        let fit =
            fully_corrective_weights(&[0.0, 2.0], &emp, &k, Divergence::KullbackLeibler, 1e-12)
                .unwrap();
        let f0 = (-2.0f64).exp();
        // ℓ(p) = 0.5 ln(p + (1-p) f0) + 0.5 ln((1-p) f1), p = weight at 0.
        let dl = |p: f64| 0.5 * (1.0 - f0) / (p + (1.0 - p) * f0) - 0.5 / (1.0 - p);
        let (mut lo, mut hi) = (0.0, 1.0 - 1e-12);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dl(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!(
            (fit.weights[0] - lo).abs() < 1e-7,
            "{} vs {lo}",
            fit.weights[0]
        );
        assert!(fit.converged);
    }

    #[test]
    fn duplicated_location_is_handled() {
        let emp = EmpiricalPmf::from_samples(&[0, 0, 3, 4]).unwrap();
        let k = KernelSpec::poisson(5.0).unwrap();
        for div in Divergence::ALL {
            let fit =
                fully_corrective_weights(&[0.5, 3.0, 3.0, 4.5], &emp, &k, div, 1e-10).unwrap();
            assert!(fit.converged, "{div}: gap {}", fit.gap);
            assert!((fit.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(fit.weights.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn rejects_out_of_range_location() {
        let emp = EmpiricalPmf::from_samples(&[0]).unwrap();
        let k = KernelSpec::poisson(1.0).unwrap();
        assert!(fully_corrective_weights(&[1.5], &emp, &k, Divergence::Hellinger2, 1e-10).is_err());
        assert!(fully_corrective_weights(&[], &emp, &k, Divergence::Hellinger2, 1e-10).is_err());
    }
}
