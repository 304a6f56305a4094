//! One-dimensional searches: the λ-grid scan with golden-section
//! refinement, and the golden-section line search in ε.

use super::model::{dot, Model};

/// Golden-section minimization of `f` on `[a, b]`. Returns the best point
/// evaluated, including both endpoints; ties go to the smaller argument.
pub(crate) fn golden_section<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    iters: usize,
) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut best = (a, f(a));
    let consider = |x: f64, fx: f64, best: &mut (f64, f64)| {
        if fx < best.1 || (fx == best.1 && x < best.0) {
            *best = (x, fx);
        }
    };
    let fb = f(b);
    consider(b, fb, &mut best);
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    consider(x1, f1, &mut best);
    consider(x2, f2, &mut best);
    for _ in 0..iters {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
            consider(x1, f1, &mut best);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
            consider(x2, f2, &mut best);
        }
    }
    best
}

/// Kernel columns on a uniform λ-grid over `[0, θ*]`.
pub(crate) struct LambdaGrid {
    pub thetas: Vec<f64>,
    cols: Vec<f64>,
    q: usize,
}

impl LambdaGrid {
    pub fn new(model: &Model, size: usize) -> Self {
        let ts = model.theta_star();
        let thetas: Vec<f64> = (0..size)
            .map(|i| ts * i as f64 / (size - 1) as f64)
            .collect();
        let cols = model.columns(&thetas);
        Self {
            thetas,
            cols,
            q: model.q(),
        }
    }

    /// `Φ′(G, δ_λ)` at every grid point, given `∂φ` at `μ(G)` and
    /// `base = Σ ∂φ · μ`.
    pub fn scan(&self, grad: &[f64], base: f64) -> Vec<f64> {
        self.cols
            .chunks(self.q)
            .map(|c| dot(grad, c) - base)
            .collect()
    }

    /// Golden-section refinement in the two cells around grid index `i`.
    pub fn refine(
        &self,
        model: &Model,
        scan: &[f64],
        i: usize,
        grad: &[f64],
        base: f64,
        iters: usize,
    ) -> (f64, f64) {
        let lo = self.thetas[i.saturating_sub(1)];
        let hi = self.thetas[(i + 1).min(self.thetas.len() - 1)];
        let mut col = vec![0.0; model.q()];
        let refined = golden_section(
            |t| {
                model.column_into(t, &mut col);
                dot(grad, &col) - base
            },
            lo,
            hi,
            iters,
        );
        let at_grid = (self.thetas[i], scan[i]);
        if refined.1 < at_grid.1 {
            refined
        } else {
            at_grid
        }
    }
}

/// Index of the smallest value; the first one on ties.
pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Grid indices of local minima: interior points strictly below the left
/// neighbour and not above the right one, plus an endpoint when the scan
/// descends toward it.
pub(crate) fn local_minima(values: &[f64]) -> Vec<usize> {
    let n = values.len();
    let mut out = Vec::new();
    if n == 1 {
        return vec![0];
    }
    if values[0] < values[1] {
        out.push(0);
    }
    for i in 1..n - 1 {
        if values[i] < values[i - 1] && values[i] <= values[i + 1] {
            out.push(i);
        }
    }
    if values[n - 1] < values[n - 2] {
        out.push(n - 1);
    }
    out
}
