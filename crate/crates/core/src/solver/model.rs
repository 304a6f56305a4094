//! The observed data, kernel and divergence bundled for repeated
//! evaluation of `Φ`, its gradient in `μ` and kernel columns.

use crate::divergences::Divergence;
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::measures::{AtomicMeasure, EmpiricalPmf};

#[derive(Debug, Clone)]
pub(crate) struct Model {
    pub div: Divergence,
    pub kernel: KernelSpec,
    pub values: Vec<u64>,
    pub alpha: Vec<f64>,
    ln_w: Vec<f64>,
}

impl Model {
    pub fn new(div: Divergence, emp: &EmpiricalPmf, kernel: &KernelSpec) -> Self {
        let values = emp.values().to_vec();
        let ln_w = values.iter().map(|&x| kernel.ln_w(x)).collect();
        Self {
            div,
            kernel: kernel.clone(),
            values,
            alpha: emp.freqs().to_vec(),
            ln_w,
        }
    }

    pub fn q(&self) -> usize {
        self.values.len()
    }

    pub fn theta_star(&self) -> f64 {
        self.kernel.theta_star()
    }

    /// `f(i_x; θ)` for every observed value.
    pub fn column_into(&self, theta: f64, out: &mut [f64]) {
        for ((o, &x), &lw) in out.iter_mut().zip(&self.values).zip(&self.ln_w) {
            *o = self.kernel.pmf_with_ln_w(x, lw, theta);
        }
    }

    pub fn column(&self, theta: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.q()];
        self.column_into(theta, &mut out);
        out
    }

    /// Row-major `locations.len() × q` matrix of columns.
    pub fn columns(&self, locations: &[f64]) -> Vec<f64> {
        let q = self.q();
        let mut out = vec![0.0; locations.len() * q];
        for (chunk, &t) in out.chunks_mut(q).zip(locations) {
            self.column_into(t, chunk);
        }
        out
    }

    pub fn mu_of(&self, atoms: &[(f64, f64)]) -> Vec<f64> {
        let mut mu = vec![0.0; self.q()];
        let mut col = vec![0.0; self.q()];
        for &(loc, w) in atoms {
            self.column_into(loc, &mut col);
            for (m, c) in mu.iter_mut().zip(&col) {
                *m += w * c;
            }
        }
        mu
    }

    pub fn mu_of_measure(&self, g: &AtomicMeasure) -> Vec<f64> {
        self.mu_of(&g.pairs())
    }

    /// `Σ_x φ(α_x, μ_x)`; `+∞` on a support violation.
    pub fn value(&self, mu: &[f64]) -> f64 {
        self.alpha
            .iter()
            .zip(mu)
            .map(|(&a, &m)| self.div.phi(a, m))
            .sum()
    }

    /// `Σ_x [φ(α_x, μ_x + δ_x) − φ(α_x, μ_x)]`, accurate even when the change
    /// is far below the rounding of the objective.
    pub fn value_change(&self, mu: &[f64], delta: &[f64]) -> f64 {
        self.alpha
            .iter()
            .zip(mu.iter().zip(delta))
            .map(|(&a, (&m, &d))| self.div.phi_delta(a, m, d))
            .sum()
    }

    pub fn grad(&self, mu: &[f64]) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(mu)
            .map(|(&a, &m)| self.div.dphi_dy2(a, m))
            .collect()
    }

    pub fn curvature(&self, mu: &[f64]) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(mu)
            .map(|(&a, &m)| self.div.d2phi_dy2(a, m))
            .collect()
    }

    /// First observed value whose `φ` term is infinite.
    pub fn first_violation(&self, mu: &[f64]) -> Option<u64> {
        self.alpha
            .iter()
            .zip(mu)
            .zip(&self.values)
            .find(|((&a, &m), _)| !self.div.phi(a, m).is_finite())
            .map(|(_, &x)| x)
    }

    /// First observed value where `∂φ` is not finite (zero model mass for
    /// every divergence except Le Cam).
    pub fn first_infinite_slope(&self, mu: &[f64]) -> Option<u64> {
        self.alpha
            .iter()
            .zip(mu)
            .zip(&self.values)
            .find(|((&a, &m), _)| !self.div.dphi_dy2(a, m).is_finite())
            .map(|(_, &x)| x)
    }

    pub fn checked_value(&self, mu: &[f64]) -> Result<f64> {
        if let Some(x) = self.first_violation(mu) {
            return Err(Error::SupportViolation { value: x });
        }
        Ok(self.value(mu))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
