//! Gaussian-smoothed Lipschitz functions, their Hermite-polynomial
//! derivative formula and the Taylor construction that approximates
//! `ℓ_σ(θ) − ℓ_σ(0)` by `e^{−θ} P_{k−1}(θ)`.
//!
//! For `ℓ_σ = ℓ ∗ φ_σ` the derivatives are Gaussian integrals against the
//! probabilists' Hermite polynomials,
//!
//! ```text
//! ℓ_σ^{(x)}(θ) = (−1)^x σ^{−x} ∫ ℓ(θ − s) He_x(s/σ) φ_σ(s) ds,
//! ```
//!
//! and Cauchy–Schwarz gives `|ℓ_σ^{(x)}(θ)| ≤ σ^{−x} √(x!) √(θ² + σ²)` for a
//! 1-Lipschitz `ℓ` with `ℓ(0) = 0`.
//!
//! The polynomial `P_{k−1}` is the degree `k−1` Taylor polynomial at zero of
//! `v(θ) = e^θ (ℓ_σ(θ) − ℓ_σ(0))`, whose derivatives follow from the
//! Leibniz rule: `v^{(j)}(0) = Σ_{x=1}^{j} C(j, x) ℓ_σ^{(x)}(0)`.

use std::f64::consts::E;
use std::fmt;
use std::sync::Arc;

use statrs::function::factorial::{binomial, factorial, ln_factorial};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, std_normal_cdf, std_normal_pdf};

/// Largest Hermite order accepted by [`hermite_he`].
pub const MAX_HERMITE_ORDER: u32 = 60;
/// Largest derivative order accepted by [`smoothed_derivative`].
pub const MAX_DERIVATIVE_ORDER: u32 = 40;
/// Points in the θ-grid used for the Taylor sup-error.
pub const SUP_ERROR_GRID: usize = 1000;

const QUAD_TOL: f64 = 1e-10;
const QUAD_HALF_WIDTH: f64 = 10.0;

/// Probabilists' Hermite polynomial `He_n(t)` by the three-term recurrence
/// `He_{n+1} = t He_n − n He_{n−1}`.
pub fn hermite_he(order: u32, t: f64) -> Result<f64> {
    if order > MAX_HERMITE_ORDER {
        return Err(Error::Domain(format!(
            "Hermite order {order} exceeds the cap {MAX_HERMITE_ORDER}"
        )));
    }
    Ok(he_unchecked(order, t))
}

fn he_unchecked(order: u32, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, t);
    if order == 0 {
        return prev;
    }
    for n in 1..order {
        let next = t * cur - n as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type SmoothedFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A 1-Lipschitz test function with `ℓ(0) = 0`.
#[derive(Clone)]
pub struct LipschitzTestFn {
    name: String,
    eval: RealFn,
    kinks: Vec<f64>,
    smoothed: Option<SmoothedFn>,
}

impl fmt::Debug for LipschitzTestFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LipschitzTestFn")
            .field("name", &self.name)
            .field("kinks", &self.kinks)
            .finish_non_exhaustive()
    }
}

impl LipschitzTestFn {
    /// A custom test function. `kinks` lists points where `ℓ` is not smooth;
    /// they are used as quadrature breakpoints.
    pub fn new<F>(name: impl Into<String>, eval: F, kinks: Vec<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            kinks,
            smoothed: None,
        }
    }

    /// `ℓ(θ) = θ`; smoothing leaves it unchanged.
    pub fn identity() -> Self {
        Self {
            name: "identity".into(),
            eval: Arc::new(|t| t),
            kinks: Vec::new(),
            smoothed: Some(Arc::new(|_, t| t)),
        }
    }

    /// `ℓ(θ) = |θ − m| − m`.
    ///
    /// Smoothed closed form with `d = θ − m`:
    /// `E|d − U| − m = d (2Φ(d/σ) − 1) + 2σ φ(d/σ) − m`, `U ~ N(0, σ²)`.
    pub fn shifted_abs(m: f64) -> Self {
        Self {
            name: "shifted_abs".into(),
            eval: Arc::new(move |t| (t - m).abs() - m),
            kinks: vec![m],
            smoothed: Some(Arc::new(move |sigma, t| {
                let d = t - m;
                let z = d / sigma;
                d * (2.0 * std_normal_cdf(z) - 1.0) + 2.0 * sigma * std_normal_pdf(z) - m
            })),
        }
    }

    /// The fixed pair used for checking the approximation bounds: the
    /// identity and the shifted absolute value kinked at `θ*/2`.
    pub fn standard_pair(theta_star: f64) -> [Self; 2] {
        [Self::identity(), Self::shifted_abs(0.5 * theta_star)]
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, theta: f64) -> f64 {
        (self.eval)(theta)
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }

    /// Closed-form `ℓ_σ(θ)` when one is known.
    pub fn closed_form_smoothed(&self, sigma: f64, theta: f64) -> Option<f64> {
        self.smoothed.as_ref().map(|s| s(sigma, theta))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    Ok(())
}

/// `∫ ℓ(θ − s) He_x(s/σ) φ_σ(s) ds` over `s ∈ [−10σ, 10σ]`.
fn hermite_moment(f: &LipschitzTestFn, sigma: f64, order: u32, theta: f64) -> Result<f64> {
    let breaks: Vec<f64> = f.kinks.iter().map(|k| theta - k).collect();
    let r = integrate(
        |s| {
            let z = s / sigma;
            f.eval(theta - s) * he_unchecked(order, z) * std_normal_pdf(z) / sigma
        },
        -QUAD_HALF_WIDTH * sigma,
        QUAD_HALF_WIDTH * sigma,
        &breaks,
        QUAD_TOL,
    )?;
    Ok(r.value)
}

/// `ℓ_σ(θ) = ∫ ℓ(θ − u) φ_σ(u) du` by quadrature.
pub fn smoothed_value(f: &LipschitzTestFn, sigma: f64, theta: f64) -> Result<f64> {
    check_sigma(sigma)?;
    hermite_moment(f, sigma, 0, theta)
}

/// Signed `ℓ_σ^{(x)}(θ)` through the Hermite integral.
pub fn smoothed_derivative(f: &LipschitzTestFn, sigma: f64, order: u32, theta: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if order > MAX_DERIVATIVE_ORDER {
        return Err(Error::Domain(format!(
            "derivative order {order} exceeds the cap {MAX_DERIVATIVE_ORDER}"
        )));
    }
    let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * sigma.powi(-(order as i32)) * hermite_moment(f, sigma, order, theta)?)
}

/// `σ^{−x} √(x!) √(θ² + σ²)`.
pub fn derivative_bound(sigma: f64, order: u32, theta: f64) -> f64 {
    sigma.powi(-(order as i32)) * factorial(order as u64).sqrt() * theta.hypot(sigma)
}

/// `(x+1)^{1/2} 2^x (1 + (x/(eσ²))^{x/2})`, the `x!`-scaled envelope of the
/// coefficient magnitudes (up to a constant depending on `θ*` and `σ`).
pub fn coefficient_envelope(sigma: f64, x: u32) -> f64 {
    let xf = x as f64;
    (xf + 1.0).sqrt() * 2f64.powi(x as i32) * (1.0 + (xf / (E * sigma * sigma)).powf(xf / 2.0))
}

/// `(k+1)^{1/2} (2θ*)^k (1 + (k/(eσ²))^{k/2}) / k!`, the shape of the
/// sup-error bound.
pub fn error_envelope(sigma: f64, k: u32, theta_star: f64) -> f64 {
    let kf = k as f64;
    let log = 0.5 * (kf + 1.0).ln()
        + kf * (2.0 * theta_star).ln()
        + (1.0 + (kf / (E * sigma * sigma)).powf(kf / 2.0)).ln()
        - ln_factorial(k as u64);
    log.exp()
}

/// The polynomial `P_{k−1}(θ) = Σ_{x<k} c_x θ^x` and how well
/// `e^{−θ} P_{k−1}` tracks `ℓ_σ − ℓ_σ(0)` on `[0, θ*]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorApprox {
    pub sigma: f64,
    pub theta_star: f64,
    /// `c_0, …, c_{k−1}`.
    pub coefficients: Vec<f64>,
    /// `max_θ |ℓ_σ(θ) − ℓ_σ(0) − e^{−θ} P_{k−1}(θ)|` over a uniform grid.
    pub sup_error: f64,
}

impl TaylorApprox {
    /// Number of coefficients.
    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    pub fn degree(&self) -> usize {
        self.k() - 1
    }

    /// `b_x = x! c_x`.
    pub fn scaled_coefficients(&self) -> Vec<f64> {
        self.coefficients
            .iter()
            .enumerate()
            .map(|(x, c)| c * factorial(x as u64))
            .collect()
    }

    pub fn polynomial(&self, theta: f64) -> f64 {
        self.coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * theta + c)
    }

    /// `max_{x<k} |b_x| / coefficient_envelope(σ, x)`.
    pub fn coeff_shape_ratio(&self) -> f64 {
        self.scaled_coefficients()
            .iter()
            .enumerate()
            .map(|(x, b)| b.abs() / coefficient_envelope(self.sigma, x as u32))
            .fold(0.0, f64::max)
    }

    /// [`error_envelope`] at this `k`.
    pub fn error_bound_shape(&self) -> f64 {
        error_envelope(self.sigma, self.k() as u32, self.theta_star)
    }
}

/// Builds `P_{k−1}` from the Hermite-integral derivatives at zero and
/// measures its sup-error on a 1000-point grid of `[0, θ*]`.
pub fn taylor_approx(
    f: &LipschitzTestFn,
    sigma: f64,
    k: u32,
    theta_star: f64,
) -> Result<TaylorApprox> {
    check_sigma(sigma)?;
    if k == 0 {
        return Err(Error::Domain("k must be at least 1".into()));
    }
    if k > MAX_DERIVATIVE_ORDER + 1 {
        return Err(Error::Domain(format!(
            "k = {k} needs derivatives beyond the cap"
        )));
    }
    if !(theta_star.is_finite() && theta_star > 0.0) {
        return Err(Error::Domain(format!(
            "theta_star must be positive, got {theta_star}"
        )));
    }
    let derivs = (0..k)
        .map(|x| smoothed_derivative(f, sigma, x, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let coefficients: Vec<f64> = (0..k as u64)
        .map(|j| {
            let vj: f64 = (1..=j).map(|x| binomial(j, x) * derivs[x as usize]).sum();
            vj / factorial(j)
        })
        .collect();

    let base = derivs[0];
    let mut approx = TaylorApprox {
        sigma,
        theta_star,
        coefficients,
        sup_error: 0.0,
    };
    let mut worst: f64 = 0.0;
    for i in 0..SUP_ERROR_GRID {
        let theta = theta_star * i as f64 / (SUP_ERROR_GRID - 1) as f64;
        let target = smoothed_value(f, sigma, theta)? - base;
        let err = (target - (-theta).exp() * approx.polynomial(theta)).abs();
        worst = worst.max(err);
    }
    approx.sup_error = worst;
    Ok(approx)
}
