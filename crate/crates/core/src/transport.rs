//! One-dimensional Wasserstein-1 distance between atomic measures, exact
//! and after Gaussian smoothing.
//!
//! On the line, `W₁(G₁, G₂) = ∫ |F₁(t) − F₂(t)| dt`. For atomic measures the
//! CDFs are step functions and the integral is a finite sum. The smoothed
//! distance `W₁^σ(G₁, G₂) = W₁(G₁ ∗ N(0, σ²), G₂ ∗ N(0, σ²))` uses the same
//! identity with the closed-form smoothed CDFs
//! `F^σ(t) = Σ_j w_j Φ((t − loc_j)/σ)`, integrated adaptively.

use crate::error::{Error, Result};
use crate::measures::AtomicMeasure;
use crate::quadrature::{integrate, std_normal_cdf};

/// Parameters of the Gaussian-smoothed distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GotConfig {
    /// Standard deviation of the smoothing kernel.
    pub sigma: f64,
    /// The integration domain extends this many `σ` beyond `[0, θ*]`.
    pub tail_width: f64,
    /// Absolute quadrature tolerance.
    pub quad_tol: f64,
}

impl GotConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        let cfg = Self {
            sigma,
            tail_width: 10.0,
            quad_tol: 1e-9,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Config(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if !(self.tail_width >= 6.0) {
            return Err(Error::Config(format!(
                "tail width must be at least 6, got {}",
                self.tail_width
            )));
        }
        if !(self.quad_tol > 0.0) {
            return Err(Error::Config(
                "quadrature tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Exact `W₁` as the area between the two CDFs.
pub fn w1(a: &AtomicMeasure, b: &AtomicMeasure) -> f64 {
    let (xa, xb) = (a.atoms(), b.atoms());
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut prev: Option<f64> = None;
    let mut area = 0.0;
    while i < xa.len() || j < xb.len() {
        let next = match (xa.get(i), xb.get(j)) {
            (Some(p), Some(q)) => p.location.min(q.location),
            (Some(p), None) => p.location,
            (None, Some(q)) => q.location,
            (None, None) => unreachable!(),
        };
        if let Some(t) = prev {
            area += (fa - fb).abs() * (next - t);
        }
        while i < xa.len() && xa[i].location == next {
            fa += xa[i].weight;
            i += 1;
        }
        while j < xb.len() && xb[j].location == next {
            fb += xb[j].weight;
            j += 1;
        }
        prev = Some(next);
    }
    area
}

/// `W₁` through the quantile coupling, `∫₀¹ |F₁⁻¹(u) − F₂⁻¹(u)| du`.
///
/// Agrees with [`w1`] up to rounding; kept as an independent route.
pub fn w1_quantile(a: &AtomicMeasure, b: &AtomicMeasure) -> f64 {
    let (xa, xb) = (a.atoms(), b.atoms());
    let (mut i, mut j) = (0, 0);
    let (mut ca, mut cb) = (xa[0].weight, xb[0].weight);
    let mut level = 0.0;
    let mut total = 0.0;
    loop {
        let next = ca.min(cb).min(1.0);
        total += (xa[i].location - xb[j].location).abs() * (next - level).max(0.0);
        level = next;
        let a_done = ca <= next && i + 1 < xa.len();
        let b_done = cb <= next && j + 1 < xb.len();
        if !a_done && !b_done {
            break;
        }
        if a_done {
            i += 1;
            ca += xa[i].weight;
        }
        if b_done {
            j += 1;
            cb += xb[j].weight;
        }
    }
    // Rounding can leave the two cumulative sums a hair short of 1.
    total + (xa[i].location - xb[j].location).abs() * (1.0 - level).max(0.0)
}

/// CDF of `G ∗ N(0, σ²)` at `t`.
pub fn smoothed_cdf(g: &AtomicMeasure, sigma: f64, t: f64) -> f64 {
    g.atoms()
        .iter()
        .map(|a| a.weight * std_normal_cdf((t - a.location) / sigma))
        .sum()
}

/// `W₁^σ(G₁, G₂)` by adaptive quadrature of `|F₁^σ − F₂^σ|` over
/// `[−Tσ, θ* + Tσ]`.
///
/// The truncated tails contribute at most `2 Φ(−T)(θ* + 2Tσ)`, below
/// `1e-20` at the default `T = 10` for moderate `θ*`.
pub fn got_w1(a: &AtomicMeasure, b: &AtomicMeasure, cfg: &GotConfig) -> Result<f64> {
    cfg.validate()?;
    let sigma = cfg.sigma;
    let theta_star = a.theta_star().max(b.theta_star());
    let lo = -cfg.tail_width * sigma;
    let hi = theta_star + cfg.tail_width * sigma;
    let breaks: Vec<f64> = a.locations().chain(b.locations()).collect();
    let r = integrate(
        |t| (smoothed_cdf(a, sigma, t) - smoothed_cdf(b, sigma, t)).abs(),
        lo,
        hi,
        &breaks,
        cfg.quad_tol,
    )?;
    Ok(r.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::canonicalize;
    use proptest::prelude::*;

    fn delta(t: f64) -> AtomicMeasure {
        AtomicMeasure::point_mass(5.0, t).unwrap()
    }

    #[test]
    fn w1_examples() {
        assert_eq!(w1(&delta(0.5), &delta(2.0)), 1.5);
        let g = AtomicMeasure::new(5.0, vec![(0.2, 0.3), (4.0, 0.7)]).unwrap();
        assert_eq!(w1(&g, &g), 0.0);
        let two = AtomicMeasure::new(1.0, vec![(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let mid = AtomicMeasure::point_mass(1.0, 0.5).unwrap();
        // CDF gap is 0.5 on [0, 0.5) and 0.5 on [0.5, 1).
        assert_eq!(w1(&two, &mid), 0.5 * 0.5 + 0.5 * 0.5);
    }

    #[test]
    fn smoothed_cdf_examples() {
        let z = delta(0.0);
        assert_eq!(smoothed_cdf(&z, 1.0, 0.0), 0.5);
        assert!(smoothed_cdf(&z, 0.7, -12.0 * 0.7) < 1e-12);
        assert!(smoothed_cdf(&z, 0.7, 12.0 * 0.7) > 1.0 - 1e-12);
        let two = AtomicMeasure::new(1.0, vec![(0.0, 0.5), (1.0, 0.5)]).unwrap();
        let v = smoothed_cdf(&two, 1.0, 0.5);
        let oracle = 0.5 * std_normal_cdf(0.5) + 0.5 * std_normal_cdf(-0.5);
        assert!((v - oracle).abs() < 1e-16);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn got_examples() {
        let cfg = GotConfig::new(0.8).unwrap();
        let g = AtomicMeasure::new(5.0, vec![(0.2, 0.3), (4.0, 0.7)]).unwrap();
        assert!(got_w1(&g, &g, &cfg).unwrap() <= cfg.quad_tol);
        let v = got_w1(&delta(1.0), &delta(3.5), &cfg).unwrap();
        assert!((v - 2.5).abs() < 1e-6);
    }

    #[test]
    fn got_config_validation() {
        assert!(GotConfig::new(0.0).is_err());
        let mut c = GotConfig::new(1.0).unwrap();
        c.tail_width = 5.0;
        assert!(c.validate().is_err());
    }

    fn measure() -> impl Strategy<Value = AtomicMeasure> {
        prop::collection::vec((0.0..=5.0f64, 0.01..1.0f64), 1..6)
            .prop_map(|atoms| canonicalize(5.0, atoms, 1e-8, 1e-12).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn cdf_area_equals_quantile_coupling(a in measure(), b in measure()) {
            prop_assert!((w1(&a, &b) - w1_quantile(&a, &b)).abs() <= 1e-12);
        }

        #[test]
        fn smoothing_contracts(a in measure(), b in measure(), s in 0.2..2.0f64) {
            let cfg = GotConfig::new(s).unwrap();
            let got = got_w1(&a, &b, &cfg).unwrap();
            let exact = w1(&a, &b);
            prop_assert!(got <= exact + 1e-8);
            prop_assert!(exact <= 5.0);
            let sym = got_w1(&b, &a, &cfg).unwrap();
            prop_assert!((got - sym).abs() <= 2.0 * cfg.quad_tol);
            let wider = got_w1(&a, &b, &GotConfig::new(2.0 * s).unwrap()).unwrap();
            prop_assert!(wider <= got + cfg.quad_tol);
        }
    }
}
