//! Discrete exponential-family kernels `f(x; θ) = g(θ) w(x) θ^x` and the
//! mixture PMFs they induce.
//!
//! All evaluation happens in log space, `ln f = ln g(θ) + ln w(x) + x ln θ`,
//! with the convention `0^0 = 1` so that `f(0; 0) = g(0) w(0)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use statrs::function::factorial::ln_factorial;

use crate::error::{Error, Result};
use crate::measures::AtomicMeasure;

/// Hard cap on the number of envelope terms examined by
/// [`KernelSpec::truncation_index`].
const MAX_ENVELOPE_TERMS: u64 = 1_000_000;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type WeightFn = Arc<dyn Fn(u64) -> f64 + Send + Sync>;

/// A user-supplied family. `g` must be the normalizer
/// `1 / Σ_x w(x) θ^x` and `w` must be strictly positive.
#[derive(Clone)]
pub struct CustomFamily {
    name: String,
    g: ScalarFn,
    w: WeightFn,
    theta_c: f64,
}

impl fmt::Debug for CustomFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFamily")
            .field("name", &self.name)
            .field("theta_c", &self.theta_c)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    /// `g(θ) = e^{-θ}`, `w(x) = 1/x!`, `θ_c = ∞`.
    Poisson,
    /// `g(θ) = 1 - θ`, `w(x) = 1`, `θ_c = 1`.
    Geometric,
    Custom(CustomFamily),
}

/// A kernel family together with the known upper bound `θ*` of the mixing
/// distribution's support.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    family: Family,
    theta_star: f64,
}

impl KernelSpec {
    pub fn poisson(theta_star: f64) -> Result<Self> {
        Self::build(Family::Poisson, theta_star)
    }

    pub fn geometric(theta_star: f64) -> Result<Self> {
        Self::build(Family::Geometric, theta_star)
    }

    /// A custom family. The radius of convergence `theta_c` of
    /// `Σ w(x) θ^x` has to be supplied; it is not estimated.
    pub fn custom<G, W>(
        name: impl Into<String>,
        theta_star: f64,
        theta_c: f64,
        g: G,
        w: W,
    ) -> Result<Self>
    where
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        W: Fn(u64) -> f64 + Send + Sync + 'static,
    {
        let family = CustomFamily {
            name: name.into(),
            g: Arc::new(g),
            w: Arc::new(w),
            theta_c,
        };
        let g0 = (family.g)(0.0);
        let w0 = (family.w)(0);
        if !(g0 > 0.0 && g0.is_finite() && w0 > 0.0 && w0.is_finite()) {
            return Err(Error::Config(format!(
                "custom kernel needs g(0) > 0 and w(0) > 0, got {g0} and {w0}"
            )));
        }
        Self::build(Family::Custom(family), theta_star)
    }

    /// Looks a built-in family up by its CLI name.
    pub fn by_name(name: &str, theta_star: f64) -> Result<Self> {
        match name.parse::<KernelName>()? {
            KernelName::Poisson => Self::poisson(theta_star),
            KernelName::Geometric => Self::geometric(theta_star),
        }
    }

    fn build(family: Family, theta_star: f64) -> Result<Self> {
        let spec = Self { family, theta_star };
        if !(theta_star.is_finite() && theta_star > 0.0) {
            return Err(Error::Config(format!(
                "theta_star must be positive and finite, got {theta_star}"
            )));
        }
        if theta_star >= spec.theta_c() {
            return Err(Error::Config(format!(
                "theta_star = {theta_star} must lie below the radius of convergence {}",
                spec.theta_c()
            )));
        }
        Ok(spec)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn name(&self) -> &str {
        match &self.family {
            Family::Poisson => "poisson",
            Family::Geometric => "geometric",
            Family::Custom(c) => &c.name,
        }
    }

    pub fn theta_star(&self) -> f64 {
        self.theta_star
    }

    /// Radius of convergence of `Σ w(x) θ^x`.
    pub fn theta_c(&self) -> f64 {
        match &self.family {
            Family::Poisson => f64::INFINITY,
            Family::Geometric => 1.0,
            Family::Custom(c) => c.theta_c,
        }
    }

    /// `ln w(x)`.
    pub fn ln_w(&self, x: u64) -> f64 {
        match &self.family {
            Family::Poisson => -ln_factorial(x),
            Family::Geometric => 0.0,
            Family::Custom(c) => (c.w)(x).ln(),
        }
    }

    /// `ln g(θ)`.
    pub fn ln_g(&self, theta: f64) -> f64 {
        match &self.family {
            Family::Poisson => -theta,
            Family::Geometric => (-theta).ln_1p(),
            Family::Custom(c) => (c.g)(theta).ln(),
        }
    }

    /// `sup_{θ ∈ [0, θ*]} g(θ)`. The normalizer of a positive power series
    /// is decreasing in `θ`, so this is `g(0)`.
    pub fn g_max(&self) -> f64 {
        self.ln_g(0.0).exp()
    }

    /// `f(x; θ)` given `ln w(x)`, without domain checks.
    #[inline]
    pub(crate) fn pmf_with_ln_w(&self, x: u64, ln_w: f64, theta: f64) -> f64 {
        if theta == 0.0 {
            return if x == 0 {
                (self.ln_g(0.0) + ln_w).exp()
            } else {
                0.0
            };
        }
        (self.ln_g(theta) + ln_w + x as f64 * theta.ln()).exp()
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        if !(0.0..=self.theta_star).contains(&theta) {
            return Err(Error::Domain(format!(
                "theta = {theta} outside [0, {}]",
                self.theta_star
            )));
        }
        Ok(())
    }

    /// `f(x; θ)` for `θ ∈ [0, θ*]`.
    pub fn pmf(&self, x: u64, theta: f64) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self.pmf_with_ln_w(x, self.ln_w(x), theta))
    }

    /// `μ_x(G) = Σ_j w_j f(x; loc_j)`.
    pub fn mixture_pmf(&self, g: &AtomicMeasure, x: u64) -> Result<f64> {
        if g.theta_star() > self.theta_star {
            return Err(Error::Domain(format!(
                "measure bound {} exceeds kernel bound {}",
                g.theta_star(),
                self.theta_star
            )));
        }
        let ln_w = self.ln_w(x);
        Ok(g.atoms()
            .iter()
            .map(|a| a.weight * self.pmf_with_ln_w(x, ln_w, a.location))
            .sum())
    }

    /// Smallest `X` such that the envelope tail
    /// `Σ_{x > X} g_max · w(x) · θ*^x` is at most `tol`.
    ///
    /// The envelope dominates `sup_θ f(x; θ)` on `[0, θ*]`, so truncating
    /// any mixture PMF at `X` loses at most `tol` of mass.
    pub fn truncation_index(&self, tol: f64) -> Result<u64> {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(Error::Config(format!(
                "tolerance must be positive, got {tol}"
            )));
        }
        let ln_gmax = self.ln_g(0.0);
        let ln_theta = self.theta_star.ln();
        let term = |x: u64| (ln_gmax + self.ln_w(x) + x as f64 * ln_theta).exp();

        // Generate terms until the remainder after the last one is provably
        // (geometric-ratio bound) negligible next to `tol`.
        let target = tol * 1e-6;
        let mut terms = vec![term(0)];
        let remainder = loop {
            let n = terms.len() as u64;
            if n > MAX_ENVELOPE_TERMS {
                return Err(Error::Config(format!(
                    "envelope tail does not fall below {tol} within {MAX_ENVELOPE_TERMS} terms"
                )));
            }
            let t = term(n);
            if !t.is_finite() {
                return Err(Error::Config("envelope term overflowed".into()));
            }
            let prev = *terms.last().unwrap();
            terms.push(t);
            if prev > 0.0 {
                let ratio = t / prev;
                if ratio < 1.0 {
                    let rem = t * ratio / (1.0 - ratio);
                    if t <= target && rem <= target {
                        break rem;
                    }
                }
            } else if t == 0.0 {
                break 0.0;
            }
        };

        // tail[X] = Σ_{x > X} t_x, accumulated from the small end.
        let mut tail = remainder;
        let mut answer = terms.len() as u64 - 1;
        for x in (0..terms.len() - 1).rev() {
            tail += terms[x + 1];
            if tail <= tol {
                answer = x as u64;
            } else {
                break;
            }
        }
        Ok(answer)
    }

    /// Draws `X ~ f(·; θ)` from a uniform variate by sequential CDF
    /// inversion.
    pub(crate) fn invert_cdf(&self, theta: f64, u: f64) -> u64 {
        if theta == 0.0 {
            return 0;
        }
        let mut x = 0u64;
        let mut p = self.pmf_with_ln_w(0, self.ln_w(0), theta);
        let mut cdf = p;
        let log_theta = theta.ln();
        let ln_g = self.ln_g(theta);
        while u > cdf {
            x += 1;
            p = match self.family {
                Family::Poisson => p * theta / x as f64,
                _ => (ln_g + self.ln_w(x) + x as f64 * log_theta).exp(),
            };
            // Past the mode with nothing left to add: `u` sits in the
            // rounding gap just below 1.
            if cdf + p == cdf && x as f64 > theta {
                break;
            }
            cdf += p;
        }
        x
    }
}

/// Names of the built-in kernels accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelName {
    Poisson,
    Geometric,
}

impl FromStr for KernelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "poisson" => Ok(Self::Poisson),
            "geometric" => Ok(Self::Geometric),
            other => Err(Error::Config(format!(
                "unknown kernel `{other}` (expected poisson or geometric)"
            ))),
        }
    }
}

impl fmt::Display for KernelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Poisson => "poisson",
            Self::Geometric => "geometric",
        })
    }
}
