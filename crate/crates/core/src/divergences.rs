//! Generalized distances of the form `d(p ‖ q) = w(p) + Σ_x φ(p(x), q(x))`.
//!
//! Each member has `φ(0, y₂) = 0` and is strictly convex in `y₂` for
//! `y₁ > 0`. Since `q` sums to one, the `q`-only parts of each divergence
//! are absorbed into the constant `w`, and evaluation only ever touches the
//! support of `p`:
//!
//! | divergence | `w` | `φ(y₁, y₂)` |
//! |---|---|---|
//! | squared Hellinger `H²` | 1 | `-√(y₁y₂)` |
//! | Le Cam `LC` | 1 | `-2y₁y₂/(y₁+y₂)` |
//! | Jensen–Shannon `JS` | `2 log 2` | `y₁ log(y₁/(y₁+y₂)) + y₂ log(y₂/(y₁+y₂))` |
//! | Kullback–Leibler | 0 | `y₁ log(y₁/y₂)` |
//! | chi-square `χ²` | -1 | `y₁²/y₂` |
//!
//! Here `H² = ½Σ(√p−√q)²`, `LC = ½Σ(p−q)²/(p+q)` and
//! `JS = KL(p‖m) + KL(q‖m)` with `m = (p+q)/2`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::measures::{AtomicMeasure, EmpiricalPmf};

/// Below this the chi-square model probability counts as zero.
const CHI2_FLOOR: f64 = 1e-300;
/// Slack allowed in each inequality of [`chain_check`].
pub const CHAIN_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Divergence {
    Hellinger2,
    LeCam,
    JensenShannon,
    KullbackLeibler,
    ChiSquare,
}

impl Divergence {
    pub const ALL: [Divergence; 5] = [
        Divergence::Hellinger2,
        Divergence::LeCam,
        Divergence::JensenShannon,
        Divergence::KullbackLeibler,
        Divergence::ChiSquare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Hellinger2 => "hellinger2",
            Self::LeCam => "lecam",
            Self::JensenShannon => "js",
            Self::KullbackLeibler => "kl",
            Self::ChiSquare => "chi2",
        }
    }

    /// The constant `w(p)`.
    pub fn w_term(self) -> f64 {
        match self {
            Self::Hellinger2 | Self::LeCam => 1.0,
            Self::JensenShannon => 2.0 * std::f64::consts::LN_2,
            Self::KullbackLeibler => 0.0,
            Self::ChiSquare => -1.0,
        }
    }

    /// Whether a zero model probability on the support of `p` makes the
    /// divergence infinite.
    pub fn needs_positive_model_mass(self) -> bool {
        matches!(self, Self::KullbackLeibler | Self::ChiSquare)
    }

    /// `φ(y₁, y₂)`. Returns `+∞` where the divergence is infinite.
    pub fn phi(self, y1: f64, y2: f64) -> f64 {
        if y1 == 0.0 {
            return 0.0;
        }
        match self {
            Self::Hellinger2 => -(y1 * y2).sqrt(),
            Self::LeCam => -2.0 * y1 * y2 / (y1 + y2),
            Self::JensenShannon => {
                // log(y₁/(y₁+y₂)) = -log1p(y₂/y₁), accurate when y₁ ≈ y₂.
                let a = -y1 * (y2 / y1).ln_1p();
                let b = if y2 > 0.0 {
                    -y2 * (y1 / y2).ln_1p()
                } else {
                    0.0
                };
                a + b
            }
            Self::KullbackLeibler => {
                if y2 > 0.0 {
                    y1 * (y1 / y2).ln()
                } else {
                    f64::INFINITY
                }
            }
            Self::ChiSquare => {
                if y2 >= CHI2_FLOOR {
                    y1 * y1 / y2
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// `∂φ/∂y₂`.
    pub fn dphi_dy2(self, y1: f64, y2: f64) -> f64 {
        if y1 == 0.0 {
            return 0.0;
        }
        match self {
            Self::Hellinger2 => -0.5 * (y1 / y2).sqrt(),
            Self::LeCam => {
                let s = y1 + y2;
                -2.0 * y1 * y1 / (s * s)
            }
            Self::JensenShannon => -(y1 / y2).ln_1p(),
            Self::KullbackLeibler => -y1 / y2,
            Self::ChiSquare => -(y1 / y2) * (y1 / y2),
        }
    }

    /// `∂²φ/∂y₂²`, positive for `y₁ > 0`.
    pub fn d2phi_dy2(self, y1: f64, y2: f64) -> f64 {
        if y1 == 0.0 {
            return 0.0;
        }
        match self {
            Self::Hellinger2 => 0.25 * y1.sqrt() * y2.powf(-1.5),
            Self::LeCam => {
                let s = y1 + y2;
                4.0 * y1 * y1 / (s * s * s)
            }
            Self::JensenShannon => y1 / (y2 * (y1 + y2)),
            Self::KullbackLeibler => y1 / (y2 * y2),
            Self::ChiSquare => 2.0 * (y1 / y2) * (y1 / y2) / y2,
        }
    }

    /// `φ(y₁, y₂ + δ) − φ(y₁, y₂)`, evaluated without forming the two values,
    /// so that changes far below the rounding of `φ` itself keep their sign
    /// and leading digits.
    pub fn phi_delta(self, y1: f64, y2: f64, delta: f64) -> f64 {
        if y1 == 0.0 || delta == 0.0 {
            return 0.0;
        }
        let y3 = y2 + delta;
        let naive = || self.phi(y1, y3) - self.phi(y1, y2);
        if !(y2 > 0.0 && y3 > 0.0) {
            return naive();
        }
        let v = match self {
            Self::Hellinger2 => -y1.sqrt() * delta / (y3.sqrt() + y2.sqrt()),
            Self::LeCam => -2.0 * y1 * y1 * delta / ((y1 + y3) * (y1 + y2)),
            Self::JensenShannon => {
                // y·log1p(y₁/y) changes by δ·log1p(y₁/y₃) + y₂[log1p(δ/(y₂+y₁)) − log1p(δ/y₂)].
                let a = -y1 * (delta / (y1 + y2)).ln_1p();
                let g = delta * (y1 / y3).ln_1p()
                    + y2 * ((delta / (y2 + y1)).ln_1p() - (delta / y2).ln_1p());
                a - g
            }
            Self::KullbackLeibler => -y1 * (delta / y2).ln_1p(),
            Self::ChiSquare => {
                if y2 < CHI2_FLOOR || y3 < CHI2_FLOOR {
                    return naive();
                }
                -(y1 / y2) * (y1 / y3) * delta
            }
        };
        if v.is_finite() {
            v
        } else {
            naive()
        }
    }

    /// `d(p ‖ q)` where `p` is given by its support `(x, p(x))` and `q` is a
    /// PMF over all nonnegative integers that sums to one.
    ///
    /// Only the support of `p` is visited; the result is exact for any `q`
    /// summing to one. Tiny negative results from cancellation are clamped
    /// to zero.
    pub fn evaluate<I, Q>(self, p: I, q: Q) -> Result<f64>
    where
        I: IntoIterator<Item = (u64, f64)>,
        Q: Fn(u64) -> f64,
    {
        let mut total = self.w_term();
        for (x, px) in p {
            if px == 0.0 {
                continue;
            }
            let qx = q(x);
            let term = self.phi(px, qx);
            if !term.is_finite() {
                return Err(Error::SupportViolation { value: x });
            }
            total += term;
        }
        Ok(total.max(0.0))
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown divergence `{s}` (expected hellinger2, lecam, js, kl or chi2)"
                ))
            })
    }
}

/// All five divergences for one `(p, q)` pair and the six inequalities
/// relating them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainReport {
    pub hellinger2: f64,
    pub lecam: f64,
    pub js: f64,
    pub kl: f64,
    pub chi2: f64,
    /// `2H² ≤ KL`
    pub two_h2_le_kl: bool,
    /// `KL ≤ χ²`
    pub kl_le_chi2: bool,
    /// `H² ≤ LC`
    pub h2_le_lc: bool,
    /// `LC ≤ 2H²`
    pub lc_le_two_h2: bool,
    /// `LC ≤ JS`
    pub lc_le_js: bool,
    /// `JS ≤ 2 log 2 · LC`
    pub js_le_lc_bound: bool,
}

impl ChainReport {
    pub fn all_hold(&self) -> bool {
        self.flags().iter().all(|&b| b)
    }

    pub fn flags(&self) -> [bool; 6] {
        [
            self.two_h2_le_kl,
            self.kl_le_chi2,
            self.h2_le_lc,
            self.lc_le_two_h2,
            self.lc_le_js,
            self.js_le_lc_bound,
        ]
    }

    /// Largest amount by which any inequality is violated (zero if all
    /// hold exactly).
    pub fn max_violation(&self) -> f64 {
        let ln4 = 2.0 * std::f64::consts::LN_2;
        [
            2.0 * self.hellinger2 - self.kl,
            self.kl - self.chi2,
            self.hellinger2 - self.lecam,
            self.lecam - 2.0 * self.hellinger2,
            self.lecam - self.js,
            self.js - ln4 * self.lecam,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Evaluates all five divergences between `p` and `q` and checks
/// `2H² ≤ KL ≤ χ²`, `H² ≤ LC ≤ 2H²` and `LC ≤ JS ≤ 2 log 2 · LC`, each up to
/// [`CHAIN_SLACK`].
pub fn chain_check<I, Q>(p: I, q: Q) -> Result<ChainReport>
where
    I: IntoIterator<Item = (u64, f64)> + Clone,
    Q: Fn(u64) -> f64,
{
    let eval = |d: Divergence| d.evaluate(p.clone(), &q);
    let h2 = eval(Divergence::Hellinger2)?;
    let lc = eval(Divergence::LeCam)?;
    let js = eval(Divergence::JensenShannon)?;
    let kl = eval(Divergence::KullbackLeibler)?;
    let chi2 = eval(Divergence::ChiSquare)?;
    let ln4 = 2.0 * std::f64::consts::LN_2;
    let s = CHAIN_SLACK;
    Ok(ChainReport {
        hellinger2: h2,
        lecam: lc,
        js,
        kl,
        chi2,
        two_h2_le_kl: 2.0 * h2 <= kl + s,
        kl_le_chi2: kl <= chi2 + s,
        h2_le_lc: h2 <= lc + s,
        lc_le_two_h2: lc <= 2.0 * h2 + s,
        lc_le_js: lc <= js + s,
        js_le_lc_bound: js <= ln4 * lc + s,
    })
}

/// Exact `χ²(h^obs ‖ h_Q) = Σ_{observed x} α_x² / μ_x(Q) − 1`.
///
/// The unobserved part of the infinite sum collapses into the `−1` because
/// `h_Q` sums to one.
pub fn chi2_exact(emp: &EmpiricalPmf, kernel: &KernelSpec, q: &AtomicMeasure) -> Result<f64> {
    let mut total = -1.0;
    for (x, a) in emp.iter() {
        let mu = kernel.mixture_pmf(q, x)?;
        if mu < CHI2_FLOOR {
            return Err(Error::SupportViolation { value: x });
        }
        total += a * a / mu;
    }
    Ok(total.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(values: &'static [f64]) -> impl Fn(u64) -> f64 {
        move |x| values.get(x as usize).copied().unwrap_or(0.0)
    }

    #[test]
    fn identical_pmfs_give_zero() {
        let p = [(0u64, 0.5), (1, 0.5)];
        for d in Divergence::ALL {
            let v = d.evaluate(p, dense(&[0.5, 0.5])).unwrap();
            assert!(v.abs() <= 1e-12, "{d}: {v}");
        }
    }

    #[test]
    fn point_mass_against_fair_coin() {
        let p = [(0u64, 1.0)];
        let q = dense(&[0.5, 0.5]);
        let h2 = Divergence::Hellinger2.evaluate(p, &q).unwrap();
        let kl = Divergence::KullbackLeibler.evaluate(p, &q).unwrap();
        let chi2 = Divergence::ChiSquare.evaluate(p, &q).unwrap();
        // Direct sums over both cells.
        let h2_oracle = 0.5 * ((1.0 - 0.5f64.sqrt()).powi(2) + 0.5);
        let kl_oracle = (1.0f64 / 0.5).ln();
        let chi2_oracle = 0.5f64.powi(2) / 0.5 + 0.5f64.powi(2) / 0.5;
        assert!((h2 - h2_oracle).abs() < 1e-15);
        assert!((h2 - 0.29289).abs() < 1e-5);
        assert!((kl - kl_oracle).abs() < 1e-15);
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((chi2 - chi2_oracle).abs() < 1e-15);
        assert!(2.0 * h2 <= kl && kl <= chi2);
    }

    #[test]
    fn lecam_and_js_closed_forms() {
        let p = [(0u64, 1.0)];
        let q = dense(&[0.5, 0.5]);
        let lc = Divergence::LeCam.evaluate(p, &q).unwrap();
        let js = Divergence::JensenShannon.evaluate(p, &q).unwrap();
        let lc_oracle = 0.5 * (0.25 / 1.5 + 0.25 / 0.5);
        let m = [0.75, 0.25];
        let js_oracle =
            (1.0f64 / m[0]).ln() + 0.5 * (0.5f64 / m[0]).ln() + 0.5 * (0.5f64 / m[1]).ln();
        assert!((lc - 1.0 / 3.0).abs() < 1e-15);
        assert!((lc - lc_oracle).abs() < 1e-15);
        assert!((js - js_oracle).abs() < 1e-15);
        let report = chain_check(p, &q).unwrap();
        assert!(report.all_hold());
        assert!(js > 1.0 / 3.0 && js < 2.0 * std::f64::consts::LN_2 / 3.0);
    }

    #[test]
    fn chain_check_on_equal_pmfs() {
        let r = chain_check([(0u64, 0.25), (3, 0.75)], dense(&[0.25, 0.0, 0.0, 0.75])).unwrap();
        assert!(r.all_hold());
        assert!(r.max_violation() <= 1e-15);
        assert!(r.kl.abs() < 1e-15 && r.chi2.abs() < 1e-15);
    }

    #[test]
    fn support_violation_names_value() {
        let p = [(0u64, 0.5), (4, 0.5)];
        let q = dense(&[1.0]);
        for d in [Divergence::KullbackLeibler, Divergence::ChiSquare] {
            match d.evaluate(p, &q) {
                Err(Error::SupportViolation { value }) => assert_eq!(value, 4),
                other => panic!("{d}: {other:?}"),
            }
        }
        // The bounded divergences are fine with disjoint supports.
        let h2 = Divergence::Hellinger2.evaluate([(4u64, 1.0)], &q).unwrap();
        assert!((h2 - 1.0).abs() < 1e-15);
        let js = Divergence::JensenShannon
            .evaluate([(4u64, 1.0)], &q)
            .unwrap();
        assert!((js - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn phi_vanishes_at_zero_first_argument() {
        for d in Divergence::ALL {
            for y2 in [0.0, 1e-300, 0.3, 1.0] {
                assert_eq!(d.phi(0.0, y2), 0.0);
                assert_eq!(d.dphi_dy2(0.0, y2), 0.0);
            }
        }
    }

    #[test]
    fn parse_names() {
        for d in Divergence::ALL {
            assert_eq!(d.name().parse::<Divergence>().unwrap(), d);
        }
        assert!("tv".parse::<Divergence>().is_err());
    }

    #[test]
    fn chi2_exact_single_value() {
        let emp = EmpiricalPmf::from_samples(&[2, 2, 2]).unwrap();
        let k = KernelSpec::poisson(5.0).unwrap();
        let q = AtomicMeasure::point_mass(5.0, 2.0).unwrap();
        let pois22 = 2.0 * (-2.0f64).exp();
        let v = chi2_exact(&emp, &k, &q).unwrap();
        assert!((v - (1.0 / pois22 - 1.0)).abs() < 1e-12);
        assert!((v - 2.694528).abs() < 1e-6);
    }

    #[test]
    fn chi2_exact_matches_truncated_brute_force() {
        let k = KernelSpec::poisson(3.0).unwrap();
        let q = AtomicMeasure::new(3.0, vec![(0.5, 0.4), (2.5, 0.6)]).unwrap();
        let emp = EmpiricalPmf::from_samples(&[0, 0, 1, 2, 2, 2, 3, 5, 9]).unwrap();
        let x_max = k.truncation_index(1e-12).unwrap();
        let mut brute = 0.0;
        let mut mass = 0.0;
        for x in 0..=x_max {
            let mu = k.mixture_pmf(&q, x).unwrap();
            let a = emp.freq(x);
            brute += (a - mu).powi(2) / mu;
            mass += mu;
        }
        brute += 1.0 - mass; // unobserved tail contributes its own mass
        let exact = chi2_exact(&emp, &k, &q).unwrap();
        assert!((exact - brute).abs() < 1e-9, "{exact} vs {brute}");
    }

    #[test]
    fn chi2_exact_zero_on_matching_frequencies() {
        // A point mass at zero is matched exactly by an all-zero sample.
        let k = KernelSpec::poisson(1.0).unwrap();
        let q = AtomicMeasure::point_mass(1.0, 0.0).unwrap();
        let emp = EmpiricalPmf::from_samples(&[0; 7]).unwrap();
        assert_eq!(chi2_exact(&emp, &k, &q).unwrap(), 0.0);
    }

    fn central_difference(d: Divergence, y1: f64, y2: f64) -> f64 {
        let h = 1e-6 * y2.max(1.0);
        let h = h.min(0.5 * y2);
        (d.phi(y1, y2 + h) - d.phi(y1, y2 - h)) / (2.0 * h)
    }

    #[test]
    fn derivative_matches_finite_difference_on_grid() {
        // 10 x 10 grid in (0, 1]^2.
        for d in Divergence::ALL {
            for i in 1..=10 {
                for j in 1..=10 {
                    let (y1, y2) = (i as f64 / 10.0, j as f64 / 10.0);
                    let exact = d.dphi_dy2(y1, y2);
                    let fd = central_difference(d, y1, y2);
                    assert!(
                        (exact - fd).abs() <= 1e-5 * exact.abs(),
                        "{d} at ({y1},{y2}): {exact} vs {fd}"
                    );
                    let second = (d.dphi_dy2(y1, y2 + 1e-6) - d.dphi_dy2(y1, y2 - 1e-6)) / 2e-6;
                    assert!((d.d2phi_dy2(y1, y2) - second).abs() <= 1e-5 * second.abs());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn derivative_matches_finite_difference(y1 in 1e-3..=1.0f64, y2 in 1e-2..=1.0f64) {
            for d in Divergence::ALL {
                let exact = d.dphi_dy2(y1, y2);
                let fd = central_difference(d, y1, y2);
                prop_assert!((exact - fd).abs() <= 1e-5 * exact.abs(), "{} {} {}", d, exact, fd);
            }
        }

        #[test]
        fn phi_delta_matches_the_difference(y1 in 1e-3..=1.0f64, y2 in 1e-3..=1.0f64, r in -0.9..=2.0f64) {
            let delta = r * y2;
            for d in Divergence::ALL {
                let stable = d.phi_delta(y1, y2, delta);
                let naive = d.phi(y1, y2 + delta) - d.phi(y1, y2);
                let scale = d.phi(y1, y2).abs().max(d.phi(y1, y2 + delta).abs());
                prop_assert!((stable - naive).abs() <= 1e-13 * scale.max(1e-300), "{} {} {}", d, stable, naive);
            }
        }

        #[test]
        fn phi_delta_is_first_order_for_tiny_steps(y1 in 1e-3..=1.0f64, y2 in 1e-3..=1.0f64, e in 1e-15..1e-9f64) {
            // The remainder is second order: |Δ − ∂φ·δ| ≤ ∂²φ·δ² up to rounding of Δ itself.
            let delta = e * y2;
            for d in Divergence::ALL {
                let stable = d.phi_delta(y1, y2, delta);
                let linear = d.dphi_dy2(y1, y2) * delta;
                let curv = d.d2phi_dy2(y1, y2) * delta * delta;
                prop_assert!((stable - linear).abs() <= curv + 1e-14 * linear.abs(), "{} {} {}", d, stable, linear);
            }
        }

        #[test]
        fn strictly_convex_in_second_argument(
            y1 in prop::sample::select(vec![0.1, 0.5, 1.0]),
            a in 1e-6..=1.0f64,
            b in 1e-6..=1.0f64,
        ) {
            prop_assume!((a - b).abs() > 1e-4);
            for d in Divergence::ALL {
                let mid = d.phi(y1, 0.5 * (a + b));
                let chord = 0.5 * d.phi(y1, a) + 0.5 * d.phi(y1, b);
                prop_assert!(mid < chord, "{}: {} !< {}", d, mid, chord);
            }
        }

        #[test]
        fn nonnegative_and_zero_only_at_match(
            raw_p in prop::collection::vec(0.0..1.0f64, 2..8),
            raw_q in prop::collection::vec(0.01..1.0f64, 8),
        ) {
            let sp: f64 = raw_p.iter().sum();
            prop_assume!(sp > 0.1);
            let sq: f64 = raw_q.iter().sum();
            let p: Vec<(u64, f64)> = raw_p.iter().enumerate().map(|(i, &v)| (i as u64, v / sp)).collect();
            let q = |x: u64| raw_q[x as usize] / sq;
            for d in Divergence::ALL {
                prop_assert!(d.evaluate(p.clone(), q).unwrap() >= 0.0);
                let same = d.evaluate(p.clone(), |x: u64| p.get(x as usize).map_or(0.0, |t| t.1)).unwrap();
                prop_assert!(same <= 1e-10);
            }
        }
    }
}
