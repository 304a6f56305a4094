//! Adaptive Gauss–Kronrod (7/15) quadrature and standard normal helpers.

use libm::erfc;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Maximum bisection depth for a single panel.
const MAX_DEPTH: u32 = 60;
/// Maximum number of accepted panels across the whole integral.
const MAX_PANELS: usize = 200_000;

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    /// Sum of the per-panel `|K15 − G7|` estimates.
    pub error: f64,
    pub panels: usize,
}

struct Panel {
    kronrod: f64,
    gauss: f64,
    abs: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut abs = WGK[7] * fc.abs();
    for i in 0..7 {
        let dx = h * XGK[i];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        kronrod += WGK[i] * (f1 + f2);
        abs += WGK[i] * (f1.abs() + f2.abs());
        if i % 2 == 1 {
            gauss += WG[i / 2] * (f1 + f2);
        }
    }
    Panel {
        kronrod: kronrod * h,
        gauss: gauss * h,
        abs: abs * h.abs(),
    }
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// `breakpoints` inside `(a, b)` (kinks, known crossings) seed the initial
/// partition. Panels are bisected until `|K15 − G7|` is below their
/// length-proportional share of `tol`, or below the floating-point floor
/// `50 ε ∫|f|` of the panel.
pub fn integrate<F>(f: F, a: f64, b: f64, breakpoints: &[f64], tol: f64) -> Result<Integral>
where
    F: Fn(f64) -> f64,
{
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::Domain(format!(
            "bad integration interval [{a}, {b}]"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!(
            "quadrature tolerance must be positive, got {tol}"
        )));
    }
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&t| t > a && t < b)
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(a);
    edges.extend(cuts);
    edges.push(b);

    let length = b - a;
    let mut stack: Vec<(f64, f64, u32)> = edges.windows(2).rev().map(|w| (w[0], w[1], 0)).collect();
    let mut value = 0.0;
    let mut error = 0.0;
    let mut panels = 0usize;
    while let Some((lo, hi, depth)) = stack.pop() {
        let p = gk15(&f, lo, hi);
        if !p.kronrod.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite integrand on [{lo}, {hi}]"
            )));
        }
        let err = (p.kronrod - p.gauss).abs();
        let share = tol * (hi - lo) / length;
        let floor = 50.0 * f64::EPSILON * p.abs;
        if err <= share || err <= floor {
            value += p.kronrod;
            error += err;
            panels += 1;
            if panels > MAX_PANELS {
                return Err(Error::Numerical("quadrature panel limit exceeded".into()));
            }
            continue;
        }
        if depth >= MAX_DEPTH {
            return Err(Error::Numerical(format!(
                "quadrature did not reach tolerance {tol} near [{lo}, {hi}] (estimate {err:e})"
            )));
        }
        let mid = 0.5 * (lo + hi);
        stack.push((mid, hi, depth + 1));
        stack.push((lo, mid, depth + 1));
    }
    Ok(Integral {
        value,
        error,
        panels,
    })
}

/// Standard normal CDF, via `erfc` for accuracy in the lower tail.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn std_normal_pdf(z: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x + 1.0, -1.0, 2.0, &[], 1e-12).unwrap();
        let exact = (64.0 - 1.0) / 6.0 - (8.0 + 1.0) + 3.0;
        assert!((r.value - exact).abs() < 1e-13);
        assert_eq!(r.panels, 1);
    }

    #[test]
    fn kink_with_and_without_breakpoint() {
        let f = |x: f64| (x - 0.3).abs();
        let exact = 0.5 * 0.3f64.powi(2) + 0.5 * 0.7f64.powi(2);
        let with = integrate(f, 0.0, 1.0, &[0.3], 1e-12).unwrap();
        assert!((with.value - exact).abs() < 1e-14);
        let without = integrate(f, 0.0, 1.0, &[], 1e-10).unwrap();
        assert!((without.value - exact).abs() < 1e-10);
        assert!(without.panels > with.panels);
    }

    #[test]
    fn gaussian_mass() {
        let r = integrate(std_normal_pdf, -12.0, 12.0, &[], 1e-13).unwrap();
        assert!((r.value - 1.0).abs() < 1e-13);
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        assert!((std_normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        // Lower tail keeps relative accuracy.
        let tail = std_normal_cdf(-10.0);
        assert!((tail / 7.619_853_024_160_527e-24 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(integrate(|x| x, 1.0, 0.0, &[], 1e-9).is_err());
        assert!(integrate(|x| x, 0.0, 1.0, &[], 0.0).is_err());
        assert!(matches!(
            integrate(|x| 1.0 / x, 0.0, 1.0, &[], 1e-9),
            Err(Error::Numerical(_))
        ));
    }
}
