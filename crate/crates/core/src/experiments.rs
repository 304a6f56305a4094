//! Simulation from mixtures and the Monte Carlo studies built on it.
//!
//! Every replication draws from its own ChaCha20 stream whose key is built
//! from `(master_seed, n, r)`, so replications are independent of each
//! other and of scheduling order. Replications run on the rayon pool and
//! are reduced in `(n, r)` order, which makes reports bit-identical for a
//! fixed seed regardless of the thread count.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergences::{chi2_exact, Divergence};
use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::measures::{AtomicMeasure, EmpiricalPmf};
use crate::solver::{oracle_grid_solver, solve, Method, SolverConfig, SolverStatus};
use crate::transport::{got_w1, w1, GotConfig};

/// Largest tolerated share of failed replications at any sample size.
pub const MAX_FAILURE_RATE: f64 = 0.1;

const STREAM_TAG: [u8; 8] = *b"mixdist\0";

/// The random stream of replication `r` at sample size `n`.
pub fn replication_rng(master_seed: u64, n: u64, r: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&n.to_le_bytes());
    key[16..24].copy_from_slice(&r.to_le_bytes());
    key[24..].copy_from_slice(&STREAM_TAG);
    ChaCha20Rng::from_seed(key)
}

/// `n` independent draws from `h_Q`: an atom is picked with probability
/// equal to its weight, then `X ~ f(·; loc)` by CDF inversion.
pub fn sample_mixture_with<R: Rng + ?Sized>(
    kernel: &KernelSpec,
    q: &AtomicMeasure,
    n: usize,
    rng: &mut R,
) -> Result<Vec<u64>> {
    if q.theta_star() > kernel.theta_star() {
        return Err(Error::Domain(format!(
            "measure bound {} exceeds kernel bound {}",
            q.theta_star(),
            kernel.theta_star()
        )));
    }
    let atoms = q.atoms();
    let mut cumulative = Vec::with_capacity(atoms.len());
    let mut acc = 0.0;
    for a in atoms {
        acc += a.weight;
        cumulative.push(acc);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let j = cumulative
            .iter()
            .position(|&c| u < c)
            .unwrap_or(atoms.len() - 1);
        let v: f64 = rng.random();
        out.push(kernel.invert_cdf(atoms[j].location, v));
    }
    Ok(out)
}

/// [`sample_mixture_with`] on a ChaCha20 stream seeded from `seed`.
pub fn sample_mixture(
    kernel: &KernelSpec,
    q: &AtomicMeasure,
    n: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    sample_mixture_with(kernel, q, n, &mut ChaCha20Rng::seed_from_u64(seed))
}

/// Ordinary least squares `y ≈ intercept + slope · x`.
pub fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Nearest-rank empirical `p`-quantile.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn check_grid(n_grid: &[u64], reps: usize) -> Result<()> {
    if n_grid.is_empty() {
        return Err(Error::Config("empty sample-size grid".into()));
    }
    if n_grid[0] == 0 || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "sample sizes must be positive and strictly increasing".into(),
        ));
    }
    if reps < 2 {
        return Err(Error::Config(format!(
            "need at least 2 replications, got {reps}"
        )));
    }
    Ok(())
}

fn check_failures(n: u64, failures: usize, reps: usize, first: Option<&str>) -> Result<()> {
    if failures as f64 > MAX_FAILURE_RATE * reps as f64 {
        return Err(Error::Study(format!(
            "{failures} of {reps} replications failed at n = {n}; first error: {}",
            first.unwrap_or("unknown")
        )));
    }
    Ok(())
}

/// Inputs of [`rate_study`].
#[derive(Debug, Clone)]
pub struct RateStudy {
    pub kernel: KernelSpec,
    pub truth: AtomicMeasure,
    pub method: Method,
    pub solver: SolverConfig,
    pub n_grid: Vec<u64>,
    pub reps: usize,
    pub sigma: f64,
    pub seed: u64,
}

/// One replication of the rate study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Replication {
    pub n: u64,
    pub rep: usize,
    pub got_w1: f64,
    pub w1: f64,
    pub objective: f64,
    pub iterations: usize,
    pub status: String,
}

/// Aggregates at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: u64,
    /// Replications that completed.
    pub reps: usize,
    pub failures: usize,
    /// Completed replications whose solver stopped without the certificate.
    pub uncertified: usize,
    pub mean_got_w1: f64,
    pub stderr_got_w1: f64,
    pub mean_w1: f64,
    pub stderr_w1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub kernel: String,
    pub theta_star: f64,
    pub sigma: f64,
    pub divergence: String,
    pub method: String,
    pub seed: u64,
    pub reps: usize,
    pub rows: Vec<RateRow>,
    pub replications: Vec<Replication>,
    /// Log-log least-squares fit of the mean smoothed distance.
    pub slope_got_w1: f64,
    pub intercept_got_w1: f64,
    pub slope_w1: f64,
    pub intercept_w1: f64,
    /// Replications violating `W₁^σ ≤ W₁ + 1e-8` or `W₁ ≤ θ*`.
    pub pathwise_violations: usize,
}

impl RateReport {
    /// Columns `n,reps,failures,uncertified,mean_got_w1,stderr_got_w1,mean_w1,stderr_w1`.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Columns `n,rep,got_w1,w1,objective,iterations,status`.
    pub fn write_replications_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.replications {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Monte Carlo estimate of how fast `W₁^σ(Q, Q̂)` and `W₁(Q, Q̂)` shrink with
/// `n`.
pub fn rate_study(study: &RateStudy) -> Result<RateReport> {
    check_grid(&study.n_grid, study.reps)?;
    let got_cfg = GotConfig::new(study.sigma)?;
    study.solver.validate(study.kernel.theta_star())?;
    let theta_star = study.kernel.theta_star();

    let tasks: Vec<(u64, usize)> = study
        .n_grid
        .iter()
        .flat_map(|&n| (0..study.reps).map(move |r| (n, r)))
        .collect();
    let outcomes: Vec<std::result::Result<Replication, String>> = tasks
        .par_iter()
        .map(|&(n, r)| {
            let run = || -> Result<Replication> {
                let mut rng = replication_rng(study.seed, n, r as u64);
                let xs = sample_mixture_with(&study.kernel, &study.truth, n as usize, &mut rng)?;
                let emp = EmpiricalPmf::from_samples(&xs)?;
                let (fit, trace) = solve(study.method, &emp, &study.kernel, &study.solver)?;
                Ok(Replication {
                    n,
                    rep: r,
                    got_w1: got_w1(&study.truth, &fit, &got_cfg)?,
                    w1: w1(&study.truth, &fit),
                    objective: trace.final_objective(),
                    iterations: trace.iterations(),
                    status: trace.status.name().to_string(),
                })
            };
            run().map_err(|e| e.to_string())
        })
        .collect();

    let mut rows = Vec::new();
    let mut replications = Vec::new();
    let mut pathwise_violations = 0;
    for (k, &n) in study.n_grid.iter().enumerate() {
        let chunk = &outcomes[k * study.reps..(k + 1) * study.reps];
        let ok: Vec<&Replication> = chunk.iter().filter_map(|o| o.as_ref().ok()).collect();
        let failures = chunk.len() - ok.len();
        let first_err = chunk
            .iter()
            .find_map(|o| o.as_ref().err().map(String::as_str));
        check_failures(n, failures, study.reps, first_err)?;
        let got: Vec<f64> = ok.iter().map(|r| r.got_w1).collect();
        let exact: Vec<f64> = ok.iter().map(|r| r.w1).collect();
        pathwise_violations += ok
            .iter()
            .filter(|r| !(r.got_w1 <= r.w1 + 1e-8 && r.w1 <= theta_star))
            .count();
        let (mean_got_w1, stderr_got_w1) = mean_stderr(&got);
        let (mean_w1, stderr_w1) = mean_stderr(&exact);
        rows.push(RateRow {
            n,
            reps: ok.len(),
            failures,
            uncertified: ok
                .iter()
                .filter(|r| r.status != SolverStatus::Converged.name())
                .count(),
            mean_got_w1,
            stderr_got_w1,
            mean_w1,
            stderr_w1,
        });
        replications.extend(ok.into_iter().cloned());
    }
    let log_n: Vec<f64> = rows.iter().map(|r| (r.n as f64).ln()).collect();
    let log_got: Vec<f64> = rows.iter().map(|r| r.mean_got_w1.ln()).collect();
    let log_w1: Vec<f64> = rows.iter().map(|r| r.mean_w1.ln()).collect();
    let (slope_got_w1, intercept_got_w1) = ols(&log_n, &log_got);
    let (slope_w1, intercept_w1) = ols(&log_n, &log_w1);
    Ok(RateReport {
        kernel: study.kernel.name().to_string(),
        theta_star,
        sigma: study.sigma,
        divergence: study.solver.divergence.name().to_string(),
        method: study.method.name().to_string(),
        seed: study.seed,
        reps: study.reps,
        rows,
        replications,
        slope_got_w1,
        intercept_got_w1,
        slope_w1,
        intercept_w1,
        pathwise_violations,
    })
}

/// `ε(n) = ln ln n / ln n`.
pub fn chi2_epsilon(n: u64) -> f64 {
    let l = (n as f64).ln();
    l.ln() / l
}

/// `n^{−1} (ln n)^{θ*+4} δ^{−1−ε(n)}`, the χ² bound without its constant.
pub fn chi2_bound_shape(n: u64, theta_star: f64, delta: f64) -> f64 {
    let nf = n as f64;
    nf.ln().powf(theta_star + 4.0) / nf * delta.powf(-1.0 - chi2_epsilon(n))
}

/// Inputs of [`chi2_study`].
#[derive(Debug, Clone)]
pub struct Chi2Study {
    pub kernel: KernelSpec,
    pub truth: AtomicMeasure,
    pub n_grid: Vec<u64>,
    pub reps: usize,
    pub delta: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Chi2Row {
    pub n: u64,
    pub reps: usize,
    pub failures: usize,
    /// Empirical `(1 − δ)`-quantile of `χ²(h^obs ‖ h_Q)`.
    pub quantile: f64,
    pub epsilon: f64,
    /// `C · n^{−1} (ln n)^{θ*+4} δ^{−1−ε(n)}` with the fitted `C`.
    pub bound: f64,
    pub under_bound: bool,
    /// `n · quantile`.
    pub scaled_quantile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Chi2Report {
    pub kernel: String,
    pub theta_star: f64,
    pub delta: f64,
    pub seed: u64,
    pub reps: usize,
    /// Constant making the bound tight at the smallest `n`.
    pub fitted_constant: f64,
    pub rows: Vec<Chi2Row>,
}

impl Chi2Report {
    pub fn all_under_bound(&self) -> bool {
        self.rows.iter().all(|r| r.under_bound)
    }

    /// Columns `n,reps,failures,quantile,epsilon,bound,under_bound,scaled_quantile`.
    pub fn write_csv(&self, writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// High-probability behaviour of the exact `χ²(h^obs ‖ h_Q)` at the truth.
pub fn chi2_study(study: &Chi2Study) -> Result<Chi2Report> {
    check_grid(&study.n_grid, study.reps)?;
    if !(study.delta > 0.0 && study.delta < 1.0) {
        return Err(Error::Config(format!(
            "delta must lie in (0, 1), got {}",
            study.delta
        )));
    }
    if study.n_grid[0] < 16 {
        return Err(Error::Config(
            "the smallest sample size must be at least 16".into(),
        ));
    }
    let tasks: Vec<(u64, usize)> = study
        .n_grid
        .iter()
        .flat_map(|&n| (0..study.reps).map(move |r| (n, r)))
        .collect();
    let values: Vec<std::result::Result<f64, String>> = tasks
        .par_iter()
        .map(|&(n, r)| {
            let run = || -> Result<f64> {
                let mut rng = replication_rng(study.seed, n, r as u64);
                let xs = sample_mixture_with(&study.kernel, &study.truth, n as usize, &mut rng)?;
                chi2_exact(
                    &EmpiricalPmf::from_samples(&xs)?,
                    &study.kernel,
                    &study.truth,
                )
            };
            run().map_err(|e| e.to_string())
        })
        .collect();

    let theta_star = study.kernel.theta_star();
    let mut rows = Vec::new();
    for (k, &n) in study.n_grid.iter().enumerate() {
        let chunk = &values[k * study.reps..(k + 1) * study.reps];
        let ok: Vec<f64> = chunk
            .iter()
            .filter_map(|v| v.as_ref().ok().copied())
            .collect();
        let failures = chunk.len() - ok.len();
        let first_err = chunk
            .iter()
            .find_map(|o| o.as_ref().err().map(String::as_str));
        check_failures(n, failures, study.reps, first_err)?;
        let q = quantile(&ok, 1.0 - study.delta);
        rows.push(Chi2Row {
            n,
            reps: ok.len(),
            failures,
            quantile: q,
            epsilon: chi2_epsilon(n),
            bound: f64::NAN,
            under_bound: false,
            scaled_quantile: n as f64 * q,
        });
    }
    let fitted_constant = rows[0].quantile / chi2_bound_shape(rows[0].n, theta_star, study.delta);
    for r in &mut rows {
        r.bound = fitted_constant * chi2_bound_shape(r.n, theta_star, study.delta);
        // Equality holds at the calibration point up to rounding.
        r.under_bound = r.quantile <= r.bound * (1.0 + 1e-12);
    }
    Ok(Chi2Report {
        kernel: study.kernel.name().to_string(),
        theta_star,
        delta: study.delta,
        seed: study.seed,
        reps: study.reps,
        fitted_constant,
        rows,
    })
}

/// A named estimation problem.
#[derive(Debug, Clone)]
pub struct Instance {
    pub name: String,
    pub emp: EmpiricalPmf,
    pub kernel: KernelSpec,
}

/// The fixed five-instance suite used to compare the solvers.
pub fn fixed_suite() -> Result<Vec<Instance>> {
    let mk = |name: &str, xs: Vec<u64>, kernel: KernelSpec| -> Result<Instance> {
        Ok(Instance {
            name: name.to_string(),
            emp: EmpiricalPmf::from_samples(&xs)?,
            kernel,
        })
    };
    let mut two_groups = vec![0u64; 50];
    two_groups.extend([5u64; 50]);
    let pois4 = KernelSpec::poisson(4.0)?;
    let two_atoms = AtomicMeasure::new(4.0, vec![(1.0, 0.5), (3.0, 0.5)])?;
    let geo = KernelSpec::geometric(0.8)?;
    let geo_truth = AtomicMeasure::new(0.8, vec![(0.2, 0.3), (0.6, 0.7)])?;
    Ok(vec![
        mk("constant_2", vec![2; 100], KernelSpec::poisson(5.0)?)?,
        mk("two_groups", two_groups, KernelSpec::poisson(6.0)?)?,
        mk("constant_1_small", vec![1; 10], KernelSpec::poisson(3.0)?)?,
        mk(
            "poisson_two_atoms",
            sample_mixture(&pois4, &two_atoms, 200, 20_240_601)?,
            pois4,
        )?,
        mk(
            "geometric_two_atoms",
            sample_mixture(&geo, &geo_truth, 300, 20_240_602)?,
            geo,
        )?,
    ])
}

/// Grid size used for the reference solution in [`solver_comparison`].
pub const ORACLE_GRID_POINTS: usize = 32_768;

/// One (instance, divergence) cell of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub instance: String,
    pub divergence: String,
    pub phi_vdm: f64,
    pub phi_isdm: f64,
    pub phi_oracle: f64,
    pub iters_vdm: usize,
    pub iters_isdm: usize,
    pub status_vdm: String,
    pub status_isdm: String,
    pub min_derivative_vdm: f64,
    pub min_derivative_isdm: f64,
    pub monotone_vdm: bool,
    pub monotone_isdm: bool,
    pub atoms_vdm: usize,
    pub atoms_isdm: usize,
    /// Largest pairwise difference among the three objective values.
    pub max_gap: f64,
}

/// Runs VDM, ISDM and the grid oracle on every instance for every
/// divergence.
pub fn solver_comparison(
    instances: &[Instance],
    base: &SolverConfig,
) -> Result<Vec<ComparisonRow>> {
    if instances.is_empty() {
        return Err(Error::EmptyInput);
    }
    let cells: Vec<(usize, Divergence)> = (0..instances.len())
        .flat_map(|i| Divergence::ALL.into_iter().map(move |d| (i, d)))
        .collect();
    cells
        .par_iter()
        .map(|&(i, div)| {
            let inst = &instances[i];
            let cfg = SolverConfig {
                divergence: div,
                ..base.clone()
            };
            let (gv, tv) = solve(Method::Vdm, &inst.emp, &inst.kernel, &cfg)?;
            let (gi, ti) = solve(Method::Isdm, &inst.emp, &inst.kernel, &cfg)?;
            let (_, phi_oracle) =
                oracle_grid_solver(&inst.emp, &inst.kernel, div, ORACLE_GRID_POINTS)?;
            let (pv, pi) = (tv.final_objective(), ti.final_objective());
            let max_gap = (pv - pi)
                .abs()
                .max((pv - phi_oracle).abs())
                .max((pi - phi_oracle).abs());
            Ok(ComparisonRow {
                instance: inst.name.clone(),
                divergence: div.name().to_string(),
                phi_vdm: pv,
                phi_isdm: pi,
                phi_oracle,
                iters_vdm: tv.iterations(),
                iters_isdm: ti.iterations(),
                status_vdm: tv.status.name().to_string(),
                status_isdm: ti.status.name().to_string(),
                min_derivative_vdm: tv.final_min_derivative(),
                min_derivative_isdm: ti.final_min_derivative(),
                monotone_vdm: tv.is_monotone(1e-12),
                monotone_isdm: ti.is_monotone(1e-12),
                atoms_vdm: gv.len(),
                atoms_isdm: gi.len(),
                max_gap,
            })
        })
        .collect()
}

/// Columns as in [`ComparisonRow`], in declaration order.
pub fn write_comparison_csv(rows: &[ComparisonRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// JSON study configuration of the `rates` and `chi2` commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub kernel: String,
    pub theta_star: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_divergence")]
    pub divergence: String,
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default)]
    pub n_grid: Vec<u64>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
    /// Mixing distribution used to simulate data, as `[[location, weight], ...]`.
    #[serde(default)]
    pub truth: Option<Vec<[f64; 2]>>,
}

fn default_sigma() -> f64 {
    1.0
}
fn default_divergence() -> String {
    "kl".into()
}
fn default_method() -> String {
    "vdm".into()
}
fn default_reps() -> usize {
    50
}
fn default_delta() -> f64 {
    0.05
}

impl StudyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        KernelSpec::by_name(&self.kernel, self.theta_star)
    }

    /// The configured truth, or a point mass at `θ*/2` if none is given.
    pub fn truth_measure(&self) -> Result<AtomicMeasure> {
        match &self.truth {
            Some(atoms) => AtomicMeasure::new(
                self.theta_star,
                atoms.iter().map(|a| (a[0], a[1])).collect(),
            ),
            None => AtomicMeasure::point_mass(self.theta_star, 0.5 * self.theta_star),
        }
    }

    pub fn rate_study(&self) -> Result<RateStudy> {
        let divergence: Divergence = self.divergence.parse()?;
        Ok(RateStudy {
            kernel: self.kernel_spec()?,
            truth: self.truth_measure()?,
            method: self.method.parse()?,
            solver: SolverConfig::new(divergence),
            n_grid: self.n_grid.clone(),
            reps: self.reps,
            sigma: self.sigma,
            seed: self.seed,
        })
    }

    pub fn chi2_study(&self) -> Result<Chi2Study> {
        Ok(Chi2Study {
            kernel: self.kernel_spec()?,
            truth: self.truth_measure()?,
            n_grid: self.n_grid.clone(),
            reps: self.reps,
            delta: self.delta,
            seed: self.seed,
        })
    }
}
