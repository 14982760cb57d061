//! Simulation designs and the Monte Carlo harness.
//!
//! Responses follow the conditional Pareto model with unit scale:
//! `Y = (1 - U)^(-1/alpha)`, `alpha = exp(x'theta0)`, `U ~ Uniform(0,1)`.
//! Each replicate draws a fresh sample, thresholds it at the empirical
//! `cutoff_level` quantile and runs one debiased estimator for a single
//! coordinate.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{format_float, tail_at_level, Dataset, Design};
use crate::debias::{debias, DebiasConfig, Method};
use crate::error::{Error, Result};
use crate::likelihood::check_cap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaDesign {
    /// `(1.0, 0.9, ..., 0.1, 0, 0, ...)`.
    Sparse,
    /// `theta_j = 0.5^(j-1)`.
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XDesign {
    /// iid `N(0, 0.1^2)`.
    Gaussian,
    /// iid `Uniform(-0.1, 0.1)`.
    Uniform,
    /// iid `0.1 * Bernoulli(0.1)`.
    Bernoulli,
}

impl ThetaDesign {
    pub fn as_str(&self) -> &'static str {
        match self {
            ThetaDesign::Sparse => "sparse",
            ThetaDesign::Exponential => "exponential",
        }
    }
}

impl XDesign {
    pub fn as_str(&self) -> &'static str {
        match self {
            XDesign::Gaussian => "gaussian",
            XDesign::Uniform => "uniform",
            XDesign::Bernoulli => "bernoulli",
        }
    }
}

impl std::str::FromStr for ThetaDesign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(ThetaDesign::Sparse),
            "exponential" => Ok(ThetaDesign::Exponential),
            _ => Err(Error::Config(format!("unknown theta design '{s}'"))),
        }
    }
}

impl std::str::FromStr for XDesign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(XDesign::Gaussian),
            "uniform" => Ok(XDesign::Uniform),
            "bernoulli" => Ok(XDesign::Bernoulli),
            _ => Err(Error::Config(format!("unknown covariate design '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpConfig {
    pub theta_design: ThetaDesign,
    pub x_design: XDesign,
    pub n: usize,
    pub p: usize,
    pub cutoff_level: f64,
    pub seed: u64,
}

impl DgpConfig {
    pub fn new(theta_design: ThetaDesign, x_design: XDesign, n: usize, p: usize, seed: u64) -> Self {
        Self { theta_design, x_design, n, p, cutoff_level: 0.95, seed }
    }

    fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::InvalidInput(format!("n must be at least 10, got {}", self.n)));
        }
        if self.p < 2 {
            return Err(Error::InvalidInput(format!("p must be at least 2, got {}", self.p)));
        }
        if !(self.cutoff_level > 0.0 && self.cutoff_level < 1.0) {
            return Err(Error::InvalidInput("cutoff_level must lie in (0,1)".into()));
        }
        Ok(())
    }
}

pub fn gen_theta(design: ThetaDesign, p: usize) -> Result<DVector<f64>> {
    match design {
        ThetaDesign::Sparse => {
            if p < 10 {
                return Err(Error::InvalidInput(format!("the sparse design needs p >= 10, got {p}")));
            }
            Ok(DVector::from_fn(p, |j, _| if j < 10 { (10 - j) as f64 / 10.0 } else { 0.0 }))
        }
        ThetaDesign::Exponential => Ok(DVector::from_fn(p, |j, _| 0.5f64.powi(j as i32))),
    }
}

pub fn gen_covariates<R: Rng>(design: XDesign, n: usize, p: usize, rng: &mut R) -> DMatrix<f64> {
    let mut x = DMatrix::zeros(n, p);
    match design {
        XDesign::Gaussian => {
            let normal = Normal::new(0.0, 0.1).expect("valid sd");
            for i in 0..n {
                for j in 0..p {
                    x[(i, j)] = normal.sample(rng);
                }
            }
        }
        XDesign::Uniform => {
            for i in 0..n {
                for j in 0..p {
                    // open interval: redraw the measure-zero endpoint
                    let mut v = rng.random_range(-0.1..0.1);
                    while v == -0.1 {
                        v = rng.random_range(-0.1..0.1);
                    }
                    x[(i, j)] = v;
                }
            }
        }
        XDesign::Bernoulli => {
            for i in 0..n {
                for j in 0..p {
                    x[(i, j)] = if rng.random_bool(0.1) { 0.1 } else { 0.0 };
                }
            }
        }
    }
    x
}

/// Inverse of the unit-scale Pareto CDF `1 - t^(-alpha)`.
pub fn pareto_inverse_cdf(u: f64, alpha: f64) -> f64 {
    (1.0 - u).powf(-1.0 / alpha)
}

pub fn gen_response<R: Rng>(x: &DMatrix<f64>, theta: &DVector<f64>, rng: &mut R) -> Result<Vec<f64>> {
    if x.ncols() != theta.len() {
        return Err(Error::DimensionMismatch { expected: x.ncols(), got: theta.len() });
    }
    let eta = x * theta;
    check_cap(&eta)?;
    Ok(eta.iter().map(|e| pareto_inverse_cdf(rng.random::<f64>(), e.exp())).collect())
}

/// One simulated dataset and its true coefficient vector.
pub fn generate<R: Rng>(dgp: &DgpConfig, rng: &mut R) -> Result<(Dataset, DVector<f64>)> {
    dgp.validate()?;
    let theta = gen_theta(dgp.theta_design, dgp.p)?;
    let x = gen_covariates(dgp.x_design, dgp.n, dgp.p, rng);
    let y = gen_response(&x, &theta, rng)?;
    Ok((Dataset::new(y, Design::Dense(x), None)?, theta))
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `rep`: `mix64(mix64(seed) ^ rep)`.
pub fn replicate_seed(seed: u64, rep: u64) -> u64 {
    mix64(mix64(seed) ^ rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub dgp: DgpConfig,
    pub reps: usize,
    pub method: Method,
    /// Fold count for cross-fitting.
    pub k: usize,
    pub debias: DebiasConfig,
    /// Evaluated coordinate (0-based).
    pub coord: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replicate {
    pub rep: usize,
    pub n0: usize,
    pub theta_tilde: f64,
    pub se: f64,
    pub covered: bool,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub reps: usize,
    pub coord: usize,
    pub theta0: f64,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
    pub coverage: f64,
    pub failures: usize,
    /// Mean effective sample size over successful replicates.
    pub mean_n0: f64,
    /// Set when fewer than two replicates succeeded, so `sd` is reported as 0.
    pub degenerate: bool,
}

pub fn run_replicate(cfg: &McConfig, rep: usize) -> Replicate {
    let seed = replicate_seed(cfg.dgp.seed, rep as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let outcome = (|| -> Result<(usize, f64, f64, bool)> {
        let (data, theta0) = generate(&cfg.dgp, &mut rng)?;
        let tail = tail_at_level(&data, cfg.dgp.cutoff_level)?;
        let dcfg = DebiasConfig { seed: mix64(seed), ..cfg.debias.clone() };
        let inf = debias(&tail, cfg.method, cfg.k, &[cfg.coord], &dcfg)?;
        let c = inf.coefficients.into_iter().next().expect("one coordinate requested");
        let d = c.estimate?;
        let truth = theta0[cfg.coord];
        Ok((tail.n0(), d.theta_tilde, d.se, d.ci_low <= truth && truth <= d.ci_high))
    })();
    match outcome {
        Ok((n0, theta_tilde, se, covered)) => Replicate { rep, n0, theta_tilde, se, covered, failed: false },
        Err(e) => {
            log::warn!("replicate {rep} failed: {e}");
            Replicate { rep, n0: 0, theta_tilde: f64::NAN, se: f64::NAN, covered: false, failed: true }
        }
    }
}

/// Aggregates replicates; failed ones are counted and excluded.
pub fn summarize(replicates: &[Replicate], theta0: f64, coord: usize) -> Result<McSummary> {
    let ok: Vec<&Replicate> = replicates.iter().filter(|r| !r.failed).collect();
    if ok.is_empty() {
        return Err(Error::NotConverged { iterations: replicates.len(), residual: f64::NAN });
    }
    let k = ok.len() as f64;
    let mean = ok.iter().map(|r| r.theta_tilde).sum::<f64>() / k;
    let bias = mean - theta0;
    let degenerate = ok.len() < 2;
    let sd = if degenerate {
        0.0
    } else {
        (ok.iter().map(|r| (r.theta_tilde - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt()
    };
    Ok(McSummary {
        reps: replicates.len(),
        coord,
        theta0,
        bias,
        sd,
        rmse: (bias * bias + sd * sd).sqrt(),
        coverage: ok.iter().filter(|r| r.covered).count() as f64 / k,
        failures: replicates.len() - ok.len(),
        mean_n0: ok.iter().map(|r| r.n0 as f64).sum::<f64>() / k,
        degenerate,
    })
}

/// Runs all replicates in parallel and aggregates them in replicate order.
pub fn run_monte_carlo(cfg: &McConfig) -> Result<(McSummary, Vec<Replicate>)> {
    if cfg.reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    cfg.dgp.validate()?;
    if cfg.coord >= cfg.dgp.p {
        return Err(Error::InvalidInput(format!("coordinate {} out of range for p={}", cfg.coord, cfg.dgp.p)));
    }
    let theta0 = gen_theta(cfg.dgp.theta_design, cfg.dgp.p)?[cfg.coord];
    let replicates: Vec<Replicate> = (0..cfg.reps).into_par_iter().map(|r| run_replicate(cfg, r)).collect();
    let summary = summarize(&replicates, theta0, cfg.coord)?;
    Ok((summary, replicates))
}

pub fn write_replicates_csv<W: Write>(reps: &[Replicate], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["rep", "theta_tilde", "se", "covered", "failed"])?;
    for r in reps {
        let num = |v: f64| if r.failed { String::new() } else { format_float(v) };
        wtr.write_record([
            r.rep.to_string(),
            num(r.theta_tilde),
            num(r.se),
            r.covered.to_string(),
            r.failed.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(s: &McSummary, dgp: &DgpConfig, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "n0", "p", "theta_design", "x_design", "bias", "sd", "rmse", "coverage", "reps", "failures", "degenerate",
    ])?;
    wtr.write_record([
        format!("{:.1}", s.mean_n0),
        dgp.p.to_string(),
        dgp.theta_design.as_str().to_string(),
        dgp.x_design.as_str().to_string(),
        format_float(s.bias),
        format_float(s.sd),
        format_float(s.rmse),
        format_float(s.coverage),
        s.reps.to_string(),
        s.failures.to_string(),
        s.degenerate.to_string(),
    ])?;
    wtr.flush()?;
    Ok(())
}
