//! Debiased inference for individual coefficients and linear functionals.
//!
//! Both estimators share one engine. A *role* pairs an estimation subsample,
//! on which the lasso is fit, with a projection subsample, whose weighted
//! Gram matrix defines the projection direction `u`. For a target vector `t`
//! (a basis vector `e_j` or a query point `x`) a role contributes
//!
//! ```text
//! t'theta_hat - u' * mean_{correction rows} { exp(x_i'theta_hat) m_i - 1 } x_i
//! u' [ mean_{correction rows} m_i exp(x_i'theta_hat) x_i x_i' ] u
//! ```
//!
//! as point estimate and variance. Sample splitting uses one role (lasso on
//! `D2`, projection on `D1`); K-fold cross-fitting uses K roles (lasso on
//! `I_k`, projection on the complement) and averages.

mod folds;
mod projection;

use std::io::Write;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub use folds::{make_folds, FoldPlan};
pub use projection::{solve_projection, GammaRule, ProjectionConfig, ProjectionDirection, WeightedGram};

use crate::data::{format_float, TailSample};
use crate::error::{Error, Result};
use crate::lasso::{fit_lasso, LassoConfig, LassoFit, Penalty};
use crate::likelihood::TailLink;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Split,
    #[serde(rename = "crossfit")]
    CrossFit,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Split => "split",
            Method::CrossFit => "crossfit",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "split" => Ok(Method::Split),
            "crossfit" => Ok(Method::CrossFit),
            other => Err(Error::Config(format!("unknown method '{other}' (expected split or crossfit)"))),
        }
    }
}

/// Subsample over which the score correction and the variance are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrectionFold {
    /// The rows the lasso was fit on.
    Estimation,
    /// The rows the projection direction was computed on.
    Projection,
}

impl std::str::FromStr for CorrectionFold {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "estimation" => Ok(CorrectionFold::Estimation),
            "projection" => Ok(CorrectionFold::Projection),
            other => Err(Error::Config(format!("unknown correction fold '{other}'"))),
        }
    }
}

/// Sample size at which the `lambda`, `gamma1` and `gamma2` rules are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleSize {
    /// The full exceedance count `n0`, shared by every fold.
    Tail,
    /// The rows each program is actually solved on.
    Subsample,
}

impl std::str::FromStr for RuleSize {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tail" => Ok(RuleSize::Tail),
            "subsample" => Ok(RuleSize::Subsample),
            other => Err(Error::Config(format!("unknown rule size '{other}' (expected tail or subsample)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DebiasConfig {
    pub lasso: LassoConfig,
    pub projection: ProjectionConfig,
    /// Confidence level of the reported intervals.
    pub level: f64,
    pub seed: u64,
    pub correction_fold: CorrectionFold,
    pub rule_size: RuleSize,
}

impl Default for DebiasConfig {
    fn default() -> Self {
        Self {
            lasso: LassoConfig::default(),
            projection: ProjectionConfig::default(),
            level: 0.95,
            seed: 0,
            correction_fold: CorrectionFold::Estimation,
            rule_size: RuleSize::Tail,
        }
    }
}

/// Debiased estimate of one coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct DebiasedCoefficient {
    pub coord: usize,
    pub theta_tilde: f64,
    pub variance: f64,
    pub se: f64,
    pub z: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Sample size used in the studentization, `se^2 * n_eff = variance`.
    pub n_eff: usize,
    /// Largest gamma1 over folds after feasibility relaxation.
    pub gamma1_used: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateResult {
    pub coord: usize,
    /// Lasso estimate (fold average under cross-fitting).
    pub theta_hat: f64,
    pub estimate: std::result::Result<DebiasedCoefficient, Error>,
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub method: Method,
    pub n_eff: usize,
    pub coefficients: Vec<CoordinateResult>,
    pub fits: Vec<LassoFit>,
}

/// Debiased estimate of `x'theta` for a query point.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalEstimate {
    /// `x'theta_tilde`.
    pub value: f64,
    /// `x'theta_hat` (fold average).
    pub plug_in: f64,
    pub variance: f64,
    pub n_eff: usize,
    pub gamma1_used: f64,
}

/// Standard normal quantile.
pub fn normal_quantile(prob: f64) -> f64 {
    Normal::standard().inverse_cdf(prob)
}

/// Two-sided interval `center -/+ z * sqrt(variance / n_eff)`.
pub fn confidence_interval(center: f64, variance: f64, n_eff: usize, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidInput(format!("confidence level must lie in (0,1), got {level}")));
    }
    if !(variance >= 0.0 && variance.is_finite()) || n_eff == 0 {
        return Err(Error::InvalidInput(format!("invalid variance {variance} or sample size {n_eff}")));
    }
    let half = normal_quantile(1.0 - (1.0 - level) / 2.0) * (variance / n_eff as f64).sqrt();
    Ok((center - half, center + half))
}

struct Role {
    estimation: Vec<usize>,
    projection: Vec<usize>,
}

struct Piece {
    plug_in: f64,
    value: f64,
    variance: f64,
    gamma1_used: f64,
}

struct RoleOutput {
    fit: LassoFit,
    pieces: Vec<Result<Piece>>,
    correction_size: usize,
}

enum Target {
    Coord(usize),
    Vector(DVector<f64>),
}

impl Target {
    fn vector(&self, p: usize) -> DVector<f64> {
        match self {
            Target::Coord(j) => DVector::from_fn(p, |i, _| if i == *j { 1.0 } else { 0.0 }),
            Target::Vector(x) => x.clone(),
        }
    }
}

/// Tuning with every rule evaluated at the full tail size.
fn pin_rules(tail: &TailSample, cfg: &DebiasConfig) -> Result<(LassoConfig, ProjectionConfig)> {
    let (n0, p) = (tail.n0(), tail.p());
    let lasso = LassoConfig { penalty: Penalty::Fixed(cfg.lasso.penalty.resolve(n0, p)?), ..cfg.lasso.clone() };
    let (g1, g2) = cfg.projection.resolve(n0, p)?;
    let projection = ProjectionConfig { gamma1: GammaRule::Fixed(g1), gamma2: GammaRule::Fixed(g2), ..cfg.projection.clone() };
    Ok((lasso, projection))
}

fn run_role(tail: &TailSample, role: &Role, targets: &[Target], cfg: &DebiasConfig) -> Result<RoleOutput> {
    let (lasso_cfg, proj_cfg) = match cfg.rule_size {
        RuleSize::Tail => pin_rules(tail, cfg)?,
        RuleSize::Subsample => (cfg.lasso.clone(), cfg.projection.clone()),
    };
    let est = tail.subset(&role.estimation)?;
    let proj = tail.subset(&role.projection)?;
    let fit = fit_lasso(&est, &lasso_cfg)?;
    if !fit.converged {
        log::warn!("lasso stopped with kkt residual {:.3e}", fit.kkt_residual);
    }
    let theta = &fit.theta_hat;
    let gram = WeightedGram::new(&proj, theta)?.to_dense();
    let corr = match cfg.correction_fold {
        CorrectionFold::Estimation => &est,
        CorrectionFold::Projection => &proj,
    };
    let link = TailLink::new(corr, theta)?;
    let score = link.score();
    let corr_gram = WeightedGram::new(corr, theta)?;
    let p = tail.p();

    let pieces = targets
        .par_iter()
        .map(|t| {
            let tv = t.vector(p);
            let dir = solve_projection(&gram, &tv, proj.rows(), &proj_cfg)?;
            let plug_in = tv.dot(theta);
            Ok(Piece {
                plug_in,
                value: plug_in - dir.u.dot(&score),
                variance: corr_gram.quad_form(&dir.u),
                gamma1_used: dir.gamma1_used,
            })
        })
        .collect();
    Ok(RoleOutput { fit, pieces, correction_size: corr.n0() })
}

struct Combined {
    fits: Vec<LassoFit>,
    n_eff: usize,
    per_target: Vec<Result<Piece>>,
}

fn run_roles(tail: &TailSample, roles: &[Role], targets: &[Target], cfg: &DebiasConfig) -> Result<Combined> {
    let outputs: Vec<RoleOutput> =
        roles.par_iter().map(|r| run_role(tail, r, targets, cfg)).collect::<Result<Vec<_>>>()?;
    let k = outputs.len() as f64;
    let sizes: Vec<usize> = outputs.iter().map(|o| o.correction_size).collect();
    // disjoint correction folds add up; overlapping ones do not
    let n_eff = match cfg.correction_fold {
        CorrectionFold::Estimation => sizes.iter().sum(),
        CorrectionFold::Projection => (sizes.iter().sum::<usize>() as f64 / k).round() as usize,
    };
    let per_target = (0..targets.len())
        .map(|t| {
            let mut acc = Piece { plug_in: 0.0, value: 0.0, variance: 0.0, gamma1_used: 0.0 };
            for o in &outputs {
                let piece = o.pieces[t].as_ref().map_err(Clone::clone)?;
                acc.plug_in += piece.plug_in / k;
                acc.value += piece.value / k;
                acc.variance += piece.variance / k;
                acc.gamma1_used = acc.gamma1_used.max(piece.gamma1_used);
            }
            Ok(acc)
        })
        .collect();
    Ok(Combined { fits: outputs.into_iter().map(|o| o.fit).collect(), n_eff, per_target })
}

fn check_coords(coords: &[usize], p: usize) -> Result<()> {
    match coords.iter().find(|&&j| j >= p) {
        Some(j) => Err(Error::InvalidInput(format!("coordinate {j} out of range for p={p}"))),
        None => Ok(()),
    }
}

fn finish(method: Method, coords: &[usize], combined: Combined, level: f64) -> Result<Inference> {
    let n_eff = combined.n_eff;
    let coefficients = coords
        .iter()
        .zip(combined.per_target)
        .map(|(&coord, piece)| {
            let theta_hat = combined.fits.iter().map(|f| f.theta_hat[coord]).sum::<f64>() / combined.fits.len() as f64;
            let estimate = piece.and_then(|pc| {
                if !(pc.variance > 0.0) {
                    return Err(Error::InvalidInput(format!("zero variance for coordinate {coord}")));
                }
                let se = (pc.variance / n_eff as f64).sqrt();
                let (ci_low, ci_high) = confidence_interval(pc.value, pc.variance, n_eff, level)?;
                Ok(DebiasedCoefficient {
                    coord,
                    theta_tilde: pc.value,
                    variance: pc.variance,
                    se,
                    z: pc.value / se,
                    ci_low,
                    ci_high,
                    n_eff,
                    gamma1_used: pc.gamma1_used,
                })
            });
            CoordinateResult { coord, theta_hat, estimate }
        })
        .collect();
    Ok(Inference { method, n_eff, coefficients, fits: combined.fits })
}

fn split_roles(n0: usize, seed: u64) -> Result<Vec<Role>> {
    let plan = make_folds(n0, 2, seed)?;
    Ok(vec![Role { estimation: plan.fold(1), projection: plan.fold(0) }])
}

fn crossfit_roles(n0: usize, k: usize, seed: u64) -> Result<Vec<Role>> {
    let plan = make_folds(n0, k, seed)?;
    Ok((0..k).map(|f| Role { estimation: plan.fold(f), projection: plan.complement(f) }).collect())
}

/// Sample-splitting estimator for the coordinates in `coords` (0-based).
pub fn debias_sample_split(tail: &TailSample, coords: &[usize], cfg: &DebiasConfig) -> Result<Inference> {
    check_coords(coords, tail.p())?;
    let roles = split_roles(tail.n0(), cfg.seed)?;
    let targets: Vec<Target> = coords.iter().map(|&j| Target::Coord(j)).collect();
    let combined = run_roles(tail, &roles, &targets, cfg)?;
    finish(Method::Split, coords, combined, cfg.level)
}

/// K-fold cross-fitting estimator for the coordinates in `coords` (0-based).
pub fn debias_cross_fit(tail: &TailSample, k: usize, coords: &[usize], cfg: &DebiasConfig) -> Result<Inference> {
    check_coords(coords, tail.p())?;
    let roles = crossfit_roles(tail.n0(), k, cfg.seed)?;
    let targets: Vec<Target> = coords.iter().map(|&j| Target::Coord(j)).collect();
    let combined = run_roles(tail, &roles, &targets, cfg)?;
    finish(Method::CrossFit, coords, combined, cfg.level)
}

/// Either estimator, selected by `method`; `k` is ignored for splitting.
pub fn debias(tail: &TailSample, method: Method, k: usize, coords: &[usize], cfg: &DebiasConfig) -> Result<Inference> {
    match method {
        Method::Split => debias_sample_split(tail, coords, cfg),
        Method::CrossFit => debias_cross_fit(tail, k, coords, cfg),
    }
}

/// Cross-fitted debiased estimate of `x'theta` using projections toward `x`.
pub fn debias_functional(tail: &TailSample, k: usize, x: &DVector<f64>, cfg: &DebiasConfig) -> Result<FunctionalEstimate> {
    if x.len() != tail.p() {
        return Err(Error::DimensionMismatch { expected: tail.p(), got: x.len() });
    }
    let roles = crossfit_roles(tail.n0(), k, cfg.seed)?;
    let mut combined = run_roles(tail, &roles, &[Target::Vector(x.clone())], cfg)?;
    let piece = combined.per_target.pop().expect("one target")?;
    Ok(FunctionalEstimate {
        value: piece.value,
        plug_in: piece.plug_in,
        variance: piece.variance,
        n_eff: combined.n_eff,
        gamma1_used: piece.gamma1_used,
    })
}

/// Writes one row per coordinate (1-based `coord`).
pub fn write_inference_csv<W: Write>(inf: &Inference, names: Option<&[String]>, w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "coord", "name", "theta_hat", "theta_tilde", "se", "z", "ci_low", "ci_high", "method", "gamma1_used", "failed",
    ])?;
    for c in &inf.coefficients {
        let name = names.map(|n| n[c.coord].clone()).unwrap_or_else(|| format!("x{}", c.coord + 1));
        let mut rec = vec![(c.coord + 1).to_string(), name, format_float(c.theta_hat)];
        match &c.estimate {
            Ok(d) => {
                rec.extend([d.theta_tilde, d.se, d.z, d.ci_low, d.ci_high].map(format_float));
                rec.push(inf.method.as_str().to_string());
                rec.push(format_float(d.gamma1_used));
                rec.push("false".to_string());
            }
            Err(_) => {
                rec.extend(std::iter::repeat_n(String::new(), 5));
                rec.push(inf.method.as_str().to_string());
                rec.push(String::new());
                rec.push("true".to_string());
            }
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
