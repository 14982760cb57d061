//! L1-penalized tail-index regression.
//!
//! Minimizes `nll(theta) + lambda * ||theta||_1` by accelerated proximal
//! gradient (monotone FISTA) with backtracking on the smooth part and momentum
//! restart whenever a proximal step fails to decrease the objective. Once the
//! support settles, a Newton step restricted to the support is tried; it is
//! only accepted when it keeps the sign pattern and lowers the objective.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::TailSample;
use crate::error::{Error, Result};
use crate::likelihood::TailLink;

/// How the penalty level is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// Use the given lambda.
    Fixed(f64),
    /// `lambda = c * sqrt(ln p / n0)` evaluated on the fitting sample.
    Rule(f64),
}

impl Penalty {
    pub fn resolve(&self, n0: usize, p: usize) -> Result<f64> {
        match *self {
            Penalty::Fixed(l) if l >= 0.0 && l.is_finite() => Ok(l),
            Penalty::Fixed(l) => Err(Error::InvalidInput(format!("lambda must be nonnegative, got {l}"))),
            Penalty::Rule(c) => default_lambda(n0, p, c),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoConfig {
    pub penalty: Penalty,
    pub max_iter: usize,
    /// Convergence threshold on the KKT residual.
    pub tol: f64,
    pub backtracking_shrink: f64,
    /// Starting point; zero when `None`.
    pub init: Option<DVector<f64>>,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self { penalty: Penalty::Rule(1.0), max_iter: 10_000, tol: 1e-8, backtracking_shrink: 0.5, init: None }
    }
}

impl LassoConfig {
    pub fn with_penalty(penalty: Penalty) -> Self {
        Self { penalty, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput("tol must be positive".into()));
        }
        if !(self.backtracking_shrink > 0.0 && self.backtracking_shrink < 1.0) {
            return Err(Error::InvalidInput("backtracking_shrink must lie in (0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit {
    pub theta_hat: DVector<f64>,
    pub lambda: f64,
    /// Penalized objective at `theta_hat`.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    pub support: Vec<usize>,
    /// Penalized objective at every accepted iterate, starting with the init.
    pub objective_trace: Vec<f64>,
}

#[derive(Serialize)]
struct LassoFitRecord<'a> {
    theta: &'a [f64],
    lambda: f64,
    objective: f64,
    iterations: usize,
    converged: bool,
    kkt_residual: f64,
    support: &'a [usize],
}

impl LassoFit {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(LassoFitRecord {
            theta: self.theta_hat.as_slice(),
            lambda: self.lambda,
            objective: self.objective,
            iterations: self.iterations,
            converged: self.converged,
            kkt_residual: self.kkt_residual,
            support: &self.support,
        })
        .expect("fit record is always serializable")
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, &self.to_json())?;
        writeln!(w)?;
        Ok(())
    }
}

/// `c * sqrt(ln p / n0)`.
pub fn default_lambda(n0: usize, p: usize, c: f64) -> Result<f64> {
    if p < 2 {
        return Err(Error::InvalidInput(format!("the penalty rule needs p >= 2, got {p}")));
    }
    if n0 == 0 {
        return Err(Error::InvalidInput("the penalty rule needs n0 >= 1".into()));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!("rule constant must be nonnegative, got {c}")));
    }
    Ok(c * ((p as f64).ln() / n0 as f64).sqrt())
}

/// Proximal operator of `t * |.|`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn kkt_from_score(g: &DVector<f64>, theta: &DVector<f64>, lambda: f64) -> f64 {
    g.iter()
        .zip(theta.iter())
        .map(|(&gj, &tj)| if tj != 0.0 { (gj + lambda * tj.signum()).abs() } else { (gj.abs() - lambda).max(0.0) })
        .fold(0.0, f64::max)
}

/// Sup-norm violation of the subgradient optimality conditions at `theta`.
pub fn kkt_residual(tail: &TailSample, theta: &DVector<f64>, lambda: f64) -> Result<f64> {
    let g = TailLink::new(tail, theta)?.score();
    Ok(kkt_from_score(&g, theta, lambda))
}

fn l1(v: &DVector<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn support_of(theta: &DVector<f64>) -> Vec<usize> {
    theta.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect()
}

/// Largest Hessian eigenvalue at `theta`, by power iteration.
fn lipschitz_estimate(link: &TailLink<'_>, p: usize) -> f64 {
    let mut v = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..30 {
        let hv = link.hessian_vec(&v).expect("dimension checked");
        let norm = hv.norm();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        est = norm;
        v = hv / norm;
    }
    est.max(1e-10)
}

struct Point {
    theta: DVector<f64>,
    smooth: f64,
    score: DVector<f64>,
}

fn evaluate(tail: &TailSample, theta: DVector<f64>) -> Result<Point> {
    let link = TailLink::new(tail, &theta)?;
    Ok(Point { smooth: link.neg_log_likelihood(), score: link.score(), theta })
}

/// Newton step on the current support with the sign pattern held fixed.
fn support_newton(tail: &TailSample, x: &Point, lambda: f64) -> Option<DVector<f64>> {
    let s = support_of(&x.theta);
    if s.is_empty() {
        return None;
    }
    let link = TailLink::new(tail, &x.theta).ok()?;
    let rows = tail.rows().select_columns(&s);
    let w = link.weights();
    let h: DMatrix<f64> = crate::likelihood::weighted_gram(&rows, &w);
    let g = DVector::from_iterator(s.len(), s.iter().map(|&j| x.score[j] + lambda * x.theta[j].signum()));
    let step = h.cholesky()?.solve(&g);
    let mut out = x.theta.clone();
    for (k, &j) in s.iter().enumerate() {
        let v = x.theta[j] - step[k];
        if v.signum() != x.theta[j].signum() {
            return None;
        }
        out[j] = v;
    }
    Some(out)
}

/// Fits the penalized estimator on `tail`.
pub fn fit_lasso(tail: &TailSample, config: &LassoConfig) -> Result<LassoFit> {
    config.validate()?;
    let p = tail.p();
    let lambda = config.penalty.resolve(tail.n0(), p)?;
    let init = match &config.init {
        Some(t) if t.len() != p => return Err(Error::DimensionMismatch { expected: p, got: t.len() }),
        Some(t) => t.clone(),
        None => DVector::zeros(p),
    };
    let grow = 1.0 / config.backtracking_shrink;

    let mut lip = lipschitz_estimate(&TailLink::new(tail, &init)?, p);
    let mut x = evaluate(tail, init)?;
    let mut f_x = x.smooth + lambda * l1(&x.theta);
    let mut trace = vec![f_x];
    let mut kkt = kkt_from_score(&x.score, &x.theta, lambda);

    let mut y = Point { theta: x.theta.clone(), smooth: x.smooth, score: x.score.clone() };
    let mut t = 1.0_f64;
    let mut stable_support = 0usize;
    let mut iterations = 0;

    while kkt > config.tol && iterations < config.max_iter {
        iterations += 1;

        // proximal step from y with backtracking
        let z = loop {
            let cand = DVector::from_fn(p, |j, _| soft_threshold(y.theta[j] - y.score[j] / lip, lambda / lip));
            match evaluate(tail, cand) {
                Ok(z) => {
                    let d = &z.theta - &y.theta;
                    let bound = y.smooth + y.score.dot(&d) + 0.5 * lip * d.norm_squared();
                    if z.smooth <= bound + 1e-12 * bound.abs().max(1.0) {
                        break z;
                    }
                }
                Err(Error::Divergence { .. }) => {}
                Err(e) => return Err(e),
            }
            lip *= grow;
            if lip > 1e30 {
                return Err(Error::Divergence { value: f64::INFINITY });
            }
        };
        let f_z = z.smooth + lambda * l1(&z.theta);

        let old_support = support_of(&x.theta);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if f_z <= f_x {
            let x_old = std::mem::replace(&mut x, z);
            f_x = f_z;
            let mom = (t - 1.0) / t_next;
            t = t_next;
            let ext = &x.theta + (&x.theta - &x_old.theta) * mom;
            y = match evaluate(tail, ext) {
                Ok(pt) => pt,
                Err(Error::Divergence { .. }) => {
                    t = 1.0;
                    Point { theta: x.theta.clone(), smooth: x.smooth, score: x.score.clone() }
                }
                Err(e) => return Err(e),
            };
        } else {
            // restart momentum from the last accepted iterate
            t = 1.0;
            y = Point { theta: x.theta.clone(), smooth: x.smooth, score: x.score.clone() };
        }
        trace.push(f_x);
        kkt = kkt_from_score(&x.score, &x.theta, lambda);

        if support_of(&x.theta) == old_support {
            stable_support += 1;
        } else {
            stable_support = 0;
        }
        if kkt > config.tol && stable_support >= 5 {
            if let Some(cand) = support_newton(tail, &x, lambda) {
                if let Ok(pt) = evaluate(tail, cand) {
                    let f_c = pt.smooth + lambda * l1(&pt.theta);
                    let k_c = kkt_from_score(&pt.score, &pt.theta, lambda);
                    if f_c <= f_x && k_c < kkt {
                        x = pt;
                        f_x = f_c;
                        kkt = k_c;
                        *trace.last_mut().expect("trace is nonempty") = f_x;
                        t = 1.0;
                        y = Point { theta: x.theta.clone(), smooth: x.smooth, score: x.score.clone() };
                    }
                }
            }
        }
    }

    // a converged iterate is close enough for Newton on the support to reach rounding level
    if kkt <= config.tol {
        for _ in 0..3 {
            let Some(cand) = support_newton(tail, &x, lambda) else { break };
            let Ok(pt) = evaluate(tail, cand) else { break };
            let f_c = pt.smooth + lambda * l1(&pt.theta);
            let k_c = kkt_from_score(&pt.score, &pt.theta, lambda);
            if !(f_c <= f_x && k_c < kkt) {
                break;
            }
            x = pt;
            f_x = f_c;
            kkt = k_c;
            trace.push(f_x);
        }
    }

    log::debug!("lasso: lambda={lambda:.4e} iterations={iterations} kkt={kkt:.3e}");
    Ok(LassoFit {
        support: support_of(&x.theta),
        theta_hat: x.theta,
        lambda,
        objective: f_x,
        iterations,
        converged: kkt <= config.tol,
        kkt_residual: kkt,
        objective_trace: trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::likelihood::score;
    use crate::testutil::random_tail;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lambda_rule_values() {
        assert!((default_lambda(500, 100, 1.0).unwrap() - 0.0959705).abs() < 1e-6);
        assert!((default_lambda(500, 1000, 1.0).unwrap() - 0.1175394).abs() < 1e-6);
        assert_eq!(default_lambda(500, 100, 0.0).unwrap(), 0.0);
        assert!(default_lambda(500, 1, 1.0).is_err());
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(1.5, 1.0), 0.5);
        assert_eq!(soft_threshold(-0.3, 1.0), 0.0);
        assert_eq!(soft_threshold(-0.3, 0.0), -0.3);
        assert_eq!(soft_threshold(1.0, 1.0), 0.0);
    }

    #[test]
    fn hill_closed_form() {
        let rows = DMatrix::from_element(4, 1, 1.0);
        let m = DVector::from_column_slice(&[0.2, 0.4, 0.6, 0.8]);
        let tail = TailSample::from_log_exceedances(rows, m).unwrap();
        let fit = fit_lasso(&tail, &LassoConfig::with_penalty(Penalty::Fixed(0.0))).unwrap();
        assert!(fit.converged);
        assert!((fit.theta_hat[0] - 2f64.ln()).abs() < 1e-8);
        assert!(kkt_residual(&tail, &fit.theta_hat, 0.0).unwrap() < 1e-10);
    }

    #[test]
    fn large_lambda_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let tail = random_tail(&mut rng, 50, 8, 0.5);
        let g0 = score(&tail, &DVector::zeros(8)).unwrap().amax();
        let fit = fit_lasso(&tail, &LassoConfig::with_penalty(Penalty::Fixed(g0))).unwrap();
        assert!(fit.support.is_empty());
        assert_eq!(fit.iterations, 0);
        assert_eq!(kkt_residual(&tail, &DVector::zeros(8), g0).unwrap(), 0.0);
    }

    #[test]
    fn perturbed_optimum_has_positive_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tail = random_tail(&mut rng, 80, 5, 0.8);
        let fit = fit_lasso(&tail, &LassoConfig::with_penalty(Penalty::Fixed(0.0))).unwrap();
        assert!(fit.converged);
        let mut th = fit.theta_hat.clone();
        th[2] += 0.1;
        assert!(kkt_residual(&tail, &th, 0.0).unwrap() > 0.0);
    }

    #[test]
    fn objective_trace_is_monotone_and_kkt_certified() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let tail = random_tail(&mut rng, 60, 20, 1.0);
            let fit = fit_lasso(&tail, &LassoConfig::with_penalty(Penalty::Rule(0.3))).unwrap();
            for w in fit.objective_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
            assert!(fit.converged, "kkt {}", fit.kkt_residual);
            let r = kkt_residual(&tail, &fit.theta_hat, fit.lambda).unwrap();
            assert!(r <= 1e-8);
            assert_eq!(r, fit.kkt_residual);
            assert_eq!(fit.support, support_of(&fit.theta_hat));
        }
    }

    #[test]
    fn shrinkage_is_monotone_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let tail = random_tail(&mut rng, 100, 10, 1.0);
        let mut last = f64::INFINITY;
        for lam in [0.0, 0.01, 0.03, 0.1, 0.3] {
            let fit = fit_lasso(&tail, &LassoConfig::with_penalty(Penalty::Fixed(lam))).unwrap();
            let norm = l1(&fit.theta_hat);
            assert!(norm <= last + 1e-9);
            last = norm;
        }
    }

    #[test]
    fn json_has_documented_keys() {
        let rows = DMatrix::from_element(2, 2, 1.0);
        let tail = TailSample::from_log_exceedances(rows, DVector::from_element(2, 1.0)).unwrap();
        let fit = fit_lasso(&tail, &LassoConfig::with_penalty(Penalty::Fixed(10.0))).unwrap();
        let v = fit.to_json();
        for key in ["theta", "lambda", "objective", "iterations", "converged", "kkt_residual", "support"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn rejects_bad_config() {
        let rows = DMatrix::from_element(2, 2, 1.0);
        let tail = TailSample::from_log_exceedances(rows, DVector::from_element(2, 1.0)).unwrap();
        let cfg = LassoConfig { max_iter: 0, ..LassoConfig::default() };
        assert!(fit_lasso(&tail, &cfg).is_err());
        let cfg = LassoConfig { init: Some(DVector::zeros(3)), ..LassoConfig::default() };
        assert!(fit_lasso(&tail, &cfg).is_err());
    }
}
