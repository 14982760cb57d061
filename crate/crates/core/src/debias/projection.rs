//! Projection directions for debiasing.
//!
//! For a weighted Gram matrix `A = (1/n) sum_i m_i exp(x_i'theta) x_i x_i'` and a
//! target vector `t` (a canonical basis vector or a query point) we solve
//!
//! ```text
//! minimize    u' A u
//! subject to  || A u - t ||_inf   <= gamma1
//!             max_i | x_i' u |    <= gamma2
//! ```
//!
//! The program is written as `min 1/2 u'Pu` with `P = 2A` and the stacked
//! constraint `l <= C u <= h`, `C = [A; X]`, and solved by ADMM with Ruiz
//! equilibration, over-relaxation and adaptive penalty. Primal infeasibility
//! is detected from the dual iterate differences; the caller then relaxes
//! `gamma1` geometrically.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::data::TailSample;
use crate::error::{Error, Result};
use crate::likelihood::{weighted_gram, TailLink};

/// Tuning level for one of the two constraint radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaRule {
    Fixed(f64),
    /// Rule constant; see [`ProjectionConfig::resolve`] for the two rate forms.
    Rule(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionConfig {
    /// Gram constraint radius, rule `c' sqrt(ln p / n)`.
    pub gamma1: GammaRule,
    /// Row constraint radius, rule `c'' sqrt(ln n)`.
    pub gamma2: GammaRule,
    pub solver_tol: f64,
    pub max_iter: usize,
    /// Multiplier applied to gamma1 after an infeasibility certificate.
    pub feasibility_escalation: f64,
    pub max_escalations: usize,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self {
            gamma1: GammaRule::Rule(1.0),
            gamma2: GammaRule::Rule(100.0),
            solver_tol: 1e-6,
            max_iter: 20_000,
            feasibility_escalation: 1.5,
            max_escalations: 10,
        }
    }
}

impl ProjectionConfig {
    /// Numeric `(gamma1, gamma2)` for a program on `n` rows and `p` columns.
    pub fn resolve(&self, n: usize, p: usize) -> Result<(f64, f64)> {
        let g1 = match self.gamma1 {
            GammaRule::Fixed(v) => v,
            GammaRule::Rule(c) => {
                if p < 2 || n == 0 {
                    return Err(Error::InvalidInput(format!("gamma1 rule needs p >= 2 and n >= 1 (p={p}, n={n})")));
                }
                c * ((p as f64).ln() / n as f64).sqrt()
            }
        };
        let g2 = match self.gamma2 {
            GammaRule::Fixed(v) => v,
            GammaRule::Rule(c) => {
                if n < 2 {
                    return Err(Error::InvalidInput(format!("gamma2 rule needs n >= 2, got {n}")));
                }
                c * (n as f64).ln().sqrt()
            }
        };
        if !(g1 > 0.0 && g1.is_finite() && g2 > 0.0 && g2.is_finite()) {
            return Err(Error::InvalidInput(format!("degenerate constraint radii gamma1={g1}, gamma2={g2}")));
        }
        Ok((g1, g2))
    }

    fn validate(&self) -> Result<()> {
        if !(self.solver_tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidInput("solver_tol must be positive and max_iter at least 1".into()));
        }
        if !(self.feasibility_escalation > 1.0) {
            return Err(Error::InvalidInput("feasibility_escalation must exceed 1".into()));
        }
        Ok(())
    }
}

/// The matrix `(1/n) sum_i m_i exp(x_i'theta) x_i x_i'` of a tail subsample.
#[derive(Debug, Clone)]
pub struct WeightedGram {
    rows: DMatrix<f64>,
    weights: DVector<f64>,
}

impl WeightedGram {
    pub fn new(tail: &TailSample, theta: &DVector<f64>) -> Result<Self> {
        let link = TailLink::new(tail, theta)?;
        Ok(Self { rows: tail.rows().clone(), weights: link.weights() })
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.rows.nrows()
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    /// `A v` without forming `A`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let xv = &self.rows * v;
        self.rows.tr_mul(&xv.component_mul(&self.weights)) / self.rows.nrows() as f64
    }

    /// `v' A v`, always nonnegative.
    pub fn quad_form(&self, v: &DVector<f64>) -> f64 {
        let xv = &self.rows * v;
        let s: f64 = xv.iter().zip(self.weights.iter()).map(|(a, w)| w * a * a).sum();
        s / self.rows.nrows() as f64
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        weighted_gram(&self.rows, &self.weights)
    }
}

/// Solution of the projection program.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionDirection {
    pub u: DVector<f64>,
    /// `u' A u`.
    pub objective: f64,
    /// `|| A u - target ||_inf`.
    pub gram_gap: f64,
    /// `max_i |x_i' u|`.
    pub row_gap: f64,
    pub gamma1_used: f64,
    pub gamma2: f64,
    pub iterations: usize,
}

enum AdmmOutcome {
    Solved(DVector<f64>, usize),
    Infeasible,
    Stalled { iterations: usize, residual: f64 },
}

/// Solves the projection program, relaxing gamma1 on infeasibility.
///
/// `rows` carries the covariates of the row constraint; the gamma rules are
/// evaluated at `n = rows.nrows()`.
pub fn solve_projection(
    gram: &DMatrix<f64>,
    target: &DVector<f64>,
    rows: &DMatrix<f64>,
    config: &ProjectionConfig,
) -> Result<ProjectionDirection> {
    config.validate()?;
    let p = gram.ncols();
    if gram.nrows() != p {
        return Err(Error::DimensionMismatch { expected: p, got: gram.nrows() });
    }
    if target.len() != p {
        return Err(Error::DimensionMismatch { expected: p, got: target.len() });
    }
    if rows.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, got: rows.ncols() });
    }
    let (mut gamma1, gamma2) = config.resolve(rows.nrows(), p)?;

    let problem = ScaledProblem::new(gram, rows);
    for attempt in 0..=config.max_escalations {
        match problem.solve(target, gamma1, gamma2, config) {
            AdmmOutcome::Solved(u, iterations) => {
                let au = gram * &u;
                let gram_gap = (&au - target).amax();
                let row_gap = (rows * &u).amax();
                return Ok(ProjectionDirection {
                    objective: u.dot(&au).max(0.0),
                    u,
                    gram_gap,
                    row_gap,
                    gamma1_used: gamma1,
                    gamma2,
                    iterations,
                });
            }
            AdmmOutcome::Infeasible => {
                if attempt < config.max_escalations {
                    log::debug!("projection infeasible at gamma1={gamma1:.4e}; relaxing");
                    gamma1 *= config.feasibility_escalation;
                }
            }
            AdmmOutcome::Stalled { iterations, residual } => {
                return Err(Error::NotConverged { iterations, residual });
            }
        }
    }
    Err(Error::Infeasible { gamma1 })
}

/// Equilibrated data shared across radii.
struct ScaledProblem<'a> {
    gram: &'a DMatrix<f64>,
    /// Scaled `P = c D (2A) D`.
    p_mat: DMatrix<f64>,
    /// Scaled `C = E [A; X] D`.
    c_mat: DMatrix<f64>,
    ctc: DMatrix<f64>,
    d: DVector<f64>,
    e: DVector<f64>,
    cost: f64,
    np: usize,
}

impl<'a> ScaledProblem<'a> {
    fn new(gram: &'a DMatrix<f64>, rows: &DMatrix<f64>) -> Self {
        let p = gram.ncols();
        let n = rows.nrows();
        let m = p + n;
        let mut p_mat = gram * 2.0;
        let mut c_mat = DMatrix::zeros(m, p);
        c_mat.rows_mut(0, p).copy_from(gram);
        c_mat.rows_mut(p, n).copy_from(rows);

        let mut d = DVector::from_element(p, 1.0);
        let mut e = DVector::from_element(m, 1.0);
        for _ in 0..15 {
            let mut dd = DVector::zeros(p);
            for j in 0..p {
                let a = p_mat.column(j).amax().max(c_mat.column(j).amax());
                dd[j] = if a > 1e-12 { 1.0 / a.sqrt() } else { 1.0 };
            }
            let mut de = DVector::zeros(m);
            for i in 0..m {
                let a = c_mat.row(i).amax();
                de[i] = if a > 1e-12 { 1.0 / a.sqrt() } else { 1.0 };
            }
            for j in 0..p {
                for i in 0..p {
                    p_mat[(i, j)] *= dd[i] * dd[j];
                }
                for i in 0..m {
                    c_mat[(i, j)] *= de[i] * dd[j];
                }
            }
            d.component_mul_assign(&dd);
            e.component_mul_assign(&de);
        }
        let mean_col = (0..p).map(|j| p_mat.column(j).amax()).sum::<f64>() / p as f64;
        let cost = if mean_col > 1e-12 { 1.0 / mean_col } else { 1.0 };
        p_mat *= cost;
        let ctc = c_mat.tr_mul(&c_mat);
        Self { gram, p_mat, c_mat, ctc, d, e, cost, np: p }
    }

    fn factor(&self, sigma: f64, rho: f64) -> Option<Cholesky<f64, Dyn>> {
        let mut k = &self.p_mat + &self.ctc * rho;
        for j in 0..self.np {
            k[(j, j)] += sigma;
        }
        k.cholesky()
    }

    fn solve(&self, target: &DVector<f64>, gamma1: f64, gamma2: f64, config: &ProjectionConfig) -> AdmmOutcome {
        let p = self.np;
        let m = self.c_mat.nrows();
        let tol = config.solver_tol;
        // unscaled bounds, then scaled by E
        let mut lo = DVector::zeros(m);
        let mut hi = DVector::zeros(m);
        for i in 0..m {
            let (l, h) = if i < p { (target[i] - gamma1, target[i] + gamma1) } else { (-gamma2, gamma2) };
            lo[i] = l * self.e[i];
            hi[i] = h * self.e[i];
        }
        let clip = |v: &DVector<f64>| DVector::from_fn(m, |i, _| v[i].clamp(lo[i], hi[i]));

        // start from a multiple of the target, shrunk into the row box
        let tt = target.norm_squared();
        let mut u0 = if tt > 0.0 {
            let tat = target.dot(&(self.gram * target));
            target * (tt / tat.max(1e-12))
        } else {
            DVector::zeros(p)
        };
        let xu = (&self.c_mat.rows(p, m - p) * u0.component_div(&self.d)).component_div(&self.e.rows(p, m - p));
        let worst = xu.amax();
        if worst > gamma2 {
            u0 *= gamma2 / worst;
        }

        let sigma = 1e-6;
        let alpha = 1.6;
        let mut rho = 0.1;
        let mut chol = match self.factor(sigma, rho) {
            Some(c) => c,
            None => return AdmmOutcome::Stalled { iterations: 0, residual: f64::INFINITY },
        };
        let mut x = u0.component_div(&self.d);
        let mut z = clip(&(&self.c_mat * &x));
        let mut y = DVector::<f64>::zeros(m);

        let dinv = self.d.map(|v| 1.0 / v);
        let einv = self.e.map(|v| 1.0 / v);
        let mut prim = f64::INFINITY;
        for it in 1..=config.max_iter {
            let rhs = &x * sigma + self.c_mat.tr_mul(&(&z * rho - &y));
            let x_tilde = chol.solve(&rhs);
            let z_tilde = &self.c_mat * &x_tilde;
            let x_next = &x_tilde * alpha + &x * (1.0 - alpha);
            let z_relax = &z_tilde * alpha + &z * (1.0 - alpha);
            let z_next = clip(&(&z_relax + &y / rho));
            let dy = (&z_relax - &z_next) * rho;
            let y_next = &y + &dy;
            x = x_next;
            z = z_next;
            y = y_next;

            if it % 10 != 0 && it != config.max_iter {
                continue;
            }
            let cx = &self.c_mat * &x;
            let px = &self.p_mat * &x;
            let cty = self.c_mat.tr_mul(&y);
            prim = (&cx - &z).component_mul(&einv).amax();
            let dual = (&px + &cty).component_mul(&dinv).amax() / self.cost;
            let dual_scale = px.component_mul(&dinv).amax().max(cty.component_mul(&dinv).amax()) / self.cost;
            let prim_scale = cx.component_mul(&einv).amax().max(z.component_mul(&einv).amax());
            if prim <= tol * 0.5 && dual <= tol * (1.0 + dual_scale) {
                return AdmmOutcome::Solved(x.component_mul(&self.d), it);
            }

            // infeasibility certificate from the last dual step
            let dy_u = dy.component_mul(&self.e);
            let dy_norm = dy_u.amax();
            if dy_norm > 1e-14 {
                let eps = 1e-7;
                let ct_dy = self.c_mat.tr_mul(&dy).component_mul(&dinv).amax();
                let support: f64 = (0..m)
                    .map(|i| {
                        let v = dy[i];
                        if v > 0.0 {
                            hi[i] * v
                        } else {
                            lo[i] * v
                        }
                    })
                    .sum();
                if ct_dy <= eps * dy_norm && support <= -eps * dy_norm {
                    return AdmmOutcome::Infeasible;
                }
            }

            if it % 50 == 0 {
                let ratio = ((prim / prim_scale.max(1e-10)) / (dual / dual_scale.max(1e-10)).max(1e-12)).sqrt();
                let new_rho = (rho * ratio).clamp(1e-6, 1e6);
                if new_rho > 5.0 * rho || new_rho < 0.2 * rho {
                    if let Some(c) = self.factor(sigma, new_rho) {
                        rho = new_rho;
                        chol = c;
                    }
                }
            }
        }
        // a primal residual that never shrinks means the box cannot be met
        if prim > 1e3 * tol {
            return AdmmOutcome::Infeasible;
        }
        AdmmOutcome::Stalled { iterations: config.max_iter, residual: prim }
    }
}
