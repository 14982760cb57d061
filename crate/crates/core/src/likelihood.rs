//! Tail negative log-likelihood of the conditional Pareto model
//! `alpha(x) = exp(x'theta)`, with its score and Hessian.
//!
//! With `m_i = log(Y_i/omega)` the per-observation loss is
//! `(exp(x_i'theta) + 1) m_i - x_i'theta`, so all three evaluators share the
//! link values `exp(x_i'theta)`. [`TailLink`] computes them once per theta.

use nalgebra::{DMatrix, DVector};

use crate::data::TailSample;
use crate::error::{Error, Result};

/// Largest admissible `|x'theta|`. Beyond it the iterate is treated as divergent.
pub const LINK_CAP: f64 = 30.0;

/// Link values of a tail sample at a fixed theta.
#[derive(Debug, Clone)]
pub struct TailLink<'a> {
    tail: &'a TailSample,
    eta: DVector<f64>,
    alpha: DVector<f64>,
}

impl<'a> TailLink<'a> {
    pub fn new(tail: &'a TailSample, theta: &DVector<f64>) -> Result<Self> {
        if theta.len() != tail.p() {
            return Err(Error::DimensionMismatch { expected: tail.p(), got: theta.len() });
        }
        let eta = tail.rows() * theta;
        check_cap(&eta)?;
        let alpha = eta.map(f64::exp);
        Ok(Self { tail, eta, alpha })
    }

    pub fn eta(&self) -> &DVector<f64> {
        &self.eta
    }

    /// Hessian weights `m_i exp(x_i'theta)`.
    pub fn weights(&self) -> DVector<f64> {
        self.alpha.component_mul(self.tail.log_exceedances())
    }

    /// Score summand scalars `exp(x_i'theta) m_i - 1`.
    pub fn residuals(&self) -> DVector<f64> {
        self.weights().add_scalar(-1.0)
    }

    pub fn neg_log_likelihood(&self) -> f64 {
        let m = self.tail.log_exceedances();
        let total: f64 = (0..m.len()).map(|i| (self.alpha[i] + 1.0) * m[i] - self.eta[i]).sum();
        total / m.len() as f64
    }

    pub fn score(&self) -> DVector<f64> {
        let r = self.residuals();
        self.tail.rows().tr_mul(&r) / self.tail.n0() as f64
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        weighted_gram(self.tail.rows(), &self.weights())
    }

    pub fn hessian_vec(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        if v.len() != self.tail.p() {
            return Err(Error::DimensionMismatch { expected: self.tail.p(), got: v.len() });
        }
        let xv = self.tail.rows() * v;
        let wxv = xv.component_mul(&self.weights());
        Ok(self.tail.rows().tr_mul(&wxv) / self.tail.n0() as f64)
    }
}

/// `(1/n) sum_i w_i x_i x_i'` for the rows of `x`.
pub(crate) fn weighted_gram(x: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut wx = x.clone();
    for (i, mut row) in wx.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let mut g = x.tr_mul(&wx) / x.nrows() as f64;
    // symmetrize away rounding asymmetry
    let p = g.ncols();
    for j in 0..p {
        for i in (j + 1)..p {
            let s = 0.5 * (g[(i, j)] + g[(j, i)]);
            g[(i, j)] = s;
            g[(j, i)] = s;
        }
    }
    g
}

pub(crate) fn check_cap(eta: &DVector<f64>) -> Result<()> {
    match eta.iter().find(|e| !(e.abs() <= LINK_CAP)) {
        Some(&value) => Err(Error::Divergence { value }),
        None => Ok(()),
    }
}

pub fn neg_log_likelihood(tail: &TailSample, theta: &DVector<f64>) -> Result<f64> {
    Ok(TailLink::new(tail, theta)?.neg_log_likelihood())
}

pub fn score(tail: &TailSample, theta: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(TailLink::new(tail, theta)?.score())
}

pub fn hessian(tail: &TailSample, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
    Ok(TailLink::new(tail, theta)?.hessian())
}

/// Hessian-vector product without forming the `p x p` matrix.
pub fn hessian_vec(tail: &TailSample, theta: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    TailLink::new(tail, theta)?.hessian_vec(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_tail;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn intercept_tail(m: &[f64]) -> TailSample {
        let rows = DMatrix::from_element(m.len(), 1, 1.0);
        TailSample::from_log_exceedances(rows, DVector::from_column_slice(m)).unwrap()
    }

    #[test]
    fn nll_direct_substitution() {
        let t = intercept_tail(&[1.0]);
        assert_eq!(neg_log_likelihood(&t, &DVector::from_element(1, 0.0)).unwrap(), 2.0);

        let t = intercept_tail(&[0.25, 0.75]);
        let v = neg_log_likelihood(&t, &DVector::from_element(1, 2f64.ln())).unwrap();
        assert!((v - (1.5 - 2f64.ln())).abs() < 1e-14);
        assert!((v - 0.80685).abs() < 1e-5);
    }

    #[test]
    fn nll_at_zero_is_twice_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_tail(&mut rng, 40, 6, 0.3);
        let mean = t.log_exceedances().mean();
        let v = neg_log_likelihood(&t, &DVector::zeros(6)).unwrap();
        assert!((v - 2.0 * mean).abs() < 1e-14);
    }

    #[test]
    fn score_vanishes_at_hill_point() {
        let t = intercept_tail(&[0.25, 0.75]);
        let g = score(&t, &DVector::from_element(1, 2f64.ln())).unwrap();
        assert!(g[0].abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m: Vec<f64> = (0..50).map(|_| rng.random_range(0.01..3.0)).collect();
        let t = intercept_tail(&m);
        let star = -t.log_exceedances().mean().ln();
        let g = score(&t, &DVector::from_element(1, star)).unwrap();
        assert!(g[0].abs() < 1e-12);
    }

    #[test]
    fn score_at_zero_uses_unit_link() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_tail(&mut rng, 30, 4, 0.5);
        let g = score(&t, &DVector::zeros(4)).unwrap();
        let r = t.log_exceedances().add_scalar(-1.0);
        let expect = t.rows().tr_mul(&r) / 30.0;
        assert!((g - expect).amax() < 1e-15);
    }

    #[test]
    fn hessian_rank_one_example() {
        let rows = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let t = TailSample::from_log_exceedances(rows, DVector::from_element(1, 2.0)).unwrap();
        let h = hessian(&t, &DVector::zeros(2)).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn hessian_vec_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_tail(&mut rng, 60, 15, 0.4);
        let theta = DVector::from_fn(15, |_, _| rng.random_range(-0.5..0.5));
        let h = hessian(&t, &theta).unwrap();
        let v = DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0));
        let hv = hessian_vec(&t, &theta, &v).unwrap();
        let dense = &h * &v;
        assert!((&hv - &dense).amax() <= 1e-10 * dense.amax());

        assert_eq!(hessian_vec(&t, &theta, &DVector::zeros(15)).unwrap().amax(), 0.0);
        let e3 = DVector::from_fn(15, |i, _| if i == 3 { 1.0 } else { 0.0 });
        let col = hessian_vec(&t, &theta, &e3).unwrap();
        assert!((&col - h.column(3)).amax() < 1e-14);
    }

    #[test]
    fn link_cap_raises_divergence() {
        let rows = DMatrix::from_element(2, 1, 1.0);
        let t = TailSample::from_log_exceedances(rows, DVector::from_element(2, 1.0)).unwrap();
        let err = neg_log_likelihood(&t, &DVector::from_element(1, 31.0)).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
        assert!(score(&t, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn evaluators_ignore_row_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let t = random_tail(&mut rng, 25, 5, 0.5);
        let theta = DVector::from_fn(5, |_, _| rng.random_range(-0.5..0.5));
        let perm: Vec<usize> = (0..25).rev().collect();
        let s = t.subset(&perm).unwrap();
        let (a, b) = (neg_log_likelihood(&t, &theta).unwrap(), neg_log_likelihood(&s, &theta).unwrap());
        assert!((a - b).abs() < 1e-13);
        assert!((score(&t, &theta).unwrap() - score(&s, &theta).unwrap()).amax() < 1e-13);
        assert!((hessian(&t, &theta).unwrap() - hessian(&s, &theta).unwrap()).amax() < 1e-13);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn nll_is_midpoint_convex(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let t = random_tail(&mut rng, 20, 4, 0.5);
                let a = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
                let b = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
                let mid = (&a + &b) * 0.5;
                let fa = neg_log_likelihood(&t, &a).unwrap();
                let fb = neg_log_likelihood(&t, &b).unwrap();
                let fm = neg_log_likelihood(&t, &mid).unwrap();
                prop_assert!(fm <= 0.5 * (fa + fb) + 1e-12);
            }

            #[test]
            fn hessian_is_psd(seed in any::<u64>()) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let t = random_tail(&mut rng, 10, 6, 0.5);
                let theta = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
                let h = hessian(&t, &theta).unwrap();
                let v = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
                prop_assert!(v.dot(&(&h * &v)) >= -1e-12);
            }
        }
    }
}
