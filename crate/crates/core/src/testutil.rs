//! Random instances shared by unit tests.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::data::TailSample;

/// Tail sample with uniform covariates in `(-scale, scale)` and log-exceedances
/// drawn from the model at a random theta with entries in `(-1, 1)`.
pub fn random_tail<R: Rng>(rng: &mut R, n: usize, p: usize, scale: f64) -> TailSample {
    let x = DMatrix::from_fn(n, p, |_, _| rng.random_range(-scale..scale));
    let theta = DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0));
    let eta = &x * &theta;
    let m = DVector::from_fn(n, |i, _| {
        let e = Exp::new(eta[i].exp()).unwrap();
        e.sample(rng).max(1e-12)
    });
    TailSample::from_log_exceedances(x, m).unwrap()
}
