//! The constrained quadratic program behind the debiased estimator, on a
//! small random design: `cargo run --example projection_direction -- [gamma1]`.
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use tailreg::data::TailSample;
use tailreg::debias::{solve_projection, GammaRule, ProjectionConfig, WeightedGram};
use tailreg::simulate::{gen_covariates, XDesign};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gamma1: f64 = std::env::args().nth(1).map_or(Ok(0.05), |s| s.parse())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (n, p) = (200, 6);
    let x = gen_covariates(XDesign::Uniform, n, p, &mut rng).scale(10.0);
    let m = DVector::from_fn(n, |_, _| Exp1.sample(&mut rng));
    let tail = TailSample::from_log_exceedances(x.clone(), m)?;
    let gram = WeightedGram::new(&tail, &DVector::zeros(p))?.to_dense();

    let cfg = ProjectionConfig { gamma1: GammaRule::Fixed(gamma1), gamma2: GammaRule::Fixed(10.0), ..Default::default() };
    let e1 = DVector::from_fn(p, |j, _| if j == 0 { 1.0 } else { 0.0 });
    let dir = solve_projection(&gram, &e1, &x, &cfg)?;
    let exact = gram.clone().try_inverse().map(|inv: DMatrix<f64>| inv.column(0).into_owned());

    println!("u       {:.4}", dir.u.transpose());
    if let Some(col) = exact {
        println!("A^-1 e1 {:.4}", col.transpose());
    }
    println!(
        "u'Au {:.5}, |Au - e1|_inf {:.4} (gamma1 {:.4}), max |x'u| {:.3}, {} iterations",
        dir.objective, dir.gram_gap, dir.gamma1_used, dir.row_gap, dir.iterations
    );
    Ok(())
}
