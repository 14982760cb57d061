//! Penalized tail-index fit on simulated data: `cargo run --release --example fit_lasso -- [p] [c]`.
//!
//! With covariates of scale 0.1 the default rule constant c = 1 zeroes every
//! coefficient at this sample size; c = 0.1 shows a nontrivial path.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tailreg::data::tail_at_level;
use tailreg::lasso::{fit_lasso, kkt_residual, LassoConfig, Penalty};
use tailreg::simulate::{generate, DgpConfig, ThetaDesign, XDesign};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let p: usize = args.first().map_or(Ok(100), |s| s.parse())?;
    let c: f64 = args.get(1).map_or(Ok(0.1), |s| s.parse())?;

    let dgp = DgpConfig::new(ThetaDesign::Sparse, XDesign::Gaussian, 10_000, p, 1);
    let (data, theta0) = generate(&dgp, &mut ChaCha8Rng::seed_from_u64(dgp.seed))?;
    let tail = tail_at_level(&data, dgp.cutoff_level)?;
    println!("n = {}, exceedances above omega = {:.3}: {}", data.n(), tail.omega(), tail.n0());

    let fit = fit_lasso(&tail, &LassoConfig::with_penalty(Penalty::Rule(c)))?;
    println!(
        "lambda {:.4}, {} iterations, converged {}, KKT {:.1e} (recomputed {:.1e})",
        fit.lambda,
        fit.iterations,
        fit.converged,
        fit.kkt_residual,
        kkt_residual(&tail, &fit.theta_hat, fit.lambda)?
    );
    println!("support {:?}", fit.support);
    let err = (&fit.theta_hat - &theta0).norm();
    println!("l2 error {err:.3} vs {:.3} for the zero vector", theta0.norm());
    for j in 0..10.min(p) {
        println!("  theta[{j}] true {:5.2}  lasso {:6.3}", theta0[j], fit.theta_hat[j]);
    }
    Ok(())
}
