//! Conditional extreme quantile with a delta-method interval:
//! `cargo run --release --example extreme_quantile -- [tau]`.
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tailreg::data::tail_at_level;
use tailreg::debias::DebiasConfig;
use tailreg::quantile::{conditional_quantile, integrated_tau, quantile_inference};
use tailreg::simulate::{generate, DgpConfig, ThetaDesign, XDesign};

// The gram constraint radius is not rescaled for the query point: when max |x_j|
// is close to gamma1, u = 0 is nearly feasible and the interval collapses.
const X0: f64 = 0.3;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tau: f64 = std::env::args().nth(1).map_or(Ok(0.9), |s| s.parse())?;
    let dgp = DgpConfig::new(ThetaDesign::Sparse, XDesign::Gaussian, 10_000, 50, 5);
    let (data, theta0) = generate(&dgp, &mut ChaCha8Rng::seed_from_u64(dgp.seed))?;
    let tail = tail_at_level(&data, dgp.cutoff_level)?;
    let omega = tail.omega();

    // tau is a level within the exceedances; report the matching unconditional level too.
    println!("omega {omega:.3}, tau {tau} above omega = level {:.4} overall", integrated_tau(tau, dgp.cutoff_level)?);
    let mut x = DVector::zeros(dgp.p);
    for (j, v) in [X0, -0.5 * X0, 0.8 * X0].iter().enumerate() {
        x[j] = *v;
    }
    let q = quantile_inference(&tail, &x, tau, 5, &DebiasConfig::default())?;
    println!("index x'theta: true {:.4}, debiased {:.4}, v3 {:.4}", x.dot(&theta0), q.index, q.v3);
    println!("true quantile   {:.3}", conditional_quantile(&theta0, &x, omega, tau)?);
    println!("estimate        {:.3} (se {:.3})", q.q_hat, q.se);
    println!("95% interval    [{:.3}, {:.3}]{}", q.ci_low, q.ci_high, if q.truncated { " (floored at omega)" } else { "" });
    Ok(())
}
