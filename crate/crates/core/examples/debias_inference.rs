//! Confidence intervals for individual coefficients by sample splitting and
//! cross-fitting: `cargo run --release --example debias_inference`.
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tailreg::data::tail_at_level;
use tailreg::debias::{debias, DebiasConfig, Method};
use tailreg::simulate::{generate, DgpConfig, ThetaDesign, XDesign};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dgp = DgpConfig::new(ThetaDesign::Exponential, XDesign::Gaussian, 10_000, 100, 3);
    let (data, theta0) = generate(&dgp, &mut ChaCha8Rng::seed_from_u64(dgp.seed))?;
    let tail = tail_at_level(&data, dgp.cutoff_level)?;
    let cfg = DebiasConfig { seed: 11, ..DebiasConfig::default() };
    let coords = [0, 1, 2, 50];

    for method in [Method::Split, Method::CrossFit] {
        let inf = debias(&tail, method, 5, &coords, &cfg)?;
        println!("{} (n_eff {}):", method.as_str(), inf.n_eff);
        for c in &inf.coefficients {
            match &c.estimate {
                Ok(d) => println!(
                    "  theta[{:2}] true {:5.2}  lasso {:6.3}  debiased {:6.3}  se {:.3}  95% CI [{:6.3}, {:6.3}]",
                    c.coord, theta0[c.coord], c.theta_hat, d.theta_tilde, d.se, d.ci_low, d.ci_high
                ),
                Err(e) => println!("  theta[{:2}] failed: {e}", c.coord),
            }
        }
    }
    Ok(())
}
