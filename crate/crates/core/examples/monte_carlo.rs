//! One coverage-study row:
//! `cargo run --release --example monte_carlo -- [x_design] [theta_design] [p] [reps] [split|crossfit] [tail|subsample] [estimation|projection]`.
use std::time::Instant;

use tailreg::debias::{DebiasConfig, Method};
use tailreg::simulate::{run_monte_carlo, DgpConfig, McConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: &str| args.get(i).cloned().unwrap_or_else(|| d.to_string());
    let x_design = arg(0, "gaussian").parse()?;
    let theta_design = arg(1, "exponential").parse()?;
    let p: usize = arg(2, "100").parse()?;
    let reps: usize = arg(3, "100").parse()?;
    let method: Method = arg(4, "crossfit").parse()?;

    let cfg = McConfig {
        dgp: DgpConfig::new(theta_design, x_design, 10_000, p, 7),
        reps,
        method,
        k: 5,
        debias: DebiasConfig {
            rule_size: arg(5, "tail").parse()?,
            correction_fold: arg(6, "estimation").parse()?,
            ..DebiasConfig::default()
        },
        coord: 0,
    };
    let start = Instant::now();
    let (s, _) = run_monte_carlo(&cfg)?;
    println!(
        "{} {} p={p} reps={reps}: bias {:.3} sd {:.3} rmse {:.3} coverage {:.3} failures {} ({:.1}s)",
        arg(0, "gaussian"),
        arg(1, "exponential"),
        s.bias,
        s.sd,
        s.rmse,
        s.coverage,
        s.failures,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
