//! Power-law diagnostics on a Pareto sample: threshold, exceedance count and
//! log-log slope. `cargo run --release --example loglog_tail -- [alpha]`.
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tailreg::data::{loglog_points, select_threshold};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let alpha: f64 = std::env::args().nth(1).map_or(Ok(1.0), |s| s.parse())?;
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let y: Vec<f64> = (0..100_000).map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / alpha)).collect();

    let omega = select_threshold(&y, 0.95)?;
    let n0 = y.iter().filter(|&&v| v > omega).count();
    println!("95th percentile {omega:.3} ({:.3} in theory), {n0} exceedances", 20f64.powf(1.0 / alpha));

    let plot = loglog_points(&y)?;
    for fraction in [0.01, 0.1, 0.5] {
        println!("slope of log y on log rank, top {:>4}%: {:.3} (expect {:.3})", fraction * 100.0, plot.slope(fraction)?, -1.0 / alpha);
    }
    Ok(())
}
