//! Conditional extreme quantiles `q(s) = omega * (1 - tau)^(-exp(-s))`, `s = x'theta`.

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::data::TailSample;
use crate::debias::{debias_functional, normal_quantile, DebiasConfig};
use crate::error::{Error, Result};
use crate::likelihood::LINK_CAP;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileEstimate {
    pub tau: f64,
    pub x: Vec<f64>,
    pub q_hat: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Variance of the debiased `x'theta` before the delta method.
    pub v3: f64,
    /// `x'theta_tilde`.
    pub index: f64,
    pub n0: usize,
    pub k: usize,
    /// The lower interval end was raised to `omega`.
    pub truncated: bool,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("tau must lie in (0,1), got {tau}")))
    }
}

fn check_index(s: f64) -> Result<()> {
    if s.is_finite() && s.abs() <= LINK_CAP {
        Ok(())
    } else {
        Err(Error::Divergence { value: s })
    }
}

fn index(theta: &DVector<f64>, x: &DVector<f64>) -> Result<f64> {
    if theta.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: theta.len(), got: x.len() });
    }
    Ok(x.dot(theta))
}

/// `q` as a function of the index `s = x'theta`.
pub fn quantile_at_index(s: f64, omega: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_index(s)?;
    if !(omega > 0.0) {
        return Err(Error::InvalidInput(format!("omega must be positive, got {omega}")));
    }
    let q = omega * (1.0 - tau).powf(-(-s).exp());
    if q.is_finite() {
        Ok(q)
    } else {
        Err(Error::Divergence { value: q })
    }
}

/// `dq/ds = omega * exp(-a L) * L * a` with `a = exp(-s)`, `L = ln(1 - tau)`.
pub fn derivative_at_index(s: f64, omega: f64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    check_index(s)?;
    let a = (-s).exp();
    let l = (1.0 - tau).ln();
    let d = omega * (-a * l).exp() * l * a;
    if d.is_finite() {
        Ok(d)
    } else {
        Err(Error::Divergence { value: d })
    }
}

pub fn conditional_quantile(theta: &DVector<f64>, x: &DVector<f64>, omega: f64, tau: f64) -> Result<f64> {
    quantile_at_index(index(theta, x)?, omega, tau)
}

pub fn quantile_derivative(theta: &DVector<f64>, x: &DVector<f64>, omega: f64, tau: f64) -> Result<f64> {
    derivative_at_index(index(theta, x)?, omega, tau)
}

/// Unconditional level matching `tau` above the threshold: `1 - (1 - tau)(1 - F(omega))`.
pub fn integrated_tau(tau: f64, f_omega: f64) -> Result<f64> {
    check_tau(tau)?;
    if !(0.0..1.0).contains(&f_omega) {
        return Err(Error::InvalidInput(format!("conditional CDF value must lie in [0,1), got {f_omega}")));
    }
    Ok(1.0 - (1.0 - tau) * (1.0 - f_omega))
}

/// Cross-fitted quantile estimate with a delta-method interval.
///
/// The derivative is taken at the fold-averaged lasso index `x'theta_hat`;
/// the interval is `q_hat -/+ z * |q'| * sqrt(v3 / n_eff)`, floored at `omega`.
pub fn quantile_inference(
    tail: &TailSample,
    x: &DVector<f64>,
    tau: f64,
    k: usize,
    cfg: &DebiasConfig,
) -> Result<QuantileEstimate> {
    check_tau(tau)?;
    let f = debias_functional(tail, k, x, cfg)?;
    let omega = tail.omega();
    let q_hat = quantile_at_index(f.value, omega, tau)?;
    let slope = derivative_at_index(f.plug_in, omega, tau)?;
    let se = slope.abs() * (f.variance / f.n_eff as f64).sqrt();
    let half = normal_quantile(1.0 - (1.0 - cfg.level) / 2.0) * se;
    let raw_low = q_hat - half;
    let truncated = raw_low < omega;
    Ok(QuantileEstimate {
        tau,
        x: x.iter().copied().collect(),
        q_hat,
        se,
        ci_low: raw_low.max(omega),
        ci_high: q_hat + half,
        v3: f.variance,
        index: f.value,
        n0: tail.n0(),
        k,
        truncated,
    })
}

#[derive(Serialize)]
struct QuantileJson<'a> {
    tau: f64,
    x: &'a [f64],
    q_hat: f64,
    se: f64,
    ci: [f64; 2],
    n0: usize,
    #[serde(rename = "K")]
    k: usize,
    method: &'static str,
    truncated: bool,
}

impl QuantileEstimate {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&QuantileJson {
            tau: self.tau,
            x: &self.x,
            q_hat: self.q_hat,
            se: self.se,
            ci: [self.ci_low, self.ci_high],
            n0: self.n0,
            k: self.k,
            method: "crossfit",
            truncated: self.truncated,
        })
        .expect("plain struct serializes")
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", self.to_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        assert!((quantile_at_index(0.0, 2.0, 0.9).unwrap() - 20.0).abs() < 1e-12);
        assert!((quantile_at_index(2f64.ln(), 1.0, 0.99).unwrap() - 10.0).abs() < 1e-12);
        assert!((quantile_at_index(0.0, 3.0, 1e-12).unwrap() - 3.0).abs() < 1e-9);
        let tau = 1.0 - (-1.0f64).exp();
        assert!((derivative_at_index(0.0, 1.0, tau).unwrap() + std::f64::consts::E).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(quantile_at_index(0.0, 1.0, 1.0).is_err());
        assert!(quantile_at_index(0.0, 1.0, 0.0).is_err());
        assert!(quantile_at_index(31.0, 1.0, 0.5).is_err());
        assert!(quantile_at_index(0.0, 0.0, 0.5).is_err());
        assert!(integrated_tau(0.5, 1.0).is_err());
    }

    #[test]
    fn tau_conversion() {
        assert!((integrated_tau(0.3, 0.0).unwrap() - 0.3).abs() < 1e-15);
        assert!((integrated_tau(0.5, 0.95).unwrap() - 0.975).abs() < 1e-15);
        assert!(integrated_tau(0.5, 1.0 - 1e-12).unwrap() > 1.0 - 1e-11);
    }

    #[test]
    fn vector_form_uses_index() {
        let theta = DVector::from_vec(vec![1.0, -2.0]);
        let x = DVector::from_vec(vec![0.5, 0.25]);
        assert_eq!(conditional_quantile(&theta, &x, 1.5, 0.9).unwrap(), quantile_at_index(0.0, 1.5, 0.9).unwrap());
        assert!(conditional_quantile(&theta, &DVector::zeros(3), 1.0, 0.9).is_err());
    }

    proptest! {
        #[test]
        fn derivative_matches_central_difference(s in -2.0f64..2.0, tau in 0.05f64..0.99, omega in 0.5f64..5.0) {
            let h = 1e-5;
            let fd = (quantile_at_index(s + h, omega, tau).unwrap() - quantile_at_index(s - h, omega, tau).unwrap()) / (2.0 * h);
            let d = derivative_at_index(s, omega, tau).unwrap();
            prop_assert!(d < 0.0);
            prop_assert!(((fd - d) / d).abs() < 1e-7, "fd {} analytic {}", fd, d);
        }

        #[test]
        fn monotone(s in -2.0f64..2.0, tau in 0.05f64..0.9) {
            let q = quantile_at_index(s, 1.0, tau).unwrap();
            prop_assert!(quantile_at_index(s, 1.0, tau + 0.05).unwrap() > q);
            prop_assert!(quantile_at_index(s + 0.1, 1.0, tau).unwrap() < q);
            prop_assert!(q >= 1.0);
        }
    }
}
