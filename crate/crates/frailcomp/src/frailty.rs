//! Correlated gamma frailty construction.
//!
//! Each event `j` carrying frailty gets `Z_j = (w0/wj) Y_0 + Y_j` built from
//! independent gamma components `Y_0 ~ Gamma(k0, 1/k0)` and
//! `Y_j ~ Gamma(kj, 1/(k0+kj))`, with `w0 = k0`, `wj = k0 + kj`. Then
//! `Z_j ~ Gamma(wj, 1/wj)` has mean 1 and variance `1/wj`, and a shared
//! `Y_0` induces cross-event correlation `w0 / sqrt(wj wj')`. `k0 = 0`
//! drops the shared component entirely (independent frailties); events
//! outside the frailty set have degenerate `Z = 1` and are handled by the
//! likelihood, not here.
//!
//! Gamma ratios are formed in log space throughout.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Frailty structure: shared shape `k0` (zero = independent) and per-event
/// shapes for the events that carry frailty (`None` = degenerate `Z = 1`).
/// Event codes are 1-based; `ks[j - 1]` belongs to event `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrailtySpec {
    k0: f64,
    ks: Vec<Option<f64>>,
}

impl FrailtySpec {
    pub fn new(k0: f64, ks: Vec<Option<f64>>) -> Result<Self> {
        if !(k0 >= 0.0 && k0.is_finite()) {
            return Err(Error::Validation(format!(
                "shared frailty shape must be finite and >= 0, got {k0}"
            )));
        }
        for (i, k) in ks.iter().enumerate() {
            if let Some(k) = k {
                if !(*k > 0.0 && k.is_finite()) {
                    return Err(Error::Validation(format!(
                        "frailty shape for event {} must be positive, got {k}",
                        i + 1
                    )));
                }
            }
        }
        if k0 > 0.0 && ks.iter().flatten().count() == 0 {
            return Err(Error::Validation(
                "shared frailty component requires at least one frailty event".into(),
            ));
        }
        Ok(Self { k0, ks })
    }

    /// Independent frailties with the given per-event shapes.
    pub fn independent(ks: Vec<Option<f64>>) -> Result<Self> {
        Self::new(0.0, ks)
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }

    pub fn n_events(&self) -> usize {
        self.ks.len()
    }

    /// Whether event `j` (1-based) carries a frailty term.
    pub fn has_frailty(&self, j: usize) -> bool {
        self.ks.get(j - 1).map_or(false, Option::is_some)
    }

    /// Event-specific shape `k_j`.
    pub fn shape(&self, j: usize) -> Option<f64> {
        self.ks.get(j - 1).copied().flatten()
    }

    /// `w_j = k0 + k_j`, the frailty's gamma shape (variance `1/w_j`).
    pub fn omega(&self, j: usize) -> Option<f64> {
        self.shape(j).map(|k| self.k0 + k)
    }

    /// Events carrying frailty, ascending.
    pub fn frailty_events(&self) -> impl Iterator<Item = usize> + '_ {
        self.ks
            .iter()
            .enumerate()
            .filter_map(|(i, k)| k.map(|_| i + 1))
    }

    fn component(&self, m: usize) -> Result<(f64, f64)> {
        // (shape k_m, omega_m) of component m; m = 0 is the shared one.
        if m == 0 {
            return Ok((self.k0, self.k0));
        }
        match self.shape(m) {
            Some(k) => Ok((k, self.k0 + k)),
            None => Err(Error::Validation(format!(
                "event {m} is outside the frailty set"
            ))),
        }
    }

    /// Laplace transform `phi_m(s) = (1 + s/w_m)^(-k_m)` of component `m`.
    ///
    /// The shared component with `k0 = 0` is degenerate at zero, so its
    /// transform is identically 1.
    pub fn laplace(&self, m: usize, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::Validation(format!("negative Laplace argument {s}")));
        }
        let (k, w) = self.component(m)?;
        if k == 0.0 {
            return Ok(1.0);
        }
        Ok((-k * (s / w).ln_1p()).exp())
    }

    /// d-th derivative of the Laplace transform of component `m`, as the log
    /// of its magnitude plus the sign `(-1)^d`.
    ///
    /// `log |phi^(d)(s)| = lgamma(k+d) - lgamma(k) - d log w - (k+d) log(1 + s/w)`.
    pub fn log_laplace_deriv(&self, m: usize, s: f64, d: u32) -> Result<(f64, f64)> {
        if s < 0.0 {
            return Err(Error::Validation(format!("negative Laplace argument {s}")));
        }
        let (k, w) = self.component(m)?;
        let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
        if d == 0 {
            if k == 0.0 {
                return Ok((0.0, 1.0));
            }
            return Ok((-k * (s / w).ln_1p(), 1.0));
        }
        if k == 0.0 {
            // Degenerate component: every derivative vanishes.
            return Ok((f64::NEG_INFINITY, sign));
        }
        let d = f64::from(d);
        let log_mag = ln_gamma(k + d) - ln_gamma(k) - d * w.ln() - (k + d) * (s / w).ln_1p();
        Ok((log_mag, sign))
    }

    /// Cross-event frailty correlation `w0 / sqrt(wj wj')`.
    pub fn correlation(&self, j: usize, jp: usize) -> Result<f64> {
        if j == jp {
            return Err(Error::Validation(
                "correlation requires two distinct events".into(),
            ));
        }
        let (_, wj) = self.component(j)?;
        let (_, wjp) = self.component(jp)?;
        Ok(self.k0 / (wj * wjp).sqrt())
    }

    /// Kendall's tau within families for event `j`: `1 / (1 + 2 w_j)`.
    pub fn kendalls_tau(&self, j: usize) -> Result<f64> {
        let (_, w) = self.component(j)?;
        Ok(1.0 / (1.0 + 2.0 * w))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use rand_distr::{Distribution, Gamma};

    fn spec(k0: f64, k1: f64, k2: f64) -> FrailtySpec {
        FrailtySpec::new(k0, vec![Some(k1), Some(k2)]).unwrap()
    }

    #[test]
    fn laplace_at_zero_is_one() {
        let s = spec(0.5, 2.0, 1.5);
        for m in 0..=2 {
            assert_eq!(s.laplace(m, 0.0).unwrap(), 1.0);
        }
    }

    #[test]
    fn unit_shape_at_one_is_half() {
        // k = 1, w = 1: phi(1) = (1 + 1)^(-1).
        let s = spec(0.0, 1.0, 1.0);
        assert!((s.laplace(1, 1.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn first_derivative_matches_finite_difference() {
        let s = spec(0.7, 2.3, 1.1);
        for m in 0..=2 {
            for x in [0.2f64, 1.0, 4.5] {
                let h = 1e-6 * x.max(1.0);
                let fd = (s.laplace(m, x + h).unwrap() - s.laplace(m, x - h).unwrap()) / (2.0 * h);
                let (lm, sign) = s.log_laplace_deriv(m, x, 1).unwrap();
                let exact = sign * lm.exp();
                assert!(
                    (fd - exact).abs() <= 1e-6 * exact.abs().max(1e-12),
                    "m={m} x={x}: {fd} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn derivative_signs_alternate() {
        let s = spec(0.5, 2.0, 1.5);
        for d in 0..6 {
            let (_, sign) = s.log_laplace_deriv(1, 0.8, d).unwrap();
            assert_eq!(sign, if d % 2 == 0 { 1.0 } else { -1.0 });
        }
    }

    #[test]
    fn transform_in_unit_interval_decreasing_convex() {
        let s = spec(0.3, 1.7, 0.9);
        for m in 0..=2 {
            let grid: Vec<f64> = (1..60).map(|i| 0.25 * i as f64).collect();
            let vals: Vec<f64> = grid.iter().map(|&x| s.laplace(m, x).unwrap()).collect();
            for v in &vals {
                assert!(*v > 0.0 && *v < 1.0 || (s.k0 == 0.0 && m == 0));
            }
            for w in vals.windows(2) {
                assert!(w[1] < w[0]);
            }
            for w in vals.windows(3) {
                assert!(w[0] - 2.0 * w[1] + w[2] > -1e-12); // convex
            }
        }
    }

    #[test]
    fn independence_zeroes_correlation() {
        let s = spec(0.0, 1.0, 3.5);
        assert_eq!(s.correlation(1, 2).unwrap(), 0.0);
        let c = spec(0.8, 1.0, 3.5);
        let expect = 0.8 / ((1.8f64) * 4.3).sqrt();
        assert!((c.correlation(1, 2).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn kendalls_tau_table_values() {
        assert!((spec(0.0, 1.0, 1.0).kendalls_tau(1).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((spec(0.0, 3.5, 1.0).kendalls_tau(1).unwrap() - 0.125).abs() < 1e-15);
        // variance 0.29 corresponds to tau ~ 0.13
        let v = FrailtySpec::new(0.0, vec![Some(1.0 / 0.29)]).unwrap();
        assert!((v.kendalls_tau(1).unwrap() - 0.13).abs() < 0.005);
    }

    #[test]
    fn events_outside_set_error() {
        let s = FrailtySpec::new(0.4, vec![Some(1.0), None]).unwrap();
        assert!(s.laplace(2, 1.0).is_err());
        assert!(s.kendalls_tau(2).is_err());
        assert!(s.correlation(1, 2).is_err());
        assert!(!s.has_frailty(2));
        assert!(s.has_frailty(1));
    }

    #[test]
    fn monte_carlo_variance_matches_closed_form() {
        // Z = (w0/wj) Y0 + Yj with E[Z] = 1, Var(Z) = 1/wj.
        let (k0, k1) = (0.8, 2.2);
        let w1 = k0 + k1;
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let g0 = Gamma::new(k0, 1.0 / k0).unwrap();
        let g1 = Gamma::new(k1, 1.0 / w1).unwrap();
        let n = 1_000_000;
        let (mut sum, mut sumsq) = (0.0f64, 0.0f64);
        for _ in 0..n {
            let z = (k0 / w1) * g0.sample(&mut rng) + g1.sample(&mut rng);
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!((mean - 1.0).abs() < 0.01);
        assert!(
            (var - 1.0 / w1).abs() <= 0.02 * (1.0 / w1),
            "var {var} vs {}",
            1.0 / w1
        );
    }
}
