//! Weibull baseline hazards and time-varying covariate effects.
//!
//! Covariates are binary exposures switching 0 -> 1 once, at a change age
//! `t_x`. The multiplicative effect on the log scale follows one of three
//! shapes: permanent exposure (PE), exponential decay to zero (ED), or
//! decay to a plateau (CO).
//!
//! Baselines are evaluated in *risk time*, the years elapsed since the
//! model's time origin (the age at which risk begins). [`CauseModel`]
//! translates ages to risk time and assembles the full cause-specific
//! hazard `h0(t) * exp(beta_gene * G + sum_mu)`. Frailty is never applied
//! here; callers multiply it in.

use crate::error::{Error, Result};
use crate::quad;
use serde::{Deserialize, Serialize};

/// Default hazard-clock origin in years of age.
///
/// Risk begins here: ages enter the Weibull baseline as `age - origin`.
pub const DEFAULT_TIME_ORIGIN: f64 = 15.0;

/// Relative tolerance for cumulative-hazard quadrature (ED/CO shapes).
pub const CUM_HAZARD_REL_TOL: f64 = 1e-8;

/// Weibull baseline with rate `lambda` and shape `rho`:
/// `H0(s) = (lambda * s)^rho`, `h0(s) = rho * lambda^rho * s^(rho-1)`,
/// `s` in risk time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullBaseline {
    pub lambda: f64,
    pub rho: f64,
}

impl WeibullBaseline {
    pub fn new(lambda: f64, rho: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Validation(format!(
                "Weibull rate must be positive and finite, got {lambda}"
            )));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Validation(format!(
                "Weibull shape must be positive and finite, got {rho}"
            )));
        }
        Ok(Self { lambda, rho })
    }

    /// Baseline hazard at risk time `s >= 0`.
    pub fn hazard(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::Validation(format!("negative time {s}")));
        }
        Ok(self.hazard_at(s))
    }

    /// Baseline cumulative hazard at risk time `s >= 0`.
    pub fn cum_hazard(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::Validation(format!("negative time {s}")));
        }
        Ok(self.cum_hazard_at(s))
    }

    pub(crate) fn hazard_at(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        self.rho * self.lambda.powf(self.rho) * s.powf(self.rho - 1.0)
    }

    pub(crate) fn cum_hazard_at(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        (self.lambda * s).powf(self.rho)
    }
}

/// Shape of a time-varying covariate effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TvcKind {
    /// Permanent exposure: log-HR stays at `beta`.
    Pe,
    /// Exponential decay: `beta * exp(-eta (t - t_x))`, decaying to 0.
    Ed,
    /// Cox–Oakes: `beta * exp(-eta (t - t_x)) + eta0`, decaying to `eta0`.
    Co,
}

impl TvcKind {
    pub fn label(self) -> &'static str {
        match self {
            TvcKind::Pe => "pe",
            TvcKind::Ed => "ed",
            TvcKind::Co => "co",
        }
    }
}

/// Effect of one binary TVC on one cause-specific hazard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvcEffect {
    pub kind: TvcKind,
    /// Log hazard ratio at exposure onset.
    pub beta: f64,
    /// Decay rate (ED/CO; ignored for PE).
    pub eta: f64,
    /// Asymptotic log hazard ratio (CO only).
    pub eta0: f64,
}

impl TvcEffect {
    pub fn pe(beta: f64) -> Self {
        Self { kind: TvcKind::Pe, beta, eta: 0.0, eta0: 0.0 }
    }

    pub fn ed(beta: f64, eta: f64) -> Self {
        Self { kind: TvcKind::Ed, beta, eta, eta0: 0.0 }
    }

    pub fn co(beta: f64, eta: f64, eta0: f64) -> Self {
        Self { kind: TvcKind::Co, beta, eta, eta0 }
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.beta, self.eta, self.eta0] {
            if !v.is_finite() {
                return Err(Error::Validation("non-finite TVC effect parameter".into()));
            }
        }
        if matches!(self.kind, TvcKind::Ed | TvcKind::Co) && self.eta < 0.0 {
            return Err(Error::Validation(format!(
                "decay rate must be nonnegative, got {}",
                self.eta
            )));
        }
        Ok(())
    }

    /// Log hazard ratio mu at time `t` for exposure starting at `t_x`.
    ///
    /// Zero before exposure; at exactly `t == t_x` the exposed branch
    /// applies.
    pub fn log_hazard_ratio(&self, t: f64, t_x: Option<f64>) -> f64 {
        let t_x = match t_x {
            Some(v) => v,
            None => return 0.0,
        };
        if t < t_x {
            return 0.0;
        }
        match self.kind {
            TvcKind::Pe => self.beta,
            TvcKind::Ed => self.beta * (-self.eta * (t - t_x)).exp(),
            TvcKind::Co => self.beta * (-self.eta * (t - t_x)).exp() + self.eta0,
        }
    }

    /// The exposed-branch value when it does not vary with time, enabling
    /// the closed-form cumulative hazard.
    fn constant_exposed_value(&self) -> Option<f64> {
        match self.kind {
            TvcKind::Pe => Some(self.beta),
            TvcKind::Ed if self.eta == 0.0 => Some(self.beta),
            TvcKind::Co if self.eta == 0.0 => Some(self.beta + self.eta0),
            _ => None,
        }
    }
}

/// One cause-specific hazard: Weibull baseline, genotype effect and the TVC
/// effects attached to this event. `tvc_effects` pairs each effect with the
/// index of the covariate it reads from an individual's change-age list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CauseModel {
    pub baseline: WeibullBaseline,
    /// Log hazard ratio for the binary genotype covariate.
    pub beta_gene: f64,
    pub tvc_effects: Vec<(usize, TvcEffect)>,
    /// Age at which risk begins; hazards vanish before it.
    pub time_origin: f64,
}

impl CauseModel {
    /// Sum of log hazard ratios (genotype + all TVCs) at age `t`.
    pub fn log_relative_hazard(&self, t: f64, genotype: u8, tvc_ages: &[Option<f64>]) -> f64 {
        let mut lrh = self.beta_gene * f64::from(genotype);
        for &(idx, ref eff) in &self.tvc_effects {
            lrh += eff.log_hazard_ratio(t, tvc_ages[idx]);
        }
        lrh
    }

    /// Cause-specific hazard at age `t` (frailty excluded).
    pub fn hazard(&self, t: f64, genotype: u8, tvc_ages: &[Option<f64>]) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::Validation(format!("negative age {t}")));
        }
        let h0 = self.baseline.hazard_at(t - self.time_origin);
        if h0 == 0.0 {
            return Ok(0.0);
        }
        Ok(h0 * self.log_relative_hazard(t, genotype, tvc_ages).exp())
    }

    /// Cause-specific cumulative hazard at age `t` (frailty excluded).
    ///
    /// Exact piecewise closed form when every active effect is constant on
    /// a segment (PE, or decay rate zero); composite Gauss–Legendre
    /// quadrature on the segments where an ED/CO effect decays.
    pub fn cum_hazard(&self, t: f64, genotype: u8, tvc_ages: &[Option<f64>]) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::Validation(format!("negative age {t}")));
        }
        let origin = self.time_origin;
        if t <= origin {
            return Ok(0.0);
        }
        let gene = self.beta_gene * f64::from(genotype);

        // Segment boundaries: exposure onsets inside (origin, t).
        let mut cuts: Vec<f64> = self
            .tvc_effects
            .iter()
            .filter_map(|&(idx, _)| tvc_ages[idx])
            .filter(|&x| x > origin && x < t)
            .collect();
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();

        let mut edges = Vec::with_capacity(cuts.len() + 2);
        edges.push(origin);
        edges.extend(cuts);
        edges.push(t);

        let mut total = 0.0;
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            // Effects exposed on this whole segment (onset at or before a).
            let mut const_log = gene;
            let mut varying: Vec<(f64, &TvcEffect)> = Vec::new();
            for &(idx, ref eff) in &self.tvc_effects {
                let t_x = match tvc_ages[idx] {
                    Some(v) if v <= a => v,
                    _ => continue,
                };
                match eff.constant_exposed_value() {
                    Some(v) => const_log += v,
                    None => varying.push((t_x, eff)),
                }
            }
            if varying.is_empty() {
                let inc = self.baseline.cum_hazard_at(b - origin)
                    - self.baseline.cum_hazard_at(a - origin);
                total += const_log.exp() * inc;
            } else {
                let f = |u: f64| {
                    let mut mu = const_log;
                    for &(t_x, eff) in &varying {
                        mu += eff.log_hazard_ratio(u, Some(t_x));
                    }
                    self.baseline.hazard_at(u - origin) * mu.exp()
                };
                total += quad::integrate_gl15(f, a, b, &[], CUM_HAZARD_REL_TOL)?;
            }
        }
        Ok(total)
    }
}
