//! Marginal cause-specific cumulative incidence (penetrance) with TVCs,
//! delta-method confidence intervals, and hazard-ratio trajectories.
//!
//! The penetrance of event `j` by age `t` integrates, over `u` from the
//! hazard origin to `t`, the covariate-adjusted hazard times the marginal
//! survival factors of all events and the expected frailty weight of the
//! failing event. All frailty integrals are closed-form gamma Laplace
//! transforms; only the outer age integral is numeric, on panels split at
//! every covariate change age.

use crate::error::{Error, Result};
use crate::likelihood::{fd_step, log_marginal_survival};
use crate::model::{ModelParams, ModelSpec, ParameterVector};
use crate::parallel;
use crate::quad;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::cell::Cell;

/// Normal 97.5% quantile used for all 95% intervals.
pub const Z_95: f64 = 1.959963984540054;

/// Relative tolerance of the outer age integral.
pub const PENETRANCE_REL_TOL: f64 = 1e-8;

/// Maximum outer panel width in years.
pub const PANEL_MAX_WIDTH: f64 = 5.0;

/// Covariate history of a hypothetical individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub genotype: u8,
    /// Change age per TVC; `None` = never exposed.
    pub tvc_ages: Vec<Option<f64>>,
}

impl RiskProfile {
    pub fn new(genotype: u8, tvc_ages: Vec<Option<f64>>) -> Self {
        Self { genotype, tvc_ages }
    }
}

fn check_profile(params: &ModelParams, profile: &RiskProfile) -> Result<()> {
    let needed = params
        .causes
        .iter()
        .flat_map(|c| c.tvc_effects.iter().map(|&(i, _)| i + 1))
        .max()
        .unwrap_or(0);
    if profile.tvc_ages.len() < needed {
        return Err(Error::Validation(format!(
            "risk profile has {} TVC entries, model reads {needed}",
            profile.tvc_ages.len()
        )));
    }
    for age in profile.tvc_ages.iter().flatten() {
        if !(*age > 0.0 && age.is_finite()) {
            return Err(Error::Validation("TVC change ages must be > 0".into()));
        }
    }
    Ok(())
}

/// Marginal probability of no event by age `t` for the profile.
pub fn marginal_survival(params: &ModelParams, profile: &RiskProfile, t: f64) -> Result<f64> {
    check_profile(params, profile)?;
    let h: Vec<f64> = params
        .causes
        .iter()
        .map(|c| c.cum_hazard(t, profile.genotype, &profile.tvc_ages))
        .collect::<Result<_>>()?;
    Ok(log_marginal_survival(&params.frailty, &h).exp())
}

fn integrand(params: &ModelParams, profile: &RiskProfile, event: usize, u: f64) -> Result<f64> {
    let fr = &params.frailty;
    let hj = params.causes[event - 1].hazard(u, profile.genotype, &profile.tvc_ages)?;
    if hj == 0.0 {
        return Ok(0.0);
    }
    let mut log_fac = 0.0;
    let mut shared = 0.0;
    let mut h_event = 0.0;
    for (l, cause) in params.causes.iter().enumerate() {
        let h = cause.cum_hazard(u, profile.genotype, &profile.tvc_ages)?;
        if l + 1 == event {
            h_event = h;
        }
        match fr.omega(l + 1) {
            Some(w) => {
                log_fac -= fr.shape(l + 1).unwrap() * (h / w).ln_1p();
                shared += h / w;
            }
            None => log_fac -= h,
        }
    }
    let k0 = fr.k0();
    if k0 > 0.0 {
        log_fac -= k0 * shared.ln_1p();
    }
    let weight = match fr.omega(event) {
        // Expected frailty of the failing event given survival:
        // shared and event-specific Laplace-derivative contributions.
        Some(w) => {
            let kj = fr.shape(event).unwrap();
            k0 / w / (1.0 + shared) + kj / w / (1.0 + h_event / w)
        }
        None => 1.0,
    };
    Ok(hj * log_fac.exp() * weight)
}

fn outer_integral<F: Fn(f64) -> Result<f64>>(
    f: F,
    origin: f64,
    t: f64,
    breaks: &[f64],
) -> Result<f64> {
    // Quadrature closures are infallible; capture the first inner error.
    let failure: Cell<Option<Error>> = Cell::new(None);
    let g = |u: f64| match f(u) {
        Ok(v) => v,
        Err(e) => {
            if failure.take().is_none() {
                failure.set(Some(e));
            }
            0.0
        }
    };
    let val = quad::integrate_gl31(g, origin, t, breaks, PENETRANCE_REL_TOL, PANEL_MAX_WIDTH);
    if let Some(e) = failure.take() {
        return Err(e);
    }
    val
}

/// Cause-specific penetrance `F_j(t)` for the profile, marginal over
/// frailties.
pub fn penetrance(
    params: &ModelParams,
    profile: &RiskProfile,
    event: usize,
    t: f64,
) -> Result<f64> {
    if event == 0 || event > params.n_events() {
        return Err(Error::Validation(format!(
            "event {event} out of range 1..={}",
            params.n_events()
        )));
    }
    if t < 0.0 {
        return Err(Error::Validation(format!("negative age {t}")));
    }
    check_profile(params, profile)?;
    let origin = params.causes[event - 1].time_origin;
    if t <= origin {
        return Ok(0.0);
    }
    let breaks: Vec<f64> = profile.tvc_ages.iter().flatten().copied().collect();
    outer_integral(
        |u| integrand(params, profile, event, u),
        origin,
        t,
        &breaks,
    )
}

/// Independent-frailty penetrance (`k0 = 0`), written directly from the
/// simplified product form. Kept as a separate code path to cross-check
/// the general integrand.
pub fn independent_penetrance(
    params: &ModelParams,
    profile: &RiskProfile,
    event: usize,
    t: f64,
) -> Result<f64> {
    if params.frailty.k0() != 0.0 {
        return Err(Error::Validation(
            "independent-form penetrance requires k0 = 0".into(),
        ));
    }
    check_profile(params, profile)?;
    let origin = params.causes[event - 1].time_origin;
    if t <= origin {
        return Ok(0.0);
    }
    let fr = &params.frailty;
    let f = |u: f64| -> Result<f64> {
        let hj = params.causes[event - 1].hazard(u, profile.genotype, &profile.tvc_ages)?;
        if hj == 0.0 {
            return Ok(0.0);
        }
        let mut val = hj;
        for (l, cause) in params.causes.iter().enumerate() {
            let h = cause.cum_hazard(u, profile.genotype, &profile.tvc_ages)?;
            val *= match fr.shape(l + 1) {
                Some(k) if l + 1 == event => (1.0 + h / k).powf(-k - 1.0),
                Some(k) => (1.0 + h / k).powf(-k),
                None if l + 1 == event => (-h).exp(),
                None => (-h).exp(),
            };
        }
        Ok(val)
    };
    let breaks: Vec<f64> = profile.tvc_ages.iter().flatten().copied().collect();
    outer_integral(f, origin, t, &breaks)
}

/// One age point of a penetrance curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub age: f64,
    pub estimate: f64,
    pub se: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// Penetrance curve for one event and profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenetranceCurve {
    pub event: usize,
    pub points: Vec<CurvePoint>,
}

/// Scale on which the symmetric delta-method interval is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiScale {
    /// Plain scale, truncated to [0, 1].
    #[default]
    Plain,
    /// Complementary log-log scale.
    LogLog,
}

fn delta_gradient<F>(theta: &ParameterVector, eval: F) -> Result<Vec<f64>>
where
    F: Fn(&ParameterVector) -> Result<f64>,
{
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let h = fd_step(theta.values()[i]);
        let mut up = theta.clone();
        up.values_mut()[i] += h;
        let mut dn = theta.clone();
        dn.values_mut()[i] -= h;
        grad.push((eval(&up)? - eval(&dn)?) / (2.0 * h));
    }
    Ok(grad)
}

fn quadratic_form(cov: &DMatrix<f64>, grad: &[f64]) -> f64 {
    let g = DVector::from_column_slice(grad);
    (g.transpose() * cov * g)[(0, 0)]
}

fn interval(estimate: f64, se: f64, scale: CiScale) -> (f64, f64) {
    match scale {
        CiScale::Plain => (
            (estimate - Z_95 * se).max(0.0),
            (estimate + Z_95 * se).min(1.0),
        ),
        CiScale::LogLog => {
            if estimate <= 0.0 || estimate >= 1.0 || se == 0.0 {
                return interval(estimate, se, CiScale::Plain);
            }
            // var on the log(-log F) scale by the delta method
            let denom = estimate * estimate.ln();
            let se_c = se / denom.abs();
            let base = (-estimate.ln()).ln();
            let lo = (-((base + Z_95 * se_c).exp())).exp();
            let hi = (-((base - Z_95 * se_c).exp())).exp();
            (lo.min(hi), lo.max(hi))
        }
    }
}

/// Penetrance at the grid ages with delta-method standard errors and 95%
/// intervals, for every event.
pub fn penetrance_curve(
    spec: &ModelSpec,
    theta: &ParameterVector,
    cov: &DMatrix<f64>,
    profile: &RiskProfile,
    ages: &[f64],
    scale: CiScale,
) -> Result<Vec<PenetranceCurve>> {
    if cov.nrows() != theta.len() || cov.ncols() != theta.len() {
        return Err(Error::Validation(format!(
            "covariance is {}x{}, parameters {}",
            cov.nrows(),
            cov.ncols(),
            theta.len()
        )));
    }
    let mut curves = Vec::new();
    for event in 1..=spec.n_events {
        let pts = parallel::try_map_collect(ages, |&age| {
            let estimate = penetrance(&spec.realize(theta)?, profile, event, age)?;
            let grad = delta_gradient(theta, |th| {
                penetrance(&spec.realize(th)?, profile, event, age)
            })?;
            let var = quadratic_form(cov, &grad);
            if !var.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("penetrance variance at age {age}"),
                });
            }
            let se = var.max(0.0).sqrt();
            let (lo95, hi95) = interval(estimate, se, scale);
            Ok::<CurvePoint, Error>(CurvePoint { age, estimate, se, lo95, hi95 })
        })?;
        curves.push(PenetranceCurve { event, points: pts });
    }
    Ok(curves)
}

/// One point of a hazard-ratio trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrPoint {
    pub since_exposure: f64,
    pub hr: f64,
    pub lo95: f64,
    pub hi95: f64,
}

/// Hazard ratio `exp(mu)` of one TVC over years since exposure, with
/// delta-method intervals on the log scale.
pub fn hazard_ratio_trajectory(
    spec: &ModelSpec,
    theta: &ParameterVector,
    cov: &DMatrix<f64>,
    event: usize,
    tvc_index: usize,
    since_exposure: &[f64],
) -> Result<Vec<HrPoint>> {
    let mu_at = |th: &ParameterVector, s: f64| -> Result<f64> {
        let params = spec.realize(th)?;
        let cause = params
            .causes
            .get(event - 1)
            .ok_or_else(|| Error::Validation(format!("no event {event}")))?;
        let eff = cause
            .tvc_effects
            .iter()
            .find(|(i, _)| *i == tvc_index)
            .map(|(_, e)| e)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "event {event} has no TVC {} effect",
                    tvc_index + 1
                ))
            })?;
        Ok(eff.log_hazard_ratio(s, Some(0.0)))
    };
    since_exposure
        .iter()
        .map(|&s| {
            if s < 0.0 {
                return Err(Error::Validation("years since exposure must be >= 0".into()));
            }
            let mu = mu_at(theta, s)?;
            let grad = delta_gradient(theta, |th| mu_at(th, s))?;
            let se = quadratic_form(cov, &grad).max(0.0).sqrt();
            Ok(HrPoint {
                since_exposure: s,
                hr: mu.exp(),
                lo95: (mu - Z_95 * se).exp(),
                hi95: (mu + Z_95 * se).exp(),
            })
        })
        .collect()
}
