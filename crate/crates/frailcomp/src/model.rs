//! Model structure and the unconstrained parameter vector.
//!
//! A [`ModelSpec`] fixes what exists: number of competing events, which TVC
//! affects which event with which shape, and which events share frailty.
//! A [`ParameterVector`] holds the transformed values (logs of positive
//! quantities, raw coefficients) in the spec's canonical order, and
//! [`ModelSpec::realize`] turns both into evaluatable [`ModelParams`].

use crate::error::{Error, Result};
use crate::frailty::FrailtySpec;
use crate::hazard::{CauseModel, TvcEffect, TvcKind, WeibullBaseline, DEFAULT_TIME_ORIGIN};
use serde::{Deserialize, Serialize};

/// Assignment of one time-varying covariate to one event's hazard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TvcDef {
    /// Event (1-based) whose hazard carries this covariate.
    pub event: usize,
    pub kind: TvcKind,
}

/// Which events carry frailty, and whether a shared component (estimated
/// `k0`) correlates them. Without sharing, frailties are independent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrailtyStructure {
    /// Events (1-based, ascending) with a frailty term.
    pub events: Vec<usize>,
    pub shared: bool,
}

/// Structural description of a competing-risks model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n_events: usize,
    /// One entry per TVC column; position is the covariate index.
    pub tvc_defs: Vec<TvcDef>,
    pub frailty: FrailtyStructure,
    /// Age at which risk begins (hazard clock origin).
    #[serde(default = "default_origin")]
    pub time_origin: f64,
}

fn default_origin() -> f64 {
    DEFAULT_TIME_ORIGIN
}

impl ModelSpec {
    pub fn new(n_events: usize, tvc_defs: Vec<TvcDef>, frailty: FrailtyStructure) -> Result<Self> {
        let spec = Self {
            n_events,
            tvc_defs,
            frailty,
            time_origin: DEFAULT_TIME_ORIGIN,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_events == 0 {
            return Err(Error::Validation("model needs at least one event".into()));
        }
        for def in &self.tvc_defs {
            if def.event == 0 || def.event > self.n_events {
                return Err(Error::Validation(format!(
                    "TVC assigned to event {} but J = {}",
                    def.event, self.n_events
                )));
            }
        }
        let mut prev = 0usize;
        for &j in &self.frailty.events {
            if j == 0 || j > self.n_events {
                return Err(Error::Validation(format!(
                    "frailty event {j} out of range 1..={}",
                    self.n_events
                )));
            }
            if j <= prev {
                return Err(Error::Validation(
                    "frailty events must be strictly ascending".into(),
                ));
            }
            prev = j;
        }
        if self.frailty.shared && self.frailty.events.is_empty() {
            return Err(Error::Validation(
                "shared frailty requires at least one frailty event".into(),
            ));
        }
        if !(self.time_origin >= 0.0 && self.time_origin.is_finite()) {
            return Err(Error::Validation("time origin must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// Number of TVC columns individuals must carry.
    pub fn n_tvc(&self) -> usize {
        self.tvc_defs.len()
    }

    /// Canonical parameter names, in vector order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for j in 1..=self.n_events {
            names.push(format!("log_lambda{j}"));
            names.push(format!("log_rho{j}"));
            names.push(format!("beta{j}_gene"));
            for (idx, def) in self.tvc_defs.iter().enumerate() {
                if def.event != j {
                    continue;
                }
                let i = idx + 1;
                names.push(format!("beta{j}_tvc{i}"));
                match def.kind {
                    TvcKind::Pe => {}
                    TvcKind::Ed => names.push(format!("log_eta{j}_tvc{i}")),
                    TvcKind::Co => {
                        names.push(format!("log_eta{j}_tvc{i}"));
                        names.push(format!("eta0_{j}_tvc{i}"));
                    }
                }
            }
        }
        if self.frailty.shared {
            names.push("log_k0".into());
        }
        for &j in &self.frailty.events {
            names.push(format!("log_k{j}"));
        }
        names
    }

    pub fn dim(&self) -> usize {
        self.param_names().len()
    }

    /// Materialize hazard and frailty parameters from a transformed vector.
    pub fn realize(&self, theta: &ParameterVector) -> Result<ModelParams> {
        let v = theta.values();
        if v.len() != self.dim() {
            return Err(Error::Validation(format!(
                "parameter vector has length {}, model needs {}",
                v.len(),
                self.dim()
            )));
        }
        if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite parameter value {bad}"
            )));
        }
        let mut pos = 0usize;
        let mut next = || {
            let x = v[pos];
            pos += 1;
            x
        };
        let mut causes = Vec::with_capacity(self.n_events);
        for j in 1..=self.n_events {
            let baseline = WeibullBaseline::new(next().exp(), next().exp())?;
            let beta_gene = next();
            let mut tvc_effects = Vec::new();
            for (idx, def) in self.tvc_defs.iter().enumerate() {
                if def.event != j {
                    continue;
                }
                let beta = next();
                let eff = match def.kind {
                    TvcKind::Pe => TvcEffect::pe(beta),
                    TvcKind::Ed => TvcEffect::ed(beta, next().exp()),
                    TvcKind::Co => {
                        let eta = next().exp();
                        TvcEffect::co(beta, eta, next())
                    }
                };
                eff.validate()?;
                tvc_effects.push((idx, eff));
            }
            causes.push(CauseModel {
                baseline,
                beta_gene,
                tvc_effects,
                time_origin: self.time_origin,
            });
        }
        let k0 = if self.frailty.shared { next().exp() } else { 0.0 };
        let mut ks = vec![None; self.n_events];
        for &j in &self.frailty.events {
            ks[j - 1] = Some(next().exp());
        }
        debug_assert_eq!(pos, v.len());
        Ok(ModelParams {
            causes,
            frailty: FrailtySpec::new(k0, ks)?,
        })
    }

    /// Inverse of [`realize`]: pack evaluatable parameters into the
    /// transformed vector.
    pub fn pack(&self, params: &ModelParams) -> Result<ParameterVector> {
        if params.causes.len() != self.n_events {
            return Err(Error::Validation("event count mismatch".into()));
        }
        let mut v = Vec::with_capacity(self.dim());
        for (j, cause) in params.causes.iter().enumerate() {
            v.push(cause.baseline.lambda.ln());
            v.push(cause.baseline.rho.ln());
            v.push(cause.beta_gene);
            for (idx, def) in self.tvc_defs.iter().enumerate() {
                if def.event != j + 1 {
                    continue;
                }
                let eff = cause
                    .tvc_effects
                    .iter()
                    .find(|(i, _)| *i == idx)
                    .map(|(_, e)| e)
                    .ok_or_else(|| {
                        Error::Validation(format!("cause {} missing TVC {}", j + 1, idx + 1))
                    })?;
                v.push(eff.beta);
                match def.kind {
                    TvcKind::Pe => {}
                    TvcKind::Ed => v.push(eff.eta.ln()),
                    TvcKind::Co => {
                        v.push(eff.eta.ln());
                        v.push(eff.eta0);
                    }
                }
            }
        }
        if self.frailty.shared {
            v.push(params.frailty.k0().ln());
        }
        for &j in &self.frailty.events {
            let k = params.frailty.shape(j).ok_or_else(|| {
                Error::Validation(format!("frailty parameters missing event {j}"))
            })?;
            v.push(k.ln());
        }
        Ok(ParameterVector::new(v))
    }
}

/// Transformed (unconstrained) parameter values in a spec's canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// Build from `(name, value)` pairs; every name of the spec must appear
    /// exactly once.
    pub fn from_named(spec: &ModelSpec, pairs: &[(&str, f64)]) -> Result<Self> {
        let names = spec.param_names();
        let mut values = vec![f64::NAN; names.len()];
        for &(name, value) in pairs {
            let i = names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Validation(format!("unknown parameter `{name}`")))?;
            values[i] = value;
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Validation(format!(
                "parameter `{}` not supplied",
                names[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Evaluatable model parameters: one [`CauseModel`] per event plus the
/// frailty specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub causes: Vec<CauseModel>,
    pub frailty: FrailtySpec,
}

impl ModelParams {
    pub fn n_events(&self) -> usize {
        self.causes.len()
    }
}
