//! Run configuration: one JSON document, overridable by CLI flags.
//!
//! Every output embeds the fully resolved configuration and its hash so a
//! run is reproducible from the header alone.

use frailcomp::diagnostics::PosteriorHazard;
use frailcomp::error::{Error, Result};
use frailcomp::estimation::FitOptions;
use frailcomp::hazard::{TvcKind, DEFAULT_TIME_ORIGIN};
use frailcomp::model::{FrailtyStructure, ModelSpec, ParameterVector, TvcDef};
use frailcomp::penetrance::CiScale;
use frailcomp::simulation::{Dependence, SimDesign};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// 0 = all cores, 1 = sequential, N = pool of N workers.
    pub threads: usize,
    pub model: ModelConfig,
    pub simulate: SimulateConfig,
    pub fit: FitConfig,
    pub penetrance: PenetranceConfig,
    pub residuals: ResidualsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            threads: 0,
            model: ModelConfig::default(),
            simulate: SimulateConfig::default(),
            fit: FitConfig::default(),
            penetrance: PenetranceConfig::default(),
            residuals: ResidualsConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n_events: usize,
    pub tvc: Vec<TvcDef>,
    pub frailty: FrailtyStructure,
    pub time_origin: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_events: 2,
            tvc: vec![TvcDef { event: 1, kind: TvcKind::Pe }],
            frailty: FrailtyStructure { events: vec![1, 2], shared: false },
            time_origin: DEFAULT_TIME_ORIGIN,
        }
    }
}

impl ModelConfig {
    pub fn to_spec(&self) -> Result<ModelSpec> {
        let mut spec = ModelSpec::new(self.n_events, self.tvc.clone(), self.frailty.clone())?;
        spec.time_origin = self.time_origin;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub n_families: usize,
    pub tvc_model: TvcKind,
    pub dependence: Dependence,
    pub allele_freq: f64,
    pub exam_age_mean: f64,
    pub exam_age_sd: f64,
    pub tvc_onset_mean: f64,
    pub tvc_onset_sd: f64,
    /// Named overrides of the study-design true parameter values.
    pub truth: BTreeMap<String, f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            n_families: 500,
            tvc_model: TvcKind::Pe,
            dependence: Dependence::Medium,
            allele_freq: 0.0021,
            exam_age_mean: 45.0,
            exam_age_sd: 10.0,
            tvc_onset_mean: 40.0,
            tvc_onset_sd: 2.0,
            truth: BTreeMap::new(),
        }
    }
}

impl SimulateConfig {
    pub fn to_design(&self, seed: u64) -> Result<SimDesign> {
        let mut design = SimDesign::table(self.tvc_model, self.dependence, self.n_families, seed);
        design.allele_freq = self.allele_freq;
        design.exam_age_mean = self.exam_age_mean;
        design.exam_age_sd = self.exam_age_sd;
        design.tvc_onset_mean = self.tvc_onset_mean;
        design.tvc_onset_sd = self.tvc_onset_sd;
        if !self.truth.is_empty() {
            let names = design.spec.param_names();
            let mut values = design.truth.values().to_vec();
            for (name, value) in &self.truth {
                let i = names.iter().position(|n| n == name).ok_or_else(|| {
                    Error::Config(format!("unknown truth parameter `{name}`"))
                })?;
                values[i] = *value;
            }
            design.truth = ParameterVector::new(values);
        }
        Ok(design)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub rel_obj_tol: f64,
    pub restarts: usize,
    /// Full named starting vector; empty = moment-based default.
    pub init: BTreeMap<String, f64>,
    /// Proband event codes treated as unaffected-at-exam for the
    /// ascertainment correction.
    pub unaffected_proband_statuses: Vec<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        let o = FitOptions::default();
        Self {
            max_iter: o.max_iter,
            grad_tol: o.grad_tol,
            rel_obj_tol: o.rel_obj_tol,
            restarts: o.restarts,
            init: BTreeMap::new(),
            unaffected_proband_statuses: Vec::new(),
        }
    }
}

impl FitConfig {
    pub fn options(&self) -> FitOptions {
        FitOptions {
            max_iter: self.max_iter,
            grad_tol: self.grad_tol,
            rel_obj_tol: self.rel_obj_tol,
            restarts: self.restarts,
        }
    }

    pub fn init_vector(&self, spec: &ModelSpec) -> Result<Option<ParameterVector>> {
        if self.init.is_empty() {
            return Ok(None);
        }
        let pairs: Vec<(&str, f64)> =
            self.init.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        Ok(Some(ParameterVector::from_named(spec, &pairs)?))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenetranceConfig {
    pub genotype: u8,
    /// Change age per TVC; `null` entries mean never exposed.
    pub tvc_ages: Vec<Option<f64>>,
    pub age_from: f64,
    pub age_to: f64,
    pub age_step: f64,
    pub ci_scale: CiScale,
}

impl Default for PenetranceConfig {
    fn default() -> Self {
        Self {
            genotype: 1,
            tvc_ages: Vec::new(),
            age_from: 20.0,
            age_to: 80.0,
            age_step: 5.0,
            ci_scale: CiScale::Plain,
        }
    }
}

impl PenetranceConfig {
    pub fn ages(&self) -> Result<Vec<f64>> {
        if !(self.age_step > 0.0 && self.age_to >= self.age_from) {
            return Err(Error::Config("invalid age grid".into()));
        }
        let mut ages = Vec::new();
        let mut a = self.age_from;
        while a <= self.age_to + 1e-9 {
            ages.push(a);
            a += self.age_step;
        }
        Ok(ages)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualsConfig {
    pub posterior_hazard: PosteriorHazard,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
            }
        }
    }

    /// Canonical single-line JSON of the resolved configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// FNV-1a hash of the canonical configuration, 16 hex digits.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.canonical_json().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}
