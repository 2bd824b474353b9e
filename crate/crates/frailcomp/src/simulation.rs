//! Ascertained family simulation from the generative model.
//!
//! Three-generation pedigrees: a founder couple, 2-5 second-generation
//! siblings (the proband's generation), and 0-2 children per sibling whose
//! other parent is an unmodelled population spouse. Genotypes follow a
//! dominant model: the proband is a carrier by design, her parents are drawn
//! from the exact posterior given her allele count, and everyone else by
//! Mendelian transmission. Event times come from inverse-transform sampling
//! of the conditional overall survival given the family's frailties, with
//! event types assigned by the cause-specific hazard ratio at the drawn
//! time. A family is retained only if the proband's event occurred before
//! her exam age; men are removed from the output.
//!
//! Every family attempt draws from its own counter-based RNG stream keyed
//! by (seed, attempt index), so generation is reproducible regardless of
//! the worker count.

use crate::error::{Error, Result};
use crate::estimation::{fit, FitOptions, FitResult};
use crate::hazard::TvcKind;
use crate::model::{FrailtyStructure, ModelParams, ModelSpec, ParameterVector, TvcDef};
use crate::parallel;
use crate::pedigree::{Dataset, Family, Individual, ProbandKind};
use crate::penetrance::{penetrance, RiskProfile, Z_95};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

/// Familial dependence level of the study designs (frailty shape of the
/// TVC-bearing event).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dependence {
    /// k1 = e^1.95 (tau ~ 0.07)
    Low,
    /// k1 = e^1.25 (tau ~ 0.13)
    Medium,
    /// k1 = 1 (tau = 0.33)
    High,
}

impl Dependence {
    pub fn label(self) -> &'static str {
        match self {
            Dependence::Low => "low",
            Dependence::Medium => "medium",
            Dependence::High => "high",
        }
    }

    fn log_k1(self) -> f64 {
        match self {
            Dependence::Low => 1.95,
            Dependence::Medium => 1.25,
            Dependence::High => 0.00,
        }
    }
}

/// True parameter sets of the two-event study designs: one TVC on event 1,
/// independent frailties on both events.
pub fn table_truth(kind: TvcKind, dep: Dependence) -> (ModelSpec, ParameterVector) {
    let spec = ModelSpec::new(
        2,
        vec![TvcDef { event: 1, kind }],
        FrailtyStructure { events: vec![1, 2], shared: false },
    )
    .expect("static spec is valid");
    let lk1 = dep.log_k1();
    let values = match kind {
        TvcKind::Pe => vec![
            -4.83, 0.88, 1.95, 0.67, // event 1: log lambda, log rho, beta_gene, beta_tvc
            -4.96, 1.12, 1.19, // event 2
            lk1, 1.06, // log k1, log k2
        ],
        TvcKind::Ed => vec![
            -4.83, 0.83, 1.86, 1.87, -1.28, // + log eta
            -4.96, 1.08, 1.22, lk1, 1.18,
        ],
        TvcKind::Co => vec![
            -4.83, 0.83, 2.08, 1.52, -0.18, 0.21, // + log eta, eta0
            -4.96, 1.07, 1.57, lk1, 1.26,
        ],
    };
    (spec, ParameterVector::new(values))
}

/// Study design for the ascertained-family generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimDesign {
    pub n_families: usize,
    pub spec: ModelSpec,
    pub truth: ParameterVector,
    /// Mutation allele frequency of the dominant model.
    pub allele_freq: f64,
    /// Proband exam-age distribution.
    pub exam_age_mean: f64,
    pub exam_age_sd: f64,
    /// Inclusive sibling-count bounds per generation.
    pub second_gen_size: (u32, u32),
    pub third_gen_size: (u32, u32),
    /// TVC onset-age distribution (all TVCs).
    pub tvc_onset_mean: f64,
    pub tvc_onset_sd: f64,
    /// Upper bracket for event-time root solving; no event past this age.
    pub max_event_age: f64,
    pub seed: u64,
}

impl SimDesign {
    pub fn new(spec: ModelSpec, truth: ParameterVector, n_families: usize, seed: u64) -> Self {
        Self {
            n_families,
            spec,
            truth,
            allele_freq: 0.0021,
            exam_age_mean: 45.0,
            exam_age_sd: 10.0,
            second_gen_size: (2, 5),
            third_gen_size: (0, 2),
            tvc_onset_mean: 40.0,
            tvc_onset_sd: 2.0,
            max_event_age: 130.0,
            seed,
        }
    }

    /// Design preset for a study-table truth column.
    pub fn table(kind: TvcKind, dep: Dependence, n_families: usize, seed: u64) -> Self {
        let (spec, truth) = table_truth(kind, dep);
        Self::new(spec, truth, n_families, seed)
    }

    fn validate(&self) -> Result<()> {
        if self.n_families == 0 {
            return Err(Error::Validation("n_families must be positive".into()));
        }
        if !(self.allele_freq > 0.0 && self.allele_freq < 1.0) {
            return Err(Error::Validation("allele frequency must be in (0, 1)".into()));
        }
        if self.second_gen_size.0 < 1 || self.second_gen_size.0 > self.second_gen_size.1 {
            return Err(Error::Validation("invalid second-generation bounds".into()));
        }
        if self.third_gen_size.0 > self.third_gen_size.1 {
            return Err(Error::Validation("invalid third-generation bounds".into()));
        }
        self.spec.validate()
    }
}

// --- genotype machinery ----------------------------------------------------

/// Hardy–Weinberg allele-count distribution [P(0), P(1), P(2)].
fn hwe_probs(q: f64) -> [f64; 3] {
    [(1.0 - q) * (1.0 - q), 2.0 * q * (1.0 - q), q * q]
}

/// P(child allele count | parent counts) under Mendelian transmission.
fn mendel_child_dist(father: u8, mother: u8) -> [f64; 3] {
    let tf = transmit_prob(father);
    let tm = transmit_prob(mother);
    [
        (1.0 - tf) * (1.0 - tm),
        tf * (1.0 - tm) + (1.0 - tf) * tm,
        tf * tm,
    ]
}

/// Probability a parent with the given allele count passes a mutated allele.
fn transmit_prob(alleles: u8) -> f64 {
    match alleles {
        0 => 0.0,
        1 => 0.5,
        _ => 1.0,
    }
}

fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

/// Joint parent allele counts given the proband's count, enumerated exactly
/// over Hardy–Weinberg founders.
fn sample_parents_given_child<R: Rng>(rng: &mut R, q: f64, child: u8) -> (u8, u8) {
    let hwe = hwe_probs(q);
    let mut probs = [0.0f64; 9];
    for (f, hf) in hwe.iter().enumerate() {
        for (m, hm) in hwe.iter().enumerate() {
            probs[3 * f + m] = hf * hm * mendel_child_dist(f as u8, m as u8)[child as usize];
        }
    }
    let idx = sample_index(rng, &probs);
    ((idx / 3) as u8, (idx % 3) as u8)
}

// --- event-time sampling ----------------------------------------------------

/// Solve `S(t) = w` (equivalently `A(t) = -ln w` with `A` the frailty-scaled
/// total cumulative hazard) on `[lo, hi]` by safeguarded Newton iteration.
fn solve_event_time(
    total_cum: &dyn Fn(f64) -> Result<f64>,
    total_haz: &dyn Fn(f64) -> Result<f64>,
    target: f64,
    mut lo: f64,
    mut hi: f64,
) -> Result<f64> {
    let w = (-target).exp();
    let mut t = 0.5 * (lo + hi);
    for _ in 0..200 {
        let a = total_cum(t)?;
        let g = a - target;
        // |S(t) - w| = w |expm1(-(A - target))|
        if (w * f64::exp_m1(-g)).abs() < 1e-12 {
            return Ok(t);
        }
        if g > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let slope = total_haz(t)?;
        let newton = if slope > 0.0 { t - g / slope } else { f64::NAN };
        t = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-12 * hi.max(1.0) {
            return Ok(t);
        }
    }
    Err(Error::RootFind(format!(
        "no convergence solving S(t) = {w:.3e} on [{lo}, {hi}]"
    )))
}

/// Draw the frailty vector (index `j - 1` for event `j`; 1.0 outside the
/// frailty set).
fn draw_frailties<R: Rng>(rng: &mut R, params: &ModelParams) -> Vec<f64> {
    let fr = &params.frailty;
    let k0 = fr.k0();
    let shared = if k0 > 0.0 {
        Gamma::new(k0, 1.0 / k0).expect("valid gamma").sample(rng)
    } else {
        0.0
    };
    (1..=params.n_events())
        .map(|j| match (fr.shape(j), fr.omega(j)) {
            (Some(k), Some(w)) => {
                let own = Gamma::new(k, 1.0 / w).expect("valid gamma").sample(rng);
                (k0 / w) * shared + own
            }
            _ => 1.0,
        })
        .collect()
}

/// Inverse-transform draw of (event time, event type) given covariates and
/// frailties; `None` when the individual outlives `max_age`.
fn draw_event<R: Rng>(
    rng: &mut R,
    params: &ModelParams,
    genotype: u8,
    tvc_ages: &[Option<f64>],
    frailties: &[f64],
    origin: f64,
    max_age: f64,
) -> Result<Option<(f64, usize)>> {
    let w: f64 = rng.random();
    if w <= 0.0 {
        return Ok(None);
    }
    let target = -w.ln();
    let total_cum = |t: f64| -> Result<f64> {
        let mut a = 0.0;
        for (j, cause) in params.causes.iter().enumerate() {
            a += frailties[j] * cause.cum_hazard(t, genotype, tvc_ages)?;
        }
        Ok(a)
    };
    let total_haz = |t: f64| -> Result<f64> {
        let mut a = 0.0;
        for (j, cause) in params.causes.iter().enumerate() {
            a += frailties[j] * cause.hazard(t, genotype, tvc_ages)?;
        }
        Ok(a)
    };
    if total_cum(max_age)? < target {
        return Ok(None);
    }
    let t = solve_event_time(&total_cum, &total_haz, target, origin, max_age)?;
    // Event type from the cause-specific hazard rates at t.
    let rates: Vec<f64> = params
        .causes
        .iter()
        .enumerate()
        .map(|(j, cause)| Ok(frailties[j] * cause.hazard(t, genotype, tvc_ages)?))
        .collect::<Result<_>>()?;
    let event = sample_index(rng, &rates) + 1;
    Ok(Some((t, event)))
}

// --- family generation -------------------------------------------------------

struct DraftMember {
    ind_id: u64,
    female: bool,
    current_age: f64,
    alleles: u8,
    is_proband: bool,
}

/// Generate one candidate family on its own RNG stream; `None` when the
/// ascertainment condition fails.
fn simulate_family(
    design: &SimDesign,
    params: &ModelParams,
    attempt: u64,
) -> Result<Option<Vec<Individual>>> {
    let mut rng = ChaCha12Rng::seed_from_u64(design.seed);
    rng.set_stream(attempt);
    let origin = design.spec.time_origin;
    let q = design.allele_freq;
    let n_tvc = design.spec.n_tvc();

    let exam_dist = Normal::new(design.exam_age_mean, design.exam_age_sd).expect("valid normal");
    let age_sd = Normal::new(0.0, 1.5).expect("valid normal");
    let onset_dist =
        Normal::new(design.tvc_onset_mean, design.tvc_onset_sd).expect("valid normal");

    // Ages and structure. Exam age is floored just above the hazard origin
    // so the ascertainment probability is defined.
    let exam_age = exam_dist.sample(&mut rng).max(origin + 0.5);
    let n_sibs = rng.random_range(design.second_gen_size.0..=design.second_gen_size.1);

    let mut members: Vec<DraftMember> = Vec::new();
    let mut next_id = 0u64;
    let mut push = |members: &mut Vec<DraftMember>, female, age: f64, alleles, proband| {
        next_id += 1;
        members.push(DraftMember {
            ind_id: next_id,
            female,
            current_age: age.max(1.0),
            alleles,
            is_proband: proband,
        });
        members.len() - 1
    };

    // Proband allele count given she is a carrier: 2 with prob q / (2 - q).
    let proband_alleles = if rng.random::<f64>() < q / (2.0 - q) { 2 } else { 1 };
    let (father_a, mother_a) = sample_parents_given_child(&mut rng, q, proband_alleles);

    // First generation: the founder couple.
    push(&mut members, false, exam_age + 20.0 + age_sd.sample(&mut rng), father_a, false);
    push(&mut members, true, exam_age + 20.0 + age_sd.sample(&mut rng), mother_a, false);

    // Second generation: proband first, then her siblings.
    let mut sib_idx: Vec<usize> = Vec::new();
    sib_idx.push(push(&mut members, true, exam_age, proband_alleles, true));
    for _ in 1..n_sibs {
        let alleles = sample_index(&mut rng, &mendel_child_dist(father_a, mother_a)) as u8;
        let female = rng.random::<f64>() < 0.5;
        let age = exam_age + age_sd.sample(&mut rng);
        sib_idx.push(push(&mut members, female, age, alleles, false));
    }

    // Third generation: children per sibling, spouse drawn from the
    // population and not recorded in the pedigree.
    for &s in &sib_idx {
        let n_children = rng.random_range(design.third_gen_size.0..=design.third_gen_size.1);
        if n_children == 0 {
            continue;
        }
        let spouse = sample_index(&mut rng, &hwe_probs(q)) as u8;
        let parent_age = members[s].current_age;
        let parent_alleles = members[s].alleles;
        for _ in 0..n_children {
            let alleles = sample_index(&mut rng, &mendel_child_dist(parent_alleles, spouse)) as u8;
            let female = rng.random::<f64>() < 0.5;
            let age = parent_age - 20.0 + age_sd.sample(&mut rng);
            push(&mut members, female, age, alleles, false);
        }
    }

    // One frailty vector per family, shared by all members.
    let frailties = draw_frailties(&mut rng, params);

    // Event histories for the women; men only contribute genotype structure.
    let mut out: Vec<Individual> = Vec::new();
    let mut proband_ok = false;
    for m in &members {
        if !m.female {
            continue;
        }
        let genotype = u8::from(m.alleles > 0);
        let tvc_ages: Vec<Option<f64>> = (0..n_tvc)
            .map(|_| {
                let onset = onset_dist.sample(&mut rng).max(1e-3);
                (onset <= m.current_age).then_some(onset)
            })
            .collect();
        let drawn = draw_event(
            &mut rng,
            params,
            genotype,
            &tvc_ages,
            &frailties,
            origin,
            design.max_event_age,
        )?;
        let censor_age = if m.is_proband { exam_age } else { m.current_age };
        let (time, status) = match drawn {
            Some((t, event)) if t < censor_age => (t, event),
            _ => (censor_age, 0),
        };
        if m.is_proband {
            // Retained only when the proband's event precedes her exam age.
            proband_ok = status > 0;
        }
        out.push(Individual {
            fam_id: 0, // assigned on retention
            ind_id: m.ind_id,
            time,
            status,
            genotype,
            gender: 0,
            tvc_ages,
            is_proband: m.is_proband,
            exam_age: m.is_proband.then_some(exam_age),
        });
    }
    Ok(if proband_ok { Some(out) } else { None })
}

/// Generate an ascertained dataset of `design.n_families` families.
pub fn generate(design: &SimDesign) -> Result<Dataset> {
    design.validate()?;
    let params = design.spec.realize(&design.truth)?;
    let target = design.n_families;
    let mut retained: Vec<Vec<Individual>> = Vec::with_capacity(target);
    let mut attempt_base = 0u64;
    let max_attempts = (target as u64) * 1000 + 10_000;
    while retained.len() < target {
        if attempt_base > max_attempts {
            return Err(Error::Validation(format!(
                "ascertainment retention too low: {} families after {attempt_base} attempts",
                retained.len()
            )));
        }
        let block = ((target - retained.len()) * 2 + 16) as u64;
        let attempts: Vec<u64> = (attempt_base..attempt_base + block).collect();
        let drafts = parallel::try_map_collect(&attempts, |&a| simulate_family(design, &params, a))?;
        for draft in drafts.into_iter().flatten() {
            if retained.len() < target {
                retained.push(draft);
            }
        }
        attempt_base += block;
    }
    let families: Vec<Family> = retained
        .into_iter()
        .enumerate()
        .map(|(i, mut members)| {
            let fam_id = (i + 1) as u64;
            for m in &mut members {
                m.fam_id = fam_id;
            }
            let proband = members.iter().position(|m| m.is_proband).expect("proband kept");
            let proband_kind = ProbandKind::Affected(members[proband].status);
            Family { fam_id, members, proband, proband_kind }
        })
        .collect();
    Dataset::from_parts(families, design.spec.n_tvc(), design.spec.n_events)
}

/// Simulate independent individuals with a fixed covariate profile, each
/// with their own frailty draw, censored administratively at `censor_age`.
/// Returns `(time, status)` pairs; used as a Monte Carlo oracle for the
/// penetrance function.
pub fn generate_individuals(
    spec: &ModelSpec,
    truth: &ParameterVector,
    profile: &RiskProfile,
    n: usize,
    censor_age: f64,
    seed: u64,
) -> Result<Vec<(f64, usize)>> {
    let params = spec.realize(truth)?;
    let origin = spec.time_origin;
    let idx: Vec<u64> = (0..n as u64).collect();
    parallel::try_map_collect(&idx, |&i| {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(i);
        let frailties = draw_frailties(&mut rng, &params);
        let drawn = draw_event(
            &mut rng,
            &params,
            profile.genotype,
            &profile.tvc_ages,
            &frailties,
            origin,
            130.0,
        )?;
        Ok(match drawn {
            Some((t, event)) if t < censor_age => (t, event),
            _ => (censor_age, 0),
        })
    })
}

// --- replicate studies --------------------------------------------------------

/// Bias/ESE/ASE/ECP summary of one quantity over replicates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub truth: f64,
    pub bias: f64,
    pub ese: f64,
    pub ase: f64,
    pub ecp: f64,
}

/// Replicate-study report: parameter rows, penetrance rows, failure count.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub replicates_requested: usize,
    pub replicates_used: usize,
    pub failed: usize,
    pub params: Vec<SummaryRow>,
    pub penetrance: Vec<SummaryRow>,
    /// All estimates identical (degenerate ESE guard tripped).
    pub degenerate_ese: bool,
}

impl ReplicateReport {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("quantity,true,bias,ese,ase,ecp\n");
        for r in self.params.iter().chain(&self.penetrance) {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.name, r.truth, r.bias, r.ese, r.ase, r.ecp
            ));
        }
        out
    }
}

/// Penetrance targets evaluated per replicate: age and exposure age of the
/// reporting profiles.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReplicateTargets {
    pub age: f64,
    pub tvc_age: f64,
}

impl Default for ReplicateTargets {
    fn default() -> Self {
        Self { age: 70.0, tvc_age: 35.0 }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn target_profiles(spec: &ModelSpec, targets: ReplicateTargets) -> Vec<(String, RiskProfile, usize)> {
    let mut out = Vec::new();
    let tvc_states: Vec<(String, Vec<Option<f64>>)> = if spec.n_tvc() == 1 {
        vec![
            ("TVC=0".into(), vec![None]),
            ("TVC=1".into(), vec![Some(targets.tvc_age)]),
        ]
    } else {
        vec![("TVC=0".into(), vec![None; spec.n_tvc()])]
    };
    for event in 1..=spec.n_events {
        for genotype in [0u8, 1u8] {
            for (label, ages) in &tvc_states {
                out.push((
                    format!("F{event}({};{label},G={genotype})", targets.age),
                    RiskProfile::new(genotype, ages.clone()),
                    event,
                ));
            }
        }
    }
    out
}

/// Simulate `b` replicates, fit each, and tabulate bias, empirical and
/// average standard errors, and empirical coverage for every parameter and
/// penetrance target. Failed or non-converged fits are excluded and counted.
pub fn replicate_study(
    design: &SimDesign,
    b: usize,
    fit_opts: &FitOptions,
    targets: ReplicateTargets,
) -> Result<ReplicateReport> {
    if b < 2 {
        return Err(Error::Validation("need at least 2 replicates".into()));
    }
    design.validate()?;
    let spec = &design.spec;
    let names = spec.param_names();
    let dim = spec.dim();
    let true_params = spec.realize(&design.truth)?;
    let profiles = target_profiles(spec, targets);
    let pen_truth: Vec<f64> = profiles
        .iter()
        .map(|(_, profile, event)| penetrance(&true_params, profile, *event, targets.age))
        .collect::<Result<_>>()?;

    struct Rep {
        est: Vec<f64>,
        se: Vec<f64>,
        pen: Vec<f64>,
        pen_se: Vec<f64>,
    }

    let reps: Vec<Option<Rep>> = parallel::map_range(b, |r| {
        let mut sub = design.clone();
        sub.seed = splitmix64(design.seed ^ (r as u64).wrapping_mul(0x517C_C1B7_2722_0A95));
        let run = || -> Result<Rep> {
            let ds = generate(&sub)?;
            let fitted = fit(&ds, spec, None, fit_opts)?;
            if !fitted.convergence.converged {
                return Err(Error::Validation("replicate fit did not converge".into()));
            }
            let cov = fitted.cov_matrix();
            let params_hat = spec.realize(&fitted.theta)?;
            let mut pen = Vec::with_capacity(profiles.len());
            let mut pen_se = Vec::with_capacity(profiles.len());
            for (_, profile, event) in &profiles {
                pen.push(penetrance(&params_hat, profile, *event, targets.age)?);
                let grad = {
                    let mut g = Vec::with_capacity(dim);
                    for i in 0..dim {
                        let h = crate::likelihood::fd_step(fitted.theta.values()[i]);
                        let mut up = fitted.theta.clone();
                        up.values_mut()[i] += h;
                        let mut dn = fitted.theta.clone();
                        dn.values_mut()[i] -= h;
                        g.push(
                            (penetrance(&spec.realize(&up)?, profile, *event, targets.age)?
                                - penetrance(&spec.realize(&dn)?, profile, *event, targets.age)?)
                                / (2.0 * h),
                        );
                    }
                    g
                };
                let gv = nalgebra::DVector::from_column_slice(&grad);
                pen_se.push((gv.transpose() * &cov * gv)[(0, 0)].max(0.0).sqrt());
            }
            Ok(Rep {
                est: fitted.theta.values().to_vec(),
                se: fitted.standard_errors(),
                pen,
                pen_se,
            })
        };
        match run() {
            Ok(rep) => Some(rep),
            Err(e) => {
                log::warn!("replicate {r} excluded: {e}");
                None
            }
        }
    });

    let ok: Vec<&Rep> = reps.iter().flatten().collect();
    let used = ok.len();
    let failed = b - used;
    if used == 0 {
        return Err(Error::Validation("every replicate failed".into()));
    }

    let summarize = |truth: f64, ests: &[f64], ses: &[f64], name: &str| {
        let n = ests.len() as f64;
        let mean = ests.iter().sum::<f64>() / n;
        let ese = if ests.len() < 2 {
            0.0
        } else {
            (ests.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        let ase = ses.iter().sum::<f64>() / n;
        let covered = ests
            .iter()
            .zip(ses)
            .filter(|(e, s)| (**e - truth).abs() <= Z_95 * **s)
            .count();
        SummaryRow {
            name: name.to_string(),
            truth,
            bias: mean - truth,
            ese,
            ase,
            ecp: covered as f64 / n,
        }
    };

    let mut degenerate = false;
    let mut params = Vec::with_capacity(dim);
    for i in 0..dim {
        let ests: Vec<f64> = ok.iter().map(|r| r.est[i]).collect();
        let ses: Vec<f64> = ok.iter().map(|r| r.se[i]).collect();
        if ests.windows(2).all(|w| w[0] == w[1]) && used > 1 {
            degenerate = true;
        }
        params.push(summarize(design.truth.values()[i], &ests, &ses, &names[i]));
    }
    if degenerate {
        log::warn!("all replicate estimates identical; empirical SE reported as 0");
    }
    let mut pen_rows = Vec::with_capacity(profiles.len());
    for (t, (label, _, _)) in profiles.iter().enumerate() {
        let ests: Vec<f64> = ok.iter().map(|r| r.pen[t]).collect();
        let ses: Vec<f64> = ok.iter().map(|r| r.pen_se[t]).collect();
        pen_rows.push(summarize(pen_truth[t], &ests, &ses, label));
    }
    Ok(ReplicateReport {
        replicates_requested: b,
        replicates_used: used,
        failed,
        params,
        penetrance: pen_rows,
        degenerate_ese: degenerate,
    })
}

/// Fit the PE, ED and CO variants of a base model and rank them by AIC.
pub fn select_tvc_model(
    ds: &Dataset,
    base_spec: &ModelSpec,
    fit_opts: &FitOptions,
) -> Result<(Vec<crate::estimation::ComparisonRow>, Vec<(String, FitResult)>)> {
    let mut fits: Vec<(String, FitResult)> = Vec::new();
    for kind in [TvcKind::Pe, TvcKind::Ed, TvcKind::Co] {
        let mut spec = base_spec.clone();
        for def in &mut spec.tvc_defs {
            def.kind = kind;
        }
        let fitted = fit(ds, &spec, None, fit_opts)?;
        fits.push((kind.label().to_string(), fitted));
    }
    let refs: Vec<(String, &FitResult)> =
        fits.iter().map(|(l, f)| (l.clone(), f)).collect();
    let table = crate::estimation::compare(&refs)?;
    Ok((table, fits))
}
