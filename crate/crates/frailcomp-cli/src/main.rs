//! Command-line front end: simulate ascertained family data, fit the
//! competing-risks frailty model, produce penetrance curves, residual
//! diagnostics and TVC model selection.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data or numeric error,
//! 4 fit non-convergence.

mod config;

use clap::{Args, Parser, Subcommand};
use config::RunConfig;
use frailcomp::diagnostics::martingale_residuals;
use frailcomp::error::Error;
use frailcomp::estimation::{comparison_to_csv, fit, FitResult};
use frailcomp::hazard::TvcKind;
use frailcomp::model::ModelSpec;
use frailcomp::pedigree::{load_pedigree, summarize, to_csv_string, PedigreeSchema};
use frailcomp::penetrance::{penetrance_curve, RiskProfile};
use frailcomp::simulation::{generate, select_tvc_model, Dependence};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "frailcomp", version, about = "Correlated frailty competing-risks family models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads: 0 = all cores, 1 = sequential.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an ascertained pedigree CSV from a study design.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Number of retained families.
        #[arg(long)]
        n_families: Option<usize>,
        /// TVC effect shape of the generating truth.
        #[arg(long, value_parser = parse_kind)]
        tvc_model: Option<TvcKind>,
        /// Familial dependence level of the generating truth.
        #[arg(long, value_parser = parse_dependence)]
        dependence: Option<Dependence>,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the model to a pedigree CSV.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// TVC effect shape of the fitted model.
        #[arg(long, value_parser = parse_kind)]
        tvc_model: Option<TvcKind>,
        /// Fit report JSON.
        #[arg(long)]
        out_json: Option<PathBuf>,
        /// Parameter table CSV.
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// Penetrance curve with delta-method intervals from a fit report.
    Penetrance {
        #[command(flatten)]
        common: Common,
        /// Fit report JSON produced by `fit`.
        #[arg(long)]
        fit: PathBuf,
        /// Profile genotype (0/1).
        #[arg(long)]
        genotype: Option<u8>,
        /// Exposure age of TVC 1 (never exposed when omitted).
        #[arg(long)]
        tvc_age: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Martingale residuals and posterior frailties at the fitted model.
    Residuals {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Individual-level residual CSV (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Family-level residual CSV.
        #[arg(long)]
        out_family: Option<PathBuf>,
    },
    /// Fit PE, ED and CO variants and rank them by AIC.
    Select {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Event, genotype and TVC uptake counts of a pedigree CSV.
    Summarize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_kind(s: &str) -> Result<TvcKind, String> {
    match s.to_ascii_lowercase().as_str() {
        "pe" => Ok(TvcKind::Pe),
        "ed" => Ok(TvcKind::Ed),
        "co" => Ok(TvcKind::Co),
        other => Err(format!("unknown TVC model `{other}` (pe, ed, co)")),
    }
}

fn parse_dependence(s: &str) -> Result<Dependence, String> {
    match s.to_ascii_lowercase().as_str() {
        "low" => Ok(Dependence::Low),
        "medium" => Ok(Dependence::Medium),
        "high" => Ok(Dependence::High),
        other => Err(format!("unknown dependence `{other}` (low, medium, high)")),
    }
}

/// Fit report written by `fit` and consumed by `penetrance`/`residuals`.
#[derive(Serialize, Deserialize)]
struct FitReport {
    provenance: Provenance,
    model: ModelSpec,
    fit: FitResult,
    parameters: Vec<ParameterRow>,
}

#[derive(Serialize, Deserialize)]
struct Provenance {
    tool: String,
    version: String,
    config_hash: String,
    config: RunConfig,
}

#[derive(Serialize, Deserialize)]
struct ParameterRow {
    name: String,
    estimate: f64,
    se: f64,
    p_value: f64,
}

fn provenance_header(cfg: &RunConfig) -> String {
    format!(
        "# frailcomp {VERSION} {}\n# config {}\n",
        cfg.hash(),
        cfg.canonical_json()
    )
}

fn emit(path: Option<&Path>, content: &str) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, content).map_err(Error::from),
        None => std::io::stdout()
            .write_all(content.as_bytes())
            .map_err(Error::from),
    }
}

fn resolved_config(common: &Common) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = common.threads {
        cfg.threads = threads;
    }
    frailcomp::parallel::configure_threads(cfg.threads);
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Simulate { common, n_families, tvc_model, dependence, out } => {
            let mut cfg = resolved_config(&common)?;
            if let Some(n) = n_families {
                cfg.simulate.n_families = n;
            }
            if let Some(k) = tvc_model {
                cfg.simulate.tvc_model = k;
            }
            if let Some(d) = dependence {
                cfg.simulate.dependence = d;
            }
            let design = cfg.simulate.to_design(cfg.seed)?;
            let ds = generate(&design)?;
            let content = format!("{}{}", provenance_header(&cfg), to_csv_string(&ds));
            emit(out.as_deref(), &content)?;
            Ok(true)
        }
        Command::Fit { common, input, tvc_model, out_json, out_csv } => {
            let mut cfg = resolved_config(&common)?;
            if let Some(k) = tvc_model {
                for def in &mut cfg.model.tvc {
                    def.kind = k;
                }
            }
            let spec = cfg.model.to_spec()?;
            let mut ds = load_pedigree(&input, &PedigreeSchema::new(spec.n_events))?;
            if !cfg.fit.unaffected_proband_statuses.is_empty() {
                ds.reclassify_probands_as_unaffected(&cfg.fit.unaffected_proband_statuses);
            }
            let init = cfg.fit.init_vector(&spec)?;
            let fitted = fit(&ds, &spec, init, &cfg.fit.options())?;
            let converged = fitted.convergence.converged;
            let ses = fitted.standard_errors();
            let ps = fitted.wald_p_values();
            let parameters = fitted
                .param_names
                .iter()
                .enumerate()
                .map(|(i, name)| ParameterRow {
                    name: name.clone(),
                    estimate: fitted.theta.values()[i],
                    se: ses[i],
                    p_value: ps[i],
                })
                .collect();
            let csv = format!("{}{}", provenance_header(&cfg), fitted.to_csv_string());
            let report = FitReport {
                provenance: Provenance {
                    tool: "frailcomp".into(),
                    version: VERSION.into(),
                    config_hash: cfg.hash(),
                    config: cfg,
                },
                model: spec,
                fit: fitted,
                parameters,
            };
            let json = serde_json::to_string_pretty(&report)
                .map_err(|e| Error::Validation(e.to_string()))?;
            match (out_json.as_deref(), out_csv.as_deref()) {
                (None, None) => emit(None, &json)?,
                (j, c) => {
                    if let Some(p) = j {
                        emit(Some(p), &json)?;
                    }
                    if let Some(p) = c {
                        emit(Some(p), &csv)?;
                    }
                }
            }
            Ok(converged)
        }
        Command::Penetrance { common, fit, genotype, tvc_age, out } => {
            let mut cfg = resolved_config(&common)?;
            if let Some(g) = genotype {
                cfg.penetrance.genotype = g;
            }
            let report: FitReport = serde_json::from_str(&std::fs::read_to_string(&fit)?)
                .map_err(|e| Error::Validation(format!("fit report: {e}")))?;
            let spec = report.model;
            let mut tvc_ages = cfg.penetrance.tvc_ages.clone();
            tvc_ages.resize(spec.n_tvc(), None);
            if let Some(age) = tvc_age {
                if spec.n_tvc() == 0 {
                    return Err(Error::Config("model has no TVC".into()));
                }
                tvc_ages[0] = Some(age);
            }
            let profile = RiskProfile::new(cfg.penetrance.genotype, tvc_ages);
            let ages = cfg.penetrance.ages()?;
            let curves = penetrance_curve(
                &spec,
                &report.fit.theta,
                &report.fit.cov_matrix(),
                &profile,
                &ages,
                cfg.penetrance.ci_scale,
            )?;
            let mut body = String::from("age,event,estimate,se,lo95,hi95\n");
            for age_i in 0..ages.len() {
                for c in &curves {
                    let p = &c.points[age_i];
                    body.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        p.age, c.event, p.estimate, p.se, p.lo95, p.hi95
                    ));
                }
            }
            emit(out.as_deref(), &format!("{}{}", provenance_header(&cfg), body))?;
            Ok(true)
        }
        Command::Residuals { common, fit, input, out, out_family } => {
            let cfg = resolved_config(&common)?;
            let report: FitReport = serde_json::from_str(&std::fs::read_to_string(&fit)?)
                .map_err(|e| Error::Validation(format!("fit report: {e}")))?;
            let spec = report.model;
            let mut ds = load_pedigree(&input, &PedigreeSchema::new(spec.n_events))?;
            if !cfg.fit.unaffected_proband_statuses.is_empty() {
                ds.reclassify_probands_as_unaffected(&cfg.fit.unaffected_proband_statuses);
            }
            let table = martingale_residuals(
                &spec,
                &report.fit.theta,
                &ds,
                cfg.residuals.posterior_hazard,
            )?;
            emit(
                out.as_deref(),
                &format!("{}{}", provenance_header(&cfg), table.individual_csv()),
            )?;
            if let Some(p) = out_family.as_deref() {
                emit(Some(p), &format!("{}{}", provenance_header(&cfg), table.family_csv()))?;
            }
            Ok(true)
        }
        Command::Select { common, input, out } => {
            let cfg = resolved_config(&common)?;
            let spec = cfg.model.to_spec()?;
            let mut ds = load_pedigree(&input, &PedigreeSchema::new(spec.n_events))?;
            if !cfg.fit.unaffected_proband_statuses.is_empty() {
                ds.reclassify_probands_as_unaffected(&cfg.fit.unaffected_proband_statuses);
            }
            let (table, _fits) = select_tvc_model(&ds, &spec, &cfg.fit.options())?;
            let content = format!("{}{}", provenance_header(&cfg), comparison_to_csv(&table));
            emit(out.as_deref(), &content)?;
            log::info!("best TVC model by AIC: {}", table[0].label);
            Ok(true)
        }
        Command::Summarize { common, input, out } => {
            let cfg = resolved_config(&common)?;
            // J is not needed for counting; accept any plausible status code.
            let ds = load_pedigree(&input, &PedigreeSchema::new(64))?;
            let counts = summarize(&ds);
            // Trim the per-status table to codes actually present.
            let mut body = String::from("metric,event,genotype,count\n");
            body.push_str(&format!("families,,,{}\n", counts.n_families));
            body.push_str(&format!("individuals,,,{}\n", counts.n_individuals));
            let max_status = ds
                .families
                .iter()
                .flat_map(|f| f.members.iter().map(|m| m.status))
                .max()
                .unwrap_or(0);
            for j in 0..=max_status {
                body.push_str(&format!("status,{j},,{}\n", counts.events[j]));
            }
            for g in 0..2usize {
                for j in 0..=max_status {
                    body.push_str(&format!("status,{j},{g},{}\n", counts.by_genotype[g][j]));
                }
            }
            for (k, n) in counts.tvc_uptake.iter().enumerate() {
                body.push_str(&format!("tvc_uptake,tvc{},,{n}\n", k + 1));
            }
            emit(out.as_deref(), &format!("{}{}", provenance_header(&cfg), body))?;
            Ok(true)
        }
    }
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!(
                "{}",
                serde_json::json!({"error": {"kind": "non_convergence",
                    "message": "fit did not converge; outputs were still written"}})
            );
            ExitCode::from(4)
        }
        Err(e) => {
            let kind = match e {
                Error::Config(_) => "config",
                Error::Io(_) | Error::Parse { .. } => "data",
                Error::Validation(_) => "validation",
                _ => "numeric",
            };
            eprintln!(
                "{}",
                serde_json::json!({"error": {"kind": kind, "message": e.to_string()}})
            );
            ExitCode::from(exit_code_for(&e))
        }
    }
}
