//! Maximum-likelihood fitting, robust sandwich covariance, AIC and
//! likelihood-ratio tests.
//!
//! The corrected log likelihood is maximized by a quasi-Newton (BFGS)
//! iteration with backtracking line search on the unconstrained parameter
//! scale, with finite-difference gradients. The covariance of the estimate
//! is the robust sandwich `I_o^-1 J I_o^-1`, with `I_o` the observed
//! information (central-difference Hessian of the corrected log likelihood)
//! and `J` the outer product of per-family scores.

use crate::error::{Error, Result};
use crate::likelihood::{all_family_scores, fd_step, total_log_lik};
use crate::model::{ModelSpec, ParameterVector};
use crate::pedigree::Dataset;
use crate::penetrance::Z_95;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};
use statrs::function::gamma::ln_gamma;

/// Optimizer settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence: gradient infinity norm below this...
    pub grad_tol: f64,
    /// ...and relative objective change below this.
    pub rel_obj_tol: f64,
    /// Jittered restarts on non-convergence.
    pub restarts: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-5,
            rel_obj_tol: 1e-9,
            restarts: 3,
        }
    }
}

/// Optimizer termination report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: f64,
    pub rel_obj_change: f64,
    pub restarts_used: usize,
}

/// A fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub param_names: Vec<String>,
    pub theta: ParameterVector,
    /// Robust sandwich covariance (row-major, dim x dim).
    pub cov: Vec<Vec<f64>>,
    pub loglik: f64,
    pub aic: f64,
    pub n_families: usize,
    pub convergence: Convergence,
    /// Digest of the dataset the model was fitted on.
    pub dataset_digest: u64,
}

impl FitResult {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn cov_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.cov[i][j])
    }

    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.cov[i][i].max(0.0).sqrt()).collect()
    }

    /// Two-sided Wald p-values against zero.
    pub fn wald_p_values(&self) -> Vec<f64> {
        let normal = Normal::standard();
        self.theta
            .values()
            .iter()
            .zip(self.standard_errors())
            .map(|(est, se)| {
                if se <= 0.0 {
                    return f64::NAN;
                }
                2.0 * (1.0 - normal.cdf((est / se).abs()))
            })
            .collect()
    }

    /// `estimate,se,p` rows in parameter order.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("parameter,estimate,se,p_value\n");
        let ses = self.standard_errors();
        let ps = self.wald_p_values();
        for i in 0..self.dim() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.param_names[i],
                self.theta.values()[i],
                ses[i],
                ps[i]
            ));
        }
        out
    }
}

fn to_theta(x: &DVector<f64>) -> ParameterVector {
    ParameterVector::new(x.iter().copied().collect())
}

struct BfgsOutcome {
    x: DVector<f64>,
    f: f64,
    grad_norm: f64,
    iterations: usize,
    rel_change: f64,
    converged: bool,
}

fn central_gradient<F>(f: &F, x: &DVector<f64>) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let mut g = DVector::zeros(x.len());
    for i in 0..x.len() {
        let h = fd_step(x[i]);
        let mut up = x.clone();
        up[i] += h;
        let mut dn = x.clone();
        dn[i] -= h;
        g[i] = (f(&up)? - f(&dn)?) / (2.0 * h);
    }
    Ok(g)
}

/// Minimize `f` with BFGS and a backtracking Armijo line search.
fn bfgs<F>(f: &F, x0: DVector<f64>, opts: &FitOptions) -> Result<BfgsOutcome>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    const ARMIJO_C1: f64 = 1e-4;
    let n = x0.len();
    let mut x = x0;
    let mut fx = f(&x)?;
    if !fx.is_finite() {
        return Err(Error::NonFinite { context: "objective at start".into() });
    }
    let mut g = central_gradient(f, &x)?;
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut first_update = true;
    let mut rel_change = 0.0;

    for iter in 0..=opts.max_iter {
        let grad_norm = g.amax();
        if grad_norm < opts.grad_tol && rel_change <= opts.rel_obj_tol {
            return Ok(BfgsOutcome {
                x,
                f: fx,
                grad_norm,
                iterations: iter,
                rel_change,
                converged: true,
            });
        }
        if iter == opts.max_iter {
            break;
        }

        let mut dir = -(&h_inv * &g);
        if dir.dot(&g) >= 0.0 {
            // Lost positive definiteness; restart from steepest descent.
            h_inv = DMatrix::identity(n, n);
            first_update = true;
            dir = -g.clone();
        }
        let slope = dir.dot(&g);

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &x + alpha * &dir;
            match f(&cand) {
                Ok(fc) if fc.is_finite() && fc <= fx + ARMIJO_C1 * alpha * slope => {
                    accepted = Some((cand, fc));
                    break;
                }
                _ => alpha *= 0.5,
            }
        }
        let Some((x_new, f_new)) = accepted else {
            // No acceptable step even at tiny alpha: report where we stand.
            return Ok(BfgsOutcome {
                x,
                f: fx,
                grad_norm,
                iterations: iter,
                rel_change,
                converged: grad_norm < opts.grad_tol,
            });
        };

        let g_new = central_gradient(f, &x_new)?;
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if first_update {
                let yy = y.dot(&y);
                if yy > 0.0 {
                    h_inv *= sy / yy;
                }
                first_update = false;
            }
            // Sherman–Morrison BFGS update of the inverse Hessian.
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            let ss = &s * s.transpose();
            let hys = &hy * s.transpose();
            h_inv = h_inv - (&hys + hys.transpose()) * rho + ss * (rho * rho * yhy + rho);
        }
        rel_change = (fx - f_new).abs() / (f_new.abs() + 1.0);
        x = x_new;
        fx = f_new;
        g = g_new;
    }
    let grad_norm = g.amax();
    Ok(BfgsOutcome {
        x,
        f: fx,
        grad_norm,
        iterations: opts.max_iter,
        rel_change,
        converged: false,
    })
}

/// Moment-style starting values: Weibull baselines from event-age moments,
/// coefficients at zero, frailty shapes at 2, decay rates at 1.
pub fn default_init(ds: &Dataset, spec: &ModelSpec) -> ParameterVector {
    let origin = spec.time_origin;
    let mut values = Vec::with_capacity(spec.dim());
    let mut baseline: Vec<(f64, f64)> = Vec::new();
    for j in 1..=spec.n_events {
        let ages: Vec<f64> = ds
            .families
            .iter()
            .flat_map(|f| f.members.iter())
            .filter(|m| m.status == j && m.time > origin)
            .map(|m| m.time - origin)
            .collect();
        baseline.push(weibull_moment_init(&ages, ds, origin, j));
    }
    for name in spec.param_names() {
        let v = if let Some(rest) = name.strip_prefix("log_lambda") {
            let j: usize = rest.parse().unwrap();
            baseline[j - 1].0.ln()
        } else if let Some(rest) = name.strip_prefix("log_rho") {
            let j: usize = rest.parse().unwrap();
            baseline[j - 1].1.ln()
        } else if name.starts_with("log_k") {
            2.0f64.ln()
        } else if name.starts_with("log_eta") {
            0.0
        } else {
            0.0 // beta and eta0 coefficients
        };
        values.push(v);
    }
    ParameterVector::new(values)
}

/// Weibull (lambda, rho) from the mean/CV of observed event risk-times;
/// falls back to an exponential matched to the crude event rate.
fn weibull_moment_init(ages: &[f64], ds: &Dataset, origin: f64, event: usize) -> (f64, f64) {
    let crude = || {
        let exposure: f64 = ds
            .families
            .iter()
            .flat_map(|f| f.members.iter())
            .map(|m| (m.time - origin).max(0.0))
            .sum();
        let events = ds.total_events(event).max(1) as f64;
        ((events / exposure.max(1.0)).max(1e-6), 1.0)
    };
    if ages.len() < 5 {
        return crude();
    }
    let n = ages.len() as f64;
    let mean = ages.iter().sum::<f64>() / n;
    let var = ages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if mean <= 0.0 || var <= 0.0 {
        return crude();
    }
    let cv2 = var / (mean * mean);
    // Solve Gamma(1 + 2/rho) / Gamma(1 + 1/rho)^2 - 1 = cv^2 by bisection.
    let f = |rho: f64| {
        (ln_gamma(1.0 + 2.0 / rho) - 2.0 * ln_gamma(1.0 + 1.0 / rho)).exp() - 1.0 - cv2
    };
    let (mut lo, mut hi) = (0.2, 20.0);
    if f(lo) < 0.0 || f(hi) > 0.0 {
        return crude();
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rho = 0.5 * (lo + hi);
    let lambda = (ln_gamma(1.0 + 1.0 / rho)).exp() / mean;
    (lambda, rho)
}

/// Maximize the corrected log likelihood.
pub fn fit(
    ds: &Dataset,
    spec: &ModelSpec,
    init: Option<ParameterVector>,
    opts: &FitOptions,
) -> Result<FitResult> {
    spec.validate()?;
    if ds.j_events != spec.n_events {
        return Err(Error::Validation(format!(
            "dataset has J = {}, model J = {}",
            ds.j_events, spec.n_events
        )));
    }
    if ds.n_tvc < spec.n_tvc() {
        return Err(Error::Validation(format!(
            "dataset has {} TVC columns, model needs {}",
            ds.n_tvc,
            spec.n_tvc()
        )));
    }
    for &j in &spec.frailty.events {
        if ds.total_events(j) == 0 {
            return Err(Error::Validation(format!(
                "frailty shape for event {j} is unidentifiable: no observed events"
            )));
        }
    }
    let init = init.unwrap_or_else(|| default_init(ds, spec));
    if init.len() != spec.dim() {
        return Err(Error::Validation(format!(
            "initial vector has {} entries, model needs {}",
            init.len(),
            spec.dim()
        )));
    }
    let objective = |x: &DVector<f64>| -> Result<f64> {
        Ok(-total_log_lik(spec, &to_theta(x), ds)?)
    };
    let x0 = DVector::from_column_slice(init.values());
    if objective(&x0).is_err() {
        return Err(Error::Validation(
            "objective is not finite at the initial parameters; supply a rescaled init".into(),
        ));
    }

    let mut best: Option<BfgsOutcome> = None;
    let mut restarts_used = 0;
    let mut rng = ChaCha12Rng::seed_from_u64(0x6672_6169);
    for attempt in 0..=opts.restarts {
        let start = if attempt == 0 {
            x0.clone()
        } else {
            restarts_used += 1;
            DVector::from_fn(x0.len(), |i, _| x0[i] + rng.random_range(-0.25..0.25))
        };
        match bfgs(&objective, start, opts) {
            Ok(out) => {
                let better = best
                    .as_ref()
                    .map(|b| out.f < b.f || (out.converged && !b.converged))
                    .unwrap_or(true);
                if better {
                    best = Some(out);
                }
            }
            Err(e) => {
                if attempt == opts.restarts && best.is_none() {
                    return Err(e);
                }
            }
        }
        if best.as_ref().is_some_and(|b| b.converged) {
            break;
        }
    }
    let out = best.expect("at least one optimizer attempt ran");
    if !out.converged {
        log::warn!(
            "fit did not converge: gradient norm {:.3e} after {} iterations",
            out.grad_norm,
            out.iterations
        );
    }
    let theta = to_theta(&out.x);
    let cov = sandwich_cov(spec, &theta, ds)?;
    let loglik = -out.f;
    let dim = spec.dim();
    Ok(FitResult {
        param_names: spec.param_names(),
        theta,
        cov: (0..dim)
            .map(|i| (0..dim).map(|j| cov[(i, j)]).collect())
            .collect(),
        loglik,
        aic: -2.0 * loglik + 2.0 * dim as f64,
        n_families: ds.n_families(),
        convergence: Convergence {
            converged: out.converged,
            iterations: out.iterations,
            grad_norm: out.grad_norm,
            rel_obj_change: out.rel_change,
            restarts_used,
        },
        dataset_digest: ds.digest(),
    })
}

/// Central-difference Hessian with per-coordinate steps
/// `eps^(1/4) max(1, |x_i|)`.
pub(crate) fn central_hessian<F>(f: &F, x: &[f64]) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x.len();
    let step: Vec<f64> = x
        .iter()
        .map(|&v| f64::EPSILON.powf(0.25) * v.abs().max(1.0))
        .collect();
    let f0 = f(x)?;
    let mut hess = DMatrix::zeros(n, n);
    let shifted = |deltas: &[(usize, f64)]| -> Result<f64> {
        let mut y = x.to_vec();
        for &(i, d) in deltas {
            y[i] += d;
        }
        f(&y)
    };
    for i in 0..n {
        let hi = step[i];
        let up = shifted(&[(i, hi)])?;
        let dn = shifted(&[(i, -hi)])?;
        hess[(i, i)] = (up - 2.0 * f0 + dn) / (hi * hi);
        for j in (i + 1)..n {
            let hj = step[j];
            let pp = shifted(&[(i, hi), (j, hj)])?;
            let pm = shifted(&[(i, hi), (j, -hj)])?;
            let mp = shifted(&[(i, -hi), (j, hj)])?;
            let mm = shifted(&[(i, -hi), (j, -hj)])?;
            let v = (pp - pm - mp + mm) / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// Invert the observed information via its eigendecomposition, erroring on
/// near-null directions.
fn invert_information(info: &DMatrix<f64>, names: &[String]) -> Result<DMatrix<f64>> {
    let sym = (info + info.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max_abs = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = max_abs.max(1e-300) * 1e-10;
    let mut bad = Vec::new();
    for (i, &v) in eig.eigenvalues.iter().enumerate() {
        if v.abs() < tol {
            let col = eig.eigenvectors.column(i);
            let mut loadings: Vec<(f64, &str)> = names
                .iter()
                .enumerate()
                .map(|(k, n)| (col[k].abs(), n.as_str()))
                .collect();
            loadings.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            let top: Vec<&str> = loadings.iter().take(3).map(|&(_, n)| n).collect();
            bad.push(format!("eigenvalue {v:.3e} along [{}]", top.join(", ")));
        }
    }
    if !bad.is_empty() {
        return Err(Error::SingularInformation {
            directions: bad.join("; "),
        });
    }
    let mut inv = DMatrix::zeros(info.nrows(), info.ncols());
    for i in 0..eig.eigenvalues.len() {
        let v = eig.eigenvectors.column(i);
        inv += (&v * v.transpose()) / eig.eigenvalues[i];
    }
    Ok(inv)
}

pub(crate) fn sandwich_from_parts(
    info: &DMatrix<f64>,
    scores: &[Vec<f64>],
    names: &[String],
) -> Result<DMatrix<f64>> {
    let n = info.nrows();
    let inv = invert_information(info, names)?;
    let mut outer = DMatrix::zeros(n, n);
    for u in scores {
        let uv = DVector::from_column_slice(u);
        outer += &uv * uv.transpose();
    }
    let v = &inv * outer * &inv;
    Ok((&v + v.transpose()) * 0.5)
}

/// Observed information: negative central-difference Hessian of the
/// corrected log likelihood.
pub fn observed_information(
    spec: &ModelSpec,
    theta: &ParameterVector,
    ds: &Dataset,
) -> Result<DMatrix<f64>> {
    let f = |x: &[f64]| total_log_lik(spec, &ParameterVector::new(x.to_vec()), ds);
    Ok(-central_hessian(&f, theta.values())?)
}

/// Robust sandwich covariance `I_o^-1 J I_o^-1` at `theta`.
pub fn sandwich_cov(
    spec: &ModelSpec,
    theta: &ParameterVector,
    ds: &Dataset,
) -> Result<DMatrix<f64>> {
    let f = |x: &[f64]| total_log_lik(spec, &ParameterVector::new(x.to_vec()), ds);
    let info = -central_hessian(&f, theta.values())?;
    let scores = all_family_scores(spec, theta, ds)?;
    sandwich_from_parts(&info, &scores, &spec.param_names())
}

/// Likelihood-ratio test of a nested null against a full model.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LrtResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// `2 (loglik_full - loglik_null)` against chi-square with user-supplied
/// degrees of freedom. Both fits must come from the same dataset.
pub fn lrt(full: &FitResult, null: &FitResult, df: usize) -> Result<LrtResult> {
    if full.dataset_digest != null.dataset_digest {
        return Err(Error::Validation(
            "likelihood-ratio test requires fits on identical data".into(),
        ));
    }
    if df == 0 {
        return Err(Error::Validation("degrees of freedom must be positive".into()));
    }
    let statistic = 2.0 * (full.loglik - null.loglik);
    let p_value = if statistic <= 0.0 {
        1.0
    } else {
        let chi = ChiSquared::new(df as f64)
            .map_err(|e| Error::Validation(format!("chi-square df: {e}")))?;
        1.0 - chi.cdf(statistic)
    };
    Ok(LrtResult { statistic, df, p_value })
}

/// One row of an AIC comparison table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub label: String,
    pub loglik: f64,
    pub n_params: usize,
    pub aic: f64,
    pub delta_aic: f64,
    pub rank: usize,
}

/// AIC-ranked model comparison; all fits must share a dataset.
pub fn compare(fits: &[(String, &FitResult)]) -> Result<Vec<ComparisonRow>> {
    if fits.is_empty() {
        return Err(Error::Validation("nothing to compare".into()));
    }
    let digest = fits[0].1.dataset_digest;
    if fits.iter().any(|(_, f)| f.dataset_digest != digest) {
        return Err(Error::Validation(
            "model comparison requires fits on identical data".into(),
        ));
    }
    let mut rows: Vec<ComparisonRow> = fits
        .iter()
        .map(|(label, f)| ComparisonRow {
            label: label.clone(),
            loglik: f.loglik,
            n_params: f.dim(),
            aic: f.aic,
            delta_aic: 0.0,
            rank: 0,
        })
        .collect();
    rows.sort_by(|a, b| a.aic.partial_cmp(&b.aic).unwrap());
    let best = rows[0].aic;
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
        row.delta_aic = row.aic - best;
    }
    Ok(rows)
}

/// CSV form of a comparison table.
pub fn comparison_to_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("rank,model,loglik,n_params,aic,delta_aic\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.rank, r.label, r.loglik, r.n_params, r.aic, r.delta_aic
        ));
    }
    out
}

/// Wald 95% interval half-width helper shared by reports.
pub fn wald_halfwidth(se: f64) -> f64 {
    Z_95 * se
}
