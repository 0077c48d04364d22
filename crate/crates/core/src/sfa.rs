//! Translog stochastic profit frontier estimated by maximum likelihood.
//!
//! The composed error is ε = v − u with v ~ N(0, σ_v²) and u ~ |N(0, σ_u²)|,
//! parameterized by σ² = σ_v² + σ_u² and γ = σ_u²/σ². Efficiency is the
//! conditional expectation E[exp(−u) | ε].

use std::f64::consts::{FRAC_2_PI, PI};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg;
use crate::panel::{ObsKey, PanelDataset};

/// Frontier base variables as `(term name, numerator column, optional denominator)`.
///
/// Deposits and loans enter as quantities; the price of funds and the NPL
/// ratio as prices; loss provisions and operating expense as the two expense
/// terms.
pub const BASE_VARIABLES: [(&str, &str, Option<&str>); 6] = [
    ("ln_deposits", "deposits", None),
    ("ln_loans", "loans", None),
    ("ln_p1", "interest_expense", Some("deposits")),
    ("ln_p2", "npl", Some("loans")),
    ("ln_loss_provision", "loss_provision", None),
    ("ln_op_expense", "op_expense_ex_prov", None),
];

/// Intercept, 6 linear, 6 squared, 15 cross terms and a year trend.
pub const SYNTHETIC_TERM_COUNT: usize = 29;

/// Term labels of the full translog over `base`: intercept, linear, squares, crosses.
pub fn translog_term_names(base: &[&str]) -> Vec<String> {
    let mut names = vec!["intercept".to_string()];
    names.extend(base.iter().map(|b| b.to_string()));
    names.extend(base.iter().map(|b| format!("{b}^2")));
    for a in 0..base.len() {
        for b in a + 1..base.len() {
            names.push(format!("{}*{}", base[a], base[b]));
        }
    }
    names
}

/// Expands raw positive variables into translog rows.
///
/// Each variable is divided by its sample mean before taking logs. When a
/// trend is supplied it is appended as a final linear term named `trend`.
pub fn translog_rows(raw: &[Vec<f64>], trend: Option<&[f64]>) -> (Vec<Vec<f64>>, Vec<String>) {
    let names: Vec<String> = if raw.len() == BASE_VARIABLES.len() {
        BASE_VARIABLES.iter().map(|(n, _, _)| n.to_string()).collect()
    } else {
        (0..raw.len()).map(|j| format!("ln_x{j}")).collect()
    };
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    translog_rows_named(&names, raw, trend)
}

pub fn translog_rows_named(
    base: &[&str],
    raw: &[Vec<f64>],
    trend: Option<&[f64]>,
) -> (Vec<Vec<f64>>, Vec<String>) {
    let k = raw.len();
    let n = raw.first().map_or(0, Vec::len);
    let logs: Vec<Vec<f64>> = raw
        .iter()
        .map(|col| {
            let mean = col.iter().sum::<f64>() / n as f64;
            col.iter().map(|v| (v / mean).ln()).collect()
        })
        .collect();
    let mut names = translog_term_names(base);
    if trend.is_some() {
        names.push("trend".into());
    }
    let rows = (0..n)
        .map(|i| {
            let mut row = Vec::with_capacity(names.len());
            row.push(1.0);
            row.extend((0..k).map(|j| logs[j][i]));
            row.extend((0..k).map(|j| logs[j][i] * logs[j][i]));
            for a in 0..k {
                for b in a + 1..k {
                    row.push(logs[a][i] * logs[b][i]);
                }
            }
            if let Some(t) = trend {
                row.push(t[i]);
            }
            row
        })
        .collect();
    (rows, names)
}

#[derive(Debug, Clone)]
pub struct FrontierDesign {
    /// ln(π + θ) per observation.
    pub dependent: DVector<f64>,
    /// `n × k`, first column is the intercept.
    pub regressors: DMatrix<f64>,
    pub term_names: Vec<String>,
    pub shift_theta: f64,
    pub obs_keys: Vec<ObsKey>,
}

impl FrontierDesign {
    /// Assembles a design, rejecting rank-deficient regressor matrices.
    pub fn new(
        dependent: Vec<f64>,
        rows: &[Vec<f64>],
        term_names: Vec<String>,
        shift_theta: f64,
        obs_keys: Vec<ObsKey>,
    ) -> Result<Self> {
        let n = dependent.len();
        let k = term_names.len();
        if rows.len() != n || obs_keys.len() != n || rows.iter().any(|r| r.len() != k) {
            return Err(Error::Data("frontier design dimensions disagree".into()));
        }
        if n <= k + 2 {
            return Err(Error::InsufficientData(format!(
                "{n} observations for {k} frontier terms"
            )));
        }
        let regressors = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
        let dependent_terms = linalg::collinear_columns(&regressors, &term_names);
        if !dependent_terms.is_empty() {
            return Err(Error::Collinear(dependent_terms));
        }
        Ok(Self {
            dependent: DVector::from_vec(dependent),
            regressors,
            term_names,
            shift_theta,
            obs_keys,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.dependent.len()
    }

    pub fn n_terms(&self) -> usize {
        self.regressors.ncols()
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DesignOptions {
    pub include_trend: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self { include_trend: true }
    }
}

/// Positivity shift for ln(π + θ): 1 when every profit is positive, else |min π| + 1.
pub fn shift_theta(profits: &[f64]) -> f64 {
    let min = profits.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        1.0
    } else {
        min.abs() + 1.0
    }
}

/// Builds the translog profit-frontier design from a panel.
///
/// Observations missing any required column are dropped.
pub fn build_frontier_design(panel: &PanelDataset, opts: &DesignOptions) -> Result<FrontierDesign> {
    let profit = panel.column("net_profit")?;
    let mut needed: Vec<&str> = Vec::new();
    for (_, num, den) in BASE_VARIABLES {
        needed.push(num);
        if let Some(d) = den {
            needed.push(d);
        }
    }
    let cols: Vec<&[Option<f64>]> = needed
        .iter()
        .map(|c| panel.column(c))
        .collect::<Result<_>>()?;

    let rows: Vec<usize> = (0..panel.len())
        .filter(|&i| profit[i].is_some() && cols.iter().all(|c| c[i].is_some()))
        .collect();
    if rows.is_empty() {
        return Err(Error::InsufficientData("no complete observations for the frontier".into()));
    }

    let mut bad = Vec::new();
    let mut raw: Vec<Vec<f64>> = Vec::with_capacity(BASE_VARIABLES.len());
    for (_, num, den) in BASE_VARIABLES {
        let numer = panel.column(num)?;
        let denom = den.map(|d| panel.column(d)).transpose()?;
        let mut values = Vec::with_capacity(rows.len());
        for &i in &rows {
            let a = numer[i].unwrap();
            let v = match denom {
                Some(d) => {
                    let b = d[i].unwrap();
                    if b <= 0.0 {
                        bad.push(format!("{} {}", panel.keys()[i], den.unwrap()));
                    }
                    a / b
                }
                None => a,
            };
            if a <= 0.0 {
                bad.push(format!("{} {num}", panel.keys()[i]));
            }
            values.push(v);
        }
        raw.push(values);
    }
    if !bad.is_empty() {
        bad.sort();
        bad.dedup();
        return Err(Error::Data(format!(
            "non-positive value in logged column at {}",
            bad.join("; ")
        )));
    }

    let profits: Vec<f64> = rows.iter().map(|&i| profit[i].unwrap()).collect();
    let theta = shift_theta(&profits);
    let dependent: Vec<f64> = profits.iter().map(|p| (p + theta).ln()).collect();
    let keys: Vec<ObsKey> = rows.iter().map(|&i| panel.keys()[i].clone()).collect();
    let trend: Option<Vec<f64>> = opts.include_trend.then(|| {
        let first = keys.iter().map(|k| k.year).min().unwrap();
        keys.iter().map(|k| (k.year - first) as f64).collect()
    });
    let (xrows, names) = translog_rows(&raw, trend.as_deref());
    FrontierDesign::new(dependent, &xrows, names, theta, keys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfaParams {
    pub beta: Vec<f64>,
    pub sigma_sq: f64,
    pub gamma: f64,
}

impl SfaParams {
    fn check(&self, design: &FrontierDesign) -> Result<()> {
        if self.beta.len() != design.n_terms() {
            return Err(Error::Domain(format!(
                "{} coefficients for {} terms",
                self.beta.len(),
                design.n_terms()
            )));
        }
        if !(self.sigma_sq > 0.0 && self.sigma_sq.is_finite()) {
            return Err(Error::Domain(format!("sigma_sq = {} must be positive", self.sigma_sq)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Domain(format!("gamma = {} must lie in (0, 1)", self.gamma)));
        }
        Ok(())
    }
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// ln Φ(z), accurate far into the lower tail.
pub fn ln_norm_cdf(z: f64) -> f64 {
    if z > -30.0 {
        (0.5 * erfc(-z / std::f64::consts::SQRT_2)).ln()
    } else {
        let z2 = z * z;
        -0.5 * z2 - (-z).ln() - LN_SQRT_2PI + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

fn ln_norm_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// φ(z)/Φ(z).
fn inverse_mills(z: f64) -> f64 {
    (ln_norm_pdf(z) - ln_norm_cdf(z)).exp()
}

fn residuals(beta: &[f64], design: &FrontierDesign) -> DVector<f64> {
    let b = DVector::from_column_slice(beta);
    &design.dependent - &design.regressors * b
}

/// Composed-error log-likelihood of the half-normal frontier.
pub fn log_likelihood(params: &SfaParams, design: &FrontierDesign) -> Result<f64> {
    params.check(design)?;
    Ok(ll_unchecked(params, design))
}

fn ll_unchecked(params: &SfaParams, design: &FrontierDesign) -> f64 {
    let eps = residuals(&params.beta, design);
    let sigma = params.sigma_sq.sqrt();
    let lambda = (params.gamma / (1.0 - params.gamma)).sqrt();
    let n = eps.len() as f64;
    let c = 0.5 * FRAC_2_PI.ln() - 0.5 * params.sigma_sq.ln();
    n * c
        + eps
            .iter()
            .map(|e| ln_norm_cdf(-e * lambda / sigma) - e * e / (2.0 * params.sigma_sq))
            .sum::<f64>()
}

/// Analytic gradient with respect to `(β, σ², γ)`, in that order.
pub fn log_likelihood_gradient(params: &SfaParams, design: &FrontierDesign) -> Result<Vec<f64>> {
    params.check(design)?;
    Ok(gradient_unchecked(params, design))
}

fn gradient_unchecked(params: &SfaParams, design: &FrontierDesign) -> Vec<f64> {
    let k = design.n_terms();
    let eps = residuals(&params.beta, design);
    let s2 = params.sigma_sq;
    let sigma = s2.sqrt();
    let g = params.gamma;
    let lambda = (g / (1.0 - g)).sqrt();
    let dlambda_dgamma = 0.5 / (lambda * (1.0 - g).powi(2));

    // Per-observation weight on x_i in the β-gradient.
    let mut w = DVector::zeros(eps.len());
    let mut d_s2 = 0.0;
    let mut d_g = 0.0;
    for (i, &e) in eps.iter().enumerate() {
        let z = -e * lambda / sigma;
        let r = inverse_mills(z);
        w[i] = r * lambda / sigma + e / s2;
        d_s2 += -0.5 / s2 - r * z / (2.0 * s2) + e * e / (2.0 * s2 * s2);
        d_g += r * (-e / sigma) * dlambda_dgamma;
    }
    let grad_beta = design.regressors.transpose() * w;
    let mut out = Vec::with_capacity(k + 2);
    out.extend(grad_beta.iter());
    out.push(d_s2);
    out.push(d_g);
    out
}

/// E[exp(−u) | ε] for each observation at the supplied parameters.
pub fn conditional_efficiency(params: &SfaParams, design: &FrontierDesign) -> Vec<f64> {
    let eps = residuals(&params.beta, design);
    let s2 = params.sigma_sq;
    let su2 = params.gamma * s2;
    let sv2 = (1.0 - params.gamma) * s2;
    if su2 <= 0.0 {
        return vec![1.0; eps.len()];
    }
    let sigma_star = (su2 * sv2 / s2).sqrt();
    eps.iter()
        .map(|&e| {
            let mu_star = -e * su2 / s2;
            if sigma_star == 0.0 {
                return (-mu_star.max(0.0)).exp();
            }
            let a = mu_star / sigma_star;
            let log_te = ln_norm_cdf(a - sigma_star) - ln_norm_cdf(a) - mu_star
                + 0.5 * sigma_star * sigma_star;
            log_te.exp().min(1.0)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SfaOptions {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub gamma_grid: Vec<f64>,
}

impl Default for SfaOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-5,
            gamma_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SfaFit {
    pub term_names: Vec<String>,
    pub beta: Vec<f64>,
    pub sigma_sq: f64,
    pub gamma: f64,
    /// Mean of the pre-truncation inefficiency distribution; zero for half-normal.
    pub mu: f64,
    pub log_likelihood: f64,
    /// Likelihood at the best OLS-based starting point.
    pub start_log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Gradient norm in the unconstrained (β, ln σ², logit γ) coordinates.
    pub gradient_norm: f64,
    pub start_gamma: f64,
    pub shift_theta: f64,
    pub obs_keys: Vec<ObsKey>,
    pub efficiency: Vec<f64>,
}

impl SfaFit {
    pub fn params(&self) -> SfaParams {
        SfaParams {
            beta: self.beta.clone(),
            sigma_sq: self.sigma_sq,
            gamma: self.gamma,
        }
    }
}

/// Efficiency scores at a fitted model.
pub fn technical_efficiency(fit: &SfaFit, design: &FrontierDesign) -> Vec<f64> {
    conditional_efficiency(&fit.params(), design)
}

#[derive(Serialize)]
struct EfficiencyRow<'a> {
    bank_id: &'a str,
    year: i32,
    sfa_eff: f64,
}

/// Writes `bank_id,year,sfa_eff` rows in observation order.
pub fn write_efficiency_csv<W: std::io::Write>(fit: &SfaFit, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for (k, e) in fit.obs_keys.iter().zip(&fit.efficiency) {
        wtr.serialize(EfficiencyRow {
            bank_id: &k.bank_id,
            year: k.year,
            sfa_eff: *e,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

const LOGIT_CLAMP: f64 = 30.0;

fn to_unconstrained(p: &SfaParams) -> Vec<f64> {
    let mut t = p.beta.clone();
    t.push(p.sigma_sq.ln());
    t.push((p.gamma / (1.0 - p.gamma)).ln());
    t
}

fn from_unconstrained(t: &[f64]) -> SfaParams {
    let k = t.len() - 2;
    let logit = t[k + 1].clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    SfaParams {
        beta: t[..k].to_vec(),
        sigma_sq: t[k].exp(),
        gamma: 1.0 / (1.0 + (-logit).exp()),
    }
}

/// Negative log-likelihood and its gradient in unconstrained coordinates.
fn objective(t: &[f64], design: &FrontierDesign) -> (f64, Vec<f64>) {
    let p = from_unconstrained(t);
    if !p.sigma_sq.is_finite() || p.sigma_sq <= 0.0 {
        return (f64::INFINITY, vec![0.0; t.len()]);
    }
    let ll = ll_unchecked(&p, design);
    let mut g = gradient_unchecked(&p, design);
    let k = t.len() - 2;
    g[k] *= p.sigma_sq;
    g[k + 1] *= p.gamma * (1.0 - p.gamma);
    if t[k + 1].abs() > LOGIT_CLAMP {
        g[k + 1] = 0.0;
    }
    let f = if ll.is_finite() { -ll } else { f64::INFINITY };
    (f, g.into_iter().map(|v| -v).collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Minimum {
    x: Vec<f64>,
    f: f64,
    grad_norm: f64,
    iterations: usize,
}

/// Backtracking Armijo line search along `dir`; returns the accepted point.
fn line_search(
    x: &[f64],
    f: f64,
    g: &[f64],
    dir: &[f64],
    design: &FrontierDesign,
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    let slope: f64 = g.iter().zip(dir).map(|(a, b)| a * b).sum();
    if slope >= 0.0 {
        return None;
    }
    let mut step = 1.0;
    for _ in 0..60 {
        let trial: Vec<f64> = x.iter().zip(dir).map(|(a, d)| a + step * d).collect();
        let (ft, gt) = objective(&trial, design);
        if ft.is_finite() && ft <= f + 1e-4 * step * slope {
            return Some((trial, ft, gt));
        }
        step *= 0.5;
    }
    None
}

fn bfgs(x0: Vec<f64>, design: &FrontierDesign, max_iter: usize, tol: f64) -> Minimum {
    let d = x0.len();
    let (mut f, mut g) = objective(&x0, design);
    let mut x = x0;
    let mut h = DMatrix::<f64>::identity(d, d);
    let mut scaled = false;
    let mut iterations = 0;
    while iterations < max_iter && norm(&g) >= tol {
        iterations += 1;
        let gv = DVector::from_column_slice(&g);
        let dir: Vec<f64> = (-(&h * &gv)).iter().copied().collect();
        let Some((xn, fnew, gn)) = line_search(&x, f, &g, &dir, design).or_else(|| {
            // Reset the curvature estimate and retry along steepest descent.
            let sd: Vec<f64> = g.iter().map(|v| -v).collect();
            line_search(&x, f, &g, &sd, design)
        }) else {
            break;
        };
        let s = DVector::from_iterator(d, xn.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(d, gn.iter().zip(&g).map(|(a, b)| a - b));
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                h = DMatrix::identity(d, d) * (sy / y.dot(&y));
                scaled = true;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            h += (&s * s.transpose()) * (rho * rho * yhy + rho)
                - (&hy * s.transpose() + &s * hy.transpose()) * rho;
        }
        let progress = f - fnew;
        x = xn;
        f = fnew;
        g = gn;
        if progress.abs() < 1e-15 * (1.0 + f.abs()) {
            break;
        }
    }
    Minimum {
        grad_norm: norm(&g),
        x,
        f,
        iterations,
    }
}

/// Newton refinement with a finite-difference Hessian of the analytic gradient.
fn newton_polish(mut m: Minimum, design: &FrontierDesign, max_iter: usize, tol: f64) -> Minimum {
    let d = m.x.len();
    for _ in 0..max_iter {
        let (_, g) = objective(&m.x, design);
        m.grad_norm = norm(&g);
        if m.grad_norm < tol {
            break;
        }
        let mut hess = DMatrix::<f64>::zeros(d, d);
        for j in 0..d {
            let h = 1e-5 * (1.0 + m.x[j].abs());
            let mut xp = m.x.clone();
            let mut xm = m.x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (_, gp) = objective(&xp, design);
            let (_, gm) = objective(&xm, design);
            for i in 0..d {
                hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        hess = (&hess + hess.transpose()) * 0.5;
        let gv = DVector::from_column_slice(&g);
        let mut damping = 0.0;
        let mut accepted = false;
        for _ in 0..12 {
            let mut hd = hess.clone();
            for i in 0..d {
                hd[(i, i)] += damping;
            }
            if let Some(chol) = hd.cholesky() {
                let step = -chol.solve(&gv);
                let dir: Vec<f64> = step.iter().copied().collect();
                // Near the optimum f is flat to rounding; take the full step
                // when it shrinks the gradient without raising f measurably.
                let xn: Vec<f64> = m.x.iter().zip(&dir).map(|(a, b)| a + b).collect();
                let (fnew, gn) = objective(&xn, design);
                if fnew <= m.f + 1e-12 * (1.0 + m.f.abs()) && norm(&gn) < m.grad_norm {
                    m.x = xn;
                    m.f = fnew;
                    m.grad_norm = norm(&gn);
                    m.iterations += 1;
                    accepted = true;
                    break;
                }
                if let Some((xn, fnew, gn)) = line_search(&m.x, m.f, &g, &dir, design) {
                    if fnew <= m.f {
                        m.x = xn;
                        m.f = fnew;
                        m.grad_norm = norm(&gn);
                        m.iterations += 1;
                        accepted = true;
                        break;
                    }
                }
            }
            damping = if damping == 0.0 { 1e-6 } else { damping * 10.0 };
        }
        if !accepted {
            break;
        }
    }
    m
}

/// OLS-based starting point for a given γ.
///
/// σ² matches the OLS residual variance to the composed-error variance and the
/// intercept is shifted up by E[u].
fn start_point(ols_beta: &[f64], resid_var: f64, gamma: f64) -> SfaParams {
    let sigma_sq = resid_var / (1.0 - 2.0 * gamma / PI);
    let mut beta = ols_beta.to_vec();
    beta[0] += (2.0 * gamma * sigma_sq / PI).sqrt();
    SfaParams {
        beta,
        sigma_sq,
        gamma,
    }
}

/// Maximum-likelihood fit from each γ-grid start; the highest likelihood wins,
/// ties going to the earliest grid entry.
pub fn fit_frontier(design: &FrontierDesign, opts: &SfaOptions) -> Result<SfaFit> {
    if opts.gamma_grid.is_empty() || opts.gamma_grid.iter().any(|g| !(*g > 0.0 && *g < 1.0)) {
        return Err(Error::Config("gamma grid must be non-empty and inside (0, 1)".into()));
    }
    let ls = linalg::least_squares(&design.regressors, &design.dependent).ok_or_else(|| {
        Error::Collinear(linalg::collinear_columns(&design.regressors, &design.term_names))
    })?;
    let n = design.n_obs() as f64;
    let k = design.n_terms() as f64;
    let resid_var = ls.residuals.norm_squared() / (n - k);
    let ols_beta: Vec<f64> = ls.beta.iter().copied().collect();

    let starts: Vec<SfaParams> = opts
        .gamma_grid
        .iter()
        .map(|&g| start_point(&ols_beta, resid_var, g))
        .collect();
    let start_ll: Vec<f64> = starts.iter().map(|p| ll_unchecked(p, design)).collect();
    let best_start = argmax_first(&start_ll);

    let runs: Vec<Minimum> = starts
        .par_iter()
        .map(|p| {
            let m = bfgs(to_unconstrained(p), design, opts.max_iterations, opts.gradient_tolerance);
            newton_polish(m, design, 50, opts.gradient_tolerance)
        })
        .collect();
    let lls: Vec<f64> = runs.iter().map(|m| -m.f).collect();
    let best = argmax_first(&lls);
    let m = &runs[best];
    let params = from_unconstrained(&m.x);
    let efficiency = conditional_efficiency(&params, design);
    Ok(SfaFit {
        term_names: design.term_names.clone(),
        beta: params.beta,
        sigma_sq: params.sigma_sq,
        gamma: params.gamma,
        mu: 0.0,
        log_likelihood: lls[best],
        start_log_likelihood: start_ll[best_start],
        converged: m.grad_norm < opts.gradient_tolerance,
        iterations: m.iterations,
        gradient_norm: m.grad_norm,
        start_gamma: opts.gamma_grid[best],
        shift_theta: design.shift_theta,
        obs_keys: design.obs_keys.clone(),
        efficiency,
    })
}

fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
