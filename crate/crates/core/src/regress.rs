//! OLS with fixed effects and firm-clustered standard errors, plus the
//! baseline, lead and first-difference specification grids.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::linalg;
use crate::panel::{BankType, PanelDataset};
use crate::stats::stars;

/// Within-firm variation below this (relative to the raw scale) counts as constant.
const WITHIN_CONSTANT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    Classical,
    Hc1,
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedEffects {
    None,
    Type,
    Firm,
    TypeAndFirm,
}

impl FixedEffects {
    pub fn has_type(self) -> bool {
        matches!(self, FixedEffects::Type | FixedEffects::TypeAndFirm)
    }

    pub fn has_firm(self) -> bool {
        matches!(self, FixedEffects::Firm | FixedEffects::TypeAndFirm)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterBy {
    Firm,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependentTransform {
    Level,
    /// Next year's value within the same bank.
    Lead,
    /// Change from the immediately preceding year within the same bank.
    Diff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionSpec {
    pub label: String,
    pub dependent: String,
    pub transform: DependentTransform,
    /// Regressor names may carry a `diff_` prefix (within-bank first
    /// difference) or a `lead_` prefix (next year's value).
    pub efficiency: Vec<String>,
    pub firm_controls: Vec<String>,
    pub macro_controls: Vec<String>,
    pub fixed_effects: FixedEffects,
    pub intercept: bool,
    pub cluster_by: ClusterBy,
    /// Inclusive year window applied before any lag or lead is taken.
    pub period: Option<(i32, i32)>,
}

impl RegressionSpec {
    pub fn regressors(&self) -> Vec<String> {
        self.efficiency
            .iter()
            .chain(&self.firm_controls)
            .chain(&self.macro_controls)
            .cloned()
            .collect()
    }

    pub fn dependent_label(&self) -> String {
        match self.transform {
            DependentTransform::Level => self.dependent.clone(),
            DependentTransform::Lead => format!("lead_{}", self.dependent),
            DependentTransform::Diff => format!("diff_{}", self.dependent),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub stars: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionResult {
    pub label: String,
    pub dependent: String,
    pub coefficients: Vec<Coefficient>,
    pub n: usize,
    /// Parameters counted in the degrees-of-freedom correction, absorbed means included.
    pub k: usize,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    /// Set when the dependent variable has zero variance; R² is then reported as 0.
    pub degenerate_r_squared: bool,
    pub covariance: Covariance,
    pub clusters: Option<usize>,
    pub type_fe: bool,
    pub firm_fe: bool,
    pub intercept: bool,
    pub absorbed: usize,
    pub warnings: Vec<String>,
    pub spec: Option<RegressionSpec>,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Options for the OLS engine beyond the data itself.
#[derive(Debug, Clone, Default)]
pub struct OlsOptions {
    /// Group labels for cluster-robust covariance.
    pub clusters: Option<Vec<String>>,
    pub covariance: Option<Covariance>,
    /// Group means already swept out of y and X (within transformation).
    pub absorbed: usize,
}

/// Least squares of `y` on the named columns of `x`.
///
/// Covariance defaults to clustered when `clusters` is given, classical
/// otherwise. The cluster sandwich is scaled by G/(G−1) · (N−1)/(N−K);
/// HC1 by N/(N−K). K includes `absorbed`.
pub fn ols(
    y: &[f64],
    columns: &[Vec<f64>],
    names: &[String],
    opts: &OlsOptions,
) -> Result<RegressionResult> {
    let n = y.len();
    let p = columns.len();
    if names.len() != p || columns.iter().any(|c| c.len() != n) {
        return Err(Error::Data("regressor dimensions disagree".into()));
    }
    if n == 0 {
        return Err(Error::InsufficientData("empty regression sample".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("dependent variable has non-finite values".into()));
    }
    if let Some(j) = columns.iter().position(|c| c.iter().any(|v| !v.is_finite())) {
        return Err(Error::Data(format!("regressor `{}` has non-finite values", names[j])));
    }
    let x = DMatrix::from_fn(n, p, |i, j| columns[j][i]);
    let yv = DVector::from_column_slice(y);
    let dependent_names = linalg::collinear_columns(&x, names);
    if !dependent_names.is_empty() {
        return Err(Error::Collinear(dependent_names));
    }
    let k = p + opts.absorbed;
    if n <= k {
        return Err(Error::InsufficientData(format!("{n} observations for {k} parameters")));
    }
    let ls = linalg::least_squares(&x, &yv)
        .ok_or_else(|| Error::Collinear(names.to_vec()))?;
    let covariance = opts.covariance.unwrap_or(if opts.clusters.is_some() {
        Covariance::Cluster
    } else {
        Covariance::Classical
    });
    let (nf, kf) = (n as f64, k as f64);
    let resid = &ls.residuals;
    let bread = &ls.xtx_inv;

    let mut n_clusters = None;
    let mut df = nf - kf;
    let vcov = match covariance {
        Covariance::Classical => bread * (resid.norm_squared() / (nf - kf)),
        Covariance::Hc1 => {
            let mut meat = DMatrix::zeros(p, p);
            for i in 0..n {
                let xi = x.row(i).transpose();
                meat += &xi * xi.transpose() * resid[i].powi(2);
            }
            bread * meat * bread * (nf / (nf - kf))
        }
        Covariance::Cluster => {
            let labels = opts
                .clusters
                .as_ref()
                .ok_or_else(|| Error::Config("cluster covariance needs cluster labels".into()))?;
            if labels.len() != n {
                return Err(Error::Data("cluster labels disagree with sample size".into()));
            }
            let mut scores: BTreeMap<&str, DVector<f64>> = BTreeMap::new();
            for i in 0..n {
                let s = scores
                    .entry(labels[i].as_str())
                    .or_insert_with(|| DVector::zeros(p));
                *s += x.row(i).transpose() * resid[i];
            }
            let g = scores.len();
            if g < 2 {
                return Err(Error::InsufficientData("clustering needs at least 2 clusters".into()));
            }
            let mut meat = DMatrix::zeros(p, p);
            for s in scores.values() {
                meat += s * s.transpose();
            }
            let gf = g as f64;
            n_clusters = Some(g);
            df = gf - 1.0;
            bread * meat * bread * (gf / (gf - 1.0) * (nf - 1.0) / (nf - kf))
        }
    };

    let tdist = StudentsT::new(0.0, 1.0, df.max(1.0)).expect("positive df");
    let coefficients = (0..p)
        .map(|j| {
            let estimate = ls.beta[j];
            let se = vcov[(j, j)].max(0.0).sqrt();
            let (t_stat, p_value) = if se == 0.0 && estimate == 0.0 {
                (0.0, 1.0)
            } else {
                let t = estimate / se;
                (t, 2.0 * (1.0 - tdist.cdf(t.abs())))
            };
            Coefficient {
                name: names[j].clone(),
                estimate,
                se,
                t_stat,
                p_value,
                stars: stars(p_value),
            }
        })
        .collect();

    let mean = yv.mean();
    let tss: f64 = yv.iter().map(|v| (v - mean).powi(2)).sum();
    let rss = resid.norm_squared();
    let degenerate = tss <= f64::EPSILON * f64::EPSILON * nf || !tss.is_finite();
    let r_squared = if degenerate { 0.0 } else { 1.0 - rss / tss };
    let adj_r_squared = if degenerate {
        0.0
    } else {
        1.0 - (1.0 - r_squared) * (nf - 1.0) / (nf - kf)
    };
    Ok(RegressionResult {
        label: String::new(),
        dependent: String::new(),
        coefficients,
        n,
        k,
        r_squared,
        adj_r_squared,
        degenerate_r_squared: degenerate,
        covariance,
        clusters: n_clusters,
        type_fe: false,
        firm_fe: false,
        intercept: false,
        absorbed: opts.absorbed,
        warnings: Vec::new(),
        spec: None,
    })
}

/// Value of a possibly prefixed variable at a panel row.
fn resolve(panel: &PanelDataset, name: &str, row: usize) -> Result<Option<f64>> {
    let key = &panel.keys()[row];
    if let Some(base) = name.strip_prefix("diff_") {
        let cur = panel.column(base)?[row];
        let prev = panel
            .row_of(&key.bank_id, key.year - 1)
            .and_then(|r| panel.column(base).ok()?[r]);
        return Ok(cur.zip(prev).map(|(c, p)| c - p));
    }
    if let Some(base) = name.strip_prefix("lead_") {
        let col = panel.column(base)?;
        return Ok(panel.row_of(&key.bank_id, key.year + 1).and_then(|r| col[r]));
    }
    Ok(panel.column(name)?[row])
}

/// Subtracts group means in place; returns the number of groups.
fn demean(values: &mut [f64], groups: &[usize], n_groups: usize) {
    let mut sum = vec![0.0; n_groups];
    let mut count = vec![0usize; n_groups];
    for (v, &g) in values.iter().zip(groups) {
        sum[g] += v;
        count[g] += 1;
    }
    for (v, &g) in values.iter_mut().zip(groups) {
        *v -= sum[g] / count[g] as f64;
    }
}

/// Estimates one specification on the panel.
///
/// Regressors enter as efficiencies, firm controls, macro controls, then any
/// type dummies. Firm effects are swept out with the within transformation;
/// variables left without within-firm variation are dropped with a warning.
pub fn panel_regression(spec: &RegressionSpec, panel: &PanelDataset) -> Result<RegressionResult> {
    let panel_view;
    let panel = match spec.period {
        Some((from, to)) => {
            panel_view = panel.filter_years(from, to);
            &panel_view
        }
        None => panel,
    };
    let dep_name = spec.dependent_label();
    let regressors = spec.regressors();

    let mut y = Vec::new();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); regressors.len()];
    let mut banks = Vec::new();
    let mut types: Vec<BankType> = Vec::new();
    'rows: for row in 0..panel.len() {
        let Some(dep) = resolve(panel, &dep_name, row)? else {
            continue;
        };
        let mut vals = Vec::with_capacity(regressors.len());
        for r in &regressors {
            match resolve(panel, r, row)? {
                Some(v) if v.is_finite() => vals.push(v),
                _ => continue 'rows,
            }
        }
        let bank_type = panel.bank_types()[row];
        if spec.fixed_effects.has_type() && bank_type.is_none() {
            continue;
        }
        y.push(dep);
        for (c, v) in cols.iter_mut().zip(vals) {
            c.push(v);
        }
        banks.push(panel.keys()[row].bank_id.clone());
        types.push(bank_type.unwrap_or(BankType::CityRural));
    }
    if y.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no complete observations for `{}`",
            spec.label
        )));
    }

    let mut names = regressors.clone();
    if spec.fixed_effects.has_type() {
        let present: Vec<BankType> = BankType::ALL
            .into_iter()
            .filter(|t| types.contains(t))
            .collect();
        let skip = usize::from(spec.intercept || spec.fixed_effects.has_firm());
        for t in present.into_iter().skip(skip) {
            names.push(format!("type_{}", t.as_str()));
            cols.push(types.iter().map(|v| f64::from(u8::from(*v == t))).collect());
        }
    }

    let mut warnings = Vec::new();
    let mut absorbed = 0;
    let firm_fe = spec.fixed_effects.has_firm();
    if firm_fe {
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for b in &banks {
            let len = index.len();
            index.entry(b.as_str()).or_insert(len);
        }
        let groups: Vec<usize> = banks.iter().map(|b| index[b.as_str()]).collect();
        absorbed = index.len();
        demean(&mut y, &groups, absorbed);
        let mut kept_names = Vec::new();
        let mut kept_cols = Vec::new();
        for (name, mut col) in names.into_iter().zip(cols) {
            let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
            demean(&mut col, &groups, absorbed);
            if col.iter().all(|v| v.abs() <= WITHIN_CONSTANT_TOL * scale) {
                warnings.push(format!("dropped `{name}`: constant within every firm"));
            } else {
                kept_names.push(name);
                kept_cols.push(col);
            }
        }
        names = kept_names;
        cols = kept_cols;
    } else if spec.intercept {
        names.push("_cons".into());
        cols.push(vec![1.0; y.len()]);
    }

    let opts = OlsOptions {
        clusters: (spec.cluster_by == ClusterBy::Firm).then(|| banks.clone()),
        covariance: None,
        absorbed,
    };
    let mut result = ols(&y, &cols, &names, &opts)?;
    result.label = spec.label.clone();
    result.dependent = dep_name;
    result.type_fe = spec.fixed_effects.has_type();
    result.firm_fe = firm_fe;
    result.intercept = spec.intercept && !firm_fe;
    result.warnings = warnings;
    result.spec = Some(spec.clone());
    Ok(result)
}

/// Default window for the first-difference robustness regressions.
pub const FIRST_DIFFERENCE_PERIOD: (i32, i32) = (2011, 2023);

/// Runs `spec` with the dependent variable first-differenced within bank.
///
/// Regressors to difference must carry the `diff_` prefix; only consecutive
/// years are differenced. The period defaults to 2011–2023.
pub fn first_difference_regression(
    spec: &RegressionSpec,
    panel: &PanelDataset,
) -> Result<RegressionResult> {
    let mut fd = spec.clone();
    fd.transform = DependentTransform::Diff;
    fd.period = Some(spec.period.unwrap_or(FIRST_DIFFERENCE_PERIOD));
    if fd.cluster_by == ClusterBy::None {
        fd.cluster_by = ClusterBy::Firm;
    }
    panel_regression(&fd, panel)
}

/// Efficiency regressors shared by the baseline and lead grids.
pub const EFFICIENCY_PAIR: [&str; 2] = ["sfa_eff", "supereff"];
pub const FIRM_CONTROLS_BASE: [&str; 5] = ["size", "roa", "levr", "nplratio", "growth"];
pub const FIRM_CONTROLS_EXTRA: [&str; 3] = ["niiratio", "ten_client_pct", "ten_owner_pct"];
pub const MACRO_CONTROLS: [&str; 2] = ["gdp_growth", "spread"];

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn level_grid(transform: DependentTransform, prefix: &str) -> Vec<RegressionSpec> {
    let all_firm: Vec<&str> = FIRM_CONTROLS_BASE
        .iter()
        .chain(&FIRM_CONTROLS_EXTRA)
        .copied()
        .collect();
    let rows: [(&[&str], &[&str], FixedEffects, bool); 6] = [
        (&[], &[], FixedEffects::None, true),
        (&FIRM_CONTROLS_BASE, &[], FixedEffects::None, true),
        (&all_firm, &[], FixedEffects::None, true),
        (&all_firm, &MACRO_CONTROLS, FixedEffects::Type, false),
        (&all_firm, &MACRO_CONTROLS, FixedEffects::Firm, false),
        (&all_firm, &MACRO_CONTROLS, FixedEffects::TypeAndFirm, false),
    ];
    rows.iter()
        .enumerate()
        .map(|(i, (firm, mac, fe, cons))| RegressionSpec {
            label: format!("{prefix}_{}", i + 1),
            dependent: "tobinsq".into(),
            transform,
            efficiency: strings(&EFFICIENCY_PAIR),
            firm_controls: strings(firm),
            macro_controls: strings(mac),
            fixed_effects: *fe,
            intercept: *cons,
            cluster_by: ClusterBy::Firm,
            period: None,
        })
        .collect()
}

/// Baseline grid: efficiencies, then firm controls, macro controls and fixed effects.
pub fn baseline_specs() -> Vec<RegressionSpec> {
    level_grid(DependentTransform::Level, "baseline")
}

/// Baseline grid with next year's Tobin's Q as the dependent variable.
pub fn lead_specs() -> Vec<RegressionSpec> {
    level_grid(DependentTransform::Lead, "lead")
}

/// First-difference grid, one efficiency measure at a time.
pub fn first_difference_specs() -> Vec<RegressionSpec> {
    let controls = ["size", "diff_roe", "diff_nplratio", "growth"];
    let mut out = Vec::new();
    for eff in ["diff_supereff", "diff_sfa_eff"] {
        for (ctrl, fe) in [
            (&[][..], FixedEffects::None),
            (&controls[..], FixedEffects::None),
            (&controls[..], FixedEffects::Firm),
        ] {
            out.push(RegressionSpec {
                label: format!("fd_{}", out.len() + 1),
                dependent: "tobinsq".into(),
                transform: DependentTransform::Diff,
                efficiency: vec![eff.to_string()],
                firm_controls: strings(ctrl),
                macro_controls: Vec::new(),
                fixed_effects: fe,
                intercept: fe == FixedEffects::None,
                cluster_by: ClusterBy::Firm,
                period: Some(FIRST_DIFFERENCE_PERIOD),
            });
        }
    }
    out
}

fn fmt2(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn row_order(results: &[RegressionResult]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for r in results {
        for c in &r.coefficients {
            if !c.name.starts_with("type_") && c.name != "_cons" && !names.contains(&c.name) {
                names.push(c.name.clone());
            }
        }
    }
    if results.iter().any(|r| r.coefficient("_cons").is_some()) {
        names.push("_cons".into());
    }
    names
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

/// Table cells: coefficient with stars over the bracketed t-statistic.
fn table_cells(results: &[RegressionResult]) -> Vec<(String, Vec<String>)> {
    let mut rows = Vec::new();
    for name in row_order(results) {
        let coef: Vec<String> = results
            .iter()
            .map(|r| {
                r.coefficient(&name)
                    .map(|c| format!("{}{}", fmt2(c.estimate), c.stars))
                    .unwrap_or_default()
            })
            .collect();
        let t: Vec<String> = results
            .iter()
            .map(|r| {
                r.coefficient(&name)
                    .map(|c| format!("({})", fmt2(c.t_stat)))
                    .unwrap_or_default()
            })
            .collect();
        rows.push((name, coef));
        rows.push((String::new(), t));
    }
    rows.push(("Type FE".into(), results.iter().map(|r| yes_no(r.type_fe).into()).collect()));
    rows.push(("Firm FE".into(), results.iter().map(|r| yes_no(r.firm_fe).into()).collect()));
    rows.push(("cons".into(), results.iter().map(|r| yes_no(r.intercept).into()).collect()));
    rows.push(("N".into(), results.iter().map(|r| r.n.to_string()).collect()));
    rows.push((
        "Adjusted R²".into(),
        results.iter().map(|r| fmt2(r.adj_r_squared)).collect(),
    ));
    rows
}

pub fn table_markdown(title: &str, results: &[RegressionResult]) -> String {
    let mut out = format!("### {title}\n\n");
    let heads: Vec<String> = results
        .iter()
        .enumerate()
        .map(|(i, r)| format!("({}) {}", i + 1, r.dependent))
        .collect();
    let _ = writeln!(out, "| Dep.var | {} |", heads.join(" | "));
    let _ = writeln!(out, "|---|{}", "---|".repeat(results.len()));
    for (name, cells) in table_cells(results) {
        let _ = writeln!(out, "| {name} | {} |", cells.join(" | "));
    }
    out.push_str(
        "\nRobust t-statistics in brackets, standard errors clustered by firm. \
         * p < 0.1, ** p < 0.05, *** p < 0.01.\n",
    );
    let warnings: Vec<String> = results
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.warnings.iter().map(move |w| format!("- ({}) {w}", i + 1)))
        .collect();
    if !warnings.is_empty() {
        out.push_str("\nWarnings:\n");
        for w in warnings {
            let _ = writeln!(out, "{w}");
        }
    }
    out
}

pub fn write_table_csv<W: Write>(results: &[RegressionResult], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["row".to_string()];
    header.extend(
        results
            .iter()
            .enumerate()
            .map(|(i, r)| format!("({}) {}", i + 1, r.dependent)),
    );
    wtr.write_record(&header)?;
    for (name, cells) in table_cells(results) {
        let mut rec = vec![name];
        rec.extend(cells);
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}
