//! Descriptive statistics, Spearman rank correlation and VIF screening.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::linalg;
use crate::panel::{quantile_sorted, PanelDataset};

/// Below this many pairs an exact permutation p-value is also reported.
pub const EXACT_P_MAX_N: usize = 9;

/// Significance marker: `***` p < 0.01, `**` p < 0.05, `*` p < 0.1.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrResult {
    pub rho: f64,
    pub n: usize,
    pub t_stat: f64,
    /// Two-sided p-value from the t approximation with n − 2 degrees of freedom.
    pub p_value: f64,
    /// Two-sided exact permutation p-value, for small samples only.
    pub exact_p_value: Option<f64>,
    pub stars: &'static str,
}

/// Ranks starting at 1; ties share the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Pearson correlation; `None` when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn t_p_value(rho: f64, n: usize) -> (f64, f64) {
    let df = (n - 2) as f64;
    let denom = 1.0 - rho * rho;
    if denom <= 0.0 {
        return (rho.signum() * f64::INFINITY, 0.0);
    }
    let t = rho * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    (t, p.clamp(0.0, 1.0))
}

/// Share of rank permutations whose |rho| reaches the observed one.
fn permutation_p_value(rx: &[f64], ry: &[f64], rho: f64) -> f64 {
    let n = ry.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut c = vec![0usize; n];
    let target = rho.abs() - 1e-12;
    let mut hits = 0u64;
    let mut total = 0u64;
    let mut buf = vec![0.0; n];
    let mut eval = |perm: &[usize]| {
        for (k, &p) in perm.iter().enumerate() {
            buf[k] = ry[p];
        }
        total += 1;
        if pearson(rx, &buf).is_some_and(|r| r.abs() >= target) {
            hits += 1;
        }
    };
    // Heap's algorithm
    eval(&perm);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            eval(&perm);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    hits as f64 / total as f64
}

/// Spearman rank correlation over complete pairs.
pub fn spearman(x: &[Option<f64>], y: &[Option<f64>]) -> Result<CorrResult> {
    if x.len() != y.len() {
        return Err(Error::Data(format!(
            "series lengths differ ({} vs {})",
            x.len(),
            y.len()
        )));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter_map(|(a, b)| Some(((*a)?, (*b)?)))
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .unzip();
    spearman_values(&xs, &ys)
}

pub fn spearman_values(x: &[f64], y: &[f64]) -> Result<CorrResult> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Data("series lengths differ".into()));
    }
    if n < 3 {
        return Err(Error::InsufficientData(format!("{n} complete pairs, need 3")));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson(&rx, &ry)
        .ok_or_else(|| Error::UndefinedCorrelation("a series has constant ranks".into()))?;
    let (t_stat, p_value) = t_p_value(rho, n);
    let exact_p_value = (n <= EXACT_P_MAX_N).then(|| permutation_p_value(&rx, &ry, rho));
    Ok(CorrResult {
        rho,
        n,
        t_stat,
        p_value,
        exact_p_value,
        stars: stars(p_value),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CorrCell {
    Diagonal,
    Value(CorrResult),
    Missing(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrMatrix {
    pub names: Vec<String>,
    pub cells: Vec<Vec<CorrCell>>,
}

/// Pairwise Spearman matrix; failing cells are recorded, not fatal.
pub fn correlation_matrix(names: &[String], columns: &[Vec<Option<f64>>]) -> Result<CorrMatrix> {
    if names.len() != columns.len() {
        return Err(Error::Data("column names and columns disagree".into()));
    }
    if columns.len() < 2 {
        return Err(Error::InsufficientData("correlation matrix needs 2 columns".into()));
    }
    let k = columns.len();
    let mut cells = vec![vec![CorrCell::Diagonal; k]; k];
    for i in 0..k {
        for j in 0..i {
            let cell = match spearman(&columns[i], &columns[j]) {
                Ok(r) => CorrCell::Value(r),
                Err(e) => CorrCell::Missing(e.to_string()),
            };
            cells[i][j] = cell.clone();
            cells[j][i] = cell;
        }
    }
    Ok(CorrMatrix {
        names: names.to_vec(),
        cells,
    })
}

pub fn correlation_matrix_panel(panel: &PanelDataset, variables: &[&str]) -> Result<CorrMatrix> {
    let columns = variables
        .iter()
        .map(|v| panel.column(v).map(<[_]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = variables.iter().map(|s| s.to_string()).collect();
    correlation_matrix(&names, &columns)
}

fn cell_text(cell: &CorrCell) -> String {
    match cell {
        CorrCell::Diagonal => "1".into(),
        CorrCell::Value(r) => format!("{:.3}{}", r.rho, r.stars),
        CorrCell::Missing(_) => "".into(),
    }
}

impl CorrMatrix {
    /// Lower-triangular markdown table with stars.
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "| | {} |", self.names.join(" | "));
        let _ = writeln!(out, "|---|{}", "---|".repeat(self.names.len()));
        for (i, name) in self.names.iter().enumerate() {
            let row: Vec<String> = (0..self.names.len())
                .map(|j| if j <= i { cell_text(&self.cells[i][j]) } else { String::new() })
                .collect();
            let _ = writeln!(out, "| {name} | {} |", row.join(" | "));
        }
        out.push_str("\n* p < 0.1, ** p < 0.05, *** p < 0.01\n");
        out
    }

    /// Long-form CSV: one row per ordered pair below the diagonal.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["row", "column", "rho", "n", "t_stat", "p_value", "exact_p_value", "stars", "note"])?;
        for i in 0..self.names.len() {
            for j in 0..=i {
                let (a, b) = (&self.names[i], &self.names[j]);
                match &self.cells[i][j] {
                    CorrCell::Diagonal => wtr.write_record([a, b, "1", "", "", "", "", "", ""])?,
                    CorrCell::Value(r) => wtr.write_record([
                        a.clone(),
                        b.clone(),
                        r.rho.to_string(),
                        r.n.to_string(),
                        r.t_stat.to_string(),
                        r.p_value.to_string(),
                        r.exact_p_value.map(|p| p.to_string()).unwrap_or_default(),
                        r.stars.to_string(),
                        String::new(),
                    ])?,
                    CorrCell::Missing(msg) => {
                        wtr.write_record([a, b, "", "", "", "", "", "", msg.as_str()])?
                    }
                }
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VifRow {
    pub variable: String,
    /// `f64::INFINITY` marks exact collinearity.
    pub vif: f64,
    pub n: usize,
}

const EXACT_COLLINEAR_TOL: f64 = 1e-10;

/// VIF_j = 1 / (1 − R²_j) from regressing column j on the others plus an intercept.
pub fn vif(names: &[String], columns: &[Vec<Option<f64>>]) -> Result<Vec<VifRow>> {
    let k = columns.len();
    if k < 2 || names.len() != k {
        return Err(Error::InsufficientData("VIF needs at least 2 named columns".into()));
    }
    let n = columns[0].len();
    let mut out = Vec::with_capacity(k);
    for j in 0..k {
        let rows: Vec<usize> = (0..n)
            .filter(|&r| columns.iter().all(|c| c[r].is_some_and(f64::is_finite)))
            .collect();
        if rows.len() < k + 1 {
            return Err(Error::InsufficientData(format!(
                "auxiliary regression for `{}` has {} complete rows",
                names[j],
                rows.len()
            )));
        }
        let others: Vec<usize> = (0..k).filter(|&q| q != j).collect();
        let x = DMatrix::from_fn(rows.len(), k, |r, c| {
            if c == 0 {
                1.0
            } else {
                columns[others[c - 1]][rows[r]].unwrap()
            }
        });
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&r| columns[j][r].unwrap()));
        let r2 = linalg::r_squared_svd(&x, &y);
        let value = if 1.0 - r2 < EXACT_COLLINEAR_TOL {
            f64::INFINITY
        } else {
            1.0 / (1.0 - r2)
        };
        out.push(VifRow {
            variable: names[j].clone(),
            vif: value,
            n: rows.len(),
        });
    }
    Ok(out)
}

pub fn vif_panel(panel: &PanelDataset, variables: &[&str]) -> Result<Vec<VifRow>> {
    let columns = variables
        .iter()
        .map(|v| panel.column(v).map(<[_]>::to_vec))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = variables.iter().map(|s| s.to_string()).collect();
    vif(&names, &columns)
}

pub fn vif_markdown(rows: &[VifRow]) -> String {
    let mut out = String::from("| variable | VIF | N |\n|---|---|---|\n");
    for r in rows {
        let v = if r.vif.is_infinite() { "inf".to_string() } else { format!("{:.3}", r.vif) };
        let _ = writeln!(out, "| {} | {v} | {} |", r.variable, r.n);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DescribeRow {
    pub variable: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub p25: f64,
    pub p75: f64,
    pub max: f64,
}

pub fn describe_values(variable: &str, values: &[Option<f64>]) -> DescribeRow {
    let mut xs: Vec<f64> = values.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n == 0 {
        return DescribeRow {
            variable: variable.to_string(),
            n,
            mean: f64::NAN,
            sd: f64::NAN,
            min: f64::NAN,
            p25: f64::NAN,
            p75: f64::NAN,
            max: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    DescribeRow {
        variable: variable.to_string(),
        n,
        mean,
        sd,
        min: xs[0],
        p25: quantile_sorted(&xs, 0.25),
        p75: quantile_sorted(&xs, 0.75),
        max: xs[n - 1],
    }
}

pub fn describe(panel: &PanelDataset, variables: &[&str]) -> Result<Vec<DescribeRow>> {
    variables
        .iter()
        .map(|v| Ok(describe_values(v, panel.column(v)?)))
        .collect()
}

pub fn describe_markdown(rows: &[DescribeRow]) -> String {
    let mut out = String::from("| Variable | N | Mean | SD | Min | p25 | p75 | Max |\n|---|---|---|---|---|---|---|---|\n");
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |",
            r.variable, r.n, r.mean, r.sd, r.min, r.p25, r.p75, r.max
        );
    }
    out
}

pub fn write_describe_csv<W: Write>(rows: &[DescribeRow], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}
