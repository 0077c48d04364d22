//! Data envelopment analysis: radial CCR/BCC, slacks-based measures with
//! undesirable outputs, and two-stage slacks-based super-efficiency.
//!
//! The slacks-based programs are linear-fractional; each is reduced to a
//! linear program with the Charnes–Cooper substitution (scale every variable
//! by t > 0 and pin the denominator to one).

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linprog::{self, ConstraintSense, LinearProgram, LpSolution, LpStatus, Sense};
use crate::panel::PanelDataset;

/// Score and relative-slack threshold for calling a DMU efficient.
pub const EFFICIENCY_TOL: f64 = 1e-6;
const PEER_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReturnsToScale {
    #[serde(rename = "crs")]
    Crs,
    #[serde(rename = "vrs")]
    Vrs,
}

impl FromStr for ReturnsToScale {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "crs" => Ok(Self::Crs),
            "vrs" => Ok(Self::Vrs),
            other => Err(format!("unknown returns to scale `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DeaModel {
    #[serde(rename = "CCR")]
    Ccr,
    #[serde(rename = "BCC")]
    Bcc,
    #[serde(rename = "SBM_VRS")]
    SbmVrs,
    #[serde(rename = "SBM_UND_VRS")]
    SbmUndVrs,
    #[serde(rename = "SUPER_SBM_UND_VRS")]
    SuperSbmUndVrs,
}

impl DeaModel {
    pub const ALL: [DeaModel; 5] = [
        DeaModel::Ccr,
        DeaModel::Bcc,
        DeaModel::SbmVrs,
        DeaModel::SbmUndVrs,
        DeaModel::SuperSbmUndVrs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DeaModel::Ccr => "CCR",
            DeaModel::Bcc => "BCC",
            DeaModel::SbmVrs => "SBM_VRS",
            DeaModel::SbmUndVrs => "SBM_UND_VRS",
            DeaModel::SuperSbmUndVrs => "SUPER_SBM_UND_VRS",
        }
    }

    /// Short column name used when scores are joined onto a panel.
    pub fn column_name(self) -> &'static str {
        match self {
            DeaModel::Ccr => "ccr",
            DeaModel::Bcc => "bcc",
            DeaModel::SbmVrs => "sbm",
            DeaModel::SbmUndVrs => "sbm_und",
            DeaModel::SuperSbmUndVrs => "supereff",
        }
    }

    pub fn is_radial(self) -> bool {
        matches!(self, DeaModel::Ccr | DeaModel::Bcc)
    }
}

impl fmt::Display for DeaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DeaModel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "ccr" => Ok(DeaModel::Ccr),
            "bcc" => Ok(DeaModel::Bcc),
            "sbm" | "sbm-vrs" => Ok(DeaModel::SbmVrs),
            "sbm-und" | "sbm-und-vrs" => Ok(DeaModel::SbmUndVrs),
            "super-sbm-und" | "super-sbm-und-vrs" | "supereff" => Ok(DeaModel::SuperSbmUndVrs),
            other => Err(format!("unknown DEA model `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FrontierScope {
    #[serde(rename = "per_year")]
    PerYear,
    #[serde(rename = "pooled")]
    Pooled,
}

impl FromStr for FrontierScope {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "per-year" => Ok(Self::PerYear),
            "pooled" => Ok(Self::Pooled),
            other => Err(format!("unknown frontier scope `{other}`")),
        }
    }
}

/// Which panel columns feed a model, and how the frontier is scoped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeaModelSpec {
    pub model: DeaModel,
    pub rts: ReturnsToScale,
    pub inputs: Vec<String>,
    pub desirable: Vec<String>,
    pub undesirable: Vec<String>,
    pub scope: FrontierScope,
    /// Shift any column containing non-positive values by |min| + 1.
    pub shift_nonpositive: bool,
}

const BASE_INPUTS: [&str; 4] = ["tier1", "interest_expense", "op_expense_ex_prov", "loss_provision"];

impl DeaModelSpec {
    /// The production-approach column assignment for each model.
    ///
    /// The undesirable-output models carry NPL as a bad output; the others
    /// enter it as a fifth input.
    pub fn production_approach(model: DeaModel) -> Self {
        let mut inputs: Vec<String> = BASE_INPUTS.iter().map(|s| s.to_string()).collect();
        let undesirable = match model {
            DeaModel::SbmUndVrs | DeaModel::SuperSbmUndVrs => vec!["npl".to_string()],
            _ => {
                inputs.push("npl".to_string());
                Vec::new()
            }
        };
        Self {
            model,
            rts: if model == DeaModel::Ccr {
                ReturnsToScale::Crs
            } else {
                ReturnsToScale::Vrs
            },
            inputs,
            desirable: vec!["net_profit".to_string()],
            undesirable,
            scope: FrontierScope::PerYear,
            shift_nonpositive: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() || self.desirable.is_empty() {
            return Err(Error::Config(format!(
                "{} needs at least one input and one desirable output",
                self.model
            )));
        }
        if matches!(self.model, DeaModel::SbmUndVrs | DeaModel::SuperSbmUndVrs)
            && self.undesirable.is_empty()
        {
            return Err(Error::Config(format!("{} needs an undesirable output", self.model)));
        }
        let mut all: Vec<&String> = self
            .inputs
            .iter()
            .chain(&self.desirable)
            .chain(&self.undesirable)
            .collect();
        let total = all.len();
        all.sort();
        all.dedup();
        if all.len() != total {
            return Err(Error::Config("DEA column sets must be disjoint".into()));
        }
        Ok(())
    }
}

/// Inputs, desirable outputs and undesirable outputs of `n` DMUs.
///
/// Matrices are stored one row per dimension: `inputs[i][j]` is input `i` of DMU `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeaProblem {
    pub labels: Vec<String>,
    pub years: Vec<Option<i32>>,
    pub inputs: Vec<Vec<f64>>,
    pub desirable: Vec<Vec<f64>>,
    pub undesirable: Vec<Vec<f64>>,
    pub input_names: Vec<String>,
    pub desirable_names: Vec<String>,
    pub undesirable_names: Vec<String>,
    pub rts: ReturnsToScale,
}

fn default_names(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|i| format!("{prefix}{}", i + 1)).collect()
}

impl DeaProblem {
    /// Builds a problem from dimension-major matrices with generated labels.
    pub fn new(
        inputs: Vec<Vec<f64>>,
        desirable: Vec<Vec<f64>>,
        undesirable: Vec<Vec<f64>>,
        rts: ReturnsToScale,
    ) -> Result<Self> {
        let n = inputs
            .first()
            .or(desirable.first())
            .map_or(0, Vec::len);
        let labels = (0..n).map(|j| format!("DMU{}", j + 1)).collect();
        Self::with_labels(labels, inputs, desirable, undesirable, rts)
    }

    pub fn with_labels(
        labels: Vec<String>,
        inputs: Vec<Vec<f64>>,
        desirable: Vec<Vec<f64>>,
        undesirable: Vec<Vec<f64>>,
        rts: ReturnsToScale,
    ) -> Result<Self> {
        let n = labels.len();
        let problem = Self {
            years: vec![None; n],
            input_names: default_names("x", inputs.len()),
            desirable_names: default_names("y", desirable.len()),
            undesirable_names: default_names("b", undesirable.len()),
            labels,
            inputs,
            desirable,
            undesirable,
            rts,
        };
        problem.validate()?;
        Ok(problem)
    }

    /// Builds a problem from per-DMU rows `(inputs, desirable, undesirable)`.
    pub fn from_dmus(
        rows: &[(&[f64], &[f64], &[f64])],
        rts: ReturnsToScale,
    ) -> Result<Self> {
        let transpose = |pick: fn(&(&[f64], &[f64], &[f64])) -> Vec<f64>| -> Vec<Vec<f64>> {
            let per_dmu: Vec<Vec<f64>> = rows.iter().map(pick).collect();
            let k = per_dmu.first().map_or(0, Vec::len);
            (0..k).map(|i| per_dmu.iter().map(|r| r[i]).collect()).collect()
        };
        Self::new(
            transpose(|r| r.0.to_vec()),
            transpose(|r| r.1.to_vec()),
            transpose(|r| r.2.to_vec()),
            rts,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if n == 0 {
            return Err(Error::EmptyFrontier("no DMUs".into()));
        }
        if self.years.len() != n {
            return Err(Error::Data("year labels disagree with DMU count".into()));
        }
        for (kind, mat, names) in [
            ("input", &self.inputs, &self.input_names),
            ("desirable output", &self.desirable, &self.desirable_names),
            ("undesirable output", &self.undesirable, &self.undesirable_names),
        ] {
            if names.len() != mat.len() {
                return Err(Error::Data(format!("{kind} names disagree with matrix rows")));
            }
            for (i, row) in mat.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::Data(format!(
                        "{kind} `{}` has {} entries for {n} DMUs",
                        names[i],
                        row.len()
                    )));
                }
                if let Some(j) = row.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
                    return Err(Error::Data(format!(
                        "non-positive {kind} `{}` = {} at DMU `{}`",
                        names[i], row[j], self.labels[j]
                    )));
                }
            }
        }
        if self.inputs.is_empty() {
            return Err(Error::Data("DEA problem needs at least one input".into()));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.inputs.len()
    }

    pub fn s1(&self) -> usize {
        self.desirable.len()
    }

    pub fn s2(&self) -> usize {
        self.undesirable.len()
    }

    /// Copy with DMU `j` removed.
    pub fn without_dmu(&self, j: usize) -> Self {
        let drop = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            m.iter()
                .map(|row| row.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, v)| *v).collect())
                .collect()
        };
        let mut out = self.clone();
        out.labels.remove(j);
        out.years.remove(j);
        out.inputs = drop(&self.inputs);
        out.desirable = drop(&self.desirable);
        out.undesirable = drop(&self.undesirable);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SlackProfile {
    pub input: Vec<f64>,
    pub desirable: Vec<f64>,
    pub undesirable: Vec<f64>,
}

impl SlackProfile {
    fn all_relatively_zero(&self, problem: &DeaProblem, o: usize) -> bool {
        let rel = |s: &[f64], m: &[Vec<f64>]| {
            s.iter().zip(m).all(|(v, row)| v.abs() / row[o] < EFFICIENCY_TOL)
        };
        rel(&self.input, &problem.inputs)
            && rel(&self.desirable, &problem.desirable)
            && rel(&self.undesirable, &problem.undesirable)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreStatus {
    Scored,
    InfeasibleSuper,
    NotComparable,
}

impl ScoreStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreStatus::Scored => "Scored",
            ScoreStatus::InfeasibleSuper => "InfeasibleSuper",
            ScoreStatus::NotComparable => "NotComparable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeaScore {
    pub dmu: String,
    pub year: Option<i32>,
    pub model: DeaModel,
    /// θ for radial models, ρ for slacks-based models, SE for super-efficiency.
    pub value: f64,
    pub slacks: SlackProfile,
    /// Intensity weight on every DMU of the problem (zero on the evaluated DMU
    /// for super-efficiency).
    pub lambdas: Vec<f64>,
    /// Nonzero intensity weights by DMU label.
    pub peers: Vec<(String, f64)>,
    pub status: ScoreStatus,
    pub efficient: bool,
}

fn lp_failure(problem: &DeaProblem, o: usize, sol: &LpSolution) -> Error {
    Error::Data(format!(
        "DMU `{}`: envelopment program ended {:?}",
        problem.labels[o], sol.status
    ))
}

fn solve_for(problem: &DeaProblem, o: usize, lp: &LinearProgram) -> Result<LpSolution> {
    linprog::solve(lp).map_err(|source| Error::Lp {
        dmu: problem.labels[o].clone(),
        source,
    })
}

fn peers_of(problem: &DeaProblem, lambdas: &[f64]) -> Vec<(String, f64)> {
    lambdas
        .iter()
        .enumerate()
        .filter(|(_, l)| **l > PEER_TOL)
        .map(|(j, l)| (problem.labels[j].clone(), *l))
        .collect()
}

fn check_index(problem: &DeaProblem, o: usize) -> Result<()> {
    if o >= problem.n() {
        return Err(Error::Domain(format!("DMU index {o} out of range 0..{}", problem.n())));
    }
    Ok(())
}

/// Input-oriented radial efficiency θ (BCC under VRS, CCR under CRS).
///
/// Undesirable outputs, if any, are contracted alongside the inputs.
pub fn radial_input_efficiency(problem: &DeaProblem, o: usize) -> Result<DeaScore> {
    radial_with(problem, o, problem.rts)
}

fn radial_with(problem: &DeaProblem, o: usize, rts: ReturnsToScale) -> Result<DeaScore> {
    check_index(problem, o)?;
    let n = problem.n();
    // variables: θ, λ_1..λ_n
    let mut cost = vec![0.0; n + 1];
    cost[0] = 1.0;
    let mut lp = LinearProgram::new(Sense::Minimize, cost);
    for row in problem.inputs.iter().chain(&problem.undesirable) {
        let mut coefs = vec![-row[o]];
        coefs.extend(row);
        lp.add_row(coefs, ConstraintSense::Le, 0.0);
    }
    for row in &problem.desirable {
        let mut coefs = vec![0.0];
        coefs.extend(row);
        lp.add_row(coefs, ConstraintSense::Ge, row[o]);
    }
    if rts == ReturnsToScale::Vrs {
        let mut coefs = vec![1.0; n + 1];
        coefs[0] = 0.0;
        lp.add_row(coefs, ConstraintSense::Eq, 1.0);
    }
    let sol = solve_for(problem, o, &lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(lp_failure(problem, o, &sol));
    }
    let theta = sol.x[0].min(1.0);
    let lambdas: Vec<f64> = sol.x[1..].iter().map(|v| v.max(0.0)).collect();
    let combo = |row: &Vec<f64>| -> f64 { row.iter().zip(&lambdas).map(|(a, l)| a * l).sum() };
    let slacks = SlackProfile {
        input: problem
            .inputs
            .iter()
            .map(|r| (theta * r[o] - combo(r)).max(0.0))
            .collect(),
        desirable: problem
            .desirable
            .iter()
            .map(|r| (combo(r) - r[o]).max(0.0))
            .collect(),
        undesirable: problem
            .undesirable
            .iter()
            .map(|r| (theta * r[o] - combo(r)).max(0.0))
            .collect(),
    };
    Ok(DeaScore {
        dmu: problem.labels[o].clone(),
        year: problem.years[o],
        model: match rts {
            ReturnsToScale::Crs => DeaModel::Ccr,
            ReturnsToScale::Vrs => DeaModel::Bcc,
        },
        value: theta,
        peers: peers_of(problem, &lambdas),
        lambdas,
        slacks,
        status: ScoreStatus::Scored,
        efficient: theta >= 1.0 - EFFICIENCY_TOL,
    })
}

/// Slacks-based efficiency ρ with undesirable outputs (plain SBM when there are none).
pub fn sbm_efficiency(problem: &DeaProblem, o: usize) -> Result<DeaScore> {
    check_index(problem, o)?;
    let (n, m, s1, s2) = (problem.n(), problem.m(), problem.s1(), problem.s2());
    // variables: t, Λ (n), S⁻ (m), Sᵍ (s1), Sᵇ (s2)
    let lam = 1;
    let sin = lam + n;
    let sg = sin + m;
    let sb = sg + s1;
    let nvars = sb + s2;

    let mut cost = vec![0.0; nvars];
    cost[0] = 1.0;
    for i in 0..m {
        cost[sin + i] = -1.0 / (m as f64 * problem.inputs[i][o]);
    }
    let mut lp = LinearProgram::new(Sense::Minimize, cost);

    let mut norm = vec![0.0; nvars];
    norm[0] = 1.0;
    let outs = (s1 + s2) as f64;
    for r in 0..s1 {
        norm[sg + r] = 1.0 / (outs * problem.desirable[r][o]);
    }
    for r in 0..s2 {
        norm[sb + r] = 1.0 / (outs * problem.undesirable[r][o]);
    }
    lp.add_row(norm, ConstraintSense::Eq, 1.0);

    for (i, row) in problem.inputs.iter().enumerate() {
        let mut c = vec![0.0; nvars];
        c[0] = -row[o];
        c[lam..lam + n].copy_from_slice(row);
        c[sin + i] = 1.0;
        lp.add_row(c, ConstraintSense::Eq, 0.0);
    }
    for (r, row) in problem.desirable.iter().enumerate() {
        let mut c = vec![0.0; nvars];
        c[0] = -row[o];
        c[lam..lam + n].copy_from_slice(row);
        c[sg + r] = -1.0;
        lp.add_row(c, ConstraintSense::Eq, 0.0);
    }
    for (r, row) in problem.undesirable.iter().enumerate() {
        let mut c = vec![0.0; nvars];
        c[0] = -row[o];
        c[lam..lam + n].copy_from_slice(row);
        c[sb + r] = 1.0;
        lp.add_row(c, ConstraintSense::Eq, 0.0);
    }
    if problem.rts == ReturnsToScale::Vrs {
        let mut c = vec![0.0; nvars];
        c[0] = -1.0;
        c[lam..lam + n].iter_mut().for_each(|v| *v = 1.0);
        lp.add_row(c, ConstraintSense::Eq, 0.0);
    }

    let sol = solve_for(problem, o, &lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(lp_failure(problem, o, &sol));
    }
    let t = sol.x[0];
    let unscale = |range: std::ops::Range<usize>| -> Vec<f64> {
        sol.x[range].iter().map(|v| (v / t).max(0.0)).collect()
    };
    let lambdas = unscale(lam..lam + n);
    let slacks = SlackProfile {
        input: unscale(sin..sin + m),
        desirable: unscale(sg..sg + s1),
        undesirable: unscale(sb..sb + s2),
    };
    let rho = sol.objective.min(1.0);
    let efficient = rho >= 1.0 - EFFICIENCY_TOL && slacks.all_relatively_zero(problem, o);
    Ok(DeaScore {
        dmu: problem.labels[o].clone(),
        year: problem.years[o],
        model: if s2 > 0 {
            DeaModel::SbmUndVrs
        } else {
            DeaModel::SbmVrs
        },
        value: rho,
        peers: peers_of(problem, &lambdas),
        lambdas,
        slacks,
        status: ScoreStatus::Scored,
        efficient,
    })
}

/// Additive super-efficiency score from super-slacks:
/// 1 + (1/m) Σ s⁻ᵢ/xᵢ₀ + (1/s2) Σ sᵇᵣ/yᵇᵣ₀.
pub fn super_score(problem: &DeaProblem, o: usize, slacks: &SlackProfile) -> f64 {
    let m = problem.m() as f64;
    let input: f64 = slacks
        .input
        .iter()
        .zip(&problem.inputs)
        .map(|(s, row)| s / row[o])
        .sum::<f64>()
        / m;
    let bad = if problem.s2() > 0 {
        slacks
            .undesirable
            .iter()
            .zip(&problem.undesirable)
            .map(|(s, row)| s / row[o])
            .sum::<f64>()
            / problem.s2() as f64
    } else {
        0.0
    };
    1.0 + input + bad
}

/// Super-efficiency of a stage-1 efficient DMU against the other DMUs.
///
/// Runs the stage-1 slacks-based model first and refuses inefficient DMUs.
pub fn super_sbm_efficiency(problem: &DeaProblem, o: usize) -> Result<DeaScore> {
    check_index(problem, o)?;
    if problem.n() == 1 {
        return Ok(not_comparable(problem, o));
    }
    let stage1 = sbm_efficiency(problem, o)?;
    if !stage1.efficient {
        return Err(Error::Precondition(format!(
            "DMU `{}` is inefficient in stage 1 (rho = {})",
            problem.labels[o], stage1.value
        )));
    }
    super_unchecked(problem, o)
}

fn not_comparable(problem: &DeaProblem, o: usize) -> DeaScore {
    DeaScore {
        dmu: problem.labels[o].clone(),
        year: problem.years[o],
        model: DeaModel::SuperSbmUndVrs,
        value: 1.0,
        slacks: SlackProfile {
            input: vec![0.0; problem.m()],
            desirable: vec![0.0; problem.s1()],
            undesirable: vec![0.0; problem.s2()],
        },
        lambdas: vec![0.0; problem.n()],
        peers: Vec::new(),
        status: ScoreStatus::NotComparable,
        efficient: true,
    }
}

/// Reference point (x̄, ȳᵍ, ȳᵇ) = (x₀ + s⁻, y₀ − sᵍ, yᵇ₀ + sᵇ) in the hull of
/// the other DMUs; minimizes
/// [1 + (1/m) Σ s⁻/x₀ + (1/s2) Σ sᵇ/yᵇ₀] / [1 − (1/s1) Σ sᵍ/y₀].
fn super_unchecked(problem: &DeaProblem, o: usize) -> Result<DeaScore> {
    let (n, m, s1, s2) = (problem.n(), problem.m(), problem.s1(), problem.s2());
    let others: Vec<usize> = (0..n).filter(|&j| j != o).collect();
    let k = others.len();
    // variables: t, Λ (k), S⁻ (m), Sᵍ (s1), Sᵇ (s2)
    let lam = 1;
    let sin = lam + k;
    let sg = sin + m;
    let sb = sg + s1;
    let nvars = sb + s2;

    let mut cost = vec![0.0; nvars];
    cost[0] = 1.0;
    for i in 0..m {
        cost[sin + i] = 1.0 / (m as f64 * problem.inputs[i][o]);
    }
    for r in 0..s2 {
        cost[sb + r] = 1.0 / (s2 as f64 * problem.undesirable[r][o]);
    }
    let mut lp = LinearProgram::new(Sense::Minimize, cost);

    let mut norm = vec![0.0; nvars];
    norm[0] = 1.0;
    for r in 0..s1 {
        norm[sg + r] = -1.0 / (s1 as f64 * problem.desirable[r][o]);
    }
    lp.add_row(norm, ConstraintSense::Eq, 1.0);

    let others_of = |row: &Vec<f64>, c: &mut Vec<f64>, sign: f64| {
        for (q, &j) in others.iter().enumerate() {
            c[lam + q] = sign * row[j];
        }
    };
    // x̄ ≥ Σ λ x_j
    for (i, row) in problem.inputs.iter().enumerate() {
        let mut c = vec![0.0; nvars];
        c[0] = row[o];
        c[sin + i] = 1.0;
        others_of(row, &mut c, -1.0);
        lp.add_row(c, ConstraintSense::Ge, 0.0);
    }
    // ȳᵇ ≥ Σ λ yᵇ_j
    for (r, row) in problem.undesirable.iter().enumerate() {
        let mut c = vec![0.0; nvars];
        c[0] = row[o];
        c[sb + r] = 1.0;
        others_of(row, &mut c, -1.0);
        lp.add_row(c, ConstraintSense::Ge, 0.0);
    }
    // ȳᵍ ≤ Σ λ yᵍ_j and ȳᵍ ≥ 0
    for (r, row) in problem.desirable.iter().enumerate() {
        let mut c = vec![0.0; nvars];
        c[0] = row[o];
        c[sg + r] = -1.0;
        others_of(row, &mut c, -1.0);
        lp.add_row(c, ConstraintSense::Le, 0.0);

        let mut c = vec![0.0; nvars];
        c[0] = row[o];
        c[sg + r] = -1.0;
        lp.add_row(c, ConstraintSense::Ge, 0.0);
    }
    if problem.rts == ReturnsToScale::Vrs {
        let mut c = vec![0.0; nvars];
        c[0] = -1.0;
        c[lam..lam + k].iter_mut().for_each(|v| *v = 1.0);
        lp.add_row(c, ConstraintSense::Eq, 0.0);
    }

    let sol = solve_for(problem, o, &lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            let mut score = not_comparable(problem, o);
            score.status = ScoreStatus::InfeasibleSuper;
            score.value = f64::NAN;
            return Ok(score);
        }
        LpStatus::Unbounded => return Err(lp_failure(problem, o, &sol)),
    }
    let t = sol.x[0];
    let unscale = |range: std::ops::Range<usize>| -> Vec<f64> {
        sol.x[range].iter().map(|v| (v / t).max(0.0)).collect()
    };
    let reduced = unscale(lam..lam + k);
    let mut lambdas = vec![0.0; n];
    for (q, &j) in others.iter().enumerate() {
        lambdas[j] = reduced[q];
    }
    let slacks = SlackProfile {
        input: unscale(sin..sin + m),
        desirable: unscale(sg..sg + s1),
        undesirable: unscale(sb..sb + s2),
    };
    Ok(DeaScore {
        dmu: problem.labels[o].clone(),
        year: problem.years[o],
        model: DeaModel::SuperSbmUndVrs,
        value: super_score(problem, o, &slacks),
        peers: peers_of(problem, &lambdas),
        lambdas,
        slacks,
        status: ScoreStatus::Scored,
        efficient: true,
    })
}

/// Merges stage-1 slacks-based scores with stage-2 super scores.
///
/// Inefficient DMUs keep their stage-1 value. Efficient DMUs take the super
/// score; those whose super program was infeasible get the largest finite
/// score in the cohort plus one and keep the `InfeasibleSuper` status.
pub fn combine_two_stage(stage1: &[DeaScore], supers: &[Option<DeaScore>]) -> Vec<DeaScore> {
    let mut out: Vec<DeaScore> = stage1
        .iter()
        .zip(supers)
        .map(|(s1, sup)| match sup {
            Some(s) if s1.efficient => s.clone(),
            _ => DeaScore {
                model: DeaModel::SuperSbmUndVrs,
                ..s1.clone()
            },
        })
        .collect();
    let max_finite = out
        .iter()
        .filter(|s| s.status != ScoreStatus::InfeasibleSuper && s.value.is_finite())
        .map(|s| s.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let fill = if max_finite.is_finite() { max_finite + 1.0 } else { 2.0 };
    for s in out.iter_mut() {
        if s.status == ScoreStatus::InfeasibleSuper {
            s.value = fill;
        }
    }
    out
}

/// Scores every DMU of `problem` under `model`.
///
/// CCR and BCC fix the returns to scale themselves; the slacks-based models
/// use `problem.rts`. Output order follows the DMU order of the problem.
pub fn score_all(problem: &DeaProblem, model: DeaModel) -> Result<Vec<DeaScore>> {
    problem.validate()?;
    let n = problem.n();
    match model {
        DeaModel::Ccr | DeaModel::Bcc => {
            let rts = if model == DeaModel::Ccr {
                ReturnsToScale::Crs
            } else {
                ReturnsToScale::Vrs
            };
            (0..n).into_par_iter().map(|o| radial_with(problem, o, rts)).collect()
        }
        DeaModel::SbmVrs | DeaModel::SbmUndVrs => (0..n)
            .into_par_iter()
            .map(|o| {
                sbm_efficiency(problem, o).map(|mut s| {
                    s.model = model;
                    s
                })
            })
            .collect(),
        DeaModel::SuperSbmUndVrs => {
            let stage1: Vec<DeaScore> = (0..n)
                .into_par_iter()
                .map(|o| sbm_efficiency(problem, o))
                .collect::<Result<_>>()?;
            let supers: Vec<Option<DeaScore>> = (0..n)
                .into_par_iter()
                .map(|o| {
                    if !stage1[o].efficient {
                        Ok(None)
                    } else if n == 1 {
                        Ok(Some(not_comparable(problem, o)))
                    } else {
                        super_unchecked(problem, o).map(Some)
                    }
                })
                .collect::<Result<_>>()?;
            Ok(combine_two_stage(&stage1, &supers))
        }
    }
}

/// Assembles the DEA matrices for one year (per-year scope) or all years (pooled).
///
/// DMUs are ordered by bank identifier (then year). Observations missing a
/// selected column are skipped.
pub fn build_dea_problem(
    panel: &PanelDataset,
    spec: &DeaModelSpec,
    year: Option<i32>,
) -> Result<DeaProblem> {
    spec.validate()?;
    let year_filter = match spec.scope {
        FrontierScope::PerYear => Some(year.ok_or_else(|| {
            Error::Config("per-year frontier needs a year".into())
        })?),
        FrontierScope::Pooled => None,
    };
    let groups = [&spec.inputs, &spec.desirable, &spec.undesirable];
    let mut cols: Vec<Vec<&[Option<f64>]>> = Vec::new();
    for g in groups {
        cols.push(
            g.iter()
                .map(|c| panel.column(c).map_err(|_| Error::Schema(c.clone())))
                .collect::<Result<_>>()?,
        );
    }
    let rows: Vec<usize> = (0..panel.len())
        .filter(|&i| year_filter.is_none_or(|y| panel.keys()[i].year == y))
        .filter(|&i| cols.iter().flatten().all(|c| c[i].is_some()))
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptyFrontier(match year_filter {
            Some(y) => format!("no complete observations in {y}"),
            None => "no complete observations".into(),
        }));
    }

    let mut mats: Vec<Vec<Vec<f64>>> = cols
        .iter()
        .map(|g| g.iter().map(|c| rows.iter().map(|&i| c[i].unwrap()).collect()).collect())
        .collect();

    if spec.shift_nonpositive {
        for mat in mats.iter_mut() {
            for row in mat.iter_mut() {
                let min = row.iter().copied().fold(f64::INFINITY, f64::min);
                if min <= 0.0 {
                    let shift = min.abs() + 1.0;
                    row.iter_mut().for_each(|v| *v += shift);
                }
            }
        }
    } else {
        let mut bad = Vec::new();
        for (g, mat) in groups.iter().zip(&mats) {
            for (name, row) in g.iter().zip(mat) {
                for (q, v) in row.iter().enumerate() {
                    if *v <= 0.0 {
                        let key = &panel.keys()[rows[q]];
                        bad.push(format!("({}, {}, {name})", key.bank_id, key.year));
                    }
                }
            }
        }
        if !bad.is_empty() {
            return Err(Error::Data(format!(
                "non-positive DEA entries: {}",
                bad.join(", ")
            )));
        }
    }

    let labels = rows
        .iter()
        .map(|&i| {
            let key = &panel.keys()[i];
            match spec.scope {
                FrontierScope::PerYear => key.bank_id.clone(),
                FrontierScope::Pooled => format!("{}/{}", key.bank_id, key.year),
            }
        })
        .collect();
    let years = rows.iter().map(|&i| Some(panel.keys()[i].year)).collect();
    let undesirable = mats.pop().unwrap();
    let desirable = mats.pop().unwrap();
    let inputs = mats.pop().unwrap();
    let problem = DeaProblem {
        labels,
        years,
        inputs,
        desirable,
        undesirable,
        input_names: spec.inputs.clone(),
        desirable_names: spec.desirable.clone(),
        undesirable_names: spec.undesirable.clone(),
        rts: spec.rts,
    };
    problem.validate()?;
    Ok(problem)
}

/// Scores a whole panel: one frontier per year, or one pooled frontier.
pub fn score_panel(panel: &PanelDataset, spec: &DeaModelSpec) -> Result<Vec<DeaScore>> {
    let problems: Vec<DeaProblem> = match spec.scope {
        FrontierScope::PerYear => panel
            .years()
            .into_iter()
            .map(|y| build_dea_problem(panel, spec, Some(y)))
            .filter(|r| !matches!(r, Err(Error::EmptyFrontier(_))))
            .collect::<Result<_>>()?,
        FrontierScope::Pooled => vec![build_dea_problem(panel, spec, None)?],
    };
    let mut scores = Vec::new();
    for p in &problems {
        scores.extend(score_all(p, spec.model)?);
    }
    Ok(scores)
}

/// Bank identifier of a score row (pooled labels carry a `/year` suffix).
pub fn bank_of(score: &DeaScore) -> &str {
    match (score.dmu.rsplit_once('/'), score.year) {
        (Some((bank, y)), Some(year)) if y == year.to_string() => bank,
        _ => &score.dmu,
    }
}

fn fmt_num(v: f64) -> String {
    v.to_string()
}

/// Writes the score table as CSV.
///
/// `names` supplies the slack column names (input, desirable, undesirable).
pub fn write_scores_csv<W: Write>(
    scores: &[DeaScore],
    names: (&[String], &[String], &[String]),
    writer: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["dmu", "year", "model", "value", "status", "efficient"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(names.0.iter().map(|n| format!("slack_in_{n}")));
    header.extend(names.1.iter().map(|n| format!("slack_good_{n}")));
    header.extend(names.2.iter().map(|n| format!("slack_bad_{n}")));
    header.push("lambdas".into());
    wtr.write_record(&header)?;
    for s in scores {
        let mut rec = vec![
            bank_of(s).to_string(),
            s.year.map(|y| y.to_string()).unwrap_or_default(),
            s.model.to_string(),
            fmt_num(s.value),
            s.status.as_str().to_string(),
            s.efficient.to_string(),
        ];
        let pad = |v: &[f64], k: usize| -> Vec<String> {
            (0..k).map(|i| v.get(i).map(|x| fmt_num(*x)).unwrap_or_default()).collect()
        };
        rec.extend(pad(&s.slacks.input, names.0.len()));
        rec.extend(pad(&s.slacks.desirable, names.1.len()));
        rec.extend(pad(&s.slacks.undesirable, names.2.len()));
        rec.push(
            s.peers
                .iter()
                .map(|(l, w)| format!("{l}:{w}"))
                .collect::<Vec<_>>()
                .join(";"),
        );
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ScoreJson<'a> {
    dmu: &'a str,
    year: Option<i32>,
    model: DeaModel,
    value: f64,
    status: &'static str,
    efficient: bool,
    slacks: &'a SlackProfile,
    lambdas: Vec<String>,
}

pub fn write_scores_json<W: Write>(scores: &[DeaScore], writer: W) -> Result<()> {
    let rows: Vec<ScoreJson> = scores
        .iter()
        .map(|s| ScoreJson {
            dmu: bank_of(s),
            year: s.year,
            model: s.model,
            value: s.value,
            status: s.status.as_str(),
            efficient: s.efficient,
            slacks: &s.slacks,
            lambdas: s.peers.iter().map(|(l, w)| format!("{l}:{w}")).collect(),
        })
        .collect();
    serde_json::to_writer_pretty(writer, &rows)?;
    Ok(())
}
