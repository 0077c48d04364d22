//! Dense two-phase primal simplex.
//!
//! Every DEA scorer in this crate reduces to a small dense linear program, so
//! the solver favours determinism over speed: full tableau, Bland's
//! lowest-index rule for both the entering and the leaving variable, and
//! fixed tolerances.

use std::fmt;

use nalgebra::DMatrix;

use thiserror::Error;

/// Primal feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Reduced-cost optimality tolerance.
pub const OPTIMALITY_TOL: f64 = 1e-9;
/// Tolerance used when comparing reported values.
pub const REPORT_TOL: f64 = 1e-6;

const PIVOT_TOL: f64 = 1e-9;
const RATIO_TIE_TOL: f64 = 1e-12;
const MAX_ITERATIONS: usize = 200_000;
const REFACTOR_EVERY: usize = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("iteration limit of {0} pivots reached")]
    IterationLimit(usize),
    #[error("solution violates row {row} by {violation:e}")]
    Numerical { row: usize, violation: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintSense {
    Le,
    Eq,
    Ge,
}

impl ConstraintSense {
    fn flipped(self) -> Self {
        match self {
            ConstraintSense::Le => ConstraintSense::Ge,
            ConstraintSense::Ge => ConstraintSense::Le,
            ConstraintSense::Eq => ConstraintSense::Eq,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            ConstraintSense::Le => "<=",
            ConstraintSense::Eq => "=",
            ConstraintSense::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub cost: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
    pub senses: Vec<ConstraintSense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// A program over `n` variables, all bounded below by zero, with no rows.
    pub fn new(sense: Sense, cost: Vec<f64>) -> Self {
        let n = cost.len();
        Self {
            sense,
            cost,
            rows: Vec::new(),
            senses: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row(&mut self, coefficients: Vec<f64>, sense: ConstraintSense, rhs: f64) {
        self.rows.push(coefficients);
        self.senses.push(sense);
        self.rhs.push(rhs);
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    pub fn validate(&self) -> Result<(), LpError> {
        let n = self.cost.len();
        let m = self.rows.len();
        if self.senses.len() != m || self.rhs.len() != m {
            return Err(LpError::Dimension(format!(
                "{m} rows but {} senses and {} right-hand sides",
                self.senses.len(),
                self.rhs.len()
            )));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Dimension(format!(
                "{n} variables but {} lower and {} upper bounds",
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != n {
                return Err(LpError::Dimension(format!(
                    "row {i} has {} coefficients, expected {n}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(LpError::Input(format!("non-finite coefficient at ({i}, {j})")));
            }
        }
        if let Some(j) = self.cost.iter().position(|v| !v.is_finite()) {
            return Err(LpError::Input(format!("non-finite cost coefficient {j}")));
        }
        if let Some(i) = self.rhs.iter().position(|v| !v.is_finite()) {
            return Err(LpError::Input(format!("non-finite right-hand side {i}")));
        }
        for j in 0..n {
            let (lo, up) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || up.is_nan() || lo == f64::INFINITY || up == f64::NEG_INFINITY {
                return Err(LpError::Input(format!("invalid bounds on variable {j}")));
            }
            if lo > up {
                return Err(LpError::Input(format!(
                    "lower bound {lo} exceeds upper bound {up} on variable {j}"
                )));
            }
        }
        Ok(())
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for ((row, sense), rhs) in self.rows.iter().zip(&self.senses).zip(&self.rhs) {
            let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match sense {
                ConstraintSense::Le => lhs - rhs,
                ConstraintSense::Ge => rhs - lhs,
                ConstraintSense::Eq => (lhs - rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (j, &v) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - v).max(v - self.upper[j]);
        }
        worst
    }

    /// Row with the largest violation at `x`, measured against the row's own
    /// magnitude `1 + |b| + max |a_j x_j|`.
    fn worst_relative_violation(&self, x: &[f64]) -> Option<(usize, f64)> {
        let mut worst: Option<(usize, f64)> = None;
        for (i, ((row, sense), rhs)) in self.rows.iter().zip(&self.senses).zip(&self.rhs).enumerate() {
            let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            let size = row.iter().zip(x).fold(1.0 + rhs.abs(), |m, (a, v)| m.max((a * v).abs()));
            let v = match sense {
                ConstraintSense::Le => lhs - rhs,
                ConstraintSense::Ge => rhs - lhs,
                ConstraintSense::Eq => (lhs - rhs).abs(),
            } / size;
            if worst.is_none_or(|(_, w)| v > w) {
                worst = Some((i, v));
            }
        }
        worst
    }
}

impl fmt::Display for LinearProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let term_list = |coefs: &[f64]| {
            let terms: Vec<String> = coefs
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(j, c)| format!("{c:+} x{j}"))
                .collect();
            if terms.is_empty() {
                "0".to_string()
            } else {
                terms.join(" ")
            }
        };
        let sense = match self.sense {
            Sense::Minimize => "minimize",
            Sense::Maximize => "maximize",
        };
        writeln!(f, "{sense}")?;
        writeln!(f, "  obj: {}", term_list(&self.cost))?;
        writeln!(f, "subject to")?;
        for (i, row) in self.rows.iter().enumerate() {
            writeln!(
                f,
                "  c{i}: {} {} {}",
                term_list(row),
                self.senses[i].symbol(),
                self.rhs[i]
            )?;
        }
        writeln!(f, "bounds")?;
        for j in 0..self.num_vars() {
            writeln!(f, "  {} <= x{j} <= {}", self.lower[j], self.upper[j])?;
        }
        write!(f, "end")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Only meaningful when `status` is `Optimal`.
    pub objective: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// How an original variable maps onto non-negative standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = lower + z
    Shift { col: usize, lower: f64 },
    /// x = upper - z
    Mirror { col: usize, upper: f64 },
    /// x = z⁺ - z⁻
    Split { pos: usize, neg: usize },
}

struct Tableau {
    /// `rows × (cols + 1)`, last entry of each row is the right-hand side.
    t: Vec<Vec<f64>>,
    /// The starting tableau, kept for refactorization.
    original: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    iterations: usize,
    since_refactor: usize,
}

enum PhaseOutcome {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.t[r][self.cols]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.cols + 1;
        let p = self.t[r][c];
        for k in 0..width {
            self.t[r][k] /= p;
        }
        self.t[r][c] = 1.0;
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for k in 0..width {
                    row[k] -= factor * pivot_row[k];
                }
                row[c] = 0.0;
            }
        }
        // Rounding can push a zero basic variable slightly negative; a later
        // small pivot would then amplify it into a real infeasibility.
        for row in self.t.iter_mut() {
            let b = &mut row[width - 1];
            if *b < 0.0 && *b > -FEASIBILITY_TOL {
                *b = 0.0;
            }
        }
        self.basis[r] = c;
        self.iterations += 1;
        self.since_refactor += 1;
    }

    /// Rebuilds the tableau as B⁻¹·A from the starting rows, discarding
    /// accumulated rounding. Leaves it unchanged if the basis is singular.
    fn refactor(&mut self) {
        self.since_refactor = 0;
        let m = self.t.len();
        let width = self.cols + 1;
        let b = DMatrix::from_fn(m, m, |i, k| self.original[i][self.basis[k]]);
        let a = DMatrix::from_fn(m, width, |i, j| self.original[i][j]);
        let Some(fresh) = b.lu().solve(&a) else { return };
        if fresh.iter().any(|v| !v.is_finite()) {
            return;
        }
        for (r, row) in self.t.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = fresh[(r, j)];
            }
        }
        for (r, &c) in self.basis.iter().enumerate() {
            for (i, row) in self.t.iter_mut().enumerate() {
                row[c] = if i == r { 1.0 } else { 0.0 };
            }
            let b = &mut self.t[r][width - 1];
            if *b < 0.0 && *b > -FEASIBILITY_TOL {
                *b = 0.0;
            }
        }
    }

    fn remove_row(&mut self, r: usize) {
        self.t.remove(r);
        self.original.remove(r);
        self.basis.remove(r);
    }

    /// Reduced costs `c_j - c_B B⁻¹ a_j` for the current basis.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (j, dj) in d.iter_mut().enumerate() {
                    *dj -= cb * self.t[r][j];
                }
            }
        }
        d
    }

    /// Minimizes `cost` over the columns flagged in `allowed`.
    fn optimize(&mut self, cost: &[f64], allowed: &[bool]) -> Result<PhaseOutcome, LpError> {
        loop {
            if self.iterations >= MAX_ITERATIONS {
                return Err(LpError::IterationLimit(MAX_ITERATIONS));
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor();
            }
            let d = self.reduced_costs(cost);
            let entering = (0..self.cols).find(|&j| allowed[j] && d[j] < -OPTIMALITY_TOL);
            let Some(c) = entering else {
                if self.since_refactor > 0 {
                    self.refactor();
                    continue;
                }
                return Ok(PhaseOutcome::Optimal);
            };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.t.len() {
                let a = self.t[r][c];
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((br, best)) => {
                        if ratio < best - RATIO_TIE_TOL * (1.0 + best) {
                            Some((r, ratio))
                        } else if ratio <= best + RATIO_TIE_TOL * (1.0 + best)
                            && self.basis[r] < self.basis[br]
                        {
                            Some((r, ratio))
                        } else {
                            Some((br, best))
                        }
                    }
                };
            }
            match leave {
                None => return Ok(PhaseOutcome::Unbounded),
                Some((r, _)) => self.pivot(r, c),
            }
        }
    }
}

/// Solves `lp` with the two-phase primal simplex method.
pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    lp.validate()?;
    let n = lp.num_vars();

    // Map bounded variables onto non-negative columns.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, up) = (lp.lower[j], lp.upper[j]);
        if lo.is_finite() {
            maps.push(VarMap::Shift { col: ncols, lower: lo });
            if up.is_finite() {
                bound_rows.push((ncols, up - lo));
            }
            ncols += 1;
        } else if up.is_finite() {
            maps.push(VarMap::Mirror { col: ncols, upper: up });
            ncols += 1;
        } else {
            maps.push(VarMap::Split { pos: ncols, neg: ncols + 1 });
            ncols += 2;
        }
    }
    let structural = ncols;

    // Rows in the transformed variables: (coefficients, sense, rhs).
    let mut rows: Vec<(Vec<f64>, ConstraintSense, f64)> = Vec::new();
    for ((row, &sense), &rhs) in lp.rows.iter().zip(&lp.senses).zip(&lp.rhs) {
        let mut coefs = vec![0.0; structural];
        let mut b = rhs;
        for (j, &a) in row.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift { col, lower } => {
                    coefs[col] += a;
                    b -= a * lower;
                }
                VarMap::Mirror { col, upper } => {
                    coefs[col] -= a;
                    b -= a * upper;
                }
                VarMap::Split { pos, neg } => {
                    coefs[pos] += a;
                    coefs[neg] -= a;
                }
            }
        }
        rows.push((coefs, sense, b));
    }
    for &(col, width) in &bound_rows {
        let mut coefs = vec![0.0; structural];
        coefs[col] = 1.0;
        rows.push((coefs, ConstraintSense::Le, width));
    }
    for (coefs, sense, b) in rows.iter_mut() {
        if *b < 0.0 {
            coefs.iter_mut().for_each(|v| *v = -*v);
            *b = -*b;
            *sense = sense.flipped();
        }
    }

    // Equilibrate rows, then columns, so the tolerances see entries near one.
    for (coefs, _, b) in rows.iter_mut() {
        let big = coefs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if big > 0.0 {
            coefs.iter_mut().for_each(|v| *v /= big);
            *b /= big;
        }
    }
    let col_scale: Vec<f64> = (0..structural)
        .map(|j| {
            let big = rows.iter().fold(0.0f64, |a, (c, _, _)| a.max(c[j].abs()));
            if big > 0.0 { 1.0 / big } else { 1.0 }
        })
        .collect();
    for (coefs, _, _) in rows.iter_mut() {
        coefs.iter_mut().zip(&col_scale).for_each(|(v, s)| *v *= s);
    }

    let mut cost = vec![0.0; structural];
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    for (j, &c) in lp.cost.iter().enumerate() {
        match maps[j] {
            VarMap::Shift { col, .. } => cost[col] += sign * c,
            VarMap::Mirror { col, .. } => cost[col] -= sign * c,
            VarMap::Split { pos, neg } => {
                cost[pos] += sign * c;
                cost[neg] -= sign * c;
            }
        }
    }

    cost.iter_mut().zip(&col_scale).for_each(|(c, s)| *c *= s);

    // Slack and surplus columns, then artificials.
    let m = rows.len();
    let n_slack = rows
        .iter()
        .filter(|(_, s, _)| *s != ConstraintSense::Eq)
        .count();
    let n_art = rows
        .iter()
        .filter(|(_, s, _)| *s != ConstraintSense::Le)
        .count();
    let art_start = structural + n_slack;
    let cols = art_start + n_art;

    let mut t = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0; m];
    let mut next_slack = structural;
    let mut next_art = art_start;
    for (r, (coefs, sense, b)) in rows.iter().enumerate() {
        t[r][..structural].copy_from_slice(coefs);
        t[r][cols] = *b;
        match sense {
            ConstraintSense::Le => {
                t[r][next_slack] = 1.0;
                basis[r] = next_slack;
                next_slack += 1;
            }
            ConstraintSense::Ge => {
                t[r][next_slack] = -1.0;
                next_slack += 1;
                t[r][next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
            ConstraintSense::Eq => {
                t[r][next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
        }
    }
    let mut tab = Tableau {
        original: t.clone(),
        t,
        basis,
        cols,
        iterations: 0,
        since_refactor: 0,
    };

    let b_scale = 1.0 + rows.iter().map(|(_, _, b)| b.abs()).fold(0.0, f64::max);

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        phase1[art_start..].iter_mut().for_each(|v| *v = 1.0);
        let allowed = vec![true; cols];
        tab.optimize(&phase1, &allowed)?;
        let infeasibility: f64 = (0..m)
            .filter(|&r| tab.basis[r] >= art_start)
            .map(|r| tab.rhs(r))
            .sum();
        if infeasibility > FEASIBILITY_TOL * b_scale {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NAN,
                x: vec![f64::NAN; n],
                iterations: tab.iterations,
            });
        }
        // Drive zero-level artificials out of the basis; drop redundant rows.
        let mut r = 0;
        while r < tab.t.len() {
            if tab.basis[r] >= art_start {
                let col = (0..art_start)
                    .filter(|&j| tab.t[r][j].abs() > FEASIBILITY_TOL)
                    .max_by(|&a, &b| tab.t[r][a].abs().total_cmp(&tab.t[r][b].abs()));
                match col {
                    Some(c) => {
                        tab.pivot(r, c);
                        r += 1;
                    }
                    None => tab.remove_row(r),
                }
            } else {
                r += 1;
            }
        }
    }

    let mut phase2 = cost;
    phase2.resize(cols, 0.0);
    let allowed: Vec<bool> = (0..cols).map(|j| j < art_start).collect();
    let outcome = tab.optimize(&phase2, &allowed)?;
    if let PhaseOutcome::Unbounded = outcome {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            objective: f64::NAN,
            x: vec![f64::NAN; n],
            iterations: tab.iterations,
        });
    }

    let mut z = vec![0.0; cols];
    for (r, &b) in tab.basis.iter().enumerate() {
        z[b] = tab.rhs(r).max(0.0);
    }
    z.iter_mut().zip(&col_scale).for_each(|(v, s)| *v *= s);
    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Shift { col, lower } => lower + z[col],
            VarMap::Mirror { col, upper } => upper - z[col],
            VarMap::Split { pos, neg } => z[pos] - z[neg],
        })
        .collect();
    if let Some((row, violation)) = lp.worst_relative_violation(&x) {
        if violation > REPORT_TOL {
            return Err(LpError::Numerical { row, violation });
        }
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective: lp.objective_at(&x),
        x,
        iterations: tab.iterations,
    })
}
