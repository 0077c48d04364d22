//! Unbalanced bank panel: ingestion, derived variables, winsorization and a
//! seeded synthetic generator used by the validation suites.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sfa;

/// Raw columns every input file must carry.
pub const REQUIRED_COLUMNS: &[&str] = &[
    "tier1",
    "interest_expense",
    "op_expense_ex_prov",
    "loss_provision",
    "net_profit",
    "npl",
    "total_assets",
    "total_debt",
    "book_equity",
    "deposits",
    "loans",
    "total_income",
    "noninterest_income",
    "ten_client_pct",
    "ten_owner_pct",
    "gdp_growth",
    "spread",
];

/// Raw columns that may be absent when derivable from other columns.
pub const OPTIONAL_COLUMNS: &[&str] = &["market_equity", "tobinsq", "roa"];

/// Columns produced by [`derive_variables`].
pub const DERIVED_COLUMNS: &[&str] = &[
    "tobinsq", "size", "roa", "roe", "levr", "nplratio", "growth", "niiratio",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BankType {
    #[serde(rename = "SOB")]
    Sob,
    #[serde(rename = "JSB")]
    Jsb,
    #[serde(rename = "CITY_RURAL")]
    CityRural,
}

impl BankType {
    pub const ALL: [BankType; 3] = [BankType::Sob, BankType::Jsb, BankType::CityRural];

    pub fn as_str(self) -> &'static str {
        match self {
            BankType::Sob => "SOB",
            BankType::Jsb => "JSB",
            BankType::CityRural => "CITY_RURAL",
        }
    }
}

impl fmt::Display for BankType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BankType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SOB" => Ok(BankType::Sob),
            "JSB" => Ok(BankType::Jsb),
            "CITY_RURAL" | "CITY" | "RURAL" => Ok(BankType::CityRural),
            other => Err(format!("unknown bank type `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObsKey {
    pub bank_id: String,
    pub year: i32,
}

impl fmt::Display for ObsKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.bank_id, self.year)
    }
}

/// Column-oriented panel keyed by `(bank_id, year)`, kept sorted by key.
///
/// Missing cells are `None`. Monetary columns are in 100 million RMB.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    keys: Vec<ObsKey>,
    bank_types: Vec<Option<BankType>>,
    columns: BTreeMap<String, Vec<Option<f64>>>,
}

impl PanelDataset {
    pub fn new(
        keys: Vec<ObsKey>,
        bank_types: Vec<Option<BankType>>,
        columns: BTreeMap<String, Vec<Option<f64>>>,
    ) -> Result<Self> {
        let n = keys.len();
        if bank_types.len() != n {
            return Err(Error::Data(format!(
                "{} bank types for {n} observations",
                bank_types.len()
            )));
        }
        for (name, col) in &columns {
            if col.len() != n {
                return Err(Error::Data(format!(
                    "column `{name}` has {} cells for {n} observations",
                    col.len()
                )));
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
        for w in order.windows(2) {
            if keys[w[0]] == keys[w[1]] {
                return Err(Error::Duplicate {
                    bank: keys[w[0]].bank_id.clone(),
                    year: keys[w[0]].year,
                });
            }
        }
        let keys_sorted = order.iter().map(|&i| keys[i].clone()).collect();
        let types_sorted = order.iter().map(|&i| bank_types[i]).collect();
        let columns = columns
            .into_iter()
            .map(|(name, col)| (name, order.iter().map(|&i| col[i]).collect()))
            .collect();
        Ok(Self {
            keys: keys_sorted,
            bank_types: types_sorted,
            columns,
        })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[ObsKey] {
        &self.keys
    }

    pub fn bank_types(&self) -> &[Option<BankType>] {
        &self.bank_types
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&[Option<f64>]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn value(&self, row: usize, name: &str) -> Option<f64> {
        self.columns.get(name).and_then(|c| c[row])
    }

    /// Returns a copy with `name` replaced (or added).
    pub fn with_column(&self, name: &str, values: Vec<Option<f64>>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::Data(format!(
                "column `{name}` has {} cells for {} observations",
                values.len(),
                self.len()
            )));
        }
        let mut out = self.clone();
        out.columns.insert(name.to_string(), values);
        Ok(out)
    }

    /// Adds a column from values keyed by observation; unmatched rows are missing.
    pub fn with_keyed_column(&self, name: &str, values: &BTreeMap<ObsKey, f64>) -> Self {
        let col = self.keys.iter().map(|k| values.get(k).copied()).collect();
        let mut out = self.clone();
        out.columns.insert(name.to_string(), col);
        out
    }

    pub fn row_of(&self, bank_id: &str, year: i32) -> Option<usize> {
        self.keys
            .binary_search_by(|k| (k.bank_id.as_str(), k.year).cmp(&(bank_id, year)))
            .ok()
    }

    pub fn years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = self.keys.iter().map(|k| k.year).collect();
        years.sort_unstable();
        years.dedup();
        years
    }

    pub fn bank_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.keys.iter().map(|k| k.bank_id.clone()).collect();
        ids.dedup();
        ids
    }

    /// Rows whose year falls in `[from, to]`.
    pub fn filter_years(&self, from: i32, to: i32) -> Self {
        self.select(|k| k.year >= from && k.year <= to)
    }

    fn select(&self, keep: impl Fn(&ObsKey) -> bool) -> Self {
        let rows: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.keys[i])).collect();
        Self {
            keys: rows.iter().map(|&i| self.keys[i].clone()).collect(),
            bank_types: rows.iter().map(|&i| self.bank_types[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|(name, col)| (name.clone(), rows.iter().map(|&i| col[i]).collect()))
                .collect(),
        }
    }
}

pub fn load_panel(path: &Path) -> Result<PanelDataset> {
    let file = std::fs::File::open(path)?;
    read_panel(file)
}

pub fn read_panel<R: Read>(reader: R) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let position = |name: &str| headers.iter().position(|h| h == name);

    for required in ["bank_id", "year", "bank_type"].iter().chain(REQUIRED_COLUMNS) {
        if position(required).is_none() {
            return Err(Error::Schema(required.to_string()));
        }
    }
    if position("market_equity").is_none() && position("tobinsq").is_none() {
        return Err(Error::Schema("market_equity".to_string()));
    }
    let bank_col = position("bank_id").unwrap();
    let year_col = position("year").unwrap();
    let type_col = position("bank_type").unwrap();

    let mut keys = Vec::new();
    let mut types = Vec::new();
    let mut columns: BTreeMap<String, Vec<Option<f64>>> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| ![bank_col, year_col, type_col].contains(i))
        .map(|(_, h)| (h.clone(), Vec::new()))
        .collect();

    for (row_idx, record) in rdr.records().enumerate() {
        let record = record?;
        let row = row_idx + 2; // header is line 1
        let cell = |i: usize| record.get(i).unwrap_or("");
        let bank_id = cell(bank_col).to_string();
        if bank_id.is_empty() {
            return Err(Error::Parse {
                row,
                column: "bank_id".into(),
                message: "empty bank identifier".into(),
            });
        }
        let year = cell(year_col).parse::<i32>().map_err(|e| Error::Parse {
            row,
            column: "year".into(),
            message: e.to_string(),
        })?;
        let bank_type = match cell(type_col) {
            "" => None,
            s => Some(s.parse::<BankType>().map_err(|message| Error::Parse {
                row,
                column: "bank_type".into(),
                message,
            })?),
        };
        keys.push(ObsKey { bank_id, year });
        types.push(bank_type);
        for (i, h) in headers.iter().enumerate() {
            if i == bank_col || i == year_col || i == type_col {
                continue;
            }
            let raw = cell(i);
            let value = if raw.is_empty() {
                None
            } else {
                let v = raw.parse::<f64>().map_err(|e| Error::Parse {
                    row,
                    column: h.clone(),
                    message: e.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row,
                        column: h.clone(),
                        message: format!("non-finite value `{raw}`"),
                    });
                }
                Some(v)
            };
            columns.get_mut(h).expect("column registered").push(value);
        }
    }
    PanelDataset::new(keys, types, columns)
}

/// Column order used when writing: schema columns first, then the rest by name.
fn write_order(panel: &PanelDataset) -> Vec<&str> {
    let schema: Vec<&str> = REQUIRED_COLUMNS
        .iter()
        .chain(OPTIONAL_COLUMNS)
        .chain(DERIVED_COLUMNS)
        .copied()
        .collect();
    let mut order: Vec<&str> = Vec::new();
    for name in &schema {
        if panel.has_column(name) && !order.contains(name) {
            order.push(name);
        }
    }
    for name in panel.column_names() {
        if !order.contains(&name) {
            order.push(name);
        }
    }
    order
}

pub fn write_panel<W: Write>(panel: &PanelDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let order = write_order(panel);
    let mut header = vec!["bank_id", "year", "bank_type"];
    header.extend(order.iter().copied());
    wtr.write_record(&header)?;
    for (i, key) in panel.keys.iter().enumerate() {
        let mut record = vec![
            key.bank_id.clone(),
            key.year.to_string(),
            panel.bank_types[i].map(|t| t.to_string()).unwrap_or_default(),
        ];
        for name in &order {
            record.push(fmt_cell(panel.columns[*name][i]));
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_panel(panel: &PanelDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_panel(panel, file)
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn ratio(
    panel: &PanelDataset,
    num: &str,
    den: &str,
    zero_keys: &mut Vec<String>,
) -> Result<Vec<Option<f64>>> {
    let a = panel.column(num)?;
    let b = panel.column(den)?;
    Ok(a.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (x, y))| match (x, y) {
            (Some(_), Some(d)) if *d == 0.0 => {
                zero_keys.push(format!("{} {den}", panel.keys[i]));
                None
            }
            (Some(x), Some(d)) => Some(x / d),
            _ => None,
        })
        .collect())
}

/// Computes the analysis variables from their raw components.
///
/// `tobinsq` and `roa` are kept when supplied; everything else is recomputed,
/// so deriving twice is a no-op.
pub fn derive_variables(panel: &PanelDataset) -> Result<PanelDataset> {
    let mut zero_keys = Vec::new();
    let mut out = panel.clone();

    let supplied_q = panel.columns.get("tobinsq");
    if supplied_q.is_none() || supplied_q.is_some_and(|c| c.iter().any(Option::is_none)) {
        let ta = panel.column("total_assets")?;
        let be = panel.column("book_equity")?;
        let me = panel.column("market_equity").ok();
        let mut q = Vec::with_capacity(panel.len());
        for i in 0..panel.len() {
            if let Some(v) = supplied_q.and_then(|c| c[i]) {
                q.push(Some(v));
                continue;
            }
            q.push(match (ta[i], be[i], me.and_then(|c| c[i])) {
                (Some(t), _, _) if t == 0.0 => {
                    zero_keys.push(format!("{} total_assets", panel.keys[i]));
                    None
                }
                (Some(t), Some(b), Some(m)) => Some((t - b + m) / t),
                _ => None,
            });
        }
        out.columns.insert("tobinsq".into(), q);
    }

    let ta = panel.column("total_assets")?;
    let size = ta
        .iter()
        .enumerate()
        .map(|(i, v)| match v {
            Some(t) if *t <= 0.0 => {
                zero_keys.push(format!("{} total_assets", panel.keys[i]));
                None
            }
            Some(t) => Some(t.ln()),
            None => None,
        })
        .collect();
    out.columns.insert("size".into(), size);

    let supplied_roa = panel.columns.get("roa");
    let derived_roa = ratio(panel, "net_profit", "total_assets", &mut zero_keys)?;
    let roa = match supplied_roa {
        Some(col) => col.iter().zip(&derived_roa).map(|(s, d)| s.or(*d)).collect(),
        None => derived_roa,
    };
    out.columns.insert("roa".into(), roa);
    out.columns.insert(
        "roe".into(),
        ratio(panel, "net_profit", "book_equity", &mut zero_keys)?,
    );
    out.columns.insert(
        "levr".into(),
        ratio(panel, "total_debt", "total_assets", &mut zero_keys)?,
    );
    out.columns.insert(
        "nplratio".into(),
        ratio(panel, "npl", "loans", &mut zero_keys)?,
    );
    out.columns.insert(
        "niiratio".into(),
        ratio(panel, "noninterest_income", "total_income", &mut zero_keys)?,
    );

    // Growth needs the same bank's total assets in the immediately preceding year.
    let mut growth = vec![None; panel.len()];
    for i in 1..panel.len() {
        let (prev, cur) = (&panel.keys[i - 1], &panel.keys[i]);
        if prev.bank_id != cur.bank_id || prev.year + 1 != cur.year {
            continue;
        }
        if let (Some(a0), Some(a1)) = (ta[i - 1], ta[i]) {
            if a0 == 0.0 {
                zero_keys.push(format!("{} total_assets", prev));
            } else {
                growth[i] = Some(a1 / a0 - 1.0);
            }
        }
    }
    out.columns.insert("growth".into(), growth);

    if !zero_keys.is_empty() {
        zero_keys.sort();
        zero_keys.dedup();
        return Err(Error::Data(format!(
            "zero or non-positive denominator at {}",
            zero_keys.join("; ")
        )));
    }
    Ok(out)
}

/// Type-7 quantile (linear interpolation between order statistics) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Clip bounds `(low, high)` at the `p` and `1 - p` quantiles of the non-missing values.
pub fn winsor_bounds(values: &[Option<f64>], p: f64) -> Option<(f64, f64)> {
    let mut sorted: Vec<f64> = values.iter().flatten().copied().collect();
    if sorted.is_empty() {
        return None;
    }
    sorted.sort_by(f64::total_cmp);
    Some((quantile_sorted(&sorted, p), quantile_sorted(&sorted, 1.0 - p)))
}

/// Clips each variable at its pooled `p` and `1 - p` quantiles.
pub fn winsorize(panel: &PanelDataset, variables: &[&str], p: f64) -> Result<PanelDataset> {
    if !(0.0..0.5).contains(&p) {
        return Err(Error::Domain(format!("winsorization fraction {p} not in [0, 0.5)")));
    }
    let mut out = panel.clone();
    for &name in variables {
        let col = panel.column(name)?;
        let Some((lo, hi)) = winsor_bounds(col, p) else {
            continue;
        };
        let clipped = col.iter().map(|v| v.map(|x| x.clamp(lo, hi))).collect();
        out.columns.insert(name.to_string(), clipped);
    }
    Ok(out)
}

/// Parameters of the seeded synthetic panel generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_banks: usize,
    pub n_years: usize,
    pub first_year: i32,
    pub seed: u64,
    /// Translog coefficients over [`sfa::SYNTHETIC_TERM_COUNT`] terms, ordered as
    /// [`sfa::translog_term_names`] plus a trailing year trend.
    pub frontier_beta: Vec<f64>,
    pub sigma_v: f64,
    pub sigma_u: f64,
    /// Banks carrying zero inefficiency and non-negative noise.
    pub core_size: usize,
    /// Standard deviation of the log ratios that separate the frontier inputs
    /// from bank size.
    pub ratio_dispersion: f64,
    pub missingness: f64,
    /// Loading of log(Q - 1) on true efficiency exp(-u).
    pub q_loading: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_banks: 42,
            n_years: 18,
            first_year: 2006,
            seed: 20_240_601,
            frontier_beta: default_frontier_beta(),
            sigma_v: 0.15,
            sigma_u: 0.3,
            core_size: 4,
            ratio_dispersion: 0.3,
            missingness: 0.0,
            q_loading: 2.0,
        }
    }
}

/// A translog with elasticities that sum to roughly one in the size-driven inputs.
pub fn default_frontier_beta() -> Vec<f64> {
    let k = sfa::BASE_VARIABLES.len();
    let mut beta = vec![0.0; sfa::SYNTHETIC_TERM_COUNT];
    beta[0] = 5.5;
    let linear = [0.45, 0.35, -0.30, -0.25, -0.15, 0.30];
    beta[1..=k].copy_from_slice(&linear);
    // Small curvature: squares then crosses.
    for (j, b) in beta[1 + k..1 + 2 * k].iter_mut().enumerate() {
        *b = if j % 2 == 0 { -0.02 } else { 0.015 };
    }
    for (j, b) in beta[1 + 2 * k..sfa::SYNTHETIC_TERM_COUNT - 1].iter_mut().enumerate() {
        *b = [0.01, -0.01, 0.005][j % 3];
    }
    beta[sfa::SYNTHETIC_TERM_COUNT - 1] = 0.01;
    beta
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_banks == 0 || self.n_years == 0 {
            return Err(Error::Config("bank and year counts must be positive".into()));
        }
        if !(self.sigma_v > 0.0 && self.sigma_u > 0.0) {
            return Err(Error::Config("sigma_v and sigma_u must be positive".into()));
        }
        if !(0.0..=0.5).contains(&self.missingness) {
            return Err(Error::Config(format!(
                "missingness {} not in [0, 0.5]",
                self.missingness
            )));
        }
        if self.frontier_beta.len() != sfa::SYNTHETIC_TERM_COUNT {
            return Err(Error::Config(format!(
                "frontier_beta has {} entries, expected {}",
                self.frontier_beta.len(),
                sfa::SYNTHETIC_TERM_COUNT
            )));
        }
        if self.core_size > self.n_banks {
            return Err(Error::Config("core_size exceeds n_banks".into()));
        }
        if !(self.ratio_dispersion >= 0.0) {
            return Err(Error::Config("ratio_dispersion must be non-negative".into()));
        }
        Ok(())
    }
}

/// Generating values for one synthetic observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub bank_id: String,
    pub year: i32,
    pub core: bool,
    /// Translog frontier value x'β on the ln(π + 1) scale.
    pub frontier: f64,
    pub noise: f64,
    pub inefficiency: f64,
    pub efficiency: f64,
    pub tobinsq: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub panel: PanelDataset,
    pub truth: Vec<TruthRow>,
}

impl SyntheticPanel {
    pub fn write_truth<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for row in &self.truth {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

pub fn bank_type_for(index: usize, n_banks: usize) -> BankType {
    let n_sob = ((6.0 / 42.0) * n_banks as f64).round() as usize;
    let n_jsb = ((9.0 / 42.0) * n_banks as f64).round() as usize;
    if index < n_sob {
        BankType::Sob
    } else if index < n_sob + n_jsb {
        BankType::Jsb
    } else {
        BankType::CityRural
    }
}

struct Draw {
    bank: usize,
    year: i32,
    cols: HashMap<&'static str, f64>,
    q_noise: f64,
}

/// Builds a deterministic synthetic panel with a sidecar truth table.
///
/// Net profit follows the configured translog frontier on ln(π + 1) with a
/// normal/half-normal composed error; Tobin's Q loads on the true efficiency.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<SyntheticPanel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let disp = config.ratio_dispersion;

    let years: Vec<i32> = (0..config.n_years as i32)
        .map(|t| config.first_year + t)
        .collect();
    let gdp: Vec<f64> = years
        .iter()
        .enumerate()
        .map(|(t, _)| 0.11 - 0.003 * t as f64 + 0.005 * std_normal.sample(&mut rng))
        .collect();
    let spread: Vec<f64> = years
        .iter()
        .map(|_| 0.015 + 0.003 * std_normal.sample(&mut rng))
        .collect();

    let mut draws = Vec::new();
    let mut bank_alpha = Vec::new();
    for b in 0..config.n_banks {
        let kind = bank_type_for(b, config.n_banks);
        let (mean_size, sd_size) = match kind {
            BankType::Sob => (12.0, 0.5),
            BankType::Jsb => (10.5, 0.5),
            BankType::CityRural => (8.5, 0.8),
        };
        let mut log_ta = mean_size + sd_size * std_normal.sample(&mut rng);
        bank_alpha.push(0.3 * std_normal.sample(&mut rng));
        for (t, &year) in years.iter().enumerate() {
            if t > 0 {
                log_ta += 0.10 + 0.04 * std_normal.sample(&mut rng);
            }
            let mut z = || std_normal.sample(&mut rng);
            let ta = log_ta.exp();
            let deposits = ta * 0.7 * (disp * z()).exp();
            let loans = ta * 0.55 * (disp * z()).exp();
            let p1 = 0.025 * (disp * z()).exp();
            let p2 = 0.015 * (disp * z()).exp();
            let loss = loans * 0.01 * (disp * z()).exp();
            let opex = ta * 0.012 * (disp * z()).exp();
            let book_equity = ta * 0.075 * (0.15 * z()).exp();
            let total_income = ta * 0.03 * (0.15 * z()).exp();
            let q_noise = 0.15 * z();
            let mut cols = HashMap::new();
            cols.insert("total_assets", ta);
            cols.insert("deposits", deposits);
            cols.insert("loans", loans);
            cols.insert("interest_expense", deposits * p1);
            cols.insert("npl", loans * p2);
            cols.insert("loss_provision", loss);
            cols.insert("op_expense_ex_prov", opex);
            cols.insert("book_equity", book_equity);
            cols.insert("total_debt", ta - book_equity);
            cols.insert("tier1", book_equity * rng.random_range(0.8..0.95));
            cols.insert("total_income", total_income);
            cols.insert(
                "noninterest_income",
                total_income * rng.random_range(0.1..0.35),
            );
            cols.insert("ten_client_pct", rng.random_range(5.0..40.0));
            cols.insert("ten_owner_pct", rng.random_range(30.0..85.0));
            cols.insert("gdp_growth", gdp[t]);
            cols.insert("spread", spread[t]);
            let missing = rng.random::<f64>() < config.missingness;
            if !missing {
                draws.push(Draw {
                    bank: b,
                    year,
                    cols,
                    q_noise,
                });
            }
        }
    }
    if draws.is_empty() {
        return Err(Error::Config("missingness removed every observation".into()));
    }

    // Frontier regressors use the realized sample, exactly as the design builder does.
    let base: Vec<Vec<f64>> = sfa::BASE_VARIABLES
        .iter()
        .map(|(_, num, den)| {
            draws
                .iter()
                .map(|d| match den {
                    Some(den) => d.cols[num] / d.cols[den],
                    None => d.cols[num],
                })
                .collect()
        })
        .collect();
    let first_year = draws.iter().map(|d| d.year).min().unwrap();
    let trend: Vec<f64> = draws.iter().map(|d| (d.year - first_year) as f64).collect();
    let (rows, _) = sfa::translog_rows(&base, Some(&trend));

    let half_normal = Normal::new(0.0, config.sigma_u).expect("positive sigma_u");
    let noise = Normal::new(0.0, config.sigma_v).expect("positive sigma_v");

    let mut keys = Vec::with_capacity(draws.len());
    let mut types = Vec::with_capacity(draws.len());
    let mut columns: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    let mut truth = Vec::with_capacity(draws.len());
    for (d, x) in draws.iter().zip(&rows) {
        let core = d.bank < config.core_size;
        let frontier: f64 = x.iter().zip(&config.frontier_beta).map(|(a, b)| a * b).sum();
        let (mut v, mut u);
        let mut attempts = 0;
        loop {
            v = noise.sample(&mut rng);
            u = if core {
                v = v.abs();
                0.0
            } else {
                half_normal.sample(&mut rng).abs()
            };
            attempts += 1;
            if (frontier + v - u).exp() - 1.0 > 0.01 || attempts > 1000 {
                break;
            }
        }
        let profit = (frontier + v - u).exp() - 1.0;
        let efficiency = (-u).exp();
        let q = 1.0
            + (bank_alpha[d.bank] + config.q_loading * (efficiency - 0.75) + d.q_noise).exp();
        let ta = d.cols["total_assets"];
        let be = d.cols["book_equity"];
        let bank_id = format!("B{:03}", d.bank + 1);

        keys.push(ObsKey {
            bank_id: bank_id.clone(),
            year: d.year,
        });
        types.push(Some(bank_type_for(d.bank, config.n_banks)));
        for (name, value) in &d.cols {
            columns.entry(name.to_string()).or_default().push(Some(*value));
        }
        columns
            .entry("net_profit".into())
            .or_default()
            .push(Some(profit));
        columns
            .entry("market_equity".into())
            .or_default()
            .push(Some((q - 1.0) * ta + be));
        truth.push(TruthRow {
            bank_id,
            year: d.year,
            core,
            frontier,
            noise: v,
            inefficiency: u,
            efficiency,
            tobinsq: q,
        });
    }
    let panel = PanelDataset::new(keys, types, columns)?;
    truth.sort_by(|a, b| (&a.bank_id, a.year).cmp(&(&b.bank_id, b.year)));
    Ok(SyntheticPanel { panel, truth })
}

/// Replaces Tobin's Q with a linear function of the column `driver`:
/// Q = 1.5 + loading · (d − mean d) + α_bank + e, α ~ N(0, 0.2²), e ~ N(0, noise_sd²).
///
/// Rows missing `driver` get a missing Q.
pub fn regenerate_tobinsq(
    panel: &PanelDataset,
    driver: &str,
    loading: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<PanelDataset> {
    if !(noise_sd >= 0.0) {
        return Err(Error::Config("noise_sd must be non-negative".into()));
    }
    let d = panel.column(driver)?;
    let present: Vec<f64> = d.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::InsufficientData(format!("`{driver}` has no values")));
    }
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut alpha: BTreeMap<&str, f64> = BTreeMap::new();
    for id in panel.keys().iter().map(|k| k.bank_id.as_str()) {
        if !alpha.contains_key(id) {
            alpha.insert(id, 0.2 * std_normal.sample(&mut rng));
        }
    }
    let q = panel
        .keys()
        .iter()
        .zip(d)
        .map(|(k, v)| {
            let e = noise_sd * std_normal.sample(&mut rng);
            v.map(|x| 1.5 + loading * (x - mean) + alpha[k.bank_id.as_str()] + e)
        })
        .collect();
    let mut out = panel.clone();
    out.columns.insert("tobinsq".into(), q);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_panel() -> PanelDataset {
        let keys = vec![
            ObsKey { bank_id: "A".into(), year: 2007 },
            ObsKey { bank_id: "A".into(), year: 2006 },
            ObsKey { bank_id: "B".into(), year: 2006 },
            ObsKey { bank_id: "A".into(), year: 2009 },
        ];
        let mut cols = BTreeMap::new();
        cols.insert(
            "total_assets".to_string(),
            vec![Some(110.0), Some(100.0), Some(50.0), Some(130.0)],
        );
        PanelDataset::new(keys, vec![Some(BankType::Sob); 4], cols).unwrap()
    }

    #[test]
    fn rows_are_sorted_by_key() {
        let p = tiny_panel();
        let years: Vec<i32> = p.keys().iter().map(|k| k.year).collect();
        assert_eq!(years, vec![2006, 2007, 2009, 2006]);
        assert_eq!(p.row_of("A", 2009), Some(2));
        assert_eq!(p.row_of("C", 2009), None);
    }

    #[test]
    fn duplicate_keys_rejected() {
        let keys = vec![
            ObsKey { bank_id: "A".into(), year: 2006 },
            ObsKey { bank_id: "A".into(), year: 2006 },
        ];
        let err = PanelDataset::new(keys, vec![None, None], BTreeMap::new()).unwrap_err();
        assert!(matches!(err, Error::Duplicate { .. }));
    }

    #[test]
    fn type7_quantile_on_one_to_two_hundred() {
        let v: Vec<f64> = (1..=200).map(f64::from).collect();
        assert!((quantile_sorted(&v, 0.01) - 2.99).abs() < 1e-12);
        assert!((quantile_sorted(&v, 0.99) - 198.01).abs() < 1e-12);
        assert_eq!(quantile_sorted(&[4.0], 0.3), 4.0);
    }

    #[test]
    fn winsorize_rejects_bad_fraction_and_unknown_variable() {
        let p = tiny_panel();
        assert!(matches!(winsorize(&p, &["total_assets"], 0.5), Err(Error::Domain(_))));
        assert!(matches!(winsorize(&p, &["nope"], 0.01), Err(Error::UnknownVariable(_))));
        assert_eq!(winsorize(&p, &["total_assets"], 0.0).unwrap(), p);
    }

    #[test]
    fn bank_type_shares_follow_reference_sample() {
        let counts = BankType::ALL.map(|t| (0..42).filter(|&i| bank_type_for(i, 42) == t).count());
        assert_eq!(counts, [6, 9, 27]);
    }

    #[test]
    fn config_validation() {
        let mut c = SyntheticConfig::default();
        c.missingness = 0.6;
        assert!(c.validate().is_err());
        let mut c = SyntheticConfig::default();
        c.sigma_u = 0.0;
        assert!(c.validate().is_err());
        let mut c = SyntheticConfig::default();
        c.frontier_beta.pop();
        assert!(c.validate().is_err());
    }
}
