//! End-to-end analysis pipeline and the report renderer: descriptive table,
//! correlation table, regression tables and per-year average score series.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dea::{self, DeaModel, DeaModelSpec, DeaScore, FrontierScope, ScoreStatus};
use crate::error::{Error, Result};
use crate::panel::{self, ObsKey, PanelDataset};
use crate::regress::{self, RegressionResult, RegressionSpec};
use crate::sfa::{self, DesignOptions, SfaFit, SfaOptions};
use crate::stats::{self, CorrMatrix, DescribeRow, VifRow};

/// Variables of the descriptive-statistics table.
pub const DESCRIBE_VARIABLES: [&str; 13] = [
    "tobinsq", "sfa_eff", "supereff", "sbm_und", "sbm", "bcc", "size", "roa", "levr",
    "nplratio", "growth", "niiratio", "roe",
];

/// Columns of the rank-correlation table.
pub const CORRELATION_VARIABLES: [&str; 6] = ["tobinsq", "sfa_eff", "supereff", "sbm_und", "sbm", "bcc"];

/// Continuous regression variables clipped before the second stage.
pub const WINSOR_VARIABLES: [&str; 8] = [
    "tobinsq", "size", "roa", "roe", "levr", "nplratio", "growth", "niiratio",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Describe,
    Correlation,
    Vif,
    Baseline,
    Lead,
    FirstDifference,
    Series,
}

impl Section {
    pub const ALL: [Section; 7] = [
        Section::Describe,
        Section::Correlation,
        Section::Vif,
        Section::Baseline,
        Section::Lead,
        Section::FirstDifference,
        Section::Series,
    ];

    fn step(self) -> &'static str {
        match self {
            Section::Describe => "describe",
            Section::Correlation => "corr",
            Section::Vif => "vif",
            Section::Baseline => "regress baseline",
            Section::Lead => "regress lead",
            Section::FirstDifference => "regress first-difference",
            Section::Series => "dea/sfa scores",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub models: Vec<DeaModel>,
    pub scope: FrontierScope,
    pub shift_nonpositive: bool,
    pub run_sfa: bool,
    pub sfa: SfaOptions,
    pub include_trend: bool,
    pub winsor_p: f64,
    pub winsor_variables: Vec<String>,
    pub regressions: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            models: DeaModel::ALL.to_vec(),
            scope: FrontierScope::PerYear,
            shift_nonpositive: false,
            run_sfa: true,
            sfa: SfaOptions::default(),
            include_trend: true,
            winsor_p: 0.01,
            winsor_variables: WINSOR_VARIABLES.iter().map(|s| s.to_string()).collect(),
            regressions: true,
        }
    }
}

/// Everything a report can be rendered from. Absent steps stay `None`/empty.
#[derive(Debug, Clone, Default)]
pub struct ResultsBundle {
    /// Analysis panel with derived variables and efficiency columns joined.
    pub panel: Option<PanelDataset>,
    pub dea: BTreeMap<DeaModel, Vec<DeaScore>>,
    pub sfa: Option<SfaFit>,
    pub describe: Option<Vec<DescribeRow>>,
    pub correlations: Option<CorrMatrix>,
    pub vif: Option<Vec<VifRow>>,
    pub baseline: Option<Vec<RegressionResult>>,
    pub lead: Option<Vec<RegressionResult>>,
    pub first_difference: Option<Vec<RegressionResult>>,
    pub timings: Vec<(String, f64)>,
    pub warnings: Vec<String>,
}

/// Keyed efficiency values of one model, for joining onto a panel.
pub fn score_map(scores: &[DeaScore]) -> BTreeMap<ObsKey, f64> {
    scores
        .iter()
        .filter_map(|s| {
            Some((
                ObsKey {
                    bank_id: dea::bank_of(s).to_string(),
                    year: s.year?,
                },
                s.value,
            ))
        })
        .collect()
}

fn timed<T>(timings: &mut Vec<(String, f64)>, step: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| annotate(step, e))?;
    timings.push((step.to_string(), start.elapsed().as_secs_f64()));
    Ok(out)
}

fn annotate(step: &str, e: Error) -> Error {
    match e {
        Error::Data(m) => Error::Data(format!("[{step}] {m}")),
        other => other,
    }
}

fn run_grid(specs: &[RegressionSpec], panel: &PanelDataset, warnings: &mut Vec<String>) -> Result<Vec<RegressionResult>> {
    let mut out = Vec::new();
    for spec in specs {
        let r = if spec.transform == regress::DependentTransform::Diff {
            regress::first_difference_regression(spec, panel)?
        } else {
            regress::panel_regression(spec, panel)?
        };
        warnings.extend(r.warnings.iter().map(|w| format!("{}: {w}", r.label)));
        out.push(r);
    }
    Ok(out)
}

/// Runs derivation, DEA, SFA, winsorization, statistics and regressions.
pub fn run_pipeline(raw: &PanelDataset, config: &PipelineConfig) -> Result<ResultsBundle> {
    let mut bundle = ResultsBundle::default();
    let mut timings = Vec::new();
    let mut panel = timed(&mut timings, "derive", || panel::derive_variables(raw))?;

    for &model in &config.models {
        let mut spec = DeaModelSpec::production_approach(model);
        spec.scope = config.scope;
        spec.shift_nonpositive = config.shift_nonpositive;
        let scores = timed(&mut timings, &format!("dea {model}"), || dea::score_panel(&panel, &spec))?;
        let flagged: Vec<String> = scores
            .iter()
            .filter(|s| s.status == ScoreStatus::InfeasibleSuper)
            .map(|s| format!("{} {}", dea::bank_of(s), s.year.unwrap_or_default()))
            .collect();
        if !flagged.is_empty() {
            bundle
                .warnings
                .push(format!("{model}: InfeasibleSuper at {}", flagged.join(", ")));
        }
        panel = panel.with_keyed_column(model.column_name(), &score_map(&scores));
        bundle.dea.insert(model, scores);
    }

    if config.run_sfa {
        let fit = timed(&mut timings, "sfa", || {
            let design = sfa::build_frontier_design(
                &panel,
                &DesignOptions {
                    include_trend: config.include_trend,
                },
            )?;
            sfa::fit_frontier(&design, &config.sfa)
        })?;
        if !fit.converged {
            bundle.warnings.push(format!(
                "sfa: not converged after {} iterations (gradient norm {})",
                fit.iterations, fit.gradient_norm
            ));
        }
        let map: BTreeMap<ObsKey, f64> = fit
            .obs_keys
            .iter()
            .cloned()
            .zip(fit.efficiency.iter().copied())
            .collect();
        panel = panel.with_keyed_column("sfa_eff", &map);
        bundle.sfa = Some(fit);
    }

    let winsor_vars: Vec<&str> = config
        .winsor_variables
        .iter()
        .map(String::as_str)
        .filter(|v| panel.has_column(v))
        .collect();
    panel = timed(&mut timings, "winsorize", || panel::winsorize(&panel, &winsor_vars, config.winsor_p))?;

    let describe_vars: Vec<&str> = DESCRIBE_VARIABLES
        .iter()
        .copied()
        .filter(|v| panel.has_column(v))
        .collect();
    bundle.describe = Some(timed(&mut timings, "describe", || stats::describe(&panel, &describe_vars))?);

    let corr_vars: Vec<&str> = CORRELATION_VARIABLES
        .iter()
        .copied()
        .filter(|v| panel.has_column(v))
        .collect();
    if corr_vars.len() >= 2 {
        bundle.correlations = Some(timed(&mut timings, "corr", || {
            stats::correlation_matrix_panel(&panel, &corr_vars)
        })?);
    }

    let eff_vars: Vec<&str> = ["sfa_eff", "supereff", "sbm_und", "sbm", "bcc"]
        .into_iter()
        .filter(|v| panel.has_column(v))
        .collect();
    if eff_vars.len() >= 2 {
        bundle.vif = Some(timed(&mut timings, "vif", || stats::vif_panel(&panel, &eff_vars))?);
    }

    if config.regressions && panel.has_column("sfa_eff") && panel.has_column("supereff") {
        let mut warnings = Vec::new();
        bundle.baseline = Some(timed(&mut timings, "regress baseline", || {
            run_grid(&regress::baseline_specs(), &panel, &mut warnings)
        })?);
        bundle.lead = Some(timed(&mut timings, "regress lead", || {
            run_grid(&regress::lead_specs(), &panel, &mut warnings)
        })?);
        bundle.first_difference = Some(timed(&mut timings, "regress first-difference", || {
            run_grid(&regress::first_difference_specs(), &panel, &mut warnings)
        })?);
        bundle.warnings.extend(warnings);
    }

    bundle.panel = Some(panel);
    bundle.timings = timings;
    Ok(bundle)
}

/// One emitted report file.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFile {
    pub name: String,
    pub contents: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeriesPoint {
    pub year: i32,
    pub mean: f64,
    pub n: usize,
}

/// Mean value per year, years ascending.
pub fn per_year_mean(values: impl IntoIterator<Item = (i32, f64)>) -> Vec<SeriesPoint> {
    let mut acc: BTreeMap<i32, (f64, usize)> = BTreeMap::new();
    for (y, v) in values {
        if v.is_finite() {
            let e = acc.entry(y).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter()
        .map(|(year, (sum, n))| SeriesPoint {
            year,
            mean: sum / n as f64,
            n,
        })
        .collect()
}

fn series_csv(points: &[SeriesPoint]) -> Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for p in points {
        wtr.serialize(p)?;
    }
    wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Per-year average series: one per DEA model, plus SFA efficiency and Tobin's Q when available.
pub fn series(bundle: &ResultsBundle) -> Vec<(String, Vec<SeriesPoint>)> {
    let mut out = Vec::new();
    for (model, scores) in &bundle.dea {
        let pts = per_year_mean(scores.iter().filter_map(|s| Some((s.year?, s.value))));
        out.push((model.column_name().to_string(), pts));
    }
    if let Some(fit) = &bundle.sfa {
        let pts = per_year_mean(fit.obs_keys.iter().map(|k| k.year).zip(fit.efficiency.iter().copied()));
        out.push(("sfa_eff".into(), pts));
    }
    if let Some(panel) = &bundle.panel {
        if let Ok(q) = panel.column("tobinsq") {
            let pts = per_year_mean(
                panel
                    .keys()
                    .iter()
                    .zip(q)
                    .filter_map(|(k, v)| Some((k.year, (*v)?))),
            );
            out.push(("tobinsq".into(), pts));
        }
    }
    out
}

fn regression_files(name: &str, title: &str, results: &[RegressionResult]) -> Result<Vec<ReportFile>> {
    let mut csv_buf = Vec::new();
    regress::write_table_csv(results, &mut csv_buf)?;
    Ok(vec![
        ReportFile {
            name: format!("regress_{name}.md"),
            contents: regress::table_markdown(title, results).into_bytes(),
        },
        ReportFile {
            name: format!("regress_{name}.csv"),
            contents: csv_buf,
        },
    ])
}

fn section_files(bundle: &ResultsBundle, section: Section) -> Result<Option<Vec<ReportFile>>> {
    let files = match section {
        Section::Describe => {
            let Some(rows) = &bundle.describe else { return Ok(None) };
            let mut buf = Vec::new();
            stats::write_describe_csv(rows, &mut buf)?;
            vec![
                ReportFile {
                    name: "describe.md".into(),
                    contents: stats::describe_markdown(rows).into_bytes(),
                },
                ReportFile {
                    name: "describe.csv".into(),
                    contents: buf,
                },
            ]
        }
        Section::Correlation => {
            let Some(m) = &bundle.correlations else { return Ok(None) };
            let mut buf = Vec::new();
            m.write_csv(&mut buf)?;
            vec![
                ReportFile {
                    name: "corr_table.md".into(),
                    contents: m.to_markdown().into_bytes(),
                },
                ReportFile {
                    name: "corr_table.csv".into(),
                    contents: buf,
                },
            ]
        }
        Section::Vif => {
            let Some(rows) = &bundle.vif else { return Ok(None) };
            vec![ReportFile {
                name: "vif.md".into(),
                contents: stats::vif_markdown(rows).into_bytes(),
            }]
        }
        Section::Baseline => match &bundle.baseline {
            Some(r) => regression_files("baseline", "Efficiencies and Tobin's Q: baseline", r)?,
            None => return Ok(None),
        },
        Section::Lead => match &bundle.lead {
            Some(r) => regression_files("lead", "Efficiencies and next-year Tobin's Q", r)?,
            None => return Ok(None),
        },
        Section::FirstDifference => match &bundle.first_difference {
            Some(r) => regression_files("first_difference", "Changes in Tobin's Q", r)?,
            None => return Ok(None),
        },
        Section::Series => {
            let all = series(bundle);
            if bundle.dea.is_empty() && bundle.sfa.is_none() {
                return Ok(None);
            }
            all.iter()
                .map(|(name, pts)| {
                    Ok(ReportFile {
                        name: format!("series_{name}.csv"),
                        contents: series_csv(pts)?,
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(Some(files))
}

/// Renders the requested sections; any missing upstream result is an error.
pub fn render_sections(bundle: &ResultsBundle, sections: &[Section]) -> Result<Vec<ReportFile>> {
    let mut out = Vec::new();
    for &s in sections {
        match section_files(bundle, s)? {
            Some(files) => out.extend(files),
            None => return Err(Error::MissingStep(s.step().into())),
        }
    }
    Ok(out)
}

/// Renders every section the bundle supports. Skipped sections are listed in
/// the returned notices and in `report.md`.
pub fn render_report(bundle: &ResultsBundle) -> Result<(Vec<ReportFile>, Vec<String>)> {
    let mut files = Vec::new();
    let mut notices = Vec::new();
    let mut md = String::from("# Efficiency report\n\n");
    for s in Section::ALL {
        match section_files(bundle, s)? {
            Some(fs) => {
                for f in &fs {
                    if f.name.ends_with(".md") {
                        md.push_str(std::str::from_utf8(&f.contents).unwrap_or_default());
                        md.push('\n');
                    }
                }
                files.extend(fs);
            }
            None => notices.push(format!("skipped {}: no upstream result", s.step())),
        }
    }
    if !notices.is_empty() || !bundle.warnings.is_empty() {
        md.push_str("## Notices\n\n");
        for n in notices.iter().chain(&bundle.warnings) {
            let _ = writeln!(md, "- {n}");
        }
    }
    files.push(ReportFile {
        name: "report.md".into(),
        contents: md.into_bytes(),
    });
    Ok((files, notices))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_year_mean_groups_and_sorts() {
        let pts = per_year_mean([(2007, 1.0), (2006, 2.0), (2007, 3.0), (2006, f64::NAN)]);
        assert_eq!(
            pts,
            vec![
                SeriesPoint { year: 2006, mean: 2.0, n: 1 },
                SeriesPoint { year: 2007, mean: 2.0, n: 2 },
            ]
        );
    }

    #[test]
    fn empty_bundle_renders_notices_only() {
        let (files, notices) = render_report(&ResultsBundle::default()).unwrap();
        assert_eq!(files.len(), 1);
        assert_eq!(notices.len(), Section::ALL.len());
        assert!(matches!(
            render_sections(&ResultsBundle::default(), &[Section::Baseline]),
            Err(Error::MissingStep(_))
        ));
    }
}
