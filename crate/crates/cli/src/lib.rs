//! Batch frontend: `describe`, `dea`, `sfa`, `corr`, `regress`, `synth` and `report`.
//!
//! Every run writes its outputs plus a `manifest.json` listing a SHA-256 hash
//! per output file. A failed run removes whatever it had already written.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use frontier::dea::{self, DeaModel, DeaModelSpec, FrontierScope, ReturnsToScale};
use frontier::panel::{self, PanelDataset, SyntheticConfig};
use frontier::regress::{self, RegressionResult};
use frontier::report::{self, PipelineConfig, ReportFile, ResultsBundle};
use frontier::sfa::{self, DesignOptions, SfaOptions};
use frontier::stats;
use frontier::Error;

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "FRONTIER_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "frontier", version, about = "Bank efficiency frontiers and second-stage analysis")]
pub struct Cli {
    /// JSON document with default values for any flag; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory (defaults to $FRONTIER_OUT_DIR, then the config file, then `.`).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Descriptive statistics of the analysis variables.
    Describe(DescribeArgs),
    /// Efficiency scores under one DEA model.
    Dea(DeaArgs),
    /// Stochastic profit frontier fit and efficiency scores.
    Sfa(SfaArgs),
    /// Spearman rank-correlation table.
    Corr(CorrArgs),
    /// Panel regression tables.
    Regress(RegressArgs),
    /// Seeded synthetic panel with a truth table.
    Synth(SynthArgs),
    /// Full pipeline: tables and per-year series.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelArg {
    Ccr,
    Bcc,
    Sbm,
    SbmUnd,
    SuperSbmUnd,
}

impl From<ModelArg> for DeaModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Ccr => DeaModel::Ccr,
            ModelArg::Bcc => DeaModel::Bcc,
            ModelArg::Sbm => DeaModel::SbmVrs,
            ModelArg::SbmUnd => DeaModel::SbmUndVrs,
            ModelArg::SuperSbmUnd => DeaModel::SuperSbmUndVrs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RtsArg {
    Crs,
    Vrs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeArg {
    PerYear,
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RegressSpecArg {
    Baseline,
    Lead,
    FirstDifference,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ReportSpecArg {
    /// DEA, SFA, statistics and all regression grids.
    Full,
    /// DEA scores and their series only.
    Dea,
    /// Everything except the regressions.
    Efficiency,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DescribeArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Comma-separated variables (default: the descriptive-table set present in the input).
    #[arg(long, value_delimiter = ',')]
    pub vars: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeaArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelArg>,
    #[arg(long, value_enum)]
    pub rts: Option<RtsArg>,
    #[arg(long, value_enum)]
    pub scope: Option<ScopeArg>,
    /// Score file name, relative to the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, value_delimiter = ',')]
    pub inputs: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub desirable: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub undesirable: Option<Vec<String>>,
    /// Shift columns with non-positive entries by |min| + 1 instead of rejecting them.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub shift_nonpositive: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfaArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub no_trend: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub vars: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub spec: Option<RegressSpecArg>,
    /// Report VIFs of the candidate efficiency measures.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub vif_screen: Option<bool>,
    #[arg(long)]
    pub winsor_p: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthArgs {
    /// Panel file name, relative to the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_banks: Option<usize>,
    #[arg(long)]
    pub n_years: Option<usize>,
    #[arg(long)]
    pub first_year: Option<i32>,
    #[arg(long)]
    pub sigma_u: Option<f64>,
    #[arg(long)]
    pub sigma_v: Option<f64>,
    #[arg(long)]
    pub missingness: Option<f64>,
    #[arg(long)]
    pub q_loading: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub spec: Option<ReportSpecArg>,
    #[arg(long, value_enum)]
    pub scope: Option<ScopeArg>,
    #[arg(long)]
    pub winsor_p: Option<f64>,
}

/// Overlays explicitly given flags onto the config-file section.
fn merge<T: Serialize + for<'de> Deserialize<'de>>(flags: &T, file: Option<&Value>) -> Result<T, Error> {
    let mut base = match file {
        Some(Value::Object(m)) => m.clone(),
        Some(Value::Null) | None => serde_json::Map::new(),
        Some(_) => return Err(Error::Config("config section must be an object".into())),
    };
    if let Value::Object(over) = serde_json::to_value(flags)? {
        for (k, v) in over {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
    bytes: usize,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    config: Value,
    seed: Option<u64>,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
    timings: Vec<(String, f64)>,
    quantile_rule: &'static str,
    warnings: Vec<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Failure tagged with the pipeline step it happened in.
#[derive(Debug)]
struct StepError {
    step: String,
    error: Error,
}

trait StepContext<T> {
    fn step(self, step: &str) -> Result<T, StepError>;
}

impl<T, E: Into<Error>> StepContext<T> for Result<T, E> {
    fn step(self, step: &str) -> Result<T, StepError> {
        self.map_err(|e| StepError {
            step: step.to_string(),
            error: e.into(),
        })
    }
}

struct Run {
    command: String,
    config: Value,
    seed: Option<u64>,
    inputs: Vec<FileEntry>,
    files: Vec<ReportFile>,
    timings: Vec<(String, f64)>,
    warnings: Vec<String>,
}

impl Run {
    fn new(command: &str, config: Value) -> Self {
        Self {
            command: command.to_string(),
            config,
            seed: None,
            inputs: Vec::new(),
            files: Vec::new(),
            timings: Vec::new(),
            warnings: Vec::new(),
        }
    }

    fn load(&mut self, path: Option<&PathBuf>) -> Result<PanelDataset, StepError> {
        let path = path
            .ok_or_else(|| Error::Config("--input is required".into()))
            .step("load")?;
        let bytes = fs::read(path).map_err(Error::from).step("load")?;
        self.inputs.push(FileEntry {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len(),
        });
        panel::read_panel(bytes.as_slice()).step(&format!("load {}", path.display()))
    }

    fn timed<T>(&mut self, step: &str, f: impl FnOnce() -> frontier::Result<T>) -> Result<T, StepError> {
        let start = Instant::now();
        let out = f().step(step)?;
        self.timings.push((step.to_string(), start.elapsed().as_secs_f64()));
        Ok(out)
    }

    fn emit(&mut self, name: impl Into<String>, contents: Vec<u8>) {
        self.files.push(ReportFile {
            name: name.into(),
            contents,
        });
    }

    /// Writes every output then the manifest; removes what was written on failure.
    fn finish(mut self, out_dir: &Path) -> Result<(), StepError> {
        self.files.sort_by(|a, b| a.name.cmp(&b.name));
        let outputs: Vec<FileEntry> = self
            .files
            .iter()
            .map(|f| FileEntry {
                path: f.name.clone(),
                sha256: sha256_hex(&f.contents),
                bytes: f.contents.len(),
            })
            .collect();
        let manifest = RunManifest {
            tool: "frontier",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command.clone(),
            config: self.config.clone(),
            seed: self.seed,
            inputs: std::mem::take(&mut self.inputs),
            outputs,
            timings: std::mem::take(&mut self.timings),
            quantile_rule: "linear interpolation between order statistics (type 7)",
            warnings: std::mem::take(&mut self.warnings),
        };
        let manifest_bytes = serde_json::to_vec_pretty(&manifest).step("manifest")?;
        self.emit("manifest.json", manifest_bytes);

        let mut written: Vec<PathBuf> = Vec::new();
        let result = (|| -> std::io::Result<()> {
            fs::create_dir_all(out_dir)?;
            for f in &self.files {
                let path = out_dir.join(&f.name);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent)?;
                }
                written.push(path.clone());
                fs::write(&path, &f.contents)?;
            }
            Ok(())
        })();
        if let Err(e) = result {
            for p in &written {
                let _ = fs::remove_file(p);
            }
            return Err(StepError {
                step: "write outputs".into(),
                error: e.into(),
            });
        }
        Ok(())
    }
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> frontier::Result<()>) -> frontier::Result<Vec<u8>> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

fn rel_name(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

fn dea_spec(args: &DeaArgs) -> DeaModelSpec {
    let model: DeaModel = args.model.unwrap_or(ModelArg::SuperSbmUnd).into();
    let mut spec = DeaModelSpec::production_approach(model);
    if let Some(rts) = args.rts {
        spec.rts = match rts {
            RtsArg::Crs => ReturnsToScale::Crs,
            RtsArg::Vrs => ReturnsToScale::Vrs,
        };
    }
    if let Some(scope) = args.scope {
        spec.scope = scope_of(scope);
    }
    if let Some(v) = &args.inputs {
        spec.inputs = v.clone();
    }
    if let Some(v) = &args.desirable {
        spec.desirable = v.clone();
    }
    if let Some(v) = &args.undesirable {
        spec.undesirable = v.clone();
    }
    spec.shift_nonpositive = args.shift_nonpositive.unwrap_or(false);
    spec
}

fn scope_of(s: ScopeArg) -> FrontierScope {
    match s {
        ScopeArg::PerYear => FrontierScope::PerYear,
        ScopeArg::Pooled => FrontierScope::Pooled,
    }
}

fn default_present(panel: &PanelDataset, defaults: &[&str]) -> Vec<String> {
    defaults
        .iter()
        .filter(|v| panel.has_column(v))
        .map(|v| v.to_string())
        .collect()
}

fn cmd_describe(args: DescribeArgs, run: &mut Run) -> Result<(), StepError> {
    let raw = run.load(args.input.as_ref())?;
    let panel = run.timed("derive", || panel::derive_variables(&raw))?;
    let vars = args
        .vars
        .unwrap_or_else(|| default_present(&panel, &report::DESCRIBE_VARIABLES));
    let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    let rows = run.timed("describe", || stats::describe(&panel, &refs))?;
    run.emit("describe.md", stats::describe_markdown(&rows).into_bytes());
    let csv = csv_bytes(|b| stats::write_describe_csv(&rows, b)).step("describe")?;
    run.emit("describe.csv", csv);
    Ok(())
}

fn cmd_dea(args: DeaArgs, run: &mut Run) -> Result<(), StepError> {
    let raw = run.load(args.input.as_ref())?;
    let spec = dea_spec(&args);
    let scores = run.timed(&format!("dea {}", spec.model), || dea::score_panel(&raw, &spec))?;
    for s in &scores {
        if s.status == dea::ScoreStatus::InfeasibleSuper {
            run.warnings.push(format!(
                "InfeasibleSuper: {} {}",
                dea::bank_of(s),
                s.year.unwrap_or_default()
            ));
        }
    }
    let format = args.format.unwrap_or(FormatArg::Csv);
    let default_name = match format {
        FormatArg::Csv => "scores.csv",
        FormatArg::Json => "scores.json",
    };
    let name = args.out.as_deref().map(rel_name).unwrap_or_else(|| default_name.into());
    let bytes = match format {
        FormatArg::Csv => csv_bytes(|b| {
            dea::write_scores_csv(&scores, (&spec.inputs, &spec.desirable, &spec.undesirable), b)
        }),
        FormatArg::Json => csv_bytes(|b| dea::write_scores_json(&scores, b)),
    }
    .step("dea output")?;
    run.emit(name, bytes);
    Ok(())
}

fn cmd_sfa(args: SfaArgs, run: &mut Run) -> Result<(), StepError> {
    let raw = run.load(args.input.as_ref())?;
    let opts = SfaOptions {
        max_iterations: args.max_iterations.unwrap_or(SfaOptions::default().max_iterations),
        ..SfaOptions::default()
    };
    let design_opts = DesignOptions {
        include_trend: !args.no_trend.unwrap_or(false),
    };
    let design = run.timed("sfa design", || sfa::build_frontier_design(&raw, &design_opts))?;
    let fit = run.timed("sfa fit", || sfa::fit_frontier(&design, &opts))?;
    if !fit.converged {
        run.warnings.push(format!(
            "sfa: not converged after {} iterations (gradient norm {})",
            fit.iterations, fit.gradient_norm
        ));
    }
    run.emit("sfa_fit.json", serde_json::to_vec_pretty(&fit).step("sfa output")?);
    let csv = csv_bytes(|b| sfa::write_efficiency_csv(&fit, b)).step("sfa output")?;
    run.emit("efficiency.csv", csv);
    Ok(())
}

fn cmd_corr(args: CorrArgs, run: &mut Run) -> Result<(), StepError> {
    let raw = run.load(args.input.as_ref())?;
    let panel = match &args.vars {
        Some(_) => run.timed("derive", || panel::derive_variables(&raw))?,
        None => efficiency_panel(&raw, 0.01, run)?,
    };
    let vars = args
        .vars
        .unwrap_or_else(|| default_present(&panel, &report::CORRELATION_VARIABLES));
    let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    let m = run.timed("corr", || stats::correlation_matrix_panel(&panel, &refs))?;
    run.emit("corr_table.md", m.to_markdown().into_bytes());
    let csv = csv_bytes(|b| m.write_csv(b)).step("corr")?;
    run.emit("corr_table.csv", csv);
    Ok(())
}

/// Adds DEA super-efficiency and SFA efficiency columns when the input lacks them.
fn efficiency_panel(raw: &PanelDataset, winsor_p: f64, run: &mut Run) -> Result<PanelDataset, StepError> {
    let needs_dea = !raw.has_column("supereff");
    let needs_sfa = !raw.has_column("sfa_eff");
    let config = PipelineConfig {
        models: if needs_dea { vec![DeaModel::SuperSbmUndVrs] } else { Vec::new() },
        run_sfa: needs_sfa,
        winsor_p,
        regressions: false,
        ..PipelineConfig::default()
    };
    if needs_dea || needs_sfa {
        run.warnings.push(format!(
            "computed missing efficiency columns:{}{}",
            if needs_dea { " supereff" } else { "" },
            if needs_sfa { " sfa_eff" } else { "" }
        ));
    }
    let bundle = report::run_pipeline(raw, &config).step("efficiency")?;
    run.timings.extend(bundle.timings);
    run.warnings.extend(bundle.warnings);
    Ok(bundle.panel.expect("pipeline returns its panel"))
}

fn emit_table(run: &mut Run, name: &str, title: &str, results: &[RegressionResult]) -> Result<(), StepError> {
    run.emit(format!("regress_{name}.md"), regress::table_markdown(title, results).into_bytes());
    let csv = csv_bytes(|b| regress::write_table_csv(results, b)).step("regress output")?;
    run.emit(format!("regress_{name}.csv"), csv);
    for r in results {
        run.warnings.extend(r.warnings.iter().map(|w| format!("{}: {w}", r.label)));
    }
    Ok(())
}

fn cmd_regress(args: RegressArgs, run: &mut Run) -> Result<(), StepError> {
    let raw = run.load(args.input.as_ref())?;
    let panel = efficiency_panel(&raw, args.winsor_p.unwrap_or(0.01), run)?;
    if args.vif_screen.unwrap_or(false) {
        let vars = default_present(&panel, &["sfa_eff", "supereff", "sbm_und", "sbm", "bcc"]);
        let refs: Vec<&str> = vars.iter().map(String::as_str).collect();
        let rows = run.timed("vif", || stats::vif_panel(&panel, &refs))?;
        run.emit("vif.md", stats::vif_markdown(&rows).into_bytes());
    }
    let spec = args.spec.unwrap_or(RegressSpecArg::All);
    let grids: Vec<(&str, &str, Vec<regress::RegressionSpec>)> = vec![
        ("baseline", "Efficiencies and Tobin's Q: baseline", regress::baseline_specs()),
        ("lead", "Efficiencies and next-year Tobin's Q", regress::lead_specs()),
        ("first_difference", "Changes in Tobin's Q", regress::first_difference_specs()),
    ];
    for (name, title, specs) in grids {
        let wanted = match spec {
            RegressSpecArg::All => true,
            RegressSpecArg::Baseline => name == "baseline",
            RegressSpecArg::Lead => name == "lead",
            RegressSpecArg::FirstDifference => name == "first_difference",
        };
        if !wanted {
            continue;
        }
        let results = run.timed(&format!("regress {name}"), || {
            specs
                .iter()
                .map(|s| {
                    if s.transform == regress::DependentTransform::Diff {
                        regress::first_difference_regression(s, &panel)
                    } else {
                        regress::panel_regression(s, &panel)
                    }
                })
                .collect::<frontier::Result<Vec<_>>>()
        })?;
        emit_table(run, name, title, &results)?;
    }
    Ok(())
}

fn cmd_synth(args: SynthArgs, run: &mut Run) -> Result<(), StepError> {
    let d = SyntheticConfig::default();
    let config = SyntheticConfig {
        seed: args.seed.unwrap_or(d.seed),
        n_banks: args.n_banks.unwrap_or(d.n_banks),
        n_years: args.n_years.unwrap_or(d.n_years),
        first_year: args.first_year.unwrap_or(d.first_year),
        sigma_u: args.sigma_u.unwrap_or(d.sigma_u),
        sigma_v: args.sigma_v.unwrap_or(d.sigma_v),
        missingness: args.missingness.unwrap_or(d.missingness),
        q_loading: args.q_loading.unwrap_or(d.q_loading),
        ..d
    };
    run.seed = Some(config.seed);
    let synth = run.timed("synth", || panel::generate_synthetic(&config))?;
    let name = args.out.as_deref().map(rel_name).unwrap_or_else(|| "synth_panel.csv".into());
    let bytes = csv_bytes(|b| panel::write_panel(&synth.panel, b)).step("synth output")?;
    run.emit(name, bytes);
    let truth = args.truth.as_deref().map(rel_name).unwrap_or_else(|| "synth_truth.csv".into());
    let bytes = csv_bytes(|b| synth.write_truth(b)).step("synth output")?;
    run.emit(truth, bytes);
    Ok(())
}

fn cmd_report(args: ReportArgs, run: &mut Run) -> Result<(), StepError> {
    let raw = run.load(args.input.as_ref())?;
    let spec = args.spec.unwrap_or(ReportSpecArg::Full);
    let config = PipelineConfig {
        scope: args.scope.map(scope_of).unwrap_or(FrontierScope::PerYear),
        winsor_p: args.winsor_p.unwrap_or(0.01),
        run_sfa: spec != ReportSpecArg::Dea,
        regressions: spec == ReportSpecArg::Full,
        ..PipelineConfig::default()
    };
    let bundle: ResultsBundle = report::run_pipeline(&raw, &config).step("report")?;
    run.timings.extend(bundle.timings.iter().cloned());
    run.warnings.extend(bundle.warnings.iter().cloned());
    let (files, notices) = report::render_report(&bundle).step("render")?;
    run.warnings.extend(notices);
    run.files.extend(files);

    let mut scores: Vec<dea::DeaScore> = Vec::new();
    for s in bundle.dea.values() {
        scores.extend(s.iter().cloned());
    }
    if !scores.is_empty() {
        let mut by_model: BTreeMap<DeaModel, Vec<dea::DeaScore>> = BTreeMap::new();
        for s in scores {
            by_model.entry(s.model).or_default().push(s);
        }
        for (model, s) in by_model {
            let spec = DeaModelSpec::production_approach(model);
            let csv = csv_bytes(|b| {
                dea::write_scores_csv(&s, (&spec.inputs, &spec.desirable, &spec.undesirable), b)
            })
            .step("report")?;
            run.emit(format!("scores_{}.csv", model.column_name()), csv);
        }
    }
    if let Some(fit) = &bundle.sfa {
        run.emit("sfa_fit.json", serde_json::to_vec_pretty(fit).step("report")?);
    }
    Ok(())
}

fn resolve_out_dir(flag: Option<PathBuf>, config: Option<&Value>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| {
            config
                .and_then(|c| c.get("out_dir"))
                .and_then(Value::as_str)
                .map(PathBuf::from)
        })
        .unwrap_or_else(|| PathBuf::from("."))
}

fn execute(cli: Cli) -> Result<(), StepError> {
    let file_config: Option<Value> = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(Error::from).step("config")?;
            Some(serde_json::from_str(&text).map_err(Error::from).step("config")?)
        }
        None => None,
    };
    let section = |name: &str| file_config.as_ref().and_then(|c| c.get(name));
    let out_dir = resolve_out_dir(cli.out_dir.clone(), file_config.as_ref());

    macro_rules! dispatch {
        ($args:expr, $name:literal, $f:ident) => {{
            let merged = merge(&$args, section($name)).step("config")?;
            let snapshot = serde_json::to_value(&merged).step("config")?;
            let mut run = Run::new($name, snapshot);
            $f(merged, &mut run)?;
            run.finish(&out_dir)
        }};
    }
    match cli.command {
        Command::Describe(a) => dispatch!(a, "describe", cmd_describe),
        Command::Dea(a) => dispatch!(a, "dea", cmd_dea),
        Command::Sfa(a) => dispatch!(a, "sfa", cmd_sfa),
        Command::Corr(a) => dispatch!(a, "corr", cmd_corr),
        Command::Regress(a) => dispatch!(a, "regress", cmd_regress),
        Command::Synth(a) => dispatch!(a, "synth", cmd_synth),
        Command::Report(a) => dispatch!(a, "report", cmd_report),
    }
}

/// Parses `args` (program name first) and runs the command.
///
/// Returns 0 on success, 2 on usage errors and 1 on data or model errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(StepError { step, error }) => {
            eprintln!("error in step `{step}`: {error}");
            1
        }
    }
}
