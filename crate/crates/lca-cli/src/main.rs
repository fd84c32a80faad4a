//! `lca`: latent class analysis from the command line.
//!
//! Five subcommands — `fit`, `scan`, `compare`, `diagnose`, `simulate` —
//! share a common option set that resolves as defaults < config file <
//! flags. Every run emits a JSON report embedding the fully resolved
//! configuration, so a report reproduces itself; `diagnose` and
//! `simulate` also accept a saved report as their input.

mod config;
mod csvio;
mod error;
mod render;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lca_core::diagnostics::consistency_report_from;
use lca_core::selection::DEFAULT_CELL_CAP;
use lca_core::simulate::{CovariateKind, CovariateSpec};
use lca_core::{
    compare_models, fit, information_criteria, pearson_chi_square, sample_dataset, scan_classes,
    standard_errors, Dataset, Error as CoreError, FitControls, FitSummary, Formula, GeneratorSpec,
    MissingPolicy, ModelSpec, Thresholds,
};

use crate::config::FileConfig;
use crate::error::{CliError, Result};
use crate::report::{
    timestamp_now, DiagnosticsSection, GeneratorSection, IndicatorSection, ModelSection, Report,
    ResolvedConfig,
};

#[derive(Parser)]
#[command(
    name = "lca",
    version,
    about = "Latent class models for categorical survey data: fitting, selection, and response-consistency diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one latent class model with a fixed class count
    Fit(CommonArgs),
    /// Fit a range of class counts and tabulate goodness of fit
    Scan(CommonArgs),
    /// Fit several membership formulas at one class count and compare
    Compare(CommonArgs),
    /// Screen indicators for response consistency
    Diagnose(DiagnoseArgs),
    /// Sample a synthetic dataset from a saved fit report
    Simulate(SimulateArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Configuration file with `key = value` lines; flags override it
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Input CSV with one header row
    #[arg(long, value_name = "FILE")]
    data: Option<PathBuf>,
    /// Comma-separated indicator columns, each optionally `NAME:K`
    #[arg(long, value_name = "COLS")]
    indicators: Option<String>,
    /// Comma-separated covariate columns (for `simulate`: ranges like `Z=-2..2`)
    #[arg(long, value_name = "COLS")]
    covariates: Option<String>,
    /// Class-membership formula text or preset name; repeat to compare
    #[arg(long, value_name = "EXPR")]
    formula: Vec<String>,
    /// Class count `N`, or inclusive range `N..M` for `scan`
    #[arg(long, value_name = "N[..M]")]
    classes: Option<String>,
    /// Base seed for restarts and sampling
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Number of independently seeded EM restarts
    #[arg(long, value_name = "N")]
    restarts: Option<usize>,
    /// EM iteration cap per restart
    #[arg(long, value_name = "N")]
    max_iter: Option<usize>,
    /// Convergence tolerance on the log-likelihood change
    #[arg(long, value_name = "X")]
    tol: Option<f64>,
    /// Missing-data handling: `listwise` drops incomplete rows, `partial`
    /// keeps them and skips missing items in the likelihood
    #[arg(long, value_name = "MODE")]
    missing: Option<String>,
    /// Also write the JSON report to this file
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Stdout format: `text` (default) or `json`
    #[arg(long, value_name = "FMT")]
    format: Option<String>,
}

#[derive(Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Reuse a saved fit report instead of fitting fresh data
    #[arg(long, value_name = "FILE")]
    from_report: Option<PathBuf>,
    /// Include the class-conditional probability tables
    #[arg(long)]
    tables: bool,
    /// Consistency floor below which an indicator is flagged
    #[arg(long, value_name = "X")]
    min_consistent: Option<f64>,
    /// Extreme-misclassification ceiling above which an indicator is flagged
    #[arg(long, value_name = "X")]
    max_misclass: Option<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Saved fit report providing the generator parameters
    #[arg(long, value_name = "FILE")]
    from_report: Option<PathBuf>,
    /// Respondents to sample (defaults to the n recorded in the report)
    #[arg(long, value_name = "N")]
    n: Option<usize>,
    /// Where to write true class labels (default: OUT with a .labels.csv suffix)
    #[arg(long, value_name = "FILE")]
    labels_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Scan(args) => cmd_scan(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Common options after merging the config file; every field holds its
/// final value, defaults applied.
struct Resolved {
    data: Option<PathBuf>,
    indicators: Option<String>,
    covariates: Option<String>,
    formulas: Vec<String>,
    classes: Option<String>,
    seed: u64,
    restarts: usize,
    max_iter: usize,
    tol: f64,
    missing: String,
    out: Option<PathBuf>,
    format: String,
}

impl Resolved {
    fn controls(&self) -> FitControls {
        FitControls {
            max_iter: self.max_iter,
            ll_tolerance: self.tol,
            n_restarts: self.restarts,
            seed: self.seed,
            missing: if self.missing == "partial" {
                MissingPolicy::Partial
            } else {
                MissingPolicy::Complete
            },
            ..FitControls::default()
        }
    }

    fn config_echo(&self, subcommand: &str) -> ResolvedConfig {
        ResolvedConfig {
            subcommand: subcommand.into(),
            data: self.data.as_ref().map(|p| p.display().to_string()),
            indicators: self.indicators.clone(),
            covariates: self.covariates.clone(),
            formula: self.formulas.clone(),
            classes: self.classes.clone(),
            seed: self.seed,
            restarts: self.restarts,
            max_iter: self.max_iter,
            tolerance: self.tol,
            missing: self.missing.clone(),
            format: self.format.clone(),
            out: self.out.as_ref().map(|p| p.display().to_string()),
            ..ResolvedConfig::default()
        }
    }
}

fn load_file_config(common: &CommonArgs) -> Result<FileConfig> {
    match &common.config {
        Some(path) => FileConfig::load(path),
        None => Ok(FileConfig::empty()),
    }
}

/// Config keys use the flag spelling; the underscore form is accepted
/// as an alias.
fn take_key(file: &mut FileConfig, key: &str) -> Option<String> {
    file.take(key).or_else(|| file.take(&key.replace('-', "_")))
}

fn take_key_parsed<T: std::str::FromStr>(file: &mut FileConfig, key: &str) -> Result<Option<T>> {
    match file.take_parsed(key)? {
        Some(value) => Ok(Some(value)),
        None => file.take_parsed(&key.replace('-', "_")),
    }
}

fn resolve_common(common: &CommonArgs, file: &mut FileConfig) -> Result<Resolved> {
    let defaults = FitControls::default();
    let missing = common
        .missing
        .clone()
        .or_else(|| take_key(file, "missing"))
        .unwrap_or_else(|| "listwise".into());
    if missing != "listwise" && missing != "partial" {
        return Err(CliError::Usage(format!(
            "--missing must be `listwise` or `partial`, got `{missing}`"
        )));
    }
    let format = common
        .format
        .clone()
        .or_else(|| take_key(file, "format"))
        .unwrap_or_else(|| "text".into());
    if format != "json" && format != "text" {
        return Err(CliError::Usage(format!(
            "--format must be `json` or `text`, got `{format}`"
        )));
    }
    let formulas = if common.formula.is_empty() {
        take_key(file, "formula").map(|f| vec![f]).unwrap_or_default()
    } else {
        common.formula.clone()
    };
    Ok(Resolved {
        data: common
            .data
            .clone()
            .or_else(|| take_key(file, "data").map(PathBuf::from)),
        indicators: common.indicators.clone().or_else(|| take_key(file, "indicators")),
        covariates: common.covariates.clone().or_else(|| take_key(file, "covariates")),
        formulas,
        classes: common.classes.clone().or_else(|| take_key(file, "classes")),
        seed: match common.seed {
            Some(s) => s,
            None => take_key_parsed(file, "seed")?.unwrap_or(defaults.seed),
        },
        restarts: match common.restarts {
            Some(r) => r,
            None => take_key_parsed(file, "restarts")?.unwrap_or(defaults.n_restarts),
        },
        max_iter: match common.max_iter {
            Some(m) => m,
            None => take_key_parsed(file, "max-iter")?.unwrap_or(defaults.max_iter),
        },
        tol: match common.tol {
            Some(t) => t,
            None => take_key_parsed(file, "tol")?.unwrap_or(defaults.ll_tolerance),
        },
        missing,
        out: common.out.clone().or_else(|| take_key(file, "out").map(PathBuf::from)),
        format,
    })
}

/// `N` or inclusive `N..M`, each at least 1.
fn parse_classes(text: &str) -> Result<Vec<usize>> {
    let bad = || CliError::Usage(format!("--classes expects N or N..M, got `{text}`"));
    let range = if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if hi < lo {
            return Err(bad());
        }
        (lo..=hi).collect()
    } else {
        vec![text.trim().parse().map_err(|_| bad())?]
    };
    if range.iter().any(|&r| r < 1) {
        return Err(bad());
    }
    Ok(range)
}

fn require_classes(r: &Resolved) -> Result<Vec<usize>> {
    let text = r
        .classes
        .as_deref()
        .ok_or_else(|| CliError::Usage("--classes is required (e.g. 3, or 2..4 to scan)".into()))?;
    parse_classes(text)
}

fn single_class_count(r: &Resolved) -> Result<usize> {
    let classes = require_classes(r)?;
    if classes.len() != 1 {
        return Err(CliError::Usage(
            "--classes must be a single count here; ranges are for `scan`".into(),
        ));
    }
    Ok(classes[0])
}

/// Preset name or formula text.
fn resolve_formula(text: &str) -> Result<Formula> {
    if let Some(preset) = Formula::preset(text) {
        return Ok(preset);
    }
    Formula::parse(text).map_err(CliError::from)
}

fn single_formula(r: &Resolved) -> Result<Formula> {
    match r.formulas.len() {
        0 => Ok(Formula::intercept_only()),
        1 => resolve_formula(&r.formulas[0]),
        _ => Err(CliError::Usage(
            "repeat --formula only with `compare`; other commands take one".into(),
        )),
    }
}

struct LoadedData {
    dataset: Dataset,
    /// Schema echo with resolved category counts, e.g. `A:3,B:2`.
    schema: String,
    rows_dropped: usize,
}

fn load_dataset(r: &Resolved) -> Result<LoadedData> {
    let data = r
        .data
        .as_ref()
        .ok_or_else(|| CliError::Usage("--data is required".into()))?;
    let schema_text = r
        .indicators
        .as_deref()
        .ok_or_else(|| CliError::Usage("--indicators is required (e.g. A,B,C or A:3,B:2)".into()))?;
    let schema = csvio::parse_indicator_schema(schema_text)?;
    let covariates = match r.covariates.as_deref() {
        Some(text) => csvio::parse_covariate_list(text)?,
        None => Vec::new(),
    };
    let (dataset, resolved_schema) = csvio::load_csv(data, &schema, &covariates)?;
    let total = dataset.n_rows();
    let dataset = if r.missing == "listwise" {
        dataset.listwise_filter().map_err(CliError::from)?
    } else {
        dataset
    };
    Ok(LoadedData {
        rows_dropped: total - dataset.n_rows(),
        schema: resolved_schema,
        dataset,
    })
}

fn model_spec(r: &Resolved, d: &Dataset, n_classes: usize, formula: Formula) -> ModelSpec {
    ModelSpec {
        n_classes,
        indicators: d.indicators().to_vec(),
        formula,
        controls: r.controls(),
    }
}

/// χ²/G² are omitted, not an error, when the contingency table is too
/// large to enumerate.
fn attach_fit_statistics(
    summary: &mut FitSummary,
    m: &lca_core::FittedModel,
) -> Result<()> {
    match pearson_chi_square(m, DEFAULT_CELL_CAP) {
        Ok(gof) => {
            summary.chi_square = Some(gof.chi_square);
            summary.g_square = Some(gof.g_square);
            Ok(())
        }
        Err(CoreError::CellCapExceeded { .. }) => Ok(()),
        Err(e) => Err(e.into()),
    }
}

/// Fits one model and assembles its report section. Coefficient
/// standard errors come from the observed information matrix; a
/// singular matrix downgrades them to a warning rather than failing
/// the fit.
fn fit_model_section(
    r: &Resolved,
    d: &Dataset,
    n_classes: usize,
    formula: &Formula,
    rows_dropped: usize,
) -> Result<(lca_core::FittedModel, ModelSection)> {
    let spec = model_spec(r, d, n_classes, formula.clone());
    let m = fit(d, &spec)?;
    let mut summary = information_criteria(&m);
    attach_fit_statistics(&mut summary, &m)?;

    let mut extra_warnings = Vec::new();
    let coefficients = if n_classes > 1 {
        match standard_errors(&m) {
            Ok(table) => Some(table),
            Err(CoreError::SingularInformation) => {
                extra_warnings.push(
                    "information matrix is singular; coefficient standard errors omitted".into(),
                );
                None
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        None
    };

    let section = ModelSection::from_fit(
        &m,
        &summary,
        formula.render(),
        rows_dropped,
        coefficients.as_ref(),
        &extra_warnings,
    );
    Ok((m, section))
}

fn emit(report: &Report, r: &Resolved) -> Result<()> {
    let json = report.to_json();
    if let Some(out) = &r.out {
        std::fs::write(out, &json).map_err(|e| CliError::io(out, e))?;
    }
    if r.format == "json" {
        print!("{json}");
    } else {
        print!("{}", render::render(report));
    }
    Ok(())
}

fn cmd_fit(common: CommonArgs) -> Result<()> {
    let mut file = load_file_config(&common)?;
    let r = resolve_common(&common, &mut file)?;
    file.warn_unused();

    let n_classes = single_class_count(&r)?;
    let formula = single_formula(&r)?;
    let loaded = load_dataset(&r)?;
    let (_, section) =
        fit_model_section(&r, &loaded.dataset, n_classes, &formula, loaded.rows_dropped)?;

    let mut config = r.config_echo("fit");
    config.indicators = Some(loaded.schema);
    let report = Report {
        kind: "fit".into(),
        timestamp_unix: timestamp_now(),
        config,
        model: Some(section),
        comparison: None,
        diagnostics: None,
        generator: None,
    };
    emit(&report, &r)
}

fn cmd_scan(common: CommonArgs) -> Result<()> {
    let mut file = load_file_config(&common)?;
    let r = resolve_common(&common, &mut file)?;
    file.warn_unused();

    let classes = require_classes(&r)?;
    let formula = single_formula(&r)?;
    let loaded = load_dataset(&r)?;
    let base = model_spec(&r, &loaded.dataset, classes[0], formula);
    let comparison = scan_classes(&loaded.dataset, &base, &classes)?;

    let mut config = r.config_echo("scan");
    config.indicators = Some(loaded.schema);
    let report = Report {
        kind: "scan".into(),
        timestamp_unix: timestamp_now(),
        config,
        model: None,
        comparison: Some((&comparison).into()),
        diagnostics: None,
        generator: None,
    };
    emit(&report, &r)
}

fn cmd_compare(common: CommonArgs) -> Result<()> {
    let mut file = load_file_config(&common)?;
    let r = resolve_common(&common, &mut file)?;
    file.warn_unused();

    let n_classes = single_class_count(&r)?;
    if r.formulas.is_empty() {
        return Err(CliError::Usage(
            "`compare` needs at least one --formula candidate".into(),
        ));
    }
    let loaded = load_dataset(&r)?;
    // Candidates keep the label they were given on the command line.
    let candidates = r
        .formulas
        .iter()
        .map(|text| {
            let formula = resolve_formula(text)?;
            Ok((text.clone(), model_spec(&r, &loaded.dataset, n_classes, formula)))
        })
        .collect::<Result<Vec<_>>>()?;
    let comparison = compare_models(&loaded.dataset, &candidates)?;

    let mut config = r.config_echo("compare");
    config.indicators = Some(loaded.schema);
    let report = Report {
        kind: "compare".into(),
        timestamp_unix: timestamp_now(),
        config,
        model: None,
        comparison: Some((&comparison).into()),
        diagnostics: None,
        generator: None,
    };
    emit(&report, &r)
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let mut file = load_file_config(&args.common)?;
    let r = resolve_common(&args.common, &mut file)?;
    let from_report = args
        .from_report
        .or_else(|| take_key(&mut file, "from-report").map(PathBuf::from));
    let tables = args.tables || file.take_bool("tables")?.unwrap_or(false);
    let thresholds = Thresholds {
        min_consistent: match args.min_consistent {
            Some(v) => v,
            None => take_key_parsed(&mut file, "min-consistent")?
                .unwrap_or(Thresholds::default().min_consistent),
        },
        max_misclass: match args.max_misclass {
            Some(v) => v,
            None => take_key_parsed(&mut file, "max-misclass")?
                .unwrap_or(Thresholds::default().max_misclass),
        },
    };
    file.warn_unused();

    // Either reuse a saved fit or produce a fresh one; both paths end
    // with a model section, so diagnose output feeds diagnose again.
    let (model_section, schema_echo) = match &from_report {
        Some(path) => {
            let saved = Report::load(path)?;
            (saved.model_section(path)?.clone(), None)
        }
        None => {
            let n_classes = single_class_count(&r)?;
            let formula = single_formula(&r)?;
            let loaded = load_dataset(&r)?;
            let (_, section) =
                fit_model_section(&r, &loaded.dataset, n_classes, &formula, loaded.rows_dropped)?;
            (section, Some(loaded.schema))
        }
    };

    let (table, shares) = model_section.conditional_table()?;
    let consistency = consistency_report_from(&table, &shares, thresholds)?;
    let diagnostics = DiagnosticsSection::build(&consistency, &table, &shares, tables);

    let mut config = r.config_echo("diagnose");
    config.indicators = schema_echo;
    config.from_report = from_report.map(|p| p.display().to_string());
    config.tables = Some(tables);
    config.min_consistent = Some(thresholds.min_consistent);
    config.max_misclass = Some(thresholds.max_misclass);
    let report = Report {
        kind: "diagnose".into(),
        timestamp_unix: timestamp_now(),
        config,
        model: Some(model_section),
        comparison: None,
        diagnostics: Some(diagnostics),
        generator: None,
    };
    emit(&report, &r)
}

/// `Z=-2..2,T=0..1`: uniform integer scores per named covariate.
fn parse_covariate_ranges(text: &str) -> Result<Vec<CovariateSpec>> {
    let mut specs = Vec::new();
    for piece in text.split(',') {
        let piece = piece.trim();
        if piece.is_empty() {
            continue;
        }
        let bad = || {
            CliError::Usage(format!(
                "covariate range `{piece}` must look like NAME=LOW..HIGH"
            ))
        };
        let (name, range) = piece.split_once('=').ok_or_else(bad)?;
        let (low, high) = range.split_once("..").ok_or_else(bad)?;
        let low: i64 = low.trim().parse().map_err(|_| bad())?;
        let high: i64 = high.trim().parse().map_err(|_| bad())?;
        if high < low {
            return Err(bad());
        }
        specs.push(CovariateSpec {
            name: name.trim().to_string(),
            kind: CovariateKind::UniformInt { low, high },
        });
    }
    Ok(specs)
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut file = load_file_config(&args.common)?;
    let r = resolve_common(&args.common, &mut file)?;
    let from_report = args
        .from_report
        .or_else(|| take_key(&mut file, "from-report").map(PathBuf::from));
    let n_override = match args.n {
        Some(n) => Some(n),
        None => take_key_parsed(&mut file, "n")?,
    };
    let labels_out = args
        .labels_out
        .or_else(|| take_key(&mut file, "labels-out").map(PathBuf::from));
    file.warn_unused();

    let path = from_report.ok_or_else(|| {
        CliError::Usage("`simulate` needs --from-report with the generator parameters".into())
    })?;
    let saved = Report::load(&path)?;
    let section = saved.model_section(&path)?;
    let out = r
        .out
        .clone()
        .ok_or_else(|| CliError::Usage("`simulate` needs --out for the dataset CSV".into()))?;
    let labels_path = labels_out.unwrap_or_else(|| out.with_extension("labels.csv"));

    let n = match n_override.or(if section.n_rows > 0 { Some(section.n_rows) } else { None }) {
        Some(n) if n >= 1 => n,
        Some(_) => return Err(CliError::Usage("--n must be at least 1".into())),
        None => {
            return Err(CliError::Usage(
                "--n is required; the report does not record a sample size".into(),
            ))
        }
    };

    let params = section.params()?;
    let formula = if section.beta.is_empty() || section.n_classes == 1 {
        Formula::intercept_only()
    } else if section.formula.is_empty() {
        return Err(CliError::Data(
            "report has membership coefficients but no formula to evaluate them".into(),
        ));
    } else {
        resolve_formula(&section.formula)?
    };
    let covariates = match r.covariates.as_deref() {
        Some(text) => parse_covariate_ranges(text)?,
        None => Vec::new(),
    };

    let generator = GeneratorSpec {
        params,
        indicators: section.indicator_list()?,
        covariates,
        formula,
        n,
        seed: r.seed,
    };
    let (dataset, labels) = sample_dataset(&generator)?;
    csvio::write_csv(&out, &dataset)?;
    csvio::write_labels(&labels_path, &labels)?;

    let mut config = r.config_echo("simulate");
    config.from_report = Some(path.display().to_string());
    config.n = Some(n);
    config.out = Some(out.display().to_string());
    config.labels_out = Some(labels_path.display().to_string());
    let generator_section = GeneratorSection {
        seed: generator.seed,
        n,
        n_classes: generator.params.n_classes(),
        indicators: generator
            .indicators
            .iter()
            .map(|i| IndicatorSection {
                name: i.name().to_string(),
                n_categories: i.n_categories(),
            })
            .collect(),
        formula: generator.formula.render(),
        covariates: r.covariates.clone(),
        data_path: out.display().to_string(),
        labels_path: labels_path.display().to_string(),
    };
    let report = Report {
        kind: "simulate".into(),
        timestamp_unix: timestamp_now(),
        config,
        model: None,
        comparison: None,
        diagnostics: None,
        generator: Some(generator_section),
    };
    // `--out` is the dataset CSV here; the run report goes to stdout only.
    let mut r = r;
    r.out = None;
    emit(&report, &r)
}
