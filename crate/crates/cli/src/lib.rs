//! Cohort-scale evaluation commands behind the `petseg` binary.

pub mod commands;
pub mod manifest;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use petseg::io::{format_real, write_report, Cell, ReportFormat, Table};
use petseg::stats::summary;
use petseg::volume::Connectivity;
use thiserror::Error;

pub use manifest::{CaseEntry, CohortManifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{failed} case(s) failed (strict mode)")]
    StrictFailures { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::StrictFailures { .. } => 3,
        }
    }
}

impl From<petseg::Error> for CliError {
    fn from(e: petseg::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Toggle {
    On,
    Off,
}

fn parse_connectivity(s: &str) -> Result<Connectivity, String> {
    s.parse::<Connectivity>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Cohort manifest (TOML).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Output directory for reports.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub workers: usize,
    #[arg(long, global = true, default_value = "26", value_parser = parse_connectivity)]
    pub connectivity: Connectivity,
    /// Exit with code 3 if any case fails.
    #[arg(long, global = true)]
    pub strict: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Resample predictions onto the ground-truth grid (nearest neighbor);
    /// with `off`, a geometry mismatch fails the case.
    #[arg(long, global = true, value_enum, default_value_t = Toggle::On)]
    pub resample_pred: Toggle,
}

impl GlobalOpts {
    pub fn report_format(&self) -> ReportFormat {
        self.format.into()
    }

    pub fn load_manifest(&self) -> Result<CohortManifest, CliError> {
        let path = self.manifest.as_ref().ok_or_else(|| CliError::Usage("--manifest is required".into()))?;
        CohortManifest::load(path)
    }

    pub fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| CliError::Data(format!("worker pool: {e}")))
    }

    pub fn ensure_out_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::Data(format!("{}: {e}", self.out.display())))
    }

    /// `<out>/<name>.<ext>`.
    pub fn report_path(&self, name: &str) -> PathBuf {
        self.out.join(format!("{name}.{}", self.report_format().extension()))
    }

    pub fn write(&self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        let path = self.report_path(name);
        write_report(table, self.report_format(), &path)?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Analysis {
    Reproducibility,
    MapeCurves,
    ThresholdCurves,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Per-case DSC/FPV/FNV and lesion measures with cohort summaries.
    Evaluate,
    /// Per-lesion detection outcomes under the selected criteria.
    Detect {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        criteria: Vec<u8>,
        /// IoU threshold of criterion 2 (inclusive).
        #[arg(long = "iou-threshold", default_value_t = petseg::detection::DEFAULT_IOU_THRESHOLD)]
        iou_threshold: f64,
    },
    /// Inter-rater agreement: Fleiss' kappa, pairwise DSC, optional STAPLE.
    Agreement {
        /// Also write STAPLE consensus masks and per-rater DSC against them.
        #[arg(long)]
        staple: bool,
        /// Restrict kappa to an inclusive voxel box `x0,y0,z0,x1,y1,z1`.
        #[arg(long = "crop-box", value_delimiter = ',')]
        crop_box: Option<Vec<usize>>,
    },
    /// Statistical analyses of a per-case report written by `evaluate`.
    Analyze {
        /// Per-case report; defaults to the evaluate report in --out.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "reproducibility,mape-curves,threshold-curves")]
        analyses: Vec<Analysis>,
        #[arg(long, default_value_t = petseg::stats::DEFAULT_ALPHA)]
        alpha: f64,
        /// Logarithmic MAPE bins below the break (the measure's median).
        #[arg(long = "log-bins", default_value_t = petseg::stats::DEFAULT_LOG_BINS)]
        log_bins: usize,
        #[arg(long = "upper-quantile", default_value_t = petseg::stats::THRESHOLD_UPPER_QUANTILE)]
        upper_quantile: f64,
    },
    /// Writes a synthetic cohort (volumes, manifest, truth sidecar).
    Phantom {
        /// Cohort spec (TOML).
        #[arg(long)]
        spec: PathBuf,
        #[arg(long = "n-cases", default_value_t = 10)]
        n_cases: usize,
    },
}

#[derive(Debug, Clone, Parser)]
#[command(name = "petseg", version, about = "Evaluate PET/CT lesion segmentations over a cohort")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Evaluate => commands::evaluate::run(g),
        Command::Detect { criteria, iou_threshold } => commands::detect::run(g, criteria, *iou_threshold),
        Command::Agreement { staple, crop_box } => commands::agreement::run(g, *staple, crop_box.as_deref()),
        Command::Analyze { report, analyses, alpha, log_bins, upper_quantile } => {
            commands::analyze::run(g, report.as_deref(), analyses, *alpha, *log_bins, *upper_quantile)
        }
        Command::Phantom { spec, n_cases } => commands::phantom::run(g, spec, *n_cases),
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("petseg: {e}");
            e.exit_code()
        }
    }
}

/// Successful cases and failures, both tagged with their case id.
pub type CaseSplit<T> = Result<(Vec<(String, T)>, Vec<Failure>), CliError>;

/// A per-case failure: logged, reported, and fatal only in strict mode.
#[derive(Debug, Clone)]
pub struct Failure {
    pub case_id: String,
    pub message: String,
}

/// Splits per-case results, writes the failures report if any, and applies
/// the strict-mode policy.
pub fn finish_cases<T>(g: &GlobalOpts, command: &str, results: Vec<(String, petseg::Result<T>)>) -> CaseSplit<T> {
    let mut ok = Vec::new();
    let mut failures = Vec::new();
    for (id, r) in results {
        match r {
            Ok(v) => ok.push((id, v)),
            Err(e) => {
                warn!("case {id}: {e}");
                failures.push(Failure { case_id: id, message: e.to_string() });
            }
        }
    }
    let path = g.report_path(&format!("{command}_failures"));
    if failures.is_empty() {
        // a stale failures report from an earlier run would be misleading
        let _ = fs::remove_file(&path);
    } else {
        let mut t = Table::new(["case_id", "error"]);
        for f in &failures {
            t.push(vec![f.case_id.clone().into(), f.message.clone().into()])?;
        }
        g.write(&format!("{command}_failures"), &t)?;
    }
    if g.strict && !failures.is_empty() {
        return Err(CliError::StrictFailures { failed: failures.len() });
    }
    if ok.is_empty() {
        return Err(CliError::Data("every case failed".into()));
    }
    Ok((ok, failures))
}

/// Value as it appears in a report (6 significant digits).
pub fn as_reported(v: f64) -> f64 {
    format_real(v).parse().unwrap_or(v)
}

pub const SUMMARY_COLUMNS: [&str; 9] = ["model", "metric", "n", "mean", "sd", "median", "q25", "q75", "iqr"];

/// Appends one summary row computed over the reported values.
pub fn push_summary(t: &mut Table, model: &str, metric: &str, values: &[f64]) -> Result<(), CliError> {
    let reported: Vec<f64> = values.iter().map(|&v| as_reported(v)).collect();
    let s = summary(&reported)?;
    t.push(vec![
        model.into(),
        metric.into(),
        s.n.into(),
        s.mean.into(),
        s.sd.into(),
        s.median.into(),
        s.q25.into(),
        s.q75.into(),
        (s.q75 - s.q25).into(),
    ])?;
    Ok(())
}

pub fn cell_opt(v: Option<f64>) -> Cell {
    v.map(Cell::Real).unwrap_or(Cell::Missing)
}

pub(crate) fn display(p: &Path) -> String {
    p.display().to_string()
}
