use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;
use serde_json::json;

use petbench_core::anonymity::{anonymize, suppression_ratio, AnonymizeOptions, Hierarchies};
use petbench_core::data::{binarize_target, load_csv, split, write_csv, AttributeSchema, CsvOptions, DataTable, SplitSpec};
use petbench_core::harness::report::{report_from_log, write_rendered};
use petbench_core::harness::run::drop_identifying;
use petbench_core::harness::{
    fetch_dataset, read_log, render, run_experiment, DatasetId, ExperimentConfig, HttpTransport, MeterKind,
    ReportFormat, Status,
};
use petbench_core::synthesis::{sample_stratified, utility_report};
use petbench_core::tradeoff::{collect_points, rank_by_dataset, scenario, PrivacyScale};
use petbench_core::Error;

#[derive(Parser)]
#[command(name = "petbench", version, about = "Measure the energy, accuracy and privacy cost of privacy-enhancing techniques")]
struct Cli {
    /// Energy meter for `bench`; overrides the config file.
    #[arg(long, global = true, value_enum)]
    meter: Option<MeterArg>,

    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeterArg {
    Sysfs,
    Simulated,
}

#[derive(Subcommand)]
enum Command {
    /// Download a dataset and check its digest.
    Fetch {
        dataset: DatasetId,
        #[arg(long, default_value = "data")]
        data_dir: PathBuf,
    },
    /// Load a dataset and write its train/test split.
    Prep {
        dataset: DatasetId,
        #[command(flatten)]
        source: Source,
        /// Output directory [default: <data-dir>/<dataset>/prepared].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0 / 3.0)]
        train_fraction: f64,
        #[arg(long, default_value_t = 42)]
        split_seed: u64,
    },
    /// k-anonymize a dataset by generalization and suppression.
    Anonymize {
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "census_income")]
        dataset: DatasetId,
        #[command(flatten)]
        source: Source,
        /// Generalization hierarchies (JSON) [default: bundled].
        #[arg(long)]
        hierarchies: Option<PathBuf>,
        /// Largest fraction of records that may be suppressed.
        #[arg(long, default_value_t = 1.0)]
        max_suppression: f64,
        /// Require classes of at least k + 1 rows.
        #[arg(long)]
        k_plus_one: bool,
        /// Output CSV [default: <data-dir>/<dataset>/anonymized-k<k>.csv].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a synthetic copy of a dataset.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value = "census_income")]
        dataset: DatasetId,
        #[command(flatten)]
        source: Source,
        /// Rows to sample [default: as many as the source].
        #[arg(long)]
        rows: Option<usize>,
        /// Output CSV [default: <data-dir>/<dataset>/synthetic-<seed>.csv].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment grid and write its run log.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Overwrite an existing log for the same config.
        #[arg(long)]
        force: bool,
    },
    /// Build the tables from a run log.
    Report {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: ReportFormat,
        /// Directory for the report files. Markdown and JSON go to stdout
        /// without it; CSV goes next to the log.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Rank a run log's outcomes under a scenario, as JSON.
    Pareto {
        #[arg(long)]
        log: PathBuf,
        /// 0 all dimensions, 1 accuracy, 2 energy.
        #[arg(long, value_parser = clap::value_parser!(u8).range(0..=2))]
        scenario: u8,
        /// Privacy ranks per treatment (JSON) [default: built-in scale].
        #[arg(long)]
        privacy_scale: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Source {
    #[arg(long, default_value = "data")]
    data_dir: PathBuf,
    /// Data file [default: <data-dir>/<dataset>/<file>].
    #[arg(long)]
    input: Option<PathBuf>,
    /// Attribute schema (JSON) [default: bundled].
    #[arg(long)]
    schema: Option<PathBuf>,
}

impl Source {
    fn load(&self, id: DatasetId) -> Result<(DataTable, AttributeSchema), Error> {
        let schema = match &self.schema {
            Some(p) => AttributeSchema::from_file(p)?,
            None => id.default_schema(),
        };
        let path = self.input.clone().unwrap_or_else(|| id.default_path(&self.data_dir));
        if !path.exists() {
            return Err(Error::MissingData(path));
        }
        // a headered file written by this tool reads back with header on
        let mut csv = id.csv_options();
        if self.input.is_some() {
            csv.header = sniff_header(&path, &schema, &csv);
        }
        Ok((load_csv(&path, &csv, &schema)?, schema))
    }

    fn dataset_dir(&self, id: DatasetId) -> PathBuf {
        self.data_dir.join(id.name())
    }
}

fn sniff_header(path: &Path, schema: &AttributeSchema, csv: &CsvOptions) -> bool {
    let Ok(text) = std::fs::read_to_string(path) else { return csv.header };
    let first = text.lines().next().unwrap_or("");
    let first_name = schema.columns().first().map(|c| c.name.as_str());
    first.split([',', ';']).next().map(str::trim) == first_name || csv.header
}

fn out_csv(id: DatasetId) -> CsvOptions {
    CsvOptions { header: true, ..id.csv_options() }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json values serialize"));
}

fn ensure_parent(path: &Path) -> Result<(), Error> {
    match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_owned(), source: e }),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Fetch { dataset, data_dir } => {
            let got = fetch_dataset(dataset, &data_dir, &HttpTransport::new())?;
            print_json(&json!({
                "dataset": dataset.name(),
                "path": got.path,
                "sha256": got.sha256,
                "downloaded": got.downloaded,
            }));
        }
        Command::Prep { dataset, source, out, train_fraction, split_seed } => {
            let (table, schema) = source.load(dataset)?;
            let (train, test) = split(&table, &SplitSpec { train_fraction, seed: split_seed })?;
            let dir = out.unwrap_or_else(|| source.dataset_dir(dataset).join("prepared"));
            std::fs::create_dir_all(&dir).map_err(|e| Error::Io { path: dir.clone(), source: e })?;
            let opts = out_csv(dataset);
            write_csv(&train, &dir.join("train.csv"), &opts)?;
            write_csv(&test, &dir.join("test.csv"), &opts)?;
            let labels = binarize_target(&table, &schema)?;
            let positive = labels.iter().filter(|&&l| l == 1).count() as f64 / labels.len().max(1) as f64;
            print_json(&json!({
                "dataset": dataset.name(),
                "rows": table.n_rows(),
                "columns": table.n_cols(),
                "train_rows": train.n_rows(),
                "test_rows": test.n_rows(),
                "positive_rate": positive,
                "out": dir,
            }));
        }
        Command::Anonymize { k, dataset, source, hierarchies, max_suppression, k_plus_one, out } => {
            let (table, schema) = source.load(dataset)?;
            let hierarchies = match &hierarchies {
                Some(p) => Hierarchies::from_file(p)?,
                None => dataset.default_hierarchies(),
            };
            let opts = AnonymizeOptions { k, max_record_suppression: max_suppression, k_plus_one };
            let (anon, report) = anonymize(&table, &schema, &hierarchies, &opts)?;
            let out = out.unwrap_or_else(|| source.dataset_dir(dataset).join(format!("anonymized-k{k}.csv")));
            ensure_parent(&out)?;
            write_csv(&anon, &out, &out_csv(dataset))?;
            print_json(&json!({
                "dataset": dataset.name(),
                "out": out,
                "suppression_ratio": suppression_ratio(&table, &anon, &report),
                "report": report,
            }));
        }
        Command::Synth { seed, dataset, source, rows, out } => {
            let (table, schema) = source.load(dataset)?;
            let table = drop_identifying(&table, &schema);
            let labels = binarize_target(&table, &schema)?;
            let synthetic = sample_stratified(&table, &labels, rows.unwrap_or(table.n_rows()), seed)?;
            let out = out.unwrap_or_else(|| source.dataset_dir(dataset).join(format!("synthetic-{seed}.csv")));
            ensure_parent(&out)?;
            write_csv(&synthetic, &out, &out_csv(dataset))?;
            print_json(&json!({
                "dataset": dataset.name(),
                "out": out,
                "rows": synthetic.n_rows(),
                "utility": utility_report(&table, &synthetic)?,
            }));
        }
        Command::Bench { config, force } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            match cli.meter {
                Some(MeterArg::Sysfs) => cfg.meter.backend = MeterKind::Sysfs,
                Some(MeterArg::Simulated) => cfg.meter.backend = MeterKind::Simulated,
                None => {}
            }
            let outcome = run_experiment(&cfg, force)?;
            let failed = outcome.records.iter().filter(|r| r.status == Status::Error).count();
            if failed > 0 {
                warn!("{failed} records carry an error status; see the log");
            }
            print_json(&json!({
                "log": outcome.log_path,
                "records": outcome.records.len(),
                "error_records": failed,
                "idle_baseline": outcome.baseline,
            }));
        }
        Command::Report { log, format, out, alpha } => {
            let report = report_from_log(&log, alpha)?;
            let files = render(&report, format);
            let dir = match (out, format) {
                (Some(dir), _) => Some(dir),
                (None, ReportFormat::Csv) => Some(log.parent().map(Path::to_owned).unwrap_or_default()),
                (None, _) => None,
            };
            match dir {
                Some(dir) => {
                    for p in write_rendered(&dir, &files)? {
                        println!("{}", p.display());
                    }
                }
                None => files.iter().for_each(|f| print!("{}", f.contents)),
            }
        }
        Command::Pareto { log, scenario: id, privacy_scale } => {
            let scale = match &privacy_scale {
                Some(p) => PrivacyScale::from_json(
                    &std::fs::read_to_string(p).map_err(|e| Error::Io { path: p.clone(), source: e })?,
                )?,
                None => PrivacyScale::default(),
            };
            let points = collect_points(&read_log(&log)?, &scale)?;
            let s = scenario(id).expect("scenario id range-checked by the parser");
            let ranked = rank_by_dataset(&points, &s.weights());
            print_json(&json!({
                "scenario": s,
                "weights": s.weights(),
                "points": ranked,
            }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
