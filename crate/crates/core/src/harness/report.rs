use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::Treatment;
use super::log::{Phase, RunRecord};
use super::HarnessError;
use crate::learners::ModelKind;
use crate::stats::{pairwise_matrix, Alternative, Method, PValueMatrix};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Percent deviation of `value` from `reference`, rounded half away from zero.
/// `None` when the reference is zero.
pub fn percent_deviation(value: f64, reference: f64) -> Option<i64> {
    if reference == 0.0 {
        return None;
    }
    Some(((value - reference) / reference * 100.0).round() as i64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub dataset: String,
    pub model: ModelKind,
    pub treatment: Treatment,
    pub repetitions: usize,
    pub mean_joules: f64,
    pub mean_joules_adjusted: Option<f64>,
    pub mean_duration_s: f64,
    pub energy_deviation_pct: Option<i64>,
    pub duration_deviation_pct: Option<i64>,
}

/// Cost of the treatment itself (anonymization or synthesis), kept apart from
/// the train and evaluate totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatCostRow {
    pub dataset: String,
    pub treatment: Treatment,
    pub repetitions: usize,
    pub mean_joules: f64,
    pub mean_joules_adjusted: Option<f64>,
    pub mean_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub dataset: String,
    pub treatment: Treatment,
    pub model: ModelKind,
    pub repetitions: usize,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuppressionRow {
    pub dataset: String,
    pub k: usize,
    pub repetitions: usize,
    /// Mean suppressed-cell fraction times 100.
    pub suppression_pct: f64,
    /// Smallest class size seen over the repetitions.
    pub achieved_k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UTestTable {
    pub dataset: String,
    pub model: ModelKind,
    pub alpha: f64,
    /// Per-repetition train + evaluate joules, in label order.
    pub samples: Vec<Vec<f64>>,
    pub matrix: PValueMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hashes: Vec<String>,
    pub deviation: Vec<DeviationRow>,
    pub treat_costs: Vec<TreatCostRow>,
    pub utests: Vec<UTestTable>,
    pub accuracy: Vec<AccuracyRow>,
    pub suppression: Vec<SuppressionRow>,
    pub error_records: usize,
    pub notes: Vec<String>,
}

impl Report {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::MalformedLog(format!("report: {e}")))
    }

    pub fn deviation_for(&self, dataset: &str, model: ModelKind, treatment: Treatment) -> Option<&DeviationRow> {
        self.deviation.iter().find(|r| r.dataset == dataset && r.model == model && r.treatment == treatment)
    }

    pub fn accuracy_for(&self, dataset: &str, model: ModelKind, treatment: Treatment) -> Option<&AccuracyRow> {
        self.accuracy.iter().find(|r| r.dataset == dataset && r.model == model && r.treatment == treatment)
    }

    pub fn utest_for(&self, dataset: &str, model: ModelKind) -> Option<&UTestTable> {
        self.utests.iter().find(|t| t.dataset == dataset && t.model == model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown format `{other}` (expected markdown, csv or json)")),
        }
    }
}

/// Train + evaluate totals for one (dataset, treatment, model, repetition).
#[derive(Default, Clone, Copy)]
pub(crate) struct RepTotal {
    pub joules: f64,
    pub adjusted: Option<f64>,
    pub duration: f64,
    phases: u8,
}

pub(crate) type CellKey = (String, ModelKind, Treatment);

pub(crate) fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 { 0.0 } else { s / n as f64 }
}

fn mean_opt(v: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let all: Option<Vec<f64>> = v.into_iter().collect();
    all.filter(|a| !a.is_empty()).map(mean)
}

/// Complete repetitions only: both train and evaluate succeeded.
pub(crate) fn rep_totals(records: &[RunRecord]) -> BTreeMap<CellKey, BTreeMap<usize, RepTotal>> {
    let mut cells: BTreeMap<CellKey, BTreeMap<usize, RepTotal>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok() && matches!(r.phase, Phase::Train | Phase::Evaluate)) {
        let Some(model) = r.model else { continue };
        let t = cells
            .entry((r.dataset.clone(), model, r.treatment))
            .or_default()
            .entry(r.repetition)
            .or_insert(RepTotal { adjusted: Some(0.0), ..Default::default() });
        t.joules += r.joules;
        t.adjusted = t.adjusted.zip(r.joules_adjusted).map(|(a, b)| a + b);
        t.duration += r.duration_s;
        t.phases += 1;
    }
    for reps in cells.values_mut() {
        reps.retain(|_, t| t.phases == 2);
    }
    cells.retain(|_, reps| !reps.is_empty());
    cells
}

pub fn deviation_table(records: &[RunRecord]) -> Result<Vec<DeviationRow>, HarnessError> {
    let cells = rep_totals(records);
    let mut rows = Vec::new();
    for ((dataset, model, treatment), reps) in &cells {
        let bench = cells
            .get(&(dataset.clone(), *model, Treatment::Benchmark))
            .ok_or_else(|| HarnessError::MissingBenchmark { dataset: dataset.clone(), model: model.to_string() })?;
        let (bj, bd) = (mean(bench.values().map(|t| t.joules)), mean(bench.values().map(|t| t.duration)));
        let mj = mean(reps.values().map(|t| t.joules));
        let md = mean(reps.values().map(|t| t.duration));
        rows.push(DeviationRow {
            dataset: dataset.clone(),
            model: *model,
            treatment: *treatment,
            repetitions: reps.len(),
            mean_joules: mj,
            mean_joules_adjusted: mean_opt(reps.values().map(|t| t.adjusted)),
            mean_duration_s: md,
            energy_deviation_pct: percent_deviation(mj, bj),
            duration_deviation_pct: percent_deviation(md, bd),
        });
    }
    Ok(rows)
}

pub fn treat_cost_table(records: &[RunRecord]) -> Vec<TreatCostRow> {
    let mut groups: BTreeMap<(String, Treatment), Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok() && r.phase == Phase::Treat) {
        groups.entry((r.dataset.clone(), r.treatment)).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((dataset, treatment), rs)| TreatCostRow {
            dataset,
            treatment,
            repetitions: rs.len(),
            mean_joules: mean(rs.iter().map(|r| r.joules)),
            mean_joules_adjusted: mean_opt(rs.iter().map(|r| r.joules_adjusted)),
            mean_duration_s: mean(rs.iter().map(|r| r.duration_s)),
        })
        .collect()
}

/// One-sided "row greater than column" matrices over per-repetition energy,
/// for every (dataset, model) with at least two treatments of two repetitions.
pub fn utest_tables(records: &[RunRecord], alpha: f64) -> Result<Vec<UTestTable>, HarnessError> {
    let cells = rep_totals(records);
    let mut by_model: BTreeMap<(String, ModelKind), Vec<(String, Vec<f64>)>> = BTreeMap::new();
    for ((dataset, model, treatment), reps) in &cells {
        if reps.len() >= 2 {
            by_model
                .entry((dataset.clone(), *model))
                .or_default()
                .push((treatment.to_string(), reps.values().map(|t| t.joules).collect()));
        }
    }
    let mut out = Vec::new();
    for ((dataset, model), groups) in by_model {
        if groups.len() < 2 {
            continue;
        }
        let matrix = pairwise_matrix(&groups, Alternative::Greater, Method::Auto)?;
        out.push(UTestTable { dataset, model, alpha, samples: groups.into_iter().map(|g| g.1).collect(), matrix });
    }
    Ok(out)
}

pub fn accuracy_table(records: &[RunRecord]) -> Vec<AccuracyRow> {
    let mut groups: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok() && r.phase == Phase::Evaluate) {
        if let (Some(model), Some(acc)) = (r.model, r.accuracy) {
            groups.entry((r.dataset.clone(), model, r.treatment)).or_default().push(acc);
        }
    }
    groups
        .into_iter()
        .map(|((dataset, model, treatment), accs)| AccuracyRow {
            dataset,
            treatment,
            model,
            repetitions: accs.len(),
            mean_accuracy: mean(accs.iter().copied()),
            min_accuracy: accs.iter().copied().fold(f64::INFINITY, f64::min),
            max_accuracy: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect()
}

pub fn suppression_table(records: &[RunRecord]) -> Vec<SuppressionRow> {
    let mut groups: BTreeMap<(String, usize), Vec<&RunRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok() && r.phase == Phase::Treat) {
        if let (Treatment::KAnon(k), Some(_)) = (r.treatment, r.suppression) {
            groups.entry((r.dataset.clone(), k)).or_default().push(r);
        }
    }
    groups
        .into_iter()
        .map(|((dataset, k), rs)| SuppressionRow {
            dataset,
            k,
            repetitions: rs.len(),
            suppression_pct: 100.0 * mean(rs.iter().filter_map(|r| r.suppression)),
            achieved_k: rs.iter().filter_map(|r| r.achieved_k).min(),
        })
        .collect()
}

/// All tables for one log. An empty log, or one without a single successful
/// record, is an error.
pub fn build_report(records: &[RunRecord], alpha: f64) -> Result<Report, HarnessError> {
    if !records.iter().any(RunRecord::is_ok) {
        return Err(HarnessError::EmptyLog);
    }
    let mut hashes: Vec<String> = records.iter().map(|r| r.config_hash.clone()).collect();
    hashes.sort();
    hashes.dedup();
    let deviation = deviation_table(records)?;
    let notes = vec![
        "Energy and time deviations cover the train and evaluate phases against the benchmark; treatment cost is listed separately.".into(),
        "Deviation percentages use raw joules; idle-adjusted means are in the JSON output.".into(),
        "Accuracy is the arithmetic mean of plain accuracy over repetitions, scored on the untreated held-out split.".into(),
        format!("U-test cells give P(row uses more energy than column), one-sided, alpha = {alpha}."),
        "Re-identification risk under k-anonymity has been reported in the literature at about 0.50% (1 in 200); it is not computed here.".into(),
    ];
    Ok(Report {
        config_hashes: hashes,
        deviation,
        treat_costs: treat_cost_table(records),
        utests: utest_tables(records, alpha)?,
        accuracy: accuracy_table(records),
        suppression: suppression_table(records),
        error_records: records.iter().filter(|r| !r.is_ok()).count(),
        notes,
    })
}

pub fn report_from_log(path: &Path, alpha: f64) -> Result<Report, HarnessError> {
    build_report(&super::log::read_log(path)?, alpha)
}

/// One rendered output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rendered {
    pub file_name: String,
    pub contents: String,
}

pub fn render(report: &Report, format: ReportFormat) -> Vec<Rendered> {
    match format {
        ReportFormat::Json => vec![Rendered {
            file_name: "report.json".into(),
            contents: serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        }],
        ReportFormat::Markdown => vec![Rendered { file_name: "report.md".into(), contents: markdown(report) }],
        ReportFormat::Csv => csv_files(report),
    }
}

/// Write every rendered file into `dir`, returning the paths.
pub fn write_rendered(dir: &Path, files: &[Rendered]) -> Result<Vec<std::path::PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    files
        .iter()
        .map(|f| {
            let p = dir.join(&f.file_name);
            std::fs::write(&p, &f.contents).map_err(|e| HarnessError::io(&p, e))?;
            Ok(p)
        })
        .collect()
}

fn fmt_pct(p: Option<i64>) -> String {
    match p {
        Some(v) if v > 0 => format!("+{v}%"),
        Some(v) => format!("{v}%"),
        None => "n/a".into(),
    }
}

fn fmt_p(p: Option<f64>) -> String {
    match p {
        None => "-".into(),
        Some(p) if p < 0.01 => "<0.01".into(),
        Some(p) if p > 0.99 => ">0.99".into(),
        Some(p) => format!("{p:.2}"),
    }
}

fn datasets<'a>(names: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut v: Vec<&str> = names.collect();
    v.sort();
    v.dedup();
    v
}

fn markdown(r: &Report) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# Energy, privacy and accuracy report\n");

    let _ = writeln!(s, "## Run time and energy (train + evaluate)\n");
    for ds in datasets(r.deviation.iter().map(|d| d.dataset.as_str())) {
        let rows: Vec<&DeviationRow> = r.deviation.iter().filter(|d| d.dataset == ds).collect();
        let mut models: Vec<ModelKind> = rows.iter().map(|d| d.model).collect();
        models.dedup();
        let mut treatments: Vec<Treatment> = rows.iter().map(|d| d.treatment).collect();
        treatments.sort();
        treatments.dedup();
        let _ = writeln!(s, "### {ds}\n");
        let _ = write!(s, "| Treatment |");
        for m in &models {
            let _ = write!(s, " {m} time (s) | {m} energy (J) |");
        }
        let _ = write!(s, "\n|---|");
        for _ in &models {
            let _ = write!(s, "---:|---:|");
        }
        s.push('\n');
        for t in &treatments {
            let _ = write!(s, "| {t} |");
            for m in &models {
                match rows.iter().find(|d| d.model == *m && d.treatment == *t) {
                    Some(d) if d.treatment == Treatment::Benchmark => {
                        let _ = write!(s, " {:.2} | {:.2} |", d.mean_duration_s, d.mean_joules);
                    }
                    Some(d) => {
                        let _ = write!(s, " {} | {} |", fmt_pct(d.duration_deviation_pct), fmt_pct(d.energy_deviation_pct));
                    }
                    None => s.push_str(" - | - |"),
                }
            }
            s.push('\n');
        }
        s.push('\n');
    }

    if !r.treat_costs.is_empty() {
        let _ = writeln!(s, "## Treatment cost\n");
        let _ = writeln!(s, "| Dataset | Treatment | Reps | Time (s) | Energy (J) |\n|---|---|---:|---:|---:|");
        for t in &r.treat_costs {
            let _ = writeln!(s, "| {} | {} | {} | {:.4} | {:.4} |", t.dataset, t.treatment, t.repetitions, t.mean_duration_s, t.mean_joules);
        }
        s.push('\n');
    }

    if !r.utests.is_empty() {
        let _ = writeln!(s, "## Mann-Whitney U (row uses more energy than column)\n");
        for u in &r.utests {
            let _ = writeln!(s, "### {} / {}\n", u.dataset, u.model);
            let _ = write!(s, "| |");
            for l in &u.matrix.labels {
                let _ = write!(s, " {l} |");
            }
            let _ = write!(s, "\n|---|");
            for _ in &u.matrix.labels {
                s.push_str("---:|");
            }
            s.push('\n');
            for (i, l) in u.matrix.labels.iter().enumerate() {
                let _ = write!(s, "| {l} |");
                for p in &u.matrix.p[i] {
                    let _ = write!(s, " {} |", fmt_p(*p));
                }
                s.push('\n');
            }
            s.push('\n');
        }
    }

    let _ = writeln!(s, "## Accuracy\n");
    for ds in datasets(r.accuracy.iter().map(|a| a.dataset.as_str())) {
        let rows: Vec<&AccuracyRow> = r.accuracy.iter().filter(|a| a.dataset == ds).collect();
        let mut models: Vec<ModelKind> = rows.iter().map(|a| a.model).collect();
        models.sort();
        models.dedup();
        let mut treatments: Vec<Treatment> = rows.iter().map(|a| a.treatment).collect();
        treatments.sort();
        treatments.dedup();
        let _ = writeln!(s, "### {ds}\n");
        let _ = write!(s, "| Treatment |");
        for m in &models {
            let _ = write!(s, " {m} |");
        }
        let _ = write!(s, "\n|---|");
        for _ in &models {
            s.push_str("---:|");
        }
        s.push('\n');
        for t in &treatments {
            let _ = write!(s, "| {t} |");
            for m in &models {
                match rows.iter().find(|a| a.model == *m && a.treatment == *t) {
                    Some(a) => {
                        let _ = write!(s, " {:.3} |", a.mean_accuracy);
                    }
                    None => s.push_str(" - |"),
                }
            }
            s.push('\n');
        }
        s.push('\n');
    }

    if !r.suppression.is_empty() {
        let _ = writeln!(s, "## Suppressed cells\n");
        let _ = writeln!(s, "| Dataset | k | Suppression | Smallest class |\n|---|---:|---:|---:|");
        for row in &r.suppression {
            let achieved = row.achieved_k.map_or("-".to_string(), |k| k.to_string());
            let _ = writeln!(s, "| {} | {} | {:.1}% | {} |", row.dataset, row.k, row.suppression_pct, achieved);
        }
        s.push('\n');
    }

    if r.error_records > 0 {
        let _ = writeln!(s, "{} records in the log carry an error status.\n", r.error_records);
    }
    let _ = writeln!(s, "## Notes\n");
    for n in &r.notes {
        let _ = writeln!(s, "- {n}");
    }
    s
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

fn csv_file(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Rendered {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    Rendered { file_name: name.into(), contents: String::from_utf8(bytes).expect("csv is utf-8") }
}

fn csv_files(r: &Report) -> Vec<Rendered> {
    vec![
        csv_file(
            "deviation.csv",
            &["dataset", "model", "treatment", "repetitions", "mean_duration_s", "mean_joules", "mean_joules_adjusted", "duration_deviation_pct", "energy_deviation_pct"],
            r.deviation
                .iter()
                .map(|d| {
                    vec![
                        d.dataset.clone(),
                        d.model.to_string(),
                        d.treatment.to_string(),
                        d.repetitions.to_string(),
                        d.mean_duration_s.to_string(),
                        d.mean_joules.to_string(),
                        opt(d.mean_joules_adjusted),
                        opt(d.duration_deviation_pct),
                        opt(d.energy_deviation_pct),
                    ]
                })
                .collect(),
        ),
        csv_file(
            "treat_costs.csv",
            &["dataset", "treatment", "repetitions", "mean_duration_s", "mean_joules", "mean_joules_adjusted"],
            r.treat_costs
                .iter()
                .map(|t| {
                    vec![
                        t.dataset.clone(),
                        t.treatment.to_string(),
                        t.repetitions.to_string(),
                        t.mean_duration_s.to_string(),
                        t.mean_joules.to_string(),
                        opt(t.mean_joules_adjusted),
                    ]
                })
                .collect(),
        ),
        csv_file(
            "utest.csv",
            &["dataset", "model", "row", "column", "p_greater"],
            r.utests
                .iter()
                .flat_map(|u| {
                    let labels = &u.matrix.labels;
                    (0..labels.len()).flat_map(move |i| {
                        (0..labels.len()).filter(move |&j| i != j).map(move |j| {
                            vec![u.dataset.clone(), u.model.to_string(), labels[i].clone(), labels[j].clone(), opt(u.matrix.p[i][j])]
                        })
                    })
                })
                .collect(),
        ),
        csv_file(
            "accuracy.csv",
            &["dataset", "treatment", "model", "repetitions", "mean_accuracy", "min_accuracy", "max_accuracy"],
            r.accuracy
                .iter()
                .map(|a| {
                    vec![
                        a.dataset.clone(),
                        a.treatment.to_string(),
                        a.model.to_string(),
                        a.repetitions.to_string(),
                        a.mean_accuracy.to_string(),
                        a.min_accuracy.to_string(),
                        a.max_accuracy.to_string(),
                    ]
                })
                .collect(),
        ),
        csv_file(
            "suppression.csv",
            &["dataset", "k", "repetitions", "suppression_pct", "achieved_k"],
            r.suppression
                .iter()
                .map(|s| vec![s.dataset.clone(), s.k.to_string(), s.repetitions.to_string(), s.suppression_pct.to_string(), opt(s.achieved_k)])
                .collect(),
        ),
    ]
}
