use std::path::PathBuf;
use std::sync::Arc;

use log::{info, warn};

use super::config::{derive_seed, repetition_seed, ClockKind, ExperimentConfig, MeterKind, Treatment};
use super::log::{LogWriter, Phase, RunRecord, Status};
use super::HarnessError;
use crate::anonymity::{anonymize, apply_generalization, AnonymizeOptions, GeneralizationState, Hierarchies};
use crate::data::{binarize_target, load_csv, split, AttributeRole, AttributeSchema, CsvOptions, DataTable, Encoder, EncodedMatrix};
use crate::energy::{adjust, open_meter, IdleBaseline, ManualClock, Meter, MeterBackend, SystemClock};
use crate::learners::{ModelKind, TrainedModel};
use crate::synthesis;

/// Everything a run needs besides the config itself.
pub struct Inputs {
    pub schema: AttributeSchema,
    pub hierarchies: Hierarchies,
    pub csv: CsvOptions,
    pub data_file: PathBuf,
}

impl Inputs {
    pub fn resolve(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let schema = match &cfg.schema {
            Some(p) => AttributeSchema::from_file(p)?,
            None => cfg.dataset.default_schema(),
        };
        let hierarchies = match &cfg.hierarchies {
            Some(p) => Hierarchies::from_file(p)?,
            None => cfg.dataset.default_hierarchies(),
        };
        Ok(Self {
            schema,
            hierarchies,
            csv: cfg.csv.clone().unwrap_or_else(|| cfg.dataset.csv_options()),
            data_file: cfg.data_file(),
        })
    }
}

pub struct RunOutcome {
    pub log_path: PathBuf,
    pub records: Vec<RunRecord>,
    pub baseline: Option<IdleBaseline>,
}

/// Meter plus, in virtual-clock mode, the clock to charge work against.
struct Metering {
    meter: Meter,
    virtual_clock: Option<(ManualClock, f64)>,
    baseline: Option<IdleBaseline>,
}

impl Metering {
    fn open(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        let m = &cfg.meter;
        let (backend, virtual_clock) = match m.backend {
            MeterKind::Sysfs => {
                let backend = match &m.rapl_root {
                    Some(root) => MeterBackend::PowercapSysfs { root: root.clone() },
                    None => MeterBackend::powercap_from_env(),
                };
                (backend, None)
            }
            MeterKind::Simulated => match m.clock {
                ClockKind::Virtual => {
                    let clock = ManualClock::new();
                    let backend =
                        MeterBackend::Simulated { watts: m.watts, idle_watts: m.idle_watts, clock: Arc::new(clock.clone()) };
                    (backend, Some((clock, m.seconds_per_op)))
                }
                ClockKind::Wall => (
                    MeterBackend::Simulated { watts: m.watts, idle_watts: m.idle_watts, clock: Arc::new(SystemClock::new()) },
                    None,
                ),
            },
        };
        let meter = open_meter(&backend)?;
        let baseline = if m.idle_seconds > 0.0 { Some(meter.measure_idle(m.idle_seconds)?) } else { None };
        Ok(Self { meter, virtual_clock, baseline })
    }

    /// Run `work` as one metered phase. `work` returns its result and an
    /// operation count, which advances the virtual clock when there is one.
    fn phase<R>(
        &self,
        record: &mut RunRecord,
        work: impl FnOnce() -> Result<(R, u64), HarnessError>,
    ) -> Result<R, HarnessError> {
        let started = self.meter.clock().now();
        let label = format!("{:?}", record.phase).to_lowercase();
        let (out, sample) = self.meter.measure(&label, || {
            let out = work();
            if let (Ok((_, ops)), Some((clock, spo))) = (&out, &self.virtual_clock) {
                clock.advance(*ops as f64 * spo);
            }
            out
        })?;
        record.started_s = started;
        record.ended_s = self.meter.clock().now();
        record.duration_s = sample.duration_s;
        record.joules = sample.joules;
        if let Some(b) = &self.baseline {
            record.joules_adjusted = adjust(&sample, b)?.adjusted_joules;
        }
        match out {
            Ok((r, _)) => Ok(r),
            Err(e) => {
                record.status = Status::Error;
                record.error = Some(e.to_string());
                Err(e)
            }
        }
    }
}

struct Treated {
    train: DataTable,
    state: GeneralizationState,
}

fn n_ops(parts: &[usize]) -> u64 {
    parts.iter().fold(1u64, |acc, &p| acc.saturating_mul(p as u64))
}

fn train_ops(kind: ModelKind, cfg: &ExperimentConfig, rows: usize, width: usize) -> u64 {
    let encode = n_ops(&[rows, width]);
    encode
        + match kind {
            ModelKind::Knn => n_ops(&[rows, width]),
            ModelKind::LogReg => n_ops(&[cfg.learners.logreg.epochs, rows, width, 2]),
            ModelKind::Nn => n_ops(&[cfg.learners.nn.epochs, rows, width, cfg.learners.nn_hidden_width, 3]),
        }
}

fn eval_ops(kind: ModelKind, cfg: &ExperimentConfig, train_rows: usize, rows: usize, width: usize) -> u64 {
    let encode = n_ops(&[rows, width]);
    encode
        + match kind {
            ModelKind::Knn => n_ops(&[rows, train_rows, width]),
            ModelKind::LogReg => n_ops(&[rows, width]),
            ModelKind::Nn => n_ops(&[rows, width, cfg.learners.nn_hidden_width]),
        }
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    inputs: &'a Inputs,
    metering: Metering,
    writer: LogWriter,
    records: Vec<RunRecord>,
    hash: String,
}

impl Runner<'_> {
    fn record(&self, treatment: Treatment, model: Option<ModelKind>, rep: usize, seed: u64, phase: Phase) -> RunRecord {
        RunRecord {
            config_hash: self.hash.clone(),
            dataset: self.cfg.dataset.name().to_owned(),
            treatment,
            model,
            repetition: rep,
            seed,
            phase,
            status: Status::Ok,
            error: None,
            backend: self.metering.meter.backend(),
            started_s: 0.0,
            ended_s: 0.0,
            duration_s: 0.0,
            joules: 0.0,
            joules_adjusted: None,
            accuracy: None,
            log_loss: None,
            rows: None,
            features: None,
            suppression: None,
            achieved_k: None,
            exact_match_rate: None,
        }
    }

    fn push(&mut self, record: RunRecord) -> Result<(), HarnessError> {
        if let Some(e) = &record.error {
            warn!("{} {} {:?} rep {} {:?}: {e}", record.dataset, record.treatment, record.model, record.repetition, record.phase);
        }
        self.writer.append(&record)?;
        self.records.push(record);
        Ok(())
    }

    fn treat(&self, treatment: Treatment, train: &DataTable, seed: u64, rec: &mut RunRecord) -> Result<Treated, HarnessError> {
        let schema = &self.inputs.schema;
        let cells = n_ops(&[train.n_rows(), train.n_cols()]);
        match treatment {
            Treatment::Benchmark => {
                let t = self.metering.phase(rec, || Ok((train.clone(), cells)))?;
                rec.rows = Some(t.n_rows());
                Ok(Treated { train: t, state: GeneralizationState::new() })
            }
            Treatment::KAnon(k) => {
                let opts = AnonymizeOptions {
                    k,
                    max_record_suppression: self.cfg.anonymity.max_record_suppression,
                    k_plus_one: self.cfg.anonymity.k_plus_one,
                };
                let (t, report) = self.metering.phase(rec, || {
                    let (t, report) = anonymize(train, schema, &self.inputs.hierarchies, &opts)?;
                    let qi = schema.quasi_identifiers().count().max(1);
                    let ops = cells + n_ops(&[train.n_rows(), qi, qi, report.generalization_steps + 1]);
                    Ok(((t, report), ops))
                })?;
                rec.rows = Some(t.n_rows());
                rec.suppression = Some(report.suppressed_cell_fraction);
                rec.achieved_k = report.achieved_min_class_size;
                Ok(Treated { train: t, state: report.state })
            }
            Treatment::Synthetic(s) => {
                let source = drop_identifying(train, schema);
                let sample_seed = derive_seed(seed, s ^ 0x5e7);
                let t = self.metering.phase(rec, || {
                    let labels = binarize_target(&source, schema)?;
                    let t = synthesis::sample_stratified(&source, &labels, source.n_rows(), sample_seed)?;
                    let (n, p) = (source.n_rows(), source.n_cols());
                    let log_n = (usize::BITS - n.leading_zeros()) as usize;
                    let ops = n_ops(&[n, p, log_n]) + n_ops(&[n, p, p]) + n_ops(&[p, p, p]) + n_ops(&[t.n_rows(), p, p]);
                    Ok((t, ops))
                })?;
                rec.rows = Some(t.n_rows());
                rec.exact_match_rate = Some(synthesis::utility_report(&source, &t)?.exact_match_rate);
                Ok(Treated { train: t, state: GeneralizationState::new() })
            }
        }
    }

    fn run_cell(&mut self, treatment: Treatment, rep: usize) -> Result<(), HarnessError> {
        let seed = repetition_seed(self.cfg.master_seed, rep);
        let inputs = self.inputs;
        let mut rec = self.record(treatment, None, rep, seed, Phase::Prepare);
        let prepared = self.metering.phase(&mut rec, || {
            let table = load_csv(&inputs.data_file, &inputs.csv, &inputs.schema)?;
            let ops = n_ops(&[table.n_rows(), table.n_cols()]);
            Ok((split(&table, &self.cfg.split)?, ops))
        });
        if let Ok((train, _)) = &prepared {
            rec.rows = Some(train.n_rows());
        }
        self.push(rec)?;
        let Ok((train, test)) = prepared else {
            return self.skip_models(treatment, rep, seed, "prepare failed");
        };

        let mut rec = self.record(treatment, None, rep, seed, Phase::Treat);
        let treated = self.treat(treatment, &train, seed, &mut rec);
        self.push(rec)?;
        let Ok(treated) = treated else {
            return self.skip_models(treatment, rep, seed, "treat failed");
        };
        let test = match apply_generalization(&test, &treated.state, &inputs.schema, &inputs.hierarchies) {
            Ok(t) => t,
            Err(e) => {
                let msg = format!("generalizing test split: {e}");
                return self.skip_models(treatment, rep, seed, &msg);
            }
        };

        for (mi, &kind) in self.cfg.models.iter().enumerate() {
            let model_seed = derive_seed(seed, mi as u64 + 1);
            let mut rec = self.record(treatment, Some(kind), rep, model_seed, Phase::Train);
            let trained = self.metering.phase(&mut rec, || {
                let encoder = Encoder::fit(&treated.train, &inputs.schema)?;
                let enc: EncodedMatrix<f64> = encoder.transform(&treated.train)?;
                if enc.x.rows() == 0 {
                    return Err(HarnessError::Config("no complete training rows after treatment".into()));
                }
                let model = TrainedModel::fit(kind, &enc.x, &enc.labels, &self.cfg.learners, model_seed)?;
                let ops = train_ops(kind, self.cfg, enc.x.rows(), enc.x.cols());
                Ok(((encoder, model, enc.x.rows()), ops))
            });
            if let Ok((encoder, _, rows)) = &trained {
                rec.rows = Some(*rows);
                rec.features = Some(encoder.width());
            }
            self.push(rec)?;
            let Ok((encoder, model, train_rows)) = trained else { continue };

            let mut rec = self.record(treatment, Some(kind), rep, model_seed, Phase::Evaluate);
            let result = self.metering.phase(&mut rec, || {
                let enc: EncodedMatrix<f64> = encoder.transform(&test)?;
                let r = model.evaluate(&enc.x, &enc.labels)?;
                let ops = eval_ops(kind, self.cfg, train_rows, enc.x.rows(), enc.x.cols());
                Ok((r, ops))
            });
            if let Ok(r) = &result {
                rec.accuracy = Some(r.accuracy);
                rec.log_loss = r.log_loss;
                rec.rows = Some(r.total);
                rec.features = Some(encoder.width());
            }
            self.push(rec)?;
        }
        Ok(())
    }

    /// Error records standing in for the model phases that could not run.
    fn skip_models(&mut self, treatment: Treatment, rep: usize, seed: u64, why: &str) -> Result<(), HarnessError> {
        for &kind in &self.cfg.models {
            let mut rec = self.record(treatment, Some(kind), rep, seed, Phase::Train);
            rec.status = Status::Error;
            rec.error = Some(format!("skipped: {why}"));
            self.push(rec)?;
        }
        Ok(())
    }
}

/// The table without the schema's identifying columns.
pub fn drop_identifying(table: &DataTable, schema: &AttributeSchema) -> DataTable {
    let ids: Vec<&str> = schema.with_role(AttributeRole::Identifying).map(|c| c.name.as_str()).collect();
    table.without_columns(&ids)
}

/// Run the whole grid, writing each record to the log as soon as it is done.
/// Refuses to overwrite an existing log for the same config unless `force`.
pub fn run_experiment(cfg: &ExperimentConfig, force: bool) -> Result<RunOutcome, HarnessError> {
    cfg.validate()?;
    let inputs = Inputs::resolve(cfg)?;
    if !inputs.data_file.exists() {
        return Err(HarnessError::MissingData(inputs.data_file.clone()));
    }
    let writer = LogWriter::create(&cfg.log_path(), force)?;
    std::fs::write(cfg.output_dir.join(format!("run-{}.config.json", cfg.hash())), cfg.to_json())
        .map_err(|e| HarnessError::io(&cfg.output_dir, e))?;
    let metering = Metering::open(cfg)?;
    let baseline = metering.baseline;
    let mut runner = Runner { cfg, inputs: &inputs, metering, writer, records: Vec::new(), hash: cfg.hash() };
    for &treatment in &cfg.treatments {
        for rep in 0..cfg.repetitions {
            info!("{} {} repetition {}", cfg.dataset, treatment, rep + 1);
            runner.run_cell(treatment, rep)?;
        }
    }
    Ok(RunOutcome { log_path: runner.writer.path().to_owned(), records: runner.records, baseline })
}
