//! The commands behind the `edwait` binary, callable as library functions.
//!
//! Every file written starts with a `# config_hash=… seed=…` line. Later
//! stages reuse files written earlier (feature matrices, forests) when that
//! line matches the current run and recompute them otherwise, so a partial
//! rerun produces the same bytes as a full one.

mod evaluate;
mod route;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::Datelike;
use edwait_core::edsim::{simulate, SimConfig};
use edwait_core::eventlog::{
    clean, parse_log, sort_records, split, CohortSplit, PatientRecord, RawRecord, RejectionTally, SplitBoundaries,
};
use edwait_core::features::{featurize_all, FeatureMatrix, FeatureSchema, HourlyMeans, LogIndex, Stage};
use edwait_core::qrf::{self, ForestModel};
use edwait_core::{seed, Error, Result};

use crate::config::{hash_parts, stage_label, ExperimentConfig};

pub use evaluate::{cmd_evaluate, update_walkthrough};
pub use route::{build_routing, cmd_route, run_criteria, RoutingSetup};

/// Top features reported by `importance`.
pub const IMPORTANCE_TOP: usize = 20;

/// Files written and a human-readable summary of one command.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Resolved settings shared by all commands.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub hash: String,
}

impl Context {
    pub fn new(mut config: ExperimentConfig, seed: Option<u64>, out_dir: Option<PathBuf>) -> Result<Self> {
        if let Some(s) = seed {
            config.seed = s;
        }
        if let Some(o) = out_dir {
            config.out_dir = o;
        }
        config.validate()?;
        let canonical = config.canonical()?;
        let log_bytes = match &config.event_log {
            Some(p) => std::fs::read(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => Vec::new(),
        };
        let hash = hash_parts(&[canonical.as_bytes(), &log_bytes]);
        Ok(Context { seed: config.seed, out_dir: config.out_dir.clone(), config, hash })
    }

    /// First line of every output file, without the comment marker.
    pub fn header(&self) -> String {
        format!("config_hash={} seed={}", self.hash, self.seed)
    }

    pub fn derived_seed(&self, label: &str) -> u64 {
        seed::derive_label(self.seed, label)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig { seed: self.derived_seed("edsim"), ..self.config.sim.clone() }
    }

    /// True when `path` exists and starts with this run's header.
    fn is_current(&self, path: &Path) -> bool {
        let Ok(f) = File::open(path) else { return false };
        let mut line = String::new();
        BufReader::new(f).read_line(&mut line).is_ok() && line.trim_end() == format!("# {}", self.header())
    }
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub(crate) fn write_text(path: &Path, header: &str, body: &str) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# {header}")?;
    w.write_all(body.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Cleaned log, split and feature index.
pub struct Cohort {
    pub records: Vec<PatientRecord>,
    pub rejections: RejectionTally,
    pub parse_diagnostics: usize,
    pub bounds: SplitBoundaries,
    pub split: CohortSplit,
    pub index: LogIndex,
}

fn raw_records(ctx: &Context) -> Result<(Vec<RawRecord>, usize, Option<i32>)> {
    match &ctx.config.event_log {
        Some(path) => {
            let parsed = parse_log(path)?;
            Ok((parsed.records, parsed.diagnostics.len(), None))
        }
        None => {
            let sim = ctx.sim_config();
            let out = simulate(&sim)?;
            let year = sim.start()?.date().year();
            Ok((out.records.iter().map(RawRecord::from).collect(), 0, Some(year)))
        }
    }
}

pub fn load_cohort(ctx: &Context) -> Result<Cohort> {
    let (raw, parse_diagnostics, sim_year) = raw_records(ctx)?;
    let (mut records, rejections) = clean(&raw);
    sort_records(&mut records);
    let first_year = match sim_year {
        Some(y) => y,
        None => records
            .iter()
            .map(|r| r.t_reg)
            .min()
            .ok_or_else(|| Error::InvalidInput("event log has no usable records".into()))?
            .date()
            .year(),
    };
    let bounds = SplitBoundaries::five_years(first_year);
    let split = split(&records, &bounds);
    let calendar = ctx.config.sim.holiday_calendar()?;
    let index = LogIndex::new(&records, calendar, HourlyMeans::from_records(&split.train));
    Ok(Cohort { records, rejections, parse_diagnostics, bounds, split, index })
}

/// Low-acuity records that have an evaluation time at `stage`.
pub fn stage_records(records: &[PatientRecord], stage: Stage) -> Vec<PatientRecord> {
    records.iter().filter(|r| r.is_low_acuity() && stage.eval_time(r).is_some()).cloned().collect()
}

/// Feature matrices and records of one stage.
pub struct StageData {
    pub stage: Stage,
    pub schema: FeatureSchema,
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub train_records: Vec<PatientRecord>,
    pub test_records: Vec<PatientRecord>,
    /// Train rows registered before the holdout period; the rest are the
    /// holdout.
    pub n_fit: usize,
}

fn feature_file(stage: Stage, part: &str) -> String {
    format!("features_{}_{part}.csv", stage_label(stage))
}

fn schema_file(stage: Stage) -> String {
    format!("schema_{}.csv", stage_label(stage))
}

fn read_matrix(path: &Path, stage: Stage, records: &[PatientRecord]) -> Option<FeatureMatrix> {
    let m = FeatureMatrix::read_csv(File::open(path).ok()?, stage).ok()?;
    let ids_match = m.patient_ids.len() == records.len()
        && m.patient_ids.iter().zip(records).all(|(a, r)| *a == r.patient_id);
    ids_match.then_some(m)
}

/// Reads the stage's feature files when they belong to this run, otherwise
/// computes them.
pub fn stage_data(ctx: &Context, cohort: &Cohort, stage: Stage) -> Result<StageData> {
    let train_records = stage_records(&cohort.split.train, stage);
    let test_records = stage_records(&cohort.split.test, stage);
    let n_fit = train_records.iter().filter(|r| r.t_reg < cohort.bounds.holdout_start).count();
    let paths = [ctx.path(&schema_file(stage)), ctx.path(&feature_file(stage, "train")), ctx.path(&feature_file(stage, "test"))];
    if paths.iter().all(|p| ctx.is_current(p)) {
        let schema = File::open(&paths[0]).ok().and_then(|f| FeatureSchema::read_csv(f).ok());
        let train = read_matrix(&paths[1], stage, &train_records);
        let test = read_matrix(&paths[2], stage, &test_records);
        if let (Some(schema), Some(train), Some(test)) = (schema, train, test) {
            if schema.stage == stage && schema.names() == train.names && train.names == test.names {
                return Ok(StageData { stage, schema, train, test, train_records, test_records, n_fit });
            }
        }
    }
    let schema = FeatureSchema::fit(stage, &train_records, cohort.index.calendar());
    let train = featurize_all(&train_records, &cohort.index, &schema)?;
    let test = featurize_all(&test_records, &cohort.index, &schema)?;
    Ok(StageData { stage, schema, train, test, train_records, test_records, n_fit })
}

fn qrf_file(stage: Stage) -> String {
    format!("qrf_{}.cbor", stage_label(stage))
}

fn qrf_seed(ctx: &Context, stage: Stage) -> u64 {
    ctx.derived_seed(&format!("qrf_{}", stage_label(stage)))
}

/// The stage's forest: the saved one when it was trained on exactly this
/// data with these parameters, otherwise a fresh fit.
pub fn forest(ctx: &Context, data: &StageData) -> Result<ForestModel> {
    let params = ctx.config.forest.params(qrf_seed(ctx, data.stage));
    if let Ok(m) = ForestModel::load(&ctx.path(&qrf_file(data.stage))) {
        if m.params == params && m.feature_names == data.train.names && m.labels == data.train.targets {
            return Ok(m);
        }
    }
    if data.train.n_rows == 0 {
        return Err(Error::InvalidInput(format!("no training rows for {}", stage_label(data.stage))));
    }
    qrf::fit(&data.train.data, data.train.n_rows, &data.train.names, &data.train.targets, &params)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Counts, low-acuity share, waits and period boundaries.
pub fn cohort_summary(cohort: &Cohort) -> String {
    let n = cohort.records.len();
    let low: Vec<&PatientRecord> = cohort.records.iter().filter(|r| r.is_low_acuity()).collect();
    let t1: Vec<f64> = low.iter().map(|r| r.waits().t1 as f64).collect();
    let t2: Vec<f64> = low.iter().filter_map(|r| r.waits().t2).map(|w| w as f64).collect();
    let (m1, s1) = mean_sd(&t1);
    let (m2, s2) = mean_sd(&t2);
    let share = if n == 0 { 0.0 } else { low.len() as f64 / n as f64 };
    let b = &cohort.bounds;
    let mut s = String::new();
    s.push_str(&format!("records: {n} kept, {} rejected\n", cohort.rejections.total()));
    s.push_str(&format!("low-acuity: {} ({:.1}%)\n", low.len(), 100.0 * share));
    s.push_str(&format!("t1 (low-acuity): mean {m1:.1} min, sd {s1:.1} min\n"));
    s.push_str(&format!("t2 (low-acuity, assessed): mean {m2:.1} min, sd {s2:.1} min, n {}\n", t2.len()));
    s.push_str(&format!(
        "train: {} to {} ({} records, holdout from {}: {})\n",
        b.train_start.date(),
        b.test_start.date(),
        cohort.split.train.len(),
        b.holdout_start.date(),
        cohort.split.holdout.len()
    ));
    s.push_str(&format!("test: {} to {} ({} records)\n", b.test_start.date(), b.test_end.date(), cohort.split.test.len()));
    s
}

/// Simulates the configured ED and writes the raw event log.
pub fn cmd_simulate(ctx: &Context) -> Result<CommandOutput> {
    let sim = ctx.sim_config();
    let out = simulate(&sim)?;
    let path = ctx.path("event_log.csv");
    let mut w = create(&path)?;
    edwait_core::eventlog::write_log(&mut w, &[ctx.header()], &out.records)?;
    w.flush()?;
    let cohort = load_cohort(ctx)?;
    let mut summary = format!("simulated {} episodes ({} dropped after a wait or stay reached 14 hours)\n", out.records.len(), out.censored);
    summary.push_str(&cohort_summary(&cohort));
    let summary_path = ctx.path("simulate_summary.txt");
    write_text(&summary_path, &ctx.header(), &summary)?;
    Ok(CommandOutput { files: vec![path, summary_path], summary })
}

/// Writes the schema and the train and test feature matrices per stage.
pub fn cmd_featurize(ctx: &Context) -> Result<CommandOutput> {
    let cohort = load_cohort(ctx)?;
    let mut files = Vec::new();
    let mut summary = cohort_summary(&cohort);
    let rej = ctx.path("rejections.csv");
    {
        let mut w = create(&rej)?;
        writeln!(w, "# {}", ctx.header())?;
        cohort.rejections.write_csv(&mut w)?;
        w.flush()?;
    }
    files.push(rej);
    for stage in ctx.config.stages.stages() {
        let data = stage_data(ctx, &cohort, stage)?;
        let sp = ctx.path(&schema_file(stage));
        let mut w = create(&sp)?;
        writeln!(w, "# {}", ctx.header())?;
        data.schema.write_csv(&mut w)?;
        w.flush()?;
        files.push(sp);
        for (part, m) in [("train", &data.train), ("test", &data.test)] {
            let p = ctx.path(&feature_file(stage, part));
            let mut w = create(&p)?;
            m.write_csv(&mut w, &[ctx.header()])?;
            w.flush()?;
            files.push(p);
        }
        summary.push_str(&format!(
            "{}: {} features, {} train rows ({} before holdout), {} test rows\n",
            stage_label(stage),
            data.schema.len(),
            data.train.n_rows,
            data.n_fit,
            data.test.n_rows
        ));
    }
    Ok(CommandOutput { files, summary })
}

/// Fits and saves the forests, then tunes and records the benchmark
/// hyperparameters.
pub fn cmd_train(ctx: &Context) -> Result<CommandOutput> {
    let cohort = load_cohort(ctx)?;
    let mut files = Vec::new();
    let mut summary = String::new();
    let mut hyper = Vec::new();
    for stage in ctx.config.stages.stages() {
        let data = stage_data(ctx, &cohort, stage)?;
        let model = forest(ctx, &data)?;
        let p = ctx.path(&qrf_file(stage));
        std::fs::create_dir_all(&ctx.out_dir)?;
        model.save(&p)?;
        files.push(p);
        summary.push_str(&format!(
            "{}: forest of {} trees on {} rows, {} features\n",
            stage_label(stage),
            model.trees.len(),
            model.n_train(),
            model.n_features()
        ));
        hyper.push(evaluate::tune_benchmarks(ctx, &cohort, &data)?);
    }
    let hp = evaluate::write_hyperparameters(ctx, &hyper)?;
    files.push(hp);
    Ok(CommandOutput { files, summary })
}

/// Ranked impurity importance of the forests' features.
pub fn cmd_importance(ctx: &Context) -> Result<CommandOutput> {
    let cohort = load_cohort(ctx)?;
    let path = ctx.path("importance.csv");
    let mut w = create(&path)?;
    writeln!(w, "# {}", ctx.header())?;
    writeln!(w, "stage,rank,feature,category,score")?;
    let mut summary = String::new();
    for stage in ctx.config.stages.stages() {
        let data = stage_data(ctx, &cohort, stage)?;
        let model = forest(ctx, &data)?;
        let ranked = importance_ranking(&model, &data.schema);
        summary.push_str(&format!("{} top features:", stage_label(stage)));
        for (rank, (name, cat, score)) in ranked.iter().enumerate() {
            writeln!(w, "{},{},{},{},{:.6}", stage_label(stage), rank + 1, name, cat, score)?;
            if rank < 5 {
                summary.push_str(&format!(" {name} ({score:.3})"));
            }
        }
        summary.push('\n');
    }
    w.flush()?;
    Ok(CommandOutput { files: vec![path], summary })
}

/// The `min(20, m)` most important features with their category and score.
pub fn importance_ranking(model: &ForestModel, schema: &FeatureSchema) -> Vec<(String, u8, f64)> {
    model
        .importance()
        .into_iter()
        .take(IMPORTANCE_TOP)
        .map(|(name, score)| {
            let cat = schema.position(&name).map_or(0, |j| schema.descriptors[j].category);
            (name, cat, score)
        })
        .collect()
}
