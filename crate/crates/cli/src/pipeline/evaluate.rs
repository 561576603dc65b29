//! Fitting, tuning and scoring of every forecaster on the test year.

use std::io::Write;
use std::path::PathBuf;

use edwait_core::baselines::{
    fit_knn, fit_qlasso, tune_knn, tune_windows, Hyperparameters, KnnModel, LassoModel, QregModel, WaitHistory,
    WindowMethod, WindowParams,
};
use edwait_core::distribution::ForecastDistribution;
use edwait_core::eventlog::{PatientRecord, Sex};
use edwait_core::features::{featurize, FeatureMatrix, Stage};
use edwait_core::qrf::{fit_classifier, inverse_frequency_weights, ForestModel, OneVsRest};
use edwait_core::scoring::{score_class_probs, score_distributions, score_points, ColorScheme, ScoreReport};
use edwait_core::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;

use super::{create, forest, load_cohort, stage_data, write_text, Cohort, CommandOutput, Context, StageData};
use crate::config::stage_label;

const WINDOW_METHODS: [(&str, WindowMethod); 3] = [
    ("empirical_4h", WindowMethod::FourHour),
    ("empirical_p", WindowMethod::PHour),
    ("empirical_q", WindowMethod::QPeriod),
];

#[derive(Serialize)]
struct Sidecar<'a> {
    stage: &'a [Hyperparameters],
}

pub(super) fn write_hyperparameters(ctx: &Context, hyper: &[Hyperparameters]) -> Result<PathBuf> {
    let body = toml::to_string(&Sidecar { stage: hyper }).map_err(|e| Error::Config(e.to_string()))?;
    let path = ctx.path("hyperparameters.toml");
    write_text(&path, &ctx.header(), &body)?;
    Ok(path)
}

/// Tuned benchmark models of one stage.
struct Benchmarks {
    windows: Option<WindowParams>,
    knn: Option<KnnModel>,
    qlasso: Option<LassoModel>,
    hyper: Hyperparameters,
}

fn holdout_rows(data: &StageData) -> Vec<usize> {
    (data.n_fit..data.train.n_rows).collect()
}

fn tie_keys(m: &FeatureMatrix) -> Vec<(i64, u64)> {
    m.t_eval.iter().zip(&m.patient_ids).map(|(t, &id)| (t.0, id)).collect()
}

fn fit_benchmarks(ctx: &Context, cohort: &Cohort, data: &StageData) -> Result<Benchmarks> {
    let wants = |m: &str| ctx.config.has_method(m);
    let label = stage_label(data.stage);
    let mut hyper = Hyperparameters { stage: label.into(), ..Default::default() };
    let train = &data.train;

    let windows = if wants("empirical_p") || wants("empirical_q") {
        let history = WaitHistory::new(&cohort.records, data.stage);
        let holdout: Vec<(_, f64)> = holdout_rows(data).iter().map(|&i| (train.t_eval[i], train.targets[i])).collect();
        let t = tune_windows(&history, &holdout)?;
        hyper.p = Some(t.params.p);
        hyper.q = Some(t.params.q);
        Some(t.params)
    } else {
        None
    };

    let knn = if wants("knn") {
        if data.n_fit == 0 || data.n_fit == train.n_rows {
            return Err(Error::InvalidInput(format!("knn tuning for {label} needs rows before and inside the holdout")));
        }
        let cats: Vec<u8> = data.schema.descriptors.iter().map(|d| d.category).collect();
        let fit_rows: Vec<usize> = (0..data.n_fit).collect();
        let fit = train.select_rows(&fit_rows);
        let hold = train.select_rows(&holdout_rows(data));
        let probe = fit_knn(&fit.data, fit.n_rows, &cats, &fit.targets, &tie_keys(&fit), 1)?;
        let k = tune_knn(&probe, &hold.data, &hold.targets)?.k;
        hyper.k = Some(k);
        Some(fit_knn(&train.data, train.n_rows, &cats, &train.targets, &tie_keys(train), k)?)
    } else {
        None
    };

    let qlasso = if wants("qlasso") {
        let x = train.with_fluid_ratios()?;
        let cv_seed = ctx.derived_seed(&format!("qlasso_{label}"));
        let model = fit_qlasso(&x.data, x.n_rows, x.n_cols(), &x.targets, cv_seed)?;
        hyper.lambda = Some(model.lambda);
        hyper.cv_seed = Some(cv_seed);
        Some(model)
    } else {
        None
    };
    Ok(Benchmarks { windows, knn, qlasso, hyper })
}

/// Tunes the benchmarks that have hyperparameters.
pub(super) fn tune_benchmarks(ctx: &Context, cohort: &Cohort, data: &StageData) -> Result<Hyperparameters> {
    Ok(fit_benchmarks(ctx, cohort, data)?.hyper)
}

fn rows(m: &FeatureMatrix) -> Vec<&[f64]> {
    (0..m.n_rows).map(|i| m.row(i)).collect()
}

fn dists_of<F>(m: &FeatureMatrix, f: F) -> Result<Vec<ForecastDistribution>>
where
    F: Fn(&[f64]) -> Result<ForecastDistribution> + Sync + Send,
{
    rows(m).into_par_iter().map(f).collect()
}

fn classes(scheme: &ColorScheme, y: &[f64]) -> Vec<usize> {
    y.iter().map(|&v| scheme.categorize(v).index()).collect()
}

fn score_stage(ctx: &Context, cohort: &Cohort, data: &StageData, report: &mut ScoreReport) -> Result<Hyperparameters> {
    let label = stage_label(data.stage);
    let scheme = ctx.config.color_scheme()?;
    let test = &data.test;
    if test.n_rows == 0 {
        return Err(Error::InvalidInput(format!("no test rows for {label}")));
    }
    let y = &test.targets;
    let bench = fit_benchmarks(ctx, cohort, data)?;

    let history = WaitHistory::new(&cohort.records, data.stage);
    for (name, method) in WINDOW_METHODS {
        if !ctx.config.has_method(name) {
            continue;
        }
        let params = bench.windows.unwrap_or_default();
        let d: Vec<ForecastDistribution> = test
            .t_eval
            .par_iter()
            .map(|&t| history.forecast(method, t, &params).map(|f| f.dist))
            .collect::<Result<_>>()?;
        report.push(score_distributions(name, label, &d, y, &scheme, None)?);
    }
    if ctx.config.has_method("qreg") {
        let model = QregModel::fit(&data.train.data, data.train.n_rows, data.train.n_cols(), &data.train.targets)?;
        let d = dists_of(test, |r| model.distribution(r))?;
        report.push(score_distributions("qreg", label, &d, y, &scheme, None)?);
    }
    if let Some(model) = &bench.qlasso {
        let x = test.with_fluid_ratios()?;
        let p: Vec<f64> = rows(&x).into_par_iter().map(|r| model.predict(r)).collect::<Result<_>>()?;
        report.push(score_points("qlasso", label, &p, y)?);
    }
    if let Some(model) = &bench.knn {
        let d = dists_of(test, |r| model.forecast(r))?;
        report.push(score_distributions("knn", label, &d, y, &scheme, None)?);
    }
    if ctx.config.has_method("qrf") {
        let model = forest(ctx, data)?;
        let d = dists_of(test, |r| model.predict_cdf(r))?;
        report.push(score_distributions("qrf", label, &d, y, &scheme, None)?);
    }
    let train_classes = classes(&scheme, &data.train.targets);
    if ctx.config.has_method("rf_class") {
        let params = ctx.config.forest.params(ctx.derived_seed(&format!("rf_class_{label}")));
        let w = inverse_frequency_weights(&train_classes, 3)?;
        let model = fit_classifier(&data.train.data, data.train.n_rows, &data.train.names, &train_classes, 3, &w, &params)?;
        let p: Vec<Vec<f64>> = rows(test).into_par_iter().map(|r| model.predict_proba(r)).collect::<Result<_>>()?;
        report.push(score_class_probs("rf_class", label, &p, y, &scheme)?);
    }
    if ctx.config.has_method("rf_binary") {
        let params = ctx.config.forest.params(ctx.derived_seed(&format!("rf_binary_{label}")));
        let model = OneVsRest::fit(&data.train.data, data.train.n_rows, &data.train.names, &train_classes, 3, &params)?;
        let p: Vec<Vec<f64>> = rows(test).into_par_iter().map(|r| model.predict_proba(r)).collect::<Result<_>>()?;
        report.push(score_class_probs("rf_binary", label, &p, y, &scheme)?);
    }
    Ok(bench.hyper)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.2}"))
}

/// Fits every configured method, scores it on the test year and writes
/// the CRPS, RPS, point-error and coverage tables.
pub fn cmd_evaluate(ctx: &Context, update: Option<u64>) -> Result<CommandOutput> {
    let cohort = load_cohort(ctx)?;
    let mut report = ScoreReport::default();
    let mut hyper = Vec::new();
    let mut stages = Vec::new();
    for stage in ctx.config.stages.stages() {
        let data = stage_data(ctx, &cohort, stage)?;
        hyper.push(score_stage(ctx, &cohort, &data, &mut report)?);
        stages.push(data);
    }
    let header = [ctx.header()];
    let mut files = Vec::new();
    for name in ["crps.csv", "rps.csv", "point.csv", "coverage.csv"] {
        let p = ctx.path(name);
        let mut w = create(&p)?;
        match name {
            "crps.csv" => report.write_crps(&mut w, &header)?,
            "rps.csv" => report.write_rps(&mut w, &header)?,
            "point.csv" => report.write_point(&mut w, &header)?,
            _ => report.write_coverage(&mut w, &header)?,
        }
        w.flush()?;
        files.push(p);
    }
    files.push(write_hyperparameters(ctx, &hyper)?);

    let mut summary = String::from("method        stage      n    CRPS    RPS   RMSE    MAE\n");
    for r in &report.rows {
        summary.push_str(&format!(
            "{:<13} {:<5} {:>6} {:>7} {:>6} {:>6} {:>6}\n",
            r.method,
            r.stage,
            r.n,
            fmt_opt(r.crps),
            fmt_opt(r.rps),
            fmt_opt(r.rmse),
            fmt_opt(r.mae)
        ));
    }
    if let Some(id) = update {
        let text = update_walkthrough(ctx, &cohort, &stages, id)?;
        let p = ctx.path(&format!("update_{id}.txt"));
        write_text(&p, &ctx.header(), &text)?;
        files.push(p);
        summary.push('\n');
        summary.push_str(&text);
    }
    Ok(CommandOutput { files, summary })
}

fn describe(model: &ForestModel, x: &[f64], scheme: &ColorScheme, actual: Option<f64>) -> Result<String> {
    let d = model.predict_cdf(x)?;
    let p = scheme.class_probs(&d);
    let q = |tau: f64| d.quantile(tau).map(|v| format!("{v:.0}"));
    let mut s = format!(
        "  point forecast {:.0} min (median {:.0}, 50% interval {}-{}, 90% interval {}-{})\n",
        d.mean(),
        d.median(),
        q(0.25)?,
        q(0.75)?,
        q(0.05)?,
        q(0.95)?
    );
    s.push_str(&format!(
        "  P(<= {:.0} min) = {:.0}%, P({:.0}-{:.0} min) = {:.0}%, P(> {:.0} min) = {:.0}%\n",
        scheme.low,
        100.0 * p[0],
        scheme.low,
        scheme.high,
        100.0 * p[1],
        scheme.high,
        100.0 * p[2]
    ));
    if let Some(a) = actual {
        s.push_str(&format!("  actual wait {a:.0} min\n"));
    }
    Ok(s)
}

fn find(data: &StageData, id: u64) -> Option<&PatientRecord> {
    data.test_records.iter().chain(&data.train_records).find(|r| r.patient_id == id)
}

/// Registration-time and assessment-time forecasts for one patient.
pub fn update_walkthrough(ctx: &Context, cohort: &Cohort, stages: &[StageData], id: u64) -> Result<String> {
    let scheme = ctx.config.color_scheme()?;
    let record = cohort
        .records
        .iter()
        .find(|r| r.patient_id == id)
        .ok_or_else(|| Error::InvalidInput(format!("patient {id} is not in the event log")))?;
    if !record.is_low_acuity() {
        return Err(Error::InvalidInput(format!("patient {id} is not in the low-acuity stream")));
    }
    let mut s = format!(
        "patient {id}: registered {}, age {}, {}, {} arrival\n",
        record.t_reg,
        record.age,
        if record.sex == Sex::Female { "female" } else { "male" },
        record.arrival_mode.as_str()
    );
    for stage in [Stage::AtRegistration, Stage::AtAssessment] {
        let Some(data) = stages.iter().find(|d| d.stage == stage) else {
            s.push_str(&format!("{}: stage not configured\n", stage_label(stage)));
            continue;
        };
        let Some(t) = stage.eval_time(record) else {
            s.push_str("no initial assessment recorded; the registration forecast is the only one\n");
            continue;
        };
        let model = forest(ctx, data)?;
        let v = featurize(record, &cohort.index, &data.schema)?;
        let title = match stage {
            Stage::AtRegistration => format!("at registration ({t}), wait until treatment:\n"),
            Stage::AtAssessment => {
                let triage = record.triage.map_or("-".to_string(), |x| x.as_str().to_string());
                format!(
                    "at initial assessment ({t}), triage {triage}, group {}, hrg {}; wait until treatment:\n",
                    record.patient_group.map_or("-".into(), |g| g.to_string()),
                    record.hrg_code.as_deref().unwrap_or("-")
                )
            }
        };
        s.push_str(&title);
        if find(data, id).is_none() {
            s.push_str("  (patient outside the modelled cohort for this stage)\n");
        }
        s.push_str(&describe(&model, &v.values, &scheme, stage.target(record))?);
    }
    Ok(s)
}
