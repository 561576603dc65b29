//! Two-hospital routing day driven by simulated histories.
//!
//! Each hospital's simulator runs `history_days` plus the routing day. The
//! low-acuity walk-ins registering on the routing day become the routed
//! cohort; everything else stays in the hospital's log as background load.

use std::io::Write;
use std::path::{Path, PathBuf};

use edwait_core::calendar::{Minute, MINUTES_PER_DAY};
use edwait_core::edsim::{simulate, SimConfig};
use edwait_core::eventlog::{sort_records, ArrivalMode, PatientRecord};
use edwait_core::features::{featurize_all, FeatureSchema, HourlyMeans, LogIndex, Stage};
use edwait_core::qrf;
use edwait_core::routing::{
    simulate_day, write_load_reports, DayParams, DecisionCriterion, Hospital, LoadReport, RoutedPatient, TravelModel,
    TravelTable,
};
use edwait_core::{seed, Error, Result};
use rand::Rng;

use super::{create, CommandOutput, Context};
use crate::config::{hash_parts, RoutingScenario};

/// Offset separating patient ids of different hospitals.
const HOSPITAL_ID_STRIDE: u64 = 1_000_000_000;

/// Hospitals with their forests, the routed cohort and the travel table.
pub struct RoutingSetup {
    pub hospitals: Vec<Hospital>,
    pub patients: Vec<RoutedPatient>,
    pub travel: TravelTable,
    pub samples: usize,
    /// Header line for the report files.
    pub header: String,
}

fn scenario_path(ctx: &Context, scenario: Option<&Path>) -> Result<PathBuf> {
    scenario
        .map(Path::to_path_buf)
        .or_else(|| ctx.config.routing_scenario.clone())
        .ok_or_else(|| Error::Config("no routing scenario given (--scenario or routing_scenario)".into()))
}

fn median(mut v: Vec<i64>) -> i64 {
    if v.is_empty() {
        return 0;
    }
    v.sort_unstable();
    v[v.len() / 2]
}

/// Simulates the hospitals' histories, fits their forests and draws the
/// routed patients' homes.
pub fn build_routing(ctx: &Context, scenario: Option<&Path>) -> Result<RoutingSetup> {
    let path = scenario_path(ctx, scenario)?;
    let loaded = RoutingScenario::load(&path)?;
    let sc = &loaded.scenario;
    let travel_bytes = std::fs::read(&sc.travel_table)
        .map_err(|e| Error::Config(format!("cannot read travel table {}: {e}", sc.travel_table.display())))?;
    let travel = TravelTable::read_csv(travel_bytes.as_slice())?;
    let mut parts: Vec<&[u8]> = vec![ctx.hash.as_bytes(), &travel_bytes];
    parts.extend(loaded.sources.iter().map(Vec::as_slice));
    let header = format!("config_hash={} seed={}", hash_parts(&parts), ctx.seed);

    let mut hospitals = Vec::new();
    let mut cohort: Vec<(u32, PatientRecord)> = Vec::new();
    for (spec, sim) in &loaded.hospitals {
        let cfg = SimConfig {
            horizon_days: sc.history_days + 2,
            seed: ctx.derived_seed(&format!("hospital/{}", spec.id)),
            ..sim.clone()
        };
        let day_start = cfg.start()?.plus_minutes(i64::from(sc.history_days) * MINUTES_PER_DAY);
        let day_end = day_start.plus_minutes(MINUTES_PER_DAY);
        let mut log = simulate(&cfg)?.records;
        for r in &mut log {
            r.patient_id += u64::from(spec.id) * HOSPITAL_ID_STRIDE;
        }
        let (routed, mut background): (Vec<_>, Vec<_>) = log.into_iter().partition(|r| {
            r.t_reg >= day_start && r.t_reg < day_end && r.is_low_acuity() && r.arrival_mode == ArrivalMode::Other
        });
        sort_records(&mut background);
        let train: Vec<PatientRecord> =
            background.iter().filter(|r| r.t_reg < day_start && r.is_low_acuity()).cloned().collect();
        if train.is_empty() {
            return Err(Error::InvalidInput(format!("hospital {} has no low-acuity history", spec.id)));
        }
        let calendar = cfg.holiday_calendar()?;
        let schema = FeatureSchema::fit(Stage::AtRegistration, &train, &calendar);
        let index = LogIndex::new(&background, calendar, HourlyMeans::from_records(&train));
        let m = featurize_all(&train, &index, &schema)?;
        let params = sc.forest.params(ctx.derived_seed(&format!("routing_qrf/{}", spec.id)));
        let model = qrf::fit(&m.data, m.n_rows, &m.names, &m.targets, &params)?;
        let service_minutes = median(train.iter().map(|r| r.t_depart.minutes_since(r.t_treat)).collect());
        hospitals.push(Hospital { id: spec.id, name: spec.name.clone(), model, schema, index, service_minutes });
        cohort.extend(routed.into_iter().map(|r| (spec.id, r)));
    }

    // Home times are set so that the median drive to the hospital the
    // patient actually attended lands on the observed registration.
    let codes = travel.home_codes();
    if codes.is_empty() {
        return Err(Error::InvalidInput("travel table is empty".into()));
    }
    let mut rng = seed::rng(ctx.derived_seed("homes"));
    let mut patients = Vec::with_capacity(cohort.len());
    for (h, r) in &cohort {
        let code = codes[rng.random_range(0..codes.len())].clone();
        let est = travel
            .get(&code, *h)
            .ok_or_else(|| Error::InvalidInput(format!("travel table lacks {code} to hospital {h}")))?;
        let drive = TravelModel::from_estimate(est)?.median().round() as i64;
        patients.push(RoutedPatient {
            patient_id: r.patient_id,
            home_code: code,
            home_time: Minute(r.t_reg.0 - drive),
            age: r.age,
            sex: r.sex,
        });
    }
    Ok(RoutingSetup { hospitals, patients, travel, samples: sc.samples, header })
}

/// Routes the day under each reported criterion, every run starting from
/// the same hospital logs.
pub fn run_criteria(ctx: &Context, setup: &RoutingSetup, criteria: &[DecisionCriterion]) -> Result<Vec<LoadReport>> {
    let params = DayParams { samples: setup.samples, seed: ctx.derived_seed("route_day") };
    criteria
        .iter()
        .map(|&c| {
            let mut hospitals = setup.hospitals.clone();
            simulate_day(&setup.patients, &mut hospitals, &setup.travel, c, params)
        })
        .collect()
}

/// Writes `load_report.csv` with one row per criterion and hospital.
pub fn cmd_route(ctx: &Context, scenario: Option<&Path>) -> Result<CommandOutput> {
    let setup = build_routing(ctx, scenario)?;
    let reports = run_criteria(ctx, &setup, &DecisionCriterion::REPORTED)?;
    let path = ctx.path("load_report.csv");
    let mut w = create(&path)?;
    write_load_reports(&mut w, std::slice::from_ref(&setup.header), &reports)?;
    w.flush()?;
    let mut summary = format!("{} routed patients\n", setup.patients.len());
    for rep in &reports {
        summary.push_str(&format!("{:<20}", rep.criterion.as_str()));
        for r in &rep.rows {
            summary.push_str(&format!(
                " {} n={} (<=45: {}, 46-120: {}, >120: {})",
                r.hospital, r.n, r.low, r.medium, r.high
            ));
        }
        summary.push('\n');
        for d in &rep.diagnostics {
            summary.push_str(&format!("  {d}\n"));
        }
    }
    Ok(CommandOutput { files: vec![path], summary })
}
