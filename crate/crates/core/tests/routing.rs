use edwait_core::calendar::{Minute, MINUTES_PER_DAY};
use edwait_core::edsim::{simulate, SimConfig};
use edwait_core::eventlog::{PatientRecord, Sex};
use edwait_core::features::{featurize_all, FeatureSchema, HourlyMeans, LogIndex, Stage};
use edwait_core::qrf::{fit, ForestParams};
use edwait_core::routing::{
    choose, combined_distribution, simulate_day, DayParams, DecisionCriterion, Hospital, HospitalOption,
    RoutedPatient, TravelEstimate, TravelModel, TravelTable,
};
use edwait_core::ForecastDistribution;
use proptest::prelude::*;

const HISTORY_DAYS: i64 = 40;

fn hospital(id: u32, seed: u64) -> Hospital {
    let cfg = SimConfig { horizon_days: HISTORY_DAYS as u32 + 2, seed, ..SimConfig::default() };
    let log = simulate(&cfg).unwrap().records;
    let cut = cfg.start().unwrap().plus_minutes(HISTORY_DAYS * MINUTES_PER_DAY);
    let train: Vec<PatientRecord> = log.iter().filter(|r| r.t_reg < cut && r.is_low_acuity()).cloned().collect();
    let cal = cfg.holiday_calendar().unwrap();
    let schema = FeatureSchema::fit(Stage::AtRegistration, &train, &cal);
    let index = LogIndex::new(&log, cal, HourlyMeans::from_records(&train));
    let m = featurize_all(&train, &index, &schema).unwrap();
    let params = ForestParams { n_tree: 30, master_seed: seed, ..Default::default() };
    let model = fit(&m.data, m.n_rows, &m.names, &m.targets, &params).unwrap();
    Hospital { id, name: format!("H{id}"), model, schema, index, service_minutes: 120 }
}

fn routing_day() -> Minute {
    SimConfig::default().start().unwrap().plus_minutes(HISTORY_DAYS * MINUTES_PER_DAY)
}

fn patient(id: u64, home: &str, minute_of_day: i64) -> RoutedPatient {
    RoutedPatient {
        patient_id: id,
        home_code: home.into(),
        home_time: routing_day().plus_minutes(minute_of_day),
        age: 40,
        sex: Sex::Female,
    }
}

fn travel_table(ids: &[u32]) -> TravelTable {
    let mut rows = Vec::new();
    for (k, &h) in ids.iter().enumerate() {
        for (c, code) in ["A", "B"].iter().enumerate() {
            let base = 10.0 + 15.0 * ((k + c) % 2) as f64;
            rows.push(TravelEstimate {
                home_code: code.to_string(),
                hospital_id: h,
                distance_miles: base / 2.0,
                min_drive_min: base,
                max_drive_min: base * 2.0,
            });
        }
    }
    TravelTable::new(rows).unwrap()
}

#[test]
fn injected_load_raises_the_combined_forecast() {
    let mut h = hospital(1, 21);
    let travel = TravelModel::from_estimate(&TravelEstimate {
        home_code: "A".into(),
        hospital_id: 1,
        distance_miles: 5.0,
        min_drive_min: 10.0,
        max_drive_min: 20.0,
    })
    .unwrap();
    let probe = patient(999_999, "A", 10 * 60);
    let before = combined_distribution(&travel, &h, &probe, 500, 7).unwrap().mean();
    for i in 0..50 {
        let p = patient(900_000 + i, "A", 9 * 60 + 30 + i as i64);
        let t_reg = p.home_time;
        h.index.insert(&p.record(t_reg, 240, 120), false);
    }
    let after = combined_distribution(&travel, &h, &probe, 500, 7).unwrap().mean();
    assert!(after > before, "before {before:.1}, after {after:.1}");
}

#[test]
fn every_patient_is_assigned_or_skipped() {
    let hospitals = vec![hospital(1, 31), hospital(2, 32)];
    let travel = travel_table(&[1, 2]);
    let mut patients: Vec<RoutedPatient> =
        (0..30).map(|i| patient(i, if i % 3 == 0 { "A" } else { "B" }, 7 * 60 + 20 * i as i64)).collect();
    patients.push(patient(99, "Z", 12 * 60));
    for criterion in DecisionCriterion::REPORTED {
        let mut hs = hospitals.clone();
        let params = DayParams { samples: 100, seed: 5 };
        let rep = simulate_day(&patients, &mut hs, &travel, criterion, params).unwrap();
        assert_eq!(rep.skipped, 1);
        assert_eq!(rep.attendance() + rep.skipped, patients.len());
        assert_eq!(rep.assignments.len(), rep.attendance());
        for row in &rep.rows {
            assert_eq!(row.low + row.medium + row.high, row.n);
            let n = rep.assignments.iter().filter(|a| a.hospital_id == row.hospital_id).count();
            assert_eq!(n, row.n);
        }
        // Assigned patients now sit in the chosen hospital's log.
        let routed: usize = hs.iter().map(|h| h.index.len()).sum::<usize>()
            - hospitals.iter().map(|h| h.index.len()).sum::<usize>();
        assert_eq!(routed, rep.attendance());
    }
}

#[test]
fn a_lone_hospital_takes_everyone() {
    let mut hs = vec![hospital(7, 41)];
    let travel = travel_table(&[7]);
    let patients: Vec<RoutedPatient> = (0..12).map(|i| patient(i, "A", 8 * 60 + 45 * i as i64)).collect();
    let rep = simulate_day(&patients, &mut hs, &travel, DecisionCriterion::MinQ95Combined, DayParams { samples: 50, seed: 1 })
        .unwrap();
    assert_eq!(rep.rows[0].n, 12);
}

#[test]
fn rerouting_the_same_day_is_reproducible() {
    let hospitals = vec![hospital(1, 51), hospital(2, 52)];
    let travel = travel_table(&[1, 2]);
    let patients: Vec<RoutedPatient> = (0..20).map(|i| patient(i, if i % 2 == 0 { "A" } else { "B" }, 9 * 60 + 30 * i as i64)).collect();
    let run = || {
        let mut hs = hospitals.clone();
        simulate_day(&patients, &mut hs, &travel, DecisionCriterion::MinMeanCombined, DayParams { samples: 80, seed: 3 }).unwrap()
    };
    assert_eq!(run(), run());
}

fn option() -> impl Strategy<Value = HospitalOption> {
    (
        0.5f64..40.0,
        1.0f64..60.0,
        0.0f64..60.0,
        prop::collection::vec((0.0f64..300.0, 0.1f64..1.0), 1..12),
    )
        .prop_map(|(miles, lo, spread, pairs)| HospitalOption {
            distance_miles: miles,
            travel: TravelModel::from_estimate(&TravelEstimate {
                home_code: "x".into(),
                hospital_id: 1,
                distance_miles: miles,
                min_drive_min: lo,
                max_drive_min: lo + spread,
            })
            .unwrap(),
            combined: Some(ForecastDistribution::from_weighted(pairs).unwrap()),
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn shifting_every_combined_forecast_keeps_the_choice(
        options in prop::collection::vec(option(), 1..4),
        shift in 0.0f64..120.0,
    ) {
        let moved: Vec<HospitalOption> = options
            .iter()
            .map(|o| HospitalOption { combined: o.combined.as_ref().map(|d| d.shifted(shift)), ..o.clone() })
            .collect();
        for c in [DecisionCriterion::MinQ75Combined, DecisionCriterion::MinQ95Combined, DecisionCriterion::Fosd] {
            prop_assert_eq!(choose(c, &options).unwrap(), choose(c, &moved).unwrap());
        }
        let chosen = choose(DecisionCriterion::ShortestDistance, &options).unwrap();
        prop_assert!(options.iter().all(|o| o.distance_miles >= options[chosen].distance_miles));
    }
}
