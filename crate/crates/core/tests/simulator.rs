use edwait_core::edsim::{corrupt, simulate, SimConfig};
use edwait_core::eventlog::{clean, parse_log_reader, sort_records, write_log, PatientRecord, RawRecord};
use proptest::prelude::*;

fn low_acuity_t1(records: &[PatientRecord]) -> Vec<f64> {
    records.iter().filter(|r| r.is_low_acuity()).map(|r| r.waits().t1 as f64).collect()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() / 2]
}

fn lag1_autocorrelation(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    let cov: f64 = v.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

#[test]
fn default_five_years_have_the_target_shape() {
    let out = simulate(&SimConfig::default()).unwrap();
    let n = out.records.len();
    assert!((40_000..60_000).contains(&n), "{n} records");
    let low = out.records.iter().filter(|r| r.is_low_acuity()).count() as f64 / n as f64;
    assert!((0.90..=0.98).contains(&low), "low-acuity share {low}");
    let t1 = low_acuity_t1(&out.records);
    let med = median(&t1);
    assert!((60.0..=120.0).contains(&med), "median t1 {med}");
    let rho = lag1_autocorrelation(&t1);
    assert!(rho > 0.2, "lag-1 autocorrelation {rho}");
    // Children are fast-tracked.
    let kids: Vec<f64> =
        out.records.iter().filter(|r| r.is_low_acuity() && r.age <= 16).map(|r| r.waits().t1 as f64).collect();
    let adults: Vec<f64> =
        out.records.iter().filter(|r| r.is_low_acuity() && r.age > 16).map(|r| r.waits().t1 as f64).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&kids) < 0.8 * mean(&adults));
}

#[test]
fn demand_is_low_at_night() {
    let out = simulate(&SimConfig { horizon_days: 120, seed: 8, ..SimConfig::default() }).unwrap();
    let arrivals = |lo: u32, hi: u32| out.records.iter().filter(|r| (lo..hi).contains(&r.t_reg.hour_of_day())).count();
    assert!(arrivals(9, 12) > 2 * arrivals(2, 5));
    assert!(arrivals(17, 20) > 2 * arrivals(2, 5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn written_logs_parse_and_clean_back_unchanged(seed in any::<u64>(), days in 1u32..6) {
        let out = simulate(&SimConfig { horizon_days: days, seed, ..SimConfig::default() }).unwrap();
        let mut buf = Vec::new();
        write_log(&mut buf, &["test".into()], &out.records).unwrap();
        let parsed = parse_log_reader(buf.as_slice()).unwrap();
        prop_assert!(parsed.diagnostics.is_empty());
        let (mut back, rejected) = clean(&parsed.records);
        sort_records(&mut back);
        prop_assert_eq!(rejected.total(), 0);
        prop_assert_eq!(back, out.records);
    }

    #[test]
    fn cleaning_keeps_only_plausible_episodes(seed in any::<u64>(), p in 0.0f64..0.5) {
        let out = simulate(&SimConfig { horizon_days: 3, seed, ..SimConfig::default() }).unwrap();
        let raw: Vec<RawRecord> = corrupt(&out.records, p, seed);
        let (kept, rejected) = clean(&raw);
        prop_assert_eq!(kept.len() + rejected.total(), raw.len());
        for r in &kept {
            let w = r.waits();
            prop_assert!(w.t1 >= 0 && w.t1 < 14 * 60);
            prop_assert!(r.t_depart >= r.t_treat);
        }
    }
}
