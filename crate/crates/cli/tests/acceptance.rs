//! Acceptance checks for the whole toolkit.
//!
//! Everything runs inside one test so the timed criteria are not competing
//! with each other for cores. Each criterion prints one PASS/FAIL line to
//! stderr (unbuffered by the harness, so the lines show up even on success)
//! and the test fails at the end if any criterion did.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use edwait_core::baselines::{fit_knn, fit_lasso_path, fit_qreg, lambda_max, pinball_objective};
use edwait_core::qrf::{fit, ForestParams};
use edwait_core::scoring::{crps_exact, crps_sampled, CRPS_SAMPLES, TAU_GRID};
use edwait_core::ForecastDistribution;
use rand::Rng;

struct Outcome {
    id: u32,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(outcomes: &mut Vec<Outcome>, id: u32, name: &'static str, pass: bool, detail: String) {
    let mut err = std::io::stderr();
    let _ = writeln!(err, "acceptance #{id:<2} {:<4} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    outcomes.push(Outcome { id, name, pass, detail });
}

fn names(m: usize) -> Vec<String> {
    (0..m).map(|j| format!("x{j}")).collect()
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

/// Brute-force empirical distribution: sorted distinct labels with their
/// counts over `n`.
fn ecdf_oracle(y: &[f64]) -> ForecastDistribution {
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for &v in y {
        // Labels here are non-negative, so the bit pattern sorts like the value.
        *counts.entry(v.to_bits()).or_default() += 1;
    }
    let n = y.len() as f64;
    ForecastDistribution::Discrete {
        support: counts.keys().map(|&b| f64::from_bits(b)).collect(),
        weights: counts.values().map(|&c| c as f64 / n).collect(),
    }
}

fn fuzz_labels<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    // Integer minutes produce ties; a share of fractional values does not.
    (0..n)
        .map(|_| if rng.random_bool(0.7) { f64::from(rng.random_range(0u32..300)) } else { rng.random_range(0.0..300.0) })
        .collect()
}

fn single_leaf_oracle(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let mut rng = edwait_core::seed::rng(101);
    let mut bad = 0;
    for _ in 0..50 {
        let n = rng.random_range(1..=200);
        let m = rng.random_range(1..=4);
        let x: Vec<f64> = (0..n * m).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y = fuzz_labels(&mut rng, n);
        let params = ForestParams { n_tree: 1, mtry: None, min_node: n, bootstrap: false, master_seed: rng.random() };
        let f = fit(&x, n, &names(m), &y, &params).unwrap();
        let oracle = ecdf_oracle(&y);
        for _ in 0..5 {
            let q: Vec<f64> = (0..m).map(|_| rng.random_range(-12.0..12.0)).collect();
            if f.predict_cdf(&q).unwrap() != oracle {
                bad += 1;
            }
        }
    }
    let t = start.elapsed();
    let pass = bad == 0 && t < Duration::from_secs(5);
    report(out, 1, "single-leaf forest equals training ECDF", pass, format!("{bad} mismatches over 50 datasets, {}", secs(t)));
}

fn weight_normalization(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let mut rng = edwait_core::seed::rng(202);
    let (mut predictions, mut bad) = (0, 0);
    let mut worst = 0.0f64;
    while predictions < 1000 {
        let n = rng.random_range(5..=300);
        let m = rng.random_range(1..=6);
        let x: Vec<f64> = (0..n * m).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y = fuzz_labels(&mut rng, n);
        let params = ForestParams {
            n_tree: rng.random_range(1..=40),
            mtry: None,
            min_node: rng.random_range(1..=10),
            bootstrap: rng.random_bool(0.8),
            master_seed: rng.random(),
        };
        let f = fit(&x, n, &names(m), &y, &params).unwrap();
        let mut grid = y.clone();
        grid.extend([-1.0, 1e9]);
        grid.sort_by(f64::total_cmp);
        for _ in 0..20 {
            let q: Vec<f64> = (0..m).map(|_| rng.random_range(-12.0..12.0)).collect();
            let w = f.weights(&q).unwrap();
            let err = (w.iter().sum::<f64>() - 1.0).abs();
            worst = worst.max(err);
            let d = f.predict_cdf(&q).unwrap();
            let cdf: Vec<f64> = grid.iter().map(|&g| d.cdf(g)).collect();
            let monotone = cdf.windows(2).all(|p| p[0] <= p[1]);
            let ends_at_one = (cdf[cdf.len() - 1] - 1.0).abs() <= 1e-9;
            if err > 1e-9 || w.iter().any(|&v| v < 0.0) || !monotone || !ends_at_one {
                bad += 1;
            }
            predictions += 1;
        }
    }
    let t = start.elapsed();
    let pass = bad == 0 && t < Duration::from_secs(30);
    report(
        out,
        2,
        "forest weights normalised, CDFs monotone",
        pass,
        format!("{bad}/{predictions} bad, worst |sum-1| {worst:.2e}, {}", secs(t)),
    );
}

fn crps_sampler(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let mut rng = edwait_core::seed::rng(303);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = rng.random_range(1..60);
        let pairs: Vec<(f64, f64)> =
            (0..k).map(|_| (rng.random_range(0.0..400.0), rng.random_range(0.01..1.0))).collect();
        let d = ForecastDistribution::from_weighted(pairs).unwrap();
        let y = rng.random_range(0.0..400.0);
        let exact = crps_exact(&d, y);
        let sampled = crps_sampled(&d, y, CRPS_SAMPLES, None);
        worst = worst.max((sampled - exact).abs() / exact);
    }
    let t = start.elapsed();
    let pass = worst <= 0.02 && t < Duration::from_secs(10);
    report(out, 3, "sampled CRPS matches closed form", pass, format!("worst relative error {worst:.4}, {}", secs(t)));
}

/// Heteroskedastic uniform truth `y | x ~ U(c - s, c + s)` with centre
/// `c = 60 + x` and half-width `s = 5 + x`, widened `spread` times about `c`.
fn uniform_truth(x: f64, spread: f64) -> ForecastDistribution {
    let (c, s) = (60.0 + x, spread * (5.0 + x));
    ForecastDistribution::from_quantile_knots(&[0.0, 1.0], &[c - s, c + s]).unwrap()
}

fn propriety(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let mut wins = 0;
    for trial in 0..100u64 {
        let mut rng = edwait_core::seed::rng(trial);
        let (mut truth, mut shifted, mut scaled) = (0.0, 0.0, 0.0);
        for _ in 0..50 {
            let x = rng.random_range(0.0..50.0);
            let d = uniform_truth(x, 1.0);
            let y = d.inverse_cdf(rng.random());
            truth += crps_exact(&d, y);
            shifted += crps_exact(&d.shifted(20.0), y);
            scaled += crps_exact(&uniform_truth(x, 2.0), y);
        }
        if truth < shifted && truth < scaled {
            wins += 1;
        }
    }
    let t = start.elapsed();
    let pass = wins >= 95 && t < Duration::from_secs(60);
    report(out, 4, "true distribution wins on CRPS", pass, format!("{wins}/100 trials, {}", secs(t)));
}

fn qreg_oracle(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let mut rng = edwait_core::seed::rng(707);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(1..200);
        let y = fuzz_labels(&mut rng, n);
        let tau = rng.random_range(0.02..0.98);
        let f = fit_qreg(&[], n, 0, &y, tau).unwrap();
        let scan = y
            .iter()
            .map(|&c| pinball_objective(y.iter().map(|v| v - c), tau))
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(f.objective - scan);
    }
    let t = start.elapsed();
    let pass = worst <= 1e-6 && t < Duration::from_secs(5);
    report(out, 7, "intercept-only quantile fit hits scan minimum", pass, format!("worst excess {worst:.2e}, {}", secs(t)));
}

/// Least squares with intercept through the normal equations, solved by
/// Gaussian elimination with partial pivoting.
fn ols(x: &[f64], n: usize, m: usize, y: &[f64]) -> Vec<f64> {
    let p = m + 1;
    let row = |i: usize| std::iter::once(1.0).chain(x[i * m..(i + 1) * m].iter().copied());
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..n {
        let r: Vec<f64> = row(i).collect();
        for j in 0..p {
            for k in 0..p {
                a[j][k] += r[j] * r[k];
            }
            a[j][p] += r[j] * y[i];
        }
    }
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        for r in 0..p {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=p {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    (0..p).map(|j| a[j][p] / a[j][j]).collect()
}

fn lasso_oracles(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let mut rng = edwait_core::seed::rng(808);
    let (mut ls_gap, mut zero_fail, mut path_fail) = (0.0f64, 0, 0);
    for _ in 0..20 {
        let n = rng.random_range(30..150);
        let m = rng.random_range(1..8);
        let x: Vec<f64> = (0..n * m).map(|_| rng.random_range(-5.0..5.0)).collect();
        let beta: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 20.0 + (0..m).map(|j| beta[j] * x[i * m + j]).sum::<f64>() + rng.random_range(-2.0..2.0))
            .collect();
        let ls = ols(&x, n, m, &y);
        let free = fit_lasso_path(&x, n, m, &y, Some(&[0.0])).unwrap();
        let (b0, b) = free.original_scale(0);
        ls_gap = std::iter::once(b0 - ls[0]).chain(b.iter().zip(&ls[1..]).map(|(u, v)| u - v)).fold(ls_gap, |g, d| g.max(d.abs()));
        let lmax = lambda_max(&x, n, m, &y).unwrap();
        let top = fit_lasso_path(&x, n, m, &y, Some(&[lmax, 2.0 * lmax])).unwrap();
        if top.fits.iter().any(|f| f.beta.iter().any(|&v| v != 0.0)) {
            zero_fail += 1;
        }
        let path = fit_lasso_path(&x, n, m, &y, None).unwrap();
        // The default path runs from large to small penalties.
        let shrinks = path.fits.windows(2).all(|w| w[0].lambda > w[1].lambda && w[0].l1_norm() <= w[1].l1_norm() + 1e-9);
        if !shrinks {
            path_fail += 1;
        }
    }
    let t = start.elapsed();
    let pass = ls_gap <= 1e-4 && zero_fail == 0 && path_fail == 0 && t < Duration::from_secs(30);
    report(
        out,
        8,
        "lasso matches least squares, vanishes at lambda_max, shrinks along path",
        pass,
        format!("max |lasso-ols| {ls_gap:.2e}, {zero_fail} non-zero at lambda_max, {path_fail} non-monotone paths, {}", secs(t)),
    );
}

fn knn_identity(out: &mut Vec<Outcome>) {
    let start = Instant::now();
    let mut rng = edwait_core::seed::rng(909);
    let (mut identity_fail, mut tie_fail) = (0, 0);
    for _ in 0..20 {
        let n = rng.random_range(5..100);
        let m = 3;
        let x: Vec<f64> = (0..n * m).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y = fuzz_labels(&mut rng, n);
        let keys: Vec<(i64, u64)> = (0..n).map(|i| (i as i64, i as u64)).collect();
        let model = fit_knn(&x, n, &[1, 1, 2], &y, &keys, 1).unwrap();
        for i in 0..n {
            let f = model.forecast(&x[i * m..(i + 1) * m]).unwrap();
            if f != ForecastDistribution::point_mass(y[i]) {
                identity_fail += 1;
            }
        }
        // Four copies of every point: neighbours must come out by tie key,
        // whatever the row order.
        let base: Vec<[f64; 3]> = (0..6).map(|_| [rng.random_range(0.0..3.0), 1.0, rng.random_range(0.0..3.0)]).collect();
        let mut rows: Vec<(usize, [f64; 3], f64, (i64, u64))> = Vec::new();
        for copy in 0..4u64 {
            for (b, r) in base.iter().enumerate() {
                let id = copy * 100 + b as u64;
                rows.push((b, *r, f64::from(rng.random_range(0u32..200)), (rng.random_range(0..3), id)));
            }
        }
        let mut picks = Vec::new();
        for shuffle in 0..3 {
            if shuffle > 0 {
                use rand::seq::SliceRandom;
                rows.shuffle(&mut rng);
            }
            let xs: Vec<f64> = rows.iter().flat_map(|r| r.1).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let ks: Vec<(i64, u64)> = rows.iter().map(|r| r.3).collect();
            let model = fit_knn(&xs, rows.len(), &[1, 1, 2], &ys, &ks, 2).unwrap();
            let q = base[0];
            let ids: Vec<u64> = model.neighbors(&q, 2).unwrap().into_iter().map(|i| ks[i].1).collect();
            picks.push(ids);
            let mut expected: Vec<(i64, u64)> = rows.iter().filter(|r| r.0 == 0 || r.1 == q).map(|r| r.3).collect();
            expected.sort();
            let want: Vec<u64> = expected.iter().take(2).map(|k| k.1).collect();
            if picks.last() != Some(&want) {
                tie_fail += 1;
            }
        }
        if picks.windows(2).any(|w| w[0] != w[1]) {
            tie_fail += 1;
        }
    }
    let t = start.elapsed();
    let pass = identity_fail == 0 && tie_fail == 0 && t < Duration::from_secs(5);
    report(
        out,
        9,
        "1-NN identity and deterministic ties",
        pass,
        format!("{identity_fail} identity misses, {tie_fail} tie violations, {}", secs(t)),
    );
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").canonicalize().unwrap()
}

/// Reduced-method experiment config on the default simulator settings.
fn write_config(dir: &Path, file: &str, stages: &str, methods: &[&str]) -> PathBuf {
    let scenario = configs_dir().join("routing/scenario.toml");
    let methods: Vec<String> = methods.iter().map(|m| format!("{m:?}")).collect();
    let text = format!(
        "seed = 1\nstages = \"{stages}\"\nmethods = [{}]\nrouting_scenario = {:?}\n\n\
         [forest]\nn_tree = 500\nmin_node = 5\nbootstrap = true\n\n[color]\nlow = 45.0\nhigh = 120.0\n\n\
         [sim]\nstart_date = \"2014-01-01\"\nhorizon_days = 1826\n",
        methods.join(", "),
        scenario.display().to_string(),
    );
    let path = dir.join(file);
    std::fs::write(&path, text).unwrap();
    path
}

fn edwait(config: &Path, out: &Path, args: &[&str]) -> Duration {
    let start = Instant::now();
    let res = Command::new(env!("CARGO_BIN_EXE_edwait"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap();
    assert!(
        res.status.success(),
        "edwait {args:?} failed: {}\n{}",
        String::from_utf8_lossy(&res.stdout),
        String::from_utf8_lossy(&res.stderr)
    );
    start.elapsed()
}

/// Rows of a CSV with `#` header lines, keyed by the first column.
fn read_table(path: &Path) -> (Vec<String>, BTreeMap<String, Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<String> = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| {
            let cells: Vec<String> = l.split(',').map(str::to_string).collect();
            (cells[0].clone(), cells[1..].to_vec())
        })
        .collect();
    (header, rows)
}

fn cell(header: &[String], rows: &BTreeMap<String, Vec<String>>, row: &str, col: &str) -> f64 {
    let j = header.iter().position(|h| h == col).unwrap_or_else(|| panic!("no column {col}"));
    rows[row][j - 1].parse().unwrap()
}

fn dir_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

const COMMANDS: [&[&str]; 6] = [&["simulate"], &["featurize"], &["train"], &["evaluate"], &["importance"], &["route"]];

fn pipeline(out: &mut Vec<Outcome>) {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "experiment.toml", "both", &["empirical_4h", "empirical_p", "empirical_q", "qrf"]);
    let run = |name: &str, jobs: &str| {
        let dir = tmp.path().join(name);
        let times: Vec<Duration> = COMMANDS
            .iter()
            .map(|cmd| {
                let mut args = vec!["--jobs", jobs];
                args.extend_from_slice(cmd);
                edwait(&config, &dir, &args)
            })
            .collect();
        (dir, times)
    };
    let (a, times_a) = run("a", "1");
    let (b, _) = run("b", "2");

    // Ranking.
    let forecast_time: Duration = times_a[..4].iter().sum();
    let (h, crps) = read_table(&a.join("crps.csv"));
    let mut lines = Vec::new();
    let mut ranked = true;
    for stage in ["t1", "t2"] {
        let qrf = cell(&h, &crps, "qrf", stage);
        let four = cell(&h, &crps, "empirical_4h", stage);
        let qp = cell(&h, &crps, "empirical_q", stage);
        ranked &= qrf <= 0.95 * four && qrf < qp;
        lines.push(format!("{stage}: qrf {qrf:.2} vs 4h {four:.2} vs q-periods {qp:.2}"));
    }
    let (t1, t2) = (cell(&h, &crps, "qrf", "t1"), cell(&h, &crps, "qrf", "t2"));
    ranked &= t2 < t1;
    let pass = ranked && forecast_time < Duration::from_secs(600);
    report(out, 5, "qrf beats window benchmarks", pass, format!("{}; simulate..evaluate {}", lines.join("; "), secs(forecast_time)));

    // Coverage.
    let (h, cov) = read_table(&a.join("coverage.csv"));
    let mut worst = 0.0f64;
    for tau in TAU_GRID {
        for col in ["qrf_t1", "qrf_t2"] {
            let v = cell(&h, &cov, &format!("{tau:.2}"), col);
            worst = worst.max((v - 100.0 * tau).abs());
        }
    }
    report(out, 6, "qrf coverage calibrated", worst <= 5.0, format!("worst deviation {worst:.2} points over 11 levels"));

    // Routing.
    let route_time = times_a[5];
    let (pass, detail) = routing_pattern(&std::fs::read_to_string(a.join("load_report.csv")).unwrap());
    report(out, 10, "routing load pattern", pass && route_time < Duration::from_secs(120), format!("{detail}; {}", secs(route_time)));

    // Determinism across reruns and thread counts.
    let fa = dir_files(&a);
    let fb = dir_files(&b);
    let differing: Vec<&String> = fa.keys().filter(|k| fb.get(*k) != fa.get(*k)).collect();
    let same_set = fa.keys().eq(fb.keys());
    report(
        out,
        11,
        "byte-identical reruns under --jobs 1 and 2",
        same_set && differing.is_empty(),
        format!("{} files compared, differing: {differing:?}", fa.len()),
    );
}

/// Load ratio under shortest distance, balance and the >120-minute band under
/// the combined-distribution criteria.
fn routing_pattern(text: &str) -> (bool, String) {
    let mut by_criterion: BTreeMap<String, Vec<(usize, usize)>> = BTreeMap::new();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    let (c, n, high) = (col("criterion"), col("n"), col("high_gt120"));
    for l in lines {
        let cells: Vec<&str> = l.split(',').collect();
        by_criterion
            .entry(cells[c].to_string())
            .or_default()
            .push((cells[n].parse().unwrap(), cells[high].parse().unwrap()));
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (criterion, rows) in &by_criterion {
        let loads: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let total: usize = loads.iter().sum();
        let (hi, lo) = (*loads.iter().max().unwrap(), *loads.iter().min().unwrap());
        let over: usize = rows.iter().map(|r| r.1).sum();
        if criterion == "shortest_distance" {
            pass &= lo * 5 <= hi;
        } else if criterion.contains("combined") {
            pass &= 10 * hi <= 7 * total && over == 0;
        }
        parts.push(format!("{criterion} {loads:?} high={over}"));
    }
    (pass, parts.join(", "))
}

fn importance_rank(out: &mut Vec<Outcome>) {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "t1.toml", "t1", &["qrf"]);
    let start = Instant::now();
    let mut ranks = Vec::new();
    for seed in 1..=10u32 {
        let dir = tmp.path().join(format!("seed{seed}"));
        edwait(&config, &dir, &["--seed", &seed.to_string(), "importance"]);
        let text = std::fs::read_to_string(dir.join("importance.csv")).unwrap();
        let rank = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').collect::<Vec<_>>())
            .find(|c| c[0] == "t1" && c[2] == "age")
            .map_or(usize::MAX, |c| c[1].parse().unwrap());
        ranks.push(rank);
    }
    let t = start.elapsed();
    let hits = ranks.iter().filter(|&&r| r <= 3).count();
    let pass = hits >= 8 && t < Duration::from_secs(600);
    report(out, 12, "age among top-3 t1 importances", pass, format!("{hits}/10 seeds, ranks {ranks:?}, {}", secs(t)));
}

#[test]
fn acceptance_criteria() {
    let mut out = Vec::new();
    single_leaf_oracle(&mut out);
    weight_normalization(&mut out);
    crps_sampler(&mut out);
    propriety(&mut out);
    qreg_oracle(&mut out);
    lasso_oracles(&mut out);
    knn_identity(&mut out);
    pipeline(&mut out);
    importance_rank(&mut out);
    out.sort_by_key(|o| o.id);
    let failed: Vec<String> = out.iter().filter(|o| !o.pass).map(|o| format!("#{} {} ({})", o.id, o.name, o.detail)).collect();
    assert_eq!(out.len(), 12);
    assert!(failed.is_empty(), "failed criteria: {failed:#?}");
}
