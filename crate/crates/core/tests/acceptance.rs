//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any failed.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use weakstrong::brute::{exact_solve, Objective};
use weakstrong::datasets::{generate_hard_instance, generate_sbm, HardInstanceSpec, SbmSpec};
use weakstrong::estimator::{point_to_point_estimate, BallSpec, EstimatorParams, LogBase};
use weakstrong::harness::{
    run_algorithm, run_sweep, Algo, DatasetSource, KCenterRow, KMeansRow, RunConfig, SweepSpec, WeakMode, WeakSource,
};
use weakstrong::kcenter::{
    carve_once, gonzalez_baseline, gonzalez_from, greedy_carve_exact, kcenter_weak_strong, KCenterWSParams,
    SearchMode,
};
use weakstrong::kmeans::{evaluate_cost, kmeans_strong_baseline, kmeans_weak_strong, KMeansWSParams};
use weakstrong::{with_workers, Corruption, Dataset, Metric, PointId, StrongOracle, WeakOracle, WeakOracleConfig};

// Criterion 1
const C1_TRIALS: usize = 2000;
const C1_BALL: usize = 200;
const C1_DELTA: f64 = 1.0 / 3.0;
const C1_MAX_FAIL_RATE: f64 = 0.054;
// Criterion 2
const C2_SEEDS: u64 = 10;
const C2_MAX_RATIO: f64 = 1.05;
// Criterion 3
const C3_RUNS: u64 = 100;
const C3_MIN_OK: usize = 90;
const C3_DELTA: f64 = 0.3;
const C3_EPS: f64 = 0.1;
const C3_FACTOR: f64 = 40.0 * (1.0 + C3_EPS);
// Criterion 4
const C4_RUNS: u64 = 100;
const C4_MIN_OK: usize = 90;
const C4_DELTA: f64 = 0.3;
const C4_EPS: f64 = 0.1;
const C4_FACTOR: f64 = 6.0 * (1.0 + C4_EPS);
// Criteria 5 and 6
const C56_INSTANCES: u64 = 200;
// Criterion 7
const C7_TUPLES: u64 = 50;
// Criterion 8
const C8_MAX_APPROX: f64 = 1.2;
const C8_MAX_PCT: f64 = 0.5;

struct Outcome {
    ok: bool,
    detail: String,
}

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn line_metric(xs: &[f64]) -> Metric {
    Dataset::from_line(xs).unwrap().into()
}

/// Planted 2-D instance: `sizes[i]` points within unit distance of a
/// cluster center, centers at least 100 apart.
fn planted(rng: &mut ChaCha8Rng, sizes: &[usize]) -> Metric {
    let mut rows = Vec::new();
    for (c, &s) in sizes.iter().enumerate() {
        let (cx, cy) = (150.0 * c as f64 + rng.random_range(0.0..20.0), rng.random_range(0.0..20.0));
        for _ in 0..s {
            let (r, a) = (rng.random_range(0.0..1.0f64), rng.random_range(0.0..std::f64::consts::TAU));
            rows.push(vec![cx + r * a.cos(), cy + r * a.sin()]);
        }
    }
    Dataset::from_rows(&rows, None).unwrap().into()
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Metric {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)]).collect();
    Dataset::from_rows(&rows, None).unwrap().into()
}

fn criterion_1() -> Outcome {
    // y = 0, ball members spread over [-1, 1], x at distance 50
    let mut xs = vec![50.0, 0.0];
    xs.extend((0..C1_BALL).map(|i| -1.0 + 2.0 * i as f64 / (C1_BALL - 1) as f64));
    let metric = line_metric(&xs);
    let ball = BallSpec { center: PointId(1), radius: 1.0, members: (2..C1_BALL + 2).map(PointId).collect() };
    let truth = 50.0;
    let mut failures = 0;
    for trial in 0..C1_TRIALS as u64 {
        let cfg = WeakOracleConfig::new(C1_DELTA, Corruption::UniformRange, trial);
        let mut weak = WeakOracle::new(&metric, cfg).unwrap();
        let est = point_to_point_estimate(&mut weak, PointId(0), &ball).unwrap();
        if (est - truth).abs() > ball.radius {
            failures += 1;
        }
    }
    let rate = failures as f64 / C1_TRIALS as f64;
    check(rate <= C1_MAX_FAIL_RATE, format!("failure rate {rate:.4} over {C1_TRIALS} trials (limit {C1_MAX_FAIL_RATE})"))
}

fn criterion_2() -> Outcome {
    let metric: Metric = generate_sbm(&SbmSpec::new(2000, 7, 11)).unwrap().into();
    let mut worst: f64 = 0.0;
    let mut ratios = Vec::new();
    for seed in 0..C2_SEEDS {
        let mut p = KMeansWSParams::new(7, 0.1, seed);
        p.estimator = EstimatorParams { c_ball: 0.001, log_base: LogBase::Two };
        p.t_override = Some(60);
        let n = metric.n();
        let h = p.initial_centers(n) + p.iterations(n);
        let mut weak = WeakOracle::new(&metric, WeakOracleConfig::new(0.0, Corruption::UniformRange, seed)).unwrap();
        let mut strong = StrongOracle::new(&metric);
        let ws = kmeans_weak_strong(&mut weak, &mut strong, &p).unwrap().bicriteria.cost;
        let mut s2 = StrongOracle::new(&metric);
        let base = kmeans_strong_baseline(&mut s2, 7, Some(h), seed).unwrap().cost;
        let r = ws / base;
        worst = worst.max(r);
        ratios.push(r);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    check(worst <= C2_MAX_RATIO, format!("worst cost ratio {worst:.4}, mean {mean:.4} over {C2_SEEDS} seeds (limit {C2_MAX_RATIO})"))
}

fn planted_sizes(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = rng.random_range(2..=3usize);
    let max_each = 16 / k;
    (0..k).map(|_| rng.random_range(3..=max_each.min(5))).collect()
}

// Share of runs within the bound, with `t` rounds (`None` = default count).
fn criterion_3_pass(t: Option<usize>) -> (usize, f64) {
    let mut ok = 0;
    let mut worst: f64 = 0.0;
    for run in 0..C3_RUNS {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + run);
        let sizes = planted_sizes(&mut rng);
        let k = sizes.len();
        let metric = planted(&mut rng, &sizes);
        let n = metric.n();
        let opt = exact_solve(&metric, k, Objective::KMeans).unwrap().cost;
        let mut p = KMeansWSParams::new(k, C3_EPS, run);
        p.estimator = EstimatorParams { c_ball: 0.001, log_base: LogBase::Two };
        p.t_override = t.map(|m| m * k);
        assert_eq!(p.ball_size(n), 3);
        let mut weak = WeakOracle::new(&metric, WeakOracleConfig::new(C3_DELTA, Corruption::UniformRange, run)).unwrap();
        let mut strong = StrongOracle::new(&metric);
        let cost = kmeans_weak_strong(&mut weak, &mut strong, &p).unwrap().bicriteria.cost;
        let ratio = if opt > 0.0 { cost / opt } else if cost == 0.0 { 1.0 } else { f64::INFINITY };
        worst = worst.max(ratio);
        if ratio <= C3_FACTOR {
            ok += 1;
        }
    }
    (ok, worst)
}

fn criterion_3() -> Outcome {
    // t = k is the fewest rounds allowed; the default count samples every
    // point of a 16-point instance many times over
    let (short_ok, short_worst) = criterion_3_pass(Some(1));
    let (dflt_ok, dflt_worst) = criterion_3_pass(None);
    check(
        short_ok >= C3_MIN_OK && dflt_ok >= C3_MIN_OK,
        format!(
            "within {C3_FACTOR:.1}x of the exact optimum: t=k {short_ok}/{C3_RUNS} (worst {short_worst:.3e}x), default t {dflt_ok}/{C3_RUNS} (worst {dflt_worst:.3}x)"
        ),
    )
}

/// Lower bound on the optimal k-center radius: the largest radius at which
/// exact greedy carving still needs more than `k` centers, or half the
/// Gonzalez radius, whichever is larger.
fn r_opt_lower_bound(metric: &Metric, k: usize) -> f64 {
    let mut s = StrongOracle::new(metric);
    let gonzalez = gonzalez_from(&mut s, k, PointId(0)).unwrap().assigned_cost;
    let (mut lo, mut hi) = (gonzalez / 2.0, gonzalez);
    let fails = |rad: f64| {
        let mut s = StrongOracle::new(metric);
        !greedy_carve_exact(&mut s, k, rad, 0).unwrap().status.completed()
    };
    if !fails(lo) {
        return lo;
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if fails(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

fn kcenter_radius(metric: &Metric, p: &KCenterWSParams, oracle_seed: u64) -> Option<f64> {
    let mut weak = WeakOracle::new(metric, WeakOracleConfig::new(C4_DELTA, Corruption::UniformRange, oracle_seed)).unwrap();
    let mut strong = StrongOracle::new(metric);
    let run = kcenter_weak_strong(&mut weak, &mut strong, p).unwrap();
    run.result.map(|r| r.assigned_cost)
}

fn criterion_4() -> Outcome {
    let (mut small_ok, mut forced_ok) = (0, 0);
    for run in 0..C4_RUNS {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + run);
        let sizes = planted_sizes(&mut rng);
        let k = sizes.len();
        let metric = planted(&mut rng, &sizes);
        let n = metric.n();
        let r_opt = exact_solve(&metric, k, Objective::KCenter).unwrap().cost;
        let p = KCenterWSParams::new(k, C4_EPS, run);
        if kcenter_radius(&metric, &p, run).is_some_and(|r| r <= C4_FACTOR * r_opt) {
            small_ok += 1;
        }
        // diagnostic only: force weak carving with 3 companions per center
        let mut forced = p.clone();
        forced.c_ball = 0.001;
        forced.c_sample = (2 * k + 2) as f64 / (180.0 * k as f64 * LogBase::Two.log(n));
        assert_eq!((forced.ball_threshold(n), forced.sample_size(n)), (3, 2 * k + 2));
        if kcenter_radius(&metric, &forced, run).is_some_and(|r| r <= C4_FACTOR * r_opt) {
            forced_ok += 1;
        }
    }

    let sbm: Metric = generate_sbm(&SbmSpec::new(600, 4, 21)).unwrap().into();
    let lb = r_opt_lower_bound(&sbm, 4);
    let mut sbm_ok = 0;
    let mut worst: f64 = 0.0;
    for run in 0..C4_RUNS {
        let p = KCenterWSParams::new(4, C4_EPS, run);
        match kcenter_radius(&sbm, &p, 500 + run) {
            Some(r) => {
                worst = worst.max(r / lb);
                if r <= C4_FACTOR * lb {
                    sbm_ok += 1;
                }
            }
            None => worst = f64::INFINITY,
        }
    }
    check(
        small_ok >= C4_MIN_OK && sbm_ok >= C4_MIN_OK,
        format!(
            "brute-forced {small_ok}/{C4_RUNS}, SBM {sbm_ok}/{C4_RUNS} within {C4_FACTOR:.1}x r_opt (SBM worst {worst:.3}x of lower bound {lb:.3}); info: brute-forced with forced 3-point balls {forced_ok}/{C4_RUNS}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut bad = 0;
    for i in 0..C56_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + i);
        let n = rng.random_range(4..=12usize);
        let k = rng.random_range(1..=3usize);
        let metric = random_points(&mut rng, n);
        let r_opt = exact_solve(&metric, k, Objective::KCenter).unwrap().cost;
        let mut s = StrongOracle::new(&metric);
        let o = greedy_carve_exact(&mut s, k, r_opt, i).unwrap();
        if !(o.status.completed() && o.centers.len() <= k && o.true_radius(&metric) <= 2.0 * r_opt + 1e-9) {
            bad += 1;
        }
    }
    check(bad == 0, format!("{} of {C56_INSTANCES} instances carved with <= k centers within 2 r_opt", C56_INSTANCES - bad))
}

fn criterion_6() -> Outcome {
    let (mut cost_bad, mut count_bad) = (0, 0);
    for i in 0..C56_INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + i);
        let n = rng.random_range(4..=12usize);
        let k = rng.random_range(1..=3usize);
        let metric = random_points(&mut rng, n);
        let r_opt = exact_solve(&metric, k, Objective::KCenter).unwrap().cost;
        let mut s = StrongOracle::new(&metric);
        let g = gonzalez_baseline(&mut s, k, i).unwrap();
        if g.assigned_cost > 2.0 * r_opt + 1e-9 {
            cost_bad += 1;
        }
        if s.raw() != (n * k) as u64 {
            count_bad += 1;
        }
    }
    check(
        cost_bad == 0 && count_bad == 0,
        format!("{cost_bad} instances above 2 r_opt, {count_bad} with a query count other than n*k, of {C56_INSTANCES}"),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut km_bad = 0;
    for i in 0..C7_TUPLES {
        let n = rng.random_range(20..=200usize);
        let k = rng.random_range(1..=5usize);
        let t = rng.random_range(0..=30usize);
        let init = rng.random_range(3..=10usize);
        let metric = random_points(&mut rng, n);
        let mut p = KMeansWSParams::new(k, 0.1, i);
        p.estimator = EstimatorParams { c_ball: 0.001, log_base: LogBase::Two };
        p.t_override = Some(t);
        p.init_count = Some(init);
        let mut weak = WeakOracle::new(&metric, WeakOracleConfig::new(0.2, Corruption::UniformRange, i)).unwrap();
        let mut strong = StrongOracle::new(&metric);
        kmeans_weak_strong(&mut weak, &mut strong, &p).unwrap();
        let h = (init + t) as u64;
        if strong.raw() != h * (h - 1) / 2 {
            km_bad += 1;
        }
    }

    let sbm: Metric = generate_sbm(&SbmSpec::new(800, 4, 3)).unwrap().into();
    let (mut steps, mut kc_bad) = (0, 0);
    for i in 0..C7_TUPLES {
        let mut p = KCenterWSParams::new(4, 0.1, i);
        p.c_sample = rng.random_range(0.01..0.05);
        p.c_ball = p.c_sample / 4.0;
        let s = p.sample_size(sbm.n()) as u64;
        let rad = rng.random_range(0.5..8.0);
        let mut weak = WeakOracle::new(&sbm, WeakOracleConfig::new(0.3, Corruption::UniformRange, i)).unwrap();
        let mut strong = StrongOracle::new(&sbm);
        let o = carve_once(&mut weak, &mut strong, &p, rad).unwrap();
        steps += o.strong_per_step.len();
        kc_bad += o.strong_per_step.iter().filter(|&&q| q > s * (s - 1) / 2).count();
    }
    check(
        km_bad == 0 && kc_bad == 0 && steps > 0,
        format!(
            "k-means closed form matched {}/{C7_TUPLES}; {kc_bad} of {steps} carving steps above C(sample_size, 2)",
            C7_TUPLES - km_bad
        ),
    )
}

fn criterion_8() -> Outcome {
    let spec = SweepSpec {
        dataset: DatasetSource::Sbm(SbmSpec::new(5000, 7, 8)),
        algo: Algo::KmeansWs,
        k: 7,
        deltas: vec![0.1, 0.2, 0.3],
        constants: vec![0.001, 0.01, 0.03, 0.1],
        repeats: 5,
        epsilon: 0.1,
        seed: 8,
        oracle_seed: 9,
        weak_mode: WeakMode::Live(Corruption::LabelSwap),
        c_ball: 0.005,
        c_sample: 0.05,
        search_mode: SearchMode::Binary,
        strong_budget: None,
    };
    let report = run_sweep(&spec).unwrap();
    print!("{}", report.summary_table());
    let mut parts = Vec::new();
    let mut all = true;
    for &d in &spec.deltas {
        let best = report
            .cells
            .iter()
            .filter(|c| c.delta == d && c.pct_strong <= C8_MAX_PCT)
            .filter_map(|c| c.approx_factor.map(|a| (a, c.pct_strong)))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match best {
            Some((a, pct)) => {
                all &= a <= C8_MAX_APPROX;
                parts.push(format!("delta {d}: approx {a:.3} at {pct:.4}% pairs"));
            }
            None => {
                all = false;
                parts.push(format!("delta {d}: no cell under {C8_MAX_PCT}%"));
            }
        }
    }
    check(all, parts.join("; "))
}

fn criterion_9() -> Outcome {
    let mut bad = Vec::new();
    let mut checked = 0;
    for k in 1..=3usize {
        for n in k.max(2)..=12 {
            let spec = HardInstanceSpec::new(n, k, 0);
            let l = spec.l;
            let metric = generate_hard_instance(&spec).unwrap();
            let median = exact_solve(&metric, k, Objective::KMedian).unwrap().cost;
            if median != (n - k) as f64 {
                bad.push(format!("k-median n={n} k={k}: {median}"));
            }
            let labels = metric.labels().unwrap().to_vec();
            let groups: Vec<Vec<usize>> = (0..k).map(|g| (0..n).filter(|&i| labels[i] == g).collect()).collect();
            let mut choice = vec![0usize; k];
            loop {
                let centers: Vec<PointId> = (0..k).map(|g| PointId(groups[g][choice[g]])).collect();
                let base = evaluate_cost(&metric, &centers, Some(&labels));
                for x in 0..n {
                    for wrong in (0..k).filter(|&g| g != labels[x]) {
                        let mut a = labels.clone();
                        a[x] = wrong;
                        checked += 1;
                        if evaluate_cost(&metric, &centers, Some(&a)) - base < l * l - 1.0 {
                            bad.push(format!("misclassification n={n} k={k} x={x}"));
                        }
                    }
                }
                let mut g = 0;
                while g < k {
                    choice[g] += 1;
                    if choice[g] < groups[g].len() {
                        break;
                    }
                    choice[g] = 0;
                    g += 1;
                }
                if g == k {
                    break;
                }
            }
        }
    }
    let first = bad.first().map(|b| format!("; first failure {b:?}")).unwrap_or_default();
    check(bad.is_empty(), format!("{} failures; {checked} single misclassifications checked{first}", bad.len()))
}

fn rows_for(metric: &Metric, workers: Option<usize>) -> Vec<String> {
    with_workers(workers, || {
        let n = metric.n();
        Algo::ALL
            .iter()
            .flat_map(|&algo| {
                [0.0, 0.2].map(|delta| {
                    let weak = WeakSource::new(metric, WeakMode::Live(Corruption::LabelSwap), delta, 77).unwrap();
                    let mut cfg = RunConfig::new(algo, 5, delta, 123);
                    cfg.constant = Some(0.1);
                    let out = run_algorithm(metric, &weak, &cfg);
                    if algo.is_kmeans() {
                        KMeansRow::new(n, &cfg, &out, Some(1.0)).to_csv()
                    } else {
                        KCenterRow::new(n, &cfg, &out, Some(1.0)).to_csv()
                    }
                })
            })
            .collect()
    })
}

fn criterion_10() -> Outcome {
    let metric: Metric = generate_sbm(&SbmSpec::new(1500, 5, 4)).unwrap().into();
    let reference = rows_for(&metric, Some(1));
    let errors: Vec<&String> = reference.iter().filter(|r| r.contains("error")).collect();
    let same_rows = [Some(2), Some(4), None].into_iter().all(|w| rows_for(&metric, w) == reference);

    let spec = SweepSpec::parse("n = 800\nk = 4\ndeltas = 0.1, 0.3\nconstants = 0.01, 0.1\nrepeats = 2\ncorruption = matrix\n").unwrap();
    let sweep = |w: Option<usize>| {
        with_workers(w, || run_sweep(&spec).unwrap().records.iter().map(|r| r.without_timing()).collect::<Vec<_>>())
    };
    let same_sweep = sweep(Some(1)) == sweep(Some(3));
    check(
        same_rows && same_sweep && errors.is_empty(),
        format!(
            "{} algorithm rows identical across worker caps: {same_rows}; sweep records identical: {same_sweep}; failed runs: {errors:?}",
            reference.len()
        ),
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome, Duration);

fn main() {
    let filter: Option<u32> = std::env::args().skip(1).find_map(|a| a.parse().ok());
    let criteria: [Criterion; 10] = [
        (1, "estimator concentration", criterion_1, Duration::from_secs(5)),
        (2, "delta=0 degradation", criterion_2, Duration::from_secs(120)),
        (3, "bi-criteria quality", criterion_3, Duration::from_secs(60)),
        (4, "k-center guarantee", criterion_4, Duration::from_secs(120)),
        (5, "exact ball carving", criterion_5, Duration::from_secs(30)),
        (6, "Gonzalez baseline", criterion_6, Duration::from_secs(30)),
        (7, "query-count formulas", criterion_7, Duration::from_secs(30)),
        (8, "experiment shape", criterion_8, Duration::from_secs(900)),
        (9, "hard instance", criterion_9, Duration::from_secs(10)),
        (10, "determinism", criterion_10, Duration::from_secs(60)),
    ];
    let mut failed = 0;
    for (id, name, f, limit) in criteria {
        if filter.is_some_and(|only| only != id) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let ok = out.ok && took <= limit;
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {:<4} {name}: {} [{:.1}s, limit {}s]",
            if ok { "PASS" } else { "FAIL" },
            out.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
