//! Acceptance run. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails. Every tolerance and configuration is pinned here.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;

use common::{lv, random_points, GradCase};
use flsim::adversary::fall_of_empires_replies;
use flsim::aggregation::{
    aggregate_coordinate_median, aggregate_krum, aggregate_legato, aggregate_mean,
    aggregate_multikrum, krum_scores, layer_norm_profile, legato_reweigh, robustness_factors,
};
use flsim::bench::{bench_aggregators, time_ratio, BenchConfig};
use flsim::engine::{run_experiment_with, RunOptions};
use flsim::nn::{finite_difference_gradient, loss_and_gradient};
use flsim::rng::{stream, Purpose, SimRng};
use flsim::{
    run_experiment, Activation, AggregatorKind, ExperimentConfig, Gradient, GradientLog,
    KrumConfig, MetricsLog, ModelSpec, Normalization,
};
use rand::seq::SliceRandom;
use rand::Rng;

const SEED: u64 = 1;

const FD_STEP: f64 = 1e-3;
const FD_MAX_REL_ERR: f64 = 1e-4;
const FD_MIN_ANALYTIC: f64 = 1e-8;
const FD_CASES: usize = 50;
/// ReLU cases are redrawn until every hidden unit is this far from the kink,
/// where finite differences are meaningless.
const RELU_MARGIN: f64 = 1e-2;

const ORACLE_CASES: usize = 200;
const TRANSCRIPTION_CASES: usize = 20;
const TRANSCRIPTION_TOL: f64 = 1e-9;
const INVARIANT_CASES: usize = 200;

const CHANCE: f64 = 0.1;
const GAUSSIAN_CHANCE_MARGIN: f64 = 0.15;
const CLEAN_MIN_ACCURACY: f64 = 0.90;
const FOE_MARGIN: f64 = 0.10;
const SKEW_MARGIN: f64 = 0.10;
const SKEW_CLEAN_GAP: f64 = 0.03;
const FACTOR_WINDOW: (usize, usize) = (20, 80);
const LEGATO_MAX_RATIO: f64 = 12.0;
const KRUM_MIN_RATIO: f64 = 20.0;
const BENCH_REPETITIONS: usize = 11;
const LOG_SWEEP: [usize; 3] = [5, 10, 30];
const LOG_THRESHOLDS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];
const LOG_CLEAN_SPREAD: f64 = 0.05;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn config(overrides: &[&str]) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.seed = SEED;
    for o in overrides {
        c.apply_override(o).unwrap_or_else(|e| panic!("override {o}: {e}"));
    }
    c.validate().expect("valid acceptance config");
    c
}

fn run(overrides: &[&str]) -> MetricsLog {
    run_experiment(&config(overrides)).expect("experiment runs")
}

fn final_acc(log: &MetricsLog) -> f64 {
    log.final_accuracy().expect("final round is evaluated")
}

// Gaussian attack on the IID task with plain averaging.
const IID_GAUSSIAN: &[&str] = &["attack.kind=gaussian", "attack.byzantine_ids=8,9"];

// One label per worker. ReLU with a larger step lets the skewed federation
// learn within the round budget.
const SKEW: &[&str] = &[
    "partition.strategy=label_skew",
    "model.activation=relu",
    "optimizer.learning_rate=0.2",
    "aggregator.normalization=max",
    "training.max_rounds=200",
];

fn with<'a>(base: &[&'a str], extra: &[&'a str]) -> Vec<&'a str> {
    base.iter().chain(extra).copied().collect()
}

fn random_case(rng: &mut SimRng) -> GradCase {
    loop {
        let depth = rng.random_range(3..=4);
        let mut widths: Vec<usize> = (0..depth).map(|_| rng.random_range(1..=8)).collect();
        *widths.last_mut().unwrap() = rng.random_range(2..=8);
        let act = if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Relu };
        let case = GradCase {
            spec: ModelSpec::new(widths, act).unwrap(),
            seed: rng.random(),
            batch: rng.random_range(1..=4),
        };
        if act == Activation::Tanh {
            return case;
        }
        let (params, x, _) = common::materialize(&case);
        if common::min_abs_preactivation(&case.spec, &params, &x) > RELU_MARGIN {
            return case;
        }
    }
}

fn gradient_correctness() -> Verdict {
    let mut rng = stream(SEED, Purpose::Bench, 100, 0);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..FD_CASES {
        let case = random_case(&mut rng);
        let (params, x, y) = common::materialize(&case);
        let (_, analytic) = loss_and_gradient(&case.spec, &params, &x, &y).unwrap();
        let numeric = finite_difference_gradient(&case.spec, &params, &x, &y, FD_STEP).unwrap();
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            if a.abs() > FD_MIN_ANALYTIC {
                worst = worst.max((a - n).abs() / a.abs().max(n.abs()));
                checked += 1;
            }
        }
    }
    verdict(
        worst < FD_MAX_REL_ERR,
        format!("{FD_CASES} cases, {checked} coordinates, max relative error {worst:.2e} (< {FD_MAX_REL_ERR:e})"),
    )
}

fn oracle_equivalence() -> Verdict {
    let mut rng = stream(SEED, Purpose::Bench, 200, 0);
    let mut failures = Vec::new();
    for case in 0..ORACLE_CASES {
        let n = rng.random_range(1..=6);
        let d = rng.random_range(1..=4);
        let points = random_points(&mut rng, n, d);
        let grads: Vec<Gradient> = points.iter().map(|p| lv(&[p.clone()])).collect();
        if aggregate_coordinate_median(&grads).unwrap().to_flat() != common::sort_median(&points) {
            failures.push(format!("median #{case}"));
        }
        if n < 3 {
            continue;
        }
        let f = rng.random_range(0..=n - 3);
        let oracle = common::brute_krum_scores(&points, f);
        if krum_scores(&grads, f).unwrap() != oracle {
            failures.push(format!("scores #{case}"));
        }
        let ranking = common::brute_ranking(&oracle);
        if aggregate_krum(&grads, &KrumConfig::new(f, 1)).unwrap().to_flat() != points[ranking[0]] {
            failures.push(format!("krum #{case}"));
        }
        for k in 1..=n - f - 2 {
            let got = aggregate_multikrum(&grads, &KrumConfig::new(f, k)).unwrap().to_flat();
            if got != common::mean_rows(&points, ranking[..k].to_vec()) {
                failures.push(format!("multikrum #{case} k={k}"));
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!("{ORACLE_CASES} cases, exact match; mismatches: {failures:?}"),
    )
}

fn nested(rounds: &[Vec<Gradient>]) -> Vec<Vec<Vec<Vec<f64>>>> {
    rounds
        .iter()
        .map(|r| {
            r.iter()
                .map(|g| g.groups().iter().map(|p| p.values().to_vec()).collect())
                .collect()
        })
        .collect()
}

fn random_rounds(rng: &mut SimRng, rounds: usize, n: usize, sizes: &[usize]) -> Vec<Vec<Gradient>> {
    (0..rounds)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let groups: Vec<Vec<f64>> = sizes
                        .iter()
                        .map(|&s| (0..s).map(|_| rng.random_range(-3.0..3.0)).collect())
                        .collect();
                    lv(&groups)
                })
                .collect()
        })
        .collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn legato_transcription() -> Verdict {
    let mut rng = stream(SEED, Purpose::Bench, 300, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..TRANSCRIPTION_CASES {
        let sizes = [rng.random_range(1..=3), rng.random_range(1..=3)];
        let history = random_rounds(&mut rng, 4, 3, &sizes);
        let scheme = if rng.random_bool(0.5) { Normalization::Sum } else { Normalization::Max };
        let mut log = GradientLog::new(4).unwrap();
        for t in 0..4 {
            let out = aggregate_legato(&mut log, &history[t], scheme).unwrap();
            let oracle = common::legato_transcription(&nested(&history[..=t]), 4, scheme).concat();
            worst = worst.max(max_abs_diff(&out.aggregate.to_flat(), &oracle));
        }
    }
    verdict(
        worst <= TRANSCRIPTION_TOL,
        format!("{TRANSCRIPTION_CASES} instances x 4 rounds, max abs diff {worst:.2e} (<= {TRANSCRIPTION_TOL:e})"),
    )
}

fn invariant_suite() -> Verdict {
    let mut rng = stream(SEED, Purpose::Bench, 400, 0);
    let mut broken: Vec<&str> = Vec::new();
    let mut check = |ok: bool, name: &'static str| {
        if !ok && !broken.contains(&name) {
            broken.push(name);
        }
    };
    for _ in 0..INVARIANT_CASES {
        // Fixed point: identical constant inputs in every round.
        let g = lv(&[(0..3).map(|_| rng.random_range(-5.0..5.0)).collect(), vec![rng.random_range(-5.0..5.0)]]);
        let mut log = GradientLog::new(rng.random_range(1..=6)).unwrap();
        for _ in 0..8 {
            let out = aggregate_legato(&mut log, &[g.clone(), g.clone(), g.clone()], Normalization::Sum).unwrap();
            let err = max_abs_diff(&out.aggregate.to_flat(), &g.to_flat());
            check(err <= 1e-12, "legato fixed point");
        }

        // Convexity and factor normalization on a full log.
        let rounds = rng.random_range(2..=6);
        let history = random_rounds(&mut rng, rounds, 3, &[2, 2, 1]);
        let mut log = GradientLog::new(rounds).unwrap();
        for r in &history {
            log.push(r.clone()).unwrap();
        }
        let sum = robustness_factors(&log, Normalization::Sum).unwrap();
        check((sum.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-9, "factor normalization");
        let out = legato_reweigh(&log, &sum).unwrap();
        for (p, g) in out.iter().enumerate() {
            let current = history[rounds - 1][p].to_flat();
            let past_rounds: Vec<Gradient> = history[..rounds - 1].iter().map(|r| r[p].clone()).collect();
            let past = Gradient::mean(&past_rounds).unwrap().to_flat();
            for ((v, c), q) in g.to_flat().iter().zip(&current).zip(&past) {
                check(*v >= c.min(*q) - 1e-12 && *v <= c.max(*q) + 1e-12, "legato convexity");
            }
        }

        // Profile scale invariance.
        let c = 10f64.powf(rng.random_range(-3.0..3.0));
        let base = layer_norm_profile(&history[0]).unwrap();
        let scaled: Vec<Gradient> = history[0].iter().map(|g| g.scale(c)).collect();
        let moved = layer_norm_profile(&scaled).unwrap();
        check(
            base.iter().zip(&moved).all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs()),
            "profile scale invariance",
        );

        // Permutation invariance, LEGATO with consistently permuted rounds.
        let mut perm: Vec<usize> = (0..3).collect();
        perm.shuffle(&mut rng);
        let m = rng.random_range(1..=4);
        let (mut a, mut b) = (GradientLog::new(m).unwrap(), GradientLog::new(m).unwrap());
        for r in &history {
            let shuffled: Vec<Gradient> = perm.iter().map(|&i| r[i].clone()).collect();
            let x = aggregate_legato(&mut a, r, Normalization::Sum).unwrap().aggregate.to_flat();
            let y = aggregate_legato(&mut b, &shuffled, Normalization::Sum).unwrap().aggregate.to_flat();
            check(max_abs_diff(&x, &y) <= 1e-12 * (1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()))), "legato permutation invariance");
        }

        // Stateless aggregators: permutation, selection, median bounds.
        let n = rng.random_range(4..=8);
        let points = random_points(&mut rng, n, 3);
        let grads: Vec<Gradient> = points.iter().map(|p| lv(&[p.clone()])).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<Gradient> = perm.iter().map(|&i| grads[i].clone()).collect();
        let mean_a = aggregate_mean(&grads).unwrap().to_flat();
        let mean_b = aggregate_mean(&shuffled).unwrap().to_flat();
        check(max_abs_diff(&mean_a, &mean_b) <= 1e-12 * 8.0, "mean permutation invariance");
        let med = aggregate_coordinate_median(&grads).unwrap();
        check(med == aggregate_coordinate_median(&shuffled).unwrap(), "median permutation invariance");
        for (c, &v) in med.to_flat().iter().enumerate() {
            let lo = points.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
            check(lo <= v && v <= hi, "median bounds");
        }
        let f = rng.random_range(0..=n - 3);
        let cfg = KrumConfig::new(f, 1);
        let picked = aggregate_krum(&grads, &cfg).unwrap();
        check(grads.contains(&picked), "krum selection");
        let mut scores = krum_scores(&grads, f).unwrap();
        scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if scores.windows(2).all(|w| w[0] < w[1]) {
            check(picked == aggregate_krum(&shuffled, &cfg).unwrap(), "krum permutation invariance");
        }

        // Fall of Empires against an independent sum.
        let h = rng.random_range(1..=10);
        let eps = rng.random_range(0.0..2.0);
        let honest: Vec<Gradient> = (0..h)
            .map(|_| lv(&[(0..4).map(|_| rng.random_range(-1.0..1.0)).collect()]))
            .collect();
        let crafted = fall_of_empires_replies(&honest, 3, eps).unwrap();
        let expected: Vec<f64> = (0..4)
            .map(|c| -(eps / h as f64) * honest.iter().map(|g| g.to_flat()[c]).sum::<f64>())
            .collect();
        for r in &crafted {
            let ok = r.iter().zip(&expected).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            check(ok && *r == crafted[0], "fall of empires formula");
        }
    }
    verdict(
        broken.is_empty(),
        format!("{INVARIANT_CASES} rounds of every invariant; broken: {broken:?}"),
    )
}

fn gaussian_trend() -> Verdict {
    let none = final_acc(&run(&[]));
    let s20 = final_acc(&run(&with(IID_GAUSSIAN, &["attack.sigma=20"])));
    let s200 = final_acc(&run(&with(IID_GAUSSIAN, &["attack.sigma=200"])));
    let ceiling = CHANCE + GAUSSIAN_CHANCE_MARGIN;
    verdict(
        none >= s20 && s20 >= s200 && s200 <= ceiling && none >= CLEAN_MIN_ACCURACY,
        format!("none {none:.3} >= sigma20 {s20:.3} >= sigma200 {s200:.3}; sigma200 <= {ceiling:.2}; none >= {CLEAN_MIN_ACCURACY}"),
    )
}

fn fall_of_empires_trend() -> Verdict {
    let foe = [
        "attack.kind=fall_of_empires",
        "attack.byzantine_ids=5,6,7,8,9",
        "attack.epsilon=0.001",
        "aggregator.f=5",
    ];
    let acc = |kind: &str| final_acc(&run(&with(&foe, &[&format!("aggregator.kind={kind}")])));
    let (legato, mean, krum) = (acc("legato"), acc("mean"), acc("krum"));
    verdict(
        legato >= krum + FOE_MARGIN && mean >= krum + FOE_MARGIN,
        format!("legato {legato:.3}, mean {mean:.3}, krum {krum:.3}; margin {FOE_MARGIN}"),
    )
}

fn label_skew_trend() -> Verdict {
    let attacked = with(SKEW, &["attack.kind=gaussian", "attack.byzantine_ids=8,9", "attack.sigma=20"]);
    let acc = |base: &[&str], kind: &str| final_acc(&run(&with(base, &[&format!("aggregator.kind={kind}")])));
    let (legato, krum, median) = (acc(&attacked, "legato"), acc(&attacked, "krum"), acc(&attacked, "median"));
    let (clean_legato, clean_mean) = (acc(SKEW, "legato"), acc(SKEW, "mean"));
    let pass = legato >= krum + SKEW_MARGIN
        && legato >= median + SKEW_MARGIN
        && (clean_legato - clean_mean).abs() <= SKEW_CLEAN_GAP;
    verdict(
        pass,
        format!(
            "attacked: legato {legato:.3}, krum {krum:.3}, median {median:.3} (margin {SKEW_MARGIN}); \
             clean: legato {clean_legato:.3}, mean {clean_mean:.3} (gap <= {SKEW_CLEAN_GAP})"
        ),
    )
}

fn factor_pattern() -> Verdict {
    let log = run(&with(IID_GAUSSIAN, &["attack.sigma=20", "aggregator.kind=legato"]));
    let (lo, hi) = FACTOR_WINDOW;
    let window: Vec<_> = log
        .records
        .iter()
        .filter(|r| (lo..=hi).contains(&r.round))
        .filter_map(|r| r.factors.as_ref())
        .collect();
    let Some(first) = window.first() else {
        return verdict(false, "no factors recorded in the window");
    };
    let mean = |l: usize| window.iter().map(|f| f.weights[l]).sum::<f64>() / window.len() as f64;
    let mut pass = true;
    let mut parts = Vec::new();
    for k in 0..first.layers.len() / 2 {
        let (w, b) = (mean(2 * k), mean(2 * k + 1));
        pass &= w >= b;
        parts.push(format!("{} {w:.3} >= {} {b:.3}", first.layers[2 * k], first.layers[2 * k + 1]));
    }
    verdict(pass, format!("rounds {lo}-{hi}: {}", parts.join(", ")))
}

fn complexity() -> Verdict {
    let cfg = BenchConfig {
        repetitions: BENCH_REPETITIONS,
        aggregators: vec![AggregatorKind::Legato, AggregatorKind::Krum],
        seed: SEED,
        ..BenchConfig::default()
    };
    let rows = bench_aggregators(&cfg).expect("bench runs");
    let (n_lo, n_hi) = (8, 64);
    let legato = time_ratio(&rows, AggregatorKind::Legato, n_lo, n_hi).unwrap();
    let krum = time_ratio(&rows, AggregatorKind::Krum, n_lo, n_hi).unwrap();
    let memory_exact = rows
        .iter()
        .filter(|r| r.aggregator == AggregatorKind::Legato)
        .all(|r| r.peak_log_values == r.n * cfg.m * cfg.d);

    // The same bound, read straight off a log.
    let mut log = GradientLog::new(3).unwrap();
    let g = lv(&[vec![0.0; 5], vec![0.0; 2]]);
    for _ in 0..5 {
        aggregate_legato(&mut log, &vec![g.clone(); 4], Normalization::Sum).unwrap();
    }
    let structural = log.stored_values() == 4 * 3 * 7 && log.len() == 3;

    verdict(
        legato <= LEGATO_MAX_RATIO && krum >= KRUM_MIN_RATIO && memory_exact && structural,
        format!(
            "time(n={n_hi})/time(n={n_lo}): legato {legato:.1} (<= {LEGATO_MAX_RATIO}), krum {krum:.1} (>= {KRUM_MIN_RATIO}); \
             log holds n*m*d values: {}",
            memory_exact && structural
        ),
    )
}

fn rounds_to(log: &MetricsLog, threshold: f64) -> f64 {
    log.first_round_reaching(threshold).map_or(f64::INFINITY, |r| r as f64)
}

fn log_size_trend() -> Verdict {
    let attacked = with(
        SKEW,
        &["aggregator.kind=legato", "attack.kind=gaussian", "attack.byzantine_ids=8,9", "attack.sigma=100", "training.eval_every=5"],
    );
    let clean = with(SKEW, &["aggregator.kind=legato", "training.eval_every=5"]);
    let sweep = |base: &[&str]| -> Vec<MetricsLog> {
        LOG_SWEEP
            .iter()
            .map(|m| run(&with(base, &[&format!("aggregator.log_size={m}")])))
            .collect()
    };
    let noisy = sweep(&attacked);
    let (small, large) = (&noisy[0], &noisy[LOG_SWEEP.len() - 1]);
    let mut slower = true;
    let mut parts = Vec::new();
    for &t in &LOG_THRESHOLDS {
        let (a, b) = (rounds_to(small, t), rounds_to(large, t));
        slower &= b >= a;
        parts.push(format!("{t}: m={} {a} vs m={} {b}", LOG_SWEEP[0], LOG_SWEEP[LOG_SWEEP.len() - 1]));
    }
    let nonvacuous = rounds_to(small, LOG_THRESHOLDS[0]).is_finite();

    let finals: Vec<f64> = sweep(&clean).iter().map(final_acc).collect();
    let spread = finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - finals.iter().cloned().fold(f64::INFINITY, f64::min);
    verdict(
        slower && nonvacuous && spread <= LOG_CLEAN_SPREAD,
        format!(
            "sigma=100 rounds to threshold [{}]; clean finals {finals:?} spread {spread:.3} (<= {LOG_CLEAN_SPREAD})",
            parts.join("; ")
        ),
    )
}

fn determinism() -> Verdict {
    let configs = [
        config(&[]),
        config(&with(SKEW, &["aggregator.kind=legato", "attack.kind=gaussian", "attack.byzantine_ids=8,9", "attack.sigma=20"])),
        config(&["attack.kind=fall_of_empires", "attack.byzantine_ids=5,6,7,8,9", "attack.epsilon=0.001", "aggregator.kind=multikrum", "aggregator.f=5", "aggregator.multi_k=3"]),
    ];
    let mut identical = true;
    for c in &configs {
        let a = run_experiment(c).unwrap().to_csv();
        let b = run_experiment(c).unwrap().to_csv();
        let threaded = run_experiment_with(c, RunOptions { threads: Some(4) }).unwrap().to_csv();
        identical &= a.as_bytes() == b.as_bytes() && a.as_bytes() == threaded.as_bytes();
    }
    verdict(
        identical,
        format!("{} configs run twice and with 4 threads: metrics.csv byte-identical = {identical}", configs.len()),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Verdict); 11] = [
        (1, gradient_correctness),
        (2, oracle_equivalence),
        (3, legato_transcription),
        (4, invariant_suite),
        (5, gaussian_trend),
        (6, fall_of_empires_trend),
        (7, label_skew_trend),
        (8, factor_pattern),
        (9, complexity),
        (10, log_size_trend),
        (11, determinism),
    ];
    let mut failed = 0;
    for (id, criterion) in criteria {
        let v = panic::catch_unwind(AssertUnwindSafe(criterion))
            .unwrap_or_else(|_| verdict(false, "panicked"));
        println!("criterion {id}: {} {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
