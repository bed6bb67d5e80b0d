//! Acceptance criteria AC1-AC10. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use pivotal_core::diagnostics::{check_all, check_prop1, clt_experiment, CltConfig, CltMode};
use pivotal_core::estimation::{syg_variance, ZeroPairs};
use pivotal_core::model::{Kernel, ModelConfig};
use pivotal_core::oracle::exact_design_variance;
use pivotal_core::sampler::draw_many;
use pivotal_core::{decompose, enumerate, EnumerateOptions, PopulationSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn single_thread<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(f)
}

/// Oracle first-order probabilities and joint row sums on 60 populations.
fn ac1() -> Outcome {
    let start = Instant::now();
    let pops = common::populations(1, 60, 12);
    let mut worst_first = 0.0f64;
    let mut worst_row = 0.0f64;
    for pi in &pops {
        let n = pi.iter().sum::<f64>().round();
        let d = decompose(&PopulationSpec::from_probabilities(pi.clone()).unwrap());
        let e = enumerate(&d, EnumerateOptions { cap: 12, keep_traces: false }).unwrap();
        for k in 0..pi.len() {
            worst_first = worst_first.max((e.first_order()[k] - pi[k]).abs());
            let row: f64 = (0..pi.len()).filter(|&l| l != k).map(|l| e.joint().get(k, l)).sum();
            worst_row = worst_row.max((row - (n - 1.0) * pi[k]).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_first <= 1e-12 && worst_row <= 1e-10 && secs <= 60.0,
        format!(
            "{} populations, max |pi_hat - pi| = {worst_first:.2e} (<= 1e-12), max joint row error = {worst_row:.2e} (<= 1e-10), {secs:.2}s (<= 60s)",
            pops.len()
        ),
    )
}

/// Increments: mean zero, uncorrelated, variance decomposition.
fn ac2() -> Outcome {
    let pops = common::populations(1, 60, 12);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    let mut pass = true;
    let mut cases = 0;
    for pi in &pops {
        let d = decompose(&PopulationSpec::from_probabilities(pi.clone()).unwrap());
        let e = enumerate(&d, EnumerateOptions { cap: 12, keep_traces: true }).unwrap();
        for shape in common::SHAPES {
            let y = common::y_values(&mut rng, pi, shape);
            for c in check_prop1(&d, &y, &e).unwrap() {
                pass &= c.holds;
                let rel = c.lhs / (c.rhs / 1e-10);
                let w = worst.entry(c.name).or_insert(0.0);
                *w = w.max(rel);
            }
            cases += 1;
        }
    }
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.2e}")).collect::<Vec<_>>().join(", ");
    outcome(pass, format!("{cases} (population, y) cases, worst scaled deviation (<= 1e-10): {detail}"))
}

/// Every bound and identity on a 200-instance battery with N <= 10.
fn ac3() -> Outcome {
    let battery = common::battery(3, 200, 10);
    let mut failures = Vec::new();
    let mut min_slack: BTreeMap<String, f64> = BTreeMap::new();
    let mut checks = 0;
    for (i, inst) in battery.iter().enumerate() {
        for c in check_all(&inst.dec, &inst.y, &inst.dist).unwrap() {
            checks += 1;
            if !c.holds {
                failures.push(format!("#{i} {}", c.name));
            }
            let s = min_slack.entry(c.name.clone()).or_insert(f64::INFINITY);
            *s = s.min(c.slack);
        }
    }
    let most_negative = min_slack.values().copied().fold(f64::INFINITY, f64::min);
    outcome(
        failures.is_empty(),
        format!(
            "{} instances, {checks} checks, {} violations, smallest slack {most_negative:.2e} (tolerance 1e-10){}",
            battery.len(),
            failures.len(),
            if failures.is_empty() { String::new() } else { format!(": {}", failures.join(", ")) }
        ),
    )
}

/// Sampler frequencies on (0.6, 0.8, 0.6).
fn ac4() -> Outcome {
    let pi = [0.6, 0.8, 0.6];
    let draws = 200_000;
    let d = decompose(&PopulationSpec::from_probabilities(pi.to_vec()).unwrap());
    let mut marg = [0usize; 3];
    let mut sets: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for s in draw_many(&d, draws, 4) {
        for &k in &s.selected {
            marg[k] += 1;
        }
        *sets.entry(s.selected).or_insert(0) += 1;
    }
    let mut worst_z = 0.0f64;
    for k in 0..3 {
        let f = marg[k] as f64 / draws as f64;
        let se = (pi[k] * (1.0 - pi[k]) / draws as f64).sqrt();
        worst_z = worst_z.max((f - pi[k]).abs() / se);
    }
    let target: BTreeMap<Vec<usize>, f64> = [(vec![0, 1], 0.4), (vec![0, 2], 0.2), (vec![1, 2], 0.4)].into_iter().collect();
    let mut keys: Vec<&Vec<usize>> = target.keys().chain(sets.keys()).collect();
    keys.sort();
    keys.dedup();
    let tv = 0.5
        * keys
            .iter()
            .map(|k| (sets.get(*k).copied().unwrap_or(0) as f64 / draws as f64 - target.get(*k).copied().unwrap_or(0.0)).abs())
            .sum::<f64>();
    outcome(
        worst_z <= 4.0 && tv <= 0.01,
        format!("{draws} draws, max marginal |z| = {worst_z:.2} (<= 4), TV = {tv:.4} (<= 0.01)"),
    )
}

fn clt(mode: CltMode, kernel: Kernel, seed: u64) -> CltConfig {
    let model = ModelConfig::new(1.0, 1.0, kernel, seed).unwrap();
    CltConfig::new(mode, 10_000, 500, 2_000, model)
}

/// Design-based CLT with a fixed y, single thread.
fn ac5() -> Outcome {
    let start = Instant::now();
    let (r, _) = single_thread(|| clt_experiment(&clt(CltMode::Design, Kernel::Iid, 5))).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        r.ks_stat <= r.ks_critical && secs <= 300.0,
        format!(
            "N = 10000, n = 500, R = {}: KS = {:.4} (<= {:.4}), variance {:?} with pilot {:?}, coverage {:.3}, {secs:.1}s single-threaded (<= 300s)",
            r.replicates, r.ks_stat, r.ks_critical, r.variance_used, r.pilot_replicates, r.coverage
        ),
    )
}

/// Model-based CLT with ar1 errors.
fn ac6() -> Outcome {
    let (r, _) = clt_experiment(&clt(CltMode::Model, Kernel::Ar1 { rho: 0.5 }, 6)).unwrap();
    outcome(
        r.ks_stat <= r.ks_critical && (0.93..=0.97).contains(&r.coverage),
        format!(
            "ar1(0.5), R = {}: KS = {:.4} (<= {:.4}), coverage = {:.4} in [0.93, 0.97] (model-estimator coverage {:.4})",
            r.replicates,
            r.ks_stat,
            r.ks_critical,
            r.coverage,
            r.coverage_model_estimator.unwrap_or(f64::NAN)
        ),
    )
}

/// SYG with zero-probability pairs dropped underestimates the variance.
fn ac7() -> Outcome {
    let pi = [0.5; 4];
    let y = [1.0, 3.0, 0.5, 2.0];
    let d = decompose(&PopulationSpec::from_probabilities(pi.to_vec()).unwrap());
    let e = enumerate(&d, EnumerateOptions::default()).unwrap();
    let expected: f64 = e
        .outcomes()
        .iter()
        .map(|(s, p)| p * syg_variance(s, &y, &pi, e.joint(), ZeroPairs::Drop).unwrap())
        .sum();
    let v = exact_design_variance(&e, &y).unwrap().moment;
    outcome(expected < v, format!("E[dropped SYG] = {expected:.6} < V = {v:.6}"))
}

/// Model-assisted variance estimator is unbiased under iid errors.
fn ac8() -> Outcome {
    let model = ModelConfig::new(1.0, 1.0, Kernel::Iid, 8).unwrap();
    let config = CltConfig::new(CltMode::Model, 2_000, 200, 2_000, model);
    let (r, _) = clt_experiment(&config).unwrap();
    let mean = r.model_variance_mean.unwrap();
    let se = r.model_variance_std_error.unwrap();
    let target = 2_000.0 * 0.1 * 0.9;
    outcome(
        (mean - target).abs() <= 3.0 * se,
        format!("N = 2000, n = 200, R = {}: mean V_m = {mean:.4}, target {target:.4}, |diff| = {:.4} (<= 3 SE = {:.4})", r.replicates, (mean - target).abs(), 3.0 * se),
    )
}

/// Fourth-moment proxy shrinks like 1/n along a doubling sequence.
fn ac9() -> Outcome {
    let mut values = Vec::new();
    for big_n in [250, 500, 1000, 2000] {
        let model = ModelConfig::new(1.0, 1.0, Kernel::Iid, 9).unwrap();
        let config = CltConfig::new(CltMode::Design, big_n, big_n / 10, 2_000, model);
        values.push(clt_experiment(&config).unwrap().0.condition_a);
    }
    let ratios: Vec<f64> = values.windows(2).map(|w| w[1] / w[0]).collect();
    outcome(
        ratios.iter().all(|r| (0.3..=0.8).contains(r)),
        format!(
            "sum E eta^4 = {}; ratios {} (each in [0.3, 0.8])",
            values.iter().map(|v| format!("{v:.4e}")).collect::<Vec<_>>().join(", "),
            ratios.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

/// Reports are bit-identical for 1 and 4 threads.
fn ac10() -> Outcome {
    let model = ModelConfig::new(1.0, 1.0, Kernel::Ar1 { rho: 0.5 }, 10).unwrap();
    let mut config = CltConfig::new(CltMode::Model, 1_000, 100, 500, model);
    config.pilot_replicates = 2_000;
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
            let report = serde_json::to_string(&clt_experiment(&config).unwrap().0).unwrap();
            let d = decompose(&PopulationSpec::from_probabilities(vec![0.3; 50]).unwrap());
            let draws = serde_json::to_string(&draw_many(&d, 2_000, 10)).unwrap();
            (report, draws)
        })
    };
    let (one, four) = (run(1), run(4));
    let again = run(4);
    outcome(
        one == four && four == again,
        format!("simulation report ({} bytes) and 2000 draws identical across 1/4/4 threads: {}", one.0.len(), one == four && four == again),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("AC1", ac1),
        ("AC2", ac2),
        ("AC3", ac3),
        ("AC4", ac4),
        ("AC5", ac5),
        ("AC6", ac6),
        ("AC7", ac7),
        ("AC8", ac8),
        ("AC9", ac9),
        ("AC10", ac10),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("{name} {} [{:.1}s] {}", if o.pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64(), o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
