//! End-to-end acceptance checks. Each test prints one PASS/FAIL line; run with
//! `cargo test -p sbl-core --test acceptance -- --nocapture --test-threads=1`.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sbl_core::adversary::{evaluate_colors, greedy_adversary, kl_pm1, lb_value, AdversaryConfig};
use sbl_core::construction::{growth_constant, verify_construction, Color, ColorSeq, FamilySpec};
use sbl_core::experiment::{
    fit_slopes, run_sweep, sweep_instance, write_rows, SweepConfig, SweepPolicy, SweepPolicyKind,
};
use sbl_core::holder::certify_holder;
use sbl_core::policy::{default_params, BeConfig, PolicySpec, TuningStyle};
use sbl_core::reward::{BanditInstance, CurveKind, RewardCurve};
use sbl_core::sim::{
    clean_event_frequency, derive_seed, monte_carlo_values, trial_mean_regret, wald_probe,
    MeanTable,
};

const SEED: u64 = 2024;

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {id} ({name}): {} | {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .unwrap()
        .install(f)
}

// ---- 1: slope separation ----

fn slope_config() -> SweepConfig {
    let policies = vec![
        SweepPolicy::new(SweepPolicyKind::Be1, 1, TuningStyle::Experiment).with_label("nonsmooth"),
        SweepPolicy::new(SweepPolicyKind::Be1, 2, TuningStyle::Experiment).with_label("smooth"),
    ];
    SweepConfig::new((16..=21).map(|j| 1u64 << j).collect(), policies, 100, SEED)
}

fn sweep_csv() -> String {
    let rows = run_sweep(&slope_config()).unwrap();
    let mut buf = Vec::new();
    write_rows(&rows, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

fn cached_sweep() -> &'static str {
    static CSV: OnceLock<String> = OnceLock::new();
    CSV.get_or_init(sweep_csv)
}

#[test]
fn c1_slope_separation() {
    let rows = sbl_core::experiment::read_rows(cached_sweep().as_bytes()).unwrap();
    let fits = fit_slopes(&rows).unwrap();
    let slope = |label: &str| fits.iter().find(|f| f.policy == label).unwrap().slope;
    let (rough, smooth) = (slope("nonsmooth"), slope("smooth"));
    let last = |label: &str| {
        rows.iter()
            .filter(|r| r.policy == label)
            .max_by_key(|r| r.horizon)
            .unwrap()
            .mean_regret
    };
    let (reg_rough, reg_smooth) = (last("nonsmooth"), last("smooth"));

    let ranges = (0.55..=0.80).contains(&rough) && (0.55..=0.80).contains(&smooth);
    let separated = rough - smooth >= 0.03;
    let lower = reg_smooth < reg_rough;
    let pass = ranges && separated && lower;
    verdict(
        1,
        "slope separation",
        pass,
        &format!(
            "slopes nonsmooth {rough:.4}, smooth {smooth:.4} (need both in [0.55, 0.80], gap {:.4} >= 0.03); \
             regret at T=2^21 smooth {reg_smooth:.1} < nonsmooth {reg_rough:.1}",
            rough - smooth
        ),
    );
    assert!(pass);
}

// ---- 2: regret-bound compliance ----

const BOUND_T: u64 = 1 << 14;
const BOUND_INSTANCES: usize = 50;
const BOUND_TRIALS: u64 = 1000;
/// Smallest Lipschitz constant used for tuning; nearly flat draws are tuned as if rougher.
const MIN_LIPSCHITZ: f64 = 0.05;

/// Lipschitz constant certified for arm 1 of a sinusoidal instance.
fn certified_constant(instance: &BanditInstance, beta: u32) -> (f64, RewardCurve) {
    let curve = instance.arms()[1].clone();
    let CurveKind::Sinusoidal(p) = curve.kind() else {
        panic!("sinusoidal arm expected")
    };
    let raw = if beta == 1 {
        p.lipschitz()
    } else {
        p.lipschitz().max(p.second_derivative_bound())
    };
    ((1.05 * raw).max(MIN_LIPSCHITZ), curve)
}

/// Epochs rounded to `1/m` and the smallest budget with `6ΔT ln T <= B²`.
fn compliant_params(beta: u32, lipschitz: f64) -> (f64, f64) {
    let cfg = default_params(beta, BOUND_T, lipschitz, 2, TuningStyle::Theoretical).unwrap();
    let delta = 1.0 / (1.0 / cfg.delta).ceil();
    let t = BOUND_T as f64;
    let budget = (6.0 * delta * t * t.ln()).sqrt() * (1.0 + 1e-9);
    (budget, delta)
}

fn regret_bound(beta: u32, lipschitz: f64, budget: f64, delta: f64) -> f64 {
    let t = BOUND_T as f64;
    if beta == 1 {
        (1.0 + lipschitz * delta * delta * t + budget) / delta
    } else {
        2.0 * (lipschitz * delta.powi(3) * t + budget) / delta
    }
}

#[test]
fn c2_regret_bounds() {
    let mut lines = Vec::new();
    let mut pass = true;
    for beta in [1u32, 2] {
        let (mut violations, mut uncertified, mut worst) = (0, 0, 0.0f64);
        for i in 0..BOUND_INSTANCES {
            let instance =
                sweep_instance(derive_seed(&[SEED, u64::from(beta)]), BOUND_T, i).unwrap();
            let (lipschitz, curve) = certified_constant(&instance, beta);
            if !certify_holder(&curve, beta, lipschitz, 10_000)
                .unwrap()
                .pass
            {
                uncertified += 1;
            }
            let (budget, delta) = compliant_params(beta, lipschitz);
            let t = BOUND_T as f64;
            assert!(6.0 * delta * t * t.ln() <= budget * budget && budget < delta * t);
            let policy = PolicySpec::Be1 { budget, delta };
            let table = MeanTable::new(&instance, BOUND_T).unwrap();
            let seed = derive_seed(&[SEED, u64::from(beta), i as u64]);
            let mc = monte_carlo_values(BOUND_TRIALS, |k| {
                trial_mean_regret(&policy, &instance, &table, seed, k)
            })
            .unwrap();
            let bound = regret_bound(beta, lipschitz, budget, delta);
            worst = worst.max(mc.mean / bound);
            if mc.mean > bound {
                violations += 1;
            }
        }
        pass &= violations == 0 && uncertified == 0;
        lines.push(format!(
            "beta={beta}: {violations}/{BOUND_INSTANCES} above bound, {uncertified} uncertified, max regret/bound {worst:.3}"
        ));
    }
    verdict(2, "regret-bound compliance", pass, &lines.join("; "));
    assert!(pass);
}

// ---- 3: construction invariants ----

#[test]
fn c3_construction() {
    let mut pass = true;
    let mut worst_endpoint = 0.0f64;
    let mut worst_lip = 0.0f64;
    let mut worst_spread = 0.0f64;
    for beta in [2u32, 3, 4] {
        let constants: Vec<f64> = [0.25, 1.0, 4.0]
            .iter()
            .map(|&e| growth_constant(beta, e).unwrap())
            .collect();
        for (k, &eps) in [0.25, 1.0, 4.0].iter().enumerate() {
            let r = verify_construction(beta, eps).unwrap();
            let scale = r.g_at_eps;
            for &(_, a, b) in &r.endpoint_derivatives {
                worst_endpoint = worst_endpoint.max(a.abs().max(b.abs()) / scale);
            }
            worst_lip = worst_lip.max((r.top_derivative_lipschitz - 1.0).abs());
            pass &= r.endpoint_pass && r.monotone_pass && r.lipschitz_pass && r.neutral_pass;
            pass &= r.min_first_derivative >= -1e-10;
            worst_spread = worst_spread.max((constants[k] - constants[0]).abs() / constants[0]);
        }
    }
    pass &= worst_endpoint <= 1e-10 && worst_lip <= 1e-10 && worst_spread <= 1e-12;
    let c2_exact = [0.25, 1.0, 4.0]
        .iter()
        .all(|&e| growth_constant(2, e).unwrap() == 0.25);
    pass &= c2_exact;
    verdict(
        3,
        "construction invariants",
        pass,
        &format!(
            "max endpoint derivative/g(eps) {worst_endpoint:.2e}, max |Lip - 1| {worst_lip:.2e}, \
             C_beta spread {worst_spread:.2e}, C_2 == 0.25: {c2_exact}"
        ),
    );
    assert!(pass);
}

// ---- 4: clean-event frequency ----

fn clean_json() -> String {
    serde_json::to_string(&clean_event_frequency(0.0, 256, 5000, SEED).unwrap()).unwrap()
}

fn cached_clean() -> &'static str {
    static JSON: OnceLock<String> = OnceLock::new();
    JSON.get_or_init(clean_json)
}

#[test]
fn c4_clean_event() {
    let v: serde_json::Value = serde_json::from_str(cached_clean()).unwrap();
    let fraction = v["fraction"].as_f64().unwrap();
    let pass = fraction <= 3.0 / 256.0;
    verdict(
        4,
        "clean-event frequency",
        pass,
        &format!(
            "{} of 5000 trials violate (fraction {fraction:.5} <= {:.5}); one-sided {}",
            v["violating_trials"],
            3.0 / 256.0,
            v["violating_trials_one_sided"]
        ),
    );
    assert!(pass);
}

// ---- 5: KL bound fuzz ----

#[test]
fn c5_kl_fuzz() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut failures = 0;
    let mut worst = 0.0f64;
    for _ in 0..100_000 {
        let r1 = rng.gen_range(-0.99..=0.99);
        let r2 = rng.gen_range(-0.5..=0.5);
        let kl = kl_pm1(r1, r2).unwrap();
        let bound = 4.0 / 3.0 * (r1 - r2) * (r1 - r2);
        if kl > bound {
            failures += 1;
        }
        if bound > 0.0 {
            worst = worst.max(kl / bound);
        }
    }
    let pass = failures == 0;
    verdict(
        5,
        "KL bound fuzz",
        pass,
        &format!("{failures} failures in 100000 pairs, max kl/bound {worst:.4}"),
    );
    assert!(pass);
}

// ---- 6: Wald identity ----

#[test]
fn c6_wald_identity() {
    let mut pass = true;
    let mut parts = Vec::new();
    for mu in [-0.3, 0.0, 0.3] {
        for budget in [8.0, 32.0] {
            let instance =
                BanditInstance::one_armed(RewardCurve::constant(mu).unwrap(), 4096).unwrap();
            let cfg = BeConfig::new(budget, 1.0 / 16.0, 2).unwrap();
            let w =
                wald_probe(&instance, &cfg, 10_000, derive_seed(&[SEED, budget as u64])).unwrap();
            let z = (w.reward_sum - w.mean_sum).abs() / w.combined_stderr;
            pass &= z <= 3.0;
            parts.push(format!("mu={mu:+.1},B={budget}: {z:.2}"));
        }
    }
    verdict(
        6,
        "Wald identity",
        pass,
        &format!("|diff|/combined stderr (<= 3): {}", parts.join(", ")),
    );
    assert!(pass);
}

// ---- 7: adversary floor ----

const ADV_T: u64 = 100_000;

fn adversary_config() -> AdversaryConfig {
    let mut adv = AdversaryConfig::new(1, ADV_T, 64, SEED).unwrap();
    adv.final_trials = 200;
    adv
}

fn be1_experiment() -> PolicySpec {
    SweepPolicy::new(SweepPolicyKind::Be1, 1, TuningStyle::Experiment)
        .resolve(ADV_T)
        .unwrap()
}

/// Greedy reports for fixed_arm(1) and be1, plus the random-sequence comparisons, as JSON.
fn adversary_json() -> String {
    let adv = adversary_config();
    let fixed = greedy_adversary(&PolicySpec::Fixed { arm: 1 }, &adv).unwrap();
    let be1 = be1_experiment();
    let greedy = greedy_adversary(&be1, &adv).unwrap();
    let m = FamilySpec::epoch_count(1, ADV_T).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[SEED, 0xC0]));
    let randoms: Vec<(String, f64, f64)> = (0..10u64)
        .map(|k| {
            let colors = ColorSeq::new(
                (0..m)
                    .map(|_| {
                        if rng.gen::<bool>() {
                            Color::Bowl
                        } else {
                            Color::Red
                        }
                    })
                    .collect(),
            )
            .unwrap();
            let s = evaluate_colors(
                &be1,
                &adv,
                &colors,
                derive_seed(&[SEED, 0xC1, k]),
                adv.final_trials,
            )
            .unwrap();
            (colors.to_string(), s.mean, s.stderr.unwrap())
        })
        .collect();
    serde_json::to_string(&serde_json::json!({ "fixed": fixed, "be1": greedy, "random": randoms }))
        .unwrap()
}

fn cached_adversary() -> &'static str {
    static JSON: OnceLock<String> = OnceLock::new();
    JSON.get_or_init(adversary_json)
}

#[test]
fn c7_adversary_floor() {
    let v: serde_json::Value = serde_json::from_str(cached_adversary()).unwrap();
    let lb = lb_value(1, ADV_T).unwrap();
    let fixed = v["fixed"]["estimated_regret"].as_f64().unwrap();
    let floor = fixed >= lb;

    let greedy = v["be1"]["estimated_regret"].as_f64().unwrap();
    let greedy_se = v["be1"]["stderr"].as_f64().unwrap();
    let best = v["random"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| (r[1].as_f64().unwrap(), r[2].as_f64().unwrap()))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    let combined = (greedy_se * greedy_se + best.1 * best.1).sqrt();
    let dominates = greedy >= best.0 - 2.0 * combined;
    let pass = floor && dominates;
    verdict(
        7,
        "adversary floor",
        pass,
        &format!(
            "fixed_arm(1) regret {fixed:.2} >= lb {lb:.2}; be1 greedy {greedy:.2} vs best random {:.2} \
             (slack 2 x {combined:.2}), greedy colors {}",
            best.0, v["be1"]["colors"]
        ),
    );
    assert!(pass);
}

// ---- 8: determinism ----

/// Output name, fresh computation, cached default-pool result.
type Rerun = (&'static str, fn() -> String, fn() -> &'static str);

#[test]
fn c8_determinism() {
    let runs: [Rerun; 3] = [
        ("sweep CSV", sweep_csv, cached_sweep),
        ("clean-scan JSON", clean_json, cached_clean),
        ("adversary JSON", adversary_json, cached_adversary),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, fresh, cached) in runs {
        let reference = cached();
        let repeat = fresh();
        let threaded = in_pool(3, fresh);
        let same = repeat == reference && threaded == reference;
        pass &= same;
        parts.push(format!(
            "{name} {}",
            if same { "identical" } else { "differs" }
        ));
    }
    verdict(
        8,
        "determinism",
        pass,
        &format!(
            "repeat and 3-worker pool vs default pool ({} workers): {}",
            rayon::current_num_threads(),
            parts.join(", ")
        ),
    );
    assert!(pass);
}
