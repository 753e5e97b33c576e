//! End-to-end acceptance suite. Each test prints one
//! `ACCEPTANCE <n>: PASS|FAIL` line (run with `--nocapture` to see them)
//! and fails the build if its criterion does not hold.
//!
//! Criteria 1-5 check exact algorithmic behavior against independent
//! oracles; 6-8 run the full experiment harness and check the statistical
//! outcomes; 9 checks byte-identical reproducibility.

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use csal_core::data::BinaryMask;
use csal_core::heatmap::{boundary_length, connected_components};
use csal_core::selection::{knapsack_select, Budget, SelectionItem};
use csal_core::sim::{
    run_core_set, run_cost_sensitive, run_wild, ExperimentConfig, Mode, SyntheticConfig,
};
use csal_core::uncertainty::{js_divergence, AggregationConfig, PatchUncertainty};
use csal_core::{cost, uncertainty};

fn report(criterion: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {criterion}: {verdict} — {detail}");
    assert!(pass, "acceptance criterion {criterion} failed: {detail}");
}

// ---------------------------------------------------------------------------
// 1. Knapsack exactness against 2^n brute-force enumeration.
// ---------------------------------------------------------------------------

/// Best achievable value over all subsets feasible under the discretized
/// weights (ceil(t/q)) and capacity (floor(Q/q)) — the same integer
/// instance the DP solves, enumerated exhaustively.
fn brute_force_best(items: &[SelectionItem], budget: &Budget) -> f64 {
    let q = budget.quantum;
    let cap = (budget.seconds / q).floor() as u64;
    let weights: Vec<u64> = items.iter().map(|i| (i.time_s / q).ceil() as u64).collect();
    let n = items.len();
    let mut best = 0.0f64;
    for subset in 0u32..(1u32 << n) {
        let mut w = 0u64;
        let mut v = 0.0f64;
        for (i, wt) in weights.iter().enumerate() {
            if subset >> i & 1 == 1 {
                w += wt;
                v += items[i].value;
            }
        }
        if w <= cap && v > best {
            best = v;
        }
    }
    best
}

#[test]
fn criterion_1_knapsack_matches_brute_force() {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let n_instances = 120;
    let mut max_n = 0;
    let mut slowest = 0.0f64;
    for inst in 0..n_instances {
        // always include some maximum-size instances
        let n = if inst % 10 == 0 {
            18
        } else {
            rng.gen_range(4..=18)
        };
        max_n = max_n.max(n);
        let items: Vec<SelectionItem> = (0..n)
            .map(|i| SelectionItem {
                stack_id: format!("s{i:03}"),
                value: rng.gen_range(0.0..10.0),
                // log-uniform over two decades
                time_s: 10f64.powf(rng.gen_range(1.0..3.0)),
            })
            .collect();
        let total: f64 = items.iter().map(|i| i.time_s).sum();
        let budget = Budget::new(total * rng.gen_range(0.1..0.9), 1.0).unwrap();
        let t0 = Instant::now();
        let result = knapsack_select(&items, &budget).unwrap();
        let elapsed = t0.elapsed().as_secs_f64();
        slowest = slowest.max(elapsed);
        let oracle = brute_force_best(&items, &budget);
        assert!(
            (result.total_value - oracle).abs() < 1e-9,
            "instance {inst} (n={n}): knapsack {} vs brute force {oracle}",
            result.total_value
        );
        assert!(elapsed < 1.0, "instance {inst} took {elapsed:.3}s");
    }
    report(
        1,
        true,
        &format!(
            "{n_instances} instances up to n={max_n} match 2^n enumeration; slowest {slowest:.3}s"
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Jensen-Shannon divergence: bounds and closed form.
// ---------------------------------------------------------------------------

/// Independent closed-form JS for binary committee outputs:
/// H(mean p) - mean H(p_i), entropies in bits.
fn js_closed_form(probs: &[f64]) -> f64 {
    let h = |p: f64| -> f64 {
        let mut e = 0.0;
        if p > 0.0 {
            e -= p * p.ln();
        }
        if p < 1.0 {
            e -= (1.0 - p) * (1.0 - p).ln();
        }
        e / std::f64::consts::LN_2
    };
    let mean = probs.iter().sum::<f64>() / probs.len() as f64;
    h(mean) - probs.iter().map(|&p| h(p)).sum::<f64>() / probs.len() as f64
}

#[test]
fn criterion_2_js_bounds_and_closed_form() {
    let mut rng = ChaCha12Rng::seed_from_u64(202);
    let sizes = [2usize, 4, 8];
    let n_committees = 10_000;
    let mut max_err = 0.0f64;
    for i in 0..n_committees {
        let n = sizes[i % sizes.len()];
        let probs: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let js = js_divergence(&probs).unwrap();
        let bound = (n as f64).log2();
        assert!(
            js >= 0.0 && js <= bound + 1e-12,
            "committee {i}: JS {js} outside [0, log2 {n}]"
        );
        let err = (js - js_closed_form(&probs)).abs();
        max_err = max_err.max(err);
        assert!(err < 1e-9, "committee {i}: closed-form mismatch {err}");

        // identical members disagree by nothing
        let p = rng.gen_range(0.0..=1.0);
        let same = vec![p; n];
        let js_same = js_divergence(&same).unwrap();
        assert!(js_same.abs() <= 1e-12, "identical members gave JS {js_same}");
    }
    report(
        2,
        true,
        &format!("{n_committees} committees within bounds; max closed-form error {max_err:.2e}"),
    );
}

// ---------------------------------------------------------------------------
// 3. Cost-model recovery and batch-time prediction accuracy.
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_cost_model_recovery() {
    // noisy fit: each coefficient within 3 standard errors of truth
    let (alpha, beta, gamma) = (0.8, 0.4, 2.0);
    let samples = cost::generate_samples(alpha, beta, gamma, 0.3, 200, 303);
    let p = cost::fit(&samples).unwrap();
    let se = p.diagnostics.std_errors;
    let within_se = (p.alpha - alpha).abs() <= 3.0 * se[0]
        && (p.beta - beta).abs() <= 3.0 * se[1]
        && (p.gamma - gamma).abs() <= 3.0 * se[2];
    assert!(
        within_se,
        "noisy fit ({}, {}, {}) vs truth ({alpha}, {beta}, {gamma}), SE {se:?}",
        p.alpha, p.beta, p.gamma
    );

    // noiseless fit recovers the generator exactly
    let clean = cost::generate_samples(alpha, beta, gamma, 0.0, 200, 304);
    let pc = cost::fit(&clean).unwrap();
    let exact = (pc.alpha - alpha).abs() < 1e-9
        && (pc.beta - beta).abs() < 1e-9
        && (pc.gamma - gamma).abs() < 1e-9;
    assert!(exact, "noiseless fit off: ({}, {}, {})", pc.alpha, pc.beta, pc.gamma);

    // low-noise end-to-end check: the budgeted arm's predicted batch time
    // tracks the ground-truth time actually charged for that batch
    let mut cfg = cost_sensitive_config();
    cfg.data.time.noise_sigma = 0.01;
    cfg.replicate_seeds = vec![0, 1];
    let results = run_cost_sensitive(&cfg).unwrap();
    let mut worst_rel = 0.0f64;
    for r in results.iter().filter(|r| r.policy == "cal" && r.round == 1) {
        let rel = (r.predicted_batch_time_s - r.actual_batch_time_s).abs() / r.actual_batch_time_s;
        worst_rel = worst_rel.max(rel);
        assert!(
            rel <= 0.10,
            "seed {}: predicted {:.0}s vs charged {:.0}s ({:.1}% off)",
            r.seed,
            r.predicted_batch_time_s,
            r.actual_batch_time_s,
            rel * 100.0
        );
    }
    report(
        3,
        true,
        &format!(
            "coefficients within 3 SE (noiseless exact); low-noise batch prediction within {:.1}%",
            worst_rel * 100.0
        ),
    );
}

// ---------------------------------------------------------------------------
// 4. Stack aggregation limits: K=1 is max, K >= #patches is mean.
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_aggregation_limits() {
    let mut rng = ChaCha12Rng::seed_from_u64(404);
    for trial in 0..200 {
        let n = rng.gen_range(1..=400usize);
        let patches: Vec<PatchUncertainty> = (0..n)
            .map(|i| PatchUncertainty {
                frame: i / 16,
                row: (i % 16) * 16,
                col: 0,
                mean_js: rng.gen_range(0.0..2.0),
            })
            .collect();
        let max = patches.iter().map(|p| p.mean_js).fold(f64::MIN, f64::max);
        let mean = patches.iter().map(|p| p.mean_js).sum::<f64>() / n as f64;

        let k1 = AggregationConfig::new(1, 16).unwrap();
        let v1 = uncertainty::stack_uncertainty("s", &patches, &k1).unwrap().value;
        assert!(v1 == max, "trial {trial}: K=1 gave {v1}, max is {max}");

        // any K at or past the patch count collapses to the mean
        let big_k = n + rng.gen_range(0..=5usize);
        let kall = AggregationConfig::new(big_k.max(n), 16).unwrap();
        let vall = uncertainty::stack_uncertainty("s", &patches, &kall).unwrap().value;
        assert!(
            (vall - mean).abs() <= 1e-12,
            "trial {trial}: K={big_k} gave {vall}, mean is {mean}"
        );
    }
    report(4, true, "200 random patch sets: K=1 = max, K >= #patches = mean");
}

// ---------------------------------------------------------------------------
// 5. Morphology against naive flood-fill / neighbor-scan oracles.
// ---------------------------------------------------------------------------

/// Count 8-connected components by exhaustive flood fill with an explicit
/// visited grid.
fn oracle_component_count(mask: &BinaryMask) -> usize {
    let (h, w) = (mask.height(), mask.width());
    let mut visited = vec![false; h * w];
    let mut count = 0;
    for sr in 0..h {
        for sc in 0..w {
            if mask.get(sr, sc) != 1 || visited[sr * w + sc] {
                continue;
            }
            count += 1;
            let mut queue = std::collections::VecDeque::new();
            visited[sr * w + sc] = true;
            queue.push_back((sr, sc));
            while let Some((r, c)) = queue.pop_front() {
                for dr in -1i32..=1 {
                    for dc in -1i32..=1 {
                        let (nr, nc) = (r as i32 + dr, c as i32 + dc);
                        if nr < 0 || nc < 0 || nr as usize >= h || nc as usize >= w {
                            continue;
                        }
                        let (nr, nc) = (nr as usize, nc as usize);
                        if mask.get(nr, nc) == 1 && !visited[nr * w + nc] {
                            visited[nr * w + nc] = true;
                            queue.push_back((nr, nc));
                        }
                    }
                }
            }
        }
    }
    count
}

/// Perimeter by scanning each foreground pixel's 4-neighborhood.
fn oracle_boundary(mask: &BinaryMask) -> f64 {
    let (h, w) = (mask.height(), mask.width());
    let mut edges = 0u64;
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) != 1 {
                continue;
            }
            for (dr, dc) in [(-1i32, 0i32), (1, 0), (0, -1), (0, 1)] {
                let (nr, nc) = (r as i32 + dr, c as i32 + dc);
                let outside = nr < 0 || nc < 0 || nr as usize >= h || nc as usize >= w;
                if outside || mask.get(nr as usize, nc as usize) == 0 {
                    edges += 1;
                }
            }
        }
    }
    edges as f64
}

#[test]
fn criterion_5_morphology_matches_oracles() {
    let mut rng = ChaCha12Rng::seed_from_u64(505);
    for trial in 0..500 {
        let density = rng.gen_range(0.0..=1.0);
        let bits: Vec<u8> = (0..256).map(|_| u8::from(rng.gen_bool(density))).collect();
        let mask = BinaryMask::new(16, 16, bits).unwrap();

        let (_, n_components) = connected_components(&mask);
        let oracle_n = oracle_component_count(&mask);
        assert_eq!(n_components, oracle_n, "trial {trial}: component count");

        let b = boundary_length(&mask);
        let oracle_b = oracle_boundary(&mask);
        assert!(b == oracle_b, "trial {trial}: boundary {b} vs {oracle_b}");
    }
    report(5, true, "500 random 16x16 masks match flood-fill and neighbor-scan oracles");
}

// ---------------------------------------------------------------------------
// 6. Core-set doubling: committee disagreement beats random selection.
// ---------------------------------------------------------------------------

fn mean_by<'a>(
    results: &'a [csal_core::sim::ALRoundResult],
    policy: &str,
    round: usize,
) -> (f64, usize) {
    let vals: Vec<f64> = results
        .iter()
        .filter(|r| r.policy == policy && r.round == round)
        .map(|r| r.metrics.stack_ap)
        .collect();
    let n = results
        .iter()
        .find(|r| r.policy == policy && r.round == round)
        .map(|r| r.labeled_count)
        .unwrap_or(0);
    (vals.iter().sum::<f64>() / vals.len() as f64, n)
}

#[test]
fn criterion_6_core_set_learning_curve() {
    let t0 = Instant::now();
    let cfg = ExperimentConfig {
        mode: Mode::CoreSet,
        ..ExperimentConfig::default()
    };
    assert!(cfg.replicate_seeds.len() >= 10);
    let results = run_core_set(&cfg).unwrap();
    let full_size = cfg.data.n_trainval;

    let mut detail = String::new();
    let mut dominates = true;
    let mut half_gap = f64::NAN;
    let mut full_ap = f64::NAN;
    for round in 0..=cfg.rounds {
        let (qbc, n) = mean_by(&results, "qbc", round);
        let (rand_ap, _) = mean_by(&results, "random", round);
        // the criterion applies from 1/8 of the data onward
        if n * 8 >= full_size && qbc < rand_ap {
            dominates = false;
        }
        if n * 2 == full_size {
            half_gap = qbc;
        }
        if n == full_size {
            full_ap = qbc;
        }
        detail.push_str(&format!("n={n}: qbc {qbc:.3} rand {rand_ap:.3}; "));
    }
    let half_within_2 = full_ap - half_gap <= 0.02;
    let elapsed_min = t0.elapsed().as_secs_f64() / 60.0;
    let pass = dominates && half_within_2 && elapsed_min <= 30.0;
    report(
        6,
        pass,
        &format!(
            "{detail}half-data within {:.3} of full; {elapsed_min:.1} min",
            full_ap - half_gap
        ),
    );
}

// ---------------------------------------------------------------------------
// 7. Cost-sensitive selection: budget-aware beats uncertainty-only.
// ---------------------------------------------------------------------------

/// Small seed set and a high floor time: the regime where per-stack
/// labeling costs dominate and budget awareness matters.
fn cost_sensitive_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        mode: Mode::CostSensitive,
        rounds: 1,
        ..ExperimentConfig::default()
    };
    cfg.data.n_trainval = 16;
    cfg.data.time.floor_time = 300.0;
    cfg.pipeline.floor_time_s = 300.0;
    cfg
}

#[test]
fn criterion_7_cost_sensitive_first_budget_round() {
    let cfg = cost_sensitive_config();
    assert!(cfg.replicate_seeds.len() >= 10);

    // precondition for the batch-size clause: ground-truth labeling times
    // span at least two orders of magnitude
    let (stacks, _) = csal_core::sim::generate_synthetic(&cfg.data).unwrap();
    let times: Vec<f64> = stacks
        .iter()
        .filter(|s| s.split == csal_core::data::Split::Pool)
        .filter_map(|s| s.gt_label_time)
        .collect();
    let t_min = times.iter().cloned().fold(f64::MAX, f64::min);
    let t_max = times.iter().cloned().fold(f64::MIN, f64::max);
    assert!(t_max / t_min >= 100.0, "time span only {:.1}x", t_max / t_min);

    let results = run_cost_sensitive(&cfg).unwrap();
    let n_seeds = cfg.replicate_seeds.len();
    let mut cal_ge_ual = 0;
    let mut cal_ge_rand = 0;
    let mut cal_total = 0.0;
    let mut ual_total = 0.0;
    let mut cal_stacks = 0usize;
    let mut ual_stacks = 0usize;
    let grab = |policy: &str, seed: u64| {
        results
            .iter()
            .find(|r| r.policy == policy && r.round == 1 && r.seed == seed)
            .unwrap()
    };
    for &seed in &cfg.replicate_seeds {
        let cal = grab("cal", seed);
        let ual = grab("ual", seed);
        let rand_arm = grab("random", seed);
        if cal.metrics.stack_ap >= ual.metrics.stack_ap {
            cal_ge_ual += 1;
        }
        if cal.metrics.stack_ap >= rand_arm.metrics.stack_ap {
            cal_ge_rand += 1;
        }
        cal_total += cal.metrics.stack_ap;
        ual_total += ual.metrics.stack_ap;
        cal_stacks += cal.stacks_added.len();
        ual_stacks += ual.stacks_added.len();
    }
    let majority = n_seeds / 2 + 1;
    let batch_ratio = cal_stacks as f64 / ual_stacks as f64;
    let pass = cal_ge_ual >= majority && cal_ge_rand >= majority && batch_ratio >= 2.0;
    report(
        7,
        pass,
        &format!(
            "cal>=ual on {cal_ge_ual}/{n_seeds}, cal>=random on {cal_ge_rand}/{n_seeds} \
             (mean AP cal {:.3} ual {:.3}); batch sizes {:.1} vs {:.1} ({batch_ratio:.1}x, \
             time span {:.0}x)",
            cal_total / n_seeds as f64,
            ual_total / n_seeds as f64,
            cal_stacks as f64 / n_seeds as f64,
            ual_stacks as f64 / n_seeds as f64,
            t_max / t_min
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. Annotation in the wild: adapting to a shifted domain without
//    forgetting the source domain.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_wild_domain_adaptation() {
    let cfg = ExperimentConfig {
        mode: Mode::Wild,
        ..ExperimentConfig::default()
    };
    assert!(cfg.replicate_seeds.len() >= 10);
    let outcomes = run_wild(&cfg).unwrap();
    let n = outcomes.len();
    let mut improved = 0;
    let mut pool_base = 0.0;
    let mut pool_aug = 0.0;
    let mut seed_base = 0.0;
    let mut seed_aug = 0.0;
    for o in &outcomes {
        if o.augmented_pool_test.stack_ap > o.baseline_pool_test.stack_ap {
            improved += 1;
        }
        pool_base += o.baseline_pool_test.stack_ap;
        pool_aug += o.augmented_pool_test.stack_ap;
        seed_base += o.baseline_seed_test.pixel_ap;
        seed_aug += o.augmented_seed_test.pixel_ap;
    }
    let degradation = (seed_base - seed_aug) / n as f64;
    let pass = improved >= 8 && degradation < 0.02;
    report(
        8,
        pass,
        &format!(
            "pool-domain stack AP improved on {improved}/{n} seeds \
             (mean {:.3} -> {:.3}); source pixel AP {:.3} -> {:.3} \
             (degradation {:.3})",
            pool_base / n as f64,
            pool_aug / n as f64,
            seed_base / n as f64,
            seed_aug / n as f64,
            degradation
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. Determinism: identical configs give byte-identical serialized results.
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_byte_identical_reruns() {
    let mut cfg = ExperimentConfig {
        mode: Mode::CostSensitive,
        rounds: 1,
        replicate_seeds: vec![0, 7],
        ..ExperimentConfig::default()
    };
    cfg.data = SyntheticConfig {
        height: 32,
        width: 32,
        frames_min: 3,
        frames_max: 5,
        n_trainval: 12,
        n_test: 8,
        n_pool: 10,
        ..SyntheticConfig::default()
    };
    cfg.pipeline.patch_size = 16;
    cfg.pipeline.stride = 16;
    cfg.pipeline.train.patch_size = 16;
    cfg.pipeline.train.epochs = 2;
    cfg.pipeline.agg_patch_size = 8;

    let a = serde_json::to_string(&run_cost_sensitive(&cfg).unwrap()).unwrap();
    let b = serde_json::to_string(&run_cost_sensitive(&cfg).unwrap()).unwrap();
    let identical = a == b;

    // the doubling mode as well, including its random arm
    cfg.mode = Mode::CoreSet;
    cfg.seed_fraction = 0.25;
    let c = serde_json::to_string(&run_core_set(&cfg).unwrap()).unwrap();
    let d = serde_json::to_string(&run_core_set(&cfg).unwrap()).unwrap();
    let pass = identical && c == d;
    report(
        9,
        pass,
        &format!(
            "budgeted re-run identical: {identical} ({} bytes); doubling re-run identical: {} ({} bytes)",
            a.len(),
            c == d,
            c.len()
        ),
    );
}
