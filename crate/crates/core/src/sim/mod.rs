//! Active-learning experiment harness on synthetic data: core-set doubling,
//! budgeted cost-sensitive rounds, and the in-the-wild round against a
//! domain-shifted pool.
//!
//! Every experiment is a pure function of its config; all randomness flows
//! from the replicate seeds through named stage derivations.

mod oracle;
mod synthetic;

pub use oracle::AnnotationOracle;
pub use synthetic::{generate_synthetic, LesionModel, SyntheticConfig, TimeModel};

use serde::{Deserialize, Serialize};

use crate::committee::{committee_predict, train_committee, Committee, TrainConfig};
use crate::cost::{self, CostModelParams, TimeSample};
use crate::data::{HeatmapStack, Split, Stack};
use crate::error::{Error, Result};
use crate::heatmap::{
    boundary_length, connected_components, mean_heatmap, stack_features, StackFeatures,
    ThresholdSet,
};
use crate::metrics::{evaluate, EvalReport, RegionMatchConfig};
use crate::selection::{select, Budget, Policy, SelectionItem};
use crate::uncertainty::{patch_uncertainties, stack_uncertainty, uncertainty_map, AggregationConfig};
use crate::util::{self, subseed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    CoreSet,
    CostSensitive,
    Wild,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "core-set" | "core_set" => Ok(Mode::CoreSet),
            "cost-sensitive" | "cost_sensitive" => Ok(Mode::CostSensitive),
            "wild" => Ok(Mode::Wild),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

/// Model and inference knobs shared by every experiment mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub n_members: usize,
    pub patch_size: usize,
    pub stride: usize,
    pub train: TrainConfigSer,
    /// Aggregation grid side for patch uncertainties.
    pub agg_patch_size: usize,
    /// Top-K for stack uncertainty; default derives from the patch count.
    pub agg_top_k: Option<usize>,
    pub thresholds: Vec<f64>,
    pub region: RegionMatchConfig,
    /// Keep probability for background pixels in pixel AP (None = exact).
    pub pixel_subsample: Option<f64>,
    pub quantum_s: f64,
    pub floor_time_s: f64,
}

/// Serializable mirror of the committee TrainConfig.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfigSer {
    pub patch_size: usize,
    pub patches_per_stack: usize,
    pub pixels_per_patch: usize,
    pub learning_rate: f64,
    pub epochs: u32,
    pub l2: f64,
}

impl From<&TrainConfigSer> for TrainConfig {
    fn from(c: &TrainConfigSer) -> Self {
        TrainConfig {
            patch_size: c.patch_size,
            patches_per_stack: c.patches_per_stack,
            pixels_per_patch: c.pixels_per_patch,
            learning_rate: c.learning_rate,
            epochs: c.epochs,
            l2: c.l2,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        PipelineConfig {
            n_members: 4,
            patch_size: 32,
            stride: 32,
            train: TrainConfigSer {
                patch_size: t.patch_size,
                patches_per_stack: t.patches_per_stack,
                pixels_per_patch: t.pixels_per_patch,
                learning_rate: t.learning_rate,
                epochs: t.epochs,
                l2: t.l2,
            },
            agg_patch_size: 16,
            agg_top_k: None,
            thresholds: vec![0.3, 0.5, 0.7],
            region: RegionMatchConfig::default(),
            pixel_subsample: Some(0.1),
            quantum_s: 1.0,
            floor_time_s: 60.0,
        }
    }
}

impl PipelineConfig {
    fn threshold_set(&self) -> Result<ThresholdSet> {
        ThresholdSet::new(self.thresholds.clone())
    }

    fn agg_for(&self, stack: &Stack) -> AggregationConfig {
        match self.agg_top_k {
            Some(k) => AggregationConfig {
                top_k: k,
                patch_size: self.agg_patch_size,
            },
            None => {
                let mut cfg =
                    AggregationConfig::desk_default(stack.n_frames(), stack.height(), stack.width());
                cfg.patch_size = self.agg_patch_size;
                cfg
            }
        }
    }
}

/// Lesion-appearance parameters of the shifted (pool) domain for the wild
/// experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainShift {
    pub intensity_min: f64,
    pub intensity_max: f64,
    pub background_noise_sigma: f64,
}

impl Default for DomainShift {
    fn default() -> Self {
        // shifted-domain lesions are dimmer than anything in the source
        // domain (whose intensities start at 0.3), so the source-trained
        // ensemble under-detects them until it sees labels
        DomainShift {
            intensity_min: 0.22,
            intensity_max: 0.35,
            background_noise_sigma: 0.06,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub data: SyntheticConfig,
    pub pipeline: PipelineConfig,
    /// Initially labeled fraction of the trainval split (core-set mode).
    pub seed_fraction: f64,
    /// Doubling rounds (core-set) or budgeted rounds (cost-sensitive).
    pub rounds: usize,
    /// Per-round budget as a fraction of total pool labeling time.
    pub budget_fraction: f64,
    /// Budget fraction for the single wild round.
    pub wild_budget_fraction: f64,
    pub shift: DomainShift,
    pub replicate_seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::CoreSet,
            data: SyntheticConfig::default(),
            pipeline: PipelineConfig::default(),
            seed_fraction: 1.0 / 32.0,
            rounds: 5,
            budget_fraction: 0.10,
            wild_budget_fraction: 0.20,
            shift: DomainShift::default(),
            replicate_seeds: (0..10).collect(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        if !(self.seed_fraction > 0.0 && self.seed_fraction <= 1.0) {
            return Err(Error::Config("seed_fraction outside (0,1]".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if self.replicate_seeds.is_empty() {
            return Err(Error::Config("need at least one replicate seed".into()));
        }
        self.pipeline.threshold_set()?;
        Ok(())
    }
}

/// One record per (replicate, arm, round).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ALRoundResult {
    pub round: usize,
    pub policy: String,
    pub seed: u64,
    pub budget_allocated_s: f64,
    /// Ground-truth time charged for this round's annotations.
    pub budget_spent_s: f64,
    /// Predicted total time of the selected batch (cost-sensitive modes).
    pub predicted_batch_time_s: f64,
    /// Ground-truth total time of the selected batch before the budget cap.
    pub actual_batch_time_s: f64,
    pub stacks_added: Vec<String>,
    pub labeled_count: usize,
    pub pool_remaining: usize,
    pub labeled_pool_ratio: f64,
    pub metrics: EvalReport,
    /// Wall time is diagnostic only and excluded from serialized results
    /// so re-runs are byte-identical.
    #[serde(skip)]
    pub wall_time_ms: f64,
}

/// Wild-round record: both ensembles evaluated on both test domains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WildOutcome {
    pub seed: u64,
    pub budget_s: f64,
    pub spent_s: f64,
    pub selected: Vec<String>,
    pub baseline_seed_test: EvalReport,
    pub baseline_pool_test: EvalReport,
    pub augmented_seed_test: EvalReport,
    pub augmented_pool_test: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SimOutput {
    Rounds(Vec<ALRoundResult>),
    Wild(Vec<WildOutcome>),
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SimOutput> {
    match cfg.mode {
        Mode::CoreSet => run_core_set(cfg).map(SimOutput::Rounds),
        Mode::CostSensitive => run_cost_sensitive(cfg).map(SimOutput::Rounds),
        Mode::Wild => run_wild(cfg).map(SimOutput::Wild),
    }
}

fn split_off(stacks: &[Stack], split: Split) -> Vec<Stack> {
    stacks.iter().filter(|s| s.split == split).cloned().collect()
}

fn member_seeds(rep: u64, label: &str, n: usize) -> Vec<u64> {
    (0..n)
        .map(|m| subseed(rep, &format!("{label}/member{m}")))
        .collect()
}

fn train(labeled: &[Stack], pc: &PipelineConfig, rep: u64, label: &str) -> Result<Committee> {
    train_committee(
        labeled,
        pc.n_members,
        &member_seeds(rep, label, pc.n_members),
        false,
        &TrainConfig::from(&pc.train),
    )
}

fn committee_mean(committee: &Committee, stack: &Stack, pc: &PipelineConfig) -> Result<HeatmapStack> {
    let heatmaps = committee_predict(committee, stack, pc.patch_size, pc.stride)?;
    mean_heatmap(&heatmaps)
}

fn evaluate_committee(
    committee: &Committee,
    test: &[Stack],
    pc: &PipelineConfig,
    eval_seed: u64,
) -> Result<EvalReport> {
    let preds = util::par_map(test, |s| committee_mean(committee, s, pc));
    let preds = preds.into_iter().collect::<Result<Vec<_>>>()?;
    evaluate(
        &preds,
        test,
        &pc.region,
        pc.pixel_subsample.map(|keep| (keep, eval_seed)),
    )
}

/// Committee uncertainty V_i for one stack.
fn stack_v(committee: &Committee, stack: &Stack, pc: &PipelineConfig) -> Result<f64> {
    let heatmaps = committee_predict(committee, stack, pc.patch_size, pc.stride)?;
    let map = uncertainty_map(&heatmaps)?;
    let agg = pc.agg_for(stack);
    let patches = patch_uncertainties(&map, &agg);
    Ok(stack_uncertainty(&stack.id, &patches, &agg)?.value)
}

/// V_i plus predicted-mask features for one pool stack (single committee
/// pass reused for both).
fn score_pool_stack(
    committee: &Committee,
    stack: &Stack,
    pc: &PipelineConfig,
    thresholds: &ThresholdSet,
) -> Result<(f64, StackFeatures)> {
    let heatmaps = committee_predict(committee, stack, pc.patch_size, pc.stride)?;
    let map = uncertainty_map(&heatmaps)?;
    let agg = pc.agg_for(stack);
    let patches = patch_uncertainties(&map, &agg);
    let v = stack_uncertainty(&stack.id, &patches, &agg)?.value;
    let mean = mean_heatmap(&heatmaps)?;
    let features = stack_features(&mean, thresholds)?;
    Ok((v, features))
}

/// Morphology features of the ground-truth masks (observed at annotation
/// time), the inputs to the cost-model fit.
fn gt_time_sample(stack: &Stack) -> Option<TimeSample> {
    let masks = stack.gt_masks.as_ref()?;
    let t = stack.gt_label_time?;
    let mut b = 0.0;
    let mut m = 0.0;
    for mask in masks {
        b += boundary_length(mask);
        m += connected_components(mask).1 as f64;
    }
    if b > 0.0 && m > 0.0 && t > 0.0 {
        Some(TimeSample { b, m, t })
    } else {
        None
    }
}

fn fit_cost_model(labeled: &[Stack], pc: &PipelineConfig) -> Result<CostModelParams> {
    let samples: Vec<TimeSample> = labeled.iter().filter_map(gt_time_sample).collect();
    cost::fit_with_floor(&samples, pc.floor_time_s)
}

/// Core-set doubling: both arms start from the same seed subset; per round
/// each arm trains, is evaluated, and doubles its labeled set — QBC by
/// descending stack uncertainty, the baseline uniformly at random.
pub fn run_core_set(cfg: &ExperimentConfig) -> Result<Vec<ALRoundResult>> {
    cfg.validate()?;
    let (stacks, _) = generate_synthetic(&cfg.data)?;
    let trainval = split_off(&stacks, Split::SeedTrainval);
    let test = split_off(&stacks, Split::SeedTest);
    if trainval.is_empty() || test.is_empty() {
        return Err(Error::Config("core-set needs trainval and test splits".into()));
    }
    let seed_count = ((trainval.len() as f64 * cfg.seed_fraction).round() as usize).max(1);

    let mut results = Vec::new();
    for &rep in &cfg.replicate_seeds {
        // stratified initial subset: preserve the positive rate so no
        // replicate cold-starts from an all-negative committee
        use rand::seq::SliceRandom;
        let mut rng = util::stage_rng(rep, "core-set/seed-subset");
        let (mut pos_idx, mut neg_idx): (Vec<usize>, Vec<usize>) = (0..trainval.len())
            .partition(|&i| {
                trainval[i]
                    .gt_masks
                    .as_ref()
                    .is_some_and(|ms| ms.iter().any(|m| m.count_ones() > 0))
            });
        pos_idx.shuffle(&mut rng);
        neg_idx.shuffle(&mut rng);
        let pos_share = pos_idx.len() as f64 / trainval.len() as f64;
        let n_pos_seed = ((seed_count as f64 * pos_share).round() as usize)
            .clamp(usize::from(!pos_idx.is_empty()), pos_idx.len().min(seed_count));
        let mut initial: Vec<usize> = pos_idx[..n_pos_seed].to_vec();
        initial.extend(&neg_idx[..seed_count - n_pos_seed]);
        let mut rest: Vec<usize> = pos_idx[n_pos_seed..]
            .iter()
            .chain(&neg_idx[seed_count - n_pos_seed..])
            .copied()
            .collect();
        rest.shuffle(&mut rng);

        for arm in ["qbc", "random"] {
            let mut labeled = initial.clone();
            let mut remaining = rest.clone();
            let mut added_this_round: Vec<String> = Vec::new();
            for round in 0..=cfg.rounds {
                let t0 = std::time::Instant::now();
                // id order, so training is invariant to selection order
                let mut labeled_stacks: Vec<Stack> =
                    labeled.iter().map(|&i| trainval[i].clone()).collect();
                labeled_stacks.sort_by(|a, b| a.id.cmp(&b.id));
                // seeds shared across arms: paired comparisons, and the
                // final full-data round is an exact tie
                let label = format!("core-set/round{round}");
                let committee = train(&labeled_stacks, &cfg.pipeline, rep, &label)?;
                let metrics = evaluate_committee(
                    &committee,
                    &test,
                    &cfg.pipeline,
                    subseed(rep, &format!("{label}/eval")),
                )?;
                results.push(ALRoundResult {
                    round,
                    policy: arm.to_string(),
                    seed: rep,
                    budget_allocated_s: 0.0,
                    budget_spent_s: 0.0,
                    predicted_batch_time_s: 0.0,
                    actual_batch_time_s: 0.0,
                    stacks_added: std::mem::take(&mut added_this_round),
                    labeled_count: labeled.len(),
                    pool_remaining: remaining.len(),
                    labeled_pool_ratio: if remaining.is_empty() {
                        f64::INFINITY
                    } else {
                        labeled.len() as f64 / remaining.len() as f64
                    },
                    metrics,
                    wall_time_ms: t0.elapsed().as_secs_f64() * 1e3,
                });
                if round == cfg.rounds {
                    break;
                }
                if remaining.is_empty() {
                    log::info!("core-set pool exhausted at round {round}; truncating {arm} arm");
                    break;
                }
                let add_n = labeled.len().min(remaining.len());
                let chosen: Vec<usize> = if arm == "qbc" {
                    let scores = util::par_map(&remaining, |&i| {
                        stack_v(&committee, &trainval[i], &cfg.pipeline).map(|v| (i, v))
                    });
                    let mut scores = scores.into_iter().collect::<Result<Vec<_>>>()?;
                    scores.sort_by(|a, b| {
                        b.1.partial_cmp(&a.1)
                            .unwrap()
                            .then_with(|| trainval[a.0].id.cmp(&trainval[b.0].id))
                    });
                    scores[..add_n].iter().map(|(i, _)| *i).collect()
                } else {
                    let mut pick = remaining.clone();
                    pick.shuffle(&mut util::stage_rng(
                        rep,
                        &format!("core-set/random/round{round}/pick"),
                    ));
                    pick[..add_n].to_vec()
                };
                added_this_round = chosen.iter().map(|&i| trainval[i].id.clone()).collect();
                remaining.retain(|i| !chosen.contains(i));
                labeled.extend(chosen);
            }
        }
    }
    Ok(results)
}

/// Budgeted cost-sensitive rounds: the seed set is the full trainval split,
/// the pool is hidden behind the annotation oracle, and each arm spends a
/// per-round budget equal to `budget_fraction` of the pool's total
/// labeling time. Feasibility uses predicted times; annotation charges
/// ground-truth times, capped at the round budget (overruns are logged).
pub fn run_cost_sensitive(cfg: &ExperimentConfig) -> Result<Vec<ALRoundResult>> {
    cfg.validate()?;
    let (stacks, _) = generate_synthetic(&cfg.data)?;
    let trainval = split_off(&stacks, Split::SeedTrainval);
    let test = split_off(&stacks, Split::SeedTest);
    let pool = split_off(&stacks, Split::Pool);
    if trainval.is_empty() || test.is_empty() || pool.is_empty() {
        return Err(Error::Config(
            "cost-sensitive needs trainval, test, and pool splits".into(),
        ));
    }
    let thresholds = cfg.pipeline.threshold_set()?;

    let arms: [(&str, Policy); 3] = [
        ("cal", Policy::Knapsack),
        ("ual", Policy::Ual),
        ("random", Policy::Random),
    ];
    let mut results = Vec::new();
    for &rep in &cfg.replicate_seeds {
        for (arm, policy) in arms {
            let (oracle, mut pool_open) = AnnotationOracle::take(pool.clone())?;
            let round_budget = cfg.budget_fraction * oracle.total_time();
            let mut labeled = trainval.clone();
            let mut spent_round;
            let mut added_this_round: Vec<String> = Vec::new();
            let mut batch_pred = 0.0;
            let mut batch_actual = 0.0;
            let mut budget_spent = 0.0;
            for round in 0..=cfg.rounds {
                let t0 = std::time::Instant::now();
                let label = format!("cost/round{round}");
                let committee = train(&labeled, &cfg.pipeline, rep, &label)?;
                let metrics = evaluate_committee(
                    &committee,
                    &test,
                    &cfg.pipeline,
                    subseed(rep, &format!("{label}/eval")),
                )?;
                results.push(ALRoundResult {
                    round,
                    policy: arm.to_string(),
                    seed: rep,
                    budget_allocated_s: if round == 0 { 0.0 } else { round_budget },
                    budget_spent_s: budget_spent,
                    predicted_batch_time_s: batch_pred,
                    actual_batch_time_s: batch_actual,
                    stacks_added: std::mem::take(&mut added_this_round),
                    labeled_count: labeled.len(),
                    pool_remaining: pool_open.len(),
                    labeled_pool_ratio: if pool_open.is_empty() {
                        f64::INFINITY
                    } else {
                        labeled.len() as f64 / pool_open.len() as f64
                    },
                    metrics,
                    wall_time_ms: t0.elapsed().as_secs_f64() * 1e3,
                });
                if round == cfg.rounds || pool_open.is_empty() {
                    break;
                }

                let params = fit_cost_model(&labeled, &cfg.pipeline)?;
                let scored = util::par_map(&pool_open, |s| {
                    score_pool_stack(&committee, s, &cfg.pipeline, &thresholds)
                        .and_then(|(v, feats)| {
                            let t = cost::predict(&params, &feats)?;
                            Ok(SelectionItem {
                                stack_id: s.id.clone(),
                                value: v,
                                time_s: t,
                            })
                        })
                });
                let items = scored.into_iter().collect::<Result<Vec<_>>>()?;
                let budget = Budget::new(round_budget, cfg.pipeline.quantum_s)?;
                let selection = select(
                    policy,
                    &items,
                    &budget,
                    subseed(rep, &format!("{label}/select")),
                )?;
                batch_pred = selection.total_time_s;
                batch_actual = 0.0;
                spent_round = 0.0;
                for id in &selection.stack_ids {
                    let (masks, t) = oracle.reveal(id)?;
                    batch_actual += t;
                    if spent_round + t > round_budget {
                        log::info!(
                            "{arm} round {round}: budget overrun, skipping {id} ({t:.0}s over cap)"
                        );
                        continue;
                    }
                    spent_round += t;
                    let pos = pool_open
                        .iter()
                        .position(|s| &s.id == id)
                        .expect("selected id in open pool");
                    let mut stack = pool_open.swap_remove(pos);
                    stack.gt_masks = Some(masks);
                    stack.gt_label_time = Some(t);
                    labeled.push(stack);
                    added_this_round.push(id.clone());
                }
                budget_spent = spent_round;
                labeled.sort_by(|a, b| a.id.cmp(&b.id));
                pool_open.sort_by(|a, b| a.id.cmp(&b.id));
            }
        }
    }
    Ok(results)
}

/// One cost-sensitive round against a domain-shifted pool: train the
/// baseline ensemble on the full seed trainval, select from the shifted
/// pool under the wild budget, retrain with the annotations (same member
/// seeds), and report both ensembles on both test domains.
pub fn run_wild(cfg: &ExperimentConfig) -> Result<Vec<WildOutcome>> {
    cfg.validate()?;
    let (seed_stacks, _) = generate_synthetic(&cfg.data)?;
    let trainval = split_off(&seed_stacks, Split::SeedTrainval);
    let seed_test = split_off(&seed_stacks, Split::SeedTest);

    let mut pool_cfg = cfg.data.clone();
    pool_cfg.lesion.intensity_min = cfg.shift.intensity_min;
    pool_cfg.lesion.intensity_max = cfg.shift.intensity_max;
    pool_cfg.background_noise_sigma = cfg.shift.background_noise_sigma;
    pool_cfg.master_seed = subseed(cfg.data.master_seed, "wild/pool-domain");
    pool_cfg.n_trainval = 0;
    pool_cfg.n_test = 0;
    if pool_cfg.n_pool_test == 0 {
        pool_cfg.n_pool_test = cfg.data.n_test;
    }
    let (pool_stacks, _) = generate_synthetic(&pool_cfg)?;
    let pool = split_off(&pool_stacks, Split::Pool);
    let pool_test = split_off(&pool_stacks, Split::PoolTest);
    if trainval.is_empty() || seed_test.is_empty() || pool.is_empty() || pool_test.is_empty() {
        return Err(Error::Config("wild mode needs all four splits".into()));
    }
    let thresholds = cfg.pipeline.threshold_set()?;

    let mut outcomes = Vec::new();
    for &rep in &cfg.replicate_seeds {
        let label = "wild/ensemble";
        let baseline = train(&trainval, &cfg.pipeline, rep, label)?;
        let baseline_seed_test = evaluate_committee(
            &baseline,
            &seed_test,
            &cfg.pipeline,
            subseed(rep, "wild/base/eval-seed"),
        )?;
        let baseline_pool_test = evaluate_committee(
            &baseline,
            &pool_test,
            &cfg.pipeline,
            subseed(rep, "wild/base/eval-pool"),
        )?;

        let (oracle, mut pool_open) = AnnotationOracle::take(pool.clone())?;
        let budget_s = cfg.wild_budget_fraction * oracle.total_time();
        let mut labeled = trainval.clone();
        let mut selected = Vec::new();
        let mut spent_s = 0.0;
        if budget_s > 0.0 {
            let params = fit_cost_model(&labeled, &cfg.pipeline)?;
            let scored = util::par_map(&pool_open, |s| {
                score_pool_stack(&baseline, s, &cfg.pipeline, &thresholds).and_then(|(v, feats)| {
                    let t = cost::predict(&params, &feats)?;
                    Ok(SelectionItem {
                        stack_id: s.id.clone(),
                        value: v,
                        time_s: t,
                    })
                })
            });
            let items = scored.into_iter().collect::<Result<Vec<_>>>()?;
            let budget = Budget::new(budget_s, cfg.pipeline.quantum_s)?;
            let selection = select(
                Policy::Knapsack,
                &items,
                &budget,
                subseed(rep, "wild/select"),
            )?;
            for id in &selection.stack_ids {
                let (masks, t) = oracle.reveal(id)?;
                if spent_s + t > budget_s {
                    log::info!("wild round: budget overrun, skipping {id}");
                    continue;
                }
                spent_s += t;
                let pos = pool_open
                    .iter()
                    .position(|s| &s.id == id)
                    .expect("selected id in open pool");
                let mut stack = pool_open.swap_remove(pos);
                stack.gt_masks = Some(masks);
                stack.gt_label_time = Some(t);
                labeled.push(stack);
                selected.push(id.clone());
            }
            labeled.sort_by(|a, b| a.id.cmp(&b.id));
        }

        // same member seeds: a zero budget reproduces the baseline exactly
        let augmented = train(&labeled, &cfg.pipeline, rep, label)?;
        let augmented_seed_test = evaluate_committee(
            &augmented,
            &seed_test,
            &cfg.pipeline,
            subseed(rep, "wild/base/eval-seed"),
        )?;
        let augmented_pool_test = evaluate_committee(
            &augmented,
            &pool_test,
            &cfg.pipeline,
            subseed(rep, "wild/base/eval-pool"),
        )?;

        outcomes.push(WildOutcome {
            seed: rep,
            budget_s,
            spent_s,
            selected,
            baseline_seed_test,
            baseline_pool_test,
            augmented_seed_test,
            augmented_pool_test,
        });
    }
    Ok(outcomes)
}
