//! One function per subcommand. Every command writes its artifacts under
//! the output directory and never mutates its inputs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;

use csal_core::committee::{
    committee_predict, load_checkpoint, save_checkpoint, train_committee, Committee, TrainConfig,
};
use csal_core::cost;
use csal_core::data::{
    load_raw_maps, save_raw_maps, save_stack, DatasetManifest, HeatmapStack, Split, Stack,
};
use csal_core::heatmap::{connected_components, stack_features, threshold, ThresholdSet};
use csal_core::selection::{select, Budget, Policy, SelectionItem};
use csal_core::sim::{self, generate_synthetic, PipelineConfig, SimOutput};
use csal_core::uncertainty::{
    patch_uncertainties, stack_uncertainty, uncertainty_map, AggregationConfig,
};
use csal_core::util::{self, subseed};

use crate::config::RunConfig;

fn ensure_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn load_split(manifest: &Path, split: Split) -> Result<Vec<Stack>> {
    let manifest = DatasetManifest::load(manifest)?;
    let stacks = csal_core::data::load_dataset(&manifest)?;
    Ok(stacks.into_iter().filter(|s| s.split == split).collect())
}

fn load_model(dir: &Path, pc: &PipelineConfig) -> Result<Committee> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading model dir {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().map_or(false, |e| e == "alpr")
                && p.file_stem()
                    .and_then(|s| s.to_str())
                    .map_or(false, |s| s.starts_with("member"))
        })
        .collect();
    paths.sort();
    if paths.len() < 2 {
        bail!(
            "model dir {} holds {} member checkpoints, need >= 2",
            dir.display(),
            paths.len()
        );
    }
    if paths.len() != pc.n_members {
        log::warn!(
            "model dir has {} members, config says {}; using the checkpoints",
            paths.len(),
            pc.n_members
        );
    }
    let members = paths
        .iter()
        .map(|p| load_checkpoint(p))
        .collect::<csal_core::Result<Vec<_>>>()?;
    Ok(Committee { members })
}

fn mean_heatmap_of(committee: &Committee, stack: &Stack, pc: &PipelineConfig) -> Result<HeatmapStack> {
    let maps = committee_predict(committee, stack, pc.patch_size, pc.stride)?;
    Ok(csal_core::heatmap::mean_heatmap(&maps)?)
}

/// `gen`: synthesize the dataset, one container per stack plus the
/// manifest.
pub fn gen(cfg: &RunConfig, out: &Path) -> Result<()> {
    ensure_out(out)?;
    let (stacks, manifest) = generate_synthetic(&cfg.experiment.data)?;
    for stack in &stacks {
        save_stack(stack, &out.join(format!("{}.alst", stack.id)))?;
    }
    manifest.save(&out.join("manifest.csv"))?;
    log::info!("wrote {} stacks to {}", stacks.len(), out.display());
    Ok(())
}

/// `train`: fit the committee on one split and write member checkpoints.
pub fn train(cfg: &RunConfig, out: &Path, manifest: &Path, split: Split) -> Result<()> {
    ensure_out(out)?;
    let stacks = load_split(manifest, split)?;
    if stacks.is_empty() {
        bail!("no stacks in split {}", split.as_str());
    }
    let pc = &cfg.experiment.pipeline;
    let seeds: Vec<u64> = (0..pc.n_members)
        .map(|m| subseed(cfg.seed, &format!("train/member{m}")))
        .collect();
    let committee = train_committee(
        &stacks,
        pc.n_members,
        &seeds,
        false,
        &TrainConfig::from(&pc.train),
    )?;
    for (i, member) in committee.members.iter().enumerate() {
        save_checkpoint(member, &out.join(format!("member{i}.alpr")))?;
    }
    log::info!(
        "trained {} members on {} stacks",
        committee.n_members(),
        stacks.len()
    );
    Ok(())
}

/// `predict`: committee-mean heatmaps for one split, one container per
/// stack.
pub fn predict(cfg: &RunConfig, out: &Path, manifest: &Path, model: &Path, split: Split) -> Result<()> {
    ensure_out(out)?;
    let pc = &cfg.experiment.pipeline;
    let stacks = load_split(manifest, split)?;
    let committee = load_model(model, pc)?;
    let means = util::par_map(&stacks, |s| mean_heatmap_of(&committee, s, pc));
    for mean in means {
        let mean = mean?;
        save_raw_maps(&mean, &out.join(format!("{}.heat.alst", mean.stack_id)))?;
    }
    log::info!("wrote {} heatmaps", stacks.len());
    Ok(())
}

/// `uncertainty`: per-stack committee disagreement; CSV of V values plus
/// optional per-pixel divergence maps.
pub fn uncertainty(
    cfg: &RunConfig,
    out: &Path,
    manifest: &Path,
    model: &Path,
    split: Split,
    write_maps: bool,
) -> Result<()> {
    ensure_out(out)?;
    let pc = &cfg.experiment.pipeline;
    let stacks = load_split(manifest, split)?;
    let committee = load_model(model, pc)?;
    let rows = util::par_map(&stacks, |s| -> Result<(String, f64)> {
        let maps = committee_predict(&committee, s, pc.patch_size, pc.stride)?;
        let map = uncertainty_map(&maps)?;
        let agg = agg_for(pc, s);
        let patches = patch_uncertainties(&map, &agg);
        let v = stack_uncertainty(&s.id, &patches, &agg)?.value;
        if write_maps {
            let hs = HeatmapStack {
                stack_id: s.id.clone(),
                maps: map.frames,
            };
            save_raw_maps(&hs, &out.join(format!("{}.js.alst", s.id)))?;
        }
        Ok((s.id.clone(), v))
    });
    let mut csv = String::from("stack_id,value\n");
    for row in rows {
        let (id, v) = row?;
        csv.push_str(&format!("{id},{v}\n"));
    }
    std::fs::write(out.join("uncertainty.csv"), csv)?;
    Ok(())
}

fn agg_for(pc: &PipelineConfig, stack: &Stack) -> AggregationConfig {
    match pc.agg_top_k {
        Some(k) => AggregationConfig {
            top_k: k,
            patch_size: pc.agg_patch_size,
        },
        None => {
            let mut a =
                AggregationConfig::desk_default(stack.n_frames(), stack.height(), stack.width());
            a.patch_size = pc.agg_patch_size;
            a
        }
    }
}

/// `features`: predicted-mask morphology per stack, averaged over the
/// threshold set, with per-threshold columns.
pub fn features(cfg: &RunConfig, out: &Path, manifest: &Path, model: &Path, split: Split) -> Result<()> {
    ensure_out(out)?;
    let pc = &cfg.experiment.pipeline;
    let thresholds = ThresholdSet::new(pc.thresholds.clone())?;
    let stacks = load_split(manifest, split)?;
    let committee = load_model(model, pc)?;
    let feats = util::par_map(&stacks, |s| {
        mean_heatmap_of(&committee, s, pc).and_then(|m| Ok(stack_features(&m, &thresholds)?))
    });
    let mut header = String::from("stack_id,b,m");
    for tau in thresholds.values() {
        header.push_str(&format!(",b_{tau},m_{tau}"));
    }
    let mut csv = header + "\n";
    for f in feats {
        let f = f?;
        csv.push_str(&format!("{},{},{}", f.stack_id, f.boundary_length, f.component_count));
        for (_, b, m) in &f.per_threshold {
            csv.push_str(&format!(",{b},{m}"));
        }
        csv.push('\n');
    }
    std::fs::write(out.join("features.csv"), csv)?;
    Ok(())
}

/// `fit-cost`: OLS on a `stack_id,B,M,t_seconds` CSV; JSON params plus a
/// residual table.
pub fn fit_cost(out: &Path, input: &Path, floor_time: f64) -> Result<()> {
    ensure_out(out)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(input)
        .with_context(|| format!("reading {}", input.display()))?;
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() < 4 {
            bail!("expected 4 columns stack_id,B,M,t_seconds, got {}", record.len());
        }
        samples.push(cost::TimeSample {
            b: record[1].parse().context("bad B field")?,
            m: record[2].parse().context("bad M field")?,
            t: record[3].parse().context("bad t_seconds field")?,
        });
    }
    let params = cost::fit_with_floor(&samples, floor_time)?;
    let report = cost::diagnostics_report(&params, &samples)?;
    let summary = json!({
        "alpha": params.alpha,
        "beta": params.beta,
        "gamma": params.gamma,
        "floor_time": params.floor_time,
        "r2": params.diagnostics.r_squared,
        "sigma": params.diagnostics.sigma,
        "n": params.diagnostics.n,
    });
    std::fs::write(
        out.join("cost_params.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    std::fs::write(out.join("cost_residuals.csv"), report.to_csv())?;
    log::info!(
        "fit n={} alpha={:.4} beta={:.4} gamma={:.4} r2={:.4}",
        params.diagnostics.n,
        params.alpha,
        params.beta,
        params.gamma,
        params.diagnostics.r_squared
    );
    Ok(())
}

/// `select`: budgeted batch selection over a `stack_id,value,time_s` CSV.
pub fn run_select(
    out: &Path,
    items_path: &Path,
    budget_s: f64,
    quantum_s: f64,
    policy: Policy,
    seed: u64,
) -> Result<()> {
    ensure_out(out)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(items_path)
        .with_context(|| format!("reading {}", items_path.display()))?;
    let mut items = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() < 3 {
            bail!("expected 3 columns stack_id,value,time_s, got {}", record.len());
        }
        items.push(SelectionItem {
            stack_id: record[0].to_string(),
            value: record[1].parse().context("bad value field")?,
            time_s: record[2].parse().context("bad time_s field")?,
        });
    }
    let budget = Budget::new(budget_s, quantum_s)?;
    let result = select(policy, &items, &budget, seed)?;
    std::fs::write(
        out.join("selection.json"),
        serde_json::to_string_pretty(&result)? + "\n",
    )?;
    log::info!(
        "selected {} of {} items, value {:.4}, time {:.1}s",
        result.stack_ids.len(),
        items.len(),
        result.total_value,
        result.total_time_s
    );
    Ok(())
}

/// `simulate`: full experiment; JSON-lines records plus a learning-curve
/// CSV.
pub fn simulate(cfg: &RunConfig, out: &Path) -> Result<()> {
    ensure_out(out)?;
    match sim::run_experiment(&cfg.experiment)? {
        SimOutput::Rounds(rounds) => {
            let mut jsonl = String::new();
            let mut csv = String::from(
                "round,policy,seed,labeled_count,budget_spent_s,pixel_ap,region_ap,frame_ap,stack_ap\n",
            );
            for r in &rounds {
                jsonl.push_str(&serde_json::to_string(r)?);
                jsonl.push('\n');
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    r.round,
                    r.policy,
                    r.seed,
                    r.labeled_count,
                    r.budget_spent_s,
                    r.metrics.pixel_ap,
                    r.metrics.region_ap,
                    r.metrics.frame_ap,
                    r.metrics.stack_ap
                ));
            }
            std::fs::write(out.join("rounds.jsonl"), jsonl)?;
            std::fs::write(out.join("curves.csv"), csv)?;
            log::info!("wrote {} round records", rounds.len());
        }
        SimOutput::Wild(outcomes) => {
            let mut jsonl = String::new();
            let mut csv = String::from(
                "seed,budget_s,spent_s,n_selected,baseline_pool_stack_ap,augmented_pool_stack_ap,baseline_seed_pixel_ap,augmented_seed_pixel_ap\n",
            );
            for o in &outcomes {
                jsonl.push_str(&serde_json::to_string(o)?);
                jsonl.push('\n');
                csv.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    o.seed,
                    o.budget_s,
                    o.spent_s,
                    o.selected.len(),
                    o.baseline_pool_test.stack_ap,
                    o.augmented_pool_test.stack_ap,
                    o.baseline_seed_test.pixel_ap,
                    o.augmented_seed_test.pixel_ap
                ));
            }
            std::fs::write(out.join("outcomes.jsonl"), jsonl)?;
            std::fs::write(out.join("curves.csv"), csv)?;
            log::info!("wrote {} wild outcomes", outcomes.len());
        }
    }
    Ok(())
}

/// `eval`: score saved heatmaps (`<id>.heat.alst`) against a split's
/// ground truth at all four levels.
pub fn eval(cfg: &RunConfig, out: &Path, manifest: &Path, pred_dir: &Path, split: Split) -> Result<()> {
    ensure_out(out)?;
    let pc = &cfg.experiment.pipeline;
    let stacks = load_split(manifest, split)?;
    if stacks.is_empty() {
        bail!("no stacks in split {}", split.as_str());
    }
    let preds = stacks
        .iter()
        .map(|s| {
            let path = pred_dir.join(format!("{}.heat.alst", s.id));
            load_raw_maps(&path)
        })
        .collect::<csal_core::Result<Vec<_>>>()?;
    let eval_seed = subseed(cfg.seed, "eval/pixel-subsample");
    let report = csal_core::metrics::evaluate(
        &preds,
        &stacks,
        &pc.region,
        pc.pixel_subsample.map(|keep| (keep, eval_seed)),
    )?;

    // instance counts per level, for the report's denominator context
    let mut pixel_pos = 0usize;
    let mut pixel_total = 0usize;
    let mut frame_pos = 0usize;
    let mut frame_total = 0usize;
    let mut stack_pos = 0usize;
    let mut gt_regions = 0usize;
    let mut pred_regions = 0usize;
    for (pred, stack) in preds.iter().zip(&stacks) {
        let masks = stack.gt_masks.as_ref().expect("eval split has masks");
        for mask in masks {
            let ones = mask.count_ones();
            pixel_pos += ones;
            pixel_total += mask.height() * mask.width();
            frame_total += 1;
            if ones > 0 {
                frame_pos += 1;
            }
            gt_regions += connected_components(mask).1;
        }
        if masks.iter().any(|m| m.count_ones() > 0) {
            stack_pos += 1;
        }
        for map in &pred.maps {
            let binary = threshold(map, pc.region.detection_threshold)?;
            pred_regions += connected_components(&binary).1;
        }
    }
    let summary = json!({
        "pixel": { "ap": report.pixel_ap, "n_pos": pixel_pos, "n_instances": pixel_total },
        "region": { "ap": report.region_ap, "n_pos": gt_regions, "n_instances": pred_regions },
        "frame": { "ap": report.frame_ap, "n_pos": frame_pos, "n_instances": frame_total },
        "stack": { "ap": report.stack_ap, "n_pos": stack_pos, "n_instances": stacks.len() },
    });
    std::fs::write(
        out.join("eval.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    log::info!(
        "pixel {:.4} region {:.4} frame {:.4} stack {:.4} over {} stacks",
        report.pixel_ap,
        report.region_ap,
        report.frame_ap,
        report.stack_ap,
        stacks.len()
    );
    Ok(())
}
