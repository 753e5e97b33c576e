//! Budget-constrained batch selection: exact 0-1 knapsack over
//! (uncertainty value, predicted time), plus the comparison policies
//! (uniform-cost, random, greedy value/time ratio).
//!
//! Times are discretized with ceiling rounding, so a knapsack-feasible
//! set can never overrun the real budget.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionItem {
    pub stack_id: String,
    /// Stack uncertainty V_i, bits.
    pub value: f64,
    /// Predicted labeling time T_i, seconds.
    pub time_s: f64,
}

impl SelectionItem {
    pub fn validate(&self) -> Result<()> {
        if !(self.time_s > 0.0) {
            return Err(Error::Invariant(format!(
                "item {} has nonpositive time {}",
                self.stack_id, self.time_s
            )));
        }
        if !(self.value >= 0.0) {
            return Err(Error::Invariant(format!(
                "item {} has negative value {}",
                self.stack_id, self.value
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub seconds: f64,
    /// DP discretization step, seconds.
    pub quantum: f64,
    /// Guard on DP table size (items x capacity cells).
    pub max_cells: u64,
}

pub const DEFAULT_MAX_CELLS: u64 = 10_000_000;

impl Budget {
    pub fn new(seconds: f64, quantum: f64) -> Result<Self> {
        Self::with_ceiling(seconds, quantum, DEFAULT_MAX_CELLS)
    }

    pub fn with_ceiling(seconds: f64, quantum: f64, max_cells: u64) -> Result<Self> {
        if !(seconds >= 0.0) {
            return Err(Error::Config(format!("budget {seconds}s must be >= 0")));
        }
        if !(quantum > 0.0) {
            return Err(Error::Config(format!("quantum {quantum}s must be > 0")));
        }
        Ok(Budget {
            seconds,
            quantum,
            max_cells,
        })
    }

    fn capacity(&self) -> u64 {
        (self.seconds / self.quantum).floor() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub stack_ids: Vec<String>,
    pub total_value: f64,
    /// Sum of the undiscretized item times.
    pub total_time_s: f64,
    pub policy: String,
}

impl SelectionResult {
    fn from_chosen(mut chosen: Vec<&SelectionItem>, policy: &str) -> Self {
        chosen.sort_by(|a, b| a.stack_id.cmp(&b.stack_id));
        // fold from +0.0: the std float Sum identity is -0.0, which leaks
        // into serialized output for empty selections
        SelectionResult {
            total_value: chosen.iter().fold(0.0, |acc, i| acc + i.value),
            total_time_s: chosen.iter().fold(0.0, |acc, i| acc + i.time_s),
            stack_ids: chosen.into_iter().map(|i| i.stack_id.clone()).collect(),
            policy: policy.to_string(),
        }
    }
}

fn validate_items(items: &[SelectionItem]) -> Result<()> {
    if items.is_empty() {
        return Err(Error::Config("no items to select from".into()));
    }
    for i in items {
        i.validate()?;
    }
    Ok(())
}

/// Exact DP solution of the discretized instance. Weights are
/// ceil(T_i / quantum); capacity is floor(Q / quantum). Ties between
/// equal-value subsets are broken deterministically by preferring to skip
/// later items in stack_id order.
pub fn knapsack_select(items: &[SelectionItem], budget: &Budget) -> Result<SelectionResult> {
    validate_items(items)?;
    let capacity = budget.capacity();

    // stable item ordering for deterministic reconstruction
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[a].stack_id.cmp(&items[b].stack_id));

    let cells = (items.len() as u128) * (capacity as u128 + 1);
    if cells > u128::from(budget.max_cells) {
        return Err(Error::CapacityCeiling {
            cells,
            ceiling: budget.max_cells,
            quantum: budget.quantum,
        });
    }

    let cap = capacity as usize;
    let weights: Vec<u64> = order
        .iter()
        .map(|&i| (items[i].time_s / budget.quantum).ceil() as u64)
        .collect();

    let mut best = vec![0.0f64; cap + 1];
    // per-item take bits for reconstruction
    let mut take = vec![false; items.len() * (cap + 1)];
    for (k, &w) in weights.iter().enumerate() {
        let w = w as usize;
        if w > cap {
            continue;
        }
        let value = items[order[k]].value;
        let row = &mut take[k * (cap + 1)..(k + 1) * (cap + 1)];
        for c in (w..=cap).rev() {
            let candidate = best[c - w] + value;
            if candidate > best[c] {
                best[c] = candidate;
                row[c] = true;
            }
        }
    }

    let mut chosen = Vec::new();
    let mut c = cap;
    for k in (0..weights.len()).rev() {
        if take[k * (cap + 1) + c] {
            chosen.push(&items[order[k]]);
            c -= weights[k] as usize;
        }
    }
    Ok(SelectionResult::from_chosen(chosen, "knapsack"))
}

/// Uniform-cost AL baseline: take items in descending uncertainty order
/// until one no longer fits, then stop (no skipping). Reproduces the
/// bias toward few expensive stacks.
pub fn uniform_cost_select(items: &[SelectionItem], budget: &Budget) -> Result<SelectionResult> {
    validate_items(items)?;
    let mut order: Vec<&SelectionItem> = items.iter().collect();
    order.sort_by(|a, b| {
        b.value
            .partial_cmp(&a.value)
            .unwrap()
            .then_with(|| a.stack_id.cmp(&b.stack_id))
    });
    let mut chosen = Vec::new();
    let mut spent = 0.0;
    for item in order {
        if spent + item.time_s > budget.seconds {
            break;
        }
        spent += item.time_s;
        chosen.push(item);
    }
    Ok(SelectionResult::from_chosen(chosen, "ual"))
}

/// Random baseline: seeded uniform permutation, add every item that still
/// fits.
pub fn random_select(
    items: &[SelectionItem],
    budget: &Budget,
    seed: u64,
) -> Result<SelectionResult> {
    validate_items(items)?;
    let mut order: Vec<usize> = (0..items.len()).collect();
    // permutation must not depend on caller's item order
    order.sort_by(|&a, &b| items[a].stack_id.cmp(&items[b].stack_id));
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut chosen = Vec::new();
    let mut spent = 0.0;
    for i in order {
        if spent + items[i].time_s <= budget.seconds {
            spent += items[i].time_s;
            chosen.push(&items[i]);
        }
    }
    Ok(SelectionResult::from_chosen(chosen, "random"))
}

/// Greedy value/time ratio fallback, used when the DP table would exceed
/// its memory ceiling. Never beats the exact DP value.
pub fn greedy_ratio_select(items: &[SelectionItem], budget: &Budget) -> Result<SelectionResult> {
    validate_items(items)?;
    let mut order: Vec<&SelectionItem> = items.iter().collect();
    order.sort_by(|a, b| {
        (b.value / b.time_s)
            .partial_cmp(&(a.value / a.time_s))
            .unwrap()
            .then_with(|| a.stack_id.cmp(&b.stack_id))
    });
    let mut chosen = Vec::new();
    let mut spent = 0.0;
    for item in order {
        if spent + item.time_s <= budget.seconds {
            spent += item.time_s;
            chosen.push(item);
        }
    }
    Ok(SelectionResult::from_chosen(chosen, "greedy"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Knapsack,
    Ual,
    Random,
    Greedy,
}

impl std::str::FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knapsack" => Ok(Policy::Knapsack),
            "ual" => Ok(Policy::Ual),
            "random" => Ok(Policy::Random),
            "greedy" => Ok(Policy::Greedy),
            other => Err(Error::Config(format!("unknown policy {other:?}"))),
        }
    }
}

/// Policy dispatch. A knapsack run that trips the DP memory guard falls
/// back to the greedy ratio with a logged warning instead of failing.
pub fn select(
    policy: Policy,
    items: &[SelectionItem],
    budget: &Budget,
    seed: u64,
) -> Result<SelectionResult> {
    match policy {
        Policy::Knapsack => match knapsack_select(items, budget) {
            Err(Error::CapacityCeiling {
                cells,
                ceiling,
                quantum,
            }) => {
                log::warn!(
                    "knapsack DP needs {cells} cells (> {ceiling}); falling back to greedy ratio, consider raising the quantum ({quantum}s)"
                );
                let mut r = greedy_ratio_select(items, budget)?;
                r.policy = "knapsack(greedy-fallback)".into();
                Ok(r)
            }
            other => other,
        },
        Policy::Ual => uniform_cost_select(items, budget),
        Policy::Random => random_select(items, budget, seed),
        Policy::Greedy => greedy_ratio_select(items, budget),
    }
}

#[cfg(test)]
pub(crate) fn brute_force_best_value(items: &[SelectionItem], budget_s: f64) -> f64 {
    let n = items.len();
    assert!(n <= 20);
    let mut best = 0.0f64;
    for mask in 0u32..(1 << n) {
        let mut v = 0.0;
        let mut t = 0.0;
        for (i, item) in items.iter().enumerate() {
            if mask & (1 << i) != 0 {
                v += item.value;
                t += item.time_s;
            }
        }
        if t <= budget_s && v > best {
            best = v;
        }
    }
    best
}
