//! Access-guarded annotation oracle. Pool ground truth lives only here;
//! a reveal is recorded, so tests can assert nothing was read before its
//! stack was selected.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use crate::data::{BinaryMask, Stack};
use crate::error::{Error, Result};

pub struct AnnotationOracle {
    hidden: BTreeMap<String, (Vec<BinaryMask>, f64)>,
    revealed: Mutex<BTreeSet<String>>,
}

impl AnnotationOracle {
    /// Take custody of the pool's ground truth, returning stripped stacks.
    pub fn take(pool: Vec<Stack>) -> Result<(Self, Vec<Stack>)> {
        let mut hidden = BTreeMap::new();
        let mut stripped = Vec::with_capacity(pool.len());
        for stack in pool {
            let masks = stack
                .gt_masks
                .clone()
                .ok_or_else(|| Error::Invariant(format!("pool stack {} has no masks", stack.id)))?;
            let time = stack.gt_label_time.ok_or_else(|| {
                Error::Invariant(format!("pool stack {} has no labeling time", stack.id))
            })?;
            hidden.insert(stack.id.clone(), (masks, time));
            stripped.push(stack.without_ground_truth());
        }
        Ok((
            AnnotationOracle {
                hidden,
                revealed: Mutex::new(BTreeSet::new()),
            },
            stripped,
        ))
    }

    /// Total pool labeling time. An experiment-design constant (the budget
    /// is defined as a fraction of it), not a per-stack reveal.
    pub fn total_time(&self) -> f64 {
        self.hidden.values().map(|(_, t)| t).sum()
    }

    pub fn len(&self) -> usize {
        self.hidden.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.is_empty()
    }

    /// Annotate one stack: returns its masks and true labeling time and
    /// records the reveal.
    pub fn reveal(&self, stack_id: &str) -> Result<(Vec<BinaryMask>, f64)> {
        let (masks, time) = self
            .hidden
            .get(stack_id)
            .ok_or_else(|| Error::Invariant(format!("unknown pool stack {stack_id}")))?;
        self.revealed
            .lock()
            .expect("oracle lock")
            .insert(stack_id.to_string());
        Ok((masks.clone(), *time))
    }

    pub fn revealed_ids(&self) -> BTreeSet<String> {
        self.revealed.lock().expect("oracle lock").clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Frame, Split};

    fn pool_stack(id: &str) -> Stack {
        Stack {
            id: id.into(),
            frames: vec![Frame::zeros(4, 4)],
            gt_masks: Some(vec![BinaryMask::zeros(4, 4)]),
            gt_label_time: Some(30.0),
            split: Split::Pool,
        }
    }

    #[test]
    fn stripped_stacks_carry_no_ground_truth() {
        let (oracle, stripped) = AnnotationOracle::take(vec![pool_stack("a"), pool_stack("b")]).unwrap();
        for s in &stripped {
            assert!(s.gt_masks.is_none());
            assert!(s.gt_label_time.is_none());
        }
        assert_eq!(oracle.total_time(), 60.0);
        assert!(oracle.revealed_ids().is_empty());
    }

    #[test]
    fn reveal_records_access() {
        let (oracle, _) = AnnotationOracle::take(vec![pool_stack("a")]).unwrap();
        let (_, t) = oracle.reveal("a").unwrap();
        assert_eq!(t, 30.0);
        assert!(oracle.revealed_ids().contains("a"));
        assert!(oracle.reveal("zzz").is_err());
    }
}
