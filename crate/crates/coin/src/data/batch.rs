//! Training batch assembly: same-instruction groups where every other
//! in-batch sample with a different output serves as a hard negative.

use super::{AugmentedInstance, DataError};
use std::collections::{BTreeMap, VecDeque};

/// A batch of anchors sharing one rendered instruction, with per-anchor
/// negative index sets `{ j ≠ i : output_j ≠ output_i }`.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub members: Vec<AugmentedInstance>,
    pub negative_sets: Vec<Vec<usize>>,
}

impl TrainBatch {
    fn build(members: Vec<AugmentedInstance>) -> Self {
        let negative_sets = members
            .iter()
            .enumerate()
            .map(|(i, a)| {
                members
                    .iter()
                    .enumerate()
                    .filter(|(j, b)| *j != i && b.output != a.output)
                    .map(|(j, _)| j)
                    .collect()
            })
            .collect();
        TrainBatch { members, negative_sets }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let instr = &self.members[0].instruction;
        if !self.members.iter().all(|m| &m.instruction == instr) {
            return Err(DataError::InvariantViolation {
                id: self.members[0].id.clone(),
                detail: "batch mixes instructions".into(),
            });
        }
        for (i, negs) in self.negative_sets.iter().enumerate() {
            if negs.is_empty() {
                return Err(DataError::InvariantViolation {
                    id: self.members[i].id.clone(),
                    detail: "anchor has no in-batch negative".into(),
                });
            }
            for &j in negs {
                if j == i || self.members[j].output == self.members[i].output {
                    return Err(DataError::InvariantViolation {
                        id: self.members[i].id.clone(),
                        detail: "negative set contains self or an equal-output entry".into(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// Batches plus the count of anchors dropped because no mixed-output batch
/// could be formed for them.
#[derive(Debug)]
pub struct BatchAssembly {
    pub batches: Vec<TrainBatch>,
    pub dropped: usize,
}

/// Packs rows into same-instruction batches of at most `batch_size`. A
/// batch seeds with the next unused anchor, pulls in the entry its
/// `negative_id` points to when still available, then fills from the group
/// queue. Batches whose outputs would be homogeneous swap in the first
/// differing entry from the queue (deferring the displaced one); anchors
/// left without any possible different-output peer are dropped and counted.
pub fn assemble_batches(
    rows: &[AugmentedInstance],
    batch_size: usize,
) -> Result<BatchAssembly, DataError> {
    if batch_size < 2 {
        return Err(DataError::BadParam(format!(
            "batch_size must be at least 2, got {batch_size}"
        )));
    }
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, row) in rows.iter().enumerate() {
        groups.entry(row.instruction.as_str()).or_default().push(i);
    }

    let mut batches = Vec::new();
    let mut dropped = 0usize;
    for (_, indices) in groups {
        let mut queue: VecDeque<usize> = indices.into();
        'group: while let Some(seed) = queue.pop_front() {
            let mut batch = vec![seed];
            // follow the precomputed negative link first
            let neg_id = &rows[seed].negative_id;
            if let Some(pos) = queue.iter().position(|&i| &rows[i].id == neg_id) {
                batch.push(queue.remove(pos).expect("position is valid"));
            }
            while batch.len() < batch_size {
                match queue.pop_front() {
                    Some(i) => batch.push(i),
                    None => break,
                }
            }
            let homogeneous = batch.iter().all(|&i| rows[i].output == rows[batch[0]].output);
            if homogeneous {
                match queue.iter().position(|&i| rows[i].output != rows[batch[0]].output) {
                    Some(pos) => {
                        let differing = queue.remove(pos).expect("position is valid");
                        if batch.len() == batch_size {
                            let displaced = batch.pop().expect("batch is non-empty");
                            queue.push_front(displaced);
                        }
                        batch.push(differing);
                    }
                    None => {
                        // everything left shares one output; no batch can
                        // satisfy the negative invariant
                        dropped += batch.len() + queue.len();
                        break 'group;
                    }
                }
            }
            if batch.len() < 2 {
                dropped += batch.len();
                continue;
            }
            batches.push(TrainBatch::build(batch.into_iter().map(|i| rows[i].clone()).collect()));
        }
    }
    Ok(BatchAssembly { batches, dropped })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, instr: &str, input: &str, output: &str, neg: &str) -> AugmentedInstance {
        AugmentedInstance {
            id: id.into(),
            task: "t".into(),
            template_id: 0,
            instruction: instr.into(),
            input: input.into(),
            output: output.into(),
            label_options: vec!["yes".into(), "no".into()],
            positive_instruction: format!("{instr} (reworded)"),
            negative_id: neg.into(),
        }
    }

    #[test]
    fn four_anchors_mixed_outputs_form_one_batch() {
        let rows = vec![
            row("a", "Ask", "x0", "yes", "b"),
            row("b", "Ask", "x1", "no", "a"),
            row("c", "Ask", "x2", "yes", "b"),
            row("d", "Ask", "x3", "no", "a"),
        ];
        let asm = assemble_batches(&rows, 4).unwrap();
        assert_eq!(asm.batches.len(), 1);
        assert_eq!(asm.dropped, 0);
        let batch = &asm.batches[0];
        batch.validate().unwrap();
        let pos_of = |id: &str| batch.members.iter().position(|m| m.id == id).unwrap();
        // anchor "a" must pair with exactly the two "no" entries
        let negs: Vec<&str> = batch.negative_sets[pos_of("a")]
            .iter()
            .map(|&j| batch.members[j].id.as_str())
            .collect();
        let mut sorted = negs.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec!["b", "d"]);
    }

    #[test]
    fn homogeneous_group_drops_everyone() {
        let rows: Vec<AugmentedInstance> =
            (0..4).map(|i| row(&format!("e{i}"), "Ask", &format!("x{i}"), "yes", "e0")).collect();
        let asm = assemble_batches(&rows, 4).unwrap();
        assert!(asm.batches.is_empty());
        assert_eq!(asm.dropped, 4);
    }

    #[test]
    fn homogeneous_prefix_swaps_in_a_differing_entry() {
        let rows = vec![
            row("a", "Ask", "x0", "yes", "e"),
            row("b", "Ask", "x1", "yes", "e"),
            row("c", "Ask", "x2", "yes", "e"),
            row("d", "Ask", "x3", "yes", "e"),
            row("e", "Ask", "x4", "no", "a"),
        ];
        // negative link of "a" pulls "e" in directly
        let asm = assemble_batches(&rows, 3).unwrap();
        assert!(!asm.batches.is_empty());
        for b in &asm.batches {
            b.validate().unwrap();
        }
        let total: usize = asm.batches.iter().map(|b| b.members.len()).sum();
        assert_eq!(total + asm.dropped, 5);
    }

    #[test]
    fn batch_counting_law() {
        let rows = vec![
            row("a", "Ask", "x0", "yes", "b"),
            row("b", "Ask", "x1", "no", "a"),
            row("c", "Ask", "x2", "yes", "b"),
            row("d", "Ask", "x3", "no", "a"),
        ];
        let asm = assemble_batches(&rows, 4).unwrap();
        let b = &asm.batches[0];
        let n = b.members.len();
        let pairs: usize = b.negative_sets.iter().map(Vec::len).sum();
        assert!(pairs <= n * (n - 1));
        assert_eq!(n, 4);
        assert_eq!(pairs, 8); // two labels, two of each
    }

    #[test]
    fn groups_never_mix_instructions() {
        let rows = vec![
            row("a", "Ask one", "x0", "yes", "b"),
            row("b", "Ask one", "x1", "no", "a"),
            row("c", "Ask two", "x2", "yes", "d"),
            row("d", "Ask two", "x3", "no", "c"),
        ];
        let asm = assemble_batches(&rows, 8).unwrap();
        assert_eq!(asm.batches.len(), 2);
        for b in &asm.batches {
            b.validate().unwrap();
        }
    }

    #[test]
    fn batch_size_below_two_rejected() {
        assert!(matches!(
            assemble_batches(&[], 1),
            Err(DataError::BadParam(_))
        ));
    }
}
