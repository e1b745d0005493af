//! Dataset types and the contrastive augmentation pipeline: paraphrase
//! positives, same-instruction / different-instance hard negatives, and
//! round-robin task interleaving.

mod augment;
mod batch;

pub use augment::{
    augment_dataset, make_positive, render_instruction, round_robin_sample, select_hard_negative,
    templates_by_task, Exclusion,
};
pub use batch::{assemble_batches, BatchAssembly, TrainBatch};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("template references unknown placeholder {{{placeholder}}}")]
    Template { placeholder: String },
    #[error("task {task} needs at least 2 distinct templates for positive construction")]
    InsufficientTemplates { task: String },
    #[error("no hard-negative candidate for entry {id} (same instruction, different input and output)")]
    NoNegative { id: String },
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error("entry {id} violates an invariant: {detail}")]
    InvariantViolation { id: String, detail: String },
}

/// One (instruction, input, output) task record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionInstance {
    pub id: String,
    pub task: String,
    pub template_id: u32,
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub label_options: Vec<String>,
}

impl InstructionInstance {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.instruction.is_empty() {
            return Err(DataError::InvariantViolation {
                id: self.id.clone(),
                detail: "empty instruction".into(),
            });
        }
        if !self.label_options.is_empty() && !self.label_options.contains(&self.output) {
            return Err(DataError::InvariantViolation {
                id: self.id.clone(),
                detail: format!("output {:?} not among label options", self.output),
            });
        }
        Ok(())
    }

    /// Placeholder map used when rendering templates for this instance.
    pub fn fields(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("id".to_string(), self.id.clone()),
            ("task".to_string(), self.task.clone()),
            ("input".to_string(), self.input.clone()),
            ("output".to_string(), self.output.clone()),
        ])
    }
}

/// A reusable instruction pattern for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplate {
    pub task: String,
    pub template_id: u32,
    pub pattern: String,
}

/// An instance extended with its paraphrase positive and hard-negative
/// reference; the row format of augmented dataset files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedInstance {
    pub id: String,
    pub task: String,
    pub template_id: u32,
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub label_options: Vec<String>,
    pub positive_instruction: String,
    pub negative_id: String,
}

impl AugmentedInstance {
    pub fn from_instance(
        instance: InstructionInstance,
        positive_instruction: String,
        negative_id: String,
    ) -> Self {
        AugmentedInstance {
            id: instance.id,
            task: instance.task,
            template_id: instance.template_id,
            instruction: instance.instruction,
            input: instance.input,
            output: instance.output,
            label_options: instance.label_options,
            positive_instruction,
            negative_id,
        }
    }

    pub fn instance(&self) -> InstructionInstance {
        InstructionInstance {
            id: self.id.clone(),
            task: self.task.clone(),
            template_id: self.template_id,
            instruction: self.instruction.clone(),
            input: self.input.clone(),
            output: self.output.clone(),
            label_options: self.label_options.clone(),
        }
    }
}

/// Checks the triple invariants of every augmented row against the set it
/// was drawn from: the positive differs from the anchor instruction only,
/// and the referenced negative shares the instruction while differing in
/// both input and output.
pub fn validate_augmented_dataset(rows: &[AugmentedInstance]) -> Result<(), DataError> {
    let by_id: BTreeMap<&str, &AugmentedInstance> =
        rows.iter().map(|r| (r.id.as_str(), r)).collect();
    for row in rows {
        row.instance().validate()?;
        if row.positive_instruction == row.instruction {
            return Err(DataError::InvariantViolation {
                id: row.id.clone(),
                detail: "positive instruction equals anchor instruction".into(),
            });
        }
        if row.positive_instruction.is_empty() {
            return Err(DataError::InvariantViolation {
                id: row.id.clone(),
                detail: "empty positive instruction".into(),
            });
        }
        let neg = by_id.get(row.negative_id.as_str()).ok_or_else(|| {
            DataError::InvariantViolation {
                id: row.id.clone(),
                detail: format!("negative_id {} not in dataset", row.negative_id),
            }
        })?;
        if neg.instruction != row.instruction || neg.input == row.input || neg.output == row.output
        {
            return Err(DataError::InvariantViolation {
                id: row.id.clone(),
                detail: format!(
                    "negative {} must share the instruction and differ in both input and output",
                    neg.id
                ),
            });
        }
    }
    Ok(())
}
