//! Robustness measurement: per-group / per-task accuracy over six
//! instruction variants, category rollups, and hidden-state projection.

mod projection;

pub use projection::pca_project_2d;

use crate::autodiff::Tape;
use crate::data::InstructionInstance;
use crate::model::{greedy_generate, last_token_hidden, render_prompt_sequence, Params};
use crate::perturb::PerturbationLevel;
use crate::Error;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cannot evaluate an empty instance list")]
    EmptyInstances,
    #[error("expected exactly 6 instructions, got {got}")]
    WrongInstructionCount { got: usize },
    #[error("task {task} missing from the category map")]
    UnmappedTask { task: String },
    #[error("covariance is zero (all points identical); nothing to project")]
    DegenerateProjection,
    #[error("projection needs at least 3 points, got {got}")]
    TooFewPoints { got: usize },
}

/// Accuracy of one (task, group) cell across its six instruction variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub task: String,
    pub group: PerturbationLevel,
    pub per_instruction_accuracy: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

/// One scored generation; the rows of the score log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub task: String,
    pub group: PerturbationLevel,
    pub instruction_index: usize,
    pub instance_id: String,
    pub prediction: String,
    pub gold: String,
    pub correct: bool,
}

/// Sample standard deviation (n−1 denominator).
pub fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (ss / (n - 1) as f64).sqrt()
}

fn normalize_answer(s: &str) -> String {
    s.trim()
        .trim_end_matches(['.', ',', '!', '?', ';', ':'])
        .trim()
        .to_lowercase()
}

/// Exact match after normalization (lowercase, trimmed, terminal
/// punctuation stripped), or first-token match when the gold answer is a
/// single token.
pub fn score_prediction(prediction: &str, gold: &str, label_options: &[String]) -> bool {
    debug_assert!(
        label_options.is_empty() || label_options.iter().any(|o| o == gold),
        "gold answer must be among the label options"
    );
    let pred = normalize_answer(prediction);
    let gold_norm = normalize_answer(gold);
    if pred == gold_norm {
        return true;
    }
    let gold_is_single_token = !gold_norm.contains(char::is_whitespace);
    if gold_is_single_token {
        if let Some(first) = pred.split_whitespace().next() {
            let first = normalize_answer(first);
            return first == gold_norm;
        }
    }
    false
}

/// Evaluates one (task, group) cell: every instance re-rendered under each
/// of the six instructions, greedily decoded and scored. Instances iterate
/// in id order; results are deterministic at a fixed checkpoint.
pub fn evaluate_group(
    params: &Params,
    task: &str,
    group: PerturbationLevel,
    instances: &[InstructionInstance],
    instructions: &[String],
    max_new: usize,
) -> Result<(GroupMetrics, Vec<ScoreRecord>), Error> {
    if instances.is_empty() {
        return Err(EvalError::EmptyInstances.into());
    }
    if instructions.len() != 6 {
        return Err(EvalError::WrongInstructionCount { got: instructions.len() }.into());
    }
    let mut sorted: Vec<&InstructionInstance> = instances.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let ctx = params.config().context_len;
    let mut per_instruction_accuracy = Vec::with_capacity(6);
    let mut records = Vec::with_capacity(6 * sorted.len());
    for (ii, instruction) in instructions.iter().enumerate() {
        let mut correct_count = 0usize;
        for instance in &sorted {
            let prompt = render_prompt_sequence(instruction, &instance.input, ctx)?;
            let prediction = greedy_generate(params, &prompt, max_new)?;
            let correct =
                score_prediction(&prediction, &instance.output, &instance.label_options);
            correct_count += usize::from(correct);
            records.push(ScoreRecord {
                task: task.to_string(),
                group,
                instruction_index: ii,
                instance_id: instance.id.clone(),
                prediction,
                gold: instance.output.clone(),
                correct,
            });
        }
        per_instruction_accuracy.push(correct_count as f64 / sorted.len() as f64);
    }
    let mean = per_instruction_accuracy.iter().sum::<f64>() / 6.0;
    let std = sample_std(&per_instruction_accuracy);
    Ok((
        GroupMetrics {
            task: task.to_string(),
            group,
            per_instruction_accuracy,
            mean,
            std,
        },
        records,
    ))
}

/// Per-category rollup.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CategorySummary {
    pub accuracy: f64,
    pub std: f64,
}

/// Unweighted mean of member (task, group) accuracies per category;
/// category std is the mean of member stds.
pub fn aggregate_by_category(
    metrics: &[GroupMetrics],
    category_map: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, CategorySummary>, EvalError> {
    let mut buckets: BTreeMap<&str, Vec<&GroupMetrics>> = BTreeMap::new();
    for m in metrics {
        let category = category_map
            .get(&m.task)
            .ok_or_else(|| EvalError::UnmappedTask { task: m.task.clone() })?;
        buckets.entry(category).or_default().push(m);
    }
    Ok(buckets
        .into_iter()
        .map(|(category, members)| {
            let n = members.len() as f64;
            let accuracy = members.iter().map(|m| m.mean).sum::<f64>() / n;
            let std = members.iter().map(|m| m.std).sum::<f64>() / n;
            (category.to_string(), CategorySummary { accuracy, std })
        })
        .collect())
}

/// A projected hidden state; the rows of the projection CSV.
#[derive(Debug, Clone)]
pub struct ProjectionPoint {
    pub group: PerturbationLevel,
    pub instance_id: String,
    pub pc1: f64,
    pub pc2: f64,
}

/// Appends the last-token hidden state of every (instance, group
/// instruction) pair to `rows`/`labels`. Instances iterate in id order.
pub fn collect_hidden_matrix(
    params: &Params,
    instances: &[InstructionInstance],
    groups: &BTreeMap<PerturbationLevel, Vec<String>>,
    rows: &mut Vec<f64>,
    labels: &mut Vec<(PerturbationLevel, String)>,
) -> Result<(), Error> {
    let mut sorted: Vec<&InstructionInstance> = instances.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let cfg = params.config();
    for (level, instructions) in groups {
        for instruction in instructions {
            for instance in &sorted {
                let mut tape = Tape::new();
                let bound = params.bind(&mut tape, false);
                let h = last_token_hidden(
                    &mut tape,
                    &bound,
                    cfg,
                    instruction,
                    &instance.input,
                    &instance.output,
                )?;
                rows.extend_from_slice(tape.data(h));
                labels.push((*level, instance.id.clone()));
            }
        }
    }
    Ok(())
}

/// Computes the last-token hidden state for every (instance, group
/// instruction) pair, centers the matrix, and projects onto the top two
/// principal components.
pub fn export_hidden_projection(
    params: &Params,
    instances: &[InstructionInstance],
    groups: &BTreeMap<PerturbationLevel, Vec<String>>,
) -> Result<Vec<ProjectionPoint>, Error> {
    if instances.len() < 3 {
        return Err(EvalError::TooFewPoints { got: instances.len() }.into());
    }
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    collect_hidden_matrix(params, instances, groups, &mut rows, &mut labels)?;
    project_labeled_rows(rows, labels, params.config().d_model)
}

/// Runs the 2-D projection over an already collected hidden matrix.
pub fn project_labeled_rows(
    rows: Vec<f64>,
    labels: Vec<(PerturbationLevel, String)>,
    d: usize,
) -> Result<Vec<ProjectionPoint>, Error> {
    let n = labels.len();
    let (coords, _) = pca_project_2d(&rows, n, d)?;
    Ok(labels
        .into_iter()
        .zip(coords)
        .map(|((group, instance_id), (pc1, pc2))| ProjectionPoint {
            group,
            instance_id,
            pc1,
            pc2,
        })
        .collect())
}
