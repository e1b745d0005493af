//! Template rendering, positive/negative selection and the augmentation
//! pass itself.
//!
//! Every random choice draws from a stream derived from
//! `(master seed, entry id, purpose)`, so augmentation is reproducible
//! entry-by-entry regardless of processing order.

use super::{AugmentedInstance, DataError, InstructionInstance, InstructionTemplate};
use crate::rng::Stream;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Substitutes `{name}` placeholders in `pattern` from `fields`.
/// Unmatched braces are copied verbatim; an unresolvable placeholder is an
/// error naming it.
pub fn render_instruction(
    pattern: &str,
    fields: &BTreeMap<String, String>,
) -> Result<String, DataError> {
    let mut out = String::with_capacity(pattern.len());
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        match rest[open + 1..].find('}') {
            Some(close) => {
                let name = &rest[open + 1..open + 1 + close];
                let value = fields
                    .get(name)
                    .ok_or_else(|| DataError::Template { placeholder: name.to_string() })?;
                out.push_str(value);
                rest = &rest[open + close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Groups templates by task, sorted by template id.
pub fn templates_by_task(
    templates: &[InstructionTemplate],
) -> BTreeMap<String, Vec<InstructionTemplate>> {
    let mut map: BTreeMap<String, Vec<InstructionTemplate>> = BTreeMap::new();
    for t in templates {
        map.entry(t.task.clone()).or_default().push(t.clone());
    }
    for list in map.values_mut() {
        list.sort_by_key(|t| t.template_id);
    }
    map
}

/// Renders a paraphrase of the entry's instruction from a uniformly chosen
/// template of the same task with a different template id. The rendered
/// string is guaranteed to differ from the anchor instruction.
pub fn make_positive(
    entry: &InstructionInstance,
    templates: &[InstructionTemplate],
    rng: &mut Stream,
) -> Result<String, DataError> {
    let fields = entry.fields();
    let mut candidates = Vec::new();
    for t in templates {
        if t.task == entry.task && t.template_id != entry.template_id {
            let rendered = render_instruction(&t.pattern, &fields)?;
            if !rendered.is_empty() && rendered != entry.instruction {
                candidates.push((t.template_id, rendered));
            }
        }
    }
    if candidates.is_empty() {
        return Err(DataError::InsufficientTemplates { task: entry.task.clone() });
    }
    candidates.sort_by_key(|(id, _)| *id);
    Ok(candidates[rng.below(candidates.len())].1.clone())
}

/// Uniformly selects the id of a hard negative: an entry with the identical
/// rendered instruction but different input and different output.
pub fn select_hard_negative(
    entry: &InstructionInstance,
    pool: &[InstructionInstance],
    rng: &mut Stream,
) -> Result<String, DataError> {
    let candidates: Vec<&InstructionInstance> = pool
        .iter()
        .filter(|e| {
            e.id != entry.id
                && e.instruction == entry.instruction
                && e.input != entry.input
                && e.output != entry.output
        })
        .collect();
    if candidates.is_empty() {
        return Err(DataError::NoNegative { id: entry.id.clone() });
    }
    Ok(candidates[rng.below(candidates.len())].id.clone())
}

/// Interleaves per-task entry streams: tasks cycle in alphabetical order,
/// one entry per task per cycle, skipping exhausted streams, until `total`
/// entries are drawn or everything is exhausted.
pub fn round_robin_sample(
    per_task: &BTreeMap<String, Vec<InstructionInstance>>,
    total: usize,
) -> Result<Vec<InstructionInstance>, DataError> {
    if total == 0 {
        return Err(DataError::BadParam("round-robin total must be positive".into()));
    }
    for (task, stream) in per_task {
        if stream.is_empty() {
            return Err(DataError::BadParam(format!("task {task} has an empty stream")));
        }
    }
    let mut cursors: BTreeMap<&str, usize> = per_task.keys().map(|k| (k.as_str(), 0)).collect();
    let mut out = Vec::with_capacity(total.min(per_task.values().map(Vec::len).sum()));
    loop {
        let mut drew_any = false;
        for (task, stream) in per_task {
            if out.len() == total {
                return Ok(out);
            }
            let cursor = cursors.get_mut(task.as_str()).expect("cursor exists");
            if *cursor < stream.len() {
                out.push(stream[*cursor].clone());
                *cursor += 1;
                drew_any = true;
            }
        }
        if !drew_any {
            return Ok(out); // every stream exhausted before reaching total
        }
    }
}

/// An entry dropped during augmentation, with the reason.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Exclusion {
    pub id: String,
    pub reason: String,
}

/// The full augmentation pass: round-robin ordering, one paraphrase
/// positive and one hard-negative reference per entry. Entries without a
/// viable negative (or paraphrase) are excluded with a reason.
pub fn augment_dataset(
    entries: &[InstructionInstance],
    templates: &[InstructionTemplate],
    seed: u64,
    total: Option<usize>,
) -> Result<(Vec<AugmentedInstance>, Vec<Exclusion>), DataError> {
    for e in entries {
        e.validate()?;
    }
    let by_task_templates = templates_by_task(templates);
    let mut per_task: BTreeMap<String, Vec<InstructionInstance>> = BTreeMap::new();
    for e in entries {
        per_task.entry(e.task.clone()).or_default().push(e.clone());
    }
    for task in per_task.keys() {
        if by_task_templates.get(task).map_or(0, Vec::len) < 2 {
            return Err(DataError::InsufficientTemplates { task: task.clone() });
        }
    }

    let total = total.unwrap_or(entries.len());
    let ordered = round_robin_sample(&per_task, total)?;
    let root = Stream::from_seed(seed).derive("augment");

    let mut rows = Vec::with_capacity(ordered.len());
    let mut excluded = Vec::new();
    for entry in &ordered {
        let entry_stream = root.derive(&entry.id);
        let mut pos_rng = entry_stream.derive("positive");
        let positive = match make_positive(entry, templates, &mut pos_rng) {
            Ok(p) => p,
            Err(e) => {
                excluded.push(Exclusion { id: entry.id.clone(), reason: e.to_string() });
                continue;
            }
        };
        let mut neg_rng = entry_stream.derive("negative");
        let negative_id = match select_hard_negative(entry, entries, &mut neg_rng) {
            Ok(n) => n,
            Err(e) => {
                excluded.push(Exclusion { id: entry.id.clone(), reason: e.to_string() });
                continue;
            }
        };
        rows.push(AugmentedInstance::from_instance(entry.clone(), positive, negative_id));
    }
    Ok((rows, excluded))
}
