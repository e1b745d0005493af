//! Command-level entry points: each takes paths plus options, reads and
//! validates the inputs, runs the corresponding module, and writes the
//! artifacts (with a `.meta.json` config echo next to files whose row
//! schema cannot carry one).

use super::checkpoint::{load_checkpoint, save_checkpoint};
use super::io::{read_jsonl, read_to_string, write_jsonl, write_text_atomic};
use super::train::{train, StepLog};
use super::{PipelineError, RunConfig};
use crate::data::{augment_dataset, AugmentedInstance, InstructionInstance, InstructionTemplate};
use crate::eval::{
    aggregate_by_category, collect_hidden_matrix, evaluate_group, project_labeled_rows,
    CategorySummary, GroupMetrics, ProjectionPoint, ScoreRecord,
};
use crate::model::Params;
use crate::perturb::{
    build_instruction_groups, parse_lexicon, Lexicon, ParaphrasePool, PerturbationLevel,
    PerturbationSpec, GROUP_SIZE,
};
use crate::Error;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

/// Instruction-group file row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupFileRow {
    pub task: String,
    pub group: PerturbationLevel,
    pub instructions: Vec<String>,
}

/// Paraphrase-pool file row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PoolFileRow {
    pub task: String,
    pub paraphrases: Vec<String>,
}

pub fn load_pool(path: &Path) -> Result<ParaphrasePool, Error> {
    let rows: Vec<PoolFileRow> = read_jsonl(path)?;
    Ok(rows.into_iter().map(|r| (r.task, r.paraphrases)).collect())
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon, Error> {
    Ok(parse_lexicon(&read_to_string(path)?)?)
}

fn meta_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    path.with_file_name(name)
}

fn write_meta<T: Serialize>(artifact: &Path, meta: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(meta).expect("meta serializes");
    write_text_atomic(&meta_path(artifact), &(text + "\n"))
}

// ── augment ─────────────────────────────────────────────────────────────

pub struct AugmentArgs<'a> {
    pub data: &'a Path,
    pub templates: &'a Path,
    pub seed: u64,
    pub total: Option<usize>,
    pub out: &'a Path,
}

#[derive(Debug, Serialize)]
pub struct AugmentStats {
    pub rows: usize,
    pub excluded: usize,
}

pub fn cmd_augment(args: &AugmentArgs) -> Result<AugmentStats, Error> {
    let entries: Vec<InstructionInstance> = read_jsonl(args.data)?;
    let templates: Vec<InstructionTemplate> = read_jsonl(args.templates)?;
    let (rows, excluded) = augment_dataset(&entries, &templates, args.seed, args.total)?;
    write_jsonl(args.out, &rows)?;
    let exclusions_path = args.out.with_extension("exclusions.jsonl");
    write_jsonl(&exclusions_path, &excluded)?;
    write_meta(
        args.out,
        &serde_json::json!({
            "command": "augment",
            "seed": args.seed,
            "data": args.data.display().to_string(),
            "templates": args.templates.display().to_string(),
            "total": args.total,
            "rows": rows.len(),
            "excluded": excluded.len(),
        }),
    )?;
    Ok(AugmentStats { rows: rows.len(), excluded: excluded.len() })
}

// ── train ───────────────────────────────────────────────────────────────

pub struct TrainArgs<'a> {
    pub config: RunConfig,
    pub augmented: &'a Path,
    pub out_ckpt: &'a Path,
    pub loss_log: Option<&'a Path>,
}

#[derive(Debug, Serialize)]
pub struct TrainStats {
    pub steps: u64,
    pub final_l_total: f64,
    pub dropped_anchors: usize,
}

pub fn cmd_train(args: &TrainArgs) -> Result<TrainStats, Error> {
    let rows: Vec<AugmentedInstance> = read_jsonl(args.augmented)?;
    let config = args.config.clone();
    config.validate()?;

    let save_every = config.save_every;
    let ckpt_path = args.out_ckpt.to_path_buf();
    let cfg_for_hook = config.clone();
    let mut hook = move |params: &Params, step: u64, _log: &StepLog| -> Result<(), Error> {
        if let Some(every) = save_every {
            if every > 0 && step % every as u64 == 0 {
                save_checkpoint(&ckpt_path, &cfg_for_hook, params, step, 0)?;
            }
        }
        Ok(())
    };
    let outcome = train(&config, &rows, Some(&mut hook))?;

    save_checkpoint(args.out_ckpt, &config, &outcome.params, outcome.steps, outcome.rng_state)?;
    if let Some(log_path) = args.loss_log {
        write_jsonl(log_path, &outcome.logs)?;
        write_meta(
            log_path,
            &serde_json::json!({
                "command": "train",
                "config": config,
                "augmented": args.augmented.display().to_string(),
                "steps": outcome.steps,
                "dropped_anchors": outcome.dropped_anchors,
            }),
        )?;
    }
    let final_l_total = outcome.logs.last().map(|l| l.l_total).unwrap_or(f64::NAN);
    Ok(TrainStats {
        steps: outcome.steps,
        final_l_total,
        dropped_anchors: outcome.dropped_anchors,
    })
}

// ── perturb ─────────────────────────────────────────────────────────────

pub struct PerturbArgs<'a> {
    pub instructions: &'a Path,
    /// `None` emits all five groups.
    pub level: Option<PerturbationLevel>,
    pub seed: u64,
    pub lexicon: Option<&'a Path>,
    pub pool: Option<&'a Path>,
    pub out: &'a Path,
}

pub fn cmd_perturb(args: &PerturbArgs) -> Result<(), Error> {
    let clean_rows: Vec<GroupFileRow> = read_jsonl(args.instructions)?;
    let lexicon = match args.lexicon {
        Some(p) => load_lexicon(p)?,
        None => Lexicon::new(),
    };
    let pool = match args.pool {
        Some(p) => load_pool(p)?,
        None => ParaphrasePool::new(),
    };
    let spec = PerturbationSpec::new(args.seed);

    let mut out_rows: Vec<GroupFileRow> = Vec::new();
    for row in &clean_rows {
        if row.group != PerturbationLevel::Clean {
            return Err(PipelineError::Invalid(format!(
                "input rows must be clean groups; task {} has group {}",
                row.task,
                row.group.name()
            ))
            .into());
        }
        if row.instructions.len() != GROUP_SIZE {
            return Err(PipelineError::Invalid(format!(
                "task {} has {} clean instructions; exactly {GROUP_SIZE} required",
                row.task,
                row.instructions.len()
            ))
            .into());
        }
        let built =
            build_instruction_groups(&row.task, &row.instructions, &spec, &lexicon, &pool)?;
        for (level, members) in &built.groups {
            if args.level.is_none_or(|want| want == *level) {
                out_rows.push(GroupFileRow {
                    task: row.task.clone(),
                    group: *level,
                    instructions: members.clone(),
                });
            }
        }
    }
    write_jsonl(args.out, &out_rows)?;
    write_meta(
        args.out,
        &serde_json::json!({
            "command": "perturb",
            "seed": args.seed,
            "level": args.level.map(|l| l.name()),
            "instructions": args.instructions.display().to_string(),
        }),
    )?;
    Ok(())
}

// ── eval ────────────────────────────────────────────────────────────────

pub struct EvalArgs<'a> {
    pub ckpt: &'a Path,
    pub data: &'a Path,
    pub groups: &'a Path,
    /// Training file (raw or augmented rows) used for the
    /// unseen-instruction guard.
    pub train_data: &'a Path,
    pub categories: &'a Path,
    pub out_report: &'a Path,
    pub score_log: Option<&'a Path>,
    pub projection: Option<&'a Path>,
    pub max_new: Option<usize>,
    /// Cap on instances per task (evaluates the first N in id order).
    pub limit: Option<usize>,
}

/// Echo of everything that determines an evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalEcho {
    pub seed: u64,
    pub checkpoint: String,
    pub checkpoint_config_hash: String,
    pub checkpoint_step: u64,
    pub dataset: String,
    pub groups: String,
    pub max_new: usize,
}

/// The report document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReportFile {
    pub config: EvalEcho,
    pub metrics: Vec<GroupMetrics>,
    pub categories: BTreeMap<String, CategorySummary>,
}

/// Raw rows that may or may not carry augmentation fields; used to collect
/// every instruction string a training run has seen.
#[derive(Debug, Deserialize)]
struct TrainingRenderingRow {
    instruction: String,
    #[serde(default)]
    positive_instruction: Option<String>,
}

pub fn training_renderings(path: &Path) -> Result<BTreeSet<String>, Error> {
    let rows: Vec<TrainingRenderingRow> = read_jsonl(path)?;
    let mut set = BTreeSet::new();
    for r in rows {
        set.insert(r.instruction);
        if let Some(p) = r.positive_instruction {
            set.insert(p);
        }
    }
    Ok(set)
}

fn group_map(
    rows: &[GroupFileRow],
) -> BTreeMap<String, BTreeMap<PerturbationLevel, Vec<String>>> {
    let mut map: BTreeMap<String, BTreeMap<PerturbationLevel, Vec<String>>> = BTreeMap::new();
    for row in rows {
        map.entry(row.task.clone())
            .or_default()
            .insert(row.group, row.instructions.clone());
    }
    map
}

pub fn cmd_eval(args: &EvalArgs) -> Result<EvalReportFile, Error> {
    let ck = load_checkpoint(args.ckpt)?;
    let max_new = args.max_new.unwrap_or(ck.config.max_new);
    let instances: Vec<InstructionInstance> = read_jsonl(args.data)?;
    for i in &instances {
        i.validate()?;
    }
    let group_rows: Vec<GroupFileRow> = read_jsonl(args.groups)?;
    let groups_by_task = group_map(&group_rows);
    let categories: BTreeMap<String, String> =
        serde_json::from_str(&read_to_string(args.categories)?)
            .map_err(|e| PipelineError::Invalid(format!("category map: {e}")))?;

    // the unseen-instruction contract: no eval instruction may appear among
    // the training renderings
    let seen = training_renderings(args.train_data)?;
    let offending: Vec<String> = group_rows
        .iter()
        .flat_map(|r| r.instructions.iter())
        .filter(|i| seen.contains(*i))
        .cloned()
        .collect();
    if !offending.is_empty() {
        let sample = offending.iter().take(5).cloned().collect();
        return Err(
            PipelineError::UnseenInstructionViolation { count: offending.len(), sample }.into()
        );
    }

    let mut by_task: BTreeMap<String, Vec<InstructionInstance>> = BTreeMap::new();
    for i in instances {
        by_task.entry(i.task.clone()).or_default().push(i);
    }
    if let Some(limit) = args.limit {
        for list in by_task.values_mut() {
            list.sort_by(|a, b| a.id.cmp(&b.id));
            list.truncate(limit);
        }
    }

    let mut metrics = Vec::new();
    let mut records: Vec<ScoreRecord> = Vec::new();
    for (task, task_instances) in &by_task {
        let task_groups = groups_by_task.get(task).ok_or_else(|| PipelineError::MissingGroup {
            task: task.clone(),
            group: "clean".into(),
        })?;
        for level in PerturbationLevel::ALL {
            let instructions =
                task_groups.get(&level).ok_or_else(|| PipelineError::MissingGroup {
                    task: task.clone(),
                    group: level.name().into(),
                })?;
            let (m, r) =
                evaluate_group(&ck.params, task, level, task_instances, instructions, max_new)?;
            metrics.push(m);
            records.extend(r);
        }
    }
    let categories = aggregate_by_category(&metrics, &categories)?;

    let report = EvalReportFile {
        config: EvalEcho {
            seed: ck.config.seed,
            checkpoint: args.ckpt.display().to_string(),
            checkpoint_config_hash: format!("{:#018x}", ck.config_hash),
            checkpoint_step: ck.step,
            dataset: args.data.display().to_string(),
            groups: args.groups.display().to_string(),
            max_new,
        },
        metrics,
        categories,
    };
    let report_text = serde_json::to_string_pretty(&report).expect("report serializes");
    write_text_atomic(args.out_report, &(report_text + "\n"))?;
    if let Some(log) = args.score_log {
        write_jsonl(log, &records)?;
    }
    if let Some(proj_path) = args.projection {
        let points = project_all_tasks(&ck.params, &by_task, &groups_by_task)?;
        write_projection_csv(proj_path, &points)?;
    }
    Ok(report)
}

fn project_all_tasks(
    params: &Params,
    by_task: &BTreeMap<String, Vec<InstructionInstance>>,
    groups_by_task: &BTreeMap<String, BTreeMap<PerturbationLevel, Vec<String>>>,
) -> Result<Vec<ProjectionPoint>, Error> {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (task, instances) in by_task {
        if let Some(groups) = groups_by_task.get(task) {
            collect_hidden_matrix(params, instances, groups, &mut rows, &mut labels)?;
        }
    }
    project_labeled_rows(rows, labels, params.config().d_model)
}

fn write_projection_csv(path: &Path, points: &[ProjectionPoint]) -> Result<(), PipelineError> {
    let mut out = String::from("group,instance_id,pc1,pc2\n");
    for p in points {
        out.push_str(&format!("{},{},{},{}\n", p.group.name(), p.instance_id, p.pc1, p.pc2));
    }
    write_text_atomic(path, &out)
}

// ── project ─────────────────────────────────────────────────────────────

pub struct ProjectArgs<'a> {
    pub ckpt: &'a Path,
    pub data: &'a Path,
    pub groups: &'a Path,
    pub task: Option<&'a str>,
    pub limit: Option<usize>,
    pub out: &'a Path,
}

pub fn cmd_project(args: &ProjectArgs) -> Result<usize, Error> {
    let ck = load_checkpoint(args.ckpt)?;
    let instances: Vec<InstructionInstance> = read_jsonl(args.data)?;
    let group_rows: Vec<GroupFileRow> = read_jsonl(args.groups)?;
    let groups_by_task = group_map(&group_rows);

    let mut by_task: BTreeMap<String, Vec<InstructionInstance>> = BTreeMap::new();
    for i in instances {
        if args.task.is_none_or(|t| t == i.task) {
            by_task.entry(i.task.clone()).or_default().push(i);
        }
    }
    if by_task.is_empty() {
        return Err(PipelineError::Invalid(format!(
            "no instances match task filter {:?}",
            args.task
        ))
        .into());
    }
    if let Some(limit) = args.limit {
        for list in by_task.values_mut() {
            list.sort_by(|a, b| a.id.cmp(&b.id));
            list.truncate(limit);
        }
    }
    let points = project_all_tasks(&ck.params, &by_task, &groups_by_task)?;
    write_projection_csv(args.out, &points)?;
    Ok(points.len())
}
