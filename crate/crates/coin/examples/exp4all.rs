// full criterion-4 verdict: 3 seeds x {coin, baseline}, aggregated
use coin::data::{augment_dataset, AugmentedInstance, InstructionInstance, InstructionTemplate};
use coin::eval::{evaluate_group, GroupMetrics};
use coin::model::ModelConfig;
use coin::objectives::cosine_similarity_f64;
use coin::perturb::{build_instruction_groups, parse_lexicon, PerturbationLevel, PerturbationSpec};
use coin::pipeline::{read_jsonl, train, GroupFileRow, RunConfig};
use coin::autodiff::Tape;
use coin::model::Params;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

struct ArmResult {
    cosine: f64,
    metrics: Vec<GroupMetrics>,
}

fn run_arm(
    aug: &[AugmentedInstance],
    seed: u64,
    lr: f64,
    steps: usize,
    baseline: bool,
    eval_rows: &BTreeMap<String, Vec<InstructionInstance>>,
    groups: &BTreeMap<String, BTreeMap<PerturbationLevel, Vec<String>>>,
) -> ArmResult {
    let mut cfg = RunConfig::desk_default(seed);
    cfg.model = ModelConfig { n_layers: 2, n_heads: 2, d_model: 32, d_ff: 64, vocab_size: 260, context_len: 96 };
    cfg.batch_size = 8;
    cfg.max_steps = Some(steps);
    cfg.learning_rate = lr;
    cfg.baseline_ce = baseline;
    let out = train(&cfg, aug, None).unwrap();

    let mut cos_sum = 0.0;
    let sample: Vec<&AugmentedInstance> = aug.iter().step_by(aug.len() / 64).collect();
    for r in &sample {
        let mut tape = Tape::new();
        let bound = out.params.bind(&mut tape, false);
        let h = coin::model::last_token_hidden(&mut tape, &bound, &cfg.model, &r.instruction, &r.input, &r.output).unwrap();
        let hp = coin::model::last_token_hidden(&mut tape, &bound, &cfg.model, &r.positive_instruction, &r.input, &r.output).unwrap();
        cos_sum += cosine_similarity_f64(tape.data(h), tape.data(hp));
    }
    let cosine = cos_sum / sample.len() as f64;

    let mut metrics = Vec::new();
    for (task, instances) in eval_rows {
        for level in PerturbationLevel::ALL {
            let (m, _) = evaluate_group(&out.params, task, level, instances, &groups[task][&level], 8).unwrap();
            metrics.push(m);
        }
    }
    let _ = Params::num_parameters(&out.params);
    ArmResult { cosine, metrics }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.05);
    let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let n_eval: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(100);
    let seeds: Vec<u64> = vec![1, 2, 3];

    let train_rows: Vec<InstructionInstance> = read_jsonl(Path::new("data/train.jsonl")).unwrap();
    let templates: Vec<InstructionTemplate> = read_jsonl(Path::new("data/templates.jsonl")).unwrap();
    let (aug, _) = augment_dataset(&train_rows, &templates, 7, None).unwrap();

    let eval_all: Vec<InstructionInstance> = read_jsonl(Path::new("data/eval.jsonl")).unwrap();
    let mut eval_rows: BTreeMap<String, Vec<InstructionInstance>> = BTreeMap::new();
    for r in eval_all {
        eval_rows.entry(r.task.clone()).or_default().push(r);
    }
    for list in eval_rows.values_mut() {
        list.sort_by(|a, b| a.id.cmp(&b.id));
        list.truncate(n_eval);
    }
    let lexicon = parse_lexicon(&std::fs::read_to_string("data/lexicon.tsv").unwrap()).unwrap();
    let pool_rows: Vec<serde_json::Value> = read_jsonl(Path::new("data/paraphrases.jsonl")).unwrap();
    let pool: BTreeMap<String, Vec<String>> = pool_rows
        .iter()
        .map(|r| (
            r["task"].as_str().unwrap().to_string(),
            r["paraphrases"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect(),
        ))
        .collect();
    let clean_rows: Vec<GroupFileRow> = read_jsonl(Path::new("data/eval_instructions.jsonl")).unwrap();
    let spec = PerturbationSpec::new(99);
    let mut groups = BTreeMap::new();
    for row in &clean_rows {
        let g = build_instruction_groups(&row.task, &row.instructions, &spec, &lexicon, &pool).unwrap();
        groups.insert(row.task.clone(), g.groups);
    }

    let t0 = Instant::now();
    let mut coin_runs = Vec::new();
    let mut base_runs = Vec::new();
    for &seed in &seeds {
        coin_runs.push(run_arm(&aug, seed, lr, steps, false, &eval_rows, &groups));
        base_runs.push(run_arm(&aug, seed, lr, steps, true, &eval_rows, &groups));
        println!("seed {seed} done ({:?})", t0.elapsed());
    }

    let mean_cos = |runs: &[ArmResult]| runs.iter().map(|r| r.cosine).sum::<f64>() / runs.len() as f64;
    let coin_cos = mean_cos(&coin_runs);
    let base_cos = mean_cos(&base_runs);
    println!("(a) positive-pair cosine: coin {coin_cos:.4} vs base {base_cos:.4} -> {}", if coin_cos > base_cos { "PASS" } else { "FAIL" });

    let group_mean = |runs: &[ArmResult], level: PerturbationLevel| {
        let mut sum = 0.0;
        let mut n = 0;
        for r in runs {
            for m in &r.metrics {
                if m.group == level {
                    sum += m.mean;
                    n += 1;
                }
            }
        }
        sum / n as f64
    };
    let perturbed = [PerturbationLevel::Character, PerturbationLevel::Word, PerturbationLevel::Sentence, PerturbationLevel::Semantic];
    let mut ge_all = true;
    let mut strict = 0;
    for level in perturbed {
        let c = group_mean(&coin_runs, level);
        let b = group_mean(&base_runs, level);
        println!("(b) {:<9}: coin {c:.4} vs base {b:.4} ({:+.4})", level.name(), c - b);
        if c < b { ge_all = false; }
        if c > b { strict += 1; }
    }
    println!("(b) all >=: {ge_all}, strict wins {strict}/4 -> {}", if ge_all && strict >= 2 { "PASS" } else { "FAIL" });

    let mean_std = |runs: &[ArmResult]| {
        let mut sum = 0.0;
        let mut n = 0;
        for r in runs {
            for m in &r.metrics {
                sum += m.std;
                n += 1;
            }
        }
        sum / n as f64
    };
    let coin_std = mean_std(&coin_runs);
    let base_std = mean_std(&base_runs);
    println!("(c) across-instruction std: coin {coin_std:.4} vs base {base_std:.4} -> {}", if coin_std <= base_std { "PASS" } else { "FAIL" });
}
