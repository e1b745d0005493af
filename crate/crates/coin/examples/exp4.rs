// criterion-4 experiment tuning probe
use coin::data::{augment_dataset, AugmentedInstance, InstructionInstance, InstructionTemplate};
use coin::eval::evaluate_group;
use coin::model::ModelConfig;
use coin::objectives::cosine_similarity_f64;
use coin::perturb::{build_instruction_groups, parse_lexicon, PerturbationLevel, PerturbationSpec};
use coin::pipeline::{read_jsonl, train, RunConfig};
use coin::autodiff::Tape;
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.2);
    let steps: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1500);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);
    let mode = args.get(4).map(String::as_str).unwrap_or("coin");
    let baseline: bool = mode == "base";
    let n_eval: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(100);

    let train_rows: Vec<InstructionInstance> = read_jsonl(Path::new("data/train.jsonl")).unwrap();
    let templates: Vec<InstructionTemplate> = read_jsonl(Path::new("data/templates.jsonl")).unwrap();
    let (aug, excluded) = augment_dataset(&train_rows, &templates, 7, None).unwrap();
    println!("augmented {} rows ({} excluded)", aug.len(), excluded.len());

    let mut cfg = RunConfig::desk_default(seed);
    let dm: usize = std::env::var("DM").ok().and_then(|v| v.parse().ok()).unwrap_or(32);
    cfg.model = ModelConfig { n_layers: 2, n_heads: 2, d_model: dm, d_ff: 2 * dm, vocab_size: 260, context_len: 96 };
    cfg.batch_size = 8;
    cfg.max_steps = Some(steps);
    cfg.learning_rate = lr;
    cfg.baseline_ce = baseline;
    cfg.include_positive_negatives = mode.contains("posneg");
    cfg.ent_on_positives = mode.contains("entpos");

    let t0 = Instant::now();
    let out = train(&cfg, &aug, None).unwrap();
    for log in out.logs.iter().step_by(150) {
        println!(
            "  step {:4}: l_ent {:.4} l_ctr {:.5} weight {:.3} total {:.4}",
            log.step, log.l_ent, log.l_ctr, log.weight.min(9999.0), log.l_total
        );
    }
    println!(
        "train {:?}: steps {}, last l_ent {:.3} l_ctr {:.4}",
        t0.elapsed(), out.steps,
        out.logs.last().unwrap().l_ent, out.logs.last().unwrap().l_ctr,
    );

    // positive-pair cosine over train-augmented pairs and over eval pairs
    // rendered with unseen clean instructions
    let mut cos_sum = 0.0;
    let sample: Vec<&AugmentedInstance> = aug.iter().step_by(aug.len() / 64).collect();
    for r in &sample {
        let mut tape = Tape::new();
        let bound = out.params.bind(&mut tape, false);
        let h = coin::model::last_token_hidden(&mut tape, &bound, &cfg.model, &r.instruction, &r.input, &r.output).unwrap();
        let hp = coin::model::last_token_hidden(&mut tape, &bound, &cfg.model, &r.positive_instruction, &r.input, &r.output).unwrap();
        cos_sum += cosine_similarity_f64(tape.data(h), tape.data(hp));
    }
    println!("mean positive-pair cosine (train pairs): {:.4}", cos_sum / sample.len() as f64);
    {
        let eval_rows: Vec<InstructionInstance> = read_jsonl(Path::new("data/eval.jsonl")).unwrap();
        let clean_rows: Vec<coin::pipeline::GroupFileRow> = read_jsonl(Path::new("data/eval_instructions.jsonl")).unwrap();
        let mut pos_sum = 0.0;
        let mut neg_sum = 0.0;
        let mut n = 0usize;
        for task_rows in clean_rows.iter() {
            let insts: Vec<&InstructionInstance> =
                eval_rows.iter().filter(|r| r.task == task_rows.task).take(40).collect();
            for (k, inst) in insts.iter().enumerate() {
                let other = insts[(k + 1) % insts.len()];
                if other.output == inst.output {
                    continue;
                }
                let i0 = &task_rows.instructions[k % 6];
                let i1 = &task_rows.instructions[(k + 1) % 6];
                let mut tape = Tape::new();
                let bound = out.params.bind(&mut tape, false);
                let h = coin::model::last_token_hidden(&mut tape, &bound, &cfg.model, i0, &inst.input, &inst.output).unwrap();
                let hp = coin::model::last_token_hidden(&mut tape, &bound, &cfg.model, i1, &inst.input, &inst.output).unwrap();
                let hn = coin::model::last_token_hidden(&mut tape, &bound, &cfg.model, i0, &other.input, &other.output).unwrap();
                pos_sum += cosine_similarity_f64(tape.data(h), tape.data(hp));
                neg_sum += cosine_similarity_f64(tape.data(h), tape.data(hn));
                n += 1;
            }
        }
        println!(
            "eval-split cosine: positive {:.4} negative {:.4} (n {})",
            pos_sum / n as f64, neg_sum / n as f64, n
        );
    }

    // eval over all five groups
    let eval_rows: Vec<InstructionInstance> = read_jsonl(Path::new("data/eval.jsonl")).unwrap();
    let lexicon = parse_lexicon(&std::fs::read_to_string("data/lexicon.tsv").unwrap()).unwrap();
    let pool_rows: Vec<serde_json::Value> = read_jsonl(Path::new("data/paraphrases.jsonl")).unwrap();
    let mut pool = BTreeMap::new();
    for r in &pool_rows {
        pool.insert(
            r["task"].as_str().unwrap().to_string(),
            r["paraphrases"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect::<Vec<_>>(),
        );
    }
    let clean_rows: Vec<coin::pipeline::GroupFileRow> = read_jsonl(Path::new("data/eval_instructions.jsonl")).unwrap();

    let t1 = Instant::now();
    let mut by_task: BTreeMap<String, Vec<InstructionInstance>> = BTreeMap::new();
    for r in eval_rows {
        by_task.entry(r.task.clone()).or_default().push(r);
    }
    let spec = PerturbationSpec::new(99);
    for (task, instances) in &mut by_task {
        instances.sort_by(|a, b| a.id.cmp(&b.id));
        instances.truncate(n_eval);
        let clean = &clean_rows.iter().find(|r| &r.task == task).unwrap().instructions;
        let groups = build_instruction_groups(task, clean, &spec, &lexicon, &pool).unwrap();
        for level in PerturbationLevel::ALL {
            let (m, _) = evaluate_group(&out.params, task, level, instances, &groups.groups[&level], 8).unwrap();
            println!("  {task} {:<9}: mean {:.4} std {:.4} accs {:?}", level.name(), m.mean, m.std, m.per_instruction_accuracy);
        }
    }
    println!("eval {:?}", t1.elapsed());
}
