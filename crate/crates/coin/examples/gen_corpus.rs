//! Regenerates the bundled synthetic corpora under `data/`.
//!
//! Two binary tasks share one input distribution, so the instruction is the
//! only way to know which marker word matters:
//!   - colorwatch: answer "yes" iff the text contains "blue"
//!   - animalwatch: answer "yes" iff the text contains "cat"
//!
//! Everything is drawn from fixed streams; running this twice produces
//! byte-identical files.
//!
//!     cargo run --example gen_corpus [out_dir]

use coin::data::{InstructionInstance, InstructionTemplate};
use coin::pipeline::{write_jsonl, write_text_atomic, GroupFileRow};
use coin::perturb::PerturbationLevel;
use coin::rng::Stream;
use serde::Serialize;
use std::collections::BTreeSet;
use std::path::Path;

const SEED: u64 = 20260809;
const TRAIN_PER_TASK: usize = 2500;
const EVAL_PER_TASK: usize = 300;

const FILLERS: &[&str] = &[
    "the", "sun", "sky", "dog", "days", "warm", "cold", "old", "new", "big", "wind", "rain",
    "song", "bird", "tree", "fish", "road", "light", "dark", "slow", "hill", "lake", "moon",
    "soft",
];

struct TaskSpec {
    name: &'static str,
    marker: &'static str,
    templates: [&'static str; 6],
    eval_clean: [&'static str; 6],
    paraphrases: [&'static str; 8],
}

fn tasks() -> [TaskSpec; 2] {
    [
        TaskSpec {
            name: "animalwatch",
            marker: "cat",
            templates: [
                "Does the text mention a cat?",
                "Is a cat in the text, yes or no?",
                "Say yes if a cat appears, else say no.",
                "Is the word cat present? Answer.",
                "Reply yes if a cat is used, please.",
                "Check for a cat and answer yes or no.",
            ],
            eval_clean: [
                "Is a cat named in the text?",
                "Does the passage mention a cat?",
                "Answer yes if a cat shows up.",
                "Was a cat used in this text?",
                "Tell me if a cat is there.",
                "Check whether a cat appears.",
            ],
            paraphrases: [
                "Is there any cat mentioned?",
                "Does this text talk of a cat?",
                "Say if a cat is in the words.",
                "A cat in the text, yes or no?",
                "Would you say a cat appears?",
                "Is a cat part of this text?",
                "Does the writing cite a cat?",
                "Can you find a cat in there?",
            ],
        },
        TaskSpec {
            name: "colorwatch",
            marker: "blue",
            templates: [
                "Does the text mention blue?",
                "Is blue in the text, yes or no?",
                "Say yes if blue appears, else say no.",
                "Is the word blue present? Answer.",
                "Reply yes if blue is used, please.",
                "Check for blue and answer yes or no.",
            ],
            eval_clean: [
                "Is blue named in the text?",
                "Does the passage mention blue?",
                "Answer yes if blue shows up.",
                "Was blue used in this text?",
                "Tell me if blue is there.",
                "Check whether blue appears.",
            ],
            paraphrases: [
                "Is there any blue mentioned?",
                "Does this text talk of blue?",
                "Say if blue is in the words.",
                "Blue in the text, yes or no?",
                "Would you say blue appears?",
                "Is blue part of this text?",
                "Does the writing cite blue?",
                "Can you find blue in there?",
            ],
        },
    ]
}

const LEXICON: &str = "\
text\tpassage,writing
passage\ttext,excerpt
mention\tname,note
mentions\tnames,notes
mentioned\tnamed,noted
named\tmentioned,listed
used\tpresent,found
tell\tsay,inform
there\tpresent
check\tverify,see
whether\tif
appears\toccurs,shows
answer\treply
shows\tcomes,turns
find\tspot,see
words\ttext
say\ttell,state
reply\tanswer,respond
occur\tappear,show
present\tthere,found
";

/// A sentence of fillers with each task's marker present independently with
/// probability one half. Both markers live in one input space, so neither
/// task can be solved without reading the instruction.
fn make_input(s: &mut Stream) -> (String, bool, bool) {
    let n_words = 4 + s.below(3);
    let mut words: Vec<String> =
        (0..n_words).map(|_| (*s.choose(FILLERS)).to_string()).collect();
    let has_cat = s.next_f64() < 0.5;
    let has_blue = s.next_f64() < 0.5;
    if has_cat {
        let pos = s.below(words.len() + 1);
        words.insert(pos, "cat".to_string());
    }
    if has_blue {
        let pos = s.below(words.len() + 1);
        words.insert(pos, "blue".to_string());
    }
    (words.join(" "), has_cat, has_blue)
}

fn make_instances(
    spec: &TaskSpec,
    templates: &[InstructionTemplate],
    count: usize,
    stream: &mut Stream,
    id_prefix: &str,
) -> Vec<InstructionInstance> {
    (0..count)
        .map(|i| {
            let (input, has_cat, has_blue) = make_input(stream);
            let hit = if spec.marker == "cat" { has_cat } else { has_blue };
            let template_id = stream.below(6) as u32;
            let pattern = &templates
                .iter()
                .find(|t| t.task == spec.name && t.template_id == template_id)
                .expect("template exists")
                .pattern;
            InstructionInstance {
                id: format!("{}-{}-{:04}", spec.name, id_prefix, i),
                task: spec.name.to_string(),
                template_id,
                instruction: pattern.clone(),
                input,
                output: if hit { "yes".to_string() } else { "no".to_string() },
                label_options: vec!["yes".to_string(), "no".to_string()],
            }
        })
        .collect()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let out_dir = args.get(1).map(String::as_str).unwrap_or("data");
    let out = Path::new(out_dir);
    std::fs::create_dir_all(out).expect("create output directory");

    let specs = tasks();
    let root = Stream::from_seed(SEED);

    let mut templates: Vec<InstructionTemplate> = Vec::new();
    for spec in &specs {
        for (i, pattern) in spec.templates.iter().enumerate() {
            templates.push(InstructionTemplate {
                task: spec.name.to_string(),
                template_id: i as u32,
                pattern: (*pattern).to_string(),
            });
        }
    }

    // instruction sets must be pairwise distinct with eval unseen in training
    for spec in &specs {
        let mut all = BTreeSet::new();
        for s in spec.templates.iter().chain(&spec.eval_clean).chain(&spec.paraphrases) {
            assert!(all.insert(*s), "duplicate instruction string: {s}");
        }
    }

    let mut train = Vec::new();
    let mut eval = Vec::new();
    for spec in &specs {
        let mut train_stream = root.derive(spec.name).derive("train");
        train.extend(make_instances(spec, &templates, TRAIN_PER_TASK, &mut train_stream, "train"));
        let mut eval_stream = root.derive(spec.name).derive("eval");
        eval.extend(make_instances(spec, &templates, EVAL_PER_TASK, &mut eval_stream, "eval"));
    }

    write_jsonl(&out.join("train.jsonl"), &train).expect("write train");
    write_jsonl(&out.join("eval.jsonl"), &eval).expect("write eval");
    write_jsonl(&out.join("templates.jsonl"), &templates).expect("write templates");

    let clean_rows: Vec<GroupFileRow> = specs
        .iter()
        .map(|spec| GroupFileRow {
            task: spec.name.to_string(),
            group: PerturbationLevel::Clean,
            instructions: spec.eval_clean.iter().map(|s| s.to_string()).collect(),
        })
        .collect();
    write_jsonl(&out.join("eval_instructions.jsonl"), &clean_rows).expect("write instructions");

    #[derive(Serialize)]
    struct PoolRow {
        task: String,
        paraphrases: Vec<String>,
    }
    let pool_rows: Vec<PoolRow> = specs
        .iter()
        .map(|spec| PoolRow {
            task: spec.name.to_string(),
            paraphrases: spec.paraphrases.iter().map(|s| s.to_string()).collect(),
        })
        .collect();
    write_jsonl(&out.join("paraphrases.jsonl"), &pool_rows).expect("write paraphrases");

    write_text_atomic(&out.join("lexicon.tsv"), LEXICON).expect("write lexicon");
    write_text_atomic(
        &out.join("categories.json"),
        "{\n  \"animalwatch\": \"entity presence\",\n  \"colorwatch\": \"attribute presence\"\n}\n",
    )
    .expect("write categories");

    let yes = train.iter().filter(|e| e.output == "yes").count();
    println!(
        "wrote {} train ({} yes / {} no), {} eval rows to {}",
        train.len(),
        yes,
        train.len() - yes,
        eval.len(),
        out.display()
    );
}
