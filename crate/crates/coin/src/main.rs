//! `coin` — augment an instruction dataset with contrastive pairs, train
//! the toy model, perturb evaluation instructions, and measure robustness.

use clap::{Args, Parser, Subcommand};
use coin::objectives::CapMode;
use coin::perturb::PerturbationLevel;
use coin::pipeline::{
    cmd_augment, cmd_eval, cmd_perturb, cmd_project, cmd_train, AugmentArgs, EvalArgs,
    PerturbArgs, ProjectArgs, RunConfig, TrainArgs,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "coin", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the augmented dataset: paraphrase positives plus hard-negative references.
    Augment {
        /// Training data JSONL.
        #[arg(long)]
        data: PathBuf,
        /// Instruction templates JSONL.
        #[arg(long)]
        templates: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Cap on entries drawn by the round-robin pass.
        #[arg(long)]
        total: Option<usize>,
        /// Augmented output JSONL (exclusions go to `<out>.exclusions.jsonl`).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on an augmented dataset and write a checkpoint.
    Train {
        /// Augmented dataset JSONL (from `coin augment`).
        #[arg(long)]
        augmented: PathBuf,
        /// Checkpoint output path.
        #[arg(long)]
        out: PathBuf,
        /// Optional `key = value` config file applied before flags.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Per-step JSONL loss log.
        #[arg(long)]
        loss_log: Option<PathBuf>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Evaluate a checkpoint over perturbed instruction groups.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Evaluation instances JSONL.
        #[arg(long)]
        data: PathBuf,
        /// Instruction groups JSONL (from `coin perturb`).
        #[arg(long)]
        groups: PathBuf,
        /// Training data (raw or augmented) for the unseen-instruction guard.
        #[arg(long)]
        train_data: PathBuf,
        /// Task-to-category JSON map.
        #[arg(long)]
        categories: PathBuf,
        /// Report JSON output.
        #[arg(long)]
        out: PathBuf,
        /// Per-prediction score log JSONL.
        #[arg(long)]
        score_log: Option<PathBuf>,
        /// Hidden-state projection CSV.
        #[arg(long)]
        projection: Option<PathBuf>,
        /// Generation budget per prediction (defaults to the trained config).
        #[arg(long)]
        max_new: Option<usize>,
        /// Evaluate at most this many instances per task.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Derive perturbed instruction groups from clean instructions.
    Perturb {
        /// Clean instruction groups JSONL (one row per task, group "clean").
        #[arg(long)]
        instructions: PathBuf,
        /// One level, or all five groups when omitted.
        #[arg(long)]
        level: Option<PerturbationLevel>,
        #[arg(long)]
        seed: u64,
        /// Synonym lexicon (word<TAB>synonyms) for the word level.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Paraphrase pool JSONL for the semantic level.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Project last-token hidden states onto two principal components.
    Project {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        groups: PathBuf,
        /// Restrict to one task.
        #[arg(long)]
        task: Option<String>,
        /// Use at most this many instances per task.
        #[arg(long)]
        limit: Option<usize>,
        /// Output CSV (`group,instance_id,pc1,pc2`).
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct TrainOverrides {
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    lambda_cap: Option<f64>,
    #[arg(long)]
    cap_mode: Option<CapMode>,
    /// Cross-entropy-only baseline (skips the contrastive term).
    #[arg(long)]
    baseline_ce: bool,
    /// Average the positives' cross-entropy into each anchor's loss.
    #[arg(long)]
    ent_on_positives: bool,
    /// Use other anchors' positives as additional in-batch negatives.
    #[arg(long)]
    include_positive_negatives: bool,
    #[arg(long)]
    save_every: Option<usize>,
    #[arg(long)]
    max_new: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    d_ff: Option<usize>,
    #[arg(long)]
    context_len: Option<usize>,
}

impl TrainOverrides {
    fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
            (model $field:ident) => {
                if let Some(v) = self.$field {
                    cfg.model.$field = v;
                }
            };
        }
        set!(learning_rate);
        set!(batch_size);
        set!(epochs);
        set!(tau);
        set!(lambda_cap);
        set!(max_new);
        set!(model n_layers);
        set!(model n_heads);
        set!(model d_model);
        set!(model d_ff);
        set!(model context_len);
        if let Some(v) = self.max_steps {
            cfg.max_steps = Some(v);
        }
        if let Some(v) = self.save_every {
            cfg.save_every = Some(v);
        }
        if let Some(v) = self.cap_mode {
            cfg.cap_mode = v;
        }
        if self.baseline_ce {
            cfg.baseline_ce = true;
        }
        if self.ent_on_positives {
            cfg.ent_on_positives = true;
        }
        if self.include_positive_negatives {
            cfg.include_positive_negatives = true;
        }
    }
}

fn run() -> Result<(), coin::Error> {
    match Cli::parse().command {
        Command::Augment { data, templates, seed, total, out } => {
            let stats = cmd_augment(&AugmentArgs {
                data: &data,
                templates: &templates,
                seed,
                total,
                out: &out,
            })?;
            println!(
                "augment: wrote {} rows to {} ({} excluded)",
                stats.rows,
                out.display(),
                stats.excluded
            );
        }
        Command::Train { augmented, out, config, seed, loss_log, overrides } => {
            let mut cfg = RunConfig::desk_default(seed);
            if let Some(config_path) = config {
                let text = std::fs::read_to_string(&config_path).map_err(|e| {
                    coin::pipeline::PipelineError::Io {
                        path: config_path.display().to_string(),
                        source: e,
                    }
                })?;
                cfg.apply_config_text(&text, &config_path.display().to_string())?;
            }
            cfg.seed = seed;
            overrides.apply(&mut cfg);
            let stats = cmd_train(&TrainArgs {
                config: cfg,
                augmented: &augmented,
                out_ckpt: &out,
                loss_log: loss_log.as_deref(),
            })?;
            println!(
                "train: {} steps, final loss {:.6}, checkpoint {} ({} anchors dropped)",
                stats.steps,
                stats.final_l_total,
                out.display(),
                stats.dropped_anchors
            );
        }
        Command::Eval {
            ckpt,
            data,
            groups,
            train_data,
            categories,
            out,
            score_log,
            projection,
            max_new,
            limit,
        } => {
            let report = cmd_eval(&EvalArgs {
                ckpt: &ckpt,
                data: &data,
                groups: &groups,
                train_data: &train_data,
                categories: &categories,
                out_report: &out,
                score_log: score_log.as_deref(),
                projection: projection.as_deref(),
                max_new,
                limit,
            })?;
            for m in &report.metrics {
                println!(
                    "eval: {:<14} {:<9} accuracy {:.4} ± {:.4}",
                    m.task,
                    m.group.name(),
                    m.mean,
                    m.std
                );
            }
            println!("eval: report written to {}", out.display());
        }
        Command::Perturb { instructions, level, seed, lexicon, pool, out } => {
            cmd_perturb(&PerturbArgs {
                instructions: &instructions,
                level,
                seed,
                lexicon: lexicon.as_deref(),
                pool: pool.as_deref(),
                out: &out,
            })?;
            println!("perturb: wrote {}", out.display());
        }
        Command::Project { ckpt, data, groups, task, limit, out } => {
            let n = cmd_project(&ProjectArgs {
                ckpt: &ckpt,
                data: &data,
                groups: &groups,
                task: task.as_deref(),
                limit,
                out: &out,
            })?;
            println!("project: wrote {n} points to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
