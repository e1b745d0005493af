//! The training loop: assemble same-instruction batches, forward anchors
//! and positives, combine the per-anchor losses, backpropagate, and apply
//! plain SGD with a fixed learning rate.
//!
//! The batch stream depends only on (seed, data, batch size); the loss mode
//! never enters batch assembly or ordering, so a contrastive run and its
//! CE-only baseline at the same seed consume identical batches.

use super::{PipelineError, RunConfig};
use crate::autodiff::{Tape, Var};
use crate::data::{assemble_batches, validate_augmented_dataset, AugmentedInstance, TrainBatch};
use crate::model::{hidden_states, render_training_sequence, Params};
use crate::objectives::{
    coin_combined_loss, contrastive_loss, cross_entropy_over_output_span, CapMode,
};
use crate::rng::Stream;
use crate::Error;
use serde::{Deserialize, Serialize};

/// One logged training step (batch means).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub l_ent: f64,
    pub l_ctr: f64,
    pub ratio: f64,
    pub weight: f64,
    pub l_total: f64,
}

/// Called after every optimizer step; used for periodic checkpointing.
pub type TrainHook<'a> = &'a mut dyn FnMut(&Params, u64, &StepLog) -> Result<(), Error>;

pub struct TrainOutcome {
    pub params: Params,
    pub steps: u64,
    pub logs: Vec<StepLog>,
    pub dropped_anchors: usize,
    pub rng_state: u64,
}

const COLLAPSE_FLOOR: f64 = 1e-12;

/// Per-batch forward/backward. Returns the step log entry.
fn train_step(
    config: &RunConfig,
    params: &mut Params,
    batch: &TrainBatch,
    step: u64,
) -> Result<StepLog, Error> {
    let cfg = &config.model;
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true);

    let b = batch.members.len();
    let mut anchor_hidden: Vec<Var> = Vec::with_capacity(b);
    let mut anchor_ce: Vec<Var> = Vec::with_capacity(b);
    let mut positive_hidden: Vec<Var> = Vec::with_capacity(b);
    let mut positive_ce: Vec<Var> = Vec::with_capacity(b);

    for member in &batch.members {
        let seq = render_training_sequence(
            &member.instruction,
            &member.input,
            &member.output,
            cfg.context_len,
        )?;
        let hidden = hidden_states(&mut tape, &bound, cfg, &seq)?;
        anchor_ce.push(cross_entropy_over_output_span(&mut tape, &bound, hidden, &seq)?);
        anchor_hidden.push(tape.slice_rows(hidden, seq.len() - 1, 1)?);

        if !config.baseline_ce {
            let pos_seq = render_training_sequence(
                &member.positive_instruction,
                &member.input,
                &member.output,
                cfg.context_len,
            )?;
            let pos_hidden = hidden_states(&mut tape, &bound, cfg, &pos_seq)?;
            if config.ent_on_positives {
                positive_ce.push(cross_entropy_over_output_span(
                    &mut tape, &bound, pos_hidden, &pos_seq,
                )?);
            }
            positive_hidden.push(tape.slice_rows(pos_hidden, pos_seq.len() - 1, 1)?);
        }
    }

    let mut l_ent_sum = 0.0;
    let mut l_ctr_sum = 0.0;
    let mut ratio_sum = 0.0;
    let mut weight_sum = 0.0;

    let batch_loss = if config.baseline_ce {
        let cat = tape.concat_rows(&anchor_ce)?;
        let loss = tape.mean(cat)?;
        l_ent_sum = anchor_ce.iter().map(|&v| tape.scalar_value(v)).sum();
        loss
    } else {
        let mut totals = Vec::with_capacity(b);
        for i in 0..b {
            let l_ent = if config.ent_on_positives {
                let pair = tape.concat_rows(&[anchor_ce[i], positive_ce[i]])?;
                tape.mean(pair)?
            } else {
                anchor_ce[i]
            };
            let mut negatives: Vec<Var> =
                batch.negative_sets[i].iter().map(|&j| anchor_hidden[j]).collect();
            if config.include_positive_negatives {
                negatives.extend(batch.negative_sets[i].iter().map(|&j| positive_hidden[j]));
            }
            let l_ctr = contrastive_loss(
                &mut tape,
                anchor_hidden[i],
                positive_hidden[i],
                &negatives,
                config.tau,
            )?;
            // Fully separated pairs underflow l_ctr to exactly 0 in f64
            // (gap/τ beyond ~37 rounds 1 + Σe^{-gap/τ} to 1). The ratio
            // limit is +∞, so under the upper-bound cap the weight is λ;
            // paper-literal cannot take this limit and aborts via the guard.
            let (weight, ratio, total) = if tape.scalar_value(l_ctr) == 0.0
                && config.cap_mode == CapMode::CapAbove
            {
                let total =
                    crate::objectives::combined_loss_with_weight(&mut tape, l_ent, l_ctr, config.lambda_cap)?;
                (config.lambda_cap, f64::MAX, total)
            } else {
                let combined = coin_combined_loss(
                    &mut tape,
                    l_ent,
                    l_ctr,
                    config.lambda_cap,
                    config.cap_mode,
                )?;
                (combined.weight, combined.ratio, combined.total)
            };
            l_ent_sum += tape.scalar_value(l_ent);
            l_ctr_sum += tape.scalar_value(l_ctr);
            ratio_sum += ratio;
            weight_sum += weight;
            totals.push(total);
        }
        let cat = tape.concat_rows(&totals)?;
        tape.mean(cat)?
    };

    let loss_value = tape.scalar_value(batch_loss);
    if !loss_value.is_finite() {
        return Err(PipelineError::TrainAbort(format!(
            "non-finite loss {loss_value} at step {step}"
        ))
        .into());
    }
    let l_ctr_mean = l_ctr_sum / b as f64;
    if !config.baseline_ce {
        // A vanishing contrastive loss is only a problem when the weight is
        // the raw ratio (paper-literal above the cap): there it blows up as
        // 1/l_ctr. Under the upper-bound cap the weight saturates at λ and a
        // tiny l_ctr just means the pairs are already separated. Degenerate
        // (collapsed-norm) representations surface separately as
        // degenerate-vector errors from the cosine.
        let runaway =
            config.cap_mode == CapMode::PaperLiteral && l_ctr_mean < COLLAPSE_FLOOR;
        if !l_ctr_mean.is_finite() || l_ctr_mean < 0.0 || runaway {
            return Err(PipelineError::TrainAbort(format!(
                "contrastive collapse at step {step}: mean contrastive loss {l_ctr_mean:e}"
            ))
            .into());
        }
    }

    let grads = tape.backward(batch_loss)?;
    let named: Vec<(String, crate::autodiff::Tensor)> = bound
        .entries()
        .iter()
        .map(|(name, var)| (name.clone(), grads.grad_or_zeros(&tape, *var)))
        .collect();
    drop(tape);
    params.sgd_step(&named, config.learning_rate);

    Ok(StepLog {
        step,
        l_ent: l_ent_sum / b as f64,
        l_ctr: l_ctr_mean,
        ratio: ratio_sum / b as f64,
        weight: weight_sum / b as f64,
        l_total: loss_value,
    })
}

/// Trains from scratch on an augmented dataset. `hook` runs after every
/// step (checkpoint cadence is the caller's concern).
pub fn train(
    config: &RunConfig,
    rows: &[AugmentedInstance],
    mut hook: Option<TrainHook>,
) -> Result<TrainOutcome, Error> {
    config.validate().map_err(Error::from)?;
    validate_augmented_dataset(rows)?;
    let assembly = assemble_batches(rows, config.batch_size)?;
    if assembly.batches.is_empty() {
        return Err(PipelineError::TrainAbort(
            "no trainable batches: every instruction group is label-homogeneous".into(),
        )
        .into());
    }

    let seed_stream = Stream::from_seed(config.seed);
    let mut params = Params::init(&config.model, &seed_stream.derive("model"))?;

    let budget = config
        .max_steps
        .unwrap_or(config.epochs.max(1) * assembly.batches.len()) as u64;
    let mut logs = Vec::with_capacity(budget as usize);
    let mut step: u64 = 0;
    let order_root = seed_stream.derive("batch-order");

    'training: for epoch in 0.. {
        let mut order: Vec<usize> = (0..assembly.batches.len()).collect();
        let mut order_rng = order_root.derive_u64(epoch);
        order_rng.shuffle(&mut order);
        for &bi in &order {
            if step == budget {
                break 'training;
            }
            step += 1;
            let log = train_step(config, &mut params, &assembly.batches[bi], step)?;
            if let Some(h) = hook.as_mut() {
                h(&params, step, &log)?;
            }
            logs.push(log);
        }
        if step == budget {
            break;
        }
    }

    Ok(TrainOutcome {
        params,
        steps: step,
        logs,
        dropped_anchors: assembly.dropped,
        rng_state: seed_stream.derive("train").state(),
    })
}
