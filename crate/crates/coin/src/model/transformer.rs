//! Forward pass, hidden-state extraction and greedy decoding.

use super::tokenizer::{render_training_sequence, EOS};
use super::{ModelConfig, ModelError, Params, TokenSequence};
use crate::autodiff::{BoundParams, Tape, Tensor, Var};
use crate::Error;

/// Broadcasts a `[1,n]` row to `[rows,n]` via `ones[rows,1] @ row`.
fn broadcast_row(tape: &mut Tape, ones_col: Var, row: Var) -> Result<Var, Error> {
    Ok(tape.matmul(ones_col, row)?)
}

fn layer_norm_affine(
    tape: &mut Tape,
    ones_col: Var,
    x: Var,
    gamma: Var,
    beta: Var,
) -> Result<Var, Error> {
    let normed = tape.layer_norm_rows(x)?;
    let g = broadcast_row(tape, ones_col, gamma)?;
    let b = broadcast_row(tape, ones_col, beta)?;
    let scaled = tape.mul(normed, g)?;
    Ok(tape.add(scaled, b)?)
}

fn linear(
    tape: &mut Tape,
    ones_col: Var,
    x: Var,
    w: Var,
    b: Var,
) -> Result<Var, Error> {
    let xw = tape.matmul(x, w)?;
    let bb = broadcast_row(tape, ones_col, b)?;
    Ok(tape.add(xw, bb)?)
}

/// Runs the decoder stack and returns the `[len, d_model]` hidden states
/// after the final layer norm (the representation fed to the unembedding).
pub fn hidden_states(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    seq: &TokenSequence,
) -> Result<Var, Error> {
    let len = seq.len();
    if len == 0 || len > cfg.context_len {
        return Err(ModelError::ContextExceeded { len, context_len: cfg.context_len }.into());
    }
    let ones_col = tape.constant(Tensor::matrix(len, 1, vec![1.0; len])?);

    let tok = tape.embedding_lookup(bound.var("embed.tok"), &seq.ids)?;
    let pos_all = bound.var("embed.pos");
    let pos = tape.slice_rows(pos_all, 0, len)?;
    let mut x = tape.add(tok, pos)?;

    let head_dim = cfg.head_dim();
    let scale = 1.0 / (head_dim as f64).sqrt();
    for l in 0..cfg.n_layers {
        let p = |part: &str| bound.var(&format!("layer{l}.{part}"));

        let x_ln = layer_norm_affine(tape, ones_col, x, p("ln1.gamma"), p("ln1.beta"))?;
        let q = linear(tape, ones_col, x_ln, p("attn.wq"), p("attn.bq"))?;
        let k = linear(tape, ones_col, x_ln, p("attn.wk"), p("attn.bk"))?;
        let v = linear(tape, ones_col, x_ln, p("attn.wv"), p("attn.bv"))?;
        let q_t = tape.transpose(q)?;
        let k_t = tape.transpose(k)?;
        let v_t = tape.transpose(v)?;

        let mut head_outs_t = Vec::with_capacity(cfg.n_heads);
        for h in 0..cfg.n_heads {
            let q_h_t = tape.slice_rows(q_t, h * head_dim, head_dim)?;
            let q_h = tape.transpose(q_h_t)?;
            // slice of k^T is already k_h^T, exactly what the score matmul needs
            let k_h_t = tape.slice_rows(k_t, h * head_dim, head_dim)?;
            let scores = tape.matmul(q_h, k_h_t)?;
            let scaled = tape.scale(scores, scale)?;
            let masked = tape.causal_mask_add(scaled)?;
            let attn = tape.softmax_rows(masked)?;
            let v_h_t = tape.slice_rows(v_t, h * head_dim, head_dim)?;
            let v_h = tape.transpose(v_h_t)?;
            let out_h = tape.matmul(attn, v_h)?;
            head_outs_t.push(tape.transpose(out_h)?);
        }
        let concat_t = tape.concat_rows(&head_outs_t)?;
        let concat = tape.transpose(concat_t)?;
        let attn_out = linear(tape, ones_col, concat, p("attn.wo"), p("attn.bo"))?;
        x = tape.add(x, attn_out)?;

        let x_ln2 = layer_norm_affine(tape, ones_col, x, p("ln2.gamma"), p("ln2.beta"))?;
        let h1_pre = linear(tape, ones_col, x_ln2, p("ffn.w1"), p("ffn.b1"))?;
        let h1 = tape.tanh(h1_pre)?;
        let ffn_out = linear(tape, ones_col, h1, p("ffn.w2"), p("ffn.b2"))?;
        x = tape.add(x, ffn_out)?;
    }

    layer_norm_affine(tape, ones_col, x, bound.var("ln_f.gamma"), bound.var("ln_f.beta"))
}

/// Unembeds rows `start..start+rows` of a hidden-state matrix.
pub fn logits_for_rows(
    tape: &mut Tape,
    bound: &BoundParams,
    hidden: Var,
    start: usize,
    rows: usize,
) -> Result<Var, Error> {
    let h = tape.slice_rows(hidden, start, rows)?;
    let ones_col = tape.constant(Tensor::matrix(rows, 1, vec![1.0; rows])?);
    linear(tape, ones_col, h, bound.var("unembed.w"), bound.var("unembed.b"))
}

/// Full forward: next-token logits `[len, vocab]` plus the hidden states
/// `[len, d_model]` they were read from.
pub fn forward(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    seq: &TokenSequence,
) -> Result<(Var, Var), Error> {
    let hidden = hidden_states(tape, bound, cfg, seq)?;
    let logits = logits_for_rows(tape, bound, hidden, 0, seq.len())?;
    Ok((logits, hidden))
}

/// Hidden state at the final (EOS) position of the rendered training
/// sequence `BOS I SEP x SEP y EOS`, shape `[1, d_model]`.
pub fn last_token_hidden(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    instruction: &str,
    input: &str,
    output: &str,
) -> Result<Var, Error> {
    let seq = render_training_sequence(instruction, input, output, cfg.context_len)?;
    let hidden = hidden_states(tape, bound, cfg, &seq)?;
    Ok(tape.slice_rows(hidden, seq.len() - 1, 1)?)
}

/// Logits for the last position only, shape `[1, vocab]`.
pub fn next_token_logits(
    tape: &mut Tape,
    bound: &BoundParams,
    cfg: &ModelConfig,
    seq: &TokenSequence,
) -> Result<Var, Error> {
    let hidden = hidden_states(tape, bound, cfg, seq)?;
    logits_for_rows(tape, bound, hidden, seq.len() - 1, 1)
}

fn argmax_lowest_id(row: &[f64]) -> usize {
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Greedy decoding: repeatedly appends the argmax token (ties broken by
/// lowest id) until EOS, `max_new` tokens, or the context fills up.
/// Returns the generated text (special tokens dropped).
pub fn greedy_generate(
    params: &Params,
    prompt: &TokenSequence,
    max_new: usize,
) -> Result<String, Error> {
    let cfg = params.config();
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let mut seq = prompt.clone();
    let mut generated = Vec::new();
    for _ in 0..max_new {
        if seq.len() >= cfg.context_len {
            break;
        }
        let logits = next_token_logits(&mut tape, &bound, cfg, &seq)?;
        let next = argmax_lowest_id(tape.data(logits));
        if next == EOS {
            break;
        }
        generated.push(next);
        seq.ids.push(next);
    }
    Ok(super::tokenizer::detokenize(&generated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tokenizer::{render_prompt_sequence, tokenize};
    use crate::rng::Stream;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            n_layers: 2,
            n_heads: 2,
            d_model: 16,
            d_ff: 24,
            vocab_size: 260,
            context_len: 32,
        }
    }

    fn tiny_params(seed: u64) -> Params {
        Params::init(&tiny_config(), &Stream::from_seed(seed)).unwrap()
    }

    #[test]
    fn forward_shapes() {
        let params = tiny_params(3);
        let seq = tokenize("hello");
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let (logits, hidden) = forward(&mut tape, &bound, params.config(), &seq).unwrap();
        assert_eq!(tape.value(logits).shape(), &[6, 260]);
        assert_eq!(tape.value(hidden).shape(), &[6, 16]);
    }

    #[test]
    fn forward_is_deterministic() {
        let params = tiny_params(3);
        let seq = tokenize("abc");
        let run = || {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, false);
            let (logits, _) = forward(&mut tape, &bound, params.config(), &seq).unwrap();
            tape.data(logits).to_vec()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn causality_logits_ignore_future_tokens() {
        let params = tiny_params(5);
        let mut seq_a = tokenize("abcdef");
        let mut seq_b = seq_a.clone();
        // permute tokens strictly after position 3
        let n = seq_a.len();
        seq_b.ids[4..n].reverse();
        assert_ne!(seq_a.ids, seq_b.ids);
        seq_a.input_span = 0..0;
        seq_b.input_span = 0..0;

        let logits_at = |seq: &TokenSequence, t: usize| {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, false);
            let (logits, _) = forward(&mut tape, &bound, params.config(), seq).unwrap();
            tape.data(logits)[t * 260..(t + 1) * 260].to_vec()
        };
        for t in 0..4 {
            let a = logits_at(&seq_a, t);
            let b = logits_at(&seq_b, t);
            assert!(
                a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()),
                "logits at position {t} depend on future tokens"
            );
        }
    }

    #[test]
    fn last_token_hidden_ignores_trailing_pad() {
        use crate::model::tokenizer::PAD;
        let params = tiny_params(7);
        let cfg = params.config();
        let seq = render_training_sequence("do", "x", "y", cfg.context_len).unwrap();
        let eos_pos = seq.len() - 1;

        let mut padded = seq.clone();
        padded.ids.extend([PAD, PAD, PAD]);

        let row = |s: &TokenSequence| {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape, false);
            let h = hidden_states(&mut tape, &bound, cfg, s).unwrap();
            let d = cfg.d_model;
            tape.data(h)[eos_pos * d..(eos_pos + 1) * d].to_vec()
        };
        let a = row(&seq);
        let b = row(&padded);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn greedy_generate_is_deterministic_and_stops_at_eos() {
        let params = tiny_params(11);
        let prompt = render_prompt_sequence("say", "x", params.config().context_len).unwrap();
        let a = greedy_generate(&params, &prompt, 8).unwrap();
        let b = greedy_generate(&params, &prompt, 8).unwrap();
        assert_eq!(a, b);
        assert!(a.len() <= 8);
    }

    #[test]
    fn context_overflow_rejected() {
        let params = tiny_params(1);
        let cfg = params.config();
        let mut seq = tokenize("x");
        seq.ids = vec![97; cfg.context_len + 1];
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, false);
        let err = hidden_states(&mut tape, &bound, cfg, &seq).unwrap_err();
        assert!(matches!(
            err,
            Error::Model(ModelError::ContextExceeded { .. })
        ));
    }
}
