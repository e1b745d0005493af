//! Loss terms: cosine similarity, the contrastive loss over one positive
//! and a set of hard negatives, sequence cross-entropy over the output
//! span, and their ratio-weighted combination.
//!
//! All losses are composed from tape primitives, so gradients flow through
//! both terms. The combination weight is a plain scalar read off the
//! forward values (the detached ratio), never part of the graph.

use crate::autodiff::{BoundParams, Tape, Tensor, Var};
use crate::model::{logits_for_rows, TokenSequence};
use crate::Error;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ObjectiveError {
    #[error("degenerate vector with squared norm {norm_sq:e}; representation collapsed")]
    DegenerateVector { norm_sq: f64 },
    #[error("vectors have different shapes {lhs:?} and {rhs:?}")]
    DimensionMismatch { lhs: Vec<usize>, rhs: Vec<usize> },
    #[error("contrastive loss requires at least one negative")]
    EmptyNegatives,
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("sequence has an empty output span")]
    EmptyOutputSpan,
    #[error("contrastive loss is {l_ctr:e}; cannot form the weighting ratio")]
    ContrastiveCollapse { l_ctr: f64 },
    #[error("lambda cap must be positive, got {0}")]
    BadLambda(f64),
}

/// How the weight cap is applied to the detached ratio.
///
/// `CapAbove` treats λ as an upper bound: `weight = min(λ, ratio)`.
/// `PaperLiteral` applies `max(λ, ratio)` — the formula as displayed, kept
/// selectable for faithfulness experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapMode {
    CapAbove,
    PaperLiteral,
}

impl std::str::FromStr for CapMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cap-above" => Ok(CapMode::CapAbove),
            "paper-literal" => Ok(CapMode::PaperLiteral),
            other => Err(format!("unknown cap mode {other:?} (expected cap-above or paper-literal)")),
        }
    }
}

/// Per-anchor loss record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossReport {
    pub l_ent: f64,
    pub l_ctr: f64,
    pub weight: f64,
    pub l_total: f64,
    pub tau: f64,
    pub lambda_cap: f64,
}

impl LossReport {
    pub fn new(l_ent: f64, l_ctr: f64, weight: f64, tau: f64, lambda_cap: f64) -> Self {
        LossReport { l_ent, l_ctr, weight, l_total: l_ent + weight * l_ctr, tau, lambda_cap }
    }
}

const MIN_NORM_SQ: f64 = 1e-24;

/// Cosine similarity of two same-shape vectors on the tape, shape `[1]`.
/// Errors if either norm is below 1e-12.
pub fn cosine_similarity(tape: &mut Tape, a: Var, b: Var) -> Result<Var, Error> {
    let (sa, sb) = (tape.value(a).shape().to_vec(), tape.value(b).shape().to_vec());
    if sa != sb {
        return Err(ObjectiveError::DimensionMismatch { lhs: sa, rhs: sb }.into());
    }
    let aa = tape.mul(a, a)?;
    let ss_a = tape.sum(aa)?;
    let bb = tape.mul(b, b)?;
    let ss_b = tape.sum(bb)?;
    for ss in [ss_a, ss_b] {
        let v = tape.scalar_value(ss);
        if v <= MIN_NORM_SQ {
            return Err(ObjectiveError::DegenerateVector { norm_sq: v }.into());
        }
    }
    let ab = tape.mul(a, b)?;
    let dot = tape.sum(ab)?;
    // 1/‖a‖ = exp(-0.5·log(‖a‖²)); keeps the whole expression differentiable
    let log_a = tape.log(ss_a)?;
    let half_a = tape.scale(log_a, -0.5)?;
    let inv_a = tape.exp(half_a)?;
    let log_b = tape.log(ss_b)?;
    let half_b = tape.scale(log_b, -0.5)?;
    let inv_b = tape.exp(half_b)?;
    let partial = tape.mul(dot, inv_a)?;
    Ok(tape.mul(partial, inv_b)?)
}

/// Plain-f64 cosine similarity for metrics (no tape, no gradients).
pub fn cosine_similarity_f64(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// InfoNCE-style loss from precomputed similarity scores, shape `[1]`:
/// `-log( e^{s⁺/τ} / (e^{s⁺/τ} + Σ_j e^{s_j⁻/τ}) )`, evaluated through a
/// max-shifted log-sum-exp.
pub fn contrastive_loss_from_sims(
    tape: &mut Tape,
    sim_pos: Var,
    sim_negs: &[Var],
    tau: f64,
) -> Result<Var, Error> {
    if tau <= 0.0 {
        return Err(ObjectiveError::BadTemperature(tau).into());
    }
    if sim_negs.is_empty() {
        return Err(ObjectiveError::EmptyNegatives.into());
    }
    let inv_tau = 1.0 / tau;
    let score_pos = tape.scale(sim_pos, inv_tau)?;
    let mut scores = Vec::with_capacity(1 + sim_negs.len());
    scores.push(score_pos);
    for &s in sim_negs {
        scores.push(tape.scale(s, inv_tau)?);
    }
    // max shift is a constant; its gradient contribution cancels exactly
    let m = scores
        .iter()
        .map(|&s| tape.scalar_value(s))
        .fold(f64::NEG_INFINITY, f64::max);
    let neg_m = tape.constant(Tensor::scalar(-m));
    let shifted: Vec<Var> = scores
        .iter()
        .map(|&s| tape.add(s, neg_m))
        .collect::<Result<_, _>>()?;
    let cat = tape.concat_rows(&shifted)?;
    let exps = tape.exp(cat)?;
    let z = tape.sum(exps)?;
    let log_z = tape.log(z)?;
    let neg_pos = tape.scale(shifted[0], -1.0)?;
    Ok(tape.add(log_z, neg_pos)?)
}

/// Contrastive loss over hidden representations: anchor vs one positive and
/// `negs` hard negatives, at temperature `tau`.
pub fn contrastive_loss(
    tape: &mut Tape,
    h: Var,
    h_pos: Var,
    negs: &[Var],
    tau: f64,
) -> Result<Var, Error> {
    if tau <= 0.0 {
        return Err(ObjectiveError::BadTemperature(tau).into());
    }
    if negs.is_empty() {
        return Err(ObjectiveError::EmptyNegatives.into());
    }
    let sim_pos = cosine_similarity(tape, h, h_pos)?;
    let sim_negs: Vec<Var> = negs
        .iter()
        .map(|&n| cosine_similarity(tape, h, n))
        .collect::<Result<_, _>>()?;
    contrastive_loss_from_sims(tape, sim_pos, &sim_negs, tau)
}

/// Mean `-log p(gold)` over the rows of a `[l, vocab]` logit slice.
fn cross_entropy_from_span(
    tape: &mut Tape,
    span_logits: Var,
    gold: &[usize],
) -> Result<Var, Error> {
    let (l, v) = tape
        .value(span_logits)
        .dims2()
        .expect("span logits are rank 2");
    debug_assert_eq!(l, gold.len());
    let p = tape.softmax_rows(span_logits)?;
    let mut onehot = vec![0.0; l * v];
    for (row, &g) in gold.iter().enumerate() {
        onehot[row * v + g] = 1.0;
    }
    let mask = tape.constant(Tensor::matrix(l, v, onehot)?);
    let picked = tape.mul(p, mask)?;
    let ones_v = tape.constant(Tensor::matrix(v, 1, vec![1.0; v])?);
    let gold_p = tape.matmul(picked, ones_v)?;
    let log_p = tape.log(gold_p)?;
    let mean = tape.mean(log_p)?;
    Ok(tape.scale(mean, -1.0)?)
}

/// `(1/l) Σ_k −log p(y_k | I, x, y_{<k})` over the output span only, from
/// full `[len, vocab]` logits aligned with `seq`.
pub fn sequence_cross_entropy(
    tape: &mut Tape,
    logits: Var,
    seq: &TokenSequence,
) -> Result<Var, Error> {
    if seq.output_span.is_empty() {
        return Err(ObjectiveError::EmptyOutputSpan.into());
    }
    let l = seq.output_len();
    let span = tape.slice_rows(logits, seq.output_span.start - 1, l)?;
    let gold: Vec<usize> = seq.ids[seq.output_span.clone()].to_vec();
    cross_entropy_from_span(tape, span, &gold)
}

/// Same value as [`sequence_cross_entropy`], but unembeds only the rows
/// that predict output tokens. Used by the training loop.
pub fn cross_entropy_over_output_span(
    tape: &mut Tape,
    bound: &BoundParams,
    hidden: Var,
    seq: &TokenSequence,
) -> Result<Var, Error> {
    if seq.output_span.is_empty() {
        return Err(ObjectiveError::EmptyOutputSpan.into());
    }
    let l = seq.output_len();
    let span_logits = logits_for_rows(tape, bound, hidden, seq.output_span.start - 1, l)?;
    let gold: Vec<usize> = seq.ids[seq.output_span.clone()].to_vec();
    cross_entropy_from_span(tape, span_logits, &gold)
}

/// The combined objective with its detached ratio weight.
pub struct CombinedLoss {
    /// Applied weight (a constant in the graph).
    pub weight: f64,
    /// Raw detached ratio `l_ent / l_ctr` before the cap.
    pub ratio: f64,
    pub total: Var,
}

/// `l_total = l_ent + weight · l_ctr`, where `weight` caps the detached
/// ratio `l_ent/l_ctr` per `mode`. Gradients flow through both loss terms
/// but never through the weight.
pub fn coin_combined_loss(
    tape: &mut Tape,
    l_ent: Var,
    l_ctr: Var,
    lambda_cap: f64,
    mode: CapMode,
) -> Result<CombinedLoss, Error> {
    if lambda_cap <= 0.0 {
        return Err(ObjectiveError::BadLambda(lambda_cap).into());
    }
    let le = tape.scalar_value(l_ent);
    let lc = tape.scalar_value(l_ctr);
    if lc <= 0.0 {
        return Err(ObjectiveError::ContrastiveCollapse { l_ctr: lc }.into());
    }
    let ratio = le / lc;
    let weight = match mode {
        CapMode::CapAbove => ratio.min(lambda_cap),
        CapMode::PaperLiteral => ratio.max(lambda_cap),
    };
    let total = combined_loss_with_weight(tape, l_ent, l_ctr, weight)?;
    Ok(CombinedLoss { weight, ratio, total })
}

/// `l_ent + weight · l_ctr` with an externally fixed weight. This is the
/// function the optimizer actually descends at a given step, and the form
/// gradient checks must differentiate.
pub fn combined_loss_with_weight(
    tape: &mut Tape,
    l_ent: Var,
    l_ctr: Var,
    weight: f64,
) -> Result<Var, Error> {
    let scaled = tape.scale(l_ctr, weight)?;
    Ok(tape.add(l_ent, scaled)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    fn vec_var(tape: &mut Tape, data: Vec<f64>) -> Var {
        tape.constant(Tensor::vector(data))
    }

    #[test]
    fn cosine_basics() {
        let mut tape = Tape::new();
        let v = vec_var(&mut tape, vec![0.3, -1.2, 0.7]);
        let sim = cosine_similarity(&mut tape, v, v).unwrap();
        assert!((tape.scalar_value(sim) - 1.0).abs() < 1e-12);

        let e1 = vec_var(&mut tape, vec![1.0, 0.0]);
        let e2 = vec_var(&mut tape, vec![0.0, 1.0]);
        let sim = cosine_similarity(&mut tape, e1, e2).unwrap();
        assert_eq!(tape.scalar_value(sim), 0.0);

        let a = vec_var(&mut tape, vec![1.0, 2.0]);
        let b = vec_var(&mut tape, vec![2.0, 4.0]);
        let sim = cosine_similarity(&mut tape, a, b).unwrap();
        assert!((tape.scalar_value(sim) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_rejects_near_zero_norm() {
        let mut tape = Tape::new();
        let z = vec_var(&mut tape, vec![0.0, 1e-14]);
        let v = vec_var(&mut tape, vec![1.0, 0.0]);
        let err = cosine_similarity(&mut tape, z, v).unwrap_err();
        assert!(matches!(
            err,
            Error::Objective(ObjectiveError::DegenerateVector { .. })
        ));
    }

    #[test]
    fn cosine_matches_plain_route() {
        let mut s = Stream::from_seed(4);
        for _ in 0..200 {
            let d = 2 + s.below(30);
            let a: Vec<f64> = (0..d).map(|_| s.uniform(-2.0, 2.0)).collect();
            let b: Vec<f64> = (0..d).map(|_| s.uniform(-2.0, 2.0)).collect();
            let mut tape = Tape::new();
            let va = vec_var(&mut tape, a.clone());
            let vb = vec_var(&mut tape, b.clone());
            if let Ok(sim) = cosine_similarity(&mut tape, va, vb) {
                let plain = cosine_similarity_f64(&a, &b);
                assert!((tape.scalar_value(sim) - plain).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn contrastive_symmetric_case_is_ln2() {
        let mut tape = Tape::new();
        let h = vec_var(&mut tape, vec![1.0, 0.0]);
        let pos = vec_var(&mut tape, vec![0.0, 1.0]);
        let neg = vec_var(&mut tape, vec![0.0, 1.0]);
        let loss = contrastive_loss(&mut tape, h, pos, &[neg], 0.05).unwrap();
        assert!((tape.scalar_value(loss) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn contrastive_separated_case_matches_closed_form() {
        // sim⁺ = 1, sim⁻ = 0, τ = 0.05 → ln(1 + e^{-20})
        let mut tape = Tape::new();
        let h = vec_var(&mut tape, vec![1.0, 0.0]);
        let pos = vec_var(&mut tape, vec![2.0, 0.0]);
        let neg = vec_var(&mut tape, vec![0.0, 3.0]);
        let loss = contrastive_loss(&mut tape, h, pos, &[neg], 0.05).unwrap();
        let expected = (-20.0f64).exp().ln_1p();
        assert!((tape.scalar_value(loss) - expected).abs() < 1e-12);
    }

    #[test]
    fn contrastive_equal_sims_is_ln_one_plus_j() {
        for j in 1..=7 {
            let mut tape = Tape::new();
            let h = vec_var(&mut tape, vec![1.0, 1.0]);
            let pos = vec_var(&mut tape, vec![2.0, 2.0]);
            let negs: Vec<Var> =
                (0..j).map(|k| vec_var(&mut tape, vec![0.5 * (k + 1) as f64; 2])).collect();
            let loss = contrastive_loss(&mut tape, h, pos, &negs, 0.05).unwrap();
            let expected = (1.0 + j as f64).ln();
            assert!((tape.scalar_value(loss) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn contrastive_rejects_empty_negatives_and_bad_tau() {
        let mut tape = Tape::new();
        let h = vec_var(&mut tape, vec![1.0, 0.0]);
        let pos = vec_var(&mut tape, vec![0.0, 1.0]);
        assert!(matches!(
            contrastive_loss(&mut tape, h, pos, &[], 0.05),
            Err(Error::Objective(ObjectiveError::EmptyNegatives))
        ));
        let neg = vec_var(&mut tape, vec![1.0, 1.0]);
        assert!(matches!(
            contrastive_loss(&mut tape, h, pos, &[neg], 0.0),
            Err(Error::Objective(ObjectiveError::BadTemperature(_)))
        ));
    }

    /// Naive softmax oracle: no log-sum-exp shift, straight exponentials.
    fn naive_nce(sim_pos: f64, sim_negs: &[f64], tau: f64) -> f64 {
        let num = (sim_pos / tau).exp();
        let den: f64 = num + sim_negs.iter().map(|s| (s / tau).exp()).sum::<f64>();
        -(num / den).ln()
    }

    #[test]
    fn contrastive_matches_naive_oracle_on_random_vectors() {
        let mut s = Stream::from_seed(99);
        for _ in 0..300 {
            let d = 4 + s.below(61);
            let j = 1 + s.below(7);
            let tau = *s.choose(&[0.05, 0.1, 1.0]);
            let mk = |s: &mut Stream| (0..d).map(|_| s.uniform(-2.0, 2.0)).collect::<Vec<f64>>();
            let h = mk(&mut s);
            let pos = mk(&mut s);
            let negs: Vec<Vec<f64>> = (0..j).map(|_| mk(&mut s)).collect();

            let mut tape = Tape::new();
            let vh = vec_var(&mut tape, h.clone());
            let vp = vec_var(&mut tape, pos.clone());
            let vns: Vec<Var> = negs.iter().map(|n| vec_var(&mut tape, n.clone())).collect();
            let loss = contrastive_loss(&mut tape, vh, vp, &vns, tau).unwrap();

            let sim_pos = cosine_similarity_f64(&h, &pos);
            let sims: Vec<f64> = negs.iter().map(|n| cosine_similarity_f64(&h, n)).collect();
            let expected = naive_nce(sim_pos, &sims, tau);
            assert!(
                (tape.scalar_value(loss) - expected).abs() < 1e-12,
                "loss {} vs oracle {}",
                tape.scalar_value(loss),
                expected
            );
        }
    }

    #[test]
    fn contrastive_monotonic_in_scores() {
        let base_pos = 0.4;
        let base_negs = [0.1, -0.2, 0.3];
        let eval = |sp: f64, sn: &[f64]| {
            let mut tape = Tape::new();
            let vp = tape.constant(Tensor::scalar(sp));
            let vns: Vec<Var> = sn.iter().map(|&x| tape.constant(Tensor::scalar(x))).collect();
            let loss = contrastive_loss_from_sims(&mut tape, vp, &vns, 0.05).unwrap();
            tape.scalar_value(loss)
        };
        let base = eval(base_pos, &base_negs);
        assert!(eval(base_pos + 1e-3, &base_negs) < base);
        assert!(eval(base_pos - 1e-3, &base_negs) > base);
        for i in 0..base_negs.len() {
            let mut up = base_negs;
            up[i] += 1e-3;
            assert!(eval(base_pos, &up) > base);
            let mut down = base_negs;
            down[i] -= 1e-3;
            assert!(eval(base_pos, &down) < base);
        }
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_v() {
        use crate::model::render_training_sequence;
        let seq = render_training_sequence("i", "x", "ab", 32).unwrap();
        let len = seq.len();
        for v in [4usize, 260] {
            // uniform within a toy vocab of size v (ids must fit)
            let mut seq_v = seq.clone();
            if v == 4 {
                seq_v.ids = vec![0, 1, 2, 3, 1, 3, 2, 1];
                seq_v.output_span = 4..8;
            }
            let rows = seq_v.len();
            let mut tape = Tape::new();
            let logits = tape.constant(Tensor::matrix(rows.max(len), v, vec![0.0; rows.max(len) * v]).unwrap());
            let loss = sequence_cross_entropy(&mut tape, logits, &seq_v).unwrap();
            assert!((tape.scalar_value(loss) - (v as f64).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_matches_per_token_oracle() {
        use crate::model::render_training_sequence;
        let mut s = Stream::from_seed(17);
        for _ in 0..200 {
            let seq = render_training_sequence("ab", "cd", "efg", 32).unwrap();
            let len = seq.len();
            let v = 11usize;
            let mut seq_v = seq.clone();
            for id in seq_v.ids.iter_mut() {
                *id %= v;
            }
            let logits_data: Vec<f64> = (0..len * v).map(|_| s.uniform(-3.0, 3.0)).collect();

            let mut tape = Tape::new();
            let logits = tape.constant(Tensor::matrix(len, v, logits_data.clone()).unwrap());
            let loss = sequence_cross_entropy(&mut tape, logits, &seq_v).unwrap();

            // per-token oracle: explicit softmax then mean of -log at gold
            let mut total = 0.0;
            let span = seq_v.output_span.clone();
            for pos in span.clone() {
                let row = &logits_data[(pos - 1) * v..pos * v];
                let z: f64 = row.iter().map(|x| x.exp()).sum();
                let p = row[seq_v.ids[pos]].exp() / z;
                total += -p.ln();
            }
            let expected = total / span.len() as f64;
            assert!((tape.scalar_value(loss) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn cross_entropy_decreases_monotonically_with_margin() {
        use crate::model::render_training_sequence;
        let seq = render_training_sequence("i", "x", "a", 32).unwrap();
        let len = seq.len();
        let mut prev = f64::INFINITY;
        for margin in [0.0, 1.0, 4.0, 16.0, 64.0] {
            let v = 260;
            let mut data = vec![0.0; len * v];
            for pos in seq.output_span.clone() {
                data[(pos - 1) * v + seq.ids[pos]] = margin;
            }
            let mut tape = Tape::new();
            let logits = tape.constant(Tensor::matrix(len, v, data).unwrap());
            let loss = sequence_cross_entropy(&mut tape, logits, &seq).unwrap();
            let val = tape.scalar_value(loss);
            assert!(val < prev);
            prev = val;
        }
        assert!(prev < 1e-20); // margin 64 drives the loss to ~0
    }

    #[test]
    fn combined_loss_cap_above_arithmetic() {
        let mut tape = Tape::new();
        let le = tape.constant(Tensor::scalar(1.0));
        let lc = tape.constant(Tensor::scalar(2.0));
        let c = coin_combined_loss(&mut tape, le, lc, 1000.0, CapMode::CapAbove).unwrap();
        assert_eq!(c.weight, 0.5);
        assert_eq!(c.ratio, 0.5);
        assert_eq!(tape.scalar_value(c.total), 2.0);

        let le = tape.constant(Tensor::scalar(2.0));
        let lc = tape.constant(Tensor::scalar(0.001));
        let c = coin_combined_loss(&mut tape, le, lc, 1000.0, CapMode::CapAbove).unwrap();
        assert_eq!(c.weight, 1000.0);
        assert_eq!(c.ratio, 2000.0);
        assert!((tape.scalar_value(c.total) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn combined_loss_paper_literal_uses_max() {
        let mut tape = Tape::new();
        let le = tape.constant(Tensor::scalar(1.0));
        let lc = tape.constant(Tensor::scalar(2.0));
        let c = coin_combined_loss(&mut tape, le, lc, 1000.0, CapMode::PaperLiteral).unwrap();
        assert_eq!(c.weight, 1000.0);
        assert_eq!(tape.scalar_value(c.total), 1.0 + 1000.0 * 2.0);
    }

    #[test]
    fn combined_loss_guards() {
        let mut tape = Tape::new();
        let le = tape.constant(Tensor::scalar(1.0));
        let lc = tape.constant(Tensor::scalar(0.0));
        assert!(matches!(
            coin_combined_loss(&mut tape, le, lc, 1000.0, CapMode::CapAbove),
            Err(Error::Objective(ObjectiveError::ContrastiveCollapse { .. }))
        ));
        let lc = tape.constant(Tensor::scalar(1.0));
        assert!(matches!(
            coin_combined_loss(&mut tape, le, lc, 0.0, CapMode::CapAbove),
            Err(Error::Objective(ObjectiveError::BadLambda(_)))
        ));
    }

    #[test]
    fn detach_property_gradient_of_total_wrt_lctr_is_exactly_weight() {
        let mut tape = Tape::new();
        let le = tape.param(Tensor::scalar(1.7));
        let lc = tape.param(Tensor::scalar(0.3));
        let c = coin_combined_loss(&mut tape, le, lc, 1000.0, CapMode::CapAbove).unwrap();
        let grads = tape.backward(c.total).unwrap();
        let g_lc = grads.get(lc).unwrap()[0];
        let g_le = grads.get(le).unwrap()[0];
        assert_eq!(g_lc.to_bits(), c.weight.to_bits());
        assert_eq!(g_le, 1.0);
    }

    #[test]
    fn loss_report_invariant() {
        let r = LossReport::new(1.25, 0.5, 2.5, 0.05, 1000.0);
        assert!((r.l_total - (r.l_ent + r.weight * r.l_ctr)).abs() < 1e-12);
    }
}
