// seed hunt: find a random parameter point where no gradient entry sits in
// the fd dead zone, then confirm with the full shared sweep
use coin::autodiff::{finite_difference_check_many, BoundParams, Tape, Tensor, Var};
use coin::data::AugmentedInstance;
use coin::model::{hidden_states, render_training_sequence, ModelConfig, Params};
use coin::objectives::{
    coin_combined_loss, combined_loss_with_weight, contrastive_loss,
    cross_entropy_over_output_span, CapMode,
};
use coin::rng::Stream;
use coin::Error;
use std::time::Instant;

fn fd_corpus() -> Vec<AugmentedInstance> {
    let outs = ["no", "off", "dow", "nevr"];
    (0..4)
        .map(|i| AugmentedInstance {
            id: format!("e{i}"), task: "t".into(), template_id: 0,
            instruction: "ab".into(), input: ["c", "d", "e", "f"][i].into(),
            output: outs[i].into(),
            label_options: outs.iter().map(|s| s.to_string()).collect(),
            positive_instruction: "xy".into(),
            negative_id: format!("e{}", (i + 1) % 4),
        })
        .collect()
}

/// Alternates CE-only and contrastive-only steps until the cross-entropy
/// and every per-anchor contrastive loss sit in the bands where both cap
/// modes are numerically well-conditioned.
fn steered_point(
    cfg: &ModelConfig,
    rows: &[AugmentedInstance],
    seed: u64,
    tau: f64,
) -> Option<Params> {
    const CTR_LO: f64 = 3e-4;
    const CTR_HI: f64 = 8e-4;
    const CE_TARGET: f64 = 0.55;
    let mut params = Params::init(cfg, &Stream::from_seed(seed).derive("model")).unwrap();
    // load the attention scores from the start so query/key weights carry
    // real gradient signal at the checked point
    {
        let entries: Vec<(String, Tensor)> = params
            .entries()
            .iter()
            .map(|(n, t)| {
                let f = if n.contains("attn.wq") || n.contains("attn.wk") { 7.5 } else { 1.0 };
                let data: Vec<f64> = t.data().iter().map(|x| x * f).collect();
                (n.clone(), Tensor::new(t.shape().to_vec(), data).unwrap())
            })
            .collect();
        params = Params::from_entries(cfg.clone(), entries).unwrap();
    }
    for round in 0..1500 {
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, true);
        let parts = forward_parts(&mut tape, &bound, cfg, rows, tau).ok()?;
        let ces: Vec<f64> = parts.ce.iter().map(|&v| tape.scalar_value(v)).collect();
        let ctrs: Vec<f64> = parts.ctr.iter().map(|&v| tape.scalar_value(v)).collect();
        let ce_mean = ces.iter().sum::<f64>() / ces.len() as f64;
        if seed < 2 && round % 100 == 0 {
            println!(
                "  round {round}: ce_mean {ce_mean:.3e} ctr [{}]",
                ctrs.iter().map(|v| format!("{v:.1e}")).collect::<Vec<_>>().join(" ")
            );
        }
        // per-anchor banded pressure: descend loud anchors, lift crashed ones
        let mut terms: Vec<Var> = Vec::new();
        let mut done = true;
        for (i, &c) in ctrs.iter().enumerate() {
            if c > CTR_HI {
                terms.push(parts.ctr[i]);
                done = false;
            } else if c < CTR_LO {
                // shrink the similarity gap to lift a crashed anchor; the
                // cosine gradients do not vanish the way ctr's do
                terms.push(tape.scale(parts.gap[i], 0.1).ok()?);
                done = false;
            }
        }
        if ce_mean > CE_TARGET {
            let cat = tape.concat_rows(&parts.ce).ok()?;
            let ce_term = tape.mean(cat).ok()?;
            terms.push(tape.scale(ce_term, 0.6).ok()?);
            done = false;
        }
        if done {
            return Some(params);
        }
        let cat = tape.concat_rows(&terms).ok()?;
        let root = tape.sum(cat).ok()?;
        let grads = tape.backward(root).ok()?;
        let named: Vec<(String, Tensor)> = bound
            .entries()
            .iter()
            .map(|(name, var)| (name.clone(), grads.grad_or_zeros(&tape, *var)))
            .collect();
        drop(tape);
        params.sgd_step(&named, 0.08);
    }
    None
}

struct Parts {
    ce: Vec<Var>,
    ctr: Vec<Var>,
    /// positive-pair minus mean-negative cosine, per anchor
    gap: Vec<Var>,
}

fn forward_parts(
    tape: &mut Tape, bound: &BoundParams, cfg: &ModelConfig, rows: &[AugmentedInstance], tau: f64,
) -> Result<Parts, Error> {
    let mut hiddens = Vec::new();
    let mut ces = Vec::new();
    let mut pos_hiddens = Vec::new();
    for r in rows {
        let seq = render_training_sequence(&r.instruction, &r.input, &r.output, cfg.context_len)?;
        let h = hidden_states(tape, bound, cfg, &seq)?;
        ces.push(cross_entropy_over_output_span(tape, bound, h, &seq)?);
        hiddens.push(tape.slice_rows(h, seq.len() - 1, 1)?);
        let pseq = render_training_sequence(&r.positive_instruction, &r.input, &r.output, cfg.context_len)?;
        let ph = hidden_states(tape, bound, cfg, &pseq)?;
        pos_hiddens.push(tape.slice_rows(ph, pseq.len() - 1, 1)?);
    }
    let mut ctr = Vec::new();
    let mut gap = Vec::new();
    for i in 0..rows.len() {
        let negs: Vec<Var> = (0..rows.len()).filter(|&j| j != i).map(|j| hiddens[j]).collect();
        ctr.push(contrastive_loss(tape, hiddens[i], pos_hiddens[i], &negs, tau)?);
        let sim_pos = coin::objectives::cosine_similarity(tape, hiddens[i], pos_hiddens[i])?;
        let neg_sims: Vec<Var> = negs
            .iter()
            .map(|&n| coin::objectives::cosine_similarity(tape, hiddens[i], n))
            .collect::<Result<_, _>>()?;
        let neg_cat = tape.concat_rows(&neg_sims)?;
        let neg_mean = tape.mean(neg_cat)?;
        let neg_down = tape.scale(neg_mean, -1.0)?;
        gap.push(tape.add(sim_pos, neg_down)?);
    }
    Ok(Parts { ce: ces, ctr, gap })
}

fn mode_roots(
    tape: &mut Tape, parts: &Parts, weights: [&[f64]; 2],
) -> Result<Vec<Var>, Error> {
    let mut roots = Vec::new();
    for w in weights {
        let totals: Vec<Var> = (0..parts.ce.len())
            .map(|i| combined_loss_with_weight(tape, parts.ce[i], parts.ctr[i], w[i]))
            .collect::<Result<_, _>>()?;
        let cat = tape.concat_rows(&totals)?;
        roots.push(tape.mean(cat)?);
    }
    Ok(roots)
}

fn main() {
    let cfg = ModelConfig { n_layers: 2, n_heads: 2, d_model: 32, d_ff: 16, vocab_size: 260, context_len: 16 };
    let rows = fd_corpus();
    let tau = 0.05;
    let lethal = |a: f64| (1e-12..1.5e-6).contains(&a.abs());

'seeds: for seed in 0..4u64 {
        let Some(params) = steered_point(&cfg, &rows, seed, tau) else {
            println!("seed {seed}: steering failed");
            continue;
        };
        // forward values for weights + sanity
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape, true);
        let parts = match forward_parts(&mut tape, &bound, &cfg, &rows, tau) {
            Ok(p) => p,
            Err(_) => continue,
        };
        let ces: Vec<f64> = parts.ce.iter().map(|&v| tape.scalar_value(v)).collect();
        let ctrs: Vec<f64> = parts.ctr.iter().map(|&v| tape.scalar_value(v)).collect();
        if !ctrs.iter().all(|&c| (2e-4..1e-3).contains(&c)) || ces.iter().sum::<f64>() / 4.0 > 0.6 {
            println!("seed {seed}: reject band: ce {ces:?} ctr {ctrs:?}");
            continue;
        }
        let mut w_cap = Vec::new();
        let mut w_lit = Vec::new();
        for i in 0..4 {
            let c = coin_combined_loss(&mut tape, parts.ce[i], parts.ctr[i], 1000.0, CapMode::CapAbove).unwrap();
            w_cap.push(c.weight);
            let c = coin_combined_loss(&mut tape, parts.ce[i], parts.ctr[i], 1000.0, CapMode::PaperLiteral).unwrap();
            w_lit.push(c.weight);
        }

        // analytic dead-zone screen for both modes
        let roots = mode_roots(&mut tape, &parts, [&w_cap, &w_lit]).unwrap();
        let mut f_vals = Vec::new();
        let mut hazards = 0usize;
        let mut sample = String::new();
        for &root in &roots {
            f_vals.push(tape.scalar_value(root));
            let grads = tape.backward(root).unwrap();
            for (name, var) in bound.entries() {
                let g = grads.grad_or_zeros(&tape, *var);
                for &a in g.data() {
                    if lethal(a) {
                        hazards += 1;
                        if hazards < 4 {
                            sample += &format!(" {name}:{a:.1e}");
                        }
                    }
                }
            }
        }
        println!("seed {seed}: {hazards} hazard entries{sample}");
        println!(
            "seed {seed}: CLEAN. ce {ces:?} ctr {ctrs:?} w_cap {w_cap:?} w_lit {w_lit:?} f {f_vals:?}"
        );
        {
            let grads = tape.backward(roots[0]).unwrap();
            for name in ["layer0.attn.wq", "layer1.attn.wk", "embed.tok"] {
                let g = grads.grad_or_zeros(&tape, bound.var(name));
                let mut mags: Vec<f64> = g.data().iter().map(|x| x.abs()).filter(|&x| x > 0.0).collect();
                mags.sort_by(f64::total_cmp);
                if !mags.is_empty() {
                    println!("  {name}: min {:.1e} med {:.1e} max {:.1e}", mags[0], mags[mags.len()/2], mags[mags.len()-1]);
                }
            }
        }
        drop(tape);

        // full confirmation sweep
        let cfg2 = cfg.clone();
        let rows2 = rows.clone();
        let (wc, wl) = (w_cap.clone(), w_lit.clone());
        let t1 = Instant::now();
        let reports = finite_difference_check_many(
            move |tape: &mut Tape, bound: &BoundParams| -> Result<Vec<Var>, Error> {
                let parts = forward_parts(tape, bound, &cfg2, &rows2, tau)?;
                mode_roots(tape, &parts, [&wc, &wl])
            },
            params.entries(),
            1e-3,
            1e-4,
        )
        .unwrap();
        for (report, name) in reports.iter().zip(["cap-above", "paper-literal"]) {
            let over: Vec<(String, f64)> =
                report.per_param.iter().filter(|(_, e)| *e > 2e-5).cloned().collect();
            println!(
                "  {name}: max rel err {:.3e} in {:?} ({} entries), >2e-5: {over:?}",
                report.max_rel_err, t1.elapsed(), report.entries_checked
            );
        }

    }
}
