use super::*;
use crate::rng::Stream;
use crate::Error;

fn rand_tensor(shape: Vec<usize>, s: &mut Stream, lo: f64, hi: f64) -> Tensor {
    let numel = shape.iter().product();
    let data = (0..numel).map(|_| s.uniform(lo, hi)).collect();
    Tensor::new(shape, data).unwrap()
}

/// Checks one primitive: f(params) = Σ w ∘ primitive(params...), with fixed
/// random weights so the upstream gradient is non-trivial.
fn check_primitive(
    name: &str,
    kind: PrimitiveKind,
    param_shapes: &[Vec<usize>],
    lo: f64,
    hi: f64,
    seed: u64,
) {
    let mut s = Stream::from_seed(seed);
    let params: Vec<(String, Tensor)> = param_shapes
        .iter()
        .enumerate()
        .map(|(i, shape)| (format!("p{i}"), rand_tensor(shape.clone(), &mut s, lo, hi)))
        .collect();

    // probe the output shape to fix the weights
    let mut probe = Tape::new();
    let probe_vars: Vec<Var> = params.iter().map(|(_, t)| probe.constant(t.clone())).collect();
    let out = probe.apply_primitive(kind.clone(), &probe_vars).unwrap();
    let out_shape = probe.value(out).shape().to_vec();
    let weights = rand_tensor(out_shape, &mut s, -1.0, 1.0);

    let build = move |tape: &mut Tape, bound: &BoundParams| -> Result<Var, Error> {
        let vars: Vec<Var> = bound.entries().iter().map(|(_, v)| *v).collect();
        let out = tape.apply_primitive(kind.clone(), &vars)?;
        let w = tape.constant(weights.clone());
        let weighted = tape.mul(out, w)?;
        Ok(tape.sum(weighted)?)
    };
    let report = finite_difference_check(build, &params, 1e-5, 1e-4).unwrap();
    assert!(
        report.passed(),
        "{name}: max relative error {:.3e} (per param: {:?})",
        report.max_rel_err,
        report.per_param
    );
}

#[test]
fn gradients_match_finite_differences_for_every_primitive() {
    check_primitive("matmul", PrimitiveKind::Matmul, &[vec![3, 4], vec![4, 2]], -2.0, 2.0, 1);
    check_primitive("add", PrimitiveKind::Add, &[vec![3, 4], vec![3, 4]], -2.0, 2.0, 2);
    check_primitive("mul", PrimitiveKind::Mul, &[vec![3, 4], vec![3, 4]], -2.0, 2.0, 3);
    check_primitive("scale", PrimitiveKind::Scale(1.7), &[vec![5]], -2.0, 2.0, 4);
    check_primitive("exp", PrimitiveKind::Exp, &[vec![2, 3]], -2.0, 2.0, 5);
    check_primitive("log", PrimitiveKind::Log, &[vec![2, 3]], 0.5, 2.0, 6);
    check_primitive("tanh", PrimitiveKind::Tanh, &[vec![7]], -2.0, 2.0, 7);
    check_primitive("softmax_rows", PrimitiveKind::SoftmaxRows, &[vec![3, 5]], -2.0, 2.0, 8);
    check_primitive("layer_norm_rows", PrimitiveKind::LayerNormRows, &[vec![3, 6]], -2.0, 2.0, 9);
    check_primitive(
        "embedding_lookup",
        PrimitiveKind::EmbeddingLookup(vec![2, 0, 2, 1]),
        &[vec![4, 3]],
        -2.0,
        2.0,
        10,
    );
    check_primitive(
        "concat_rows",
        PrimitiveKind::ConcatRows,
        &[vec![2, 3], vec![1, 3], vec![2, 3]],
        -2.0,
        2.0,
        11,
    );
    check_primitive(
        "slice_rows",
        PrimitiveKind::SliceRows { start: 1, rows: 2 },
        &[vec![4, 3]],
        -2.0,
        2.0,
        12,
    );
    check_primitive("sum", PrimitiveKind::Sum, &[vec![3, 3]], -2.0, 2.0, 13);
    check_primitive("mean", PrimitiveKind::Mean, &[vec![6]], -2.0, 2.0, 14);
    check_primitive("transpose", PrimitiveKind::Transpose, &[vec![3, 4]], -2.0, 2.0, 15);
}

/// The mask adds a −1e30 constant, so probing it in isolation is numerically
/// meaningless (f keeps no resolution near ±1e30). Check it through its one
/// designed composition — row softmax — plus the exact pass-through rule.
#[test]
fn causal_mask_gradient_through_softmax_and_passthrough() {
    let mut s = Stream::from_seed(16);
    let params = vec![("scores".to_string(), rand_tensor(vec![4, 4], &mut s, -2.0, 2.0))];
    let weights = rand_tensor(vec![4, 4], &mut s, -1.0, 1.0);
    let report = finite_difference_check(
        move |tape: &mut Tape, bound: &BoundParams| -> Result<Var, Error> {
            let masked = tape.causal_mask_add(bound.var("scores"))?;
            let attn = tape.softmax_rows(masked)?;
            let w = tape.constant(weights.clone());
            let weighted = tape.mul(attn, w)?;
            Ok(tape.sum(weighted)?)
        },
        &params,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.passed(), "max relative error {:.3e}", report.max_rel_err);

    // pass-through rule is exact: d sum(mask(x)) / dx == ones, bitwise
    let mut tape = Tape::new();
    let x = tape.param(rand_tensor(vec![5, 5], &mut s, -2.0, 2.0));
    let masked = tape.causal_mask_add(x).unwrap();
    let root = tape.sum(masked).unwrap();
    let grads = tape.backward(root).unwrap();
    assert!(grads.get(x).unwrap().iter().all(|&g| g == 1.0));
}

#[test]
fn softmax_rows_sum_to_one_and_stay_positive() {
    let mut s = Stream::from_seed(42);
    for _ in 0..100 {
        let t = rand_tensor(vec![4, 7], &mut s, -2.0, 2.0);
        let mut tape = Tape::new();
        let x = tape.constant(t);
        let y = tape.softmax_rows(x).unwrap();
        for row in tape.data(y).chunks_exact(7) {
            let total: f64 = row.iter().sum();
            assert!((total - 1.0).abs() <= 1e-12);
            assert!(row.iter().all(|&p| p > 0.0));
        }
    }
}

#[test]
fn softmax_uniform_row() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(1, 4, vec![0.0; 4]).unwrap());
    let y = tape.softmax_rows(x).unwrap();
    assert_eq!(tape.data(y), &[0.25, 0.25, 0.25, 0.25]);
}

#[test]
fn layer_norm_constant_row_is_zero() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::matrix(1, 3, vec![2.5; 3]).unwrap());
    let y = tape.layer_norm_rows(x).unwrap();
    assert_eq!(tape.data(y), &[0.0, 0.0, 0.0]);
}

#[test]
fn matmul_identity() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let eye = tape.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let y = tape.matmul(a, eye).unwrap();
    assert_eq!(tape.data(y), &[1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn backward_square_and_mean_examples() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let sq = tape.mul(x, x).unwrap();
    let root = tape.sum(sq).unwrap();
    let grads = tape.backward(root).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[2.0, 4.0, 6.0]);

    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![5.0, -1.0, 2.0, 0.0]));
    let root = tape.mean(x).unwrap();
    let grads = tape.backward(root).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[0.25, 0.25, 0.25, 0.25]);
}

#[test]
fn fan_out_gradients_accumulate_exactly() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![0.3, -1.0, 2.0]));
    let s1 = tape.sum(x).unwrap();
    let s2 = tape.sum(x).unwrap();
    let root = tape.add(s1, s2).unwrap();
    let grads = tape.backward(root).unwrap();
    assert_eq!(grads.get(x).unwrap(), &[2.0, 2.0, 2.0]);
}

#[test]
fn unreachable_parameter_gets_zero_gradient() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
    let unused = tape.param(Tensor::vector(vec![3.0]));
    let root = tape.sum(x).unwrap();
    let grads = tape.backward(root).unwrap();
    assert!(grads.get(unused).is_none());
    assert_eq!(grads.grad_or_zeros(&tape, unused).data(), &[0.0]);
}

#[test]
fn backward_is_bitwise_replayable() {
    let mut s = Stream::from_seed(77);
    let mut tape = Tape::new();
    let a = tape.param(rand_tensor(vec![4, 4], &mut s, -2.0, 2.0));
    let b = tape.param(rand_tensor(vec![4, 4], &mut s, -2.0, 2.0));
    let prod = tape.matmul(a, b).unwrap();
    let sm = tape.softmax_rows(prod).unwrap();
    let ln = tape.layer_norm_rows(sm).unwrap();
    let root = tape.mean(ln).unwrap();
    let g1 = tape.backward(root).unwrap();
    let g2 = tape.backward(root).unwrap();
    for v in [a, b] {
        let x = g1.get(v).unwrap();
        let y = g2.get(v).unwrap();
        assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn non_scalar_root_is_rejected() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
    let y = tape.scale(x, 2.0).unwrap();
    assert!(matches!(
        tape.backward(y),
        Err(AdError::NonScalarRoot { shape }) if shape == vec![2]
    ));
}

#[test]
fn shape_mismatch_errors_name_the_primitive_and_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
    let b = tape.constant(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
    match tape.matmul(a, b) {
        Err(AdError::ShapeMismatch { primitive, lhs, rhs }) => {
            assert_eq!(primitive, "matmul");
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("expected shape mismatch, got {other:?}"),
    }
    let c = tape.constant(Tensor::vector(vec![1.0]));
    assert!(matches!(tape.add(a, c), Err(AdError::ShapeMismatch { primitive: "add", .. })));
}

#[test]
fn log_of_non_positive_is_a_domain_error() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::vector(vec![1.0, 0.0]));
    assert!(matches!(tape.log(x), Err(AdError::Domain { primitive: "log", .. })));
    let y = tape.constant(Tensor::vector(vec![-3.0]));
    assert!(matches!(tape.log(y), Err(AdError::Domain { primitive: "log", .. })));
}

#[test]
fn exp_overflow_is_a_domain_error() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::vector(vec![800.0]));
    assert!(matches!(tape.exp(x), Err(AdError::Domain { primitive: "exp", .. })));
}

#[test]
fn untracked_inputs_record_no_op() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    let b = tape.constant(Tensor::vector(vec![3.0, 4.0]));
    let c = tape.add(a, b).unwrap();
    // c is a plain leaf: backward from a scalar using it sees no inputs
    let s = tape.sum(c).unwrap();
    let grads = tape.backward(s).unwrap();
    assert!(grads.get(a).is_none());
    assert!(grads.get(c).is_none());
}

#[test]
fn fd_check_quadratic_is_nearly_exact() {
    let params = vec![("x".to_string(), Tensor::vector(vec![1.0]))];
    let report = finite_difference_check(
        |tape: &mut Tape, bound: &BoundParams| -> Result<Var, Error> {
            let x = bound.var("x");
            let sq = tape.mul(x, x)?;
            Ok(tape.sum(sq)?)
        },
        &params,
        1e-5,
        1e-8,
    )
    .unwrap();
    assert!(report.passed(), "relative error {:.3e}", report.max_rel_err);
}

#[test]
fn fd_check_constant_function_gives_zero_everywhere() {
    let params = vec![("x".to_string(), Tensor::vector(vec![1.0, -2.0]))];
    let report = finite_difference_check(
        |tape: &mut Tape, _bound: &BoundParams| -> Result<Var, Error> {
            Ok(tape.constant(Tensor::scalar(3.25)))
        },
        &params,
        1e-5,
        1e-12,
    )
    .unwrap();
    assert_eq!(report.max_rel_err, 0.0);
}

#[test]
fn fd_check_rejects_nondeterministic_functions() {
    use std::cell::Cell;
    let params = vec![("x".to_string(), Tensor::vector(vec![1.0]))];
    let counter = Cell::new(0.0f64);
    let err = finite_difference_check(
        |tape: &mut Tape, _bound: &BoundParams| -> Result<Var, Error> {
            counter.set(counter.get() + 1.0);
            Ok(tape.constant(Tensor::scalar(counter.get())))
        },
        &params,
        1e-5,
        1e-4,
    )
    .unwrap_err();
    assert!(matches!(err, Error::Autodiff(AdError::OracleInvalid(_))));
}

#[test]
fn fd_check_two_layer_net_cross_entropy() {
    // 2-layer net: x @ W1 -> tanh -> @ W2 -> row softmax, mean -log p(gold)
    let mut s = Stream::from_seed(3);
    let (n, d_in, d_hid, classes) = (5usize, 6usize, 7usize, 4usize);
    let x = rand_tensor(vec![n, d_in], &mut s, -2.0, 2.0);
    let gold: Vec<usize> = (0..n).map(|_| s.below(classes)).collect();
    let params = vec![
        ("w1".to_string(), rand_tensor(vec![d_in, d_hid], &mut s, -1.0, 1.0)),
        ("w2".to_string(), rand_tensor(vec![d_hid, classes], &mut s, -1.0, 1.0)),
    ];
    let report = finite_difference_check(
        move |tape: &mut Tape, bound: &BoundParams| -> Result<Var, Error> {
            let xin = tape.constant(x.clone());
            let h_pre = tape.matmul(xin, bound.var("w1"))?;
            let h = tape.tanh(h_pre)?;
            let logits = tape.matmul(h, bound.var("w2"))?;
            let p = tape.softmax_rows(logits)?;
            let mut onehot = vec![0.0; n * classes];
            for (row, &g) in gold.iter().enumerate() {
                onehot[row * classes + g] = 1.0;
            }
            let mask = tape.constant(Tensor::matrix(n, classes, onehot)?);
            let picked = tape.mul(p, mask)?;
            let ones = tape.constant(Tensor::matrix(classes, 1, vec![1.0; classes])?);
            let gold_p = tape.matmul(picked, ones)?;
            let logs = tape.log(gold_p)?;
            let mean = tape.mean(logs)?;
            Ok(tape.scale(mean, -1.0)?)
        },
        &params,
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(
        report.passed(),
        "max relative error {:.3e} (per param: {:?})",
        report.max_rel_err,
        report.per_param
    );
}
