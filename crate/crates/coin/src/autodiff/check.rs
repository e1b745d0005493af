//! Central-difference gradient checking.

use super::{AdError, Tape, Tensor, Var};
use crate::Error;

/// Named parameter leaves registered on a tape.
pub struct BoundParams {
    entries: Vec<(String, Var)>,
}

impl BoundParams {
    pub fn bind(tape: &mut Tape, params: &[(String, Tensor)], tracked: bool) -> Self {
        let entries = params
            .iter()
            .map(|(name, t)| {
                let var = if tracked {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (name.clone(), var)
            })
            .collect();
        BoundParams { entries }
    }

    pub fn var(&self, name: &str) -> Var {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn entries(&self) -> &[(String, Var)] {
        &self.entries
    }
}

/// Outcome of [`finite_difference_check`].
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Max relative error per parameter array, in parameter order.
    pub per_param: Vec<(String, f64)>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub entries_checked: usize,
}

impl FdReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

fn eval_scalars<F>(build: &F, params: &[(String, Tensor)]) -> Result<Vec<f64>, Error>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<Vec<Var>, Error>,
{
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params, false);
    let roots = build(&mut tape, &bound)?;
    roots
        .into_iter()
        .map(|root| {
            let value = tape.value(root);
            if !value.is_scalar() {
                return Err(AdError::NonScalarRoot { shape: value.shape().to_vec() }.into());
            }
            Ok(value.item())
        })
        .collect()
}

/// Compares the analytic gradient of `build` against central differences
/// `(f(θ+step·e) − f(θ−step·e)) / (2·step)` for every entry of every
/// parameter. Relative error uses the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
///
/// `build` must be deterministic; it is evaluated twice at θ and an
/// `OracleInvalid` error is raised if the two values differ bitwise.
pub fn finite_difference_check<F>(
    build: F,
    params: &[(String, Tensor)],
    step: f64,
    tolerance: f64,
) -> Result<FdReport, Error>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<Var, Error>,
{
    let reports = finite_difference_check_many(
        |tape: &mut Tape, bound: &BoundParams| Ok(vec![build(tape, bound)?]),
        params,
        step,
        tolerance,
    )?;
    Ok(reports.into_iter().next().expect("one root, one report"))
}

/// [`finite_difference_check`] over several scalar roots that share one
/// forward pass (e.g. the same loss under different fixed weightings).
/// Every root is compared on every parameter entry; the two perturbed
/// evaluations per entry are shared across roots.
pub fn finite_difference_check_many<F>(
    build: F,
    params: &[(String, Tensor)],
    step: f64,
    tolerance: f64,
) -> Result<Vec<FdReport>, Error>
where
    F: Fn(&mut Tape, &BoundParams) -> Result<Vec<Var>, Error>,
{
    if step <= 0.0 {
        return Err(AdError::Domain {
            primitive: "finite_difference_check",
            detail: format!("step must be positive, got {step}"),
        }
        .into());
    }

    let base1 = eval_scalars(&build, params)?;
    let base2 = eval_scalars(&build, params)?;
    if base1.len() != base2.len()
        || base1.iter().zip(&base2).any(|(a, b)| a.to_bits() != b.to_bits())
    {
        return Err(AdError::OracleInvalid(format!(
            "two evaluations at the same point differ: {base1:?} vs {base2:?}"
        ))
        .into());
    }
    let n_roots = base1.len();

    // Analytic gradients at θ: one backward per root over a shared tape.
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, params, true);
    let roots = build(&mut tape, &bound)?;
    let mut analytic: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n_roots);
    for &root in &roots {
        let grads = tape.backward(root)?;
        analytic.push(
            bound
                .entries()
                .iter()
                .map(|(_, v)| grads.grad_or_zeros(&tape, *v).data().to_vec())
                .collect(),
        );
    }
    drop(tape);

    let mut work: Vec<(String, Tensor)> = params.to_vec();
    let mut per_param: Vec<Vec<(String, f64)>> = vec![Vec::with_capacity(params.len()); n_roots];
    let mut max_rel_err = vec![0.0f64; n_roots];
    let mut entries_checked = 0usize;

    for p in 0..params.len() {
        let numel = params[p].1.numel();
        let mut param_max = vec![0.0f64; n_roots];
        for e in 0..numel {
            let orig = params[p].1.data()[e];
            work[p].1.data_mut()[e] = orig + step;
            let f_plus = eval_scalars(&build, &work)?;
            work[p].1.data_mut()[e] = orig - step;
            let f_minus = eval_scalars(&build, &work)?;
            work[p].1.data_mut()[e] = orig;

            for r in 0..n_roots {
                let numeric = (f_plus[r] - f_minus[r]) / (2.0 * step);
                let a = analytic[r][p][e];
                let denom = a.abs().max(numeric.abs()).max(1e-8);
                let rel = (a - numeric).abs() / denom;
                param_max[r] = param_max[r].max(rel);
            }
            entries_checked += 1;
        }
        for r in 0..n_roots {
            max_rel_err[r] = max_rel_err[r].max(param_max[r]);
            per_param[r].push((params[p].0.clone(), param_max[r]));
        }
    }

    Ok((0..n_roots)
        .map(|r| FdReport {
            per_param: std::mem::take(&mut per_param[r]),
            max_rel_err: max_rel_err[r],
            tolerance,
            entries_checked,
        })
        .collect())
}
