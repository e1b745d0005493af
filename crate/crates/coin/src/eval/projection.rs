//! 2-D principal-component projection via power iteration with deflation.

use super::EvalError;
use crate::rng::Stream;

const TOL: f64 = 1e-10;
const MAX_ITERS: usize = 10_000;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(c: &[f64], d: usize, v: &[f64], out: &mut [f64]) {
    for (row, o) in c.chunks_exact(d).zip(out.iter_mut()) {
        *o = dot(row, v);
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x /= norm;
        }
    }
    norm
}

fn orthogonalize(v: &mut [f64], against: &[f64]) {
    let proj = dot(v, against);
    for (x, &a) in v.iter_mut().zip(against) {
        *x -= proj * a;
    }
}

/// Fixes the eigenvector sign: the entry of largest magnitude is positive.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Leading eigenpair of the symmetric matrix `c` (d×d), optionally kept
/// orthogonal to a previous eigenvector. The deterministic start vector
/// comes from a fixed stream.
fn power_iteration(c: &[f64], d: usize, against: Option<&[f64]>) -> (f64, Vec<f64>) {
    let mut s = Stream::from_seed(0x50_43_41); // fixed start; projection is deterministic
    let mut v: Vec<f64> = (0..d).map(|_| s.uniform(-1.0, 1.0)).collect();
    if let Some(prev) = against {
        orthogonalize(&mut v, prev);
    }
    normalize(&mut v);
    let mut lambda = 0.0f64;
    let mut next = vec![0.0; d];
    for _ in 0..MAX_ITERS {
        mat_vec(c, d, &v, &mut next);
        if let Some(prev) = against {
            orthogonalize(&mut next, prev);
        }
        let norm = normalize(&mut next);
        if norm == 0.0 {
            // v lies in the null space: eigenvalue 0, keep the current vector
            return (0.0, v);
        }
        std::mem::swap(&mut v, &mut next);
        mat_vec(c, d, &v, &mut next);
        let new_lambda = dot(&v, &next);
        if (new_lambda - lambda).abs() <= TOL * new_lambda.abs().max(1.0) {
            lambda = new_lambda;
            break;
        }
        lambda = new_lambda;
    }
    fix_sign(&mut v);
    (lambda, v)
}

/// Projects `n` rows of dimension `d` onto their top-2 principal
/// components. Returns per-row (pc1, pc2) plus the two leading eigenvalues
/// of the (unnormalized) covariance.
pub fn pca_project_2d(
    rows: &[f64],
    n: usize,
    d: usize,
) -> Result<(Vec<(f64, f64)>, [f64; 2]), EvalError> {
    if n < 3 {
        return Err(EvalError::TooFewPoints { got: n });
    }
    debug_assert_eq!(rows.len(), n * d);

    // center columns
    let mut mean = vec![0.0; d];
    for row in rows.chunks_exact(d) {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut centered = rows.to_vec();
    for row in centered.chunks_exact_mut(d) {
        for (x, &m) in row.iter_mut().zip(&mean) {
            *x -= m;
        }
    }

    // covariance (X^T X; normalization does not change directions)
    let mut cov = vec![0.0; d * d];
    for row in centered.chunks_exact(d) {
        for (i, &xi) in row.iter().enumerate() {
            let out = &mut cov[i * d..(i + 1) * d];
            for (o, &xj) in out.iter_mut().zip(row) {
                *o += xi * xj;
            }
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if trace <= 1e-18 {
        return Err(EvalError::DegenerateProjection);
    }

    let (l1, v1) = power_iteration(&cov, d, None);
    let mut deflated = cov.clone();
    for i in 0..d {
        for j in 0..d {
            deflated[i * d + j] -= l1 * v1[i] * v1[j];
        }
    }
    let (l2, v2) = power_iteration(&deflated, d, Some(&v1));

    let coords = centered
        .chunks_exact(d)
        .map(|row| (dot(row, &v1), dot(row, &v2)))
        .collect();
    Ok((coords, [l1, l2]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_points_keep_pairwise_distances() {
        // points on a 2-D plane embedded in 8 dimensions
        let d = 8;
        let mut s = Stream::from_seed(21);
        let b1: Vec<f64> = (0..d).map(|_| s.uniform(-1.0, 1.0)).collect();
        let mut b2: Vec<f64> = (0..d).map(|_| s.uniform(-1.0, 1.0)).collect();
        // make b2 orthonormal to b1
        let mut b1n = b1.clone();
        normalize(&mut b1n);
        orthogonalize(&mut b2, &b1n);
        normalize(&mut b2);

        let n = 12;
        let coeffs: Vec<(f64, f64)> =
            (0..n).map(|_| (s.uniform(-3.0, 3.0), s.uniform(-3.0, 3.0))).collect();
        let mut rows = vec![0.0; n * d];
        for (r, (a, b)) in coeffs.iter().enumerate() {
            for j in 0..d {
                rows[r * d + j] = a * b1n[j] + b * b2[j];
            }
        }
        let (proj, _) = pca_project_2d(&rows, n, d).unwrap();
        for i in 0..n {
            for j in (i + 1)..n {
                let orig = ((coeffs[i].0 - coeffs[j].0).powi(2)
                    + (coeffs[i].1 - coeffs[j].1).powi(2))
                .sqrt();
                let new = ((proj[i].0 - proj[j].0).powi(2) + (proj[i].1 - proj[j].1).powi(2))
                    .sqrt();
                assert!(
                    (orig - new).abs() < 1e-8,
                    "distance {orig} became {new} after projection"
                );
            }
        }
    }

    #[test]
    fn collinear_points_have_zero_second_component() {
        let d = 5;
        let n = 6;
        let dir = [1.0, -2.0, 0.5, 0.0, 3.0];
        let mut rows = vec![0.0; n * d];
        for (r, row) in rows.chunks_exact_mut(d).enumerate() {
            for (x, &v) in row.iter_mut().zip(&dir) {
                *x = r as f64 * v;
            }
        }
        let (proj, eig) = pca_project_2d(&rows, n, d).unwrap();
        assert!(eig[1].abs() < 1e-8);
        let pc2_var: f64 = proj.iter().map(|(_, y)| y * y).sum();
        assert!(pc2_var < 1e-16);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let rows = vec![1.0; 4 * 3];
        assert!(matches!(
            pca_project_2d(&rows, 4, 3),
            Err(EvalError::DegenerateProjection)
        ));
    }

    #[test]
    fn too_few_points_rejected() {
        let rows = vec![0.0; 2 * 3];
        assert!(matches!(
            pca_project_2d(&rows, 2, 3),
            Err(EvalError::TooFewPoints { got: 2 })
        ));
    }

    #[test]
    fn projection_invariant_to_common_offset() {
        let d = 4;
        let n = 7;
        let mut s = Stream::from_seed(3);
        let rows: Vec<f64> = (0..n * d).map(|_| s.uniform(-2.0, 2.0)).collect();
        let shifted: Vec<f64> = rows
            .chunks_exact(d)
            .flat_map(|row| row.iter().enumerate().map(|(j, &x)| x + 10.0 * (j + 1) as f64))
            .collect();
        let (a, _) = pca_project_2d(&rows, n, d).unwrap();
        let (b, _) = pca_project_2d(&shifted, n, d).unwrap();
        for ((ax, ay), (bx, by)) in a.iter().zip(&b) {
            assert!((ax - bx).abs() < 1e-8);
            assert!((ay - by).abs() < 1e-8);
        }
    }
}
