use crate::scalar::Real;

/// Numerical column rank by modified Gram-Schmidt with column pivoting.
///
/// A column counts toward the rank when its residual norm after projection
/// exceeds `rel_tol` times the largest original column norm.
pub fn column_rank<S: Real>(cols: &[Vec<S>], rel_tol: S) -> usize {
    let mut work: Vec<Vec<S>> = cols.to_vec();
    let norm = |v: &[S]| v.iter().map(|&x| x * x).sum::<S>().sqrt();
    let scale = work.iter().map(|c| norm(c)).fold(S::zero(), S::max);
    if scale == S::zero() {
        return 0;
    }
    let mut rank = 0;
    while !work.is_empty() {
        let (best, bn) = work
            .iter()
            .enumerate()
            .map(|(i, c)| (i, norm(c)))
            .fold((0, S::neg_infinity()), |a, b| if b.1 > a.1 { b } else { a });
        if bn <= rel_tol * scale {
            break;
        }
        let q: Vec<S> = work.swap_remove(best).iter().map(|&x| x / bn).collect();
        rank += 1;
        for c in work.iter_mut() {
            let d: S = c.iter().zip(&q).map(|(&a, &b)| a * b).sum();
            for (ci, &qi) in c.iter_mut().zip(&q) {
                *ci = *ci - d * qi;
            }
        }
    }
    rank
}

/// Least-squares fit of `y` on the given columns; returns the residual
/// vector. Dependent columns are dropped by the same pivoted Gram-Schmidt.
pub fn lstsq_residual<S: Real>(cols: &[Vec<S>], y: &[S], rel_tol: S) -> Vec<S> {
    let norm = |v: &[S]| v.iter().map(|&x| x * x).sum::<S>().sqrt();
    let mut work: Vec<Vec<S>> = cols.to_vec();
    let scale = work.iter().map(|c| norm(c)).fold(S::zero(), S::max);
    let mut basis: Vec<Vec<S>> = Vec::new();
    while !work.is_empty() {
        let (best, bn) = work
            .iter()
            .enumerate()
            .map(|(i, c)| (i, norm(c)))
            .fold((0, S::neg_infinity()), |a, b| if b.1 > a.1 { b } else { a });
        if bn <= rel_tol * scale {
            break;
        }
        let q: Vec<S> = work.swap_remove(best).iter().map(|&x| x / bn).collect();
        for c in work.iter_mut() {
            let d: S = c.iter().zip(&q).map(|(&a, &b)| a * b).sum();
            for (ci, &qi) in c.iter_mut().zip(&q) {
                *ci = *ci - d * qi;
            }
        }
        basis.push(q);
    }
    let mut r = y.to_vec();
    // Two passes of projection for orthogonality loss.
    for _ in 0..2 {
        for q in &basis {
            let d: S = r.iter().zip(q).map(|(&a, &b)| a * b).sum();
            for (ri, &qi) in r.iter_mut().zip(q) {
                *ri = *ri - d * qi;
            }
        }
    }
    r
}

/// Orthonormal basis of `{v : A v = 0}` for the row-major matrix `A`,
/// from the SVD. Singular values below `rel_tol·σ_max` count as zero.
pub fn null_space(rows: &[Vec<f64>], cols: usize, rel_tol: f64) -> Vec<Vec<f64>> {
    // Pad with zero rows so the SVD returns a full right basis.
    let m = rows.len().max(cols);
    let a = nalgebra::DMatrix::from_fn(m, cols, |i, j| rows.get(i).map_or(0.0, |r| r[j]));
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    (0..cols)
        .filter(|&k| svd.singular_values[k] <= rel_tol * smax.max(f64::MIN_POSITIVE))
        .map(|k| v_t.row(k).iter().copied().collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_dependent_columns() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b: Vec<f64> = a.iter().map(|x| 3.0 * x).collect();
        let c = vec![1.0, 1.0, 1.0, 1.0];
        assert_eq!(column_rank(&[a.clone(), b], 1e-10), 1);
        assert_eq!(column_rank(&[a, c], 1e-10), 2);
    }

    #[test]
    fn exact_affine_fit_has_zero_residual() {
        let x = vec![0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let r = lstsq_residual(&[vec![1.0; 4], x], &y, 1e-12);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn null_space_of_rank_one() {
        let ns = null_space(&[vec![1.0, 1.0, 1.0]], 3, 1e-12);
        assert_eq!(ns.len(), 2);
        for v in &ns {
            assert!(v.iter().sum::<f64>().abs() < 1e-12);
        }
    }
}
