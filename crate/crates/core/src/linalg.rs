//! Small dense solvers used by the Markov chain analysis.

use crate::scalar::Scalar;

/// Dense square matrix in row-major order.
pub(crate) type Matrix<T> = Vec<Vec<T>>;

pub(crate) fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let n = a.len();
    let m = b.first().map_or(0, Vec::len);
    let inner = b.len();
    let mut out = vec![vec![T::zero(); m]; n];
    for i in 0..n {
        for k in 0..inner {
            let aik = a[i][k];
            if aik == T::zero() {
                continue;
            }
            for j in 0..m {
                out[i][j] = out[i][j] + aik * b[k][j];
            }
        }
    }
    out
}

/// Solves `a x = rhs` by Gaussian elimination with partial pivoting.
/// Returns `None` when the system is numerically singular.
pub(crate) fn solve<T: Scalar>(mut a: Matrix<T>, mut rhs: Vec<T>) -> Option<Vec<T>> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| {
            a[x][col]
                .abs()
                .partial_cmp(&a[y][col].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if a[pivot][col].abs() <= T::epsilon() {
            return None;
        }
        a.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == T::zero() {
                continue;
            }
            for j in col..n {
                a[row][j] = a[row][j] - factor * a[col][j];
            }
            rhs[row] = rhs[row] - factor * rhs[col];
        }
    }
    let mut x = vec![T::zero(); n];
    for row in (0..n).rev() {
        let tail: T = (row + 1..n).map(|j| a[row][j] * x[j]).sum();
        x[row] = (rhs[row] - tail) / a[row][row];
    }
    Some(x)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted descending.
pub(crate) fn symmetric_eigenvalues<T: Scalar>(mut a: Matrix<T>) -> Vec<T> {
    let n = a.len();
    let two = T::of(2.0);
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off <= T::epsilon() * T::epsilon() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() <= T::min_positive_value() {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (two * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    eig
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let a: Vec<Vec<f64>> = vec![vec![2.0, 1.0], vec![1.0, 3.0]];
        let x = solve(a, vec![3.0, 5.0]).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn singular_system_is_rejected() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(solve(a, vec![1.0, 2.0]).is_none());
    }

    #[test]
    fn jacobi_diagonalizes_symmetric_2x2() {
        let eig = symmetric_eigenvalues(vec![vec![2.0_f64, 1.0], vec![1.0, 2.0]]);
        assert!((eig[0] - 3.0).abs() < 1e-12);
        assert!((eig[1] - 1.0).abs() < 1e-12);
    }
}
