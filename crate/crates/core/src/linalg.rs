//! Factorizations for small dense symmetric matrices.

use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::Matrix;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
///
/// On failure returns the 1-based index of the first leading minor that is
/// not positive.
pub fn cholesky(a: &Matrix) -> core::result::Result<Matrix, usize> {
    assert!(a.is_square());
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(j + 1);
        }
        let ljj = libm::sqrt(d);
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Inverse of a symmetric positive-definite matrix through its Cholesky
/// factor. The result is symmetrized.
pub fn spd_inverse(a: &Matrix) -> core::result::Result<Matrix, usize> {
    let l = cholesky(a)?;
    let n = a.rows();
    // Solve L Lᵀ X = I column by column.
    let mut inv = Matrix::zeros(n, n);
    let mut y = vec![0.0; n];
    for c in 0..n {
        for i in 0..n {
            let mut s = if i == c { 1.0 } else { 0.0 };
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[(k, i)] * inv[(k, c)];
            }
            inv[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(inv.symmetrized())
}

/// Eigen-decomposition of a symmetric matrix: `A = Q diag(values) Qᵀ`,
/// eigenvalues ascending, eigenvectors in the columns of `vectors`.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl SymmetricEigen {
    /// Cyclic Jacobi rotations. Accurate to a few ulps of `‖A‖` for the
    /// sizes used here.
    pub fn new(a: &Matrix) -> Self {
        assert!(a.is_square());
        let n = a.rows();
        let mut m = a.symmetrized();
        let mut v = Matrix::identity(n);
        for _sweep in 0..100 {
            let mut off = 0.0;
            for i in 0..n {
                for j in i + 1..n {
                    off += m[(i, j)] * m[(i, j)];
                }
            }
            let scale = m.max_abs();
            if off == 0.0 || libm::sqrt(off) <= f64::EPSILON * 1e-3 * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = m[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = m[(p, p)];
                    let aqq = m[(q, q)];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / libm::sqrt(t * t + 1.0);
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[(k, p)];
                        let mkq = m[(k, q)];
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[(p, k)];
                        let mqk = m[(q, k)];
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                    m[(p, q)] = 0.0;
                    m[(q, p)] = 0.0;
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| m[(a, a)].total_cmp(&m[(b, b)]));
        let values = order.iter().map(|&i| m[(i, i)]).collect();
        let vectors = Matrix::from_fn(n, n, |i, j| v[(i, order[j])]);
        SymmetricEigen { values, vectors }
    }

    /// `Q diag(f(λ)) Qᵀ`.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Matrix {
        let n = self.values.len();
        let fv: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let q = &self.vectors;
        Matrix::from_fn(n, n, |i, j| (0..n).map(|k| q[(i, k)] * fv[k] * q[(j, k)]).sum())
    }

    pub fn max_abs_value(&self) -> f64 {
        self.values.iter().fold(0.0, |m, l| m.max(l.abs()))
    }
}

/// Moore–Penrose inverse of a symmetric matrix. Eigenvalues with
/// `|λ| <= rel_tol * max|λ|` are treated as zero.
pub fn symmetric_pinv(a: &Matrix, rel_tol: f64) -> Matrix {
    let eig = SymmetricEigen::new(a);
    let cutoff = rel_tol * eig.max_abs_value();
    if eig.max_abs_value() == 0.0 {
        return Matrix::zeros(a.rows(), a.cols());
    }
    eig.map(|l| if l.abs() <= cutoff { 0.0 } else { 1.0 / l })
        .symmetrized()
}

/// `A^{-1/2}` of a symmetric positive-definite matrix.
pub fn spd_inverse_sqrt(a: &Matrix) -> Matrix {
    SymmetricEigen::new(a)
        .map(|l| 1.0 / libm::sqrt(l))
        .symmetrized()
}

/// Orthonormal basis of the column space of `z` by modified Gram–Schmidt
/// with one re-orthogonalization pass. Columns whose residual norm falls
/// below `rel_tol` times the largest column norm are dropped.
/// Returns a `rows × rank` matrix.
pub fn orthonormal_column_basis(z: &Matrix, rel_tol: f64) -> Matrix {
    let rows = z.rows();
    let max_norm = (0..z.cols())
        .map(|j| norm(&z.column(j)))
        .fold(0.0, f64::max);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for j in 0..z.cols() {
        let mut v = z.column(j);
        for _pass in 0..2 {
            for q in &basis {
                let d = dot(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= d * qi;
                }
            }
        }
        let nv = norm(&v);
        if nv > rel_tol * max_norm && nv > 0.0 {
            for vi in v.iter_mut() {
                *vi /= nv;
            }
            basis.push(v);
        }
    }
    Matrix::from_fn(rows, basis.len(), |i, k| basis[k][i])
}

/// Generalized inverse built from a maximal nonsingular principal submatrix:
/// pick pivots greedily by largest remaining diagonal (pivoted Cholesky),
/// invert that submatrix and embed it, zeros elsewhere. Generally differs
/// from the Moore–Penrose inverse but still satisfies `A G A = A` for
/// symmetric n.n.d. `A`.
pub fn principal_submatrix_ginverse(a: &Matrix, rel_tol: f64) -> Matrix {
    assert!(a.is_square());
    let n = a.rows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
    let mut out = Matrix::zeros(n, n);
    if scale == 0.0 {
        return out;
    }
    let mut work = a.symmetrized();
    let mut pivots = Vec::new();
    let mut remaining: Vec<usize> = (0..n).collect();
    loop {
        let best = remaining
            .iter()
            .copied()
            .max_by(|&x, &y| work[(x, x)].total_cmp(&work[(y, y)]));
        let Some(k) = best else { break };
        let d = work[(k, k)];
        if d <= rel_tol * scale {
            break;
        }
        pivots.push(k);
        remaining.retain(|&i| i != k);
        // Schur complement update on the remaining indices.
        for &i in &remaining {
            for &j in &remaining {
                work[(i, j)] -= work[(i, k)] * work[(k, j)] / d;
            }
        }
    }
    pivots.sort_unstable();
    let sub = Matrix::from_fn(pivots.len(), pivots.len(), |i, j| a[(pivots[i], pivots[j])]);
    if let Ok(inv) = spd_inverse(&sub) {
        for (i, &pi) in pivots.iter().enumerate() {
            for (j, &pj) in pivots.iter().enumerate() {
                out[(pi, pj)] = inv[(i, j)];
            }
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd_example() -> Matrix {
        Matrix::from_rows(&[[4.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 2.0]])
    }

    #[test]
    fn cholesky_reconstructs() {
        let a = spd_example();
        let l = cholesky(&a).unwrap();
        assert!((&l * &l.transpose()).max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn cholesky_reports_failing_minor() {
        let a = Matrix::from_rows(&[[1.0, 0.8, 0.0], [0.8, 1.0, 0.8], [0.0, 0.8, 1.0]]);
        assert_eq!(cholesky(&a), Err(3));
        let b = Matrix::from_rows(&[[-1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(cholesky(&b), Err(1));
    }

    #[test]
    fn spd_inverse_is_inverse() {
        let a = spd_example();
        let inv = spd_inverse(&a).unwrap();
        assert!((&a * &inv).max_abs_diff(&Matrix::identity(3)) < 1e-14);
    }

    #[test]
    fn jacobi_reconstructs_and_orders() {
        let a = spd_example();
        let eig = SymmetricEigen::new(&a);
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
        assert!(eig.map(|l| l).max_abs_diff(&a) < 1e-13);
        let qtq = &eig.vectors.transpose() * &eig.vectors;
        assert!(qtq.max_abs_diff(&Matrix::identity(3)) < 1e-14);
    }

    #[test]
    fn centering_eigenvalues() {
        let eig = SymmetricEigen::new(&Matrix::centering(4));
        assert!(eig.values[0].abs() < 1e-15);
        for l in &eig.values[1..] {
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn inverse_sqrt_squares_to_inverse() {
        let a = spd_example();
        let s = spd_inverse_sqrt(&a);
        let inv = spd_inverse(&a).unwrap();
        assert!((&s * &s).max_abs_diff(&inv) < 1e-14);
    }

    #[test]
    fn gram_schmidt_drops_dependent_columns() {
        let z = Matrix::from_rows(&[[1.0, 2.0, 0.0], [1.0, 2.0, 1.0], [0.0, 0.0, 1.0]]);
        let q = orthonormal_column_basis(&z, 1e-12);
        assert_eq!(q.cols(), 2);
        assert!((&q.transpose() * &q).max_abs_diff(&Matrix::identity(2)) < 1e-14);
    }

    #[test]
    fn principal_ginverse_satisfies_defining_identity() {
        let h = Matrix::centering(3).scale(2.5);
        let g = principal_submatrix_ginverse(&h, 1e-12);
        assert!((&(&h * &g) * &h).max_abs_diff(&h) < 1e-13);
        // Distinct from the Moore–Penrose inverse H/2.5.
        assert!(g.max_abs_diff(&h.scale(1.0 / 6.25)) > 1e-3);
    }
}
