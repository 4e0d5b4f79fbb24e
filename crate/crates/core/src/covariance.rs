//! Within-subject covariance `V` and the derived matrices `V*` and `A*`.

use alloc::format;

use crate::error::{Error, Result};
use crate::linalg;
use crate::matrix::Matrix;

/// Relative tolerance for symmetry and zero checks on covariance inputs.
pub const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CovarianceSpec {
    Identity,
    /// `V_ij = r^|i-j| / (1 - r²)`, `-1 < r < 1`.
    Ar1(f64),
    /// Unit diagonal, `r` on the first off-diagonals.
    Tridiagonal(f64),
    Custom(Matrix),
}

impl CovarianceSpec {
    /// The `p × p` matrix before any positive-definiteness check.
    pub fn matrix(&self, p: usize) -> Result<Matrix> {
        match self {
            CovarianceSpec::Identity => Ok(Matrix::identity(p)),
            CovarianceSpec::Ar1(r) => {
                let r = *r;
                if !(r.is_finite() && r > -1.0 && r < 1.0) {
                    return Err(Error::BadParameter(format!(
                        "AR(1) correlation must lie in (-1, 1), got {r}"
                    )));
                }
                let w = 1.0 / (1.0 - r * r);
                Ok(Matrix::from_fn(p, p, |i, j| {
                    w * libm::pow(r, i.abs_diff(j) as f64)
                }))
            }
            CovarianceSpec::Tridiagonal(r) => {
                let r = *r;
                if !r.is_finite() {
                    return Err(Error::BadParameter(format!(
                        "tridiagonal parameter must be finite, got {r}"
                    )));
                }
                Ok(Matrix::from_fn(p, p, |i, j| match i.abs_diff(j) {
                    0 => 1.0,
                    1 => r,
                    _ => 0.0,
                }))
            }
            CovarianceSpec::Custom(m) => {
                if m.rows() != p || m.cols() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        found: m.rows().max(m.cols()),
                        what: "custom covariance",
                    });
                }
                let scale = m.max_abs().max(f64::MIN_POSITIVE);
                let residual = m.asymmetry() / scale;
                if residual > SYMMETRY_TOL {
                    return Err(Error::NotSymmetric { residual });
                }
                Ok(m.symmetrized())
            }
        }
    }
}

/// A validated positive-definite `V` together with `V⁻¹` and `V*`.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WithinSubjectCovariance {
    v: Matrix,
    v_inv: Matrix,
    v_star: Matrix,
}

/// Builds `V` for `p` periods; positive definiteness is checked by Cholesky.
pub fn build_covariance(spec: &CovarianceSpec, p: usize) -> Result<WithinSubjectCovariance> {
    if p < 1 {
        return Err(Error::BadDimension("p must be at least 1"));
    }
    WithinSubjectCovariance::new(spec.matrix(p)?)
}

impl WithinSubjectCovariance {
    pub fn new(v: Matrix) -> Result<Self> {
        if !v.is_square() {
            return Err(Error::DimensionMismatch {
                expected: v.rows(),
                found: v.cols(),
                what: "covariance columns",
            });
        }
        let scale = v.max_abs().max(f64::MIN_POSITIVE);
        let residual = v.asymmetry() / scale;
        if residual > SYMMETRY_TOL {
            return Err(Error::NotSymmetric { residual });
        }
        let v = v.symmetrized();
        let v_inv =
            linalg::spd_inverse(&v).map_err(|minor| Error::NotPositiveDefinite { minor })?;
        let v_star = v_star_from_inverse(&v_inv)?;
        Ok(WithinSubjectCovariance { v, v_inv, v_star })
    }

    pub fn p(&self) -> usize {
        self.v.rows()
    }

    pub fn v(&self) -> &Matrix {
        &self.v
    }

    pub fn v_inv(&self) -> &Matrix {
        &self.v_inv
    }

    /// `V* = V⁻¹ − (1ᵀV⁻¹1)⁻¹ V⁻¹ 1 1ᵀ V⁻¹`.
    pub fn v_star(&self) -> &Matrix {
        &self.v_star
    }

    /// `A* = H_n ⊗ V*` in factored form.
    pub fn a_star(&self, n: usize) -> AStar {
        AStar {
            n,
            v_star: self.v_star.clone(),
        }
    }

    /// Covariance of `c V`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::BadParameter(format!("scale must be positive, got {c}")));
        }
        Self::new(self.v.scale(c))
    }
}

/// `V*` from the formula, given `V⁻¹`.
pub fn v_star_from_inverse(v_inv: &Matrix) -> Result<Matrix> {
    let p = v_inv.rows();
    let w = v_inv.row_sums(); // V⁻¹ 1
    let denom: f64 = w.iter().sum(); // 1ᵀ V⁻¹ 1
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::SingularV);
    }
    let out = Matrix::from_fn(p, p, |i, j| v_inv[(i, j)] - w[i] * w[j] / denom);
    Ok(out.symmetrized())
}

/// `A* = H_n ⊗ V*`, kept factored so quadratic forms never materialize
/// the `np × np` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct AStar {
    n: usize,
    v_star: Matrix,
}

impl AStar {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn centering(&self) -> Matrix {
        Matrix::centering(self.n)
    }

    pub fn v_star(&self) -> &Matrix {
        &self.v_star
    }

    pub fn to_dense(&self) -> Matrix {
        Matrix::centering(self.n).kron(&self.v_star)
    }

    /// `tr(A*) = (n − 1) tr(V*)`.
    pub fn trace(&self) -> f64 {
        (self.n as f64 - 1.0) * self.v_star.trace()
    }

    /// `A* x` for a stacked `np` vector.
    pub fn apply(&self, x: &[f64]) -> alloc::vec::Vec<f64> {
        let p = self.v_star.rows();
        assert_eq!(x.len(), self.n * p);
        let mut mean = alloc::vec![0.0; p];
        for block in x.chunks_exact(p) {
            for (m, v) in mean.iter_mut().zip(block) {
                *m += v;
            }
        }
        for m in mean.iter_mut() {
            *m /= self.n as f64;
        }
        let mut out = alloc::vec::Vec::with_capacity(x.len());
        let mut centered = alloc::vec![0.0; p];
        for block in x.chunks_exact(p) {
            for ((c, v), m) in centered.iter_mut().zip(block).zip(&mean) {
                *c = v - m;
            }
            out.extend(self.v_star.mul_vec(&centered));
        }
        out
    }
}
