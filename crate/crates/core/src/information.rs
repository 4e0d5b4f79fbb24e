//! Direct-effect information matrix.
//!
//! Two independent routes are provided: the block Schur complement
//! `C11 − C12 C22⁻ C21` with `A* = H_n ⊗ V*` kept factored, and a reference
//! route that whitens the full model and projects out the nuisance columns
//! explicitly. They must agree for every design.

use alloc::vec::Vec;

use crate::covariance::WithinSubjectCovariance;
use crate::design::{design_matrices, CrossoverDesign, ModelLayout};
use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricEigen};
use crate::matrix::Matrix;
use crate::optimality::verify_oa;

/// `C11 = Tᵀ A* T`, `C12 = Tᵀ A* F`, `C22 = Fᵀ A* F`.
#[derive(Clone, Debug, PartialEq)]
pub struct CBlocks {
    pub c11: Matrix,
    pub c12: Matrix,
    pub c22: Matrix,
}

impl CBlocks {
    pub fn c21(&self) -> Matrix {
        self.c12.transpose()
    }

    /// `C11 − C12 G C21` for a caller-supplied generalized inverse `G` of `C22`.
    pub fn schur_with(&self, g: &Matrix) -> Matrix {
        let c12g = &self.c12 * g;
        (&self.c11 - &(&c12g * &self.c21())).symmetrized()
    }
}

/// Accumulates `Σ_j T_jᵀ M T_j` from subject sequences: entry `(a, b)`
/// collects `M[i1, i2]` whenever subject `j` has `a` in period `i1` and `b`
/// in period `i2`.
fn subject_quadratic(d: &CrossoverDesign, m: &Matrix, out: &mut Matrix) {
    let p = d.p();
    for s in d.subjects() {
        for i1 in 0..p {
            let a = s[i1] as usize - 1;
            for i2 in 0..p {
                let b = s[i2] as usize - 1;
                out[(a, b)] += m[(i1, i2)];
            }
        }
    }
}

/// `Sᵀ M S` where `S = Σ_j T_j` is the `p × t` period-by-treatment count.
fn count_quadratic(counts: &Matrix, m: &Matrix) -> Matrix {
    &(&counts.transpose() * m) * counts
}

pub fn c_blocks(d: &CrossoverDesign, cov: &WithinSubjectCovariance) -> Result<CBlocks> {
    if cov.p() != d.p() {
        return Err(Error::DimensionMismatch {
            expected: d.p(),
            found: cov.p(),
            what: "covariance size vs. period count",
        });
    }
    let (t, n, p) = (d.t(), d.n(), d.p());
    let psi = Matrix::shift(p);
    let vs = cov.v_star();
    let m0 = vs.clone();
    let m1 = vs * &psi;
    let m2 = &(&psi.transpose() * vs) * &psi;

    let mut counts = Matrix::zeros(p, t);
    for s in d.subjects() {
        for (i, &x) in s.iter().enumerate() {
            counts[(i, x as usize - 1)] += 1.0;
        }
    }
    let inv_n = 1.0 / n as f64;
    let mut blocks = [Matrix::zeros(t, t), Matrix::zeros(t, t), Matrix::zeros(t, t)];
    for (out, m) in blocks.iter_mut().zip([&m0, &m1, &m2]) {
        subject_quadratic(d, m, out);
        let between = count_quadratic(&counts, m).scale(inv_n);
        *out = &*out - &between;
    }
    let [c11, c12, c22] = blocks;
    Ok(CBlocks {
        c11: c11.symmetrized(),
        c12,
        c22: c22.symmetrized(),
    })
}

/// Default relative cutoff for pseudoinverse eigenvalues: `t · ε`.
pub fn default_pinv_tolerance(t: usize) -> f64 {
    t as f64 * f64::EPSILON
}

/// Cutoff used for `C22⁺`: `max(t, n·p) · ε`. Every entry of `C22` is a sum
/// over `n·p` observations, and its exact null vector `1_t` picks up
/// roundoff of that order; `t · ε` alone is exceeded once `n` reaches the
/// low hundreds.
pub fn information_pinv_tolerance(d: &CrossoverDesign) -> f64 {
    (d.t().max(d.n() * d.p())) as f64 * f64::EPSILON
}

/// `n · max|V*|`, the magnitude against which information residuals are
/// judged. It stays positive for designs whose information vanishes.
pub fn information_scale(d: &CrossoverDesign, cov: &WithinSubjectCovariance) -> f64 {
    d.n() as f64 * cov.v_star().max_abs()
}

/// Moore–Penrose inverse of a symmetric matrix via its eigendecomposition.
/// Eigenvalues at or below `rel_tol · λ_max` count as zero; `None` uses
/// [`default_pinv_tolerance`].
pub fn generalized_inverse(m: &Matrix, rel_tol: Option<f64>) -> Matrix {
    let tol = rel_tol.unwrap_or_else(|| default_pinv_tolerance(m.rows()));
    linalg::symmetric_pinv(m, tol)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassifyTolerance {
    /// Relative tolerance for symmetry, n.n.d. and zero-sum checks.
    pub structural: f64,
    /// Relative spread allowed among diagonal and among off-diagonal entries.
    pub complete_symmetry: f64,
}

impl Default for ClassifyTolerance {
    fn default() -> Self {
        ClassifyTolerance {
            structural: 1e-10,
            complete_symmetry: 1e-8,
        }
    }
}

/// Structural properties of an information matrix. All residuals are
/// relative to the largest absolute entry (or eigenvalue for n.n.d.).
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MatrixClassReport {
    pub is_symmetric: bool,
    pub symmetry_residual: f64,
    pub is_nnd: bool,
    /// `λ_min / max|λ|` (or over the outside scale, when larger), zero for
    /// the zero matrix.
    pub min_eigenvalue_ratio: f64,
    pub zero_row_sums: bool,
    pub row_sum_residual: f64,
    pub zero_col_sums: bool,
    pub col_sum_residual: f64,
    pub is_completely_symmetric: bool,
    pub diagonal_spread: f64,
    pub off_diagonal_spread: f64,
    pub tolerance: ClassifyTolerance,
}

impl MatrixClassReport {
    /// Symmetric, n.n.d., zero row and column sums.
    pub fn satisfies_information_properties(&self) -> bool {
        self.is_symmetric && self.is_nnd && self.zero_row_sums && self.zero_col_sums
    }
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
        (lo.min(x), hi.max(x))
    });
    if lo.is_finite() {
        hi - lo
    } else {
        0.0
    }
}

/// Evaluates the five predicates on a square matrix.
pub fn classify(m: &Matrix, tol: ClassifyTolerance) -> MatrixClassReport {
    classify_lifted(m, 1, tol)
}

/// Classification of `I_g ⊗ block`, computed from the `t × t` block alone.
/// Matches `classify(&I_g.kron(block))` exactly in its verdicts.
pub fn classify_lifted(block: &Matrix, g: usize, tol: ClassifyTolerance) -> MatrixClassReport {
    classify_lifted_with_scale(block, g, 0.0, tol)
}

/// As [`classify_lifted`], with residuals taken relative to
/// `max(scale, max|block|)`. An information matrix of a design with no
/// estimable contrasts is pure roundoff, and only an outside magnitude such
/// as that of the unadjusted information tells it apart from real structure.
pub fn classify_lifted_with_scale(
    block: &Matrix,
    g: usize,
    scale: f64,
    tol: ClassifyTolerance,
) -> MatrixClassReport {
    assert!(block.is_square(), "classification needs a square matrix");
    assert!(g >= 1);
    let t = block.rows();
    let scale = match block.max_abs().max(scale) {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let symmetry_residual = block.asymmetry() / scale;
    let row_sum_residual = block.row_sums().iter().fold(0.0, |m: f64, s| m.max(s.abs())) / scale;
    let col_sum_residual = block.col_sums().iter().fold(0.0, |m: f64, s| m.max(s.abs())) / scale;

    let eig = SymmetricEigen::new(&block.symmetrized());
    let lmax = eig.max_abs_value();
    let min_eigenvalue_ratio = match eig.values.first() {
        Some(&l) if lmax > 0.0 => l / lmax.max(scale),
        _ => 0.0,
    };

    let diagonal_spread = spread((0..t).map(|i| block[(i, i)])) / scale;
    let off = (0..t).flat_map(|i| (0..t).filter(move |&j| j != i).map(move |j| (i, j)));
    let mut off_values: Vec<f64> = off.map(|(i, j)| block[(i, j)]).collect();
    if g > 1 {
        // Off-diagonal blocks of I_g ⊗ block are zero.
        off_values.push(0.0);
    }
    let off_diagonal_spread = spread(off_values.into_iter()) / scale;

    MatrixClassReport {
        is_symmetric: symmetry_residual <= tol.structural,
        symmetry_residual,
        is_nnd: min_eigenvalue_ratio >= -tol.structural,
        min_eigenvalue_ratio,
        zero_row_sums: row_sum_residual <= tol.structural,
        row_sum_residual,
        zero_col_sums: col_sum_residual <= tol.structural,
        col_sum_residual,
        is_completely_symmetric: diagonal_spread <= tol.complete_symmetry
            && off_diagonal_spread <= tol.complete_symmetry,
        diagonal_spread,
        off_diagonal_spread,
        tolerance: tol,
    }
}

/// `C_d = I_g ⊗ block`, kept as the block; the full matrix is built on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct InformationMatrix {
    pub g: usize,
    pub block: Matrix,
    /// `n · max|V*|`, which bounds the entries of the unadjusted
    /// direct-effect information `C11`. Classification residuals are
    /// relative to it.
    pub scale: f64,
    pub report: MatrixClassReport,
}

impl InformationMatrix {
    fn from_block(block: Matrix, g: usize, scale: f64) -> Self {
        let report = classify_lifted_with_scale(&block, g, scale, ClassifyTolerance::default());
        InformationMatrix {
            g,
            block,
            scale,
            report,
        }
    }

    pub fn full(&self) -> Matrix {
        Matrix::identity(self.g).kron(&self.block)
    }

    /// `tr(C_d) = g · tr(block)`.
    pub fn trace(&self) -> f64 {
        self.g as f64 * self.block.trace()
    }

    pub fn reclassify(&mut self, tol: ClassifyTolerance) {
        self.report = classify_lifted_with_scale(&self.block, self.g, self.scale, tol);
    }
}

fn check_g(g: usize) -> Result<()> {
    if g == 0 {
        Err(Error::BadDimension("g must be at least 1"))
    } else {
        Ok(())
    }
}

/// The `g = 1` block `C11 − C12 C22⁺ C21` with the Moore–Penrose inverse.
pub fn information_block(d: &CrossoverDesign, cov: &WithinSubjectCovariance) -> Result<Matrix> {
    let blocks = c_blocks(d, cov)?;
    Ok(blocks.schur_with(&generalized_inverse(&blocks.c22, Some(information_pinv_tolerance(d)))))
}

pub fn information_matrix(
    d: &CrossoverDesign,
    cov: &WithinSubjectCovariance,
    g: usize,
) -> Result<InformationMatrix> {
    check_g(g)?;
    let blocks = c_blocks(d, cov)?;
    let block = blocks.schur_with(&generalized_inverse(&blocks.c22, Some(information_pinv_tolerance(d))));
    Ok(InformationMatrix::from_block(block, g, information_scale(d, cov)))
}

/// Reference route: whiten by `Σ^{-1/2} = I_n ⊗ V^{-1/2}`, project out
/// `[1 | P | U | F]` with a rank-revealing orthonormal basis, and form
/// `Tᵀ Σ^{-1/2} pr⊥ Σ^{-1/2} T`. Materializes `np × np`-sized work.
pub fn information_matrix_projection_oracle(
    d: &CrossoverDesign,
    cov: &WithinSubjectCovariance,
    g: usize,
) -> Result<InformationMatrix> {
    check_g(g)?;
    if cov.p() != d.p() {
        return Err(Error::DimensionMismatch {
            expected: d.p(),
            found: cov.p(),
            what: "covariance size vs. period count",
        });
    }
    let layout = ModelLayout::for_design(d);
    let dm = design_matrices(d);
    let whitener = Matrix::identity(d.n()).kron(&linalg::spd_inverse_sqrt(cov.v()));
    let ones = Matrix::filled(d.n() * d.p(), 1, 1.0);
    let nuisance = Matrix::hstack(&[
        &ones,
        &layout.period_matrix(),
        &layout.subject_matrix(),
        &dm.carryover,
    ]);
    let z = &whitener * &nuisance;
    let q = linalg::orthonormal_column_basis(&z, 1e-10);
    let w = &whitener * &dm.treatment;
    let qw = &q.transpose() * &w;
    let block = (&(&w.transpose() * &w) - &(&qw.transpose() * &qw)).symmetrized();
    Ok(InformationMatrix::from_block(block, g, information_scale(d, cov)))
}

/// Closed-form information of a certified Type-I orthogonal array and the
/// quantities it is assembled from.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClosedFormOa {
    pub matrix: Matrix,
    pub e11: f64,
    pub e12: f64,
    pub e22: f64,
    /// `E = n/(t−1) · [[e11, e12], [e12, e22]]`.
    pub e: Matrix,
    pub det_e: f64,
    /// Coefficient of `H_t`: `det(E) / E_22`.
    pub scalar: f64,
}

impl ClosedFormOa {
    /// `det(E) / e22` with the unscaled `e22`. Exceeds [`Self::scalar`] by
    /// the factor `n / (t − 1)`.
    pub fn det_over_unscaled_e22(&self) -> f64 {
        self.det_e / self.e22
    }
}

/// `(det(E) / E_22) · H_t` for an OA_I(n = λt(t−1), p = t, t, 2).
///
/// The `e`-terms use subject 1's incidence `T₁`:
/// `e11 = tr(T₁ᵀV*T₁)`, `e12 = tr(T₁ᵀV*ψT₁)`,
/// `e22 = tr(T₁ᵀψᵀV*ψT₁) − (V*)₁₁ / t`.
pub fn closed_form_oa_information(
    d_star: &CrossoverDesign,
    cov: &WithinSubjectCovariance,
) -> Result<ClosedFormOa> {
    if !verify_oa(d_star).passed {
        return Err(Error::NotAnOa);
    }
    if cov.p() != d_star.p() {
        return Err(Error::DimensionMismatch {
            expected: d_star.p(),
            found: cov.p(),
            what: "covariance size vs. period count",
        });
    }
    let (t, n, p) = (d_star.t(), d_star.n(), d_star.p());
    let first = CrossoverDesign::from_subjects(t, &[d_star.subject(0).to_vec()])?;
    let t1 = design_matrices(&first).treatment;
    let psi = Matrix::shift(p);
    let vs = cov.v_star();
    let quad = |m: &Matrix| (&(&t1.transpose() * m) * &t1).trace();
    let e11 = quad(vs);
    let e12 = quad(&(vs * &psi));
    let e22 = quad(&(&(&psi.transpose() * vs) * &psi)) - vs[(0, 0)] / t as f64;
    let w = n as f64 / (t as f64 - 1.0);
    let e = Matrix::from_rows(&[[e11, e12], [e12, e22]]).scale(w);
    let det_e = e[(0, 0)] * e[(1, 1)] - e[(0, 1)] * e[(1, 0)];
    if e22.abs() <= 1e-14 * e11.abs().max(e12.abs()).max(f64::MIN_POSITIVE) {
        return Err(Error::ZeroE22);
    }
    let scalar = det_e / e[(1, 1)];
    Ok(ClosedFormOa {
        matrix: Matrix::centering(t).scale(scalar),
        e11,
        e12,
        e22,
        e,
        det_e,
        scalar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{build_covariance, CovarianceSpec};
    use crate::optimality::{construct_oa_all_permutations, construct_oa_modular};
    use alloc::vec;

    fn cov(spec: CovarianceSpec, p: usize) -> WithinSubjectCovariance {
        build_covariance(&spec, p).unwrap()
    }

    /// Dense oracle for the blocks: materialize A* and multiply.
    fn dense_blocks(d: &CrossoverDesign, c: &WithinSubjectCovariance) -> CBlocks {
        let dm = design_matrices(d);
        let a = c.a_star(d.n()).to_dense();
        let tt = dm.treatment.transpose();
        let ft = dm.carryover.transpose();
        CBlocks {
            c11: &(&tt * &a) * &dm.treatment,
            c12: &(&tt * &a) * &dm.carryover,
            c22: &(&ft * &a) * &dm.carryover,
        }
    }

    #[test]
    fn single_subject_has_zero_blocks() {
        let d = CrossoverDesign::from_subjects(3, &[vec![2, 3, 1]]).unwrap();
        let b = c_blocks(&d, &cov(CovarianceSpec::Ar1(0.4), 3)).unwrap();
        for m in [&b.c11, &b.c12, &b.c22] {
            assert!(m.max_abs() < 1e-15);
        }
        let info = information_matrix(&d, &cov(CovarianceSpec::Ar1(0.4), 3), 2).unwrap();
        assert!(info.full().max_abs() < 1e-15);
    }

    #[test]
    fn blocks_match_dense_product() {
        let d = CrossoverDesign::from_subjects(2, &[vec![1, 2], vec![2, 1]]).unwrap();
        let c = cov(CovarianceSpec::Identity, 2);
        let fast = c_blocks(&d, &c).unwrap();
        let dense = dense_blocks(&d, &c);
        assert!(fast.c11.max_abs_diff(&dense.c11) < 1e-14);
        assert!(fast.c12.max_abs_diff(&dense.c12) < 1e-14);
        assert!(fast.c22.max_abs_diff(&dense.c22) < 1e-14);

        let d = construct_oa_modular(5).unwrap();
        let c = cov(CovarianceSpec::Tridiagonal(0.3), 5);
        let fast = c_blocks(&d, &c).unwrap();
        let dense = dense_blocks(&d, &c);
        assert!(fast.c11.max_abs_diff(&dense.c11) < 1e-12);
        assert!(fast.c12.max_abs_diff(&dense.c12) < 1e-12);
        assert!(fast.c22.max_abs_diff(&dense.c22) < 1e-12);
        assert!(fast.c11.row_sums().iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let d = CrossoverDesign::from_subjects(2, &[vec![1, 2]]).unwrap();
        let err = c_blocks(&d, &cov(CovarianceSpec::Identity, 3)).unwrap_err();
        assert_eq!(err.kind(), "DimensionMismatch");
    }

    #[test]
    fn pseudoinverse_examples() {
        let h = Matrix::centering(3);
        assert!(generalized_inverse(&h, None).max_abs_diff(&h) < 1e-14);
        let d = Matrix::diagonal(&[2.0, 0.0]);
        assert!(generalized_inverse(&d, None).max_abs_diff(&Matrix::diagonal(&[0.5, 0.0])) < 1e-15);
        assert_eq!(generalized_inverse(&Matrix::zeros(3, 3), None), Matrix::zeros(3, 3));
    }

    #[test]
    fn trace_lifts_with_g() {
        let d = construct_oa_all_permutations(3, 1000).unwrap();
        let c = cov(CovarianceSpec::Ar1(0.3), 3);
        let one = information_matrix(&d, &c, 1).unwrap();
        let three = information_matrix(&d, &c, 3).unwrap();
        assert!((three.trace() - 3.0 * one.trace()).abs() < 1e-12);
        assert!((three.full().trace() - three.trace()).abs() < 1e-12);
    }

    #[test]
    fn oa_block_is_completely_symmetric_and_matches_closed_form() {
        let d = construct_oa_all_permutations(3, 1000).unwrap();
        let c = cov(CovarianceSpec::Identity, 3);
        let info = information_matrix(&d, &c, 1).unwrap();
        assert!(info.report.is_completely_symmetric);
        let closed = closed_form_oa_information(&d, &c).unwrap();
        assert!(info.block.max_abs_diff(&closed.matrix) < 1e-12);
        // V = I, n = 6: e11 = 2, e12 = −2/3, e22 = 10/9; det(E) = 16, E22 = 10/3.
        assert!((closed.e11 - 2.0).abs() < 1e-14);
        assert!((closed.e12 + 2.0 / 3.0).abs() < 1e-14);
        assert!((closed.e22 - 10.0 / 9.0).abs() < 1e-14);
        assert!((closed.scalar - 4.8).abs() < 1e-12);
        assert!((closed.det_over_unscaled_e22() / closed.scalar - 3.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_rejects_non_oa() {
        let d = CrossoverDesign::from_subjects(3, &[vec![1, 2, 3], vec![3, 1, 2], vec![2, 3, 1]])
            .unwrap();
        let c = cov(CovarianceSpec::Identity, 3);
        assert_eq!(closed_form_oa_information(&d, &c), Err(Error::NotAnOa));
    }

    #[test]
    fn projection_oracle_agrees_on_small_cases() {
        let c = cov(CovarianceSpec::Ar1(0.3), 3);
        let single = CrossoverDesign::from_subjects(3, &[vec![1, 2, 3]]).unwrap();
        let o = information_matrix_projection_oracle(&single, &c, 1).unwrap();
        assert!(o.block.max_abs() < 1e-12);

        let id = cov(CovarianceSpec::Identity, 3);
        let d = construct_oa_all_permutations(3, 1000).unwrap();
        let o = information_matrix_projection_oracle(&d, &id, 1).unwrap();
        assert!(o.report.zero_row_sums && o.report.zero_col_sums);
        let b = information_matrix(&d, &id, 1).unwrap();
        assert!(o.block.max_abs_diff(&b.block) < 1e-12);
    }

    #[test]
    fn classify_examples() {
        let tol = ClassifyTolerance::default();
        let r = classify(&Matrix::centering(3), tol);
        assert!(r.is_symmetric && r.is_nnd && r.zero_row_sums && r.zero_col_sums);
        assert!(r.is_completely_symmetric);

        let lifted = Matrix::identity(2).kron(&Matrix::centering(3));
        let r = classify(&lifted, tol);
        assert!(!r.is_completely_symmetric);
        assert!(r.satisfies_information_properties());

        let r = classify(&Matrix::diagonal(&[1.0, 2.0]), tol);
        assert!(!r.zero_row_sums);
        assert!(r.is_nnd);

        let r = classify(&Matrix::diagonal(&[1.0, -2.0]), tol);
        assert!(!r.is_nnd);
        let r = classify(&Matrix::from_rows(&[[0.0, 1.0], [0.0, 0.0]]), tol);
        assert!(!r.is_symmetric);
    }

    #[test]
    fn lifted_classification_matches_dense() {
        let tol = ClassifyTolerance::default();
        let blocks = [
            Matrix::centering(3).scale(4.2),
            Matrix::diagonal(&[1.0, 1.0, 1.0]),
            Matrix::from_rows(&[[2.0, -1.0, -1.0], [-1.0, 1.5, -0.5], [-1.0, -0.5, 1.5]]),
        ];
        for b in &blocks {
            for g in 1..=3 {
                let dense = classify(&Matrix::identity(g).kron(b), tol);
                let lifted = classify_lifted(b, g, tol);
                assert_eq!(dense.is_symmetric, lifted.is_symmetric);
                assert_eq!(dense.is_nnd, lifted.is_nnd);
                assert_eq!(dense.zero_row_sums, lifted.zero_row_sums);
                assert_eq!(dense.zero_col_sums, lifted.zero_col_sums);
                assert_eq!(dense.is_completely_symmetric, lifted.is_completely_symmetric);
                assert!((dense.off_diagonal_spread - lifted.off_diagonal_spread).abs() < 1e-15);
            }
        }
    }
}
