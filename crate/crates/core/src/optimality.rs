//! Orthogonal-array constructions and certification, trace maximization over
//! binary designs, efficiencies, and the permutation-averaging decomposition
//! behind the universal-optimality argument.

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use crate::covariance::{build_covariance, CovarianceSpec, WithinSubjectCovariance};
use crate::design::{factorial, permutations, BinaryDesigns, CrossoverDesign};
use crate::error::{Error, Result};
use crate::information::{c_blocks, information_block, information_matrix};
use crate::matrix::Matrix;

/// Relative window within which two traces count as tied.
pub const TIE_REL_TOL: f64 = 1e-9;
/// At most this many argmax designs are reported.
pub const ARGMAX_CAP: usize = 100;

/// Ordered symbol-pair counts for one ordered pair of rows (1-based).
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PairCounts {
    pub rows: (usize, usize),
    /// Row-major `t × t`; entry `(a-1, b-1)` counts columns with `a` in the
    /// first row and `b` in the second.
    pub counts: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum OaFailure {
    PeriodsNotEqualTreatments { p: usize, t: usize },
    /// `n` is not a multiple of `t(t−1)`.
    SubjectsNotMultiple { n: usize, block: usize },
    PairCount {
        rows: (usize, usize),
        symbols: (u16, u16),
        count: u32,
        expected: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OaCertificate {
    pub t: usize,
    pub p: usize,
    pub n: usize,
    pub lambda: Option<usize>,
    pub pair_counts: Vec<PairCounts>,
    pub passed: bool,
    /// First violation found, scanning row pairs then symbol pairs in order.
    pub failure: Option<OaFailure>,
}

impl OaCertificate {
    pub fn counts_for(&self, rows: (usize, usize)) -> Option<&PairCounts> {
        self.pair_counts.iter().find(|c| c.rows == rows)
    }
}

/// Checks the Type-I strength-2 property by exhaustive pair counting: every
/// ordered pair of distinct symbols appears exactly `λ = n / (t(t−1))` times
/// in every ordered pair of rows, and no column repeats a symbol.
pub fn verify_oa(d: &CrossoverDesign) -> OaCertificate {
    let (t, n, p) = (d.t(), d.n(), d.p());
    let mut pair_counts = Vec::with_capacity(p * p.saturating_sub(1));
    for i1 in 0..p {
        for i2 in 0..p {
            if i1 == i2 {
                continue;
            }
            let mut counts = alloc::vec![0u32; t * t];
            for s in d.subjects() {
                counts[(s[i1] as usize - 1) * t + (s[i2] as usize - 1)] += 1;
            }
            pair_counts.push(PairCounts {
                rows: (i1 + 1, i2 + 1),
                counts,
            });
        }
    }
    let block = t * (t - 1);
    let (lambda, mut failure) = if p != t {
        (None, Some(OaFailure::PeriodsNotEqualTreatments { p, t }))
    } else if n % block != 0 {
        (None, Some(OaFailure::SubjectsNotMultiple { n, block }))
    } else {
        (Some(n / block), None)
    };
    if let (Some(lambda), None) = (lambda, &failure) {
        'scan: for pc in &pair_counts {
            for a in 0..t {
                for b in 0..t {
                    let expected = if a == b { 0 } else { lambda as u32 };
                    let count = pc.counts[a * t + b];
                    if count != expected {
                        failure = Some(OaFailure::PairCount {
                            rows: pc.rows,
                            symbols: (a as u16 + 1, b as u16 + 1),
                            count,
                            expected,
                        });
                        break 'scan;
                    }
                }
            }
        }
    }
    OaCertificate {
        t,
        p,
        n,
        lambda: if failure.is_none() { lambda } else { None },
        pair_counts,
        passed: failure.is_none(),
        failure,
    }
}

/// All `t!` permutations of `1..=t` as columns, lexicographic; `λ = (t−2)!`.
pub fn construct_oa_all_permutations(t: usize, cap: u64) -> Result<CrossoverDesign> {
    if t < 3 {
        return Err(Error::BadDimension("orthogonal array needs t >= 3"));
    }
    match factorial(t) {
        Some(f) if f <= cap as u128 => {}
        required => return Err(Error::CapExceeded { required, cap }),
    }
    CrossoverDesign::from_subjects(t, &permutations(t))
}

fn is_prime(t: usize) -> bool {
    t >= 2 && (2..).take_while(|k| k * k <= t).all(|k| !t.is_multiple_of(k))
}

/// Columns `(b, c)` for `b ∈ 1..t`, `c ∈ 0..t`, row `i` holding
/// `((c + i·b) mod t) + 1`. For prime `t` this is an OA with `λ = 1`.
pub fn construct_oa_modular(t: usize) -> Result<CrossoverDesign> {
    if t < 3 {
        return Err(Error::BadDimension("orthogonal array needs t >= 3"));
    }
    if !is_prime(t) {
        return Err(Error::NotPrime(t));
    }
    let mut subjects = Vec::with_capacity(t * (t - 1));
    for b in 1..t {
        for c in 0..t {
            subjects.push((0..t).map(|i| ((c + i * b) % t) as u16 + 1).collect());
        }
    }
    CrossoverDesign::from_subjects(t, &subjects)
}

/// An OA with `t` treatments and `n` subjects built from the available
/// constructions, if one applies: all-permutations copies when `t! | n`,
/// otherwise modular copies for prime `t`.
pub fn reference_oa(t: usize, n: usize, cap: u64) -> Option<CrossoverDesign> {
    if t < 3 || n == 0 || !n.is_multiple_of(t * (t - 1)) {
        return None;
    }
    let f = factorial(t)? as usize;
    if n.is_multiple_of(f) {
        if let Ok(base) = construct_oa_all_permutations(t, cap) {
            return base.replicate(n / f).ok();
        }
    }
    let base = construct_oa_modular(t).ok()?;
    base.replicate(n / (t * (t - 1))).ok()
}

/// `tr(C_d) = g · tr(block)`.
pub fn trace_criterion(d: &CrossoverDesign, cov: &WithinSubjectCovariance, g: usize) -> Result<f64> {
    if g == 0 {
        return Err(Error::BadDimension("g must be at least 1"));
    }
    Ok(g as f64 * information_block(d, cov)?.trace())
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SearchResult {
    pub t: usize,
    pub n: usize,
    pub g: usize,
    pub best_trace: f64,
    /// Ranks (see [`BinaryDesigns`]) of the recorded argmax designs, ascending.
    pub argmax_ranks: Vec<u64>,
    pub argmax_designs: Vec<CrossoverDesign>,
    pub evaluated_count: u64,
    pub reference_oa_trace: Option<f64>,
    pub oa_attains_max: bool,
}

fn tie_threshold(best: f64) -> f64 {
    best - TIE_REL_TOL * best.abs()
}

/// Exhaustive trace maximization over binary designs with `p = t`.
///
/// The work splits into two passes over rank ranges, so callers can fan
/// ranges out to workers: [`TraceSearch::max_over`] then
/// [`TraceSearch::ties_over`] with the global maximum. Both reductions are
/// exact (`max`, and sorted-union-truncate), so the result does not depend
/// on how the ranks are partitioned.
#[derive(Clone, Debug)]
pub struct TraceSearch {
    designs: BinaryDesigns,
    cov: WithinSubjectCovariance,
    g: usize,
    cap: u64,
}

impl TraceSearch {
    pub fn new(
        t: usize,
        n: usize,
        cov: &WithinSubjectCovariance,
        g: usize,
        cap: u64,
    ) -> Result<Self> {
        if g == 0 {
            return Err(Error::BadDimension("g must be at least 1"));
        }
        if cov.p() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                found: cov.p(),
                what: "covariance size vs. period count",
            });
        }
        Ok(TraceSearch {
            designs: BinaryDesigns::new(t, n, cap)?,
            cov: cov.clone(),
            g,
            cap,
        })
    }

    pub fn count(&self) -> u64 {
        self.designs.count()
    }

    pub fn designs(&self) -> &BinaryDesigns {
        &self.designs
    }

    /// Largest trace over `range`; `-∞` for an empty range.
    pub fn max_over(&self, range: Range<u64>) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for (_, d) in self.designs.range(range) {
            best = best.max(trace_criterion(&d, &self.cov, self.g)?);
        }
        Ok(best)
    }

    /// Ranks in `range` whose trace is within the tie window of `best`,
    /// smallest [`ARGMAX_CAP`] only.
    pub fn ties_over(&self, range: Range<u64>, best: f64) -> Result<Vec<u64>> {
        let threshold = tie_threshold(best);
        let mut out = Vec::new();
        for (rank, d) in self.designs.range(range) {
            if trace_criterion(&d, &self.cov, self.g)? >= threshold {
                out.push(rank);
                if out.len() == ARGMAX_CAP {
                    break;
                }
            }
        }
        Ok(out)
    }

    pub fn merge_ties(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
        a.extend(b);
        a.sort_unstable();
        a.dedup();
        a.truncate(ARGMAX_CAP);
        a
    }

    pub fn finish(&self, best: f64, ties: Vec<u64>) -> Result<SearchResult> {
        let (t, n) = (self.designs.t(), self.designs.n());
        let reference_oa_trace = match reference_oa(t, n, self.cap) {
            Some(oa) => Some(trace_criterion(&oa, &self.cov, self.g)?),
            None => None,
        };
        let oa_attains_max = reference_oa_trace.is_some_and(|tr| tr >= tie_threshold(best));
        Ok(SearchResult {
            t,
            n,
            g: self.g,
            best_trace: best,
            argmax_designs: ties.iter().map(|&r| self.designs.design_at(r)).collect(),
            argmax_ranks: ties,
            evaluated_count: self.count(),
            reference_oa_trace,
            oa_attains_max,
        })
    }

    /// Single-threaded run over all ranks.
    pub fn run(&self) -> Result<SearchResult> {
        let all = 0..self.count();
        let best = self.max_over(all.clone())?;
        let ties = self.ties_over(all, best)?;
        self.finish(best, ties)
    }
}

/// Exhaustive single-threaded search; see [`TraceSearch`] for the parallel form.
pub fn search_max_trace(
    t: usize,
    n: usize,
    cov: &WithinSubjectCovariance,
    g: usize,
    cap: u64,
) -> Result<SearchResult> {
    TraceSearch::new(t, n, cov, g, cap)?.run()
}

fn check_same_shape(d: &CrossoverDesign, d_star: &CrossoverDesign) -> Result<()> {
    for (what, a, b) in [
        ("treatment count", d.t(), d_star.t()),
        ("subject count", d.n(), d_star.n()),
        ("period count", d.p(), d_star.p()),
    ] {
        if a != b {
            return Err(Error::DimensionMismatch {
                expected: b,
                found: a,
                what,
            });
        }
    }
    Ok(())
}

/// `e = tr(C_d) / tr(C_d*)`. The `g` factor cancels; it is accepted for
/// interface symmetry and validated.
pub fn efficiency(
    d: &CrossoverDesign,
    d_star: &CrossoverDesign,
    cov: &WithinSubjectCovariance,
    g: usize,
) -> Result<f64> {
    Ok(efficiency_parts(d, d_star, cov, g)?.2)
}

fn efficiency_parts(
    d: &CrossoverDesign,
    d_star: &CrossoverDesign,
    cov: &WithinSubjectCovariance,
    g: usize,
) -> Result<(f64, f64, f64)> {
    check_same_shape(d, d_star)?;
    let trace_d = trace_criterion(d, cov, g)?;
    let trace_ref = trace_criterion(d_star, cov, g)?;
    let scale = g as f64 * c_blocks(d_star, cov)?.c11.trace();
    if !(trace_ref > 1e-12 * scale) || trace_ref <= 0.0 {
        return Err(Error::DegenerateReference { trace: trace_ref });
    }
    Ok((trace_d, trace_ref, trace_d / trace_ref))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CurveFamily {
    Ar1,
    Tridiagonal,
}

impl CurveFamily {
    pub fn spec(self, r: f64) -> CovarianceSpec {
        match self {
            CurveFamily::Ar1 => CovarianceSpec::Ar1(r),
            CurveFamily::Tridiagonal => CovarianceSpec::Tridiagonal(r),
        }
    }

    pub fn default_grid(self) -> RGrid {
        match self {
            CurveFamily::Ar1 => RGrid {
                min: -0.99,
                max: 0.99,
                step: 0.01,
            },
            CurveFamily::Tridiagonal => RGrid {
                min: -0.70,
                max: 0.70,
                step: 0.01,
            },
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CurveFamily::Ar1 => "ar1",
            CurveFamily::Tridiagonal => "tridiag",
        }
    }
}

/// Evenly spaced correlation values `min, min + step, …` up to `max`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

const MAX_GRID_POINTS: usize = 1_000_000;

impl RGrid {
    /// Grid values, each rounded to 12 decimals so that accumulated
    /// floating error never leaks into the output (`0` stays `0`).
    pub fn points(&self) -> Result<Vec<f64>> {
        let RGrid { min, max, step } = *self;
        if !(min.is_finite() && max.is_finite() && step.is_finite()) {
            return Err(Error::BadGrid(format!("non-finite grid {min}..{max} step {step}")));
        }
        if !(step > 0.0) {
            return Err(Error::BadGrid(format!("step must be positive, got {step}")));
        }
        if min > max {
            return Err(Error::BadGrid(format!("r-min {min} exceeds r-max {max}")));
        }
        let span = (max - min) / step;
        if span >= MAX_GRID_POINTS as f64 {
            return Err(Error::BadGrid(format!("grid has more than {MAX_GRID_POINTS} points")));
        }
        let count = libm::floor(span + 1e-9) as usize + 1;
        Ok((0..count)
            .map(|k| {
                let r = libm::round((min + k as f64 * step) * 1e12) / 1e12;
                if r == 0.0 {
                    0.0
                } else {
                    r
                }
            })
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvePoint {
    pub r: f64,
    pub trace_d: f64,
    pub trace_dstar: f64,
    pub efficiency: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EfficiencyCurve {
    pub family: CurveFamily,
    pub g: usize,
    pub points: Vec<CurvePoint>,
    pub e_max: f64,
    /// Smallest `r` attaining `e_max`.
    pub argmax_r: f64,
}

pub fn efficiency_curve(
    d: &CrossoverDesign,
    d_star: &CrossoverDesign,
    family: CurveFamily,
    grid: RGrid,
    g: usize,
) -> Result<EfficiencyCurve> {
    check_same_shape(d, d_star)?;
    let rs = grid.points()?;
    let mut points = Vec::with_capacity(rs.len());
    for r in rs {
        let cov = build_covariance(&family.spec(r), d.p()).map_err(|e| match e {
            Error::BadParameter(_) | Error::NotPositiveDefinite { .. } => Error::BadGrid(format!(
                "r = {r} is outside the valid range for {} ({e})",
                family.name()
            )),
            other => other,
        })?;
        let (trace_d, trace_dstar, efficiency) = efficiency_parts(d, d_star, &cov, g)?;
        points.push(CurvePoint {
            r,
            trace_d,
            trace_dstar,
            efficiency,
        });
    }
    let best = points
        .iter()
        .fold(None::<&CurvePoint>, |acc, p| match acc {
            Some(b) if b.efficiency >= p.efficiency => Some(b),
            _ => Some(p),
        })
        .expect("grid is never empty");
    Ok(EfficiencyCurve {
        family,
        g,
        e_max: best.efficiency,
        argmax_r: best.r,
        points,
    })
}

/// `Σ_υ Q_υ M Q_υᵀ` over all `t!` permutation matrices.
pub fn permutation_average(m: &Matrix) -> Matrix {
    let t = m.rows();
    let mut sum = Matrix::zeros(t, t);
    for perm in permutations(t) {
        let idx: Vec<usize> = perm.iter().map(|&x| x as usize - 1).collect();
        sum = &sum + &m.conjugate_by_permutation(&idx);
    }
    sum
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecompositionReport {
    pub t: usize,
    pub permutations: usize,
    pub trace_d: f64,
    pub trace_dstar: f64,
    /// `tr(C_d*) / (t! · tr(C_d))`, the common coefficient of every `Q_υ` term.
    pub coefficient: f64,
    /// `max |C_d* − c Σ_υ Q_υ C_d Q_υᵀ|`.
    pub residual: f64,
    /// `max |Σ_υ Q_υ C_d Q_υᵀ − t! tr(C_d)/(t−1) H_t|`.
    pub averaging_residual: f64,
    /// Same as `residual` for `g = 2`, with `P = I_2 ⊗ Q_υ`.
    pub lift_residual: f64,
}

/// Verifies `C_d* = c Σ_υ Q_υ C_d Q_υᵀ` by explicit summation over all
/// permutation matrices, and its `g = 2` lift over `P = I_2 ⊗ Q_υ`.
pub fn verify_decomposition(
    d: &CrossoverDesign,
    d_star: &CrossoverDesign,
    cov: &WithinSubjectCovariance,
) -> Result<DecompositionReport> {
    check_same_shape(d, d_star)?;
    if !d.is_binary() {
        return Err(Error::BadParameter("design must be binary".into()));
    }
    if !verify_oa(d_star).passed {
        return Err(Error::NotAnOa);
    }
    let t = d.t();
    let c = information_matrix(d, cov, 1)?.block;
    let c_star = information_matrix(d_star, cov, 1)?.block;
    let trace_d = c.trace();
    let trace_dstar = c_star.trace();
    if !(trace_d > 1e-12 * trace_dstar.abs().max(f64::MIN_POSITIVE)) {
        return Err(Error::ZeroTrace);
    }
    let perms = permutations(t);
    let count = perms.len();
    let coefficient = trace_dstar / (count as f64 * trace_d);

    let mut sum = Matrix::zeros(t, t);
    let lifted = Matrix::identity(2).kron(&c);
    let mut lifted_sum = Matrix::zeros(2 * t, 2 * t);
    for perm in &perms {
        let idx: Vec<usize> = perm.iter().map(|&x| x as usize - 1).collect();
        sum = &sum + &c.conjugate_by_permutation(&idx);
        let idx2: Vec<usize> = (0..2 * t).map(|k| (k / t) * t + idx[k % t]).collect();
        lifted_sum = &lifted_sum + &lifted.conjugate_by_permutation(&idx2);
    }
    let residual = c_star.max_abs_diff(&sum.scale(coefficient));
    let identity_form = Matrix::centering(t).scale(count as f64 * trace_d / (t as f64 - 1.0));
    let averaging_residual = sum.max_abs_diff(&identity_form);
    let lift_residual =
        Matrix::identity(2).kron(&c_star).max_abs_diff(&lifted_sum.scale(coefficient));
    Ok(DecompositionReport {
        t,
        permutations: count,
        trace_d,
        trace_dstar,
        coefficient,
        residual,
        averaging_residual,
        lift_residual,
    })
}
