//! Self-check suites run by `xover verify`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use xover_core::information::{information_block, information_pinv_tolerance, information_scale};
use xover_core::linalg::{principal_submatrix_ginverse, spd_inverse};
use xover_core::optimality::OaFailure;
use xover_core::{
    build_covariance, c_blocks, classify, closed_form_oa_information, construct_oa_all_permutations,
    construct_oa_modular, generalized_inverse, information_matrix,
    information_matrix_projection_oracle, verify_decomposition, verify_oa, classify_lifted_with_scale,
    ClassifyTolerance, CovarianceSpec, CrossoverDesign, Error, Matrix, WithinSubjectCovariance,
};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    OracleEquivalence,
    InformationProperties,
    LiftedSymmetry,
    ClosedForm,
    GinverseInvariance,
    Decomposition,
    OaCertification,
}

impl Suite {
    pub const ALL: [Suite; 7] = [
        Suite::OracleEquivalence,
        Suite::InformationProperties,
        Suite::LiftedSymmetry,
        Suite::ClosedForm,
        Suite::GinverseInvariance,
        Suite::Decomposition,
        Suite::OaCertification,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::OracleEquivalence => "oracle-equivalence",
            Suite::InformationProperties => "information-properties",
            Suite::LiftedSymmetry => "lifted-symmetry",
            Suite::ClosedForm => "closed-form",
            Suite::GinverseInvariance => "ginverse-invariance",
            Suite::Decomposition => "decomposition",
            Suite::OaCertification => "oa-certification",
        }
    }

    pub fn default_tolerance(self) -> f64 {
        match self {
            Suite::OracleEquivalence | Suite::GinverseInvariance | Suite::Decomposition => 1e-9,
            Suite::InformationProperties | Suite::ClosedForm => 1e-10,
            Suite::LiftedSymmetry => 1e-8,
            Suite::OaCertification => 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyOptions {
    /// `None` runs every suite.
    pub suite: Option<Suite>,
    /// Treatment count for the random-design suites; `None` means 3.
    pub t: Option<usize>,
    /// Overrides each suite's own tolerance.
    pub tol: Option<f64>,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            suite: None,
            t: None,
            tol: None,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteResult {
    pub suite: &'static str,
    pub passed: bool,
    pub tolerance: f64,
    pub max_residual: f64,
    pub checks: usize,
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifySummary {
    pub passed: bool,
    pub t: usize,
    pub seed: u64,
    pub suites: Vec<SuiteResult>,
}

impl VerifySummary {
    pub fn failed(&self) -> usize {
        self.suites.iter().filter(|s| !s.passed).count()
    }
}

/// Accumulates residuals for one suite.
struct Tally {
    suite: Suite,
    tol: f64,
    max_residual: f64,
    checks: usize,
    failures: Vec<String>,
}

impl Tally {
    fn new(suite: Suite, tol: f64) -> Self {
        Tally {
            suite,
            tol,
            max_residual: 0.0,
            checks: 0,
            failures: Vec::new(),
        }
    }

    fn residual(&mut self, what: impl FnOnce() -> String, r: f64) {
        self.checks += 1;
        if !(r <= self.max_residual) {
            self.max_residual = r;
        }
        if !(r <= self.tol) {
            self.fail(format!("{}: residual {r:e} > {:e}", what(), self.tol));
        }
    }

    fn require(&mut self, what: impl FnOnce() -> String, ok: bool) {
        self.checks += 1;
        if !ok {
            self.fail(what());
        }
    }

    fn fail(&mut self, msg: String) {
        // Keep reports readable when a loose tolerance fails everywhere.
        if self.failures.len() < 20 {
            self.failures.push(msg);
        }
    }

    fn error(&mut self, what: &str, e: impl std::fmt::Display) {
        self.checks += 1;
        self.max_residual = f64::INFINITY;
        self.fail(format!("{what}: {e}"));
    }

    fn finish(self) -> SuiteResult {
        SuiteResult {
            suite: self.suite.name(),
            passed: self.failures.is_empty(),
            tolerance: self.tol,
            max_residual: self.max_residual,
            checks: self.checks,
            failures: self.failures,
        }
    }
}

/// Sequences ABC, CAB and BCA, six subjects each, coded A=1, B=2, C=3.
pub fn d0() -> CrossoverDesign {
    let mut subjects = Vec::with_capacity(18);
    for seq in [[1, 2, 3], [3, 1, 2], [2, 3, 1]] {
        for _ in 0..6 {
            subjects.push(seq.to_vec());
        }
    }
    CrossoverDesign::from_subjects(3, &subjects).expect("valid design")
}

/// Three copies of the `t = 3` all-permutations array: λ = 3, n = 18.
pub fn oa18() -> CrossoverDesign {
    construct_oa_all_permutations(3, u64::MAX)
        .and_then(|d| d.replicate(3))
        .expect("valid design")
}

/// 19 points `−0.9, −0.8, …, 0.9`.
pub fn ar1_grid() -> Vec<f64> {
    (-9..=9).map(|k| k as f64 / 10.0).collect()
}

/// 19 evenly spaced points over 95% of the positive-definite range of the
/// `p × p` tridiagonal family, `|r| < 1 / (2 cos(π / (p + 1)))`.
pub fn tridiag_grid(p: usize) -> Vec<f64> {
    let limit = 1.0 / (2.0 * (std::f64::consts::PI / (p as f64 + 1.0)).cos());
    (-9..=9).map(|k| 0.95 * limit * k as f64 / 9.0).collect()
}

/// The random-design suites work with `n` subjects and a matching OA.
fn working_shape(t: usize) -> (usize, CrossoverDesign) {
    let base = t * (t - 1);
    match construct_oa_modular(t) {
        Ok(oa) => (base, oa),
        Err(_) => {
            let oa = construct_oa_all_permutations(t, u64::MAX).expect("small t");
            (oa.n(), oa)
        }
    }
}

fn settings(p: usize) -> Vec<(String, WithinSubjectCovariance)> {
    [
        CovarianceSpec::Ar1(0.3),
        CovarianceSpec::Ar1(-0.6),
        CovarianceSpec::Tridiagonal(0.4),
    ]
    .into_iter()
    .filter_map(|s| {
        let label = format!("{s:?}");
        build_covariance(&s, p).ok().map(|c| (label, c))
    })
    .collect()
}

/// `max|a − b|` relative to the larger of both matrices and `floor`.
fn rel_diff(a: &Matrix, b: &Matrix, floor: f64) -> f64 {
    let scale = a.max_abs().max(b.max_abs()).max(floor);
    if scale > 0.0 {
        a.max_abs_diff(b) / scale
    } else {
        0.0
    }
}

/// Each subject gets an independent uniformly random treatment order.
pub fn random_binary(rng: &mut impl Rng, t: usize, n: usize) -> Result<CrossoverDesign> {
    let subjects: Vec<Vec<u16>> = (0..n)
        .map(|_| {
            let mut seq: Vec<u16> = (1..=t as u16).collect();
            seq.shuffle(rng);
            seq
        })
        .collect();
    Ok(CrossoverDesign::from_subjects(t, &subjects)?)
}

struct Ctx {
    t: usize,
    oa: CrossoverDesign,
    designs: Vec<CrossoverDesign>,
}

impl Ctx {
    fn new(t: usize, seed: u64) -> Result<Self> {
        let (n, oa) = working_shape(t);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = match t {
            3 => 100,
            4 => 30,
            _ => 10,
        };
        let designs = (0..samples)
            .map(|_| random_binary(&mut rng, t, n))
            .collect::<Result<_>>()?;
        Ok(Ctx { t, oa, designs })
    }
}

fn oracle_equivalence(ctx: &Ctx, tally: &mut Tally) {
    for (label, cov) in settings(ctx.t) {
        for (k, d) in ctx.designs.iter().enumerate() {
            let pair = information_matrix(d, &cov, 1)
                .and_then(|a| Ok((a, information_matrix_projection_oracle(d, &cov, 1)?)));
            match pair {
                Ok((a, b)) => tally.residual(
                    || format!("{label} design {k}"),
                    rel_diff(&a.block, &b.block, a.scale),
                ),
                Err(e) => tally.error(&label, e),
            }
        }
    }
}

fn information_properties(ctx: &Ctx, tally: &mut Tally) {
    let tol = ClassifyTolerance {
        structural: tally.tol,
        ..ClassifyTolerance::default()
    };
    let mut subjects: Vec<&CrossoverDesign> = ctx.designs.iter().collect();
    subjects.push(&ctx.oa);
    for (label, cov) in settings(ctx.t) {
        for (k, d) in subjects.iter().enumerate() {
            let info = match information_matrix(d, &cov, 1) {
                Ok(i) => i,
                Err(e) => {
                    tally.error(&label, e);
                    continue;
                }
            };
            let rep = classify_lifted_with_scale(&info.block, 1, info.scale, tol);
            let r = rep
                .symmetry_residual
                .max(rep.row_sum_residual)
                .max(rep.col_sum_residual)
                .max(-rep.min_eigenvalue_ratio);
            tally.residual(|| format!("{label} design {k}"), r);
        }
    }
}

fn lifted_symmetry(ctx: &Ctx, tally: &mut Tally) {
    let tol = ClassifyTolerance {
        complete_symmetry: tally.tol,
        ..ClassifyTolerance::default()
    };
    let t = ctx.t;
    let mut specs = vec![("Identity".to_string(), build_covariance(&CovarianceSpec::Identity, t))];
    specs.extend(settings(t).into_iter().map(|(l, c)| (l, Ok(c))));
    for (label, cov) in specs {
        let cov = match cov {
            Ok(c) => c,
            Err(e) => {
                tally.error(&label, e);
                continue;
            }
        };
        let block = match information_block(&ctx.oa, &cov) {
            Ok(b) => b,
            Err(e) => {
                tally.error(&label, e);
                continue;
            }
        };
        let one = classify(&block, tol);
        tally.residual(
            || format!("{label} g=1 full matrix"),
            one.diagonal_spread.max(one.off_diagonal_spread),
        );
        let full = Matrix::identity(2).kron(&block);
        let two = classify(&full, tol);
        tally.require(
            || format!("{label} g=2 full matrix classified completely symmetric"),
            !two.is_completely_symmetric,
        );
        for k in 0..2 {
            let diag = classify(&full.block(k * t, k * t, t, t), tol);
            tally.residual(
                || format!("{label} g=2 diagonal block {k}"),
                diag.diagonal_spread.max(diag.off_diagonal_spread),
            );
        }
    }
}

fn closed_form(ctx: &Ctx, tally: &mut Tally) {
    let t = ctx.t;
    let mut arrays = Vec::new();
    if let Ok(d) = construct_oa_all_permutations(t, 1 << 20) {
        arrays.push(("all-perms", d));
    }
    if let Ok(d) = construct_oa_modular(t) {
        arrays.push(("modular", d));
    }
    for (name, oa) in &arrays {
        let specs = ar1_grid()
            .into_iter()
            .map(CovarianceSpec::Ar1)
            .chain(tridiag_grid(t).into_iter().map(CovarianceSpec::Tridiagonal));
        for spec in specs {
            let label = || format!("{name} {spec:?}");
            match build_covariance(&spec, t).and_then(|cov| {
                let closed = closed_form_oa_information(oa, &cov)?;
                Ok((closed.matrix, information_block(oa, &cov)?))
            }) {
                Ok((closed, block)) => tally.residual(label, block.max_abs_diff(&closed)),
                Err(e) => tally.error(&label(), e),
            }
        }
    }
    // Two different OAs with the same λ give the same information.
    if t == 3 {
        let perms = construct_oa_all_permutations(3, 1 << 20).expect("t = 3");
        let modular = construct_oa_modular(3).expect("t = 3");
        let other = CrossoverDesign::concat_subjects(&[&modular, &perms, &modular]).expect("same shape");
        for (label, cov) in settings(3) {
            match information_block(&oa18(), &cov).and_then(|a| Ok((a, information_block(&other, &cov)?))) {
                Ok((a, b)) => tally.residual(|| format!("λ=3 arrays {label}"), a.max_abs_diff(&b)),
                Err(e) => tally.error(&label, e),
            }
        }
    }
}

/// A g-inverse of `m` other than Moore–Penrose. `1` spans the null space of
/// every `C22`, so `(C22 + J)⁻¹` works whenever that null space is exactly
/// one-dimensional; otherwise a principal-submatrix inverse is used.
pub fn alternative_ginverse(m: &Matrix) -> Matrix {
    let completed = m + &Matrix::filled(m.rows(), m.cols(), 1.0);
    let candidate = spd_inverse(&completed).ok().filter(|g| {
        let back = &(m * g) * m;
        back.max_abs_diff(m) <= 1e-9 * m.max_abs().max(1.0)
    });
    candidate.unwrap_or_else(|| principal_submatrix_ginverse(m, 1e-10))
}

fn ginverse_invariance(ctx: &Ctx, tally: &mut Tally) {
    let Some((label, cov)) = settings(ctx.t).into_iter().nth(2) else {
        return;
    };
    for (k, d) in ctx.designs.iter().take(50).enumerate() {
        let blocks = match c_blocks(d, &cov) {
            Ok(b) => b,
            Err(e) => {
                tally.error(&label, e);
                continue;
            }
        };
        let mp = generalized_inverse(&blocks.c22, Some(information_pinv_tolerance(d)));
        let alt = alternative_ginverse(&blocks.c22);
        let scale = blocks.c22.max_abs().max(1.0);
        let valid = (&(&blocks.c22 * &alt) * &blocks.c22).max_abs_diff(&blocks.c22) <= 1e-9 * scale;
        tally.require(|| format!("design {k}: alternative is not a g-inverse"), valid);
        tally.residual(
            || format!("design {k}"),
            rel_diff(&blocks.schur_with(&mp), &blocks.schur_with(&alt), information_scale(d, &cov)),
        );
    }
}

fn decomposition(ctx: &Ctx, tally: &mut Tally) {
    let mut cases: Vec<(String, CrossoverDesign, CrossoverDesign)> = Vec::new();
    if ctx.t == 3 {
        cases.push(("d0".into(), d0(), oa18()));
    }
    for (k, d) in ctx.designs.iter().take(20).enumerate() {
        cases.push((format!("design {k}"), d.clone(), ctx.oa.clone()));
    }
    let covs: Vec<_> = settings(ctx.t).into_iter().step_by(2).collect();
    for (label, cov) in &covs {
        for (name, d, d_star) in &cases {
            match verify_decomposition(d, d_star, cov) {
                Ok(rep) => tally.residual(
                    || format!("{name} {label}"),
                    rep.residual.max(rep.lift_residual).max(rep.averaging_residual),
                ),
                // The decomposition presumes C_d ≠ 0.
                Err(Error::ZeroTrace) => {}
                Err(e) => tally.error(name, e),
            }
        }
    }
}

fn oa_certification(t: Option<usize>, tally: &mut Tally) {
    let ts: Vec<usize> = match t {
        Some(t) => vec![t],
        None => vec![3, 4, 5],
    };
    for &t in &ts {
        let lambda: usize = (1..=t.saturating_sub(2)).product();
        match construct_oa_all_permutations(t, 1 << 20) {
            Ok(d) => {
                let cert = verify_oa(&d);
                let r = match (cert.passed, cert.lambda) {
                    (true, Some(l)) => (l as f64 - lambda as f64).abs(),
                    _ => f64::INFINITY,
                };
                tally.residual(|| format!("all-perms t={t}"), r);
            }
            Err(e) => tally.error(&format!("all-perms t={t}"), e),
        }
        match construct_oa_modular(t) {
            Ok(d) => {
                let cert = verify_oa(&d);
                let r = match (cert.passed, cert.lambda) {
                    (true, Some(l)) => (l as f64 - 1.0).abs(),
                    _ => f64::INFINITY,
                };
                tally.residual(|| format!("modular t={t}"), r);
            }
            Err(Error::NotPrime(_)) => {}
            Err(e) => tally.error(&format!("modular t={t}"), e),
        }
    }
    if ts.contains(&3) {
        let cert = verify_oa(&d0());
        let witness = matches!(cert.failure, Some(OaFailure::PairCount { .. }));
        tally.require(|| "d0 accepted as an orthogonal array".into(), !cert.passed && witness);
    }
}

pub fn run(opts: &VerifyOptions) -> Result<VerifySummary> {
    let t = opts.t.unwrap_or(3);
    if !(3..=5).contains(&t) {
        return Err(CliError::Usage(format!("verify supports 3 <= t <= 5, got {t}")));
    }
    if let Some(tol) = opts.tol {
        if !(tol >= 0.0) || !tol.is_finite() {
            return Err(CliError::Usage(format!("--tol must be a finite non-negative number, got {tol}")));
        }
    }
    let suites: Vec<Suite> = match opts.suite {
        Some(s) => vec![s],
        None => Suite::ALL.to_vec(),
    };
    let ctx = Ctx::new(t, opts.seed)?;
    let mut results = Vec::new();
    for suite in suites {
        let mut tally = Tally::new(suite, opts.tol.unwrap_or(suite.default_tolerance()));
        match suite {
            Suite::OracleEquivalence => oracle_equivalence(&ctx, &mut tally),
            Suite::InformationProperties => information_properties(&ctx, &mut tally),
            Suite::LiftedSymmetry => lifted_symmetry(&ctx, &mut tally),
            Suite::ClosedForm => closed_form(&ctx, &mut tally),
            Suite::GinverseInvariance => ginverse_invariance(&ctx, &mut tally),
            Suite::Decomposition => decomposition(&ctx, &mut tally),
            Suite::OaCertification => oa_certification(opts.t, &mut tally),
        }
        results.push(tally.finish());
    }
    Ok(VerifySummary {
        passed: results.iter().all(|r| r.passed),
        t,
        seed: opts.seed,
        suites: results,
    })
}
