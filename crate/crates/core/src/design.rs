//! Crossover designs, their model design matrices, and enumeration of the
//! binary class with `p = t`.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default upper bound on the number of designs an enumeration may visit.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// A `p × n` assignment of treatments `1..=t` to (period, subject) cells.
///
/// Cells are stored subject-major, period-fastest, the same order as the
/// stacked response vector.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CrossoverDesign {
    t: usize,
    n: usize,
    p: usize,
    cells: Vec<u16>,
}

impl CrossoverDesign {
    /// Builds a design from its subject sequences (one `Vec` per subject,
    /// one label per period, labels in `1..=t`).
    pub fn from_subjects(t: usize, subjects: &[Vec<u16>]) -> Result<Self> {
        if subjects.is_empty() || subjects[0].is_empty() {
            return Err(Error::EmptyGrid);
        }
        let p = subjects[0].len();
        let mut cells = Vec::with_capacity(p * subjects.len());
        for (j, s) in subjects.iter().enumerate() {
            if s.len() != p {
                return Err(Error::RaggedRows {
                    row: j,
                    expected: p,
                    found: s.len(),
                });
            }
            cells.extend_from_slice(s);
        }
        Self::from_cells(t, subjects.len(), p, cells)
    }

    /// Builds a design from period rows (`p` rows of `n` labels).
    pub fn from_periods(t: usize, periods: &[Vec<u16>]) -> Result<Self> {
        if periods.is_empty() || periods[0].is_empty() {
            return Err(Error::EmptyGrid);
        }
        let n = periods[0].len();
        for (i, row) in periods.iter().enumerate() {
            if row.len() != n {
                return Err(Error::RaggedRows {
                    row: i,
                    expected: n,
                    found: row.len(),
                });
            }
        }
        let p = periods.len();
        let cells = (0..n)
            .flat_map(|j| periods.iter().map(move |row| row[j]))
            .collect();
        Self::from_cells(t, n, p, cells)
    }

    fn from_cells(t: usize, n: usize, p: usize, cells: Vec<u16>) -> Result<Self> {
        if t < 2 {
            return Err(Error::BadDimension("t must be at least 2"));
        }
        if p < 2 {
            return Err(Error::BadDimension("p must be at least 2"));
        }
        if t > u16::MAX as usize {
            return Err(Error::BadDimension("t too large"));
        }
        for (k, &c) in cells.iter().enumerate() {
            if c == 0 || c as usize > t {
                return Err(Error::UnknownLabel {
                    label: c.to_string(),
                    period: k % p + 1,
                    subject: k / p + 1,
                });
            }
        }
        Ok(CrossoverDesign { t, n, p, cells })
    }

    #[inline]
    pub fn t(&self) -> usize {
        self.t
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn p(&self) -> usize {
        self.p
    }

    /// Treatment (1-based) in `period` for `subject`, both 0-based.
    #[inline]
    pub fn treatment(&self, period: usize, subject: usize) -> u16 {
        self.cells[subject * self.p + period]
    }

    /// Sequence of treatments received by `subject` (0-based).
    #[inline]
    pub fn subject(&self, subject: usize) -> &[u16] {
        &self.cells[subject * self.p..(subject + 1) * self.p]
    }

    pub fn subjects(&self) -> impl Iterator<Item = &[u16]> {
        self.cells.chunks_exact(self.p)
    }

    /// `p` rows of `n` labels.
    pub fn periods(&self) -> Vec<Vec<u16>> {
        (0..self.p)
            .map(|i| (0..self.n).map(|j| self.treatment(i, j)).collect())
            .collect()
    }

    /// No treatment repeats within any subject. With `p = t` every column is
    /// then a permutation of `1..=t`.
    pub fn is_binary(&self) -> bool {
        self.subjects().all(|s| {
            let mut seen = alloc::vec![false; self.t + 1];
            s.iter().all(|&x| !core::mem::replace(&mut seen[x as usize], true))
        })
    }

    /// Per-treatment replication counts (index 0 is treatment 1).
    pub fn replications(&self) -> Vec<usize> {
        let mut r = alloc::vec![0; self.t];
        for &c in &self.cells {
            r[c as usize - 1] += 1;
        }
        r
    }

    /// Column-wise concatenation of designs sharing `t` and `p`.
    pub fn concat_subjects(parts: &[&CrossoverDesign]) -> Result<Self> {
        let first = parts.first().ok_or(Error::EmptyGrid)?;
        let mut cells = Vec::new();
        for d in parts {
            if d.t != first.t {
                return Err(Error::DimensionMismatch {
                    expected: first.t,
                    found: d.t,
                    what: "treatment count",
                });
            }
            if d.p != first.p {
                return Err(Error::DimensionMismatch {
                    expected: first.p,
                    found: d.p,
                    what: "period count",
                });
            }
            cells.extend_from_slice(&d.cells);
        }
        let n = cells.len() / first.p;
        Ok(CrossoverDesign {
            t: first.t,
            n,
            p: first.p,
            cells,
        })
    }

    /// `k` side-by-side copies of this design.
    pub fn replicate(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::BadDimension("replication count must be positive"));
        }
        let parts: Vec<&CrossoverDesign> = core::iter::repeat_n(self, k).collect();
        Self::concat_subjects(&parts)
    }
}

/// Result of [`validate_design`]: the normalized design plus the external
/// label for each internal treatment (index 0 is treatment 1).
#[derive(Clone, Debug, PartialEq)]
pub struct ValidatedDesign {
    pub design: CrossoverDesign,
    pub labels: Vec<String>,
    pub binary: bool,
}

/// Validates a `p × n` grid of external labels and maps them onto `1..=t`.
///
/// With an explicit `alphabet`, label `alphabet[k]` becomes treatment `k + 1`.
/// Without one, a grid made only of integers in `1..=t` is read numerically;
/// otherwise labels are numbered by first appearance, scanning subject by
/// subject.
pub fn validate_design<S: AsRef<str>>(
    grid: &[Vec<S>],
    t: usize,
    alphabet: Option<&[S]>,
) -> Result<ValidatedDesign> {
    if grid.is_empty() || grid.iter().all(|r| r.is_empty()) {
        return Err(Error::EmptyGrid);
    }
    let n = grid[0].len();
    for (i, row) in grid.iter().enumerate() {
        if row.len() != n {
            return Err(Error::RaggedRows {
                row: i,
                expected: n,
                found: row.len(),
            });
        }
    }
    if t < 2 {
        return Err(Error::BadDimension("t must be at least 2"));
    }

    let mut map: BTreeMap<String, u16> = BTreeMap::new();
    let mut labels: Vec<String> = Vec::new();
    let fixed = match alphabet {
        Some(alpha) => {
            if alpha.len() > t {
                return Err(Error::BadParameter(alloc::format!(
                    "alphabet has {} labels but t = {t}",
                    alpha.len()
                )));
            }
            for (k, a) in alpha.iter().enumerate() {
                let a = a.as_ref().trim().to_string();
                if map.insert(a.clone(), k as u16 + 1).is_some() {
                    return Err(Error::BadParameter(alloc::format!(
                        "duplicate label {a:?} in alphabet"
                    )));
                }
                labels.push(a);
            }
            true
        }
        None => {
            let numeric = grid.iter().flatten().all(|s| {
                s.as_ref()
                    .trim()
                    .parse::<usize>()
                    .is_ok_and(|v| (1..=t).contains(&v))
            });
            if numeric {
                for k in 1..=t {
                    map.insert(k.to_string(), k as u16);
                    labels.push(k.to_string());
                }
            }
            numeric
        }
    };

    // Subject-major scan, so first appearance follows the first sequence.
    let mut periods: Vec<Vec<u16>> = alloc::vec![alloc::vec![0; n]; grid.len()];
    for j in 0..n {
        for (i, row) in grid.iter().enumerate() {
            let key = row[j].as_ref().trim();
            let code = match map.get(key) {
                Some(&c) => c,
                None if !fixed && labels.len() < t => {
                    labels.push(key.to_string());
                    let c = labels.len() as u16;
                    map.insert(key.to_string(), c);
                    c
                }
                None => {
                    return Err(Error::UnknownLabel {
                        label: key.to_string(),
                        period: i + 1,
                        subject: j + 1,
                    })
                }
            };
            periods[i][j] = code;
        }
    }
    // Treatments never used still get a label for round-tripping.
    while labels.len() < t {
        let mut k = labels.len() + 1;
        while map.contains_key(&k.to_string()) {
            k += 1;
        }
        map.insert(k.to_string(), labels.len() as u16 + 1);
        labels.push(k.to_string());
    }
    let design = CrossoverDesign::from_periods(t, &periods)?;
    let binary = design.is_binary();
    Ok(ValidatedDesign {
        design,
        labels,
        binary,
    })
}

/// Incidence matrices of one design.
#[derive(Clone, Debug, PartialEq)]
pub struct DesignMatrices {
    /// `np × t` direct-treatment incidence.
    pub treatment: Matrix,
    /// `np × t` first-order carryover incidence.
    pub carryover: Matrix,
    /// `p × p` shift.
    pub psi: Matrix,
}

pub fn design_matrices(d: &CrossoverDesign) -> DesignMatrices {
    let (t, n, p) = (d.t, d.n, d.p);
    let mut treatment = Matrix::zeros(n * p, t);
    for j in 0..n {
        for i in 0..p {
            treatment[(j * p + i, d.treatment(i, j) as usize - 1)] = 1.0;
        }
    }
    let psi = Matrix::shift(p);
    let carryover = &Matrix::identity(n).kron(&psi) * &treatment;
    DesignMatrices {
        treatment,
        carryover,
        psi,
    }
}

/// Column blocks of `X = [1 | P | U | T | F]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelLayout {
    pub periods: usize,
    pub subjects: usize,
    pub treatments: usize,
}

impl ModelLayout {
    pub fn for_design(d: &CrossoverDesign) -> Self {
        ModelLayout {
            periods: d.p,
            subjects: d.n,
            treatments: d.t,
        }
    }

    pub fn intercept(&self) -> Range<usize> {
        0..1
    }

    pub fn period_effects(&self) -> Range<usize> {
        1..1 + self.periods
    }

    pub fn subject_effects(&self) -> Range<usize> {
        let s = 1 + self.periods;
        s..s + self.subjects
    }

    pub fn direct_effects(&self) -> Range<usize> {
        let s = 1 + self.periods + self.subjects;
        s..s + self.treatments
    }

    pub fn carryover_effects(&self) -> Range<usize> {
        let s = 1 + self.periods + self.subjects + self.treatments;
        s..s + self.treatments
    }

    pub fn total_columns(&self) -> usize {
        1 + self.periods + self.subjects + 2 * self.treatments
    }

    /// `P = 1_n ⊗ I_p`.
    pub fn period_matrix(&self) -> Matrix {
        Matrix::filled(self.subjects, 1, 1.0).kron(&Matrix::identity(self.periods))
    }

    /// `U = I_n ⊗ 1_p`.
    pub fn subject_matrix(&self) -> Matrix {
        Matrix::identity(self.subjects).kron(&Matrix::filled(self.periods, 1, 1.0))
    }

    /// The full `np × (1+p+n+2t)` model matrix for `d`.
    pub fn model_matrix(&self, d: &CrossoverDesign) -> Matrix {
        let dm = design_matrices(d);
        let ones = Matrix::filled(self.subjects * self.periods, 1, 1.0);
        Matrix::hstack(&[
            &ones,
            &self.period_matrix(),
            &self.subject_matrix(),
            &dm.treatment,
            &dm.carryover,
        ])
    }
}

/// All permutations of `1..=t` in lexicographic order.
pub fn permutations(t: usize) -> Vec<Vec<u16>> {
    let mut cur: Vec<u16> = (1..=t as u16).collect();
    let mut out = alloc::vec![cur.clone()];
    // Narayana's next-permutation.
    while let Some(i) = (0..t.saturating_sub(1)).rev().find(|&i| cur[i] < cur[i + 1]) {
        let j = (i + 1..t).rev().find(|&j| cur[j] > cur[i]).unwrap();
        cur.swap(i, j);
        cur[i + 1..].reverse();
        out.push(cur.clone());
    }
    out
}

pub fn factorial(t: usize) -> Option<u128> {
    (1..=t as u128).try_fold(1u128, |acc, k| acc.checked_mul(k))
}

/// Enumerates every design with `p = t` whose columns are permutations of
/// `1..=t`. Design rank `r` has column `j` equal to permutation number
/// `(r / (t!)^(n-1-j)) mod t!`, so the first column is most significant.
#[derive(Clone, Debug)]
pub struct BinaryDesigns {
    t: usize,
    n: usize,
    perms: Vec<Vec<u16>>,
    count: u64,
}

impl BinaryDesigns {
    pub fn new(t: usize, n: usize, cap: u64) -> Result<Self> {
        if t < 2 {
            return Err(Error::BadDimension("t must be at least 2"));
        }
        if n < 1 {
            return Err(Error::BadDimension("n must be at least 1"));
        }
        let required = factorial(t).and_then(|f| {
            u32::try_from(n)
                .ok()
                .and_then(|n| f.checked_pow(n))
        });
        match required {
            Some(r) if r <= cap as u128 => {}
            _ => return Err(Error::CapExceeded { required, cap }),
        }
        Ok(BinaryDesigns {
            t,
            n,
            perms: permutations(t),
            count: required.unwrap() as u64,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn permutations(&self) -> &[Vec<u16>] {
        &self.perms
    }

    /// Per-column permutation indices of the design with this rank.
    pub fn column_ranks(&self, mut rank: u64) -> Vec<usize> {
        assert!(rank < self.count, "rank out of range");
        let base = self.perms.len() as u64;
        let mut idx = alloc::vec![0usize; self.n];
        for j in (0..self.n).rev() {
            idx[j] = (rank % base) as usize;
            rank /= base;
        }
        idx
    }

    pub fn design_at(&self, rank: u64) -> CrossoverDesign {
        self.build(&self.column_ranks(rank))
    }

    fn build(&self, idx: &[usize]) -> CrossoverDesign {
        let mut cells = Vec::with_capacity(self.t * self.n);
        for &k in idx {
            cells.extend_from_slice(&self.perms[k]);
        }
        CrossoverDesign {
            t: self.t,
            n: self.n,
            p: self.t,
            cells,
        }
    }

    /// Designs with ranks in `range`, in rank order. Deterministic for any
    /// partition of `0..count()`.
    pub fn range(&self, range: Range<u64>) -> RankedDesigns<'_> {
        let end = range.end.min(self.count);
        let start = range.start.min(end);
        let idx = if start < end {
            self.column_ranks(start)
        } else {
            alloc::vec![0; self.n]
        };
        RankedDesigns {
            source: self,
            next: start,
            end,
            idx,
        }
    }

    pub fn iter(&self) -> RankedDesigns<'_> {
        self.range(0..self.count)
    }
}

/// Iterator over `(rank, design)` pairs.
pub struct RankedDesigns<'a> {
    source: &'a BinaryDesigns,
    next: u64,
    end: u64,
    idx: Vec<usize>,
}

impl Iterator for RankedDesigns<'_> {
    type Item = (u64, CrossoverDesign);

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.end {
            return None;
        }
        let rank = self.next;
        let design = self.source.build(&self.idx);
        self.next += 1;
        // Odometer increment, last column fastest.
        let base = self.source.perms.len();
        for j in (0..self.idx.len()).rev() {
            self.idx[j] += 1;
            if self.idx[j] < base {
                break;
            }
            self.idx[j] = 0;
        }
        Some((rank, design))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let r = (self.end - self.next) as usize;
        (r, Some(r))
    }
}

impl ExactSizeIterator for RankedDesigns<'_> {}
