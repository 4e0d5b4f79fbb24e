//! Exhaustive trace search fanned out over a rayon pool.

use rayon::prelude::*;
use xover_core::{SearchResult, TraceSearch, WithinSubjectCovariance};

use crate::error::{CliError, Result};

/// Ranks per work item.
const CHUNK: u64 = 1 << 12;

fn chunks(count: u64) -> Vec<std::ops::Range<u64>> {
    (0..count.div_ceil(CHUNK))
        .map(|k| k * CHUNK..((k + 1) * CHUNK).min(count))
        .collect()
}

/// Same result as [`xover_core::search_max_trace`] for any worker count.
/// `workers = None` uses rayon's default pool size.
pub fn parallel_search(
    t: usize,
    n: usize,
    cov: &WithinSubjectCovariance,
    g: usize,
    cap: u64,
    workers: Option<usize>,
) -> Result<SearchResult> {
    let search = TraceSearch::new(t, n, cov, g, cap)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let ranges = chunks(search.count());
    pool.install(|| {
        let best = ranges
            .par_iter()
            .map(|r| search.max_over(r.clone()))
            .try_reduce(|| f64::NEG_INFINITY, |a, b| Ok(a.max(b)))?;
        let ties = ranges
            .par_iter()
            .map(|r| search.ties_over(r.clone(), best))
            .try_reduce(Vec::new, |a, b| Ok(TraceSearch::merge_ties(a, b)))?;
        Ok(search.finish(best, ties)?)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use xover_core::{build_covariance, search_max_trace, CovarianceSpec, DEFAULT_ENUMERATION_CAP};

    #[test]
    fn matches_sequential_for_any_worker_count() {
        let cov = build_covariance(&CovarianceSpec::Ar1(-0.3), 3).unwrap();
        let serial = search_max_trace(3, 5, &cov, 2, DEFAULT_ENUMERATION_CAP).unwrap();
        for w in [1, 2, 3, 8] {
            let par = parallel_search(3, 5, &cov, 2, DEFAULT_ENUMERATION_CAP, Some(w)).unwrap();
            assert_eq!(par, serial);
        }
        assert!(parallel_search(3, 2, &cov, 1, 10, Some(0)).is_err());
    }

    #[test]
    fn chunking_covers_range() {
        let c = chunks(46656);
        assert_eq!(c.first().unwrap().start, 0);
        assert_eq!(c.last().unwrap().end, 46656);
        assert!(c.windows(2).all(|w| w[0].end == w[1].start));
        assert!(chunks(0).is_empty());
    }
}
