//! Covariance spec strings: `identity`, `ar1:<r>`, `tridiag:<r>`, `custom:<path>`.

use std::path::Path;

use xover_core::CovarianceSpec;

use crate::error::{CliError, Result};
use crate::io::read_matrix_csv;

pub fn parse_cov_spec(spec: &str) -> Result<CovarianceSpec> {
    let bad = |reason: &str| CliError::CovSpec {
        spec: spec.to_string(),
        reason: reason.to_string(),
    };
    let s = spec.trim();
    if s.eq_ignore_ascii_case("identity") {
        return Ok(CovarianceSpec::Identity);
    }
    let (kind, arg) = s
        .split_once(':')
        .ok_or_else(|| bad("expected identity, ar1:<r>, tridiag:<r> or custom:<path>"))?;
    let number = || -> Result<f64> {
        let r: f64 = arg.trim().parse().map_err(|_| bad("r is not a number"))?;
        if r.is_finite() {
            Ok(r)
        } else {
            Err(bad("r must be finite"))
        }
    };
    match kind.trim().to_ascii_lowercase().as_str() {
        "ar1" => Ok(CovarianceSpec::Ar1(number()?)),
        "tridiag" => Ok(CovarianceSpec::Tridiagonal(number()?)),
        "custom" if !arg.is_empty() => Ok(CovarianceSpec::Custom(read_matrix_csv(Path::new(arg))?)),
        "custom" => Err(bad("missing path")),
        _ => Err(bad("unknown covariance family")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_families() {
        assert_eq!(parse_cov_spec("identity").unwrap(), CovarianceSpec::Identity);
        assert_eq!(parse_cov_spec("ar1:0.3").unwrap(), CovarianceSpec::Ar1(0.3));
        assert_eq!(parse_cov_spec("tridiag:-0.5").unwrap(), CovarianceSpec::Tridiagonal(-0.5));
        for bad in ["", "ar1", "ar1:x", "ar1:nan", "wishart:1", "custom:"] {
            assert!(parse_cov_spec(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn custom_reads_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        std::fs::write(&path, "2,1\n1,2\n").unwrap();
        let spec = parse_cov_spec(&format!("custom:{}", path.display())).unwrap();
        let CovarianceSpec::Custom(m) = spec else { panic!() };
        assert_eq!(m[(0, 1)], 1.0);
        assert!(matches!(parse_cov_spec("custom:/nonexistent/v.csv"), Err(CliError::Io { .. })));
    }
}
