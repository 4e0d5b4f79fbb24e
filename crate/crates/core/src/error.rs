use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Everything that can go wrong in the core library.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    EmptyGrid,
    RaggedRows {
        row: usize,
        expected: usize,
        found: usize,
    },
    UnknownLabel {
        label: String,
        period: usize,
        subject: usize,
    },
    /// t, n or p outside the supported range.
    BadDimension(&'static str),
    /// `(t!)^n` designs requested where the cap allows fewer.
    /// `required` is `None` when the count overflows `u128`.
    CapExceeded {
        required: Option<u128>,
        cap: u64,
    },
    BadParameter(String),
    /// Cholesky failed at this leading minor (1-based).
    NotPositiveDefinite {
        minor: usize,
    },
    NotSymmetric {
        residual: f64,
    },
    SingularV,
    DimensionMismatch {
        expected: usize,
        found: usize,
        what: &'static str,
    },
    NotAnOa,
    ZeroE22,
    NotPrime(usize),
    DegenerateReference {
        trace: f64,
    },
    ZeroTrace,
    BadGrid(String),
}

impl Error {
    /// Process exit code class: 1 validation, 2 computational degeneracy, 3 cap exceeded.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::CapExceeded { .. } => 3,
            Error::SingularV
            | Error::ZeroE22
            | Error::DegenerateReference { .. }
            | Error::ZeroTrace => 2,
            _ => 1,
        }
    }

    /// Short stable name, used in reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyGrid => "EmptyGrid",
            Error::RaggedRows { .. } => "RaggedRows",
            Error::UnknownLabel { .. } => "UnknownLabel",
            Error::BadDimension(_) => "BadDimension",
            Error::CapExceeded { .. } => "CapExceeded",
            Error::BadParameter(_) => "BadParameter",
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::SingularV => "SingularV",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NotAnOa => "NotAnOA",
            Error::ZeroE22 => "ZeroE22",
            Error::NotPrime(_) => "NotPrime",
            Error::DegenerateReference { .. } => "DegenerateReference",
            Error::ZeroTrace => "ZeroTrace",
            Error::BadGrid(_) => "BadGrid",
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyGrid => write!(f, "design grid is empty"),
            Error::RaggedRows {
                row,
                expected,
                found,
            } => write!(
                f,
                "row {row} has {found} entries, expected {expected} (ragged rows)"
            ),
            Error::UnknownLabel {
                label,
                period,
                subject,
            } => write!(
                f,
                "unknown treatment label {label:?} at period {period}, subject {subject}"
            ),
            Error::BadDimension(msg) => write!(f, "bad dimension: {msg}"),
            Error::CapExceeded { required, cap } => match required {
                Some(r) => write!(f, "enumeration needs {r} designs, cap is {cap}"),
                None => write!(f, "enumeration count overflows u128, cap is {cap}"),
            },
            Error::BadParameter(msg) => write!(f, "bad parameter: {msg}"),
            Error::NotPositiveDefinite { minor } => write!(
                f,
                "matrix is not positive definite (leading minor {minor} fails)"
            ),
            Error::NotSymmetric { residual } => {
                write!(f, "matrix is not symmetric (relative residual {residual:e})")
            }
            Error::SingularV => write!(f, "covariance matrix is singular"),
            Error::DimensionMismatch {
                expected,
                found,
                what,
            } => write!(f, "dimension mismatch in {what}: expected {expected}, found {found}"),
            Error::NotAnOa => write!(f, "design is not a Type-I strength-2 orthogonal array"),
            Error::ZeroE22 => write!(f, "e22 vanishes; closed form undefined"),
            Error::NotPrime(t) => write!(f, "{t} is not prime"),
            Error::DegenerateReference { trace } => {
                write!(f, "reference design has degenerate trace {trace:e}")
            }
            Error::ZeroTrace => write!(f, "information matrix of the design is zero"),
            Error::BadGrid(msg) => write!(f, "bad grid: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
