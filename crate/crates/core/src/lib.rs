//! Multivariate crossover designs: design matrices, within-subject covariance,
//! the direct-effect information matrix, and universal-optimality checks for
//! Type-I strength-2 orthogonal arrays.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the command-line
//! front end and parallel fan-out live in the `xover` companion crate.
//!
//! Vectors of length `n * p` are always ordered period-fastest within subject:
//! `(y_11, .., y_p1, y_12, .., y_p2, .., y_pn)`.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod covariance;
pub mod design;
pub mod error;
pub mod information;
pub mod linalg;
pub mod matrix;
pub mod optimality;

pub use covariance::{build_covariance, AStar, CovarianceSpec, WithinSubjectCovariance};
pub use design::{
    design_matrices, validate_design, BinaryDesigns, CrossoverDesign, DesignMatrices, ModelLayout,
    ValidatedDesign, DEFAULT_ENUMERATION_CAP,
};
pub use error::{Error, Result};
pub use information::{
    c_blocks, classify, classify_lifted_with_scale, closed_form_oa_information, generalized_inverse, information_matrix,
    information_matrix_projection_oracle, CBlocks, ClassifyTolerance, ClosedFormOa,
    InformationMatrix, MatrixClassReport,
};
pub use matrix::Matrix;
pub use optimality::{
    construct_oa_all_permutations, construct_oa_modular, efficiency, efficiency_curve,
    search_max_trace, trace_criterion, verify_decomposition, verify_oa, CurveFamily, CurvePoint,
    DecompositionReport, EfficiencyCurve, OaCertificate, RGrid, SearchResult, TraceSearch,
};
