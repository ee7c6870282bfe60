//! Nearest-neighbor contingency table (NNCT) tests of spatial segregation and
//! association.
//!
//! The pipeline for a single data set is
//!
//! ```text
//! LabeledPointSet -> NnDigraph -> Nnct -> MomentSet -> cell / overall tests
//! ```
//!
//! Dixon's cell-specific and overall tests are provided together with the
//! type I-IV variants that additionally condition on column sums. Moments are
//! exact under random labeling and conditional on the observed nearest-neighbor
//! geometry (`Q`, `R`) under CSR independence.
//!
//! ```
//! use nnct::{Family, MomentContext, MomentSet, Nnct};
//!
//! let table = Nnct::from_counts(
//!     vec![vec![142, 40, 23], vec![34, 97, 25], vec![38, 32, 28]],
//!     vec!["BG".into(), "CA".into(), "BC".into()],
//! )
//! .unwrap();
//! let ctx = MomentContext::new(table.row_sums().to_vec(), 282, 288).unwrap();
//! let moments = MomentSet::new(&ctx).unwrap();
//! let overall = nnct::overall_test(Family::Dixon, &table, &moments).unwrap();
//! assert!((overall.statistic - 75.78).abs() < 0.02);
//! assert_eq!(overall.df, 6);
//! ```

pub mod distributions;
pub mod error;
pub mod exec;
pub mod harness;
pub mod inference;
pub mod linalg;
pub mod moments;
pub mod nn;
pub mod patterns;
pub mod points;
pub mod report;
pub mod table;

pub use distributions::{chisq_sf, normal_sf};
pub use error::{NnctError, Result};
pub use exec::Execution;
pub use harness::{
    run_experiment, size_thresholds, ExperimentResult, ExperimentRow, ExperimentSpec, PValueRoute,
    TestSelector, TestTarget, Verdict,
};
pub use inference::{p_mc, p_rand, McConfig, McResult, Statistic};
pub use linalg::{numerical_rank, pseudo_inverse, GInverse};
pub use moments::{FamilyMoments, MomentContext, MomentSet};
pub use nn::{nn_distances, NnDigraph, NnDistanceSummary, SearchMethod};
pub use patterns::{generate, PatternKind, PatternSpec, RadiusRule, Rect};
pub use points::{load_points, save_points, LabeledPointSet};
pub use report::AnalysisReport;
pub use table::{
    classify_patterns, collapse_one_vs_rest, AssociationLevel, Nnct, SegregationLevel,
    SegregationProfile,
};
pub use stat_tests::{cell_tests, overall_test, Alternative, CellTestMatrix, Family, OverallTestResult};
