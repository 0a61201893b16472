//! Synthetic streams, scoring, oracles, diagnostics and benchmarks.

pub mod bench;
pub mod eval;
pub mod oracle;
pub mod simmatrix;
pub mod synth;

pub use bench::{bench, BenchReport, TimedResponder};
pub use eval::{
    compression_ratio, eval_boundaries, BoundaryFile, BoundaryScore, EvalReport, LatencyStats,
};
pub use oracle::offline_oracle;
pub use simmatrix::{similarity_matrix, SimilarityReport};
pub use synth::{
    generate, standard_suite, MotionProfile, SegmentSpec, SuiteParams, SynthIter, SynthOutput,
    SynthSpec,
};
