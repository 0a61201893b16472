//! Causal event segmentation for streams of per-frame embeddings.
//!
//! Frames flow through a boundary detector, closed segments are pooled into
//! event tokens, tokens are consolidated into an event memory, and a pacing
//! policy decides when a responder is invoked.

pub mod config;
pub mod detector;
pub mod error;
pub mod event_builder;
pub mod extractor;
pub mod feature_stream;
pub mod harness;
pub mod memory;
pub mod pacing;
pub mod pipeline;
pub mod predictor;
pub mod vector;

pub use detector::{
    adaptive_threshold, BoundaryDecision, DetectorConfig, DetectorState, ThresholdMode,
};
pub use error::{Error, Result};
pub use event_builder::{build_event, BuilderConfig, EventToken, PoolingMode, TimedEmbedding};
pub use extractor::{validate_stream, ExtractSpec, FeatureExtractor, MotionMethod, StreamSummary};
pub use feature_stream::{
    open_stream, read_stream, write_stream, FrameFeature, SlidingWindowNormalizer, StreamFormat,
};
pub use memory::{MemoryBank, MemoryConfig, UpdateOutcome};
pub use pacing::{
    EmissionKind, EmissionLogLine, EmissionRecord, Pacer, PacingConfig, Responder, StubResponder,
};
pub use pipeline::{Engine, EngineConfig, StepOutput};
pub use predictor::{Activation, PredictorModel, TrainConfig};
