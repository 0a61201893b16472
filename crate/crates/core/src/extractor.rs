//! Contract for the offline video-to-stream adapter. Extraction itself runs
//! outside this crate; what lives here is the job description, the trait an
//! adapter implements, and the format checker its output must pass.

use std::io::Read;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_stream::{FrameReader, StreamFormat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionMethod {
    /// Mean per-pixel difference energy against the previous sampled frame.
    #[default]
    FrameDiff,
    /// Mean optical-flow magnitude.
    OpticalFlow,
}

/// One extraction job. Motion is written raw; the engine normalizes it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractSpec {
    pub video: PathBuf,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub encoder: String,
    #[serde(default)]
    pub motion: MotionMethod,
    pub out: PathBuf,
    pub format: StreamFormat,
}

fn default_fps() -> f64 {
    2.0
}

impl ExtractSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "extract: fps must be positive, got {}",
                self.fps
            )));
        }
        if self.encoder.is_empty() {
            return Err(Error::InvalidConfig(
                "extract: encoder name is empty".into(),
            ));
        }
        Ok(())
    }
}

/// Implemented by adapters that turn a video into a stream file. The first
/// frame's motion is 0 and embeddings are unit-norm.
pub trait FeatureExtractor {
    /// Output embedding dimension of the loaded encoder.
    fn dim(&self) -> usize;

    fn extract(&mut self, spec: &ExtractSpec) -> Result<StreamSummary>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub dim: Option<usize>,
    pub frames: u64,
    pub t_first: Option<f64>,
    pub t_last: Option<f64>,
    pub max_motion: f64,
}

/// Reads a whole stream through the validating reader without holding it in
/// memory. Any format or record violation is returned as the first error.
pub fn validate_stream<R: Read>(mut reader: FrameReader<R>) -> Result<StreamSummary> {
    let mut summary = StreamSummary {
        dim: reader.dim(),
        frames: 0,
        t_first: None,
        t_last: None,
        max_motion: 0.0,
    };
    for frame in reader.by_ref() {
        let frame = frame?;
        summary.frames += 1;
        summary.t_first.get_or_insert(frame.t);
        summary.t_last = Some(frame.t);
        summary.max_motion = summary.max_motion.max(frame.motion);
    }
    summary.dim = summary.dim.or(reader.dim());
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feature_stream::{open_stream, write_stream, FrameFeature};

    fn spec() -> ExtractSpec {
        ExtractSpec {
            video: "clip.mp4".into(),
            fps: 2.0,
            encoder: "enc".into(),
            motion: MotionMethod::FrameDiff,
            out: "clip.evst".into(),
            format: StreamFormat::Binary,
        }
    }

    #[test]
    fn spec_defaults_and_validation() {
        let s: ExtractSpec = serde_json::from_str(
            r#"{"video":"v.mp4","encoder":"e","out":"o.evst","format":"binary"}"#,
        )
        .unwrap();
        assert_eq!(s.fps, 2.0);
        assert_eq!(s.motion, MotionMethod::FrameDiff);
        assert!(s.validate().is_ok());
        let bad = ExtractSpec { fps: 0.0, ..spec() };
        assert_eq!(bad.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn validator_summarizes_a_clean_stream() {
        let frames: Vec<_> = (0..20)
            .map(|i| FrameFeature::ingest(i, i as f64 * 0.5, vec![1.0, 0.0, 0.0], 0.0).unwrap())
            .collect();
        for format in [StreamFormat::Binary, StreamFormat::Jsonl] {
            let bytes = write_stream(Vec::new(), format, 3, &frames).unwrap();
            let s = validate_stream(open_stream(bytes.as_slice(), format).unwrap()).unwrap();
            assert_eq!(
                (s.dim, s.frames, s.t_last, s.max_motion),
                (Some(3), 20, Some(9.5), 0.0)
            );
        }
    }

    #[test]
    fn validator_rejects_bad_records() {
        let jsonl =
            "{\"t\":1,\"emb\":[1,0],\"motion\":0}\n{\"t\":0.5,\"emb\":[1,0],\"motion\":0}\n";
        let r = open_stream(jsonl.as_bytes(), StreamFormat::Jsonl).unwrap();
        assert!(validate_stream(r).is_err());
    }
}
