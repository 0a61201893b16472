//! Frame-feature records, the two on-disk stream formats, and the sliding
//! min-max normalizer shared by the motion and prediction-error cues.
//!
//! Binary layout (little-endian): `b"EVST"`, `u32` version (1), `u32` d, then
//! records of `f64 t`, `f32 x d` embedding, `f32` motion. JSONL layout: one
//! object per line with keys `t`, `emb`, `motion`.

use std::collections::VecDeque;
use std::io::{self, BufRead, BufReader, ErrorKind, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector;

pub const STREAM_MAGIC: &[u8; 4] = b"EVST";
pub const STREAM_VERSION: u32 = 1;

/// Embeddings whose norm is already within this distance of 1 are kept
/// verbatim, so that re-encoding a stream is lossless.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// One stream record: timestamp, unit embedding and raw motion magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFeature {
    pub t: f64,
    pub emb: Vec<f64>,
    pub motion: f64,
}

impl FrameFeature {
    /// Validates and normalizes a raw record. `index` is only used for error
    /// reporting.
    pub fn ingest(index: usize, t: f64, mut emb: Vec<f64>, motion: f64) -> Result<Self> {
        if !t.is_finite() {
            return Err(Error::MalformedRecord {
                index,
                reason: format!("non-finite timestamp {t}"),
            });
        }
        if !motion.is_finite() || motion < 0.0 {
            return Err(Error::MalformedRecord {
                index,
                reason: format!("motion must be finite and non-negative, got {motion}"),
            });
        }
        if emb.is_empty() {
            return Err(Error::MalformedRecord {
                index,
                reason: "empty embedding".into(),
            });
        }
        if emb.iter().any(|x| !x.is_finite()) {
            return Err(Error::MalformedRecord {
                index,
                reason: "non-finite embedding component".into(),
            });
        }
        let n = vector::norm(&emb);
        if n == 0.0 {
            return Err(Error::ZeroEmbedding { index });
        }
        if (n - 1.0).abs() > UNIT_TOLERANCE && !vector::normalize_in_place(&mut emb) {
            return Err(Error::ZeroEmbedding { index });
        }
        Ok(Self { t, emb, motion })
    }

    pub fn dim(&self) -> usize {
        self.emb.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamFormat {
    Jsonl,
    Binary,
}

impl StreamFormat {
    /// Guesses the format from the leading bytes of a source.
    pub fn sniff(prefix: &[u8]) -> Self {
        if prefix.starts_with(STREAM_MAGIC) {
            StreamFormat::Binary
        } else {
            StreamFormat::Jsonl
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonRecord {
    t: f64,
    emb: Vec<f64>,
    motion: f64,
}

#[derive(Serialize)]
struct JsonRecordRef<'a> {
    t: f64,
    emb: &'a [f64],
    motion: f64,
}

enum Source<R: Read> {
    Jsonl(io::Lines<BufReader<R>>),
    Binary(BufReader<R>),
}

/// Validating iterator over the records of a stream.
pub struct FrameReader<R: Read> {
    source: Source<R>,
    dim: Option<usize>,
    prev_t: Option<f64>,
    index: usize,
    done: bool,
}

/// Opens a stream in the given format. For the binary format the header is
/// read and checked immediately.
pub fn open_stream<R: Read>(source: R, format: StreamFormat) -> Result<FrameReader<R>> {
    let mut reader = BufReader::new(source);
    let (source, dim) = match format {
        StreamFormat::Jsonl => (Source::Jsonl(reader.lines()), None),
        StreamFormat::Binary => {
            let mut magic = [0u8; 4];
            read_header_bytes(&mut reader, &mut magic)?;
            if &magic != STREAM_MAGIC {
                return Err(header_error("bad magic"));
            }
            let version = reader
                .read_u32::<LittleEndian>()
                .map_err(|_| header_error("truncated header"))?;
            if version != STREAM_VERSION {
                return Err(header_error(&format!("unsupported version {version}")));
            }
            let d = reader
                .read_u32::<LittleEndian>()
                .map_err(|_| header_error("truncated header"))?;
            if d == 0 {
                return Err(header_error("zero dimension"));
            }
            (Source::Binary(reader), Some(d as usize))
        }
    };
    Ok(FrameReader {
        source,
        dim,
        prev_t: None,
        index: 0,
        done: false,
    })
}

fn read_header_bytes<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<()> {
    reader
        .read_exact(buf)
        .map_err(|_| header_error("truncated header"))
}

fn header_error(reason: &str) -> Error {
    Error::MalformedRecord {
        index: 0,
        reason: format!("stream header: {reason}"),
    }
}

impl<R: Read> FrameReader<R> {
    /// Embedding dimension, known after the header (binary) or first record (JSONL).
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    fn next_raw(&mut self) -> Option<Result<(f64, Vec<f64>, f64)>> {
        let index = self.index;
        match &mut self.source {
            Source::Jsonl(lines) => loop {
                let line = match lines.next()? {
                    Ok(line) => line,
                    Err(e) => return Some(Err(e.into())),
                };
                if line.trim().is_empty() {
                    continue;
                }
                return Some(
                    serde_json::from_str::<JsonRecord>(&line)
                        .map(|r| (r.t, r.emb, r.motion))
                        .map_err(|e| Error::MalformedRecord {
                            index,
                            reason: e.to_string(),
                        }),
                );
            },
            Source::Binary(reader) => {
                let d = self.dim.expect("binary header sets the dimension");
                let t = match reader.read_f64::<LittleEndian>() {
                    Ok(t) => t,
                    Err(e) if e.kind() == ErrorKind::UnexpectedEof => {
                        // Only a clean EOF at a record boundary ends the stream.
                        return match reader.fill_buf() {
                            Ok([]) => None,
                            _ => Some(Err(truncated(index))),
                        };
                    }
                    Err(e) => return Some(Err(e.into())),
                };
                let mut emb = Vec::with_capacity(d);
                for _ in 0..d {
                    match reader.read_f32::<LittleEndian>() {
                        Ok(x) => emb.push(f64::from(x)),
                        Err(_) => return Some(Err(truncated(index))),
                    }
                }
                let motion = match reader.read_f32::<LittleEndian>() {
                    Ok(m) => f64::from(m),
                    Err(_) => return Some(Err(truncated(index))),
                };
                Some(Ok((t, emb, motion)))
            }
        }
    }
}

fn truncated(index: usize) -> Error {
    Error::MalformedRecord {
        index,
        reason: "truncated record".into(),
    }
}

impl<R: Read> Iterator for FrameReader<R> {
    type Item = Result<FrameFeature>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let result = self.next_raw()?.and_then(|(t, emb, motion)| {
            let index = self.index;
            match self.dim {
                Some(d) if d != emb.len() => {
                    return Err(Error::MalformedRecord {
                        index,
                        reason: format!("dimension {} differs from {d}", emb.len()),
                    })
                }
                None => self.dim = Some(emb.len()),
                _ => {}
            }
            let frame = FrameFeature::ingest(index, t, emb, motion)?;
            if let Some(prev) = self.prev_t {
                if frame.t <= prev {
                    return Err(Error::NonMonotoneTimestamp {
                        index,
                        prev,
                        t: frame.t,
                    });
                }
            }
            self.prev_t = Some(frame.t);
            Ok(frame)
        });
        self.index += 1;
        if result.is_err() {
            self.done = true;
        }
        Some(result)
    }
}

/// Reads a whole stream into memory.
pub fn read_stream<R: Read>(source: R, format: StreamFormat) -> Result<Vec<FrameFeature>> {
    open_stream(source, format)?.collect()
}

/// Incremental writer for either stream format.
pub struct FrameWriter<W: Write> {
    sink: W,
    format: StreamFormat,
    dim: usize,
}

impl<W: Write> FrameWriter<W> {
    pub fn new(mut sink: W, format: StreamFormat, dim: usize) -> Result<Self> {
        if format == StreamFormat::Binary {
            sink.write_all(STREAM_MAGIC)?;
            sink.write_u32::<LittleEndian>(STREAM_VERSION)?;
            sink.write_u32::<LittleEndian>(dim as u32)?;
        }
        Ok(Self { sink, format, dim })
    }

    pub fn write(&mut self, frame: &FrameFeature) -> Result<()> {
        if frame.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: frame.dim(),
            });
        }
        match self.format {
            StreamFormat::Binary => {
                self.sink.write_f64::<LittleEndian>(frame.t)?;
                for &x in &frame.emb {
                    self.sink.write_f32::<LittleEndian>(x as f32)?;
                }
                self.sink.write_f32::<LittleEndian>(frame.motion as f32)?;
            }
            StreamFormat::Jsonl => {
                let record = JsonRecordRef {
                    t: frame.t,
                    emb: &frame.emb,
                    motion: frame.motion,
                };
                serde_json::to_writer(&mut self.sink, &record)?;
                self.sink.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.sink.flush()?;
        Ok(self.sink)
    }
}

/// Writes a header for `dim` followed by every frame.
pub fn write_stream<W: Write>(
    sink: W,
    format: StreamFormat,
    dim: usize,
    frames: &[FrameFeature],
) -> Result<W> {
    let mut writer = FrameWriter::new(sink, format, dim)?;
    for frame in frames {
        writer.write(frame)?;
    }
    writer.finish()
}

/// Min-max normalizer over the last `capacity` raw values, current value
/// included.
#[derive(Debug, Clone)]
pub struct SlidingWindowNormalizer {
    capacity: usize,
    epsilon: f64,
    buffer: VecDeque<f64>,
}

pub const DEFAULT_NORM_WINDOW: usize = 64;
pub const DEFAULT_NORM_EPSILON: f64 = 1e-12;

impl SlidingWindowNormalizer {
    pub fn new(capacity: usize, epsilon: f64) -> Self {
        assert!(
            capacity >= 1,
            "normalizer window must hold at least one value"
        );
        Self {
            capacity,
            epsilon,
            buffer: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn normalize(&mut self, value: f64) -> Result<f64> {
        if !value.is_finite() {
            return Err(Error::NonFiniteValue(value));
        }
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(value);
        let (lo, hi) = self
            .buffer
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        let span = hi - lo;
        if span <= self.epsilon {
            Ok(0.0)
        } else {
            Ok(((value - lo) / span).clamp(0.0, 1.0))
        }
    }
}

impl Default for SlidingWindowNormalizer {
    fn default() -> Self {
        Self::new(DEFAULT_NORM_WINDOW, DEFAULT_NORM_EPSILON)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(t: f64, emb: &[f64], motion: f64) -> FrameFeature {
        FrameFeature::ingest(0, t, emb.to_vec(), motion).unwrap()
    }

    #[test]
    fn jsonl_line_is_normalized() {
        let src = r#"{"t":0.5,"emb":[2,0,0,0],"motion":0.3}"#;
        let frames = read_stream(src.as_bytes(), StreamFormat::Jsonl).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].emb, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(frames[0].motion, 0.3);
    }

    #[test]
    fn binary_two_records() {
        let frames = vec![
            frame(0.0, &[0.5, 0.5, 0.5, 0.5], 0.0),
            frame(0.5, &[0.0, 3.0, 0.0, 4.0], 1.25),
        ];
        let bytes = write_stream(Vec::new(), StreamFormat::Binary, 4, &frames).unwrap();
        assert_eq!(&bytes[..4], b"EVST");
        assert_eq!(bytes.len(), 12 + 2 * (8 + 4 * 4 + 4));
        let back = read_stream(bytes.as_slice(), StreamFormat::Binary).unwrap();
        assert_eq!(back.len(), 2);
        for f in &back {
            assert!((vector::norm(&f.emb) - 1.0).abs() <= 1e-6);
        }
        assert_eq!(
            back[1].emb,
            vec![0.0, 0.6000000238418579, 0.0, 0.800000011920929]
        );
    }

    #[test]
    fn equal_timestamp_rejected() {
        let src =
            "{\"t\":1.0,\"emb\":[1,0],\"motion\":0}\n{\"t\":1.0,\"emb\":[0,1],\"motion\":0}\n";
        let err = read_stream(src.as_bytes(), StreamFormat::Jsonl).unwrap_err();
        assert!(matches!(err, Error::NonMonotoneTimestamp { index: 1, .. }));
    }

    #[test]
    fn zero_and_nan_embeddings_rejected() {
        let zero = r#"{"t":0,"emb":[0,0],"motion":0}"#;
        assert!(matches!(
            read_stream(zero.as_bytes(), StreamFormat::Jsonl).unwrap_err(),
            Error::ZeroEmbedding { index: 0 }
        ));
        let err = FrameFeature::ingest(3, 0.0, vec![f64::NAN, 1.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { index: 3, .. }));
        let err = FrameFeature::ingest(0, 0.0, vec![1.0], -1.0).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { .. }));
    }

    #[test]
    fn dimension_change_rejected() {
        let src = "{\"t\":0,\"emb\":[1,0],\"motion\":0}\n{\"t\":1,\"emb\":[1,0,0],\"motion\":0}\n";
        let err = read_stream(src.as_bytes(), StreamFormat::Jsonl).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { index: 1, .. }));
    }

    #[test]
    fn truncated_binary_rejected() {
        let frames = vec![frame(0.0, &[1.0, 0.0], 0.0), frame(1.0, &[0.0, 1.0], 0.0)];
        let bytes = write_stream(Vec::new(), StreamFormat::Binary, 2, &frames).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        let err = read_stream(cut, StreamFormat::Binary).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { index: 1, .. }));
        assert!(read_stream(&b"EVS"[..], StreamFormat::Binary).is_err());
    }

    #[test]
    fn sniff_formats() {
        assert_eq!(StreamFormat::sniff(b"EVST\x01"), StreamFormat::Binary);
        assert_eq!(StreamFormat::sniff(b"{\"t\""), StreamFormat::Jsonl);
    }

    #[test]
    fn normalizer_midpoint() {
        let mut n = SlidingWindowNormalizer::new(8, 1e-12);
        n.normalize(1.0).unwrap();
        n.normalize(3.0).unwrap();
        assert_eq!(n.normalize(2.0).unwrap(), 0.5);
    }

    #[test]
    fn normalizer_degenerate_window_is_zero() {
        let mut n = SlidingWindowNormalizer::new(4, 1e-12);
        for _ in 0..6 {
            assert_eq!(n.normalize(7.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn normalizer_evicts_oldest() {
        let mut n = SlidingWindowNormalizer::new(3, 1e-12);
        let outs: Vec<f64> = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .map(|&v| n.normalize(v).unwrap())
            .collect();
        // windows: {1} {1,2} {1,2,3} {2,3,4}
        assert_eq!(outs, vec![0.0, 1.0, 1.0, 1.0]);
        assert_eq!(n.len(), 3);
        let mut n = SlidingWindowNormalizer::new(3, 1e-12);
        for v in [1.0, 2.0, 3.0, 4.0] {
            n.normalize(v).unwrap();
        }
        // window {3,4,3}
        assert_eq!(n.normalize(3.0).unwrap(), 0.0);
    }

    #[test]
    fn normalizer_rejects_nan() {
        let mut n = SlidingWindowNormalizer::default();
        assert!(matches!(
            n.normalize(f64::NAN),
            Err(Error::NonFiniteValue(_))
        ));
        assert!(n.is_empty());
    }
}
