//! Boundary-aware pooling of a closed segment into a unit-norm event token.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector;

/// A buffered frame of the open segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TimedEmbedding {
    pub t: f64,
    pub emb: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolingMode {
    /// Weights `exp(-|t_i - t_b| / sigma)`.
    Weighted,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BuilderConfig {
    pub mode: PoolingMode,
    /// Temporal sharpness in seconds; derived from the segment span when unset.
    pub sigma_sharp: Option<f64>,
}

impl Default for BuilderConfig {
    fn default() -> Self {
        Self {
            mode: PoolingMode::Weighted,
            sigma_sharp: None,
        }
    }
}

impl BuilderConfig {
    pub fn validate(&self) -> Result<()> {
        match self.sigma_sharp {
            Some(s) if s.is_nan() || s <= 0.0 => Err(Error::InvalidConfig(format!(
                "builder: sigma_sharp must be > 0, got {s}"
            ))),
            _ => Ok(()),
        }
    }
}

/// A pooled event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventToken {
    pub index: u64,
    pub emb: Vec<f64>,
    pub t_start: f64,
    pub t_end: f64,
    pub t_b: f64,
    pub frame_count: u64,
    pub merge_count: u64,
}

impl EventToken {
    pub fn dim(&self) -> usize {
        self.emb.len()
    }

    /// Frame-count weighted mean of two tokens, renormalized. Keeps `self`'s
    /// index and start; takes `other`'s end and boundary time.
    pub fn absorb(&mut self, other: &EventToken) {
        let (a, b) = (self.frame_count as f64, other.frame_count as f64);
        let total = (a + b).max(1.0);
        for (x, &y) in self.emb.iter_mut().zip(&other.emb) {
            *x = (a * *x + b * y) / total;
        }
        if !vector::normalize_in_place(&mut self.emb) {
            self.emb.clone_from(&other.emb);
        }
        self.t_start = self.t_start.min(other.t_start);
        self.t_end = self.t_end.max(other.t_end);
        self.t_b = other.t_b;
        self.frame_count += other.frame_count;
    }
}

/// Default sharpness: half the segment span, at least the smallest gap
/// between consecutive frames.
pub fn default_sigma(frames: &[TimedEmbedding], t_b: f64) -> f64 {
    let span = (t_b - frames.first().map_or(t_b, |f| f.t)) / 2.0;
    let gap = frames
        .windows(2)
        .map(|w| w[1].t - w[0].t)
        .fold(f64::INFINITY, f64::min);
    let floor = if gap.is_finite() { gap } else { 1.0 };
    span.max(floor)
}

pub fn build_event(
    index: u64,
    frames: &[TimedEmbedding],
    t_b: f64,
    sigma_sharp: f64,
    mode: PoolingMode,
) -> Result<EventToken> {
    let first = frames.first().ok_or(Error::EmptySegment)?;
    if sigma_sharp.is_nan() || sigma_sharp <= 0.0 {
        return Err(Error::NonPositiveSharpness(sigma_sharp));
    }
    let d = first.emb.len();
    let weights: Vec<f64> = match mode {
        PoolingMode::Weighted => frames
            .iter()
            .map(|f| (-(f.t - t_b).abs() / sigma_sharp).exp())
            .collect(),
        PoolingMode::Mean => vec![1.0; frames.len()],
    };
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        // every weight underflowed; the frames nearest t_b dominate in the limit
        let mut e = build_event(index, nearest_to(frames, t_b), t_b, 1.0, PoolingMode::Mean)?;
        e.t_start = first.t;
        e.t_end = frames.last().map_or(first.t, |f| f.t);
        e.frame_count = frames.len() as u64;
        return Ok(e);
    }
    let mut emb = vec![0.0; d];
    for (f, w) in frames.iter().zip(&weights) {
        if f.emb.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: f.emb.len(),
            });
        }
        let share = w / total;
        for (acc, &x) in emb.iter_mut().zip(&f.emb) {
            *acc += share * x;
        }
    }
    if !vector::normalize_in_place(&mut emb) {
        return Err(Error::Invariant(
            "pooled event embedding has zero norm".into(),
        ));
    }
    Ok(EventToken {
        index,
        emb,
        t_start: first.t,
        t_end: frames.last().map_or(first.t, |f| f.t),
        t_b,
        frame_count: frames.len() as u64,
        merge_count: 0,
    })
}

fn nearest_to(frames: &[TimedEmbedding], t_b: f64) -> &[TimedEmbedding] {
    let best = frames
        .iter()
        .map(|f| (f.t - t_b).abs())
        .fold(f64::INFINITY, f64::min);
    let lo = frames
        .iter()
        .position(|f| (f.t - t_b).abs() == best)
        .unwrap_or(0);
    let hi = frames
        .iter()
        .rposition(|f| (f.t - t_b).abs() == best)
        .unwrap_or(lo);
    &frames[lo..=hi]
}

/// Pools with the configured mode and sharpness.
pub fn build_with_config(
    index: u64,
    frames: &[TimedEmbedding],
    t_b: f64,
    cfg: &BuilderConfig,
) -> Result<EventToken> {
    let sigma = cfg
        .sigma_sharp
        .unwrap_or_else(|| default_sigma(frames, t_b));
    build_event(index, frames, t_b, sigma, cfg.mode)
}
