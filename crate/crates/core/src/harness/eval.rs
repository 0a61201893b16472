//! Boundary scoring and latency statistics.

use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean signed offset of matched detections, in frames (positive = late).
    pub mean_latency_frames: f64,
    pub matched: usize,
    pub detected: usize,
    pub truth: usize,
}

/// Greedy one-to-one matching, closest pairs first, within
/// `tolerance_frames / fps` seconds. An empty detection list scores P = 0.
pub fn eval_boundaries(
    detected: &[f64],
    truth: &[f64],
    tolerance_frames: u32,
    fps: f64,
) -> BoundaryScore {
    let tol = f64::from(tolerance_frames) / fps;
    let slack = 1e-9 * (1.0 + tol);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &d) in detected.iter().enumerate() {
        // truth is sorted: start at the first candidate inside the window
        let lo = truth.partition_point(|&t| t < d - tol - slack);
        for (j, &t) in truth.iter().enumerate().skip(lo) {
            if t > d + tol + slack {
                break;
            }
            pairs.push(((d - t).abs(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_d = vec![false; detected.len()];
    let mut used_t = vec![false; truth.len()];
    let mut matched = 0usize;
    let mut offset = 0.0;
    for (_, i, j) in pairs {
        if used_d[i] || used_t[j] {
            continue;
        }
        used_d[i] = true;
        used_t[j] = true;
        matched += 1;
        offset += (detected[i] - truth[j]) * fps;
    }
    let precision = if detected.is_empty() {
        0.0
    } else {
        matched as f64 / detected.len() as f64
    };
    let recall = if truth.is_empty() {
        if detected.is_empty() {
            1.0
        } else {
            0.0
        }
    } else {
        matched as f64 / truth.len() as f64
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    BoundaryScore {
        precision,
        recall,
        f1,
        mean_latency_frames: if matched > 0 {
            offset / matched as f64
        } else {
            0.0
        },
        matched,
        detected: detected.len(),
        truth: truth.len(),
    }
}

/// Frames per emitted event, at least 1.
pub fn compression_ratio(frames: u64, events: u64) -> f64 {
    (frames as f64 / events.max(1) as f64).max(1.0)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

/// Nearest-rank percentile of an ascending slice.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl LatencyStats {
    pub fn from_ms(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            count: sorted.len(),
            mean_ms: sorted.iter().sum::<f64>() / sorted.len() as f64,
            p50_ms: percentile(&sorted, 50.0),
            p95_ms: percentile(&sorted, 95.0),
            max_ms: *sorted.last().unwrap(),
        }
    }

    pub fn from_durations(samples: &[Duration]) -> Self {
        let ms: Vec<f64> = samples.iter().map(|d| d.as_secs_f64() * 1e3).collect();
        Self::from_ms(&ms)
    }
}

/// Boundary times with enough context to score them. Written by `synth`
/// (ground truth) and `segment` (detections).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    pub boundaries: Vec<f64>,
}

/// Summary of one evaluated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tolerance_frames: u32,
    pub boundary: BoundaryScore,
    pub frames: u64,
    pub emitted_events: u64,
    pub keep_alives: u64,
    pub compression_ratio: f64,
    pub memory_slots: Option<usize>,
    pub frame_latency: Option<LatencyStats>,
    pub emissions_per_minute: f64,
}
