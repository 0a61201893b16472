//! Batch recomputation of the detector trace from a recorded stream.
//!
//! Cue values are computed with explicit window slices over the whole
//! recording; only the running representation needs a sequential sweep. The
//! result must equal the streaming detector's trace bit for bit.

use crate::detector::{BoundaryDecision, DetectorConfig, ThresholdMode};
use crate::error::{Error, Result};
use crate::feature_stream::FrameFeature;
use crate::predictor::{logistic, PredictorModel};
use crate::vector;

fn window_start(t: usize, len: usize, floor: usize) -> usize {
    (t + 1).saturating_sub(len).max(floor)
}

fn min_max_scale(window: &[f64], value: f64, epsilon: f64) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &x in window {
        lo = lo.min(x);
        hi = hi.max(x);
    }
    let span = hi - lo;
    if span <= epsilon {
        0.0
    } else {
        ((value - lo) / span).clamp(0.0, 1.0)
    }
}

fn population_variance(window: &[f64]) -> f64 {
    if window.is_empty() {
        return 0.0;
    }
    let n = window.len() as f64;
    let mut sum = 0.0;
    for &x in window {
        sum += x;
    }
    let mean = sum / n;
    let mut acc = 0.0;
    for &x in window {
        acc += (x - mean) * (x - mean);
    }
    acc / n
}

pub fn offline_oracle(
    frames: &[FrameFeature],
    cfg: &DetectorConfig,
    predictor: &PredictorModel,
) -> Result<Vec<BoundaryDecision>> {
    let n = frames.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let d = predictor.dim();
    for f in frames {
        if f.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: f.dim(),
            });
        }
    }

    let motion: Vec<f64> = frames.iter().map(|f| f.motion).collect();
    // raw_error[0] is a placeholder; the first frame has no predecessor
    let mut raw_error = vec![0.0; n];
    for t in 1..n {
        raw_error[t] = predictor.prediction_error(&frames[t - 1].emb, &frames[t].emb)?;
    }
    let m_tilde: Vec<f64> = (0..n)
        .map(|t| {
            let lo = window_start(t, cfg.norm_window, 0);
            min_max_scale(&motion[lo..=t], motion[t], cfg.norm_epsilon)
        })
        .collect();
    let c: Vec<f64> = (0..n)
        .map(|t| {
            if t == 0 {
                return 0.0;
            }
            let lo = window_start(t, cfg.norm_window, 1);
            min_max_scale(&raw_error[lo..=t], raw_error[t], cfg.norm_epsilon)
        })
        .collect();
    let tau: Vec<f64> = (0..n)
        .map(|t| {
            let lo = window_start(t, cfg.var_window, 0);
            cfg.tau0 * (1.0 + cfg.eta * population_variance(&motion[lo..=t]))
        })
        .collect();

    let mut f_bar = frames[0].emb.clone();
    let mut open = 0usize;
    let mut out = Vec::with_capacity(n);
    for t in 0..n {
        let emb = &frames[t].emb;
        let s_t = vector::cosine(emb, &f_bar);
        let e_t = cfg.w_sem * (1.0 - s_t) + cfg.w_mot * m_tilde[t] + cfg.w_pred * c[t];
        let p_t = logistic(e_t);
        let compared = match cfg.threshold_mode {
            ThresholdMode::Probability => p_t,
            ThresholdMode::RawScore => e_t,
        };
        let fired = t > 0 && compared > tau[t];
        open += 1;
        let forced = !fired && open >= cfg.max_segment_frames;
        let is_boundary = fired || forced;
        if is_boundary {
            f_bar.clone_from(emb);
            open = 0;
        } else {
            for (bar, &x) in f_bar.iter_mut().zip(emb) {
                *bar = (1.0 - cfg.rho) * *bar + cfg.rho * x;
            }
        }
        out.push(BoundaryDecision {
            t: frames[t].t,
            s_t,
            m_tilde: m_tilde[t],
            c_t: c[t],
            e_t,
            p_t,
            tau_t: tau[t],
            is_boundary,
            forced,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_stream() {
        let out = offline_oracle(
            &[],
            &DetectorConfig::default(),
            &PredictorModel::identity(3),
        )
        .unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn single_frame_is_not_a_boundary() {
        let f = FrameFeature::ingest(0, 0.0, vec![1.0, 0.0], 3.0).unwrap();
        let out = offline_oracle(
            &[f],
            &DetectorConfig::default(),
            &PredictorModel::identity(2),
        )
        .unwrap();
        assert_eq!(out.len(), 1);
        assert!(!out[0].is_boundary);
        assert_eq!(out[0].s_t, 1.0);
    }

    #[test]
    fn window_bounds() {
        assert_eq!(window_start(0, 3, 0), 0);
        assert_eq!(window_start(5, 3, 0), 3);
        assert_eq!(window_start(1, 64, 1), 1);
    }
}
