//! Online event-boundary detector.
//!
//! Each frame is scored by combining semantic drift against an EMA running
//! representation, normalized motion and normalized causal prediction error:
//!
//! ```text
//! E_t = w_sem (1 - cos(f_t, f_bar)) + w_mot m~_t + w_pred c_t,   p_t = logistic(E_t)
//! tau_t = tau0 (1 + eta Var(m_{t-w..t}))
//! ```
//!
//! A boundary fires when the compared quantity (`p_t` or `E_t`, see
//! [`ThresholdMode`]) exceeds `tau_t`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_builder::TimedEmbedding;
use crate::feature_stream::{
    FrameFeature, SlidingWindowNormalizer, DEFAULT_NORM_EPSILON, DEFAULT_NORM_WINDOW,
};
use crate::predictor::{logistic, PredictorModel};
use crate::vector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Compare `p_t = logistic(E_t)` against `tau_t`.
    Probability,
    /// Compare the raw score `E_t` against `tau_t`.
    RawScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub w_sem: f64,
    pub w_mot: f64,
    pub w_pred: f64,
    /// EMA rate for the running representation.
    pub rho: f64,
    pub tau0: f64,
    pub eta: f64,
    /// Raw-motion history used for the threshold variance, in frames.
    pub var_window: usize,
    pub threshold_mode: ThresholdMode,
    /// Min-max window for the motion and prediction-error cues, in frames.
    pub norm_window: usize,
    pub norm_epsilon: f64,
    /// An open segment reaching this many frames is closed as a forced boundary.
    pub max_segment_frames: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            w_sem: 1.0,
            w_mot: 0.5,
            w_pred: 0.5,
            rho: 0.1,
            tau0: 0.8,
            eta: 0.03,
            var_window: DEFAULT_NORM_WINDOW,
            threshold_mode: ThresholdMode::Probability,
            norm_window: DEFAULT_NORM_WINDOW,
            norm_epsilon: DEFAULT_NORM_EPSILON,
            max_segment_frames: 4096,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(format!("detector: {msg}")));
        for (name, w) in [
            ("w_sem", self.w_sem),
            ("w_mot", self.w_mot),
            ("w_pred", self.w_pred),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(&format!("{name} must be finite and >= 0"));
            }
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !self.tau0.is_finite() {
            return bad("tau0 must be finite");
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return bad("eta must be finite and >= 0");
        }
        if self.var_window < 2 {
            return bad("var_window must be >= 2");
        }
        if self.norm_window < 1 {
            return bad("norm_window must be >= 1");
        }
        if self.norm_epsilon.is_nan() || self.norm_epsilon < 0.0 {
            return bad("norm_epsilon must be >= 0");
        }
        if self.max_segment_frames < 1 {
            return bad("max_segment_frames must be >= 1");
        }
        Ok(())
    }
}

/// Per-frame detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryDecision {
    pub t: f64,
    /// Cosine similarity between the frame and the running representation.
    pub s_t: f64,
    pub m_tilde: f64,
    pub c_t: f64,
    pub e_t: f64,
    pub p_t: f64,
    pub tau_t: f64,
    pub is_boundary: bool,
    /// Set when the boundary came from the open-segment cap rather than the score.
    #[serde(default)]
    pub forced: bool,
}

/// `tau0 (1 + eta Var)` with the population variance of `recent_motion`.
pub fn adaptive_threshold<I>(cfg: &DetectorConfig, recent_motion: I) -> f64
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let iter = recent_motion.into_iter();
    let (n, sum) = iter.clone().fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    let var = if n == 0 {
        0.0
    } else {
        let mean = sum / n as f64;
        iter.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64
    };
    cfg.tau0 * (1.0 + cfg.eta * var)
}

/// Streaming state for one stream.
#[derive(Debug, Clone)]
pub struct DetectorState {
    d: usize,
    f_bar: Vec<f64>,
    f_prev: Vec<f64>,
    motion_norm: SlidingWindowNormalizer,
    error_norm: SlidingWindowNormalizer,
    recent_motion: VecDeque<f64>,
    var_window: usize,
    last_t: Option<f64>,
    segment_start: Option<f64>,
    segment: Vec<TimedEmbedding>,
    frames_seen: u64,
}

impl DetectorState {
    pub fn new(d: usize, cfg: &DetectorConfig) -> Self {
        Self {
            d,
            f_bar: Vec::with_capacity(d),
            f_prev: Vec::with_capacity(d),
            motion_norm: SlidingWindowNormalizer::new(cfg.norm_window, cfg.norm_epsilon),
            error_norm: SlidingWindowNormalizer::new(cfg.norm_window, cfg.norm_epsilon),
            recent_motion: VecDeque::with_capacity(cfg.var_window),
            var_window: cfg.var_window,
            last_t: None,
            segment_start: None,
            segment: Vec::new(),
            frames_seen: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Running event representation (not unit-norm in general).
    pub fn running_representation(&self) -> &[f64] {
        &self.f_bar
    }

    /// Start time of the open segment, once it holds a frame.
    pub fn segment_start(&self) -> Option<f64> {
        self.segment_start
    }

    pub fn segment(&self) -> &[TimedEmbedding] {
        &self.segment
    }

    pub fn last_t(&self) -> Option<f64> {
        self.last_t
    }

    pub fn frames_seen(&self) -> u64 {
        self.frames_seen
    }

    /// Approximate resident size of the state in bytes.
    pub fn footprint_bytes(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        let vectors = (self.f_bar.capacity() + self.f_prev.capacity()) * f;
        let windows = (self.motion_norm.capacity()
            + self.error_norm.capacity()
            + self.recent_motion.capacity())
            * f;
        let segment = self.segment.capacity() * std::mem::size_of::<TimedEmbedding>()
            + self
                .segment
                .iter()
                .map(|s| s.emb.capacity() * f)
                .sum::<usize>();
        vectors + windows + segment
    }

    pub fn step(
        &mut self,
        cfg: &DetectorConfig,
        frame: &FrameFeature,
        predictor: &PredictorModel,
    ) -> Result<BoundaryDecision> {
        if frame.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: frame.dim(),
            });
        }
        if predictor.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: predictor.dim(),
            });
        }
        if let Some(prev) = self.last_t {
            if frame.t.is_nan() || frame.t <= prev {
                return Err(Error::NonMonotoneTimestamp {
                    index: self.frames_seen as usize,
                    prev,
                    t: frame.t,
                });
            }
        }
        let emb = frame.emb.as_slice();
        let first = self.last_t.is_none();
        if first {
            self.f_bar.clear();
            self.f_bar.extend_from_slice(emb);
        }

        let s_t = vector::cosine(emb, &self.f_bar);
        let m_tilde = self.motion_norm.normalize(frame.motion)?;
        let c_t = if first {
            0.0
        } else {
            let raw = predictor.prediction_error(&self.f_prev, emb)?;
            self.error_norm.normalize(raw)?
        };
        if self.recent_motion.len() == self.var_window {
            self.recent_motion.pop_front();
        }
        self.recent_motion.push_back(frame.motion);
        let tau_t = adaptive_threshold(cfg, self.recent_motion.iter().copied());

        let e_t = cfg.w_sem * (1.0 - s_t) + cfg.w_mot * m_tilde + cfg.w_pred * c_t;
        let p_t = logistic(e_t);
        let compared = match cfg.threshold_mode {
            ThresholdMode::Probability => p_t,
            ThresholdMode::RawScore => e_t,
        };
        let mut is_boundary = !first && compared > tau_t;

        if self.segment_start.is_none() {
            self.segment_start = Some(frame.t);
        }
        self.segment.push(TimedEmbedding {
            t: frame.t,
            emb: emb.to_vec(),
        });
        let forced = !is_boundary && self.segment.len() >= cfg.max_segment_frames;
        is_boundary |= forced;

        if !is_boundary {
            for (bar, &x) in self.f_bar.iter_mut().zip(emb) {
                *bar = (1.0 - cfg.rho) * *bar + cfg.rho * x;
            }
        }
        self.f_prev.clear();
        self.f_prev.extend_from_slice(emb);
        self.last_t = Some(frame.t);
        self.frames_seen += 1;

        Ok(BoundaryDecision {
            t: frame.t,
            s_t,
            m_tilde,
            c_t,
            e_t,
            p_t,
            tau_t,
            is_boundary,
            forced,
        })
    }

    /// Hands over the buffered frames of the segment that just closed.
    pub fn take_segment(&mut self) -> Vec<TimedEmbedding> {
        std::mem::take(&mut self.segment)
    }

    /// Restarts the running representation from `frame`; the next segment
    /// starts with the following frame.
    pub fn reset_segment(&mut self, frame: &FrameFeature) {
        self.f_bar.clear();
        self.f_bar.extend_from_slice(&frame.emb);
        self.segment.clear();
        self.segment_start = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(d: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    }

    fn frame(t: f64, emb: Vec<f64>, motion: f64) -> FrameFeature {
        FrameFeature::ingest(0, t, emb, motion).unwrap()
    }

    #[test]
    fn constant_stream_never_fires() {
        let cfg = DetectorConfig {
            tau0: 0.51,
            ..DetectorConfig::default()
        };
        let pred = PredictorModel::identity(4);
        let mut st = DetectorState::new(4, &cfg);
        for i in 0..200 {
            let dec = st
                .step(&cfg, &frame(i as f64 * 0.5, unit(4, 0), 0.0), &pred)
                .unwrap();
            assert_eq!(dec.s_t, 1.0);
            assert_eq!(dec.m_tilde, 0.0);
            assert_eq!(dec.c_t, 0.0);
            assert_eq!(dec.e_t, 0.0);
            assert_eq!(dec.p_t, 0.5);
            assert!(!dec.is_boundary);
        }
        assert_eq!(st.segment().len(), 200);
    }

    #[test]
    fn orthogonal_frame_scores_one_on_semantic_term() {
        let cfg = DetectorConfig {
            w_mot: 0.0,
            w_pred: 0.0,
            tau0: 0.9,
            threshold_mode: ThresholdMode::RawScore,
            ..DetectorConfig::default()
        };
        let pred = PredictorModel::identity(3);
        let mut st = DetectorState::new(3, &cfg);
        st.step(&cfg, &frame(0.0, unit(3, 0), 0.0), &pred).unwrap();
        let dec = st.step(&cfg, &frame(1.0, unit(3, 1), 0.0), &pred).unwrap();
        assert_eq!(dec.e_t, 1.0);
        assert!(dec.is_boundary);
        assert_eq!(dec.p_t, logistic(1.0));
    }

    #[test]
    fn first_frame_never_fires() {
        let cfg = DetectorConfig {
            tau0: -10.0,
            threshold_mode: ThresholdMode::RawScore,
            ..DetectorConfig::default()
        };
        let mut st = DetectorState::new(2, &cfg);
        let dec = st
            .step(
                &cfg,
                &frame(0.0, unit(2, 0), 5.0),
                &PredictorModel::identity(2),
            )
            .unwrap();
        assert!(!dec.is_boundary);
    }

    #[test]
    fn threshold_examples() {
        let fixed = DetectorConfig {
            tau0: 0.7,
            eta: 0.0,
            ..DetectorConfig::default()
        };
        assert_eq!(adaptive_threshold(&fixed, [0.0, 10.0, 3.0]), 0.7);
        let cfg = DetectorConfig {
            tau0: 0.5,
            eta: 0.03,
            ..DetectorConfig::default()
        };
        // population variance of {0, 2} is 1
        assert!((adaptive_threshold(&cfg, [0.0, 2.0]) - 0.515).abs() < 1e-15);
        let paper = DetectorConfig {
            tau0: 0.96,
            eta: 0.03,
            ..DetectorConfig::default()
        };
        assert_eq!(adaptive_threshold(&paper, [0.4, 0.4, 0.4]), 0.96);
        assert_eq!(adaptive_threshold(&paper, [0.4]), 0.96);
    }

    #[test]
    fn doubling_eta_doubles_excess() {
        let window = [0.1, 0.9, 0.3, 0.7, 2.0];
        let a = DetectorConfig {
            tau0: 0.6,
            eta: 0.05,
            ..DetectorConfig::default()
        };
        let b = DetectorConfig {
            eta: 0.1,
            ..a.clone()
        };
        let ea = adaptive_threshold(&a, window) - a.tau0;
        let eb = adaptive_threshold(&b, window) - b.tau0;
        assert!((eb - 2.0 * ea).abs() < 1e-14);
    }

    #[test]
    fn reset_restarts_segment() {
        let cfg = DetectorConfig::default();
        let pred = PredictorModel::identity(3);
        let mut st = DetectorState::new(3, &cfg);
        for i in 0..5 {
            st.step(&cfg, &frame(i as f64, unit(3, 0), 0.0), &pred)
                .unwrap();
        }
        let f = frame(5.0, unit(3, 2), 0.0);
        st.step(&cfg, &f, &pred).unwrap();
        let seg = st.take_segment();
        assert_eq!(seg.len(), 6);
        assert_eq!(seg.last().unwrap().t, 5.0);
        st.reset_segment(&f);
        assert!(st.segment().is_empty());
        assert_eq!(st.segment_start(), None);
        let dec = st.step(&cfg, &frame(6.0, unit(3, 2), 0.0), &pred).unwrap();
        assert_eq!(dec.s_t, 1.0);
        assert_eq!(st.segment_start(), Some(6.0));
    }

    #[test]
    fn errors() {
        let cfg = DetectorConfig::default();
        let pred = PredictorModel::identity(3);
        let mut st = DetectorState::new(3, &cfg);
        assert!(matches!(
            st.step(&cfg, &frame(0.0, unit(2, 0), 0.0), &pred),
            Err(Error::DimensionMismatch {
                expected: 3,
                actual: 2
            })
        ));
        assert!(matches!(
            st.step(
                &cfg,
                &frame(0.0, unit(3, 0), 0.0),
                &PredictorModel::identity(4)
            ),
            Err(Error::DimensionMismatch { .. })
        ));
        st.step(&cfg, &frame(1.0, unit(3, 0), 0.0), &pred).unwrap();
        assert!(matches!(
            st.step(&cfg, &frame(1.0, unit(3, 0), 0.0), &pred),
            Err(Error::NonMonotoneTimestamp { .. })
        ));
    }

    #[test]
    fn segment_cap_forces_boundary() {
        let cfg = DetectorConfig {
            max_segment_frames: 10,
            ..DetectorConfig::default()
        };
        let pred = PredictorModel::identity(2);
        let mut st = DetectorState::new(2, &cfg);
        let mut forced_at = Vec::new();
        for i in 0..35 {
            let f = frame(i as f64, unit(2, 0), 0.0);
            let dec = st.step(&cfg, &f, &pred).unwrap();
            if dec.is_boundary {
                assert!(dec.forced);
                forced_at.push(i);
                assert_eq!(st.take_segment().len(), 10);
                st.reset_segment(&f);
            }
        }
        assert_eq!(forced_at, vec![9, 19, 29]);
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::default().validate().is_ok());
        for bad in [
            DetectorConfig {
                rho: 1.0,
                ..Default::default()
            },
            DetectorConfig {
                rho: 0.0,
                ..Default::default()
            },
            DetectorConfig {
                w_mot: -0.1,
                ..Default::default()
            },
            DetectorConfig {
                var_window: 1,
                ..Default::default()
            },
            DetectorConfig {
                tau0: f64::NAN,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
