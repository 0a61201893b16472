//! Wall-clock benchmark of the engine loop, with responder time measured
//! separately from per-frame engine cost.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::event_builder::EventToken;
use crate::feature_stream::FrameFeature;
use crate::harness::eval::LatencyStats;
use crate::pacing::Responder;
use crate::pipeline::{Engine, EngineConfig, EngineCounters};
use crate::predictor::PredictorModel;

/// Wraps a responder and accumulates the time spent inside it.
pub struct TimedResponder<R> {
    inner: R,
    spent: Duration,
    calls: Vec<Duration>,
}

impl<R> TimedResponder<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            spent: Duration::ZERO,
            calls: Vec::new(),
        }
    }

    pub fn spent(&self) -> Duration {
        self.spent
    }
}

impl<R: Responder> Responder for TimedResponder<R> {
    fn respond(&mut self, event: &EventToken, context: &[EventToken]) -> String {
        let start = Instant::now();
        let text = self.inner.respond(event, context);
        let took = start.elapsed();
        self.spent += took;
        self.calls.push(took);
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frames: u64,
    pub dim: usize,
    pub elapsed_s: f64,
    pub frames_per_sec: f64,
    /// Engine cost per frame, responder excluded.
    pub frame_latency: LatencyStats,
    pub emission_latency: LatencyStats,
    pub counters: EngineCounters,
    /// `(stream time, slot count)` sampled every `sample_every` frames.
    pub slots_over_time: Vec<(f64, usize)>,
    #[serde(skip)]
    pub frame_latencies_ms: Vec<f64>,
}

pub fn bench<I, R>(
    frames: I,
    cfg: &EngineConfig,
    predictor: Arc<PredictorModel>,
    responder: R,
    sample_every: usize,
) -> Result<BenchReport>
where
    I: IntoIterator<Item = FrameFeature>,
    R: Responder,
{
    let dim = predictor.dim();
    let mut engine = Engine::new(cfg.clone(), predictor, TimedResponder::new(responder))?;
    let mut per_frame = Vec::new();
    let mut slots_over_time = Vec::new();
    let started = Instant::now();
    let mut engine_time = Duration::ZERO;
    for (i, frame) in frames.into_iter().enumerate() {
        let before = engine.responder().spent();
        let t0 = Instant::now();
        engine.push(&frame)?;
        let wall = t0.elapsed();
        let cost = wall.saturating_sub(engine.responder().spent() - before);
        engine_time += cost;
        per_frame.push(cost.as_secs_f64() * 1e3);
        if sample_every > 0 && i % sample_every == 0 {
            slots_over_time.push((frame.t, engine.bank().len()));
        }
    }
    let elapsed = started.elapsed();
    let emission_latency = LatencyStats::from_durations(&engine.responder().calls);
    let counters = engine.counters().clone();
    let frames = counters.frames;
    let engine_s = engine_time.as_secs_f64();
    Ok(BenchReport {
        frames,
        dim,
        elapsed_s: elapsed.as_secs_f64(),
        frames_per_sec: if engine_s > 0.0 {
            frames as f64 / engine_s
        } else {
            0.0
        },
        frame_latency: LatencyStats::from_ms(&per_frame),
        emission_latency,
        counters,
        slots_over_time,
        frame_latencies_ms: per_frame,
    })
}
