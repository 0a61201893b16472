//! The single forward loop: detect, pool, pace, consolidate.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::detector::{BoundaryDecision, DetectorConfig, DetectorState};
use crate::error::{Error, Result};
use crate::event_builder::{build_with_config, BuilderConfig, EventToken};
use crate::feature_stream::FrameFeature;
use crate::memory::{MemoryBank, MemoryConfig};
use crate::pacing::{EmissionKind, EmissionRecord, Pacer, PacingConfig, Responder};
use crate::predictor::PredictorModel;
use crate::vector;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub detector: DetectorConfig,
    pub builder: BuilderConfig,
    pub memory: MemoryConfig,
    pub pacing: PacingConfig,
    /// Time responder calls; off by default so emission logs stay reproducible.
    pub record_latency: bool,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.detector.validate()?;
        self.builder.validate()?;
        self.memory.validate()?;
        self.pacing.validate()
    }
}

/// What one frame produced.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub decision: BoundaryDecision,
    /// The event closed by this frame, if it was a boundary.
    pub event: Option<EventToken>,
    pub emissions: Vec<EmissionRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineCounters {
    pub frames: u64,
    pub boundaries: u64,
    pub forced_boundaries: u64,
    pub boundary_emissions: u64,
    pub keep_alives: u64,
}

pub struct Engine<R: Responder> {
    cfg: EngineConfig,
    predictor: Arc<PredictorModel>,
    detector: DetectorState,
    bank: MemoryBank,
    pacer: Pacer,
    responder: R,
    next_index: u64,
    counters: EngineCounters,
}

impl<R: Responder> Engine<R> {
    pub fn new(cfg: EngineConfig, predictor: Arc<PredictorModel>, responder: R) -> Result<Self> {
        cfg.validate()?;
        let d = predictor.dim();
        Ok(Self {
            detector: DetectorState::new(d, &cfg.detector),
            bank: MemoryBank::new(&cfg.memory),
            pacer: Pacer::new(&cfg.pacing, cfg.memory.retrieve_k, cfg.record_latency),
            cfg,
            predictor,
            responder,
            next_index: 0,
            counters: EngineCounters::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.detector.dim()
    }

    pub fn bank(&self) -> &MemoryBank {
        &self.bank
    }

    pub fn counters(&self) -> &EngineCounters {
        &self.counters
    }

    pub fn responder(&self) -> &R {
        &self.responder
    }

    pub fn responder_mut(&mut self) -> &mut R {
        &mut self.responder
    }

    /// Resident bytes of the streaming state; bounded independently of the
    /// number of frames processed.
    pub fn footprint_bytes(&self) -> usize {
        self.detector.footprint_bytes() + self.bank.footprint_bytes()
    }

    pub fn push(&mut self, frame: &FrameFeature) -> Result<StepOutput> {
        let decision = self
            .detector
            .step(&self.cfg.detector, frame, &self.predictor)?;
        self.counters.frames += 1;
        let mut emissions = Vec::new();
        let mut event = None;
        if decision.is_boundary {
            self.counters.boundaries += 1;
            self.counters.forced_boundaries += u64::from(decision.forced);
            let segment = self.detector.take_segment();
            let token = build_with_config(self.next_index, &segment, frame.t, &self.cfg.builder)?;
            self.next_index += 1;
            if let Some(rec) =
                self.pacer
                    .on_boundary(frame.t, &token, &mut self.bank, &mut self.responder)?
            {
                self.counters.boundary_emissions += 1;
                emissions.push(rec);
            }
            self.detector.reset_segment(frame);
            event = Some(token);
        }
        let detector = &self.detector;
        let index = self.next_index;
        let latest = || running_token(detector, index, frame.t);
        if let Some(rec) = self
            .pacer
            .on_tick(frame.t, latest, &self.bank, &mut self.responder)?
        {
            debug_assert_eq!(rec.kind, EmissionKind::KeepAlive);
            self.counters.keep_alives += 1;
            emissions.push(rec);
        }
        Ok(StepOutput {
            decision,
            event,
            emissions,
        })
    }

    /// Commits the pending event and the trailing open segment to memory.
    pub fn finish(mut self) -> Result<(MemoryBank, EngineCounters)> {
        self.pacer.finish(&mut self.bank)?;
        let segment = self.detector.take_segment();
        if let Some(last) = segment.last() {
            let token = build_with_config(self.next_index, &segment, last.t, &self.cfg.builder)?;
            self.bank.update(&token)?;
        }
        Ok((self.bank, self.counters))
    }
}

/// The open segment's running representation as an event token.
fn running_token(detector: &DetectorState, index: u64, t: f64) -> EventToken {
    let mut emb = detector.running_representation().to_vec();
    if !vector::normalize_in_place(&mut emb) {
        emb.fill(0.0);
    }
    EventToken {
        index,
        emb,
        t_start: detector.segment_start().unwrap_or(t),
        t_end: t,
        t_b: t,
        frame_count: detector.segment().len() as u64,
        merge_count: 0,
    }
}

/// Checks that a stream's dimension agrees with the predictor.
pub fn check_stream_dim(predictor: &PredictorModel, d: usize) -> Result<()> {
    if predictor.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: predictor.dim(),
            actual: d,
        });
    }
    Ok(())
}
