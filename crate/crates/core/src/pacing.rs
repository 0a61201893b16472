//! Event-driven emission with hysteresis: boundaries closer than `delta_min`
//! to the previous boundary emission are coalesced into the pending event, and
//! a keep-alive is emitted after `delta_max` of silence.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_builder::EventToken;
use crate::memory::MemoryBank;
use crate::vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PacingConfig {
    /// Seconds.
    pub delta_min: f64,
    /// Seconds.
    pub delta_max: f64,
}

impl Default for PacingConfig {
    fn default() -> Self {
        Self {
            delta_min: 2.0,
            delta_max: 30.0,
        }
    }
}

impl PacingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_min >= 0.0 && self.delta_max > self.delta_min && self.delta_max.is_finite())
        {
            return Err(Error::InvalidConfig(
                "pacing: need 0 <= delta_min < delta_max < inf".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionKind {
    Boundary,
    KeepAlive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmissionRecord {
    pub t_emit: f64,
    pub kind: EmissionKind,
    pub event: EventToken,
    pub context: Vec<EventToken>,
    pub text: String,
    /// Boundaries absorbed since the previous emission.
    pub coalesced_boundaries: u64,
    /// Responder wall-clock time, when latency recording is on.
    pub latency_ms: Option<f64>,
}

/// One line of the emission log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionLogLine {
    pub t_emit: f64,
    pub kind: EmissionKind,
    pub event_index: u64,
    pub span: [f64; 2],
    pub coalesced: u64,
    pub context_indices: Vec<u64>,
    pub text: String,
    pub latency_ms: Option<f64>,
}

impl From<&EmissionRecord> for EmissionLogLine {
    fn from(r: &EmissionRecord) -> Self {
        Self {
            t_emit: r.t_emit,
            kind: r.kind,
            event_index: r.event.index,
            span: [r.event.t_start, r.event.t_end],
            coalesced: r.coalesced_boundaries,
            context_indices: r.context.iter().map(|c| c.index).collect(),
            text: r.text.clone(),
            latency_ms: r.latency_ms,
        }
    }
}

/// Text generator invoked once per emission.
pub trait Responder {
    fn respond(&mut self, event: &EventToken, context: &[EventToken]) -> String;
}

/// Deterministic template standing in for a language model.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubResponder;

pub fn stub_respond(event: &EventToken, context: &[EventToken]) -> String {
    let indices: Vec<String> = context.iter().map(|c| c.index.to_string()).collect();
    let nearest = context.first().map_or_else(
        || "none".to_string(),
        |c| format!("{:.3}", vector::cosine(&c.emb, &event.emb)),
    );
    format!(
        "event {} [t{:.1}-t{:.1}] ctx:[{}] nearest:{}",
        event.index,
        event.t_start,
        event.t_end,
        indices.join(","),
        nearest
    )
}

impl Responder for StubResponder {
    fn respond(&mut self, event: &EventToken, context: &[EventToken]) -> String {
        stub_respond(event, context)
    }
}

#[derive(Debug, Clone)]
pub struct Pacer {
    cfg: PacingConfig,
    retrieve_k: usize,
    record_latency: bool,
    clock_start: Option<f64>,
    last_emit: Option<f64>,
    last_boundary_emit: Option<f64>,
    pending: Option<EventToken>,
    coalesced: u64,
}

impl Pacer {
    pub fn new(cfg: &PacingConfig, retrieve_k: usize, record_latency: bool) -> Self {
        Self {
            cfg: cfg.clone(),
            retrieve_k,
            record_latency,
            clock_start: None,
            last_emit: None,
            last_boundary_emit: None,
            pending: None,
            coalesced: 0,
        }
    }

    /// The most recently emitted event, including any coalesced boundaries.
    pub fn pending(&self) -> Option<&EventToken> {
        self.pending.as_ref()
    }

    pub fn last_emit(&self) -> Option<f64> {
        self.last_emit
    }

    fn emit(
        &mut self,
        t: f64,
        kind: EmissionKind,
        event: EventToken,
        bank: &MemoryBank,
        responder: &mut dyn Responder,
    ) -> Result<EmissionRecord> {
        let context: Vec<EventToken> = bank
            .retrieve(&event.emb, self.retrieve_k)?
            .into_iter()
            .cloned()
            .collect();
        let started = self.record_latency.then(Instant::now);
        let text = responder.respond(&event, &context);
        let latency_ms = started.map(|s| s.elapsed().as_secs_f64() * 1e3);
        let record = EmissionRecord {
            t_emit: t,
            kind,
            event,
            context,
            text,
            coalesced_boundaries: self.coalesced,
            latency_ms,
        };
        self.coalesced = 0;
        self.last_emit = Some(t);
        Ok(record)
    }

    pub fn on_boundary(
        &mut self,
        t: f64,
        event: &EventToken,
        bank: &mut MemoryBank,
        responder: &mut dyn Responder,
    ) -> Result<Option<EmissionRecord>> {
        self.clock_start.get_or_insert(t);
        if let (Some(last), Some(pending)) = (self.last_boundary_emit, self.pending.as_mut()) {
            if t - last < self.cfg.delta_min {
                pending.absorb(event);
                self.coalesced += 1;
                return Ok(None);
            }
        }
        if let Some(done) = self.pending.take() {
            bank.update(&done)?;
        }
        let record = self.emit(t, EmissionKind::Boundary, event.clone(), bank, responder)?;
        self.last_boundary_emit = Some(t);
        self.pending = Some(event.clone());
        Ok(Some(record))
    }

    /// Emits a keep-alive built by `latest` once `delta_max` has passed since
    /// the last emission (or since the first tick).
    pub fn on_tick<F>(
        &mut self,
        t: f64,
        latest: F,
        bank: &MemoryBank,
        responder: &mut dyn Responder,
    ) -> Result<Option<EmissionRecord>>
    where
        F: FnOnce() -> EventToken,
    {
        let origin = *self.clock_start.get_or_insert(t);
        let reference = self.last_emit.unwrap_or(origin);
        if t - reference >= self.cfg.delta_max {
            return self
                .emit(t, EmissionKind::KeepAlive, latest(), bank, responder)
                .map(Some);
        }
        Ok(None)
    }

    /// Commits the pending event to memory.
    pub fn finish(&mut self, bank: &mut MemoryBank) -> Result<()> {
        if let Some(done) = self.pending.take() {
            bank.update(&done)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::MemoryConfig;

    fn token(index: u64, t: f64, emb: &[f64]) -> EventToken {
        EventToken {
            index,
            emb: emb.to_vec(),
            t_start: t - 1.0,
            t_end: t,
            t_b: t,
            frame_count: 2,
            merge_count: 0,
        }
    }

    struct Counting(usize);

    impl Responder for Counting {
        fn respond(&mut self, event: &EventToken, context: &[EventToken]) -> String {
            self.0 += 1;
            stub_respond(event, context)
        }
    }

    #[test]
    fn stub_template() {
        let e = EventToken {
            index: 3,
            emb: vec![1.0, 0.0],
            t_start: 0.0,
            t_end: 4.5,
            t_b: 4.5,
            frame_count: 10,
            merge_count: 0,
        };
        assert_eq!(
            stub_respond(&e, &[]),
            "event 3 [t0.0-t4.5] ctx:[] nearest:none"
        );
        assert_eq!(stub_respond(&e, &[]), stub_respond(&e, &[]));
        let ctx = [token(1, 1.0, &[1.0, 0.0]), token(2, 2.0, &[0.0, 1.0])];
        let text = stub_respond(&e, &ctx);
        assert_eq!(text, "event 3 [t0.0-t4.5] ctx:[1,2] nearest:1.000");
    }

    #[test]
    fn first_boundary_emits_and_close_ones_coalesce() {
        let mut bank = MemoryBank::new(&MemoryConfig::default());
        let mut pacer = Pacer::new(&PacingConfig::default(), 4, false);
        let mut r = Counting(0);
        let first = pacer
            .on_boundary(10.0, &token(0, 10.0, &[1.0, 0.0]), &mut bank, &mut r)
            .unwrap();
        assert!(first.is_some());
        assert!(pacer
            .on_boundary(11.0, &token(1, 11.0, &[0.0, 1.0]), &mut bank, &mut r)
            .unwrap()
            .is_none());
        assert_eq!(pacer.pending().unwrap().frame_count, 4);
        let next = pacer
            .on_boundary(13.0, &token(2, 13.0, &[0.6, 0.8]), &mut bank, &mut r)
            .unwrap()
            .unwrap();
        assert_eq!(next.coalesced_boundaries, 1);
        assert_eq!(r.0, 2);
        // the coalesced pending event was committed before retrieval
        assert_eq!(bank.len(), 1);
        assert_eq!(bank.slots()[0].frame_count, 4);
        assert_eq!(next.context.len(), 1);
    }

    #[test]
    fn spaced_boundaries_all_emit() {
        let mut bank = MemoryBank::new(&MemoryConfig::default());
        let mut pacer = Pacer::new(&PacingConfig::default(), 4, false);
        let mut r = StubResponder;
        let emitted = [0.0, 3.0, 6.0]
            .iter()
            .enumerate()
            .filter(|(i, &t)| {
                pacer
                    .on_boundary(
                        t,
                        &token(*i as u64, t, &[1.0, *i as f64]),
                        &mut bank,
                        &mut r,
                    )
                    .unwrap()
                    .is_some()
            })
            .count();
        assert_eq!(emitted, 3);
    }

    #[test]
    fn keep_alive_strict_threshold() {
        let bank = MemoryBank::new(&MemoryConfig::default());
        let cfg = PacingConfig {
            delta_min: 2.0,
            delta_max: 30.0,
        };
        let mut pacer = Pacer::new(&cfg, 4, false);
        let mut r = StubResponder;
        let latest = || token(0, 0.0, &[1.0]);
        assert!(pacer.on_tick(0.0, latest, &bank, &mut r).unwrap().is_none());
        assert!(pacer
            .on_tick(30.0 - 1e-9, latest, &bank, &mut r)
            .unwrap()
            .is_none());
        let ka = pacer.on_tick(30.0, latest, &bank, &mut r).unwrap().unwrap();
        assert_eq!(ka.kind, EmissionKind::KeepAlive);
        assert!(pacer
            .on_tick(31.0, latest, &bank, &mut r)
            .unwrap()
            .is_none());
    }

    #[test]
    fn keep_alive_then_boundary_both_emit() {
        let mut bank = MemoryBank::new(&MemoryConfig::default());
        let mut pacer = Pacer::new(&PacingConfig::default(), 4, false);
        let mut r = Counting(0);
        let latest = || token(0, 0.0, &[1.0, 0.0]);
        pacer.on_tick(0.0, latest, &bank, &mut r).unwrap();
        assert!(pacer
            .on_tick(30.0, latest, &bank, &mut r)
            .unwrap()
            .is_some());
        let b = pacer
            .on_boundary(32.5, &token(1, 32.5, &[0.0, 1.0]), &mut bank, &mut r)
            .unwrap();
        assert!(b.is_some());
        assert_eq!(r.0, 2);
        // keep-alives never enter memory
        assert!(bank.is_empty());
    }

    #[test]
    fn latency_recorded_only_on_request() {
        let mut bank = MemoryBank::new(&MemoryConfig::default());
        let mut r = StubResponder;
        let mut quiet = Pacer::new(&PacingConfig::default(), 4, false);
        let rec = quiet
            .on_boundary(1.0, &token(0, 1.0, &[1.0]), &mut bank, &mut r)
            .unwrap()
            .unwrap();
        assert_eq!(rec.latency_ms, None);
        let mut timed = Pacer::new(&PacingConfig::default(), 4, true);
        let rec = timed
            .on_boundary(1.0, &token(0, 1.0, &[1.0]), &mut bank, &mut r)
            .unwrap()
            .unwrap();
        assert!(rec.latency_ms.unwrap() >= 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(PacingConfig::default().validate().is_ok());
        assert!(PacingConfig {
            delta_min: 5.0,
            delta_max: 5.0
        }
        .validate()
        .is_err());
        assert!(PacingConfig {
            delta_min: -1.0,
            delta_max: 5.0
        }
        .validate()
        .is_err());
    }
}
