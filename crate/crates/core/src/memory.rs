//! Event-level memory bank with merge-or-append consolidation and top-k
//! cosine retrieval.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event_builder::EventToken;
use crate::vector;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"EVMB";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MemoryConfig {
    /// Merge strength.
    pub lambda: f64,
    /// Redundancy threshold on cosine similarity with the last slot.
    pub gamma_mem: f64,
    pub max_slots: Option<usize>,
    pub retrieve_k: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            lambda: 0.3,
            gamma_mem: 0.95,
            max_slots: None,
            retrieve_k: 4,
        }
    }
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::InvalidConfig(
                "memory: lambda must lie in (0, 1)".into(),
            ));
        }
        if !(self.gamma_mem > -1.0 && self.gamma_mem <= 1.0) {
            return Err(Error::InvalidConfig(
                "memory: gamma_mem must lie in (-1, 1]".into(),
            ));
        }
        if self.max_slots == Some(0) {
            return Err(Error::InvalidConfig(
                "memory: max_slots must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Merged,
    Appended,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    slots: Vec<EventToken>,
    lambda: f64,
    gamma_mem: f64,
    max_slots: Option<usize>,
    total_events_seen: u64,
    dim: Option<usize>,
}

impl MemoryBank {
    pub fn new(cfg: &MemoryConfig) -> Self {
        Self {
            slots: Vec::new(),
            lambda: cfg.lambda,
            gamma_mem: cfg.gamma_mem,
            max_slots: cfg.max_slots,
            total_events_seen: 0,
            dim: None,
        }
    }

    pub fn slots(&self) -> &[EventToken] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn total_events_seen(&self) -> u64 {
        self.total_events_seen
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn gamma_mem(&self) -> f64 {
        self.gamma_mem
    }

    pub fn max_slots(&self) -> Option<usize> {
        self.max_slots
    }

    pub fn footprint_bytes(&self) -> usize {
        self.slots.capacity() * std::mem::size_of::<EventToken>()
            + self
                .slots
                .iter()
                .map(|s| s.emb.capacity() * 8)
                .sum::<usize>()
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        match self.dim {
            Some(d) if d != v.len() => Err(Error::DimensionMismatch {
                expected: d,
                actual: v.len(),
            }),
            _ => Ok(()),
        }
    }

    pub fn update(&mut self, event: &EventToken) -> Result<UpdateOutcome> {
        self.check_dim(&event.emb)?;
        self.dim = Some(event.emb.len());
        self.total_events_seen += 1;
        if let Some(last) = self.slots.last_mut() {
            if vector::cosine(&event.emb, &last.emb) > self.gamma_mem {
                let lambda = self.lambda;
                for (x, &y) in last.emb.iter_mut().zip(&event.emb) {
                    *x = (1.0 - lambda) * *x + lambda * y;
                }
                if !vector::normalize_in_place(&mut last.emb) {
                    return Err(Error::Invariant("merged slot has zero norm".into()));
                }
                last.t_end = last.t_end.max(event.t_end);
                last.t_b = event.t_b;
                last.frame_count += event.frame_count;
                last.merge_count += 1 + event.merge_count;
                return Ok(UpdateOutcome::Merged);
            }
        }
        self.slots.push(event.clone());
        if let Some(cap) = self.max_slots {
            while self.slots.len() > cap {
                self.evict_one();
            }
        }
        Ok(UpdateOutcome::Appended)
    }

    /// Folds the most similar adjacent pair of slots into one.
    fn evict_one(&mut self) {
        if self.slots.len() < 2 {
            return;
        }
        let mut best = 0;
        let mut best_cos = f64::NEG_INFINITY;
        for i in 0..self.slots.len() - 1 {
            let c = vector::cosine(&self.slots[i].emb, &self.slots[i + 1].emb);
            if c > best_cos {
                best_cos = c;
                best = i;
            }
        }
        let newer = self.slots.remove(best + 1);
        let older = &mut self.slots[best];
        let merges = older.merge_count + newer.merge_count + 1;
        older.absorb(&newer);
        older.merge_count = merges;
    }

    /// Top-`k` slots by cosine similarity with `query`, newer slots first on ties.
    pub fn retrieve(&self, query: &[f64], k: usize) -> Result<Vec<&EventToken>> {
        self.check_dim(query)?;
        if k == 0 {
            return Ok(Vec::new());
        }
        let mut scored: Vec<(f64, usize)> = self
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| (vector::cosine(&s.emb, query), i))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(_, i)| &self.slots[i])
            .collect())
    }

    pub fn snapshot<W: Write>(&self, mut sink: W) -> Result<()> {
        sink.write_all(SNAPSHOT_MAGIC)?;
        sink.write_u32::<LittleEndian>(SNAPSHOT_VERSION)?;
        sink.write_f64::<LittleEndian>(self.lambda)?;
        sink.write_f64::<LittleEndian>(self.gamma_mem)?;
        sink.write_u64::<LittleEndian>(self.max_slots.map_or(0, |n| n as u64))?;
        sink.write_u64::<LittleEndian>(self.total_events_seen)?;
        sink.write_u32::<LittleEndian>(self.dim.unwrap_or(0) as u32)?;
        sink.write_u32::<LittleEndian>(self.slots.len() as u32)?;
        for s in &self.slots {
            sink.write_u64::<LittleEndian>(s.index)?;
            sink.write_f64::<LittleEndian>(s.t_start)?;
            sink.write_f64::<LittleEndian>(s.t_end)?;
            sink.write_f64::<LittleEndian>(s.t_b)?;
            sink.write_u64::<LittleEndian>(s.frame_count)?;
            sink.write_u64::<LittleEndian>(s.merge_count)?;
            for &x in &s.emb {
                sink.write_f64::<LittleEndian>(x)?;
            }
        }
        sink.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.snapshot(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn restore<R: Read>(mut source: R) -> Result<Self> {
        fn c<T>(r: std::io::Result<T>) -> Result<T> {
            r.map_err(|_| Error::CorruptSnapshot("truncated".into()))
        }
        let mut magic = [0u8; 4];
        c(source.read_exact(&mut magic))?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::CorruptSnapshot("bad magic".into()));
        }
        let version = c(source.read_u32::<LittleEndian>())?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::CorruptSnapshot(format!(
                "unsupported version {version}"
            )));
        }
        let lambda = c(source.read_f64::<LittleEndian>())?;
        let gamma_mem = c(source.read_f64::<LittleEndian>())?;
        let max_slots = match c(source.read_u64::<LittleEndian>())? {
            0 => None,
            n => Some(n as usize),
        };
        let total_events_seen = c(source.read_u64::<LittleEndian>())?;
        let d = c(source.read_u32::<LittleEndian>())? as usize;
        let count = c(source.read_u32::<LittleEndian>())? as usize;
        let cfg = MemoryConfig {
            lambda,
            gamma_mem,
            max_slots,
            retrieve_k: 0,
        };
        cfg.validate()
            .map_err(|e| Error::CorruptSnapshot(e.to_string()))?;
        if count > 0 && d == 0 {
            return Err(Error::CorruptSnapshot("slots without a dimension".into()));
        }
        if count as u64 > total_events_seen || max_slots.is_some_and(|m| count > m) {
            return Err(Error::CorruptSnapshot(
                "slot count exceeds its bounds".into(),
            ));
        }
        let mut slots = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let index = c(source.read_u64::<LittleEndian>())?;
            let t_start = c(source.read_f64::<LittleEndian>())?;
            let t_end = c(source.read_f64::<LittleEndian>())?;
            let t_b = c(source.read_f64::<LittleEndian>())?;
            let frame_count = c(source.read_u64::<LittleEndian>())?;
            let merge_count = c(source.read_u64::<LittleEndian>())?;
            let mut emb = vec![0.0; d];
            for x in &mut emb {
                *x = c(source.read_f64::<LittleEndian>())?;
            }
            if (vector::norm(&emb) - 1.0).abs() > 1e-6 {
                return Err(Error::CorruptSnapshot(
                    "slot embedding is not unit-norm".into(),
                ));
            }
            slots.push(EventToken {
                index,
                emb,
                t_start,
                t_end,
                t_b,
                frame_count,
                merge_count,
            });
        }
        let mut rest = [0u8; 1];
        if source.read(&mut rest)? != 0 {
            return Err(Error::CorruptSnapshot("trailing bytes".into()));
        }
        Ok(Self {
            slots,
            lambda,
            gamma_mem,
            max_slots,
            total_events_seen,
            dim: (d > 0).then_some(d),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn token(index: u64, emb: &[f64]) -> EventToken {
        let mut emb = emb.to_vec();
        vector::normalize_in_place(&mut emb);
        EventToken {
            index,
            emb,
            t_start: index as f64,
            t_end: index as f64 + 1.0,
            t_b: index as f64 + 1.0,
            frame_count: 2,
            merge_count: 0,
        }
    }

    #[test]
    fn empty_bank_appends() {
        let mut bank = MemoryBank::new(&MemoryConfig::default());
        assert_eq!(
            bank.update(&token(0, &[1.0, 2.0])).unwrap(),
            UpdateOutcome::Appended
        );
        assert_eq!(bank.len(), 1);
        assert_eq!(bank.total_events_seen(), 1);
    }

    #[test]
    fn identical_event_merges_to_fixed_point() {
        let mut bank = MemoryBank::new(&MemoryConfig::default());
        let e = token(0, &[0.3, -0.2, 0.9, 0.1]);
        bank.update(&e).unwrap();
        assert_eq!(bank.update(&e).unwrap(), UpdateOutcome::Merged);
        assert_eq!(bank.update(&e).unwrap(), UpdateOutcome::Merged);
        let slot = &bank.slots()[0];
        for (a, b) in slot.emb.iter().zip(&e.emb) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert_eq!(slot.merge_count, 2);
        assert_eq!(bank.len(), 1);
        assert_eq!(bank.total_events_seen(), 3);
    }

    #[test]
    fn orthogonal_event_appends() {
        let mut bank = MemoryBank::new(&MemoryConfig::default());
        bank.update(&token(0, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_eq!(
            bank.update(&token(1, &[0.0, 1.0, 0.0, 0.0])).unwrap(),
            UpdateOutcome::Appended
        );
    }

    #[test]
    fn merge_extends_span_only_forward() {
        let mut bank = MemoryBank::new(&MemoryConfig::default());
        bank.update(&token(0, &[1.0, 0.0])).unwrap();
        bank.update(&token(5, &[1.0, 0.01])).unwrap();
        let s = &bank.slots()[0];
        assert_eq!((s.t_start, s.t_end), (0.0, 6.0));
        assert!((vector::norm(&s.emb) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn only_last_slot_is_compared() {
        let mut bank = MemoryBank::new(&MemoryConfig::default());
        bank.update(&token(0, &[1.0, 0.0])).unwrap();
        bank.update(&token(1, &[0.0, 1.0])).unwrap();
        assert_eq!(
            bank.update(&token(2, &[1.0, 0.0])).unwrap(),
            UpdateOutcome::Appended
        );
        assert_eq!(bank.len(), 3);
    }

    #[test]
    fn capacity_merges_most_similar_neighbours() {
        let cfg = MemoryConfig {
            max_slots: Some(2),
            ..MemoryConfig::default()
        };
        let mut bank = MemoryBank::new(&cfg);
        bank.update(&token(0, &[1.0, 0.0, 0.0])).unwrap();
        bank.update(&token(1, &[0.0, 1.0, 0.0])).unwrap();
        bank.update(&token(2, &[0.0, 1.0, 0.5])).unwrap();
        assert_eq!(bank.len(), 2);
        assert_eq!(bank.slots()[0].index, 0);
        assert_eq!(bank.slots()[1].index, 1);
        assert_eq!(bank.slots()[1].frame_count, 4);
        assert_eq!(bank.slots()[1].merge_count, 1);
    }

    #[test]
    fn retrieve_orders_by_similarity_then_recency() {
        let mut bank = MemoryBank::new(&MemoryConfig::default());
        bank.update(&token(0, &[1.0, 0.0, 0.0])).unwrap();
        bank.update(&token(1, &[0.0, 1.0, 0.0])).unwrap();
        bank.update(&token(2, &[1.0, 0.0, 0.0])).unwrap();
        bank.update(&token(3, &[0.0, 0.0, 1.0])).unwrap();
        assert!(bank.retrieve(&[1.0, 0.0, 0.0], 0).unwrap().is_empty());
        let got: Vec<u64> = bank
            .retrieve(&[1.0, 0.0, 0.0], 3)
            .unwrap()
            .iter()
            .map(|s| s.index)
            .collect();
        assert_eq!(got[..2], [2, 0]);
        assert_eq!(bank.retrieve(&[0.0, 1.0, 0.0], 10).unwrap().len(), 4);
        assert!(bank.retrieve(&[1.0, 0.0], 1).is_err());
    }

    #[test]
    fn single_slot_retrieved_for_any_k() {
        let mut bank = MemoryBank::new(&MemoryConfig::default());
        bank.update(&token(7, &[0.2, 0.9])).unwrap();
        for k in 1..4 {
            let got = bank.retrieve(&[1.0, 0.0], k).unwrap();
            assert_eq!(got.len(), 1);
            assert_eq!(got[0].index, 7);
        }
    }

    #[test]
    fn dimension_mismatch_on_update() {
        let mut bank = MemoryBank::new(&MemoryConfig::default());
        bank.update(&token(0, &[1.0, 0.0])).unwrap();
        assert!(matches!(
            bank.update(&token(1, &[1.0, 0.0, 0.0])),
            Err(Error::DimensionMismatch {
                expected: 2,
                actual: 3
            })
        ));
    }

    #[test]
    fn snapshot_round_trip_and_corruption() {
        let empty = MemoryBank::new(&MemoryConfig::default());
        assert_eq!(
            MemoryBank::restore(empty.to_bytes().as_slice()).unwrap(),
            empty
        );

        let mut bank = MemoryBank::new(&MemoryConfig {
            max_slots: Some(5),
            ..MemoryConfig::default()
        });
        for i in 0..10 {
            bank.update(&token(i, &[(i as f64).sin(), (i as f64).cos(), 0.3]))
                .unwrap();
        }
        let bytes = bank.to_bytes();
        assert_eq!(MemoryBank::restore(bytes.as_slice()).unwrap(), bank);
        for cut in [0, 3, 20, bytes.len() - 1] {
            assert!(matches!(
                MemoryBank::restore(&bytes[..cut]),
                Err(Error::CorruptSnapshot(_))
            ));
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(MemoryBank::restore(extra.as_slice()).is_err());
    }
}
