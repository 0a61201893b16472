//! Piecewise-constant synthetic streams with known boundaries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_stream::FrameFeature;
use crate::vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    /// Seconds.
    pub duration: f64,
    /// Seeds the segment's mean direction.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum MotionProfile {
    /// Triangular spikes of half-width `width` frames at each boundary, on top
    /// of `baseline + jitter * |N(0,1)|`.
    Spikes {
        height: f64,
        width: usize,
        baseline: f64,
        jitter: f64,
    },
    Uniform {
        level: f64,
    },
    Custom {
        series: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub d: usize,
    pub segments: Vec<SegmentSpec>,
    pub noise_sigma: f64,
    pub fps: f64,
    pub motion: MotionProfile,
    /// Seconds by which motion spikes precede the semantic change.
    #[serde(default)]
    pub motion_lead: f64,
    /// Redraw a segment mean until its cosine with every earlier mean is below this.
    #[serde(default)]
    pub max_mean_cos: Option<f64>,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.d == 0 {
            return bad("d must be >= 1".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad("fps must be > 0".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be >= 0".into());
        }
        if !self.motion_lead.is_finite() {
            return bad("motion_lead must be finite".into());
        }
        for (i, s) in self.segments.iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return bad(format!("segment {i}: duration must be > 0"));
            }
            if self.frames_in(s) == 0 {
                return bad(format!("segment {i}: shorter than one frame"));
            }
        }
        match &self.motion {
            MotionProfile::Spikes {
                height,
                baseline,
                jitter,
                ..
            } if [*height, *baseline, *jitter]
                .iter()
                .any(|v| !(*v >= 0.0 && v.is_finite())) =>
            {
                bad("spike parameters must be finite and >= 0".into())
            }
            MotionProfile::Uniform { level } if !(*level >= 0.0 && level.is_finite()) => {
                bad("uniform motion level must be finite and >= 0".into())
            }
            MotionProfile::Custom { series } if series.len() != self.total_frames() => {
                bad(format!(
                    "custom motion has {} values for {} frames",
                    series.len(),
                    self.total_frames()
                ))
            }
            MotionProfile::Custom { series }
                if series.iter().any(|v| !(*v >= 0.0 && v.is_finite())) =>
            {
                bad("custom motion values must be finite and >= 0".into())
            }
            _ => Ok(()),
        }
    }

    fn frames_in(&self, s: &SegmentSpec) -> usize {
        (s.duration * self.fps).round() as usize
    }

    pub fn total_frames(&self) -> usize {
        self.segments.iter().map(|s| self.frames_in(s)).sum()
    }

    /// Frame indices where segments 1.. begin.
    pub fn boundary_frames(&self) -> Vec<usize> {
        let mut at = 0;
        let mut out = Vec::with_capacity(self.segments.len().saturating_sub(1));
        for (i, s) in self.segments.iter().enumerate() {
            if i > 0 {
                out.push(at);
            }
            at += self.frames_in(s);
        }
        out
    }

    pub fn frame_time(&self, index: usize) -> f64 {
        index as f64 / self.fps
    }

    pub fn boundary_times(&self) -> Vec<f64> {
        self.boundary_frames()
            .into_iter()
            .map(|i| self.frame_time(i))
            .collect()
    }

    fn segment_means(&self) -> Result<Vec<Vec<f64>>> {
        let mut means: Vec<Vec<f64>> = Vec::with_capacity(self.segments.len());
        for (i, s) in self.segments.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            let mut tries = 0;
            let mean = loop {
                let mut v: Vec<f64> = (0..self.d).map(|_| rng.sample(StandardNormal)).collect();
                if !vector::normalize_in_place(&mut v) {
                    continue;
                }
                let ok = self
                    .max_mean_cos
                    .is_none_or(|bound| means.iter().all(|m| vector::dot(m, &v) < bound));
                if ok {
                    break v;
                }
                tries += 1;
                if tries > 10_000 {
                    return Err(Error::InvalidSpec(format!(
                        "segment {i}: cannot draw a mean below the cosine bound"
                    )));
                }
            };
            means.push(mean);
        }
        Ok(means)
    }
}

/// A generated stream and the times of its true boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub frames: Vec<FrameFeature>,
    pub boundaries: Vec<f64>,
}

/// Lazily generated frames; memory use is independent of stream length
/// beyond the per-segment means.
pub struct SynthIter {
    spec: SynthSpec,
    means: Vec<Vec<f64>>,
    segment_of_frame: Vec<(usize, usize)>,
    spike_peaks: Vec<i64>,
    noise: ChaCha8Rng,
    motion_rng: ChaCha8Rng,
    next: usize,
    total: usize,
    segment: usize,
}

impl SynthIter {
    pub fn new(spec: SynthSpec) -> Result<Self> {
        spec.validate()?;
        let means = spec.segment_means()?;
        let mut segment_of_frame = Vec::with_capacity(spec.segments.len());
        let mut at = 0;
        for s in &spec.segments {
            let n = spec.frames_in(s);
            segment_of_frame.push((at, at + n));
            at += n;
        }
        let lead = (spec.motion_lead * spec.fps).round() as i64;
        let spike_peaks = spec
            .boundary_frames()
            .into_iter()
            .map(|b| b as i64 - lead)
            .collect();
        Ok(Self {
            noise: ChaCha8Rng::seed_from_u64(spec.seed),
            motion_rng: ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(0x9e37_79b9_7f4a_7c15)),
            total: at,
            means,
            segment_of_frame,
            spike_peaks,
            spec,
            next: 0,
            segment: 0,
        })
    }

    pub fn total_frames(&self) -> usize {
        self.total
    }

    fn motion_at(&mut self, i: usize) -> f64 {
        match &self.spec.motion {
            MotionProfile::Uniform { level } => *level,
            MotionProfile::Custom { series } => series[i],
            MotionProfile::Spikes {
                height,
                width,
                baseline,
                jitter,
            } => {
                let jit: f64 = self.motion_rng.sample(StandardNormal);
                let base = baseline + jitter * jit.abs();
                let w = *width as i64;
                let i = i as i64;
                // peaks are sorted; only the closest one can reach this frame
                let pos = self.spike_peaks.partition_point(|&p| p < i);
                let spike = [pos.checked_sub(1), Some(pos)]
                    .into_iter()
                    .flatten()
                    .filter_map(|k| self.spike_peaks.get(k))
                    .map(|&p| (i - p).abs())
                    .filter(|&dist| dist <= w)
                    .map(|dist| height * (1.0 - dist as f64 / (w + 1) as f64))
                    .fold(0.0, f64::max);
                base + spike
            }
        }
    }
}

impl Iterator for SynthIter {
    type Item = FrameFeature;

    fn next(&mut self) -> Option<FrameFeature> {
        if self.next >= self.total {
            return None;
        }
        let i = self.next;
        while self.segment_of_frame[self.segment].1 <= i {
            self.segment += 1;
        }
        let sigma = self.spec.noise_sigma;
        let mut emb = self.means[self.segment].clone();
        if sigma > 0.0 {
            for x in &mut emb {
                let z: f64 = self.noise.sample(StandardNormal);
                *x += sigma * z;
            }
        }
        if !vector::normalize_in_place(&mut emb) {
            emb.clone_from(&self.means[self.segment]);
        }
        let motion = self.motion_at(i);
        self.next += 1;
        Some(FrameFeature {
            t: self.spec.frame_time(i),
            emb,
            motion,
        })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = self.total - self.next;
        (left, Some(left))
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    let boundaries = spec.boundary_times();
    let frames = SynthIter::new(spec.clone())?.collect();
    Ok(SynthOutput { frames, boundaries })
}

/// Parameters of the standard boundary-recovery suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteParams {
    pub d: usize,
    pub segments: usize,
    pub min_duration: f64,
    pub max_duration: f64,
    pub noise_sigma: f64,
    pub fps: f64,
    pub spike_height: f64,
    pub spike_width: usize,
    pub motion_baseline: f64,
    pub motion_jitter: f64,
    pub motion_lead: f64,
    pub max_mean_cos: Option<f64>,
}

impl Default for SuiteParams {
    fn default() -> Self {
        Self {
            d: 128,
            segments: 20,
            min_duration: 10.0,
            max_duration: 60.0,
            noise_sigma: 0.05,
            fps: 2.0,
            spike_height: 1.0,
            spike_width: 1,
            motion_baseline: 0.1,
            motion_jitter: 0.05,
            motion_lead: 0.0,
            max_mean_cos: Some(0.3),
        }
    }
}

impl SuiteParams {
    /// Draws segment durations (whole frames) and mean seeds from `seed`.
    pub fn spec(&self, seed: u64) -> SynthSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5eed_5eed_5eed);
        let segments = (0..self.segments)
            .map(|_| {
                let secs = rng.random_range(self.min_duration..=self.max_duration);
                SegmentSpec {
                    duration: (secs * self.fps).round() / self.fps,
                    seed: rng.random(),
                }
            })
            .collect();
        SynthSpec {
            d: self.d,
            segments,
            noise_sigma: self.noise_sigma,
            fps: self.fps,
            motion: MotionProfile::Spikes {
                height: self.spike_height,
                width: self.spike_width,
                baseline: self.motion_baseline,
                jitter: self.motion_jitter,
            },
            motion_lead: self.motion_lead,
            max_mean_cos: self.max_mean_cos,
            seed,
        }
    }
}

/// The standard suite instance for `seed`.
pub fn standard_suite(seed: u64) -> SynthSpec {
    SuiteParams::default().spec(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_segment(noise: f64) -> SynthSpec {
        SynthSpec {
            d: 8,
            segments: vec![
                SegmentSpec {
                    duration: 5.0,
                    seed: 1,
                },
                SegmentSpec {
                    duration: 5.0,
                    seed: 2,
                },
            ],
            noise_sigma: noise,
            fps: 2.0,
            motion: MotionProfile::Uniform { level: 0.2 },
            motion_lead: 0.0,
            max_mean_cos: None,
            seed: 9,
        }
    }

    #[test]
    fn noiseless_segments_are_constant() {
        let out = generate(&two_segment(0.0)).unwrap();
        assert_eq!(out.frames.len(), 20);
        assert_eq!(out.boundaries, vec![5.0]);
        assert!(out.frames[..10].iter().all(|f| f.emb == out.frames[0].emb));
        assert!(out.frames[10..].iter().all(|f| f.emb == out.frames[10].emb));
        assert_ne!(out.frames[0].emb, out.frames[10].emb);
        assert!(out.frames.iter().all(|f| f.motion == 0.2));
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate(&standard_suite(4)).unwrap();
        let b = generate(&standard_suite(4)).unwrap();
        assert_eq!(a, b);
        let c = generate(&standard_suite(5)).unwrap();
        assert_ne!(a.frames[0].emb, c.frames[0].emb);
    }

    #[test]
    fn spike_leads_boundary() {
        let mut spec = two_segment(0.0);
        spec.segments.push(SegmentSpec {
            duration: 7.0,
            seed: 3,
        });
        spec.motion = MotionProfile::Spikes {
            height: 1.0,
            width: 1,
            baseline: 0.0,
            jitter: 0.0,
        };
        spec.motion_lead = 2.0;
        let out = generate(&spec).unwrap();
        let motion: Vec<f64> = out.frames.iter().map(|f| f.motion).collect();
        // boundaries at frames 10 and 20; peaks 4 frames earlier
        assert_eq!(motion[6], 1.0);
        assert_eq!(motion[16], 1.0);
        assert_eq!(motion[5], 0.5);
        assert_eq!(motion[7], 0.5);
        assert_eq!(motion[10], 0.0);
        assert_eq!(motion.iter().filter(|&&m| m == 1.0).count(), 2);
    }

    #[test]
    fn standard_suite_shape() {
        let spec = standard_suite(1);
        assert_eq!(spec.segments.len(), 20);
        assert!(spec
            .segments
            .iter()
            .all(|s| (10.0..=60.0).contains(&s.duration) && (s.duration * 2.0).fract() == 0.0));
        let means = spec.segment_means().unwrap();
        for i in 0..means.len() {
            for j in 0..i {
                assert!(vector::dot(&means[i], &means[j]) < 0.3);
            }
        }
    }

    #[test]
    fn invalid_specs() {
        let mut s = two_segment(0.0);
        s.fps = 0.0;
        assert!(matches!(generate(&s), Err(Error::InvalidSpec(_))));
        let mut s = two_segment(0.0);
        s.segments[0].duration = -1.0;
        assert!(generate(&s).is_err());
        let mut s = two_segment(0.0);
        s.motion = MotionProfile::Custom {
            series: vec![0.0; 3],
        };
        assert!(generate(&s).is_err());
        let mut s = two_segment(0.0);
        s.noise_sigma = -0.1;
        assert!(generate(&s).is_err());
    }
}
