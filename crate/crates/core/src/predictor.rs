//! Causal next-embedding predictor: a three-layer MLP trained with a
//! self-supervised squared-error loss, plus an identity baseline.

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature_stream::FrameFeature;
use crate::vector;

pub const MODEL_MAGIC: &[u8; 4] = b"EVPR";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Softplus,
    Silu,
    Gelu,
}

impl Activation {
    pub fn id(self) -> u32 {
        match self {
            Activation::Softplus => 0,
            Activation::Silu => 1,
            Activation::Gelu => 2,
        }
    }

    pub fn from_id(id: u32) -> Option<Self> {
        match id {
            0 => Some(Activation::Softplus),
            1 => Some(Activation::Silu),
            2 => Some(Activation::Gelu),
            _ => None,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Activation::Silu => x * logistic(x),
            Activation::Gelu => {
                let u = GELU_K * (x + 0.044715 * x * x * x);
                0.5 * x * (1.0 + u.tanh())
            }
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Softplus => logistic(x),
            Activation::Silu => {
                let s = logistic(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Gelu => {
                let u = GELU_K * (x + 0.044715 * x * x * x);
                let th = u.tanh();
                0.5 * (1.0 + th)
                    + 0.5 * x * (1.0 - th * th) * GELU_K * (1.0 + 3.0 * 0.044715 * x * x)
            }
        }
    }
}

const GELU_K: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// Numerically stable logistic function.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Flat parameter vector for `d -> h -> h -> d`.
///
/// Layout: `W1 (h x d)`, `b1 (h)`, `W2 (h x h)`, `b2 (h)`, `W3 (d x h)`, `b3 (d)`,
/// weights row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    d: usize,
    h: usize,
    activation: Activation,
    params: Vec<f64>,
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    end: usize,
}

fn offsets(d: usize, h: usize) -> Offsets {
    let w1 = 0;
    let b1 = w1 + h * d;
    let w2 = b1 + h;
    let b2 = w2 + h * h;
    let w3 = b2 + h;
    let b3 = w3 + d * h;
    Offsets {
        w1,
        b1,
        w2,
        b2,
        w3,
        b3,
        end: b3 + d,
    }
}

/// Intermediate activations kept for backpropagation.
struct Trace {
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
    y: Vec<f64>,
}

fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let cols = x.len();
    out.clear();
    out.extend(
        b.iter()
            .enumerate()
            .map(|(r, &bias)| bias + vector::dot(&w[r * cols..(r + 1) * cols], x)),
    );
}

impl Mlp {
    pub fn parameter_count(d: usize, h: usize) -> usize {
        offsets(d, h).end
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random(d: usize, h: usize, activation: Activation, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = offsets(d, h);
        let mut params = vec![0.0; o.end];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.random_range(-a..a);
            }
        };
        fill(o.w1..o.b1, d, h);
        fill(o.w2..o.b2, h, h);
        fill(o.w3..o.b3, h, d);
        Self {
            d,
            h,
            activation,
            params,
        }
    }

    pub fn from_params(
        d: usize,
        h: usize,
        activation: Activation,
        params: Vec<f64>,
    ) -> Result<Self> {
        let expected = Self::parameter_count(d, h);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                actual: params.len(),
            });
        }
        Ok(Self {
            d,
            h,
            activation,
            params,
        })
    }

    pub fn hidden(&self) -> usize {
        self.h
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn forward_trace(&self, x: &[f64]) -> Trace {
        let o = offsets(self.d, self.h);
        let p = &self.params;
        let mut z1 = Vec::with_capacity(self.h);
        affine(&p[o.w1..o.b1], &p[o.b1..o.w2], x, &mut z1);
        let a1: Vec<f64> = z1.iter().map(|&z| self.activation.apply(z)).collect();
        let mut z2 = Vec::with_capacity(self.h);
        affine(&p[o.w2..o.b2], &p[o.b2..o.w3], &a1, &mut z2);
        let a2: Vec<f64> = z2.iter().map(|&z| self.activation.apply(z)).collect();
        let mut y = Vec::with_capacity(self.d);
        affine(&p[o.w3..o.b3], &p[o.b3..o.end], &a2, &mut y);
        Trace { z1, a1, z2, a2, y }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x).y
    }

    /// Loss `||f(x) - target||^2`, accumulating its gradient into `grad`.
    fn backward(&self, x: &[f64], target: &[f64], grad: &mut [f64], scale: f64) -> f64 {
        let (d, h) = (self.d, self.h);
        let o = offsets(d, h);
        let p = &self.params;
        let tr = self.forward_trace(x);
        let dy: Vec<f64> =
            tr.y.iter()
                .zip(target)
                .map(|(y, t)| 2.0 * (y - t))
                .collect();
        let loss = vector::squared_distance(&tr.y, target);

        let mut da2 = vec![0.0; h];
        for (r, &g) in dy.iter().enumerate() {
            grad[o.b3 + r] += scale * g;
            let row = o.w3 + r * h;
            for c in 0..h {
                grad[row + c] += scale * g * tr.a2[c];
                da2[c] += p[row + c] * g;
            }
        }
        let dz2: Vec<f64> = da2
            .iter()
            .zip(&tr.z2)
            .map(|(g, &z)| g * self.activation.derivative(z))
            .collect();
        let mut da1 = vec![0.0; h];
        for (r, &g) in dz2.iter().enumerate() {
            grad[o.b2 + r] += scale * g;
            let row = o.w2 + r * h;
            for c in 0..h {
                grad[row + c] += scale * g * tr.a1[c];
                da1[c] += p[row + c] * g;
            }
        }
        for (r, (&g, &z)) in da1.iter().zip(&tr.z1).enumerate() {
            let g = g * self.activation.derivative(z);
            grad[o.b1 + r] += scale * g;
            let row = o.w1 + r * d;
            for c in 0..d {
                grad[row + c] += scale * g * x[c];
            }
        }
        loss
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredictorKind {
    Identity,
    Mlp(Mlp),
}

/// Causal predictor of `f_t` from `f_{t-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    d: usize,
    kind: PredictorKind,
    frozen: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be > 0".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

impl PredictorModel {
    pub fn identity(d: usize) -> Self {
        Self {
            d,
            kind: PredictorKind::Identity,
            frozen: true,
        }
    }

    pub fn mlp(d: usize, h: usize, activation: Activation, seed: u64) -> Self {
        Self {
            d,
            kind: PredictorKind::Mlp(Mlp::random(d, h, activation, seed)),
            frozen: false,
        }
    }

    pub fn from_mlp(net: Mlp) -> Self {
        Self {
            d: net.d,
            kind: PredictorKind::Mlp(net),
            frozen: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn kind(&self) -> &PredictorKind {
        &self.kind
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Zeroes the output layer, so every prediction becomes the zero vector.
    pub fn zero_output_layer(&mut self) -> Result<()> {
        if self.frozen {
            return Err(Error::AlreadyFrozen);
        }
        if let PredictorKind::Mlp(net) = &mut self.kind {
            let o = offsets(net.d, net.h);
            net.params[o.w3..o.end].iter_mut().for_each(|p| *p = 0.0);
        }
        Ok(())
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                actual: v.len(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, f_prev: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(f_prev)?;
        Ok(match &self.kind {
            PredictorKind::Identity => f_prev.to_vec(),
            PredictorKind::Mlp(net) => net.forward(f_prev),
        })
    }

    /// `||predict(f_prev) - f_curr||^2`.
    pub fn prediction_error(&self, f_prev: &[f64], f_curr: &[f64]) -> Result<f64> {
        self.check_dim(f_prev)?;
        self.check_dim(f_curr)?;
        Ok(match &self.kind {
            PredictorKind::Identity => vector::squared_distance(f_prev, f_curr),
            PredictorKind::Mlp(net) => vector::squared_distance(&net.forward(f_prev), f_curr),
        })
    }

    /// Mean prediction error over consecutive pairs of every stream.
    pub fn mean_loss(&self, streams: &[&[FrameFeature]]) -> Result<f64> {
        let pairs = consecutive_pairs(streams);
        if pairs.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for (a, b) in &pairs {
            total += self.prediction_error(a, b)?;
        }
        Ok(total / pairs.len() as f64)
    }

    pub fn train(&mut self, stream: &[FrameFeature], cfg: &TrainConfig) -> Result<Vec<f64>> {
        self.train_streams(&[stream], cfg)
    }

    /// Minimizes the mean next-embedding loss over all consecutive pairs.
    ///
    /// The returned trace holds `epochs + 1` entries: the full-data loss before
    /// each epoch and once more after the last one.
    pub fn train_streams(
        &mut self,
        streams: &[&[FrameFeature]],
        cfg: &TrainConfig,
    ) -> Result<Vec<f64>> {
        cfg.validate()?;
        if self.frozen {
            return Err(Error::AlreadyFrozen);
        }
        let pairs = consecutive_pairs(streams);
        if pairs.len() < cfg.batch_size {
            return Err(Error::StreamTooShort {
                needed: cfg.batch_size + 1,
                actual: pairs.len() + usize::from(!pairs.is_empty()),
            });
        }
        for (a, b) in &pairs {
            self.check_dim(a)?;
            self.check_dim(b)?;
        }
        let mut trace = Vec::with_capacity(cfg.epochs + 1);
        trace.push(self.mean_loss(streams)?);
        let net = match &mut self.kind {
            PredictorKind::Mlp(net) => net,
            PredictorKind::Identity => {
                return Err(Error::InvalidConfig(
                    "identity predictor has no parameters to train".into(),
                ))
            }
        };

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let mut opt = OptimizerState::new(cfg, net.params.len());
        let mut grad = vec![0.0; net.params.len()];
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let scale = 1.0 / batch.len() as f64;
                for &i in batch {
                    let (x, y) = pairs[i];
                    net.backward(x, y, &mut grad, scale);
                }
                opt.step(&mut net.params, &grad);
            }
            let total: f64 = pairs
                .iter()
                .map(|(a, b)| vector::squared_distance(&net.forward(a), b))
                .sum();
            trace.push(total / pairs.len() as f64);
        }
        Ok(trace)
    }

    /// Compares backpropagated gradients of the single-pair loss with central
    /// finite differences; returns the maximum relative error.
    pub fn gradient_check(&self, f_prev: &[f64], f_curr: &[f64], epsilon: f64) -> Result<f64> {
        self.check_dim(f_prev)?;
        self.check_dim(f_curr)?;
        let net = match &self.kind {
            PredictorKind::Identity => return Ok(0.0),
            PredictorKind::Mlp(net) => net,
        };
        let mut analytic = vec![0.0; net.params.len()];
        net.backward(f_prev, f_curr, &mut analytic, 1.0);

        let mut probe = net.clone();
        let mut worst: f64 = 0.0;
        for (i, &g) in analytic.iter().enumerate() {
            let orig = probe.params[i];
            probe.params[i] = orig + epsilon;
            let up = vector::squared_distance(&probe.forward(f_prev), f_curr);
            probe.params[i] = orig - epsilon;
            let down = vector::squared_distance(&probe.forward(f_prev), f_curr);
            probe.params[i] = orig;
            let fd = (up - down) / (2.0 * epsilon);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
            worst = worst.max(rel);
        }
        Ok(worst)
    }

    pub fn save<W: Write>(&self, mut sink: W) -> Result<()> {
        sink.write_all(MODEL_MAGIC)?;
        sink.write_u32::<LittleEndian>(MODEL_VERSION)?;
        sink.write_u32::<LittleEndian>(self.d as u32)?;
        match &self.kind {
            PredictorKind::Identity => {
                sink.write_u32::<LittleEndian>(0)?;
                sink.write_u32::<LittleEndian>(0)?;
            }
            PredictorKind::Mlp(net) => {
                sink.write_u32::<LittleEndian>(net.h as u32)?;
                sink.write_u32::<LittleEndian>(net.activation.id())?;
                for &p in &net.params {
                    sink.write_f32::<LittleEndian>(p as f32)?;
                }
            }
        }
        sink.flush()?;
        Ok(())
    }

    /// Loads a model file. Loaded models are frozen; `h = 0` denotes the
    /// identity baseline.
    pub fn load<R: Read>(mut source: R) -> Result<Self> {
        let corrupt = |what: &str| Error::CorruptModel(what.to_string());
        let mut magic = [0u8; 4];
        source
            .read_exact(&mut magic)
            .map_err(|_| corrupt("truncated header"))?;
        if &magic != MODEL_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let mut header = [0u32; 4];
        for slot in &mut header {
            *slot = source
                .read_u32::<LittleEndian>()
                .map_err(|_| corrupt("truncated header"))?;
        }
        let [version, d, h, act] = header;
        if version != MODEL_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let (d, h) = (d as usize, h as usize);
        if d == 0 {
            return Err(corrupt("zero dimension"));
        }
        let mut model = if h == 0 {
            Self::identity(d)
        } else {
            let activation =
                Activation::from_id(act).ok_or_else(|| corrupt("unknown activation id"))?;
            let mut params = vec![0.0; Mlp::parameter_count(d, h)];
            for p in &mut params {
                let v = source
                    .read_f32::<LittleEndian>()
                    .map_err(|_| corrupt("truncated parameters"))?;
                if !v.is_finite() {
                    return Err(corrupt("non-finite parameter"));
                }
                *p = f64::from(v);
            }
            Self::from_mlp(Mlp::from_params(d, h, activation, params)?)
        };
        let mut rest = [0u8; 1];
        if source.read(&mut rest)? != 0 {
            return Err(corrupt("trailing bytes"));
        }
        model.freeze();
        Ok(model)
    }
}

fn consecutive_pairs<'a>(streams: &[&'a [FrameFeature]]) -> Vec<(&'a [f64], &'a [f64])> {
    streams
        .iter()
        .flat_map(|s| {
            s.windows(2)
                .map(|w| (w[0].emb.as_slice(), w[1].emb.as_slice()))
        })
        .collect()
}

enum OptimizerState {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        m: Vec<f64>,
        v: Vec<f64>,
        step: i32,
    },
}

impl OptimizerState {
    fn new(cfg: &TrainConfig, n: usize) -> Self {
        match cfg.optimizer {
            Optimizer::Sgd => OptimizerState::Sgd {
                lr: cfg.learning_rate,
            },
            Optimizer::Adam => OptimizerState::Adam {
                lr: cfg.learning_rate,
                m: vec![0.0; n],
                v: vec![0.0; n],
                step: 0,
            },
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        match self {
            OptimizerState::Sgd { lr } => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= *lr * g;
                }
            }
            OptimizerState::Adam { lr, m, v, step } => {
                *step += 1;
                let c1 = 1.0 - BETA1.powi(*step);
                let c2 = 1.0 - BETA2.powi(*step);
                for i in 0..params.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    params[i] -= *lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                }
            }
        }
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

    fn frames(embs: &[Vec<f64>]) -> Vec<FrameFeature> {
        embs.iter()
            .enumerate()
            .map(|(i, e)| FrameFeature::ingest(i, i as f64, e.clone(), 0.0).unwrap())
            .collect()
    }

    #[test]
    fn identity_predicts_input() {
        let m = PredictorModel::identity(4);
        let x = vec![0.5, 0.5, 0.5, 0.5];
        assert_eq!(m.predict(&x).unwrap(), x);
        assert_eq!(m.prediction_error(&x, &x).unwrap(), 0.0);
        assert_eq!(m.prediction_error(&unit(4, 0), &unit(4, 1)).unwrap(), 2.0);
    }

    #[test]
    fn dimension_mismatch() {
        let m = PredictorModel::mlp(4, 8, Activation::Silu, 1);
        assert!(matches!(
            m.predict(&[1.0, 0.0]),
            Err(Error::DimensionMismatch {
                expected: 4,
                actual: 2
            })
        ));
        assert!(m.prediction_error(&unit(4, 0), &unit(3, 0)).is_err());
    }

    #[test]
    fn zero_output_layer_predicts_zero() {
        let mut m = PredictorModel::mlp(6, 12, Activation::Gelu, 3);
        m.zero_output_layer().unwrap();
        assert_eq!(m.predict(&unit(6, 2)).unwrap(), vec![0.0; 6]);
        assert_eq!(m.prediction_error(&unit(6, 2), &unit(6, 4)).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_forward() {
        // d = 1, h = 1, softplus. Oracle values computed independently:
        // z1 = 0.5*1 + 0.1 = 0.6, a1 = ln(1+e^0.6)
        // z2 = -0.3*a1 + 0.2, a2 = softplus(z2), y = 0.7*a2 - 0.05 = 0.39734911250080057
        let net = Mlp::from_params(
            1,
            1,
            Activation::Softplus,
            vec![0.5, 0.1, -0.3, 0.2, 0.7, -0.05],
        )
        .unwrap();
        let a1 = (1.0f64 + 0.6f64.exp()).ln();
        let a2 = (1.0f64 + (-0.3 * a1 + 0.2f64).exp()).ln();
        let y = 0.7 * a2 - 0.05;
        let got = net.forward(&[1.0])[0];
        assert!((got - y).abs() < 1e-15);
        assert!((got - 0.39734911250080057).abs() < 1e-12, "{got}");
        let m = PredictorModel::from_mlp(net);
        let err = m.prediction_error(&[1.0], &[1.0]).unwrap();
        assert!((err - (1.0 - y).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn gradient_check_identity_is_zero() {
        let m = PredictorModel::identity(3);
        assert_eq!(
            m.gradient_check(&unit(3, 0), &unit(3, 1), 1e-5).unwrap(),
            0.0
        );
    }

    #[test]
    fn gradient_check_zero_weights() {
        for act in [Activation::Softplus, Activation::Silu, Activation::Gelu] {
            let n = Mlp::parameter_count(4, 6);
            let m = PredictorModel::from_mlp(Mlp::from_params(4, 6, act, vec![0.0; n]).unwrap());
            let x = vec![0.5, -0.5, 0.5, 0.5];
            let err = m.gradient_check(&x, &unit(4, 1), 1e-5).unwrap();
            assert!(err <= 1e-6, "{act:?}: {err}");
        }
    }

    #[test]
    fn frozen_model_rejects_training() {
        let mut m = PredictorModel::mlp(2, 4, Activation::Silu, 0);
        m.freeze();
        let s = frames(&vec![unit(2, 0); 40]);
        assert!(matches!(
            m.train(&s, &TrainConfig::default()),
            Err(Error::AlreadyFrozen)
        ));
        assert!(matches!(m.zero_output_layer(), Err(Error::AlreadyFrozen)));
    }

    #[test]
    fn short_stream_rejected() {
        let mut m = PredictorModel::mlp(2, 4, Activation::Silu, 0);
        let s = frames(&vec![unit(2, 0); 8]);
        let cfg = TrainConfig {
            batch_size: 8,
            ..TrainConfig::default()
        };
        assert!(matches!(
            m.train(&s, &cfg),
            Err(Error::StreamTooShort {
                needed: 9,
                actual: 8
            })
        ));
    }

    #[test]
    fn epoch_zero_is_untrained_loss() {
        let mut m = PredictorModel::mlp(4, 8, Activation::Silu, 11);
        let embs: Vec<Vec<f64>> = (0..30).map(|i| unit(4, i % 4)).collect();
        let s = frames(&embs);
        let before = m.mean_loss(&[&s]).unwrap();
        let trace = m
            .train(
                &s,
                &TrainConfig {
                    epochs: 3,
                    batch_size: 4,
                    ..TrainConfig::default()
                },
            )
            .unwrap();
        assert_eq!(trace.len(), 4);
        assert_eq!(trace[0], before);
    }

    #[test]
    fn save_load_round_trip() {
        let m = PredictorModel::mlp(3, 5, Activation::Gelu, 9);
        let mut bytes = Vec::new();
        m.save(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 20 + 4 * Mlp::parameter_count(3, 5));
        let back = PredictorModel::load(bytes.as_slice()).unwrap();
        assert!(back.is_frozen());
        let x = vec![0.6, 0.0, 0.8];
        let (a, b) = (m.predict(&x).unwrap(), back.predict(&x).unwrap());
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-5);
        }
        let mut again = Vec::new();
        back.save(&mut again).unwrap();
        assert_eq!(bytes, again);

        assert!(PredictorModel::load(&bytes[..bytes.len() - 1]).is_err());
        let mut id = Vec::new();
        PredictorModel::identity(7).save(&mut id).unwrap();
        assert_eq!(
            PredictorModel::load(id.as_slice()).unwrap(),
            PredictorModel::identity(7)
        );
    }
}
