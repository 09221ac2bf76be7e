//! Architecture hyperparameters and the named parameter store.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dual,
    Single,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Dual => "dual",
            Mode::Single => "single",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dual" => Ok(Mode::Dual),
            "single" => Ok(Mode::Single),
            other => Err(ModelError::InvalidConfig(format!("unknown mode `{other}`"))),
        }
    }
}

fn d_max_seq_len() -> usize {
    128
}
fn d_model_dim() -> usize {
    64
}
fn d_num_layers() -> usize {
    2
}
fn d_num_heads() -> usize {
    4
}
fn d_ffn_dim() -> usize {
    256
}
fn d_mode() -> Mode {
    Mode::Dual
}
fn d_dropout() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Filled in from the vocabulary when left at zero in config files.
    #[serde(default)]
    pub vocab_size: usize,
    #[serde(default = "d_max_seq_len")]
    pub max_seq_len: usize,
    #[serde(default = "d_model_dim")]
    pub model_dim: usize,
    #[serde(default = "d_num_layers")]
    pub num_layers: usize,
    #[serde(default = "d_num_heads")]
    pub num_heads: usize,
    #[serde(default = "d_ffn_dim")]
    pub ffn_dim: usize,
    #[serde(default = "d_num_heads")]
    pub num_cross_heads: usize,
    #[serde(default = "d_mode")]
    pub mode: Mode,
    #[serde(default = "d_dropout")]
    pub dropout_rate: f64,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            max_seq_len: d_max_seq_len(),
            model_dim: d_model_dim(),
            num_layers: d_num_layers(),
            num_heads: d_num_heads(),
            ffn_dim: d_ffn_dim(),
            num_cross_heads: d_num_heads(),
            mode: d_mode(),
            dropout_rate: d_dropout(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.vocab_size == 0
            || self.max_seq_len == 0
            || self.model_dim == 0
            || self.num_layers == 0
            || self.num_heads == 0
            || self.ffn_dim == 0
            || self.num_cross_heads == 0
        {
            return bad("all sizes must be positive".into());
        }
        if self.model_dim % self.num_heads != 0 || self.model_dim % self.num_cross_heads != 0 {
            return bad(format!(
                "model_dim {} must be divisible by num_heads {} and num_cross_heads {}",
                self.model_dim, self.num_heads, self.num_cross_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} outside [0,1)", self.dropout_rate));
        }
        Ok(())
    }

    /// Non-pad token slots one example can occupy.
    pub fn token_capacity(&self) -> usize {
        match self.mode {
            Mode::Dual => 2 * self.max_seq_len,
            Mode::Single => self.max_seq_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNormParams {
    pub gamma: Tensor,
    pub beta: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerParams {
    pub ln1: LayerNormParams,
    pub attn: AttentionParams,
    pub ln2: LayerNormParams,
    pub ffn_w1: Tensor,
    pub ffn_b1: Tensor,
    pub ffn_w2: Tensor,
    pub ffn_b2: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub token_embedding: Tensor,
    pub position_embedding: Tensor,
    pub layers: Vec<EncoderLayerParams>,
    pub final_ln: LayerNormParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub weight: Tensor,
    pub bias: Tensor,
}

pub const HEAD_NAMES: [&str; 3] = ["cogency", "effectiveness", "reasonableness"];

/// Every trainable tensor. Gradient stores reuse this type.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    /// Topic + argument encoder.
    pub encoder1: EncoderParams,
    /// Augmentation encoder; absent in single mode.
    pub encoder2: Option<EncoderParams>,
    pub cross: Option<AttentionParams>,
    pub heads: [HeadParams; 3],
}

struct Init<'a> {
    rng: &'a mut ChaCha8Rng,
    normal: Normal<f64>,
}

impl Init<'_> {
    fn weight(&mut self, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.normal.sample(self.rng) as f32 as f64).collect();
        Tensor::from_vec(shape, data)
    }
}

fn layer_norm(d: usize) -> LayerNormParams {
    LayerNormParams {
        gamma: Tensor::filled(&[d], 1.0),
        beta: Tensor::zeros(&[d]),
    }
}

fn attention(init: &mut Init, d: usize) -> AttentionParams {
    AttentionParams {
        wq: init.weight(&[d, d]),
        bq: Tensor::zeros(&[d]),
        wk: init.weight(&[d, d]),
        bk: Tensor::zeros(&[d]),
        wv: init.weight(&[d, d]),
        bv: Tensor::zeros(&[d]),
        wo: init.weight(&[d, d]),
        bo: Tensor::zeros(&[d]),
    }
}

fn encoder(init: &mut Init, cfg: &ModelConfig) -> EncoderParams {
    let d = cfg.model_dim;
    EncoderParams {
        token_embedding: init.weight(&[cfg.vocab_size, d]),
        position_embedding: init.weight(&[cfg.max_seq_len, d]),
        layers: (0..cfg.num_layers)
            .map(|_| EncoderLayerParams {
                ln1: layer_norm(d),
                attn: attention(init, d),
                ln2: layer_norm(d),
                ffn_w1: init.weight(&[d, cfg.ffn_dim]),
                ffn_b1: Tensor::zeros(&[cfg.ffn_dim]),
                ffn_w2: init.weight(&[cfg.ffn_dim, d]),
                ffn_b2: Tensor::zeros(&[d]),
            })
            .collect(),
        final_ln: layer_norm(d),
    }
}

macro_rules! visit_attention {
    ($a:expr, $prefix:expr, $f:expr) => {{
        $f(&format!("{}.wq", $prefix), &$a.wq);
        $f(&format!("{}.bq", $prefix), &$a.bq);
        $f(&format!("{}.wk", $prefix), &$a.wk);
        $f(&format!("{}.bk", $prefix), &$a.bk);
        $f(&format!("{}.wv", $prefix), &$a.wv);
        $f(&format!("{}.bv", $prefix), &$a.bv);
        $f(&format!("{}.wo", $prefix), &$a.wo);
        $f(&format!("{}.bo", $prefix), &$a.bo);
    }};
}

macro_rules! visit_encoder {
    ($e:expr, $prefix:expr, $f:expr) => {{
        $f(&format!("{}.token_embedding", $prefix), &$e.token_embedding);
        $f(&format!("{}.position_embedding", $prefix), &$e.position_embedding);
        for (i, l) in $e.layers.iter().enumerate() {
            let p = format!("{}.layers.{}", $prefix, i);
            $f(&format!("{p}.ln1.gamma"), &l.ln1.gamma);
            $f(&format!("{p}.ln1.beta"), &l.ln1.beta);
            visit_attention!(l.attn, format!("{p}.attn"), $f);
            $f(&format!("{p}.ln2.gamma"), &l.ln2.gamma);
            $f(&format!("{p}.ln2.beta"), &l.ln2.beta);
            $f(&format!("{p}.ffn.w1"), &l.ffn_w1);
            $f(&format!("{p}.ffn.b1"), &l.ffn_b1);
            $f(&format!("{p}.ffn.w2"), &l.ffn_w2);
            $f(&format!("{p}.ffn.b2"), &l.ffn_b2);
        }
        $f(&format!("{}.final_ln.gamma", $prefix), &$e.final_ln.gamma);
        $f(&format!("{}.final_ln.beta", $prefix), &$e.final_ln.beta);
    }};
}

impl ModelParameters {
    /// Normal(0, 0.02) weights, zero biases, unit layer-norm scales.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = Init {
            rng: &mut rng,
            normal: Normal::new(0.0, 0.02).expect("valid normal"),
        };
        let encoder1 = encoder(&mut init, cfg);
        let (encoder2, cross) = match cfg.mode {
            Mode::Dual => (Some(encoder(&mut init, cfg)), Some(attention(&mut init, cfg.model_dim))),
            Mode::Single => (None, None),
        };
        let heads = std::array::from_fn(|_| HeadParams {
            weight: init.weight(&[cfg.model_dim]),
            bias: Tensor::zeros(&[1]),
        });
        Ok(Self {
            encoder1,
            encoder2,
            cross,
            heads,
        })
    }

    /// Visit every tensor in a fixed order with its dotted name.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&str, &'a Tensor)) {
        let mut g = |n: &str, t: &'a Tensor| f(n, t);
        visit_encoder!(self.encoder1, "encoder1", g);
        if let Some(e) = &self.encoder2 {
            visit_encoder!(e, "encoder2", g);
        }
        if let Some(c) = &self.cross {
            visit_attention!(c, "cross_attn", g);
        }
        for (name, h) in HEAD_NAMES.iter().zip(&self.heads) {
            g(&format!("heads.{name}.weight"), &h.weight);
            g(&format!("heads.{name}.bias"), &h.bias);
        }
    }

    /// Mutable references to every tensor, in the same order as [`visit`](Self::visit).
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        fn attn<'a>(a: &'a mut AttentionParams, out: &mut Vec<&'a mut Tensor>) {
            out.extend([
                &mut a.wq, &mut a.bq, &mut a.wk, &mut a.bk, &mut a.wv, &mut a.bv, &mut a.wo, &mut a.bo,
            ]);
        }
        fn enc<'a>(e: &'a mut EncoderParams, out: &mut Vec<&'a mut Tensor>) {
            out.push(&mut e.token_embedding);
            out.push(&mut e.position_embedding);
            for l in &mut e.layers {
                out.push(&mut l.ln1.gamma);
                out.push(&mut l.ln1.beta);
                attn(&mut l.attn, out);
                out.extend([
                    &mut l.ln2.gamma,
                    &mut l.ln2.beta,
                    &mut l.ffn_w1,
                    &mut l.ffn_b1,
                    &mut l.ffn_w2,
                    &mut l.ffn_b2,
                ]);
            }
            out.push(&mut e.final_ln.gamma);
            out.push(&mut e.final_ln.beta);
        }
        let mut out = Vec::new();
        enc(&mut self.encoder1, &mut out);
        if let Some(e) = &mut self.encoder2 {
            enc(e, &mut out);
        }
        if let Some(c) = &mut self.cross {
            attn(c, &mut out);
        }
        for h in &mut self.heads {
            out.push(&mut h.weight);
            out.push(&mut h.bias);
        }
        out
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(&mut |n, _| out.push(n.to_string()));
        out
    }

    pub fn tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.visit(&mut |n, t| out.push((n.to_string(), t)));
        out
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors().into_iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let idx = self.names().iter().position(|n| n == name)?;
        self.tensors_mut().into_iter().nth(idx)
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    pub fn num_values(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors().iter().map(|(_, t)| t.sum_squares()).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tensors_mut() {
            t.scale(s);
        }
    }

    pub fn add_assign(&mut self, other: &ModelParameters) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b.1);
        }
    }

    pub fn round_to_f32(&mut self) {
        for t in self.tensors_mut() {
            t.round_to_f32();
        }
    }

    /// Same names and shapes, in the same order.
    pub fn same_layout(&self, other: &ModelParameters) -> bool {
        let a = self.tensors();
        let b = other.tensors();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.0 == y.0 && x.1.shape == y.1.shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: Mode) -> ModelConfig {
        ModelConfig {
            vocab_size: 20,
            max_seq_len: 8,
            model_dim: 8,
            num_layers: 1,
            num_heads: 2,
            ffn_dim: 16,
            num_cross_heads: 2,
            mode,
            dropout_rate: 0.0,
        }
    }

    #[test]
    fn validation() {
        let mut c = small(Mode::Dual);
        assert!(c.validate().is_ok());
        c.num_heads = 3;
        assert!(c.validate().is_err());
        c.num_heads = 2;
        c.dropout_rate = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn capacity() {
        assert_eq!(small(Mode::Dual).token_capacity(), 16);
        assert_eq!(small(Mode::Single).token_capacity(), 8);
    }

    #[test]
    fn init_is_deterministic_and_disjoint() {
        let a = ModelParameters::init(&small(Mode::Dual), 3).unwrap();
        let b = ModelParameters::init(&small(Mode::Dual), 3).unwrap();
        assert_eq!(a, b);
        let e2 = a.encoder2.as_ref().unwrap();
        assert_ne!(a.encoder1.token_embedding, e2.token_embedding);
        assert_eq!(a.encoder1.layers.len(), e2.layers.len());
        let c = ModelParameters::init(&small(Mode::Dual), 4).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_conventions() {
        let p = ModelParameters::init(&small(Mode::Dual), 0).unwrap();
        let l = &p.encoder1.layers[0];
        assert!(l.ln1.gamma.data.iter().all(|&v| v == 1.0));
        assert!(l.ln1.beta.data.iter().all(|&v| v == 0.0));
        assert!(l.attn.bq.data.iter().all(|&v| v == 0.0));
        let w = &p.encoder1.token_embedding.data;
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
        assert!(mean.abs() < 0.005 && (sd - 0.02).abs() < 0.005, "{mean} {sd}");
    }

    #[test]
    fn names_and_mutable_view_align() {
        let mut p = ModelParameters::init(&small(Mode::Dual), 0).unwrap();
        let names = p.names();
        assert_eq!(names.len(), p.tensors_mut().len());
        assert!(names.contains(&"cross_attn.wq".to_string()));
        assert!(names.contains(&"heads.reasonableness.bias".to_string()));
        assert!(names.contains(&"encoder2.layers.0.ffn.w1".to_string()));
        p.get_mut("heads.cogency.bias").unwrap().data[0] = 2.5;
        assert_eq!(p.heads[0].bias.data[0], 2.5);
        let single = ModelParameters::init(&small(Mode::Single), 0).unwrap();
        assert!(!single.names().iter().any(|n| n.starts_with("encoder2") || n.starts_with("cross")));
    }
}
