//! Full forward and backward passes of the dual / single encoder regressor.
//!
//! ```text
//! seq1 ─ encoder1 ─ h1 ─┬──────────────(+)─ fused ─ mean pool ─┬─ cogency head
//!                       └─ Q                ↑                   ├─ effectiveness head
//! seq2 ─ encoder2 ─ h2 ─── K,V ─ cross-attn ┘                   └─ reasonableness head
//! ```
//!
//! Encoder layers are pre-norm: `x += attn(ln1(x))`, `x += ffn(ln2(x))`,
//! followed by a final layer norm.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    apply_mask, attention_backward, attention_forward, dropout_mask, gelu, gelu_grad, layer_norm_backward,
    layer_norm_forward, AttentionCache, AttentionWeights, LayerNormCache,
};
use super::params::{EncoderLayerParams, EncoderParams, Mode, ModelConfig, ModelParameters};
use super::tensor::{affine, affine_backward};
use super::ModelError;

/// Token ids and masks for one example. `mask[i]` is true on real tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInput {
    pub seq1: Vec<u32>,
    pub mask1: Vec<bool>,
    pub seq2: Vec<u32>,
    pub mask2: Vec<bool>,
    /// Tokens dropped by truncation while assembling the sequences.
    pub truncated: usize,
}

impl EncodedInput {
    pub fn non_pad_slots(&self) -> usize {
        self.mask1.iter().chain(&self.mask2).filter(|&&m| m).count()
    }
}

/// Everything observable about one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// Final encoder1 states, `len(seq1) × d`.
    pub encoder1_states: Vec<f64>,
    /// Final encoder2 states, `len(seq2) × d` (empty in single mode).
    pub encoder2_states: Vec<f64>,
    pub self_attention1: Vec<AttentionWeights>,
    pub self_attention2: Vec<AttentionWeights>,
    /// `num_cross_heads × len(seq1) × len(seq2)`; absent in single mode.
    pub cross_attention: Option<AttentionWeights>,
    pub pooled: Vec<f64>,
    pub outputs: [f64; 3],
}

struct LayerCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    drop_attn: Option<Vec<f64>>,
    ln2: LayerNormCache,
    ffn_in: Vec<f64>,
    hidden: Vec<f64>,
    act: Vec<f64>,
    drop_ffn: Option<Vec<f64>>,
}

struct EncoderCache {
    ids: Vec<u32>,
    n: usize,
    drop_emb: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
    final_ln: LayerNormCache,
    out: Vec<f64>,
}

pub(crate) struct ForwardCache {
    enc1: EncoderCache,
    enc2: Option<EncoderCache>,
    cross: Option<AttentionCache>,
    pool_count: usize,
    pooled: Vec<f64>,
}

fn encoder_forward(
    p: &EncoderParams,
    cfg: &ModelConfig,
    ids: &[u32],
    mask: &[bool],
    mut rng: Option<&mut ChaCha8Rng>,
) -> EncoderCache {
    let d = cfg.model_dim;
    let n = ids.len();
    let mut x = vec![0.0; n * d];
    for (i, &id) in ids.iter().enumerate() {
        let tok = p.token_embedding.row(id as usize);
        let pos = p.position_embedding.row(i);
        for j in 0..d {
            x[i * d + j] = tok[j] + pos[j];
        }
    }
    let drop_emb = dropout_mask(n * d, cfg.dropout_rate, rng.as_deref_mut());
    apply_mask(&mut x, &drop_emb);
    let mut layers = Vec::with_capacity(p.layers.len());
    for lp in &p.layers {
        let (cache, next) = layer_forward(lp, cfg, x, mask, rng.as_deref_mut());
        layers.push(cache);
        x = next;
    }
    let (out, final_ln) = layer_norm_forward(&x, n, d, &p.final_ln);
    EncoderCache {
        ids: ids.to_vec(),
        n,
        drop_emb,
        layers,
        final_ln,
        out,
    }
}

fn layer_forward(
    p: &EncoderLayerParams,
    cfg: &ModelConfig,
    x: Vec<f64>,
    mask: &[bool],
    mut rng: Option<&mut ChaCha8Rng>,
) -> (LayerCache, Vec<f64>) {
    let d = cfg.model_dim;
    let n = mask.len();
    let (a, ln1) = layer_norm_forward(&x, n, d, &p.ln1);
    let (mut o, attn) = attention_forward(&p.attn, &a, n, &a, mask, cfg.num_heads, d);
    let drop_attn = dropout_mask(n * d, cfg.dropout_rate, rng.as_deref_mut());
    apply_mask(&mut o, &drop_attn);
    let mid: Vec<f64> = x.iter().zip(&o).map(|(a, b)| a + b).collect();
    let (b, ln2) = layer_norm_forward(&mid, n, d, &p.ln2);
    let hidden = affine(&b, n, &p.ffn_w1, &p.ffn_b1);
    let act: Vec<f64> = hidden.iter().map(|&h| gelu(h)).collect();
    let mut f = affine(&act, n, &p.ffn_w2, &p.ffn_b2);
    let drop_ffn = dropout_mask(n * d, cfg.dropout_rate, rng.as_deref_mut());
    apply_mask(&mut f, &drop_ffn);
    let out: Vec<f64> = mid.iter().zip(&f).map(|(a, b)| a + b).collect();
    (
        LayerCache {
            ln1,
            attn,
            drop_attn,
            ln2,
            ffn_in: b,
            hidden,
            act,
            drop_ffn,
        },
        out,
    )
}

fn encoder_backward(p: &EncoderParams, cfg: &ModelConfig, cache: &EncoderCache, dout: &[f64], g: &mut EncoderParams) {
    let d = cfg.model_dim;
    let n = cache.n;
    let mut dx = layer_norm_backward(dout, n, d, &p.final_ln, &cache.final_ln, &mut g.final_ln);
    for ((lp, lc), lg) in p.layers.iter().zip(&cache.layers).zip(g.layers.iter_mut()).rev() {
        // x_out = mid + drop(ffn(ln2(mid)))
        let mut df = dx.clone();
        apply_mask(&mut df, &lc.drop_ffn);
        let dact = affine_backward(&lc.act, n, &lp.ffn_w2, &df, &mut lg.ffn_w2, &mut lg.ffn_b2);
        let dhidden: Vec<f64> = dact
            .iter()
            .zip(&lc.hidden)
            .map(|(g, &h)| g * gelu_grad(h))
            .collect();
        let db = affine_backward(&lc.ffn_in, n, &lp.ffn_w1, &dhidden, &mut lg.ffn_w1, &mut lg.ffn_b1);
        let dmid_ln = layer_norm_backward(&db, n, d, &lp.ln2, &lc.ln2, &mut lg.ln2);
        let dmid: Vec<f64> = dx.iter().zip(&dmid_ln).map(|(a, b)| a + b).collect();
        // mid = x_in + drop(attn(ln1(x_in)))
        let mut dattn = dmid.clone();
        apply_mask(&mut dattn, &lc.drop_attn);
        let (dq, dkv) = attention_backward(&lp.attn, &lc.attn, &dattn, cfg.num_heads, d, &mut lg.attn);
        let da: Vec<f64> = dq.iter().zip(&dkv).map(|(a, b)| a + b).collect();
        let dx_ln = layer_norm_backward(&da, n, d, &lp.ln1, &lc.ln1, &mut lg.ln1);
        dx = dmid.iter().zip(&dx_ln).map(|(a, b)| a + b).collect();
    }
    apply_mask(&mut dx, &cache.drop_emb);
    for (i, &id) in cache.ids.iter().enumerate() {
        let row = &dx[i * d..(i + 1) * d];
        for (t, v) in g.token_embedding.row_mut(id as usize).iter_mut().zip(row) {
            *t += v;
        }
        for (t, v) in g.position_embedding.row_mut(i).iter_mut().zip(row) {
            *t += v;
        }
    }
}

fn check_shapes(params: &ModelParameters, cfg: &ModelConfig, input: &EncodedInput) -> Result<(), ModelError> {
    let mismatch = |m: String| Err(ModelError::ShapeMismatch(m));
    if input.seq1.len() != input.mask1.len() || input.seq2.len() != input.mask2.len() {
        return mismatch("sequence and mask lengths differ".into());
    }
    if input.seq1.is_empty() {
        return mismatch("seq1 is empty".into());
    }
    if input.seq1.len() > cfg.max_seq_len || input.seq2.len() > cfg.max_seq_len {
        return mismatch(format!("sequence longer than max_seq_len {}", cfg.max_seq_len));
    }
    if let Some(&bad) = input
        .seq1
        .iter()
        .chain(&input.seq2)
        .find(|&&id| id as usize >= cfg.vocab_size)
    {
        return mismatch(format!("token id {bad} outside vocabulary of {}", cfg.vocab_size));
    }
    if params.encoder1.token_embedding.shape != [cfg.vocab_size, cfg.model_dim] {
        return mismatch("parameters do not match config".into());
    }
    match cfg.mode {
        Mode::Dual if params.encoder2.is_none() || params.cross.is_none() => {
            mismatch("dual mode needs encoder2 and cross-attention parameters".into())
        }
        Mode::Single if input.mask2.iter().any(|&m| m) => {
            mismatch("single mode takes no second sequence".into())
        }
        _ => Ok(()),
    }
}

pub(crate) fn forward_cached(
    params: &ModelParameters,
    cfg: &ModelConfig,
    input: &EncodedInput,
    dropout_seed: Option<u64>,
) -> Result<(ForwardTrace, ForwardCache), ModelError> {
    check_shapes(params, cfg, input)?;
    let d = cfg.model_dim;
    let mut rng = dropout_seed.map(ChaCha8Rng::seed_from_u64);
    let enc1 = encoder_forward(&params.encoder1, cfg, &input.seq1, &input.mask1, rng.as_mut());
    let n1 = input.seq1.len();
    let mut fused = enc1.out.clone();
    let (enc2, cross) = match (cfg.mode, &params.encoder2, &params.cross) {
        (Mode::Dual, Some(p2), Some(pc)) if !input.seq2.is_empty() => {
            let enc2 = encoder_forward(p2, cfg, &input.seq2, &input.mask2, rng.as_mut());
            let (c, cache) = attention_forward(
                pc,
                &enc1.out,
                n1,
                &enc2.out,
                &input.mask2,
                cfg.num_cross_heads,
                d,
            );
            for (f, v) in fused.iter_mut().zip(&c) {
                *f += v;
            }
            (Some(enc2), Some(cache))
        }
        _ => (None, None),
    };
    let pool_count = input.mask1.iter().filter(|&&m| m).count();
    let mut pooled = vec![0.0; d];
    if pool_count > 0 {
        for i in (0..n1).filter(|&i| input.mask1[i]) {
            for j in 0..d {
                pooled[j] += fused[i * d + j];
            }
        }
        for v in &mut pooled {
            *v /= pool_count as f64;
        }
    }
    let outputs: [f64; 3] = std::array::from_fn(|m| {
        let h = &params.heads[m];
        pooled.iter().zip(&h.weight.data).map(|(a, b)| a * b).sum::<f64>() + h.bias.data[0]
    });
    let trace = ForwardTrace {
        encoder1_states: enc1.out.clone(),
        encoder2_states: enc2.as_ref().map(|e| e.out.clone()).unwrap_or_default(),
        self_attention1: enc1.layers.iter().map(|l| l.attn.probs.clone()).collect(),
        self_attention2: enc2
            .as_ref()
            .map(|e| e.layers.iter().map(|l| l.attn.probs.clone()).collect())
            .unwrap_or_default(),
        cross_attention: cross.as_ref().map(|c| c.probs.clone()),
        pooled: pooled.clone(),
        outputs,
    };
    Ok((
        trace,
        ForwardCache {
            enc1,
            enc2,
            cross,
            pool_count,
            pooled,
        },
    ))
}

/// Pure forward pass. Dropout is active only when `dropout_seed` is given.
pub fn forward(
    params: &ModelParameters,
    cfg: &ModelConfig,
    input: &EncodedInput,
    dropout_seed: Option<u64>,
) -> Result<ForwardTrace, ModelError> {
    forward_cached(params, cfg, input, dropout_seed).map(|(t, _)| t)
}

/// Mean squared error over the three heads.
pub fn head_loss(outputs: &[f64; 3], target: &[f64; 3]) -> f64 {
    outputs.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 3.0
}

/// Gradients of [`head_loss`] with respect to every parameter, plus the
/// forward trace and loss. `dropout_seed` must match the paired forward.
pub fn backward(
    params: &ModelParameters,
    cfg: &ModelConfig,
    input: &EncodedInput,
    target: &[f64; 3],
    dropout_seed: Option<u64>,
) -> Result<(f64, ModelParameters, ForwardTrace), ModelError> {
    let (trace, cache) = forward_cached(params, cfg, input, dropout_seed)?;
    let d = cfg.model_dim;
    let mut g = params.zeros_like();
    let loss = head_loss(&trace.outputs, target);
    let mut dpooled = vec![0.0; d];
    for m in 0..3 {
        let dy = 2.0 * (trace.outputs[m] - target[m]) / 3.0;
        g.heads[m].bias.data[0] += dy;
        for j in 0..d {
            g.heads[m].weight.data[j] += dy * cache.pooled[j];
            dpooled[j] += dy * params.heads[m].weight.data[j];
        }
    }
    let n1 = input.seq1.len();
    let mut dfused = vec![0.0; n1 * d];
    if cache.pool_count > 0 {
        let inv = 1.0 / cache.pool_count as f64;
        for i in (0..n1).filter(|&i| input.mask1[i]) {
            for j in 0..d {
                dfused[i * d + j] = dpooled[j] * inv;
            }
        }
    }
    let mut dh1 = dfused.clone();
    if let (Some(enc2), Some(cross_cache), Some(pc), Some(p2)) =
        (&cache.enc2, &cache.cross, &params.cross, &params.encoder2)
    {
        let gc = g.cross.as_mut().expect("dual gradients");
        let (dq, dkv) = attention_backward(pc, cross_cache, &dfused, cfg.num_cross_heads, d, gc);
        for (a, b) in dh1.iter_mut().zip(&dq) {
            *a += b;
        }
        let g2 = g.encoder2.as_mut().expect("dual gradients");
        encoder_backward(p2, cfg, enc2, &dkv, g2);
    }
    encoder_backward(&params.encoder1, cfg, &cache.enc1, &dh1, &mut g.encoder1);
    Ok((loss, g, trace))
}
