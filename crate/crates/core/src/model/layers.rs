//! Building blocks with hand-written backward passes: layer norm, GELU,
//! masked multi-head attention and inverted dropout.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{AttentionParams, LayerNormParams};
use super::tensor::{affine, affine_backward};

pub const LN_EPS: f64 = 1e-5;

pub struct LayerNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

pub fn layer_norm_forward(x: &[f64], n: usize, d: usize, p: &LayerNormParams) -> (Vec<f64>, LayerNormCache) {
    let mut out = vec![0.0; n * d];
    let mut xhat = vec![0.0; n * d];
    let mut inv_std = vec![0.0; n];
    for i in 0..n {
        let row = &x[i * d..(i + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[i] = is;
        for j in 0..d {
            let h = (row[j] - mean) * is;
            xhat[i * d + j] = h;
            out[i * d + j] = h * p.gamma.data[j] + p.beta.data[j];
        }
    }
    (out, LayerNormCache { xhat, inv_std })
}

pub fn layer_norm_backward(
    dy: &[f64],
    n: usize,
    d: usize,
    p: &LayerNormParams,
    cache: &LayerNormCache,
    g: &mut LayerNormParams,
) -> Vec<f64> {
    let mut dx = vec![0.0; n * d];
    let mut dxhat = vec![0.0; d];
    for i in 0..n {
        let dyr = &dy[i * d..(i + 1) * d];
        let xh = &cache.xhat[i * d..(i + 1) * d];
        for j in 0..d {
            g.gamma.data[j] += dyr[j] * xh[j];
            g.beta.data[j] += dyr[j];
            dxhat[j] = dyr[j] * p.gamma.data[j];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        for j in 0..d {
            dx[i * d + j] = cache.inv_std[i] * (dxhat[j] - mean_d - xh[j] * mean_dx);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Row-major attention weights: `heads × queries × keys`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionWeights {
    pub heads: usize,
    pub queries: usize,
    pub keys: usize,
    pub data: Vec<f64>,
}

impl AttentionWeights {
    pub fn row(&self, head: usize, query: usize) -> &[f64] {
        let start = (head * self.queries + query) * self.keys;
        &self.data[start..start + self.keys]
    }
}

pub struct AttentionCache {
    q_in: Vec<f64>,
    kv_in: Vec<f64>,
    nq: usize,
    nk: usize,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    pub probs: AttentionWeights,
    ctx: Vec<f64>,
    /// No unmasked key: output is identically zero.
    empty: bool,
}

/// Multi-head attention of `q_in` over `kv_in`. Masked keys get weight
/// exactly zero; with no unmasked key at all the whole output, bias
/// included, is zero.
pub fn attention_forward(
    p: &AttentionParams,
    q_in: &[f64],
    nq: usize,
    kv_in: &[f64],
    key_mask: &[bool],
    heads: usize,
    d: usize,
) -> (Vec<f64>, AttentionCache) {
    let nk = key_mask.len();
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let empty = !key_mask.iter().any(|&m| m);
    let mut probs = vec![0.0; heads * nq * nk];
    if empty {
        let cache = AttentionCache {
            q_in: Vec::new(),
            kv_in: Vec::new(),
            nq,
            nk,
            q: Vec::new(),
            k: Vec::new(),
            v: Vec::new(),
            probs: AttentionWeights {
                heads,
                queries: nq,
                keys: nk,
                data: probs,
            },
            ctx: Vec::new(),
            empty,
        };
        return (vec![0.0; nq * d], cache);
    }
    let q = affine(q_in, nq, &p.wq, &p.bq);
    let k = affine(kv_in, nk, &p.wk, &p.bk);
    let v = affine(kv_in, nk, &p.wv, &p.bv);
    let mut ctx = vec![0.0; nq * d];
    let mut scores = vec![0.0; nk];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..nq {
            let qi = &q[i * d + off..i * d + off + dh];
            let mut max = f64::NEG_INFINITY;
            for j in 0..nk {
                if key_mask[j] {
                    let kj = &k[j * d + off..j * d + off + dh];
                    let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                    scores[j] = s;
                    max = max.max(s);
                }
            }
            let row = &mut probs[(h * nq + i) * nk..(h * nq + i + 1) * nk];
            let mut sum = 0.0;
            for j in 0..nk {
                if key_mask[j] {
                    let e = (scores[j] - max).exp();
                    row[j] = e;
                    sum += e;
                }
            }
            for r in row.iter_mut() {
                *r /= sum;
            }
            let ci = &mut ctx[i * d + off..i * d + off + dh];
            for j in 0..nk {
                let a = row[j];
                if a != 0.0 {
                    let vj = &v[j * d + off..j * d + off + dh];
                    for (c, vv) in ci.iter_mut().zip(vj) {
                        *c += a * vv;
                    }
                }
            }
        }
    }
    let out = affine(&ctx, nq, &p.wo, &p.bo);
    let cache = AttentionCache {
        q_in: q_in.to_vec(),
        kv_in: kv_in.to_vec(),
        nq,
        nk,
        q,
        k,
        v,
        probs: AttentionWeights {
            heads,
            queries: nq,
            keys: nk,
            data: probs,
        },
        ctx,
        empty,
    };
    (out, cache)
}

/// Returns `(d q_in, d kv_in)`.
pub fn attention_backward(
    p: &AttentionParams,
    cache: &AttentionCache,
    dout: &[f64],
    heads: usize,
    d: usize,
    g: &mut AttentionParams,
) -> (Vec<f64>, Vec<f64>) {
    let (nq, nk) = (cache.nq, cache.nk);
    if cache.empty {
        return (vec![0.0; nq * d], vec![0.0; nk * d]);
    }
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let dctx = affine_backward(&cache.ctx, nq, &p.wo, dout, &mut g.wo, &mut g.bo);
    let mut dq = vec![0.0; nq * d];
    let mut dk = vec![0.0; nk * d];
    let mut dv = vec![0.0; nk * d];
    let mut da = vec![0.0; nk];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..nq {
            let row = cache.probs.row(h, i);
            let dci = &dctx[i * d + off..i * d + off + dh];
            let mut dot = 0.0;
            for j in 0..nk {
                if row[j] == 0.0 {
                    da[j] = 0.0;
                    continue;
                }
                let vj = &cache.v[j * d + off..j * d + off + dh];
                da[j] = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                dot += da[j] * row[j];
                let dvj = &mut dv[j * d + off..j * d + off + dh];
                for (x, c) in dvj.iter_mut().zip(dci) {
                    *x += row[j] * c;
                }
            }
            for j in 0..nk {
                if row[j] == 0.0 {
                    continue;
                }
                let ds = row[j] * (da[j] - dot) * scale;
                for t in 0..dh {
                    dq[i * d + off + t] += ds * cache.k[j * d + off + t];
                    dk[j * d + off + t] += ds * cache.q[i * d + off + t];
                }
            }
        }
    }
    let dq_in = affine_backward(&cache.q_in, nq, &p.wq, &dq, &mut g.wq, &mut g.bq);
    let mut dkv = affine_backward(&cache.kv_in, nk, &p.wk, &dk, &mut g.wk, &mut g.bk);
    let dkv_v = affine_backward(&cache.kv_in, nk, &p.wv, &dv, &mut g.wv, &mut g.bv);
    for (a, b) in dkv.iter_mut().zip(dkv_v) {
        *a += b;
    }
    (dq_in, dkv)
}

/// Inverted dropout mask (`0` or `1/(1-p)`), or `None` when inactive.
pub fn dropout_mask(len: usize, rate: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<f64>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(
        (0..len)
            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    )
}

pub fn apply_mask(x: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        for (v, k) in x.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tensor::Tensor;

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -1.0, -0.1, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "{x}");
        }
        assert_eq!(gelu(0.0), 0.0);
    }

    #[test]
    fn layer_norm_rows_are_standardized() {
        let p = LayerNormParams {
            gamma: Tensor::filled(&[4], 1.0),
            beta: Tensor::zeros(&[4]),
        };
        let (y, _) = layer_norm_forward(&[1., 2., 3., 4., -1., 0., 0., 1.], 2, 4, &p);
        for row in y.chunks(4) {
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|v| v * v).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn dropout_inactive_without_rng() {
        assert!(dropout_mask(4, 0.5, None).is_none());
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let m = dropout_mask(1000, 0.5, Some(&mut rng)).unwrap();
        assert!(m.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = m.iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
    }
}
