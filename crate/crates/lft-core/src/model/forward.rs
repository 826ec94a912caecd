//! Forward pass with activation taping and the matching reverse pass.
//!
//! Architecture per layer: rmsnorm → multi-head causal self-attention →
//! residual, rmsnorm → SiLU feed-forward → residual. Embeddings are token +
//! learned position; logits come from a separate unembedding matrix.

use super::StudentModel;
use crate::error::{Error, Result};

const RMS_EPS: f64 = 1e-5;

/// Dot product with four accumulators; the fixed summation order keeps
/// results bit-reproducible while letting the compiler vectorize.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    debug_assert_eq!(n, b.len());
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let j = i * 4;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut rest = 0.0;
    for j in chunks * 4..n {
        rest += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + rest
}

/// `y += a * x`.
#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `y[t] = W x[t]` for every row; `w` is `[out × in]` row-major.
fn linear(y: &mut [f64], x: &[f64], w: &[f64], t_len: usize, n_in: usize, n_out: usize) {
    for t in 0..t_len {
        let xt = &x[t * n_in..(t + 1) * n_in];
        let yt = &mut y[t * n_out..(t + 1) * n_out];
        for (o, yo) in yt.iter_mut().enumerate() {
            *yo = dot(&w[o * n_in..(o + 1) * n_in], xt);
        }
    }
}

/// Accumulate `dW += dy^T x` and `dx += W^T dy` over all rows.
#[allow(clippy::too_many_arguments)]
fn linear_backward(
    dw: &mut [f64],
    dx: &mut [f64],
    dy: &[f64],
    x: &[f64],
    w: &[f64],
    t_len: usize,
    n_in: usize,
    n_out: usize,
) {
    for t in 0..t_len {
        let xt = &x[t * n_in..(t + 1) * n_in];
        let dyt = &dy[t * n_out..(t + 1) * n_out];
        let dxt = &mut dx[t * n_in..(t + 1) * n_in];
        for (o, &g) in dyt.iter().enumerate() {
            if g != 0.0 {
                axpy(&mut dw[o * n_in..(o + 1) * n_in], g, xt);
                axpy(dxt, g, &w[o * n_in..(o + 1) * n_in]);
            }
        }
    }
}

fn rmsnorm(out: &mut [f64], scale: &mut [f64], x: &[f64], t_len: usize, d: usize) {
    for t in 0..t_len {
        let xt = &x[t * d..(t + 1) * d];
        let r = 1.0 / (dot(xt, xt) / d as f64 + RMS_EPS).sqrt();
        scale[t] = r;
        for (o, &v) in out[t * d..(t + 1) * d].iter_mut().zip(xt) {
            *o = v * r;
        }
    }
}

/// dx for y = x * r with r = (mean(x²) + eps)^(-1/2):
/// dx = r·dy − (r³/d)·(dy·x)·x
fn rmsnorm_backward(dx: &mut [f64], dy: &[f64], x: &[f64], scale: &[f64], t_len: usize, d: usize) {
    for t in 0..t_len {
        let xt = &x[t * d..(t + 1) * d];
        let dyt = &dy[t * d..(t + 1) * d];
        let r = scale[t];
        let proj = dot(dyt, xt) * r * r * r / d as f64;
        for ((dxi, &dyi), &xi) in dx[t * d..(t + 1) * d].iter_mut().zip(dyt).zip(xt) {
            *dxi += r * dyi - proj * xi;
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-layer activation record.
pub(crate) struct LayerTape {
    x_in: Vec<f64>,
    xn1: Vec<f64>,
    r1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    att: Vec<f64>, // [heads][t][j], zero above the diagonal
    ctx: Vec<f64>,
    x_mid: Vec<f64>,
    xn2: Vec<f64>,
    r2: Vec<f64>,
    h1: Vec<f64>,
    ha: Vec<f64>,
}

/// Full activation record for one sequence.
pub(crate) struct Tape {
    pub(crate) tokens: Vec<u32>,
    pub(crate) layers: Vec<LayerTape>,
    pub(crate) xf: Vec<f64>,
    pub(crate) logits: Vec<f64>, // [t][vocab]
}

pub(crate) fn forward(model: &StudentModel, tokens: &[u32]) -> Result<Tape> {
    let cfg = model.config();
    let (d, v, f, heads) = (
        cfg.d_model,
        cfg.vocab_size,
        cfg.ff_dim(),
        cfg.n_heads,
    );
    let hd = cfg.head_dim();
    let t_len = tokens.len();
    if t_len == 0 {
        return Err(Error::invalid_input("empty token sequence"));
    }
    if t_len > cfg.context_len {
        return Err(Error::invalid_input(format!(
            "sequence length {t_len} exceeds context {}",
            cfg.context_len
        )));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= v) {
        return Err(Error::invalid_input(format!(
            "token id {bad} out of range for vocab size {v}"
        )));
    }

    let p = model.params();
    let lay = model.layout();
    let scale = 1.0 / (hd as f64).sqrt();

    let mut x = vec![0.0f64; t_len * d];
    for (t, &tok) in tokens.iter().enumerate() {
        let te = &p[lay.wte + tok as usize * d..lay.wte + (tok as usize + 1) * d];
        let pe = &p[lay.wpe + t * d..lay.wpe + (t + 1) * d];
        for i in 0..d {
            x[t * d + i] = te[i] + pe[i];
        }
    }

    let mut layers = Vec::with_capacity(cfg.n_layers);
    for lo in &lay.layers {
        let x_in = x.clone();
        let mut xn1 = vec![0.0; t_len * d];
        let mut r1 = vec![0.0; t_len];
        rmsnorm(&mut xn1, &mut r1, &x, t_len, d);

        let mut q = vec![0.0; t_len * d];
        let mut k = vec![0.0; t_len * d];
        let mut vv = vec![0.0; t_len * d];
        linear(&mut q, &xn1, &p[lo.wq..lo.wq + d * d], t_len, d, d);
        linear(&mut k, &xn1, &p[lo.wk..lo.wk + d * d], t_len, d, d);
        linear(&mut vv, &xn1, &p[lo.wv..lo.wv + d * d], t_len, d, d);

        let mut att = vec![0.0; heads * t_len * t_len];
        let mut ctx = vec![0.0; t_len * d];
        let mut scores = vec![0.0; t_len];
        for h in 0..heads {
            let hoff = h * hd;
            for t in 0..t_len {
                let qt = &q[t * d + hoff..t * d + hoff + hd];
                let mut max = f64::NEG_INFINITY;
                for (j, s) in scores.iter_mut().enumerate().take(t + 1) {
                    let kj = &k[j * d + hoff..j * d + hoff + hd];
                    *s = dot(qt, kj) * scale;
                    if *s > max {
                        max = *s;
                    }
                }
                let mut sum = 0.0;
                for s in scores.iter_mut().take(t + 1) {
                    *s = (*s - max).exp();
                    sum += *s;
                }
                let arow = &mut att[h * t_len * t_len + t * t_len..][..t + 1];
                for (a, s) in arow.iter_mut().zip(&scores) {
                    *a = s / sum;
                }
                let ct = &mut ctx[t * d + hoff..t * d + hoff + hd];
                for (j, &a) in arow.iter().enumerate() {
                    axpy(ct, a, &vv[j * d + hoff..j * d + hoff + hd]);
                }
            }
        }

        let mut attn_out = vec![0.0; t_len * d];
        linear(&mut attn_out, &ctx, &p[lo.wo..lo.wo + d * d], t_len, d, d);
        let mut x_mid = vec![0.0; t_len * d];
        for i in 0..t_len * d {
            x_mid[i] = x_in[i] + attn_out[i];
        }

        let mut xn2 = vec![0.0; t_len * d];
        let mut r2 = vec![0.0; t_len];
        rmsnorm(&mut xn2, &mut r2, &x_mid, t_len, d);

        let mut h1 = vec![0.0; t_len * f];
        linear(&mut h1, &xn2, &p[lo.w1..lo.w1 + f * d], t_len, d, f);
        let mut ha = vec![0.0; t_len * f];
        for (o, &z) in ha.iter_mut().zip(&h1) {
            *o = z * sigmoid(z);
        }
        let mut ff = vec![0.0; t_len * d];
        linear(&mut ff, &ha, &p[lo.w2..lo.w2 + d * f], t_len, f, d);

        for i in 0..t_len * d {
            x[i] = x_mid[i] + ff[i];
        }

        layers.push(LayerTape {
            x_in,
            xn1,
            r1,
            q,
            k,
            v: vv,
            att,
            ctx,
            x_mid,
            xn2,
            r2,
            h1,
            ha,
        });
    }

    let mut logits = vec![0.0; t_len * v];
    linear(&mut logits, &x, &p[lay.w_un..lay.w_un + v * d], t_len, d, v);

    Ok(Tape {
        tokens: tokens.to_vec(),
        layers,
        xf: x,
        logits,
    })
}

/// Reverse-mode accumulation from per-row logit gradients down to every
/// parameter. `grads` must be zeroed to the full parameter length.
pub(crate) fn backward(model: &StudentModel, tape: &Tape, dlogits: &[f64], grads: &mut [f64]) {
    let cfg = model.config();
    let (d, v, f, heads) = (cfg.d_model, cfg.vocab_size, cfg.ff_dim(), cfg.n_heads);
    let hd = cfg.head_dim();
    let t_len = tape.tokens.len();
    let p = model.params();
    let lay = model.layout();
    let scale = 1.0 / (hd as f64).sqrt();

    // Unembedding.
    let mut dx = vec![0.0f64; t_len * d];
    {
        let (dw_un, w_un) = (
            &mut grads[lay.w_un..lay.w_un + v * d],
            &p[lay.w_un..lay.w_un + v * d],
        );
        linear_backward(dw_un, &mut dx, dlogits, &tape.xf, w_un, t_len, d, v);
    }

    let mut scratch = vec![0.0f64; t_len];
    for (li, lo) in lay.layers.iter().enumerate().rev() {
        let lt = &tape.layers[li];

        // Feed-forward residual branch: dx splits into the skip path and the
        // ff path; the skip part stays in dx.
        let mut dha = vec![0.0; t_len * f];
        linear_backward(
            &mut grads[lo.w2..lo.w2 + d * f],
            &mut dha,
            &dx,
            &lt.ha,
            &p[lo.w2..lo.w2 + d * f],
            t_len,
            f,
            d,
        );
        let mut dh1 = vec![0.0; t_len * f];
        for i in 0..t_len * f {
            let z = lt.h1[i];
            let s = sigmoid(z);
            dh1[i] = dha[i] * (s * (1.0 + z * (1.0 - s)));
        }
        let mut dxn2 = vec![0.0; t_len * d];
        linear_backward(
            &mut grads[lo.w1..lo.w1 + f * d],
            &mut dxn2,
            &dh1,
            &lt.xn2,
            &p[lo.w1..lo.w1 + f * d],
            t_len,
            d,
            f,
        );
        rmsnorm_backward(&mut dx, &dxn2, &lt.x_mid, &lt.r2, t_len, d);

        // Attention residual branch.
        let mut dctx = vec![0.0; t_len * d];
        linear_backward(
            &mut grads[lo.wo..lo.wo + d * d],
            &mut dctx,
            &dx,
            &lt.ctx,
            &p[lo.wo..lo.wo + d * d],
            t_len,
            d,
            d,
        );

        let mut dq = vec![0.0; t_len * d];
        let mut dk = vec![0.0; t_len * d];
        let mut dv = vec![0.0; t_len * d];
        let datt = &mut scratch[..t_len];
        for h in 0..heads {
            let hoff = h * hd;
            for t in 0..t_len {
                let arow = &lt.att[h * t_len * t_len + t * t_len..][..t + 1];
                let dct = &dctx[t * d + hoff..t * d + hoff + hd];
                // d att and d v.
                for j in 0..=t {
                    datt[j] = dot(dct, &lt.v[j * d + hoff..j * d + hoff + hd]);
                    axpy(&mut dv[j * d + hoff..j * d + hoff + hd], arow[j], dct);
                }
                // Softmax backward over the causal row.
                let inner = dot(arow, &datt[..t + 1]);
                let qt = &lt.q[t * d + hoff..t * d + hoff + hd];
                let dqt = &mut dq[t * d + hoff..t * d + hoff + hd];
                for j in 0..=t {
                    let ds = arow[j] * (datt[j] - inner) * scale;
                    if ds != 0.0 {
                        axpy(dqt, ds, &lt.k[j * d + hoff..j * d + hoff + hd]);
                        axpy(&mut dk[j * d + hoff..j * d + hoff + hd], ds, qt);
                    }
                }
            }
        }

        let mut dxn1 = vec![0.0; t_len * d];
        linear_backward(
            &mut grads[lo.wq..lo.wq + d * d],
            &mut dxn1,
            &dq,
            &lt.xn1,
            &p[lo.wq..lo.wq + d * d],
            t_len,
            d,
            d,
        );
        linear_backward(
            &mut grads[lo.wk..lo.wk + d * d],
            &mut dxn1,
            &dk,
            &lt.xn1,
            &p[lo.wk..lo.wk + d * d],
            t_len,
            d,
            d,
        );
        linear_backward(
            &mut grads[lo.wv..lo.wv + d * d],
            &mut dxn1,
            &dv,
            &lt.xn1,
            &p[lo.wv..lo.wv + d * d],
            t_len,
            d,
            d,
        );
        rmsnorm_backward(&mut dx, &dxn1, &lt.x_in, &lt.r1, t_len, d);
    }

    // Embeddings.
    for (t, &tok) in tape.tokens.iter().enumerate() {
        let dxt = &dx[t * d..(t + 1) * d];
        axpy(
            &mut grads[lay.wte + tok as usize * d..lay.wte + (tok as usize + 1) * d],
            1.0,
            dxt,
        );
        axpy(&mut grads[lay.wpe + t * d..lay.wpe + (t + 1) * d], 1.0, dxt);
    }
}
