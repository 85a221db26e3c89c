//! Layer kernels with hand-written backward passes.
//!
//! Activations are `[channel][freq][frame]`, flattened row-major.

use rand::Rng;

/// Activation tensor of one example.
#[derive(Debug, Clone, PartialEq)]
pub struct Act {
    pub c: usize,
    pub f: usize,
    pub t: usize,
    pub data: Vec<f64>,
}

impl Act {
    pub fn zeros(c: usize, f: usize, t: usize) -> Act {
        Act { c, f, t, data: vec![0.0; c * f * t] }
    }

    pub fn from_planes(planes: &[&[f64]], f: usize, t: usize) -> Act {
        let mut data = Vec::with_capacity(planes.len() * f * t);
        for p in planes {
            debug_assert_eq!(p.len(), f * t);
            data.extend_from_slice(p);
        }
        Act { c: planes.len(), f, t, data }
    }

    pub fn zeros_like(&self) -> Act {
        Act::zeros(self.c, self.f, self.t)
    }

    fn plane(&self) -> usize {
        self.f * self.t
    }
}

/// Elements processed per pass of the pointwise kernels; keeps every
/// channel's slice of a chunk in cache.
const CHUNK: usize = 2048;

/// `y[o] = Σ_i W[o,i] x[i] (+ b[o])` over channels.
pub fn pointwise(x: &Act, w: &[f64], b: Option<&[f64]>, out_c: usize) -> Act {
    let n = x.plane();
    let mut y = Act::zeros(out_c, x.f, x.t);
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        for o in 0..out_c {
            let yo = &mut y.data[o * n + start..o * n + end];
            if let Some(b) = b {
                yo.iter_mut().for_each(|v| *v = b[o]);
            }
            for i in 0..x.c {
                let wv = w[o * x.c + i];
                let xi = &x.data[i * n + start..i * n + end];
                for (a, v) in yo.iter_mut().zip(xi) {
                    *a += wv * v;
                }
            }
        }
    }
    y
}

/// Returns `dx`; accumulates into `dw` and `db`.
pub fn pointwise_backward(x: &Act, w: &[f64], dy: &Act, dw: &mut [f64], db: Option<&mut [f64]>) -> Act {
    let n = x.plane();
    let mut dx = x.zeros_like();
    let mut gw = vec![0.0; dy.c * x.c];
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        for i in 0..x.c {
            let xi = &x.data[i * n + start..i * n + end];
            let dxi = &mut dx.data[i * n + start..i * n + end];
            for o in 0..dy.c {
                let dyo = &dy.data[o * n + start..o * n + end];
                gw[o * x.c + i] += dyo.iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
                let wv = w[o * x.c + i];
                for (d, g) in dxi.iter_mut().zip(dyo) {
                    *d += wv * g;
                }
            }
        }
    }
    for (a, b) in dw.iter_mut().zip(&gw) {
        *a += b;
    }
    if let Some(db) = db {
        for o in 0..dy.c {
            db[o] += dy.data[o * n..(o + 1) * n].iter().sum::<f64>();
        }
    }
    dx
}

/// Per-channel convolution along frequency with zero padding, odd kernel
/// `k`, dilation `d`: `y[c,f] = b[c] + Σ_j w[c,j] x[c, f + (j − k/2) d]`.
pub fn depthwise(x: &Act, w: &[f64], b: &[f64], k: usize, d: usize) -> Act {
    let (f_len, t_len) = (x.f, x.t);
    let mut y = x.zeros_like();
    let half = (k / 2) as i64;
    for c in 0..x.c {
        let base = c * f_len * t_len;
        y.data[base..base + f_len * t_len].iter_mut().for_each(|v| *v = b[c]);
        for j in 0..k {
            let wv = w[c * k + j];
            let off = (j as i64 - half) * d as i64;
            for f in 0..f_len {
                let src = f as i64 + off;
                if src < 0 || src >= f_len as i64 {
                    continue;
                }
                let (yo, xo) = (base + f * t_len, base + src as usize * t_len);
                let xs = &x.data[xo..xo + t_len];
                for (a, v) in y.data[yo..yo + t_len].iter_mut().zip(xs) {
                    *a += wv * v;
                }
            }
        }
    }
    y
}

pub fn depthwise_backward(x: &Act, w: &[f64], dy: &Act, k: usize, d: usize, dw: &mut [f64], db: &mut [f64]) -> Act {
    let (f_len, t_len) = (x.f, x.t);
    let mut dx = x.zeros_like();
    let half = (k / 2) as i64;
    for c in 0..x.c {
        let base = c * f_len * t_len;
        db[c] += dy.data[base..base + f_len * t_len].iter().sum::<f64>();
        for j in 0..k {
            let wv = w[c * k + j];
            let off = (j as i64 - half) * d as i64;
            let mut acc = 0.0;
            for f in 0..f_len {
                let src = f as i64 + off;
                if src < 0 || src >= f_len as i64 {
                    continue;
                }
                let (yo, xo) = (base + f * t_len, base + src as usize * t_len);
                let gs = &dy.data[yo..yo + t_len];
                let xs = &x.data[xo..xo + t_len];
                acc += gs.iter().zip(xs).map(|(g, v)| g * v).sum::<f64>();
                for (d, g) in dx.data[xo..xo + t_len].iter_mut().zip(gs) {
                    *d += wv * g;
                }
            }
            dw[c * k + j] += acc;
        }
    }
    dx
}

pub fn relu(x: &Act) -> Act {
    Act {
        data: x.data.iter().map(|v| v.max(0.0)).collect(),
        ..*x
    }
}

/// Gradient through ReLU given its output.
pub fn relu_backward(y: &Act, dy: &Act) -> Act {
    Act {
        data: y.data.iter().zip(&dy.data).map(|(o, g)| if *o > 0.0 { *g } else { 0.0 }).collect(),
        ..*y
    }
}

/// Normalisation statistics of one frame.
#[derive(Debug, Clone)]
pub struct FrameNorm {
    /// Normalised input `x̂`.
    pub xhat: Act,
    /// `1 / sqrt(var + eps)` per frame.
    pub inv_std: Vec<f64>,
}

/// Layer norm over all channels and frequencies of each frame with a
/// per-channel affine transform.
pub fn frame_norm(x: &Act, gamma: &[f64], beta: &[f64], eps: f64) -> (Act, FrameNorm) {
    let (c_len, f_len, t_len) = (x.c, x.f, x.t);
    let n = (c_len * f_len) as f64;
    let mut mean = vec![0.0; t_len];
    for row in x.data.chunks_exact(t_len) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; t_len];
    for row in x.data.chunks_exact(t_len) {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s / n + eps).sqrt()).collect();
    let mut xhat = x.zeros_like();
    let mut y = x.zeros_like();
    let rows = x.data.chunks_exact(t_len).zip(xhat.data.chunks_exact_mut(t_len)).zip(y.data.chunks_exact_mut(t_len));
    for (r, ((xr, hr), yr)) in rows.enumerate() {
        let (g, b) = (gamma[r / f_len], beta[r / f_len]);
        for ((((xv, hv), yv), m), is) in xr.iter().zip(hr.iter_mut()).zip(yr.iter_mut()).zip(&mean).zip(&inv_std) {
            let h = (xv - m) * is;
            *hv = h;
            *yv = g * h + b;
        }
    }
    (y, FrameNorm { xhat, inv_std })
}

pub fn frame_norm_backward(cache: &FrameNorm, gamma: &[f64], dy: &Act, dgamma: &mut [f64], dbeta: &mut [f64]) -> Act {
    let xh = &cache.xhat;
    let (c_len, f_len, t_len) = (xh.c, xh.f, xh.t);
    let n = (c_len * f_len) as f64;
    let mut dxhat = xh.zeros_like();
    let mut mean_d = vec![0.0; t_len];
    let mut mean_dx = vec![0.0; t_len];
    let rows = dy.data.chunks_exact(t_len).zip(xh.data.chunks_exact(t_len)).zip(dxhat.data.chunks_exact_mut(t_len));
    for (r, ((gr, hr), dr)) in rows.enumerate() {
        let c = r / f_len;
        let (mut sg, mut sgh) = (0.0, 0.0);
        for ((((g, h), d), md), mdx) in gr.iter().zip(hr).zip(dr.iter_mut()).zip(mean_d.iter_mut()).zip(mean_dx.iter_mut()) {
            sg += g;
            sgh += g * h;
            let v = g * gamma[c];
            *d = v;
            *md += v;
            *mdx += v * h;
        }
        dgamma[c] += sgh;
        dbeta[c] += sg;
    }
    mean_d.iter_mut().for_each(|v| *v /= n);
    mean_dx.iter_mut().for_each(|v| *v /= n);
    for (dr, hr) in dxhat.data.chunks_exact_mut(t_len).zip(xh.data.chunks_exact(t_len)) {
        for ((((d, h), md), mdx), is) in dr.iter_mut().zip(hr).zip(&mean_d).zip(&mean_dx).zip(&cache.inv_std) {
            *d = is * (*d - md - h * mdx);
        }
    }
    debug_assert_eq!(dxhat.data.len(), c_len * f_len * t_len);
    dxhat
}

/// Inverted-dropout mask: kept entries hold `1 / (1 − p)`, dropped ones 0.
pub fn dropout_mask<R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect()
}

pub fn apply_mask(x: &mut [f64], mask: &[f64]) {
    for (v, m) in x.iter_mut().zip(mask) {
        *v *= m;
    }
}

/// Frequency ranges of adaptive average pooling from `f` bins to `p`.
pub fn pool_ranges(f: usize, p: usize) -> Vec<(usize, usize)> {
    (0..p).map(|i| (i * f / p, ((i + 1) * f).div_ceil(p))).collect()
}

/// Adaptive average pooling along frequency followed by the mean over
/// frames: returns `c × p` values.
pub fn pool(x: &Act, p: usize) -> Vec<f64> {
    let ranges = pool_ranges(x.f, p);
    let mut out = vec![0.0; x.c * p];
    for c in 0..x.c {
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            let start = (c * x.f + lo) * x.t;
            let end = (c * x.f + hi) * x.t;
            let s: f64 = x.data[start..end].iter().sum();
            out[c * p + i] = s / ((hi - lo) * x.t) as f64;
        }
    }
    out
}

pub fn pool_backward(shape: (usize, usize, usize), p: usize, dy: &[f64]) -> Act {
    let (c_len, f_len, t_len) = shape;
    let ranges = pool_ranges(f_len, p);
    let mut dx = Act::zeros(c_len, f_len, t_len);
    for c in 0..c_len {
        for (i, &(lo, hi)) in ranges.iter().enumerate() {
            let g = dy[c * p + i] / ((hi - lo) * t_len) as f64;
            let start = (c * f_len + lo) * t_len;
            let end = (c * f_len + hi) * t_len;
            dx.data[start..end].iter_mut().for_each(|v| *v += g);
        }
    }
    dx
}

/// `y = W x + b` with `W` of shape `out × in`.
pub fn dense(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, bo)| bo + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
        .collect()
}

pub fn dense_backward(x: &[f64], w: &[f64], dy: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let n_in = x.len();
    let mut dx = vec![0.0; n_in];
    for (o, g) in dy.iter().enumerate() {
        db[o] += g;
        let row = o * n_in..(o + 1) * n_in;
        for ((d, wv), (dx_i, xv)) in dw[row.clone()].iter_mut().zip(&w[row]).zip(dx.iter_mut().zip(x)) {
            *d += g * xv;
            *dx_i += g * wv;
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pooling_covers_every_bin() {
        for (f, p) in [(769, 104), (769, 52), (10, 3), (8, 8)] {
            let r = pool_ranges(f, p);
            assert_eq!(r[0].0, 0);
            assert_eq!(r[p - 1].1, f);
            for w in r.windows(2) {
                assert!(w[1].0 <= w[0].1);
            }
        }
    }

    #[test]
    fn frame_norm_standardises_each_frame() {
        let x = Act { c: 2, f: 3, t: 2, data: (0..12).map(|v| (v * v) as f64).collect() };
        let (y, _) = frame_norm(&x, &[1.0, 1.0], &[0.0, 0.0], 1e-12);
        for t in 0..2 {
            let vals: Vec<f64> = (0..6).map(|i| y.data[i * 2 + t]).collect();
            let m = vals.iter().sum::<f64>() / 6.0;
            let v = vals.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / 6.0;
            assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn depthwise_identity_kernel() {
        let x = Act { c: 1, f: 5, t: 2, data: (0..10).map(f64::from).collect() };
        let mut w = vec![0.0; 3];
        w[1] = 1.0;
        assert_eq!(depthwise(&x, &w, &[0.0], 3, 2).data, x.data);
        // Shift by one dilation step.
        let w = [0.0, 0.0, 1.0];
        let y = depthwise(&x, &w, &[0.0], 3, 2);
        assert_eq!(&y.data[..6], &x.data[4..10]);
        assert!(y.data[6..].iter().all(|v| *v == 0.0));
    }
}
