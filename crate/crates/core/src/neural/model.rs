//! Dual-branch separable-convolution estimator.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape, Error, Result};
use crate::features::{FeatureTensor, N_FREQ};
use crate::geometry::N_TARGETS;
use crate::rng::{stream, Purpose};

use super::layers::*;
use super::loss::{nll_loss, VAR_FLOOR};

/// Epsilon of the frame-wise layer norm.
pub const NORM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    pub n_freq: usize,
    pub kernel: usize,
    pub sc_channels: usize,
    pub sc_hidden: usize,
    pub sc_dilations: Vec<usize>,
    pub sc_pool: usize,
    pub ic_channels: usize,
    pub ic_hidden: usize,
    pub ic_dilations: Vec<usize>,
    pub ic_pool: usize,
    /// Hidden dense widths; the output layer adds `2 × n_targets`.
    pub dense: Vec<usize>,
    pub n_targets: usize,
    pub conv_dropout: f64,
    pub dense_dropout: f64,
    /// `false` runs the single-channel variant without the inter-channel branch.
    pub use_ic: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            n_freq: N_FREQ,
            kernel: 11,
            sc_channels: 8,
            sc_hidden: 32,
            sc_dilations: vec![1, 2, 4],
            sc_pool: 104,
            ic_channels: 8,
            ic_hidden: 32,
            ic_dilations: vec![1],
            ic_pool: 52,
            dense: vec![96, 48],
            n_targets: N_TARGETS,
            conv_dropout: 0.2,
            dense_dropout: 0.4,
            use_ic: true,
        }
    }
}

impl ArchConfig {
    /// Same shapes with narrow bottlenecks for single-CPU training.
    pub fn desk() -> ArchConfig {
        ArchConfig {
            sc_hidden: 4,
            ic_hidden: 4,
            ..ArchConfig::default()
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.sc_channels * self.sc_pool + if self.use_ic { self.ic_channels * self.ic_pool } else { 0 }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.n_targets
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.kernel % 2 == 1
            && self.n_freq > 0
            && self.sc_channels > 0
            && self.sc_hidden > 0
            && !self.sc_dilations.is_empty()
            && self.sc_dilations.iter().chain(&self.ic_dilations).all(|d| *d >= 1)
            && (1..=self.n_freq).contains(&self.sc_pool)
            && (!self.use_ic || (self.ic_channels > 0 && self.ic_hidden > 0 && !self.ic_dilations.is_empty()))
            && (!self.use_ic || (1..=self.n_freq).contains(&self.ic_pool))
            && self.n_targets > 0
            && (0.0..1.0).contains(&self.conv_dropout)
            && (0.0..1.0).contains(&self.dense_dropout);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid architecture {self:?}")))
        }
    }
}

/// Named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct BlockIdx {
    pw1: usize,
    g1: usize,
    b1: usize,
    dw: usize,
    dwb: usize,
    g2: usize,
    b2: usize,
    pw2: usize,
    pw2b: usize,
    c_in: usize,
    hidden: usize,
    c_out: usize,
    dilation: usize,
}

#[derive(Debug, Clone, Copy)]
struct DenseIdx {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    sc: Vec<BlockIdx>,
    ic: Vec<BlockIdx>,
    dense: Vec<DenseIdx>,
}

/// Parameters, architecture and target normalisation of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: ArchConfig,
    pub tensors: Vec<Tensor>,
    /// Per-target standard deviations the outputs are scaled by.
    pub target_std: Vec<f64>,
}

struct Builder<'a, R: Rng> {
    tensors: Vec<Tensor>,
    rng: &'a mut R,
}

impl<R: Rng> Builder<'_, R> {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Const(v) => vec![v; n],
            Init::FanIn(fan_in) => {
                let bound = (3.0 / fan_in as f64).sqrt();
                (0..n).map(|_| self.rng.random_range(-bound..bound)).collect()
            }
        };
        self.tensors.push(Tensor { name, shape, data });
        self.tensors.len() - 1
    }
}

enum Init {
    Const(f64),
    FanIn(usize),
}

fn build_layout<R: Rng>(arch: &ArchConfig, b: Option<&mut Builder<'_, R>>) -> Layout {
    let mut counter = 0usize;
    let mut b = b;
    let mut add = |name: String, shape: Vec<usize>, init: Init| -> usize {
        match b.as_deref_mut() {
            Some(builder) => builder.add(name, shape, init),
            None => {
                counter += 1;
                counter - 1
            }
        }
    };
    let mut blocks = |prefix: &str, c_in: usize, hidden: usize, c_out: usize, dilations: &[usize]| -> Vec<BlockIdx> {
        let mut out = Vec::new();
        let mut cin = c_in;
        for (i, &d) in dilations.iter().enumerate() {
            let p = format!("{prefix}.{i}");
            let k = arch.kernel;
            out.push(BlockIdx {
                pw1: add(format!("{p}.pw1.weight"), vec![hidden, cin], Init::FanIn(cin)),
                g1: add(format!("{p}.norm1.gamma"), vec![hidden], Init::Const(1.0)),
                b1: add(format!("{p}.norm1.beta"), vec![hidden], Init::Const(0.0)),
                dw: add(format!("{p}.dw.weight"), vec![hidden, k], Init::FanIn(k)),
                dwb: add(format!("{p}.dw.bias"), vec![hidden], Init::Const(0.0)),
                g2: add(format!("{p}.norm2.gamma"), vec![hidden], Init::Const(1.0)),
                b2: add(format!("{p}.norm2.beta"), vec![hidden], Init::Const(0.0)),
                pw2: add(format!("{p}.pw2.weight"), vec![c_out, hidden], Init::FanIn(hidden)),
                pw2b: add(format!("{p}.pw2.bias"), vec![c_out], Init::Const(0.0)),
                c_in: cin,
                hidden,
                c_out,
                dilation: d,
            });
            cin = c_out;
        }
        out
    };
    let sc = blocks("sc", 1, arch.sc_hidden, arch.sc_channels, &arch.sc_dilations);
    let ic = if arch.use_ic {
        blocks("ic", 3, arch.ic_hidden, arch.ic_channels, &arch.ic_dilations)
    } else {
        Vec::new()
    };
    let mut dense = Vec::new();
    let mut n_in = arch.embedding_dim();
    let widths: Vec<usize> = arch.dense.iter().copied().chain([arch.output_dim()]).collect();
    for (i, &n_out) in widths.iter().enumerate() {
        dense.push(DenseIdx {
            w: add(format!("dense.{i}.weight"), vec![n_out, n_in], Init::FanIn(n_in)),
            b: add(format!("dense.{i}.bias"), vec![n_out], Init::Const(0.0)),
        });
        n_in = n_out;
    }
    Layout { sc, ic, dense }
}

/// Network input for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct Input {
    pub sc: Act,
    pub ic: Act,
}

impl Input {
    pub fn from_features(f: &FeatureTensor) -> Input {
        let (nf, nt) = (f.n_freq(), f.n_frames());
        Input {
            sc: Act::from_planes(&[&f.sc.data], nf, nt),
            ic: Act::from_planes(&f.ic_planes(), nf, nt),
        }
    }
}

/// Mean and variance per target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl Estimate {
    /// From raw network outputs `[μ, log σ²]`.
    pub fn from_raw(raw: &[f64]) -> Estimate {
        let d = raw.len() / 2;
        Estimate {
            mean: raw[..d].to_vec(),
            var: raw[d..].iter().map(|s| s.exp() + VAR_FLOOR).collect(),
        }
    }

    /// Physical units from the normalised domain.
    pub fn denormalize(&self, std: &[f64]) -> Estimate {
        Estimate {
            mean: self.mean.iter().zip(std).map(|(m, s)| m * s).collect(),
            var: self.var.iter().zip(std).map(|(v, s)| v * s * s).collect(),
        }
    }

    pub fn normalize(&self, std: &[f64]) -> Estimate {
        Estimate {
            mean: self.mean.iter().zip(std).map(|(m, s)| m / s).collect(),
            var: self.var.iter().zip(std).map(|(v, s)| v / (s * s)).collect(),
        }
    }
}

struct BlockCache {
    x: Act,
    h1: Act,
    n1c: FrameNorm,
    n1: Act,
    h2: Act,
    n2c: FrameNorm,
    n2: Act,
    mask: Option<Vec<f64>>,
}

/// Intermediate values kept for the backward pass.
pub struct ForwardCache {
    sc: Vec<BlockCache>,
    ic: Vec<BlockCache>,
    sc_shape: (usize, usize, usize),
    ic_shape: (usize, usize, usize),
    /// Inputs to each dense layer.
    dense_in: Vec<Vec<f64>>,
    /// Post-ReLU outputs of hidden dense layers.
    dense_act: Vec<Vec<f64>>,
    dense_masks: Vec<Option<Vec<f64>>>,
    pub embedding: Vec<f64>,
    pub raw: Vec<f64>,
}

impl ForwardCache {
    /// Output of the first layer norm of the first single-channel block.
    pub fn first_normalized(&self) -> &Act {
        &self.sc[0].n1
    }
}

/// Gradients in the layout of `Model::tensors`.
pub type Grads = Vec<Vec<f64>>;

impl Model {
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Model> {
        arch.validate()?;
        let mut rng = stream(seed, Purpose::Init, &[]);
        let mut b = Builder { tensors: Vec::new(), rng: &mut rng };
        let layout = build_layout(&arch, Some(&mut b));
        let mut tensors = b.tensors;
        // Variance head starts at log σ² = 0.
        let last = layout.dense.last().copied().ok_or_else(|| Error::Config("no output layer".into()))?;
        let d = arch.n_targets;
        let n_in = tensors[last.w].shape[1];
        tensors[last.w].data[d * n_in..].iter_mut().for_each(|v| *v = 0.0);
        let target_std = vec![1.0; d];
        Ok(Model { arch, tensors, target_std })
    }

    fn layout(&self) -> Layout {
        build_layout::<crate::rng::StreamRng>(&self.arch, None)
    }

    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads {
        self.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect()
    }

    /// Sets the output bias of the mean head.
    pub fn set_mean_bias(&mut self, bias: &[f64]) -> Result<()> {
        let last = *self.layout().dense.last().ok_or_else(|| Error::Config("no output layer".into()))?;
        if bias.len() != self.arch.n_targets {
            return Err(shape("mean bias length differs from the target count"));
        }
        self.tensors[last.b].data[..bias.len()].copy_from_slice(bias);
        Ok(())
    }

    /// Rounds every parameter to single precision.
    pub fn quantize(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
            && self.target_std.iter().all(|s| s.is_finite() && *s > 0.0)
    }

    fn check_input(&self, x: &Input) -> Result<()> {
        if x.sc.f != self.arch.n_freq || x.sc.c != 1 {
            return Err(shape(format!(
                "expected 1 × {} single-channel input, got {} × {}",
                self.arch.n_freq, x.sc.c, x.sc.f
            )));
        }
        if x.sc.t == 0 {
            return Err(shape("input has no frames"));
        }
        if self.arch.use_ic && (x.ic.c != 3 || x.ic.f != self.arch.n_freq || x.ic.t != x.sc.t) {
            return Err(shape(format!(
                "expected 3 × {} × {} inter-channel input, got {} × {} × {}",
                self.arch.n_freq, x.sc.t, x.ic.c, x.ic.f, x.ic.t
            )));
        }
        Ok(())
    }

    fn block_forward<R: Rng + ?Sized>(&self, b: &BlockIdx, x: Act, rng: Option<&mut R>) -> (Act, BlockCache) {
        let p = &self.tensors;
        let h1 = relu(&pointwise(&x, &p[b.pw1].data, None, b.hidden));
        let (n1, n1c) = frame_norm(&h1, &p[b.g1].data, &p[b.b1].data, NORM_EPS);
        let h2 = relu(&depthwise(&n1, &p[b.dw].data, &p[b.dwb].data, self.arch.kernel, b.dilation));
        let (n2, n2c) = frame_norm(&h2, &p[b.g2].data, &p[b.b2].data, NORM_EPS);
        let mut y = pointwise(&n2, &p[b.pw2].data, Some(&p[b.pw2b].data), b.c_out);
        let mask = rng.map(|r| dropout_mask(y.data.len(), self.arch.conv_dropout, r));
        if let Some(m) = &mask {
            apply_mask(&mut y.data, m);
        }
        if b.c_in == b.c_out {
            for (o, v) in y.data.iter_mut().zip(&x.data) {
                *o += v;
            }
        }
        (y, BlockCache { x, h1, n1c, n1, h2, n2c, n2, mask })
    }

    fn block_backward(&self, b: &BlockIdx, c: &BlockCache, dy: &Act, g: &mut Grads) -> Act {
        let p = &self.tensors;
        let mut d = dy.clone();
        if let Some(m) = &c.mask {
            apply_mask(&mut d.data, m);
        }
        let (gw, gb) = two_mut(g, b.pw2, b.pw2b);
        let d_n2 = pointwise_backward(&c.n2, &p[b.pw2].data, &d, gw, Some(gb));
        let (gg, gb) = two_mut(g, b.g2, b.b2);
        let d_h2 = frame_norm_backward(&c.n2c, &p[b.g2].data, &d_n2, gg, gb);
        let d_dw = relu_backward(&c.h2, &d_h2);
        let (gw, gb) = two_mut(g, b.dw, b.dwb);
        let d_n1 = depthwise_backward(&c.n1, &p[b.dw].data, &d_dw, self.arch.kernel, b.dilation, gw, gb);
        let (gg, gb) = two_mut(g, b.g1, b.b1);
        let d_h1 = frame_norm_backward(&c.n1c, &p[b.g1].data, &d_n1, gg, gb);
        let d_pre = relu_backward(&c.h1, &d_h1);
        let mut dx = pointwise_backward(&c.x, &p[b.pw1].data, &d_pre, &mut g[b.pw1], None);
        if b.c_in == b.c_out {
            for (o, v) in dx.data.iter_mut().zip(&dy.data) {
                *o += v;
            }
        }
        dx
    }

    /// Forward pass in the normalised domain. Dropout is active when `rng`
    /// is given.
    pub fn forward_cached<R: Rng + ?Sized>(&self, x: &Input, mut rng: Option<&mut R>) -> Result<ForwardCache> {
        self.check_input(x)?;
        let layout = self.layout();
        let p = &self.tensors;
        let mut sc_caches = Vec::new();
        let mut h = x.sc.clone();
        for b in &layout.sc {
            let (y, c) = self.block_forward(b, h, rng.as_deref_mut());
            sc_caches.push(c);
            h = y;
        }
        let sc_shape = (h.c, h.f, h.t);
        let mut embedding = pool(&h, self.arch.sc_pool);
        let mut ic_caches = Vec::new();
        let mut ic_shape = (0, 0, 0);
        if self.arch.use_ic {
            let mut h = x.ic.clone();
            for b in &layout.ic {
                let (y, c) = self.block_forward(b, h, rng.as_deref_mut());
                ic_caches.push(c);
                h = y;
            }
            ic_shape = (h.c, h.f, h.t);
            embedding.extend(pool(&h, self.arch.ic_pool));
        }
        let mut dense_in = Vec::new();
        let mut dense_act = Vec::new();
        let mut dense_masks = Vec::new();
        let mut z = embedding.clone();
        let n_layers = layout.dense.len();
        for (i, l) in layout.dense.iter().enumerate() {
            dense_in.push(z.clone());
            let y = dense(&z, &p[l.w].data, &p[l.b].data);
            if i + 1 == n_layers {
                z = y;
                break;
            }
            let mut a: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
            dense_act.push(a.clone());
            let mask = rng.as_deref_mut().map(|r| dropout_mask(a.len(), self.arch.dense_dropout, r));
            if let Some(m) = &mask {
                apply_mask(&mut a, m);
            }
            dense_masks.push(mask);
            z = a;
        }
        Ok(ForwardCache {
            sc: sc_caches,
            ic: ic_caches,
            sc_shape,
            ic_shape,
            dense_in,
            dense_act,
            dense_masks,
            embedding,
            raw: z,
        })
    }

    /// Inference in the normalised domain.
    pub fn forward(&self, x: &Input) -> Result<Estimate> {
        let c = self.forward_cached::<crate::rng::StreamRng>(x, None)?;
        Ok(Estimate::from_raw(&c.raw))
    }

    /// Pooled embedding without dropout.
    pub fn embedding(&self, x: &Input) -> Result<Vec<f64>> {
        Ok(self.forward_cached::<crate::rng::StreamRng>(x, None)?.embedding)
    }

    /// Accumulates into `g` the gradient of a loss whose derivative with
    /// respect to the raw outputs is `d_raw`.
    pub fn backward(&self, cache: &ForwardCache, d_raw: &[f64], g: &mut Grads) {
        let layout = self.layout();
        let p = &self.tensors;
        let mut d = d_raw.to_vec();
        for i in (0..layout.dense.len()).rev() {
            let l = layout.dense[i];
            if i + 1 < layout.dense.len() {
                if let Some(m) = &cache.dense_masks[i] {
                    apply_mask(&mut d, m);
                }
                for (dv, a) in d.iter_mut().zip(&cache.dense_act[i]) {
                    if *a <= 0.0 {
                        *dv = 0.0;
                    }
                }
            }
            let (gw, gb) = two_mut(g, l.w, l.b);
            d = dense_backward(&cache.dense_in[i], &p[l.w].data, &d, gw, gb);
        }
        let n_sc = self.arch.sc_channels * self.arch.sc_pool;
        let mut dh = pool_backward(cache.sc_shape, self.arch.sc_pool, &d[..n_sc]);
        for (b, c) in layout.sc.iter().zip(&cache.sc).rev() {
            dh = self.block_backward(b, c, &dh, g);
        }
        if self.arch.use_ic {
            let mut dh = pool_backward(cache.ic_shape, self.arch.ic_pool, &d[n_sc..]);
            for (b, c) in layout.ic.iter().zip(&cache.ic).rev() {
                dh = self.block_backward(b, c, &dh, g);
            }
        }
    }

    /// Loss and accumulated gradient for one example with normalised target.
    pub fn loss_and_grad<R: Rng + ?Sized>(&self, x: &Input, target: &[f64], rng: Option<&mut R>, g: &mut Grads) -> Result<f64> {
        let cache = self.forward_cached(x, rng)?;
        let est = Estimate::from_raw(&cache.raw);
        let loss = nll_loss(&est, target)?;
        let d = self.arch.n_targets;
        let mut d_raw = vec![0.0; 2 * d];
        for i in 0..d {
            let r = target[i] - est.mean[i];
            let v = est.var[i];
            d_raw[i] = -r / v;
            d_raw[d + i] = 0.5 * (1.0 / v - r * r / (v * v)) * (est.var[i] - VAR_FLOOR);
        }
        self.backward(&cache, &d_raw, g);
        Ok(loss)
    }

    /// Physical-unit estimate for a feature tensor.
    pub fn predict(&self, features: &FeatureTensor) -> Result<Estimate> {
        Ok(self.forward(&Input::from_features(features))?.denormalize(&self.target_std))
    }
}

fn two_mut(g: &mut Grads, a: usize, b: usize) -> (&mut [f64], &mut [f64]) {
    debug_assert!(a < b);
    let (lo, hi) = g.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureTensor;
    use crate::rng::StreamRng;

    pub(crate) fn tiny_arch() -> ArchConfig {
        ArchConfig {
            n_freq: 13,
            kernel: 3,
            sc_channels: 2,
            sc_hidden: 3,
            sc_dilations: vec![1, 2, 4],
            sc_pool: 4,
            ic_channels: 2,
            ic_hidden: 2,
            ic_dilations: vec![1],
            ic_pool: 3,
            dense: vec![5, 4],
            n_targets: 3,
            ..ArchConfig::default()
        }
    }

    fn noise_input(f: usize, t: usize, seed: u64) -> Input {
        let mut rng = stream(seed, Purpose::Noise, &[]);
        let mut plane = |scale: f64| -> Vec<f64> { (0..f * t).map(|_| rng.random_range(-1.0..1.0) * scale).collect() };
        let sc: Vec<f64> = plane(2.0).iter().map(|v| v.abs() + 0.1).collect();
        let (a, b, c) = (plane(1.0), plane(1.0), plane(1.0));
        Input { sc: Act::from_planes(&[&sc], f, t), ic: Act::from_planes(&[&a, &b, &c], f, t) }
    }

    #[test]
    fn full_size_shapes() {
        let m = Model::new(ArchConfig::desk(), 1).unwrap();
        assert_eq!(m.arch.embedding_dim(), 1248);
        let left: Vec<f64> = (0..48_000).map(|i| ((i * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let right: Vec<f64> = left.iter().rev().cloned().collect();
        let f = FeatureTensor::from_channels(&left, &right).unwrap();
        let x = Input::from_features(&f);
        let c = m.forward_cached::<StreamRng>(&x, None).unwrap();
        assert_eq!(c.embedding.len(), 1248);
        assert_eq!(c.raw.len(), 28);
        let short = FeatureTensor::from_channels(&left[..24_000], &right[..24_000]).unwrap();
        assert_eq!(short.n_frames(), 32);
        assert_eq!(m.forward(&Input::from_features(&short)).unwrap().mean.len(), 14);
        let mut bad = x.clone();
        bad.sc.f = 768;
        assert!(m.forward(&bad).is_err());
    }

    #[test]
    fn sc_only_variant() {
        let arch = ArchConfig { use_ic: false, ..tiny_arch() };
        let m = Model::new(arch.clone(), 2).unwrap();
        assert_eq!(arch.embedding_dim(), 8);
        let mut x = noise_input(13, 5, 1);
        x.ic = Act::zeros(0, 0, 0);
        assert_eq!(m.forward(&x).unwrap().var.len(), 3);
    }

    #[test]
    fn variance_head_starts_at_unit_variance() {
        let m = Model::new(tiny_arch(), 3).unwrap();
        let e = m.forward(&noise_input(13, 4, 2)).unwrap();
        assert!(e.var.iter().all(|v| (v - 1.0 - VAR_FLOOR).abs() < 1e-15));
    }

    #[test]
    fn first_norm_is_scale_invariant() {
        let m = Model::new(tiny_arch(), 4).unwrap();
        let x = noise_input(13, 6, 3);
        let base = m.forward_cached::<StreamRng>(&x, None).unwrap();
        for c in [0.5, 3.0, 20.0] {
            let mut y = x.clone();
            y.sc.data.iter_mut().for_each(|v| *v *= c);
            let s = m.forward_cached::<StreamRng>(&y, None).unwrap();
            for (a, b) in base.first_normalized().data.iter().zip(&s.first_normalized().data) {
                assert!((a - b).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn duplicated_frames_keep_embedding() {
        let m = Model::new(tiny_arch(), 5).unwrap();
        let x = noise_input(13, 7, 4);
        let dup = |a: &Act| -> Act {
            let mut out = Act::zeros(a.c, a.f, 2 * a.t);
            for row in 0..a.c * a.f {
                for t in 0..2 * a.t {
                    out.data[row * 2 * a.t + t] = a.data[row * a.t + t % a.t];
                }
            }
            out
        };
        let y = Input { sc: dup(&x.sc), ic: dup(&x.ic) };
        let a = m.embedding(&x).unwrap();
        let b = m.embedding(&y).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn normalisation_round_trip() {
        let e = Estimate { mean: vec![0.3, 120.0, 2.5], var: vec![0.01, 4.0, 0.2] };
        let std = [0.1, 40.0, 0.7];
        let back = e.normalize(&std).denormalize(&std);
        for (a, b) in back.mean.iter().zip(&e.mean).chain(back.var.iter().zip(&e.var)) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }
}
