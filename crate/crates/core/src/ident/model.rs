//! Encoder-only Transformer classifier with hand-written backpropagation.
//!
//! Each block is post-norm: `h1 = LN(h + drop(attn(h)))`,
//! `h2 = LN(h1 + drop(ff(h1)))` with a GELU feed-forward layer. Only the
//! real (unmasked) positions are propagated, so padded positions get zero
//! attention weight and cannot influence the output. The pooled vector is the
//! mean over real positions, or a learned bias when there are none.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::IdentError;
use crate::scalar::Real;

pub const N_FEATURES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_features: usize,
    pub d_model: usize,
    pub heads: usize,
    pub layers: usize,
    pub d_ff: usize,
    pub n_classes: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_features: N_FEATURES,
            d_model: 32,
            heads: 4,
            layers: 2,
            d_ff: 64,
            n_classes: 6,
            max_len: 128,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), IdentError> {
        let sizes = [
            ("n_features", self.n_features),
            ("d_model", self.d_model),
            ("heads", self.heads),
            ("layers", self.layers),
            ("d_ff", self.d_ff),
            ("n_classes", self.n_classes),
            ("max_len", self.max_len),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(IdentError::Argument(format!("{name} must be positive")));
            }
        }
        if self.d_model % self.heads != 0 {
            return Err(IdentError::Argument(format!(
                "d_model {} is not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(IdentError::Argument(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamGroup {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Block {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln1_g: usize,
    ln1_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    ln2_g: usize,
    ln2_b: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    groups: Vec<ParamGroup>,
    embed_w: usize,
    embed_b: usize,
    pos: usize,
    blocks: Vec<Block>,
    pool_bias: usize,
    head_w: usize,
    head_b: usize,
    total: usize,
}

impl Layout {
    fn new(c: &ModelConfig) -> Self {
        let mut groups: Vec<ParamGroup> = Vec::new();
        let mut offset = 0;
        let mut add = |name: String, rows: usize, cols: usize| {
            groups.push(ParamGroup {
                name,
                offset,
                rows,
                cols,
            });
            offset += rows * cols;
            groups.len() - 1
        };
        let (f, d, ff) = (c.n_features, c.d_model, c.d_ff);
        let embed_w = add("embed.weight".into(), f, d);
        let embed_b = add("embed.bias".into(), 1, d);
        let pos = add("positional".into(), c.max_len, d);
        let mut blocks = Vec::new();
        for l in 0..c.layers {
            let p = |s: &str| format!("block{l}.{s}");
            blocks.push(Block {
                wq: add(p("attn.wq"), d, d),
                bq: add(p("attn.bq"), 1, d),
                wk: add(p("attn.wk"), d, d),
                bk: add(p("attn.bk"), 1, d),
                wv: add(p("attn.wv"), d, d),
                bv: add(p("attn.bv"), 1, d),
                wo: add(p("attn.wo"), d, d),
                bo: add(p("attn.bo"), 1, d),
                ln1_g: add(p("ln1.gain"), 1, d),
                ln1_b: add(p("ln1.bias"), 1, d),
                w1: add(p("ff.w1"), d, ff),
                b1: add(p("ff.b1"), 1, ff),
                w2: add(p("ff.w2"), ff, d),
                b2: add(p("ff.b2"), 1, d),
                ln2_g: add(p("ln2.gain"), 1, d),
                ln2_b: add(p("ln2.bias"), 1, d),
            });
        }
        let pool_bias = add("pool.bias".into(), 1, d);
        let head_w = add("head.weight".into(), d, c.n_classes);
        let head_b = add("head.bias".into(), 1, c.n_classes);
        Self {
            groups,
            embed_w,
            embed_b,
            pos,
            blocks,
            pool_bias,
            head_w,
            head_b,
            total: offset,
        }
    }
}

/// One input window: `len` rows of features, `mask[i]` true for real steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Window<T> {
    pub x: Vec<T>,
    pub mask: Vec<bool>,
    pub label: usize,
}

impl<T: Real> Window<T> {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn real_steps(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentModel<T> {
    pub config: ModelConfig,
    pub params: Vec<T>,
    layout: Layout,
}

// out[n x m] = x[n x k] * w[k x m] + b
fn linear<T: Real>(x: &[T], n: usize, k: usize, w: &[T], b: &[T], m: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n * m);
    for i in 0..n {
        out.extend_from_slice(b);
        let row = &mut out[i * m..(i + 1) * m];
        for (p, &xv) in x[i * k..(i + 1) * k].iter().enumerate() {
            if xv == T::zero() {
                continue;
            }
            axpy(row, xv, &w[p * m..(p + 1) * m]);
        }
    }
    out
}

// Four running sums so the reduction can use vector lanes.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail = ca.remainder().iter().zip(cb.remainder()).fold(T::zero(), |s, (&x, &y)| s + x * y);
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] = acc[l] + x[l] * y[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy<T: Real>(y: &mut [T], a: T, x: &[T]) {
    for (o, &v) in y.iter_mut().zip(x) {
        *o = *o + a * v;
    }
}

// Accumulates dw += x^T dy, db += colsum(dy) and returns dx = dy w^T.
fn linear_back<T: Real>(dy: &[T], x: &[T], n: usize, k: usize, w: &[T], m: usize, dw: &mut [T], db: &mut [T]) -> Vec<T> {
    let mut dx = vec![T::zero(); n * k];
    for ((dyr, xr), dxr) in dy.chunks_exact(m).zip(x.chunks_exact(k)).zip(dx.chunks_exact_mut(k)).take(n) {
        axpy(db, T::one(), dyr);
        for (((&xv, g), wr), dwr) in xr.iter().zip(dxr.iter_mut()).zip(w.chunks_exact(m)).zip(dw.chunks_exact_mut(m)) {
            if xv != T::zero() {
                axpy(dwr, xv, dyr);
            }
            *g = dot(dyr, wr);
        }
    }
    dx
}

const LN_EPS: f64 = 1e-5;

struct NormCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

fn layer_norm<T: Real>(x: &[T], n: usize, d: usize, g: &[T], b: &[T]) -> (Vec<T>, NormCache<T>) {
    let mut y = vec![T::zero(); n * d];
    let mut xhat = vec![T::zero(); n * d];
    let mut inv_std = Vec::with_capacity(n);
    let dn = T::from_usize(d).unwrap();
    for i in 0..n {
        let r = &x[i * d..(i + 1) * d];
        let mean = r.iter().copied().sum::<T>() / dn;
        let var = r.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
        let inv = T::one() / (var + T::lit(LN_EPS)).sqrt();
        inv_std.push(inv);
        for j in 0..d {
            let h = (r[j] - mean) * inv;
            xhat[i * d + j] = h;
            y[i * d + j] = h * g[j] + b[j];
        }
    }
    (y, NormCache { xhat, inv_std })
}

fn layer_norm_back<T: Real>(dy: &[T], c: &NormCache<T>, n: usize, d: usize, g: &[T], dg: &mut [T], db: &mut [T]) -> Vec<T> {
    let mut dx = vec![T::zero(); n * d];
    let dn = T::from_usize(d).unwrap();
    for i in 0..n {
        let dyr = &dy[i * d..(i + 1) * d];
        let xh = &c.xhat[i * d..(i + 1) * d];
        let mut sum = T::zero();
        let mut sum_x = T::zero();
        for j in 0..d {
            dg[j] = dg[j] + dyr[j] * xh[j];
            db[j] = db[j] + dyr[j];
            let dxh = dyr[j] * g[j];
            sum = sum + dxh;
            sum_x = sum_x + dxh * xh[j];
        }
        let k = c.inv_std[i] / dn;
        for j in 0..d {
            let dxh = dyr[j] * g[j];
            dx[i * d + j] = k * (dn * dxh - sum - xh[j] * sum_x);
        }
    }
    dx
}

fn gelu<T: Real>(u: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let a = T::lit(0.044715);
    T::lit(0.5) * u * (T::one() + (c * (u + a * u * u * u)).tanh())
}

fn gelu_grad<T: Real>(u: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let a = T::lit(0.044715);
    let t = (c * (u + a * u * u * u)).tanh();
    let half = T::lit(0.5);
    half * (T::one() + t) + half * u * (T::one() - t * t) * c * (T::one() + T::lit(3.0) * a * u * u)
}

fn softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

struct LayerCache<T> {
    h_in: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// heads x n x n
    attn: Vec<T>,
    o: Vec<T>,
    drop1: Option<Vec<T>>,
    n1: NormCache<T>,
    h1: Vec<T>,
    u: Vec<T>,
    f: Vec<T>,
    drop2: Option<Vec<T>>,
    n2: NormCache<T>,
}

struct Cache<T> {
    idx: Vec<usize>,
    x: Vec<T>,
    layers: Vec<LayerCache<T>>,
    pooled: Vec<T>,
    probs: Vec<T>,
}

/// Per-group summary of a gradient check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub groups: Vec<GroupCheck>,
}

/// Denominator floor of the relative error in [`IdentModel::grad_check`].
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

impl<T: Real> IdentModel<T> {
    /// Seeded initialisation: scaled normal weights, zero biases, unit
    /// layer-norm gains and sinusoidal positional encodings.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, IdentError> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![T::zero(); layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (gi, g) in layout.groups.iter().enumerate() {
            let slot = &mut params[g.range()];
            if gi == layout.pos {
                let d = g.cols;
                for p in 0..g.rows {
                    for i in 0..d {
                        let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
                        let a = p as f64 / rate;
                        slot[p * d + i] = T::lit(if i % 2 == 0 { a.sin() } else { a.cos() });
                    }
                }
            } else if g.name.ends_with("gain") {
                slot.iter_mut().for_each(|v| *v = T::one());
            } else if g.rows > 1 {
                let sd = (2.0 / (g.rows + g.cols) as f64).sqrt();
                let normal = Normal::new(0.0, sd).expect("finite sd");
                slot.iter_mut().for_each(|v| *v = T::lit(normal.sample(&mut rng)));
            }
        }
        Ok(Self { config, params, layout })
    }

    /// Rebuilds a model from a configuration and a flat parameter vector.
    pub fn from_params(config: ModelConfig, params: Vec<T>) -> Result<Self, IdentError> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(IdentError::Shape(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Self { config, params, layout })
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.layout.groups
    }

    pub fn group(&self, name: &str) -> Option<&ParamGroup> {
        self.layout.groups.iter().find(|g| g.name == name)
    }

    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    fn p(&self, gi: usize) -> &[T] {
        &self.params[self.layout.groups[gi].range()]
    }

    fn check(&self, w: &Window<T>) -> Result<(), IdentError> {
        let c = &self.config;
        if w.len() > c.max_len {
            return Err(IdentError::Shape(format!("window of {} steps exceeds {}", w.len(), c.max_len)));
        }
        if w.x.len() != w.len() * c.n_features {
            return Err(IdentError::Shape(format!(
                "window has {} values, expected {} x {}",
                w.x.len(),
                w.len(),
                c.n_features
            )));
        }
        if w.label >= c.n_classes {
            return Err(IdentError::Shape(format!("label {} outside {} classes", w.label, c.n_classes)));
        }
        Ok(())
    }

    fn forward_cached<R: Rng>(&self, w: &Window<T>, mode: Mode, rng: &mut Option<&mut R>) -> Cache<T> {
        let c = &self.config;
        let (f, d, ff, heads) = (c.n_features, c.d_model, c.d_ff, c.heads);
        let dh = d / heads;
        let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
        let keep = T::lit(1.0 - c.dropout);
        let lay = &self.layout;

        let idx: Vec<usize> = (0..w.len()).filter(|&i| w.mask[i]).collect();
        let n = idx.len();
        let x: Vec<T> = idx.iter().flat_map(|&i| w.x[i * f..(i + 1) * f].iter().copied()).collect();
        let mut h = linear(&x, n, f, self.p(lay.embed_w), self.p(lay.embed_b), d);
        let pos = self.p(lay.pos);
        for (r, &i) in idx.iter().enumerate() {
            for j in 0..d {
                h[r * d + j] = h[r * d + j] + pos[i * d + j];
            }
        }

        let mut dropout_mask = |len: usize| -> Option<Vec<T>> {
            if mode == Mode::Eval || c.dropout == 0.0 {
                return None;
            }
            let rng = rng.as_mut().expect("training mode needs a random source");
            Some(
                (0..len)
                    .map(|_| if rng.random::<f64>() < c.dropout { T::zero() } else { T::one() / keep })
                    .collect(),
            )
        };

        let mut layers = Vec::with_capacity(lay.blocks.len());
        for b in &lay.blocks {
            let q = linear(&h, n, d, self.p(b.wq), self.p(b.bq), d);
            let k = linear(&h, n, d, self.p(b.wk), self.p(b.bk), d);
            let v = linear(&h, n, d, self.p(b.wv), self.p(b.bv), d);
            let mut attn = vec![T::zero(); heads * n * n];
            let mut o = vec![T::zero(); n * d];
            for hd in 0..heads {
                let off = hd * dh;
                for i in 0..n {
                    let row = &mut attn[(hd * n + i) * n..(hd * n + i + 1) * n];
                    let qi = &q[i * d + off..i * d + off + dh];
                    for (j, s) in row.iter_mut().enumerate() {
                        let kj = &k[j * d + off..j * d + off + dh];
                        *s = dot(qi, kj) * scale;
                    }
                    softmax_in_place(row);
                    let oi = &mut o[i * d + off..i * d + off + dh];
                    for (j, &a) in row.iter().enumerate() {
                        axpy(oi, a, &v[j * d + off..j * d + off + dh]);
                    }
                }
            }
            let mut a = linear(&o, n, d, self.p(b.wo), self.p(b.bo), d);
            let drop1 = dropout_mask(n * d);
            if let Some(m) = &drop1 {
                a.iter_mut().zip(m).for_each(|(v, &s)| *v = *v * s);
            }
            let r1: Vec<T> = h.iter().zip(&a).map(|(&x, &y)| x + y).collect();
            let (h1, n1) = layer_norm(&r1, n, d, self.p(b.ln1_g), self.p(b.ln1_b));
            let u = linear(&h1, n, d, self.p(b.w1), self.p(b.b1), ff);
            let fa: Vec<T> = u.iter().map(|&x| gelu(x)).collect();
            let mut f2 = linear(&fa, n, ff, self.p(b.w2), self.p(b.b2), d);
            let drop2 = dropout_mask(n * d);
            if let Some(m) = &drop2 {
                f2.iter_mut().zip(m).for_each(|(v, &s)| *v = *v * s);
            }
            let r2: Vec<T> = h1.iter().zip(&f2).map(|(&x, &y)| x + y).collect();
            let (h2, n2) = layer_norm(&r2, n, d, self.p(b.ln2_g), self.p(b.ln2_b));
            layers.push(LayerCache {
                h_in: std::mem::replace(&mut h, h2),
                q,
                k,
                v,
                attn,
                o,
                drop1,
                n1,
                h1,
                u,
                f: fa,
                drop2,
                n2,
            });
        }

        let pooled: Vec<T> = if n == 0 {
            self.p(lay.pool_bias).to_vec()
        } else {
            let nn = T::from_usize(n).unwrap();
            (0..d).map(|j| (0..n).map(|i| h[i * d + j]).sum::<T>() / nn).collect()
        };
        let mut probs = linear(&pooled, 1, d, self.p(lay.head_w), self.p(lay.head_b), c.n_classes);
        softmax_in_place(&mut probs);
        Cache {
            idx,
            x,
            layers,
            pooled,
            probs,
        }
    }

    fn backward(&self, cache: &Cache<T>, label: usize, weight: T, grad: &mut [T]) {
        let c = &self.config;
        let (f, d, ff, heads) = (c.n_features, c.d_model, c.d_ff, c.heads);
        let dh = d / heads;
        let scale = T::one() / T::from_usize(dh).unwrap().sqrt();
        let lay = &self.layout;
        let n = cache.idx.len();
        let gr = |gi: usize| lay.groups[gi].range();

        let dlogits: Vec<T> = cache
            .probs
            .iter()
            .enumerate()
            .map(|(k, &p)| weight * (p - if k == label { T::one() } else { T::zero() }))
            .collect();
        let (hw, hb) = (gr(lay.head_w), gr(lay.head_b));
        let dpooled = {
            let (lo, hi) = grad.split_at_mut(hb.start);
            linear_back(&dlogits, &cache.pooled, 1, d, self.p(lay.head_w), c.n_classes, &mut lo[hw], &mut hi[..hb.len()])
        };
        if n == 0 {
            for (g, v) in grad[gr(lay.pool_bias)].iter_mut().zip(&dpooled) {
                *g = *g + *v;
            }
            return;
        }
        let nn = T::from_usize(n).unwrap();
        let mut dh_cur: Vec<T> = (0..n).flat_map(|_| dpooled.iter().map(|&v| v / nn)).collect();

        // Accumulates into two groups that may appear in either order.
        fn pair<T>(grad: &mut [T], a: std::ops::Range<usize>, b: std::ops::Range<usize>) -> (&mut [T], &mut [T]) {
            if a.start < b.start {
                let (lo, hi) = grad.split_at_mut(b.start);
                (&mut lo[a], &mut hi[..b.len()])
            } else {
                let (lo, hi) = grad.split_at_mut(a.start);
                (&mut hi[..a.len()], &mut lo[b])
            }
        }

        for (b, lc) in lay.blocks.iter().zip(&cache.layers).rev() {
            let (g2, b2) = pair(grad, gr(b.ln2_g), gr(b.ln2_b));
            let dr2 = layer_norm_back(&dh_cur, &lc.n2, n, d, self.p(b.ln2_g), g2, b2);
            let mut df2 = dr2.clone();
            if let Some(m) = &lc.drop2 {
                df2.iter_mut().zip(m).for_each(|(v, &s)| *v = *v * s);
            }
            let (w2, bb2) = pair(grad, gr(b.w2), gr(b.b2));
            let dfa = linear_back(&df2, &lc.f, n, ff, self.p(b.w2), d, w2, bb2);
            let du: Vec<T> = dfa.iter().zip(&lc.u).map(|(&g, &u)| g * gelu_grad(u)).collect();
            let (w1, bb1) = pair(grad, gr(b.w1), gr(b.b1));
            let dh1_ff = linear_back(&du, &lc.h1, n, d, self.p(b.w1), ff, w1, bb1);
            let dh1: Vec<T> = dr2.iter().zip(&dh1_ff).map(|(&a, &b)| a + b).collect();

            let (g1, bl1) = pair(grad, gr(b.ln1_g), gr(b.ln1_b));
            let dr1 = layer_norm_back(&dh1, &lc.n1, n, d, self.p(b.ln1_g), g1, bl1);
            let mut da = dr1.clone();
            if let Some(m) = &lc.drop1 {
                da.iter_mut().zip(m).for_each(|(v, &s)| *v = *v * s);
            }
            let (wo, bo) = pair(grad, gr(b.wo), gr(b.bo));
            let d_o = linear_back(&da, &lc.o, n, d, self.p(b.wo), d, wo, bo);

            let mut dq = vec![T::zero(); n * d];
            let mut dk = vec![T::zero(); n * d];
            let mut dv = vec![T::zero(); n * d];
            let mut ds = vec![T::zero(); n];
            for hd in 0..heads {
                let off = hd * dh;
                for i in 0..n {
                    let arow = &lc.attn[(hd * n + i) * n..(hd * n + i + 1) * n];
                    let doi = &d_o[i * d + off..i * d + off + dh];
                    let mut total = T::zero();
                    for j in 0..n {
                        let vj = &lc.v[j * d + off..j * d + off + dh];
                        let da_ij = dot(doi, vj);
                        ds[j] = da_ij;
                        total = total + arow[j] * da_ij;
                        axpy(&mut dv[j * d + off..j * d + off + dh], arow[j], doi);
                    }
                    let qi = &lc.q[i * d + off..i * d + off + dh];
                    for j in 0..n {
                        let s = arow[j] * (ds[j] - total) * scale;
                        if s == T::zero() {
                            continue;
                        }
                        axpy(&mut dq[i * d + off..i * d + off + dh], s, &lc.k[j * d + off..j * d + off + dh]);
                        axpy(&mut dk[j * d + off..j * d + off + dh], s, qi);
                    }
                }
            }
            let mut dh_in = dr1;
            for (wi, bi, dy) in [(b.wq, b.bq, &dq), (b.wk, b.bk, &dk), (b.wv, b.bv, &dv)] {
                let (w, bb) = pair(grad, gr(wi), gr(bi));
                let dx = linear_back(dy, &lc.h_in, n, d, self.p(wi), d, w, bb);
                dh_in.iter_mut().zip(&dx).for_each(|(a, &b)| *a = *a + b);
            }
            dh_cur = dh_in;
        }

        let pr = gr(lay.pos);
        for (r, &i) in cache.idx.iter().enumerate() {
            for j in 0..d {
                let g = &mut grad[pr.start + i * d + j];
                *g = *g + dh_cur[r * d + j];
            }
        }
        let (ew, eb) = pair(grad, gr(lay.embed_w), gr(lay.embed_b));
        linear_back(&dh_cur, &cache.x, n, f, self.p(lay.embed_w), d, ew, eb);
    }

    /// Class probabilities in evaluation mode.
    pub fn predict(&self, w: &Window<T>) -> Result<Vec<T>, IdentError> {
        self.check(w)?;
        Ok(self.forward_cached::<ChaCha8Rng>(w, Mode::Eval, &mut None).probs)
    }

    pub fn predict_batch(&self, batch: &[Window<T>]) -> Result<Vec<Vec<T>>, IdentError> {
        batch.iter().map(|w| self.predict(w)).collect()
    }

    /// Attention weights of every layer, `heads x len x len` row-major over
    /// the full window. Rows of real queries sum to one; columns of padded
    /// keys and rows of padded queries are zero.
    pub fn attention(&self, w: &Window<T>) -> Result<Vec<Vec<T>>, IdentError> {
        self.check(w)?;
        let cache = self.forward_cached::<ChaCha8Rng>(w, Mode::Eval, &mut None);
        let (len, n, heads) = (w.len(), cache.idx.len(), self.config.heads);
        Ok(cache
            .layers
            .iter()
            .map(|lc| {
                let mut full = vec![T::zero(); heads * len * len];
                for hd in 0..heads {
                    for (i, &qi) in cache.idx.iter().enumerate() {
                        for (j, &kj) in cache.idx.iter().enumerate() {
                            full[(hd * len + qi) * len + kj] = lc.attn[(hd * n + i) * n + j];
                        }
                    }
                }
                full
            })
            .collect())
    }

    /// Mean cross-entropy over the batch in evaluation mode.
    pub fn loss(&self, batch: &[Window<T>]) -> Result<T, IdentError> {
        if batch.is_empty() {
            return Err(IdentError::Argument("empty batch".into()));
        }
        let mut total = T::zero();
        for w in batch {
            let p = self.predict(w)?;
            total = total - p[w.label].max(T::min_positive_value()).ln();
        }
        Ok(total / T::from_usize(batch.len()).unwrap())
    }

    /// Mean cross-entropy and its gradient with respect to every parameter.
    pub fn loss_and_grad<R: Rng>(
        &self,
        batch: &[Window<T>],
        mode: Mode,
        rng: Option<&mut R>,
    ) -> Result<(T, Vec<T>), IdentError> {
        if batch.is_empty() {
            return Err(IdentError::Argument("empty batch".into()));
        }
        let mut rng = rng;
        let weight = T::one() / T::from_usize(batch.len()).unwrap();
        let mut grad = vec![T::zero(); self.layout.total];
        let mut total = T::zero();
        for w in batch {
            self.check(w)?;
            let cache = self.forward_cached(w, mode, &mut rng);
            total = total - cache.probs[w.label].max(T::min_positive_value()).ln();
            self.backward(&cache, w.label, weight, &mut grad);
        }
        Ok((total * weight, grad))
    }

    /// Largest relative difference between analytic and central-difference
    /// gradients over at least `coords` sampled coordinates, drawn from every
    /// parameter group. Relative error is `|a - n| / max(|a|, |n|, floor)`.
    pub fn grad_check(&self, batch: &[Window<T>], epsilon: f64, coords: usize, seed: u64) -> Result<GradCheckReport, IdentError> {
        let (_, analytic) = self.loss_and_grad::<ChaCha8Rng>(batch, Mode::Eval, None)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_groups = self.layout.groups.len();
        let per_group = coords.div_ceil(n_groups).max(1);
        let mut probe = self.clone();
        let eps = T::lit(epsilon);
        let mut groups = Vec::with_capacity(n_groups);
        let mut checked = 0;
        let mut worst: f64 = 0.0;
        for g in &self.layout.groups {
            let take = per_group.min(g.len());
            let picks: Vec<usize> = if take == g.len() {
                g.range().collect()
            } else {
                rand::seq::index::sample(&mut rng, g.len(), take).into_iter().map(|i| g.offset + i).collect()
            };
            let mut gmax: f64 = 0.0;
            for i in picks {
                let orig = probe.params[i];
                probe.params[i] = orig + eps;
                let up = probe.loss(batch)?;
                probe.params[i] = orig - eps;
                let down = probe.loss(batch)?;
                probe.params[i] = orig;
                let numeric = ((up - down) / (eps + eps)).as_f64();
                let a = analytic[i].as_f64();
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
                gmax = gmax.max(rel);
                checked += 1;
            }
            worst = worst.max(gmax);
            groups.push(GroupCheck {
                name: g.name.clone(),
                checked: take,
                max_rel_error: gmax,
            });
        }
        Ok(GradCheckReport {
            max_rel_error: worst,
            checked,
            groups,
        })
    }
}
