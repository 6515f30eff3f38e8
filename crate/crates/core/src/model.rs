//! A small multi-stage temporal convolutional network with exact,
//! hand-written gradients.
//!
//! Each stage is a 1×1 input projection, a stack of residual layers
//! `h ← h + W₁·relu(conv_d(h))` with width-3 convolutions dilated by `2^ℓ`
//! and zero padding, and a 1×1 projection to class scores followed by a
//! softmax. Stage `s > 1` consumes the probabilities of stage `s − 1`.
//!
//! All parameters live in one flat vector. Per stage, in declaration order:
//! input weight (`C×D_in`) and bias, then for every layer the three
//! convolution taps (`3×C×C`, taps at `t−d, t, t+d`, each `out×in`), the
//! convolution bias, the 1×1 weight (`C×C`) and bias, and finally the output
//! weight (`K×C`) and bias.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TssError};
use crate::matrix::Matrix;
use crate::seqcore::ProbabilityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub stages: usize,
    pub layers_per_stage: usize,
    pub channels: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
}

impl ModelConfig {
    /// Two stages of six 32-channel layers.
    pub fn new(feature_dim: usize, num_classes: usize) -> Self {
        Self {
            stages: 2,
            layers_per_stage: 6,
            channels: 32,
            feature_dim,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("stages", self.stages),
            ("layers_per_stage", self.layers_per_stage),
            ("channels", self.channels),
            ("feature_dim", self.feature_dim),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(TssError::InvalidParameter(format!(
                    "{name} must be at least 1"
                )));
            }
        }
        if self.layers_per_stage > 30 {
            return Err(TssError::InvalidParameter(
                "layers_per_stage above 30".into(),
            ));
        }
        Ok(())
    }

    /// Frames on each side that can influence one output frame of a stage.
    pub fn stage_reach(&self) -> usize {
        (1usize << self.layers_per_stage) - 1
    }
}

#[derive(Debug, Clone, Copy)]
struct Span {
    offset: usize,
    len: usize,
}

impl Span {
    #[inline]
    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone)]
struct LayerLayout {
    dilation: usize,
    conv_w: Span,
    conv_b: Span,
    pw_w: Span,
    pw_b: Span,
}

#[derive(Debug, Clone)]
struct StageLayout {
    in_dim: usize,
    in_w: Span,
    in_b: Span,
    layers: Vec<LayerLayout>,
    out_w: Span,
    out_b: Span,
}

#[derive(Debug, Clone)]
struct Layout {
    stages: Vec<StageLayout>,
    total: usize,
}

impl Layout {
    fn new(config: &ModelConfig) -> Self {
        let c = config.channels;
        let k = config.num_classes;
        let mut offset = 0;
        let mut take = |len: usize| {
            let span = Span { offset, len };
            offset += len;
            span
        };
        let mut stages = Vec::with_capacity(config.stages);
        for s in 0..config.stages {
            let in_dim = if s == 0 { config.feature_dim } else { k };
            let in_w = take(c * in_dim);
            let in_b = take(c);
            let layers = (0..config.layers_per_stage)
                .map(|l| LayerLayout {
                    dilation: 1 << l,
                    conv_w: take(3 * c * c),
                    conv_b: take(c),
                    pw_w: take(c * c),
                    pw_b: take(c),
                })
                .collect();
            let out_w = take(k * c);
            let out_b = take(k);
            stages.push(StageLayout {
                in_dim,
                in_w,
                in_b,
                layers,
                out_w,
                out_b,
            });
        }
        Self {
            stages,
            total: offset,
        }
    }
}

static NEXT_PARAMS_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_PARAMS_ID.fetch_add(1, Ordering::Relaxed)
}

/// Model parameters in a single flat vector (see the module docs for the order).
#[derive(Debug, Clone)]
pub struct ModelParams {
    config: ModelConfig,
    layout: Layout,
    values: Vec<f64>,
    /// Changes on every mutable access; forward caches record it.
    id: u64,
}

impl PartialEq for ModelParams {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.values == other.values
    }
}

impl ModelParams {
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        Ok(Self {
            values: vec![0.0; layout.total],
            layout,
            config,
            id: fresh_id(),
        })
    }

    pub fn from_values(config: ModelConfig, values: Vec<f64>) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        if values.len() != params.values.len() {
            return Err(TssError::DimensionMismatch(format!(
                "{} parameter values for a model with {}",
                values.len(),
                params.values.len()
            )));
        }
        params.values = values;
        Ok(params)
    }

    #[inline]
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mutable access; invalidates outstanding forward caches.
    pub fn values_mut(&mut self) -> &mut [f64] {
        self.id = fresh_id();
        &mut self.values
    }

    /// Mutable view of one stage's output projection (weights then bias).
    pub fn output_projection_mut(&mut self, stage: usize) -> &mut [f64] {
        let st = &self.layout.stages[stage];
        let range = st.out_w.offset..st.out_b.offset + st.out_b.len;
        self.id = fresh_id();
        &mut self.values[range]
    }

    #[inline]
    fn span(&self, span: Span) -> &[f64] {
        &self.values[span.range()]
    }
}

/// Uniform weights in `±1/sqrt(fan_in)`, zero biases, deterministic per seed.
pub fn init_params(config: ModelConfig, seed: u64) -> Result<ModelParams> {
    let mut params = ModelParams::zeros(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = config.channels;
    let layout = params.layout.clone();
    let values = params.values_mut();
    let mut fill = |span: Span, fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for v in &mut values[span.range()] {
            *v = rng.random_range(-bound..bound);
        }
    };
    for st in &layout.stages {
        fill(st.in_w, st.in_dim);
        for layer in &st.layers {
            fill(layer.conv_w, 3 * c);
            fill(layer.pw_w, c);
        }
        fill(st.out_w, c);
    }
    Ok(params)
}

// y[t] = b + W x[t], W is out×in row-major.
fn linear(x: &Matrix, w: &[f64], b: &[f64], out_dim: usize) -> Matrix {
    let in_dim = x.cols();
    let mut y = Matrix::zeros(x.rows(), out_dim);
    for t in 0..x.rows() {
        let xr = x.row(t);
        for (o, yo) in y.row_mut(t).iter_mut().enumerate() {
            *yo = b[o] + dot(&w[o * in_dim..(o + 1) * in_dim], xr);
        }
    }
    y
}

// dW += dyᵀ x, db += Σ dy; returns dx = dy W when wanted.
fn linear_backward(
    x: &Matrix,
    dy: &Matrix,
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    want_dx: bool,
) -> Option<Matrix> {
    let in_dim = x.cols();
    for t in 0..x.rows() {
        let xr = x.row(t);
        for (o, &g) in dy.row(t).iter().enumerate() {
            if g != 0.0 {
                axpy(g, xr, &mut dw[o * in_dim..(o + 1) * in_dim]);
                db[o] += g;
            }
        }
    }
    want_dx.then(|| {
        let mut dx = Matrix::zeros(x.rows(), in_dim);
        for t in 0..x.rows() {
            let dxr = dx.row_mut(t);
            for (o, &g) in dy.row(t).iter().enumerate() {
                if g != 0.0 {
                    axpy(g, &w[o * in_dim..(o + 1) * in_dim], dxr);
                }
            }
        }
        dx
    })
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Source frame for tap `tap` (0, 1, 2 ↔ offsets −d, 0, +d) at output frame `t`.
#[inline]
fn tap_source(t: usize, tap: usize, dilation: usize, frames: usize) -> Option<usize> {
    match tap {
        0 => t.checked_sub(dilation),
        1 => Some(t),
        _ => Some(t + dilation).filter(|&s| s < frames),
    }
}

fn dilated_conv(h: &Matrix, w: &[f64], b: &[f64], dilation: usize) -> Matrix {
    let (frames, c) = h.shape();
    let mut out = Matrix::zeros(frames, c);
    for t in 0..frames {
        let orow = out.row_mut(t);
        orow.copy_from_slice(b);
        for tap in 0..3 {
            let Some(src) = tap_source(t, tap, dilation, frames) else {
                continue;
            };
            let x = h.row(src);
            let wt = &w[tap * c * c..(tap + 1) * c * c];
            for (o, v) in orow.iter_mut().enumerate() {
                *v += dot(&wt[o * c..(o + 1) * c], x);
            }
        }
    }
    out
}

// Accumulates weight/bias grads and adds the input adjoint into `dh`.
fn dilated_conv_backward(
    h: &Matrix,
    da: &Matrix,
    w: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    dilation: usize,
    dh: &mut Matrix,
) {
    let (frames, c) = h.shape();
    for t in 0..frames {
        let g = da.row(t);
        axpy(1.0, g, db);
        for tap in 0..3 {
            let Some(src) = tap_source(t, tap, dilation, frames) else {
                continue;
            };
            let x = h.row(src);
            let dwt = &mut dw[tap * c * c..(tap + 1) * c * c];
            for (o, &go) in g.iter().enumerate() {
                if go != 0.0 {
                    axpy(go, x, &mut dwt[o * c..(o + 1) * c]);
                }
            }
            let wt = &w[tap * c * c..(tap + 1) * c * c];
            let dx = dh.row_mut(src);
            for (o, &go) in g.iter().enumerate() {
                if go != 0.0 {
                    axpy(go, &wt[o * c..(o + 1) * c], dx);
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
struct StageCache {
    input: Matrix,
    /// `hidden[ℓ]` is the residual stream entering layer ℓ; the last entry feeds the output projection.
    hidden: Vec<Matrix>,
    /// Convolution outputs before the ReLU, one per layer.
    pre_act: Vec<Matrix>,
}

/// Activations saved by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    params_id: u64,
    stages: Vec<StageCache>,
    probs: Vec<ProbabilityMatrix>,
}

#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// One probability matrix per stage; the last one is the prediction.
    pub probs: Vec<ProbabilityMatrix>,
    pub cache: ForwardCache,
}

impl ForwardOutput {
    pub fn final_probs(&self) -> &ProbabilityMatrix {
        self.probs.last().expect("at least one stage")
    }
}

/// Runs every stage on a `T×D` feature matrix.
pub fn forward(params: &ModelParams, features: &Matrix) -> Result<ForwardOutput> {
    let cfg = params.config;
    if features.cols() != cfg.feature_dim {
        return Err(TssError::DimensionMismatch(format!(
            "features have {} dims, model expects {}",
            features.cols(),
            cfg.feature_dim
        )));
    }
    if features.rows() == 0 {
        return Err(TssError::EmptySequence);
    }
    let c = cfg.channels;
    let mut stages = Vec::with_capacity(cfg.stages);
    let mut probs: Vec<ProbabilityMatrix> = Vec::with_capacity(cfg.stages);
    for st in &params.layout.stages {
        let input = match probs.last() {
            None => features.clone(),
            Some(p) => p.as_matrix().clone(),
        };
        let mut h = linear(&input, params.span(st.in_w), params.span(st.in_b), c);
        let mut hidden = Vec::with_capacity(st.layers.len() + 1);
        let mut pre_act = Vec::with_capacity(st.layers.len());
        for layer in &st.layers {
            let a = dilated_conv(
                &h,
                params.span(layer.conv_w),
                params.span(layer.conv_b),
                layer.dilation,
            );
            let mut r = a.clone();
            r.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            let u = linear(&r, params.span(layer.pw_w), params.span(layer.pw_b), c);
            let mut next = h.clone();
            next.add_scaled(&u, 1.0)?;
            hidden.push(h);
            pre_act.push(a);
            h = next;
        }
        let logits = linear(
            &h,
            params.span(st.out_w),
            params.span(st.out_b),
            cfg.num_classes,
        );
        hidden.push(h);
        probs.push(ProbabilityMatrix::softmax(&logits));
        stages.push(StageCache {
            input,
            hidden,
            pre_act,
        });
    }
    Ok(ForwardOutput {
        probs: probs.clone(),
        cache: ForwardCache {
            params_id: params.id,
            stages,
            probs,
        },
    })
}

/// Parameter gradients, laid out like [`ModelParams::values`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads(pub Vec<f64>);

impl ModelGrads {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Reverse pass: `grads[s]` is `∂L/∂p` for stage `s`.
///
/// Gradients from later stages flow back into earlier ones through the
/// stage inputs, so every stage's loss reaches the first stage's weights.
pub fn backward(
    params: &ModelParams,
    cache: &ForwardCache,
    grads: &[Matrix],
) -> Result<ModelGrads> {
    if cache.params_id != params.id {
        return Err(TssError::StaleCache);
    }
    let cfg = params.config;
    if grads.len() != cfg.stages {
        return Err(TssError::DimensionMismatch(format!(
            "{} stage gradients for {} stages",
            grads.len(),
            cfg.stages
        )));
    }
    for (g, p) in grads.iter().zip(&cache.probs) {
        if g.shape() != p.as_matrix().shape() {
            return Err(TssError::DimensionMismatch(format!(
                "gradient {:?} for output {:?}",
                g.shape(),
                p.as_matrix().shape()
            )));
        }
    }
    let mut out = vec![0.0; params.values.len()];
    let mut carried: Option<Matrix> = None;
    for s in (0..cfg.stages).rev() {
        let st = &params.layout.stages[s];
        let sc = &cache.stages[s];
        let probs = &cache.probs[s];
        let mut dp = grads[s].clone();
        if let Some(extra) = carried.take() {
            dp.add_scaled(&extra, 1.0)?;
        }
        // Softmax Jacobian: dz = p ⊙ (dp − ⟨dp, p⟩).
        let mut dz = dp;
        for t in 0..dz.rows() {
            let p = probs.row(t);
            let row = dz.row_mut(t);
            let inner = dot(row, p);
            for (g, &pk) in row.iter_mut().zip(p) {
                *g = pk * (*g - inner);
            }
        }
        let h_last = sc.hidden.last().expect("hidden states");
        let (dw, db) = split_pair(&mut out, st.out_w, st.out_b);
        let mut dh = linear_backward(h_last, &dz, params.span(st.out_w), dw, db, true)
            .expect("dx requested");

        for (l, layer) in st.layers.iter().enumerate().rev() {
            let a = &sc.pre_act[l];
            let mut r = a.clone();
            r.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
            let (dw, db) = split_pair(&mut out, layer.pw_w, layer.pw_b);
            let mut da = linear_backward(&r, &dh, params.span(layer.pw_w), dw, db, true)
                .expect("dx requested");
            for (g, &av) in da.as_mut_slice().iter_mut().zip(a.as_slice()) {
                if av <= 0.0 {
                    *g = 0.0;
                }
            }
            let (dw, db) = split_pair(&mut out, layer.conv_w, layer.conv_b);
            // dh already holds the residual path; add the convolution adjoint.
            dilated_conv_backward(
                &sc.hidden[l],
                &da,
                params.span(layer.conv_w),
                dw,
                db,
                layer.dilation,
                &mut dh,
            );
        }
        let (dw, db) = split_pair(&mut out, st.in_w, st.in_b);
        carried = linear_backward(&sc.input, &dh, params.span(st.in_w), dw, db, s > 0);
    }
    Ok(ModelGrads(out))
}

// Weight and bias spans are disjoint and the bias follows the weight.
fn split_pair(values: &mut [f64], w: Span, b: Span) -> (&mut [f64], &mut [f64]) {
    debug_assert!(w.offset + w.len <= b.offset);
    let (head, tail) = values.split_at_mut(b.offset);
    (&mut head[w.range()], &mut tail[..b.len])
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"TSSM";
const CHECKPOINT_VERSION: u32 = 1;

/// Writes `TSSM`, a u32 version, the five config fields as u32, then every
/// parameter as a little-endian f64 in declaration order.
pub fn write_checkpoint(path: &Path, params: &ModelParams) -> Result<()> {
    let mut buf = Vec::with_capacity(4 + 4 * 6 + 8 * params.len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let cfg = params.config;
    for v in [
        cfg.stages,
        cfg.layers_per_stage,
        cfg.channels,
        cfg.feature_dim,
        cfg.num_classes,
    ] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in params.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| TssError::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<ModelParams> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| TssError::io(path, e))?;
    let corrupt = |reason: &str| TssError::CorruptCheckpoint {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if buf.len() < 28 || &buf[..4] != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic or truncated header"));
    }
    let word = |i: usize| u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    if word(0) != CHECKPOINT_VERSION {
        return Err(corrupt(&format!("unsupported version {}", word(0))));
    }
    let config = ModelConfig {
        stages: word(1) as usize,
        layers_per_stage: word(2) as usize,
        channels: word(3) as usize,
        feature_dim: word(4) as usize,
        num_classes: word(5) as usize,
    };
    config.validate().map_err(|e| corrupt(&e.to_string()))?;
    let body = &buf[28..];
    let expected = Layout::new(&config).total;
    if body.len() != expected * 8 {
        return Err(corrupt(&format!(
            "{} parameter bytes, expected {}",
            body.len(),
            expected * 8
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    ModelParams::from_values(config, values)
}
