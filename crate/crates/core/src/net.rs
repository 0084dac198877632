//! Minimal permutation-invariant point-segmentation network.
//!
//! Architecture: a shared per-point MLP encoder, a channelwise global
//! max-pool (the embedding tap), and a head. The per-point head consumes
//! `concat(local feature, global embedding, condition)` and emits one logits
//! row per point; the global head is a linear classifier on
//! `concat(embedding, condition)` used for object classification.
//!
//! All arithmetic is 64-bit. ReLU on every hidden layer, linear logits.
//! Max-pool ties break toward the lowest point index in both passes, which
//! pins down gradient routing exactly; the pooled value itself is
//! order-free, so embeddings are bitwise invariant under input permutation.

use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2 {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "tensor data length mismatch");
        Tensor2 { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Network shape. `num_point_classes` is `k^3` during pre-training and the
/// part/semantic class count after a head swap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub encoder_widths: Vec<usize>,
    pub embed_dim: usize,
    pub head_widths: Vec<usize>,
    pub num_point_classes: usize,
    /// Width of the optional one-hot object-class conditioning vector,
    /// concatenated at the head input.
    pub condition_dim: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            encoder_widths: vec![64, 64, 128],
            embed_dim: 256,
            head_widths: vec![128],
            num_point_classes: 27,
            condition_dim: 0,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 1
            || self.num_point_classes < 1
            || self.encoder_widths.iter().any(|&w| w < 1)
            || self.head_widths.iter().any(|&w| w < 1)
        {
            return Err(Error::Config(
                "network: all widths and class counts must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// One dense layer (or its gradients): `out x in` weights plus biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Tensor2,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Layer {
            weight: Tensor2::zeros(out_dim, in_dim),
            bias: vec![0.0; out_dim],
        }
    }

    /// Fan-scaled uniform init: `|w| <= sqrt(6 / (fan_in + fan_out))`, zero bias.
    fn init(out_dim: usize, in_dim: usize, rng: &mut Rng) -> Self {
        let scale = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut weight = Tensor2::zeros(out_dim, in_dim);
        for v in weight.data_mut() {
            *v = (2.0 * rng.uniform() - 1.0) * scale;
        }
        Layer {
            weight,
            bias: vec![0.0; out_dim],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weight.is_finite() && self.bias.iter().all(|v| v.is_finite())
    }
}

/// Which head the parameters currently carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Per-point segmentation head on `concat(local, global, condition)`.
    PerPoint,
    /// Linear classifier on `concat(global, condition)`.
    Global,
}

/// All trainable tensors plus the config that fixes their shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    pub config: NetworkConfig,
    pub head_kind: HeadKind,
    pub encoder: Vec<Layer>,
    pub head: Vec<Layer>,
}

/// Gradients in the same layout as [`Parameters`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub encoder: Vec<Layer>,
    pub head: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(params: &Parameters) -> Self {
        let zero = |layers: &[Layer]| {
            layers
                .iter()
                .map(|l| Layer::zeros(l.weight.rows(), l.weight.cols()))
                .collect()
        };
        Gradients {
            encoder: zero(&params.encoder),
            head: zero(&params.head),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        let add = |a: &mut Vec<Layer>, b: &[Layer]| {
            for (la, lb) in a.iter_mut().zip(b) {
                for (x, y) in la.weight.data_mut().iter_mut().zip(lb.weight.data()) {
                    *x += y;
                }
                for (x, y) in la.bias.iter_mut().zip(&lb.bias) {
                    *x += y;
                }
            }
        };
        add(&mut self.encoder, &other.encoder);
        add(&mut self.head, &other.head);
    }

    pub fn scale(&mut self, s: f64) {
        for layer in self.encoder.iter_mut().chain(self.head.iter_mut()) {
            for v in layer.weight.data_mut() {
                *v *= s;
            }
            for v in layer.bias.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn flat_get(&self, idx: usize) -> f64 {
        flat_get(self.encoder.iter().chain(self.head.iter()), idx)
    }
}

fn flat_get<'a>(layers: impl Iterator<Item = &'a Layer>, mut idx: usize) -> f64 {
    for layer in layers {
        let w = layer.weight.data();
        if idx < w.len() {
            return w[idx];
        }
        idx -= w.len();
        if idx < layer.bias.len() {
            return layer.bias[idx];
        }
        idx -= layer.bias.len();
    }
    panic!("flat index out of range");
}

impl Parameters {
    /// Total scalar parameter count.
    pub fn flat_len(&self) -> usize {
        self.encoder
            .iter()
            .chain(self.head.iter())
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Scalar parameter by flat index (encoder layers first, weights before
    /// biases within a layer).
    pub fn flat_get(&self, idx: usize) -> f64 {
        flat_get(self.encoder.iter().chain(self.head.iter()), idx)
    }

    pub fn flat_add(&mut self, mut idx: usize, delta: f64) {
        for layer in self.encoder.iter_mut().chain(self.head.iter_mut()) {
            let w = layer.weight.data_mut();
            if idx < w.len() {
                w[idx] += delta;
                return;
            }
            idx -= w.len();
            if idx < layer.bias.len() {
                layer.bias[idx] += delta;
                return;
            }
            idx -= layer.bias.len();
        }
        panic!("flat index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.encoder
            .iter()
            .chain(self.head.iter())
            .all(Layer::is_finite)
    }

    fn head_input_dim(&self) -> usize {
        match self.head_kind {
            HeadKind::PerPoint => 2 * self.config.embed_dim + self.config.condition_dim,
            HeadKind::Global => self.config.embed_dim + self.config.condition_dim,
        }
    }
}

/// Logits, the pooled embedding, and the pool winner per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardOutput {
    /// `n x num_point_classes` for the per-point head, `1 x classes` for the
    /// global head.
    pub logits: Tensor2,
    pub embedding: Vec<f64>,
    /// Index of the max-pool winner per embedding channel (lowest index on
    /// ties).
    pub argmax_indices: Vec<usize>,
}

/// Fresh parameters with a per-point head sized for `cfg`.
pub fn init_parameters(cfg: &NetworkConfig, rng: &mut Rng) -> Parameters {
    cfg.validate().expect("invalid network config");
    let mut encoder = Vec::new();
    let mut in_dim = 3;
    for &w in cfg.encoder_widths.iter().chain(std::iter::once(&cfg.embed_dim)) {
        encoder.push(Layer::init(w, in_dim, rng));
        in_dim = w;
    }
    let head = init_head(cfg, HeadKind::PerPoint, rng);
    Parameters {
        config: cfg.clone(),
        head_kind: HeadKind::PerPoint,
        encoder,
        head,
    }
}

fn init_head(cfg: &NetworkConfig, kind: HeadKind, rng: &mut Rng) -> Vec<Layer> {
    match kind {
        HeadKind::PerPoint => {
            let mut head = Vec::new();
            let mut in_dim = 2 * cfg.embed_dim + cfg.condition_dim;
            for &w in &cfg.head_widths {
                head.push(Layer::init(w, in_dim, rng));
                in_dim = w;
            }
            head.push(Layer::init(cfg.num_point_classes, in_dim, rng));
            head
        }
        HeadKind::Global => {
            vec![Layer::init(
                cfg.num_point_classes,
                cfg.embed_dim + cfg.condition_dim,
                rng,
            )]
        }
    }
}

/// Reinitializes the per-point head for a new class count; encoder tensors
/// are preserved bitwise.
pub fn swap_head(params: &Parameters, new_num_point_classes: usize, rng: &mut Rng) -> Parameters {
    assert!(new_num_point_classes >= 1);
    let mut config = params.config.clone();
    config.num_point_classes = new_num_point_classes;
    let head = init_head(&config, HeadKind::PerPoint, rng);
    Parameters {
        config,
        head_kind: HeadKind::PerPoint,
        encoder: params.encoder.clone(),
        head,
    }
}

/// Replaces the head with a fresh linear classifier on the embedding;
/// encoder tensors are preserved bitwise.
pub fn attach_classifier_head(
    params: &Parameters,
    num_classes: usize,
    rng: &mut Rng,
) -> Parameters {
    assert!(num_classes >= 1);
    let mut config = params.config.clone();
    config.num_point_classes = num_classes;
    let head = init_head(&config, HeadKind::Global, rng);
    Parameters {
        config,
        head_kind: HeadKind::Global,
        encoder: params.encoder.clone(),
        head,
    }
}

fn affine_forward(input: &Tensor2, layer: &Layer, relu: bool) -> Tensor2 {
    let n = input.rows();
    let out_dim = layer.weight.rows();
    assert_eq!(
        input.cols(),
        layer.weight.cols(),
        "layer input width mismatch"
    );
    let mut out = Tensor2::zeros(n, out_dim);
    for pt in 0..n {
        let row_in = input.row(pt);
        for o in 0..out_dim {
            let w = layer.weight.row(o);
            let mut acc = layer.bias[o];
            for (wi, xi) in w.iter().zip(row_in) {
                acc += wi * xi;
            }
            out.set(pt, o, if relu && acc <= 0.0 { 0.0 } else { acc });
        }
    }
    out
}

struct ForwardCache {
    /// `[0]` is the raw input; every later entry is post-ReLU.
    enc_acts: Vec<Tensor2>,
    embedding: Vec<f64>,
    winners: Vec<usize>,
    /// `[0]` is the head input; intermediate entries post-ReLU; last is logits.
    head_acts: Vec<Tensor2>,
}

fn run_forward(params: &Parameters, cloud: &PointCloud, condition: Option<&[f64]>) -> ForwardCache {
    let cond = condition.unwrap_or(&[]);
    assert_eq!(
        cond.len(),
        params.config.condition_dim,
        "condition length must equal condition_dim"
    );
    let n = cloud.len();
    let embed = params.config.embed_dim;

    let mut input = Tensor2::zeros(n, 3);
    for (pt, p) in cloud.iter().enumerate() {
        input.row_mut(pt).copy_from_slice(&p.to_array());
    }
    let mut enc_acts = vec![input];
    for layer in &params.encoder {
        let next = affine_forward(enc_acts.last().unwrap(), layer, true);
        enc_acts.push(next);
    }

    let features = enc_acts.last().unwrap();
    assert_eq!(features.cols(), embed);
    let mut embedding = vec![0.0; embed];
    let mut winners = vec![0usize; embed];
    for c in 0..embed {
        let mut best = features.get(0, c);
        let mut winner = 0;
        for pt in 1..n {
            let v = features.get(pt, c);
            if v > best {
                best = v;
                winner = pt;
            }
        }
        embedding[c] = best;
        winners[c] = winner;
    }

    let head_input = match params.head_kind {
        HeadKind::PerPoint => {
            let mut x = Tensor2::zeros(n, params.head_input_dim());
            for pt in 0..n {
                let row = x.row_mut(pt);
                row[..embed].copy_from_slice(features.row(pt));
                row[embed..2 * embed].copy_from_slice(&embedding);
                row[2 * embed..].copy_from_slice(cond);
            }
            x
        }
        HeadKind::Global => {
            let mut x = Tensor2::zeros(1, params.head_input_dim());
            let row = x.row_mut(0);
            row[..embed].copy_from_slice(&embedding);
            row[embed..].copy_from_slice(cond);
            x
        }
    };

    let mut head_acts = vec![head_input];
    let last = params.head.len() - 1;
    for (i, layer) in params.head.iter().enumerate() {
        let next = affine_forward(head_acts.last().unwrap(), layer, i < last);
        head_acts.push(next);
    }

    ForwardCache {
        enc_acts,
        embedding,
        winners,
        head_acts,
    }
}

fn output_from_cache(cache: &ForwardCache) -> ForwardOutput {
    ForwardOutput {
        logits: cache.head_acts.last().unwrap().clone(),
        embedding: cache.embedding.clone(),
        argmax_indices: cache.winners.clone(),
    }
}

/// Forward pass. Logits are equivariant and the embedding invariant under
/// any permutation of the input points.
pub fn forward(
    params: &Parameters,
    cloud: &PointCloud,
    condition: Option<&[f64]>,
) -> ForwardOutput {
    output_from_cache(&run_forward(params, cloud, condition))
}

/// The pooled embedding alone; the head is not evaluated.
pub fn extract_embedding(
    params: &Parameters,
    cloud: &PointCloud,
    condition: Option<&[f64]>,
) -> Vec<f64> {
    // condition only feeds the head; accept and ignore it here
    let _ = condition;
    let n = cloud.len();
    let mut input = Tensor2::zeros(n, 3);
    for (pt, p) in cloud.iter().enumerate() {
        input.row_mut(pt).copy_from_slice(&p.to_array());
    }
    let mut act = input;
    for layer in &params.encoder {
        act = affine_forward(&act, layer, true);
    }
    let embed = params.config.embed_dim;
    let mut embedding = vec![0.0; embed];
    for c in 0..embed {
        let mut best = act.get(0, c);
        for pt in 1..n {
            let v = act.get(pt, c);
            if v > best {
                best = v;
            }
        }
        embedding[c] = best;
    }
    embedding
}

/// Weight/bias gradient of dz against this layer's input, plus the gradient
/// flowing to the input if requested. Accumulation runs in point order.
fn affine_backward(
    input: &Tensor2,
    layer: &Layer,
    dz: &Tensor2,
    want_dinput: bool,
) -> (Layer, Option<Tensor2>) {
    let n = input.rows();
    let out_dim = layer.weight.rows();
    let in_dim = layer.weight.cols();
    let mut grad = Layer::zeros(out_dim, in_dim);
    let mut dinput = want_dinput.then(|| Tensor2::zeros(n, in_dim));
    for pt in 0..n {
        let row_in = input.row(pt);
        for o in 0..out_dim {
            let g = dz.get(pt, o);
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let wrow = grad.weight.row_mut(o);
            for (wg, xi) in wrow.iter_mut().zip(row_in) {
                *wg += g * xi;
            }
            if let Some(di) = dinput.as_mut() {
                let drow = di.row_mut(pt);
                let w = layer.weight.row(o);
                for (dv, wv) in drow.iter_mut().zip(w) {
                    *dv += g * wv;
                }
            }
        }
    }
    (grad, dinput)
}

/// Zeroes gradient entries where the post-ReLU activation is not positive.
fn mask_relu(d: &mut Tensor2, act: &Tensor2) {
    for (dv, av) in d.data_mut().iter_mut().zip(act.data()) {
        if *av <= 0.0 {
            *dv = 0.0;
        }
    }
}

fn backward_from_cache(
    params: &Parameters,
    cache: &ForwardCache,
    upstream_logit_grads: &Tensor2,
) -> Gradients {
    let embed = params.config.embed_dim;
    let n = cache.enc_acts[0].rows();
    assert_eq!(
        upstream_logit_grads.rows(),
        cache.head_acts.last().unwrap().rows()
    );
    assert_eq!(
        upstream_logit_grads.cols(),
        params.config.num_point_classes
    );

    // head backward
    let mut head_grads: Vec<Layer> = Vec::with_capacity(params.head.len());
    let mut d = upstream_logit_grads.clone();
    for (j, layer) in params.head.iter().enumerate().rev() {
        if j + 1 < params.head.len() {
            // d currently sits at this layer's post-ReLU output
            mask_relu(&mut d, &cache.head_acts[j + 1]);
        }
        let (grad, dinput) = affine_backward(&cache.head_acts[j], layer, &d, true);
        head_grads.push(grad);
        d = dinput.unwrap();
    }
    head_grads.reverse();

    // split the head-input gradient into local and pooled branches
    let mut dfeatures = Tensor2::zeros(n, embed);
    match params.head_kind {
        HeadKind::PerPoint => {
            let mut dglobal = vec![0.0; embed];
            for pt in 0..n {
                let row = d.row(pt);
                dfeatures.row_mut(pt).copy_from_slice(&row[..embed]);
                for (acc, v) in dglobal.iter_mut().zip(&row[embed..2 * embed]) {
                    *acc += v;
                }
            }
            // max-pool routes the pooled gradient to the winner only
            for c in 0..embed {
                let w = cache.winners[c];
                let cur = dfeatures.get(w, c);
                dfeatures.set(w, c, cur + dglobal[c]);
            }
        }
        HeadKind::Global => {
            let row = d.row(0);
            for c in 0..embed {
                dfeatures.set(cache.winners[c], c, row[c]);
            }
        }
    }

    // encoder backward
    let mut enc_grads: Vec<Layer> = Vec::with_capacity(params.encoder.len());
    let mut d = dfeatures;
    for (l, layer) in params.encoder.iter().enumerate().rev() {
        mask_relu(&mut d, &cache.enc_acts[l + 1]);
        let (grad, dinput) = affine_backward(&cache.enc_acts[l], layer, &d, l > 0);
        enc_grads.push(grad);
        if let Some(di) = dinput {
            d = di;
        }
    }
    enc_grads.reverse();

    Gradients {
        encoder: enc_grads,
        head: head_grads,
    }
}

/// Exact reverse-mode gradients of `sum(upstream .* logits)` with respect to
/// every parameter.
pub fn backward(
    params: &Parameters,
    cloud: &PointCloud,
    condition: Option<&[f64]>,
    upstream_logit_grads: &Tensor2,
) -> Gradients {
    let cache = run_forward(params, cloud, condition);
    backward_from_cache(params, &cache, upstream_logit_grads)
}

/// One forward pass shared by output and gradients; `upstream` maps the
/// output to the logit gradients (typically a loss derivative).
pub fn forward_backward(
    params: &Parameters,
    cloud: &PointCloud,
    condition: Option<&[f64]>,
    upstream: impl FnOnce(&ForwardOutput) -> Tensor2,
) -> (ForwardOutput, Gradients) {
    let cache = run_forward(params, cloud, condition);
    let output = output_from_cache(&cache);
    let grads = backward_from_cache(params, &cache, &upstream(&output));
    (output, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Point3;

    fn small_config() -> NetworkConfig {
        NetworkConfig {
            encoder_widths: vec![8, 8],
            embed_dim: 16,
            head_widths: vec![8],
            num_point_classes: 8,
            condition_dim: 0,
        }
    }

    fn random_cloud(rng: &mut Rng, n: usize) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| Point3::new(rng.uniform(), rng.uniform(), rng.uniform()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let cfg = small_config();
        let a = init_parameters(&cfg, &mut Rng::new(42));
        let b = init_parameters(&cfg, &mut Rng::new(42));
        assert_eq!(a, b);
        for layer in a.encoder.iter().chain(a.head.iter()) {
            let bound = (6.0 / (layer.weight.cols() + layer.weight.rows()) as f64).sqrt();
            for &w in layer.weight.data() {
                assert!(w.abs() <= bound);
            }
            assert!(layer.bias.iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn init_weight_mean_near_zero() {
        // one wide layer gives 10^5 draws; mean of U(-s, s) has sd s/sqrt(3N)
        let mut rng = Rng::new(7);
        let layer = Layer::init(500, 200, &mut rng);
        let n = layer.weight.data().len() as f64;
        let s = (6.0 / 700.0_f64).sqrt();
        let mean = layer.weight.data().iter().sum::<f64>() / n;
        let sigma_mean = s / (3.0 * n).sqrt();
        assert!(mean.abs() < 5.0 * sigma_mean, "mean {mean}");
    }

    #[test]
    fn permutation_equivariance_and_invariance() {
        let cfg = small_config();
        let params = init_parameters(&cfg, &mut Rng::new(1));
        let mut rng = Rng::new(2);
        let cloud = random_cloud(&mut rng, 20);
        let out = forward(&params, &cloud, None);

        let mut order: Vec<usize> = (0..20).collect();
        rng.shuffle(&mut order);
        let permuted = PointCloud::new(
            order.iter().map(|&i| cloud.points()[i]).collect(),
        )
        .unwrap();
        let out_p = forward(&params, &permuted, None);

        for (a, b) in out.embedding.iter().zip(&out_p.embedding) {
            assert_eq!(a.to_bits(), b.to_bits(), "embedding must be bitwise equal");
        }
        for (new_row, &old) in order.iter().enumerate() {
            for c in 0..cfg.num_point_classes {
                assert_eq!(
                    out_p.logits.get(new_row, c).to_bits(),
                    out.logits.get(old, c).to_bits()
                );
            }
        }
    }

    #[test]
    fn zero_parameters_give_zero_outputs() {
        let cfg = small_config();
        let mut params = init_parameters(&cfg, &mut Rng::new(3));
        for layer in params.encoder.iter_mut().chain(params.head.iter_mut()) {
            layer.weight.data_mut().fill(0.0);
            layer.bias.fill(0.0);
        }
        let cloud = random_cloud(&mut Rng::new(4), 5);
        let out = forward(&params, &cloud, None);
        assert!(out.logits.data().iter().all(|&v| v == 0.0));
        assert!(out.embedding.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn singleton_cloud_embedding_is_encoder_output() {
        let cfg = small_config();
        let params = init_parameters(&cfg, &mut Rng::new(5));
        let cloud = random_cloud(&mut Rng::new(6), 1);
        let out = forward(&params, &cloud, None);
        // encoder output for the single point
        let mut act = Tensor2::zeros(1, 3);
        act.row_mut(0).copy_from_slice(&cloud.points()[0].to_array());
        for layer in &params.encoder {
            act = affine_forward(&act, layer, true);
        }
        assert_eq!(out.embedding, act.row(0).to_vec());
    }

    #[test]
    fn extract_embedding_matches_forward() {
        let cfg = small_config();
        let params = init_parameters(&cfg, &mut Rng::new(8));
        let cloud = random_cloud(&mut Rng::new(9), 12);
        let out = forward(&params, &cloud, None);
        assert_eq!(extract_embedding(&params, &cloud, None), out.embedding);

        // idempotent under self-concatenation
        let doubled = PointCloud::new(
            cloud
                .points()
                .iter()
                .chain(cloud.points())
                .copied()
                .collect(),
        )
        .unwrap();
        assert_eq!(extract_embedding(&params, &doubled, None), out.embedding);
    }

    #[test]
    fn swap_head_preserves_encoder() {
        let cfg = small_config();
        let params = init_parameters(&cfg, &mut Rng::new(10));
        let cloud = random_cloud(&mut Rng::new(11), 10);
        let before = extract_embedding(&params, &cloud, None);

        let swapped = swap_head(&params, 5, &mut Rng::new(12));
        assert_eq!(swapped.encoder, params.encoder);
        assert_eq!(extract_embedding(&swapped, &cloud, None), before);
        assert_eq!(forward(&swapped, &cloud, None).logits.cols(), 5);

        let same = swap_head(&params, cfg.num_point_classes, &mut Rng::new(13));
        assert_eq!(same.encoder, params.encoder);
        assert_ne!(same.head, params.head);
    }

    #[test]
    fn classifier_head_shape_and_encoder_preserved() {
        let cfg = small_config();
        let params = init_parameters(&cfg, &mut Rng::new(14));
        let cls = attach_classifier_head(&params, 4, &mut Rng::new(15));
        assert_eq!(cls.encoder, params.encoder);
        assert_eq!(cls.head_kind, HeadKind::Global);
        let cloud = random_cloud(&mut Rng::new(16), 7);
        let out = forward(&cls, &cloud, None);
        assert_eq!(out.logits.rows(), 1);
        assert_eq!(out.logits.cols(), 4);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let cfg = small_config();
        let params = init_parameters(&cfg, &mut Rng::new(17));
        let cloud = random_cloud(&mut Rng::new(18), 6);
        let upstream = Tensor2::zeros(6, cfg.num_point_classes);
        let grads = backward(&params, &cloud, None, &upstream);
        for layer in grads.encoder.iter().chain(grads.head.iter()) {
            assert!(layer.weight.data().iter().all(|&v| v == 0.0));
            assert!(layer.bias.iter().all(|&v| v == 0.0));
        }
    }

    /// Central finite differences on the quadratic surrogate
    /// `L = sum(logits^2) / 2`, whose logit gradient is the logits.
    fn finite_difference_check(params: &Parameters, cloud: &PointCloud, cond: Option<&[f64]>) {
        let loss = |p: &Parameters| -> f64 {
            let out = forward(p, cloud, cond);
            out.logits.data().iter().map(|v| v * v).sum::<f64>() / 2.0
        };
        let out = forward(params, cloud, cond);
        let grads = backward(params, cloud, cond, &out.logits);

        let h = 1e-5;
        let mut worst = 0.0f64;
        let mut probe = params.clone();
        for i in 0..params.flat_len() {
            probe.flat_add(i, h);
            let up = loss(&probe);
            probe.flat_add(i, -2.0 * h);
            let down = loss(&probe);
            probe.flat_add(i, h);
            let fd = (up - down) / (2.0 * h);
            let a = grads.flat_get(i);
            let err = (a - fd).abs();
            // absolute guard absorbs finite-difference noise on dead paths
            if err > 1e-8 {
                worst = worst.max(err / a.abs().max(fd.abs()));
            }
        }
        assert!(worst < 1e-4, "max relative gradient error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences_per_point_head() {
        let cfg = small_config();
        let params = init_parameters(&cfg, &mut Rng::new(19));
        let cloud = random_cloud(&mut Rng::new(20), 16);
        finite_difference_check(&params, &cloud, None);
    }

    #[test]
    fn gradients_match_finite_differences_with_condition() {
        let mut cfg = small_config();
        cfg.condition_dim = 4;
        let params = init_parameters(&cfg, &mut Rng::new(21));
        let cloud = random_cloud(&mut Rng::new(22), 10);
        let cond = [0.0, 1.0, 0.0, 0.0];
        finite_difference_check(&params, &cloud, Some(&cond));
    }

    #[test]
    fn gradients_match_finite_differences_global_head() {
        let cfg = small_config();
        let params = init_parameters(&cfg, &mut Rng::new(23));
        let cls = attach_classifier_head(&params, 4, &mut Rng::new(24));
        let cloud = random_cloud(&mut Rng::new(25), 12);
        finite_difference_check(&cls, &cloud, None);
    }

    /// Appending a copy of a point that wins no pool channel, with zero
    /// upstream gradient for its logits row, changes no parameter gradient.
    #[test]
    fn duplicating_non_winner_leaves_gradients_unchanged() {
        let cfg = small_config();
        let params = init_parameters(&cfg, &mut Rng::new(26));
        let mut rng = Rng::new(27);
        'outer: for _ in 0..50 {
            let cloud = random_cloud(&mut rng, 9);
            let out = forward(&params, &cloud, None);
            let non_winner = match (0..cloud.len())
                .find(|i| !out.argmax_indices.contains(i))
            {
                Some(i) => i,
                None => continue 'outer,
            };

            let mut upstream = Tensor2::zeros(cloud.len(), cfg.num_point_classes);
            for v in upstream.data_mut().iter_mut() {
                *v = rng.uniform() - 0.5;
            }
            let grads = backward(&params, &cloud, None, &upstream);

            let mut extended = cloud.points().to_vec();
            extended.push(cloud.points()[non_winner]);
            let extended = PointCloud::new(extended).unwrap();
            let mut upstream_ext = Tensor2::zeros(extended.len(), cfg.num_point_classes);
            for pt in 0..cloud.len() {
                for c in 0..cfg.num_point_classes {
                    upstream_ext.set(pt, c, upstream.get(pt, c));
                }
            }
            let grads_ext = backward(&params, &extended, None, &upstream_ext);
            assert_eq!(grads, grads_ext);
            return;
        }
        panic!("no cloud with a non-winning point found");
    }

    /// With the pooled-branch columns of the first head layer zeroed, a
    /// point's logits depend on that point (and condition) alone.
    #[test]
    fn logits_depend_on_other_points_only_through_embedding() {
        let cfg = small_config();
        let mut params = init_parameters(&cfg, &mut Rng::new(28));
        let embed = cfg.embed_dim;
        let first = &mut params.head[0];
        for r in 0..first.weight.rows() {
            for c in embed..2 * embed {
                first.weight.set(r, c, 0.0);
            }
        }
        let mut rng = Rng::new(29);
        let a = random_cloud(&mut rng, 8);
        let mut swapped_tail = a.points().to_vec();
        for p in swapped_tail.iter_mut().skip(1) {
            *p = Point3::new(rng.uniform(), rng.uniform(), rng.uniform());
        }
        let b = PointCloud::new(swapped_tail).unwrap();

        let out_a = forward(&params, &a, None);
        let out_b = forward(&params, &b, None);
        assert_eq!(
            out_a.logits.row(0),
            out_b.logits.row(0),
            "shared point 0 must produce identical logits"
        );
    }

    #[test]
    #[should_panic(expected = "condition length")]
    fn condition_length_is_contract() {
        let mut cfg = small_config();
        cfg.condition_dim = 3;
        let params = init_parameters(&cfg, &mut Rng::new(30));
        let cloud = random_cloud(&mut Rng::new(31), 4);
        forward(&params, &cloud, None);
    }

    #[test]
    fn outputs_finite_for_unit_cube_inputs() {
        let cfg = NetworkConfig::default();
        let params = init_parameters(&cfg, &mut Rng::new(32));
        let cloud = random_cloud(&mut Rng::new(33), 64);
        let out = forward(&params, &cloud, None);
        assert!(out.logits.is_finite());
        assert!(out.embedding.iter().all(|v| v.is_finite()));
        let grads = backward(&params, &cloud, None, &out.logits);
        for layer in grads.encoder.iter().chain(grads.head.iter()) {
            assert!(layer.is_finite());
        }
    }
}
