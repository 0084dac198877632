//! Loss, optimizer, and the two training loops: self-supervised
//! pre-training on jigsaw samples, and supervised fine-tuning for point
//! segmentation or object classification.
//!
//! Every run is a pure function of `(dataset, configs, seed)`: sample
//! streams are addressed by `(seed, epoch * n + cloud index)` so results are
//! independent of batch schedule, and gradient accumulation is ordered by
//! sample index.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::downstream::{self, argmax};
use crate::error::{Error, Result};
use crate::jigsaw::{make_jigsaw_sample, JigsawConfig};
use crate::net::{
    forward, forward_backward, init_parameters, Gradients, HeadKind, NetworkConfig, Parameters,
    Tensor2,
};
use crate::rng::{purpose, Rng};

/// What a training run optimizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Pretrain,
    FinetuneSegmentation,
    FinetuneClassification,
}

/// Optimization hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Decoupled weight decay, applied to weight matrices only.
    pub weight_decay: f64,
    pub seed: u64,
    pub task: TaskKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 8,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            seed: 0,
            task: TaskKind::Pretrain,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::Config(
                "train: epochs and batch_size must be >= 1".into(),
            ));
        }
        // learning_rate 0 is allowed: it turns a run into a no-op, which the
        // determinism tests rely on
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "train: learning_rate {} must be finite and >= 0",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("train: betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::Config(
                "train: adam_eps must be > 0 and weight_decay >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// One epoch of training metrics. `seconds` is wall-clock time and is the
/// only field that is not reproducible across runs.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub seconds: f64,
}

/// Per-epoch loss/accuracy log of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<EpochRecord>,
}

impl TrainLog {
    /// CSV form: `epoch,loss,accuracy,seconds`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,accuracy,seconds\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch, r.loss, r.accuracy, r.seconds
            ));
        }
        out
    }

    pub fn final_accuracy(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.accuracy)
    }
}

/// Mean softmax cross-entropy over points and its logit gradients,
/// stabilized by row-max subtraction.
///
/// Returns `(mean_i -log softmax(logits_i)[target_i], (softmax - onehot)/n)`.
/// A target outside `[0, C)` is a contract violation.
pub fn cross_entropy_per_point(logits: &Tensor2, targets: &[usize]) -> (f64, Tensor2) {
    let n = logits.rows();
    let classes = logits.cols();
    assert_eq!(targets.len(), n, "one target per logits row");
    let mut grads = Tensor2::zeros(n, classes);
    let mut loss = 0.0;
    for i in 0..n {
        let target = targets[i];
        assert!(target < classes, "target {target} out of range [0, {classes})");
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &v in row {
            denom += (v - max).exp();
        }
        loss += denom.ln() - (row[target] - max);
        let g = grads.row_mut(i);
        for (c, &v) in row.iter().enumerate() {
            g[c] = (v - max).exp() / denom / n as f64;
        }
        g[target] -= 1.0 / n as f64;
    }
    (loss / n as f64, grads)
}

/// Adam moment estimates, shaped like the parameters they update.
#[derive(Clone, Debug)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    step: u64,
}

impl AdamState {
    pub fn new(params: &Parameters) -> Self {
        AdamState {
            m: Gradients::zeros_like(params),
            v: Gradients::zeros_like(params),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam update with bias correction and optional decoupled weight decay
/// (weights only, never biases).
pub fn adam_step(
    params: &mut Parameters,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &TrainConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.adam_beta1.powi(t);
    let bias2 = 1.0 - cfg.adam_beta2.powi(t);

    let update = |theta: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = cfg.adam_beta1 * *m + (1.0 - cfg.adam_beta1) * g;
        *v = cfg.adam_beta2 * *v + (1.0 - cfg.adam_beta2) * g * g;
        let m_hat = *m / bias1;
        let v_hat = *v / bias2;
        *theta -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    };

    let param_layers = params.encoder.iter_mut().chain(params.head.iter_mut());
    let grad_layers = grads.encoder.iter().chain(grads.head.iter());
    let m_layers = state.m.encoder.iter_mut().chain(state.m.head.iter_mut());
    let v_layers = state.v.encoder.iter_mut().chain(state.v.head.iter_mut());
    for (((p, g), m), v) in param_layers.zip(grad_layers).zip(m_layers).zip(v_layers) {
        for (((theta, &gw), mw), vw) in p
            .weight
            .data_mut()
            .iter_mut()
            .zip(g.weight.data())
            .zip(m.weight.data_mut())
            .zip(v.weight.data_mut())
        {
            update(theta, gw, mw, vw);
            if cfg.weight_decay > 0.0 {
                *theta -= cfg.learning_rate * cfg.weight_decay * *theta;
            }
        }
        for (((theta, &gb), mb), vb) in p
            .bias
            .iter_mut()
            .zip(&g.bias)
            .zip(m.bias.iter_mut())
            .zip(v.bias.iter_mut())
        {
            update(theta, gb, mb, vb);
        }
    }
}

/// Loss, correct-prediction count, and gradients of one supervised item.
fn supervised_step(
    params: &Parameters,
    cloud: &crate::cloud::PointCloud,
    condition: Option<&[f64]>,
    targets: &[usize],
) -> Result<(f64, usize, Gradients)> {
    let mut loss_slot = None;
    let (out, grads) = forward_backward(params, cloud, condition, |out| {
        let (loss, grad) = cross_entropy_per_point(&out.logits, targets);
        loss_slot = Some(loss);
        grad
    });
    let loss = loss_slot.expect("closure ran");
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss}")));
    }
    let correct = (0..out.logits.rows())
        .filter(|&i| argmax(out.logits.row(i)) == targets[i])
        .count();
    Ok((loss, correct, grads))
}

/// Self-supervised pre-training; see [`pretrain_with_snapshots`].
pub fn pretrain(
    dataset: &Dataset,
    jcfg: &JigsawConfig,
    ncfg: &NetworkConfig,
    tcfg: &TrainConfig,
) -> Result<(Parameters, TrainLog)> {
    let (params, log, _) = pretrain_with_snapshots(dataset, jcfg, ncfg, tcfg, None)?;
    Ok((params, log))
}

/// Self-supervised pre-training on the voxel-shuffle task.
///
/// Every epoch each cloud gets a fresh sample: a new permutation, a donor
/// drawn uniformly from the dataset for voxel replacement, and fresh
/// augmentation noise. When `condition_dim > 0`, a random class one-hot is
/// fed per object. With `snapshot_every = Some(s)`, a parameter snapshot is
/// stored after every `s`-th epoch.
pub fn pretrain_with_snapshots(
    dataset: &Dataset,
    jcfg: &JigsawConfig,
    ncfg: &NetworkConfig,
    tcfg: &TrainConfig,
    snapshot_every: Option<usize>,
) -> Result<(Parameters, TrainLog, Vec<(usize, Parameters)>)> {
    jcfg.validate()?;
    ncfg.validate()?;
    tcfg.validate()?;
    if tcfg.task != TaskKind::Pretrain {
        return Err(Error::Config("pretrain: task must be 'pretrain'".into()));
    }
    if ncfg.num_point_classes != jcfg.num_classes() {
        return Err(Error::Config(format!(
            "pretrain: num_point_classes {} != k^3 = {}",
            ncfg.num_point_classes,
            jcfg.num_classes()
        )));
    }

    let n_clouds = dataset.len();
    let mut params = init_parameters(ncfg, &mut Rng::stream2(tcfg.seed, purpose::INIT, 0));
    let mut state = AdamState::new(&params);
    let mut log = TrainLog::default();
    let mut snapshots = Vec::new();

    for epoch in 0..tcfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n_clouds).collect();
        Rng::stream2(tcfg.seed, purpose::SHUFFLE, epoch as u64).shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut total = 0usize;
        for batch in order.chunks(tcfg.batch_size) {
            let mut batch_grads = Gradients::zeros_like(&params);
            for &idx in batch {
                let stream = (epoch * n_clouds + idx) as u64;
                let mut srng = Rng::stream2(tcfg.seed, purpose::SAMPLE, stream);
                let donor = (jcfg.replace_count > 0).then(|| dataset.cloud(srng.index(n_clouds)));
                let condition = (ncfg.condition_dim > 0).then(|| {
                    let mut one_hot = vec![0.0; ncfg.condition_dim];
                    one_hot[srng.index(ncfg.condition_dim)] = 1.0;
                    one_hot
                });
                let sample = make_jigsaw_sample(dataset.cloud(idx), jcfg, &mut srng, donor)?;
                let targets: Vec<usize> = sample.targets.iter().map(|t| t.0).collect();
                let (loss, ok, grads) =
                    supervised_step(&params, &sample.shuffled, condition.as_deref(), &targets)?;
                loss_sum += loss;
                correct += ok;
                total += targets.len();
                batch_grads.add_assign(&grads);
            }
            batch_grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut params, &batch_grads, &mut state, tcfg);
            if !params.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite parameter after step {}",
                    state.step_count()
                )));
            }
        }

        log.records.push(EpochRecord {
            epoch,
            loss: loss_sum / n_clouds as f64,
            accuracy: correct as f64 / total as f64,
            seconds: started.elapsed().as_secs_f64(),
        });
        if let Some(every) = snapshot_every {
            if every > 0 && (epoch + 1) % every == 0 {
                snapshots.push((epoch, params.clone()));
            }
        }
    }

    Ok((params, log, snapshots))
}

/// Supervised fine-tuning from (typically pre-trained) parameters.
///
/// The head must already match the task: a per-point head with the part
/// class count for segmentation (see `swap_head`), a classifier head for
/// classification (see `attach_classifier_head`). Segmentation feeds the
/// true object class as a one-hot when `condition_dim > 0`. Clouds are
/// consumed as stored; datasets are expected to arrive normalized.
pub fn finetune(
    params: &Parameters,
    dataset: &Dataset,
    ncfg: &NetworkConfig,
    tcfg: &TrainConfig,
) -> Result<(Parameters, TrainLog)> {
    ncfg.validate()?;
    tcfg.validate()?;
    if *ncfg != params.config {
        return Err(Error::Config(
            "finetune: network config does not match parameters (swap the head first)".into(),
        ));
    }
    let n_clouds = dataset.len();
    let class_labels = dataset.class_labels();
    let point_labels = dataset.point_labels();
    enum Mode {
        Segmentation,
        Classification,
    }
    let mode = match tcfg.task {
        TaskKind::FinetuneSegmentation => {
            if params.head_kind != HeadKind::PerPoint {
                return Err(Error::Config(
                    "finetune: segmentation needs a per-point head".into(),
                ));
            }
            let labels = point_labels
                .ok_or_else(|| Error::Config("finetune: dataset has no point labels".into()))?;
            for (i, l) in labels.iter().enumerate() {
                if let Some(&bad) = l.iter().find(|&&p| p >= ncfg.num_point_classes) {
                    return Err(Error::Config(format!(
                        "finetune: cloud {i} part label {bad} out of range"
                    )));
                }
            }
            if ncfg.condition_dim > 0 {
                let classes = class_labels.ok_or_else(|| {
                    Error::Config("finetune: conditioning needs class labels".into())
                })?;
                if classes.iter().any(|&c| c >= ncfg.condition_dim) {
                    return Err(Error::Config(
                        "finetune: class label exceeds condition_dim".into(),
                    ));
                }
            }
            Mode::Segmentation
        }
        TaskKind::FinetuneClassification => {
            if params.head_kind != HeadKind::Global {
                return Err(Error::Config(
                    "finetune: classification needs a classifier head".into(),
                ));
            }
            let labels = class_labels
                .ok_or_else(|| Error::Config("finetune: dataset has no class labels".into()))?;
            if labels.iter().any(|&c| c >= ncfg.num_point_classes) {
                return Err(Error::Config(
                    "finetune: class label out of head range".into(),
                ));
            }
            Mode::Classification
        }
        TaskKind::Pretrain => {
            return Err(Error::Config(
                "finetune: task must be a finetune task".into(),
            ));
        }
    };

    let mut params = params.clone();
    let mut state = AdamState::new(&params);
    let mut log = TrainLog::default();

    for epoch in 0..tcfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n_clouds).collect();
        Rng::stream2(tcfg.seed, purpose::SHUFFLE, epoch as u64).shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut total = 0usize;
        for batch in order.chunks(tcfg.batch_size) {
            let mut batch_grads = Gradients::zeros_like(&params);
            for &idx in batch {
                let cloud = dataset.cloud(idx);
                let (loss, ok, n_preds, grads) = match mode {
                    Mode::Segmentation => {
                        let targets = &point_labels.expect("validated")[idx];
                        let condition = (ncfg.condition_dim > 0).then(|| {
                            let mut one_hot = vec![0.0; ncfg.condition_dim];
                            one_hot[class_labels.expect("validated")[idx]] = 1.0;
                            one_hot
                        });
                        let (loss, ok, grads) =
                            supervised_step(&params, cloud, condition.as_deref(), targets)?;
                        (loss, ok, targets.len(), grads)
                    }
                    Mode::Classification => {
                        let target = [class_labels.expect("validated")[idx]];
                        let (loss, ok, grads) = supervised_step(&params, cloud, None, &target)?;
                        (loss, ok, 1, grads)
                    }
                };
                loss_sum += loss;
                correct += ok;
                total += n_preds;
                batch_grads.add_assign(&grads);
            }
            batch_grads.scale(1.0 / batch.len() as f64);
            adam_step(&mut params, &batch_grads, &mut state, tcfg);
            if !params.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite parameter after step {}",
                    state.step_count()
                )));
            }
        }

        log.records.push(EpochRecord {
            epoch,
            loss: loss_sum / n_clouds as f64,
            accuracy: correct as f64 / total as f64,
            seconds: started.elapsed().as_secs_f64(),
        });
    }

    Ok((params, log))
}

/// What [`evaluate`] should measure.
#[derive(Clone, Copy, Debug)]
pub enum EvalTask<'a> {
    /// Accuracy of voxel-ID prediction on freshly generated samples; the
    /// seed fixes the samples so evaluation is pure.
    Pretrain { jigsaw: &'a JigsawConfig, seed: u64 },
    Segmentation,
    Classification,
}

/// Evaluation metrics; `mean_iou` is present for segmentation only.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub mean_iou: Option<f64>,
}

/// Read-only evaluation of `params` on one split.
///
/// Segmentation predictions are the argmax over the parts valid for the
/// cloud's object class; accuracy is per-point for pretrain/segmentation
/// and per-cloud for classification.
pub fn evaluate(
    params: &Parameters,
    dataset: &Dataset,
    split: &str,
    task: EvalTask,
) -> Result<EvalMetrics> {
    let indices = dataset.split(split)?;
    if indices.is_empty() {
        return Err(Error::Dataset(format!("split '{split}' is empty")));
    }
    match task {
        EvalTask::Pretrain { jigsaw, seed } => {
            jigsaw.validate()?;
            if params.config.num_point_classes != jigsaw.num_classes() {
                return Err(Error::Config("evaluate: head does not match k^3".into()));
            }
            let mut correct = 0usize;
            let mut total = 0usize;
            for &idx in &indices {
                let mut srng = Rng::stream2(seed, purpose::EVAL, idx as u64);
                let donor =
                    (jigsaw.replace_count > 0).then(|| dataset.cloud(srng.index(dataset.len())));
                let condition = (params.config.condition_dim > 0).then(|| {
                    let mut one_hot = vec![0.0; params.config.condition_dim];
                    one_hot[srng.index(params.config.condition_dim)] = 1.0;
                    one_hot
                });
                let sample = make_jigsaw_sample(dataset.cloud(idx), jigsaw, &mut srng, donor)?;
                let out = forward(params, &sample.shuffled, condition.as_deref());
                for (i, target) in sample.targets.iter().enumerate() {
                    if argmax(out.logits.row(i)) == target.0 {
                        correct += 1;
                    }
                    total += 1;
                }
            }
            Ok(EvalMetrics {
                accuracy: correct as f64 / total as f64,
                mean_iou: None,
            })
        }
        EvalTask::Segmentation => {
            if params.head_kind != HeadKind::PerPoint {
                return Err(Error::Config("evaluate: needs a per-point head".into()));
            }
            let point_labels = dataset
                .point_labels()
                .ok_or_else(|| Error::Config("evaluate: dataset has no point labels".into()))?;
            let class_labels = dataset
                .class_labels()
                .ok_or_else(|| Error::Config("evaluate: dataset has no class labels".into()))?;
            let parts_per_class = dataset.parts_per_class()?;
            let mut predictions = Vec::with_capacity(indices.len());
            let mut labels = Vec::with_capacity(indices.len());
            let mut classes = Vec::with_capacity(indices.len());
            let mut correct = 0usize;
            let mut total = 0usize;
            for &idx in &indices {
                let class = class_labels[idx];
                let parts = parts_per_class
                    .get(&class)
                    .ok_or_else(|| Error::Dataset(format!("no parts for class {class}")))?;
                let condition = (params.config.condition_dim > 0).then(|| {
                    let mut one_hot = vec![0.0; params.config.condition_dim];
                    one_hot[class] = 1.0;
                    one_hot
                });
                let out = forward(params, dataset.cloud(idx), condition.as_deref());
                let cloud_preds: Vec<usize> = (0..out.logits.rows())
                    .map(|i| {
                        let row = out.logits.row(i);
                        // argmax restricted to the class's valid parts
                        let mut best = parts[0];
                        for &p in &parts[1..] {
                            if row[p] > row[best] {
                                best = p;
                            }
                        }
                        best
                    })
                    .collect();
                for (p, l) in cloud_preds.iter().zip(&point_labels[idx]) {
                    if p == l {
                        correct += 1;
                    }
                    total += 1;
                }
                predictions.push(cloud_preds);
                labels.push(point_labels[idx].clone());
                classes.push(class);
            }
            let miou =
                downstream::mean_iou(&predictions, &labels, &parts_per_class, &classes)?;
            Ok(EvalMetrics {
                accuracy: correct as f64 / total as f64,
                mean_iou: Some(miou),
            })
        }
        EvalTask::Classification => {
            if params.head_kind != HeadKind::Global {
                return Err(Error::Config("evaluate: needs a classifier head".into()));
            }
            let class_labels = dataset
                .class_labels()
                .ok_or_else(|| Error::Config("evaluate: dataset has no class labels".into()))?;
            let predictions: Vec<usize> = indices
                .iter()
                .map(|&idx| argmax(forward(params, dataset.cloud(idx), None).logits.row(0)))
                .collect();
            let labels: Vec<usize> = indices.iter().map(|&i| class_labels[i]).collect();
            Ok(EvalMetrics {
                accuracy: downstream::accuracy(&predictions, &labels)?,
                mean_iou: None,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{Point3, PointCloud};
    use crate::net::{attach_classifier_head, swap_head};

    fn small_net(k: usize) -> NetworkConfig {
        NetworkConfig {
            encoder_widths: vec![16, 16],
            embed_dim: 32,
            head_widths: vec![16],
            num_point_classes: k * k * k,
            condition_dim: 0,
        }
    }

    fn tiny_dataset(seed: u64, clouds: usize, points: usize) -> Dataset {
        let mut rng = Rng::new(seed);
        let list: Vec<PointCloud> = (0..clouds)
            .map(|_| {
                PointCloud::new(
                    (0..points)
                        .map(|_| Point3::new(rng.uniform(), rng.uniform(), rng.uniform()))
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        Dataset::new("tiny", list).unwrap()
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let logits = Tensor2::zeros(4, 27);
        let (loss, grads) = cross_entropy_per_point(&logits, &[0, 5, 13, 26]);
        assert!((loss - (27.0f64).ln()).abs() < 1e-12, "ln 27 = 3.2958...");
        // gradient rows sum to zero
        for i in 0..4 {
            let s: f64 = grads.row(i).iter().sum();
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_saturated_correct() {
        let mut logits = Tensor2::zeros(1, 4);
        logits.set(0, 2, 1000.0);
        let (loss, _) = cross_entropy_per_point(&logits, &[2]);
        assert!(loss.abs() < 1e-12);
    }

    /// Definition oracle in plain arithmetic plus finite differences on the
    /// logits.
    #[test]
    fn cross_entropy_matches_oracle_and_fd() {
        let mut rng = Rng::new(1);
        let mut logits = Tensor2::zeros(5, 4);
        for v in logits.data_mut() {
            *v = rng.gaussian();
        }
        let targets = [3, 0, 1, 2, 1];
        let (loss, grads) = cross_entropy_per_point(&logits, &targets);

        // direct definition, no stabilization (safe at this scale)
        let mut expected = 0.0;
        for i in 0..5 {
            let row = logits.row(i);
            let denom: f64 = row.iter().map(|v| v.exp()).sum();
            expected += -(row[targets[i]].exp() / denom).ln();
        }
        expected /= 5.0;
        assert!((loss - expected).abs() < 1e-12);

        let h = 1e-6;
        for r in 0..5 {
            for c in 0..4 {
                let mut up = logits.clone();
                up.set(r, c, up.get(r, c) + h);
                let mut down = logits.clone();
                down.set(r, c, down.get(r, c) - h);
                let fd = (cross_entropy_per_point(&up, &targets).0
                    - cross_entropy_per_point(&down, &targets).0)
                    / (2.0 * h);
                assert!(
                    (fd - grads.get(r, c)).abs() < 1e-6,
                    "grad[{r}][{c}]: fd {fd} vs {}",
                    grads.get(r, c)
                );
            }
        }
    }

    #[test]
    #[should_panic(expected = "out of range")]
    fn cross_entropy_target_range_is_contract() {
        let logits = Tensor2::zeros(1, 3);
        cross_entropy_per_point(&logits, &[3]);
    }

    #[test]
    fn adam_zero_grads_fixed_point() {
        let cfg = small_net(2);
        let mut params = init_parameters(&cfg, &mut Rng::new(2));
        let before = params.clone();
        let grads = Gradients::zeros_like(&params);
        let mut state = AdamState::new(&params);
        let tcfg = TrainConfig::default();
        adam_step(&mut params, &grads, &mut state, &tcfg);
        adam_step(&mut params, &grads, &mut state, &tcfg);
        assert_eq!(params, before);
    }

    #[test]
    fn adam_zero_learning_rate_is_noop() {
        let cfg = small_net(2);
        let mut params = init_parameters(&cfg, &mut Rng::new(3));
        let before = params.clone();
        let mut grads = Gradients::zeros_like(&params);
        for layer in grads.encoder.iter_mut() {
            for v in layer.weight.data_mut() {
                *v = 1.5;
            }
        }
        let mut state = AdamState::new(&params);
        let tcfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        adam_step(&mut params, &grads, &mut state, &tcfg);
        assert_eq!(params, before);
    }

    /// Two steps with unit gradient on one scalar, executed by hand.
    #[test]
    fn adam_matches_hand_computation() {
        let cfg = NetworkConfig {
            encoder_widths: vec![],
            embed_dim: 1,
            head_widths: vec![],
            num_point_classes: 1,
            condition_dim: 0,
        };
        let mut params = init_parameters(&cfg, &mut Rng::new(4));
        let theta0 = params.flat_get(0);
        let mut grads = Gradients::zeros_like(&params);
        grads.encoder[0].weight.set(0, 0, 1.0);
        let mut state = AdamState::new(&params);
        let tcfg = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };

        // hand execution of the update rule
        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.1);
        let mut m = 0.0;
        let mut v = 0.0;
        let mut theta = theta0;
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * 1.0;
            v = b2 * v + (1.0 - b2) * 1.0;
            let m_hat = m / (1.0 - b1_pow(b1, t));
            let v_hat = v / (1.0 - b1_pow(b2, t));
            theta -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        fn b1_pow(b: f64, t: i32) -> f64 {
            b.powi(t)
        }

        adam_step(&mut params, &grads, &mut state, &tcfg);
        adam_step(&mut params, &grads, &mut state, &tcfg);
        assert!((params.flat_get(0) - theta).abs() < 1e-15);
        // both bias corrections cancel for constant gradients: steps are ~lr
        assert!((theta0 - params.flat_get(0) - 0.2).abs() < 1e-7);
    }

    #[test]
    fn pretrain_zero_lr_leaves_parameters_at_init() {
        let ds = tiny_dataset(5, 4, 16);
        let jcfg = JigsawConfig {
            k: 2,
            ..JigsawConfig::default()
        };
        let ncfg = small_net(2);
        let tcfg = TrainConfig {
            epochs: 1,
            learning_rate: 0.0,
            seed: 9,
            ..TrainConfig::default()
        };
        let (params, log) = pretrain(&ds, &jcfg, &ncfg, &tcfg).unwrap();
        let init = init_parameters(&ncfg, &mut Rng::stream2(9, purpose::INIT, 0));
        assert_eq!(params, init);
        assert_eq!(log.records.len(), 1);
    }

    #[test]
    fn pretrain_is_deterministic() {
        let ds = tiny_dataset(6, 6, 24);
        let jcfg = JigsawConfig {
            k: 2,
            ..JigsawConfig::default()
        };
        let ncfg = small_net(2);
        let tcfg = TrainConfig {
            epochs: 3,
            batch_size: 4,
            seed: 77,
            ..TrainConfig::default()
        };
        let (pa, la) = pretrain(&ds, &jcfg, &ncfg, &tcfg).unwrap();
        let (pb, lb) = pretrain(&ds, &jcfg, &ncfg, &tcfg).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(la.records.len(), lb.records.len());
        for (a, b) in la.records.iter().zip(&lb.records) {
            assert_eq!(a.loss.to_bits(), b.loss.to_bits());
            assert_eq!(a.accuracy.to_bits(), b.accuracy.to_bits());
        }
    }

    #[test]
    fn pretrain_rejects_mismatched_head() {
        let ds = tiny_dataset(7, 2, 8);
        let jcfg = JigsawConfig {
            k: 3,
            ..JigsawConfig::default()
        };
        let ncfg = small_net(2); // 8 classes, but k^3 = 27
        let err = pretrain(&ds, &jcfg, &ncfg, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    fn offset_classification_dataset() -> Dataset {
        // two classes whose clouds differ by a constant offset
        let mut rng = Rng::new(8);
        let mut clouds = Vec::new();
        let mut labels = Vec::new();
        for i in 0..10 {
            let offset = if i % 2 == 0 { 0.0 } else { 0.6 };
            clouds.push(
                PointCloud::new(
                    (0..12)
                        .map(|_| {
                            Point3::new(
                                rng.uniform() * 0.4 + offset,
                                rng.uniform() * 0.4,
                                rng.uniform() * 0.4 + offset,
                            )
                        })
                        .collect(),
                )
                .unwrap(),
            );
            labels.push(i % 2);
        }
        Dataset::new("offset", clouds)
            .unwrap()
            .with_class_labels(labels, 2)
            .unwrap()
    }

    #[test]
    fn finetune_classification_solves_linear_task() {
        let ds = offset_classification_dataset();
        let ncfg = small_net(2);
        let base = init_parameters(&ncfg, &mut Rng::new(10));
        let params = attach_classifier_head(&base, 2, &mut Rng::new(11));
        let tcfg = TrainConfig {
            epochs: 50,
            batch_size: 4,
            seed: 12,
            task: TaskKind::FinetuneClassification,
            ..TrainConfig::default()
        };
        let (tuned, log) = finetune(&params, &ds, &params.config, &tcfg).unwrap();
        assert_eq!(log.final_accuracy(), 1.0, "train accuracy must reach 100%");
        let metrics = evaluate(&tuned, &ds, "all", EvalTask::Classification).unwrap();
        assert_eq!(metrics.accuracy, 1.0);
    }

    #[test]
    fn finetune_zero_lr_is_noop() {
        let ds = offset_classification_dataset();
        let ncfg = small_net(2);
        let base = init_parameters(&ncfg, &mut Rng::new(13));
        let params = attach_classifier_head(&base, 2, &mut Rng::new(14));
        let tcfg = TrainConfig {
            epochs: 2,
            learning_rate: 0.0,
            task: TaskKind::FinetuneClassification,
            ..TrainConfig::default()
        };
        let (tuned, _) = finetune(&params, &ds, &params.config, &tcfg).unwrap();
        assert_eq!(tuned, params);
    }

    #[test]
    fn finetune_requires_matching_labels() {
        let ds = tiny_dataset(15, 4, 8); // no labels at all
        let ncfg = small_net(2);
        let base = init_parameters(&ncfg, &mut Rng::new(16));
        let cls = attach_classifier_head(&base, 2, &mut Rng::new(17));
        let tcfg = TrainConfig {
            task: TaskKind::FinetuneClassification,
            ..TrainConfig::default()
        };
        assert!(matches!(
            finetune(&cls, &ds, &cls.config, &tcfg),
            Err(Error::Config(_))
        ));
        let tcfg = TrainConfig {
            task: TaskKind::FinetuneSegmentation,
            ..TrainConfig::default()
        };
        assert!(matches!(
            finetune(&base, &ds, &base.config, &tcfg),
            Err(Error::Config(_))
        ));
    }

    fn part_labeled_dataset() -> Dataset {
        // one class, two parts split by x
        let mut rng = Rng::new(18);
        let mut clouds = Vec::new();
        let mut point_labels = Vec::new();
        for _ in 0..6 {
            let points: Vec<Point3> = (0..16)
                .map(|_| Point3::new(rng.uniform(), rng.uniform(), rng.uniform()))
                .collect();
            point_labels.push(points.iter().map(|p| (p.x > 0.5) as usize).collect());
            clouds.push(PointCloud::new(points).unwrap());
        }
        Dataset::new("parts", clouds)
            .unwrap()
            .with_class_labels(vec![0; 6], 1)
            .unwrap()
            .with_point_labels(point_labels)
            .unwrap()
    }

    #[test]
    fn finetune_segmentation_learns_split() {
        let ds = part_labeled_dataset();
        let ncfg = small_net(2);
        let base = init_parameters(&ncfg, &mut Rng::new(19));
        let params = swap_head(&base, 2, &mut Rng::new(20));
        let tcfg = TrainConfig {
            epochs: 200,
            batch_size: 3,
            learning_rate: 3e-3,
            seed: 21,
            task: TaskKind::FinetuneSegmentation,
            ..TrainConfig::default()
        };
        let (tuned, log) = finetune(&params, &ds, &params.config, &tcfg).unwrap();
        assert!(log.final_accuracy() > 0.95, "got {}", log.final_accuracy());
        let metrics = evaluate(&tuned, &ds, "all", EvalTask::Segmentation).unwrap();
        assert!(metrics.accuracy > 0.95);
        let miou = metrics.mean_iou.unwrap();
        assert!(miou > 80.0, "mIoU {miou}");
    }

    #[test]
    fn evaluate_is_pure() {
        let ds = offset_classification_dataset();
        let ncfg = small_net(2);
        let base = init_parameters(&ncfg, &mut Rng::new(22));
        let cls = attach_classifier_head(&base, 2, &mut Rng::new(23));
        let a = evaluate(&cls, &ds, "all", EvalTask::Classification).unwrap();
        let b = evaluate(&cls, &ds, "all", EvalTask::Classification).unwrap();
        assert_eq!(a, b);

        let jcfg = JigsawConfig {
            k: 2,
            ..JigsawConfig::default()
        };
        let a = evaluate(
            &base,
            &ds,
            "all",
            EvalTask::Pretrain {
                jigsaw: &jcfg,
                seed: 5,
            },
        )
        .unwrap();
        let b = evaluate(
            &base,
            &ds,
            "all",
            EvalTask::Pretrain {
                jigsaw: &jcfg,
                seed: 5,
            },
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            evaluate(&base, &ds, "nope", EvalTask::Classification),
            Err(Error::UnknownSplit(_))
        ));
    }

    #[test]
    fn evaluate_perfect_memorization_is_one() {
        // classifier head hand-built to read class from x position
        let ds = offset_classification_dataset();
        let ncfg = small_net(2);
        let base = init_parameters(&ncfg, &mut Rng::new(24));
        let tcfg = TrainConfig {
            epochs: 80,
            batch_size: 2,
            seed: 25,
            task: TaskKind::FinetuneClassification,
            ..TrainConfig::default()
        };
        let cls = attach_classifier_head(&base, 2, &mut Rng::new(26));
        let (tuned, _) = finetune(&cls, &ds, &cls.config, &tcfg).unwrap();
        let metrics = evaluate(&tuned, &ds, "all", EvalTask::Classification).unwrap();
        assert_eq!(metrics.accuracy, 1.0);
    }

    #[test]
    fn train_log_csv_shape() {
        let log = TrainLog {
            records: vec![EpochRecord {
                epoch: 0,
                loss: 1.5,
                accuracy: 0.25,
                seconds: 0.01,
            }],
        };
        let csv = log.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("epoch,loss,accuracy,seconds"));
        assert_eq!(lines.next(), Some("0,1.5,0.25,0.01"));
    }
}
