//! Downstream evaluation: linear classifier on frozen embeddings, few-shot
//! sampling, and the accuracy / mean-IoU metrics.
//!
//! The classifier is a one-vs-rest linear SVM fitted by deterministic
//! sub-gradient descent (Pegasos-style) with a fixed iteration budget.
//! Training samples are canonicalized by sorting before the seed-driven
//! shuffles, so the fitted decision depends only on the multiset of samples
//! and the seed, never on input order.

use std::collections::BTreeMap;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::net::{self, Parameters, Tensor2};
use crate::rng::{purpose, Rng};

/// Fixed pass budget of the SVM sub-gradient solver.
const SVM_EPOCHS: usize = 200;

/// One-vs-rest linear classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearClassifier {
    /// `classes x dim` weight matrix.
    pub weights: Tensor2,
    pub biases: Vec<f64>,
    pub c_reg: f64,
}

impl LinearClassifier {
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.weights.cols(), "embedding dimension mismatch");
        (0..self.weights.rows())
            .map(|c| {
                let w = self.weights.row(c);
                let mut acc = self.biases[c];
                for (wi, xi) in w.iter().zip(x) {
                    acc += wi * xi;
                }
                acc
            })
            .collect()
    }

    /// Argmax class score, ties to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.scores(x))
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = values[0];
    let mut winner = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best {
            best = v;
            winner = i;
        }
    }
    winner
}

/// Fits a one-vs-rest L2-regularized hinge-loss classifier.
///
/// Objective per class: `||w||^2 / (2 c_reg) + mean_i hinge_i`, minimized by
/// Pegasos sub-gradient steps over [`SVM_EPOCHS`] seed-shuffled passes. The
/// bias is updated unregularized. All classes share the same visit orders,
/// so a class relabeling permutes the fitted rows exactly.
pub fn fit_linear_svm(
    embeddings: &[Vec<f64>],
    labels: &[usize],
    c_reg: f64,
    rng: &mut Rng,
) -> Result<LinearClassifier> {
    if embeddings.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} embeddings vs {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    if embeddings.is_empty() {
        return Err(Error::Config("svm: no training samples".into()));
    }
    if !(c_reg.is_finite() && c_reg > 0.0) {
        return Err(Error::Config(format!("svm: C_reg {c_reg} must be > 0")));
    }
    let dim = embeddings[0].len();
    for (i, e) in embeddings.iter().enumerate() {
        if e.len() != dim {
            return Err(Error::Shape(format!("embedding {i} has length {}", e.len())));
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("embedding {i} is not finite")));
        }
    }
    let num_classes = labels.iter().max().copied().unwrap_or(0) + 1;
    {
        let mut present = vec![false; num_classes];
        for &l in labels {
            present[l] = true;
        }
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::Config("svm: need at least two classes".into()));
        }
    }

    // canonical order: the fit must be a function of the sample multiset
    let mut canonical: Vec<usize> = (0..embeddings.len()).collect();
    canonical.sort_by(|&a, &b| {
        for (x, y) in embeddings[a].iter().zip(&embeddings[b]) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Equal => continue,
                other => return other,
            }
        }
        labels[a].cmp(&labels[b])
    });

    // one shuffle sequence shared by every class
    let visit_orders: Vec<Vec<usize>> = (0..SVM_EPOCHS)
        .map(|_| {
            let mut order = canonical.clone();
            rng.shuffle(&mut order);
            order
        })
        .collect();

    // Pegasos with lambda = 1/c_reg: eta_t * lambda = 1/t
    let mut weights = Tensor2::zeros(num_classes, dim);
    let mut biases = vec![0.0; num_classes];
    for class in 0..num_classes {
        let w = weights.row_mut(class);
        let b = &mut biases[class];
        let mut t = 0u64;
        for order in &visit_orders {
            for &i in order {
                t += 1;
                let x = &embeddings[i];
                let y = if labels[i] == class { 1.0 } else { -1.0 };
                let mut margin = *b;
                for (wi, xi) in w.iter().zip(x) {
                    margin += wi * xi;
                }
                margin *= y;
                let shrink = 1.0 - 1.0 / t as f64;
                for wi in w.iter_mut() {
                    *wi *= shrink;
                }
                if margin < 1.0 {
                    let eta = c_reg / t as f64;
                    for (wi, xi) in w.iter_mut().zip(x) {
                        *wi += eta * y * xi;
                    }
                    *b += eta * y;
                }
            }
        }
    }

    Ok(LinearClassifier {
        weights,
        biases,
        c_reg,
    })
}

/// A few-shot labeled subset: one guaranteed sample per class, the rest
/// uniform.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FewShotPlan {
    pub selected_indices: Vec<usize>,
    pub per_class_counts: BTreeMap<usize, usize>,
    pub seed: u64,
}

/// Stage 1 picks one uniform member per class; stage 2 fills to `n_total`
/// uniformly without replacement from the rest of the split.
pub fn few_shot_sample(
    dataset: &Dataset,
    split: &str,
    n_total: usize,
    seed: u64,
) -> Result<FewShotPlan> {
    let indices = dataset.split(split)?;
    let labels = dataset
        .class_labels()
        .ok_or_else(|| Error::Config("few-shot: dataset has no class labels".into()))?;
    let num_classes = dataset.num_classes().expect("set alongside class labels");
    if n_total < num_classes {
        return Err(Error::Config(format!(
            "few-shot: n_total {n_total} below class count {num_classes}"
        )));
    }
    if n_total > indices.len() {
        return Err(Error::Config(format!(
            "few-shot: n_total {n_total} exceeds split size {}",
            indices.len()
        )));
    }

    let mut rng = Rng::stream2(seed, purpose::FEWSHOT, 0);
    let mut selected = Vec::with_capacity(n_total);
    let mut taken = vec![false; indices.len()];
    for class in 0..num_classes {
        let members: Vec<usize> = (0..indices.len())
            .filter(|&pos| labels[indices[pos]] == class)
            .collect();
        if members.is_empty() {
            return Err(Error::Dataset(format!(
                "few-shot: class {class} has no samples in split '{split}'"
            )));
        }
        let pos = members[rng.index(members.len())];
        taken[pos] = true;
        selected.push(indices[pos]);
    }
    let remaining: Vec<usize> = (0..indices.len())
        .filter(|&pos| !taken[pos])
        .map(|pos| indices[pos])
        .collect();
    selected.extend(rng.choose_distinct(&remaining, n_total - num_classes));

    let mut per_class_counts = BTreeMap::new();
    for &i in &selected {
        *per_class_counts.entry(labels[i]).or_insert(0) += 1;
    }
    Ok(FewShotPlan {
        selected_indices: selected,
        per_class_counts,
        seed,
    })
}

/// Fraction of equal entries.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::Shape(format!(
            "accuracy: {} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let equal = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(equal as f64 / predictions.len() as f64)
}

/// Part-segmentation mean IoU as a percentage.
///
/// Per cloud, the IoU of each part of its object class is averaged (a part
/// absent from both prediction and ground truth counts as 1); cloud values
/// are averaged within each object class, then across classes.
pub fn mean_iou(
    per_cloud_predictions: &[Vec<usize>],
    per_cloud_labels: &[Vec<usize>],
    parts_per_class: &BTreeMap<usize, Vec<usize>>,
    class_of_cloud: &[usize],
) -> Result<f64> {
    let n = per_cloud_predictions.len();
    if n == 0 || per_cloud_labels.len() != n || class_of_cloud.len() != n {
        return Err(Error::Shape("mean_iou: cloud list lengths differ".into()));
    }
    let mut per_class: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for i in 0..n {
        let preds = &per_cloud_predictions[i];
        let labels = &per_cloud_labels[i];
        if preds.len() != labels.len() {
            return Err(Error::Shape(format!(
                "mean_iou: cloud {i} has {} predictions for {} labels",
                preds.len(),
                labels.len()
            )));
        }
        let class = class_of_cloud[i];
        let parts = parts_per_class
            .get(&class)
            .ok_or_else(|| Error::Dataset(format!("mean_iou: unknown class {class}")))?;
        for &v in preds.iter().chain(labels.iter()) {
            if !parts.contains(&v) {
                return Err(Error::Dataset(format!(
                    "mean_iou: part {v} is not valid for class {class}"
                )));
            }
        }
        let mut iou_sum = 0.0;
        for &part in parts {
            let mut intersection = 0usize;
            let mut union = 0usize;
            for (&p, &l) in preds.iter().zip(labels) {
                let in_pred = p == part;
                let in_label = l == part;
                if in_pred && in_label {
                    intersection += 1;
                }
                if in_pred || in_label {
                    union += 1;
                }
            }
            iou_sum += if union == 0 {
                1.0
            } else {
                intersection as f64 / union as f64
            };
        }
        per_class
            .entry(class)
            .or_default()
            .push(iou_sum / parts.len() as f64);
    }
    let class_means: Vec<f64> = per_class
        .values()
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .collect();
    Ok(100.0 * class_means.iter().sum::<f64>() / class_means.len() as f64)
}

/// Frozen-parameter embeddings of the selected clouds, in index order.
pub fn extract_embeddings(
    params: &Parameters,
    dataset: &Dataset,
    indices: &[usize],
) -> Vec<Vec<f64>> {
    indices
        .iter()
        .map(|&i| net::extract_embedding(params, dataset.cloud(i), None))
        .collect()
}

/// Normalizes each embedding to unit L2 norm (zero vectors pass through).
pub fn unit_normalize(embeddings: &mut [Vec<f64>]) {
    for e in embeddings {
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in e.iter_mut() {
                *v /= norm;
            }
        }
    }
}

/// Result of a single transfer evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferOutcome {
    pub pretrain_dataset: String,
    pub eval_dataset: String,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: f64,
}

/// Linear-classifier transfer: embed both splits with frozen parameters,
/// fit on the train split, report test accuracy. Parameters are never
/// mutated.
pub fn transfer_eval(
    params: &Parameters,
    pretrain_dataset_name: &str,
    eval_dataset: &Dataset,
    split_train: &str,
    split_test: &str,
    c_reg: f64,
    normalize: bool,
    rng: &mut Rng,
) -> Result<TransferOutcome> {
    let labels = eval_dataset
        .class_labels()
        .ok_or_else(|| Error::Config("transfer: dataset has no class labels".into()))?;
    let train_idx = eval_dataset.split(split_train)?;
    let test_idx = eval_dataset.split(split_test)?;
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(Error::Dataset("transfer: empty split".into()));
    }

    let mut train_emb = extract_embeddings(params, eval_dataset, &train_idx);
    let mut test_emb = extract_embeddings(params, eval_dataset, &test_idx);
    if normalize {
        unit_normalize(&mut train_emb);
        unit_normalize(&mut test_emb);
    }
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| labels[i]).collect();
    let test_labels: Vec<usize> = test_idx.iter().map(|&i| labels[i]).collect();

    let classifier = fit_linear_svm(&train_emb, &train_labels, c_reg, rng)?;
    let predictions: Vec<usize> = test_emb.iter().map(|e| classifier.predict(e)).collect();
    Ok(TransferOutcome {
        pretrain_dataset: pretrain_dataset_name.to_string(),
        eval_dataset: eval_dataset.name.clone(),
        train_size: train_idx.len(),
        test_size: test_idx.len(),
        accuracy: accuracy(&predictions, &test_labels)?,
    })
}

/// Projects embeddings onto their two leading principal components
/// (deterministic power iteration with deflation).
pub fn pca_2d(embeddings: &[Vec<f64>], seed: u64) -> Result<Vec<[f64; 2]>> {
    if embeddings.is_empty() {
        return Err(Error::Config("pca: no embeddings".into()));
    }
    let dim = embeddings[0].len();
    let n = embeddings.len();
    let mut mean = vec![0.0; dim];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered: Vec<Vec<f64>> = embeddings
        .iter()
        .map(|e| e.iter().zip(&mean).map(|(v, m)| v - m).collect())
        .collect();

    let mut rng = Rng::stream2(seed, purpose::EVAL, 1);
    let mut components: Vec<Vec<f64>> = Vec::new();
    for _ in 0..2 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gaussian()).collect();
        for _ in 0..200 {
            // u = (X^T X) v without forming the covariance
            let mut u = vec![0.0; dim];
            for row in &centered {
                let dot: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (ui, xi) in u.iter_mut().zip(row) {
                    *ui += dot * xi;
                }
            }
            // deflate against earlier components
            for comp in &components {
                let dot: f64 = u.iter().zip(comp).map(|(a, b)| a * b).sum();
                for (ui, ci) in u.iter_mut().zip(comp) {
                    *ui -= dot * ci;
                }
            }
            let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-300 {
                u = vec![0.0; dim];
                if dim > components.len() {
                    u[components.len()] = 1.0;
                }
                v = u;
                break;
            }
            for x in &mut u {
                *x /= norm;
            }
            v = u;
        }
        components.push(v);
    }

    Ok(centered
        .iter()
        .map(|row| {
            let p1: f64 = row.iter().zip(&components[0]).map(|(a, b)| a * b).sum();
            let p2: f64 = row.iter().zip(&components[1]).map(|(a, b)| a * b).sum();
            [p1, p2]
        })
        .collect())
}
