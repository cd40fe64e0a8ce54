//! Projected gradient descent on a synthetic node-classification task.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layers::{Activation, Model, ModelKind};
use crate::linalg::Matrix;
use crate::parallel::{trial_rng, Execution};
use crate::projection::{project_model_with_norm, AlphaSplit};
use crate::verify::{certify_model_with_norm, perturbation_trials, PerturbationReport, DEFAULT_EPS_SCALE};

/// Feature noise added to the one-hot block indicator.
pub const SBM_FEATURE_NOISE: f64 = 0.1;
pub const TRAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, PartialEq)]
pub struct NodeClassificationTask {
    pub graph: Graph,
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub train_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
}

impl NodeClassificationTask {
    pub fn new(
        graph: Graph,
        features: Matrix,
        labels: Vec<usize>,
        num_classes: usize,
        train_mask: Vec<bool>,
        test_mask: Vec<bool>,
    ) -> Result<Self> {
        let n = graph.num_nodes();
        if features.rows() != n || labels.len() != n || train_mask.len() != n || test_mask.len() != n {
            return Err(Error::Contract(format!(
                "task arrays must all have {n} rows"
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Contract(format!("label {bad} >= num_classes {num_classes}")));
        }
        if train_mask.iter().zip(&test_mask).any(|(&a, &b)| a && b) {
            return Err(Error::Contract("train and test masks overlap".into()));
        }
        Ok(NodeClassificationTask {
            graph,
            features,
            labels,
            num_classes,
            train_mask,
            test_mask,
        })
    }
}

/// Stochastic block model with `num_blocks` equal blocks. Node `i` belongs
/// to block `i / (n / num_blocks)`; each pair is joined with probability
/// `p_in` inside a block and `p_out` across blocks. Features are the one-hot
/// block indicator plus `N(0, 0.1²)` noise; 80% of nodes, chosen by a seeded
/// shuffle, form the training set.
pub fn synth_sbm(n: usize, num_blocks: usize, p_in: f64, p_out: f64, seed: u64) -> Result<NodeClassificationTask> {
    if num_blocks == 0 || n == 0 || !n.is_multiple_of(num_blocks) {
        return Err(Error::Contract(format!(
            "n ({n}) must be a positive multiple of num_blocks ({num_blocks})"
        )));
    }
    if !(0.0 <= p_out && p_out < p_in && p_in <= 1.0) {
        return Err(Error::Contract(format!(
            "need 0 <= p_out < p_in <= 1, got p_in={p_in}, p_out={p_out}"
        )));
    }
    let block_size = n / num_blocks;
    let labels: Vec<usize> = (0..n).map(|i| i / block_size).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graph = Graph::empty(n)?;
    for i in 0..n {
        for j in i + 1..n {
            let p = if labels[i] == labels[j] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                graph.add_edge(i, j);
            }
        }
    }

    let noise = Normal::new(0.0, SBM_FEATURE_NOISE).expect("valid stddev");
    let features = Matrix::from_fn(n, num_blocks, |i, j| {
        let indicator = if labels[i] == j { 1.0 } else { 0.0 };
        indicator + noise.sample(&mut rng)
    });

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (TRAIN_FRACTION * n as f64).round() as usize;
    let mut train_mask = vec![false; n];
    let mut test_mask = vec![false; n];
    for (rank, &node) in order.iter().enumerate() {
        if rank < n_train {
            train_mask[node] = true;
        } else {
            test_mask[node] = true;
        }
    }
    NodeClassificationTask::new(graph, features, labels, num_blocks, train_mask, test_mask)
}

/// Mean cross-entropy of `softmax(logits)` over masked rows, with its
/// gradient (zero on unmasked rows).
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize], mask: &[bool]) -> Result<(f64, Matrix)> {
    let (n, k) = logits.shape();
    if labels.len() != n || mask.len() != n {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{n} labels and mask entries"),
            format!("{} labels, {} mask entries", labels.len(), mask.len()),
        ));
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Err(Error::Contract("mask selects no rows".into()));
    }
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(n, k);
    for i in 0..n {
        if !mask[i] {
            continue;
        }
        if labels[i] >= k {
            return Err(Error::Contract(format!("label {} >= {k} classes", labels[i])));
        }
        let row = logits.row(i);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|z| (z - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[labels[i]];
        for j in 0..k {
            let p = (row[j] - log_z).exp();
            let target = if j == labels[i] { 1.0 } else { 0.0 };
            grad.set(i, j, (p - target) / count as f64);
        }
    }
    Ok((loss / count as f64, grad))
}

/// Fraction of masked rows whose arg-max logit (first on ties) is the label.
pub fn accuracy(logits: &Matrix, labels: &[usize], mask: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for (i, (&label, &m)) in labels.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        total += 1;
        let row = logits.row(i);
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == label {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Project after every `project_every` steps and after the last one;
    /// 0 disables projection.
    pub project_every: usize,
    pub alpha: AlphaSplit,
    pub seed: u64,
    pub eps_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 0.1,
            project_every: 1,
            alpha: AlphaSplit::default(),
            seed: 0,
            eps_scale: DEFAULT_EPS_SCALE,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Contract("epochs must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Contract(format!("learning rate must be >= 0, got {}", self.lr)));
        }
        Ok(())
    }
}

/// One JSON-lines history record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Training loss of the weights entering this epoch's step.
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: f64,
    /// Smallest certificate margin after the step (and projection, if any).
    pub min_margin: f64,
    #[serde(skip)]
    pub layer_margins: Vec<f64>,
}

/// Two-layer model `C_in → hidden → num_classes` with Glorot weights drawn
/// from a stream of `seed` that the task generator does not use.
pub fn default_model(
    kind: ModelKind,
    task: &NodeClassificationTask,
    hidden: usize,
    activation: Activation,
    seed: u64,
) -> Result<Model> {
    let mut rng = trial_rng(seed, u64::MAX);
    Model::random(
        kind,
        &[task.features.cols(), hidden, task.num_classes],
        activation,
        kind.default_adjacency(),
        &mut rng,
    )
}

fn diverged(epoch: usize, e: Error) -> Error {
    Error::Contract(format!("training diverged at epoch {epoch}: {e}"))
}

/// Full-batch gradient descent on the training mask, projecting onto the
/// contractive set on the schedule in `cfg`.
pub fn train_projected(
    model: &Model,
    task: &NodeClassificationTask,
    cfg: &TrainConfig,
) -> Result<(Model, Vec<EpochRecord>)> {
    cfg.validate()?;
    if model.input_dim() != task.features.cols() || model.output_dim() != task.num_classes {
        return Err(Error::shape(
            "train_projected",
            format!("{} -> {} model", task.features.cols(), task.num_classes),
            format!("{} -> {}", model.input_dim(), model.output_dim()),
        ));
    }
    let a = model.adjacency(&task.graph);
    let norm = task.graph.adjacency_norm(model.adjacency_mode)?;
    let mut model = model.clone();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let (logits, cache) = model.forward_cached(&a, &task.features).map_err(|e| diverged(epoch, e))?;
        let (loss, grad) = softmax_cross_entropy(&logits, &task.labels, &task.train_mask)?;
        if !loss.is_finite() {
            return Err(diverged(epoch, Error::NonFinite("loss")));
        }
        let train_acc = accuracy(&logits, &task.labels, &task.train_mask);
        let test_acc = accuracy(&logits, &task.labels, &task.test_mask);

        let (grads, _) = model.backward(&cache, &grad).map_err(|e| diverged(epoch, e))?;
        model.apply_gradients(&grads, cfg.lr).map_err(|e| diverged(epoch, e))?;
        if cfg.project_every > 0 && (epoch % cfg.project_every == 0 || epoch == cfg.epochs) {
            model = project_model_with_norm(&model, norm, cfg.alpha)?;
        }

        let cert = certify_model_with_norm(&model, norm)?;
        history.push(EpochRecord {
            epoch,
            loss,
            train_acc,
            test_acc,
            min_margin: cert.min_margin(),
            layer_margins: cert.layers.iter().map(|l| l.margin).collect(),
        });
    }
    Ok((model, history))
}

/// Final train and test accuracy of `model` on `task`.
pub fn evaluate(model: &Model, task: &NodeClassificationTask) -> Result<(f64, f64)> {
    let logits = model.forward(&model.adjacency(&task.graph), &task.features)?;
    Ok((
        accuracy(&logits, &task.labels, &task.train_mask),
        accuracy(&logits, &task.labels, &task.test_mask),
    ))
}

/// Divergence of the model output under Gaussian perturbations of the task
/// features: ratios `‖out(X + ε) − out(X)‖_F / ‖ε‖_F`, per layer and end to
/// end.
pub fn robustness_eval(
    model: &Model,
    task: &NodeClassificationTask,
    eps_scale: f64,
    trials: usize,
    seed: u64,
) -> Result<PerturbationReport> {
    robustness_eval_with(model, task, eps_scale, trials, seed, Execution::default())
}

pub fn robustness_eval_with(
    model: &Model,
    task: &NodeClassificationTask,
    eps_scale: f64,
    trials: usize,
    seed: u64,
    exec: Execution,
) -> Result<PerturbationReport> {
    perturbation_trials(
        model,
        &model.adjacency(&task.graph),
        Some(&task.features),
        trials,
        eps_scale,
        seed,
        exec,
    )
}

pub fn history_to_json_lines(history: &[EpochRecord]) -> String {
    let mut out = String::new();
    for r in history {
        out.push_str(&serde_json::to_string(r).expect("record serialization is infallible"));
        out.push('\n');
    }
    out
}
