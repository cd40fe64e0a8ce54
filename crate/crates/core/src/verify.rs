//! Certificates and empirical checks of layer contractivity.
//!
//! A certificate evaluates the sufficient conditions
//! `‖W‖·‖A‖ ≤ 1` (GCN) and `‖W1‖ + ‖W2‖·‖Ã‖ ≤ 1` (GraphConv). Failing a
//! certificate does not mean a layer expands some input pair: the
//! conditions are sufficient, not necessary.
//!
//! Empirical checks measure `‖σ(f(X)) − σ(f(X + ε))‖_F / ‖ε‖_F` over seeded
//! Gaussian trials. Random trials only ever lower-bound the Lipschitz
//! constant, so [`brute_force_layer_lipschitz`] also computes the exact
//! constant of a layer's linear part on small instances through its
//! Kronecker form.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layers::{GcnLayer, GraphConvLayer, Layers, Model, ModelKind};
use crate::linalg::{spectral_norm, Matrix};
use crate::parallel::{run_trials, trial_rng, Execution};

/// Additive slack on every `≤` comparison.
pub const SLACK: f64 = 1e-9;

/// Largest `n · C` for which the exact Kronecker-form constant is computed.
pub const BRUTE_FORCE_CAP: usize = 64;

pub const DEFAULT_EPS_SCALE: f64 = 0.1;

/// Certificate for one layer, in division-free form: `lhs` is `‖W‖·‖A‖`
/// (GCN) or `‖W1‖ + ‖W2‖·‖Ã‖` (GraphConv) and `bound` is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCertificate {
    pub layer: usize,
    /// `[‖W‖]` for GCN, `[‖W1‖, ‖W2‖]` for GraphConv.
    pub operator_norms: Vec<f64>,
    pub adjacency_norm: f64,
    pub bound: f64,
    pub lhs: f64,
    pub margin: f64,
    pub satisfied: bool,
}

impl LayerCertificate {
    fn from_lhs(layer: usize, operator_norms: Vec<f64>, adjacency_norm: f64, lhs: f64) -> Self {
        let bound = 1.0;
        let margin = bound - lhs;
        LayerCertificate {
            layer,
            operator_norms,
            adjacency_norm,
            bound,
            lhs,
            margin,
            satisfied: margin >= -SLACK,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionCertificate {
    pub architecture: ModelKind,
    pub layers: Vec<LayerCertificate>,
    pub satisfied: bool,
}

impl ContractionCertificate {
    pub fn min_margin(&self) -> f64 {
        self.layers.iter().map(|l| l.margin).fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("certificate serialization is infallible")
    }
}

fn check_norm(norm: f64) -> Result<()> {
    if norm.is_finite() && norm >= 0.0 {
        Ok(())
    } else {
        Err(Error::Contract(format!("adjacency norm must be finite and >= 0, got {norm}")))
    }
}

/// `satisfied ⇔ ‖W‖·‖A‖ ≤ 1 + SLACK`. An edgeless graph always satisfies.
pub fn certify_gcn(layer: &GcnLayer, norm_a: f64) -> Result<LayerCertificate> {
    check_norm(norm_a)?;
    let w = spectral_norm(&layer.w)?;
    Ok(LayerCertificate::from_lhs(0, vec![w], norm_a, w * norm_a))
}

/// `satisfied ⇔ ‖W1‖ + ‖W2‖·‖Ã‖ ≤ 1 + SLACK`.
pub fn certify_graphconv(layer: &GraphConvLayer, norm_a_tilde: f64) -> Result<LayerCertificate> {
    check_norm(norm_a_tilde)?;
    let w1 = spectral_norm(&layer.w1)?;
    let w2 = spectral_norm(&layer.w2)?;
    Ok(LayerCertificate::from_lhs(
        0,
        vec![w1, w2],
        norm_a_tilde,
        w1 + w2 * norm_a_tilde,
    ))
}

pub fn certify_model(m: &Model, g: &Graph) -> Result<ContractionCertificate> {
    certify_model_with_norm(m, g.adjacency_norm(m.adjacency_mode)?)
}

pub fn certify_model_with_norm(m: &Model, norm: f64) -> Result<ContractionCertificate> {
    let layers: Vec<LayerCertificate> = match m.layers() {
        Layers::Gcn(ls) => ls
            .iter()
            .enumerate()
            .map(|(i, l)| certify_gcn(l, norm).map(|c| LayerCertificate { layer: i, ..c }))
            .collect::<Result<_>>()?,
        Layers::GraphConv(ls) => ls
            .iter()
            .enumerate()
            .map(|(i, l)| certify_graphconv(l, norm).map(|c| LayerCertificate { layer: i, ..c }))
            .collect::<Result<_>>()?,
    };
    let satisfied = layers.iter().all(|l| l.satisfied);
    Ok(ContractionCertificate {
        architecture: m.kind(),
        layers,
        satisfied,
    })
}

/// Largest contraction ratios observed over a batch of perturbation trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub trials: usize,
    pub eps_scale: f64,
    /// Per layer: max of `‖h_out − h*_out‖_F / ‖h_in − h*_in‖_F`, taking a
    /// trial's ratio as 0 when the layer's input difference vanishes.
    pub layer_max_ratios: Vec<f64>,
    pub end_to_end_max_ratio: f64,
    pub seed: u64,
}

impl PerturbationReport {
    pub fn max_layer_ratio(&self) -> f64 {
        self.layer_max_ratios.iter().copied().fold(0.0, f64::max)
    }

    /// True when no ratio exceeds `1 + SLACK`.
    pub fn contracts(&self) -> bool {
        self.max_layer_ratio() <= 1.0 + SLACK && self.end_to_end_max_ratio <= 1.0 + SLACK
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialization is infallible")
    }
}

/// Ratios for one `(X, X + ε)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRatios {
    pub layers: Vec<f64>,
    pub end_to_end: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Propagates `x` and `x + eps` through `m` and reports every layer's
/// contraction ratio plus the end-to-end ratio.
pub fn pair_ratios(m: &Model, a: &Matrix, x: &Matrix, eps: &Matrix) -> Result<PairRatios> {
    let mut h = x.clone();
    let mut h_star = x.add(eps)?;
    let eps_norm = eps.frobenius_norm();
    let mut layers = Vec::with_capacity(m.num_layers());
    for idx in 0..m.num_layers() {
        let d_in = h.frobenius_distance(&h_star).expect("matching shapes");
        let out = m.layer_forward(idx, a, &h)?;
        let out_star = m.layer_forward(idx, a, &h_star)?;
        let d_out = out.frobenius_distance(&out_star).expect("matching shapes");
        layers.push(ratio(d_out, d_in));
        h = out;
        h_star = out_star;
    }
    let end_to_end = ratio(h.frobenius_distance(&h_star).expect("matching shapes"), eps_norm);
    Ok(PairRatios { layers, end_to_end })
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn check_trial_args(trials: usize, eps_scale: f64) -> Result<()> {
    if trials == 0 {
        return Err(Error::Contract("trials must be >= 1".into()));
    }
    if !(eps_scale.is_finite() && eps_scale > 0.0) {
        return Err(Error::Contract(format!("eps_scale must be > 0, got {eps_scale}")));
    }
    Ok(())
}

/// Shared trial loop. When `base` is `None` every trial draws a fresh `X`.
pub(crate) fn perturbation_trials(
    m: &Model,
    a: &Matrix,
    base: Option<&Matrix>,
    trials: usize,
    eps_scale: f64,
    seed: u64,
    exec: Execution,
) -> Result<PerturbationReport> {
    check_trial_args(trials, eps_scale)?;
    let n = a.rows();
    let c = m.input_dim();
    let results = run_trials(trials, exec, |t| {
        let mut rng = trial_rng(seed, t as u64);
        let x = match base {
            Some(x) => x.clone(),
            None => gaussian(&mut rng, n, c, 1.0),
        };
        let eps = loop {
            let e = gaussian(&mut rng, n, c, eps_scale);
            if e.frobenius_norm() > 0.0 {
                break e;
            }
        };
        pair_ratios(m, a, &x, &eps)
    });

    let mut layer_max_ratios = vec![0.0; m.num_layers()];
    let mut end_to_end_max_ratio: f64 = 0.0;
    for r in results {
        let r = r?;
        for (acc, v) in layer_max_ratios.iter_mut().zip(&r.layers) {
            *acc = f64::max(*acc, *v);
        }
        end_to_end_max_ratio = end_to_end_max_ratio.max(r.end_to_end);
    }
    Ok(PerturbationReport {
        trials,
        eps_scale,
        layer_max_ratios,
        end_to_end_max_ratio,
        seed,
    })
}

/// Seeded Gaussian perturbation trials: `X ~ N(0, 1)`, `ε ~ N(0, eps_scale²)`
/// entry-wise, on the model's adjacency of `g`.
pub fn empirical_contraction(
    m: &Model,
    g: &Graph,
    trials: usize,
    eps_scale: f64,
    seed: u64,
) -> Result<PerturbationReport> {
    empirical_contraction_with(m, g, trials, eps_scale, seed, Execution::default())
}

pub fn empirical_contraction_with(
    m: &Model,
    g: &Graph,
    trials: usize,
    eps_scale: f64,
    seed: u64,
    exec: Execution,
) -> Result<PerturbationReport> {
    perturbation_trials(m, &m.adjacency(g), None, trials, eps_scale, seed, exec)
}

/// Outcome of a randomized identity check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub identity: String,
    pub trials: usize,
    pub max_dim: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub max_deviation: f64,
    pub passed: bool,
}

/// Relative gap `|‖A⊗B‖ − ‖A‖‖B‖| / (‖A‖‖B‖)`; 0 when both sides vanish.
pub fn kronecker_norm_deviation(a: &Matrix, b: &Matrix) -> Result<f64> {
    let lhs = spectral_norm(&a.kronecker(b)?)?;
    let rhs = spectral_norm(a)? * spectral_norm(b)?;
    let scale = lhs.max(rhs);
    Ok(if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale })
}

/// Max entry of `|vec(A X Bᵀ) − (B ⊗ A) vec(X)|`.
pub fn vec_identity_deviation(a: &Matrix, x: &Matrix, b: &Matrix) -> Result<f64> {
    let lhs = a.matmul(x)?.matmul(&b.transpose())?.vectorize();
    let rhs = b.kronecker(a)?.matmul(&x.vectorize())?;
    Ok(lhs.max_abs_diff(&rhs).expect("both sides have the same shape"))
}

pub const KRON_NORM_TOLERANCE: f64 = 1e-8;
pub const VEC_IDENTITY_TOLERANCE: f64 = 1e-10;

fn check_dim(dim: usize, trials: usize) -> Result<()> {
    if dim == 0 || dim * dim > crate::linalg::DEFAULT_KRON_CAP {
        return Err(Error::Contract(format!("dim must lie in 1..=64, got {dim}")));
    }
    if trials == 0 {
        return Err(Error::Contract("trials must be >= 1".into()));
    }
    Ok(())
}

/// `‖A⊗B‖ = ‖A‖‖B‖` on Gaussian matrices with shapes drawn from `1..=dim`.
pub fn check_kronecker_norm_identity(dim: usize, trials: usize, seed: u64) -> Result<IdentityReport> {
    check_dim(dim, trials)?;
    let devs = run_trials(trials, Execution::Sequential, |t| {
        let mut rng = trial_rng(seed, t as u64);
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let (r, c) = (rng.random_range(1..=dim), rng.random_range(1..=dim));
            gaussian(rng, r, c, 1.0)
        };
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        kronecker_norm_deviation(&a, &b)
    });
    summarize("kronecker_norm", devs, dim, trials, seed, KRON_NORM_TOLERANCE)
}

/// `vec(A X Bᵀ) = (B ⊗ A) vec(X)` on Gaussian triples with shapes drawn
/// from `1..=dim`.
pub fn check_vec_identity(dim: usize, trials: usize, seed: u64) -> Result<IdentityReport> {
    check_dim(dim, trials)?;
    let devs = run_trials(trials, Execution::Sequential, |t| {
        let mut rng = trial_rng(seed, t as u64);
        let p = rng.random_range(1..=dim);
        let n = rng.random_range(1..=dim);
        let m = rng.random_range(1..=dim);
        let q = rng.random_range(1..=dim);
        let a = gaussian(&mut rng, p, n, 1.0);
        let x = gaussian(&mut rng, n, m, 1.0);
        let b = gaussian(&mut rng, q, m, 1.0);
        vec_identity_deviation(&a, &x, &b)
    });
    summarize("vec_kronecker", devs, dim, trials, seed, VEC_IDENTITY_TOLERANCE)
}

fn summarize(
    identity: &str,
    devs: Vec<Result<f64>>,
    max_dim: usize,
    trials: usize,
    seed: u64,
    tolerance: f64,
) -> Result<IdentityReport> {
    let mut max_deviation: f64 = 0.0;
    for d in devs {
        max_deviation = max_deviation.max(d?);
    }
    Ok(IdentityReport {
        identity: identity.to_string(),
        trials,
        max_dim,
        seed,
        tolerance,
        max_deviation,
        passed: max_deviation <= tolerance,
    })
}

fn check_brute_force_size(n: usize, c_in: usize, c_out: usize) -> Result<()> {
    if n * c_in.max(c_out) > BRUTE_FORCE_CAP {
        return Err(Error::Contract(format!(
            "exact Lipschitz constant limited to n·C <= {BRUTE_FORCE_CAP}, got n={n}, C={}",
            c_in.max(c_out)
        )));
    }
    Ok(())
}

/// `‖Wᵀ ⊗ A‖`, the exact Lipschitz constant of `X ↦ A X W` in Frobenius norm.
pub fn gcn_linear_lipschitz(layer: &GcnLayer, a: &Matrix) -> Result<f64> {
    check_brute_force_size(a.rows(), layer.in_dim(), layer.out_dim())?;
    spectral_norm(&layer.w.transpose().kronecker_capped(a, BRUTE_FORCE_CAP)?)
}

/// `‖W1ᵀ ⊗ I + W2ᵀ ⊗ Ã‖`, exact for `X ↦ X W1 + Ã X W2`.
pub fn graphconv_linear_lipschitz(layer: &GraphConvLayer, a_tilde: &Matrix) -> Result<f64> {
    let n = a_tilde.rows();
    check_brute_force_size(n, layer.in_dim(), layer.out_dim())?;
    let id = Matrix::identity(n);
    let op = layer
        .w1
        .transpose()
        .kronecker_capped(&id, BRUTE_FORCE_CAP)?
        .add(&layer.w2.transpose().kronecker_capped(a_tilde, BRUTE_FORCE_CAP)?)?;
    spectral_norm(&op)
}

/// Exact linear-part Lipschitz constant of layer `idx` of `m`.
pub fn brute_force_layer_lipschitz(m: &Model, idx: usize, a: &Matrix) -> Result<f64> {
    match m.layers() {
        Layers::Gcn(ls) => gcn_linear_lipschitz(&ls[idx], a),
        Layers::GraphConv(ls) => graphconv_linear_lipschitz(&ls[idx], a),
    }
}
