//! GCN and GraphConv layers, their composition into a [`Model`], and
//! closed-form backward passes.
//!
//! Neither layer has a bias. Every activation offered here is 1-Lipschitz.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMode, Graph};
use crate::linalg::Matrix;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// Slope for negative inputs, in `(0, 1]`.
    LeakyRelu(f64),
    Tanh,
    Identity,
}

impl Activation {
    pub fn leaky_relu(slope: f64) -> Result<Self> {
        if slope > 0.0 && slope <= 1.0 {
            Ok(Activation::LeakyRelu(slope))
        } else {
            Err(Error::Contract(format!(
                "leaky_relu slope must lie in (0, 1] to stay 1-Lipschitz, got {slope}"
            )))
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::LeakyRelu(_) => "leaky_relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    /// Every supported kind, leaky ReLU at its default slope.
    pub fn all() -> [Activation; 4] {
        [
            Activation::Relu,
            Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE),
            Activation::Tanh,
            Activation::Identity,
        ]
    }

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative; ReLU's kink at zero gets 0.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu(slope) => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    fn apply_matrix(self, z: &Matrix) -> Result<Matrix> {
        z.map(|v| self.apply(v))
    }

    fn backprop(self, z: &Matrix, grad_out: &Matrix) -> Result<Matrix> {
        if z.shape() != grad_out.shape() {
            return Err(Error::shape(
                "backward",
                format!("grad_out {}x{}", z.rows(), z.cols()),
                format!("{}x{}", grad_out.rows(), grad_out.cols()),
            ));
        }
        z.map(|v| self.derivative(v))?.hadamard(grad_out)
    }
}

/// `X ↦ σ(A X W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnLayer {
    pub w: Matrix,
}

/// `X ↦ σ(X W1 + Ã X W2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphConvLayer {
    pub w1: Matrix,
    pub w2: Matrix,
}

impl GcnLayer {
    pub fn new(w: Matrix) -> Self {
        GcnLayer { w }
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }
}

impl GraphConvLayer {
    pub fn new(w1: Matrix, w2: Matrix) -> Result<Self> {
        if w1.shape() != w2.shape() {
            return Err(Error::shape(
                "GraphConvLayer",
                format!("w2 {}x{}", w1.rows(), w1.cols()),
                format!("{}x{}", w2.rows(), w2.cols()),
            ));
        }
        Ok(GraphConvLayer { w1, w2 })
    }

    pub fn in_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w1.cols()
    }
}

fn check_inputs(op: &'static str, a: &Matrix, x: &Matrix, in_dim: usize) -> Result<()> {
    if !a.is_square() || a.rows() != x.rows() {
        return Err(Error::shape(
            op,
            format!("square adjacency matching {} feature rows", x.rows()),
            format!("{}x{}", a.rows(), a.cols()),
        ));
    }
    if x.cols() != in_dim {
        return Err(Error::shape(
            op,
            format!("{in_dim} feature columns"),
            format!("{}", x.cols()),
        ));
    }
    Ok(())
}

/// Values retained by a GCN forward pass for its backward pass.
#[derive(Debug, Clone)]
pub struct GcnCache {
    pub activation: Activation,
    pub a: Matrix,
    pub x: Matrix,
    /// `A·X`
    pub ax: Matrix,
    /// Pre-activation `A·X·W`.
    pub z: Matrix,
    pub w: Matrix,
}

#[derive(Debug, Clone)]
pub struct GraphConvCache {
    pub activation: Activation,
    pub a_tilde: Matrix,
    pub x: Matrix,
    /// `Ã·X`
    pub ax: Matrix,
    /// Pre-activation `X·W1 + Ã·X·W2`.
    pub z: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnGrads {
    pub w: Matrix,
    pub x: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphConvGrads {
    pub w1: Matrix,
    pub w2: Matrix,
    pub x: Matrix,
}

pub fn gcn_forward(layer: &GcnLayer, a: &Matrix, x: &Matrix, act: Activation) -> Result<Matrix> {
    check_inputs("gcn_forward", a, x, layer.in_dim())?;
    act.apply_matrix(&a.matmul(x)?.matmul(&layer.w)?)
}

pub fn gcn_forward_cached(
    layer: &GcnLayer,
    a: &Matrix,
    x: &Matrix,
    act: Activation,
) -> Result<(Matrix, GcnCache)> {
    check_inputs("gcn_forward", a, x, layer.in_dim())?;
    let ax = a.matmul(x)?;
    let z = ax.matmul(&layer.w)?;
    let out = act.apply_matrix(&z)?;
    Ok((
        out,
        GcnCache {
            activation: act,
            a: a.clone(),
            x: x.clone(),
            ax,
            z,
            w: layer.w.clone(),
        },
    ))
}

/// With `G = grad_out ⊙ σ'(Z)`: `dW = (A X)ᵀ G`, `dX = Aᵀ G Wᵀ`.
pub fn gcn_backward(cache: &GcnCache, grad_out: &Matrix) -> Result<GcnGrads> {
    let g = cache.activation.backprop(&cache.z, grad_out)?;
    let w = cache.ax.transpose().matmul(&g)?;
    let x = cache.a.transpose().matmul(&g)?.matmul(&cache.w.transpose())?;
    Ok(GcnGrads { w, x })
}

pub fn graphconv_forward(
    layer: &GraphConvLayer,
    a_tilde: &Matrix,
    x: &Matrix,
    act: Activation,
) -> Result<Matrix> {
    check_inputs("graphconv_forward", a_tilde, x, layer.in_dim())?;
    let z = x.matmul(&layer.w1)?.add(&a_tilde.matmul(x)?.matmul(&layer.w2)?)?;
    act.apply_matrix(&z)
}

pub fn graphconv_forward_cached(
    layer: &GraphConvLayer,
    a_tilde: &Matrix,
    x: &Matrix,
    act: Activation,
) -> Result<(Matrix, GraphConvCache)> {
    check_inputs("graphconv_forward", a_tilde, x, layer.in_dim())?;
    let ax = a_tilde.matmul(x)?;
    let z = x.matmul(&layer.w1)?.add(&ax.matmul(&layer.w2)?)?;
    let out = act.apply_matrix(&z)?;
    Ok((
        out,
        GraphConvCache {
            activation: act,
            a_tilde: a_tilde.clone(),
            x: x.clone(),
            ax,
            z,
            w1: layer.w1.clone(),
            w2: layer.w2.clone(),
        },
    ))
}

/// `dW1 = Xᵀ G`, `dW2 = (Ã X)ᵀ G`, `dX = G W1ᵀ + Ãᵀ G W2ᵀ`.
pub fn graphconv_backward(cache: &GraphConvCache, grad_out: &Matrix) -> Result<GraphConvGrads> {
    let g = cache.activation.backprop(&cache.z, grad_out)?;
    let w1 = cache.x.transpose().matmul(&g)?;
    let w2 = cache.ax.transpose().matmul(&g)?;
    let x = g
        .matmul(&cache.w1.transpose())?
        .add(&cache.a_tilde.transpose().matmul(&g)?.matmul(&cache.w2.transpose())?)?;
    Ok(GraphConvGrads { w1, w2, x })
}

/// Homogeneous layer stack.
#[derive(Debug, Clone, PartialEq)]
pub enum Layers {
    Gcn(Vec<GcnLayer>),
    GraphConv(Vec<GraphConvLayer>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Gcn,
    Graphconv,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gcn => "gcn",
            ModelKind::Graphconv => "graphconv",
        }
    }

    /// Adjacency used unless the model says otherwise: plain `A` for GCN,
    /// self-loop-free `Ã` for GraphConv.
    pub fn default_adjacency(self) -> AdjacencyMode {
        match self {
            ModelKind::Gcn => AdjacencyMode::Raw,
            ModelKind::Graphconv => AdjacencyMode::NoSelfLoops,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(ModelKind::Gcn),
            "graphconv" => Ok(ModelKind::Graphconv),
            other => Err(Error::parse("kind", format!("unknown architecture `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Layers,
    pub activation: Activation,
    pub adjacency_mode: AdjacencyMode,
}

/// Per-layer gradients, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelGrads {
    Gcn(Vec<Matrix>),
    GraphConv(Vec<(Matrix, Matrix)>),
}

#[derive(Debug, Clone)]
pub enum ModelCache {
    Gcn(Vec<GcnCache>),
    GraphConv(Vec<GraphConvCache>),
}

impl Model {
    /// Rejects empty stacks and stacks whose dimensions do not chain.
    pub fn new(layers: Layers, activation: Activation, adjacency_mode: AdjacencyMode) -> Result<Self> {
        let dims: Vec<(usize, usize)> = match &layers {
            Layers::Gcn(ls) => ls.iter().map(|l| (l.in_dim(), l.out_dim())).collect(),
            Layers::GraphConv(ls) => ls.iter().map(|l| (l.in_dim(), l.out_dim())).collect(),
        };
        if dims.is_empty() {
            return Err(Error::parse("layers", "model needs at least one layer"));
        }
        for (i, pair) in dims.windows(2).enumerate() {
            if pair[0].1 != pair[1].0 {
                return Err(Error::shape(
                    "Model",
                    format!("layer {} input dim {}", i + 1, pair[0].1),
                    format!("{}", pair[1].0),
                )
                .in_layer(i + 1));
            }
        }
        Ok(Model {
            layers,
            activation,
            adjacency_mode,
        })
    }

    /// Glorot-uniform weights for the given layer widths
    /// (`dims = [C_in, hidden..., C_out]`).
    pub fn random<R: Rng + ?Sized>(
        kind: ModelKind,
        dims: &[usize],
        activation: Activation,
        adjacency_mode: AdjacencyMode,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Contract(format!("invalid layer widths {dims:?}")));
        }
        let mut glorot = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            Matrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..=limit))
        };
        let layers = match kind {
            ModelKind::Gcn => Layers::Gcn(
                dims.windows(2)
                    .map(|d| GcnLayer::new(glorot(d[0], d[1])))
                    .collect(),
            ),
            ModelKind::Graphconv => Layers::GraphConv(
                dims.windows(2)
                    .map(|d| GraphConvLayer::new(glorot(d[0], d[1]), glorot(d[0], d[1])))
                    .collect::<Result<_>>()?,
            ),
        };
        Model::new(layers, activation, adjacency_mode)
    }

    pub fn layers(&self) -> &Layers {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut Layers {
        &mut self.layers
    }

    pub fn kind(&self) -> ModelKind {
        match self.layers {
            Layers::Gcn(_) => ModelKind::Gcn,
            Layers::GraphConv(_) => ModelKind::Graphconv,
        }
    }

    pub fn num_layers(&self) -> usize {
        match &self.layers {
            Layers::Gcn(ls) => ls.len(),
            Layers::GraphConv(ls) => ls.len(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.layers {
            Layers::Gcn(ls) => ls[0].in_dim(),
            Layers::GraphConv(ls) => ls[0].in_dim(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match &self.layers {
            Layers::Gcn(ls) => ls[ls.len() - 1].out_dim(),
            Layers::GraphConv(ls) => ls[ls.len() - 1].out_dim(),
        }
    }

    /// Adjacency matrix this model propagates with on `g`.
    pub fn adjacency(&self, g: &Graph) -> Matrix {
        g.adjacency(self.adjacency_mode)
    }

    /// Applies layer `idx` alone.
    pub fn layer_forward(&self, idx: usize, a: &Matrix, x: &Matrix) -> Result<Matrix> {
        match &self.layers {
            Layers::Gcn(ls) => gcn_forward(&ls[idx], a, x, self.activation),
            Layers::GraphConv(ls) => graphconv_forward(&ls[idx], a, x, self.activation),
        }
        .map_err(|e| e.in_layer(idx))
    }

    pub fn forward(&self, a: &Matrix, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for idx in 0..self.num_layers() {
            h = self.layer_forward(idx, a, &h)?;
        }
        Ok(h)
    }

    /// Forward pass keeping every layer's cache for [`Model::backward`].
    pub fn forward_cached(&self, a: &Matrix, x: &Matrix) -> Result<(Matrix, ModelCache)> {
        let mut h = x.clone();
        match &self.layers {
            Layers::Gcn(ls) => {
                let mut caches = Vec::with_capacity(ls.len());
                for (idx, l) in ls.iter().enumerate() {
                    let (out, c) =
                        gcn_forward_cached(l, a, &h, self.activation).map_err(|e| e.in_layer(idx))?;
                    caches.push(c);
                    h = out;
                }
                Ok((h, ModelCache::Gcn(caches)))
            }
            Layers::GraphConv(ls) => {
                let mut caches = Vec::with_capacity(ls.len());
                for (idx, l) in ls.iter().enumerate() {
                    let (out, c) = graphconv_forward_cached(l, a, &h, self.activation)
                        .map_err(|e| e.in_layer(idx))?;
                    caches.push(c);
                    h = out;
                }
                Ok((h, ModelCache::GraphConv(caches)))
            }
        }
    }

    /// Gradients of every weight, plus the gradient with respect to the input.
    pub fn backward(&self, cache: &ModelCache, grad_out: &Matrix) -> Result<(ModelGrads, Matrix)> {
        let mut g = grad_out.clone();
        match cache {
            ModelCache::Gcn(caches) => {
                let mut grads = vec![None; caches.len()];
                for (idx, c) in caches.iter().enumerate().rev() {
                    let lg = gcn_backward(c, &g).map_err(|e| e.in_layer(idx))?;
                    grads[idx] = Some(lg.w);
                    g = lg.x;
                }
                Ok((ModelGrads::Gcn(grads.into_iter().flatten().collect()), g))
            }
            ModelCache::GraphConv(caches) => {
                let mut grads = vec![None; caches.len()];
                for (idx, c) in caches.iter().enumerate().rev() {
                    let lg = graphconv_backward(c, &g).map_err(|e| e.in_layer(idx))?;
                    grads[idx] = Some((lg.w1, lg.w2));
                    g = lg.x;
                }
                Ok((ModelGrads::GraphConv(grads.into_iter().flatten().collect()), g))
            }
        }
    }

    /// `W ← W − lr · dW` for every weight.
    pub fn apply_gradients(&mut self, grads: &ModelGrads, lr: f64) -> Result<()> {
        match (&mut self.layers, grads) {
            (Layers::Gcn(ls), ModelGrads::Gcn(gs)) if ls.len() == gs.len() => {
                for (l, g) in ls.iter_mut().zip(gs) {
                    l.w.axpy(-lr, g)?;
                }
                Ok(())
            }
            (Layers::GraphConv(ls), ModelGrads::GraphConv(gs)) if ls.len() == gs.len() => {
                for (l, (g1, g2)) in ls.iter_mut().zip(gs) {
                    l.w1.axpy(-lr, g1)?;
                    l.w2.axpy(-lr, g2)?;
                }
                Ok(())
            }
            _ => Err(Error::Contract("gradients do not match model layout".into())),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ModelRepr::from(self)).expect("model serialization is infallible")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&ModelRepr::from(self)).expect("model serialization is infallible")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: ModelRepr =
            serde_json::from_str(text).map_err(|e| Error::parse("model", e.to_string()))?;
        Model::try_from(repr)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRepr {
    kind: ModelKind,
    activation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leaky_slope: Option<f64>,
    adjacency_mode: AdjacencyMode,
    layers: Vec<LayerRepr>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum LayerRepr {
    Gcn { w: Matrix },
    GraphConv { w1: Matrix, w2: Matrix },
}

impl From<&Model> for ModelRepr {
    fn from(m: &Model) -> Self {
        let layers = match &m.layers {
            Layers::Gcn(ls) => ls.iter().map(|l| LayerRepr::Gcn { w: l.w.clone() }).collect(),
            Layers::GraphConv(ls) => ls
                .iter()
                .map(|l| LayerRepr::GraphConv {
                    w1: l.w1.clone(),
                    w2: l.w2.clone(),
                })
                .collect(),
        };
        ModelRepr {
            kind: m.kind(),
            activation: m.activation.name().to_string(),
            leaky_slope: match m.activation {
                Activation::LeakyRelu(s) => Some(s),
                _ => None,
            },
            adjacency_mode: m.adjacency_mode,
            layers,
        }
    }
}

impl TryFrom<ModelRepr> for Model {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        let activation = match r.activation.as_str() {
            "relu" => Activation::Relu,
            "leaky_relu" => Activation::leaky_relu(r.leaky_slope.unwrap_or(DEFAULT_LEAKY_SLOPE))
                .map_err(|e| Error::parse("leaky_slope", e.to_string()))?,
            "tanh" => Activation::Tanh,
            "identity" => Activation::Identity,
            other => return Err(Error::parse("activation", format!("unknown activation `{other}`"))),
        };
        let layers = match r.kind {
            ModelKind::Gcn => Layers::Gcn(
                r.layers
                    .into_iter()
                    .enumerate()
                    .map(|(i, l)| match l {
                        LayerRepr::Gcn { w } => Ok(GcnLayer::new(w)),
                        LayerRepr::GraphConv { .. } => Err(Error::parse(
                            format!("layers[{i}]"),
                            "gcn layer needs a single `w` matrix",
                        )),
                    })
                    .collect::<Result<_>>()?,
            ),
            ModelKind::Graphconv => Layers::GraphConv(
                r.layers
                    .into_iter()
                    .enumerate()
                    .map(|(i, l)| match l {
                        LayerRepr::GraphConv { w1, w2 } => GraphConvLayer::new(w1, w2)
                            .map_err(|e| Error::parse(format!("layers[{i}]"), e.to_string())),
                        LayerRepr::Gcn { .. } => Err(Error::parse(
                            format!("layers[{i}]"),
                            "graphconv layer needs `w1` and `w2` matrices",
                        )),
                    })
                    .collect::<Result<_>>()?,
            ),
        };
        Model::new(layers, activation, r.adjacency_mode)
            .map_err(|e| Error::parse("layers", e.to_string()))
    }
}
