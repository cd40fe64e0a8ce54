//! Singular-value clipping and the contractive projections built on it.
//!
//! Clipping replaces every singular value `s` of `W` by `min(s, τ)` and
//! recomposes, so the spectral norm of the result is `min(‖W‖, τ)`. GCN
//! layers are clipped to `1/‖A‖`; GraphConv layers clip `W1` to `α` and
//! `W2` to `(1 − α)/‖Ã‖`. Since `‖Wᵀ‖ = ‖W‖`, the weights are clipped
//! directly rather than their transposes.

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::layers::{GcnLayer, GraphConvLayer, Layers, Model};
use crate::linalg::{svd, Matrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClipThreshold {
    Finite(f64),
    Unbounded,
}

impl ClipThreshold {
    pub fn new(tau: f64) -> Result<Self> {
        if tau.is_nan() || tau < 0.0 {
            return Err(Error::Contract(format!("clip threshold must be >= 0, got {tau}")));
        }
        Ok(if tau.is_infinite() {
            ClipThreshold::Unbounded
        } else {
            ClipThreshold::Finite(tau)
        })
    }

    /// `budget / norm`, unbounded when `norm == 0`.
    pub fn budget_over(budget: f64, norm: f64) -> Result<Self> {
        check_norm(norm)?;
        if norm == 0.0 {
            Ok(ClipThreshold::Unbounded)
        } else {
            ClipThreshold::new(budget / norm)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            ClipThreshold::Finite(t) => Some(t),
            ClipThreshold::Unbounded => None,
        }
    }
}

/// Share of the GraphConv contraction budget given to the `W1` term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSplit(f64);

impl Default for AlphaSplit {
    fn default() -> Self {
        AlphaSplit(0.5)
    }
}

impl AlphaSplit {
    pub fn new(alpha: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&alpha) {
            Ok(AlphaSplit(alpha))
        } else {
            Err(Error::Contract(format!("alpha must lie in [0, 1], got {alpha}")))
        }
    }

    pub fn alpha(self) -> f64 {
        self.0
    }

    /// `α = 0` or `α = 1` zeroes one of the two GraphConv branches.
    pub fn is_degenerate(self) -> bool {
        self.0 == 0.0 || self.0 == 1.0
    }
}

fn check_norm(norm: f64) -> Result<()> {
    if norm.is_finite() && norm >= 0.0 {
        Ok(())
    } else {
        Err(Error::Contract(format!("adjacency norm must be finite and >= 0, got {norm}")))
    }
}

/// `U · diag(min(s, τ)) · Vᵀ`. Inputs whose singular values are all at most
/// `τ` come back untouched.
pub fn clip_singular_values(w: &Matrix, tau: ClipThreshold) -> Result<Matrix> {
    let tau = match tau {
        ClipThreshold::Unbounded => return Ok(w.clone()),
        ClipThreshold::Finite(t) => t,
    };
    let f = svd(w)?;
    if f.s[0] <= tau {
        return Ok(w.clone());
    }
    let clipped: Vec<f64> = f.s.iter().map(|&s| s.min(tau)).collect();
    f.recompose_with(&clipped)
}

pub fn project_gcn(layer: &GcnLayer, norm_a: f64) -> Result<GcnLayer> {
    let tau = ClipThreshold::budget_over(1.0, norm_a)?;
    Ok(GcnLayer::new(clip_singular_values(&layer.w, tau)?))
}

pub fn project_graphconv(
    layer: &GraphConvLayer,
    norm_a_tilde: f64,
    split: AlphaSplit,
) -> Result<GraphConvLayer> {
    let alpha = split.alpha();
    let w1 = clip_singular_values(&layer.w1, ClipThreshold::new(alpha)?)?;
    let w2 = clip_singular_values(
        &layer.w2,
        ClipThreshold::budget_over(1.0 - alpha, norm_a_tilde)?,
    )?;
    GraphConvLayer::new(w1, w2)
}

/// Projects every layer using the adjacency norm of `g` under the model's
/// adjacency mode.
pub fn project_model(m: &Model, g: &Graph, split: AlphaSplit) -> Result<Model> {
    let norm = g.adjacency_norm(m.adjacency_mode)?;
    project_model_with_norm(m, norm, split)
}

pub fn project_model_with_norm(m: &Model, norm: f64, split: AlphaSplit) -> Result<Model> {
    let layers = match m.layers() {
        Layers::Gcn(ls) => Layers::Gcn(
            ls.iter()
                .enumerate()
                .map(|(i, l)| project_gcn(l, norm).map_err(|e| e.in_layer(i)))
                .collect::<Result<_>>()?,
        ),
        Layers::GraphConv(ls) => Layers::GraphConv(
            ls.iter()
                .enumerate()
                .map(|(i, l)| project_graphconv(l, norm, split).map_err(|e| e.in_layer(i)))
                .collect::<Result<_>>()?,
        ),
    };
    Model::new(layers, m.activation, m.adjacency_mode)
}
