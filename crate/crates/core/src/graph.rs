//! Undirected simple graphs and their adjacency matrices.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetric_spectral_norm, Matrix};

/// Which adjacency matrix a layer sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyMode {
    /// 0/1 adjacency including any explicit self-loops.
    Raw,
    /// Raw adjacency with the diagonal cleared (`Ã`).
    NoSelfLoops,
    /// `D^-1/2 (Ã + I) D^-1/2`, `D` the degree matrix of `Ã + I`.
    SymNormalized,
}

impl AdjacencyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AdjacencyMode::Raw => "raw",
            AdjacencyMode::NoSelfLoops => "no_self_loops",
            AdjacencyMode::SymNormalized => "sym_normalized",
        }
    }
}

impl std::str::FromStr for AdjacencyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(AdjacencyMode::Raw),
            "no_self_loops" => Ok(AdjacencyMode::NoSelfLoops),
            "sym_normalized" => Ok(AdjacencyMode::SymNormalized),
            other => Err(Error::parse(
                "adjacency_mode",
                format!("unknown mode `{other}`"),
            )),
        }
    }
}

/// Undirected graph on nodes `0..num_nodes`. Edges are stored as `(min, max)`
/// pairs, so `(u, v)` and `(v, u)` name the same edge. `(u, u)` is an
/// explicit self-loop.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    num_nodes: usize,
    edges: BTreeSet<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct GraphRepr {
    num_nodes: usize,
    edges: Vec<[usize; 2]>,
}

impl Graph {
    pub fn empty(num_nodes: usize) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::parse("num_nodes", "graph must have at least one node"));
        }
        Ok(Graph {
            num_nodes,
            edges: BTreeSet::new(),
        })
    }

    /// Rejects out-of-range endpoints and duplicates (in either orientation).
    pub fn new(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut g = Graph::empty(num_nodes)?;
        for (idx, (u, v)) in edges.into_iter().enumerate() {
            g.insert(u, v)
                .map_err(|e| Error::parse(format!("edges[{idx}]"), e))?;
        }
        Ok(g)
    }

    fn insert(&mut self, u: usize, v: usize) -> std::result::Result<(), String> {
        if u >= self.num_nodes || v >= self.num_nodes {
            return Err(format!(
                "edge [{u},{v}] out of range for {} nodes",
                self.num_nodes
            ));
        }
        if !self.edges.insert((u.min(v), u.max(v))) {
            return Err(format!("duplicate edge [{u},{v}]"));
        }
        Ok(())
    }

    /// Adds an edge, returning `false` if it was already present.
    ///
    /// Panics if an endpoint is out of range.
    pub fn add_edge(&mut self, u: usize, v: usize) -> bool {
        assert!(u < self.num_nodes && v < self.num_nodes, "node index out of range");
        self.edges.insert((u.min(v), u.max(v)))
    }

    pub fn complete(n: usize) -> Result<Self> {
        Graph::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.contains(&(u.min(v), u.max(v)))
    }

    /// Number of distinct neighbours, self-loops excluded.
    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(u, v)| u != v && (u == node || v == node))
            .count()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.num_nodes).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn adjacency(&self, mode: AdjacencyMode) -> Matrix {
        let n = self.num_nodes;
        let mut a = Matrix::zeros(n, n);
        for &(u, v) in &self.edges {
            if u == v && mode != AdjacencyMode::Raw {
                continue;
            }
            a.set(u, v, 1.0);
            a.set(v, u, 1.0);
        }
        if mode == AdjacencyMode::SymNormalized {
            for i in 0..n {
                a.set(i, i, 1.0);
            }
            let inv_sqrt: Vec<f64> = (0..n)
                .map(|i| 1.0 / a.row(i).iter().sum::<f64>().sqrt())
                .collect();
            for i in 0..n {
                for j in 0..n {
                    let x = a.get(i, j);
                    if x != 0.0 {
                        a.set(i, j, x * inv_sqrt[i] * inv_sqrt[j]);
                    }
                }
            }
        }
        a
    }

    /// Spectral norm of [`Graph::adjacency`] for `mode`.
    pub fn adjacency_norm(&self, mode: AdjacencyMode) -> Result<f64> {
        symmetric_spectral_norm(&self.adjacency(mode))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&GraphRepr {
            num_nodes: self.num_nodes,
            edges: self.edges.iter().map(|&(u, v)| [u, v]).collect(),
        })
        .expect("graph serialization is infallible")
    }

    /// Parses `{"num_nodes": n, "edges": [[u, v], ...]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let repr: GraphRepr =
            serde_json::from_str(text).map_err(|e| Error::parse("graph", e.to_string()))?;
        Graph::new(repr.num_nodes, repr.edges.into_iter().map(|[u, v]| (u, v)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_edge_raw() {
        let g = Graph::new(2, [(0, 1)]).unwrap();
        assert_eq!(
            g.adjacency(AdjacencyMode::Raw),
            Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]])
        );
    }

    #[test]
    fn self_loop_removed() {
        let g = Graph::new(1, [(0, 0)]).unwrap();
        assert_eq!(g.adjacency(AdjacencyMode::NoSelfLoops), Matrix::zeros(1, 1));
        assert_eq!(g.adjacency(AdjacencyMode::Raw), Matrix::identity(1));
    }

    #[test]
    fn k3_normalized_is_one_third() {
        let a = Graph::complete(3).unwrap().adjacency(AdjacencyMode::SymNormalized);
        for &x in a.as_slice() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn adjacency_norm_examples() {
        let edgeless = Graph::empty(5).unwrap();
        assert_eq!(edgeless.adjacency_norm(AdjacencyMode::Raw).unwrap(), 0.0);
        let k4 = Graph::complete(4).unwrap();
        assert!((k4.adjacency_norm(AdjacencyMode::NoSelfLoops).unwrap() - 3.0).abs() < 1e-12);
        assert!(k4.adjacency_norm(AdjacencyMode::SymNormalized).unwrap() <= 1.0 + 1e-9);
    }

    #[test]
    fn json_examples() {
        let g = Graph::from_json(r#"{"num_nodes":2,"edges":[[0,1]]}"#).unwrap();
        assert_eq!(g, Graph::new(2, [(0, 1)]).unwrap());
        let single = Graph::from_json(r#"{"num_nodes":1,"edges":[]}"#).unwrap();
        assert_eq!(single.num_edges(), 0);
        assert_eq!(Graph::from_json(&g.to_json()).unwrap(), g);
    }

    #[test]
    fn json_errors_name_the_field() {
        let err = Graph::from_json(r#"{"num_nodes":3,"edges":[[0,1],[0,5]]}"#).unwrap_err();
        assert!(matches!(&err, Error::Parse { field, .. } if field == "edges[1]"), "{err}");
        let err = Graph::from_json(r#"{"num_nodes":3,"edges":[[0,1],[1,0]]}"#).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
        let err = Graph::from_json(r#"{"num_nodes":3,"edges":[[0,1]"#).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        assert!(Graph::from_json(r#"{"num_nodes":0,"edges":[]}"#).is_err());
    }

    #[test]
    fn degrees_ignore_self_loops() {
        let g = Graph::new(3, [(0, 1), (0, 2), (1, 1)]).unwrap();
        assert_eq!(g.degree(0), 2);
        assert_eq!(g.degree(1), 1);
        assert_eq!(g.max_degree(), 2);
    }
}
