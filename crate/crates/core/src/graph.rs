//! Compact directed graph used by the rankers.

use std::collections::HashMap;

/// Directed graph over string node ids, stored as an edge list plus
/// predecessor CSR for pull-style iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct DiGraph {
    ids: Vec<String>,
    edges: Vec<(usize, usize)>,
}

impl DiGraph {
    pub fn new() -> Self {
        Self {
            ids: Vec::new(),
            edges: Vec::new(),
        }
    }

    /// Build from node ids and edges given as index pairs. Panics on an
    /// out-of-range index.
    pub fn from_indexed(ids: Vec<String>, edges: Vec<(usize, usize)>) -> Self {
        let n = ids.len();
        assert!(
            edges.iter().all(|&(a, b)| a < n && b < n),
            "edge index out of range"
        );
        Self { ids, edges }
    }

    /// Build from id pairs; edges naming ids absent from `ids` are rejected.
    pub fn from_ids<S: AsRef<str>>(ids: &[S], edges: &[(S, S)]) -> Option<Self> {
        let ids: Vec<String> = ids.iter().map(|s| s.as_ref().to_string()).collect();
        let index: HashMap<&str, usize> = ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut out = Vec::with_capacity(edges.len());
        for (a, b) in edges {
            out.push((*index.get(a.as_ref())?, *index.get(b.as_ref())?));
        }
        Some(Self { ids, edges: out })
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    pub fn out_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.ids.len()];
        for &(a, _) in &self.edges {
            deg[a] += 1;
        }
        deg
    }

    /// Predecessor lists in CSR form: `preds[offsets[v]..offsets[v + 1]]`
    /// holds every `u` with an edge `u -> v`, in edge-list order.
    pub fn predecessors_csr(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.ids.len();
        let mut offsets = vec![0usize; n + 1];
        for &(_, b) in &self.edges {
            offsets[b + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut preds = vec![0usize; self.edges.len()];
        for &(a, b) in &self.edges {
            preds[cursor[b]] = a;
            cursor[b] += 1;
        }
        (offsets, preds)
    }
}

impl Default for DiGraph {
    fn default() -> Self {
        Self::new()
    }
}
