//! Graphs, datasets and the exact containment oracle.

mod generate;
mod io;
mod iso;

use std::collections::BTreeSet;

pub use generate::{generate_dataset, small_pairs, GenConfig};
pub use io::{load_corpus, load_tu_dir, read_graphs_jsonl, save_corpus, write_graphs_jsonl, Manifest};
pub use iso::{is_subgraph_isomorphic, MAX_CORPUS_NODES, MAX_QUERY_NODES};

use crate::diff::Tensor;
use crate::error::{Error, Result};

/// Undirected simple graph stored as a padded `m x m` adjacency matrix.
///
/// Rows and columns at or beyond `n` are padding and always zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Graph {
    id: u32,
    n: usize,
    m: usize,
    adj: Vec<bool>,
}

impl Graph {
    /// Builds a graph from an undirected edge list. Self loops are rejected,
    /// duplicate edges collapse.
    pub fn from_edges(id: u32, n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGraph {
                id,
                reason: "graph has no nodes".into(),
            });
        }
        let mut adj = vec![false; n * n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::DanglingEndpoint { id, u, v, n });
            }
            if u == v {
                return Err(Error::InvalidGraph {
                    id,
                    reason: format!("self loop on node {u}"),
                });
            }
            adj[u * n + v] = true;
            adj[v * n + u] = true;
        }
        Ok(Self { id, n, m: n, adj })
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn with_id(mut self, id: u32) -> Self {
        self.id = id;
        self
    }

    /// True node count.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Padded width.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Re-pads to width `m >= n`.
    pub fn padded(&self, m: usize) -> Result<Self> {
        if m < self.n {
            return Err(Error::InvalidGraph {
                id: self.id,
                reason: format!("padding width {m} below node count {}", self.n),
            });
        }
        let mut adj = vec![false; m * m];
        for (u, v) in self.edges() {
            adj[u * m + v] = true;
            adj[v * m + u] = true;
        }
        Ok(Self {
            id: self.id,
            n: self.n,
            m,
            adj,
        })
    }

    #[inline]
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.m && v < self.m && self.adj[u * self.m + v]
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&v| self.adj[u * self.m + v])
    }

    pub fn degree(&self, u: usize) -> usize {
        self.neighbors(u).count()
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for u in 0..self.n {
            for v in u + 1..self.n {
                if self.adj[u * self.m + v] {
                    out.push((u, v));
                }
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.edges().len()
    }

    /// Directed edge endpoints `(src, dst)` covering each undirected edge in
    /// both directions.
    pub fn directed_edges(&self) -> (Vec<usize>, Vec<usize>) {
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for u in 0..self.n {
            for v in self.neighbors(u) {
                src.push(u);
                dst.push(v);
            }
        }
        (src, dst)
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for v in self.neighbors(u) {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n
    }

    /// Applies `perm`: node `u` becomes node `perm[u]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let edges: Vec<_> = self.edges().into_iter().map(|(u, v)| (perm[u], perm[v])).collect();
        Graph::from_edges(self.id, self.n, &edges)?.padded(self.m)
    }

    /// Padded adjacency as a dense `m x m` 0/1 matrix.
    pub fn adjacency(&self) -> Tensor {
        Tensor::from_vec(
            self.m,
            self.m,
            self.adj.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }
}

impl std::fmt::Debug for Graph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Graph(id={}, n={}, m={}, edges={:?})", self.id, self.n, self.m, self.edges())
    }
}

/// Query-ID partition used for training, early stopping and evaluation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<u32>,
    pub dev: Vec<u32>,
    pub test: Vec<u32>,
}

/// Corpus, queries, relevance labels and query split.
///
/// Graph ids equal their position in `corpus` / `queries`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub corpus: Vec<Graph>,
    pub queries: Vec<Graph>,
    /// Sorted relevant corpus ids, indexed by query id.
    pub labels: Vec<Vec<u32>>,
    pub split: Split,
}

impl Dataset {
    /// Validates ids, labels and split, then pads every graph to the common
    /// width.
    pub fn new(corpus: Vec<Graph>, queries: Vec<Graph>, labels: Vec<Vec<u32>>, split: Split) -> Result<Self> {
        for (kind, graphs) in [("corpus", &corpus), ("query", &queries)] {
            for (i, g) in graphs.iter().enumerate() {
                if g.id() as usize != i {
                    return Err(Error::InvalidGraph {
                        id: g.id(),
                        reason: format!("{kind} graph at position {i} has non-contiguous id"),
                    });
                }
            }
        }
        if labels.len() != queries.len() {
            return Err(Error::Config(format!(
                "{} label rows for {} queries",
                labels.len(),
                queries.len()
            )));
        }
        let mut labels = labels;
        for (q, rel) in labels.iter_mut().enumerate() {
            rel.sort_unstable();
            rel.dedup();
            if let Some(&bad) = rel.iter().find(|&&c| c as usize >= corpus.len()) {
                return Err(Error::Config(format!("query {q}: relevant id {bad} not in corpus")));
            }
        }
        let mut seen = BTreeSet::new();
        for &q in split.train.iter().chain(&split.dev).chain(&split.test) {
            if q as usize >= queries.len() || !seen.insert(q) {
                return Err(Error::Config(format!("split: query id {q} missing or repeated")));
            }
        }
        if !queries.is_empty() && seen.len() != queries.len() {
            return Err(Error::Config("split does not cover every query".into()));
        }
        let m = corpus.iter().chain(&queries).map(Graph::n).max().unwrap_or(1);
        let pad = |gs: Vec<Graph>| gs.iter().map(|g| g.padded(m)).collect::<Result<Vec<_>>>();
        Ok(Self {
            corpus: pad(corpus)?,
            queries: pad(queries)?,
            labels,
            split,
        })
    }

    /// Padding width shared by every graph.
    pub fn width(&self) -> usize {
        self.corpus.first().or(self.queries.first()).map_or(0, Graph::m)
    }

    pub fn is_relevant(&self, query: u32, corpus: u32) -> bool {
        self.labels[query as usize].binary_search(&corpus).is_ok()
    }

    pub fn relevant(&self, query: u32) -> &[u32] {
        &self.labels[query as usize]
    }

    /// Corpus ids not relevant to `query`, ascending.
    pub fn non_relevant(&self, query: u32) -> Vec<u32> {
        (0..self.corpus.len() as u32).filter(|&c| !self.is_relevant(query, c)).collect()
    }

    /// Mean over queries of `|positives| / |negatives|`.
    pub fn mean_positive_ratio(&self) -> f64 {
        if self.queries.is_empty() {
            return 0.0;
        }
        let c = self.corpus.len() as f64;
        let total: f64 = self
            .labels
            .iter()
            .map(|rel| {
                let pos = rel.len() as f64;
                if c > pos {
                    pos / (c - pos)
                } else {
                    0.0
                }
            })
            .sum();
        total / self.queries.len() as f64
    }
}
