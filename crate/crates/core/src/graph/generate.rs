//! Synthetic molecule-like corpus and query generation.
//!
//! Corpus graphs are random trees with bounded degree plus a few ring-closing
//! edges. Each query is cut out of a random corpus graph by a randomized BFS,
//! taking the induced subgraph and then deleting up to a fraction of its
//! edges while keeping it connected. Labels come from the exact oracle.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{is_subgraph_isomorphic, Dataset, Graph, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub corpus_size: usize,
    pub num_queries: usize,
    pub corpus_nodes: (usize, usize),
    pub query_nodes: (usize, usize),
    /// Upper bound on node degree, as in small organic molecules.
    pub max_degree: usize,
    /// Ring-closing edges added on top of the spanning tree, drawn uniformly
    /// from `0..=max_extra_edges`.
    pub max_extra_edges: usize,
    /// Fraction of induced query edges that may be deleted.
    pub edge_deletion: f64,
    /// Accepted band for a query's `|positives| / |negatives|`.
    pub positive_ratio: (f64, f64),
    /// Candidate queries tried per accepted query before giving up.
    pub max_query_attempts: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            corpus_size: 2000,
            num_queries: 50,
            corpus_nodes: (16, 25),
            query_nodes: (6, 15),
            max_degree: 4,
            max_extra_edges: 3,
            edge_deletion: 0.2,
            positive_ratio: (0.01, 0.3),
            max_query_attempts: 400,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let (cmin, cmax) = self.corpus_nodes;
        let (qmin, qmax) = self.query_nodes;
        let bad = |msg: String| Err(Error::Config(msg));
        if cmin == 0 || cmin > cmax || qmin == 0 || qmin > qmax {
            return bad(format!("empty node range: corpus {cmin}..={cmax}, query {qmin}..={qmax}"));
        }
        if qmax > cmax || qmin > cmin {
            return bad(format!(
                "query range {qmin}..={qmax} is not contained in corpus range {cmin}..={cmax}"
            ));
        }
        if qmax > super::MAX_QUERY_NODES || cmax > super::MAX_CORPUS_NODES {
            return bad(format!(
                "node ranges exceed the exact-oracle limits ({} query, {} corpus)",
                super::MAX_QUERY_NODES,
                super::MAX_CORPUS_NODES
            ));
        }
        if self.max_degree < 2 {
            return bad("max_degree must be at least 2".into());
        }
        if self.corpus_size == 0 {
            return bad("corpus_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.edge_deletion) {
            return bad(format!("edge_deletion {} outside [0, 1)", self.edge_deletion));
        }
        let (lo, hi) = self.positive_ratio;
        if !(0.0 <= lo && lo <= hi) {
            return bad(format!("positive_ratio band ({lo}, {hi}) is empty"));
        }
        Ok(())
    }
}

/// Generates a labelled dataset; identical `(config, seed)` give identical
/// datasets.
pub fn generate_dataset(config: &GenConfig, seed: u64) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let corpus: Vec<Graph> = (0..config.corpus_size)
        .map(|id| corpus_graph(id as u32, config, &mut rng))
        .collect::<Result<_>>()?;

    let mut queries = Vec::with_capacity(config.num_queries);
    let mut labels = Vec::with_capacity(config.num_queries);
    let (lo, hi) = config.positive_ratio;
    for qid in 0..config.num_queries as u32 {
        let mut accepted = None;
        for _ in 0..config.max_query_attempts {
            let q = query_graph(qid, &corpus, config, &mut rng)?;
            let rel = label_query(&q, &corpus)?;
            let neg = corpus.len() - rel.len();
            let ratio = if neg == 0 { f64::INFINITY } else { rel.len() as f64 / neg as f64 };
            if (lo..=hi).contains(&ratio) {
                accepted = Some((q, rel));
                break;
            }
        }
        let Some((q, rel)) = accepted else {
            return Err(Error::Config(format!(
                "no query with positive ratio in [{lo}, {hi}] after {} attempts",
                config.max_query_attempts
            )));
        };
        queries.push(q);
        labels.push(rel);
    }

    let mut ids: Vec<u32> = (0..config.num_queries as u32).collect();
    ids.shuffle(&mut rng);
    let n_train = config.num_queries * 3 / 5;
    let n_dev = config.num_queries / 5;
    let mut split = Split {
        train: ids[..n_train].to_vec(),
        dev: ids[n_train..n_train + n_dev].to_vec(),
        test: ids[n_train + n_dev..].to_vec(),
    };
    split.train.sort_unstable();
    split.dev.sort_unstable();
    split.test.sort_unstable();

    Dataset::new(corpus, queries, labels, split)
}

/// Small `(query, corpus)` pairs for exhaustive comparisons: queries of
/// 3 to 6 nodes, corpus graphs of 5 to 8 nodes. Even-indexed queries are cut
/// out of their corpus graph, odd-indexed ones out of an unrelated graph.
pub fn small_pairs(count: usize, seed: u64) -> Result<Vec<(Graph, Graph)>> {
    let config = GenConfig {
        corpus_nodes: (5, 8),
        query_nodes: (3, 6),
        max_extra_edges: 2,
        ..GenConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let c = corpus_graph(i as u32, &config, &mut rng)?;
            let other = corpus_graph(i as u32, &config, &mut rng)?;
            let source = if i % 2 == 0 { &c } else { &other };
            let q = query_graph(i as u32, std::slice::from_ref(source), &config, &mut rng)?;
            Ok((q, c))
        })
        .collect()
}

/// Relevant corpus ids for `query`, computed pairwise in parallel and merged
/// in id order.
pub(crate) fn label_query(query: &Graph, corpus: &[Graph]) -> Result<Vec<u32>> {
    let hits: Vec<Option<u32>> = corpus
        .par_iter()
        .map(|c| Ok(is_subgraph_isomorphic(query, c)?.then_some(c.id())))
        .collect::<Result<_>>()?;
    Ok(hits.into_iter().flatten().collect())
}

fn corpus_graph(id: u32, config: &GenConfig, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let n = rng.gen_range(config.corpus_nodes.0..=config.corpus_nodes.1);
    let mut degree = vec![0usize; n];
    let mut edges = Vec::with_capacity(n + config.max_extra_edges);
    for v in 1..n {
        let open: Vec<usize> = (0..v).filter(|&u| degree[u] < config.max_degree).collect();
        let u = *open.choose(rng).expect("a tree with degree cap >= 2 always has an open node");
        edges.push((u, v));
        degree[u] += 1;
        degree[v] += 1;
    }
    let extra = rng.gen_range(0..=config.max_extra_edges);
    let mut g = Graph::from_edges(id, n, &edges)?;
    for _ in 0..extra {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .filter(|&(u, v)| {
                !g.has_edge(u, v) && degree[u] < config.max_degree && degree[v] < config.max_degree
            })
            .collect();
        let Some(&(u, v)) = pairs.choose(rng) else { break };
        edges.push((u, v));
        degree[u] += 1;
        degree[v] += 1;
        g = Graph::from_edges(id, n, &edges)?;
    }
    Ok(g)
}

fn query_graph(id: u32, corpus: &[Graph], config: &GenConfig, rng: &mut ChaCha8Rng) -> Result<Graph> {
    let source = loop {
        let g = corpus.choose(rng).expect("corpus is non-empty");
        if g.n() >= config.query_nodes.0 {
            break g;
        }
    };
    let size = rng.gen_range(config.query_nodes.0..=config.query_nodes.1.min(source.n()));

    // Randomized BFS: grow from a random seed, always expanding a uniformly
    // chosen frontier node.
    let start = rng.gen_range(0..source.n());
    let mut chosen = vec![start];
    let mut in_set = vec![false; source.n()];
    in_set[start] = true;
    let mut frontier: Vec<usize> = source.neighbors(start).collect();
    while chosen.len() < size && !frontier.is_empty() {
        let v = frontier.swap_remove(rng.gen_range(0..frontier.len()));
        if in_set[v] {
            continue;
        }
        in_set[v] = true;
        chosen.push(v);
        frontier.extend(source.neighbors(v).filter(|&w| !in_set[w]));
    }

    // Shuffle labels so node ids carry no trace of the source graph.
    let mut relabel: Vec<usize> = (0..chosen.len()).collect();
    relabel.shuffle(rng);
    let mut local = vec![usize::MAX; source.n()];
    for (i, &v) in chosen.iter().enumerate() {
        local[v] = relabel[i];
    }
    let mut edges: Vec<(usize, usize)> = source
        .edges()
        .into_iter()
        .filter(|&(u, v)| in_set[u] && in_set[v])
        .map(|(u, v)| (local[u].min(local[v]), local[u].max(local[v])))
        .collect();
    edges.sort_unstable();

    let max_delete = (config.edge_deletion * edges.len() as f64).floor() as usize;
    let to_delete = rng.gen_range(0..=max_delete);
    let n = chosen.len();
    for _ in 0..to_delete {
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.shuffle(rng);
        let removable = order.into_iter().find(|&i| {
            let mut rest = edges.clone();
            rest.remove(i);
            Graph::from_edges(id, n, &rest).map(|g| g.is_connected()).unwrap_or(false)
        });
        match removable {
            Some(i) => {
                edges.remove(i);
            }
            None => break,
        }
    }
    Graph::from_edges(id, n, &edges)
}
