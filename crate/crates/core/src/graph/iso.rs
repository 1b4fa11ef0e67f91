use super::Graph;
use crate::error::{Error, Result};

pub const MAX_QUERY_NODES: usize = 20;
pub const MAX_CORPUS_NODES: usize = 30;

/// Exact (non-induced) subgraph isomorphism: is there an injective map of
/// query nodes onto corpus nodes that sends every query edge to a corpus
/// edge?
///
/// Backtracking over query nodes in BFS order (ascending ids), candidates in
/// ascending id order, pruned by degree and by adjacency to the images of
/// already-placed neighbours.
pub fn is_subgraph_isomorphic(query: &Graph, corpus: &Graph) -> Result<bool> {
    if query.n() > MAX_QUERY_NODES || corpus.n() > MAX_CORPUS_NODES {
        return Err(Error::InstanceTooLarge {
            query: query.n(),
            corpus: corpus.n(),
            max_query: MAX_QUERY_NODES,
            max_corpus: MAX_CORPUS_NODES,
        });
    }
    if query.n() > corpus.n() || query.num_edges() > corpus.num_edges() {
        return Ok(false);
    }
    let qadj = masks(query);
    let cadj = masks(corpus);
    let qdeg: Vec<u32> = qadj.iter().map(|m| m.count_ones()).collect();
    let cdeg: Vec<u32> = cadj.iter().map(|m| m.count_ones()).collect();

    let mut qsorted = qdeg.clone();
    let mut csorted = cdeg.clone();
    qsorted.sort_unstable_by(|a, b| b.cmp(a));
    csorted.sort_unstable_by(|a, b| b.cmp(a));
    if qsorted.iter().zip(&csorted).any(|(q, c)| q > c) {
        return Ok(false);
    }

    let order = bfs_order(&qadj);
    let mut position = vec![0; query.n()];
    for (i, &u) in order.iter().enumerate() {
        position[u] = i;
    }
    // For each step, the query neighbours already placed earlier.
    let placed_neighbors: Vec<Vec<usize>> = order
        .iter()
        .enumerate()
        .map(|(i, &u)| bits(qadj[u]).filter(|&w| position[w] < i).collect())
        .collect();

    let search = Search {
        order: &order,
        placed_neighbors: &placed_neighbors,
        qdeg: &qdeg,
        cadj: &cadj,
        cdeg: &cdeg,
        all: if corpus.n() == 32 { u32::MAX } else { (1u32 << corpus.n()) - 1 },
    };
    let mut image = vec![usize::MAX; query.n()];
    Ok(search.extend(0, &mut image, 0))
}

struct Search<'a> {
    order: &'a [usize],
    placed_neighbors: &'a [Vec<usize>],
    qdeg: &'a [u32],
    cadj: &'a [u32],
    cdeg: &'a [u32],
    all: u32,
}

impl Search<'_> {
    fn extend(&self, step: usize, image: &mut [usize], used: u32) -> bool {
        if step == self.order.len() {
            return true;
        }
        let u = self.order[step];
        let mut candidates = self.all & !used;
        for &w in &self.placed_neighbors[step] {
            candidates &= self.cadj[image[w]];
        }
        for v in bits(candidates) {
            if self.cdeg[v] < self.qdeg[u] {
                continue;
            }
            image[u] = v;
            if self.extend(step + 1, image, used | (1 << v)) {
                return true;
            }
        }
        image[u] = usize::MAX;
        false
    }
}

fn masks(g: &Graph) -> Vec<u32> {
    (0..g.n())
        .map(|u| g.neighbors(u).fold(0u32, |m, v| m | (1 << v)))
        .collect()
}

fn bits(mut mask: u32) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if mask == 0 {
            None
        } else {
            let b = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            Some(b)
        }
    })
}

/// BFS from the smallest unvisited node, neighbours in ascending order.
fn bfs_order(adj: &[u32]) -> Vec<usize> {
    let n = adj.len();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut head = order.len();
        order.push(root);
        while head < order.len() {
            let u = order[head];
            head += 1;
            for v in bits(adj[u]) {
                if !seen[v] {
                    seen[v] = true;
                    order.push(v);
                }
            }
        }
    }
    order
}
