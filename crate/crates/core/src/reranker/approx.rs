//! How well do code-set distances track the exact edge-mismatch cost?
//!
//! For small pairs the exact cost `min over permutations of
//! sum [A_q - P A_c P^T]+` is found by enumeration and compared with the
//! Chamfer distance between the tokenizer's codes and with the hinge cost of
//! the codes under the backbone's soft alignment.

use itertools::Itertools;

use super::{hinge_alignment, BackboneParams};
use crate::error::Result;
use crate::graph::Graph;
use crate::tokenizer::{chamfer, Side, TokenizerParams};

/// Largest padded width handled by exhaustive enumeration.
pub const MAX_EXACT_NODES: usize = 8;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ApproximationReport {
    pub pairs: usize,
    /// Pairs wider than [`MAX_EXACT_NODES`].
    pub skipped: usize,
    pub mean_exact: f64,
    pub mean_soft_gap: f64,
    pub mean_chamfer_gap: f64,
}

/// `min over permutations P of sum [A_q - P A_c P^T]+` with both adjacency
/// matrices padded to `max(nq, nc)`; `None` beyond [`MAX_EXACT_NODES`].
///
/// Each query edge left uncovered by the mapping costs 2, once per
/// orientation.
pub fn best_permutation_distance(q: &Graph, c: &Graph) -> Option<usize> {
    let m = q.n().max(c.n());
    if m > MAX_EXACT_NODES {
        return None;
    }
    let edges = q.edges();
    // Padded query nodes carry no edges, so only the images of real query
    // nodes matter.
    (0..m)
        .permutations(q.n())
        .map(|img| {
            edges
                .iter()
                .filter(|&&(u, v)| img[u] >= c.n() || img[v] >= c.n() || !c.has_edge(img[u], img[v]))
                .count()
                * 2
        })
        .min()
}

pub fn approximation_errors(
    pairs: &[(Graph, Graph)],
    tokenizer: &TokenizerParams,
    backbone: &BackboneParams,
) -> Result<ApproximationReport> {
    let mut report = ApproximationReport::default();
    let (mut exact_sum, mut soft_sum, mut chamfer_sum) = (0.0, 0.0, 0.0);
    for (q, c) in pairs {
        let Some(exact) = best_permutation_distance(q, c) else {
            report.skipped += 1;
            continue;
        };
        let exact = exact as f64;
        let m = q.n().max(c.n());
        let (q, c) = (q.padded(m)?, c.padded(m)?);
        let zq = tokenizer.soft_encode(&q, Side::Query)?;
        let zc = tokenizer.soft_encode(&c, Side::Corpus)?;
        let p = backbone.alignment(&backbone.embed(&q)?, &backbone.embed(&c)?)?;
        let soft = hinge_alignment(&zq.matrix, zq.n, &p, &zc.matrix)?;
        let cham = chamfer(&zq, &zc)?;
        exact_sum += exact;
        soft_sum += (exact - soft).abs();
        chamfer_sum += (exact - cham).abs();
        report.pairs += 1;
    }
    if report.pairs > 0 {
        let n = report.pairs as f64;
        report.mean_exact = exact_sum / n;
        report.mean_soft_gap = soft_sum / n;
        report.mean_chamfer_gap = chamfer_sum / n;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::is_subgraph_isomorphic;

    #[test]
    fn contained_query_costs_nothing() {
        let q = Graph::from_edges(0, 3, &[(0, 1), (1, 2)]).unwrap();
        let c = Graph::from_edges(1, 4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(best_permutation_distance(&q, &c), Some(0));
        assert!(is_subgraph_isomorphic(&q, &c).unwrap());
    }

    #[test]
    fn triangle_into_path_misses_one_edge() {
        let q = Graph::from_edges(0, 3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let c = Graph::from_edges(1, 4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(best_permutation_distance(&q, &c), Some(2));
    }

    #[test]
    fn larger_query_maps_onto_padding() {
        // A 4-path into a single edge: at best one edge survives.
        let q = Graph::from_edges(0, 4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let c = Graph::from_edges(1, 2, &[(0, 1)]).unwrap();
        assert_eq!(best_permutation_distance(&q, &c), Some(4));
    }

    #[test]
    fn wide_pairs_are_skipped() {
        let q = Graph::from_edges(0, 3, &[(0, 1)]).unwrap();
        let c = Graph::from_edges(1, 9, &[(0, 1)]).unwrap();
        assert_eq!(best_permutation_distance(&q, &c), None);
    }
}
