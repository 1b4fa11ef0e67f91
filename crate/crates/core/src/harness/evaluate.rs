//! Accuracy/efficiency trade-off curves.
//!
//! For each threshold in a sweep every test query is shortlisted, the
//! shortlist is reranked and scored by average precision. A row reports the
//! mean shortlist size as a fraction of the corpus (`kC`) and the MAP. A
//! random baseline draws shortlists of the same per-query sizes.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::metrics::{average_precision, mean_average_precision};
use crate::error::Result;
use crate::graph::Dataset;
use crate::impact::{ImpactParams, QueryArtifacts};
use crate::index::{InvertedIndex, ScoreMap};
use crate::probe::{score, shortlist, CoocNeighborhoods, Strategy, Weighting};
use crate::reranker::{rerank, BackboneEmbedding, BackboneParams};

/// Backbone distances from selected queries to every corpus graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    rows: Vec<Option<Vec<f64>>>,
}

impl DistanceTable {
    pub fn build(
        backbone: &BackboneParams,
        queries: &[BackboneEmbedding],
        corpus: &[BackboneEmbedding],
        ids: &[u32],
    ) -> Result<Self> {
        let mut rows = vec![None; queries.len()];
        let computed: Vec<Vec<f64>> = ids
            .iter()
            .map(|&q| {
                corpus
                    .par_iter()
                    .map(|c| backbone.distance(&queries[q as usize], c))
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;
        for (&q, row) in ids.iter().zip(computed) {
            rows[q as usize] = Some(row);
        }
        Ok(Self { rows })
    }

    pub fn row(&self, query: u32) -> Option<&[f64]> {
        self.rows.get(query as usize)?.as_deref()
    }
}

/// Frozen retrieval artifacts shared by every sweep.
pub struct Retrieval<'a> {
    pub dataset: &'a Dataset,
    pub index: &'a InvertedIndex,
    pub cooc: &'a CoocNeighborhoods,
    /// Indexed by query id.
    pub queries: &'a [QueryArtifacts],
    pub backbone: &'a BackboneParams,
    pub query_embeddings: &'a [BackboneEmbedding],
    pub corpus_embeddings: &'a [BackboneEmbedding],
    pub distances: &'a DistanceTable,
}

/// How shortlists are ordered before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ranker {
    Backbone,
    /// Relevant graphs first; an upper bound for any reranker.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub strategy: Strategy,
    pub weighting: Weighting,
    pub points: usize,
    pub resamples: usize,
    pub seed: u64,
    pub timing: bool,
    pub ranker: Ranker,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRow {
    pub delta: f64,
    pub kc: f64,
    pub map: f64,
    pub ms_per_query: Option<f64>,
    /// Test queries with an empty shortlist (scored AP = 0).
    pub empty: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffReport {
    pub label: String,
    pub rows: Vec<TradeoffRow>,
    /// Random shortlists matched to each row's per-query sizes.
    pub random: Vec<TradeoffRow>,
    /// Test queries without positives, left out of every MAP.
    pub excluded_queries: usize,
}

/// `points` evenly spaced quantiles (`i / (points - 1)`) of the pooled
/// scores, nearest-rank.
pub fn delta_grid(pooled: &[f64], points: usize) -> Vec<f64> {
    if pooled.is_empty() {
        return Vec::new();
    }
    let mut sorted = pooled.to_vec();
    sorted.sort_by(f64::total_cmp);
    let last = (sorted.len() - 1) as f64;
    (0..points)
        .map(|i| {
            let q = if points > 1 { i as f64 / (points - 1) as f64 } else { 0.0 };
            sorted[(q * last).round() as usize]
        })
        .collect()
}

impl Retrieval<'_> {
    pub fn scores(&self, query: u32, strategy: Strategy, impact: Option<&ImpactParams>) -> Result<ScoreMap> {
        score(self.index, self.cooc, strategy, impact, &self.queries[query as usize])
    }

    fn ranked(&self, query: u32, ids: &[u32], ranker: Ranker, live: bool) -> Result<Vec<u32>> {
        Ok(match ranker {
            Ranker::Oracle => {
                let rel = self.dataset.relevant(query);
                let mut out: Vec<u32> = ids.iter().copied().filter(|c| rel.binary_search(c).is_ok()).collect();
                out.extend(ids.iter().copied().filter(|c| rel.binary_search(c).is_err()));
                out
            }
            Ranker::Backbone if live => {
                let q = &self.query_embeddings[query as usize];
                let d: Vec<f64> = ids
                    .iter()
                    .map(|&c| self.backbone.distance(q, &self.corpus_embeddings[c as usize]))
                    .collect::<Result<_>>()?;
                let pos = |c: u32| ids.iter().position(|&x| x == c).expect("candidate");
                rerank(ids, |c| d[pos(c)])
            }
            Ranker::Backbone => {
                let row = self.distances.row(query).ok_or_else(|| {
                    crate::error::Error::Config(format!("no precomputed distances for query {query}"))
                })?;
                rerank(ids, |c| row[c as usize])
            }
        })
    }

    pub fn evaluate(&self, test: &[u32], impact: Option<&ImpactParams>, spec: &SweepSpec) -> Result<TradeoffReport> {
        let label = format!("{}_{}", spec.strategy, spec.weighting);
        let queries: Vec<u32> = test
            .iter()
            .copied()
            .filter(|&q| !self.dataset.relevant(q).is_empty())
            .collect();
        let excluded_queries = test.len() - queries.len();
        if excluded_queries > 0 {
            log::warn!("{label}: {excluded_queries} test queries without positives are excluded");
        }
        let corpus = self.dataset.corpus.len() as f64;

        let scored: Vec<(ScoreMap, f64)> = queries
            .par_iter()
            .map(|&q| {
                let t = Instant::now();
                let s = self.scores(q, spec.strategy, impact)?;
                Ok((s, t.elapsed().as_secs_f64() * 1e3))
            })
            .collect::<Result<_>>()?;
        let pooled: Vec<f64> = scored.iter().flat_map(|(s, _)| s.values().copied()).collect();
        let grid = delta_grid(&pooled, spec.points);

        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut rows = Vec::with_capacity(grid.len());
        let mut random = Vec::with_capacity(grid.len());
        for &delta in &grid {
            let mut aps = Vec::with_capacity(queries.len());
            let mut rand_aps = Vec::with_capacity(queries.len());
            let (mut total, mut empty, mut ms) = (0usize, 0usize, 0.0);
            for (&q, (scores, score_ms)) in queries.iter().zip(&scored) {
                let t = Instant::now();
                let cands = shortlist(q, scores, delta);
                let ranked = self.ranked(q, &cands.ids(), spec.ranker, spec.timing)?;
                ms += score_ms + t.elapsed().as_secs_f64() * 1e3;
                total += cands.len();
                empty += usize::from(cands.is_empty());
                let rel = self.dataset.relevant(q);
                aps.push(average_precision(&ranked, rel));

                let k = cands.len();
                let mut acc = 0.0;
                for _ in 0..spec.resamples {
                    let mut ids: Vec<u32> = sample(&mut rng, corpus as usize, k).into_iter().map(|i| i as u32).collect();
                    ids.sort_unstable();
                    let ranked = self.ranked(q, &ids, spec.ranker, false)?;
                    acc += average_precision(&ranked, rel).unwrap_or(0.0);
                }
                rand_aps.push(Some(acc / spec.resamples.max(1) as f64));
            }
            let n = queries.len().max(1) as f64;
            let kc = total as f64 / n / corpus;
            rows.push(TradeoffRow {
                delta,
                kc,
                map: mean_average_precision(&aps).0,
                ms_per_query: spec.timing.then_some(ms / n),
                empty,
            });
            random.push(TradeoffRow {
                delta,
                kc,
                map: mean_average_precision(&rand_aps).0,
                ms_per_query: None,
                empty,
            });
        }
        let order = |v: &mut Vec<TradeoffRow>| v.sort_by(|a, b| a.kc.total_cmp(&b.kc).then(b.delta.total_cmp(&a.delta)));
        order(&mut rows);
        order(&mut random);
        Ok(TradeoffReport {
            label,
            rows,
            random,
            excluded_queries,
        })
    }
}

pub fn write_tradeoff_csv(path: &Path, rows: &[TradeoffRow]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "delta,kC,map,ms_per_query")?;
    for r in rows {
        let ms = r.ms_per_query.map(|m| format!("{m:.4}")).unwrap_or_default();
        writeln!(f, "{},{},{},{ms}", r.delta, r.kc, r.map)?;
    }
    f.flush()?;
    Ok(())
}

/// Linear interpolation of `map` over `kc` on a curve sorted by `kc`;
/// `None` outside the curve's range.
pub fn interpolate_map(rows: &[TradeoffRow], kc: f64) -> Option<f64> {
    let first = rows.first()?;
    let last = rows.last()?;
    if kc < first.kc || kc > last.kc {
        return None;
    }
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        if kc >= a.kc && kc <= b.kc {
            if b.kc == a.kc {
                return Some(a.map.max(b.map));
            }
            let t = (kc - a.kc) / (b.kc - a.kc);
            return Some(a.map + t * (b.map - a.map));
        }
    }
    Some(first.map)
}
