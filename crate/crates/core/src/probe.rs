//! Multi-probe scoring and thresholded shortlists.
//!
//! Every strategy turns a query into weighted `(token, weight)` probe terms
//! and accumulates them over the index:
//!
//! * single probe: each node probes its own token;
//! * Hamming expansion: each node probes every token within radius `r`;
//! * co-occurrence expansion: each node probes the `b` tokens whose posting
//!   lists overlap its own the most, scaled by the normalized overlap.
//!
//! Weights are 1 (uniform) or the query-conditional impact weight.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::impact::{ImpactParams, QueryArtifacts};
use crate::index::{InvertedIndex, ScoreMap};
use crate::lexicon::{check_token, Token};

/// Every token within Hamming distance `radius` of `token`, ascending.
pub fn hamming_ball(token: Token, radius: usize, bits: usize) -> Result<Vec<Token>> {
    check_token(token, bits)?;
    if radius > bits {
        return Err(Error::RadiusTooLarge {
            radius: radius as u32,
            bits: bits as u32,
        });
    }
    let mut ball: Vec<Token> = (0..=radius)
        .flat_map(|k| {
            (0..bits)
                .combinations(k)
                .map(move |flip| flip.iter().fold(token, |t, &b| t ^ (1 << b)))
        })
        .collect();
    ball.sort_unstable();
    Ok(ball)
}

/// Co-occurrence neighbourhood of one token.
#[derive(Debug, Clone, PartialEq)]
pub struct CoocRow {
    /// `sum over tokens t* of |pl(t) ∩ pl(t*)|`; zero for an empty posting.
    pub denominator: u64,
    /// `sim(t, t')` for every token `t'`; empty when the denominator is zero.
    pub dense: Vec<f64>,
    /// Tokens with positive similarity, by descending similarity then
    /// ascending token.
    pub ranked: Vec<(Token, f64)>,
}

/// Lazily filled co-occurrence rows, one per token, for a single index.
#[derive(Debug)]
pub struct CoocNeighborhoods {
    rows: Vec<OnceLock<CoocRow>>,
}

impl CoocNeighborhoods {
    pub fn new(index: &InvertedIndex) -> Self {
        Self {
            rows: (0..index.vocab_size()).map(|_| OnceLock::new()).collect(),
        }
    }

    /// Row of `token`, computed on first use. `index` must be the index this
    /// table was created for.
    pub fn row(&self, index: &InvertedIndex, token: Token) -> &CoocRow {
        self.rows[token as usize].get_or_init(|| {
            let mut counts = vec![0u64; index.vocab_size()];
            for &c in index.posting(token) {
                for &t in index.doc_tokens(c).expect("posting ids are indexed") {
                    counts[t as usize] += 1;
                }
            }
            let denominator: u64 = counts.iter().sum();
            if denominator == 0 {
                return CoocRow {
                    denominator,
                    dense: Vec::new(),
                    ranked: Vec::new(),
                };
            }
            let dense: Vec<f64> = counts.iter().map(|&c| c as f64 / denominator as f64).collect();
            let mut ranked: Vec<(Token, f64)> = dense
                .iter()
                .enumerate()
                .filter(|(_, &s)| s > 0.0)
                .map(|(t, &s)| (t as Token, s))
                .collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            CoocRow {
                denominator,
                dense,
                ranked,
            }
        })
    }

    /// `|pl(a) ∩ pl(b)| / sum over t* of |pl(a) ∩ pl(t*)|`, or 0 when `a`
    /// has an empty posting list.
    pub fn sim(&self, index: &InvertedIndex, a: Token, b: Token) -> f64 {
        self.row(index, a).dense.get(b as usize).copied().unwrap_or(0.0)
    }

    /// The top `b` neighbours of `token` with their similarities.
    pub fn neighbors(&self, index: &InvertedIndex, token: Token, b: usize) -> &[(Token, f64)] {
        let ranked = &self.row(index, token).ranked;
        &ranked[..b.min(ranked.len())]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Single,
    Hamming { radius: usize },
    Cooc { expand: usize },
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Single => f.write_str("single"),
            Self::Hamming { radius } => write!(f, "hm_r{radius}"),
            Self::Cooc { expand } => write!(f, "cm_b{expand}"),
        }
    }
}

impl Strategy {
    /// Parses the `--strategy` name with its `--radius` / `--expand`.
    pub fn parse(name: &str, radius: usize, expand: usize) -> Result<Self> {
        match name {
            "single" => Ok(Self::Single),
            "hm" => Ok(Self::Hamming { radius }),
            "cm" => Ok(Self::Cooc { expand }),
            _ => Err(Error::Config(format!("unknown strategy `{name}` (single, hm, cm)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Weighting {
    Uniform,
    Impact,
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unif" => Ok(Self::Uniform),
            "impact" => Ok(Self::Impact),
            _ => Err(Error::Config(format!("unknown weighting `{s}` (unif, impact)"))),
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "unif",
            Self::Impact => "impact",
        })
    }
}

/// Probe terms for `query` under `strategy`; `impact = None` means uniform
/// weights.
pub fn probe_terms(
    index: &InvertedIndex,
    cooc: &CoocNeighborhoods,
    strategy: Strategy,
    impact: Option<&ImpactParams>,
    query: &QueryArtifacts,
) -> Result<Vec<(Token, f64)>> {
    // (node, token, coefficient)
    let mut raw: Vec<(usize, Token, f64)> = Vec::new();
    for (u, &t) in query.tokens.iter().enumerate() {
        match strategy {
            Strategy::Single => {
                check_token(t, index.bits())?;
                raw.push((u, t, 1.0));
            }
            Strategy::Hamming { radius } => {
                raw.extend(hamming_ball(t, radius, index.bits())?.into_iter().map(|tau| (u, tau, 1.0)));
            }
            Strategy::Cooc { expand } => {
                check_token(t, index.bits())?;
                raw.extend(cooc.neighbors(index, t, expand).iter().map(|&(tau, s)| (u, tau, s)));
            }
        }
    }
    let weights = match impact {
        None => vec![1.0; raw.len()],
        Some(p) => {
            let pairs: Vec<(Token, &[f64])> = raw.iter().map(|&(u, t, _)| (t, query.embeddings.row(u))).collect();
            p.weights(&pairs)?
        }
    };
    Ok(raw.iter().zip(weights).map(|(&(_, t, c), w)| (t, c * w)).collect())
}

pub fn score(
    index: &InvertedIndex,
    cooc: &CoocNeighborhoods,
    strategy: Strategy,
    impact: Option<&ImpactParams>,
    query: &QueryArtifacts,
) -> Result<ScoreMap> {
    index.accumulate(probe_terms(index, cooc, strategy, impact, query)?)
}

/// Graphs scoring at least `delta`, in ascending id order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub query: u32,
    pub delta: f64,
    pub members: Vec<(u32, f64)>,
}

impl CandidateSet {
    pub fn ids(&self) -> Vec<u32> {
        self.members.iter().map(|m| m.0).collect()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

pub fn shortlist(query: u32, scores: &ScoreMap, delta: f64) -> CandidateSet {
    CandidateSet {
        query,
        delta,
        members: scores.iter().filter(|(_, &s)| s >= delta).map(|(&c, &s)| (c, s)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Tensor;
    use crate::lexicon::TokenMultiset;

    #[test]
    fn ball_sizes_and_contents() {
        assert_eq!(hamming_ball(300, 0, 10).unwrap(), vec![300]);
        assert_eq!(hamming_ball(300, 3, 10).unwrap().len(), 176);
        assert_eq!(hamming_ball(0, 10, 10).unwrap().len(), 1024);
        assert!(matches!(hamming_ball(1, 11, 10), Err(Error::RadiusTooLarge { .. })));
        let ball = hamming_ball(0b101101, 2, 6).unwrap();
        let oracle: Vec<Token> = (0..64).filter(|t: &Token| (t ^ 0b101101).count_ones() <= 2).collect();
        assert_eq!(ball, oracle);
    }

    fn two_token_index() -> InvertedIndex {
        // pl(1) = {A, B}, pl(2) = {B, C}
        InvertedIndex::build(
            4,
            &[
                TokenMultiset::from_tokens(0, &[1]),
                TokenMultiset::from_tokens(1, &[1, 2]),
                TokenMultiset::from_tokens(2, &[2]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn cooc_similarities_by_hand() {
        let idx = two_token_index();
        let cooc = CoocNeighborhoods::new(&idx);
        assert!((cooc.sim(&idx, 1, 1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((cooc.sim(&idx, 1, 2) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(cooc.sim(&idx, 5, 1), 0.0);
        assert_eq!(cooc.row(&idx, 1).denominator, 3);
        assert_eq!(cooc.neighbors(&idx, 1, 1), &[(1, 2.0 / 3.0)]);
        let total: f64 = cooc.row(&idx, 2).dense.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_postings_reduce_cm_to_scaled_self_probe() {
        let idx = InvertedIndex::build(
            4,
            &[TokenMultiset::from_tokens(0, &[3]), TokenMultiset::from_tokens(1, &[4])],
        )
        .unwrap();
        let cooc = CoocNeighborhoods::new(&idx);
        assert_eq!(cooc.sim(&idx, 3, 4), 0.0);
        let q = QueryArtifacts {
            id: 0,
            tokens: vec![3],
            embeddings: Tensor::zeros(1, 2),
        };
        let s = score(&idx, &cooc, Strategy::Cooc { expand: 32 }, None, &q).unwrap();
        assert_eq!(s, ScoreMap::from([(0, 1.0)]));
    }

    #[test]
    fn shortlist_thresholds() {
        let scores = ScoreMap::from([(0, 1.0), (1, 3.0), (2, 2.0), (3, 4.0)]);
        assert_eq!(shortlist(0, &scores, 0.5).len(), 4);
        assert!(shortlist(0, &scores, 4.5).is_empty());
        assert_eq!(shortlist(0, &scores, 2.5).ids(), vec![1, 3]);
    }

    #[test]
    fn strategy_names() {
        assert_eq!(Strategy::parse("hm", 2, 0).unwrap().to_string(), "hm_r2");
        assert_eq!(Strategy::parse("cm", 0, 32).unwrap().to_string(), "cm_b32");
        assert!(Strategy::parse("ivf", 0, 0).is_err());
        assert_eq!("impact".parse::<Weighting>().unwrap(), Weighting::Impact);
    }
}
