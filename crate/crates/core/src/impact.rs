//! Query-conditional impact weights for index probes.
//!
//! A small network maps `[token bits, node embedding]` to a scalar weight;
//! a corpus graph's score is the sum of the weights of the probed tokens it
//! contains. Weights are computed per query and never stored in the index.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{BoundMlp, Mlp, Parameterized, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Dataset;
use crate::index::{InvertedIndex, ScoreMap};
use crate::lexicon::{check_token, token_bits, Token};
use crate::probe::CoocNeighborhoods;
use crate::train::{QueryBatch, RankingModel};

/// Which node embedding feeds the impact network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImpactInput {
    /// The reranking backbone's embeddings.
    Backbone,
    /// The tokenizer's encoder embeddings.
    Tokenizer,
}

impl FromStr for ImpactInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "h" => Ok(Self::Backbone),
            "x" => Ok(Self::Tokenizer),
            _ => Err(Error::Config(format!("impact input must be `h` or `x`, got `{s}`"))),
        }
    }
}

impl fmt::Display for ImpactInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Backbone => "h",
            Self::Tokenizer => "x",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactParams {
    pub bits: usize,
    pub mlp: Mlp,
    pub input: ImpactInput,
}

/// Tokens and embeddings of a query's real nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryArtifacts {
    pub id: u32,
    pub tokens: Vec<Token>,
    /// `n x dim_h`.
    pub embeddings: Tensor,
}

impl ImpactParams {
    pub fn new<R: Rng>(bits: usize, dim_h: usize, hidden: usize, input: ImpactInput, rng: &mut R) -> Self {
        Self {
            bits,
            mlp: Mlp::new(bits + dim_h, hidden, 1, rng),
            input,
        }
    }

    pub fn dim_h(&self) -> usize {
        self.mlp.input_dim() - self.bits
    }

    /// Feature rows `[bits(token), h]` for `(token, h)` pairs.
    pub fn features(&self, pairs: &[(Token, &[f64])]) -> Result<Tensor> {
        let width = self.mlp.input_dim();
        let mut data = Vec::with_capacity(pairs.len() * width);
        for &(t, h) in pairs {
            check_token(t, self.bits)?;
            if h.len() != self.dim_h() {
                return Err(Error::shape("impact input", (1, h.len()), (1, self.dim_h())));
            }
            data.extend(token_bits(t, self.bits));
            data.extend_from_slice(h);
        }
        Tensor::new(pairs.len(), width, data)
    }

    /// One weight per `(token, h)` pair.
    pub fn weights(&self, pairs: &[(Token, &[f64])]) -> Result<Vec<f64>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        Ok(self.mlp.forward(&self.features(pairs)?)?.into_data())
    }

    pub fn weight(&self, token: Token, h: &[f64]) -> Result<f64> {
        Ok(self.weights(&[(token, h)])?[0])
    }

    /// Sum over query nodes of the node's weight times membership of its
    /// token in each graph.
    pub fn score(&self, index: &InvertedIndex, query: &QueryArtifacts) -> Result<ScoreMap> {
        let pairs: Vec<(Token, &[f64])> = query
            .tokens
            .iter()
            .enumerate()
            .map(|(u, &t)| (t, query.embeddings.row(u)))
            .collect();
        let w = self.weights(&pairs)?;
        index.accumulate(query.tokens.iter().copied().zip(w))
    }
}

impl Parameterized for ImpactParams {
    fn params(&self) -> Vec<&Tensor> {
        self.mlp.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.mlp.params_mut()
    }
}

/// Which scoring rule the training objective differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImpactObjective {
    /// One probe per query node.
    Single,
    /// Co-occurrence expansion over the full vocabulary.
    Cooc,
}

/// Frozen inputs for impact training.
pub struct ImpactContext<'a> {
    pub index: &'a InvertedIndex,
    pub cooc: &'a CoocNeighborhoods,
    /// Indexed by query id.
    pub queries: &'a [QueryArtifacts],
    pub objective: ImpactObjective,
}

/// Impact parameters paired with the frozen context they are trained in.
#[derive(Clone)]
pub struct ImpactTrainer<'a> {
    pub params: ImpactParams,
    pub ctx: &'a ImpactContext<'a>,
}

impl ImpactTrainer<'_> {
    /// Differentiable scores of `candidates`: `A w` where `w` are the
    /// weights of the probe terms and `A[c][term]` is the term coefficient
    /// times membership of the term's token in `c`. `mlp` must be bound once
    /// per tape so that every use shares the same parameter leaves.
    pub fn scores<'t>(&self, tape: &'t Tape, mlp: &BoundMlp<'t>, query: u32, candidates: &[u32]) -> Result<Var<'t>> {
        let ctx = self.ctx;
        let qa = &ctx.queries[query as usize];
        let docs: Vec<&[Token]> = candidates
            .iter()
            .map(|&c| {
                ctx.index
                    .doc_tokens(c)
                    .ok_or_else(|| Error::Config(format!("graph {c} is not indexed")))
            })
            .collect::<Result<_>>()?;

        // (node, token, coefficient)
        let mut terms: Vec<(usize, Token, f64)> = Vec::new();
        match ctx.objective {
            ImpactObjective::Single => terms.extend(qa.tokens.iter().enumerate().map(|(u, &t)| (u, t, 1.0))),
            ImpactObjective::Cooc => {
                let mut seen: Vec<Token> = docs.iter().flat_map(|d| d.iter().copied()).collect();
                seen.sort_unstable();
                seen.dedup();
                for (u, &t) in qa.tokens.iter().enumerate() {
                    for &tau in &seen {
                        let s = ctx.cooc.sim(ctx.index, t, tau);
                        if s > 0.0 {
                            terms.push((u, tau, s));
                        }
                    }
                }
            }
        }

        let mut a = Tensor::zeros(candidates.len(), terms.len().max(1));
        for (r, doc) in docs.iter().enumerate() {
            for (k, &(_, t, coef)) in terms.iter().enumerate() {
                if doc.binary_search(&t).is_ok() {
                    a.set(r, k, coef);
                }
            }
        }
        let a = tape.constant(a);
        if terms.is_empty() {
            return a.matmul(tape.constant(Tensor::zeros(1, 1)));
        }
        let pairs: Vec<(Token, &[f64])> = terms.iter().map(|&(u, t, _)| (t, qa.embeddings.row(u))).collect();
        let x = tape.constant(self.params.features(&pairs)?);
        let w = mlp.forward(x)?;
        a.matmul(w)
    }
}

impl Parameterized for ImpactTrainer<'_> {
    fn params(&self) -> Vec<&Tensor> {
        self.params.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.params.params_mut()
    }
}

impl RankingModel for ImpactTrainer<'_> {
    /// `sum over (p, n) of [S(q, n) - S(q, p) + margin]+`.
    fn query_loss<'t>(&self, tape: &'t Tape, _: &Dataset, batch: &QueryBatch, margin: f64) -> Result<Var<'t>> {
        let mlp = self.params.mlp.bind(tape);
        let pos = self.scores(tape, &mlp, batch.query, &batch.positives)?;
        let neg = self.scores(tape, &mlp, batch.query, &batch.negatives)?;
        Ok(neg.outer_sub(pos)?.shift(margin).hinge().sum())
    }
}
