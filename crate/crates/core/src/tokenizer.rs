//! Graph tokenizer: per-node soft binary codes and code-set distances.
//!
//! A node embedding `x(u)` from the shared encoder goes through a
//! side-specific linear-ReLU-linear head and a sigmoid, giving
//! `Z(u) in (0, 1)^D`. Queries and corpus graphs use separate heads unless
//! the tokenizer is siamese.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::nn::BoundMlp;
use crate::diff::{pairwise_l1, Mlp, Parameterized, Tape, Tensor, Var};
use crate::encoder::{BoundEncoder, EncoderConfig, EncoderParams, NodeEmbeddings};
use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph};
use crate::reranker::{sinkhorn, sinkhorn_var};
use crate::train::{pairwise_hinge, QueryBatch, RankingModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Query,
    Corpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMode {
    Asymmetric,
    Siamese,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodeDistance {
    Chamfer,
    Injective,
}

impl FromStr for HeadMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asymmetric" => Ok(Self::Asymmetric),
            "siamese" => Ok(Self::Siamese),
            _ => Err(Error::Config(format!("unknown tokenizer mode `{s}`"))),
        }
    }
}

impl fmt::Display for HeadMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Asymmetric => "asymmetric",
            Self::Siamese => "siamese",
        })
    }
}

impl FromStr for CodeDistance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chamfer" => Ok(Self::Chamfer),
            "injective" => Ok(Self::Injective),
            _ => Err(Error::Config(format!("unknown code distance `{s}`"))),
        }
    }
}

impl fmt::Display for CodeDistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Chamfer => "chamfer",
            Self::Injective => "injective",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenizerConfig {
    pub encoder: EncoderConfig,
    pub d_bits: usize,
    pub head_hidden: usize,
    pub mode: HeadMode,
    pub distance: CodeDistance,
    /// Sinkhorn settings for the injective distance.
    pub temp: f64,
    pub iters: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            d_bits: 10,
            head_hidden: 64,
            mode: HeadMode::Asymmetric,
            distance: CodeDistance::Chamfer,
            temp: 0.1,
            iters: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerParams {
    pub encoder: EncoderParams,
    pub query_head: Mlp,
    /// `None` in siamese mode, where both sides use `query_head`.
    pub corpus_head: Option<Mlp>,
    pub distance: CodeDistance,
    pub temp: f64,
    pub iters: usize,
}

/// Soft codes padded to the graph width; padded rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftCodes {
    pub matrix: Tensor,
    pub n: usize,
}

impl SoftCodes {
    pub fn new(matrix: Tensor, n: usize) -> Result<Self> {
        if n > matrix.rows() {
            return Err(Error::shape("soft codes", matrix.shape(), (n, matrix.cols())));
        }
        Ok(Self { matrix, n })
    }

    /// Codes of the real nodes.
    pub fn real(&self) -> Tensor {
        self.matrix.slice_rows(0, self.n)
    }
}

pub struct BoundTokenizer<'t> {
    encoder: BoundEncoder<'t>,
    query_head: BoundMlp<'t>,
    corpus_head: Option<BoundMlp<'t>>,
    distance: CodeDistance,
    temp: f64,
    iters: usize,
}

impl TokenizerParams {
    pub fn new<R: Rng>(config: &TokenizerConfig, rng: &mut R) -> Self {
        let dim_h = config.encoder.dim_h;
        let encoder = EncoderParams::new(&config.encoder, rng);
        let query_head = Mlp::new(dim_h, config.head_hidden, config.d_bits, rng);
        let corpus_head = match config.mode {
            HeadMode::Asymmetric => Some(Mlp::new(dim_h, config.head_hidden, config.d_bits, rng)),
            HeadMode::Siamese => None,
        };
        Self {
            encoder,
            query_head,
            corpus_head,
            distance: config.distance,
            temp: config.temp,
            iters: config.iters,
        }
    }

    pub fn d_bits(&self) -> usize {
        self.query_head.output_dim()
    }

    pub fn mode(&self) -> HeadMode {
        if self.corpus_head.is_some() {
            HeadMode::Asymmetric
        } else {
            HeadMode::Siamese
        }
    }

    pub fn head(&self, side: Side) -> &Mlp {
        match (side, &self.corpus_head) {
            (Side::Corpus, Some(h)) => h,
            _ => &self.query_head,
        }
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundTokenizer<'t> {
        BoundTokenizer {
            encoder: self.encoder.bind(tape),
            query_head: self.query_head.bind(tape),
            corpus_head: self.corpus_head.as_ref().map(|h| h.bind(tape)),
            distance: self.distance,
            temp: self.temp,
            iters: self.iters,
        }
    }

    /// Encoder embeddings and soft codes of `g`.
    pub fn encode(&self, g: &Graph, side: Side) -> Result<(NodeEmbeddings, SoftCodes)> {
        let x = self.encoder.encode(g)?;
        let z = self
            .head(side)
            .forward(&x.real())?
            .map(crate::diff::sigmoid)
            .pad_rows(g.m());
        Ok((x, SoftCodes { matrix: z, n: g.n() }))
    }

    pub fn soft_encode(&self, g: &Graph, side: Side) -> Result<SoftCodes> {
        Ok(self.encode(g, side)?.1)
    }

    /// The configured code distance.
    pub fn code_distance(&self, zq: &SoftCodes, zc: &SoftCodes) -> Result<f64> {
        match self.distance {
            CodeDistance::Chamfer => chamfer(zq, zc),
            CodeDistance::Injective => injective_distance(zq, zc, self.temp, self.iters),
        }
    }
}

impl<'t> BoundTokenizer<'t> {
    /// `n x D` soft codes of the real nodes of `g`.
    pub fn codes(&self, g: &Graph, side: Side) -> Result<Var<'t>> {
        let x = self.encoder.encode(g)?;
        let head = match (side, &self.corpus_head) {
            (Side::Corpus, Some(h)) => h,
            _ => &self.query_head,
        };
        Ok(head.forward(x)?.sigmoid())
    }

    pub fn distance(&self, zq: Var<'t>, zc: Var<'t>) -> Result<Var<'t>> {
        match self.distance {
            CodeDistance::Chamfer => chamfer_var(zq, zc),
            CodeDistance::Injective => injective_var(zq, zc, self.temp, self.iters),
        }
    }
}

fn check_nonempty(zq: &SoftCodes, zc: &SoftCodes) -> Result<()> {
    if zq.n == 0 {
        return Err(Error::EmptyNodeSet("query codes"));
    }
    if zc.n == 0 {
        return Err(Error::EmptyNodeSet("corpus codes"));
    }
    if zq.matrix.cols() != zc.matrix.cols() {
        return Err(Error::shape("code distance", zq.matrix.shape(), zc.matrix.shape()));
    }
    Ok(())
}

/// `sum over query nodes u of min over corpus nodes v of |Zq(u) - Zc(v)|_1`.
pub fn chamfer(zq: &SoftCodes, zc: &SoftCodes) -> Result<f64> {
    check_nonempty(zq, zc)?;
    let d = pairwise_l1(&zq.real(), &zc.real());
    Ok((0..d.rows())
        .map(|r| d.row(r).iter().copied().fold(f64::INFINITY, f64::min))
        .sum())
}

pub fn chamfer_var<'t>(zq: Var<'t>, zc: Var<'t>) -> Result<Var<'t>> {
    Ok(zq.pairwise_l1(zc)?.row_min()?.sum())
}

/// `|Zq - P Zc|_1` over the real query rows, with both code sets padded to
/// `max(nq, nc)` rows and `P = sinkhorn(-pairwise_l1(Zq, Zc), temp, T)`.
pub fn injective_distance(zq: &SoftCodes, zc: &SoftCodes, temp: f64, iters: usize) -> Result<f64> {
    check_nonempty(zq, zc)?;
    let m = zq.n.max(zc.n);
    let q = zq.real().pad_rows(m);
    let c = zc.real().pad_rows(m);
    let p = sinkhorn(&pairwise_l1(&q, &c).map(|v| -v), temp, iters)?;
    let pc = p.matmul(&c)?;
    Ok(q.data()[..zq.n * q.cols()]
        .iter()
        .zip(pc.data())
        .map(|(a, b)| (a - b).abs())
        .sum())
}

pub fn injective_var<'t>(zq: Var<'t>, zc: Var<'t>, temp: f64, iters: usize) -> Result<Var<'t>> {
    let nq = zq.shape().0;
    let m = nq.max(zc.shape().0);
    let q = zq.pad_rows(m);
    let c = zc.pad_rows(m);
    let p = sinkhorn_var(q.pairwise_l1(c)?.neg(), temp, iters)?;
    let rows: Vec<usize> = (0..nq).collect();
    Ok(q.sub(p.matmul(c)?)?.gather_rows(&rows)?.abs().sum())
}

impl Parameterized for TokenizerParams {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.encoder.params();
        p.extend(self.query_head.params());
        if let Some(h) = &self.corpus_head {
            p.extend(h.params());
        }
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.encoder.params_mut();
        p.extend(self.query_head.params_mut());
        if let Some(h) = &mut self.corpus_head {
            p.extend(h.params_mut());
        }
        p
    }
}

impl RankingModel for TokenizerParams {
    fn query_loss<'t>(&self, tape: &'t Tape, dataset: &Dataset, batch: &QueryBatch, margin: f64) -> Result<Var<'t>> {
        let bound = self.bind(tape);
        let zq = bound.codes(&dataset.queries[batch.query as usize], Side::Query)?;
        let dist = |ids: &[u32]| -> Result<Vec<Var<'t>>> {
            ids.iter()
                .map(|&c| bound.distance(zq, bound.codes(&dataset.corpus[c as usize], Side::Corpus)?))
                .collect()
        };
        pairwise_hinge(&dist(&batch.positives)?, &dist(&batch.negatives)?, margin)
    }
}
