//! Alignment backbone used for final reranking.
//!
//! Node embeddings `H` come from an encoder; a shared linear-ReLU-linear
//! network maps them into an affinity space, Sinkhorn iterations turn the
//! affinities into a soft permutation `P`, and the relevance distance is
//! `sum [H_q - P H_c]+` over the real query rows.

mod approx;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use approx::{approximation_errors, best_permutation_distance, ApproximationReport};

use crate::diff::nn::BoundMlp;
use crate::diff::{log_col_normalize, log_row_normalize, Mlp, Parameterized, Tape, Tensor, Var};
use crate::encoder::{BoundEncoder, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::graph::{Dataset, Graph};
use crate::train::{pairwise_hinge, QueryBatch, RankingModel};

fn check_sinkhorn(shape: (usize, usize), temp: f64, iters: usize) -> Result<()> {
    if shape.0 != shape.1 {
        return Err(Error::shape("sinkhorn", shape, (shape.0, shape.0)));
    }
    if !(temp > 0.0) || iters == 0 {
        return Err(Error::Config(format!(
            "sinkhorn needs temp > 0 and at least one iteration, got temp {temp}, T = {iters}"
        )));
    }
    Ok(())
}

/// `P_0 = exp(logits / temp)` followed by `iters` rounds of column then row
/// normalization. The iterations run on `log P`, so columns whose entries
/// all underflow in the linear domain stay well defined.
pub fn sinkhorn(logits: &Tensor, temp: f64, iters: usize) -> Result<Tensor> {
    check_sinkhorn(logits.shape(), temp, iters)?;
    let mut log_p = logits.map(|v| v / temp);
    for _ in 0..iters {
        log_p = log_row_normalize(&log_col_normalize(&log_p));
    }
    Ok(log_p.map(f64::exp))
}

/// Differentiable [`sinkhorn`].
pub fn sinkhorn_var<'t>(logits: Var<'t>, temp: f64, iters: usize) -> Result<Var<'t>> {
    check_sinkhorn(logits.shape(), temp, iters)?;
    let mut log_p = logits.scale(1.0 / temp);
    for _ in 0..iters {
        log_p = log_p.log_col_normalize().log_row_normalize();
    }
    Ok(log_p.exp())
}

/// `sum over the first nq rows of [H_q - P H_c]+`.
pub fn hinge_alignment(hq: &Tensor, nq: usize, p: &Tensor, hc: &Tensor) -> Result<f64> {
    let ph = p.matmul(hc)?;
    if ph.shape() != hq.shape() {
        return Err(Error::shape("hinge_alignment", hq.shape(), ph.shape()));
    }
    Ok(hq.data()[..nq * hq.cols()]
        .iter()
        .zip(ph.data())
        .map(|(a, b)| (a - b).max(0.0))
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackboneConfig {
    pub encoder: EncoderConfig,
    pub align_hidden: usize,
    pub align_out: usize,
    pub temp: f64,
    pub iters: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            align_hidden: 25,
            align_out: 25,
            temp: 0.1,
            iters: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneParams {
    pub encoder: EncoderParams,
    pub align: Mlp,
    pub temp: f64,
    pub iters: usize,
}

/// Per-graph quantities reused across many pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneEmbedding {
    /// Padded node embeddings.
    pub h: Tensor,
    /// Alignment features of the padded rows.
    pub a: Tensor,
    pub n: usize,
}

pub struct BoundBackbone<'t> {
    encoder: BoundEncoder<'t>,
    align: BoundMlp<'t>,
    temp: f64,
    iters: usize,
}

impl BackboneParams {
    pub fn new<R: Rng>(config: &BackboneConfig, rng: &mut R) -> Self {
        Self {
            encoder: EncoderParams::new(&config.encoder, rng),
            align: Mlp::new(config.encoder.dim_h, config.align_hidden, config.align_out, rng),
            temp: config.temp,
            iters: config.iters,
        }
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundBackbone<'t> {
        BoundBackbone {
            encoder: self.encoder.bind(tape),
            align: self.align.bind(tape),
            temp: self.temp,
            iters: self.iters,
        }
    }

    /// Embeds `g` padded to `g.m()` rows.
    pub fn embed(&self, g: &Graph) -> Result<BackboneEmbedding> {
        let h = self.encoder.encode(g)?;
        let a = self.align.forward(&h.matrix)?;
        Ok(BackboneEmbedding {
            h: h.matrix,
            a,
            n: g.n(),
        })
    }

    /// Soft permutation aligning the query rows to the corpus rows. Both
    /// embeddings must share the padded width.
    pub fn alignment(&self, q: &BackboneEmbedding, c: &BackboneEmbedding) -> Result<Tensor> {
        if q.h.rows() != c.h.rows() {
            return Err(Error::shape("alignment", q.h.shape(), c.h.shape()));
        }
        sinkhorn(&q.a.matmul(&c.a.transpose())?, self.temp, self.iters)
    }

    /// Relevance distance from precomputed embeddings; smaller is more
    /// relevant.
    pub fn distance(&self, q: &BackboneEmbedding, c: &BackboneEmbedding) -> Result<f64> {
        let p = self.alignment(q, c)?;
        hinge_alignment(&q.h, q.n, &p, &c.h)
    }

    /// `d(q, c)` with both graphs padded to the larger width.
    pub fn align_distance(&self, q: &Graph, c: &Graph) -> Result<f64> {
        let m = q.m().max(c.m());
        self.distance(&self.embed(&q.padded(m)?)?, &self.embed(&c.padded(m)?)?)
    }
}

impl<'t> BoundBackbone<'t> {
    pub fn encode(&self, g: &Graph) -> Result<Var<'t>> {
        self.encoder.encode(g)
    }

    /// Differentiable distance between unpadded embeddings `hq: nq x h` and
    /// `hc: nc x h`, both padded to `m` rows.
    pub fn distance(&self, hq: Var<'t>, hc: Var<'t>, m: usize) -> Result<Var<'t>> {
        let nq = hq.shape().0;
        let hq = hq.pad_rows(m);
        let hc = hc.pad_rows(m);
        let logits = self.align.forward(hq)?.matmul(self.align.forward(hc)?.transpose())?;
        let p = sinkhorn_var(logits, self.temp, self.iters)?;
        let rows: Vec<usize> = (0..nq).collect();
        Ok(hq.sub(p.matmul(hc)?)?.gather_rows(&rows)?.hinge().sum())
    }
}

impl Parameterized for BackboneParams {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.encoder.params();
        p.extend(self.align.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.encoder.params_mut();
        p.extend(self.align.params_mut());
        p
    }
}

impl RankingModel for BackboneParams {
    fn query_loss<'t>(&self, tape: &'t Tape, dataset: &Dataset, batch: &QueryBatch, margin: f64) -> Result<Var<'t>> {
        let bound = self.bind(tape);
        let m = dataset.width();
        let hq = bound.encode(&dataset.queries[batch.query as usize])?;
        let dist = |ids: &[u32]| -> Result<Vec<Var<'t>>> {
            ids.iter()
                .map(|&c| bound.distance(hq, bound.encode(&dataset.corpus[c as usize])?, m))
                .collect()
        };
        pairwise_hinge(&dist(&batch.positives)?, &dist(&batch.negatives)?, margin)
    }
}

/// Orders candidate ids by ascending distance, ties by ascending id.
pub fn rerank(candidates: &[u32], distance: impl Fn(u32) -> f64) -> Vec<u32> {
    let mut scored: Vec<(f64, u32)> = candidates.iter().map(|&c| (distance(c), c)).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, c)| c).collect()
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn random(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::new(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
    }

    #[test]
    fn equal_logits_give_uniform_plan() {
        let p = sinkhorn(&Tensor::full(3, 3, 0.7), 0.1, 10).unwrap();
        assert!(p.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn sinkhorn_rejects_bad_arguments() {
        assert!(sinkhorn(&Tensor::zeros(2, 3), 0.1, 10).is_err());
        assert!(sinkhorn(&Tensor::zeros(2, 2), 0.0, 10).is_err());
        assert!(sinkhorn(&Tensor::zeros(2, 2), 0.1, 0).is_err());
    }

    #[test]
    fn huge_logits_do_not_overflow() {
        let logits = Tensor::from_rows(&[vec![500.0, -500.0], vec![-500.0, 500.0]]).unwrap();
        let p = sinkhorn(&logits, 0.1, 10).unwrap();
        assert!(p.data().iter().all(|v| v.is_finite()));
        assert!((p.get(0, 0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tape_and_plain_sinkhorn_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let logits = random(6, 6, 1.0, &mut rng);
        let tape = Tape::new();
        let p = sinkhorn_var(tape.constant(logits.clone()), 0.1, 10).unwrap().value();
        assert!(p.max_abs_diff(&sinkhorn(&logits, 0.1, 10).unwrap()) < 1e-14);
    }

    #[test]
    fn zero_query_embedding_with_nonnegative_corpus_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let hc = random(4, 3, 1.0, &mut rng).map(f64::abs);
        let p = sinkhorn(&random(4, 4, 1.0, &mut rng), 0.1, 10).unwrap();
        assert_eq!(hinge_alignment(&Tensor::zeros(4, 3), 4, &p, &hc).unwrap(), 0.0);
    }

    #[test]
    fn exact_alignment_gives_zero() {
        // H_q is a row permutation of H_c and the logits favour that
        // permutation strongly, so P is (numerically) the permutation.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let hc = random(3, 2, 1.0, &mut rng);
        let perm = [2, 0, 1];
        let hq = Tensor::from_rows(&perm.iter().map(|&j| hc.row(j).to_vec()).collect::<Vec<_>>()).unwrap();
        let mut logits = Tensor::zeros(3, 3);
        for (i, &j) in perm.iter().enumerate() {
            logits.set(i, j, 10.0);
        }
        let p = sinkhorn(&logits, 0.1, 10).unwrap();
        assert!(hinge_alignment(&hq, 3, &p, &hc).unwrap() < 1e-12);
    }

    #[test]
    fn distance_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let params = BackboneParams::new(&BackboneConfig::default(), &mut rng);
        let q = Graph::from_edges(0, 4, &[(0, 1), (1, 2), (2, 3)]).unwrap().padded(6).unwrap();
        let c = Graph::from_edges(1, 6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0)]).unwrap();
        let eq = params.embed(&q).unwrap();
        let ec = params.embed(&c).unwrap();
        let (m, dh, da) = (6, 10, 25);

        // Affinities, exponentials and normalizations written out by hand.
        let mut p = vec![vec![0.0; m]; m];
        let mut max = f64::NEG_INFINITY;
        for i in 0..m {
            for j in 0..m {
                let s: f64 = (0..da).map(|k| eq.a.get(i, k) * ec.a.get(j, k)).sum();
                p[i][j] = s;
                max = max.max(s);
            }
        }
        for row in p.iter_mut() {
            for v in row.iter_mut() {
                *v = ((*v - max) / 0.1).exp();
            }
        }
        for _ in 0..10 {
            for j in 0..m {
                let s: f64 = (0..m).map(|i| p[i][j]).sum();
                for row in p.iter_mut() {
                    row[j] /= s;
                }
            }
            for row in p.iter_mut() {
                let s: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        let mut expected = 0.0;
        for u in 0..4 {
            for k in 0..dh {
                let ph: f64 = (0..m).map(|v| p[u][v] * ec.h.get(v, k)).sum();
                expected += (eq.h.get(u, k) - ph).max(0.0);
            }
        }
        let got = params.align_distance(&q, &c).unwrap();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");

        let tape = Tape::new();
        let b = params.bind(&tape);
        let qq = Graph::from_edges(0, 4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let d = b.distance(b.encode(&qq).unwrap(), b.encode(&c).unwrap(), 6).unwrap();
        assert!((d.item() - expected).abs() < 1e-10);
    }

    #[test]
    fn distance_is_asymmetric_and_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = BackboneParams::new(&BackboneConfig::default(), &mut rng);
        let a = Graph::from_edges(0, 3, &[(0, 1), (1, 2)]).unwrap();
        let b = Graph::from_edges(1, 5, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)]).unwrap();
        let ab = params.align_distance(&a, &b).unwrap();
        let ba = params.align_distance(&b, &a).unwrap();
        assert!(ab >= 0.0 && ba >= 0.0);
        assert!((ab - ba).abs() > 1e-9);
    }

    #[test]
    fn rerank_orders_by_distance_then_id() {
        assert_eq!(rerank(&[4], |_| 1.0), vec![4]);
        let d = |c: u32| [0.1, 0.9, 0.1][c as usize];
        assert_eq!(rerank(&[1, 2, 0], d), vec![0, 2, 1]);
    }
}
