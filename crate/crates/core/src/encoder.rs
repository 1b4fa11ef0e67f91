//! Message-passing node encoder shared by the tokenizer and the backbone.
//!
//! ```text
//! h_0(u)     = F1(feature(u))
//! h_{k+1}(u) = F3(h_k(u); sum over neighbours v of F2(h_k(u), h_k(v)))
//! ```
//!
//! F2 is a propagator layer followed by a gated recurrent cell whose state is
//! the receiving node's embedding; F3 is a linear-ReLU-linear aggregator over
//! `[h_k(u), message sum]`. Nodes carry a constant feature vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::nn::{BoundGru, BoundLinear, BoundMlp};
use crate::diff::{GruCell, Linear, Mlp, Parameterized, Tape, Tensor, Var};
use crate::error::Result;
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub feature_dim: usize,
    pub dim_h: usize,
    pub prop_hidden: usize,
    pub agg_hidden: usize,
    pub layers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            feature_dim: 1,
            dim_h: 10,
            prop_hidden: 20,
            agg_hidden: 20,
            layers: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub layers: usize,
    pub init: Linear,
    pub propagate: Linear,
    pub gru: GruCell,
    pub combine: Mlp,
}

/// Per-node embeddings padded to the graph's width; padded rows are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEmbeddings {
    pub matrix: Tensor,
    pub n: usize,
}

impl NodeEmbeddings {
    /// The `n x dim` block of real nodes.
    pub fn real(&self) -> Tensor {
        self.matrix.slice_rows(0, self.n)
    }
}

pub struct BoundEncoder<'t> {
    layers: usize,
    feature_dim: usize,
    dim_h: usize,
    init: BoundLinear<'t>,
    propagate: BoundLinear<'t>,
    gru: BoundGru<'t>,
    combine: BoundMlp<'t>,
}

impl EncoderParams {
    pub fn new<R: Rng>(config: &EncoderConfig, rng: &mut R) -> Self {
        let h = config.dim_h;
        Self {
            layers: config.layers,
            init: Linear::new(config.feature_dim, h, rng),
            propagate: Linear::new(2 * h, config.prop_hidden, rng),
            gru: GruCell::new(config.prop_hidden, h, rng),
            combine: Mlp::new(2 * h, config.agg_hidden, h, rng),
        }
    }

    pub fn dim_h(&self) -> usize {
        self.init.output_dim()
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundEncoder<'t> {
        BoundEncoder {
            layers: self.layers,
            feature_dim: self.init.input_dim(),
            dim_h: self.dim_h(),
            init: self.init.bind(tape),
            propagate: self.propagate.bind(tape),
            gru: self.gru.bind(tape),
            combine: self.combine.bind(tape),
        }
    }

    /// Embeds `g` without recording gradients.
    pub fn encode(&self, g: &Graph) -> Result<NodeEmbeddings> {
        let tape = Tape::new();
        let h = self.bind(&tape).encode(g)?;
        Ok(NodeEmbeddings {
            matrix: h.value().pad_rows(g.m()),
            n: g.n(),
        })
    }
}

impl<'t> BoundEncoder<'t> {
    /// `n x dim_h` embeddings of the real nodes of `g`.
    pub fn encode(&self, g: &Graph) -> Result<Var<'t>> {
        let tape = self.init.tape();
        let n = g.n();
        let features = tape.constant(Tensor::full(n, self.feature_dim, 1.0));
        let mut h = self.init.forward(features)?;
        let (recv, send) = g.directed_edges();
        for _ in 0..self.layers {
            let messages = if recv.is_empty() {
                tape.constant(Tensor::zeros(n, self.dim_h))
            } else {
                let own = h.gather_rows(&recv)?;
                let other = h.gather_rows(&send)?;
                let prop = self.propagate.forward(own.concat_cols(other)?)?.relu();
                self.gru.forward(prop, own)?.scatter_add_rows(&recv, n)?
            };
            h = self.combine.forward(h.concat_cols(messages)?)?;
        }
        Ok(h)
    }
}

impl Parameterized for EncoderParams {
    fn params(&self) -> Vec<&Tensor> {
        let mut p = self.init.params();
        p.extend(self.propagate.params());
        p.extend(self.gru.params());
        p.extend(self.combine.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut p = self.init.params_mut();
        p.extend(self.propagate.params_mut());
        p.extend(self.gru.params_mut());
        p.extend(self.combine.params_mut());
        p
    }
}
