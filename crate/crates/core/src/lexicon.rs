//! Discrete tokens and per-graph token multisets.
//!
//! Bit `d` of a token is the thresholded code dimension `d`; dimension 0 is
//! the most significant bit.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::tokenizer::{Side, SoftCodes, TokenizerParams};

pub type Token = u32;

/// Widest supported code.
pub const MAX_BITS: usize = 24;

pub fn check_token(token: Token, bits: usize) -> Result<()> {
    if bits > MAX_BITS || (token as u64) >> bits != 0 {
        return Err(Error::TokenOutOfRange {
            token,
            bits: bits as u32,
        });
    }
    Ok(())
}

/// Token of a code row: bit `d` is set iff `row[d] > 0.5`.
pub fn token_of(row: &[f64]) -> Token {
    row.iter().fold(0, |t, &v| (t << 1) | Token::from(v > 0.5))
}

/// The `bits` binary digits of `token` as `0.0`/`1.0`, most significant first.
pub fn token_bits(token: Token, bits: usize) -> Vec<f64> {
    (0..bits).map(|d| f64::from((token >> (bits - 1 - d)) & 1)).collect()
}

/// One token per real node.
pub fn discretize(z: &SoftCodes) -> Vec<Token> {
    (0..z.n).map(|u| token_of(z.matrix.row(u))).collect()
}

/// Tokens of a graph with multiplicities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMultiset {
    pub graph: u32,
    pub counts: BTreeMap<Token, u32>,
}

impl TokenMultiset {
    pub fn from_tokens(graph: u32, tokens: &[Token]) -> Self {
        let mut counts = BTreeMap::new();
        for &t in tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
        Self { graph, counts }
    }

    /// Distinct tokens in ascending order.
    pub fn unique(&self) -> Vec<Token> {
        self.counts.keys().copied().collect()
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn multiplicity(&self, token: Token) -> u32 {
        self.counts.get(&token).copied().unwrap_or(0)
    }
}

/// Debug dump: `gid: tok×mult tok×mult ...`.
impl fmt::Display for TokenMultiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.graph)?;
        for (t, m) in &self.counts {
            write!(f, " {t}×{m}")?;
        }
        Ok(())
    }
}

impl FromStr for TokenMultiset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |reason: String| Error::Corrupt {
            what: "token dump",
            reason,
        };
        let (gid, rest) = s.split_once(':').ok_or_else(|| bad(format!("missing `:` in `{s}`")))?;
        let graph = gid.trim().parse().map_err(|e| bad(format!("graph id `{gid}`: {e}")))?;
        let mut counts = BTreeMap::new();
        for item in rest.split_whitespace() {
            let (t, m) = item.split_once('×').ok_or_else(|| bad(format!("entry `{item}`")))?;
            let t: Token = t.parse().map_err(|e| bad(format!("token `{t}`: {e}")))?;
            let m: u32 = m.parse().map_err(|e| bad(format!("multiplicity `{m}`: {e}")))?;
            if m == 0 || counts.insert(t, m).is_some() {
                return Err(bad(format!("entry `{item}` repeats a token or has zero multiplicity")));
            }
        }
        Ok(Self { graph, counts })
    }
}

pub fn tokenize_graph(params: &TokenizerParams, g: &Graph, side: Side) -> Result<TokenMultiset> {
    let z = params.soft_encode(g, side)?;
    Ok(TokenMultiset::from_tokens(g.id(), &discretize(&z)))
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::diff::Tensor;
    use crate::tokenizer::TokenizerConfig;

    #[test]
    fn all_high_codes_give_all_ones() {
        let z = SoftCodes::new(Tensor::full(3, 10, 0.9), 3).unwrap();
        assert_eq!(discretize(&z), vec![1023; 3]);
    }

    #[test]
    fn threshold_is_strict_and_padding_is_dropped() {
        let mut m = Tensor::full(3, 4, 0.2);
        m.set(0, 0, 0.5);
        m.set(1, 0, 0.5000001);
        m.set(2, 3, 0.9);
        let z = SoftCodes::new(m, 2).unwrap();
        assert_eq!(discretize(&z), vec![0, 0b1000]);
    }

    #[test]
    fn discretize_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<f64> = (0..7 * 10).map(|_| rng.gen_range(0.0..1.0)).collect();
        let z = SoftCodes::new(Tensor::new(7, 10, data.clone()).unwrap(), 7).unwrap();
        let tokens = discretize(&z);
        for u in 0..7 {
            let mut t = 0u32;
            for d in 0..10 {
                if data[u * 10 + d] > 0.5 {
                    t += 1 << (9 - d);
                }
            }
            assert_eq!(tokens[u], t);
            let bits = token_bits(t, 10);
            for d in 0..10 {
                assert_eq!(bits[d] == 1.0, data[u * 10 + d] > 0.5);
            }
        }
    }

    #[test]
    fn collapsed_nodes_share_one_token() {
        let ms = TokenMultiset::from_tokens(4, &[17, 17, 17]);
        assert_eq!(ms.unique(), vec![17]);
        assert_eq!(ms.multiplicity(17), 3);
        assert_eq!(ms.total(), 3);
    }

    #[test]
    fn relabelled_graphs_get_equal_multisets() {
        let p = TokenizerParams::new(&TokenizerConfig::default(), &mut ChaCha8Rng::seed_from_u64(3));
        let g = Graph::from_edges(0, 6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (1, 4)]).unwrap();
        let h = g.relabel(&[3, 5, 0, 1, 4, 2]).unwrap();
        let a = tokenize_graph(&p, &g, Side::Corpus).unwrap();
        let b = tokenize_graph(&p, &h, Side::Corpus).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.total(), 6);
    }

    #[test]
    fn dump_round_trips() {
        let ms = TokenMultiset::from_tokens(12, &[5, 9, 5, 1023]);
        let line = ms.to_string();
        assert_eq!(line, "12: 5×2 9×1 1023×1");
        assert_eq!(line.parse::<TokenMultiset>().unwrap(), ms);
        assert!("3 5×1".parse::<TokenMultiset>().is_err());
        assert!("3: 5×0".parse::<TokenMultiset>().is_err());
    }

    #[test]
    fn token_range_check() {
        assert!(check_token(1023, 10).is_ok());
        assert!(matches!(check_token(1024, 10), Err(Error::TokenOutOfRange { .. })));
    }
}
