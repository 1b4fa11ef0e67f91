//! Inverted index from tokens to corpus graphs, and corpus statistics.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lexicon::{check_token, Token, TokenMultiset, MAX_BITS};

/// Corpus graph id to score; ids never reached by a posting list are absent.
pub type ScoreMap = BTreeMap<u32, f64>;

const MAGIC: &[u8; 4] = b"CGII";
const VERSION: u32 = 1;

/// Token-to-graph postings. Membership is Boolean: multiplicities are
/// dropped when a graph is indexed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvertedIndex {
    bits: usize,
    postings: Vec<Vec<u32>>,
    /// `(graph id, distinct tokens)` sorted by id.
    docs: Vec<(u32, Vec<Token>)>,
}

impl InvertedIndex {
    pub fn build(bits: usize, corpus: &[TokenMultiset]) -> Result<Self> {
        if bits == 0 || bits > MAX_BITS {
            return Err(Error::Config(format!("code width {bits} outside 1..={MAX_BITS}")));
        }
        let mut docs: Vec<(u32, Vec<Token>)> = Vec::with_capacity(corpus.len());
        for ms in corpus {
            let unique = ms.unique();
            for &t in &unique {
                check_token(t, bits)?;
            }
            docs.push((ms.graph, unique));
        }
        docs.sort_unstable_by_key(|d| d.0);
        if let Some(w) = docs.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::DuplicateId(w[0].0));
        }

        // Chunks are id-ordered, so concatenating per-chunk lists in chunk
        // order keeps every posting list sorted.
        let vocab = 1usize << bits;
        let chunk = docs.len().div_ceil(rayon::current_num_threads().max(1)).max(1);
        let partial: Vec<Vec<Vec<u32>>> = docs
            .par_chunks(chunk)
            .map(|part| {
                let mut lists = vec![Vec::new(); vocab];
                for (id, tokens) in part {
                    for &t in tokens {
                        lists[t as usize].push(*id);
                    }
                }
                lists
            })
            .collect();
        let mut postings = vec![Vec::new(); vocab];
        for lists in partial {
            for (dst, src) in postings.iter_mut().zip(lists) {
                dst.extend(src);
            }
        }
        Ok(Self { bits, postings, docs })
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn vocab_size(&self) -> usize {
        self.postings.len()
    }

    /// Number of indexed graphs.
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn posting(&self, token: Token) -> &[u32] {
        self.postings.get(token as usize).map_or(&[], Vec::as_slice)
    }

    pub fn docs(&self) -> &[(u32, Vec<Token>)] {
        &self.docs
    }

    /// Distinct tokens of graph `id`.
    pub fn doc_tokens(&self, id: u32) -> Option<&[Token]> {
        self.docs
            .binary_search_by_key(&id, |d| d.0)
            .ok()
            .map(|i| self.docs[i].1.as_slice())
    }

    pub fn total_postings(&self) -> usize {
        self.postings.iter().map(Vec::len).sum()
    }

    /// Approximate heap footprint in bytes.
    pub fn heap_bytes(&self) -> usize {
        let lists: usize = self.postings.iter().map(|p| p.capacity() * 4 + 24).sum();
        let docs: usize = self.docs.iter().map(|d| d.1.capacity() * 4 + 32).sum();
        lists + docs
    }

    /// Sums `weight` into every graph on the posting list of each `(token,
    /// weight)` term.
    pub fn accumulate(&self, terms: impl IntoIterator<Item = (Token, f64)>) -> Result<ScoreMap> {
        let size = self.docs.last().map_or(0, |d| d.0 as usize + 1);
        let mut acc = vec![0.0; size];
        let mut hit = vec![false; size];
        for (t, w) in terms {
            check_token(t, self.bits)?;
            for &c in &self.postings[t as usize] {
                acc[c as usize] += w;
                hit[c as usize] = true;
            }
        }
        Ok(hit
            .iter()
            .enumerate()
            .filter(|(_, &h)| h)
            .map(|(c, _)| (c as u32, acc[c]))
            .collect())
    }

    /// Every query node contributes 1 to each graph containing its token.
    pub fn score_uniform(&self, query: &TokenMultiset) -> Result<ScoreMap> {
        self.accumulate(query.counts.iter().map(|(&t, &m)| (t, f64::from(m))))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.total_postings() * 2);
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.bits as u32, self.docs.len() as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for list in &self.postings {
            write_varint(&mut out, list.len() as u64);
            let mut prev = 0u32;
            for (i, &id) in list.iter().enumerate() {
                let delta = if i == 0 { id } else { id - prev };
                write_varint(&mut out, u64::from(delta));
                prev = id;
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |reason: String| Error::Corrupt { what: "index", reason };
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(bad("missing CGII header".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        let (version, bits, count) = (word(0), word(1) as usize, word(2) as usize);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        if bits == 0 || bits > MAX_BITS {
            return Err(bad(format!("code width {bits}")));
        }
        let mut pos = 16;
        let mut postings = Vec::with_capacity(1 << bits);
        let mut by_doc: BTreeMap<u32, Vec<Token>> = BTreeMap::new();
        for t in 0..1u32 << bits {
            let len = read_varint(bytes, &mut pos).ok_or_else(|| bad(format!("truncated at token {t}")))?;
            let mut list = Vec::with_capacity(len as usize);
            let mut prev = 0u64;
            for i in 0..len {
                let delta = read_varint(bytes, &mut pos).ok_or_else(|| bad(format!("truncated in token {t}")))?;
                if i > 0 && delta == 0 {
                    return Err(bad(format!("posting list of token {t} is not strictly increasing")));
                }
                let id = if i == 0 { delta } else { prev + delta };
                let id32 = u32::try_from(id).map_err(|_| bad(format!("graph id {id} overflows")))?;
                list.push(id32);
                by_doc.entry(id32).or_default().push(t);
                prev = id;
            }
            postings.push(list);
        }
        if pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - pos)));
        }
        if by_doc.len() != count {
            return Err(bad(format!("header declares {count} graphs, postings reach {}", by_doc.len())));
        }
        Ok(Self {
            bits,
            postings,
            docs: by_doc.into_iter().collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn write_varint(out: &mut Vec<u8>, mut v: u64) {
    while v >= 0x80 {
        out.push((v as u8) | 0x80);
        v >>= 7;
    }
    out.push(v as u8);
}

fn read_varint(bytes: &[u8], pos: &mut usize) -> Option<u64> {
    let mut v = 0u64;
    for shift in (0..64).step_by(7) {
        let b = *bytes.get(*pos)?;
        *pos += 1;
        v |= u64::from(b & 0x7f) << shift;
        if b & 0x80 == 0 {
            return Some(v);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    /// Posting lengths of non-empty tokens, descending.
    pub token_rank: Vec<usize>,
    /// Distinct-token counts per graph, descending.
    pub doc_rank: Vec<usize>,
    /// Non-empty tokens in ascending order; rows and columns of `cooc`.
    pub tokens: Vec<Token>,
    /// `cooc[i][j] = |pl(tokens[i]) ∩ pl(tokens[j])|`.
    pub cooc: Vec<Vec<u32>>,
    /// Singular values of the token-by-graph posting matrix, descending.
    pub singular_values: Vec<f64>,
    pub gamma: f64,
    pub effective_rank: usize,
    pub rank: usize,
}

/// Rank tables, co-occurrence counts and the singular spectrum of the
/// posting matrix. The spectrum comes from the eigenvalues of the Gram
/// matrix `PL PL^T`, which is exactly the co-occurrence matrix.
pub fn compute_stats(index: &InvertedIndex, gamma: f64) -> Result<CorpusStats> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::EnergyThreshold(gamma));
    }
    let tokens: Vec<Token> = (0..index.vocab_size() as Token)
        .filter(|&t| !index.posting(t).is_empty())
        .collect();
    let mut token_rank: Vec<usize> = tokens.iter().map(|&t| index.posting(t).len()).collect();
    token_rank.sort_unstable_by(|a, b| b.cmp(a));
    let mut doc_rank: Vec<usize> = index.docs().iter().map(|d| d.1.len()).collect();
    doc_rank.sort_unstable_by(|a, b| b.cmp(a));

    let mut slot = vec![usize::MAX; index.vocab_size()];
    for (i, &t) in tokens.iter().enumerate() {
        slot[t as usize] = i;
    }
    let k = tokens.len();
    let mut cooc = vec![vec![0u32; k]; k];
    for (_, doc) in index.docs() {
        for &a in doc {
            for &b in doc {
                cooc[slot[a as usize]][slot[b as usize]] += 1;
            }
        }
    }

    let gram = DMatrix::from_fn(k, k, |i, j| f64::from(cooc[i][j]));
    let mut eig: Vec<f64> = if k == 0 {
        Vec::new()
    } else {
        gram.symmetric_eigenvalues().iter().map(|&l| l.max(0.0)).collect()
    };
    eig.sort_unstable_by(|a, b| b.total_cmp(a));
    let singular_values: Vec<f64> = eig.iter().map(|l| l.sqrt()).collect();

    let energy: f64 = eig.iter().sum();
    let tol = eig.first().copied().unwrap_or(0.0) * k.max(index.len()) as f64 * f64::EPSILON;
    let rank = eig.iter().filter(|&&l| l > tol).count();
    let mut effective_rank = 0;
    let mut acc = 0.0;
    for &l in &eig {
        if energy <= 0.0 {
            break;
        }
        acc += l;
        effective_rank += 1;
        if acc / energy > gamma {
            break;
        }
    }
    Ok(CorpusStats {
        token_rank,
        doc_rank,
        tokens,
        cooc,
        singular_values,
        gamma,
        effective_rank,
        rank,
    })
}

impl CorpusStats {
    /// Writes `token_rank.csv`, `doc_rank.csv` and `spectrum.csv` into `dir`.
    pub fn write_csvs(&self, dir: &Path) -> Result<()> {
        let table = |name: &str, header: &str, rows: Vec<String>| -> Result<()> {
            let mut f = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
            writeln!(f, "{header}")?;
            for r in rows {
                writeln!(f, "{r}")?;
            }
            f.flush()?;
            Ok(())
        };
        let ranked = |v: &[usize]| v.iter().enumerate().map(|(i, x)| format!("{},{x}", i + 1)).collect();
        table("token_rank.csv", "rank,length", ranked(&self.token_rank))?;
        table("doc_rank.csv", "rank,fill", ranked(&self.doc_rank))?;
        table(
            "spectrum.csv",
            "i,sigma",
            self.singular_values
                .iter()
                .enumerate()
                .map(|(i, s)| format!("{},{s}", i + 1))
                .collect(),
        )
    }
}
