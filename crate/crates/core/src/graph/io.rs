//! On-disk formats: JSONL graphs, a labels file, a JSON manifest tying them
//! together, and a converter for TU-style edge-list directories.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Graph, Split};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct GraphRecord {
    id: u32,
    n: usize,
    edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub train: Vec<u32>,
    pub dev: Vec<u32>,
    pub test: Vec<u32>,
}

/// `manifest.json`; paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub corpus: PathBuf,
    pub queries: PathBuf,
    pub labels: PathBuf,
    pub split: SplitRecord,
}

pub fn write_graphs_jsonl(path: &Path, graphs: &[Graph]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for g in graphs {
        let rec = GraphRecord {
            id: g.id(),
            n: g.n(),
            edges: g.edges().into_iter().map(|(u, v)| [u, v]).collect(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_graphs_jsonl(path: &Path) -> Result<Vec<Graph>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let rec: GraphRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        for &[u, v] in &rec.edges {
            if u >= rec.n || v >= rec.n {
                return Err(Error::DanglingEndpoint {
                    id: rec.id,
                    u,
                    v,
                    n: rec.n,
                });
            }
            if u >= v {
                return Err(parse_err(format!("graph {}: edge ({u}, {v}) must satisfy u < v", rec.id)));
            }
        }
        let edges: Vec<_> = rec.edges.iter().map(|&[u, v]| (u, v)).collect();
        out.push(Graph::from_edges(rec.id, rec.n, &edges)?);
    }
    Ok(out)
}

fn write_labels(path: &Path, labels: &[Vec<u32>]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for (q, rel) in labels.iter().enumerate() {
        write!(w, "{q}:")?;
        for c in rel {
            write!(w, " {c}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn read_labels(path: &Path, num_queries: usize) -> Result<Vec<Vec<u32>>> {
    let text = fs::read_to_string(path)?;
    let mut labels = vec![Vec::new(); num_queries];
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let (q, rest) = line.split_once(':').ok_or_else(|| parse_err("expected `qid: cid ...`".into()))?;
        let q: usize = q.trim().parse().map_err(|e| parse_err(format!("query id: {e}")))?;
        if q >= num_queries {
            return Err(parse_err(format!("query id {q} out of range")));
        }
        labels[q] = rest
            .split_whitespace()
            .map(|t| t.parse().map_err(|e| parse_err(format!("corpus id `{t}`: {e}"))))
            .collect::<Result<_>>()?;
    }
    Ok(labels)
}

/// Writes `corpus.jsonl`, `queries.jsonl`, `labels.txt` and `manifest.json`
/// into `dir`.
pub fn save_corpus(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        corpus: "corpus.jsonl".into(),
        queries: "queries.jsonl".into(),
        labels: "labels.txt".into(),
        split: SplitRecord {
            train: dataset.split.train.clone(),
            dev: dataset.split.dev.clone(),
            test: dataset.split.test.clone(),
        },
    };
    write_graphs_jsonl(&dir.join(&manifest.corpus), &dataset.corpus)?;
    write_graphs_jsonl(&dir.join(&manifest.queries), &dataset.queries)?;
    write_labels(&dir.join(&manifest.labels), &dataset.labels)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Loads a dataset from a manifest file, a directory holding
/// `manifest.json`, or a TU-style directory (corpus only).
pub fn load_corpus(path: &Path) -> Result<Dataset> {
    let manifest_path = if path.is_dir() {
        let m = path.join("manifest.json");
        if !m.exists() {
            return load_tu_dir(path);
        }
        m
    } else {
        path.to_path_buf()
    };
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    let corpus = read_graphs_jsonl(&base.join(&manifest.corpus))?;
    let queries = read_graphs_jsonl(&base.join(&manifest.queries))?;
    let labels = read_labels(&base.join(&manifest.labels), queries.len())?;
    let split = Split {
        train: manifest.split.train,
        dev: manifest.split.dev,
        test: manifest.split.test,
    };
    Dataset::new(corpus, queries, labels, split)
}

/// Converts a TU benchmark directory (`*_A.txt` with 1-based `i, j` node
/// pairs and `*_graph_indicator.txt` with the 1-based graph of each node)
/// into a corpus-only dataset.
pub fn load_tu_dir(dir: &Path) -> Result<Dataset> {
    let find = |suffix: &str| -> Result<PathBuf> {
        let mut hits: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_name().and_then(|f| f.to_str()).is_some_and(|f| f.ends_with(suffix)))
            .collect();
        hits.sort();
        hits.into_iter().next().ok_or_else(|| {
            Error::Config(format!("{}: no *{suffix} file", dir.display()))
        })
    };
    let indicator_path = find("_graph_indicator.txt")?;
    let adj_path = find("_A.txt")?;

    let mut graph_of = Vec::new();
    for (i, line) in fs::read_to_string(&indicator_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let g: usize = line.trim().parse().map_err(|e| Error::Parse {
            path: indicator_path.clone(),
            line: i + 1,
            reason: format!("{e}"),
        })?;
        if g == 0 {
            return Err(Error::Parse {
                path: indicator_path.clone(),
                line: i + 1,
                reason: "graph ids are 1-based".into(),
            });
        }
        graph_of.push(g - 1);
    }
    let num_graphs = graph_of.iter().max().map_or(0, |g| g + 1);
    let mut first = vec![usize::MAX; num_graphs];
    let mut size = vec![0usize; num_graphs];
    for (node, &g) in graph_of.iter().enumerate() {
        first[g] = first[g].min(node);
        size[g] += 1;
    }

    let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_graphs];
    for (i, line) in fs::read_to_string(&adj_path)?.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |reason: String| Error::Parse {
            path: adj_path.clone(),
            line: i + 1,
            reason,
        };
        let (a, b) = line.split_once(',').ok_or_else(|| parse_err("expected `i, j`".into()))?;
        let a: usize = a.trim().parse().map_err(|e| parse_err(format!("{e}")))?;
        let b: usize = b.trim().parse().map_err(|e| parse_err(format!("{e}")))?;
        if a == 0 || b == 0 || a > graph_of.len() || b > graph_of.len() {
            return Err(parse_err(format!("node id out of range in ({a}, {b})")));
        }
        let (a, b) = (a - 1, b - 1);
        let g = graph_of[a];
        let (u, v) = (a - first[g], b.wrapping_sub(first[g]));
        if graph_of[b] != g || v >= size[g] {
            return Err(Error::DanglingEndpoint {
                id: g as u32,
                u,
                v,
                n: size[g],
            });
        }
        if u != v {
            edges[g].push((u.min(v), u.max(v)));
        }
    }
    let corpus = edges
        .iter()
        .enumerate()
        .map(|(g, e)| Graph::from_edges(g as u32, size[g], e))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(corpus, Vec::new(), Vec::new(), Split::default())
}
