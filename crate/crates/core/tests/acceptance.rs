//! Acceptance suite. Each test prints one `acceptance NN PASS|FAIL` line to
//! stderr (uncaptured) and then asserts it.
//!
//! Criteria 2, 5, 7, 8 and 10 share one full desk run (2000 graphs, 50
//! queries, seed 42) written under the cargo target tmp dir.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use corgii::diff::Tensor;
use corgii::graph::{generate_dataset, small_pairs, Dataset, GenConfig};
use corgii::harness::pipeline::Prepared;
use corgii::harness::{average_precision, interpolate_map, run_pipeline, Artifacts, Bundle, Config, TradeoffReport};
use corgii::impact::{ImpactContext, ImpactInput, ImpactObjective, ImpactParams, ImpactTrainer, QueryArtifacts};
use corgii::index::{compute_stats, InvertedIndex, ScoreMap};
use corgii::lexicon::{tokenize_graph, Token, TokenMultiset};
use corgii::probe::{score, CoocNeighborhoods, Strategy};
use corgii::reranker::{approximation_errors, sinkhorn, BackboneConfig, BackboneParams};
use corgii::tokenizer::{chamfer, CodeDistance, Side, SoftCodes, TokenizerConfig, TokenizerParams};
use corgii::train::{sample_batch, QueryBatch};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "acceptance {id:>2} {} {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(pass, "{line}");
}

struct Desk {
    config: Config,
    art: Artifacts,
    prepared: Prepared,
}

fn run_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn desk_config(name: &str) -> Config {
    Config {
        out_dir: run_dir(name),
        ..Config::default()
    }
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Result<Desk, String>> = OnceLock::new();
    DESK.get_or_init(|| {
        let config = desk_config("run_a");
        let art = run_pipeline(&config).map_err(|e| format!("{e}: {:?}", std::error::Error::source(&e)))?;
        let prepared = Prepared::new(
            art.dataset.as_ref().unwrap(),
            art.backbone.as_ref().unwrap(),
            art.tokenizer.as_ref().unwrap(),
            art.index.as_ref().unwrap(),
            config.impact_input,
        )
        .map_err(|e| e.to_string())?;
        Ok(Desk { config, art, prepared })
    })
    .as_ref()
    .unwrap_or_else(|e| panic!("desk pipeline failed: {e}"))
}

// ---------------------------------------------------------------- 1

fn small_dataset(seed: u64) -> Dataset {
    let config = GenConfig {
        corpus_size: 80,
        num_queries: 10,
        ..GenConfig::default()
    };
    generate_dataset(&config, seed).unwrap()
}

fn batches(d: &Dataset, rng: &mut ChaCha8Rng) -> Vec<QueryBatch> {
    d.split
        .train
        .iter()
        .take(3)
        .filter_map(|&q| sample_batch(d, q, 2, 3, rng))
        .collect()
}

#[test]
fn criterion_01_gradient_suite() {
    let start = std::time::Instant::now();
    let d = small_dataset(11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let b = batches(&d, &mut rng);
    let slices = 24;
    let mut results = Vec::new();

    let backbone = BackboneParams::new(&BackboneConfig::default(), &mut rng);
    results.push(("backbone", common::check_gradients(&common::jitter(&backbone, 0.1, &mut rng), &d, &b, 0.5, slices, &mut rng)));

    for (name, distance) in [("tokenizer/chamfer", CodeDistance::Chamfer), ("tokenizer/injective", CodeDistance::Injective)] {
        let t = TokenizerParams::new(
            &TokenizerConfig {
                distance,
                ..TokenizerConfig::default()
            },
            &mut rng,
        );
        results.push((name, common::check_gradients(&common::jitter(&t, 0.1, &mut rng), &d, &b, 10.0, slices, &mut rng)));
    }

    // Untrained asymmetric heads give queries and graphs disjoint tokens, and
    // unjittered ones send nearly every node to one token. Either way every
    // impact gradient would vanish, so use a jittered siamese tokenizer.
    let mut tokenizer = TokenizerParams::new(&TokenizerConfig::default(), &mut rng);
    tokenizer.corpus_head = None;
    let tokenizer = common::jitter(&tokenizer, 1.0, &mut rng);
    let tokens: Vec<TokenMultiset> = d
        .corpus
        .iter()
        .map(|g| tokenize_graph(&tokenizer, g, Side::Corpus).unwrap())
        .collect();
    let index = InvertedIndex::build(10, &tokens).unwrap();
    let prepared = Prepared::new(&d, &backbone, &tokenizer, &index, ImpactInput::Backbone).unwrap();
    for (name, objective) in [("impact/single", ImpactObjective::Single), ("impact/cooc", ImpactObjective::Cooc)] {
        let ctx = ImpactContext {
            index: &index,
            cooc: &prepared.cooc,
            queries: &prepared.queries,
            objective,
        };
        let trainer = ImpactTrainer {
            params: ImpactParams::new(10, 10, 64, ImpactInput::Backbone, &mut rng),
            ctx: &ctx,
        };
        // A wide margin keeps every hinge active.
        results.push((name, common::check_gradients(&common::jitter(&trainer, 0.1, &mut rng), &d, &b, 10.0, slices, &mut rng)));
    }

    let secs = start.elapsed().as_secs_f64();
    let worst = results.iter().map(|(_, s)| s.max_rel).fold(0.0, f64::max);
    let detail = results
        .iter()
        .map(|(n, s)| format!("{n} {:.1e} (|grad.v| up to {:.1e})", s.max_rel, s.max_abs))
        .join(", ");
    report(
        1,
        "gradient suite",
        worst < 1e-4 && secs < 120.0 && results.iter().all(|(_, s)| s.slices >= 20 && s.max_abs > 1e-3),
        &format!("{slices} slices per loss, max rel err {worst:.2e} ({detail}), {secs:.1}s"),
    );
}

// ---------------------------------------------------------------- 2

/// Tokens within Hamming distance `r` of `t`, by scanning the vocabulary.
fn ball_scan(t: Token, r: usize, bits: usize) -> Vec<Token> {
    (0..1u32 << bits).filter(|&x| (x ^ t).count_ones() as usize <= r).collect()
}

struct Oracle {
    sets: Vec<BTreeSet<Token>>,
    posting: BTreeMap<Token, BTreeSet<u32>>,
    bits: usize,
}

impl Oracle {
    fn new(tokens: &[TokenMultiset], bits: usize) -> Self {
        let sets: Vec<BTreeSet<Token>> = tokens.iter().map(|m| m.counts.keys().copied().collect()).collect();
        let mut posting: BTreeMap<Token, BTreeSet<u32>> = BTreeMap::new();
        for m in tokens {
            for &t in m.counts.keys() {
                posting.entry(t).or_default().insert(m.graph);
            }
        }
        Self { sets, posting, bits }
    }

    fn sim_row(&self, t: Token) -> Vec<(Token, f64)> {
        let Some(pl) = self.posting.get(&t) else {
            return Vec::new();
        };
        let overlap: Vec<(Token, usize)> = (0..1u32 << self.bits)
            .map(|x| (x, self.posting.get(&x).map_or(0, |p| p.intersection(pl).count())))
            .collect();
        let denom: usize = overlap.iter().map(|o| o.1).sum();
        overlap.into_iter().map(|(x, o)| (x, o as f64 / denom as f64)).collect()
    }

    /// `sum over terms of coefficient * weight * [token in graph]` for every
    /// corpus graph.
    fn scores(&self, terms: &[(usize, Token, f64)], weights: &[f64]) -> Vec<f64> {
        self.sets
            .iter()
            .map(|set| {
                terms
                    .iter()
                    .zip(weights)
                    .filter(|((_, t, _), _)| set.contains(t))
                    .map(|((_, _, c), w)| c * w)
                    .sum()
            })
            .collect()
    }

    fn terms(&self, q: &QueryArtifacts, strategy: Strategy) -> Vec<(usize, Token, f64)> {
        let mut out = Vec::new();
        for (u, &t) in q.tokens.iter().enumerate() {
            match strategy {
                Strategy::Single => out.push((u, t, 1.0)),
                Strategy::Hamming { radius } => {
                    out.extend(ball_scan(t, radius, self.bits).into_iter().map(|x| (u, x, 1.0)))
                }
                Strategy::Cooc { expand } => {
                    let mut row = self.sim_row(t);
                    row.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
                    out.extend(row.into_iter().take(expand).map(|(x, s)| (u, x, s)));
                }
            }
        }
        out
    }
}

fn dense(scores: &ScoreMap, n: usize) -> Vec<f64> {
    (0..n as u32).map(|c| scores.get(&c).copied().unwrap_or(0.0)).collect()
}

#[test]
fn criterion_02_oracle_equivalence() {
    // Timed from here: building the shared desk run is not part of this check.
    let desk = desk();
    let start = std::time::Instant::now();
    let index = desk.art.index.as_ref().unwrap();
    let cooc = &desk.prepared.cooc;
    let (impact, impact_cm) = (desk.art.impact.as_ref().unwrap(), desk.art.impact_cm.as_ref().unwrap());
    let n = index.len();
    let oracle = Oracle::new(&desk.art.corpus_tokens, index.bits());
    let queries = &desk.prepared.queries[..20];

    let mut strategies = vec![Strategy::Single];
    strategies.extend([0, 1, 3].map(|radius| Strategy::Hamming { radius }));
    strategies.extend([4, 32].map(|expand| Strategy::Cooc { expand }));

    let mut failures = Vec::new();
    let mut max_weighted = 0.0f64;
    let mut checks = 0;
    for q in queries {
        for &s in &strategies {
            let terms = oracle.terms(q, s);
            let model = if matches!(s, Strategy::Cooc { .. }) { impact_cm } else { impact };
            let weights: Vec<f64> = terms
                .iter()
                .map(|&(u, t, _)| model.weight(t, q.embeddings.row(u)).unwrap())
                .collect();
            for (label, params, expected) in [
                ("unif", None, oracle.scores(&terms, &vec![1.0; terms.len()])),
                ("impact", Some(model), oracle.scores(&terms, &weights)),
            ] {
                let got = dense(&score(index, cooc, s, params, q).unwrap(), n);
                checks += 1;
                let integer = label == "unif" && !matches!(s, Strategy::Cooc { .. });
                if integer {
                    if got != expected {
                        failures.push(format!("q{} {s}_{label}", q.id));
                    }
                } else {
                    let diff = got
                        .iter()
                        .zip(&expected)
                        .map(|(a, b)| (a - b).abs())
                        .fold(0.0, f64::max);
                    max_weighted = max_weighted.max(diff);
                    if diff >= 1e-9 {
                        failures.push(format!("q{} {s}_{label} |d|={diff:.1e}", q.id));
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        2,
        "oracle equivalence",
        failures.is_empty() && secs < 300.0,
        &format!(
            "{} queries x {n} graphs, {checks} score maps, integer scores exact, weighted max |d| {max_weighted:.1e}, {} mismatches{}, {secs:.1}s",
            queries.len(),
            failures.len(),
            if failures.is_empty() { String::new() } else { format!(" ({})", failures.iter().take(5).join("; ")) }
        ),
    );
}

// ---------------------------------------------------------------- 3

#[test]
fn criterion_03_sinkhorn() {
    fn deviation(p: &Tensor) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..p.rows() {
            let row: f64 = (0..p.cols()).map(|j| p.get(i, j)).sum();
            let col: f64 = (0..p.rows()).map(|j| p.get(j, i)).sum();
            worst = worst.max((row - 1.0).abs()).max((col - 1.0).abs());
        }
        worst
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut worst, mut worst_logits, mut within) = (0.0f64, None, 0);
    for _ in 0..1000 {
        let logits = Tensor::new(10, 10, (0..100).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let dev = deviation(&sinkhorn(&logits, 0.1, 10).unwrap());
        within += usize::from(dev <= 1e-3);
        if dev > worst {
            worst = dev;
            worst_logits = Some(logits);
        }
    }
    // Iterations the hardest matrix needs before it meets the tolerance.
    let needed = worst_logits.map_or(0, |l| {
        (10..=5000)
            .step_by(10)
            .find(|&t| deviation(&sinkhorn(&l, 0.1, t).unwrap()) <= 1e-3)
            .unwrap_or(usize::MAX)
    });
    report(
        3,
        "sinkhorn",
        worst <= 1e-3,
        &format!(
            "1000 standard normal 10x10 logits, temp 0.1, T 10: max |sum - 1| = {worst:.2e}, \
             {within}/1000 within 1e-3, hardest matrix needs T = {needed}"
        ),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_chamfer_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let bits = 10;
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for _ in 0..200 {
        let nc = rng.gen_range(1..=7);
        let nq = rng.gen_range(1..=nc);
        let zq = Tensor::new(nq, bits, (0..nq * bits).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let zc = Tensor::new(nc, bits, (0..nc * bits).map(|_| rng.gen::<f64>()).collect()).unwrap();
        let l1 = |u: usize, v: usize| -> f64 { zq.row(u).iter().zip(zc.row(v)).map(|(a, b)| (a - b).abs()).sum() };
        // Every hard permutation of the padded rows; padded query rows are
        // zero and excluded from the cost.
        let best = (0..nc)
            .permutations(nq)
            .map(|img| img.iter().enumerate().map(|(u, &v)| l1(u, v)).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let ch = chamfer(&SoftCodes::new(zq.clone(), nq).unwrap(), &SoftCodes::new(zc.clone(), nc).unwrap()).unwrap();
        min_slack = min_slack.min(best - ch);
        if ch > best {
            violations += 1;
        }
    }
    report(
        4,
        "chamfer lower bound",
        violations == 0,
        &format!("200 pairs with nq <= nc <= 7, {violations} violations, min slack {min_slack:.3e}"),
    );
}

// ---------------------------------------------------------------- 5

#[test]
fn criterion_05_approximation_ordering() {
    let desk = desk();
    let pairs = small_pairs(240, 5).unwrap();
    let r = approximation_errors(&pairs, desk.art.tokenizer.as_ref().unwrap(), desk.art.backbone.as_ref().unwrap())
        .unwrap();
    report(
        5,
        "approximation ordering",
        r.pairs >= 200 && r.mean_chamfer_gap <= r.mean_soft_gap,
        &format!(
            "{} pairs (n <= 8), mean exact {:.4}, mean |exact - chamfer| {:.4} vs mean |exact - soft| {:.4}",
            r.pairs, r.mean_exact, r.mean_chamfer_gap, r.mean_soft_gap
        ),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_06_average_precision() {
    let perfect = average_precision(&[3, 1, 9, 4], &[1, 3]).unwrap();
    let split = average_precision(&[5, 8, 6], &[5, 6]).unwrap();
    let pass = (perfect - 1.0).abs() <= 1e-12 && (split - 5.0 / 6.0).abs() <= 1e-12;
    report(
        6,
        "average precision",
        pass,
        &format!("perfect ranking {perfect}, positives at ranks 1 and 3 of 3 {split:.12}"),
    );
}

// ---------------------------------------------------------------- 7

fn find<'a>(reports: &'a [TradeoffReport], label: &str) -> &'a TradeoffReport {
    reports
        .iter()
        .find(|r| r.label == label)
        .unwrap_or_else(|| panic!("no report {label}"))
}

fn span(r: &TradeoffReport) -> (f64, f64) {
    let lo = r.rows.iter().map(|x| x.kc).fold(f64::INFINITY, f64::min);
    let hi = r.rows.iter().map(|x| x.kc).fold(0.0, f64::max);
    (lo, hi)
}

#[test]
fn criterion_07a_impact_cm_beats_random() {
    let reports = &desk().art.reports;
    let cm = find(reports, "cm_b32_impact");
    let margins: Vec<f64> = cm.rows.iter().zip(&cm.random).map(|(a, b)| a.map - b.map).collect();
    let losing: Vec<String> = cm
        .rows
        .iter()
        .zip(&margins)
        .filter(|(_, &m)| m < -1e-12)
        .map(|(r, m)| format!("kC {:.5} by {:.2e}", r.kc, -m))
        .collect();
    report(
        7,
        "(a) impact CM vs random",
        losing.is_empty(),
        &format!(
            "{} matched points, min margin {:.4}, mean margin {:.4}{}",
            margins.len(),
            margins.iter().copied().fold(f64::INFINITY, f64::min),
            margins.iter().sum::<f64>() / margins.len() as f64,
            if losing.is_empty() { String::new() } else { format!(", below random at {}", losing.join("; ")) }
        ),
    );
}

#[test]
fn criterion_07b_coverage() {
    let reports = &desk().art.reports;
    let (cm_lo, cm_hi) = span(find(reports, "cm_b32_impact"));
    let (cu_lo, cu_hi) = span(find(reports, "cm_b32_unif"));
    let (si_lo, si_hi) = span(find(reports, "single_impact"));
    let (su_lo, su_hi) = span(find(reports, "single_unif"));
    let covers = cm_lo <= 0.05 && cm_hi >= 0.95 && cu_lo <= 0.05 && cu_hi >= 0.95;
    let narrower = si_hi - si_lo < cm_hi - cm_lo && su_hi - su_lo < cu_hi - cu_lo;
    report(
        7,
        "(b) CM coverage",
        covers && narrower,
        &format!(
            "cm impact kC [{cm_lo:.4}, {cm_hi:.4}], cm unif [{cu_lo:.4}, {cu_hi:.4}], single impact [{si_lo:.4}, {si_hi:.4}], single unif [{su_lo:.4}, {su_hi:.4}]"
        ),
    );
}

#[test]
fn criterion_07c_impact_beats_uniform() {
    let reports = &desk().art.reports;
    let imp = find(reports, "cm_b32_impact");
    let uni = find(reports, "cm_b32_unif");
    // Compare at the kC values of both sweeps, interpolating each curve.
    let mut grid: Vec<f64> = imp.rows.iter().chain(&uni.rows).map(|r| r.kc).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let pairs: Vec<(f64, f64, f64)> = grid
        .iter()
        .filter_map(|&k| Some((k, interpolate_map(&imp.rows, k)?, interpolate_map(&uni.rows, k)?)))
        .collect();
    let wins = pairs.iter().filter(|(_, a, b)| a >= b).count();
    let frac = wins as f64 / pairs.len().max(1) as f64;
    let mean: f64 = pairs.iter().map(|(_, a, b)| a - b).sum::<f64>() / pairs.len().max(1) as f64;
    report(
        7,
        "(c) impact CM vs uniform CM",
        frac >= 0.6,
        &format!("impact >= uniform at {wins}/{} shared kC points ({:.0}%), mean MAP margin {mean:.4}", pairs.len(), frac * 100.0),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_index_integrity() {
    let desk = desk();
    let dir = &desk.config.out_dir;
    let index = desk.art.index.as_ref().unwrap();

    let index_bytes = std::fs::read(dir.join("index.bin")).unwrap();
    let loaded = InvertedIndex::from_bytes(&index_bytes).unwrap();
    let index_identical = loaded.to_bytes() == index_bytes && &loaded == index;

    let bundle_bytes = std::fs::read(dir.join("bundle.bin")).unwrap();
    let bundle = Bundle::from_bytes(&bundle_bytes).unwrap();
    let bundle_identical = bundle.to_bytes() == bundle_bytes;
    let impact: ImpactParams = bundle.get("impact").unwrap().unwrap();
    let impact_cm: ImpactParams = bundle.get("impact_cm").unwrap().unwrap();
    let backbone: BackboneParams = bundle.get("backbone").unwrap().unwrap();
    let tokenizer: TokenizerParams = bundle.get("tokenizer").unwrap().unwrap();
    let models_identical = Some(&impact) == desk.art.impact.as_ref()
        && Some(&impact_cm) == desk.art.impact_cm.as_ref()
        && Some(&backbone) == desk.art.backbone.as_ref()
        && Some(&tokenizer) == desk.art.tokenizer.as_ref();

    let cooc = CoocNeighborhoods::new(&loaded);
    let mut same_scores = true;
    for q in &desk.prepared.queries {
        for (s, original, reloaded) in [
            (Strategy::Single, desk.art.impact.as_ref(), Some(&impact)),
            (Strategy::Hamming { radius: 2 }, None, None),
            (Strategy::Cooc { expand: 32 }, desk.art.impact_cm.as_ref(), Some(&impact_cm)),
        ] {
            let a = score(index, &desk.prepared.cooc, s, original, q).unwrap();
            let b = score(&loaded, &cooc, s, reloaded, q).unwrap();
            same_scores &= a == b;
        }
    }

    let postings: usize = (0..index.vocab_size() as Token).map(|t| index.posting(t).len()).sum();
    let omega: usize = desk.art.corpus_tokens.iter().map(|m| m.unique().len()).sum();
    let pass = index_identical && bundle_identical && models_identical && same_scores && postings == omega;
    report(
        8,
        "index integrity",
        pass,
        &format!(
            "index.bin {} bytes identical {index_identical}, bundle.bin {} bytes identical {bundle_identical}, models equal {models_identical}, scores equal {same_scores}, sum |pl| {postings} vs sum |omega| {omega}",
            index_bytes.len(),
            bundle_bytes.len()
        ),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_effective_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut lines = Vec::new();
    let mut pass = true;
    for k in [1, 3, 5, 8, 12] {
        let profiles: Vec<Vec<Token>> = (0..k)
            .map(|_| (0..rng.gen_range(2..8)).map(|_| rng.gen_range(0..1024)).collect())
            .collect();
        let corpus: Vec<TokenMultiset> = (0..300u32)
            .map(|g| TokenMultiset::from_tokens(g, &profiles[rng.gen_range(0..k)]))
            .collect();
        let index = InvertedIndex::build(10, &corpus).unwrap();
        let stats = compute_stats(&index, 0.95).unwrap();
        pass &= stats.effective_rank <= k;
        lines.push(format!("k={k}: {}", stats.effective_rank));
    }
    report(
        9,
        "effective rank",
        pass,
        &format!("synthetic corpora of 300 graphs, effective rank at 0.95 ({})", lines.join(", ")),
    );
}

// ---------------------------------------------------------------- 10

fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        if name.ends_with(".csv") || name == "index.bin" || name == "bundle.bin" {
            out.insert(name, std::fs::read(&path).unwrap());
        }
    }
    out
}

#[test]
fn criterion_10_determinism() {
    let first = desk();
    let config = desk_config("run_b");
    run_pipeline(&config).unwrap();
    let a = outputs(&first.config.out_dir);
    let b = outputs(&config.out_dir);
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    let csvs = a.keys().filter(|k| k.ends_with(".csv")).count();
    report(
        10,
        "determinism",
        a.keys().eq(b.keys()) && differing.is_empty() && csvs > 0,
        &format!(
            "two seed-42 runs, {csvs} CSV files plus index.bin and bundle.bin compared, {} differ{}",
            differing.len(),
            if differing.is_empty() { String::new() } else { format!(" ({})", differing.iter().join(", ")) }
        ),
    );
}
