//! End-to-end run: data, backbone, tokenizer, index, impact weights,
//! trade-off evaluation. Trained models are checkpointed into `bundle.bin`
//! after each stage; a rerun with the same model settings reuses them.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::bundle::Bundle;
use super::config::Config;
use super::evaluate::{write_tradeoff_csv, DistanceTable, Ranker, Retrieval, SweepSpec, TradeoffReport};
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::graph::{generate_dataset, load_corpus, save_corpus, Dataset};
use crate::impact::{ImpactContext, ImpactInput, ImpactObjective, ImpactParams, ImpactTrainer, QueryArtifacts};
use crate::index::{compute_stats, CorpusStats, InvertedIndex};
use crate::lexicon::{discretize, TokenMultiset};
use crate::probe::{CoocNeighborhoods, Strategy, Weighting};
use crate::reranker::{BackboneConfig, BackboneEmbedding, BackboneParams};
use crate::tokenizer::{Side, TokenizerConfig, TokenizerParams};
use crate::train::{train_ranking, TrainReport};

pub const STAGES: [&str; 6] = ["gen", "backbone", "tokenizer", "index", "impact", "evaluate"];

const IMPACT_HIDDEN: usize = 64;

/// Timestamped progress log, appended to `run.log` and mirrored to `log`.
pub struct RunLog {
    file: File,
    start: Instant,
}

impl RunLog {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(Self {
            file: OpenOptions::new().create(true).append(true).open(path)?,
            start: Instant::now(),
        })
    }

    pub fn line(&mut self, msg: &str) -> Result<()> {
        log::info!("{msg}");
        writeln!(self.file, "[{:9.2}s] {msg}", self.start.elapsed().as_secs_f64())?;
        Ok(())
    }
}

/// Whatever the run produced, up to the stage it stopped after.
#[derive(Debug, Default)]
pub struct Artifacts {
    pub out_dir: PathBuf,
    pub dataset: Option<Dataset>,
    pub backbone: Option<BackboneParams>,
    pub tokenizer: Option<TokenizerParams>,
    pub corpus_tokens: Vec<TokenMultiset>,
    pub index: Option<InvertedIndex>,
    pub stats: Option<CorpusStats>,
    pub impact: Option<ImpactParams>,
    pub impact_cm: Option<ImpactParams>,
    pub reports: Vec<TradeoffReport>,
    /// Training summaries of stages trained in this run (not resumed).
    pub training: BTreeMap<&'static str, TrainReport>,
}

/// Per-query and per-graph quantities derived from frozen models.
pub struct Prepared {
    pub queries: Vec<QueryArtifacts>,
    pub query_embeddings: Vec<BackboneEmbedding>,
    pub corpus_embeddings: Vec<BackboneEmbedding>,
    pub cooc: CoocNeighborhoods,
}

impl Prepared {
    pub fn new(
        dataset: &Dataset,
        backbone: &BackboneParams,
        tokenizer: &TokenizerParams,
        index: &InvertedIndex,
        input: ImpactInput,
    ) -> Result<Self> {
        let m = dataset.width();
        let embed = |gs: &[crate::graph::Graph]| -> Result<Vec<BackboneEmbedding>> {
            gs.par_iter().map(|g| backbone.embed(&g.padded(m)?)).collect()
        };
        let query_embeddings = embed(&dataset.queries)?;
        let corpus_embeddings = embed(&dataset.corpus)?;
        let queries = dataset
            .queries
            .par_iter()
            .zip(&query_embeddings)
            .map(|(g, h)| {
                let (x, z) = tokenizer.encode(g, Side::Query)?;
                let embeddings = match input {
                    ImpactInput::Backbone => h.h.slice_rows(0, g.n()),
                    ImpactInput::Tokenizer => x.real(),
                };
                Ok(QueryArtifacts {
                    id: g.id(),
                    tokens: discretize(&z),
                    embeddings,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            queries,
            query_embeddings,
            corpus_embeddings,
            cooc: CoocNeighborhoods::new(index),
        })
    }
}

fn stage<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

fn summary(r: &TrainReport) -> String {
    format!(
        "{} steps, dev loss {:.5} -> {:.5}{}",
        r.steps,
        r.initial_dev_loss,
        r.best_dev_loss,
        if r.skipped_queries > 0 {
            format!(", {} queries skipped", r.skipped_queries)
        } else {
            String::new()
        }
    )
}

/// Strategies evaluated by a full run, in output order.
pub fn strategies(config: &Config) -> Vec<(Strategy, Weighting)> {
    let mut probes = vec![Strategy::Single];
    probes.extend(config.radii.iter().map(|&radius| Strategy::Hamming { radius }));
    probes.extend(config.expand.iter().map(|&expand| Strategy::Cooc { expand }));
    probes
        .into_iter()
        .flat_map(|s| [(s, Weighting::Uniform), (s, Weighting::Impact)])
        .collect()
}

/// The impact model that goes with a strategy.
pub fn impact_for<'a>(
    strategy: Strategy,
    weighting: Weighting,
    impact: &'a ImpactParams,
    impact_cm: &'a ImpactParams,
) -> Option<&'a ImpactParams> {
    match (weighting, strategy) {
        (Weighting::Uniform, _) => None,
        (Weighting::Impact, Strategy::Cooc { .. }) => Some(impact_cm),
        (Weighting::Impact, _) => Some(impact),
    }
}

pub fn load_or_generate(config: &Config, dir: &Path, fresh: bool) -> Result<Dataset> {
    if let Some(path) = &config.dataset {
        return load_corpus(path);
    }
    if !fresh && dir.join("manifest.json").exists() {
        return load_corpus(dir);
    }
    let d = generate_dataset(&config.gen_config(), config.seed)?;
    save_corpus(&d, dir)?;
    Ok(d)
}

pub fn run_pipeline(config: &Config) -> Result<Artifacts> {
    run_pipeline_with(config, &strategies(config))
}

/// Like [`run_pipeline`] with an explicit list of strategies to evaluate.
pub fn run_pipeline_with(config: &Config, plan: &[(Strategy, Weighting)]) -> Result<Artifacts> {
    config.validate()?;
    let out = config.out_dir.clone();
    std::fs::create_dir_all(&out)?;
    let mut log = RunLog::open(&out.join("run.log"))?;
    let bundle_path = out.join("bundle.bin");
    let fingerprint = config.model_fingerprint();
    let stop = |s: &str| config.stop_after.as_deref() == Some(s);

    let mut bundle = match Bundle::load(&bundle_path) {
        Ok(b) if b.get::<String>("config")?.as_deref() == Some(fingerprint.as_str()) => b,
        _ => {
            let mut b = Bundle::new();
            b.put("config", &fingerprint)?;
            b
        }
    };
    let fresh = !bundle.contains("backbone") && !bundle.contains("tokenizer");
    log.line(&format!("run started, seed {}, resuming {}", config.seed, !fresh))?;

    let mut art = Artifacts {
        out_dir: out.clone(),
        ..Artifacts::default()
    };

    let dataset = stage("gen", || load_or_generate(config, &out.join("dataset"), fresh))?;
    if dataset.queries.is_empty() {
        return Err(Error::Stage {
            stage: "gen",
            source: Box::new(Error::Config("dataset has no queries".into())),
        });
    }
    log.line(&format!(
        "dataset: {} corpus graphs, {} queries (train {}, dev {}, test {}), mean pos/neg {:.4}",
        dataset.corpus.len(),
        dataset.queries.len(),
        dataset.split.train.len(),
        dataset.split.dev.len(),
        dataset.split.test.len(),
        dataset.mean_positive_ratio()
    ))?;
    art.dataset = Some(dataset);
    if stop("gen") {
        return Ok(art);
    }
    let dataset = art.dataset.as_ref().expect("set above");
    let encoder = EncoderConfig {
        layers: config.layers,
        ..EncoderConfig::default()
    };

    let backbone: BackboneParams = stage("backbone", || {
        if let Some(b) = bundle.get("backbone")? {
            log.line("backbone: reused checkpoint")?;
            return Ok(b);
        }
        let seed = config.seed.wrapping_add(1);
        let init = BackboneParams::new(
            &BackboneConfig {
                encoder,
                ..BackboneConfig::default()
            },
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        let tc = config.train_config(config.backbone_margin, config.backbone_steps, seed);
        let (b, report) = train_ranking(init, dataset, &tc)?;
        log.line(&format!("backbone: {}", summary(&report)))?;
        art.training.insert("backbone", report);
        bundle.put("backbone", &b)?;
        bundle.save(&bundle_path)?;
        Ok(b)
    })?;
    art.backbone = Some(backbone);
    if stop("backbone") {
        return Ok(art);
    }

    let tokenizer: TokenizerParams = stage("tokenizer", || {
        if let Some(t) = bundle.get("tokenizer")? {
            log.line("tokenizer: reused checkpoint")?;
            return Ok(t);
        }
        let seed = config.seed.wrapping_add(2);
        let init = TokenizerParams::new(
            &TokenizerConfig {
                encoder,
                d_bits: config.d_bits,
                mode: config.mode,
                distance: config.distance,
                ..TokenizerConfig::default()
            },
            &mut ChaCha8Rng::seed_from_u64(seed),
        );
        let tc = config.train_config(config.margin, config.tokenizer_steps, seed);
        let (t, report) = train_ranking(init, dataset, &tc)?;
        log.line(&format!("tokenizer: {}", summary(&report)))?;
        art.training.insert("tokenizer", report);
        bundle.put("tokenizer", &t)?;
        bundle.save(&bundle_path)?;
        Ok(t)
    })?;
    art.tokenizer = Some(tokenizer);
    if stop("tokenizer") {
        return Ok(art);
    }
    let backbone = art.backbone.as_ref().expect("set above");
    let tokenizer = art.tokenizer.as_ref().expect("set above");

    let (corpus_tokens, index, stats) = stage("index", || {
        let t = Instant::now();
        let tokens: Vec<TokenMultiset> = dataset
            .corpus
            .par_iter()
            .map(|g| crate::lexicon::tokenize_graph(tokenizer, g, Side::Corpus))
            .collect::<Result<_>>()?;
        let tokenize_secs = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let index = InvertedIndex::build(config.d_bits, &tokens)?;
        let build_secs = t.elapsed().as_secs_f64();
        index.save(&out.join("index.bin"))?;
        let file_bytes = std::fs::metadata(out.join("index.bin"))?.len();
        log.line(&format!(
            "index: tokenized corpus in {tokenize_secs:.2}s, built in {:.3}ms, {} postings, {} bytes in memory, index.bin {} bytes",
            build_secs * 1e3,
            index.total_postings(),
            index.heap_bytes(),
            file_bytes
        ))?;
        let stats = compute_stats(&index, config.gamma)?;
        stats.write_csvs(&out)?;
        log.line(&format!(
            "stats: {} non-empty tokens, rank {}, effective rank {} at gamma {}",
            stats.tokens.len(),
            stats.rank,
            stats.effective_rank,
            config.gamma
        ))?;
        Ok((tokens, index, stats))
    })?;
    art.corpus_tokens = corpus_tokens;
    art.index = Some(index);
    art.stats = Some(stats);
    if stop("index") {
        return Ok(art);
    }
    let index = art.index.as_ref().expect("set above");

    let prepared = stage("impact", || Prepared::new(dataset, backbone, tokenizer, index, config.impact_input))?;
    let mut train_impact = |name: &'static str, objective: ImpactObjective, seed: u64| -> Result<ImpactParams> {
        stage("impact", || {
            if let Some(p) = bundle.get(name)? {
                log.line(&format!("{name}: reused checkpoint"))?;
                return Ok(p);
            }
            let ctx = ImpactContext {
                index,
                cooc: &prepared.cooc,
                queries: &prepared.queries,
                objective,
            };
            let init = ImpactParams::new(
                config.d_bits,
                encoder.dim_h,
                IMPACT_HIDDEN,
                config.impact_input,
                &mut ChaCha8Rng::seed_from_u64(seed),
            );
            let mut tc = config.train_config(config.impact_margin, config.impact_epochs, seed);
            tc.validate_every = 1;
            tc.patience = config.impact_patience;
            let (trained, report) = train_ranking(ImpactTrainer { params: init, ctx: &ctx }, dataset, &tc)?;
            log.line(&format!("{name}: {}", summary(&report)))?;
            art.training.insert(name, report);
            bundle.put(name, &trained.params)?;
            bundle.save(&bundle_path)?;
            Ok(trained.params)
        })
    };
    let impact = train_impact("impact", ImpactObjective::Single, config.seed.wrapping_add(3))?;
    let impact_cm = train_impact("impact_cm", ImpactObjective::Cooc, config.seed.wrapping_add(4))?;
    art.impact = Some(impact);
    art.impact_cm = Some(impact_cm);
    if stop("impact") {
        return Ok(art);
    }

    art.reports = stage("evaluate", || {
        let distances = DistanceTable::build(
            backbone,
            &prepared.query_embeddings,
            &prepared.corpus_embeddings,
            &dataset.split.test,
        )?;
        let retrieval = Retrieval {
            dataset,
            index,
            cooc: &prepared.cooc,
            queries: &prepared.queries,
            backbone,
            query_embeddings: &prepared.query_embeddings,
            corpus_embeddings: &prepared.corpus_embeddings,
            distances: &distances,
        };
        let (impact, impact_cm) = (art.impact.as_ref().expect("set"), art.impact_cm.as_ref().expect("set"));
        let mut reports = Vec::new();
        for &(strategy, weighting) in plan {
            let spec = SweepSpec {
                strategy,
                weighting,
                points: config.delta_sweep,
                resamples: config.random_resamples,
                seed: config.seed.wrapping_add(5),
                timing: config.timing,
                ranker: Ranker::Backbone,
            };
            let report = retrieval.evaluate(
                &dataset.split.test,
                impact_for(strategy, weighting, impact, impact_cm),
                &spec,
            )?;
            write_tradeoff_csv(&out.join(format!("tradeoff_{}.csv", report.label)), &report.rows)?;
            write_tradeoff_csv(&out.join(format!("tradeoff_{}_random.csv", report.label)), &report.random)?;
            let (lo, hi) = (report.rows.first(), report.rows.last());
            log.line(&format!(
                "evaluate {}: kC {:.4}..{:.4}, MAP {:.4}..{:.4}, empty shortlists {}",
                report.label,
                lo.map_or(0.0, |r| r.kc),
                hi.map_or(0.0, |r| r.kc),
                lo.map_or(0.0, |r| r.map),
                hi.map_or(0.0, |r| r.map),
                report.rows.iter().map(|r| r.empty).sum::<usize>()
            ))?;
            reports.push(report);
        }
        Ok(reports)
    })?;
    log.line("run finished")?;
    Ok(art)
}
