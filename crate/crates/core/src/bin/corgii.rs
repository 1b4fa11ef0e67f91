use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use corgii::harness::pipeline::{impact_for, run_pipeline_with, strategies, Prepared};
use corgii::harness::{average_precision, Config};
use corgii::probe::{score, shortlist, Strategy, Weighting};
use corgii::reranker::rerank;
use corgii::Result;

#[derive(Parser)]
#[command(name = "corgii", version, about = "Subgraph retrieval with learned graph tokens and an inverted index")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct Probe {
    /// single, hm (Hamming ball) or cm (co-occurrence neighbours).
    #[arg(long)]
    strategy: Option<String>,
    /// unif or impact.
    #[arg(long)]
    weights: Option<String>,
    /// Hamming radius for `hm`; defaults to the first configured radius.
    #[arg(long)]
    radius: Option<usize>,
    /// Neighbours per token for `cm`; defaults to the first configured value.
    #[arg(long)]
    expand: Option<usize>,
    /// Number of thresholds in the trade-off sweep.
    #[arg(long = "delta-sweep")]
    delta_sweep: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or load) the dataset.
    Gen(Common),
    /// Train the alignment backbone.
    TrainBackbone(Common),
    /// Train the graph tokenizer.
    TrainTokenizer(Common),
    /// Tokenize the corpus, write index.bin and corpus statistics.
    BuildIndex(Common),
    /// Train impact weights for single/Hamming and co-occurrence probing.
    TrainImpact(Common),
    /// Retrieve for one query and print the reranked shortlist.
    Query {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        probe: Probe,
        /// Query id.
        #[arg(long)]
        query: u32,
        /// Shortlist threshold on the probe score.
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        /// Number of reranked results to print.
        #[arg(long, default_value_t = 10)]
        top: usize,
    },
    /// Sweep thresholds and write trade-off tables.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        probe: Probe,
    },
    /// Print token and co-occurrence statistics of the index.
    Stats(Common),
}

fn load(common: &Common) -> Result<Config> {
    let mut c = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    Ok(c)
}

fn plan(config: &mut Config, probe: &Probe) -> Result<Vec<(Strategy, Weighting)>> {
    if let Some(n) = probe.delta_sweep {
        config.delta_sweep = n;
    }
    let weights: Vec<Weighting> = match &probe.weights {
        Some(w) => vec![w.parse()?],
        None => vec![Weighting::Uniform, Weighting::Impact],
    };
    let Some(name) = &probe.strategy else {
        return Ok(strategies(config)
            .into_iter()
            .filter(|(_, w)| weights.contains(w))
            .collect());
    };
    let radius = probe.radius.or(config.radii.first().copied()).unwrap_or(1);
    let expand = probe.expand.or(config.expand.first().copied()).unwrap_or(32);
    let strategy = Strategy::parse(name, radius, expand)?;
    Ok(weights.into_iter().map(|w| (strategy, w)).collect())
}

fn stop_at(mut config: Config, stage: &str) -> Result<()> {
    config.stop_after = Some(stage.to_string());
    run_pipeline_with(&config, &[])?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(c) => stop_at(load(&c)?, "gen"),
        Command::TrainBackbone(c) => stop_at(load(&c)?, "backbone"),
        Command::TrainTokenizer(c) => stop_at(load(&c)?, "tokenizer"),
        Command::BuildIndex(c) => stop_at(load(&c)?, "index"),
        Command::TrainImpact(c) => stop_at(load(&c)?, "impact"),
        Command::Stats(c) => {
            let mut config = load(&c)?;
            config.stop_after = Some("index".into());
            let art = run_pipeline_with(&config, &[])?;
            let stats = art.stats.expect("index stage ran");
            let index = art.index.expect("index stage ran");
            println!("graphs           {}", index.len());
            println!("vocabulary       {}", index.vocab_size());
            println!("non-empty tokens {}", stats.tokens.len());
            println!("postings         {}", index.total_postings());
            println!("cooc rank        {}", stats.rank);
            println!("effective rank   {} (gamma {})", stats.effective_rank, stats.gamma);
            println!("csv files in     {}", config.out_dir.display());
            Ok(())
        }
        Command::Evaluate { common, probe } => {
            let mut config = load(&common)?;
            let plan = plan(&mut config, &probe)?;
            config.stop_after = None;
            let art = run_pipeline_with(&config, &plan)?;
            println!("{:<20} {:>8} {:>8} {:>8}", "strategy", "rows", "maxMAP", "rndMAP");
            for r in &art.reports {
                let best = r.rows.iter().map(|x| x.map).fold(0.0, f64::max);
                let rnd = r.random.iter().map(|x| x.map).fold(0.0, f64::max);
                println!("{:<20} {:>8} {:>8.4} {:>8.4}", r.label, r.rows.len(), best, rnd);
            }
            Ok(())
        }
        Command::Query {
            common,
            probe,
            query,
            delta,
            top,
        } => {
            let mut config = load(&common)?;
            let plan = plan(&mut config, &probe)?;
            let &(strategy, weighting) = plan.last().expect("non-empty plan");
            config.stop_after = Some("impact".into());
            let art = run_pipeline_with(&config, &[])?;
            let dataset = art.dataset.as_ref().expect("ran");
            let (backbone, tokenizer, index) = (
                art.backbone.as_ref().expect("ran"),
                art.tokenizer.as_ref().expect("ran"),
                art.index.as_ref().expect("ran"),
            );
            if query as usize >= dataset.queries.len() {
                return Err(corgii::Error::Config(format!(
                    "query {query} out of range (0..{})",
                    dataset.queries.len()
                )));
            }
            let prepared = Prepared::new(dataset, backbone, tokenizer, index, config.impact_input)?;
            let impact = impact_for(
                strategy,
                weighting,
                art.impact.as_ref().expect("ran"),
                art.impact_cm.as_ref().expect("ran"),
            );
            let scores = score(index, &prepared.cooc, strategy, impact, &prepared.queries[query as usize])?;
            let cands = shortlist(query, &scores, delta);
            let q = &prepared.query_embeddings[query as usize];
            let dist = |c: u32| {
                backbone
                    .distance(q, &prepared.corpus_embeddings[c as usize])
                    .unwrap_or(f64::INFINITY)
            };
            let ranked = rerank(&cands.ids(), dist);
            let rel = dataset.relevant(query);
            println!(
                "query {query} ({} nodes), tokens {:?}",
                dataset.queries[query as usize].n(),
                prepared.queries[query as usize].tokens
            );
            println!(
                "{strategy}_{weighting}: {} of {} graphs shortlisted at delta {delta}, {} relevant in corpus",
                cands.len(),
                dataset.corpus.len(),
                rel.len()
            );
            if let Some(ap) = average_precision(&ranked, rel) {
                println!("average precision {ap:.4}");
            }
            for (rank, &c) in ranked.iter().take(top).enumerate() {
                let mark = if rel.binary_search(&c).is_ok() { "*" } else { " " };
                println!("{:>4} {mark} graph {c:>6}  distance {:.4}  score {:.4}", rank + 1, dist(c), scores[&c]);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
