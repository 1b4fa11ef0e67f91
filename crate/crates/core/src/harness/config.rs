//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error so that typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::GenConfig;
use crate::impact::ImpactInput;
use crate::tokenizer::{CodeDistance, HeadMode};
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Existing corpus (manifest, directory or TU folder); generated when
    /// unset.
    pub dataset: Option<PathBuf>,
    pub corpus_size: usize,
    pub num_queries: usize,

    pub layers: usize,
    pub d_bits: usize,
    pub mode: HeadMode,
    pub distance: CodeDistance,
    pub impact_input: ImpactInput,

    pub lr: f64,
    pub batch_pairs: usize,
    pub positives: usize,
    pub negatives: usize,
    pub validate_every: usize,
    pub patience: usize,
    pub tolerance: f64,
    pub backbone_margin: f64,
    pub backbone_steps: usize,
    pub margin: f64,
    pub tokenizer_steps: usize,
    pub impact_margin: f64,
    pub impact_epochs: usize,
    pub impact_patience: usize,

    pub radii: Vec<usize>,
    pub expand: Vec<usize>,
    pub delta_sweep: usize,
    pub random_resamples: usize,
    pub gamma: f64,
    /// Record wall-clock time per query in the trade-off tables. Off by
    /// default so that repeated runs produce identical files.
    pub timing: bool,
    /// Stop after the named stage.
    pub stop_after: Option<String>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 42,
            out_dir: PathBuf::from("runs/desk"),
            dataset: None,
            corpus_size: 2000,
            num_queries: 50,
            layers: 5,
            d_bits: 10,
            mode: HeadMode::Asymmetric,
            distance: CodeDistance::Chamfer,
            impact_input: ImpactInput::Backbone,
            lr: 1e-3,
            batch_pairs: 3000,
            positives: 5,
            negatives: 20,
            validate_every: 30,
            patience: 30,
            tolerance: 5e-3,
            backbone_margin: 0.5,
            backbone_steps: 120,
            margin: 10.0,
            tokenizer_steps: 120,
            impact_margin: 0.1,
            impact_epochs: 300,
            impact_patience: 50,
            radii: vec![1, 2],
            expand: vec![32],
            delta_sweep: 20,
            random_resamples: 10,
            gamma: 0.95,
            timing: false,
            stop_after: None,
        }
    }
}

fn list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, T::Err> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(|p| p.trim().parse()).collect()
}

fn join<T: Display>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |reason: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected `key = value`, got `{line}`")))?;
            if kv.insert(k.trim().to_string(), (i + 1, v.trim().to_string())).is_some() {
                return Err(parse_err(format!("duplicate key `{}`", k.trim())));
            }
        }

        let mut c = Config::default();
        let mut take = |key: &str, apply: &mut dyn FnMut(&str) -> std::result::Result<(), String>| -> Result<()> {
            if let Some((line, v)) = kv.remove(key) {
                apply(&v).map_err(|reason| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    reason: format!("{key}: {reason}"),
                })?;
            }
            Ok(())
        };
        macro_rules! scalar {
            ($($field:ident),*) => {
                $(take(stringify!($field), &mut |v| {
                    c.$field = v.parse().map_err(|e| format!("{e}"))?;
                    Ok(())
                })?;)*
            };
        }
        scalar!(
            seed, corpus_size, num_queries, layers, d_bits, mode, distance, impact_input, lr, batch_pairs,
            positives, negatives, validate_every, patience, tolerance, backbone_margin, backbone_steps, margin,
            tokenizer_steps, impact_margin, impact_epochs, impact_patience, delta_sweep, random_resamples, gamma,
            timing
        );
        take("out_dir", &mut |v| {
            c.out_dir = PathBuf::from(v);
            Ok(())
        })?;
        take("dataset", &mut |v| {
            c.dataset = (!v.is_empty()).then(|| PathBuf::from(v));
            Ok(())
        })?;
        take("stop_after", &mut |v| {
            c.stop_after = (!v.is_empty()).then(|| v.to_string());
            Ok(())
        })?;
        take("radii", &mut |v| {
            c.radii = list(v).map_err(|e| format!("{e}"))?;
            Ok(())
        })?;
        take("expand", &mut |v| {
            c.expand = list(v).map_err(|e| format!("{e}"))?;
            Ok(())
        })?;
        if let Some((key, (line, _))) = kv.into_iter().next() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                reason: format!("unknown key `{key}`"),
            });
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?, path)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.d_bits == 0 || self.d_bits > 16 {
            return bad("d_bits must be in 1..=16");
        }
        if self.radii.iter().any(|&r| r > self.d_bits) {
            return bad("every radius must be at most d_bits");
        }
        if self.expand.contains(&0) {
            return bad("expand values must be positive");
        }
        if self.delta_sweep < 2 {
            return bad("delta_sweep must be at least 2");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::EnergyThreshold(self.gamma));
        }
        if self.positives == 0 || self.negatives == 0 {
            return bad("positives and negatives per query must be positive");
        }
        if let Some(s) = &self.stop_after {
            if !super::pipeline::STAGES.contains(&s.as_str()) {
                return Err(Error::Config(format!(
                    "stop_after `{s}` is not one of {}",
                    super::pipeline::STAGES.join(", ")
                )));
            }
        }
        Ok(())
    }

    /// Settings that determine the trained models, one `key=value` per line
    /// in a fixed order. Two runs whose fingerprints match can share
    /// checkpoints.
    pub fn model_fingerprint(&self) -> String {
        let dataset = self.dataset.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        [
            ("seed", self.seed.to_string()),
            ("dataset", dataset),
            ("corpus_size", self.corpus_size.to_string()),
            ("num_queries", self.num_queries.to_string()),
            ("layers", self.layers.to_string()),
            ("d_bits", self.d_bits.to_string()),
            ("mode", self.mode.to_string()),
            ("distance", self.distance.to_string()),
            ("impact_input", self.impact_input.to_string()),
            ("lr", self.lr.to_string()),
            ("batch_pairs", self.batch_pairs.to_string()),
            ("positives", self.positives.to_string()),
            ("negatives", self.negatives.to_string()),
            ("validate_every", self.validate_every.to_string()),
            ("patience", self.patience.to_string()),
            ("tolerance", self.tolerance.to_string()),
            ("backbone_margin", self.backbone_margin.to_string()),
            ("backbone_steps", self.backbone_steps.to_string()),
            ("margin", self.margin.to_string()),
            ("tokenizer_steps", self.tokenizer_steps.to_string()),
            ("impact_margin", self.impact_margin.to_string()),
            ("impact_epochs", self.impact_epochs.to_string()),
            ("impact_patience", self.impact_patience.to_string()),
            ("radii", join(&self.radii)),
            ("expand", join(&self.expand)),
        ]
        .iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
    }

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            corpus_size: self.corpus_size,
            num_queries: self.num_queries,
            ..GenConfig::default()
        }
    }

    pub fn train_config(&self, margin: f64, max_steps: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            margin,
            positives: self.positives,
            negatives: self.negatives,
            batch_pairs: self.batch_pairs,
            max_steps,
            validate_every: self.validate_every,
            patience: self.patience,
            tolerance: self.tolerance,
            seed,
        }
    }
}
