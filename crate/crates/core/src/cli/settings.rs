//! Resolved run settings: built-in defaults, then a JSON file of flat dotted
//! keys, then command-line flags.

use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::data::{NormScheme, TopologyFormat};
use crate::error::{KitsError, Result};
use crate::graph::MissingKind;
use crate::training::{Strategy, TrainConfig};

/// Where readings come from.
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSource {
    /// Readings table plus a topology file.
    Files { readings: PathBuf, topology: PathBuf, format: TopologyFormat },
    /// Generated on the fly.
    Synth { nodes: usize, steps: usize, topology_seed: u64, dynamics_seed: u64 },
}

/// Parses `synth[:nodes[:steps[:topology_seed]]]`; the dynamics seed is the
/// topology seed plus one.
pub fn parse_synth(spec: &str) -> Result<Option<DatasetSource>> {
    let mut parts = spec.split(':');
    if parts.next() != Some("synth") {
        return Ok(None);
    }
    let mut nums = [60u64, 2000, 1];
    for (i, p) in parts.enumerate() {
        if i >= nums.len() {
            return Err(KitsError::Config(format!("too many fields in {:?}", spec)));
        }
        nums[i] = p.parse().map_err(|_| KitsError::Config(format!("{:?}: {:?} is not an integer", spec, p)))?;
    }
    Ok(Some(DatasetSource::Synth {
        nodes: nums[0] as usize,
        steps: nums[1] as usize,
        topology_seed: nums[2],
        dynamics_seed: nums[2] + 1,
    }))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    /// A readings path or a `synth` spec.
    pub dataset: String,
    pub topology: Option<PathBuf>,
    pub topology_format: TopologyFormat,
    pub pattern: MissingKind,
    /// Region-pattern centre node; defaults to the node nearest the centroid.
    pub region_center: Option<usize>,
    pub norm: NormScheme,
    /// Months whose steps form the test split; the default is 70/10/20.
    pub test_months: Option<Vec<u32>>,
    pub gamma: Option<f64>,
    pub delta: Option<f64>,
    /// Missing ratio, root seed and strategy live inside `train`.
    pub train: TrainConfig,
    pub baseline_k: usize,
    pub gap_batches: usize,
    /// Whether patience was set explicitly rather than left at its default.
    pub patience_explicit: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            dataset: "synth".into(),
            topology: None,
            topology_format: TopologyFormat::Auto,
            pattern: MissingKind::Random,
            region_center: None,
            norm: NormScheme::ZScore,
            test_months: None,
            gamma: None,
            delta: None,
            train: TrainConfig::default(),
            baseline_k: 10,
            gap_batches: 1000,
            patience_explicit: false,
        }
    }
}

fn parse_kind(s: &str) -> Result<MissingKind> {
    match s {
        "random" => Ok(MissingKind::Random),
        "f2c" | "fine_to_coarse" => Ok(MissingKind::FineToCoarse),
        "region" => Ok(MissingKind::Region),
        other => Err(KitsError::Config(format!("unknown missing pattern {:?}", other))),
    }
}

fn parse_months(s: &str) -> Result<Vec<u32>> {
    s.split(',')
        .map(|m| match m.trim().parse::<u32>() {
            Ok(v) if (1..=12).contains(&v) => Ok(v),
            _ => Err(KitsError::Config(format!("{:?} is not a month number", m))),
        })
        .collect()
}

impl Settings {
    /// Dataset source after resolving the `synth` shorthand.
    pub fn source(&self) -> Result<DatasetSource> {
        if let Some(s) = parse_synth(&self.dataset)? {
            return Ok(s);
        }
        let topology = self
            .topology
            .clone()
            .ok_or_else(|| KitsError::Config(format!("dataset {:?} needs --topology", self.dataset)))?;
        Ok(DatasetSource::Files { readings: PathBuf::from(&self.dataset), topology, format: self.topology_format })
    }

    /// Applies one `key = value` pair. Keys are flat and dotted; every value
    /// may be given as a JSON string or as its natural JSON type.
    pub fn set(&mut self, key: &str, value: &Value) -> Result<()> {
        let text = match value {
            Value::String(s) => s.clone(),
            Value::Array(items) => items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
            other => other.to_string(),
        };
        let bad = |what: &str| KitsError::Config(format!("config key {:?}: {:?} is not {}", key, text, what));
        let float = || text.parse::<f64>().map_err(|_| bad("a number"));
        let int = || text.parse::<usize>().map_err(|_| bad("a nonnegative integer"));
        let t = &mut self.train;
        match key {
            "dataset" => self.dataset = text,
            "topology" => self.topology = Some(PathBuf::from(text)),
            "topology_format" => self.topology_format = text.parse()?,
            "alpha" => t.alpha = float()?,
            "pattern" => self.pattern = parse_kind(&text)?,
            "region_center" => self.region_center = Some(int()?),
            "seed" => t.seed = text.parse().map_err(|_| bad("a nonnegative integer"))?,
            "norm" => self.norm = text.parse()?,
            "test_months" => self.test_months = Some(parse_months(&text)?),
            "gamma" => self.gamma = Some(float()?),
            "delta" => self.delta = Some(float()?),
            "train.strategy" => t.strategy = text.parse()?,
            "train.epochs" => t.max_epochs = int()?,
            "train.patience" => {
                t.patience = int()?;
                self.patience_explicit = true;
            }
            "train.dim" => t.model.dim = int()?,
            "train.layers" => t.model.layers = int()?,
            "train.m" => t.model.window = int()?,
            "train.window" => t.window = int()?,
            "train.batch_size" => t.batch_size = int()?,
            "train.batches_per_epoch" => t.max_batches_per_epoch = int()?,
            "train.lambda" => t.lambda = float()?,
            "train.lr" => t.lr = float()?,
            "train.clip" => t.grad_clip_norm = float()?,
            "train.epsilon_min" => t.epsilon_range.0 = float()?,
            "train.epsilon_max" => t.epsilon_range.1 = float()?,
            "train.val_fraction" => t.val_fraction = float()?,
            "baseline.k" => self.baseline_k = int()?,
            "graph_gap.batches" => self.gap_batches = int()?,
            other => return Err(KitsError::Config(format!("unknown config key {:?}", other))),
        }
        Ok(())
    }

    /// Applies every key of a flat JSON object.
    pub fn merge_json(&mut self, text: &str) -> Result<()> {
        let value: Value = serde_json::from_str(text).map_err(|e| KitsError::Config(format!("config file: {}", e)))?;
        let Value::Object(map) = value else {
            return Err(KitsError::Config("config file must hold a JSON object".into()));
        };
        for (k, v) in &map {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text =
            std::fs::read_to_string(path).map_err(|e| KitsError::Config(format!("{}: {}", path.display(), e)))?;
        self.merge_json(&text)
    }

    /// Lowers a default patience to a shorter epoch budget; an explicit
    /// patience is left for the training config check to judge.
    pub fn finish(&mut self) {
        if !self.patience_explicit && self.train.patience > self.train.max_epochs {
            self.train.patience = self.train.max_epochs;
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.train.strategy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_keys_override_defaults() {
        let mut s = Settings::default();
        s.merge_json(r#"{"alpha": 0.3, "train.dim": "16", "pattern": "f2c", "test_months": [3, 6], "train.strategy": "decrement"}"#)
            .unwrap();
        assert_eq!(s.train.alpha, 0.3);
        assert_eq!(s.train.model.dim, 16);
        assert_eq!(s.pattern, MissingKind::FineToCoarse);
        assert_eq!(s.test_months, Some(vec![3, 6]));
        assert_eq!(s.strategy(), Strategy::Decrement);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let mut s = Settings::default();
        assert!(matches!(s.merge_json(r#"{"train.speed": 3}"#), Err(KitsError::Config(_))));
        assert!(matches!(s.merge_json(r#"{"train.dim": -1}"#), Err(KitsError::Config(_))));
        assert!(matches!(s.merge_json("[1]"), Err(KitsError::Config(_))));
        assert!(matches!(s.merge_json(r#"{"test_months": "13"}"#), Err(KitsError::Config(_))));
    }

    #[test]
    fn synth_specs() {
        assert_eq!(
            parse_synth("synth").unwrap(),
            Some(DatasetSource::Synth { nodes: 60, steps: 2000, topology_seed: 1, dynamics_seed: 2 })
        );
        assert_eq!(
            parse_synth("synth:30:500:7").unwrap(),
            Some(DatasetSource::Synth { nodes: 30, steps: 500, topology_seed: 7, dynamics_seed: 8 })
        );
        assert_eq!(parse_synth("data/readings.csv").unwrap(), None);
        assert!(parse_synth("synth:x").is_err());
        assert!(Settings { dataset: "r.csv".into(), ..Settings::default() }.source().is_err());
    }

    #[test]
    fn default_patience_follows_a_short_epoch_budget() {
        let mut s = Settings::default();
        s.merge_json(r#"{"train.epochs": 3}"#).unwrap();
        s.finish();
        assert_eq!(s.train.patience, 3);

        let mut s = Settings::default();
        s.merge_json(r#"{"train.epochs": 3, "train.patience": 7}"#).unwrap();
        s.finish();
        assert_eq!(s.train.patience, 7);
        assert!(s.train.check().is_err());
    }
}
