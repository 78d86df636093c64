//! Flat `key = value` configuration with dotted namespaces.
//!
//! Files hold one assignment per line; `#` starts a comment. Command-line
//! overrides take precedence over file values. Resolution fills every
//! remaining key from its default, so the snapshot written into each run
//! directory is fully explicit and alone suffices to rerun the
//! experiment. Strategy-dependent default: `penalty.alpha` is 1e-3 for
//! `hard` and 5e-4 otherwise.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use shortcot_core::grpo::GrpoConfig;
use shortcot_core::penalties::{HardThresholds, PenaltyConfig, Strategy};
use shortcot_core::trainer::{RolloutSchedule, ScheduleEntry, TrainConfig};

use crate::error::{CliError, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Every tunable, fully resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub seed: u64,
    pub pretrain_steps: u32,
    pub pretrain_learning_rate: f64,
    pub pretrain_out: String,
    pub total_epochs: u32,
    pub prompts_per_epoch: u32,
    /// `first-last:group` ranges, comma separated.
    pub schedule: Vec<ScheduleEntry>,
    pub checkpoint_interval: u32,
    pub pretrained: String,
    pub fresh_start: bool,
    pub out: String,
    pub group_size: usize,
    pub clip_epsilon: f64,
    pub kl_beta: f64,
    pub learning_rate: f64,
    pub strategy: Strategy,
    pub alpha: f64,
    pub target_length: u32,
    pub cap_length: u32,
    pub threshold_detection: f64,
    pub threshold_alignment: f64,
    pub threshold_preference: f64,
    pub eval_seeds: Vec<u64>,
    pub eval_suite_seed: u64,
    pub eval_prompts_per_category: u32,
}

const KNOWN_KEYS: &[&str] = &[
    "seed",
    "pretrain.steps",
    "pretrain.learning_rate",
    "pretrain.out",
    "train.total_epochs",
    "train.prompts_per_epoch",
    "train.schedule",
    "train.checkpoint_interval",
    "train.pretrained",
    "train.fresh_start",
    "train.out",
    "grpo.group_size",
    "grpo.epsilon",
    "grpo.kl_beta",
    "grpo.learning_rate",
    "penalty.strategy",
    "penalty.alpha",
    "penalty.target_length",
    "penalty.cap_length",
    "penalty.threshold_detection",
    "penalty.threshold_alignment",
    "penalty.threshold_preference",
    "eval.seeds",
    "eval.suite_seed",
    "eval.prompts_per_category",
];

/// Parses assignment lines into a key map; duplicate keys are rejected.
pub fn parse_assignments(text: &str, context: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!(
                "{context}:{}: expected `key = value`, got {line:?}",
                lineno + 1
            ))
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key == "tool.version" {
            continue; // snapshot metadata, not a tunable
        }
        if map.insert(key.clone(), value).is_some() {
            return Err(CliError::Config(format!(
                "{context}:{}: duplicate key {key:?}",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read config file {}: {e}", path.display()))
    })?;
    parse_assignments(&text, &path.display().to_string())
}

/// Parses a schedule string like `1-600:4,601-800:3`.
pub fn parse_schedule(text: &str) -> Result<Vec<ScheduleEntry>> {
    let bad = || CliError::Config(format!("invalid schedule {text:?} (want `first-last:G,...`)"));
    let mut entries = Vec::new();
    for part in text.split(',') {
        let (range, group) = part.trim().split_once(':').ok_or_else(bad)?;
        let (first, last) = range.trim().split_once('-').ok_or_else(bad)?;
        entries.push(ScheduleEntry {
            first_epoch: first.trim().parse().map_err(|_| bad())?,
            last_epoch: last.trim().parse().map_err(|_| bad())?,
            group_size: group.trim().parse().map_err(|_| bad())?,
        });
    }
    Ok(entries)
}

fn schedule_string(entries: &[ScheduleEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{}-{}:{}", e.first_epoch, e.last_epoch, e.group_size))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_seed_list(text: &str) -> Result<Vec<u64>> {
    let seeds: std::result::Result<Vec<u64>, _> =
        text.split(',').map(|s| s.trim().parse::<u64>()).collect();
    let seeds =
        seeds.map_err(|_| CliError::Config(format!("invalid seed list {text:?}")))?;
    if seeds.is_empty() {
        return Err(CliError::Config("seed list is empty".into()));
    }
    Ok(seeds)
}

struct Lookup {
    map: BTreeMap<String, String>,
}

impl Lookup {
    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| {
                CliError::Config(format!("invalid value for {key}: {raw:?}"))
            }),
        }
    }
}

/// Resolves a key map (file values already merged with overrides) into a
/// fully explicit configuration. Unknown keys are an error naming the key.
pub fn resolve(map: BTreeMap<String, String>) -> Result<ResolvedConfig> {
    for key in map.keys() {
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(CliError::Config(format!("unknown config key {key:?}")));
        }
    }
    let l = Lookup { map };

    let seed: u64 = l.parse("seed", 1)?;
    let strategy = match l.get("penalty.strategy") {
        None => Strategy::None,
        Some(name) => Strategy::from_name(name).map_err(|_| {
            CliError::Config(format!(
                "invalid strategy {name:?} (valid: none, cap, target, hard, soft)"
            ))
        })?,
    };
    let total_epochs: u32 = l.parse("train.total_epochs", 800)?;
    let group_size: usize = l.parse("grpo.group_size", 4)?;
    let schedule = match l.get("train.schedule") {
        None => vec![ScheduleEntry {
            first_epoch: 1,
            last_epoch: total_epochs,
            group_size,
        }],
        Some(text) => parse_schedule(text)?,
    };
    let out = match l.get("train.out") {
        Some(path) => path.to_string(),
        None => format!("runs/{}-s{}", strategy.name(), seed),
    };
    let config = ResolvedConfig {
        seed,
        pretrain_steps: l.parse("pretrain.steps", 2000)?,
        pretrain_learning_rate: l.parse("pretrain.learning_rate", 2e-2)?,
        pretrain_out: l
            .get("pretrain.out")
            .unwrap_or("pretrained.bin")
            .to_string(),
        total_epochs,
        prompts_per_epoch: l.parse("train.prompts_per_epoch", 24)?,
        schedule,
        checkpoint_interval: l.parse("train.checkpoint_interval", 100)?,
        pretrained: l.get("train.pretrained").unwrap_or("").to_string(),
        fresh_start: l.parse("train.fresh_start", false)?,
        out,
        group_size,
        clip_epsilon: l.parse("grpo.epsilon", 0.2)?,
        kl_beta: l.parse("grpo.kl_beta", 0.01)?,
        learning_rate: l.parse("grpo.learning_rate", 1e-3)?,
        strategy,
        alpha: l.parse("penalty.alpha", PenaltyConfig::default_alpha(strategy))?,
        target_length: l.parse("penalty.target_length", 35)?,
        cap_length: l.parse("penalty.cap_length", 35)?,
        threshold_detection: l.parse("penalty.threshold_detection", 0.8)?,
        threshold_alignment: l.parse("penalty.threshold_alignment", 0.5)?,
        threshold_preference: l.parse("penalty.threshold_preference", 0.29)?,
        eval_seeds: match l.get("eval.seeds") {
            None => vec![1, 2, 3, 4],
            Some(text) => parse_seed_list(text)?,
        },
        eval_suite_seed: l.parse("eval.suite_seed", 0)?,
        eval_prompts_per_category: l.parse("eval.prompts_per_category", 20)?,
    };
    config.core_train_config()?;
    Ok(config)
}

/// Loads, overrides, and resolves a config file. `overrides` are
/// `key=value` strings applied on top of the file.
pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<ResolvedConfig> {
    let mut map = read_config_file(path)?;
    for (key, value) in overrides {
        map.insert(key.clone(), value.clone());
    }
    resolve(map)
}

impl ResolvedConfig {
    pub fn penalty_config(&self) -> PenaltyConfig {
        PenaltyConfig {
            strategy: self.strategy,
            alpha: self.alpha,
            target_length: self.target_length,
            cap_length: self.cap_length,
            hard_thresholds: HardThresholds {
                detection: self.threshold_detection,
                alignment: self.threshold_alignment,
                preference: self.threshold_preference,
            },
        }
    }

    pub fn grpo_config(&self) -> GrpoConfig {
        GrpoConfig {
            group_size: self.group_size,
            clip_epsilon: self.clip_epsilon,
            kl_beta: self.kl_beta,
            learning_rate: self.learning_rate,
            ..GrpoConfig::default()
        }
    }

    /// Validated core trainer configuration.
    pub fn core_train_config(&self) -> Result<TrainConfig> {
        let schedule = RolloutSchedule::new(self.schedule.clone(), self.total_epochs)?;
        let cfg = TrainConfig {
            total_epochs: self.total_epochs,
            prompts_per_epoch: self.prompts_per_epoch,
            seed: self.seed,
            schedule,
            grpo: self.grpo_config(),
            penalty: self.penalty_config(),
            checkpoint_interval: self.checkpoint_interval,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Serializes every tunable plus the tool version, sorted by key,
    /// one assignment per line. Re-parses to the identical configuration.
    pub fn snapshot(&self) -> String {
        let mut lines: Vec<(String, String)> = vec![
            ("seed".into(), self.seed.to_string()),
            ("pretrain.steps".into(), self.pretrain_steps.to_string()),
            (
                "pretrain.learning_rate".into(),
                format!("{}", self.pretrain_learning_rate),
            ),
            ("pretrain.out".into(), self.pretrain_out.clone()),
            ("train.total_epochs".into(), self.total_epochs.to_string()),
            (
                "train.prompts_per_epoch".into(),
                self.prompts_per_epoch.to_string(),
            ),
            ("train.schedule".into(), schedule_string(&self.schedule)),
            (
                "train.checkpoint_interval".into(),
                self.checkpoint_interval.to_string(),
            ),
            ("train.pretrained".into(), self.pretrained.clone()),
            ("train.fresh_start".into(), self.fresh_start.to_string()),
            ("train.out".into(), self.out.clone()),
            ("grpo.group_size".into(), self.group_size.to_string()),
            ("grpo.epsilon".into(), format!("{}", self.clip_epsilon)),
            ("grpo.kl_beta".into(), format!("{}", self.kl_beta)),
            (
                "grpo.learning_rate".into(),
                format!("{}", self.learning_rate),
            ),
            ("penalty.strategy".into(), self.strategy.name().to_string()),
            ("penalty.alpha".into(), format!("{}", self.alpha)),
            (
                "penalty.target_length".into(),
                self.target_length.to_string(),
            ),
            ("penalty.cap_length".into(), self.cap_length.to_string()),
            (
                "penalty.threshold_detection".into(),
                format!("{}", self.threshold_detection),
            ),
            (
                "penalty.threshold_alignment".into(),
                format!("{}", self.threshold_alignment),
            ),
            (
                "penalty.threshold_preference".into(),
                format!("{}", self.threshold_preference),
            ),
            (
                "eval.seeds".into(),
                self.eval_seeds
                    .iter()
                    .map(|s| s.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (
                "eval.suite_seed".into(),
                self.eval_suite_seed.to_string(),
            ),
            (
                "eval.prompts_per_category".into(),
                self.eval_prompts_per_category.to_string(),
            ),
            ("tool.version".into(), TOOL_VERSION.to_string()),
        ];
        lines.sort();
        let mut out = String::new();
        for (k, v) in lines {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}
