//! Run configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments start with '#'
//! lambda = 1.0
//! t_n = 0.9
//! pos_weight = auto
//! mask_policy = first
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{HighwayError, Result};

/// How the one-row-per-category edge mask picks its training node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPolicy {
    /// Lowest-index training node of each category.
    First,
    /// Most confidently predicted training node of each category.
    Confident,
}

impl FromStr for MaskPolicy {
    type Err = HighwayError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(MaskPolicy::First),
            "confident" => Ok(MaskPolicy::Confident),
            other => Err(HighwayError::Config(format!(
                "mask_policy must be `first` or `confident`, got `{other}`"
            ))),
        }
    }
}

impl fmt::Display for MaskPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            MaskPolicy::First => "first",
            MaskPolicy::Confident => "confident",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighwayConfig {
    /// Weight of the pair loss against the node loss.
    pub lambda: f64,
    /// Node-confidence threshold (strict `>`).
    pub t_n: f64,
    /// Pair-score threshold (inclusive `>=`).
    pub t_p: f64,
    pub epochs: usize,
    pub patience: usize,
    /// Maximum number of outer self-training iterations.
    pub max_t: usize,
    pub lr: f64,
    pub dropout: f64,
    pub hidden: usize,
    pub weight_decay: f64,
    /// Positive-pair weight; `None` derives it from the pair set.
    pub pos_weight: Option<f64>,
    pub quota_per_class: usize,
    pub mask_policy: MaskPolicy,
    /// Return the accuracy of the iteration that triggered the stop rather
    /// than of the best-validation iteration.
    pub literal_algorithm: bool,
    /// Keep training the previous iteration's parameters instead of
    /// reinitializing each outer iteration.
    pub continue_training: bool,
    /// Require the pair matrix to agree before proposing an edge.
    pub joint_decision: bool,
    /// Cap on edges proposed per mask row; `None` is unlimited.
    pub max_edges_per_row: Option<usize>,
    pub normalize_features: bool,
    pub split_seed: u64,
    pub init_seed: u64,
}

impl Default for HighwayConfig {
    fn default() -> Self {
        HighwayConfig {
            lambda: 1.0,
            t_n: 0.9,
            t_p: 0.9,
            epochs: 200,
            patience: 10,
            max_t: 10,
            lr: 0.01,
            dropout: 0.5,
            hidden: 64,
            weight_decay: 5e-4,
            pos_weight: None,
            quota_per_class: 20,
            mask_policy: MaskPolicy::First,
            literal_algorithm: false,
            continue_training: false,
            joint_decision: true,
            max_edges_per_row: None,
            normalize_features: true,
            split_seed: 0,
            init_seed: 0,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "lambda",
    "t_n",
    "t_p",
    "epochs",
    "patience",
    "max_t",
    "lr",
    "dropout",
    "hidden",
    "weight_decay",
    "pos_weight",
    "quota_per_class",
    "mask_policy",
    "literal_algorithm",
    "continue_training",
    "joint_decision",
    "max_edges_per_row",
    "normalize_features",
    "split_seed",
    "init_seed",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| HighwayError::Config(format!("invalid value `{value}` for `{key}`")))
}

impl HighwayConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "lambda" => self.lambda = parse(key, value)?,
            "t_n" => self.t_n = parse(key, value)?,
            "t_p" => self.t_p = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "max_t" => self.max_t = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "pos_weight" => {
                self.pos_weight = match value {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "quota_per_class" => self.quota_per_class = parse(key, value)?,
            "mask_policy" => self.mask_policy = value.parse()?,
            "literal_algorithm" => self.literal_algorithm = parse(key, value)?,
            "continue_training" => self.continue_training = parse(key, value)?,
            "joint_decision" => self.joint_decision = parse(key, value)?,
            "max_edges_per_row" => {
                self.max_edges_per_row = match value {
                    "unlimited" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "normalize_features" => self.normalize_features = parse(key, value)?,
            "split_seed" => self.split_seed = parse(key, value)?,
            "init_seed" => self.init_seed = parse(key, value)?,
            other => return Err(HighwayError::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HighwayError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            self.set(key.trim(), value).map_err(|e| match e {
                HighwayError::Config(m) => HighwayError::Config(format!("line {}: {m}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HighwayError::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(HighwayError::Config(m.to_string()));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail("lambda must be a finite value >= 0");
        }
        if !(0.0..=1.0).contains(&self.t_n) || !(0.0..=1.0).contains(&self.t_p) {
            return fail("t_n and t_p must lie in [0, 1]");
        }
        if self.epochs < 1 {
            return fail("epochs must be >= 1");
        }
        if self.max_t < 1 {
            return fail("max_t must be >= 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be > 0");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail("dropout must lie in [0, 1)");
        }
        if self.hidden < 1 {
            return fail("hidden must be >= 1");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("weight_decay must be >= 0");
        }
        if let Some(w) = self.pos_weight {
            if !(w > 0.0 && w.is_finite()) {
                return fail("pos_weight must be > 0 or `auto`");
            }
        }
        if self.quota_per_class < 1 {
            return fail("quota_per_class must be >= 1");
        }
        Ok(())
    }
}
