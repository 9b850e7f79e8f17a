//! Training configuration and the flat `key=value` text format it is read
//! from and written to.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::relation::{GraphOptions, MuRule, RelationMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    /// Adaptive moment estimation with β₁ = 0.9, β₂ = 0.999, ε = 1e-8.
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Sgd => "sgd",
            Self::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(Error::Config(format!("unknown optimizer `{other}` (sgd, adam)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// One appearance relation per graph; the length is the number of graphs.
    pub relation_modes: Vec<RelationMode>,
    pub d_k: usize,
    /// Accepted for completeness; no computation uses it.
    pub d_s: usize,
    pub mu: MuRule,
    /// Weight of the individual action loss.
    pub lambda: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Per-frame drop probability during stage 2.
    pub frame_dropout: f64,
    pub stage: u8,
    /// Width of the embedded actor features; defaults to the input width.
    pub hidden_dim: Option<usize>,
    pub gcn_layers: usize,
    pub same_frame_only: bool,
    pub ncc_centered: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            relation_modes: vec![RelationMode::EmbeddedDotProduct],
            d_k: 256,
            d_s: 32,
            mu: MuRule::FractionOfWidth(0.2),
            lambda: 1.0,
            batch_size: 16,
            learning_rate: 1e-4,
            epochs: 100,
            optimizer: OptimizerKind::Sgd,
            seed: 0,
            frame_dropout: 0.0,
            stage: 1,
            hidden_dim: None,
            gcn_layers: 1,
            same_frame_only: false,
            ncc_centered: true,
        }
    }
}

pub const TRAIN_KEYS: &[&str] = &[
    "relation",
    "num_graphs",
    "d_k",
    "d_s",
    "mu_fraction",
    "mu_pixels",
    "lambda",
    "batch_size",
    "learning_rate",
    "epochs",
    "optimizer",
    "seed",
    "frame_dropout",
    "stage",
    "hidden_dim",
    "gcn_layers",
    "same_frame_only",
    "ncc_centered",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

/// Parses `key=value` lines. Blank lines and `#` comments are skipped.
pub fn parse_kv_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", idx + 1)))?;
        pairs.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(pairs)
}

/// Parses a single `key=value` override.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}

impl TrainConfig {
    pub fn num_graphs(&self) -> usize {
        self.relation_modes.len()
    }

    pub fn graph_options(&self) -> GraphOptions {
        GraphOptions { same_frame_only: self.same_frame_only, ncc_centered: self.ncc_centered }
    }

    /// Applies `key=value` pairs on top of `self`; later pairs win. Unknown
    /// keys are rejected.
    pub fn with_pairs(mut self, pairs: &[(String, String)]) -> Result<Self> {
        let mut num_graphs: Option<usize> = None;
        let mut relation_given = false;
        for (key, value) in pairs {
            let key = key.as_str();
            match key {
                "relation" => {
                    self.relation_modes = value
                        .split(',')
                        .map(RelationMode::from_str)
                        .collect::<Result<Vec<_>>>()?;
                    relation_given = true;
                }
                "num_graphs" => num_graphs = Some(parse_value(key, value)?),
                "d_k" => self.d_k = parse_value(key, value)?,
                "d_s" => self.d_s = parse_value(key, value)?,
                "mu_fraction" => self.mu = MuRule::FractionOfWidth(parse_value(key, value)?),
                "mu_pixels" => self.mu = MuRule::Pixels(parse_value(key, value)?),
                "lambda" => self.lambda = parse_value(key, value)?,
                "batch_size" => self.batch_size = parse_value(key, value)?,
                "learning_rate" => self.learning_rate = parse_value(key, value)?,
                "epochs" => self.epochs = parse_value(key, value)?,
                "optimizer" => self.optimizer = value.parse()?,
                "seed" => self.seed = parse_value(key, value)?,
                "frame_dropout" => self.frame_dropout = parse_value(key, value)?,
                "stage" => self.stage = parse_value(key, value)?,
                "hidden_dim" => {
                    self.hidden_dim = match value.as_str() {
                        "" | "auto" => None,
                        v => Some(parse_value(key, v)?),
                    }
                }
                "gcn_layers" => self.gcn_layers = parse_value(key, value)?,
                "same_frame_only" => self.same_frame_only = parse_value(key, value)?,
                "ncc_centered" => self.ncc_centered = parse_value(key, value)?,
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        if let Some(n) = num_graphs {
            match self.relation_modes.as_slice() {
                _ if self.relation_modes.len() == n => {}
                [single] => self.relation_modes = vec![*single; n],
                modes if relation_given => {
                    return Err(Error::Config(format!(
                        "num_graphs={n} conflicts with {} relation modes",
                        modes.len()
                    )))
                }
                modes => self.relation_modes = vec![modes[0]; n],
            }
        }
        self.validate()?;
        Ok(self)
    }

    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        Self::default().with_pairs(pairs)
    }

    /// Every field in a fixed key order, suitable for [`Self::from_pairs`].
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let modes: Vec<&str> = self.relation_modes.iter().map(|m| m.as_str()).collect();
        let mut pairs = vec![
            ("relation", modes.join(",")),
            ("num_graphs", self.num_graphs().to_string()),
            ("d_k", self.d_k.to_string()),
            ("d_s", self.d_s.to_string()),
        ];
        pairs.push(match self.mu {
            MuRule::FractionOfWidth(f) => ("mu_fraction", f.to_string()),
            MuRule::Pixels(p) => ("mu_pixels", p.to_string()),
        });
        pairs.extend([
            ("lambda", self.lambda.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("epochs", self.epochs.to_string()),
            ("optimizer", self.optimizer.to_string()),
            ("seed", self.seed.to_string()),
            ("frame_dropout", self.frame_dropout.to_string()),
            ("stage", self.stage.to_string()),
            ("hidden_dim", self.hidden_dim.map_or_else(|| "auto".to_owned(), |h| h.to_string())),
            ("gcn_layers", self.gcn_layers.to_string()),
            ("same_frame_only", self.same_frame_only.to_string()),
            ("ncc_centered", self.ncc_centered.to_string()),
        ]);
        pairs
    }

    pub fn to_kv_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.relation_modes.is_empty() {
            return bad("at least one relation graph is required".into());
        }
        if self.d_k == 0 || self.batch_size == 0 || self.gcn_layers == 0 {
            return bad("d_k, batch_size and gcn_layers must be positive".into());
        }
        if self.hidden_dim == Some(0) {
            return bad("hidden_dim must be positive".into());
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be a non-negative number", self.learning_rate));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda {} must be a non-negative number", self.lambda));
        }
        if !(0.0..=1.0).contains(&self.frame_dropout) {
            return bad(format!("frame_dropout {} must lie in [0, 1]", self.frame_dropout));
        }
        if !matches!(self.stage, 1 | 2) {
            return bad(format!("stage {} must be 1 or 2", self.stage));
        }
        self.mu.validate()
    }
}
