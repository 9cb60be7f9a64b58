//! Model and training hyperparameters, with a flat `key = value` file format.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which parts of the memory weight a model is allowed to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoTopic,
    NoDiscourse,
    NoMemory,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoTopic,
        Variant::NoDiscourse,
        Variant::NoMemory,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoTopic => "no_topic",
            Variant::NoDiscourse => "no_discourse",
            Variant::NoMemory => "no_memory",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(Variant::Full),
            "no_topic" => Ok(Variant::NoTopic),
            "no_discourse" => Ok(Variant::NoDiscourse),
            "no_memory" => Ok(Variant::NoMemory),
            other => Err(Error::config(format!("unknown variant `{other}`"))),
        }
    }
}

/// What the factor encoder's `f_e` layer reads from a turn's bag of words.
/// The discourse posterior and the reconstruction always use raw counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderInput {
    /// Raw word counts.
    Counts,
    /// Counts divided by the turn length. Long turns otherwise saturate the
    /// first tanh layer and the topic posterior stops depending on the input.
    #[default]
    Frequencies,
}

impl EncoderInput {
    pub fn name(self) -> &'static str {
        match self {
            EncoderInput::Counts => "counts",
            EncoderInput::Frequencies => "frequencies",
        }
    }
}

impl FromStr for EncoderInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "counts" => Ok(EncoderInput::Counts),
            "frequencies" => Ok(EncoderInput::Frequencies),
            other => Err(Error::config(format!("unknown encoder input `{other}`"))),
        }
    }
}

/// All hyperparameters of a model and its training run.
///
/// Defaults follow the published setting where one exists (hidden size 512,
/// embedding and memory sizes 200, dropout 0.2, MI weight 0.01, 80 epochs).
/// `hidden` is the size of the concatenated bidirectional state, so each
/// direction carries `hidden / 2` units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of topic factors.
    pub topics: usize,
    /// Number of discourse factors.
    pub discourse: usize,
    /// Vocabulary size, fixed once a corpus is built.
    pub vocab_size: usize,
    pub hidden: usize,
    pub memory_dim: usize,
    pub word_embedding: usize,
    /// Width of the `f_e` layer of the factor encoder.
    pub encoder_hidden: usize,
    /// Dimension of the Gaussian latent that feeds the topic mixture.
    pub latent_dim: usize,
    #[serde(default)]
    pub encoder_input: EncoderInput,
    pub dropout: f64,
    pub lambda: f64,
    pub max_epochs: usize,
    pub gumbel_temperature: f64,
    pub max_len: usize,
    pub seed: u64,
    pub variant: Variant,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            topics: 50,
            discourse: 10,
            vocab_size: 0,
            hidden: 512,
            memory_dim: 200,
            word_embedding: 200,
            encoder_hidden: 256,
            latent_dim: 50,
            encoder_input: EncoderInput::Frequencies,
            dropout: 0.2,
            lambda: 0.01,
            max_epochs: 80,
            gumbel_temperature: 0.67,
            max_len: 150,
            seed: 42,
            variant: Variant::Full,
            learning_rate: 1e-3,
            batch_size: 32,
            patience: 5,
        }
    }
}

impl ModelConfig {
    /// Number of memory rows, `K + D`.
    pub fn memory_rows(&self) -> usize {
        self.topics + self.discourse
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("topics", self.topics),
            ("discourse", self.discourse),
            ("vocab_size", self.vocab_size),
            ("hidden", self.hidden),
            ("memory_dim", self.memory_dim),
            ("word_embedding", self.word_embedding),
            ("encoder_hidden", self.encoder_hidden),
            ("latent_dim", self.latent_dim),
            ("max_len", self.max_len),
            ("batch_size", self.batch_size),
        ];
        for (name, value) in positive {
            if value == 0 {
                return Err(Error::config(format!("`{name}` must be positive")));
            }
        }
        if !self.hidden.is_multiple_of(2) {
            return Err(Error::config("`hidden` must be even (two directions)"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("`dropout` must lie in [0, 1)"));
        }
        if self.gumbel_temperature <= 0.0 || !self.gumbel_temperature.is_finite() {
            return Err(Error::config("`gumbel_temperature` must be positive"));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::config("`learning_rate` must be positive"));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::config("`lambda` must be non-negative"));
        }
        Ok(())
    }

    /// Parse the flat `key = value` format. Unknown keys are rejected; `#`
    /// starts a comment. Keys not present keep their default.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: "<config>".into(),
                line: lineno + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Parse {
                    path: "<config>".into(),
                    line: lineno + 1,
                    message: e.to_string(),
                })?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::config(format!("invalid value `{v}` for `{key}`")))
        }
        match key {
            "topics" | "K" => self.topics = num(key, value)?,
            "discourse" | "D" => self.discourse = num(key, value)?,
            "vocab_size" => self.vocab_size = num(key, value)?,
            "hidden" | "H" => self.hidden = num(key, value)?,
            "memory_dim" | "E" => self.memory_dim = num(key, value)?,
            "word_embedding" => self.word_embedding = num(key, value)?,
            "encoder_hidden" => self.encoder_hidden = num(key, value)?,
            "latent_dim" => self.latent_dim = num(key, value)?,
            "encoder_input" => self.encoder_input = value.parse()?,
            "dropout" => self.dropout = num(key, value)?,
            "lambda" => self.lambda = num(key, value)?,
            "max_epochs" => self.max_epochs = num(key, value)?,
            "gumbel_temperature" => self.gumbel_temperature = num(key, value)?,
            "max_len" | "L" => self.max_len = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "variant" => self.variant = value.parse()?,
            "learning_rate" => self.learning_rate = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "patience" => self.patience = num(key, value)?,
            other => {
                return Err(Error::config(format!(
                    "unknown configuration key `{other}`"
                )))
            }
        }
        Ok(())
    }

    /// Render in the same flat format [`ModelConfig::parse`] reads.
    pub fn to_kv(&self) -> String {
        format!(
            "topics = {}\ndiscourse = {}\nvocab_size = {}\nhidden = {}\nmemory_dim = {}\n\
             word_embedding = {}\nencoder_hidden = {}\nlatent_dim = {}\nencoder_input = {}\n\
             dropout = {}\n\
             lambda = {}\nmax_epochs = {}\ngumbel_temperature = {}\nmax_len = {}\nseed = {}\n\
             variant = {}\nlearning_rate = {}\nbatch_size = {}\npatience = {}\n",
            self.topics,
            self.discourse,
            self.vocab_size,
            self.hidden,
            self.memory_dim,
            self.word_embedding,
            self.encoder_hidden,
            self.latent_dim,
            self.encoder_input.name(),
            self.dropout,
            self.lambda,
            self.max_epochs,
            self.gumbel_temperature,
            self.max_len,
            self.seed,
            self.variant,
            self.learning_rate,
            self.batch_size,
            self.patience,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_roundtrip() {
        let cfg = ModelConfig {
            topics: 3,
            variant: Variant::NoTopic,
            learning_rate: 0.003,
            ..ModelConfig::default()
        };
        let back = ModelConfig::parse(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn parse_reports_line_of_bad_entry() {
        let err = ModelConfig::parse("topics = 3\n# ok\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains(":3:"), "{err}");
        assert!(ModelConfig::parse("variant = sideways").is_err());
    }

    #[test]
    fn validation_rejects_degenerate_sizes() {
        let mut cfg = ModelConfig {
            vocab_size: 10,
            ..ModelConfig::default()
        };
        assert!(cfg.validate().is_ok());
        cfg.hidden = 7;
        assert!(cfg.validate().is_err());
        cfg.hidden = 8;
        cfg.gumbel_temperature = 0.0;
        assert!(cfg.validate().is_err());
    }
}
