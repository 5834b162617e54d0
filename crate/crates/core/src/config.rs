//! Run configuration, serializable to and from TOML.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::decoder::{Aggregation, CountScorerConfig, DecodeConfig};
use crate::evalkit::DEFAULT_SEED;
use crate::retrieval::IndexOptions;

/// Dataset style; selects the default number of retrieved neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    /// Card-game style code: long outputs, few close neighbors.
    #[default]
    Hs,
    /// One-line statements: many close neighbors.
    Django,
}

impl Style {
    pub fn default_m(self) -> usize {
        match self {
            Style::Hs => 3,
            Style::Django => 10,
        }
    }
}

impl std::str::FromStr for Style {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hs" => Ok(Style::Hs),
            "django" => Ok(Style::Django),
            other => Err(format!("unknown style `{other}` (expected hs or django)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Bundled grammar name (`toy`, `python-mini`) or a grammar file path.
    pub grammar: String,
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub style: Style,
    /// Retrieved neighbors per query; defaults by style.
    pub m: Option<usize>,
    pub n_max: usize,
    pub lambda: f64,
    pub beam: usize,
    pub max_steps: usize,
    pub agg: Aggregation,
    pub repeat_limit: bool,
    pub scorer: String,
    /// Ancestor actions seen by the count scorer.
    pub context: usize,
    pub alpha: f64,
    pub lowercase: bool,
    pub norm_constant: Option<f64>,
    pub seed: u64,
    pub bootstrap_resamples: usize,
}

impl Default for Config {
    fn default() -> Self {
        let decode = DecodeConfig::default();
        let count = CountScorerConfig::default();
        Config {
            grammar: "python-mini".into(),
            train: None,
            dev: None,
            test: None,
            style: Style::Hs,
            m: None,
            n_max: decode.n_max,
            lambda: decode.lambda,
            beam: decode.beam,
            max_steps: decode.max_steps,
            agg: decode.agg,
            repeat_limit: decode.repeat_limit,
            scorer: "count".into(),
            context: count.context,
            alpha: count.alpha,
            lowercase: true,
            norm_constant: None,
            seed: DEFAULT_SEED,
            bootstrap_resamples: 10_000,
        }
    }
}

impl Config {
    pub fn for_style(style: Style) -> Self {
        Config {
            style,
            ..Config::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Neighbors per query: the explicit value or the style default.
    pub fn retrieval_m(&self) -> usize {
        self.m.unwrap_or_else(|| self.style.default_m())
    }

    pub fn decode_config(&self) -> DecodeConfig {
        DecodeConfig {
            beam: self.beam,
            lambda: self.lambda,
            n_max: self.n_max,
            max_steps: self.max_steps,
            agg: self.agg,
            repeat_limit: self.repeat_limit,
        }
    }

    pub fn count_config(&self) -> CountScorerConfig {
        CountScorerConfig {
            context: self.context,
            alpha: self.alpha,
        }
    }

    pub fn index_options(&self) -> IndexOptions {
        IndexOptions {
            lowercase: self.lowercase,
            norm_constant: self.norm_constant,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_keeps_overrides() {
        let mut c = Config::for_style(Style::Django);
        c.lambda = 1.5;
        c.norm_constant = Some(0.25);
        c.train = Some("train.jsonl".into());
        assert_eq!(Config::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let c = Config::from_toml("style = \"django\"\nbeam = 4\n").unwrap();
        assert_eq!(c.retrieval_m(), 10);
        assert_eq!(c.beam, 4);
        assert_eq!(c.n_max, 4);
        assert!(Config::from_toml("bogus = 1\n").is_err());
    }
}
