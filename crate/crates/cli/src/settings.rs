//! Config resolution: defaults, then the config file, then flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::Args;
use piecegen::config::{Config, Style};
use piecegen::decoder::Aggregation;
use piecegen::{grammars, load_grammar, Grammar};

use crate::{Classify, Failure};

#[derive(Args, Debug, Default)]
pub struct Overrides {
    /// Dataset style (`hs` or `django`); sets the default neighbor count.
    #[arg(long, global = true, env = "PIECEGEN_STYLE")]
    style: Option<Style>,
    /// Bundled grammar name or grammar file.
    #[arg(long, global = true, env = "PIECEGEN_GRAMMAR")]
    grammar: Option<String>,
    /// Retrieved neighbors per query.
    #[arg(long, global = true, env = "PIECEGEN_M")]
    m: Option<usize>,
    #[arg(long, global = true, env = "PIECEGEN_N_MAX")]
    n_max: Option<usize>,
    #[arg(long, global = true, env = "PIECEGEN_LAMBDA")]
    lambda: Option<f64>,
    #[arg(long, global = true, env = "PIECEGEN_BEAM")]
    beam: Option<usize>,
    #[arg(long, global = true, env = "PIECEGEN_MAX_STEPS")]
    max_steps: Option<usize>,
    #[arg(long, global = true, env = "PIECEGEN_AGG")]
    agg: Option<Aggregation>,
    #[arg(long, global = true, env = "PIECEGEN_REPEAT_LIMIT")]
    repeat_limit: Option<bool>,
    /// Base scorer name (`count` or `uniform`).
    #[arg(long, global = true, env = "PIECEGEN_SCORER")]
    scorer: Option<String>,
    #[arg(long, global = true, env = "PIECEGEN_CONTEXT")]
    context: Option<usize>,
    #[arg(long, global = true, env = "PIECEGEN_ALPHA")]
    alpha: Option<f64>,
    #[arg(long, global = true, env = "PIECEGEN_LOWERCASE")]
    lowercase: Option<bool>,
    #[arg(long, global = true, env = "PIECEGEN_NORM_CONSTANT")]
    norm_constant: Option<f64>,
    #[arg(long, global = true, env = "PIECEGEN_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true, env = "PIECEGEN_BOOTSTRAP_RESAMPLES")]
    bootstrap_resamples: Option<usize>,
}

pub fn resolve(file: Option<&Path>, o: &Overrides) -> Result<Config, Failure> {
    let mut c = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))
                .usage()?;
            Config::from_toml(&text)
                .with_context(|| format!("parsing config {}", path.display()))
                .usage()?
        }
        None => Config::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = &o.$field { c.$field = v.clone(); })*
        };
    }
    set!(
        style,
        grammar,
        n_max,
        lambda,
        beam,
        max_steps,
        agg,
        repeat_limit,
        scorer,
        context,
        alpha,
        lowercase,
        seed,
        bootstrap_resamples
    );
    if o.m.is_some() {
        c.m = o.m;
    }
    if o.norm_constant.is_some() {
        c.norm_constant = o.norm_constant;
    }
    c.decode_config().validate().usage()?;
    Ok(c)
}

/// A bundled grammar by name, otherwise a grammar file.
pub fn grammar(config: &Config) -> Result<(Arc<Grammar>, Option<PathBuf>), Failure> {
    let (text, path) = match grammars::bundled(&config.grammar) {
        Some(text) => (text.to_string(), None),
        None => {
            let path = PathBuf::from(&config.grammar);
            let text = std::fs::read_to_string(&path)
                .with_context(|| {
                    format!(
                        "grammar `{}` is neither bundled nor a readable file",
                        config.grammar
                    )
                })
                .usage()?;
            (text, Some(path))
        }
    };
    let g = load_grammar(&text)
        .with_context(|| format!("loading grammar {}", config.grammar))
        .data()?;
    Ok((Arc::new(g), path))
}

/// An explicit path, or the config's, or a usage error naming the flag.
pub fn required(
    explicit: Option<&PathBuf>,
    configured: Option<&PathBuf>,
    flag: &str,
) -> Result<PathBuf, Failure> {
    explicit.or(configured).cloned().ok_or_else(|| {
        Failure::Usage(anyhow::anyhow!(
            "missing --{flag} (or `{flag}` in the config)"
        ))
    })
}
