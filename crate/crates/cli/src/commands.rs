use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use piecegen::corpus::{corpus_stats, gold_tokens, load_examples, read_records, CorpusStats};
use piecegen::decoder::{ScorerInputs, ScorerRegistry};
use piecegen::evalkit::{compare, evaluate, Scored};
use piecegen::pipeline::{guide, Generator, PipelineError};
use piecegen::retrieval::{load_index, save_index};
use piecegen::{build_index, DecodeError, Grammar, RetrievalIndex, TrainingExample};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::manifest::Manifest;
use crate::settings::{self, required};
use crate::{
    BuildIndexArgs, Classify, Cli, Command, EvalArgs, Failure, Format, GenerateArgs, InspectArgs,
    ValidateArgs,
};

/// One line of a predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub code_tokens: Vec<String>,
    #[serde(default)]
    pub action_count: usize,
    #[serde(default)]
    pub matched_piece_count: usize,
    #[serde(default)]
    pub base_logprob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    let config = settings::resolve(cli.config.as_deref(), &cli.overrides)?;
    let (grammar, grammar_path) = settings::grammar(&config)?;
    let name = match &cli.command {
        Command::BuildIndex(_) => "build-index",
        Command::Generate(_) => "generate",
        Command::Eval(_) => "eval",
        Command::InspectPieces(_) => "inspect-pieces",
        Command::ValidateCorpus(_) => "validate-corpus",
    };
    let mut manifest = Manifest::new(name, &config);
    manifest.grammar_hash = Some(grammar.content_hash());
    if let Some(path) = &grammar_path {
        read(path, &mut manifest, "grammar")?;
    }
    let ctx = Ctx {
        config: &config,
        grammar: &grammar,
    };
    let output = match &cli.command {
        Command::BuildIndex(a) => ctx.build_index(a, &mut manifest)?,
        Command::Generate(a) => ctx.generate(a, &mut manifest)?,
        Command::Eval(a) => ctx.eval(a, &mut manifest)?,
        Command::InspectPieces(a) => ctx.inspect(a, &mut manifest)?,
        Command::ValidateCorpus(a) => ctx.validate(a, &mut manifest)?,
    };
    let outcome = output.outcome;
    manifest
        .emit(cli.manifest.as_deref(), output.path.as_deref())
        .data()?;
    outcome
}

struct Ctx<'a> {
    config: &'a piecegen::config::Config,
    grammar: &'a std::sync::Arc<Grammar>,
}

/// Output location of a command, and a failure raised after the output
/// was written.
struct Output {
    path: Option<PathBuf>,
    outcome: Result<(), Failure>,
}

impl Output {
    fn ok(path: Option<&Path>) -> Self {
        Output {
            path: path.map(Path::to_path_buf),
            outcome: Ok(()),
        }
    }
}

fn read(path: &Path, manifest: &mut Manifest, role: &str) -> Result<Vec<u8>, Failure> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .data()?;
    manifest.input(role, path, &bytes);
    Ok(bytes)
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .data(),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .data()
        }
    }
}

impl Ctx<'_> {
    fn examples(
        &self,
        path: &Path,
        manifest: &mut Manifest,
        role: &str,
    ) -> Result<Vec<TrainingExample>, Failure> {
        let bytes = read(path, manifest, role)?;
        load_examples(self.grammar, bytes.as_slice())
            .with_context(|| path.display().to_string())
            .data()
    }

    fn index(&self, path: &Path, manifest: &mut Manifest) -> Result<RetrievalIndex, Failure> {
        let bytes = read(path, manifest, "index")?;
        load_index(bytes.as_slice(), self.grammar.clone())
            .with_context(|| path.display().to_string())
            .data()
    }

    fn build_index(&self, a: &BuildIndexArgs, manifest: &mut Manifest) -> Result<Output, Failure> {
        let train = required(a.train.as_ref(), self.config.train.as_ref(), "train")?;
        let examples = self.examples(&train, manifest, "train")?;
        let index =
            build_index(self.grammar.clone(), examples, self.config.index_options()).data()?;
        let mut bytes = Vec::new();
        save_index(&index, &mut bytes).data()?;
        std::fs::write(&a.out, &bytes)
            .with_context(|| format!("writing {}", a.out.display()))
            .data()?;
        eprintln!(
            "indexed {} examples, norm constant {:.6}",
            index.len(),
            index.norm_constant()
        );
        Ok(Output::ok(Some(&a.out)))
    }

    fn generate(&self, a: &GenerateArgs, manifest: &mut Manifest) -> Result<Output, Failure> {
        if a.index.is_none() && !a.no_retrieval {
            return Err(Failure::Usage(anyhow!(
                "generate needs --index or --no-retrieval"
            )));
        }
        if a.jobs == 0 {
            return Err(Failure::Usage(anyhow!("--jobs must be at least 1")));
        }
        if !(0.0..=1.0).contains(&a.max_failure_rate) {
            return Err(Failure::Usage(anyhow!(
                "--max-failure-rate must lie in [0, 1]"
            )));
        }
        let index = a
            .index
            .as_deref()
            .map(|p| self.index(p, manifest))
            .transpose()?;
        let owned;
        let examples: &[TrainingExample] = match &index {
            Some(index) => index.examples(),
            None => {
                let train = required(a.train.as_ref(), self.config.train.as_ref(), "train")?;
                owned = self.examples(&train, manifest, "train")?;
                &owned
            }
        };
        let inputs = ScorerInputs {
            grammar: self.grammar,
            examples,
            count: self.config.count_config(),
        };
        let scorer = ScorerRegistry::default()
            .build(&self.config.scorer, &inputs)
            .usage()?;
        let queries_path = required(a.queries.as_ref(), self.config.test.as_ref(), "queries")?;
        let bytes = read(&queries_path, manifest, "queries")?;
        let queries = read_records(bytes.as_slice())
            .with_context(|| queries_path.display().to_string())
            .data()?;

        let generator = Generator {
            grammar: self.grammar,
            index: if a.no_retrieval { None } else { index.as_ref() },
            scorer: scorer.as_ref(),
            m: self.config.retrieval_m(),
            decode: self.config.decode_config(),
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(a.jobs)
            .build()
            .data()?;
        let predictions: Vec<Prediction> = pool.install(|| {
            queries
                .par_iter()
                .map(|q| {
                    let record = &q.value;
                    match generator.generate(&record.nl) {
                        Ok(gen) => Prediction {
                            id: record.id.clone(),
                            code_tokens: gen.code_tokens,
                            action_count: gen.best.tree.len(),
                            matched_piece_count: gen.best.matched_pieces,
                            base_logprob: Some(gen.best.base_logprob),
                            error: None,
                        },
                        Err(e) => {
                            log::debug!("{}: {e}", record.id);
                            let error = match e {
                                PipelineError::Decode(DecodeError::Timeout {
                                    max_steps, ..
                                }) => {
                                    format!("timeout after {max_steps} steps")
                                }
                                other => other.to_string(),
                            };
                            log::warn!("{}: {error}", record.id);
                            Prediction {
                                id: record.id.clone(),
                                code_tokens: Vec::new(),
                                action_count: 0,
                                matched_piece_count: 0,
                                base_logprob: None,
                                error: Some(error),
                            }
                        }
                    }
                })
                .collect()
        });
        let mut text = String::new();
        for p in &predictions {
            text.push_str(&serde_json::to_string(p).data()?);
            text.push('\n');
        }
        write_output(a.out.as_deref(), &text)?;

        let failed = predictions.iter().filter(|p| p.error.is_some()).count();
        let mut output = Output::ok(a.out.as_deref());
        if failed > 0 {
            eprintln!("{failed} of {} queries failed to decode", predictions.len());
        }
        if failed as f64 > a.max_failure_rate * predictions.len() as f64 {
            output.outcome = Err(Failure::Decode(format!(
                "{failed} of {} queries failed, above the tolerated rate {}",
                predictions.len(),
                a.max_failure_rate
            )));
        }
        Ok(output)
    }

    fn predictions(
        &self,
        path: &Path,
        manifest: &mut Manifest,
        role: &str,
    ) -> Result<HashMap<String, Vec<String>>, Failure> {
        let bytes = read(path, manifest, role)?;
        let text = String::from_utf8(bytes)
            .with_context(|| path.display().to_string())
            .data()?;
        let mut out = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let p: Prediction = serde_json::from_str(line)
                .with_context(|| format!("{}: line {}", path.display(), i + 1))
                .data()?;
            if out.insert(p.id.clone(), p.code_tokens).is_some() {
                return Err(Failure::Data(anyhow!(
                    "{}: line {}: duplicate id `{}`",
                    path.display(),
                    i + 1,
                    p.id
                )));
            }
        }
        Ok(out)
    }

    fn eval(&self, a: &EvalArgs, manifest: &mut Manifest) -> Result<Output, Failure> {
        let gold_path = required(a.gold.as_ref(), self.config.test.as_ref(), "gold")?;
        let bytes = read(&gold_path, manifest, "gold")?;
        let records = read_records(bytes.as_slice())
            .with_context(|| gold_path.display().to_string())
            .data()?;
        let mut ids = Vec::with_capacity(records.len());
        let mut golds = Vec::with_capacity(records.len());
        for r in &records {
            let tokens = gold_tokens(self.grammar, &r.value)
                .map_err(|m| anyhow!("{}: line {}: {m}", gold_path.display(), r.line))
                .data()?
                .ok_or_else(|| {
                    anyhow!(
                        "{}: line {}: record has no gold code",
                        gold_path.display(),
                        r.line
                    )
                })
                .data()?;
            ids.push(r.value.id.clone());
            golds.push(tokens);
        }
        let lookup = |map: &mut HashMap<String, Vec<String>>,
                      path: &Path|
         -> Result<Vec<Vec<String>>, Failure> {
            ids.iter()
                .map(|id| {
                    map.remove(id).ok_or_else(|| {
                        Failure::Data(anyhow!("{}: no prediction for `{id}`", path.display()))
                    })
                })
                .collect()
        };
        let mut preds_map = self.predictions(&a.preds, manifest, "preds")?;
        let preds = lookup(&mut preds_map, &a.preds)?;
        let data = Scored {
            ids: &ids,
            preds: &preds,
            golds: &golds,
        };
        let mut report = evaluate(&data).data()?;
        if let Some(base_path) = &a.baseline {
            let mut base_map = self.predictions(base_path, manifest, "baseline")?;
            let base = lookup(&mut base_map, base_path)?;
            compare(
                &mut report,
                &data,
                &base,
                self.config.bootstrap_resamples,
                self.config.seed,
            )
            .data()?;
        }
        let text = match a.format {
            Format::Json => serde_json::to_string_pretty(&report).data()? + "\n",
            Format::Table => report.to_table(),
        };
        write_output(a.out.as_deref(), &text)?;
        Ok(Output::ok(a.out.as_deref()))
    }

    fn inspect(&self, a: &InspectArgs, manifest: &mut Manifest) -> Result<Output, Failure> {
        let index = self.index(&a.index, manifest)?;
        let q: Vec<String> = a.query.split_whitespace().map(str::to_string).collect();
        if q.is_empty() {
            return Err(Failure::Usage(anyhow!("--query is empty")));
        }
        let guidance = guide(&index, &q, self.config.retrieval_m(), self.config.n_max).data()?;
        for n in &guidance.neighbors {
            log::info!("neighbor {} similarity {:.4}", n.id, n.similarity);
        }
        write_output(None, &guidance.table.render(self.grammar))?;
        Ok(Output::ok(None))
    }

    fn validate(&self, a: &ValidateArgs, manifest: &mut Manifest) -> Result<Output, Failure> {
        let splits = [
            ("train", a.train.as_ref().or(self.config.train.as_ref())),
            ("dev", a.dev.as_ref().or(self.config.dev.as_ref())),
            ("test", a.test.as_ref().or(self.config.test.as_ref())),
        ];
        let mut report: Vec<(&str, CorpusStats)> = Vec::new();
        for (name, path) in splits {
            let Some(path) = path else { continue };
            let examples = self.examples(path, manifest, name)?;
            let stats = corpus_stats(self.grammar, &examples)
                .map_err(|m| anyhow!(m))
                .data()?;
            report.push((name, stats));
        }
        if report.is_empty() {
            return Err(Failure::Usage(anyhow!(
                "no corpus split given (--train, --dev or --test)"
            )));
        }
        let text = match a.format {
            Format::Json => {
                let map: serde_json::Map<String, serde_json::Value> = report
                    .iter()
                    .map(|(n, s)| Ok((n.to_string(), serde_json::to_value(s)?)))
                    .collect::<Result<_, serde_json::Error>>()
                    .data()?;
                serde_json::to_string_pretty(&map).data()? + "\n"
            }
            Format::Table => {
                let mut t = format!(
                    "{:<8}{:>10}{:>16}{:>16}{:>14}\n",
                    "split", "examples", "avg_nl_tokens", "avg_ast_nodes", "avg_actions"
                );
                for (n, s) in &report {
                    t.push_str(&format!(
                        "{:<8}{:>10}{:>16.2}{:>16.2}{:>14.2}\n",
                        n, s.examples, s.avg_nl_tokens, s.avg_ast_nodes, s.avg_actions
                    ));
                }
                t
            }
        };
        write_output(None, &text)?;
        Ok(Output::ok(None))
    }
}
