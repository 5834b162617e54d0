//! Exact match, corpus BLEU over code tokens, and paired bootstrap tests.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} predictions vs {1} references")]
    LengthMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub const DEFAULT_SEED: u64 = 12345;
pub const BLEU_ORDER: usize = 4;

pub fn exact_match<S: AsRef<str>>(pred: &[S], gold: &[S]) -> bool {
    pred.len() == gold.len() && pred.iter().zip(gold).all(|(a, b)| a.as_ref() == b.as_ref())
}

/// Additive BLEU statistics of one sentence pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BleuStats {
    pub matches: [u64; BLEU_ORDER],
    /// Candidate n-gram totals.
    pub totals: [u64; BLEU_ORDER],
    pub pred_len: u64,
    pub gold_len: u64,
}

impl std::ops::AddAssign for BleuStats {
    fn add_assign(&mut self, o: Self) {
        for n in 0..BLEU_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.pred_len += o.pred_len;
        self.gold_len += o.gold_len;
    }
}

impl BleuStats {
    pub fn of<S: AsRef<str>>(pred: &[S], gold: &[S]) -> Self {
        let pred: Vec<&str> = pred.iter().map(AsRef::as_ref).collect();
        let gold: Vec<&str> = gold.iter().map(AsRef::as_ref).collect();
        let mut stats = BleuStats {
            pred_len: pred.len() as u64,
            gold_len: gold.len() as u64,
            ..Default::default()
        };
        for n in 1..=BLEU_ORDER {
            let pc = ngram_counts(&pred, n);
            let gc = ngram_counts(&gold, n);
            let clipped: usize = pc
                .iter()
                .map(|(g, &c)| c.min(gc.get(g).copied().unwrap_or(0)))
                .sum();
            stats.matches[n - 1] = clipped as u64;
            stats.totals[n - 1] = pred.len().saturating_sub(n - 1) as u64;
        }
        stats
    }

    /// BLEU-4 on a 0-100 scale: uniform weights, brevity penalty, and
    /// add-one smoothing of the 2- to 4-gram precisions. No unigram match
    /// gives 0.
    pub fn score(&self) -> f64 {
        if self.matches[0] == 0 || self.pred_len == 0 {
            return 0.0;
        }
        let mut log_sum = (self.matches[0] as f64 / self.totals[0] as f64).ln();
        for n in 1..BLEU_ORDER {
            log_sum += ((self.matches[n] + 1) as f64 / (self.totals[n] + 1) as f64).ln();
        }
        let (c, r) = (self.pred_len as f64, self.gold_len as f64);
        let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
        100.0 * bp * (log_sum / BLEU_ORDER as f64).exp()
    }
}

fn ngram_counts<'t>(tokens: &'t [&'t str], n: usize) -> HashMap<&'t [&'t str], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Corpus-level BLEU: statistics are summed over sentences before the
/// precisions are formed.
pub fn corpus_bleu<S: AsRef<str>>(preds: &[Vec<S>], golds: &[Vec<S>]) -> Result<f64, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch(preds.len(), golds.len()));
    }
    if golds.is_empty() {
        return Err(EvalError::InvalidArgument("empty reference corpus".into()));
    }
    let mut total = BleuStats::default();
    for (p, g) in preds.iter().zip(golds) {
        total += BleuStats::of(p, g);
    }
    Ok(total.score())
}

pub fn sentence_bleu<S: AsRef<str>>(pred: &[S], gold: &[S]) -> f64 {
    BleuStats::of(pred, gold).score()
}

/// Paired bootstrap over resampled index sets. `metric` maps a sample of
/// example indices to the two systems' scores; the p-value is the share of
/// resamples where system a does not beat system b.
pub fn bootstrap_with<F>(
    n_items: usize,
    resamples: usize,
    seed: u64,
    mut metric: F,
) -> Result<f64, EvalError>
where
    F: FnMut(&[usize]) -> (f64, f64),
{
    if n_items < 2 {
        return Err(EvalError::InvalidArgument(
            "bootstrap needs at least 2 examples".into(),
        ));
    }
    if resamples == 0 {
        return Err(EvalError::InvalidArgument(
            "bootstrap needs at least 1 resample".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample = vec![0usize; n_items];
    let mut not_better = 0usize;
    for _ in 0..resamples {
        for s in sample.iter_mut() {
            *s = rng.gen_range(0..n_items);
        }
        let (a, b) = metric(&sample);
        if a - b <= 0.0 {
            not_better += 1;
        }
    }
    Ok(not_better as f64 / resamples as f64)
}

/// Paired bootstrap on per-example scores, comparing means.
pub fn bootstrap_test(a: &[f64], b: &[f64], resamples: usize, seed: u64) -> Result<f64, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    bootstrap_with(a.len(), resamples, seed, |idx| {
        let diff: f64 = idx.iter().map(|&i| a[i] - b[i]).sum();
        (diff / idx.len() as f64, 0.0)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleScore {
    pub id: String,
    #[serde(rename = "match")]
    pub exact: bool,
    pub sentence_bleu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub baseline_exact_match: f64,
    pub baseline_bleu: f64,
    pub p_exact_match: f64,
    pub p_bleu: f64,
    pub resamples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub examples: usize,
    pub exact_match: f64,
    pub bleu: f64,
    pub per_example: Vec<ExampleScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub significance: Option<Significance>,
}

/// Predictions and references keyed by the same ids, in one order.
pub struct Scored<'a> {
    pub ids: &'a [String],
    pub preds: &'a [Vec<String>],
    pub golds: &'a [Vec<String>],
}

pub fn evaluate(data: &Scored<'_>) -> Result<EvalReport, EvalError> {
    let n = data.golds.len();
    if data.preds.len() != n || data.ids.len() != n {
        return Err(EvalError::LengthMismatch(data.preds.len(), n));
    }
    let bleu = corpus_bleu(data.preds, data.golds)?;
    let per_example: Vec<ExampleScore> = (0..n)
        .map(|i| ExampleScore {
            id: data.ids[i].clone(),
            exact: exact_match(&data.preds[i], &data.golds[i]),
            sentence_bleu: sentence_bleu(&data.preds[i], &data.golds[i]),
        })
        .collect();
    let matches = per_example.iter().filter(|e| e.exact).count();
    Ok(EvalReport {
        examples: n,
        exact_match: matches as f64 / n as f64,
        bleu,
        per_example,
        significance: None,
    })
}

/// Adds bootstrap p-values of `report` against a baseline over the same
/// references: exact match compares per-example means, BLEU recomputes
/// the corpus score on every resample.
pub fn compare(
    report: &mut EvalReport,
    data: &Scored<'_>,
    baseline_preds: &[Vec<String>],
    resamples: usize,
    seed: u64,
) -> Result<(), EvalError> {
    let base = evaluate(&Scored {
        ids: data.ids,
        preds: baseline_preds,
        golds: data.golds,
    })?;
    let as_f = |r: &EvalReport| {
        r.per_example
            .iter()
            .map(|e| f64::from(u8::from(e.exact)))
            .collect::<Vec<_>>()
    };
    let p_exact = bootstrap_test(&as_f(report), &as_f(&base), resamples, seed)?;
    let sys: Vec<BleuStats> = data
        .preds
        .iter()
        .zip(data.golds)
        .map(|(p, g)| BleuStats::of(p, g))
        .collect();
    let bas: Vec<BleuStats> = baseline_preds
        .iter()
        .zip(data.golds)
        .map(|(p, g)| BleuStats::of(p, g))
        .collect();
    let p_bleu = bootstrap_with(sys.len(), resamples, seed, |idx| {
        let (mut a, mut b) = (BleuStats::default(), BleuStats::default());
        for &i in idx {
            a += sys[i];
            b += bas[i];
        }
        (a.score(), b.score())
    })?;
    report.significance = Some(Significance {
        baseline_exact_match: base.exact_match,
        baseline_bleu: base.bleu,
        p_exact_match: p_exact,
        p_bleu,
        resamples,
        seed,
    });
    Ok(())
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24}{:>12}", "metric", "value");
        let _ = writeln!(out, "{:<24}{:>12}", "examples", self.examples);
        let _ = writeln!(out, "{:<24}{:>12.4}", "exact_match", self.exact_match);
        let _ = writeln!(out, "{:<24}{:>12.4}", "bleu", self.bleu);
        if let Some(s) = &self.significance {
            let _ = writeln!(
                out,
                "{:<24}{:>12.4}",
                "baseline_exact_match", s.baseline_exact_match
            );
            let _ = writeln!(out, "{:<24}{:>12.4}", "baseline_bleu", s.baseline_bleu);
            let _ = writeln!(out, "{:<24}{:>12.4}", "p_exact_match", s.p_exact_match);
            let _ = writeln!(out, "{:<24}{:>12.4}", "p_bleu", s.p_bleu);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn exact_match_is_token_level() {
        assert!(exact_match(&toks("x = [ ]"), &toks("x  =  [ ]")));
        assert!(!exact_match(&toks("x = [ ]"), &toks("y = [ ]")));
    }

    #[test]
    fn identical_corpus_scores_100() {
        let c = vec![toks("x = foo ( a , b )"), toks("return y")];
        assert!((corpus_bleu(&c, &c).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_prediction_scores_zero() {
        assert_eq!(
            corpus_bleu(&[toks("a b c d")], &[toks("w x y z")]).unwrap(),
            0.0
        );
        assert_eq!(
            corpus_bleu(&[Vec::<String>::new()], &[toks("w x")]).unwrap(),
            0.0
        );
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert_eq!(
            corpus_bleu(&[toks("a")], &[toks("a"), toks("b")]),
            Err(EvalError::LengthMismatch(1, 2))
        );
        assert!(bootstrap_test(&[1.0, 2.0], &[1.0], 10, 1).is_err());
    }

    #[test]
    fn bootstrap_edge_cases() {
        let a = [0.3, 0.5, 0.9, 0.1];
        assert_eq!(bootstrap_test(&a, &a, 1000, DEFAULT_SEED).unwrap(), 1.0);
        let b: Vec<f64> = a.iter().map(|x| x - 0.1).collect();
        assert_eq!(bootstrap_test(&a, &b, 1000, DEFAULT_SEED).unwrap(), 0.0);
    }
}
