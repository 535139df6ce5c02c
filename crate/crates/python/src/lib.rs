//! Python bindings. Samples cross the boundary as JSON strings in the
//! corpus row format, so `json.dumps(row)` of a corpus row works as input.

use std::path::PathBuf;

use jitcorpus::dataset::{self, ClassWeight, DatasetSample};
use jitcorpus::encoder::{Encoder, EncodedInput, Encoding, TokenizerSpec};
use jitcorpus::perturber::{self, PerturbationConfig, PerturbationKind, Phase};
use jitcorpus::stats;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl ToString) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse_sample(sample: &str) -> PyResult<DatasetSample> {
    serde_json::from_str(sample).map_err(|e| value_err(format!("bad sample: {e}")))
}

fn encoder(tokenizer: &str, budget: usize, context: usize) -> PyResult<Encoder> {
    let spec: TokenizerSpec = tokenizer.parse().map_err(value_err)?;
    Ok(Encoder::from_spec(&spec.with_budget(budget)).map_err(value_err)?.with_context(context))
}

fn unpack(out: EncodedInput) -> (Vec<String>, bool) {
    (out.tokens, out.truncated)
}

/// Tokens of `text` under the punctuation-aware whitespace tokenizer.
#[pyfunction]
fn tokenize(text: &str) -> Vec<String> {
    jitcorpus::encoder::Tokenizer::whitespace_punct().tokenize(text)
}

/// Encodes one sample. Returns (tokens, truncated).
#[pyfunction]
#[pyo3(signature = (sample, encoding, budget = 512, tokenizer = "whitespace-punct", context = 3))]
fn encode(sample: &str, encoding: &str, budget: usize, tokenizer: &str, context: usize) -> PyResult<(Vec<String>, bool)> {
    let s = parse_sample(sample)?;
    let encoding: Encoding = encoding.parse().map_err(value_err)?;
    let out = encoder(tokenizer, budget, context)?.encode(&s, encoding).map_err(value_err)?;
    Ok(unpack(out))
}

/// Perturbed encoding of one sample. Returns (tokens, truncated, applied).
#[pyfunction]
#[pyo3(signature = (sample, kind, phase, seed, budget = 512, probability = None, tokenizer = "whitespace-punct"))]
fn perturb(
    sample: &str,
    kind: &str,
    phase: &str,
    seed: u64,
    budget: usize,
    probability: Option<f64>,
    tokenizer: &str,
) -> PyResult<(Vec<String>, bool, bool)> {
    let s = parse_sample(sample)?;
    let kind: PerturbationKind = kind.parse().map_err(value_err)?;
    let phase: Phase = phase.parse().map_err(value_err)?;
    let mut cfg = PerturbationConfig::new(kind, seed);
    if let Some(p) = probability {
        if !(0.0..=1.0).contains(&p) {
            return Err(value_err(format!("probability {p} outside [0, 1]")));
        }
        cfg = cfg.with_probability(p);
    }
    let out = perturber::perturb(&encoder(tokenizer, budget, 3)?, &s, &cfg, phase).map_err(value_err)?;
    let applied = out.perturbation.as_ref().is_some_and(|p| p.applied);
    let (tokens, truncated) = unpack(out);
    Ok((tokens, truncated, applied))
}

/// Rows of a corpus file as JSON strings.
#[pyfunction]
fn load_corpus(path: PathBuf) -> PyResult<Vec<String>> {
    let (_, samples) = dataset::load(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
    samples
        .iter()
        .map(|s| serde_json::to_string(s).map_err(value_err))
        .collect()
}

/// Negative-to-positive ratio, rendered with six decimals.
#[pyfunction]
fn class_weight(negatives: u64, positives: u64) -> PyResult<String> {
    Ok(ClassWeight::new(negatives, positives).map_err(value_err)?.render())
}

#[pyfunction]
fn partial_eta_sq(f: f64, df_num: f64, df_den: f64) -> f64 {
    stats::partial_eta_sq(f, df_num, df_den)
}

#[pyfunction]
fn cohens_f(partial_eta_sq: f64) -> f64 {
    stats::cohens_f(partial_eta_sq)
}

/// Average precision of `scores` against 0/1 `labels`.
#[pyfunction]
fn pr_auc(scores: Vec<f64>, labels: Vec<u8>) -> PyResult<f64> {
    stats::pr_auc(&scores, &labels).map_err(value_err)
}

/// One-sided signed-rank test of a positive shift. Returns
/// (w_plus, p, n_nonzero, exact).
#[pyfunction]
fn wilcoxon_signed_rank(deltas: Vec<f64>) -> (f64, f64, usize, bool) {
    let r = stats::wilcoxon_signed_rank(&deltas);
    (r.w_plus, r.p, r.n_nonzero, r.exact)
}

#[pyfunction]
fn holm(p_values: Vec<f64>) -> PyResult<Vec<f64>> {
    stats::holm(&p_values).map_err(value_err)
}

/// Percentile bootstrap interval for the mean.
#[pyfunction]
#[pyo3(signature = (deltas, resamples = 10_000, seed = 0, level = 0.95))]
fn bootstrap_mean_ci(deltas: Vec<f64>, resamples: usize, seed: u64, level: f64) -> PyResult<(f64, f64)> {
    if deltas.is_empty() || resamples == 0 {
        return Err(value_err("need at least one delta and one resample"));
    }
    Ok(stats::bootstrap_mean_ci(&deltas, resamples, seed, level))
}

#[pymodule]
#[pyo3(name = "jitcorpus")]
fn jitcorpus_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(tokenize, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(perturb, m)?)?;
    m.add_function(wrap_pyfunction!(load_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(class_weight, m)?)?;
    m.add_function(wrap_pyfunction!(partial_eta_sq, m)?)?;
    m.add_function(wrap_pyfunction!(cohens_f, m)?)?;
    m.add_function(wrap_pyfunction!(pr_auc, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon_signed_rank, m)?)?;
    m.add_function(wrap_pyfunction!(holm, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_mean_ci, m)?)?;
    m.add("ENCODINGS", Encoding::ALL.map(Encoding::name).to_vec())?;
    m.add("PERTURBATIONS", PerturbationKind::ALL.map(PerturbationKind::name).to_vec())?;
    Ok(())
}
