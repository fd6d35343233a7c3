//! Prompt construction, numeric label mapping, and candidate scoring.
//!
//! Candidates (entities or relations) are mapped to dense integer labels in
//! first-appearance order; prompts render ids and labels rather than lexical
//! content. A [`ScorerBackend`] turns a prompt into one logit per expected
//! label — either the deterministic [`StubScorer`] or an external inference
//! service via [`HttpScorer`] — and [`normalize`] converts logits into a
//! probability distribution with a numerically stable softmax.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{OnsepError, Result};
use crate::tkg::{EventChain, Query};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingKind {
    Entity,
    Relation,
}

/// Bijection between candidate keys (entity or relation ids) and dense
/// labels assigned in first-appearance order.
#[derive(Debug, Clone)]
pub struct LabelMapping {
    kind: MappingKind,
    keys: Vec<u64>,
    labels: HashMap<u64, usize>,
}

impl LabelMapping {
    /// Assign the next label to the first occurrence of each distinct
    /// candidate. Duplicates after the first occurrence are ignored.
    pub fn from_candidates(kind: MappingKind, candidates: impl IntoIterator<Item = u64>) -> Result<Self> {
        let mut keys = Vec::new();
        let mut labels = HashMap::new();
        for key in candidates {
            if !labels.contains_key(&key) {
                labels.insert(key, keys.len());
                keys.push(key);
            }
        }
        if keys.is_empty() {
            return Err(OnsepError::Argument("candidate list is empty".into()));
        }
        Ok(LabelMapping { kind, keys, labels })
    }

    pub fn kind(&self) -> MappingKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn label_of(&self, key: u64) -> Option<usize> {
        self.labels.get(&key).copied()
    }

    pub fn key_of(&self, label: usize) -> Option<u64> {
        self.keys.get(label).copied()
    }

    /// Every label, in label order.
    pub fn all_labels(&self) -> Vec<usize> {
        (0..self.keys.len()).collect()
    }
}

/// A rendered prompt plus the labels the backend must score, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptText {
    pub text: String,
    pub expected_labels: Vec<usize>,
}

/// Probability mass over labels; index = label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreDistribution {
    probabilities: Vec<f64>,
}

impl ScoreDistribution {
    /// Wrap an already-normalized probability vector, checking that entries
    /// are non-negative and sum to 1 within 1e-9.
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(OnsepError::Argument(
                "probabilities must be finite and non-negative".into(),
            ));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(OnsepError::Argument(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(ScoreDistribution { probabilities })
    }

    pub(crate) fn from_vec(probabilities: Vec<f64>) -> Self {
        ScoreDistribution { probabilities }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }
}

/// Render the history chain and the open query line:
/// one `"{t}:[{subject},{relation},{label}.{object}]"` line per event in
/// chronological order, then `"{t_q}:[{subject},{relation},"` left open for
/// the next-token read. Expected labels are the whole mapping.
pub fn build_history_prompt(query: &Query, chain: &EventChain, mapping: &LabelMapping) -> Result<PromptText> {
    let mut lines = Vec::with_capacity(chain.len() + 1);
    for event in chain.iter() {
        let label = mapping.label_of(event.object).ok_or_else(|| {
            OnsepError::Mapping(format!("object {} has no label", event.object))
        })?;
        lines.push(format!(
            "{}:[{},{},{}.{}]",
            event.t, event.subject, event.relation, label, event.object
        ));
    }
    lines.push(format!("{}:[{},{},", query.t, query.subject, query.relation));
    Ok(PromptText {
        text: lines.join("\n"),
        expected_labels: mapping.all_labels(),
    })
}

/// Render the cause-selection prompt: the fixed task sentence naming the
/// result event, the labelled candidate reasons one per line, and the open
/// "most appropriate reason" line.
pub fn build_cause_prompt(effect_name: &str, candidates: &[(usize, &str)]) -> Result<PromptText> {
    if candidates.is_empty() {
        return Err(OnsepError::Argument("candidate list is empty".into()));
    }
    let mut text = format!(
        "Your task is selecting the most appropriate reason for the result event. The result event is {effect_name}.\n\
         Below is a list of possible reasons:\n"
    );
    for (label, name) in candidates {
        text.push_str(&format!("{label}. {name}\n"));
    }
    text.push_str("The most appropriate reason is:");
    Ok(PromptText {
        text,
        expected_labels: candidates.iter().map(|&(label, _)| label).collect(),
    })
}

/// Softmax over `logits` restricted to `subset`; labels outside the subset
/// get probability 0. Max-subtraction keeps the exponentials in range.
pub fn normalize(logits: &[f64], subset: &[usize]) -> Result<ScoreDistribution> {
    if subset.is_empty() {
        return Err(OnsepError::Argument("softmax subset is empty".into()));
    }
    for &label in subset {
        if label >= logits.len() {
            return Err(OnsepError::Argument(format!(
                "label {label} out of range for {} logits",
                logits.len()
            )));
        }
        if !logits[label].is_finite() {
            return Err(OnsepError::Argument(format!(
                "logit for label {label} is not finite"
            )));
        }
    }
    let max = subset.iter().map(|&l| logits[l]).fold(f64::NEG_INFINITY, f64::max);
    let mut probabilities = vec![0.0; logits.len()];
    let mut total = 0.0;
    for &label in subset {
        let e = (logits[label] - max).exp();
        probabilities[label] = e;
        total += e;
    }
    for &label in subset {
        probabilities[label] /= total;
    }
    Ok(ScoreDistribution::from_vec(probabilities))
}

/// One logit per expected label of the prompt, in expected-label order.
///
/// Implementations must be safe to call from multiple threads; the engine
/// issues concurrent score calls within a snapshot.
pub trait ScorerBackend: Send + Sync {
    fn score(&self, prompt: &PromptText) -> Result<Vec<f64>>;
}

/// Deterministic stand-in for a language model.
///
/// logit(label) = count of history lines whose object label equals it,
/// plus 0.5 if it is the object label of the chronologically last history
/// line. Labels absent from the history score 0. A pure function of the
/// prompt text, which makes every downstream formula desk-checkable.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubScorer;

fn parse_history_line(line: &str) -> Option<usize> {
    let (t, rest) = line.split_once(":[")?;
    t.parse::<u64>().ok()?;
    let body = rest.strip_suffix(']')?;
    let mut parts = body.split(',');
    parts.next()?.parse::<u64>().ok()?;
    parts.next()?.parse::<u64>().ok()?;
    let object = parts.next()?;
    if parts.next().is_some() {
        return None;
    }
    let (label, entity) = object.split_once('.')?;
    entity.parse::<u64>().ok()?;
    label.parse::<usize>().ok()
}

impl ScorerBackend for StubScorer {
    fn score(&self, prompt: &PromptText) -> Result<Vec<f64>> {
        let mut counts: HashMap<usize, f64> = HashMap::new();
        let mut last: Option<usize> = None;
        for line in prompt.text.lines() {
            if let Some(label) = parse_history_line(line) {
                *counts.entry(label).or_insert(0.0) += 1.0;
                last = Some(label);
            }
        }
        if let Some(label) = last {
            *counts.entry(label).or_insert(0.0) += 0.5;
        }
        Ok(prompt
            .expected_labels
            .iter()
            .map(|label| counts.get(label).copied().unwrap_or(0.0))
            .collect())
    }
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    prompt: &'a str,
    labels: Vec<String>,
}

#[derive(Deserialize)]
struct ScoreResponse {
    logits: Vec<f64>,
}

/// Client for an inference service exposing `POST /score`. The request
/// carries the prompt and the label strings to score; the response must
/// return one logit per label in the same order. Logits pass through
/// unchanged. One transparent retry on transport failure.
pub struct HttpScorer {
    endpoint: String,
    client: reqwest::blocking::Client,
}

impl HttpScorer {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| OnsepError::Backend(e.to_string()))?;
        Ok(HttpScorer {
            endpoint: format!("{}/score", base_url.trim_end_matches('/')),
            client,
        })
    }

    fn post(&self, request: &ScoreRequest) -> Result<ScoreResponse> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(request)
            .send()
            .map_err(|e| OnsepError::Backend(e.to_string()))?;
        if !response.status().is_success() {
            return Err(OnsepError::Backend(format!(
                "{} returned {}",
                self.endpoint,
                response.status()
            )));
        }
        response
            .json::<ScoreResponse>()
            .map_err(|e| OnsepError::Protocol(e.to_string()))
    }
}

impl ScorerBackend for HttpScorer {
    fn score(&self, prompt: &PromptText) -> Result<Vec<f64>> {
        let request = ScoreRequest {
            prompt: &prompt.text,
            labels: prompt.expected_labels.iter().map(|l| l.to_string()).collect(),
        };
        let response = match self.post(&request) {
            Err(OnsepError::Backend(_)) => self.post(&request)?,
            other => other?,
        };
        if response.logits.len() != prompt.expected_labels.len() {
            return Err(OnsepError::Protocol(format!(
                "asked for {} labels, got {} logits",
                prompt.expected_labels.len(),
                response.logits.len()
            )));
        }
        Ok(response.logits)
    }
}
