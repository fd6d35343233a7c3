//! Dynamic causal rule mining from revealed outcomes.
//!
//! When a snapshot reveals the true object of a query, the subject's earlier
//! events pointing at that same object become candidate causes. Candidates
//! are weighted by how much of that matching history they cover, assessed
//! with one cause-selection prompt, and the top k become confidence-scored
//! rule proposals for the rule base.

use std::collections::HashMap;

use crate::config::OnlineConfig;
use crate::error::Result;
use crate::scorer::{build_cause_prompt, normalize, LabelMapping, MappingKind, ScorerBackend};
use crate::tkg::{EntityId, EventChain, Query, RelationId, Timestamp, TkgStore};

/// A cause relation observed in the matching history of one feedback item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateCause {
    pub relation: RelationId,
    /// Multiset count of matching events with this relation.
    pub support: u64,
    /// support / |matching history|.
    pub coverage: f64,
    /// Scorer-assessed probability; 0 until assessment runs.
    pub probability: f64,
}

/// The verified outcome of one query, delivered when its snapshot arrives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Feedback {
    pub query: Query,
    pub target: EntityId,
}

/// One proposed rule-base update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleUpdate {
    pub effect: RelationId,
    pub cause: RelationId,
    pub conf: f64,
    pub t: Timestamp,
}

/// Keep the events whose object equals the revealed target and count each
/// distinct relation among them: support is the multiset count, coverage its
/// share of the matching events. Candidates come out in first-appearance
/// order; no match means no candidates.
pub fn filter_candidate_causes(history: &EventChain, target: EntityId) -> Vec<CandidateCause> {
    let mut order: Vec<RelationId> = Vec::new();
    let mut support: HashMap<RelationId, u64> = HashMap::new();
    let mut total = 0u64;
    for event in history.iter().filter(|e| e.object == target) {
        total += 1;
        let count = support.entry(event.relation).or_insert(0);
        if *count == 0 {
            order.push(event.relation);
        }
        *count += 1;
    }
    order
        .into_iter()
        .map(|relation| {
            let supp = support[&relation];
            CandidateCause {
                relation,
                support: supp,
                coverage: supp as f64 / total as f64,
                probability: 0.0,
            }
        })
        .collect()
}

/// Build one cause-selection prompt over all candidates (labels in
/// first-appearance order), score it, and fill each candidate's probability
/// with the softmax over all candidate labels.
pub fn assess_causality(
    effect: RelationId,
    causes: &mut [CandidateCause],
    backend: &dyn ScorerBackend,
    relation_names: &[String],
) -> Result<()> {
    let name = |id: RelationId| -> &str {
        relation_names
            .get(id as usize)
            .map(String::as_str)
            .unwrap_or("?")
    };
    let mapping = LabelMapping::from_candidates(
        MappingKind::Relation,
        causes.iter().map(|c| c.relation),
    )?;
    let listed: Vec<(usize, &str)> = causes
        .iter()
        .map(|c| (mapping.label_of(c.relation).expect("candidate mapped"), name(c.relation)))
        .collect();
    let prompt = build_cause_prompt(name(effect), &listed)?;
    let logits = backend.score(&prompt)?;
    let distribution = normalize(&logits, &prompt.expected_labels)?;
    for cause in causes.iter_mut() {
        let label = mapping.label_of(cause.relation).expect("candidate mapped");
        cause.probability = distribution.probabilities()[label];
    }
    Ok(())
}

/// Keep the k candidates with the highest assessed probability (ties: higher
/// coverage, then lower relation id) and turn each into a rule proposal with
/// confidence `alpha * p + (1 - alpha) * coverage`, clamped to [0, 1].
pub fn build_rules(
    effect: RelationId,
    assessed: &[CandidateCause],
    k: usize,
    alpha: f64,
    t: Timestamp,
) -> Vec<RuleUpdate> {
    let mut ranked: Vec<&CandidateCause> = assessed.iter().collect();
    ranked.sort_by(|a, b| {
        b.probability
            .partial_cmp(&a.probability)
            .expect("probability is finite")
            .then(b.coverage.partial_cmp(&a.coverage).expect("coverage is finite"))
            .then(a.relation.cmp(&b.relation))
    });
    ranked
        .into_iter()
        .take(k)
        .map(|c| RuleUpdate {
            effect,
            cause: c.relation,
            conf: (alpha * c.probability + (1.0 - alpha) * c.coverage).clamp(0.0, 1.0),
            t,
        })
        .collect()
}

/// Full mining pass for one feedback item: retrieve the subject's history
/// strictly before the revealed snapshot, filter candidate causes, assess
/// them, and propose top-k rules for the query's effect relation.
///
/// No candidates means no proposals. A scorer failure also degrades to no
/// proposals (with a warning) so a transient backend outage never takes the
/// prediction path down.
pub fn learn_from_feedback(
    store: &TkgStore,
    feedback: &Feedback,
    backend: &dyn ScorerBackend,
    relation_names: &[String],
    cfg: &OnlineConfig,
) -> Vec<RuleUpdate> {
    let history = store.history_for_subject(feedback.query.subject, feedback.query.t);
    let mut causes = filter_candidate_causes(&history, feedback.target);
    if causes.is_empty() {
        return Vec::new();
    }
    if let Err(e) = assess_causality(feedback.query.relation, &mut causes, backend, relation_names) {
        log::warn!(
            "skipping rule mining for query ({}, {}, {}): {e}",
            feedback.query.subject,
            feedback.query.relation,
            feedback.query.t
        );
        return Vec::new();
    }
    build_rules(
        feedback.query.relation,
        &causes,
        cfg.topk_rules,
        cfg.alpha,
        feedback.query.t,
    )
}
