//! The causal rule base: confidence-scored (effect ← cause) relation pairs.
//!
//! Confidences are updated online with a smoothed, capped-growth blend of
//! the previous confidence and the newly proposed one; rules falling below
//! the pruning threshold are removed at snapshot boundaries. Rules
//! serialize by relation *name* so a base mined on one dataset can be
//! replayed on another that shares relation vocabulary.

use std::collections::HashMap;

use crate::error::{OnsepError, Result};
use crate::tkg::{RelationId, Timestamp};

pub const RULE_FILE_HEADER: &str = "#onsep-rules v1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CausalRule {
    pub effect: RelationId,
    pub cause: RelationId,
    pub confidence: f64,
    pub last_updated: Timestamp,
}

/// Effect-relation-keyed rule collection. Per effect there is at most one
/// rule per cause, kept sorted by descending confidence (ties: lower cause
/// id first).
#[derive(Debug, Clone, Default)]
pub struct CausalRuleBase {
    rules: HashMap<RelationId, Vec<CausalRule>>,
}

fn grow(c_prev: f64, beta: f64) -> f64 {
    (c_prev * (1.0 + beta)).min(1.0)
}

fn sort_rules(rules: &mut [CausalRule]) {
    rules.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .expect("confidence is finite")
            .then(a.cause.cmp(&b.cause))
    });
}

impl CausalRuleBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Total number of rules across all effects.
    pub fn len(&self) -> usize {
        self.rules.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.values().all(Vec::is_empty)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CausalRule> {
        self.rules.values().flatten()
    }

    /// Effects that currently hold at least one rule, ascending.
    pub fn effects(&self) -> Vec<RelationId> {
        let mut effects: Vec<RelationId> = self
            .rules
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(&e, _)| e)
            .collect();
        effects.sort_unstable();
        effects
    }

    pub fn get(&self, effect: RelationId, cause: RelationId) -> Option<&CausalRule> {
        self.rules.get(&effect)?.iter().find(|r| r.cause == cause)
    }

    /// Merge a proposed confidence into the base and return the stored
    /// confidence. A new rule starts at the proposed value; an existing one
    /// is updated as `theta * min(c_prev * (1 + beta), 1) + (1 - theta) * conf`.
    pub fn upsert(
        &mut self,
        effect: RelationId,
        cause: RelationId,
        conf: f64,
        t: Timestamp,
        theta: f64,
        beta: f64,
    ) -> f64 {
        debug_assert!((0.0..=1.0).contains(&conf));
        debug_assert!((0.0..=1.0).contains(&theta));
        debug_assert!(beta >= 0.0);
        let rules = self.rules.entry(effect).or_default();
        let updated = match rules.iter_mut().find(|r| r.cause == cause) {
            Some(rule) => {
                rule.confidence = theta * grow(rule.confidence, beta) + (1.0 - theta) * conf;
                rule.last_updated = t;
                rule.confidence
            }
            None => {
                rules.push(CausalRule {
                    effect,
                    cause,
                    confidence: conf,
                    last_updated: t,
                });
                conf
            }
        };
        sort_rules(rules);
        updated
    }

    /// Drop every rule below `conf_min` and restore confidence-descending
    /// order. Idempotent.
    pub fn maintain(&mut self, conf_min: f64) {
        for rules in self.rules.values_mut() {
            rules.retain(|r| r.confidence >= conf_min);
            sort_rules(rules);
        }
        self.rules.retain(|_, v| !v.is_empty());
    }

    /// The effect's rules in stored (confidence-descending) order; empty for
    /// unknown effects.
    pub fn recall(&self, effect: RelationId) -> &[CausalRule] {
        self.rules.get(&effect).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Serialize by relation name: a header line, then one
    /// `<effect>\t<cause>\t<confidence:%.6f>\t<last_updated>` line per rule,
    /// effects in ascending id order.
    pub fn export(&self, relation_names: &[String]) -> Result<String> {
        let name = |id: RelationId| -> Result<&str> {
            relation_names
                .get(id as usize)
                .map(String::as_str)
                .ok_or_else(|| OnsepError::Argument(format!("relation id {id} has no name")))
        };
        let mut out = String::from(RULE_FILE_HEADER);
        out.push('\n');
        for effect in self.effects() {
            for rule in self.recall(effect) {
                out.push_str(&format!(
                    "{}\t{}\t{:.6}\t{}\n",
                    name(rule.effect)?,
                    name(rule.cause)?,
                    rule.confidence,
                    rule.last_updated
                ));
            }
        }
        Ok(out)
    }

    /// Parse a rule file against the target dataset's relation names. Rules
    /// whose effect or cause name is absent there are silently dropped; the
    /// outcome reports how many.
    pub fn import(text: &str, relation_names: &[String]) -> Result<ImportOutcome> {
        let ids: HashMap<&str, RelationId> = relation_names
            .iter()
            .enumerate()
            .map(|(id, name)| (name.as_str(), id as RelationId))
            .collect();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == RULE_FILE_HEADER => {}
            _ => {
                return Err(OnsepError::parse(
                    "rules",
                    1,
                    format!("expected header `{RULE_FILE_HEADER}`"),
                ))
            }
        }
        let mut rulebase = CausalRuleBase::new();
        let mut dropped = 0;
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(OnsepError::parse(
                    "rules",
                    lineno,
                    format!("expected 4 tab-separated fields, got {}", cols.len()),
                ));
            }
            let confidence: f64 = cols[2].parse().map_err(|_| {
                OnsepError::parse("rules", lineno, format!("bad confidence `{}`", cols[2]))
            })?;
            if !(0.0..=1.0).contains(&confidence) {
                return Err(OnsepError::parse(
                    "rules",
                    lineno,
                    format!("confidence {confidence} outside [0, 1]"),
                ));
            }
            let last_updated: Timestamp = cols[3].parse().map_err(|_| {
                OnsepError::parse("rules", lineno, format!("bad timestamp `{}`", cols[3]))
            })?;
            match (ids.get(cols[0]), ids.get(cols[1])) {
                (Some(&effect), Some(&cause)) => {
                    let rules = rulebase.rules.entry(effect).or_default();
                    match rules.iter_mut().find(|r| r.cause == cause) {
                        // duplicate line for the same pair: last wins
                        Some(rule) => {
                            rule.confidence = confidence;
                            rule.last_updated = last_updated;
                        }
                        None => rules.push(CausalRule {
                            effect,
                            cause,
                            confidence,
                            last_updated,
                        }),
                    }
                }
                _ => dropped += 1,
            }
        }
        for rules in rulebase.rules.values_mut() {
            sort_rules(rules);
        }
        Ok(ImportOutcome { rulebase, dropped })
    }
}

#[derive(Debug)]
pub struct ImportOutcome {
    pub rulebase: CausalRuleBase,
    pub dropped: usize,
}
