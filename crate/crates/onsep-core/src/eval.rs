//! Time-aware Hit@k evaluation and the online snapshot loop.
//!
//! Each test snapshot is processed in four phases: answer every query
//! against the frozen store and rule base, score the rankings, insert the
//! revealed facts, then mine rules from the feedback and prune the rule
//! base. Queries never see facts at or beyond their own timestamp.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::config::OnlineConfig;
use crate::dcrm::{learn_from_feedback, Feedback};
use crate::dhag::{predict, Prediction};
use crate::error::{OnsepError, Result};
use crate::rulebase::CausalRuleBase;
use crate::scorer::ScorerBackend;
use crate::tkg::{Dataset, EntityId, Query, Quadruple, RelationId, Timestamp, TkgStore};

/// Hit@k counters. Monotone by construction: a rank counts toward every
/// k it fits under.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Metrics {
    pub queries: u64,
    pub hits1: u64,
    pub hits3: u64,
    pub hits10: u64,
}

impl Metrics {
    pub fn new() -> Self {
        Self::default()
    }

    /// Record one evaluated query; `None` is a miss (the target never made
    /// the candidate list), which counts toward no k.
    pub fn record(&mut self, rank: Option<usize>) {
        self.queries += 1;
        if let Some(rank) = rank {
            debug_assert!(rank >= 1);
            if rank <= 1 {
                self.hits1 += 1;
            }
            if rank <= 3 {
                self.hits3 += 1;
            }
            if rank <= 10 {
                self.hits10 += 1;
            }
        }
    }

    /// Hit ratio for k in {1, 3, 10}.
    pub fn hit_at(&self, k: usize) -> f64 {
        let hits = match k {
            1 => self.hits1,
            3 => self.hits3,
            10 => self.hits10,
            _ => panic!("hit_at supports k in {{1, 3, 10}}, got {k}"),
        };
        if self.queries == 0 {
            0.0
        } else {
            hits as f64 / self.queries as f64
        }
    }

    /// The machine-readable metrics file body.
    pub fn to_file_format(&self) -> String {
        format!(
            "hit@1\t{:.4}\nhit@3\t{:.4}\nhit@10\t{:.4}\nqueries\t{}\n",
            self.hit_at(1),
            self.hit_at(3),
            self.hit_at(10),
            self.queries
        )
    }
}

/// 1-based rank of the target after deleting every other entity that is
/// itself a true answer for the same query; `None` when the target is not
/// among the candidates at all.
pub fn time_aware_rank(
    prediction: &Prediction,
    target: EntityId,
    truths_at_t: &HashSet<EntityId>,
) -> Option<usize> {
    let mut rank = 0;
    for &(entity, _) in &prediction.ranked {
        if entity != target && truths_at_t.contains(&entity) {
            continue;
        }
        rank += 1;
        if entity == target {
            return Some(rank);
        }
    }
    None
}

/// One recorded ranking, kept only when the config asks for it.
#[derive(Debug, Clone)]
pub struct PredictionRecord {
    pub query: Query,
    pub ranked: Vec<(EntityId, f64)>,
}

#[derive(Debug)]
pub struct RunReport {
    pub metrics: Metrics,
    pub rulebase: CausalRuleBase,
    /// True when the run aborted early on a persistent scorer failure;
    /// the metrics then cover only the snapshots answered so far.
    pub incomplete: bool,
    pub predictions: Vec<PredictionRecord>,
    pub elapsed: Duration,
}

impl RunReport {
    /// Evaluated queries per second, the one throughput figure reported.
    pub fn queries_per_second(&self) -> f64 {
        let secs = self.elapsed.as_secs_f64();
        if secs == 0.0 {
            0.0
        } else {
            self.metrics.queries as f64 / secs
        }
    }
}

/// Distinct (subject, relation) groups of one snapshot in first-appearance
/// order, each with its distinct targets in first-appearance order.
fn group_queries(snapshot: &[Quadruple], t: Timestamp) -> Vec<(Query, Vec<EntityId>)> {
    let mut groups: Vec<(Query, Vec<EntityId>)> = Vec::new();
    let mut index: HashMap<(EntityId, RelationId), usize> = HashMap::new();
    for fact in snapshot {
        let key = (fact.subject, fact.relation);
        let slot = *index.entry(key).or_insert_with(|| {
            groups.push((Query::new(fact.subject, fact.relation, t), Vec::new()));
            groups.len() - 1
        });
        if !groups[slot].1.contains(&fact.object) {
            groups[slot].1.push(fact.object);
        }
    }
    groups
}

/// Drive the full online loop over the test split and return the final
/// metrics and rule base.
///
/// The store is seeded with the train and valid splits; the dataset must
/// already be inverse-augmented so subject-side queries arrive as object
/// queries. Pass `initial_rules` to start from a rule base mined elsewhere
/// (the inductive setting).
pub fn run_online(
    dataset: &Dataset,
    cfg: &OnlineConfig,
    backend: &dyn ScorerBackend,
    initial_rules: Option<CausalRuleBase>,
) -> Result<RunReport> {
    cfg.validate()?;
    if !dataset.inverse_augmented {
        return Err(OnsepError::State(
            "run_online needs an inverse-augmented dataset".into(),
        ));
    }
    let started = Instant::now();
    let mut store = TkgStore::new();
    store.extend(dataset.train.iter().copied());
    store.extend(dataset.valid.iter().copied());

    let mut rulebase = initial_rules.unwrap_or_default();
    let mut metrics = Metrics::new();
    let mut records = Vec::new();
    let mut incomplete = false;

    let mut snapshots: BTreeMap<Timestamp, Vec<Quadruple>> = BTreeMap::new();
    for &fact in &dataset.test {
        snapshots.entry(fact.t).or_default().push(fact);
    }

    let pool = (cfg.workers > 1)
        .then(|| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(cfg.workers)
                .build()
                .map_err(|e| OnsepError::State(e.to_string()))
        })
        .transpose()?;

    'snapshots: for (&t, snapshot) in &snapshots {
        store.set_read_horizon(t);
        let groups = group_queries(snapshot, t);

        // (a) answer every query against the frozen store and rule base
        let answer = |(query, _targets): &(Query, Vec<EntityId>)| {
            predict(&store, &rulebase, query, backend, cfg)
        };
        let predictions: Vec<Result<Prediction>> = match &pool {
            Some(pool) => pool.install(|| groups.par_iter().map(answer).collect()),
            None => groups.iter().map(answer).collect(),
        };

        // (b) time-aware scoring, once per distinct target
        for ((query, targets), prediction) in groups.iter().zip(predictions) {
            let prediction = match prediction {
                Ok(p) => p,
                Err(e) => {
                    log::error!("aborting run, scorer unreachable at t={t}: {e}");
                    incomplete = true;
                    break 'snapshots;
                }
            };
            let truths: HashSet<EntityId> = targets.iter().copied().collect();
            for &target in targets {
                metrics.record(time_aware_rank(&prediction, target, &truths));
            }
            if cfg.record_predictions {
                records.push(PredictionRecord {
                    query: *query,
                    ranked: prediction.ranked.clone(),
                });
            }
        }

        // (c) reveal the snapshot
        store.extend(snapshot.iter().copied());

        // (d) mine rules from the revealed outcomes
        if cfg.mining_enabled {
            for fact in snapshot {
                let feedback = Feedback {
                    query: Query::new(fact.subject, fact.relation, t),
                    target: fact.object,
                };
                for update in
                    learn_from_feedback(&store, &feedback, backend, &dataset.relation_names, cfg)
                {
                    rulebase.upsert(
                        update.effect,
                        update.cause,
                        update.conf,
                        update.t,
                        cfg.theta,
                        cfg.beta,
                    );
                }
            }
        }

        // (e) prune and re-sort
        rulebase.maintain(cfg.conf_min);
    }
    store.clear_read_horizon();

    Ok(RunReport {
        metrics,
        rulebase,
        incomplete,
        predictions: records,
        elapsed: started.elapsed(),
    })
}
