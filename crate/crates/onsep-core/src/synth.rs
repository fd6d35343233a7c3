//! Deterministic synthetic event streams with planted causal dependencies.
//!
//! Each snapshot emits a few dedicated cause events per planted rule plus
//! uniform noise; every base emission matching a planted cause relation
//! schedules the corresponding effect fact `lag` snapshots later with the
//! rule's firing probability. The result is a dataset where the rule signal
//! is recoverable by mining but buried in noise, sized for desk-scale runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{OnsepError, Result};
use crate::tkg::{Dataset, Quadruple, RelationId};

/// Dedicated cause emissions per rule per snapshot.
const CAUSE_FIRES_PER_SNAPSHOT: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedRule {
    pub cause: RelationId,
    pub effect: RelationId,
    /// Snapshots between cause and effect.
    pub lag: u64,
    /// Chance that a cause emission fires the effect.
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub entities: u64,
    pub relations: u64,
    pub snapshots: u64,
    pub rules: Vec<PlantedRule>,
    /// Per-entity chance of emitting one uniform noise fact per snapshot.
    pub noise_rate: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(OnsepError::Argument(msg));
        if self.entities < 2 {
            return err("entities must be >= 2".into());
        }
        if self.relations < 1 {
            return err("relations must be >= 1".into());
        }
        if self.snapshots < 1 {
            return err("snapshots must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.noise_rate) {
            return err(format!("noise_rate must be in [0, 1], got {}", self.noise_rate));
        }
        let mut pairs = std::collections::HashSet::new();
        for rule in &self.rules {
            if rule.cause >= self.relations || rule.effect >= self.relations {
                return err(format!(
                    "rule ({} -> {}) uses a relation id >= {}",
                    rule.cause, rule.effect, self.relations
                ));
            }
            if rule.cause == rule.effect {
                return err(format!("rule cause and effect must differ, got {}", rule.cause));
            }
            if !pairs.insert((rule.cause, rule.effect)) {
                return err(format!(
                    "duplicate planted rule ({} -> {})",
                    rule.cause, rule.effect
                ));
            }
            if rule.lag >= self.snapshots {
                return err(format!(
                    "rule lag {} must be < snapshot count {}",
                    rule.lag, self.snapshots
                ));
            }
            if !(0.0..=1.0).contains(&rule.probability) {
                return err(format!(
                    "rule probability must be in [0, 1], got {}",
                    rule.probability
                ));
            }
        }
        Ok(())
    }

    /// Parse the flat `key=value` spec format. Keys: `entities`, `relations`,
    /// `snapshots`, `noise_rate`, `seed`, and one repeatable
    /// `rule=<cause>,<effect>,<lag>,<probability>` per planted rule.
    /// `#` comments and blank lines are ignored.
    pub fn parse(text: &str) -> Result<SyntheticSpec> {
        let mut spec = SyntheticSpec {
            entities: 0,
            relations: 0,
            snapshots: 0,
            rules: Vec::new(),
            noise_rate: 0.0,
            seed: 0,
        };
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| OnsepError::parse("spec", lineno, "expected `key=value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| OnsepError::parse("spec", lineno, format!("bad {what} `{value}`"));
            match key {
                "entities" => spec.entities = value.parse().map_err(|_| bad("entities"))?,
                "relations" => spec.relations = value.parse().map_err(|_| bad("relations"))?,
                "snapshots" => spec.snapshots = value.parse().map_err(|_| bad("snapshots"))?,
                "noise_rate" => spec.noise_rate = value.parse().map_err(|_| bad("noise_rate"))?,
                "seed" => spec.seed = value.parse().map_err(|_| bad("seed"))?,
                "rule" => {
                    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                    if parts.len() != 4 {
                        return Err(OnsepError::parse(
                            "spec",
                            lineno,
                            "rule wants `<cause>,<effect>,<lag>,<probability>`",
                        ));
                    }
                    spec.rules.push(PlantedRule {
                        cause: parts[0].parse().map_err(|_| bad("rule cause"))?,
                        effect: parts[1].parse().map_err(|_| bad("rule effect"))?,
                        lag: parts[2].parse().map_err(|_| bad("rule lag"))?,
                        probability: parts[3].parse().map_err(|_| bad("rule probability"))?,
                    });
                }
                other => {
                    return Err(OnsepError::parse(
                        "spec",
                        lineno,
                        format!("unknown key `{other}`"),
                    ))
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Generate the dataset: timestamps are snapshot indices (interval 1), the
/// first 70% of snapshots become train, the next 10% valid, and the last 20%
/// test. Identical specs produce byte-identical datasets.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.snapshots;
    let mut pending: Vec<Vec<Quadruple>> = vec![Vec::new(); n as usize];
    let mut snapshots: Vec<Vec<Quadruple>> = Vec::with_capacity(n as usize);

    for i in 0..n {
        let mut base: Vec<Quadruple> = Vec::new();
        for rule in &spec.rules {
            for _ in 0..CAUSE_FIRES_PER_SNAPSHOT {
                let s = rng.random_range(0..spec.entities);
                let o = rng.random_range(0..spec.entities);
                base.push(Quadruple::new(s, rule.cause, o, i));
            }
        }
        for e in 0..spec.entities {
            if rng.random_bool(spec.noise_rate) {
                let r = rng.random_range(0..spec.relations);
                let o = rng.random_range(0..spec.entities);
                base.push(Quadruple::new(e, r, o, i));
            }
        }
        // base emissions (and only they) trigger planted effects
        for fact in &base {
            for rule in &spec.rules {
                if rule.cause == fact.relation
                    && i + rule.lag < n
                    && rng.random_bool(rule.probability)
                {
                    pending[(i + rule.lag) as usize].push(Quadruple::new(
                        fact.subject,
                        rule.effect,
                        fact.object,
                        i + rule.lag,
                    ));
                }
            }
        }
        let mut snapshot = std::mem::take(&mut pending[i as usize]);
        snapshot.extend(base);
        snapshots.push(snapshot);
    }

    let train_end = (n as f64 * 0.7).floor() as u64;
    let valid_end = (n as f64 * 0.8).floor() as u64;
    let mut dataset = Dataset {
        entity_names: (0..spec.entities).map(|i| format!("e{i}")).collect(),
        relation_names: (0..spec.relations).map(|i| format!("r{i}")).collect(),
        interval: 1,
        ..Default::default()
    };
    for (i, snapshot) in snapshots.into_iter().enumerate() {
        let split = if (i as u64) < train_end {
            &mut dataset.train
        } else if (i as u64) < valid_end {
            &mut dataset.valid
        } else {
            &mut dataset.test
        };
        split.extend(snapshot);
    }
    Ok(dataset)
}
