//! Datasets and the indexed temporal fact store.
//!
//! A fact is a `(subject, relation, object, t)` quadruple over dense integer
//! ids. [`Dataset`] owns the id/name tables and the train/valid/test splits;
//! [`TkgStore`] is an append-only multiset of facts indexed by subject and by
//! timestamp, and every history lookup used by mining and prediction goes
//! through it.
//!
//! Timestamps are kept exactly as they appear in the source files (ICEWS uses
//! multiples of 24); there is no calendar arithmetic anywhere.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{OnsepError, Result};

pub type EntityId = u64;
pub type RelationId = u64;
pub type Timestamp = u64;

/// One timestamped fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Quadruple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
    pub t: Timestamp,
}

impl Quadruple {
    pub fn new(subject: EntityId, relation: RelationId, object: EntityId, t: Timestamp) -> Self {
        Quadruple {
            subject,
            relation,
            object,
            t,
        }
    }
}

/// An object-prediction query `(s, r, ?, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Query {
    pub subject: EntityId,
    pub relation: RelationId,
    pub t: Timestamp,
}

impl Query {
    pub fn new(subject: EntityId, relation: RelationId, t: Timestamp) -> Self {
        Query {
            subject,
            relation,
            t,
        }
    }
}

/// Mirror a fact across the subject/object axis with a fixed raw relation
/// count: `(s, r, o, t)` becomes `(o, r + R, s, t)` and vice versa.
pub fn mirror_quadruple(q: Quadruple, raw_relation_count: u64) -> Quadruple {
    let relation = if q.relation < raw_relation_count {
        q.relation + raw_relation_count
    } else {
        q.relation - raw_relation_count
    };
    Quadruple::new(q.object, relation, q.subject, q.t)
}

/// A benchmark dataset: name tables, the three chronological splits, and the
/// inferred snapshot interval.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub entity_names: Vec<String>,
    pub relation_names: Vec<String>,
    pub train: Vec<Quadruple>,
    pub valid: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
    pub interval: Timestamp,
    pub inverse_augmented: bool,
}

impl Dataset {
    pub fn entity_count(&self) -> usize {
        self.entity_names.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_names.len()
    }

    /// Load a dataset directory: `entity2id.txt`, `relation2id.txt` and the
    /// tab-separated `train.txt` / `valid.txt` / `test.txt` fact files.
    ///
    /// The snapshot interval is inferred as the GCD of the gaps between
    /// distinct timestamps (1 when there are fewer than two distinct
    /// timestamps).
    pub fn load(dir: &Path) -> Result<Dataset> {
        let entity_names = read_id_mapping(&dir.join("entity2id.txt"))?;
        let relation_names = read_id_mapping(&dir.join("relation2id.txt"))?;
        let n_ent = entity_names.len() as u64;
        let n_rel = relation_names.len() as u64;

        let train = read_fact_file(&dir.join("train.txt"), n_ent, n_rel)?;
        let valid = read_fact_file(&dir.join("valid.txt"), n_ent, n_rel)?;
        let test = read_fact_file(&dir.join("test.txt"), n_ent, n_rel)?;

        let dataset = Dataset {
            entity_names,
            relation_names,
            interval: infer_interval([&train, &valid, &test]),
            train,
            valid,
            test,
            inverse_augmented: false,
        };
        dataset.check_split_order()?;
        Ok(dataset)
    }

    fn check_split_order(&self) -> Result<()> {
        let bound = |facts: &[Quadruple]| {
            let min = facts.iter().map(|q| q.t).min();
            let max = facts.iter().map(|q| q.t).max();
            min.zip(max)
        };
        let mut last: Option<(&str, Timestamp)> = None;
        for (name, facts) in [
            ("train", &self.train),
            ("valid", &self.valid),
            ("test", &self.test),
        ] {
            if let Some((min, max)) = bound(facts) {
                if let Some((prev_name, prev_max)) = last {
                    if min <= prev_max {
                        return Err(OnsepError::Integrity(format!(
                            "{name} timestamps start at {min} but {prev_name} extends to {prev_max}"
                        )));
                    }
                }
                last = Some((name, max));
            }
        }
        Ok(())
    }

    /// Double the relation vocabulary and add the mirror fact
    /// `(o, r + R, s, t)` for every `(s, r, o, t)` in every split. Mirrored
    /// relation names carry an `inv_` prefix. Subject-side queries thereby
    /// become ordinary object queries.
    pub fn add_inverse_relations(mut self) -> Result<Dataset> {
        if self.inverse_augmented {
            return Err(OnsepError::State(
                "dataset already inverse-augmented".into(),
            ));
        }
        let raw = self.relation_names.len() as u64;
        let inverted: Vec<String> = self
            .relation_names
            .iter()
            .map(|name| format!("inv_{name}"))
            .collect();
        self.relation_names.extend(inverted);

        for split in [&mut self.train, &mut self.valid, &mut self.test] {
            let mirrored: Vec<Quadruple> = split
                .iter()
                .map(|&q| mirror_quadruple(q, raw))
                .collect();
            split.extend(mirrored);
        }
        self.inverse_augmented = true;
        Ok(self)
    }

    /// Write the dataset back out in the directory layout `load` reads.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("entity2id.txt"), format_id_mapping(&self.entity_names))?;
        fs::write(
            dir.join("relation2id.txt"),
            format_id_mapping(&self.relation_names),
        )?;
        for (name, facts) in [
            ("train.txt", &self.train),
            ("valid.txt", &self.valid),
            ("test.txt", &self.test),
        ] {
            fs::write(dir.join(name), format_fact_file(facts))?;
        }
        Ok(())
    }
}

fn format_id_mapping(names: &[String]) -> String {
    let mut out = String::new();
    for (id, name) in names.iter().enumerate() {
        out.push_str(name);
        out.push('\t');
        out.push_str(&id.to_string());
        out.push('\n');
    }
    out
}

fn format_fact_file(facts: &[Quadruple]) -> String {
    let mut out = String::new();
    for q in facts {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", q.subject, q.relation, q.object, q.t));
    }
    out
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    if !path.is_file() {
        return Err(OnsepError::MissingFile(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn read_id_mapping(path: &Path) -> Result<Vec<String>> {
    let file = path.display().to_string();
    let mut entries: Vec<Option<String>> = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let (name, id) = line
            .rsplit_once('\t')
            .ok_or_else(|| OnsepError::parse(&file, lineno, "expected `<name>\\t<id>`"))?;
        let id: usize = id
            .trim()
            .parse()
            .map_err(|_| OnsepError::parse(&file, lineno, format!("bad id `{id}`")))?;
        if !seen.insert(name.to_owned()) {
            return Err(OnsepError::Integrity(format!(
                "{file}: duplicate name `{name}`"
            )));
        }
        if id >= entries.len() {
            entries.resize(id + 1, None);
        }
        if entries[id].is_some() {
            return Err(OnsepError::Integrity(format!("{file}: duplicate id {id}")));
        }
        entries[id] = Some(name.to_owned());
    }
    entries
        .into_iter()
        .enumerate()
        .map(|(id, name)| {
            name.ok_or_else(|| OnsepError::Integrity(format!("{file}: ids not dense, {id} missing")))
        })
        .collect()
}

fn read_fact_file(path: &Path, n_entities: u64, n_relations: u64) -> Result<Vec<Quadruple>> {
    let file = path.display().to_string();
    let mut facts = Vec::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        let lineno = idx + 1;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            return Err(OnsepError::parse(
                &file,
                lineno,
                format!("expected at least 4 tab-separated columns, got {}", cols.len()),
            ));
        }
        let parse = |col: usize, what: &str| -> Result<u64> {
            cols[col].trim().parse().map_err(|_| {
                OnsepError::parse(&file, lineno, format!("bad {what} `{}`", cols[col]))
            })
        };
        let q = Quadruple::new(
            parse(0, "subject id")?,
            parse(1, "relation id")?,
            parse(2, "object id")?,
            parse(3, "timestamp")?,
        );
        if q.subject >= n_entities || q.object >= n_entities {
            return Err(OnsepError::Integrity(format!(
                "{file}:{lineno}: entity id out of range (entity count {n_entities})"
            )));
        }
        if q.relation >= n_relations {
            return Err(OnsepError::Integrity(format!(
                "{file}:{lineno}: relation id {} out of range (relation count {n_relations})",
                q.relation
            )));
        }
        facts.push(q);
    }
    Ok(facts)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn infer_interval(splits: [&[Quadruple]; 3]) -> Timestamp {
    let mut ts: Vec<Timestamp> = splits
        .iter()
        .flat_map(|s| s.iter().map(|q| q.t))
        .collect();
    ts.sort_unstable();
    ts.dedup();
    let mut acc = 0;
    for pair in ts.windows(2) {
        acc = gcd(acc, pair[1] - pair[0]);
    }
    if acc == 0 {
        1
    } else {
        acc
    }
}

/// Chronologically ordered events sharing one subject.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventChain {
    events: Vec<Quadruple>,
}

impl EventChain {
    pub fn new(events: Vec<Quadruple>) -> Self {
        debug_assert!(events.windows(2).all(|w| w[0].t <= w[1].t));
        EventChain { events }
    }

    pub fn events(&self) -> &[Quadruple] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The `l` most recent events, ascending order preserved.
    pub fn recent(&self, l: usize) -> EventChain {
        let start = self.events.len().saturating_sub(l);
        EventChain {
            events: self.events[start..].to_vec(),
        }
    }

    pub fn objects(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.events.iter().map(|q| q.object)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Quadruple> {
        self.events.iter()
    }
}

const NO_HORIZON: u64 = u64::MAX;

/// Append-only multiset of facts with subject and timestamp indices.
///
/// Duplicate quadruples are kept: the source files may repeat facts, and
/// deduplication would change support counts downstream. One writer at a
/// time; reads may run concurrently between writes.
#[derive(Debug, Default)]
pub struct TkgStore {
    facts: Vec<Quadruple>,
    by_subject: HashMap<EntityId, Vec<usize>>,
    by_time: BTreeMap<Timestamp, Vec<usize>>,
    /// Leakage guard: when set, debug builds assert that no served fact has
    /// `t >=` the horizon.
    read_horizon: AtomicU64,
}

impl TkgStore {
    pub fn new() -> Self {
        TkgStore {
            facts: Vec::new(),
            by_subject: HashMap::new(),
            by_time: BTreeMap::new(),
            read_horizon: AtomicU64::new(NO_HORIZON),
        }
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn insert(&mut self, q: Quadruple) {
        let idx = self.facts.len();
        self.facts.push(q);
        let list = self.by_subject.entry(q.subject).or_default();
        // keep ascending by t, ties in insertion order
        let pos = list.partition_point(|&i| self.facts[i].t <= q.t);
        list.insert(pos, idx);
        self.by_time.entry(q.t).or_default().push(idx);
    }

    pub fn extend(&mut self, facts: impl IntoIterator<Item = Quadruple>) {
        for q in facts {
            self.insert(q);
        }
    }

    /// Every stored fact with this subject and `t < before`, ascending by t.
    /// Unknown subjects yield an empty chain. No truncation here; that is
    /// the caller's job.
    pub fn history_for_subject(&self, subject: EntityId, before: Timestamp) -> EventChain {
        let horizon = self.read_horizon.load(Ordering::Relaxed);
        let events = match self.by_subject.get(&subject) {
            None => Vec::new(),
            Some(list) => {
                let cut = list.partition_point(|&i| self.facts[i].t < before);
                list[..cut]
                    .iter()
                    .map(|&i| self.facts[i])
                    .inspect(|q| debug_assert!(q.t < horizon, "fact at t={} served past read horizon {horizon}", q.t))
                    .collect()
            }
        };
        EventChain::new(events)
    }

    /// Exactly the facts of snapshot `t`, in insertion order.
    pub fn facts_at(&self, t: Timestamp) -> Vec<Quadruple> {
        match self.by_time.get(&t) {
            None => Vec::new(),
            Some(list) => list.iter().map(|&i| self.facts[i]).collect(),
        }
    }

    /// Arm the leakage guard: any subsequent read returning a fact with
    /// `t >= horizon` trips a debug assertion. Used by the online loop while
    /// answering the queries of one snapshot.
    pub fn set_read_horizon(&self, horizon: Timestamp) {
        self.read_horizon.store(horizon, Ordering::Relaxed);
    }

    pub fn clear_read_horizon(&self) {
        self.read_horizon.store(NO_HORIZON, Ordering::Relaxed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::TempDir;

    fn store_of(facts: &[(u64, u64, u64, u64)]) -> TkgStore {
        let mut store = TkgStore::new();
        store.extend(facts.iter().map(|&(s, r, o, t)| Quadruple::new(s, r, o, t)));
        store
    }

    #[test]
    fn history_filters_subject_and_time() {
        let store = store_of(&[(0, 5, 9, 24), (0, 3, 9, 48), (1, 2, 7, 48)]);
        let chain = store.history_for_subject(0, 100);
        assert_eq!(
            chain.events(),
            &[Quadruple::new(0, 5, 9, 24), Quadruple::new(0, 3, 9, 48)]
        );
    }

    #[test]
    fn history_unknown_subject_is_empty() {
        let store = store_of(&[(0, 5, 9, 24)]);
        assert!(store.history_for_subject(7, 100).is_empty());
    }

    #[test]
    fn history_bound_is_strict() {
        let store = store_of(&[(0, 5, 9, 24)]);
        assert!(store.history_for_subject(0, 24).is_empty());
        assert_eq!(store.history_for_subject(0, 25).len(), 1);
    }

    #[test]
    fn facts_at_returns_snapshot_in_insertion_order() {
        let store = store_of(&[(0, 5, 9, 24), (0, 3, 9, 48), (1, 2, 7, 48)]);
        assert_eq!(
            store.facts_at(48),
            vec![Quadruple::new(0, 3, 9, 48), Quadruple::new(1, 2, 7, 48)]
        );
        assert!(store.facts_at(360).is_empty());
    }

    #[test]
    fn store_is_a_multiset() {
        let q = Quadruple::new(2, 2, 2, 48);
        let mut store = TkgStore::new();
        store.insert(q);
        store.insert(q);
        assert_eq!(store.facts_at(48), vec![q, q]);
        assert_eq!(store.history_for_subject(2, 100).len(), 2);
    }

    #[test]
    fn out_of_order_insertion_keeps_chains_sorted() {
        let store = store_of(&[(0, 1, 1, 72), (0, 2, 2, 24), (0, 3, 3, 48)]);
        let ts: Vec<u64> = store.history_for_subject(0, 1000).iter().map(|q| q.t).collect();
        assert_eq!(ts, vec![24, 48, 72]);
    }

    #[test]
    fn event_chain_recent_keeps_tail() {
        let chain = EventChain::new(vec![
            Quadruple::new(0, 1, 1, 10),
            Quadruple::new(0, 1, 2, 20),
            Quadruple::new(0, 1, 3, 30),
        ]);
        assert_eq!(chain.recent(2).events()[0].t, 20);
        assert_eq!(chain.recent(9).len(), 3);
        assert_eq!(chain.recent(0).len(), 0);
    }

    #[test]
    fn mirror_roundtrip() {
        let q = Quadruple::new(0, 1, 2, 24);
        let m = mirror_quadruple(q, 3);
        assert_eq!(m, Quadruple::new(2, 4, 0, 24));
        assert_eq!(mirror_quadruple(m, 3), q);
    }

    fn toy_dir() -> TempDir {
        let dir = TempDir::new().unwrap();
        std::fs::write(dir.path().join("entity2id.txt"), "alpha\t0\nbeta\t1\n").unwrap();
        std::fs::write(dir.path().join("relation2id.txt"), "ping\t0\npong\t1\n").unwrap();
        std::fs::write(
            dir.path().join("train.txt"),
            "0\t0\t1\t0\n1\t1\t0\t24\n0\t1\t1\t24\n",
        )
        .unwrap();
        std::fs::write(dir.path().join("valid.txt"), "1\t0\t0\t48\n").unwrap();
        std::fs::write(dir.path().join("test.txt"), "").unwrap();
        dir
    }

    #[test]
    fn load_toy_dataset_roundtrips() {
        let dir = toy_dir();
        let d = Dataset::load(dir.path()).unwrap();
        assert_eq!(d.entity_count(), 2);
        assert_eq!(d.relation_count(), 2);
        assert_eq!(d.train.len(), 3);
        assert_eq!(d.valid.len(), 1);
        assert!(d.test.is_empty());
        assert_eq!(d.interval, 24);

        let out = TempDir::new().unwrap();
        d.write_to_dir(out.path()).unwrap();
        for name in ["entity2id.txt", "relation2id.txt", "train.txt", "valid.txt", "test.txt"] {
            let a = std::fs::read_to_string(dir.path().join(name)).unwrap();
            let b = std::fs::read_to_string(out.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} not byte-identical");
        }
    }

    #[test]
    fn load_empty_test_split_is_fine() {
        let dir = toy_dir();
        let d = Dataset::load(dir.path()).unwrap();
        assert!(d.test.is_empty());
    }

    #[test]
    fn load_reports_missing_file() {
        let dir = toy_dir();
        std::fs::remove_file(dir.path().join("valid.txt")).unwrap();
        match Dataset::load(dir.path()) {
            Err(OnsepError::MissingFile(p)) => assert!(p.ends_with("valid.txt")),
            other => panic!("expected MissingFile, got {other:?}"),
        }
    }

    #[test]
    fn load_reports_parse_error_with_line() {
        let dir = toy_dir();
        std::fs::write(dir.path().join("train.txt"), "0\t0\t1\t0\n0\t0\n").unwrap();
        match Dataset::load(dir.path()) {
            Err(OnsepError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected Parse, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_out_of_range_ids() {
        let dir = toy_dir();
        std::fs::write(dir.path().join("train.txt"), "0\t0\t5\t0\n").unwrap();
        assert!(matches!(
            Dataset::load(dir.path()),
            Err(OnsepError::Integrity(_))
        ));
    }

    #[test]
    fn load_rejects_split_overlap() {
        let dir = toy_dir();
        std::fs::write(dir.path().join("test.txt"), "0\t0\t1\t48\n").unwrap();
        assert!(matches!(
            Dataset::load(dir.path()),
            Err(OnsepError::Integrity(_))
        ));
    }

    #[test]
    fn trailing_columns_are_ignored() {
        let dir = toy_dir();
        std::fs::write(dir.path().join("test.txt"), "0\t0\t1\t72\t0\textra\n").unwrap();
        let d = Dataset::load(dir.path()).unwrap();
        assert_eq!(d.test, vec![Quadruple::new(0, 0, 1, 72)]);
    }

    #[test]
    fn inverse_augmentation_doubles_relations() {
        let dir = toy_dir();
        let d = Dataset::load(dir.path()).unwrap().add_inverse_relations().unwrap();
        assert_eq!(d.relation_count(), 4);
        assert_eq!(d.relation_names[2], "inv_ping");
        assert_eq!(d.train.len(), 6);
        assert!(d.train.contains(&Quadruple::new(1, 2, 0, 0)));
        assert!(d.add_inverse_relations().is_err());
    }

    #[test]
    fn inverse_augmentation_of_empty_dataset() {
        let d = Dataset::default().add_inverse_relations().unwrap();
        assert_eq!(d.relation_count(), 0);
        assert!(d.train.is_empty());
    }

    #[test]
    fn single_fact_mirror_example() {
        let d = Dataset {
            entity_names: vec!["a".into(), "b".into(), "c".into()],
            relation_names: vec!["r0".into(), "r1".into(), "r2".into()],
            train: vec![Quadruple::new(0, 1, 2, 24)],
            ..Default::default()
        };
        let d = d.add_inverse_relations().unwrap();
        let facts: HashSet<Quadruple> = d.train.iter().copied().collect();
        let expect: HashSet<Quadruple> =
            [Quadruple::new(0, 1, 2, 24), Quadruple::new(2, 4, 0, 24)].into_iter().collect();
        assert_eq!(facts, expect);
    }

    proptest! {
        #[test]
        fn histories_partition_the_store(
            facts in proptest::collection::vec((0u64..6, 0u64..4, 0u64..6, 0u64..10), 0..60)
        ) {
            let store = store_of(&facts);
            let mut collected: Vec<Quadruple> = Vec::new();
            for s in 0..6 {
                collected.extend(store.history_for_subject(s, u64::MAX).events().iter().copied());
            }
            let mut expected: Vec<Quadruple> =
                facts.iter().map(|&(s, r, o, t)| Quadruple::new(s, r, o, t)).collect();
            let key = |q: &Quadruple| (q.subject, q.relation, q.object, q.t);
            collected.sort_by_key(key);
            expected.sort_by_key(key);
            prop_assert_eq!(collected, expected);
        }

        #[test]
        fn histories_are_time_sorted(
            facts in proptest::collection::vec((0u64..4, 0u64..4, 0u64..6, 0u64..10), 0..60),
            subject in 0u64..4,
            before in 0u64..12
        ) {
            let store = store_of(&facts);
            let chain = store.history_for_subject(subject, before);
            prop_assert!(chain.events().windows(2).all(|w| w[0].t <= w[1].t));
            prop_assert!(chain.events().iter().all(|q| q.subject == subject && q.t < before));
        }

        #[test]
        fn mirror_is_an_involution(
            facts in proptest::collection::vec((0u64..8, 0u64..5, 0u64..8, 0u64..10), 0..40)
        ) {
            let raw = 5u64;
            for &(s, r, o, t) in &facts {
                let q = Quadruple::new(s, r, o, t);
                prop_assert_eq!(mirror_quadruple(mirror_quadruple(q, raw), raw), q);
            }
        }
    }
}
