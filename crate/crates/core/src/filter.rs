//! Anchoring-path filtering.
//!
//! Every entity of the training graph falls into exactly one of four buckets
//! with respect to a query relation `r_q` and a relation chain: it starts the
//! chain and heads `r_q` (PT), only starts the chain (PO), only heads `r_q`
//! (TO), or neither (NC). Accuracy is `PT / (PO + PT)` and recall is
//! `PT / (TO + PT)`. Chains clearing both thresholds are kept per relation in
//! a [`LogicalApStore`], which test-time matching consults.
//!
//! Tail-side chains are scored the same way on the reversed problem: a chain
//! ending at `t` is reversed (and each relation inverted) so that it starts at
//! `t`, and compared against the heads of `r_q⁻¹`, i.e. the tails of `r_q`.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ApstError, Result};
use crate::graph::{inverse_surface, is_inverse_surface, EntityId, Graph, RelationId, Triple};
use crate::hash::Fnv1a;
use crate::par;
use crate::paths::{anchored_evidence, chain_matches_from, Path, RelationChain, Side};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EntityCategoryCounts {
    pub pt: u64,
    pub po: u64,
    pub to: u64,
    pub nc: u64,
}

impl EntityCategoryCounts {
    pub fn total(&self) -> u64 {
        self.pt + self.po + self.to + self.nc
    }
}

/// An exact ratio, or `None` when its denominator is zero.
pub type Metric = Option<Ratio<u64>>;

fn ratio(num: u64, den: u64) -> Metric {
    (den > 0).then(|| Ratio::new(num, den))
}

pub fn metric_f64(m: Metric) -> Option<f64> {
    m.map(|r| *r.numer() as f64 / *r.denom() as f64)
}

/// `(accuracy, recall)` from category counts.
pub fn ap_metrics(counts: &EntityCategoryCounts) -> (Metric, Metric) {
    (
        ratio(counts.pt, counts.po + counts.pt),
        ratio(counts.pt, counts.to + counts.pt),
    )
}

/// Entities from which some simple path follows `chain`.
pub fn collect_chain_heads(g: &Graph, chain: &RelationChain) -> Result<BTreeSet<EntityId>> {
    for &r in chain.relations() {
        if !g.has_relation(r) {
            return Err(ApstError::UnknownRelation(format!("#{}", r.0)));
        }
    }
    Ok(g
        .entity_ids()
        .filter(|&e| chain_matches_from(g, e, chain))
        .collect())
}

fn partition(g: &Graph, chain_heads: &BTreeSet<EntityId>, rel_heads: &BTreeSet<EntityId>) -> EntityCategoryCounts {
    let pt = chain_heads.intersection(rel_heads).count() as u64;
    let po = chain_heads.len() as u64 - pt;
    let to = rel_heads.len() as u64 - pt;
    EntityCategoryCounts {
        pt,
        po,
        to,
        nc: g.num_entities() as u64 - pt - po - to,
    }
}

pub fn classify_entities(g: &Graph, chain: &RelationChain, r_q: RelationId) -> Result<EntityCategoryCounts> {
    let rel_heads = g.relation_heads(r_q)?;
    let chain_heads = collect_chain_heads(g, chain)?;
    Ok(partition(g, &chain_heads, rel_heads))
}

/// Threshold pair; `None` disables that filter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub min_accuracy: Option<f64>,
    pub min_recall: Option<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            min_accuracy: Some(0.5),
            min_recall: Some(0.5),
        }
    }
}

impl Thresholds {
    pub fn new(min_accuracy: f64, min_recall: f64) -> Self {
        Thresholds {
            min_accuracy: Some(min_accuracy),
            min_recall: Some(min_recall),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("accuracy", self.min_accuracy), ("recall", self.min_recall)] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ApstError::Config(format!(
                        "minimum {name} {v} is outside [0, 1]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Undefined metrics never pass, even with that filter disabled.
    pub fn admits(&self, accuracy: Metric, recall: Metric) -> bool {
        fn ok(m: Metric, min: Option<f64>) -> bool {
            match (metric_f64(m), min) {
                (None, _) => false,
                (Some(_), None) => true,
                (Some(v), Some(min)) => v >= min,
            }
        }
        ok(accuracy, self.min_accuracy) && ok(recall, self.min_recall)
    }
}

/// Statistics of one chain for one query relation and side. Relations are
/// held by surface form so a store built on one graph can be matched on another.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ApStatistics {
    pub query_relation: String,
    pub side: Side,
    pub chain: Vec<String>,
    pub counts: EntityCategoryCounts,
    pub accuracy: Metric,
    pub recall: Metric,
}

impl ApStatistics {
    fn from_counts(query_relation: String, side: Side, chain: Vec<String>, counts: EntityCategoryCounts) -> Self {
        let (accuracy, recall) = ap_metrics(&counts);
        ApStatistics {
            query_relation,
            side,
            chain,
            counts,
            accuracy,
            recall,
        }
    }
}

/// Head-side or tail-side statistics of `chain` (oriented for its side) with
/// respect to `r_q`.
pub fn side_statistics(g: &Graph, r_q: RelationId, side: Side, chain: &RelationChain) -> Result<ApStatistics> {
    g.require_augmented()?;
    let counts = match side {
        Side::Head => classify_entities(g, chain, r_q)?,
        Side::Tail => {
            let inv = g.inverse(r_q).ok_or(ApstError::NotAugmented)?;
            classify_entities(g, &chain.reversed(g)?, inv)?
        }
    };
    Ok(ApStatistics::from_counts(
        g.relation_name(r_q).to_string(),
        side,
        chain.surfaces(g),
        counts,
    ))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub graph: String,
    pub depth: usize,
    /// Seconds since the epoch; only set when the caller supplies one, so
    /// repeated builds stay byte-identical by default.
    pub built_at: Option<u64>,
    /// Effective run configuration of the command that built the store.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogicalApStore {
    pub by_relation: BTreeMap<String, Vec<ApStatistics>>,
    pub thresholds: Thresholds,
    pub provenance: Provenance,
}

/// Per-relation outcome of a store build.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RelationSummary {
    pub relation: String,
    pub candidates: usize,
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BuildSummary {
    pub relations: Vec<RelationSummary>,
}

impl BuildSummary {
    pub fn kept(&self) -> usize {
        self.relations.iter().map(|r| r.kept).sum()
    }

    pub fn dropped(&self) -> usize {
        self.relations.iter().map(|r| r.dropped).sum()
    }
}

/// Candidate chains for `r_q`: chains of the (decomposed, oriented) anchoring
/// paths around every training triple of `r_q`, that triple excluded. Closed
/// paths contribute to both sides.
pub fn candidate_chains(g: &Graph, r_q: RelationId, depth: usize) -> Result<BTreeSet<(Side, RelationChain)>> {
    let mut out = BTreeSet::new();
    for t in g.triples().iter().filter(|t| t.relation == r_q) {
        let ev = anchored_evidence(g, t.head, t.tail, depth, Some(t))?;
        for p in &ev.closed {
            out.insert((Side::Head, p.chain()));
            out.insert((Side::Tail, p.chain()));
        }
        out.extend(ev.head.iter().map(|p| (Side::Head, p.chain())));
        out.extend(ev.tail.iter().map(|p| (Side::Tail, p.chain())));
    }
    Ok(out)
}

/// Mines the logical-AP store from a training graph.
pub fn build_logical_ap_store(
    g_train: &Graph,
    depth: usize,
    thresholds: Thresholds,
) -> Result<(LogicalApStore, BuildSummary)> {
    g_train.require_augmented()?;
    thresholds.validate()?;
    if depth == 0 {
        return Err(ApstError::Contract("depth must be >= 1".into()));
    }
    let relations: Vec<RelationId> = g_train.base_relations().collect();

    let candidates: Vec<Result<BTreeSet<(Side, RelationChain)>>> =
        par::map(&relations, |&r| candidate_chains(g_train, r, depth));
    let candidates = candidates.into_iter().collect::<Result<Vec<_>>>()?;

    // Chain-head sets depend only on the head-oriented chain, so compute each once.
    let mut head_forms: Vec<RelationChain> = Vec::new();
    let mut seen: HashSet<RelationChain> = HashSet::new();
    let mut jobs: Vec<Vec<(Side, RelationChain, RelationChain)>> = Vec::with_capacity(relations.len());
    for set in &candidates {
        let mut rel_jobs = Vec::with_capacity(set.len());
        for (side, chain) in set {
            let head_form = match side {
                Side::Head => chain.clone(),
                Side::Tail => chain.reversed(g_train)?,
            };
            if seen.insert(head_form.clone()) {
                head_forms.push(head_form.clone());
            }
            rel_jobs.push((*side, chain.clone(), head_form));
        }
        jobs.push(rel_jobs);
    }
    let head_sets: Vec<Result<BTreeSet<EntityId>>> =
        par::map(&head_forms, |c| collect_chain_heads(g_train, c));
    let head_sets: HashMap<RelationChain, BTreeSet<EntityId>> = head_forms
        .into_iter()
        .zip(head_sets)
        .map(|(c, s)| s.map(|s| (c, s)))
        .collect::<Result<_>>()?;

    let mut by_relation = BTreeMap::new();
    let mut summary = BuildSummary::default();
    for (&r_q, rel_jobs) in relations.iter().zip(jobs) {
        let name = g_train.relation_name(r_q).to_string();
        let inv = g_train.inverse(r_q).ok_or(ApstError::NotAugmented)?;
        let mut kept = Vec::new();
        for (side, chain, head_form) in &rel_jobs {
            let rel_heads = match side {
                Side::Head => g_train.relation_heads(r_q)?,
                Side::Tail => g_train.relation_heads(inv)?,
            };
            let counts = partition(g_train, &head_sets[head_form], rel_heads);
            let stats = ApStatistics::from_counts(name.clone(), *side, chain.surfaces(g_train), counts);
            if thresholds.admits(stats.accuracy, stats.recall) {
                kept.push(stats);
            }
        }
        kept.sort_by(|a, b| (a.side, &a.chain).cmp(&(b.side, &b.chain)));
        summary.relations.push(RelationSummary {
            relation: name.clone(),
            candidates: rel_jobs.len(),
            kept: kept.len(),
            dropped: rel_jobs.len() - kept.len(),
        });
        if !kept.is_empty() {
            by_relation.insert(name, kept);
        }
    }
    Ok((
        LogicalApStore {
            by_relation,
            thresholds,
            provenance: Provenance {
                graph: g_train.fingerprint(),
                depth,
                built_at: None,
                config: None,
            },
        },
        summary,
    ))
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum StoreLine {
    Header {
        thresholds: Thresholds,
        provenance: Provenance,
    },
    Chain(ChainRecord),
}

/// One JSON-lines record of the store file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub relation: String,
    pub side: Side,
    pub chain: Vec<String>,
    pub pt: u64,
    pub po: u64,
    pub to: u64,
    pub nc: u64,
    pub accuracy: Option<f64>,
    pub recall: Option<f64>,
}

impl From<&ApStatistics> for ChainRecord {
    fn from(s: &ApStatistics) -> Self {
        ChainRecord {
            relation: s.query_relation.clone(),
            side: s.side,
            chain: s.chain.clone(),
            pt: s.counts.pt,
            po: s.counts.po,
            to: s.counts.to,
            nc: s.counts.nc,
            accuracy: metric_f64(s.accuracy),
            recall: metric_f64(s.recall),
        }
    }
}

impl LogicalApStore {
    pub fn is_empty(&self) -> bool {
        self.by_relation.is_empty()
    }

    pub fn len(&self) -> usize {
        self.by_relation.values().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ApStatistics> {
        self.by_relation.values().flatten()
    }

    pub fn get(&self, relation: &str, side: Side, chain: &[&str]) -> Option<&ApStatistics> {
        self.by_relation
            .get(relation)?
            .iter()
            .find(|s| s.side == side && s.chain.iter().map(String::as_str).eq(chain.iter().copied()))
    }

    /// Whether the store has an entry for `relation` or, for an inverse
    /// relation, for its base.
    pub fn knows_relation(&self, relation: &str) -> bool {
        self.by_relation.contains_key(relation)
            || (is_inverse_surface(relation) && self.by_relation.contains_key(&inverse_surface(relation)))
    }

    /// `(side, chain)` pairs usable for `relation`. An inverse relation
    /// without entries of its own borrows its base relation's entries with
    /// the sides swapped and each chain reversed.
    pub fn chains_for(&self, relation: &str) -> Vec<(Side, Vec<String>)> {
        if let Some(entries) = self.by_relation.get(relation) {
            return entries.iter().map(|s| (s.side, s.chain.clone())).collect();
        }
        if !is_inverse_surface(relation) {
            return Vec::new();
        }
        let Some(entries) = self.by_relation.get(&inverse_surface(relation)) else {
            return Vec::new();
        };
        entries
            .iter()
            .map(|s| {
                let side = match s.side {
                    Side::Head => Side::Tail,
                    Side::Tail => Side::Head,
                };
                let chain = s.chain.iter().rev().map(|r| inverse_surface(r)).collect();
                (side, chain)
            })
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = StoreLine::Header {
            thresholds: self.thresholds,
            provenance: self.provenance.clone(),
        };
        let io = |e| ApstError::io("<store>", e);
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n").map_err(io)?;
        for s in self.iter() {
            serde_json::to_writer(&mut w, &StoreLine::Chain(ChainRecord::from(s)))?;
            w.write_all(b"\n").map_err(io)?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(r: R, source: &str) -> Result<LogicalApStore> {
        let mut header = None;
        let mut by_relation: BTreeMap<String, Vec<ApStatistics>> = BTreeMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| ApstError::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: StoreLine = serde_json::from_str(&line).map_err(|e| ApstError::Parse {
                path: source.to_string(),
                line: i + 1,
                message: e.to_string(),
            })?;
            match parsed {
                StoreLine::Header {
                    thresholds,
                    provenance,
                } => header = Some((thresholds, provenance)),
                StoreLine::Chain(rec) => {
                    let counts = EntityCategoryCounts {
                        pt: rec.pt,
                        po: rec.po,
                        to: rec.to,
                        nc: rec.nc,
                    };
                    let stats = ApStatistics::from_counts(rec.relation.clone(), rec.side, rec.chain, counts);
                    by_relation.entry(rec.relation).or_default().push(stats);
                }
            }
        }
        let (thresholds, provenance) = header.ok_or_else(|| ApstError::Parse {
            path: source.to_string(),
            line: 1,
            message: "missing store header".into(),
        })?;
        Ok(LogicalApStore {
            by_relation,
            thresholds,
            provenance,
        })
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<LogicalApStore> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| ApstError::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(f), &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| ApstError::io(path, e))?;
        let mut w = std::io::BufWriter::new(f);
        self.write_jsonl(&mut w)?;
        w.flush().map_err(|e| ApstError::io(path, e))
    }
}

/// A query by surface strings; entities may be missing from the evidence graph.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QueryTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl QueryTriple {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        QueryTriple {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }

    /// `(t, r⁻¹, h)`
    pub fn inverted(&self) -> QueryTriple {
        QueryTriple::new(self.tail.clone(), inverse_surface(&self.relation), self.head.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    ClosedPath,
    HeadAp,
    TailAp,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MatchedPath {
    pub path: Path,
    pub kind: EvidenceKind,
}

/// Which evidence feeds the budget.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceMode {
    ClosedOnly,
    #[default]
    ClosedAndAnchoring,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatchParams {
    pub budget: usize,
    pub depth: usize,
    pub seed: u64,
    pub mode: EvidenceMode,
}

impl Default for MatchParams {
    fn default() -> Self {
        MatchParams {
            budget: 3,
            depth: 2,
            seed: 42,
            mode: EvidenceMode::ClosedAndAnchoring,
        }
    }
}

impl MatchParams {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(ApstError::Config("budget L must be >= 1".into()));
        }
        if self.depth == 0 {
            return Err(ApstError::Config("depth must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MatchOutcome {
    /// The store has nothing for the query relation.
    NoEvidence,
    Paths(Vec<MatchedPath>),
}

impl MatchOutcome {
    pub fn paths(&self) -> &[MatchedPath] {
        match self {
            MatchOutcome::NoEvidence => &[],
            MatchOutcome::Paths(p) => p,
        }
    }

    pub fn into_paths(self) -> Vec<MatchedPath> {
        match self {
            MatchOutcome::NoEvidence => Vec::new(),
            MatchOutcome::Paths(p) => p,
        }
    }
}

/// Per-query RNG seed, independent of evaluation order.
pub fn query_seed(seed: u64, q: &QueryTriple) -> u64 {
    let mut h = Fnv1a::default();
    h.write(&seed.to_le_bytes())
        .write_field(&q.head)
        .write_field(&q.relation)
        .write_field(&q.tail);
    h.finish()
}

fn cp_priority(g: &Graph, p: &Path) -> (usize, Vec<String>, Vec<String>) {
    let rec = p.to_record(g);
    (p.len(), rec.relations, rec.entities)
}

/// Selects up to `budget` evidence paths for a query on `g`: closed paths
/// first (shortest, then lexicographic, if they alone overflow the budget),
/// then anchoring paths whose chain is stored for the query relation, drawn
/// without replacement with a seed derived from `params.seed` and the query.
pub fn match_query_aps(
    g: &Graph,
    query: &QueryTriple,
    store: &LogicalApStore,
    params: MatchParams,
) -> Result<MatchOutcome> {
    g.require_augmented()?;
    if params.budget == 0 {
        return Err(ApstError::Contract("budget L must be >= 1".into()));
    }
    let use_aps = params.mode == EvidenceMode::ClosedAndAnchoring;
    if use_aps && !store.knows_relation(&query.relation) {
        return Ok(MatchOutcome::NoEvidence);
    }
    let (Some(h), Some(t)) = (g.entity(&query.head), g.entity(&query.tail)) else {
        return Ok(MatchOutcome::Paths(Vec::new()));
    };
    let exclude: Option<Triple> = g.resolve(&query.head, &query.relation, &query.tail);
    let ev = anchored_evidence(g, h, t, params.depth, exclude.as_ref())?;

    let mut closed = ev.closed;
    closed.sort_by_cached_key(|p| cp_priority(g, p));
    closed.truncate(params.budget);
    let mut out: Vec<MatchedPath> = closed
        .into_iter()
        .map(|path| MatchedPath {
            path,
            kind: EvidenceKind::ClosedPath,
        })
        .collect();

    let room = params.budget - out.len();
    if use_aps && room > 0 {
        let mut head_chains = HashSet::new();
        let mut tail_chains = HashSet::new();
        for (side, names) in store.chains_for(&query.relation) {
            if let Some(c) = RelationChain::from_surfaces(g, &names) {
                match side {
                    Side::Head => head_chains.insert(c),
                    Side::Tail => tail_chains.insert(c),
                };
            }
        }
        let mut pool: Vec<MatchedPath> = ev
            .head
            .into_iter()
            .filter(|p| head_chains.contains(&p.chain()))
            .map(|path| MatchedPath {
                path,
                kind: EvidenceKind::HeadAp,
            })
            .chain(
                ev.tail
                    .into_iter()
                    .filter(|p| tail_chains.contains(&p.chain()))
                    .map(|path| MatchedPath {
                        path,
                        kind: EvidenceKind::TailAp,
                    }),
            )
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(query_seed(params.seed, query));
        pool.shuffle(&mut rng);
        out.extend(pool.into_iter().take(room));
    }
    Ok(MatchOutcome::Paths(out))
}
