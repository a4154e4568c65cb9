//! Shared fixtures and brute-force oracles for the integration suites.
//!
//! The oracles deliberately avoid the adjacency indexes and the BFS in the
//! library: they scan the flat triple list and recurse.

#![allow(dead_code)]

pub mod http;

use std::collections::{BTreeSet, HashSet};

use apst_core::eval::CandidateSet;
use apst_core::filter::EntityCategoryCounts;
use apst_core::graph::{inverse_surface, EntityId, Graph, RelationId, Triple};
use apst_core::paths::{Path, Side};
use apst_core::text::{format_sentence, DescriptionStore, DescriptionTier, Embedding, Encoder, SentenceSource};
use apst_core::{QueryTriple, Result};
use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Triples over entity ids `e{i}` and relation ids `r{j}`.
pub type RawTriples = Vec<(usize, usize, usize)>;

pub fn graph_from_raw(raw: &[(usize, usize, usize)]) -> Graph {
    let names: Vec<(String, String, String)> = raw
        .iter()
        .map(|&(h, r, t)| (format!("e{h}"), format!("r{r}"), format!("e{t}")))
        .collect();
    Graph::from_triples(names.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())))
        .expect("nonempty raw graph")
        .augment_inverses()
        .expect("fresh graph")
}

/// Proptest strategy: up to `max_entities` entities, up to `max_triples`
/// triples over `max_relations` relations, self-loops and parallel edges allowed.
pub fn arb_raw(max_entities: usize, max_relations: usize, max_triples: usize) -> impl Strategy<Value = RawTriples> {
    (2..=max_entities).prop_flat_map(move |n| {
        prop::collection::vec((0..n, 0..max_relations, 0..n), 1..=max_triples)
    })
}

pub fn arb_graph(max_entities: usize, max_relations: usize, max_triples: usize) -> impl Strategy<Value = Graph> {
    arb_raw(max_entities, max_relations, max_triples).prop_map(|raw| graph_from_raw(&raw))
}

/// Seeded generator for the fixed-size acceptance harnesses.
pub fn random_raw(rng: &mut ChaCha8Rng, max_entities: usize, max_relations: usize, max_triples: usize) -> RawTriples {
    let n = rng.gen_range(2..=max_entities);
    let k = rng.gen_range(1..=max_relations);
    let m = rng.gen_range(1..=max_triples);
    (0..m)
        .map(|_| (rng.gen_range(0..n), rng.gen_range(0..k), rng.gen_range(0..n)))
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn twin_of(g: &Graph, t: &Triple) -> (EntityId, String, EntityId) {
    (t.tail, inverse_surface(g.relation_name(t.relation)), t.head)
}

fn is_excluded(g: &Graph, exclude: Option<&Triple>, step: &Triple) -> bool {
    let Some(x) = exclude else { return false };
    if step == x {
        return true;
    }
    let (h, r, t) = twin_of(g, x);
    step.head == h && step.tail == t && g.relation_name(step.relation) == r
}

/// Every simple path with 1..=max_depth relations that starts at `anchor`
/// (head side) or ends at it (tail side), by exhaustive recursion over the
/// triple list.
pub fn oracle_anchored(g: &Graph, anchor: EntityId, side: Side, max_depth: usize, exclude: Option<&Triple>) -> BTreeSet<Path> {
    fn rec(
        g: &Graph,
        side: Side,
        max_depth: usize,
        exclude: Option<&Triple>,
        ents: &mut Vec<EntityId>,
        rels: &mut Vec<RelationId>,
        out: &mut BTreeSet<Path>,
    ) {
        if rels.len() == max_depth {
            return;
        }
        let cur = *ents.last().unwrap();
        for t in g.triples() {
            let (from, to) = match side {
                Side::Head => (t.head, t.tail),
                Side::Tail => (t.tail, t.head),
            };
            if from != cur || ents.contains(&to) || is_excluded(g, exclude, t) {
                continue;
            }
            ents.push(to);
            rels.push(t.relation);
            let (mut e, mut r) = (ents.clone(), rels.clone());
            if side == Side::Tail {
                e.reverse();
                r.reverse();
            }
            out.insert(Path::new(e, r).unwrap());
            rec(g, side, max_depth, exclude, ents, rels, out);
            ents.pop();
            rels.pop();
        }
    }
    let mut out = BTreeSet::new();
    rec(g, side, max_depth, exclude, &mut vec![anchor], &mut Vec::new(), &mut out);
    out
}

/// Simple paths from `h` to `t`.
pub fn oracle_closed(g: &Graph, h: EntityId, t: EntityId, max_depth: usize, exclude: Option<&Triple>) -> BTreeSet<Path> {
    oracle_anchored(g, h, Side::Head, max_depth, exclude)
        .into_iter()
        .filter(|p| p.end() == t)
        .collect()
}

/// Entities from which a simple path spells `chain`.
pub fn oracle_chain_heads(g: &Graph, chain: &[RelationId]) -> BTreeSet<EntityId> {
    fn follows(g: &Graph, chain: &[RelationId], visited: &mut Vec<EntityId>) -> bool {
        let Some((&r, rest)) = chain.split_first() else {
            return true;
        };
        let cur = *visited.last().unwrap();
        for t in g.triples() {
            if t.head == cur && t.relation == r && !visited.contains(&t.tail) {
                visited.push(t.tail);
                let ok = follows(g, rest, visited);
                visited.pop();
                if ok {
                    return true;
                }
            }
        }
        false
    }
    g.entity_ids().filter(|&e| follows(g, chain, &mut vec![e])).collect()
}

pub fn oracle_counts(g: &Graph, chain: &[RelationId], r_q: RelationId) -> EntityCategoryCounts {
    let starts = oracle_chain_heads(g, chain);
    let mut c = EntityCategoryCounts::default();
    for e in g.entity_ids() {
        let heads_rq = g.triples().iter().any(|t| t.head == e && t.relation == r_q);
        match (starts.contains(&e), heads_rq) {
            (true, true) => c.pt += 1,
            (true, false) => c.po += 1,
            (false, true) => c.to += 1,
            (false, false) => c.nc += 1,
        }
    }
    c
}

pub fn oracle_metrics(c: &EntityCategoryCounts) -> (Option<Ratio<u64>>, Option<Ratio<u64>>) {
    let r = |n: u64, d: u64| (d > 0).then(|| Ratio::new(n, d));
    (r(c.pt, c.pt + c.po), r(c.pt, c.pt + c.to))
}

/// Maps known-true query sentences and every non-query sentence to one unit
/// vector and known-false query sentences to an orthogonal one, so a true
/// triple with any evidence scores 1 and a false one at most 0.
pub struct OracleEncoder {
    false_queries: HashSet<String>,
}

impl OracleEncoder {
    pub fn new(g: &Graph, sets: &[CandidateSet], descriptions: &DescriptionStore, tier: DescriptionTier) -> Self {
        let mut false_queries = HashSet::new();
        let mut true_queries = HashSet::new();
        for cs in sets {
            let (truth, cands) = cs.tail_form();
            for q in cands {
                let s = format_sentence(g, SentenceSource::Query(&q), descriptions, tier).text;
                if q == truth {
                    true_queries.insert(s);
                } else {
                    false_queries.insert(s);
                }
            }
        }
        false_queries.retain(|s| !true_queries.contains(s));
        OracleEncoder { false_queries }
    }

    pub fn vector(&self, text: &str) -> Vec<f64> {
        if self.false_queries.contains(text) {
            vec![0.0, 1.0]
        } else {
            vec![1.0, 0.0]
        }
    }
}

impl Encoder for OracleEncoder {
    fn dim(&self) -> usize {
        2
    }

    fn encode_texts(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        Ok(texts.iter().map(|t| Embedding(self.vector(t))).collect())
    }
}

/// Ranking fixture: `a_i -p-> b_i -q-> c_i` for 20 chains with `r(a_i, c_i)`
/// known for the first 14, plus 40 filler entities linked by `s`. The last
/// six `r` triples are test queries, asked once tail-masked and once
/// head-masked, each against 50 candidates.
pub struct RankingFixture {
    pub train: Vec<(String, String, String)>,
    pub test: Vec<(String, String, String)>,
    pub sets: Vec<CandidateSet>,
}

pub const FIXTURE_CANDIDATES: usize = 50;

pub fn ranking_fixture() -> RankingFixture {
    let t = |h: String, r: &str, t: String| (h, r.to_string(), t);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for i in 0..20 {
        train.push(t(format!("a{i}"), "p", format!("b{i}")));
        train.push(t(format!("b{i}"), "q", format!("c{i}")));
        let fact = t(format!("a{i}"), "r", format!("c{i}"));
        if i < 14 {
            train.push(fact);
        } else {
            test.push(fact);
        }
    }
    for i in 0..40 {
        train.push(t(format!("f{i}"), "s", format!("f{}", (i * 7 + 3) % 40)));
    }
    let mut rng = rng(7);
    let mut sets = Vec::new();
    for (h, r, tl) in &test {
        for masked in [Side::Tail, Side::Head] {
            let (truth, pool_prefix) = match masked {
                Side::Tail => (tl, "c"),
                Side::Head => (h, "a"),
            };
            let mut pool: Vec<String> = (0..20)
                .map(|j| format!("{pool_prefix}{j}"))
                .chain((0..20).map(|j| format!("b{j}")))
                .chain((0..40).map(|j| format!("f{j}")))
                .filter(|e| e != truth)
                .collect();
            let mut candidates = vec![truth.clone()];
            while candidates.len() < FIXTURE_CANDIDATES {
                let k = rng.gen_range(0..pool.len());
                candidates.push(pool.swap_remove(k));
            }
            sets.push(CandidateSet {
                query: QueryTriple::new(h.clone(), r.clone(), tl.clone()),
                masked,
                candidates,
            });
        }
    }
    RankingFixture { train, test, sets }
}

impl RankingFixture {
    pub fn train_graph(&self) -> Graph {
        Graph::from_triples(self.train.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())))
            .unwrap()
            .augment_inverses()
            .unwrap()
    }

    pub fn train_tsv(&self) -> String {
        tsv(&self.train)
    }

    pub fn test_tsv(&self) -> String {
        tsv(&self.test)
    }

    pub fn candidates_jsonl(&self) -> String {
        self.sets
            .iter()
            .map(|cs| serde_json::to_string(cs).unwrap() + "\n")
            .collect()
    }
}

fn tsv(rows: &[(String, String, String)]) -> String {
    rows.iter().map(|(h, r, t)| format!("{h}\t{r}\t{t}\n")).collect()
}
