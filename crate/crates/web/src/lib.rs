//! Browser bindings: mine a store from pasted triples, classify the paths
//! between two entities, and rank candidates with the builtin encoder.
//!
//! Each operation takes plain strings and numbers and returns a JSON string,
//! so the page needs no bundler.

use std::collections::BTreeSet;

use apst_core::eval::rank_candidates;
use apst_core::filter::{metric_f64, MatchParams};
use apst_core::paths::{classify_path, decompose_concatenated};
use apst_core::{
    build_logical_ap_store, enumerate_anchoring_paths, enumerate_closed_paths, CandidateSet, DescriptionStore,
    DescriptionTier, Graph, HashEncoder, Path, PathCategory, QueryTriple, ScoringContext, Side, Thresholds,
    TripleFormat,
};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

const MAX_DEPTH: usize = 3;

fn graph(triples: &str) -> Result<Graph, String> {
    Graph::parse(triples, TripleFormat::HeadRelationTail, "input")
        .and_then(|g| g.augment_inverses())
        .map_err(|e| e.to_string())
}

fn check_depth(depth: usize) -> Result<(), String> {
    if (1..=MAX_DEPTH).contains(&depth) {
        Ok(())
    } else {
        Err(format!("depth must be between 1 and {MAX_DEPTH}"))
    }
}

/// A negative threshold disables that filter.
fn thresholds(min_acc: f64, min_rec: f64) -> Thresholds {
    let on = |v: f64| (v >= 0.0).then_some(v);
    Thresholds {
        min_accuracy: on(min_acc),
        min_recall: on(min_rec),
    }
}

pub fn mine(triples: &str, depth: usize, min_acc: f64, min_rec: f64) -> Result<Value, String> {
    check_depth(depth)?;
    let g = graph(triples)?;
    let (store, summary) = build_logical_ap_store(&g, depth, thresholds(min_acc, min_rec)).map_err(|e| e.to_string())?;
    let entries: Vec<Value> = store
        .iter()
        .map(|s| {
            json!({
                "relation": s.query_relation,
                "side": s.side,
                "chain": s.chain,
                "counts": s.counts,
                "accuracy": s.accuracy.map(|r| r.to_string()),
                "recall": s.recall.map(|r| r.to_string()),
                "accuracy_value": metric_f64(s.accuracy),
                "recall_value": metric_f64(s.recall),
            })
        })
        .collect();
    Ok(json!({
        "stats": g.stats(),
        "kept": summary.kept(),
        "dropped": summary.dropped(),
        "relations": summary.relations,
        "entries": entries,
    }))
}

fn category_name(c: PathCategory) -> &'static str {
    match c {
        PathCategory::NoContact => "no contact",
        PathCategory::HeadAp => "head anchoring",
        PathCategory::TailAp => "tail anchoring",
        PathCategory::ClosedPath => "closed",
        PathCategory::Concatenation => "concatenation",
    }
}

pub fn explore(triples: &str, head: &str, tail: &str, depth: usize) -> Result<Value, String> {
    check_depth(depth)?;
    let g = graph(triples)?;
    let h = g.require_entity(head).map_err(|e| e.to_string())?;
    let t = g.require_entity(tail).map_err(|e| e.to_string())?;
    if h == t {
        return Err("head and tail must differ".into());
    }
    let err = |e: apst_core::ApstError| e.to_string();
    let mut all: Vec<Path> = enumerate_closed_paths(&g, h, t, depth, None).map_err(err)?;
    all.extend(enumerate_anchoring_paths(&g, h, Side::Head, depth, None).map_err(err)?);
    all.extend(enumerate_anchoring_paths(&g, t, Side::Tail, depth, None).map_err(err)?);
    let mut seen = BTreeSet::new();
    let mut rows = Vec::new();
    for p in all {
        if !seen.insert(p.clone()) {
            continue;
        }
        let cat = classify_path(&p, h, t);
        let pieces: Vec<String> = match cat {
            PathCategory::Concatenation => decompose_concatenated(&p, h, t)
                .map_err(err)?
                .iter()
                .map(|q| format!("{} [{}]", q.display(&g), category_name(classify_path(q, h, t))))
                .collect(),
            _ => Vec::new(),
        };
        rows.push(json!({
            "path": p.display(&g),
            "category": category_name(cat),
            "pieces": pieces,
        }));
    }
    Ok(json!({ "paths": rows }))
}

#[allow(clippy::too_many_arguments)]
pub fn rank(
    triples: &str,
    head: &str,
    relation: &str,
    tail: &str,
    candidates: &str,
    depth: usize,
    min_acc: f64,
    min_rec: f64,
) -> Result<Value, String> {
    check_depth(depth)?;
    let g = graph(triples)?;
    let (store, _) = build_logical_ap_store(&g, depth, thresholds(min_acc, min_rec)).map_err(|e| e.to_string())?;
    let mut cands: Vec<String> = vec![tail.to_string()];
    for c in candidates.split([',', '\n']).map(str::trim).filter(|c| !c.is_empty()) {
        if !cands.iter().any(|x| x == c) {
            cands.push(c.to_string());
        }
    }
    let cs = CandidateSet {
        query: QueryTriple::new(head, relation, tail),
        masked: Side::Tail,
        candidates: cands,
    };
    let encoder = HashEncoder::default();
    let descriptions = DescriptionStore::new();
    let ctx = ScoringContext {
        graph: &g,
        store: &store,
        encoder: &encoder,
        descriptions: &descriptions,
        tier: DescriptionTier::Detailed,
        params: MatchParams { depth, ..MatchParams::default() },
    };
    let result = rank_candidates(&cs, &ctx).map_err(|e| e.to_string())?;
    serde_json::to_value(result).map_err(|e| e.to_string())
}

fn to_js(r: Result<Value, String>) -> Result<String, JsError> {
    r.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = mineStore)]
pub fn mine_store(triples: &str, depth: usize, min_acc: f64, min_rec: f64) -> Result<String, JsError> {
    to_js(mine(triples, depth, min_acc, min_rec))
}

#[wasm_bindgen(js_name = explorePaths)]
pub fn explore_paths(triples: &str, head: &str, tail: &str, depth: usize) -> Result<String, JsError> {
    to_js(explore(triples, head, tail, depth))
}

#[wasm_bindgen(js_name = rankCandidates)]
#[allow(clippy::too_many_arguments)]
pub fn rank_tails(
    triples: &str,
    head: &str,
    relation: &str,
    tail: &str,
    candidates: &str,
    depth: usize,
    min_acc: f64,
    min_rec: f64,
) -> Result<String, JsError> {
    to_js(rank(triples, head, relation, tail, candidates, depth, min_acc, min_rec))
}
