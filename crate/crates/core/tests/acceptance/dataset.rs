//! Criteria that need the benchmark files. They read `APST_DATA_DIR`, laid
//! out as `<dir>/<dataset>/<split>.txt`.

use std::path::{Path as FsPath, PathBuf};
use std::time::{Duration, Instant};

use apst_core::eval::run_experiment;
use apst_core::filter::{metric_f64, side_statistics};
use apst_core::graph::{Graph, GraphStats, RelationId, TripleFormat, INVERSE_MARKER};
use apst_core::paths::{RelationChain, Side};
use apst_core::text::{Encoder, HashEncoder, RemoteEncoder};
use apst_core::{EncoderSpec, EvalMode, RunConfig};

use super::common::http::embedding_service;
use super::common::{ranking_fixture, FIXTURE_CANDIDATES};
use super::{check, Verdict};

const CASE_TOL: f64 = 0.05;
const CASE_TIME_LIMIT: Duration = Duration::from_secs(600);

/// `(relations, entities, triples)` per split.
const STATS: &[(&str, &[(&str, (usize, usize, usize))])] = &[
    (
        "WN18RR",
        &[
            ("train", (9, 2746, 6670)),
            ("train-2000", (9, 1970, 2002)),
            ("train-1000", (9, 1362, 1001)),
            ("test-transductive", (7, 962, 638)),
            ("test-inductive", (8, 922, 1991)),
        ],
    ),
    (
        "FB15k-237",
        &[
            ("train", (180, 1594, 5223)),
            ("train-2000", (180, 1280, 2008)),
            ("train-1000", (180, 923, 1027)),
            ("test-transductive", (102, 550, 492)),
            ("test-inductive", (142, 1093, 2404)),
        ],
    ),
    (
        "NELL-995",
        &[
            ("train", (88, 2564, 10063)),
            ("train-2000", (88, 1346, 2011)),
            ("train-1000", (88, 893, 1020)),
            ("test-transductive", (60, 1936, 968)),
            ("test-inductive", (79, 2086, 6621)),
        ],
    ),
];

/// Query relation suffix, side, chain suffixes, expected (accuracy, recall).
type Case = (&'static str, Side, [&'static str; 2], (f64, f64));

const CASES: &[Case] = &[
    (
        "country/official_language",
        Side::Tail,
        ["film/country", "human_language/countries_spoken_in⁻¹"],
        (0.67, 1.00),
    ),
    (
        "film/edited_by",
        Side::Head,
        ["director/film⁻¹", "film/edited_by⁻¹"],
        (1.00, 1.00),
    ),
];

fn data_dir() -> Option<PathBuf> {
    std::env::var_os("APST_DATA_DIR").map(PathBuf::from)
}

fn split(dir: &FsPath, dataset: &str, name: &str) -> PathBuf {
    dir.join(dataset).join(format!("{name}.txt"))
}

fn by_suffix(g: &Graph, suffix: &str) -> Option<RelationId> {
    let (base, inverted) = match suffix.strip_suffix(INVERSE_MARKER) {
        Some(b) => (b, true),
        None => (suffix, false),
    };
    let r = g
        .base_relations()
        .find(|&r| g.relation_name(r).ends_with(base))?;
    if inverted {
        g.inverse(r)
    } else {
        Some(r)
    }
}

pub fn dataset_scale() -> Verdict {
    let Some(dir) = data_dir() else {
        return Verdict::NotRun("APST_DATA_DIR not set; benchmark splits unavailable".into());
    };
    let start = Instant::now();
    let mut problems = Vec::new();
    let mut checked = 0;
    for (dataset, splits) in STATS {
        for (name, (r, e, t)) in *splits {
            checked += 1;
            let want = GraphStats { relations: *r, entities: *e, triples: *t };
            match Graph::load(split(&dir, dataset, name), TripleFormat::default()) {
                Ok(g) if g.stats() == want => {}
                Ok(g) => problems.push(format!("{dataset}/{name}: {:?} != {want:?}", g.stats())),
                Err(err) => problems.push(format!("{dataset}/{name}: {err}")),
            }
        }
    }
    let train = Graph::load(split(&dir, "FB15k-237", "train"), TripleFormat::default())
        .and_then(|g| g.augment_inverses());
    let mut cases = Vec::new();
    match train {
        Err(err) => problems.push(format!("FB15k-237/train: {err}")),
        Ok(g) => {
            for (rel, side, chain, (acc, rec)) in CASES {
                let resolved = by_suffix(&g, rel).zip(chain.iter().map(|c| by_suffix(&g, c)).collect::<Option<Vec<_>>>());
                let Some((r_q, chain_ids)) = resolved else {
                    problems.push(format!("{rel}: relation not found"));
                    continue;
                };
                let stats = side_statistics(&g, r_q, *side, &RelationChain::new(chain_ids).unwrap()).unwrap();
                let (a, r) = (metric_f64(stats.accuracy), metric_f64(stats.recall));
                let near = |m: Option<f64>, w: f64| m.is_some_and(|m| (m - w).abs() <= CASE_TOL);
                if !(near(a, *acc) && near(r, *rec)) {
                    problems.push(format!("{rel}: acc {a:?} rec {r:?}, expected {acc} {rec}"));
                }
                cases.push(format!("{rel} {:.2}/{:.2}", a.unwrap_or(f64::NAN), r.unwrap_or(f64::NAN)));
            }
        }
    }
    let took = start.elapsed();
    if took > CASE_TIME_LIMIT {
        problems.push(format!("took {:.0}s", took.as_secs_f64()));
    }
    check(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{checked} splits match; {}", cases.join(", "))
        } else {
            problems.join("; ")
        },
    )
}

/// Runs the ranking pipeline against the in-process hash-backed embedding
/// service. Uses the FB15k-237 inductive split with
/// `<dir>/FB15k-237/candidates-inductive.jsonl` when present, the toy ranking
/// fixture otherwise.
pub fn mock_smoke() -> Verdict {
    let svc = embedding_service(HashEncoder::default().dim(), |s| HashEncoder::default().embed(s).0);
    let dir = tempfile::tempdir().unwrap();
    let real = data_dir().map(|d| d.join("FB15k-237")).filter(|d| d.join("candidates-inductive.jsonl").is_file());
    let (cfg, label) = match real {
        Some(d) => (
            RunConfig {
                train: Some(d.join("train.txt")),
                test: Some(d.join("test-inductive.txt")),
                candidates: Some(d.join("candidates-inductive.jsonl")),
                mode: EvalMode::Inductive,
                ..RunConfig::default()
            },
            "FB15k-237 inductive",
        ),
        None => {
            let fx = ranking_fixture();
            let w = |n: &str, s: String| {
                let p = dir.path().join(n);
                std::fs::write(&p, s).unwrap();
                p
            };
            (
                RunConfig {
                    train: Some(w("train.txt", fx.train_tsv())),
                    test: Some(w("test.txt", fx.test_tsv())),
                    candidates: Some(w("candidates.jsonl", fx.candidates_jsonl())),
                    candidates_per_query: FIXTURE_CANDIDATES,
                    ..RunConfig::default()
                },
                "toy fixture (benchmark candidates unavailable)",
            )
        }
    };
    let cfg = RunConfig {
        encoder: EncoderSpec::Remote(svc.url.clone()),
        ..cfg
    };
    let enc = RemoteEncoder::connect(&svc.url).unwrap();
    let report = run_experiment(&cfg, &enc).unwrap();
    let m = report.aggregate;
    check(
        m.mrr > 0.0 && m.mrr <= 1.0,
        format!(
            "{label} via mock service: MRR={:.3} Hit@1={:.3} over {} queries, {} service requests",
            m.mrr,
            m.hit_at_1,
            m.queries,
            svc.requests()
        ),
    )
}
