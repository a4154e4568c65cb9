//! Candidate ranking and MRR / Hit@1 evaluation.
//!
//! Each ranking problem has one ground-truth triple and a fixed candidate list
//! for the masked side. Candidates are scored independently, sorted by score
//! descending with ties broken by candidate surface string, and the rank of the
//! true entity is recorded. Head-masked problems are turned into tail-masked
//! ones over the inverse relation.

use std::collections::{BTreeSet, HashSet};
use std::io::BufRead;
use std::path::Path as FsPath;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{EvalMode, RunConfig};
use crate::error::{ApstError, Result};
use crate::filter::{build_logical_ap_store, EvidenceKind, LogicalApStore, QueryTriple};
use crate::graph::Graph;
use crate::par;
use crate::paths::{PathRecord, Side};
use crate::scorer::{score_query, ScoringContext};
use crate::text::{DescriptionStore, DescriptionTier, Encoder};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    /// Ground truth in its original orientation.
    pub query: QueryTriple,
    /// Which entity of `query` is masked.
    #[serde(default = "default_masked")]
    pub masked: Side,
    /// Candidate entities for the masked slot, the true one included once.
    pub candidates: Vec<String>,
}

fn default_masked() -> Side {
    Side::Tail
}

impl CandidateSet {
    pub fn positive(&self) -> &str {
        match self.masked {
            Side::Head => &self.query.head,
            Side::Tail => &self.query.tail,
        }
    }

    pub fn validate(&self, expected_len: usize) -> Result<()> {
        let hits = self.candidates.iter().filter(|c| *c == self.positive()).count();
        if hits != 1 {
            return Err(ApstError::Validation(format!(
                "{:?}: true entity appears {hits} times among candidates",
                self.query
            )));
        }
        let unique: HashSet<&String> = self.candidates.iter().collect();
        if unique.len() != self.candidates.len() {
            return Err(ApstError::Validation(format!(
                "{:?}: duplicate candidates",
                self.query
            )));
        }
        if self.candidates.len() != expected_len {
            return Err(ApstError::Validation(format!(
                "{:?}: {} candidates, expected {expected_len}",
                self.query,
                self.candidates.len()
            )));
        }
        Ok(())
    }

    /// The query and candidate triples in tail-ranking form.
    pub fn tail_form(&self) -> (QueryTriple, Vec<QueryTriple>) {
        let q = match self.masked {
            Side::Tail => self.query.clone(),
            Side::Head => self.query.inverted(),
        };
        let cands = self
            .candidates
            .iter()
            .map(|c| QueryTriple::new(q.head.clone(), q.relation.clone(), c.clone()))
            .collect();
        (q, cands)
    }
}

/// Reads ranking problems. JSON-lines files (first non-blank character `{`)
/// hold one [`CandidateSet`] per line. Otherwise the file is a sequence of
/// blank-line-separated blocks: the first line is the true `h\tr\tt`, each
/// following line a candidate, either a bare entity (tail candidate) or a full
/// triple whose varying slot names the candidate. The true entity is added
/// when a block omits it.
pub fn read_candidate_sets<R: BufRead>(r: R, source: &str) -> Result<Vec<CandidateSet>> {
    let lines: Vec<String> = r
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| ApstError::io(source, e))?;
    let jsonl = lines
        .iter()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.trim_start().starts_with('{'));
    let parse_err = |line: usize, message: String| ApstError::Parse {
        path: source.to_string(),
        line,
        message,
    };

    let mut out = Vec::new();
    if jsonl {
        for (i, l) in lines.iter().enumerate() {
            if l.trim().is_empty() {
                continue;
            }
            let mut cs: CandidateSet = serde_json::from_str(l).map_err(|e| parse_err(i + 1, e.to_string()))?;
            if !cs.candidates.iter().any(|c| c == cs.positive()) {
                let p = cs.positive().to_string();
                cs.candidates.insert(0, p);
            }
            out.push(cs);
        }
        return Ok(out);
    }

    let mut block: Vec<(usize, &str)> = Vec::new();
    let flush = |block: &mut Vec<(usize, &str)>, out: &mut Vec<CandidateSet>| -> Result<()> {
        if block.is_empty() {
            return Ok(());
        }
        let (first_no, first) = block[0];
        let f: Vec<&str> = first.split('\t').collect();
        if f.len() != 3 {
            return Err(parse_err(first_no, "block must start with head<TAB>relation<TAB>tail".into()));
        }
        let query = QueryTriple::new(f[0], f[1], f[2]);
        // A line equal to the query names the positive and fits either side.
        let mut masked = None;
        let mut raw = Vec::new();
        for &(no, line) in &block[1..] {
            let c: Vec<&str> = line.split('\t').collect();
            let side = match c.as_slice() {
                [_] => Some(Side::Tail),
                [h, r, t] if *h == query.head && *r == query.relation && *t == query.tail => None,
                [h, r, _] if *h == query.head && *r == query.relation => Some(Side::Tail),
                [_, r, t] if *t == query.tail && *r == query.relation => Some(Side::Head),
                [_, _, _] => return Err(parse_err(no, "candidate triple shares neither head nor tail with the query".into())),
                _ => return Err(parse_err(no, format!("expected 1 or 3 fields, found {}", c.len()))),
            };
            if let Some(side) = side {
                if masked.is_some_and(|m| m != side) {
                    return Err(parse_err(no, "block mixes head and tail candidates".into()));
                }
                masked = Some(side);
            }
            raw.push(c);
        }
        let masked = masked.unwrap_or(Side::Tail);
        let candidates = raw
            .iter()
            .map(|c| match (c.as_slice(), masked) {
                ([e], _) => e.to_string(),
                ([h, _, _], Side::Head) => h.to_string(),
                ([_, _, t], Side::Tail) => t.to_string(),
                _ => unreachable!("field counts checked above"),
            })
            .collect();
        let mut cs = CandidateSet {
            query,
            masked,
            candidates,
        };
        if !cs.candidates.iter().any(|c| c == cs.positive()) {
            let p = cs.positive().to_string();
            cs.candidates.insert(0, p);
        }
        out.push(cs);
        block.clear();
        Ok(())
    };
    for (i, raw) in lines.iter().enumerate() {
        let l = raw.strip_suffix('\r').unwrap_or(raw);
        if l.starts_with('#') {
            continue;
        }
        if l.trim().is_empty() {
            flush(&mut block, &mut out)?;
        } else {
            block.push((i + 1, l));
        }
    }
    flush(&mut block, &mut out)?;
    Ok(out)
}

pub fn load_candidate_sets(path: impl AsRef<FsPath>) -> Result<Vec<CandidateSet>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| ApstError::io(path, e))?;
    read_candidate_sets(std::io::BufReader::new(f), &path.display().to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestPath {
    pub kind: EvidenceKind,
    #[serde(flatten)]
    pub path: PathRecord,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub entity: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub query: QueryTriple,
    pub masked: Side,
    pub rank: usize,
    /// Score of the true candidate.
    pub score: f64,
    pub best_path: Option<BestPath>,
    /// All candidates in ranked order.
    pub scores: Vec<CandidateScore>,
}

/// Scores every candidate and returns the true entity's 1-based rank.
pub fn rank_candidates(cs: &CandidateSet, ctx: &ScoringContext<'_>) -> Result<RankingResult> {
    let (_, triples) = cs.tail_form();
    let mut scored = Vec::with_capacity(triples.len());
    let mut best_path = None;
    let positive = cs.positive();
    for (entity, q) in cs.candidates.iter().zip(&triples) {
        let st = score_query(ctx, q)?;
        if entity == positive {
            best_path = st.best_path.as_ref().map(|m| BestPath {
                kind: m.kind,
                path: m.path.to_record(ctx.graph),
                similarity: st.score,
            });
        }
        scored.push(CandidateScore {
            entity: entity.clone(),
            score: st.score,
        });
    }
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.entity.cmp(&b.entity)));
    let idx = scored
        .iter()
        .position(|c| c.entity == positive)
        .ok_or_else(|| ApstError::Validation("true entity missing from candidates".into()))?;
    Ok(RankingResult {
        query: cs.query.clone(),
        masked: cs.masked,
        rank: idx + 1,
        score: scored[idx].score,
        best_path,
        scores: scored,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    #[serde(rename = "hit@1")]
    pub hit_at_1: f64,
    pub queries: usize,
}

pub fn aggregate_metrics(results: &[RankingResult]) -> Result<Metrics> {
    aggregate_ranks(results.iter().map(|r| r.rank))
}

pub fn aggregate_ranks(ranks: impl IntoIterator<Item = usize>) -> Result<Metrics> {
    let (mut n, mut rr, mut hits) = (0usize, 0.0f64, 0usize);
    for rank in ranks {
        if rank == 0 {
            return Err(ApstError::Contract("ranks are 1-based".into()));
        }
        n += 1;
        rr += 1.0 / rank as f64;
        hits += usize::from(rank == 1);
    }
    if n == 0 {
        return Err(ApstError::Contract("no ranking results to aggregate".into()));
    }
    Ok(Metrics {
        mrr: rr / n as f64,
        hit_at_1: hits as f64 / n as f64,
        queries: n,
    })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub store_ms: u128,
    pub eval_ms: u128,
    pub total_ms: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SideMetrics {
    pub head: Option<Metrics>,
    pub tail: Option<Metrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config: RunConfig,
    pub per_query: Vec<RankingResult>,
    pub aggregate: Metrics,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub by_side: Option<SideMetrics>,
    pub warnings: Vec<String>,
    pub timing: Timing,
}

/// Entities shared by two graphs, sorted.
pub fn entity_overlap(a: &Graph, b: &Graph) -> Vec<String> {
    let bs: HashSet<&str> = b.entity_names().iter().map(String::as_str).collect();
    a.entity_names()
        .iter()
        .filter(|e| bs.contains(e.as_str()))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub fn load_descriptions(cfg: &RunConfig) -> Result<DescriptionStore> {
    let mut d = DescriptionStore::new();
    if let Some(p) = &cfg.short_descriptions {
        d.load(p, DescriptionTier::Short)?;
    }
    if let Some(p) = &cfg.descriptions {
        d.load(p, DescriptionTier::Detailed)?;
    }
    Ok(d)
}

/// Loads the store named by `cfg.store`, or mines one from `train` when no
/// store file exists or `build_store` is set.
pub fn obtain_store(cfg: &RunConfig, train: &Graph) -> Result<LogicalApStore> {
    match &cfg.store {
        Some(p) if !cfg.build_store && p.exists() => LogicalApStore::load(p),
        _ => Ok(build_logical_ap_store(train, cfg.depth, cfg.thresholds())?.0),
    }
}

/// Full evaluation run with an injected encoder.
pub fn run_experiment(cfg: &RunConfig, encoder: &dyn Encoder) -> Result<Report> {
    cfg.validate()?;
    let start = Instant::now();
    let train_path = cfg.require(&cfg.train, "train")?;
    let cand_path = cfg.require(&cfg.candidates, "candidates")?;
    if !cand_path.exists() {
        return Err(ApstError::Config(format!(
            "candidate file {} does not exist",
            cand_path.display()
        )));
    }
    let train = Graph::load(train_path, cfg.format)?.augment_inverses()?;
    let store = obtain_store(cfg, &train)?;
    let store_ms = start.elapsed().as_millis();
    log::info!("store ready: {} chains, {store_ms} ms", store.len());

    let mut warnings = Vec::new();
    let test;
    let evidence = match cfg.mode {
        EvalMode::Transductive => &train,
        EvalMode::Inductive => {
            let test_path = cfg.require(&cfg.test, "test")?;
            test = Graph::load(test_path, cfg.format)?.augment_inverses()?;
            let overlap = entity_overlap(&train, &test);
            if !overlap.is_empty() {
                let shown: Vec<&str> = overlap.iter().take(20).map(String::as_str).collect();
                let more = overlap.len().saturating_sub(shown.len());
                let mut msg = format!(
                    "inductive mode: {} entities occur in both train and test graphs: {}",
                    overlap.len(),
                    shown.join(", ")
                );
                if more > 0 {
                    msg.push_str(&format!(" (and {more} more)"));
                }
                log::warn!("{msg}");
                warnings.push(msg);
            }
            &test
        }
    };

    let descriptions = load_descriptions(cfg)?;
    let sets = load_candidate_sets(cand_path)?;
    for cs in &sets {
        cs.validate(cfg.candidates_per_query)?;
    }
    let ctx = ScoringContext {
        graph: evidence,
        store: &store,
        encoder,
        descriptions: &descriptions,
        tier: cfg.ablation.tier(),
        params: cfg.match_params(),
    };
    log::info!("ranking {} candidate sets", sets.len());
    let eval_start = Instant::now();
    let per_query = par::map(&sets, |cs| rank_candidates(cs, &ctx))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let eval_ms = eval_start.elapsed().as_millis();

    let aggregate = aggregate_metrics(&per_query)?;
    let by_side = cfg.split_sides.then(|| {
        let side = |s: Side| aggregate_ranks(per_query.iter().filter(|r| r.masked == s).map(|r| r.rank)).ok();
        SideMetrics {
            head: side(Side::Head),
            tail: side(Side::Tail),
        }
    });
    Ok(Report {
        config: cfg.clone(),
        per_query,
        aggregate,
        by_side,
        warnings,
        timing: Timing {
            store_ms,
            eval_ms,
            total_ms: start.elapsed().as_millis(),
        },
    })
}
