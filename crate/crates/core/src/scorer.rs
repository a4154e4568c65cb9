//! Path-sentence similarity scoring, the cosine embedding loss, and
//! training-pair generation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ApstError, Result};
use crate::filter::{match_query_aps, EvidenceKind, LogicalApStore, MatchParams, MatchedPath, QueryTriple};
use crate::graph::{EntityId, Graph, Triple};
use crate::text::{encode, format_sentence, DescriptionStore, DescriptionTier, Embedding, Encoder, SentenceSource};

/// Score of a candidate with no usable evidence path.
pub const NO_EVIDENCE_SCORE: f64 = -1.0;

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(ApstError::Contract(format!(
            "cosine of vectors with widths {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(ApstError::DegenerateInput("cosine of a zero vector".into()));
    }
    let dot: f64 = a.values().iter().zip(b.values()).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Max cosine between the query and any path, with the first index attaining
/// it. No paths gives [`NO_EVIDENCE_SCORE`] and no index.
pub fn triplet_score(query: &Embedding, paths: &[Embedding]) -> Result<(f64, Option<usize>)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in paths.iter().enumerate() {
        let s = cosine_similarity(query, p)?;
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, i));
        }
    }
    Ok(match best {
        Some((s, i)) => (s, Some(i)),
        None => (NO_EVIDENCE_SCORE, None),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    pub fn value(self) -> i8 {
        match self {
            Label::Positive => 1,
            Label::Negative => -1,
        }
    }
}

impl From<Label> for i8 {
    fn from(l: Label) -> i8 {
        l.value()
    }
}

impl TryFrom<i8> for Label {
    type Error = ApstError;

    fn try_from(v: i8) -> Result<Label> {
        match v {
            1 => Ok(Label::Positive),
            -1 => Ok(Label::Negative),
            other => Err(ApstError::Contract(format!("label must be 1 or -1, got {other}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub margin: f64,
    pub budget: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            margin: 0.5,
            budget: 3,
        }
    }
}

impl LossConfig {
    pub fn new(margin: f64, budget: usize) -> Result<Self> {
        let cfg = LossConfig { margin, budget };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.margin > -1.0 && self.margin < 1.0) {
            return Err(ApstError::Config(format!("margin {} is outside (-1, 1)", self.margin)));
        }
        if self.budget == 0 {
            return Err(ApstError::Config("budget L must be >= 1".into()));
        }
        Ok(())
    }
}

/// `1 - score` for positives, `max(0, score - margin)` for negatives.
pub fn cosine_embedding_loss(score: f64, label: i8, cfg: &LossConfig) -> Result<f64> {
    if !(-1.0..=1.0).contains(&score) {
        return Err(ApstError::Contract(format!("score {score} is outside [-1, 1]")));
    }
    Ok(match Label::try_from(label)? {
        Label::Positive => 1.0 - score,
        Label::Negative => (score - cfg.margin).max(0.0),
    })
}

/// A candidate with its evidence scores.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredTriple {
    pub triple: QueryTriple,
    pub score: f64,
    pub best_path: Option<MatchedPath>,
    pub path_scores: Vec<(MatchedPath, f64)>,
}

/// Everything needed to score a query against one evidence graph.
#[derive(Clone, Copy)]
pub struct ScoringContext<'a> {
    pub graph: &'a Graph,
    pub store: &'a LogicalApStore,
    pub encoder: &'a dyn Encoder,
    pub descriptions: &'a DescriptionStore,
    pub tier: DescriptionTier,
    pub params: MatchParams,
}

pub fn path_sentence_source(m: &MatchedPath) -> SentenceSource<'_> {
    match m.kind {
        EvidenceKind::ClosedPath => SentenceSource::ClosedPath(&m.path),
        EvidenceKind::HeadAp | EvidenceKind::TailAp => SentenceSource::AnchoringPath(&m.path),
    }
}

/// Matches evidence for `q`, encodes query and path sentences in one batch,
/// and takes the max cosine.
pub fn score_query(ctx: &ScoringContext<'_>, q: &QueryTriple) -> Result<ScoredTriple> {
    let paths = match_query_aps(ctx.graph, q, ctx.store, ctx.params)?.into_paths();
    let mut sentences = Vec::with_capacity(paths.len() + 1);
    sentences.push(format_sentence(ctx.graph, SentenceSource::Query(q), ctx.descriptions, ctx.tier));
    for m in &paths {
        sentences.push(format_sentence(ctx.graph, path_sentence_source(m), ctx.descriptions, ctx.tier));
    }
    let embs = encode(&sentences, ctx.encoder)?;
    let (score, best) = triplet_score(&embs[0], &embs[1..])?;
    let path_scores = paths
        .iter()
        .zip(&embs[1..])
        .map(|(m, e)| Ok((m.clone(), cosine_similarity(&embs[0], e)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoredTriple {
        triple: q.clone(),
        score,
        best_path: best.map(|i| paths[i].clone()),
        path_scores,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptSide {
    Head,
    #[default]
    Tail,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub triple: QueryTriple,
    pub label: Label,
    pub paths: Vec<MatchedPath>,
}

/// One line of the training-pair export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub query_sentence: String,
    pub path_sentences: Vec<String>,
    pub label: Label,
}

impl TrainingExample {
    pub fn to_record(&self, g: &Graph, descriptions: &DescriptionStore, tier: DescriptionTier) -> TrainingRecord {
        TrainingRecord {
            query_sentence: format_sentence(g, SentenceSource::Query(&self.triple), descriptions, tier).text,
            path_sentences: self
                .paths
                .iter()
                .map(|m| format_sentence(g, path_sentence_source(m), descriptions, tier).text)
                .collect(),
            label: self.label,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PairConfig {
    pub negatives_per_positive: usize,
    pub seed: u64,
    pub corrupt: CorruptSide,
    pub params: MatchParams,
}

impl Default for PairConfig {
    fn default() -> Self {
        PairConfig {
            negatives_per_positive: 5,
            seed: 42,
            corrupt: CorruptSide::Tail,
            params: MatchParams::default(),
        }
    }
}

/// Lazily yields, for every base training triple in order, one positive
/// example followed by its corrupted negatives. A single seeded generator
/// drives corruption, so the stream is reproducible.
pub struct TrainingPairs<'a> {
    g: &'a Graph,
    store: &'a LogicalApStore,
    cfg: PairConfig,
    rng: ChaCha8Rng,
    triples: Vec<Triple>,
    next: usize,
    pending: std::collections::VecDeque<TrainingExample>,
    failed: bool,
}

pub fn generate_training_pairs<'a>(g_train: &'a Graph, store: &'a LogicalApStore, cfg: PairConfig) -> Result<TrainingPairs<'a>> {
    g_train.require_augmented()?;
    cfg.params.validate()?;
    if g_train.num_entities() < 2 {
        return Err(ApstError::Generation(format!(
            "{} entities is too few to corrupt triples",
            g_train.num_entities()
        )));
    }
    Ok(TrainingPairs {
        g: g_train,
        store,
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        cfg,
        triples: g_train.base_triples().copied().collect(),
        next: 0,
        pending: Default::default(),
        failed: false,
    })
}

impl TrainingPairs<'_> {
    fn surface(&self, t: &Triple) -> QueryTriple {
        let (h, r, tl) = self.g.triple_surface(t);
        QueryTriple::new(h, r, tl)
    }

    fn example(&self, t: &Triple, label: Label) -> Result<TrainingExample> {
        let triple = self.surface(t);
        let paths = match_query_aps(self.g, &triple, self.store, self.cfg.params)?.into_paths();
        Ok(TrainingExample { triple, label, paths })
    }

    fn corruptions(&mut self, t: &Triple) -> Result<Vec<Triple>> {
        let g = self.g;
        let make = |e: EntityId| match self.cfg.corrupt {
            CorruptSide::Tail => Triple::new(t.head, t.relation, e),
            CorruptSide::Head => Triple::new(e, t.relation, t.tail),
        };
        let valid: Vec<EntityId> = g.entity_ids().filter(|&e| !g.contains(&make(e))).collect();
        if valid.is_empty() {
            let (h, r, tl) = g.triple_surface(t);
            return Err(ApstError::Generation(format!(
                "every entity already completes ({h}, {r}, {tl})"
            )));
        }
        let k = self.cfg.negatives_per_positive;
        let mut picked: Vec<EntityId> = valid.choose_multiple(&mut self.rng, k).copied().collect();
        while picked.len() < k {
            picked.push(valid[self.rng.gen_range(0..valid.len())]);
        }
        Ok(picked.into_iter().map(make).collect())
    }

    fn fill(&mut self) -> Result<bool> {
        let Some(&t) = self.triples.get(self.next) else {
            return Ok(false);
        };
        self.next += 1;
        self.pending.push_back(self.example(&t, Label::Positive)?);
        for c in self.corruptions(&t)? {
            self.pending.push_back(self.example(&c, Label::Negative)?);
        }
        Ok(true)
    }
}

impl Iterator for TrainingPairs<'_> {
    type Item = Result<TrainingExample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        if self.pending.is_empty() {
            match self.fill() {
                Ok(true) => {}
                Ok(false) => return None,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            }
        }
        self.pending.pop_front().map(Ok)
    }
}
