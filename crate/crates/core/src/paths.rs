//! Path enumeration over an inverse-augmented graph.
//!
//! Closed paths connect a query's head to its tail; anchoring paths touch only
//! one of them. Enumeration is breadth-first over the adjacency indexes, limited
//! to simple paths (no repeated entity), so output is exhaustive and its order
//! is a pure function of the graph's insertion order.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ApstError, Result};
use crate::graph::{EntityId, Graph, RelationId, Triple};

/// A walk `e0 -r1-> e1 -r2-> ... -rn-> en` with `n >= 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Path {
    entities: Vec<EntityId>,
    relations: Vec<RelationId>,
}

/// The relations of a path with the entities dropped.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationChain(Vec<RelationId>);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Head,
    Tail,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Head => "head",
            Side::Tail => "tail",
        })
    }
}

/// Where a path sits relative to a query `(h, r, t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PathCategory {
    NoContact,
    HeadAp,
    TailAp,
    ClosedPath,
    Concatenation,
}

/// JSON-lines form of a path, by surface strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRecord {
    pub entities: Vec<String>,
    pub relations: Vec<String>,
}

impl Path {
    pub fn new(entities: Vec<EntityId>, relations: Vec<RelationId>) -> Result<Path> {
        if relations.is_empty() || entities.len() != relations.len() + 1 {
            return Err(ApstError::Contract(format!(
                "path needs n >= 1 relations and n + 1 entities, got {} and {}",
                relations.len(),
                entities.len()
            )));
        }
        Ok(Path {
            entities,
            relations,
        })
    }

    pub fn single(head: EntityId, relation: RelationId, tail: EntityId) -> Path {
        Path {
            entities: vec![head, tail],
            relations: vec![relation],
        }
    }

    /// Number of relations.
    pub fn len(&self) -> usize {
        self.relations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relations.is_empty()
    }

    pub fn entities(&self) -> &[EntityId] {
        &self.entities
    }

    pub fn relations(&self) -> &[RelationId] {
        &self.relations
    }

    pub fn start(&self) -> EntityId {
        self.entities[0]
    }

    pub fn end(&self) -> EntityId {
        *self.entities.last().expect("path has entities")
    }

    pub fn chain(&self) -> RelationChain {
        RelationChain(self.relations.clone())
    }

    pub fn steps(&self) -> impl Iterator<Item = Triple> + '_ {
        self.relations
            .iter()
            .enumerate()
            .map(move |(i, &r)| Triple::new(self.entities[i], r, self.entities[i + 1]))
    }

    pub fn is_simple(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.entities.len());
        self.entities.iter().all(|e| seen.insert(*e))
    }

    /// Every step is a triple of `g`.
    pub fn is_valid_in(&self, g: &Graph) -> bool {
        self.steps().all(|t| g.contains(&t))
    }

    /// The same walk traversed backwards through inverse relations.
    pub fn reversed(&self, g: &Graph) -> Result<Path> {
        let relations = self
            .relations
            .iter()
            .rev()
            .map(|&r| g.inverse(r).ok_or(ApstError::NotAugmented))
            .collect::<Result<Vec<_>>>()?;
        let entities = self.entities.iter().rev().copied().collect();
        Ok(Path {
            entities,
            relations,
        })
    }

    /// Sub-path over entity positions `from..=to`.
    pub fn slice(&self, from: usize, to: usize) -> Path {
        assert!(from < to && to <= self.len(), "bad slice {from}..={to}");
        Path {
            entities: self.entities[from..=to].to_vec(),
            relations: self.relations[from..to].to_vec(),
        }
    }

    /// Joins paths that share endpoints (`a.end() == b.start()`).
    pub fn concat(parts: &[Path]) -> Option<Path> {
        let mut it = parts.iter();
        let mut out = it.next()?.clone();
        for p in it {
            if out.end() != p.start() {
                return None;
            }
            out.entities.extend_from_slice(&p.entities[1..]);
            out.relations.extend_from_slice(&p.relations);
        }
        Some(out)
    }

    pub fn to_record(&self, g: &Graph) -> PathRecord {
        PathRecord {
            entities: self
                .entities
                .iter()
                .map(|&e| g.entity_name(e).to_string())
                .collect(),
            relations: self
                .relations
                .iter()
                .map(|&r| g.relation_name(r).to_string())
                .collect(),
        }
    }

    pub fn from_record(g: &Graph, rec: &PathRecord) -> Result<Path> {
        let entities = rec
            .entities
            .iter()
            .map(|e| g.require_entity(e))
            .collect::<Result<Vec<_>>>()?;
        let relations = rec
            .relations
            .iter()
            .map(|r| g.require_relation(r))
            .collect::<Result<Vec<_>>>()?;
        Path::new(entities, relations)
    }

    /// `A -p-> B -q-> C`
    pub fn display(&self, g: &Graph) -> String {
        let mut s = g.entity_name(self.entities[0]).to_string();
        for (i, &r) in self.relations.iter().enumerate() {
            s.push_str(" -");
            s.push_str(g.relation_name(r));
            s.push_str("-> ");
            s.push_str(g.entity_name(self.entities[i + 1]));
        }
        s
    }
}

impl RelationChain {
    pub fn new(relations: Vec<RelationId>) -> Result<RelationChain> {
        if relations.is_empty() {
            return Err(ApstError::Contract("relation chain must be nonempty".into()));
        }
        Ok(RelationChain(relations))
    }

    pub fn relations(&self) -> &[RelationId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The chain read backwards with each relation inverted: the chain of the
    /// reversed path.
    pub fn reversed(&self, g: &Graph) -> Result<RelationChain> {
        self.0
            .iter()
            .rev()
            .map(|&r| g.inverse(r).ok_or(ApstError::NotAugmented))
            .collect::<Result<Vec<_>>>()
            .map(RelationChain)
    }

    pub fn surfaces(&self, g: &Graph) -> Vec<String> {
        self.0
            .iter()
            .map(|&r| g.relation_name(r).to_string())
            .collect()
    }

    /// Resolves surface names; `None` if any relation is absent from `g`.
    pub fn from_surfaces(g: &Graph, names: &[String]) -> Option<RelationChain> {
        if names.is_empty() {
            return None;
        }
        names
            .iter()
            .map(|n| g.relation(n))
            .collect::<Option<Vec<_>>>()
            .map(RelationChain)
    }
}

/// The relation chain of a path.
pub fn relation_chain(p: &Path) -> RelationChain {
    p.chain()
}

fn is_excluded(g: &Graph, exclude: Option<&Triple>, step: &Triple) -> bool {
    match exclude {
        None => false,
        Some(x) => step == x || g.inverse_triple(x).as_ref() == Some(step),
    }
}

/// Breadth-first enumeration of simple paths leaving `start`.
///
/// `walk_in` follows incoming edges instead, producing paths that end at
/// `start`; they are returned in forward orientation. `accept` decides which
/// partial paths are emitted and `extend` which are expanded further.
fn bfs_paths(
    g: &Graph,
    start: EntityId,
    walk_in: bool,
    max_depth: usize,
    exclude: Option<&Triple>,
    mut accept: impl FnMut(EntityId) -> bool,
    mut extend: impl FnMut(EntityId) -> bool,
) -> Vec<Path> {
    // Partial walks are kept in walk order (start first); flipped on emit.
    let mut frontier: Vec<(Vec<EntityId>, Vec<RelationId>)> = vec![(vec![start], Vec::new())];
    let mut out = Vec::new();
    for _ in 0..max_depth {
        let mut next = Vec::new();
        for (ents, rels) in &frontier {
            let cur = *ents.last().expect("nonempty");
            let edges = if walk_in {
                g.in_edges(cur)
            } else {
                g.out_edges(cur)
            };
            for &(r, nb) in edges {
                if ents.contains(&nb) {
                    continue;
                }
                let step = if walk_in {
                    Triple::new(nb, r, cur)
                } else {
                    Triple::new(cur, r, nb)
                };
                if is_excluded(g, exclude, &step) {
                    continue;
                }
                let mut e2 = ents.clone();
                e2.push(nb);
                let mut r2 = rels.clone();
                r2.push(r);
                if accept(nb) {
                    let (entities, relations) = if walk_in {
                        let mut e = e2.clone();
                        e.reverse();
                        let mut r = r2.clone();
                        r.reverse();
                        (e, r)
                    } else {
                        (e2.clone(), r2.clone())
                    };
                    out.push(Path {
                        entities,
                        relations,
                    });
                }
                if extend(nb) {
                    next.push((e2, r2));
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    out
}

fn check_depth(max_depth: usize) -> Result<()> {
    if max_depth == 0 {
        return Err(ApstError::Contract("max_depth must be >= 1".into()));
    }
    Ok(())
}

/// All simple paths from `h` to `t` with at most `max_depth` relations, never
/// using `exclude` or its inverse twin. Ordered by length, then BFS order.
pub fn enumerate_closed_paths(
    g: &Graph,
    h: EntityId,
    t: EntityId,
    max_depth: usize,
    exclude: Option<&Triple>,
) -> Result<Vec<Path>> {
    g.require_augmented()?;
    g.check_entity(h)?;
    g.check_entity(t)?;
    check_depth(max_depth)?;
    Ok(bfs_paths(g, h, false, max_depth, exclude, |e| e == t, |e| e != t))
}

/// All simple paths starting at `anchor` (`Side::Head`) or ending at it
/// (`Side::Tail`), with at most `max_depth` relations.
pub fn enumerate_anchoring_paths(
    g: &Graph,
    anchor: EntityId,
    side: Side,
    max_depth: usize,
    exclude: Option<&Triple>,
) -> Result<Vec<Path>> {
    g.require_augmented()?;
    g.check_entity(anchor)?;
    check_depth(max_depth)?;
    Ok(bfs_paths(
        g,
        anchor,
        side == Side::Tail,
        max_depth,
        exclude,
        |_| true,
        |_| true,
    ))
}

/// Positions of `h` or `t` in the path's entity list.
fn anchor_positions(p: &Path, h: EntityId, t: EntityId) -> Vec<usize> {
    p.entities
        .iter()
        .enumerate()
        .filter(|(_, &e)| e == h || e == t)
        .map(|(i, _)| i)
        .collect()
}

pub fn classify_path(p: &Path, h: EntityId, t: EntityId) -> PathCategory {
    let n = p.len();
    let idx = anchor_positions(p, h, t);
    match idx.as_slice() {
        [] => PathCategory::NoContact,
        [0, last] if *last == n => {
            let (s, e) = (p.start(), p.end());
            if (s == h && e == t) || (s == t && e == h) {
                PathCategory::ClosedPath
            } else {
                PathCategory::Concatenation
            }
        }
        [i] if *i == 0 || *i == n => {
            if p.entities[*i] == h {
                PathCategory::HeadAp
            } else {
                PathCategory::TailAp
            }
        }
        _ => PathCategory::Concatenation,
    }
}

/// Splits a concatenation at every interior occurrence of `h` or `t`. The
/// pieces share endpoints, so [`Path::concat`] rebuilds the input.
pub fn decompose_concatenated(p: &Path, h: EntityId, t: EntityId) -> Result<Vec<Path>> {
    let cat = classify_path(p, h, t);
    if cat != PathCategory::Concatenation {
        return Err(ApstError::Contract(format!(
            "decompose_concatenated called on a {cat:?} path"
        )));
    }
    let n = p.len();
    let mut cuts: Vec<usize> = vec![0];
    cuts.extend(anchor_positions(p, h, t).into_iter().filter(|&i| i != 0 && i != n));
    cuts.push(n);
    cuts.dedup();
    Ok(cuts.windows(2).map(|w| p.slice(w[0], w[1])).collect())
}

/// Entities reached from `start` by following `chain` in order along simple paths.
pub fn chain_endpoints(g: &Graph, start: EntityId, chain: &RelationChain) -> Result<BTreeSet<EntityId>> {
    g.check_entity(start)?;
    for &r in chain.relations() {
        g.check_relation(r)?;
    }
    let mut out = BTreeSet::new();
    let mut stack = vec![start];
    follow_chain(g, chain.relations(), &mut stack, &mut out);
    Ok(out)
}

fn follow_chain(g: &Graph, rest: &[RelationId], visited: &mut Vec<EntityId>, out: &mut BTreeSet<EntityId>) {
    let Some((&r, tail)) = rest.split_first() else {
        out.insert(*visited.last().expect("nonempty"));
        return;
    };
    let cur = *visited.last().expect("nonempty");
    for &(rel, nb) in g.out_edges(cur) {
        if rel != r || visited.contains(&nb) {
            continue;
        }
        visited.push(nb);
        follow_chain(g, tail, visited, out);
        visited.pop();
    }
}

/// True if some simple path from `start` follows `chain`.
pub fn chain_matches_from(g: &Graph, start: EntityId, chain: &RelationChain) -> bool {
    fn go(g: &Graph, rest: &[RelationId], visited: &mut Vec<EntityId>) -> bool {
        let Some((&r, tail)) = rest.split_first() else {
            return true;
        };
        let cur = *visited.last().expect("nonempty");
        for &(rel, nb) in g.out_edges(cur) {
            if rel != r || visited.contains(&nb) {
                continue;
            }
            visited.push(nb);
            let hit = go(g, tail, visited);
            visited.pop();
            if hit {
                return true;
            }
        }
        false
    }
    let mut visited = vec![start];
    go(g, chain.relations(), &mut visited)
}

/// Evidence paths around one query, oriented for chain matching: closed paths
/// run `h -> t`, head APs start at `h`, tail APs end at `t`. Concatenations
/// are split into their anchored pieces. Each list is deduplicated and keeps
/// first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AnchoredEvidence {
    pub closed: Vec<Path>,
    pub head: Vec<Path>,
    pub tail: Vec<Path>,
}

#[derive(Default)]
struct OrderedSet {
    items: Vec<Path>,
    seen: HashSet<Path>,
}

impl OrderedSet {
    fn push(&mut self, p: Path) {
        if self.seen.insert(p.clone()) {
            self.items.push(p);
        }
    }
}

pub fn anchored_evidence(
    g: &Graph,
    h: EntityId,
    t: EntityId,
    max_depth: usize,
    exclude: Option<&Triple>,
) -> Result<AnchoredEvidence> {
    let mut closed = OrderedSet::default();
    let mut head = OrderedSet::default();
    let mut tail = OrderedSet::default();

    for p in enumerate_closed_paths(g, h, t, max_depth, exclude)? {
        closed.push(p);
    }
    let mut raw = enumerate_anchoring_paths(g, h, Side::Head, max_depth, exclude)?;
    raw.extend(enumerate_anchoring_paths(g, t, Side::Tail, max_depth, exclude)?);

    for p in raw {
        let pieces = match classify_path(&p, h, t) {
            PathCategory::Concatenation => decompose_concatenated(&p, h, t)?,
            _ => vec![p],
        };
        for piece in pieces {
            match classify_path(&piece, h, t) {
                PathCategory::ClosedPath => {
                    let oriented = if piece.start() == h {
                        piece
                    } else {
                        piece.reversed(g)?
                    };
                    closed.push(oriented);
                }
                PathCategory::HeadAp => {
                    let oriented = if piece.start() == h {
                        piece
                    } else {
                        piece.reversed(g)?
                    };
                    head.push(oriented);
                }
                PathCategory::TailAp => {
                    let oriented = if piece.end() == t {
                        piece
                    } else {
                        piece.reversed(g)?
                    };
                    tail.push(oriented);
                }
                PathCategory::NoContact | PathCategory::Concatenation => {
                    unreachable!("anchored pieces always touch h or t at an endpoint only")
                }
            }
        }
    }
    Ok(AnchoredEvidence {
        closed: closed.items,
        head: head.items,
        tail: tail.items,
    })
}
