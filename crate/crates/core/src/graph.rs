//! Knowledge-graph storage: interning, triple loading, inverse augmentation,
//! and the adjacency indexes every other module queries.
//!
//! A [`Graph`] is immutable once built. Interning tables belong to a single
//! graph, so a training graph and an inductive test graph never share handles;
//! anything that must cross graphs (stored chains, descriptions, candidate
//! files) is keyed by surface string instead.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ApstError, Result};
use crate::hash::Fnv1a;

/// Suffix appended to a relation's surface form to name its inverse.
pub const INVERSE_MARKER: &str = "⁻¹";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Column order of a triple file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TripleFormat {
    #[default]
    HeadRelationTail,
    HeadTailRelation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub relations: usize,
    pub entities: usize,
    pub triples: usize,
}

/// Returns the surface form of the inverse of `surface`, undoing the marker if present.
pub fn inverse_surface(surface: &str) -> String {
    match surface.strip_suffix(INVERSE_MARKER) {
        Some(base) => base.to_string(),
        None => format!("{surface}{INVERSE_MARKER}"),
    }
}

pub fn is_inverse_surface(surface: &str) -> bool {
    surface.ends_with(INVERSE_MARKER)
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    entities: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relations: Vec<String>,
    relation_index: HashMap<String, RelationId>,
    inverse: Vec<Option<RelationId>>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    out_index: Vec<Vec<(RelationId, EntityId)>>,
    in_index: Vec<Vec<(RelationId, EntityId)>>,
    heads_index: Vec<BTreeSet<EntityId>>,
    augmented: bool,
}

/// Accumulates surface-form triples and interns them into a [`Graph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    graph: Graph,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(&mut self, surface: &str) -> EntityId {
        let g = &mut self.graph;
        if let Some(&id) = g.entity_index.get(surface) {
            return id;
        }
        let id = EntityId(g.entities.len() as u32);
        g.entities.push(surface.to_string());
        g.entity_index.insert(surface.to_string(), id);
        g.out_index.push(Vec::new());
        g.in_index.push(Vec::new());
        id
    }

    pub fn relation(&mut self, surface: &str) -> RelationId {
        let g = &mut self.graph;
        if let Some(&id) = g.relation_index.get(surface) {
            return id;
        }
        let id = RelationId(g.relations.len() as u32);
        g.relations.push(surface.to_string());
        g.relation_index.insert(surface.to_string(), id);
        g.inverse.push(None);
        g.heads_index.push(BTreeSet::new());
        id
    }

    /// Adds a triple by surface strings. Returns false if it was already present.
    pub fn add(&mut self, head: &str, relation: &str, tail: &str) -> bool {
        let h = self.entity(head);
        let r = self.relation(relation);
        let t = self.entity(tail);
        self.add_ids(Triple::new(h, r, t))
    }

    fn add_ids(&mut self, triple: Triple) -> bool {
        let g = &mut self.graph;
        if !g.triple_set.insert(triple) {
            return false;
        }
        g.triples.push(triple);
        g.out_index[triple.head.index()].push((triple.relation, triple.tail));
        g.in_index[triple.tail.index()].push((triple.relation, triple.head));
        g.heads_index[triple.relation.index()].insert(triple.head);
        true
    }

    pub fn build(self) -> Graph {
        self.graph
    }
}

impl Graph {
    /// Builds a graph from surface triples, deduplicating. Rejects relations
    /// that already carry the inverse marker.
    pub fn from_triples<'a, I>(triples: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut b = GraphBuilder::new();
        for (h, r, t) in triples {
            if is_inverse_surface(r) {
                return Err(ApstError::AlreadyAugmented(r.to_string()));
            }
            b.add(h, r, t);
        }
        Ok(b.build())
    }

    /// Parses tab-separated triples. `source` only labels error messages.
    pub fn parse(text: &str, format: TripleFormat, source: &str) -> Result<Graph> {
        let mut b = GraphBuilder::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(ApstError::Parse {
                    path: source.to_string(),
                    line: idx + 1,
                    message: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let (h, r, t) = match format {
                TripleFormat::HeadRelationTail => (fields[0], fields[1], fields[2]),
                TripleFormat::HeadTailRelation => (fields[0], fields[2], fields[1]),
            };
            if [h, r, t].iter().any(|f| f.is_empty()) {
                return Err(ApstError::Parse {
                    path: source.to_string(),
                    line: idx + 1,
                    message: "empty field".to_string(),
                });
            }
            if is_inverse_surface(r) {
                return Err(ApstError::Parse {
                    path: source.to_string(),
                    line: idx + 1,
                    message: format!("relation `{r}` carries the reserved inverse marker"),
                });
            }
            b.add(h, r, t);
        }
        let g = b.build();
        if g.triples.is_empty() {
            return Err(ApstError::EmptyGraph(source.to_string()));
        }
        Ok(g)
    }

    /// Loads a triple file: UTF-8, one `head\trelation\ttail` per line.
    pub fn load(path: impl AsRef<Path>, format: TripleFormat) -> Result<Graph> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| ApstError::io(path, e))?;
        Graph::parse(&text, format, &path.display().to_string())
    }

    /// Returns a new graph with every relation's inverse and every triple's
    /// inverse twin added.
    pub fn augment_inverses(&self) -> Result<Graph> {
        if self.augmented {
            return Err(ApstError::AlreadyAugmented(
                "graph was already augmented".to_string(),
            ));
        }
        if let Some(r) = self.relations.iter().find(|r| is_inverse_surface(r)) {
            return Err(ApstError::AlreadyAugmented(r.clone()));
        }
        let mut b = GraphBuilder::new();
        for e in &self.entities {
            b.entity(e);
        }
        for r in &self.relations {
            b.relation(r);
        }
        let base = self.relations.len();
        for i in 0..base {
            let inv = b.relation(&inverse_surface(&self.relations[i]));
            b.graph.inverse[i] = Some(inv);
            b.graph.inverse[inv.index()] = Some(RelationId(i as u32));
        }
        for &t in &self.triples {
            b.add_ids(t);
        }
        for &t in &self.triples {
            let inv = b.graph.inverse[t.relation.index()].expect("inverse interned above");
            b.add_ids(Triple::new(t.tail, inv, t.head));
        }
        let mut g = b.build();
        g.augmented = true;
        Ok(g)
    }

    pub fn is_augmented(&self) -> bool {
        self.augmented
    }

    pub(crate) fn require_augmented(&self) -> Result<()> {
        if self.augmented {
            Ok(())
        } else {
            Err(ApstError::NotAugmented)
        }
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            relations: self.relations.len(),
            entities: self.entities.len(),
            triples: self.triples.len(),
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    /// Triples whose relation is not an inverse, in insertion order.
    pub fn base_triples(&self) -> impl Iterator<Item = &Triple> + '_ {
        self.triples
            .iter()
            .filter(move |t| !self.is_inverse(t.relation))
    }

    pub fn contains(&self, triple: &Triple) -> bool {
        self.triple_set.contains(triple)
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        (0..self.entities.len() as u32).map(EntityId)
    }

    pub fn relation_ids(&self) -> impl Iterator<Item = RelationId> + '_ {
        (0..self.relations.len() as u32).map(RelationId)
    }

    /// Relations that do not carry the inverse marker.
    pub fn base_relations(&self) -> impl Iterator<Item = RelationId> + '_ {
        self.relation_ids().filter(move |&r| !self.is_inverse(r))
    }

    pub fn entity(&self, surface: &str) -> Option<EntityId> {
        self.entity_index.get(surface).copied()
    }

    pub fn relation(&self, surface: &str) -> Option<RelationId> {
        self.relation_index.get(surface).copied()
    }

    pub fn require_entity(&self, surface: &str) -> Result<EntityId> {
        self.entity(surface)
            .ok_or_else(|| ApstError::UnknownEntity(surface.to_string()))
    }

    pub fn require_relation(&self, surface: &str) -> Result<RelationId> {
        self.relation(surface)
            .ok_or_else(|| ApstError::UnknownRelation(surface.to_string()))
    }

    pub fn entity_name(&self, e: EntityId) -> &str {
        &self.entities[e.index()]
    }

    pub fn relation_name(&self, r: RelationId) -> &str {
        &self.relations[r.index()]
    }

    pub fn has_entity(&self, e: EntityId) -> bool {
        e.index() < self.entities.len()
    }

    pub fn has_relation(&self, r: RelationId) -> bool {
        r.index() < self.relations.len()
    }

    pub(crate) fn check_entity(&self, e: EntityId) -> Result<()> {
        if self.has_entity(e) {
            Ok(())
        } else {
            Err(ApstError::UnknownEntity(format!("#{}", e.0)))
        }
    }

    pub(crate) fn check_relation(&self, r: RelationId) -> Result<()> {
        if self.has_relation(r) {
            Ok(())
        } else {
            Err(ApstError::UnknownRelation(format!("#{}", r.0)))
        }
    }

    pub fn inverse(&self, r: RelationId) -> Option<RelationId> {
        self.inverse.get(r.index()).copied().flatten()
    }

    pub fn is_inverse(&self, r: RelationId) -> bool {
        is_inverse_surface(self.relation_name(r))
    }

    /// The inverse twin of a triple, if the graph has the inverse relation.
    pub fn inverse_triple(&self, t: &Triple) -> Option<Triple> {
        self.inverse(t.relation)
            .map(|inv| Triple::new(t.tail, inv, t.head))
    }

    /// Outgoing `(relation, tail)` pairs of `e`, in insertion order.
    pub fn out_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.out_index[e.index()]
    }

    /// Incoming `(relation, head)` pairs of `e`, in insertion order.
    pub fn in_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.in_index[e.index()]
    }

    /// `{h | (h, r, t) ∈ g}`.
    pub fn relation_heads(&self, r: RelationId) -> Result<&BTreeSet<EntityId>> {
        self.heads_index
            .get(r.index())
            .ok_or_else(|| ApstError::UnknownRelation(format!("#{}", r.0)))
    }

    pub fn triple_surface(&self, t: &Triple) -> (&str, &str, &str) {
        (
            self.entity_name(t.head),
            self.relation_name(t.relation),
            self.entity_name(t.tail),
        )
    }

    /// Resolves a surface triple; `None` if any part is unknown.
    pub fn resolve(&self, head: &str, relation: &str, tail: &str) -> Option<Triple> {
        Some(Triple::new(
            self.entity(head)?,
            self.relation(relation)?,
            self.entity(tail)?,
        ))
    }

    /// Tab-separated serialization of the base triples, insertion order.
    /// Inverse twins are left out so the output loads back.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in self.base_triples() {
            let (h, r, tl) = self.triple_surface(t);
            let _ = writeln!(out, "{h}\t{r}\t{tl}");
        }
        out
    }

    /// Content fingerprint over the surface triples, order-sensitive.
    pub fn fingerprint(&self) -> String {
        let mut h = Fnv1a::default();
        for t in &self.triples {
            let (a, b, c) = self.triple_surface(t);
            h.write_field(a).write_field(b).write_field(c);
        }
        format!("{:016x}", h.finish())
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entities
    }
}
