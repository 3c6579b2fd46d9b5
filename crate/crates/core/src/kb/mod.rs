//! Entity store and type taxonomy.
//!
//! A [`KnowledgeBase`] is built once by [`ingest_dump`] from N-Triples dump
//! files and is immutable afterwards, so it can be shared freely across
//! threads. Entities carry a short description and an undirected set of
//! related entities; predicate-labeled links are kept separately for the
//! SDType baseline, which needs them.

mod ingest;
mod ntriples;
mod store;

pub use ingest::{ingest_dump, FileReport, FileRole, IngestOptions, IngestReport};
pub use ntriples::{parse_triple_line, MalformedTriple, Term, Triple};
pub use store::{load_store, save_store};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::{Error, Result};

/// Canonical entity identifier (absolute IRI).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub String);

impl EntityId {
    pub fn new(iri: impl Into<String>) -> Self {
        EntityId(iri.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        EntityId(s.to_owned())
    }
}

/// An ontology type: IRI plus its camel-case local name (the substring
/// after the last `/` or `#`), e.g. `SoccerPlayer`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct TypeId {
    pub iri: String,
    pub label: String,
}

impl TypeId {
    pub fn new(iri: impl Into<String>) -> Self {
        let iri = iri.into();
        let label = local_name(&iri).to_owned();
        TypeId { iri, label }
    }
}

impl fmt::Display for TypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.iri)
    }
}

fn local_name(iri: &str) -> &str {
    let cut = iri.rfind(['/', '#']).map(|i| i + 1).unwrap_or(0);
    &iri[cut..]
}

/// Position of a type in [`TypeTaxonomy::types`]; the network's output
/// dimension indexes types this way.
pub type TypeIndex = usize;

/// The prediction universe: all ontology types except the root, with
/// subclass edges forming a forest whose virtual root is the excluded top
/// type. Parentless types have depth 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TypeTaxonomy {
    types: Vec<TypeId>,            // sorted by IRI
    index: BTreeMap<String, TypeIndex>,
    parent: Vec<Option<TypeIndex>>,
    depth: Vec<u32>,
    h: u32,
}

impl TypeTaxonomy {
    /// Build from subclass edges `(child IRI, parent IRI)` in file order plus
    /// any extra type IRIs that must exist (e.g. assignment targets).
    /// Edges whose parent is `root_iri` make the child parentless; edges whose
    /// child is the root are ignored. When a type has several parents the
    /// first edge wins and the rest are reported back as warnings.
    pub fn from_edges(
        edges: &[(String, String)],
        extra_types: &[String],
        root_iri: &str,
    ) -> Result<(Self, Vec<String>)> {
        let mut universe: BTreeSet<&str> = BTreeSet::new();
        for (child, parent) in edges {
            if child != root_iri {
                universe.insert(child);
            }
            if parent != root_iri {
                universe.insert(parent);
            }
        }
        for iri in extra_types {
            if iri != root_iri {
                universe.insert(iri);
            }
        }

        let types: Vec<TypeId> = universe.iter().map(|iri| TypeId::new(*iri)).collect();
        let index: BTreeMap<String, TypeIndex> = types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.iri.clone(), i))
            .collect();

        let mut parent: Vec<Option<TypeIndex>> = vec![None; types.len()];
        let mut assigned: Vec<bool> = vec![false; types.len()];
        let mut warnings = Vec::new();
        for (child, parent_iri) in edges {
            if child == root_iri {
                continue;
            }
            let ci = index[child.as_str()];
            if assigned[ci] {
                warnings.push(format!(
                    "type {child} has multiple parents; keeping the first, ignoring {parent_iri}"
                ));
                continue;
            }
            assigned[ci] = true;
            if parent_iri != root_iri {
                parent[ci] = Some(index[parent_iri.as_str()]);
            }
        }

        let mut taxonomy = TypeTaxonomy {
            types,
            index,
            parent,
            depth: Vec::new(),
            h: 0,
        };
        taxonomy.compute_depths()?;
        Ok((taxonomy, warnings))
    }

    fn compute_depths(&mut self) -> Result<()> {
        let n = self.types.len();
        let mut depth = vec![0u32; n];
        for i in 0..n {
            if depth[i] != 0 {
                continue;
            }
            // Walk up to a known depth or a parentless type.
            let mut chain = Vec::new();
            let mut cur = i;
            let base = loop {
                if depth[cur] != 0 {
                    break depth[cur];
                }
                chain.push(cur);
                if chain.len() > n {
                    return Err(Error::Data(format!(
                        "cycle in subclass hierarchy involving {}",
                        self.types[i].iri
                    )));
                }
                match self.parent[cur] {
                    Some(p) => cur = p,
                    None => break 0, // virtual root sits at depth 0
                }
            };
            for (k, &t) in chain.iter().rev().enumerate() {
                depth[t] = base + 1 + k as u32;
            }
        }
        self.h = depth.iter().copied().max().unwrap_or(0);
        self.depth = depth;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Maximum depth over all types; 0 for an empty taxonomy.
    pub fn max_depth(&self) -> u32 {
        self.h
    }

    pub fn resolve(&self, iri: &str) -> Option<TypeIndex> {
        self.index.get(iri).copied()
    }

    pub fn require(&self, iri: &str) -> Result<TypeIndex> {
        self.resolve(iri)
            .ok_or_else(|| Error::UnknownType(iri.to_owned()))
    }

    pub fn type_at(&self, i: TypeIndex) -> &TypeId {
        &self.types[i]
    }

    pub fn parent_of(&self, i: TypeIndex) -> Option<TypeIndex> {
        self.parent[i]
    }

    pub fn depth_of(&self, i: TypeIndex) -> u32 {
        self.depth[i]
    }

    /// Types in IRI order (the canonical type order used everywhere).
    pub fn iter(&self) -> impl Iterator<Item = (TypeIndex, &TypeId)> {
        self.types.iter().enumerate()
    }

    /// `i` and all its ancestors, bottom-up, excluding the virtual root.
    pub fn ancestors_inclusive(&self, i: TypeIndex) -> Vec<TypeIndex> {
        let mut out = vec![i];
        let mut cur = i;
        while let Some(p) = self.parent[cur] {
            out.push(p);
            cur = p;
        }
        out
    }

    /// Find a type by its local-name label (e.g. "Person").
    pub fn find_by_label(&self, label: &str) -> Option<TypeIndex> {
        self.types.iter().position(|t| t.label == label)
    }

    /// FNV-1a over the canonical encoding (sorted IRIs, parent indices,
    /// depths). Stored in checkpoints so a model is never applied against a
    /// different type universe.
    pub fn content_hash(&self) -> u64 {
        let mut w = crate::wire::ByteWriter::new();
        w.put_u32(self.types.len() as u32);
        for (i, t) in self.types.iter().enumerate() {
            w.put_str(&t.iri);
            match self.parent[i] {
                Some(p) => w.put_u32(p as u32),
                None => w.put_u32(u32::MAX),
            }
            w.put_u32(self.depth[i]);
        }
        crate::wire::fnv1a64(w.as_slice())
    }
}

/// An entity: short description plus the set of related entities
/// (undirected neighborhood, self excluded).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityRecord {
    pub description: Option<String>,
    pub related: BTreeSet<EntityId>,
}

/// A predicate-labeled link between two entities.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Link {
    pub subject: EntityId,
    pub predicate: String,
    pub object: EntityId,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeBase {
    pub(crate) taxonomy: TypeTaxonomy,
    pub(crate) entities: BTreeMap<EntityId, EntityRecord>,
    pub(crate) type_assignments: BTreeMap<EntityId, BTreeSet<TypeIndex>>,
    pub(crate) links: Vec<Link>, // sorted, deduplicated
    pub(crate) content_hash: u64,
}

impl KnowledgeBase {
    pub fn taxonomy(&self) -> &TypeTaxonomy {
        &self.taxonomy
    }

    pub fn entities(&self) -> &BTreeMap<EntityId, EntityRecord> {
        &self.entities
    }

    pub fn entity(&self, e: &EntityId) -> Result<&EntityRecord> {
        self.entities
            .get(e)
            .ok_or_else(|| Error::UnknownEntity(e.0.clone()))
    }

    pub fn description(&self, e: &EntityId) -> Option<&str> {
        self.entities.get(e).and_then(|r| r.description.as_deref())
    }

    pub fn type_assignments(&self) -> &BTreeMap<EntityId, BTreeSet<TypeIndex>> {
        &self.type_assignments
    }

    pub fn assigned_types(&self, e: &EntityId) -> Option<&BTreeSet<TypeIndex>> {
        self.type_assignments.get(e)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    /// FNV-1a over the serialized body; identical content hashes identically.
    pub fn content_hash(&self) -> u64 {
        self.content_hash
    }

    /// The deepest asserted type of `e`, ties broken by lexicographic IRI
    /// order; `None` when the entity has no assigned types.
    pub fn most_specific_type(&self, e: &EntityId) -> Result<Option<TypeIndex>> {
        if !self.entities.contains_key(e) {
            return Err(Error::UnknownEntity(e.0.clone()));
        }
        let Some(types) = self.type_assignments.get(e) else {
            return Ok(None);
        };
        // Iteration is by ascending type index = ascending IRI, so keeping
        // strictly-deeper candidates implements the lexicographic tie-break.
        let mut best: Option<(u32, TypeIndex)> = None;
        for &t in types {
            let d = self.taxonomy.depth_of(t);
            if best.map_or(true, |(bd, _)| d > bd) {
                best = Some((d, t));
            }
        }
        Ok(best.map(|(_, t)| t))
    }

    /// Undirected neighbors of `e` over all link predicates, self excluded,
    /// in sorted IRI order.
    pub fn related_entities(&self, e: &EntityId) -> Result<&BTreeSet<EntityId>> {
        self.entity(e).map(|r| &r.related)
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// Assemble a KnowledgeBase directly, bypassing file ingestion.
    pub fn build_kb(
        edges: &[(&str, &str)],
        assignments: &[(&str, &str)],
        descriptions: &[(&str, &str)],
        links: &[(&str, &str, &str)],
    ) -> KnowledgeBase {
        let edge_vec: Vec<(String, String)> = edges
            .iter()
            .map(|(c, p)| (c.to_string(), p.to_string()))
            .collect();
        let extra: Vec<String> = assignments.iter().map(|(_, t)| t.to_string()).collect();
        let (taxonomy, _) =
            TypeTaxonomy::from_edges(&edge_vec, &extra, ingest::DEFAULT_ROOT_IRI).unwrap();

        let mut kb = KnowledgeBase {
            taxonomy,
            ..Default::default()
        };
        for (e, t) in assignments {
            let idx = kb.taxonomy.resolve(t).unwrap();
            kb.entities.entry(EntityId::from(*e)).or_default();
            kb.type_assignments
                .entry(EntityId::from(*e))
                .or_default()
                .insert(idx);
        }
        for (e, d) in descriptions {
            kb.entities.entry(EntityId::from(*e)).or_default().description = Some(d.to_string());
        }
        let mut link_set = BTreeSet::new();
        for (s, p, o) in links {
            kb.entities.entry(EntityId::from(*s)).or_default();
            kb.entities.entry(EntityId::from(*o)).or_default();
            link_set.insert(Link {
                subject: EntityId::from(*s),
                predicate: p.to_string(),
                object: EntityId::from(*o),
            });
        }
        for l in &link_set {
            if l.subject != l.object {
                kb.entities
                    .get_mut(&l.subject)
                    .unwrap()
                    .related
                    .insert(l.object.clone());
                kb.entities
                    .get_mut(&l.object)
                    .unwrap()
                    .related
                    .insert(l.subject.clone());
            }
        }
        kb.links = link_set.into_iter().collect();
        kb.content_hash = store::body_hash(&kb);
        kb
    }
}
