//! Serialized store format.
//!
//! Layout: magic `NTKB`, format version (u16 LE), FNV-1a content hash of the
//! body (u64 LE), then the body. The body encodes the taxonomy, entities
//! (with descriptions and neighbor indices), type assignments, the predicate
//! table, and the link list, all little-endian with u32 length prefixes.
//! Every collection is written in sorted order, so equal content serializes
//! to equal bytes.

use std::path::Path;

use super::{EntityId, EntityRecord, KnowledgeBase, Link, TypeId, TypeTaxonomy};
use crate::wire::{fnv1a64, ByteReader, ByteWriter};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"NTKB";
const VERSION: u16 = 1;

pub(crate) fn body_bytes(kb: &KnowledgeBase) -> Vec<u8> {
    let mut w = ByteWriter::new();

    // Taxonomy.
    w.put_u32(kb.taxonomy.len() as u32);
    for (i, t) in kb.taxonomy.iter() {
        w.put_str(&t.iri);
        match kb.taxonomy.parent_of(i) {
            Some(p) => w.put_u32(p as u32),
            None => w.put_u32(u32::MAX),
        }
        w.put_u32(kb.taxonomy.depth_of(i));
    }

    // Entities: IRIs first so neighbors can be written as indices.
    let entity_index: std::collections::BTreeMap<&EntityId, u32> = kb
        .entities
        .keys()
        .enumerate()
        .map(|(i, e)| (e, i as u32))
        .collect();
    w.put_u32(kb.entities.len() as u32);
    for (e, record) in &kb.entities {
        w.put_str(&e.0);
        match &record.description {
            Some(d) => {
                w.put_u8(1);
                w.put_str(d);
            }
            None => w.put_u8(0),
        }
        w.put_u32(record.related.len() as u32);
        for n in &record.related {
            w.put_u32(entity_index[n]);
        }
    }

    // Type assignments.
    w.put_u32(kb.type_assignments.len() as u32);
    for (e, types) in &kb.type_assignments {
        w.put_u32(entity_index[e]);
        w.put_u32(types.len() as u32);
        for &t in types {
            w.put_u32(t as u32);
        }
    }

    // Predicate table + links.
    let predicates: Vec<&str> = {
        let set: std::collections::BTreeSet<&str> =
            kb.links.iter().map(|l| l.predicate.as_str()).collect();
        set.into_iter().collect()
    };
    let pred_index: std::collections::BTreeMap<&str, u32> = predicates
        .iter()
        .enumerate()
        .map(|(i, p)| (*p, i as u32))
        .collect();
    w.put_u32(predicates.len() as u32);
    for p in &predicates {
        w.put_str(p);
    }
    w.put_u32(kb.links.len() as u32);
    for l in &kb.links {
        w.put_u32(entity_index[&l.subject]);
        w.put_u32(pred_index[l.predicate.as_str()]);
        w.put_u32(entity_index[&l.object]);
    }

    w.into_inner()
}

pub(crate) fn body_hash(kb: &KnowledgeBase) -> u64 {
    fnv1a64(&body_bytes(kb))
}

pub fn save_store(kb: &KnowledgeBase, path: &Path) -> Result<()> {
    let body = body_bytes(kb);
    let mut w = ByteWriter::new();
    w.put_bytes(MAGIC);
    w.put_u16(VERSION);
    w.put_u64(fnv1a64(&body));
    w.put_bytes(&body);
    std::fs::write(path, w.as_slice()).map_err(|e| Error::io(path, e))
}

pub fn load_store(path: &Path) -> Result<KnowledgeBase> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader::new(&bytes);

    let magic = [
        r.take_u8()?,
        r.take_u8()?,
        r.take_u8()?,
        r.take_u8()?,
    ];
    if &magic != MAGIC {
        return Err(Error::Data(format!(
            "{}: not a store file (bad magic)",
            path.display()
        )));
    }
    let version = r.take_u16()?;
    if version != VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported store version {version}",
            path.display()
        )));
    }
    let stored_hash = r.take_u64()?;
    let body = &bytes[bytes.len() - r.remaining()..];
    if fnv1a64(body) != stored_hash {
        return Err(Error::Data(format!(
            "{}: content hash mismatch (corrupt store)",
            path.display()
        )));
    }

    // Taxonomy.
    let n_types = r.take_u32()? as usize;
    let mut types = Vec::with_capacity(n_types);
    let mut parents = Vec::with_capacity(n_types);
    let mut depths = Vec::with_capacity(n_types);
    for _ in 0..n_types {
        types.push(TypeId::new(r.take_str()?));
        let p = r.take_u32()?;
        parents.push(if p == u32::MAX { None } else { Some(p as usize) });
        depths.push(r.take_u32()?);
    }
    let taxonomy = TypeTaxonomy::from_parts(types, parents, depths)?;

    // Entities.
    let n_entities = r.take_u32()? as usize;
    let mut iris: Vec<EntityId> = Vec::with_capacity(n_entities);
    let mut raw: Vec<(Option<String>, Vec<u32>)> = Vec::with_capacity(n_entities);
    for _ in 0..n_entities {
        iris.push(EntityId(r.take_str()?));
        let description = if r.take_u8()? == 1 {
            Some(r.take_str()?)
        } else {
            None
        };
        let n_related = r.take_u32()? as usize;
        let mut related = Vec::with_capacity(n_related);
        for _ in 0..n_related {
            related.push(r.take_u32()?);
        }
        raw.push((description, related));
    }
    let lookup = |i: u32| -> Result<EntityId> {
        iris.get(i as usize)
            .cloned()
            .ok_or_else(|| Error::Data(format!("entity index {i} out of range")))
    };

    let mut kb = KnowledgeBase::default();
    kb.taxonomy = taxonomy;
    for (iri, (description, related)) in iris.iter().zip(raw) {
        let mut record = EntityRecord {
            description,
            ..Default::default()
        };
        for n in related {
            record.related.insert(lookup(n)?);
        }
        kb.entities.insert(iri.clone(), record);
    }

    // Type assignments.
    let n_assigned = r.take_u32()? as usize;
    for _ in 0..n_assigned {
        let e = lookup(r.take_u32()?)?;
        let n = r.take_u32()? as usize;
        let mut set = std::collections::BTreeSet::new();
        for _ in 0..n {
            let t = r.take_u32()? as usize;
            if t >= kb.taxonomy.len() {
                return Err(Error::Data(format!("type index {t} out of range")));
            }
            set.insert(t);
        }
        kb.type_assignments.insert(e, set);
    }

    // Predicates + links.
    let n_preds = r.take_u32()? as usize;
    let mut predicates = Vec::with_capacity(n_preds);
    for _ in 0..n_preds {
        predicates.push(r.take_str()?);
    }
    let n_links = r.take_u32()? as usize;
    for _ in 0..n_links {
        let subject = lookup(r.take_u32()?)?;
        let p = r.take_u32()? as usize;
        let predicate = predicates
            .get(p)
            .cloned()
            .ok_or_else(|| Error::Data(format!("predicate index {p} out of range")))?;
        let object = lookup(r.take_u32()?)?;
        kb.links.push(Link {
            subject,
            predicate,
            object,
        });
    }
    r.expect_eof()?;

    kb.content_hash = stored_hash;
    Ok(kb)
}

impl TypeTaxonomy {
    /// Reassemble from serialized parts, re-deriving depths as a consistency
    /// check against the stored values.
    fn from_parts(
        types: Vec<TypeId>,
        parents: Vec<Option<usize>>,
        depths: Vec<u32>,
    ) -> Result<Self> {
        for w in types.windows(2) {
            if w[0].iri >= w[1].iri {
                return Err(Error::Data("store taxonomy not sorted by IRI".into()));
            }
        }
        for p in parents.iter().flatten() {
            if *p >= types.len() {
                return Err(Error::Data(format!("parent index {p} out of range")));
            }
        }
        let index = types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.iri.clone(), i))
            .collect();
        let mut taxonomy = TypeTaxonomy {
            types,
            index,
            parent: parents,
            depth: Vec::new(),
            h: 0,
        };
        taxonomy.compute_depths()?;
        if taxonomy.depth != depths {
            return Err(Error::Data("store depths disagree with hierarchy".into()));
        }
        Ok(taxonomy)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::build_kb;
    use super::*;

    #[test]
    fn roundtrip() {
        let kb = build_kb(
            &[("http://x/Athlete", "http://x/Person")],
            &[("http://x/e1", "http://x/Athlete")],
            &[("http://x/e1", "a runner"), ("http://x/e2", "a hill")],
            &[("http://x/e1", "http://x/near", "http://x/e2")],
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.ntkb");
        save_store(&kb, &path).unwrap();
        let loaded = load_store(&path).unwrap();
        assert_eq!(kb, loaded);
        assert_eq!(kb.content_hash(), loaded.content_hash());
    }

    #[test]
    fn corrupt_store_is_rejected() {
        let kb = build_kb(&[], &[("http://x/e", "http://x/T")], &[], &[]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kb.ntkb");
        save_store(&kb, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0xFF;
        std::fs::write(&path, &bytes).unwrap();
        assert!(load_store(&path).is_err());
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not-a-store");
        std::fs::write(&path, b"hello world, definitely not a store").unwrap();
        assert!(load_store(&path).is_err());
    }
}
