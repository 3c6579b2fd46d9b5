//! The three per-entity input components and their on-disk cache.
//!
//! * A — centroid of the word vectors of the entity's own description.
//! * B — mean of the description centroids of related entities.
//! * C — counts of the asserted types carried by related entities, over
//!   the taxonomy's type order.
//!
//! B and C fall back to the zero vector when there is nothing to aggregate;
//! A requires a description. When building C only the neighbors' type
//! assignments are consulted, never the entity's own.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::embeddings::{centroid, tokenize, WordVectorTable};
use crate::kb::{EntityId, KnowledgeBase};
use crate::wire::{ByteReader, ByteWriter};
use crate::{Error, Result};

/// Which input components a model consumes. Encoded as a byte with
/// bit0 = A, bit1 = B, bit2 = C.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InputMask {
    pub a: bool,
    pub b: bool,
    pub c: bool,
}

impl InputMask {
    pub const A: InputMask = InputMask { a: true, b: false, c: false };

    pub fn new(a: bool, b: bool, c: bool) -> Self {
        InputMask { a, b, c }
    }

    pub fn any(&self) -> bool {
        self.a || self.b || self.c
    }

    pub fn active_count(&self) -> usize {
        usize::from(self.a) + usize::from(self.b) + usize::from(self.c)
    }

    pub fn to_byte(self) -> u8 {
        u8::from(self.a) | (u8::from(self.b) << 1) | (u8::from(self.c) << 2)
    }

    pub fn from_byte(b: u8) -> Result<Self> {
        if b == 0 || b > 7 {
            return Err(Error::Config(format!("invalid input mask byte {b:#x}")));
        }
        Ok(InputMask::new(b & 1 != 0, b & 2 != 0, b & 4 != 0))
    }

    /// All seven non-empty masks, in mask-byte order.
    pub fn all() -> impl Iterator<Item = InputMask> {
        (1u8..=7).map(|b| InputMask::from_byte(b).unwrap())
    }

    /// Dimensions of the active inputs in A, B, C order.
    pub fn input_dims(&self, word_dim: usize, n_types: usize) -> Vec<usize> {
        let mut dims = Vec::new();
        if self.a {
            dims.push(word_dim);
        }
        if self.b {
            dims.push(word_dim);
        }
        if self.c {
            dims.push(n_types);
        }
        dims
    }
}

impl fmt::Display for InputMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if self.a {
            parts.push("A");
        }
        if self.b {
            parts.push("B");
        }
        if self.c {
            parts.push("C");
        }
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for InputMask {
    type Err = Error;

    /// Accepts forms like `a`, `A+B`, `ab`, `a+b+c`, `ABC`.
    fn from_str(s: &str) -> Result<Self> {
        let mut mask = InputMask::new(false, false, false);
        for c in s.chars() {
            match c.to_ascii_lowercase() {
                'a' => mask.a = true,
                'b' => mask.b = true,
                'c' => mask.c = true,
                '+' | ' ' => {}
                other => {
                    return Err(Error::Config(format!(
                        "invalid input mask {s:?}: unexpected {other:?}"
                    )))
                }
            }
        }
        if !mask.any() {
            return Err(Error::Config(format!("input mask {s:?} selects nothing")));
        }
        Ok(mask)
    }
}

/// Per-entity feature vectors for the active inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBundle {
    pub entity: EntityId,
    pub a: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub c: Option<Vec<f64>>,
    pub mask: InputMask,
}

impl FeatureBundle {
    /// Active vectors in A, B, C order.
    pub fn active_vectors(&self) -> Vec<&[f64]> {
        [&self.a, &self.b, &self.c]
            .into_iter()
            .flatten()
            .map(|v| v.as_slice())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct InputCOptions {
    /// Count each neighbor type together with all its ancestors.
    pub closure: bool,
    /// L1-normalize the count vector (off by default; raw counts are the
    /// faithful form).
    pub l1_normalize: bool,
}

/// Input A: centroid of the tokenized description of `e`.
pub fn input_a(kb: &KnowledgeBase, table: &WordVectorTable, e: &EntityId) -> Result<Vec<f64>> {
    let record = kb.entity(e)?;
    let Some(description) = &record.description else {
        return Err(Error::MissingDescription(e.as_str().to_owned()));
    };
    Ok(centroid(table, &tokenize(description)).values)
}

/// Input B: mean of the description centroids of related entities, skipping
/// neighbors with no description. Zero vector when nothing contributes.
pub fn input_b(kb: &KnowledgeBase, table: &WordVectorTable, e: &EntityId) -> Vec<f64> {
    let mut sum = vec![0.0; table.dim()];
    let mut contributors = 0usize;
    if let Ok(related) = kb.related_entities(e) {
        for neighbor in related {
            let Some(description) = kb.description(neighbor) else {
                continue;
            };
            let c = centroid(table, &tokenize(description));
            for (acc, x) in sum.iter_mut().zip(&c.values) {
                *acc += x;
            }
            contributors += 1;
        }
    }
    if contributors > 0 {
        for x in &mut sum {
            *x /= contributors as f64;
        }
    }
    sum
}

/// Input C: per-type counts of the asserted types of related entities, in
/// taxonomy order. An entity with k types contributes to k components.
pub fn input_c(kb: &KnowledgeBase, e: &EntityId) -> Vec<f64> {
    input_c_with(kb, e, InputCOptions::default())
}

pub fn input_c_with(kb: &KnowledgeBase, e: &EntityId, opts: InputCOptions) -> Vec<f64> {
    let mut counts = vec![0.0; kb.taxonomy().len()];
    if let Ok(related) = kb.related_entities(e) {
        for neighbor in related {
            let Some(types) = kb.assigned_types(neighbor) else {
                continue;
            };
            if opts.closure {
                let mut expanded = BTreeSet::new();
                for &t in types {
                    expanded.extend(kb.taxonomy().ancestors_inclusive(t));
                }
                for t in expanded {
                    counts[t] += 1.0;
                }
            } else {
                for &t in types {
                    counts[t] += 1.0;
                }
            }
        }
    }
    if opts.l1_normalize {
        let total: f64 = counts.iter().sum();
        if total > 0.0 {
            for x in &mut counts {
                *x /= total;
            }
        }
    }
    counts
}

/// Build exactly the components requested by `mask`; component errors
/// propagate (a missing description only matters when A is requested).
pub fn assemble_bundle(
    kb: &KnowledgeBase,
    table: &WordVectorTable,
    e: &EntityId,
    mask: InputMask,
    c_opts: InputCOptions,
) -> Result<FeatureBundle> {
    if !mask.any() {
        return Err(Error::Config("empty input mask".into()));
    }
    Ok(FeatureBundle {
        entity: e.clone(),
        a: if mask.a {
            Some(input_a(kb, table, e)?)
        } else {
            None
        },
        b: if mask.b {
            Some(input_b(kb, table, e))
        } else {
            None
        },
        c: if mask.c {
            Some(input_c_with(kb, e, c_opts))
        } else {
            None
        },
        mask,
    })
}

// ---------------------------------------------------------------------------
// Feature cache: magic `NTFC`, version u16, KB hash u64, table hash u64,
// mask byte, word dim u32, type count u32, record count u32, then records:
// length-prefixed entity IRI, mask byte, present vectors in A, B, C order
// as little-endian f32.
// ---------------------------------------------------------------------------

const CACHE_MAGIC: &[u8; 4] = b"NTFC";
const CACHE_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheKey {
    pub kb_hash: u64,
    pub table_hash: u64,
    pub mask: InputMask,
    pub word_dim: u32,
    pub n_types: u32,
}

pub fn write_feature_cache(path: &Path, key: &CacheKey, bundles: &[FeatureBundle]) -> Result<()> {
    let mut w = ByteWriter::new();
    w.put_bytes(CACHE_MAGIC);
    w.put_u16(CACHE_VERSION);
    w.put_u64(key.kb_hash);
    w.put_u64(key.table_hash);
    w.put_u8(key.mask.to_byte());
    w.put_u32(key.word_dim);
    w.put_u32(key.n_types);
    w.put_u32(bundles.len() as u32);
    for bundle in bundles {
        if bundle.mask != key.mask {
            return Err(Error::Config(format!(
                "bundle mask {} does not match cache mask {}",
                bundle.mask, key.mask
            )));
        }
        w.put_str(bundle.entity.as_str());
        w.put_u8(bundle.mask.to_byte());
        for vector in bundle.active_vectors() {
            for &x in vector {
                w.put_f32(x as f32);
            }
        }
    }
    std::fs::write(path, w.as_slice()).map_err(|e| Error::io(path, e))
}

pub fn read_feature_cache(path: &Path) -> Result<(CacheKey, Vec<FeatureBundle>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader::new(&bytes);
    let magic = [r.take_u8()?, r.take_u8()?, r.take_u8()?, r.take_u8()?];
    if &magic != CACHE_MAGIC {
        return Err(Error::Data(format!(
            "{}: not a feature cache (bad magic)",
            path.display()
        )));
    }
    let version = r.take_u16()?;
    if version != CACHE_VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported cache version {version}",
            path.display()
        )));
    }
    let key = CacheKey {
        kb_hash: r.take_u64()?,
        table_hash: r.take_u64()?,
        mask: InputMask::from_byte(r.take_u8()?)?,
        word_dim: r.take_u32()?,
        n_types: r.take_u32()?,
    };
    let count = r.take_u32()? as usize;
    let mut bundles = Vec::with_capacity(count);
    for _ in 0..count {
        let entity = EntityId(r.take_str()?);
        let mask = InputMask::from_byte(r.take_u8()?)?;
        if mask != key.mask {
            return Err(Error::Data(format!(
                "{}: record mask {mask} does not match header mask {}",
                path.display(),
                key.mask
            )));
        }
        let mut take_vec = |len: u32| -> Result<Vec<f64>> {
            let mut v = Vec::with_capacity(len as usize);
            for _ in 0..len {
                v.push(f64::from(r.take_f32()?));
            }
            Ok(v)
        };
        let a = if mask.a { Some(take_vec(key.word_dim)?) } else { None };
        let b = if mask.b { Some(take_vec(key.word_dim)?) } else { None };
        let c = if mask.c { Some(take_vec(key.n_types)?) } else { None };
        bundles.push(FeatureBundle {
            entity,
            a,
            b,
            c,
            mask,
        });
    }
    r.expect_eof()?;
    Ok((key, bundles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kb::testutil::build_kb;

    fn two_d_table() -> WordVectorTable {
        WordVectorTable::from_entries(
            2,
            [
                ("alpha".to_string(), vec![2.0, 0.0]),
                ("beta".to_string(), vec![0.0, 2.0]),
                ("gamma".to_string(), vec![1.0, 1.0]),
                ("delta".to_string(), vec![4.0, 0.0]),
            ],
        )
    }

    #[test]
    fn mask_parsing_and_bytes() {
        assert_eq!("a".parse::<InputMask>().unwrap(), InputMask::new(true, false, false));
        assert_eq!("A+B".parse::<InputMask>().unwrap(), InputMask::new(true, true, false));
        assert_eq!("abc".parse::<InputMask>().unwrap(), InputMask::new(true, true, true));
        assert!("".parse::<InputMask>().is_err());
        assert!("x".parse::<InputMask>().is_err());
        for mask in InputMask::all() {
            assert_eq!(InputMask::from_byte(mask.to_byte()).unwrap(), mask);
        }
        assert_eq!(InputMask::new(true, true, true).to_string(), "A+B+C");
    }

    #[test]
    fn input_a_mean_and_oov() {
        let kb = build_kb(
            &[],
            &[],
            &[
                ("http://x/e1", "alpha beta"),
                ("http://x/e2", "zzz qqq"),
            ],
            &[],
        );
        let table = two_d_table();
        assert_eq!(input_a(&kb, &table, &"http://x/e1".into()).unwrap(), vec![1.0, 1.0]);
        // All-OOV falls back to the zero vector.
        assert_eq!(input_a(&kb, &table, &"http://x/e2".into()).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn input_a_missing_description_names_entity() {
        let kb = build_kb(&[], &[], &[], &[("http://x/e1", "http://x/p", "http://x/e2")]);
        let err = input_a(&kb, &two_d_table(), &"http://x/e1".into()).unwrap_err();
        assert!(err.to_string().contains("http://x/e1"), "{err}");
    }

    #[test]
    fn input_b_cases() {
        let kb = build_kb(
            &[],
            &[],
            &[
                ("http://x/e2", "alpha"),  // centroid (2,0)
                ("http://x/e3", "beta"),   // centroid (0,2)
            ],
            &[
                ("http://x/e1", "http://x/p", "http://x/e2"),
                ("http://x/e1", "http://x/p", "http://x/e3"),
                ("http://x/e1", "http://x/p", "http://x/e4"), // no description, skipped
                ("http://x/e5", "http://x/p", "http://x/e6"),
            ],
        );
        let table = two_d_table();
        // Two-pass brute-force average oracle.
        let related = kb.related_entities(&"http://x/e1".into()).unwrap();
        let mut expected = vec![0.0, 0.0];
        let mut n = 0;
        for neighbor in related {
            if let Some(d) = kb.description(neighbor) {
                let c = centroid(&table, &tokenize(d));
                expected[0] += c.values[0];
                expected[1] += c.values[1];
                n += 1;
            }
        }
        expected.iter_mut().for_each(|x| *x /= n as f64);
        assert_eq!(input_b(&kb, &table, &"http://x/e1".into()), expected);
        assert_eq!(expected, vec![1.0, 1.0]);

        // Singleton mean.
        let kb2 = build_kb(
            &[],
            &[],
            &[("http://x/e2", "gamma")],
            &[("http://x/e1", "http://x/p", "http://x/e2")],
        );
        assert_eq!(input_b(&kb2, &table, &"http://x/e1".into()), vec![1.0, 1.0]);

        // Empty neighborhood and all-undescribed neighborhood give zero.
        assert_eq!(input_b(&kb, &table, &"http://x/e4".into()).len(), 2);
        let e6_b = input_b(&kb, &table, &"http://x/e6".into());
        assert_eq!(e6_b, vec![0.0, 0.0]);
    }

    #[test]
    fn input_c_counts_match_tally_oracle() {
        let kb = build_kb(
            &[("http://x/Athlete", "http://x/Person")],
            &[
                ("http://x/n1", "http://x/Athlete"),
                ("http://x/n2", "http://x/Person"),
                ("http://x/n3", "http://x/Person"),
                ("http://x/n3", "http://x/Athlete"),
                ("http://x/n4", "http://x/Place"),
                ("http://x/n5", "http://x/Place"),
            ],
            &[],
            &[
                ("http://x/e", "http://x/p", "http://x/n1"),
                ("http://x/e", "http://x/p", "http://x/n2"),
                ("http://x/e", "http://x/p", "http://x/n3"),
                ("http://x/n4", "http://x/p", "http://x/e"),
                ("http://x/e", "http://x/p", "http://x/n5"),
            ],
        );
        let got = input_c(&kb, &"http://x/e".into());

        // Independent counting oracle over type_assignments.
        let mut expected = vec![0.0; kb.taxonomy().len()];
        for neighbor in kb.related_entities(&"http://x/e".into()).unwrap() {
            if let Some(types) = kb.assigned_types(neighbor) {
                for &t in types {
                    expected[t] += 1.0;
                }
            }
        }
        assert_eq!(got, expected);

        let athlete = kb.taxonomy().resolve("http://x/Athlete").unwrap();
        let person = kb.taxonomy().resolve("http://x/Person").unwrap();
        let place = kb.taxonomy().resolve("http://x/Place").unwrap();
        assert_eq!(got[athlete], 2.0);
        assert_eq!(got[person], 2.0);
        assert_eq!(got[place], 2.0);
        // Sum equals the total number of neighbor type assertions.
        let total: f64 = got.iter().sum();
        assert_eq!(total, 6.0);
    }

    #[test]
    fn input_c_single_and_empty() {
        let kb = build_kb(
            &[],
            &[("http://x/n", "http://x/Athlete")],
            &[],
            &[("http://x/e", "http://x/p", "http://x/n")],
        );
        let got = input_c(&kb, &"http://x/e".into());
        let athlete = kb.taxonomy().resolve("http://x/Athlete").unwrap();
        let mut expected = vec![0.0; kb.taxonomy().len()];
        expected[athlete] = 1.0;
        assert_eq!(got, expected);
        // No neighbors at all.
        assert_eq!(input_c(&kb, &"http://x/n".into())[athlete], 0.0);
    }

    #[test]
    fn input_c_ignores_own_assignments() {
        // Leakage guard: the entity's own gold type never enters its C vector.
        let kb_with = build_kb(
            &[],
            &[
                ("http://x/e", "http://x/Secret"),
                ("http://x/n", "http://x/Athlete"),
            ],
            &[],
            &[("http://x/e", "http://x/p", "http://x/n")],
        );
        let secret = kb_with.taxonomy().resolve("http://x/Secret").unwrap();
        assert_eq!(input_c(&kb_with, &"http://x/e".into())[secret], 0.0);
    }

    #[test]
    fn input_c_closure_and_normalize() {
        let kb = build_kb(
            &[("http://x/Athlete", "http://x/Person")],
            &[("http://x/n", "http://x/Athlete")],
            &[],
            &[("http://x/e", "http://x/p", "http://x/n")],
        );
        let closed = input_c_with(
            &kb,
            &"http://x/e".into(),
            InputCOptions { closure: true, l1_normalize: false },
        );
        let athlete = kb.taxonomy().resolve("http://x/Athlete").unwrap();
        let person = kb.taxonomy().resolve("http://x/Person").unwrap();
        assert_eq!(closed[athlete], 1.0);
        assert_eq!(closed[person], 1.0);

        let normalized = input_c_with(
            &kb,
            &"http://x/e".into(),
            InputCOptions { closure: true, l1_normalize: true },
        );
        let total: f64 = normalized.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn assemble_respects_mask() {
        let kb = build_kb(
            &[],
            &[("http://x/n", "http://x/T")],
            &[("http://x/e", "alpha"), ("http://x/n", "beta")],
            &[("http://x/e", "http://x/p", "http://x/n")],
        );
        let table = two_d_table();
        let e: EntityId = "http://x/e".into();

        let only_a = assemble_bundle(&kb, &table, &e, "a".parse().unwrap(), Default::default()).unwrap();
        assert!(only_a.a.is_some() && only_a.b.is_none() && only_a.c.is_none());

        let all = assemble_bundle(&kb, &table, &e, "abc".parse().unwrap(), Default::default()).unwrap();
        assert_eq!(all.a.as_ref().unwrap().len(), 2);
        assert_eq!(all.b.as_ref().unwrap().len(), 2);
        assert_eq!(all.c.as_ref().unwrap().len(), kb.taxonomy().len());
        for v in all.active_vectors() {
            assert!(v.iter().all(|x| x.is_finite()));
        }

        // B+C succeeds on an entity without a description.
        let n: EntityId = "http://x/undescribed".into();
        let kb2 = build_kb(
            &[],
            &[],
            &[],
            &[("http://x/undescribed", "http://x/p", "http://x/other")],
        );
        let bc = assemble_bundle(&kb2, &table, &n, "b+c".parse().unwrap(), Default::default());
        assert!(bc.is_ok());
        // ...but A on the same entity fails.
        assert!(assemble_bundle(&kb2, &table, &n, "a".parse().unwrap(), Default::default()).is_err());
    }

    #[test]
    fn cache_roundtrip() {
        let kb = build_kb(
            &[],
            &[("http://x/n", "http://x/T")],
            &[("http://x/e", "alpha beta"), ("http://x/n", "gamma")],
            &[("http://x/e", "http://x/p", "http://x/n")],
        );
        let table = two_d_table();
        let mask: InputMask = "abc".parse().unwrap();
        let bundles: Vec<FeatureBundle> = kb
            .entities()
            .keys()
            .filter(|e| kb.description(e).is_some())
            .map(|e| assemble_bundle(&kb, &table, e, mask, Default::default()).unwrap())
            .collect();
        let key = CacheKey {
            kb_hash: kb.content_hash(),
            table_hash: table.content_hash(),
            mask,
            word_dim: table.dim() as u32,
            n_types: kb.taxonomy().len() as u32,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.ntfc");
        write_feature_cache(&path, &key, &bundles).unwrap();
        let (read_key, read_bundles) = read_feature_cache(&path).unwrap();
        assert_eq!(read_key, key);
        assert_eq!(read_bundles.len(), bundles.len());
        for (orig, read) in bundles.iter().zip(&read_bundles) {
            assert_eq!(orig.entity, read.entity);
            // Values went through f32.
            for (o, r) in orig.active_vectors().iter().zip(read.active_vectors()) {
                for (x, y) in o.iter().zip(r) {
                    assert!((x - y).abs() < 1e-6);
                }
            }
        }
    }
}
