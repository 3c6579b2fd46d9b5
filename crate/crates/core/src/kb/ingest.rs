//! Dump-file ingestion: each input file plays one role.
//!
//! * `types` — every statement `(e, _, T)` with an IRI object asserts type
//!   `T` for entity `e` (assertions to the root type are dropped: the root
//!   is excluded from the prediction universe).
//! * `abstracts` — `(e, _, text)` sets the short description of `e`;
//!   the first statement per entity wins.
//! * `links` — `(s, p, o)` with an IRI object records a predicate-labeled
//!   link; literal objects are ignored. Both endpoints become related.
//! * `ontology` — `rdfs:subClassOf` statements build the taxonomy; other
//!   predicates are ignored.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::str::FromStr;

use super::ntriples::{parse_triple_line, Term};
use super::{store, EntityId, EntityRecord, KnowledgeBase, Link, TypeTaxonomy};
use crate::{Error, Result};

pub const DEFAULT_ROOT_IRI: &str = "http://www.w3.org/2002/07/owl#Thing";
const SUBCLASS_IRI: &str = "http://www.w3.org/2000/01/rdf-schema#subClassOf";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileRole {
    Types,
    Abstracts,
    Links,
    Ontology,
}

impl FromStr for FileRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "types" => Ok(FileRole::Types),
            "abstracts" => Ok(FileRole::Abstracts),
            "links" => Ok(FileRole::Links),
            "ontology" => Ok(FileRole::Ontology),
            other => Err(Error::Config(format!(
                "unknown file role {other:?} (expected types|abstracts|links|ontology)"
            ))),
        }
    }
}

impl fmt::Display for FileRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FileRole::Types => "types",
            FileRole::Abstracts => "abstracts",
            FileRole::Links => "links",
            FileRole::Ontology => "ontology",
        })
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    /// The excluded top type; subclass edges to it make a type parentless.
    pub root_iri: String,
    /// Expand each entity's assignments with all ancestor types.
    pub expand_closure: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            root_iri: DEFAULT_ROOT_IRI.to_owned(),
            expand_closure: false,
        }
    }
}

/// Per-file line accounting. `parsed + skipped + blank_or_comment == total`.
#[derive(Debug, Clone)]
pub struct FileReport {
    pub path: PathBuf,
    pub role: FileRole,
    pub total: u64,
    pub parsed: u64,
    pub skipped: u64,
    pub blank_or_comment: u64,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub files: Vec<FileReport>,
    pub warnings: Vec<String>,
    pub entities: usize,
    pub types: usize,
    pub assignments: usize,
    pub links: usize,
    /// Type assertions whose object was the root type (dropped).
    pub root_assignments: u64,
}

impl IngestReport {
    pub fn total_parsed(&self) -> u64 {
        self.files.iter().map(|f| f.parsed).sum()
    }

    pub fn total_skipped(&self) -> u64 {
        self.files.iter().map(|f| f.skipped).sum()
    }
}

/// Parse the given dump files into an immutable [`KnowledgeBase`].
///
/// Unreadable files are fatal; individual malformed lines are counted and
/// skipped. Re-ingesting the same files yields an identical store.
pub fn ingest_dump(
    inputs: &[(PathBuf, FileRole)],
    opts: &IngestOptions,
) -> Result<(KnowledgeBase, IngestReport)> {
    let mut report = IngestReport::default();

    let mut subclass_edges: Vec<(String, String)> = Vec::new();
    let mut raw_assignments: Vec<(String, String)> = Vec::new();
    let mut descriptions: BTreeMap<String, String> = BTreeMap::new();
    let mut link_set: BTreeSet<Link> = BTreeSet::new();
    let mut entity_iris: BTreeSet<String> = BTreeSet::new();

    for (path, role) in inputs {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let reader = BufReader::new(file);
        let mut fr = FileReport {
            path: path.clone(),
            role: *role,
            total: 0,
            parsed: 0,
            skipped: 0,
            blank_or_comment: 0,
        };

        for (line_no, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            fr.total += 1;
            let triple = match parse_triple_line(&line) {
                Ok(Some(t)) => t,
                Ok(None) => {
                    fr.blank_or_comment += 1;
                    continue;
                }
                Err(e) => {
                    fr.skipped += 1;
                    if fr.skipped <= 5 {
                        report
                            .warnings
                            .push(format!("{}:{}: {e}", path.display(), line_no + 1));
                    }
                    continue;
                }
            };
            fr.parsed += 1;

            match role {
                FileRole::Types => {
                    if let Term::Iri(type_iri) = triple.object {
                        if type_iri == opts.root_iri {
                            report.root_assignments += 1;
                        } else {
                            entity_iris.insert(triple.subject.clone());
                            raw_assignments.push((triple.subject, type_iri));
                        }
                    }
                }
                FileRole::Abstracts => {
                    entity_iris.insert(triple.subject.clone());
                    descriptions
                        .entry(triple.subject)
                        .or_insert_with(|| triple.object.as_str().to_owned());
                }
                FileRole::Links => {
                    if let Term::Iri(object) = triple.object {
                        entity_iris.insert(triple.subject.clone());
                        entity_iris.insert(object.clone());
                        link_set.insert(Link {
                            subject: EntityId(triple.subject),
                            predicate: triple.predicate,
                            object: EntityId(object),
                        });
                    }
                }
                FileRole::Ontology => {
                    if triple.predicate == SUBCLASS_IRI {
                        if let Term::Iri(parent) = triple.object {
                            subclass_edges.push((triple.subject, parent));
                        }
                    }
                }
            }
        }
        report.files.push(fr);
    }

    // Types referenced only by assignments become parentless depth-1 types.
    let extra_types: Vec<String> = raw_assignments.iter().map(|(_, t)| t.clone()).collect();
    let (taxonomy, warnings) =
        TypeTaxonomy::from_edges(&subclass_edges, &extra_types, &opts.root_iri)?;
    report.warnings.extend(warnings);

    let mut kb = KnowledgeBase {
        taxonomy,
        ..Default::default()
    };

    for iri in entity_iris {
        kb.entities.insert(EntityId(iri), EntityRecord::default());
    }
    for (iri, desc) in descriptions {
        kb.entities.get_mut(&EntityId(iri.clone())).unwrap().description = Some(desc);
    }
    for (entity, type_iri) in raw_assignments {
        let idx = kb.taxonomy.require(&type_iri)?;
        let set = kb.type_assignments.entry(EntityId(entity)).or_default();
        if opts.expand_closure {
            set.extend(kb.taxonomy.ancestors_inclusive(idx));
        } else {
            set.insert(idx);
        }
    }
    for link in &link_set {
        if link.subject != link.object {
            kb.entities
                .get_mut(&link.subject)
                .unwrap()
                .related
                .insert(link.object.clone());
            kb.entities
                .get_mut(&link.object)
                .unwrap()
                .related
                .insert(link.subject.clone());
        }
    }
    kb.links = link_set.into_iter().collect();
    kb.content_hash = store::body_hash(&kb);

    report.entities = kb.entities.len();
    report.types = kb.taxonomy.len();
    report.assignments = kb.type_assignments.values().map(|s| s.len()).sum();
    report.links = kb.links.len();
    Ok((kb, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;
    use std::path::Path;

    fn write_file(dir: &Path, name: &str, content: &str) -> PathBuf {
        let path = dir.join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    #[test]
    fn counts_assignments() {
        let dir = tempfile::tempdir().unwrap();
        let types = write_file(
            dir.path(),
            "types.nt",
            "<http://x/e1> <http://x/type> <http://x/Person> .\n\
             <http://x/e2> <http://x/type> <http://x/Place> .\n\
             <http://x/e3> <http://x/type> <http://x/Person> .\n",
        );
        let (kb, report) = ingest_dump(&[(types, FileRole::Types)], &Default::default()).unwrap();
        assert_eq!(kb.type_assignments().len(), 3);
        assert_eq!(report.assignments, 3);
        assert_eq!(report.files[0].parsed, 3);
        // Assignment-only types land at depth 1.
        assert_eq!(kb.taxonomy().max_depth(), 1);
    }

    #[test]
    fn empty_file_set() {
        let (kb, report) = ingest_dump(&[], &Default::default()).unwrap();
        assert!(kb.entities().is_empty());
        assert!(kb.taxonomy().is_empty());
        assert_eq!(kb.taxonomy().max_depth(), 0);
        assert!(report.files.is_empty());
    }

    #[test]
    fn links_are_symmetric_and_match_brute_force() {
        let dir = tempfile::tempdir().unwrap();
        let links = write_file(
            dir.path(),
            "links.nt",
            "<http://x/E1> <http://x/p> <http://x/E2> .\n\
             <http://x/E3> <http://x/q> <http://x/E1> .\n\
             <http://x/E2> <http://x/p> <http://x/E3> .\n\
             <http://x/E1> <http://x/p> <http://x/E2> .\n",
        );
        let (kb, _) = ingest_dump(&[(links.clone(), FileRole::Links)], &Default::default()).unwrap();

        // Brute-force adjacency oracle over the same file.
        let mut adjacency: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for line in std::fs::read_to_string(&links).unwrap().lines() {
            if let Ok(Some(t)) = parse_triple_line(line) {
                if let Term::Iri(o) = &t.object {
                    if *o != t.subject {
                        adjacency.entry(t.subject.clone()).or_default().insert(o.clone());
                        adjacency.entry(o.clone()).or_default().insert(t.subject.clone());
                    }
                }
            }
        }
        for (iri, expected) in &adjacency {
            let got: BTreeSet<String> = kb
                .related_entities(&EntityId(iri.clone()))
                .unwrap()
                .iter()
                .map(|e| e.0.clone())
                .collect();
            assert_eq!(&got, expected, "neighbors of {iri}");
        }
        // E2 ∈ related(E1) ⇔ E1 ∈ related(E2).
        for (e, record) in kb.entities() {
            for n in &record.related {
                assert!(kb.entities()[n].related.contains(e));
            }
        }
        // Duplicate triple deduplicated.
        assert_eq!(kb.links().len(), 3);
    }

    #[test]
    fn line_accounting_balances() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_file(
            dir.path(),
            "mixed.nt",
            "# header comment\n\
             <http://x/e1> <http://x/type> <http://x/T> .\n\
             \n\
             this line is garbage\n\
             <http://x/e2> <http://x/type> <http://x/T> .\n",
        );
        let (_, report) = ingest_dump(&[(path, FileRole::Types)], &Default::default()).unwrap();
        let f = &report.files[0];
        assert_eq!(f.total, 5);
        assert_eq!(f.parsed, 2);
        assert_eq!(f.skipped, 1);
        assert_eq!(f.blank_or_comment, 2);
        assert_eq!(f.parsed + f.skipped + f.blank_or_comment, f.total);
    }

    #[test]
    fn root_assignments_are_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let types = write_file(
            dir.path(),
            "types.nt",
            "<http://x/e1> <http://x/type> <http://www.w3.org/2002/07/owl#Thing> .\n\
             <http://x/e1> <http://x/type> <http://x/Person> .\n",
        );
        let (kb, report) = ingest_dump(&[(types, FileRole::Types)], &Default::default()).unwrap();
        assert_eq!(report.root_assignments, 1);
        assert_eq!(report.assignments, 1);
        assert!(kb.taxonomy().resolve(DEFAULT_ROOT_IRI).is_none());
    }

    #[test]
    fn ontology_and_closure() {
        let dir = tempfile::tempdir().unwrap();
        let onto = write_file(
            dir.path(),
            "ontology.nt",
            "<http://x/Athlete> <http://www.w3.org/2000/01/rdf-schema#subClassOf> <http://x/Person> .\n\
             <http://x/Person> <http://www.w3.org/2000/01/rdf-schema#subClassOf> <http://www.w3.org/2002/07/owl#Thing> .\n\
             <http://x/Person> <http://www.w3.org/2000/01/rdf-schema#label> \"person\"@en .\n",
        );
        let types = write_file(
            dir.path(),
            "types.nt",
            "<http://x/e1> <http://x/type> <http://x/Athlete> .\n",
        );

        let inputs = vec![
            (onto, FileRole::Ontology),
            (types, FileRole::Types),
        ];
        let (kb, _) = ingest_dump(&inputs, &Default::default()).unwrap();
        assert_eq!(kb.taxonomy().max_depth(), 2);
        assert_eq!(kb.assigned_types(&"http://x/e1".into()).unwrap().len(), 1);

        let closed = IngestOptions {
            expand_closure: true,
            ..Default::default()
        };
        let (kb2, _) = ingest_dump(&inputs, &closed).unwrap();
        assert_eq!(kb2.assigned_types(&"http://x/e1".into()).unwrap().len(), 2);
    }

    #[test]
    fn unreadable_file_is_fatal() {
        let missing = PathBuf::from("/nonexistent/file.nt");
        assert!(ingest_dump(&[(missing, FileRole::Types)], &Default::default()).is_err());
    }

    #[test]
    fn reingest_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let types = write_file(
            dir.path(),
            "types.nt",
            "<http://x/e1> <http://x/type> <http://x/B> .\n\
             <http://x/e2> <http://x/type> <http://x/A> .\n",
        );
        let links = write_file(
            dir.path(),
            "links.nt",
            "<http://x/e2> <http://x/p> <http://x/e1> .\n",
        );
        let inputs = vec![(types, FileRole::Types), (links, FileRole::Links)];
        let (kb1, _) = ingest_dump(&inputs, &Default::default()).unwrap();
        let (kb2, _) = ingest_dump(&inputs, &Default::default()).unwrap();
        assert_eq!(kb1.content_hash(), kb2.content_hash());
        assert_eq!(store::body_bytes(&kb1), store::body_bytes(&kb2));
    }
}
