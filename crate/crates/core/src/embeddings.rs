//! Pretrained word vectors and description centroids.
//!
//! The table format is whitespace-separated text, one record per line:
//! token followed by `dim` decimal numbers. An optional first header line
//! `count dim` is tolerated.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::wire::{fnv1a64, ByteWriter};
use crate::{Error, Result};

pub const DEFAULT_DIM: usize = 300;

#[derive(Debug, Clone)]
pub struct WordVectorTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
    skipped: u64,
    hash: u64,
}

impl WordVectorTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.vectors.get(token).map(|v| v.as_slice())
    }

    /// Records dropped during loading (wrong arity or unparseable numbers).
    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// FNV-1a over the canonical (sorted) table encoding; part of the
    /// feature-cache key.
    pub fn content_hash(&self) -> u64 {
        self.hash
    }

    pub fn from_entries(dim: usize, entries: impl IntoIterator<Item = (String, Vec<f64>)>) -> Self {
        let mut vectors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (token, v) in entries {
            assert_eq!(v.len(), dim, "vector arity for {token:?}");
            vectors.entry(token).or_insert(v);
        }
        let mut table = WordVectorTable {
            dim,
            vectors,
            skipped: 0,
            hash: 0,
        };
        table.hash = table.compute_hash();
        table
    }

    fn compute_hash(&self) -> u64 {
        let mut w = ByteWriter::new();
        w.put_u32(self.dim as u32);
        for (token, v) in &self.vectors {
            w.put_str(token);
            for &x in v {
                w.put_f64(x);
            }
        }
        fnv1a64(w.as_slice())
    }
}

/// Load a word-vector table. Duplicate tokens keep the first occurrence;
/// malformed records are skipped and counted; a file with zero usable
/// records is fatal.
pub fn load_word_vectors(path: &Path, dim: usize) -> Result<WordVectorTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut vectors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut skipped = 0u64;
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<u64>().is_ok()) {
            continue; // "count dim" header
        }
        if fields.len() != dim + 1 {
            skipped += 1;
            continue;
        }
        let mut v = Vec::with_capacity(dim);
        let mut ok = true;
        for f in &fields[1..] {
            match f.parse::<f64>() {
                Ok(x) if x.is_finite() => v.push(x),
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            skipped += 1;
            continue;
        }
        vectors.entry(fields[0].to_owned()).or_insert(v);
    }

    if vectors.is_empty() {
        return Err(Error::Data(format!(
            "{}: no usable word-vector records",
            path.display()
        )));
    }
    let mut table = WordVectorTable {
        dim,
        vectors,
        skipped,
        hash: 0,
    };
    table.hash = table.compute_hash();
    Ok(table)
}

/// Lowercase tokens split on every non-alphanumeric character; empty
/// fragments are discarded.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Mean of in-vocabulary token vectors plus the fraction of tokens found.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroid {
    pub values: Vec<f64>,
    pub coverage: f64,
}

/// Component-wise mean over the vectors of in-vocabulary tokens (with
/// multiplicity). Out-of-vocabulary tokens are dropped from the denominator;
/// when nothing is found the centroid is the zero vector with coverage 0.
pub fn centroid<S: AsRef<str>>(table: &WordVectorTable, tokens: &[S]) -> Centroid {
    let mut values = vec![0.0; table.dim()];
    let mut found = 0usize;
    for token in tokens {
        if let Some(v) = table.get(token.as_ref()) {
            for (acc, x) in values.iter_mut().zip(v) {
                *acc += x;
            }
            found += 1;
        }
    }
    if found == 0 {
        return Centroid {
            values,
            coverage: 0.0,
        };
    }
    for x in &mut values {
        *x /= found as f64;
    }
    Centroid {
        values,
        coverage: found as f64 / tokens.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn table(entries: &[(&str, &[f64])]) -> WordVectorTable {
        WordVectorTable::from_entries(
            entries.first().map(|(_, v)| v.len()).unwrap_or(0),
            entries.iter().map(|(t, v)| (t.to_string(), v.to_vec())),
        )
    }

    fn load_from_str(content: &str, dim: usize) -> Result<WordVectorTable> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vectors.txt");
        let mut f = File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        load_word_vectors(&path, dim)
    }

    #[test]
    fn parses_plain_records() {
        let t = load_from_str("cat 0.1 0.2 0.3\ndog -1 0 1\n", 3).unwrap();
        assert_eq!(t.get("cat").unwrap(), &[0.1, 0.2, 0.3]);
        assert_eq!(t.get("dog").unwrap(), &[-1.0, 0.0, 1.0]);
        assert_eq!(t.skipped(), 0);
    }

    #[test]
    fn tolerates_header_line() {
        let t = load_from_str("2 3\ncat 0.1 0.2 0.3\ndog 1 2 3\n", 3).unwrap();
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn wrong_arity_is_skipped_and_counted() {
        let t = load_from_str("cat 0.1 0.2 0.3\nshort 0.1 0.2\n", 3).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.skipped(), 1);
    }

    #[test]
    fn duplicates_keep_first() {
        let t = load_from_str("cat 1 1\ncat 2 2\n", 2).unwrap();
        assert_eq!(t.get("cat").unwrap(), &[1.0, 1.0]);
    }

    #[test]
    fn empty_table_is_fatal() {
        assert!(load_from_str("totally malformed\n", 3).is_err());
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Alex Morgan is an American soccer player."),
            vec!["alex", "morgan", "is", "an", "american", "soccer", "player"]
        );
        assert_eq!(tokenize(""), Vec::<String>::new());
        assert_eq!(tokenize("C-3PO!"), vec!["c", "3po"]);
    }

    #[test]
    fn centroid_examples() {
        let t = table(&[("a", &[1.0, 2.0]), ("b", &[0.0, 1.0]), ("c", &[1.0, 0.0])]);
        let single = centroid(&t, &["a"]);
        assert_eq!(single.values, vec![1.0, 2.0]);
        assert_eq!(single.coverage, 1.0);

        let two = centroid(&t, &["c", "b"]);
        assert_eq!(two.values, vec![0.5, 0.5]);

        let oov = centroid(&t, &["zzz_oov"]);
        assert_eq!(oov.values, vec![0.0, 0.0]);
        assert_eq!(oov.coverage, 0.0);

        // OOV tokens are dropped from the denominator.
        let mixed = centroid(&t, &["a", "zzz_oov"]);
        assert_eq!(mixed.values, vec![1.0, 2.0]);
        assert_eq!(mixed.coverage, 0.5);
    }

    #[test]
    fn centroid_of_empty_tokens() {
        let t = table(&[("a", &[1.0])]);
        let c = centroid(&t, &[] as &[&str]);
        assert_eq!(c.values, vec![0.0]);
        assert_eq!(c.coverage, 0.0);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn small_table() -> WordVectorTable {
        WordVectorTable::from_entries(
            3,
            [
                ("w0".to_string(), vec![0.5, -1.0, 2.0]),
                ("w1".to_string(), vec![-0.25, 0.75, 0.0]),
                ("w2".to_string(), vec![1.5, 1.5, -3.0]),
                ("w3".to_string(), vec![0.0, 0.0, 0.125]),
            ],
        )
    }

    fn token_lists() -> impl Strategy<Value = Vec<String>> {
        proptest::collection::vec(
            prop_oneof![
                Just("w0".to_string()),
                Just("w1".to_string()),
                Just("w2".to_string()),
                Just("w3".to_string()),
                Just("oov".to_string()),
            ],
            0..12,
        )
    }

    proptest! {
        #[test]
        fn permutation_invariant(tokens in token_lists(), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let table = small_table();
            let base = centroid(&table, &tokens);
            let mut shuffled = tokens.clone();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            shuffled.shuffle(&mut rng);
            let other = centroid(&table, &shuffled);
            for (a, b) in base.values.iter().zip(&other.values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert_eq!(base.coverage, other.coverage);
        }

        #[test]
        fn bounded_by_input_range(tokens in token_lists()) {
            let table = small_table();
            let c = centroid(&table, &tokens);
            let found: Vec<&[f64]> = tokens.iter().filter_map(|t| table.get(t)).collect();
            if !found.is_empty() {
                for d in 0..3 {
                    let lo = found.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min);
                    let hi = found.iter().map(|v| v[d]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert!(c.values[d] >= lo - 1e-12 && c.values[d] <= hi + 1e-12);
                }
            }
        }

        #[test]
        fn duplication_invariant(tokens in token_lists()) {
            let table = small_table();
            let once = centroid(&table, &tokens);
            let doubled: Vec<String> = tokens.iter().chain(tokens.iter()).cloned().collect();
            let twice = centroid(&table, &doubled);
            for (a, b) in once.values.iter().zip(&twice.values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
