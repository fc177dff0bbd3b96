//! Embedding stores and dot-product similarity.
//!
//! On disk (little-endian):
//!
//! ```text
//! "RIRE" | version: u16 = 1 | dim: u32 | count: u64 |
//! count x ( id_len: u16 | id: UTF-8 bytes | dim x f32 )
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::scoring::{group_by_item, ItemReviewScores};

pub const MAGIC: &[u8; 4] = b"RIRE";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StoreKind {
    Review,
    Query,
    Item,
}

/// Fixed-dimension f32 vectors keyed by id, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    kind: StoreKind,
    dim: usize,
    ids: Vec<String>,
    index: HashMap<String, usize>,
    data: Vec<f32>,
    fingerprint: u64,
}

pub(crate) fn fnv1a(bytes: impl IntoIterator<Item = u8>, mut hash: u64) -> u64 {
    for b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl EmbeddingStore {
    pub fn new(kind: StoreKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Format("dimension 0".into()));
        }
        if dim > u32::MAX as usize {
            return Err(Error::Format("dimension exceeds u32".into()));
        }
        Ok(EmbeddingStore {
            kind,
            dim,
            ids: Vec::new(),
            index: HashMap::new(),
            data: Vec::new(),
            fingerprint: 0,
        })
    }

    pub fn from_rows<I, S>(kind: StoreKind, dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut store = Self::new(kind, dim)?;
        for (id, v) in rows {
            store.push(id.into(), &v)?;
        }
        store.seal();
        Ok(store)
    }

    fn push(&mut self, id: String, v: &[f32]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        if id.len() > u16::MAX as usize {
            return Err(Error::Format(format!("id longer than {} bytes", u16::MAX)));
        }
        if self.index.insert(id.clone(), self.ids.len()).is_some() {
            return Err(Error::Format(format!("duplicate id {id:?}")));
        }
        self.ids.push(id);
        self.data.extend_from_slice(v);
        Ok(())
    }

    fn seal(&mut self) {
        let mut h = fnv1a(self.dim.to_le_bytes(), 0xcbf2_9ce4_8422_2325);
        for id in &self.ids {
            h = fnv1a(id.bytes().chain([0xff]), h);
        }
        self.fingerprint = fnv1a(self.data.iter().flat_map(|x| x.to_le_bytes()), h);
    }

    pub fn kind(&self) -> StoreKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Content hash over ids and vector bits; used to key derived caches.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index
            .get(id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn require(&self, id: &str) -> Result<&[f32]> {
        self.get(id)
            .ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .zip(self.data.chunks_exact(self.dim))
            .map(|(id, v)| (id.as_str(), v))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.ids.len() as u64).to_le_bytes())?;
        for (id, v) in self.iter() {
            w.write_all(&(id.len() as u16).to_le_bytes())?;
            w.write_all(id.as_bytes())?;
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn from_bytes(kind: StoreKind, bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Format("magic mismatch".into()));
        }
        let version = u16::from_le_bytes(cur.array()?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(cur.array()?) as usize;
        if dim == 0 {
            return Err(Error::Format("dimension 0".into()));
        }
        let count = u64::from_le_bytes(cur.array()?);
        let mut store = Self::new(kind, dim)?;
        let mut row = vec![0f32; dim];
        for _ in 0..count {
            let id_len = u16::from_le_bytes(cur.array()?) as usize;
            let id = std::str::from_utf8(cur.take(id_len)?)
                .map_err(|_| Error::Format("id is not UTF-8".into()))?
                .to_string();
            let raw = cur.take(4 * dim)?;
            for (x, chunk) in row.iter_mut().zip(raw.chunks_exact(4)) {
                *x = f32::from_le_bytes(chunk.try_into().unwrap());
            }
            store.push(id, &row)?;
        }
        if cur.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after {count} rows",
                bytes.len() - cur.pos
            )));
        }
        store.seal();
        Ok(store)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated file at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, kind: StoreKind) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(kind, &bytes)
}

/// Dot product accumulated in f64.
pub fn similarity<A, B>(a: &[A], b: &[B]) -> Result<f64>
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(dot(a, b))
}

#[inline]
pub(crate) fn dot<A, B>(a: &[A], b: &[B]) -> f64
where
    A: Copy + Into<f64>,
    B: Copy + Into<f64>,
{
    a.iter().zip(b).map(|(&x, &y)| x.into() * y.into()).sum()
}

/// Scores every corpus review against `q_vec`, grouped per item and sorted
/// best first with review-id tiebreak.
pub fn score_reviews<Q>(
    store: &EmbeddingStore,
    q_vec: &[Q],
    corpus: &Corpus,
) -> Result<ItemReviewScores>
where
    Q: Copy + Into<f64>,
{
    if q_vec.len() != store.dim() {
        return Err(Error::DimensionMismatch {
            expected: store.dim(),
            actual: q_vec.len(),
        });
    }
    group_by_item(corpus, |r| Ok(dot(q_vec, store.require(&r.review_id)?)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::read_corpus;

    fn two_rows() -> EmbeddingStore {
        EmbeddingStore::from_rows(
            StoreKind::Review,
            4,
            [
                ("r1", vec![1.0, 2.0, 3.0, 4.0]),
                ("r2", vec![-0.5, 0.0, 1e-3, 7.25]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_bytes() {
        let s = two_rows();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"RIRE");
        assert_eq!(buf.len(), 4 + 2 + 4 + 8 + 2 * (2 + 2 + 16));
        let back = EmbeddingStore::from_bytes(StoreKind::Review, &buf).unwrap();
        assert_eq!(back.dim(), 4);
        assert_eq!(back.len(), 2);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
        assert_eq!(back.fingerprint(), s.fingerprint());
    }

    #[test]
    fn load_errors() {
        let mut buf = Vec::new();
        two_rows().write_to(&mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(EmbeddingStore::from_bytes(StoreKind::Review, &bad)
            .unwrap_err()
            .to_string()
            .contains("magic"));

        // declares 3 rows, holds 2
        let mut short = buf.clone();
        short[10..18].copy_from_slice(&3u64.to_le_bytes());
        assert!(EmbeddingStore::from_bytes(StoreKind::Review, &short)
            .unwrap_err()
            .to_string()
            .contains("truncated"));

        let mut zero = buf.clone();
        zero[6..10].copy_from_slice(&0u32.to_le_bytes());
        assert!(EmbeddingStore::from_bytes(StoreKind::Review, &zero).is_err());

        let dup =
            EmbeddingStore::from_rows(StoreKind::Review, 1, [("a", vec![1.0]), ("a", vec![2.0])]);
        assert!(dup.is_err());

        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(EmbeddingStore::from_bytes(StoreKind::Review, &trailing).is_err());
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity(&[1.0f32, 0.0], &[0.5f32, 2.0]).unwrap(), 0.5);
        assert_eq!(similarity(&[3.0f64, -2.0], &[0.0f32, 0.0]).unwrap(), 0.0);
        assert!(similarity(&[1.0f32], &[1.0f32, 2.0]).is_err());
    }

    #[test]
    fn score_and_ties() {
        let corpus = read_corpus(
            r#"{"item_id":"a","reviews":[{"review_id":"r1","text":"x","rating":1},{"review_id":"r2","text":"y","rating":1},{"review_id":"r_b","text":"y","rating":1},{"review_id":"r_a","text":"y","rating":1}]}"#
                .as_bytes(),
        )
        .unwrap();
        let store = EmbeddingStore::from_rows(
            StoreKind::Review,
            1,
            [
                ("r1", vec![0.2]),
                ("r2", vec![0.9]),
                ("r_b", vec![0.5]),
                ("r_a", vec![0.5]),
            ],
        )
        .unwrap();
        let scores = score_reviews(&store, &[1.0f32], &corpus).unwrap();
        let ids: Vec<_> = scores["a"].iter().map(|s| s.review_id.as_str()).collect();
        assert_eq!(ids, ["r2", "r_a", "r_b", "r1"]);
        assert!((scores["a"][0].score - 0.9f32 as f64).abs() < 1e-12);

        let missing = EmbeddingStore::from_rows(StoreKind::Review, 1, [("r1", vec![0.2])]).unwrap();
        assert!(matches!(
            score_reviews(&missing, &[1.0f32], &corpus),
            Err(Error::MissingEmbedding(id)) if id == "r2"
        ));
    }
}
