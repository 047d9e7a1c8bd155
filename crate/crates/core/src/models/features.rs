//! Feature rows: a dense customer embedding followed by a sparse binary
//! context vector.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::embedding::{read_phrase_vectors, write_phrase_vectors, PhraseVector};
use crate::error::{Error, Result};
use crate::registry::Annotations;
use crate::scalar::Scalar;

/// Customer id → embedding, all of one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CustomerEmbeddings {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f32>>,
}

impl CustomerEmbeddings {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            vectors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, customer_id: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: vector.len(),
            });
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("customer embedding"));
        }
        self.vectors.insert(customer_id.into(), vector);
        Ok(())
    }

    pub fn get(&self, customer_id: &str) -> Option<&[f32]> {
        self.vectors.get(customer_id).map(Vec::as_slice)
    }

    /// Length-prefixed records: customer id bytes, then `dim` little-endian
    /// f32 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let records: Vec<PhraseVector> = self
            .vectors
            .iter()
            .map(|(k, v)| PhraseVector {
                phrase: k.clone(),
                vector: v.clone(),
            })
            .collect();
        let mut out = write_phrase_vectors(&records);
        if records.is_empty() {
            out[4..8].copy_from_slice(&(self.dim as u32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let dim = bytes
            .get(4..8)
            .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]) as usize)
            .ok_or_else(|| Error::Parse("truncated embedding file".into()))?;
        let mut out = Self::new(dim);
        for r in read_phrase_vectors(bytes)? {
            out.insert(r.phrase, r.vector)?;
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingEmbedding {
    #[default]
    Drop,
    Zero,
}

/// Rows of `[embedding ‖ context]` with binary labels. The context block is
/// stored as sorted active indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet<T> {
    pub dialogue_ids: Vec<String>,
    pub embed_dim: usize,
    dense: Vec<T>,
    pub n_context: usize,
    ctx_ptr: Vec<usize>,
    ctx_idx: Vec<u32>,
    pub y: Vec<u8>,
    /// Rows dropped for lack of an embedding.
    pub dropped_missing: usize,
}

impl<T: Scalar> FeatureSet<T> {
    pub fn new(embed_dim: usize, n_context: usize) -> Self {
        Self {
            dialogue_ids: Vec::new(),
            embed_dim,
            dense: Vec::new(),
            n_context,
            ctx_ptr: vec![0],
            ctx_idx: Vec::new(),
            y: Vec::new(),
            dropped_missing: 0,
        }
    }

    pub fn push(&mut self, dialogue_id: impl Into<String>, dense: &[T], context: &[usize], y: u8) -> Result<()> {
        if dense.len() != self.embed_dim {
            return Err(Error::DimensionMismatch {
                expected: self.embed_dim,
                actual: dense.len(),
            });
        }
        if dense.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature row"));
        }
        if y > 1 {
            return Err(Error::InvalidArgument(format!("label must be 0 or 1, got {y}")));
        }
        let mut ctx: Vec<u32> = context.iter().map(|&c| c as u32).collect();
        ctx.sort_unstable();
        ctx.dedup();
        if let Some(&bad) = ctx.last().filter(|&&c| c as usize >= self.n_context) {
            return Err(Error::DimensionMismatch {
                expected: self.n_context,
                actual: bad as usize + 1,
            });
        }
        self.dialogue_ids.push(dialogue_id.into());
        self.dense.extend_from_slice(dense);
        self.ctx_idx.extend(ctx);
        self.ctx_ptr.push(self.ctx_idx.len());
        self.y.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embed_dim + self.n_context
    }

    pub fn dense(&self, i: usize) -> &[T] {
        &self.dense[i * self.embed_dim..(i + 1) * self.embed_dim]
    }

    pub fn context(&self, i: usize) -> &[u32] {
        &self.ctx_idx[self.ctx_ptr[i]..self.ctx_ptr[i + 1]]
    }

    /// Value of feature `j` in row `i`.
    pub fn value(&self, i: usize, j: usize) -> T {
        if j < self.embed_dim {
            self.dense(i)[j]
        } else if self.context(i).binary_search(&((j - self.embed_dim) as u32)).is_ok() {
            T::one()
        } else {
            T::zero()
        }
    }

    /// The full concatenated vector of row `i`.
    pub fn row(&self, i: usize) -> Vec<T> {
        let mut x = self.dense(i).to_vec();
        x.resize(self.dim(), T::zero());
        for &c in self.context(i) {
            x[self.embed_dim + c as usize] = T::one();
        }
        x
    }

    /// Nonzero `(feature, value)` pairs of row `i`, in feature order.
    pub fn nonzeros(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let e = self.embed_dim;
        self.dense(i)
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, v)| *v != T::zero())
            .chain(self.context(i).iter().map(move |&c| (e + c as usize, T::one())))
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|&&y| y == 1).count()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut out = Self::new(self.embed_dim, self.n_context);
        for &i in rows {
            out.dialogue_ids.push(self.dialogue_ids[i].clone());
            out.dense.extend_from_slice(self.dense(i));
            out.ctx_idx.extend_from_slice(self.context(i));
            out.ctx_ptr.push(out.ctx_idx.len());
            out.y.push(self.y[i]);
        }
        out
    }

    /// Keeps the listed context columns, renumbered in the given order.
    pub fn select_context(&self, keep: &[usize]) -> Self {
        let mut map = vec![u32::MAX; self.n_context];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new as u32;
        }
        let mut out = Self::new(self.embed_dim, keep.len());
        out.dialogue_ids = self.dialogue_ids.clone();
        out.dense = self.dense.clone();
        out.y = self.y.clone();
        out.dropped_missing = self.dropped_missing;
        for i in 0..self.len() {
            let mut ctx: Vec<u32> = self.context(i).iter().map(|&c| map[c as usize]).filter(|&c| c != u32::MAX).collect();
            ctx.sort_unstable();
            out.ctx_idx.extend(ctx);
            out.ctx_ptr.push(out.ctx_idx.len());
        }
        out
    }

    /// Context column → rows containing it.
    pub fn context_columns(&self) -> Vec<Vec<u32>> {
        let mut cols = vec![Vec::new(); self.n_context];
        for i in 0..self.len() {
            for &c in self.context(i) {
                cols[c as usize].push(i as u32);
            }
        }
        cols
    }
}

/// One row per dialogue offering `product`, ordered by dialogue id.
pub fn build_features<T: Scalar>(
    c: &Corpus,
    product: &str,
    embeddings: &CustomerEmbeddings,
    annotations: &Annotations,
    missing: MissingEmbedding,
) -> Result<FeatureSet<T>> {
    let by_dialogue = annotations.by_dialogue();
    let mut offered: Vec<_> = c
        .dialogues
        .iter()
        .filter_map(|d| d.offer(product).map(|o| (d, o.outcome)))
        .collect();
    offered.sort_by(|a, b| a.0.dialogue_id.cmp(&b.0.dialogue_id));
    let mut out = FeatureSet::new(embeddings.dim, annotations.n_variables);
    let zeros = vec![T::zero(); embeddings.dim];
    for (d, y) in offered {
        let dense: Vec<T> = match (embeddings.get(&d.customer_id), missing) {
            (Some(v), _) => v.iter().map(|&x| T::of(x as f64)).collect(),
            (None, MissingEmbedding::Zero) => zeros.clone(),
            (None, MissingEmbedding::Drop) => {
                out.dropped_missing += 1;
                continue;
            }
        };
        let ctx = by_dialogue.get(d.dialogue_id.as_str()).copied().unwrap_or(&[]);
        out.push(d.dialogue_id.clone(), &dense, ctx, y)?;
    }
    if out.dropped_missing > 0 {
        log::warn!("{} rows for {product} dropped for missing embeddings", out.dropped_missing);
    }
    Ok(out)
}

/// Balanced class weights `(w0, w1)` so that each class carries half of the
/// total weight.
pub fn balanced_weights(y: &[u8]) -> (f64, f64) {
    let n = y.len() as f64;
    let pos = y.iter().filter(|&&v| v == 1).count() as f64;
    let neg = n - pos;
    if pos == 0.0 || neg == 0.0 {
        (1.0, 1.0)
    } else {
        (n / (2.0 * neg), n / (2.0 * pos))
    }
}

pub fn sample_weights<T: Scalar>(y: &[u8], balanced: bool) -> Vec<T> {
    let (w0, w1) = if balanced { balanced_weights(y) } else { (1.0, 1.0) };
    y.iter().map(|&v| T::of(if v == 1 { w1 } else { w0 })).collect()
}
