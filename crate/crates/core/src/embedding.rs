//! Phrase vectors from a pluggable provider.
//!
//! Two providers ship: [`HashingProvider`], a deterministic feature-hashing
//! embedder with a seeded random projection, and [`RemoteProvider`], which
//! asks a web service for vectors.
//!
//! Remote protocol: `POST {url}` with body `{"phrases": ["...", ...]}`; the
//! reply is `{"vectors": [[f32, ...], ...]}` with one vector per phrase, in
//! request order, all of equal length.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::text;

pub const DEFAULT_DIM: usize = 768;

pub trait EmbeddingProvider: Send + Sync {
    /// Stable identifier used to key the vector cache.
    fn id(&self) -> String;

    fn dim(&self) -> usize;

    /// One vector per phrase, in order.
    fn embed_batch(&self, phrases: &[String]) -> Result<Vec<Vec<f32>>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseVector {
    pub phrase: String,
    pub vector: Vec<f32>,
}

pub fn embed_phrases(phrases: &[String], provider: &dyn EmbeddingProvider) -> Result<Vec<PhraseVector>> {
    if phrases.is_empty() {
        return Err(Error::InvalidArgument("no phrases to embed".into()));
    }
    let vectors = provider.embed_batch(phrases)?;
    if vectors.len() != phrases.len() {
        return Err(Error::DimensionMismatch {
            expected: phrases.len(),
            actual: vectors.len(),
        });
    }
    let dim = vectors[0].len();
    for v in &vectors {
        if v.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("phrase vector"));
        }
    }
    Ok(phrases
        .iter()
        .cloned()
        .zip(vectors)
        .map(|(phrase, vector)| PhraseVector { phrase, vector })
        .collect())
}

/// Stacks phrase vectors into an `f64` matrix, one row per phrase.
pub fn to_matrix(vectors: &[PhraseVector]) -> Result<Matrix<f64>> {
    let rows: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.vector.iter().map(|&x| x as f64).collect())
        .collect();
    Matrix::from_rows(&rows)
}

fn hash64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().expect("8 bytes"))
}

/// Deterministic embedder: token unigrams and bigrams are hashed into
/// buckets, and each bucket owns a seeded Gaussian direction. A phrase vector
/// is the weighted sum of its buckets' directions, normalized to unit length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashingProvider {
    pub seed: u64,
    pub dim: usize,
    pub buckets: u64,
}

impl HashingProvider {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self {
            seed,
            dim,
            buckets: 1 << 20,
        }
    }

    fn direction(&self, bucket: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(hash64(&[b"dir", &self.seed.to_le_bytes(), &bucket.to_le_bytes()]));
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    pub fn embed_one(&self, phrase: &str) -> Vec<f32> {
        let tokens = text::tokens(phrase);
        let mut features: Vec<(String, f64)> = tokens.iter().map(|t| (format!("u:{t}"), 1.0)).collect();
        features.extend(tokens.windows(2).map(|w| (format!("b:{} {}", w[0], w[1]), 0.5)));
        if features.is_empty() {
            features.push((format!("raw:{phrase}"), 1.0));
        }
        let mut acc = vec![0.0f64; self.dim];
        for (f, weight) in features {
            let h = hash64(&[b"feat", &self.seed.to_le_bytes(), f.as_bytes()]);
            let bucket = h % self.buckets;
            let sign = if (h >> 63) == 1 { -1.0 } else { 1.0 };
            for (a, d) in acc.iter_mut().zip(self.direction(bucket)) {
                *a += sign * weight * d;
            }
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm = if norm > 0.0 { norm } else { 1.0 };
        acc.into_iter().map(|x| (x / norm) as f32).collect()
    }
}

impl EmbeddingProvider for HashingProvider {
    fn id(&self) -> String {
        format!("hashing-v1-seed{}-dim{}-b{}", self.seed, self.dim, self.buckets)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, phrases: &[String]) -> Result<Vec<Vec<f32>>> {
        use rayon::prelude::*;
        Ok(phrases.par_iter().map(|p| self.embed_one(p)).collect())
    }
}

/// On-disk vector cache: one file per (provider id, phrase), named by the
/// hex SHA-256 of both, holding little-endian `f32` values.
#[derive(Debug, Clone)]
pub struct VectorCache {
    dir: PathBuf,
}

impl VectorCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn key(provider_id: &str, phrase: &str) -> String {
        let mut h = Sha256::new();
        h.update(provider_id.as_bytes());
        h.update([0u8]);
        h.update(phrase.as_bytes());
        hex::encode(h.finalize())
    }

    fn path(&self, provider_id: &str, phrase: &str) -> PathBuf {
        self.dir.join(format!("{}.f32", Self::key(provider_id, phrase)))
    }

    pub fn get(&self, provider_id: &str, phrase: &str) -> Option<Vec<f32>> {
        let bytes = fs::read(self.path(provider_id, phrase)).ok()?;
        if bytes.len() % 4 != 0 {
            return None;
        }
        Some(decode_f32_le(&bytes))
    }

    /// Writes through a temporary file and renames, so concurrent writers of
    /// the same key never expose a partial vector.
    pub fn put(&self, provider_id: &str, phrase: &str, vector: &[f32]) -> Result<()> {
        let path = self.path(provider_id, phrase);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&encode_f32_le(vector)).map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

pub fn encode_f32_le(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

pub fn decode_f32_le(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    phrases: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Fetches vectors from a web service (see module docs), with retries and
/// an optional disk cache.
#[derive(Debug, Clone)]
pub struct RemoteProvider {
    pub url: String,
    pub dim: usize,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub batch_size: usize,
    pub cache: Option<VectorCache>,
}

impl RemoteProvider {
    pub fn new(url: impl Into<String>, dim: usize) -> Self {
        Self {
            url: url.into(),
            dim,
            timeout: Duration::from_secs(30),
            max_attempts: 4,
            initial_backoff: Duration::from_millis(200),
            batch_size: 256,
            cache: None,
        }
    }

    pub fn with_cache(mut self, cache: VectorCache) -> Self {
        self.cache = Some(cache);
        self
    }

    fn fetch_once(&self, agent: &ureq::Agent, phrases: &[String]) -> Result<Vec<Vec<f32>>> {
        let body = serde_json::to_vec(&EmbedRequest { phrases })?;
        let mut resp = agent
            .post(&self.url)
            .header("Content-Type", "application/json")
            .send(&body[..])
            .map_err(|e| Error::Http(e.to_string()))?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Http(e.to_string()))?;
        let parsed: EmbedResponse = serde_json::from_str(&text)?;
        if parsed.vectors.len() != phrases.len() {
            return Err(Error::Http(format!(
                "service returned {} vectors for {} phrases",
                parsed.vectors.len(),
                phrases.len()
            )));
        }
        Ok(parsed.vectors)
    }

    fn fetch_with_retry(&self, agent: &ureq::Agent, phrases: &[String]) -> Result<Vec<Vec<f32>>> {
        let mut backoff = self.initial_backoff;
        let mut last = None;
        for attempt in 1..=self.max_attempts.max(1) {
            match self.fetch_once(agent, phrases) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    log::warn!("embedding request attempt {attempt} failed: {e}");
                    last = Some(e);
                    if attempt < self.max_attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        log::error!("embedding service unreachable: {}", last.map(|e| e.to_string()).unwrap_or_default());
        Err(Error::ProviderUnavailable {
            attempts: self.max_attempts.max(1),
            missing: phrases.to_vec(),
        })
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn id(&self) -> String {
        format!("remote:{}", self.url)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, phrases: &[String]) -> Result<Vec<Vec<f32>>> {
        let id = self.id();
        let mut found: HashMap<usize, Vec<f32>> = HashMap::new();
        let mut missing: Vec<usize> = Vec::new();
        for (i, p) in phrases.iter().enumerate() {
            match self.cache.as_ref().and_then(|c| c.get(&id, p)) {
                Some(v) => {
                    found.insert(i, v);
                }
                None => missing.push(i),
            }
        }
        if !missing.is_empty() {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(self.timeout))
                .http_status_as_error(true)
                .build()
                .into();
            let mut failed = Vec::new();
            for chunk in missing.chunks(self.batch_size.max(1)) {
                let batch: Vec<String> = chunk.iter().map(|&i| phrases[i].clone()).collect();
                match self.fetch_with_retry(&agent, &batch) {
                    Ok(vectors) => {
                        for (&i, v) in chunk.iter().zip(vectors) {
                            if let Some(c) = &self.cache {
                                c.put(&id, &phrases[i], &v)?;
                            }
                            found.insert(i, v);
                        }
                    }
                    Err(Error::ProviderUnavailable { missing, .. }) => failed.extend(missing),
                    Err(e) => return Err(e),
                }
            }
            if !failed.is_empty() {
                return Err(Error::ProviderUnavailable {
                    attempts: self.max_attempts.max(1),
                    missing: failed,
                });
            }
        }
        Ok((0..phrases.len()).map(|i| found.remove(&i).expect("every phrase resolved")).collect())
    }
}

/// Binary phrase-vector file: `u32` count, `u32` dim, then per phrase a
/// `u32` byte length, UTF-8 text and `dim` little-endian `f32` values.
pub fn write_phrase_vectors(vectors: &[PhraseVector]) -> Vec<u8> {
    let dim = vectors.first().map_or(0, |v| v.vector.len());
    let mut out = Vec::new();
    out.extend((vectors.len() as u32).to_le_bytes());
    out.extend((dim as u32).to_le_bytes());
    for v in vectors {
        out.extend((v.phrase.len() as u32).to_le_bytes());
        out.extend(v.phrase.as_bytes());
        out.extend(encode_f32_le(&v.vector));
    }
    out
}

pub fn read_phrase_vectors(bytes: &[u8]) -> Result<Vec<PhraseVector>> {
    let bad = || Error::Parse("truncated phrase-vector file".into());
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(bad)?;
        pos += n;
        Ok(s)
    };
    let u32_at = |s: &[u8]| u32::from_le_bytes([s[0], s[1], s[2], s[3]]) as usize;
    let count = u32_at(take(4)?);
    let dim = u32_at(take(4)?);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u32_at(take(4)?);
        let phrase = String::from_utf8(take(len)?.to_vec()).map_err(|_| Error::Parse("phrase is not UTF-8".into()))?;
        let vector = decode_f32_le(take(dim * 4)?);
        out.push(PhraseVector { phrase, vector });
    }
    Ok(out)
}

pub fn load_phrase_vectors(path: &Path) -> Result<Vec<PhraseVector>> {
    read_phrase_vectors(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f32], b: &[f32]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
        let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn hashing_is_deterministic_and_default_dim() {
        let p = HashingProvider::new(7, DEFAULT_DIM);
        let a = p.embed_one("hire new employees");
        assert_eq!(a, p.embed_one("hire new employees"));
        assert_eq!(a.len(), 768);
        assert_ne!(a, HashingProvider::new(8, DEFAULT_DIM).embed_one("hire new employees"));
    }

    #[test]
    fn shared_tokens_raise_similarity() {
        let p = HashingProvider::new(1, 256);
        let full = p.embed_one("hire new employees");
        let sub = p.embed_one("new employees");
        let other = p.embed_one("warehouse lease");
        assert!(cosine(&full, &sub) > 0.5);
        assert!(cosine(&full, &other).abs() < 0.3);
    }

    #[test]
    fn embed_phrases_checks_batch() {
        let p = HashingProvider::new(1, 16);
        assert!(embed_phrases(&[], &p).is_err());
        let out = embed_phrases(&["a b".into(), "c".into()], &p).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|v| v.vector.len() == 16));
    }

    struct Ragged;
    impl EmbeddingProvider for Ragged {
        fn id(&self) -> String {
            "ragged".into()
        }
        fn dim(&self) -> usize {
            2
        }
        fn embed_batch(&self, phrases: &[String]) -> Result<Vec<Vec<f32>>> {
            Ok(phrases.iter().enumerate().map(|(i, _)| vec![0.0; i + 1]).collect())
        }
    }

    #[test]
    fn ragged_batch_is_an_error() {
        assert!(matches!(
            embed_phrases(&["a".into(), "b".into()], &Ragged),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn phrase_vector_file_round_trip() {
        let v = vec![
            PhraseVector { phrase: "hire".into(), vector: vec![1.0, -2.5] },
            PhraseVector { phrase: "new staff".into(), vector: vec![0.25, 3.0] },
        ];
        assert_eq!(read_phrase_vectors(&write_phrase_vectors(&v)).unwrap(), v);
        assert!(read_phrase_vectors(&write_phrase_vectors(&v)[..10]).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = VectorCache::open(dir.path()).unwrap();
        assert!(cache.get("p", "x").is_none());
        cache.put("p", "x", &[1.5, -0.5]).unwrap();
        assert_eq!(cache.get("p", "x"), Some(vec![1.5, -0.5]));
        assert!(cache.get("q", "x").is_none());
    }
}
