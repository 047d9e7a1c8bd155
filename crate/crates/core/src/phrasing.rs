//! Candidate phrase mining over customer turns, support filtering and the
//! per-product significance test.
//!
//! Counting is a map-reduce over dialogues: each dialogue contributes the set
//! of distinct n-grams found in its customer sentences, and partial tables
//! merge associatively. N-grams are keyed by interned token ids packed into a
//! `u128`, so the full candidate space of a large corpus stays compact until
//! the support filter has run.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::lexicon::StopWords;
use crate::text;

pub const MAX_PHRASE_LEN: usize = 4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductCounts {
    /// Dialogues offering the product and containing the phrase.
    pub n: u32,
    /// Of those, dialogues with outcome 1.
    pub k: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseCandidate {
    pub tokens: Vec<String>,
    /// Number of distinct dialogues containing the phrase.
    pub support: usize,
    pub per_product: BTreeMap<String, ProductStat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductStat {
    pub n_with_phrase: u32,
    pub k_with_phrase_and_outcome1: u32,
    pub z_stat: Option<f64>,
    pub p_value: Option<f64>,
}

impl PhraseCandidate {
    pub fn text(&self) -> String {
        text::phrase_key(&self.tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub z_stat: f64,
    pub p_value: f64,
    pub rate_with: f64,
    pub rate_baseline: f64,
}

/// Offer totals for one product over the whole corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProductBaseline {
    pub n: u32,
    pub k: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub products: Vec<String>,
    pub baselines: Vec<ProductBaseline>,
    /// Sorted by phrase text.
    pub candidates: Vec<PhraseCandidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn baseline(&self, product: &str) -> Option<ProductBaseline> {
        self.products
            .iter()
            .position(|p| p == product)
            .map(|i| self.baselines[i])
    }

    pub fn find(&self, phrase: &str) -> Option<&PhraseCandidate> {
        self.candidates
            .binary_search_by(|c| c.text().as_str().cmp(phrase))
            .ok()
            .map(|i| &self.candidates[i])
    }
}

pub fn product_baselines(c: &Corpus) -> Vec<ProductBaseline> {
    let mut out = vec![ProductBaseline::default(); c.product_catalog.len()];
    for d in &c.dialogues {
        for o in &d.offers {
            if let Some(j) = c.product_index(&o.product_id) {
                out[j].n += 1;
                out[j].k += o.outcome as u32;
            }
        }
    }
    out
}

const TOKEN_BITS: u32 = 32;

fn pack(ids: &[u32]) -> u128 {
    // id + 1 so that a shorter n-gram never collides with a longer one
    ids.iter()
        .fold(0u128, |acc, &id| (acc << TOKEN_BITS) | (id as u128 + 1))
}

fn unpack(mut key: u128) -> Vec<u32> {
    let mut ids = Vec::with_capacity(MAX_PHRASE_LEN);
    while key != 0 {
        ids.push((key & 0xFFFF_FFFF) as u32 - 1);
        key >>= TOKEN_BITS;
    }
    ids.reverse();
    ids
}

struct Counts {
    support: u32,
    per_product: Vec<ProductCounts>,
}

/// Tokenized customer sentences of every dialogue, with a shared vocabulary.
struct TokenizedCorpus {
    vocab: Vec<String>,
    /// dialogue -> sentences -> token ids
    dialogues: Vec<Vec<Vec<u32>>>,
}

fn tokenize_customer_turns(c: &Corpus) -> TokenizedCorpus {
    let mut index: HashMap<String, u32> = HashMap::new();
    let mut vocab = Vec::new();
    let mut dialogues = Vec::with_capacity(c.len());
    for d in &c.dialogues {
        let mut sents = Vec::new();
        for u in d.customer_utterances() {
            for s in text::sentences(&u.text) {
                let ids = s
                    .into_iter()
                    .map(|t| {
                        if let Some(&id) = index.get(&t) {
                            id
                        } else {
                            let id = vocab.len() as u32;
                            vocab.push(t.clone());
                            index.insert(t, id);
                            id
                        }
                    })
                    .collect();
                sents.push(ids);
            }
        }
        dialogues.push(sents);
    }
    TokenizedCorpus { vocab, dialogues }
}

fn count_ngrams(c: &Corpus, tok: &TokenizedCorpus, max_len: usize) -> HashMap<u128, Counts> {
    let n_products = c.product_catalog.len();
    let offers: Vec<Vec<(usize, u8)>> = c
        .dialogues
        .iter()
        .map(|d| {
            d.offers
                .iter()
                .filter_map(|o| c.product_index(&o.product_id).map(|j| (j, o.outcome)))
                .collect()
        })
        .collect();

    tok.dialogues
        .par_iter()
        .zip(offers.par_iter())
        .fold(HashMap::new, |mut acc: HashMap<u128, Counts>, (sents, offers)| {
            let mut seen: HashSet<u128> = HashSet::new();
            for s in sents {
                for len in 1..=max_len.min(s.len()) {
                    for w in s.windows(len) {
                        seen.insert(pack(w));
                    }
                }
            }
            for key in seen {
                let e = acc.entry(key).or_insert_with(|| Counts {
                    support: 0,
                    per_product: vec![ProductCounts::default(); n_products],
                });
                e.support += 1;
                for &(j, outcome) in offers {
                    e.per_product[j].n += 1;
                    e.per_product[j].k += outcome as u32;
                }
            }
            acc
        })
        .reduce(HashMap::new, |a, b| {
            let (mut big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
            for (key, cb) in small {
                match big.get_mut(&key) {
                    Some(ca) => {
                        ca.support += cb.support;
                        for (x, y) in ca.per_product.iter_mut().zip(cb.per_product) {
                            x.n += y.n;
                            x.k += y.k;
                        }
                    }
                    None => {
                        big.insert(key, cb);
                    }
                }
            }
            big
        })
}

/// Mines all candidates with support at least `min_support`.
///
/// Equivalent to `filter_by_support(generate_candidates(c, max_len),
/// min_support)` but never materializes rare n-grams.
pub fn generate_supported(c: &Corpus, max_len: usize, min_support: usize) -> Result<CandidateSet> {
    if !(1..=MAX_PHRASE_LEN).contains(&max_len) {
        return Err(Error::InvalidArgument(format!(
            "max phrase length must be in 1..={MAX_PHRASE_LEN}, got {max_len}"
        )));
    }
    let tok = tokenize_customer_turns(c);
    let counts = count_ngrams(c, &tok, max_len);
    let mut candidates: Vec<PhraseCandidate> = counts
        .into_iter()
        .filter(|(_, cnt)| cnt.support as usize >= min_support)
        .map(|(key, cnt)| PhraseCandidate {
            tokens: unpack(key).into_iter().map(|id| tok.vocab[id as usize].clone()).collect(),
            support: cnt.support as usize,
            per_product: c
                .product_catalog
                .iter()
                .zip(cnt.per_product)
                .filter(|(_, pc)| pc.n > 0)
                .map(|(p, pc)| {
                    (
                        p.clone(),
                        ProductStat {
                            n_with_phrase: pc.n,
                            k_with_phrase_and_outcome1: pc.k,
                            z_stat: None,
                            p_value: None,
                        },
                    )
                })
                .collect(),
        })
        .collect();
    candidates.sort_by_cached_key(PhraseCandidate::text);
    Ok(CandidateSet {
        products: c.product_catalog.clone(),
        baselines: product_baselines(c),
        candidates,
    })
}

/// All contiguous 1..=`max_len` token n-grams of customer sentences.
pub fn generate_candidates(c: &Corpus, max_len: usize) -> Result<CandidateSet> {
    generate_supported(c, max_len, 1)
}

pub fn filter_by_support(cands: &CandidateSet, min_dialogues: usize) -> CandidateSet {
    CandidateSet {
        products: cands.products.clone(),
        baselines: cands.baselines.clone(),
        candidates: cands
            .candidates
            .iter()
            .filter(|c| c.support >= min_dialogues)
            .cloned()
            .collect(),
    }
}

/// Drops phrases made only of stopwords.
pub fn remove_stop_phrases(cands: &CandidateSet, stop: &StopWords) -> CandidateSet {
    CandidateSet {
        products: cands.products.clone(),
        baselines: cands.baselines.clone(),
        candidates: cands
            .candidates
            .iter()
            .filter(|c| !stop.is_stop_phrase(&c.tokens))
            .cloned()
            .collect(),
    }
}

/// Two-sided two-proportion z-test with pooled variance.
///
/// Returns `(z, p)`. A pooled rate of 0 or 1 carries no variance and yields
/// `(0, 1)`.
pub fn two_proportion_z(k1: u32, n1: u32, k2: u32, n2: u32) -> (f64, f64) {
    assert!(n1 > 0 && n2 > 0, "both groups must be non-empty");
    let (k1, n1, k2, n2) = (k1 as f64, n1 as f64, k2 as f64, n2 as f64);
    let pooled = (k1 + k2) / (n1 + n2);
    if pooled <= 0.0 || pooled >= 1.0 {
        return (0.0, 1.0);
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2)).sqrt();
    let z = (k1 / n1 - k2 / n2) / se;
    let p = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
    (z, p)
}

/// Compares the outcome-1 rate of dialogues offering the product and
/// mentioning the phrase against the rate over all dialogues offering it.
pub fn significance_from_counts(
    phrase: &str,
    product: &str,
    with: ProductCounts,
    baseline: ProductBaseline,
) -> Result<SignificanceResult> {
    if with.n == 0 || baseline.n == 0 {
        return Err(Error::NoCooccurrence {
            phrase: phrase.to_string(),
            product: product.to_string(),
        });
    }
    let (z, p) = two_proportion_z(with.k, with.n, baseline.k, baseline.n);
    Ok(SignificanceResult {
        z_stat: z,
        p_value: p,
        rate_with: with.k as f64 / with.n as f64,
        rate_baseline: baseline.k as f64 / baseline.n as f64,
    })
}

/// Significance of one phrase for one product, recounting the corpus.
pub fn significance_test(phrase: &PhraseCandidate, product: &str, c: &Corpus) -> Result<SignificanceResult> {
    let j = c
        .product_index(product)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown product `{product}`")))?;
    let baseline = product_baselines(c)[j];
    let with = phrase
        .per_product
        .get(product)
        .map(|s| ProductCounts {
            n: s.n_with_phrase,
            k: s.k_with_phrase_and_outcome1,
        })
        .unwrap_or_default();
    significance_from_counts(&phrase.text(), product, with, baseline)
}

/// Fills z and p for every (candidate, product) pair with co-occurrence.
pub fn annotate_significance(cands: &mut CandidateSet) {
    let products = cands.products.clone();
    let baselines = cands.baselines.clone();
    cands.candidates.par_iter_mut().for_each(|cand| {
        let text = cand.text();
        for (p, stat) in cand.per_product.iter_mut() {
            let j = products.iter().position(|x| x == p).expect("catalog product");
            let with = ProductCounts {
                n: stat.n_with_phrase,
                k: stat.k_with_phrase_and_outcome1,
            };
            if let Ok(r) = significance_from_counts(&text, p, with, baselines[j]) {
                stat.z_stat = Some(r.z_stat);
                stat.p_value = Some(r.p_value);
            }
        }
    });
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificantPhrase {
    pub candidate: PhraseCandidate,
    pub significant_products: BTreeSet<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignificanceOptions {
    pub alpha: f64,
    /// Divide alpha by the number of (phrase, product) tests performed.
    pub bonferroni: bool,
}

impl Default for SignificanceOptions {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            bonferroni: false,
        }
    }
}

/// Keeps candidates with `p < alpha` for at least one of `products`.
/// Expects [`annotate_significance`] to have run.
pub fn select_significant(cands: &CandidateSet, opts: SignificanceOptions, products: &[String]) -> Vec<SignificantPhrase> {
    let n_tests: usize = cands
        .candidates
        .iter()
        .map(|c| {
            c.per_product
                .iter()
                .filter(|(p, s)| products.contains(p) && s.p_value.is_some())
                .count()
        })
        .sum();
    let alpha = if opts.bonferroni && n_tests > 0 {
        opts.alpha / n_tests as f64
    } else {
        opts.alpha
    };
    cands
        .candidates
        .iter()
        .filter_map(|c| {
            let sig: BTreeSet<String> = c
                .per_product
                .iter()
                .filter(|(p, s)| products.contains(p) && s.p_value.is_some_and(|pv| pv < alpha))
                .map(|(p, _)| p.clone())
                .collect();
            (!sig.is_empty()).then(|| SignificantPhrase {
                candidate: c.clone(),
                significant_products: sig,
            })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// Tab-separated candidate table: phrase, support, then `n`, `k`, `z`, `p`
/// per product.
pub fn write_candidate_table(w: &mut impl Write, products: &[String], cands: &[PhraseCandidate]) -> Result<()> {
    let io = |e| Error::io("<candidate table>", e);
    let mut header = vec!["phrase".to_string(), "support".to_string()];
    for p in products {
        for col in ["n", "k", "z", "p"] {
            header.push(format!("{p}:{col}"));
        }
    }
    writeln!(w, "{}", header.join("\t")).map_err(io)?;
    for c in cands {
        let mut row = vec![c.text(), c.support.to_string()];
        for p in products {
            match c.per_product.get(p) {
                Some(s) => {
                    row.push(s.n_with_phrase.to_string());
                    row.push(s.k_with_phrase_and_outcome1.to_string());
                    row.push(fmt_opt(s.z_stat));
                    row.push(fmt_opt(s.p_value));
                }
                None => row.extend(["0", "0", "NA", "NA"].map(String::from)),
            }
        }
        writeln!(w, "{}", row.join("\t")).map_err(io)?;
    }
    Ok(())
}

pub fn read_candidate_table(text: &str) -> Result<(Vec<String>, Vec<PhraseCandidate>)> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Parse("empty candidate table".into()))?
        .split('\t')
        .collect();
    if header.len() < 2 || (header.len() - 2) % 4 != 0 {
        return Err(Error::Parse("malformed candidate table header".into()));
    }
    let products: Vec<String> = header[2..]
        .chunks(4)
        .map(|c| c[0].trim_end_matches(":n").to_string())
        .collect();
    let parse_opt = |s: &str| -> Result<Option<f64>> {
        if s == "NA" {
            Ok(None)
        } else {
            s.parse().map(Some).map_err(|_| Error::Parse(format!("bad number `{s}`")))
        }
    };
    let mut out = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != header.len() {
            return Err(Error::Parse(format!("row has {} columns, expected {}", cols.len(), header.len())));
        }
        let num = |s: &str| s.parse::<u32>().map_err(|_| Error::Parse(format!("bad count `{s}`")));
        let mut per_product = BTreeMap::new();
        for (i, p) in products.iter().enumerate() {
            let f = &cols[2 + 4 * i..6 + 4 * i];
            let n = num(f[0])?;
            if n > 0 {
                per_product.insert(
                    p.clone(),
                    ProductStat {
                        n_with_phrase: n,
                        k_with_phrase_and_outcome1: num(f[1])?,
                        z_stat: parse_opt(f[2])?,
                        p_value: parse_opt(f[3])?,
                    },
                );
            }
        }
        out.push(PhraseCandidate {
            tokens: cols[0].split(' ').map(String::from).collect(),
            support: cols[1].parse().map_err(|_| Error::Parse(format!("bad support `{}`", cols[1])))?,
            per_product,
        });
    }
    Ok((products, out))
}
