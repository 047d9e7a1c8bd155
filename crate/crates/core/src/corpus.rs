//! Dialogue corpora: loading with a rejects sidecar, cleaning, and
//! per-product statistics.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Customer,
    Manager,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    #[serde(skip)]
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OfferRecord {
    pub product_id: String,
    pub outcome: u8,
}

impl OfferRecord {
    pub fn accepted(&self) -> bool {
        self.outcome == 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub customer_id: String,
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "timestamp_format"
    )]
    pub timestamp: Option<NaiveDateTime>,
    pub utterances: Vec<Utterance>,
    pub offers: Vec<OfferRecord>,
}

impl Dialogue {
    pub fn customer_utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.utterances
            .iter()
            .filter(|u| u.speaker == Speaker::Customer)
    }

    pub fn offer(&self, product: &str) -> Option<&OfferRecord> {
        self.offers.iter().find(|o| o.product_id == product)
    }

    fn reindex(&mut self) {
        for (i, u) in self.utterances.iter_mut().enumerate() {
            u.index = i;
        }
    }
}

mod timestamp_format {
    use chrono::NaiveDateTime;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ts: &Option<NaiveDateTime>, s: S) -> Result<S::Ok, S::Error> {
        match ts {
            Some(t) => s.serialize_str(&t.format("%Y-%m-%dT%H:%M:%S").to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<NaiveDateTime>, D::Error> {
        let raw: Option<String> = Option::deserialize(d)?;
        match raw {
            None => Ok(None),
            Some(s) => super::parse_timestamp(&s)
                .map(Some)
                .ok_or_else(|| serde::de::Error::custom(format!("bad timestamp `{s}`"))),
        }
    }
}

/// Accepts RFC 3339, naive date-times and plain dates.
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub dialogues: Vec<Dialogue>,
    pub product_catalog: Vec<String>,
}

impl Corpus {
    /// Builds a corpus whose catalog is the sorted set of offered products.
    pub fn new(dialogues: Vec<Dialogue>) -> Result<Self> {
        let catalog: BTreeSet<String> = dialogues
            .iter()
            .flat_map(|d| d.offers.iter().map(|o| o.product_id.clone()))
            .collect();
        Self::with_catalog(dialogues, catalog.into_iter().collect())
    }

    pub fn with_catalog(mut dialogues: Vec<Dialogue>, product_catalog: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for d in &mut dialogues {
            if !seen.insert(d.dialogue_id.clone()) {
                return Err(Error::DuplicateDialogue(d.dialogue_id.clone()));
            }
            d.reindex();
        }
        let known: HashSet<&str> = product_catalog.iter().map(String::as_str).collect();
        for d in &dialogues {
            for o in &d.offers {
                if !known.contains(o.product_id.as_str()) {
                    return Err(Error::InvalidArgument(format!(
                        "dialogue `{}` offers `{}` which is not in the product catalog",
                        d.dialogue_id, o.product_id
                    )));
                }
            }
        }
        Ok(Self {
            dialogues,
            product_catalog,
        })
    }

    pub fn len(&self) -> usize {
        self.dialogues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dialogues.is_empty()
    }

    pub fn product_index(&self, product: &str) -> Option<usize> {
        self.product_catalog.iter().position(|p| p == product)
    }

    /// One JSON record per line, in corpus order.
    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for d in &self.dialogues {
            serde_json::to_writer(&mut out, d)?;
            out.push(b'\n');
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorpusFormat {
    /// One dialogue record per line.
    #[serde(rename = "jsonl", alias = "ndjson")]
    JsonLines,
    /// A single JSON array of dialogue records.
    #[serde(rename = "json")]
    JsonArray,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "ndjson" => Ok(Self::JsonLines),
            "json" => Ok(Self::JsonArray),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

/// A raw record that failed validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub record: usize,
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone)]
pub struct LoadedCorpus {
    pub corpus: Corpus,
    pub rejects: Vec<Reject>,
}

pub fn write_rejects(path: &Path, rejects: &[Reject]) -> Result<()> {
    fs::write(path, rejects_to_jsonl(rejects)?).map_err(|e| Error::io(path, e))
}

pub fn rejects_to_jsonl(rejects: &[Reject]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in rejects {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

fn validate_record(value: &Value, catalog: Option<&HashSet<String>>) -> std::result::Result<Dialogue, String> {
    let obj = value.as_object().ok_or("record is not an object")?;
    let str_field = |name: &str| -> std::result::Result<String, String> {
        match obj.get(name) {
            Some(Value::String(s)) if !s.trim().is_empty() => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(_) => Err(format!("field `{name}` is empty or not a string")),
            None => Err(format!("missing {name}")),
        }
    };
    let dialogue_id = str_field("dialogue_id")?;
    let customer_id = str_field("customer_id")?;

    let timestamp = match obj.get("timestamp") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(parse_timestamp(s).ok_or(format!("bad timestamp `{s}`"))?),
        Some(_) => return Err("timestamp is not a string".into()),
    };

    let raw_utts = obj
        .get("utterances")
        .and_then(Value::as_array)
        .ok_or("missing utterances array")?;
    let mut utterances = Vec::with_capacity(raw_utts.len());
    for (i, u) in raw_utts.iter().enumerate() {
        let speaker = match u.get("speaker").and_then(Value::as_str) {
            Some(s) if s.eq_ignore_ascii_case("customer") => Speaker::Customer,
            Some(s) if s.eq_ignore_ascii_case("manager") => Speaker::Manager,
            Some(s) => return Err(format!("utterance {i}: unknown speaker `{s}`")),
            None => return Err(format!("utterance {i}: missing speaker")),
        };
        let text = u
            .get("text")
            .and_then(Value::as_str)
            .ok_or(format!("utterance {i}: missing text"))?;
        if text.trim().is_empty() {
            return Err(format!("utterance {i}: empty text"));
        }
        utterances.push(Utterance {
            speaker,
            text: text.to_string(),
            index: i,
        });
    }

    let raw_offers = match obj.get("offers") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(a)) => a.clone(),
        Some(_) => return Err("offers is not an array".into()),
    };
    let mut offers: Vec<OfferRecord> = Vec::with_capacity(raw_offers.len());
    for (i, o) in raw_offers.iter().enumerate() {
        let product_id = match o.get("product_id") {
            Some(Value::String(s)) if !s.trim().is_empty() => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(format!("offer {i}: missing product_id")),
        };
        if let Some(cat) = catalog {
            if !cat.contains(&product_id) {
                return Err(format!("offer {i}: product `{product_id}` not in catalog"));
            }
        }
        let outcome = match o.get("outcome") {
            Some(Value::Number(n)) if n.as_u64() == Some(0) || n.as_u64() == Some(1) => n.as_u64().unwrap() as u8,
            Some(Value::Bool(b)) => u8::from(*b),
            _ => return Err(format!("offer {i}: outcome must be 0 or 1")),
        };
        let rec = OfferRecord { product_id, outcome };
        // exact duplicates are folded; conflicting duplicates are kept for clean_corpus
        if !offers.contains(&rec) {
            offers.push(rec);
        }
    }
    if offers.len() > 3 {
        log::warn!("dialogue `{dialogue_id}` carries {} offers (more than 3)", offers.len());
    }

    Ok(Dialogue {
        dialogue_id,
        customer_id,
        timestamp,
        utterances,
        offers,
    })
}

/// Parses and validates a corpus from in-memory bytes.
pub fn parse_corpus(bytes: &[u8], format: CorpusFormat, catalog: Option<&[String]>) -> Result<LoadedCorpus> {
    let catalog_set: Option<HashSet<String>> = catalog.map(|c| c.iter().cloned().collect());
    let mut records: Vec<(usize, std::result::Result<Value, String>, String)> = Vec::new();
    match format {
        CorpusFormat::JsonLines => {
            for (i, line) in BufReader::new(bytes).lines().enumerate() {
                let line = line.map_err(|e| Error::Parse(format!("line {}: {e}", i + 1)))?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed = serde_json::from_str::<Value>(&line).map_err(|e| format!("invalid json: {e}"));
                records.push((i + 1, parsed, line));
            }
        }
        CorpusFormat::JsonArray => {
            let all: Value = serde_json::from_slice(bytes)?;
            let arr = all
                .as_array()
                .ok_or_else(|| Error::Parse("expected a JSON array of dialogues".into()))?;
            for (i, v) in arr.iter().enumerate() {
                records.push((i + 1, Ok(v.clone()), v.to_string()));
            }
        }
    }

    let mut dialogues = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = HashSet::new();
    for (record, parsed, raw) in records {
        match parsed.and_then(|v| validate_record(&v, catalog_set.as_ref())) {
            Ok(d) => {
                if !seen.insert(d.dialogue_id.clone()) {
                    return Err(Error::DuplicateDialogue(d.dialogue_id));
                }
                dialogues.push(d);
            }
            Err(reason) => rejects.push(Reject { record, reason, raw }),
        }
    }
    if dialogues.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let corpus = match catalog {
        Some(c) => Corpus::with_catalog(dialogues, c.to_vec())?,
        None => Corpus::new(dialogues)?,
    };
    Ok(LoadedCorpus { corpus, rejects })
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<LoadedCorpus> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(&bytes, format, None)
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CleaningReport {
    pub input_size: usize,
    pub dropped_too_short: usize,
    pub dropped_contradictory: usize,
    pub merged_repeat_calls: usize,
    pub dropped_conflicting_repeats: usize,
    pub output_size: usize,
}

impl CleaningReport {
    pub fn is_conserved(&self) -> bool {
        self.input_size
            == self.output_size
                + self.dropped_too_short
                + self.dropped_contradictory
                + self.merged_repeat_calls
                + self.dropped_conflicting_repeats
    }

    /// Flat `key=value` lines.
    pub fn to_kv(&self) -> String {
        format!(
            "input_size={}\ndropped_too_short={}\ndropped_contradictory={}\nmerged_repeat_calls={}\ndropped_conflicting_repeats={}\noutput_size={}\n",
            self.input_size,
            self.dropped_too_short,
            self.dropped_contradictory,
            self.merged_repeat_calls,
            self.dropped_conflicting_repeats,
            self.output_size
        )
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad report line `{line}`")))?;
            let v: usize = v
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad count in `{line}`")))?;
            map.insert(k.trim().to_string(), v);
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| Error::Parse(format!("missing key {k}")));
        Ok(Self {
            input_size: get("input_size")?,
            dropped_too_short: get("dropped_too_short")?,
            dropped_contradictory: get("dropped_contradictory")?,
            merged_repeat_calls: get("merged_repeat_calls")?,
            dropped_conflicting_repeats: get("dropped_conflicting_repeats")?,
            output_size: get("output_size")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningOptions {
    pub min_customer_lines: usize,
    /// Prepend earlier transcripts to the surviving call when merging.
    pub concatenate_repeats: bool,
}

impl Default for CleaningOptions {
    fn default() -> Self {
        Self {
            min_customer_lines: 2,
            concatenate_repeats: false,
        }
    }
}

/// Orders dialogue ids numerically when both are integers.
fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.len().cmp(&b.len()).then_with(|| a.cmp(b)),
    }
}

/// Chronological order, falling back to dialogue id when either timestamp
/// is absent.
fn compare_calls(a: &Dialogue, b: &Dialogue) -> Ordering {
    match (a.timestamp, b.timestamp) {
        (Some(x), Some(y)) if x != y => x.cmp(&y),
        _ => compare_ids(&a.dialogue_id, &b.dialogue_id),
    }
}

pub fn clean_corpus(c: &Corpus, min_customer_lines: usize) -> (Corpus, CleaningReport) {
    clean_corpus_with(
        c,
        CleaningOptions {
            min_customer_lines,
            ..Default::default()
        },
    )
}

pub fn clean_corpus_with(c: &Corpus, opts: CleaningOptions) -> (Corpus, CleaningReport) {
    let min_lines = opts.min_customer_lines.max(1);
    let mut report = CleaningReport {
        input_size: c.len(),
        ..Default::default()
    };

    let mut kept: Vec<Dialogue> = Vec::with_capacity(c.len());
    for d in &c.dialogues {
        if d.customer_utterances().count() < min_lines {
            report.dropped_too_short += 1;
            continue;
        }
        let mut outcomes: HashMap<&str, u8> = HashMap::new();
        let contradictory = d.offers.iter().any(|o| {
            outcomes
                .insert(o.product_id.as_str(), o.outcome)
                .is_some_and(|prev| prev != o.outcome)
        });
        if contradictory {
            report.dropped_contradictory += 1;
            continue;
        }
        let mut d = d.clone();
        let mut seen = HashSet::new();
        d.offers.retain(|o| seen.insert(o.product_id.clone()));
        kept.push(d);
    }

    // (customer, product) -> indices into `kept`
    let mut calls: BTreeMap<(String, String), Vec<usize>> = BTreeMap::new();
    for (i, d) in kept.iter().enumerate() {
        for o in &d.offers {
            calls
                .entry((d.customer_id.clone(), o.product_id.clone()))
                .or_default()
                .push(i);
        }
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Loss {
        Merged,
        Conflict,
    }
    let mut removed_offers: Vec<Vec<(String, Loss)>> = vec![Vec::new(); kept.len()];
    let mut prepend: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for ((_, product), idxs) in &calls {
        if idxs.len() < 2 {
            continue;
        }
        let outcomes: HashSet<u8> = idxs
            .iter()
            .map(|&i| kept[i].offer(product).expect("indexed offer").outcome)
            .collect();
        if outcomes.len() > 1 {
            for &i in idxs {
                removed_offers[i].push((product.clone(), Loss::Conflict));
            }
            continue;
        }
        let latest = *idxs
            .iter()
            .max_by(|&&a, &&b| compare_calls(&kept[a], &kept[b]))
            .expect("non-empty group");
        for &i in idxs.iter().filter(|&&i| i != latest) {
            removed_offers[i].push((product.clone(), Loss::Merged));
            if opts.concatenate_repeats {
                prepend.entry(latest).or_default().push(i);
            }
        }
    }

    let originals = kept.clone();
    let mut out = Vec::with_capacity(kept.len());
    for (i, mut d) in kept.into_iter().enumerate() {
        let losses = &removed_offers[i];
        if !losses.is_empty() {
            d.offers.retain(|o| !losses.iter().any(|(p, _)| *p == o.product_id));
            if d.offers.is_empty() {
                if losses.iter().any(|(_, l)| *l == Loss::Merged) {
                    report.merged_repeat_calls += 1;
                } else {
                    report.dropped_conflicting_repeats += 1;
                }
                continue;
            }
        }
        if let Some(earlier) = prepend.get_mut(&i) {
            earlier.sort_by(|&a, &b| compare_calls(&originals[a], &originals[b]));
            let mut utts: Vec<Utterance> = earlier
                .iter()
                .flat_map(|&j| originals[j].utterances.iter().cloned())
                .collect();
            utts.extend(d.utterances);
            d.utterances = utts;
            d.reindex();
        }
        out.push(d);
    }

    report.output_size = out.len();
    let corpus = Corpus {
        dialogues: out,
        product_catalog: c.product_catalog.clone(),
    };
    (corpus, report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductStats {
    pub product_id: String,
    pub n_dialogues: usize,
    pub n_accepted: usize,
    /// `None` when the product was never offered.
    pub propensity_rate: Option<f64>,
}

pub fn corpus_stats(c: &Corpus) -> Vec<ProductStats> {
    let mut counts: BTreeMap<&str, (usize, usize)> = c
        .product_catalog
        .iter()
        .map(|p| (p.as_str(), (0, 0)))
        .collect();
    for d in &c.dialogues {
        for o in &d.offers {
            let e = counts.entry(o.product_id.as_str()).or_default();
            e.0 += 1;
            e.1 += o.outcome as usize;
        }
    }
    c.product_catalog
        .iter()
        .map(|p| {
            let (n, k) = counts[p.as_str()];
            ProductStats {
                product_id: p.clone(),
                n_dialogues: n,
                n_accepted: k,
                propensity_rate: (n > 0).then(|| k as f64 / n as f64),
            }
        })
        .collect()
}

pub struct StatsTable<'a>(pub &'a [ProductStats]);

impl fmt::Display for StatsTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "product_id\tn_dialogues\tpropensity_rate")?;
        for s in self.0 {
            match s.propensity_rate {
                Some(r) => writeln!(f, "{}\t{}\t{}", s.product_id, s.n_dialogues, r)?,
                None => writeln!(f, "{}\t{}\tnull", s.product_id, s.n_dialogues)?,
            }
        }
        Ok(())
    }
}

pub fn write_stats(w: &mut impl Write, stats: &[ProductStats]) -> std::io::Result<()> {
    write!(w, "{}", StatsTable(stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dlg(id: &str, cust: &str, customer_lines: usize, offers: &[(&str, u8)]) -> Dialogue {
        let mut utterances = vec![Utterance {
            speaker: Speaker::Manager,
            text: "hello, how can I help".into(),
            index: 0,
        }];
        for i in 0..customer_lines {
            utterances.push(Utterance {
                speaker: Speaker::Customer,
                text: format!("customer line {i}"),
                index: 0,
            });
        }
        Dialogue {
            dialogue_id: id.into(),
            customer_id: cust.into(),
            timestamp: None,
            utterances,
            offers: offers
                .iter()
                .map(|(p, o)| OfferRecord {
                    product_id: p.to_string(),
                    outcome: *o,
                })
                .collect(),
        }
    }

    #[test]
    fn drops_dialogue_without_customer_lines() {
        let c = Corpus::new(vec![dlg("1", "a", 0, &[("A", 1)]), dlg("2", "b", 2, &[("A", 0)])]).unwrap();
        let (out, rep) = clean_corpus(&c, 1);
        assert_eq!(rep.dropped_too_short, 1);
        assert_eq!(out.len(), 1);
        assert!(rep.is_conserved());
    }

    #[test]
    fn drops_contradictory_offers() {
        let c = Corpus::new(vec![dlg("1", "a", 2, &[("A", 1), ("A", 0)]), dlg("2", "b", 2, &[("A", 1)])]).unwrap();
        let (out, rep) = clean_corpus(&c, 1);
        assert_eq!(rep.dropped_contradictory, 1);
        assert_eq!(out.dialogues[0].dialogue_id, "2");
    }

    #[test]
    fn merges_agreeing_repeat_calls_into_latest() {
        let c = Corpus::new(vec![dlg("1", "a", 2, &[("A", 1)]), dlg("2", "a", 2, &[("A", 1)])]).unwrap();
        let (out, rep) = clean_corpus(&c, 1);
        assert_eq!(rep.merged_repeat_calls, 1);
        assert_eq!(out.len(), 1);
        assert_eq!(out.dialogues[0].dialogue_id, "2");
        assert_eq!(out.dialogues[0].offers.len(), 1);
        assert!(rep.is_conserved());
    }

    #[test]
    fn later_timestamp_beats_higher_id() {
        let mut early = dlg("9", "a", 2, &[("A", 1)]);
        early.timestamp = parse_timestamp("2021-01-01");
        let mut late = dlg("10", "a", 2, &[("A", 1)]);
        late.timestamp = parse_timestamp("2021-03-01T10:00:00Z");
        let mut older_higher = dlg("11", "a", 2, &[("A", 1)]);
        older_higher.timestamp = parse_timestamp("2020-06-01");
        let c = Corpus::new(vec![early, late, older_higher]).unwrap();
        let (out, rep) = clean_corpus(&c, 1);
        assert_eq!(rep.merged_repeat_calls, 2);
        assert_eq!(out.dialogues[0].dialogue_id, "10");
    }

    #[test]
    fn conflicting_repeats_lose_the_offer_but_keep_other_products() {
        let c = Corpus::new(vec![
            dlg("1", "a", 2, &[("A", 1), ("B", 0)]),
            dlg("2", "a", 2, &[("A", 0)]),
        ])
        .unwrap();
        let (out, rep) = clean_corpus(&c, 1);
        assert_eq!(rep.dropped_conflicting_repeats, 1);
        assert_eq!(out.len(), 1);
        assert_eq!(out.dialogues[0].offers, vec![OfferRecord { product_id: "B".into(), outcome: 0 }]);
        assert!(rep.is_conserved());
    }

    #[test]
    fn concatenation_knob_prepends_earlier_transcript() {
        let c = Corpus::new(vec![dlg("1", "a", 2, &[("A", 1)]), dlg("2", "a", 3, &[("A", 1)])]).unwrap();
        let (out, _) = clean_corpus_with(
            &c,
            CleaningOptions {
                min_customer_lines: 1,
                concatenate_repeats: true,
            },
        );
        let d = &out.dialogues[0];
        assert_eq!(d.utterances.len(), 3 + 4);
        assert!(d.utterances.iter().enumerate().all(|(i, u)| u.index == i));
        let (again, rep) = clean_corpus_with(
            &out,
            CleaningOptions {
                min_customer_lines: 1,
                concatenate_repeats: true,
            },
        );
        assert_eq!(again, out);
        assert_eq!(rep.output_size, rep.input_size);
    }

    #[test]
    fn stats_report_null_for_unoffered_products() {
        let c = Corpus::with_catalog(
            vec![dlg("1", "a", 2, &[("A", 1)]), dlg("2", "b", 2, &[("A", 0)])],
            vec!["A".into(), "B".into()],
        )
        .unwrap();
        let s = corpus_stats(&c);
        assert_eq!(s[0].n_dialogues, 2);
        assert_eq!(s[0].propensity_rate, Some(0.5));
        assert_eq!(s[1].propensity_rate, None);
        let table = StatsTable(&s).to_string();
        assert!(table.contains("B\t0\tnull"));
    }

    #[test]
    fn empty_corpus_stats_table_is_empty() {
        let c = Corpus {
            dialogues: vec![],
            product_catalog: vec![],
        };
        assert!(corpus_stats(&c).is_empty());
    }

    #[test]
    fn cleaning_report_kv_round_trip() {
        let r = CleaningReport {
            input_size: 10,
            dropped_too_short: 1,
            dropped_contradictory: 2,
            merged_repeat_calls: 3,
            dropped_conflicting_repeats: 0,
            output_size: 4,
        };
        assert_eq!(CleaningReport::from_kv(&r.to_kv()).unwrap(), r);
    }

    #[test]
    fn format_tags() {
        assert_eq!("jsonl".parse::<CorpusFormat>().unwrap(), CorpusFormat::JsonLines);
        assert!(matches!("xml".parse::<CorpusFormat>(), Err(Error::UnknownFormat(_))));
    }
}
