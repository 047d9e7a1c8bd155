//! Synthetic dialogue corpora with planted contextual variables.
//!
//! Variable `v` (0-based, so rank `v + 1`) is mentioned in a dialogue with
//! probability `top_activation · (v + 1)^(−zipf_exponent)`. A mention is
//! negated ("not <template>") with probability `negation_rate`; only
//! non-negated mentions activate the variable. Offer outcomes follow a
//! logistic model over the customer's latent trait plus the log-odds of the
//! active variables, with the intercept of each product calibrated to its
//! configured base rate. Customer embeddings are the latent trait along a
//! fixed direction plus Gaussian noise.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Dialogue, OfferRecord, Speaker, Utterance};
use crate::error::{Error, Result};
use crate::models::CustomerEmbeddings;
use crate::registry::{ContextualVariable, Polarity, Registry};
use crate::scalar::sigmoid;

const BLOCK: usize = 1024;
const CONSONANTS: &[u8] = b"bdfgklmprstvz";
const VOWELS: &[u8] = b"aeiou";
/// Tokens of filler between two planted mentions, wider than any negation
/// window in use.
const GAP: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthProduct {
    pub product_id: String,
    pub base_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_dialogues: usize,
    /// Defaults to one customer per dialogue. Fewer customers produce repeat
    /// calls that cleaning will merge.
    pub n_customers: Option<usize>,
    pub products: Vec<SynthProduct>,
    /// Probability that a dialogue carries an offer of each product.
    pub offer_prob: f64,
    pub max_offers: usize,
    pub n_planted_variables: usize,
    pub zipf_exponent: f64,
    /// Mention probability of the most frequent variable.
    pub top_activation: f64,
    /// Explicit `[variable][product]` log-odds. When absent, every variable
    /// gets an effect of random sign and magnitude in
    /// `[effect_min, effect_max]` on every product.
    pub effect_log_odds: Option<Vec<Vec<f64>>>,
    pub effect_min: f64,
    pub effect_max: f64,
    /// Explicit templates per variable; generated pseudo-word phrases
    /// otherwise.
    pub templates: Option<Vec<Vec<String>>>,
    pub templates_per_variable: usize,
    pub template_words: (usize, usize),
    pub filler_vocabulary: usize,
    pub customer_turns: (usize, usize),
    pub words_per_turn: (usize, usize),
    pub negation_rate: f64,
    pub trait_coef: f64,
    pub embed_dim: usize,
    pub embed_noise: f64,
    pub seed: u64,
}

/// Products and base rates of the bank corpus statistics.
pub fn table1_products() -> Vec<SynthProduct> {
    [
        ("business_banking_account", 0.2428),
        ("acquiring_service", 0.2471),
        ("salary_service", 0.4113),
        ("leasing", 0.1844),
    ]
    .into_iter()
    .map(|(p, r)| SynthProduct {
        product_id: p.to_string(),
        base_rate: r,
    })
    .collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_dialogues: 50_000,
            n_customers: None,
            products: table1_products(),
            offer_prob: 0.5,
            max_offers: 3,
            n_planted_variables: 200,
            zipf_exponent: 1.1,
            top_activation: 0.4,
            effect_log_odds: None,
            effect_min: 1.0,
            effect_max: 2.5,
            templates: None,
            templates_per_variable: 1,
            template_words: (2, 3),
            filler_vocabulary: 400,
            customer_turns: (3, 6),
            words_per_turn: (6, 12),
            negation_rate: 0.1,
            trait_coef: 1.0,
            embed_dim: 16,
            embed_noise: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn n_customers(&self) -> usize {
        self.n_customers.unwrap_or(self.n_dialogues)
    }

    pub fn activation(&self, v: usize) -> f64 {
        self.top_activation * ((v + 1) as f64).powf(-self.zipf_exponent)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_dialogues == 0 {
            return bad("n_dialogues must be positive".into());
        }
        if self.n_customers() == 0 {
            return bad("n_customers must be positive".into());
        }
        if self.products.is_empty() {
            return bad("at least one product is required".into());
        }
        let mut ids = HashSet::new();
        for p in &self.products {
            if !(p.base_rate > 0.0 && p.base_rate < 1.0) {
                return bad(format!("base rate of `{}` must lie in (0, 1)", p.product_id));
            }
            if !ids.insert(&p.product_id) {
                return bad(format!("duplicate product `{}`", p.product_id));
            }
        }
        if !(self.offer_prob > 0.0 && self.offer_prob <= 1.0) || self.max_offers == 0 {
            return bad("offer_prob must lie in (0, 1] and max_offers be positive".into());
        }
        if self.n_planted_variables == 0 {
            return bad("n_planted_variables must be at least 1".into());
        }
        if !(self.zipf_exponent >= 0.0) {
            return bad("zipf_exponent must be non-negative".into());
        }
        if !(self.top_activation > 0.0) || self.top_activation > 1.0 {
            return bad(format!("expected activation {} of the top variable is outside (0, 1]", self.top_activation));
        }
        if !(0.0..=1.0).contains(&self.negation_rate) {
            return bad("negation_rate must lie in [0, 1]".into());
        }
        if !(self.effect_min >= 0.0 && self.effect_max >= self.effect_min) {
            return bad("effect range must satisfy 0 <= effect_min <= effect_max".into());
        }
        if let Some(e) = &self.effect_log_odds {
            if e.len() != self.n_planted_variables || e.iter().any(|r| r.len() != self.products.len()) {
                return bad("effect_log_odds must be n_planted_variables × n_products".into());
            }
            if e.iter().flatten().any(|x| !x.is_finite()) {
                return bad("effect_log_odds must be finite".into());
            }
        }
        if let Some(t) = &self.templates {
            if t.len() != self.n_planted_variables || t.iter().any(|v| v.is_empty()) {
                return bad("templates must give at least one phrase per planted variable".into());
            }
        }
        let (a, b) = self.template_words;
        if a == 0 || b < a || b > 4 || self.templates_per_variable == 0 {
            return bad("template_words must satisfy 1 <= min <= max <= 4".into());
        }
        if self.customer_turns.0 == 0 || self.customer_turns.1 < self.customer_turns.0 {
            return bad("customer_turns must satisfy 1 <= min <= max".into());
        }
        if self.words_per_turn.0 < GAP || self.words_per_turn.1 < self.words_per_turn.0 {
            return bad(format!("words_per_turn must satisfy {GAP} <= min <= max"));
        }
        if self.filler_vocabulary == 0 || self.filler_vocabulary > syllable_count().pow(2) {
            return bad("filler_vocabulary out of range".into());
        }
        let needed = self.n_planted_variables * self.templates_per_variable * b;
        if self.templates.is_none() && needed > syllable_count().pow(3) {
            return bad("too many template words requested".into());
        }
        if self.embed_dim == 0 || !(self.embed_noise >= 0.0) {
            return bad("embed_dim must be positive and embed_noise non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedVariable {
    pub variable_id: usize,
    pub templates: Vec<String>,
    pub activation_prob: f64,
    /// Product → true log-odds of an active mention.
    pub log_odds: BTreeMap<String, f64>,
    /// Dialogues with at least one non-negated mention.
    pub realized_frequency: usize,
    /// Dialogues with at least one mention, negated or not.
    pub support: usize,
}

impl PlantedVariable {
    pub fn max_abs_effect(&self) -> f64 {
        self.log_odds.values().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueTruth {
    pub dialogue_id: String,
    pub active: Vec<usize>,
    pub negated: Vec<usize>,
    /// Offered product → true acceptance probability.
    pub propensity: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub intercepts: BTreeMap<String, f64>,
    pub variables: Vec<PlantedVariable>,
    pub dialogues: Vec<DialogueTruth>,
}

impl GroundTruth {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// One positive variable per planted variable, phrases = its templates.
    pub fn registry(&self) -> Registry {
        Registry {
            variables: self
                .variables
                .iter()
                .map(|v| ContextualVariable {
                    variable_id: v.variable_id,
                    source_cluster_id: v.variable_id,
                    phrases: v.templates.iter().cloned().collect(),
                    polarity: Polarity::Positive,
                    paired_variable: None,
                    significant_products: v.log_odds.iter().filter(|(_, &e)| e != 0.0).map(|(p, _)| p.clone()).collect(),
                })
                .collect(),
        }
    }
}

fn syllable_count() -> usize {
    CONSONANTS.len() * VOWELS.len()
}

fn syllable(i: usize) -> [u8; 2] {
    [CONSONANTS[i / VOWELS.len()], VOWELS[i % VOWELS.len()]]
}

/// The `i`-th word made of `n` syllables.
fn pseudo_word(mut i: usize, n: usize) -> String {
    let s = syllable_count();
    let mut bytes = Vec::with_capacity(2 * n);
    for _ in 0..n {
        bytes.extend_from_slice(&syllable(i % s));
        i /= s;
    }
    String::from_utf8(bytes).expect("ascii syllables")
}

/// Filler words have two syllables and template words three, so the two
/// vocabularies never share a token.
fn filler_vocabulary(n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let total = syllable_count().pow(2);
    let mut ids = sample(rng, total, n).into_vec();
    ids.sort_unstable();
    ids.into_iter().map(|i| pseudo_word(i, 2)).collect()
}

fn generate_templates(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<String>> {
    let (lo, hi) = cfg.template_words;
    let lengths: Vec<Vec<usize>> = (0..cfg.n_planted_variables)
        .map(|_| (0..cfg.templates_per_variable).map(|_| rng.random_range(lo..=hi)).collect())
        .collect();
    let n_words: usize = lengths.iter().flatten().sum();
    let mut words = sample(rng, syllable_count().pow(3), n_words).into_iter().map(|i| pseudo_word(i, 3));
    lengths
        .into_iter()
        .map(|ls| ls.into_iter().map(|l| (0..l).map(|_| words.next().expect("enough words")).collect::<Vec<_>>().join(" ")).collect())
        .collect()
}

fn generate_effects(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..cfg.n_planted_variables)
        .map(|_| {
            cfg.products
                .iter()
                .map(|_| {
                    let m = rng.random_range(cfg.effect_min..=cfg.effect_max);
                    if rng.random_bool(0.5) {
                        m
                    } else {
                        -m
                    }
                })
                .collect()
        })
        .collect()
}

struct Draft {
    dialogue: Dialogue,
    active: Vec<usize>,
    negated: Vec<usize>,
    /// Offered product index and logit without the intercept.
    offers: Vec<(usize, f64)>,
    uniforms: Vec<f64>,
}

struct World<'a> {
    cfg: &'a SynthConfig,
    filler: Vec<String>,
    templates: Vec<Vec<String>>,
    effects: Vec<Vec<f64>>,
    traits: Vec<f64>,
}

impl World<'_> {
    fn filler_words(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
        (0..n).map(|_| self.filler[rng.random_range(0..self.filler.len())].clone()).collect()
    }

    fn sentence_text(words: &[String]) -> String {
        let mut s = words.join(" ");
        s.push('.');
        s
    }

    fn draft(&self, idx: usize, rng: &mut ChaCha8Rng) -> Draft {
        let cfg = self.cfg;
        let customer = if cfg.n_customers() == cfg.n_dialogues {
            idx
        } else {
            rng.random_range(0..cfg.n_customers())
        };

        let mut mentions: Vec<(usize, bool)> = Vec::new();
        for v in 0..cfg.n_planted_variables {
            if rng.random_bool(cfg.activation(v)) {
                mentions.push((v, rng.random_bool(cfg.negation_rate)));
            }
        }

        let n_turns = rng.random_range(cfg.customer_turns.0..=cfg.customer_turns.1);
        let mut planted: Vec<Vec<String>> = vec![Vec::new(); n_turns];
        for &(v, neg) in &mentions {
            let t = &self.templates[v];
            let mut seg: Vec<String> = Vec::new();
            if neg {
                seg.push("not".into());
            }
            seg.extend(t[rng.random_range(0..t.len())].split(' ').map(str::to_string));
            planted[rng.random_range(0..n_turns)].push(seg.join(" "));
        }

        let mut utterances = Vec::with_capacity(2 * n_turns);
        for segs in planted {
            let m = self.filler_words(rng.random_range(cfg.words_per_turn.0..=cfg.words_per_turn.1), rng);
            utterances.push(Utterance {
                speaker: Speaker::Manager,
                text: Self::sentence_text(&m),
                index: 0,
            });
            let mut words = self.filler_words(rng.random_range(cfg.words_per_turn.0..=cfg.words_per_turn.1), rng);
            // each mention follows at least GAP filler tokens of its own
            for seg in segs {
                words.push(seg);
                words.extend(self.filler_words(GAP, rng));
            }
            utterances.push(Utterance {
                speaker: Speaker::Customer,
                text: Self::sentence_text(&words),
                index: 0,
            });
        }

        let active: BTreeSet<usize> = mentions.iter().filter(|m| !m.1).map(|m| m.0).collect();
        let negated: BTreeSet<usize> = mentions.iter().filter(|m| m.1).map(|m| m.0).collect();

        let mut offered: Vec<usize> = (0..cfg.products.len()).filter(|_| rng.random_bool(cfg.offer_prob)).collect();
        if offered.is_empty() {
            offered.push(rng.random_range(0..cfg.products.len()));
        }
        if offered.len() > cfg.max_offers {
            let keep = sample(rng, offered.len(), cfg.max_offers).into_vec();
            let mut kept: Vec<usize> = keep.into_iter().map(|i| offered[i]).collect();
            kept.sort_unstable();
            offered = kept;
        }
        let base = cfg.trait_coef * self.traits[customer];
        let offers: Vec<(usize, f64)> =
            offered.iter().map(|&p| (p, base + active.iter().map(|&v| self.effects[v][p]).sum::<f64>())).collect();
        let uniforms = offers.iter().map(|_| rng.random::<f64>()).collect();

        Draft {
            dialogue: Dialogue {
                dialogue_id: format!("d{idx:07}"),
                customer_id: format!("c{customer:07}"),
                timestamp: None,
                utterances,
                offers: Vec::new(),
            },
            active: active.into_iter().collect(),
            negated: negated.into_iter().collect(),
            offers,
            uniforms,
        }
    }
}

/// Intercept `a` with mean `sigmoid(a + logit)` equal to `rate`.
fn calibrate_intercept(logits: &[f64], rate: f64) -> f64 {
    if logits.is_empty() {
        return (rate / (1.0 - rate)).ln();
    }
    let mean = |a: f64| logits.iter().map(|&l| sigmoid(a + l)).sum::<f64>() / logits.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn block_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn generate(cfg: &SynthConfig) -> Result<(Corpus, CustomerEmbeddings, GroundTruth)> {
    cfg.validate()?;
    let mut rng = block_rng(cfg.seed, 0);
    let filler = filler_vocabulary(cfg.filler_vocabulary, &mut rng);
    let templates: Vec<Vec<String>> = match &cfg.templates {
        Some(t) => t.iter().map(|v| v.iter().map(|p| crate::text::normalize_phrase(p)).collect()).collect(),
        None => generate_templates(cfg, &mut rng),
    };
    let effects = match &cfg.effect_log_odds {
        Some(e) => e.clone(),
        None => generate_effects(cfg, &mut rng),
    };

    let n_customers = cfg.n_customers();
    let direction: Vec<f64> = {
        let raw: Vec<f64> = (0..cfg.embed_dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        raw.into_iter().map(|x| x / norm).collect()
    };
    let noise = Normal::new(0.0, cfg.embed_noise).expect("valid noise");
    let mut embeddings = CustomerEmbeddings::new(cfg.embed_dim);
    let mut traits = Vec::with_capacity(n_customers);
    let mut crng = block_rng(cfg.seed, 1);
    for c in 0..n_customers {
        let u: f64 = StandardNormal.sample(&mut crng);
        let v: Vec<f32> = direction.iter().map(|&w| (u * w + noise.sample(&mut crng)) as f32).collect();
        embeddings.insert(format!("c{c:07}"), v)?;
        traits.push(u);
    }

    let world = World {
        cfg,
        filler,
        templates,
        effects,
        traits,
    };
    let n_blocks = cfg.n_dialogues.div_ceil(BLOCK);
    let drafts: Vec<Draft> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = block_rng(cfg.seed, 2 + b as u64);
            let end = ((b + 1) * BLOCK).min(cfg.n_dialogues);
            (b * BLOCK..end).map(|i| world.draft(i, &mut rng)).collect::<Vec<_>>()
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();

    let intercepts: Vec<f64> = (0..cfg.products.len())
        .map(|p| {
            let logits: Vec<f64> = drafts.iter().flat_map(|d| d.offers.iter().filter(|o| o.0 == p).map(|o| o.1)).collect();
            calibrate_intercept(&logits, cfg.products[p].base_rate)
        })
        .collect();

    let mut support = vec![0usize; cfg.n_planted_variables];
    let mut realized = vec![0usize; cfg.n_planted_variables];
    let mut dialogues = Vec::with_capacity(drafts.len());
    let mut truths = Vec::with_capacity(drafts.len());
    for mut d in drafts {
        for &v in &d.active {
            realized[v] += 1;
        }
        let mentioned: BTreeSet<usize> = d.active.iter().chain(&d.negated).copied().collect();
        for v in mentioned {
            support[v] += 1;
        }
        let mut propensity = BTreeMap::new();
        for (&(p, logit), &u) in d.offers.iter().zip(&d.uniforms) {
            let prob = sigmoid(intercepts[p] + logit);
            propensity.insert(cfg.products[p].product_id.clone(), prob);
            d.dialogue.offers.push(OfferRecord {
                product_id: cfg.products[p].product_id.clone(),
                outcome: u8::from(u < prob),
            });
        }
        truths.push(DialogueTruth {
            dialogue_id: d.dialogue.dialogue_id.clone(),
            active: d.active,
            negated: d.negated,
            propensity,
        });
        dialogues.push(d.dialogue);
    }

    let catalog: Vec<String> = cfg.products.iter().map(|p| p.product_id.clone()).collect();
    let corpus = Corpus::with_catalog(dialogues, catalog.clone())?;
    let variables = (0..cfg.n_planted_variables)
        .map(|v| PlantedVariable {
            variable_id: v,
            templates: world.templates[v].clone(),
            activation_prob: cfg.activation(v),
            log_odds: catalog.iter().cloned().zip(world.effects[v].iter().copied()).collect(),
            realized_frequency: realized[v],
            support: support[v],
        })
        .collect();
    let truth = GroundTruth {
        seed: cfg.seed,
        intercepts: catalog.into_iter().zip(intercepts).collect(),
        variables,
        dialogues: truths,
    };
    Ok((corpus, embeddings, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    /// Share of positive registry variables whose phrases hit a template;
    /// `None` for an empty registry.
    pub precision: Option<f64>,
    /// Share of the considered planted variables that were recovered;
    /// `None` when none are considered.
    pub recall: Option<f64>,
    pub recovered: Vec<usize>,
    pub missed: Vec<usize>,
}

/// Recovery over every planted variable.
pub fn score_recovery(registry: &Registry, truth: &GroundTruth) -> Recovery {
    let all: Vec<usize> = (0..truth.variables.len()).collect();
    score_recovery_for(registry, truth, &all)
}

/// A planted variable counts as recovered when some registry variable's
/// phrase set contains one of its templates. Recall is measured over
/// `considered` only; precision over the whole registry.
pub fn score_recovery_for(registry: &Registry, truth: &GroundTruth, considered: &[usize]) -> Recovery {
    let phrases: HashSet<&str> = registry.variables.iter().flat_map(|v| v.phrases.iter().map(String::as_str)).collect();
    let hit = |v: &PlantedVariable| v.templates.iter().any(|t| phrases.contains(t.as_str()));
    let (mut recovered, mut missed) = (Vec::new(), Vec::new());
    for &i in considered {
        if hit(&truth.variables[i]) {
            recovered.push(i);
        } else {
            missed.push(i);
        }
    }
    let templates: HashSet<&str> = truth.variables.iter().flat_map(|v| v.templates.iter().map(String::as_str)).collect();
    let positives: Vec<&ContextualVariable> = registry.variables.iter().filter(|v| v.polarity == Polarity::Positive).collect();
    let precision = (!positives.is_empty()).then(|| {
        positives.iter().filter(|v| v.phrases.iter().any(|p| templates.contains(p.as_str()))).count() as f64 / positives.len() as f64
    });
    let recall = (!considered.is_empty()).then(|| recovered.len() as f64 / considered.len() as f64);
    Recovery {
        precision,
        recall,
        recovered,
        missed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::{annotate_corpus, NegationConfig};

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_dialogues: 3_000,
            n_planted_variables: 20,
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let (a, ea, ta) = generate(&small(3)).unwrap();
        let (b, eb, tb) = generate(&small(3)).unwrap();
        assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
        assert_eq!(ea.to_bytes(), eb.to_bytes());
        assert_eq!(ta, tb);
        let (c, _, _) = generate(&small(4)).unwrap();
        assert_ne!(a.to_jsonl().unwrap(), c.to_jsonl().unwrap());
    }

    #[test]
    fn annotation_of_templates_matches_truth() {
        let (c, _, truth) = generate(&small(1)).unwrap();
        let ann = annotate_corpus(&c, &truth.registry(), &NegationConfig::default());
        for ((id, vars), t) in ann.rows.iter().zip(&truth.dialogues) {
            assert_eq!(id, &t.dialogue_id);
            assert_eq!(vars, &t.active);
        }
    }

    #[test]
    fn rejects_infeasible_configs() {
        let mut cfg = small(0);
        cfg.top_activation = 1.5;
        assert!(generate(&cfg).is_err());
        let mut cfg = small(0);
        cfg.products[0].base_rate = 1.0;
        assert!(generate(&cfg).is_err());
        let mut cfg = small(0);
        cfg.n_planted_variables = 0;
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn recovery_edges() {
        let (_, _, truth) = generate(&small(2)).unwrap();
        let r = score_recovery(&truth.registry(), &truth);
        assert_eq!((r.precision, r.recall), (Some(1.0), Some(1.0)));
        let r = score_recovery(&Registry::default(), &truth);
        assert_eq!((r.precision, r.recall), (None, Some(0.0)));
    }
}
