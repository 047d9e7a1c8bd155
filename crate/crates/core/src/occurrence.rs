//! Locating known phrases inside customer turns.

use std::collections::HashMap;

use crate::corpus::Dialogue;
use crate::text;

/// Where a phrase occurs: utterance, sentence within it, token offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occurrence {
    pub phrase: usize,
    pub utterance: usize,
    pub sentence: usize,
    pub start: usize,
}

/// Exact token-sequence matcher over a fixed phrase list.
#[derive(Debug, Clone)]
pub struct PhraseIndex {
    ids: HashMap<String, Vec<usize>>,
    max_len: usize,
}

impl PhraseIndex {
    /// Phrases are normalized with the shared tokenizer; duplicates map to
    /// every id that carries them.
    pub fn new<S: AsRef<str>>(phrases: &[S]) -> Self {
        let mut ids: HashMap<String, Vec<usize>> = HashMap::new();
        let mut max_len = 0;
        for (i, p) in phrases.iter().enumerate() {
            let toks = text::tokens(p.as_ref());
            if toks.is_empty() {
                continue;
            }
            max_len = max_len.max(toks.len());
            ids.entry(text::phrase_key(&toks)).or_default().push(i);
        }
        Self { ids, max_len }
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Matches inside one tokenized sentence as `(phrase id, start)`.
    pub fn scan_sentence<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        if self.ids.is_empty() {
            return out;
        }
        let mut key = String::new();
        for start in 0..tokens.len() {
            key.clear();
            for len in 1..=self.max_len.min(tokens.len() - start) {
                if len > 1 {
                    key.push(' ');
                }
                key.push_str(tokens[start + len - 1].as_ref());
                if let Some(ids) = self.ids.get(&key) {
                    out.extend(ids.iter().map(|&id| (id, start)));
                }
            }
        }
        out
    }

    /// All matches in the customer turns of a dialogue, together with the
    /// tokenized sentences keyed by `(utterance, sentence)` order.
    pub fn scan_dialogue(&self, d: &Dialogue) -> (Vec<Occurrence>, Vec<((usize, usize), Vec<String>)>) {
        let mut occ = Vec::new();
        let mut sents = Vec::new();
        for u in d.customer_utterances() {
            for (si, s) in text::sentences(&u.text).into_iter().enumerate() {
                for (phrase, start) in self.scan_sentence(&s) {
                    occ.push(Occurrence {
                        phrase,
                        utterance: u.index,
                        sentence: si,
                        start,
                    });
                }
                sents.push(((u.index, si), s));
            }
        }
        (occ, sents)
    }
}
