//! Swappable word lists used by the heuristics: stop phrases, past tense,
//! sentiment and negation cues. The shipped defaults are English.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "again", "all", "also", "am", "an", "and", "any", "are", "as", "at",
    "be", "been", "before", "being", "both", "but", "by", "can", "could", "did", "do", "does",
    "doing", "down", "each", "few", "for", "from", "further", "had", "has", "have", "having",
    "he", "her", "here", "hers", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its",
    "itself", "just", "let", "me", "more", "most", "my", "myself", "now", "of", "off", "ok",
    "okay", "on", "once", "only", "or", "other", "our", "ours", "out", "over", "own", "same",
    "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them",
    "then", "there", "these", "they", "this", "those", "through", "to", "too", "under", "until",
    "up", "very", "was", "we", "well", "were", "what", "when", "where", "which", "while", "who",
    "whom", "why", "will", "with", "would", "yes", "you", "your", "yours",
];

const IRREGULAR_PAST: &[&str] = &[
    "was", "were", "had", "did", "went", "got", "made", "said", "took", "came", "saw", "knew",
    "thought", "told", "became", "left", "felt", "brought", "began", "kept", "held", "wrote",
    "stood", "heard", "meant", "met", "ran", "paid", "sat", "spoke", "lay", "led", "read",
    "grew", "lost", "fell", "sent", "built", "understood", "spent", "bought", "sold", "chose",
    "found", "gave", "won", "forgot", "drove", "ate", "broke", "caught", "taught",
];

const POLARITY: &[&str] = &[
    "good", "great", "excellent", "happy", "glad", "love", "like", "nice", "perfect", "fine",
    "satisfied", "convenient", "helpful", "wonderful", "best", "thanks", "thank", "bad",
    "terrible", "awful", "hate", "unhappy", "angry", "problem", "problems", "difficult",
    "expensive", "worse", "worst", "poor", "disappointed", "annoying", "wrong", "complaint",
    "unfortunately", "sadly",
];

const NEGATION_CUES: &[&str] = &["not", "no", "never", "n't", "none", "nobody", "nothing", "neither", "nor", "without"];

fn owned(words: &[&str]) -> HashSet<String> {
    words.iter().map(|w| w.to_string()).collect()
}

/// Detects past tense by suffix or by membership in an irregular-verb list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PastTenseLexicon {
    pub suffixes: Vec<String>,
    pub words: HashSet<String>,
    /// Tokens shorter than this never match by suffix ("red", "bed").
    pub min_suffix_token_len: usize,
}

impl Default for PastTenseLexicon {
    fn default() -> Self {
        Self {
            suffixes: vec!["ed".into()],
            words: owned(IRREGULAR_PAST),
            min_suffix_token_len: 5,
        }
    }
}

impl PastTenseLexicon {
    pub fn is_past(&self, token: &str) -> bool {
        if self.words.contains(token) {
            return true;
        }
        token.chars().count() >= self.min_suffix_token_len
            && self.suffixes.iter().any(|s| token.ends_with(s.as_str()))
    }

    pub fn sentence_is_past<S: AsRef<str>>(&self, tokens: &[S]) -> bool {
        tokens.iter().any(|t| self.is_past(t.as_ref()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SentimentLexicon {
    pub words: HashSet<String>,
}

impl Default for SentimentLexicon {
    fn default() -> Self {
        Self {
            words: owned(POLARITY),
        }
    }
}

impl SentimentLexicon {
    pub fn sentence_has_sentiment<S: AsRef<str>>(&self, tokens: &[S]) -> bool {
        tokens.iter().any(|t| self.words.contains(t.as_ref()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StopWords {
    pub words: HashSet<String>,
}

impl Default for StopWords {
    fn default() -> Self {
        Self {
            words: owned(STOPWORDS),
        }
    }
}

impl StopWords {
    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(token)
    }

    /// True when every token of the phrase is a stopword.
    pub fn is_stop_phrase<S: AsRef<str>>(&self, tokens: &[S]) -> bool {
        !tokens.is_empty() && tokens.iter().all(|t| self.contains(t.as_ref()))
    }
}

/// Negation cue list. A cue starting with `'` (e.g. `n't`) matches as a
/// token suffix so that `don't` and `isn't` are cues.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegationCues {
    pub cues: Vec<String>,
}

impl Default for NegationCues {
    fn default() -> Self {
        Self {
            cues: NEGATION_CUES.iter().map(|c| c.to_string()).collect(),
        }
    }
}

impl NegationCues {
    pub fn is_cue(&self, token: &str) -> bool {
        self.cues.iter().any(|cue| {
            if let Some(stripped) = cue.strip_prefix('n').filter(|s| s.starts_with('\'')) {
                token == cue || (token.len() > cue.len() && token.ends_with(&format!("n{stripped}")))
            } else {
                token == cue
            }
        })
    }
}
