//! Text normalization shared by phrase mining, cluster statistics and
//! annotation. Every component that matches phrases against transcripts
//! goes through [`sentences`] so that matching is consistent.

use unicode_normalization::UnicodeNormalization;

/// Unicode NFC followed by lowercasing. Typographic apostrophes are folded
/// to `'` so that `don’t` and `don't` tokenize alike.
pub fn normalize(text: &str) -> String {
    text.nfc()
        .flat_map(char::to_lowercase)
        .map(|c| if c == '\u{2019}' || c == '\u{2018}' { '\'' } else { c })
        .collect()
}

fn is_sentence_end(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | ';' | '\n')
}

fn is_joiner(c: char) -> bool {
    c == '-' || c == '\''
}

/// Splits normalized text into sentences of tokens.
///
/// Tokens are maximal runs of alphanumeric characters, joined across a single
/// hyphen or apostrophe when both neighbours are alphanumeric. All other
/// punctuation separates tokens; `.`, `!`, `?` and `;` also end the sentence.
pub fn sentences(text: &str) -> Vec<Vec<String>> {
    let norm = normalize(text);
    let chars: Vec<char> = norm.chars().collect();
    let mut out = Vec::new();
    let mut sentence: Vec<String> = Vec::new();
    let mut token = String::new();

    for (i, &c) in chars.iter().enumerate() {
        if c.is_alphanumeric() {
            token.push(c);
            continue;
        }
        if is_joiner(c)
            && !token.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            token.push(c);
            continue;
        }
        if !token.is_empty() {
            sentence.push(std::mem::take(&mut token));
        }
        if is_sentence_end(c) && !sentence.is_empty() {
            out.push(std::mem::take(&mut sentence));
        }
    }
    if !token.is_empty() {
        sentence.push(token);
    }
    if !sentence.is_empty() {
        out.push(sentence);
    }
    out
}

/// All tokens of `text`, ignoring sentence boundaries.
pub fn tokens(text: &str) -> Vec<String> {
    sentences(text).into_iter().flatten().collect()
}

/// Canonical phrase text for a token sequence.
pub fn phrase_key<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut key = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            key.push(' ');
        }
        key.push_str(t.as_ref());
    }
    key
}

/// Normalizes a phrase given as free text into its canonical key.
pub fn normalize_phrase(text: &str) -> String {
    phrase_key(&tokens(text))
}
