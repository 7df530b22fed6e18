//! Deterministic offline backends.
//!
//! These stand in for hosted models so the full pipeline runs hermetically.
//! The embedding construction is a published contract (tests reimplement it
//! independently): identical strings embed to bitwise-identical vectors on
//! every platform.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{normalize_keyword, EmbeddingVector, KeywordList, ProviderConfig};

/// Offline provider bundle. Stateless; every call is a pure function of its
/// arguments and the configured dimension.
#[derive(Debug)]
pub struct OfflineProvider {
    cfg: ProviderConfig,
}

impl OfflineProvider {
    pub fn new(cfg: ProviderConfig) -> Self {
        OfflineProvider { cfg }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    /// Hash-projection embedding.
    ///
    /// Contract (any reimplementation must match bit-for-bit):
    /// 1. Take the character trigrams of the text, one per sliding window of
    ///    3 chars; texts shorter than 3 chars contribute the whole text as a
    ///    single gram.
    /// 2. For each gram occurrence, derive a direction in R^D: seed a
    ///    ChaCha8 stream with the first 8 bytes (little-endian u64) of
    ///    SHA-256 of the gram's UTF-8 bytes, then draw D components, each
    ///    `(next_u64() >> 11) as f64 / 2^53 * 2 - 1` (uniform in [-1, 1)).
    /// 3. Sum the directions over all gram occurrences and L2-normalize.
    pub fn embed(&self, text: &str) -> EmbeddingVector {
        let dim = self.cfg.embedding_dim;
        let chars: Vec<char> = text.chars().collect();
        let mut acc = vec![0.0f64; dim];
        let mut add_gram = |gram: &str| {
            let mut rng = gram_rng(gram);
            for slot in acc.iter_mut() {
                *slot += unit_interval(rng.next_u64());
            }
        };
        if chars.len() < 3 {
            add_gram(text);
        } else {
            for w in chars.windows(3) {
                let gram: String = w.iter().collect();
                add_gram(&gram);
            }
        }
        let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            acc[0] = 1.0;
        } else {
            for v in acc.iter_mut() {
                *v /= norm;
            }
        }
        EmbeddingVector(acc)
    }

    /// RAKE-style chunk keywords: candidate phrases come from capitalized
    /// spans and stopword-delimited word runs, scored by word degree over
    /// the run segmentation with a bonus for capitalized spans. Every
    /// keyword is a verbatim substring of the chunk before normalization.
    pub fn chunk_keywords(&self, text: &str, n: usize) -> KeywordList {
        let tokens = tokenize(text);
        let runs = content_runs(text, &tokens);
        let word_scores = rake_word_scores(&runs);

        // Multi-word capitalized spans first: entity phrases must extract
        // identically from every chunk that mentions them, or keyword edges
        // never form. Single-word spans and plain content runs follow.
        let mut entity_tier: Vec<Candidate> = Vec::new();
        let mut run_tier: Vec<Candidate> = Vec::new();
        for span in capitalized_spans(text, &tokens) {
            let c = Candidate {
                score: phrase_score(&span.phrase, &word_scores) * 1.5,
                phrase: span.phrase,
                first_pos: span.first_pos,
            };
            if c.phrase.split_whitespace().count() > 1 {
                entity_tier.push(c);
            } else {
                run_tier.push(c);
            }
        }
        for run in runs {
            run_tier.push(Candidate {
                score: phrase_score(&run.phrase, &word_scores),
                phrase: run.phrase,
                first_pos: run.first_pos,
            });
        }
        let by_rank = |a: &Candidate, b: &Candidate| {
            b.score
                .total_cmp(&a.score)
                .then(a.first_pos.cmp(&b.first_pos))
                .then(a.phrase.cmp(&b.phrase))
        };
        entity_tier.sort_by(by_rank);
        run_tier.sort_by(by_rank);

        let mut picked: Vec<String> = Vec::new();
        let mut picked_norm: Vec<String> = Vec::new();
        for c in entity_tier.into_iter().chain(run_tier) {
            if picked.len() == n {
                break;
            }
            let norm = normalize_keyword(&c.phrase);
            if norm.is_empty() {
                continue;
            }
            // Overlapping variants of one phrase add nothing to edge matching.
            if picked_norm
                .iter()
                .any(|p| p.contains(&norm) || norm.contains(p.as_str()))
            {
                continue;
            }
            picked_norm.push(norm);
            picked.push(c.phrase);
        }
        KeywordList::from_raw(picked)
    }

    /// Question keywords: every capitalized span that is not a lone stopword,
    /// in order of appearance, unbounded count.
    pub fn question_keywords(&self, question: &str) -> KeywordList {
        let tokens = tokenize(question);
        let spans = capitalized_spans(question, &tokens);
        KeywordList::from_raw(spans.into_iter().map(|s| s.phrase))
    }

    /// Pick the context fragment sharing the most content tokens with the
    /// question. Empty context means no evidence: returns an empty string.
    pub fn answer_from_context(&self, question: &str, context: &str) -> String {
        if context.trim().is_empty() {
            return String::new();
        }
        let question_tokens = content_token_set(question);
        let mut best: Option<(usize, &str)> = None;
        for fragment in context
            .split(['.', '!', '?', '\n'])
            .map(str::trim)
            .filter(|f| !f.is_empty())
        {
            let overlap = content_token_set(fragment)
                .intersection(&question_tokens)
                .count();
            let better = match best {
                None => true,
                Some((b, _)) => overlap > b,
            };
            if better {
                best = Some((overlap, fragment));
            }
        }
        best.map(|(_, f)| f.to_string()).unwrap_or_default()
    }

    /// No-retrieval baseline: the offline model knows nothing, so it answers
    /// nothing. Deterministic by construction.
    pub fn answer_without_context(&self, _question: &str) -> String {
        String::new()
    }
}

fn gram_rng(gram: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(gram.as_bytes());
    let mut seed_bytes = [0u8; 8];
    seed_bytes.copy_from_slice(&digest[..8]);
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(seed_bytes))
}

fn unit_interval(bits: u64) -> f64 {
    ((bits >> 11) as f64) / (1u64 << 53) as f64 * 2.0 - 1.0
}

struct Candidate {
    phrase: String,
    score: f64,
    first_pos: usize,
}

#[derive(Debug)]
struct Token<'a> {
    /// Byte range of the core (punctuation trimmed at both ends).
    core_start: usize,
    core_end: usize,
    core: &'a str,
    has_leading_punct: bool,
    trailing: Trailing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Trailing {
    None,
    Comma,
    Other,
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut tokens = Vec::new();
    let bytes_len = text.len();
    let mut iter = text.char_indices().peekable();
    while let Some(&(start, _)) = iter.peek() {
        // Skip whitespace.
        let mut start = start;
        while let Some(&(i, c)) = iter.peek() {
            if c.is_whitespace() {
                iter.next();
            } else {
                start = i;
                break;
            }
        }
        let mut end = bytes_len;
        while let Some(&(i, c)) = iter.peek() {
            if c.is_whitespace() {
                end = i;
                break;
            }
            iter.next();
        }
        if iter.peek().is_none() && end == bytes_len {
            // Consumed to end of text.
        }
        if start >= end && iter.peek().is_none() {
            break;
        }
        let raw = &text[start..end];
        if raw.is_empty() {
            break;
        }
        let core_trim_start = raw
            .char_indices()
            .find(|(_, c)| c.is_alphanumeric())
            .map(|(i, _)| i);
        let Some(cs) = core_trim_start else {
            // Punctuation-only token.
            tokens.push(Token {
                core_start: start,
                core_end: start,
                core: "",
                has_leading_punct: true,
                trailing: Trailing::Other,
            });
            continue;
        };
        let ce = raw
            .char_indices()
            .rev()
            .find(|(_, c)| c.is_alphanumeric())
            .map(|(i, c)| i + c.len_utf8())
            .unwrap();
        let after = &raw[ce..];
        let trailing = if after.is_empty() {
            Trailing::None
        } else if after.starts_with(',') && after.len() == 1 {
            Trailing::Comma
        } else {
            Trailing::Other
        };
        tokens.push(Token {
            core_start: start + cs,
            core_end: start + ce,
            core: &raw[cs..ce],
            has_leading_punct: cs > 0,
            trailing,
        });
    }
    tokens
}

fn is_capitalized(core: &str) -> bool {
    core.chars().next().is_some_and(|c| c.is_uppercase())
}

fn is_ordinal(core: &str) -> bool {
    core.chars().next().is_some_and(|c| c.is_ascii_digit())
        && core.chars().any(|c| c.is_alphabetic())
}

fn is_pure_number(core: &str) -> bool {
    !core.is_empty() && core.chars().all(|c| c.is_ascii_digit())
}

const CONNECTIVES: &[&str] = &["of", "the", "de", "la", "von", "van", "der", "di", "du"];

fn is_connective(core: &str) -> bool {
    CONNECTIVES.contains(&core.to_lowercase().as_str())
}

fn is_stopword(core: &str) -> bool {
    STOPWORDS.contains(&core.to_lowercase().as_str())
}

struct Span {
    phrase: String,
    first_pos: usize,
}

/// Maximal capitalized spans: runs of capitalized words, ordinals, and
/// internal connectives, with a comma kept inside the span only when it is
/// followed by an ordinal continuation ("Cecil, 6th Earl"). The returned
/// phrase is the verbatim text slice from the first to the last core.
fn capitalized_spans(text: &str, tokens: &[Token<'_>]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        if !is_capitalized(t.core) || is_stopword(t.core) {
            i += 1;
            continue;
        }
        let start_byte = t.core_start;
        let mut last = i;
        let mut j = i;
        loop {
            let cur = &tokens[j];
            let can_continue = match cur.trailing {
                Trailing::None => true,
                // "Cecil," continues only into ", 6th Earl"-shaped tails.
                Trailing::Comma => {
                    j + 2 < tokens.len()
                        && is_ordinal(tokens[j + 1].core)
                        && !tokens[j + 1].has_leading_punct
                        && is_capitalized(tokens[j + 2].core)
                }
                Trailing::Other => false,
            };
            if !can_continue || j + 1 >= tokens.len() {
                break;
            }
            let next = &tokens[j + 1];
            if next.has_leading_punct || next.core.is_empty() {
                break;
            }
            let next_ok = if is_capitalized(next.core) || is_ordinal(next.core) {
                true
            } else if is_connective(next.core) && next.trailing == Trailing::None {
                // A connective must be followed by more span.
                tokens
                    .get(j + 2)
                    .is_some_and(|t2| !t2.has_leading_punct && is_capitalized(t2.core))
            } else {
                false
            };
            if !next_ok {
                break;
            }
            j += 1;
            if is_capitalized(next.core) || is_ordinal(next.core) {
                last = j;
            }
        }
        let phrase = text[start_byte..tokens[last].core_end].to_string();
        let single = last == i;
        let keep = if single {
            t.core.chars().count() >= 2 && !is_stopword(t.core)
        } else {
            true
        };
        if keep {
            spans.push(Span {
                phrase,
                first_pos: i,
            });
        }
        i = last + 1;
    }
    spans
}

/// Stopword-delimited content runs (the RAKE segmentation): maximal token
/// sequences free of stopwords, pure numbers, and punctuation breaks.
fn content_runs(text: &str, tokens: &[Token<'_>]) -> Vec<Span> {
    let mut runs = Vec::new();
    let mut start: Option<usize> = None;
    let flush = |s: Option<usize>, end: usize, runs: &mut Vec<Span>| {
        if let Some(si) = s {
            if end > si || (end == si && !tokens[si].core.is_empty()) {
                let phrase = text[tokens[si].core_start..tokens[end].core_end].to_string();
                runs.push(Span {
                    phrase,
                    first_pos: si,
                });
            }
        }
    };
    for (i, t) in tokens.iter().enumerate() {
        let breaks_before = t.has_leading_punct;
        let is_content = !t.core.is_empty() && !is_stopword(t.core) && !is_pure_number(t.core);
        if breaks_before {
            if let Some(si) = start.take() {
                flush(Some(si), i - 1, &mut runs);
            }
        }
        if is_content {
            if start.is_none() {
                start = Some(i);
            }
            if t.trailing != Trailing::None {
                flush(start.take(), i, &mut runs);
            }
        } else if let Some(si) = start.take() {
            flush(Some(si), i - 1, &mut runs);
        }
    }
    if let Some(si) = start {
        flush(Some(si), tokens.len() - 1, &mut runs);
    }
    runs
}

/// Classic RAKE word scores over the run segmentation:
/// score(w) = degree(w) / freq(w), degree summing run lengths.
fn rake_word_scores(runs: &[Span]) -> std::collections::BTreeMap<String, f64> {
    let mut freq: std::collections::BTreeMap<String, f64> = Default::default();
    let mut degree: std::collections::BTreeMap<String, f64> = Default::default();
    for run in runs {
        let words: Vec<String> = run
            .phrase
            .split_whitespace()
            .map(normalize_keyword)
            .filter(|w| !w.is_empty())
            .collect();
        let len = words.len() as f64;
        for w in words {
            *freq.entry(w.clone()).or_default() += 1.0;
            *degree.entry(w).or_default() += len;
        }
    }
    freq.into_iter()
        .map(|(w, f)| {
            let d = degree.get(&w).copied().unwrap_or(f);
            (w, d / f)
        })
        .collect()
}

fn phrase_score(phrase: &str, scores: &std::collections::BTreeMap<String, f64>) -> f64 {
    phrase
        .split_whitespace()
        .map(normalize_keyword)
        .filter(|w| !w.is_empty() && !is_stopword(w))
        .map(|w| scores.get(&w).copied().unwrap_or(1.0))
        .sum()
}

fn content_token_set(text: &str) -> std::collections::BTreeSet<String> {
    text.split_whitespace()
        .map(normalize_keyword)
        .filter(|w| !w.is_empty() && !is_stopword(w))
        .collect()
}

const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any",
    "are", "as", "at", "be", "been", "being", "below", "between", "both", "but", "by", "can",
    "cannot", "could", "did", "do", "does", "doing", "done", "down", "during", "each", "else",
    "few", "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just", "may",
    "me", "might", "more", "most", "must", "my", "no", "nor", "not", "now", "of", "off", "on",
    "once", "only", "or", "other", "our", "ours", "out", "over", "own", "same", "shall", "she",
    "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them", "then",
    "there", "these", "they", "this", "those", "through", "to", "too", "under", "until", "up",
    "upon", "us", "very", "was", "we", "were", "what", "when", "where", "which", "while", "who",
    "whom", "whose", "why", "will", "with", "would", "you", "your", "yours",
];
