//! HTTP backend.
//!
//! Wire shape (compatible with common hosted endpoints):
//!
//! - `POST {endpoint}/embeddings` with `{"model": ..., "input": ...}`;
//!   response either `{"embedding": [...]}` or
//!   `{"data": [{"embedding": [...]}]}`.
//! - `POST {endpoint}/completions` with `{"model": ..., "prompt": ...}`;
//!   response either `{"text": "..."}` or `{"choices": [{"text": "..."}]}`.
//!
//! When `api_key_env` names an environment variable, its value is sent as
//! `Authorization: Bearer <key>`. Calls retry with exponential backoff up to
//! `max_retries` extra attempts.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::templates;
use super::{EmbeddingVector, KeywordList, ProviderConfig, ProviderError};

#[derive(Debug)]
pub struct HttpProvider {
    agent: ureq::Agent,
    cfg: ProviderConfig,
    api_key: Option<String>,
}

const RETRY_BASE_DELAY: Duration = Duration::from_millis(50);

impl HttpProvider {
    pub fn new(cfg: ProviderConfig) -> Result<Self, ProviderError> {
        cfg.validate()?;
        let api_key = match &cfg.api_key_env {
            Some(env) => Some(std::env::var(env).map_err(|_| ProviderError::MissingApiKey {
                env: env.clone(),
            })?),
            None => None,
        };
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(true)
            .build();
        Ok(HttpProvider {
            agent: config.into(),
            cfg,
            api_key,
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.cfg.endpoint.trim_end_matches('/'), path)
    }

    fn post_json(&self, path: &str, body: &serde_json::Value) -> Result<String, ProviderError> {
        let url = self.url(path);
        let attempts = self.cfg.max_retries + 1;
        let mut last_err = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(RETRY_BASE_DELAY * 2u32.pow(attempt - 1));
            }
            let mut req = self.agent.post(&url);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => match resp.body_mut().read_to_string() {
                    Ok(text) => return Ok(text),
                    Err(e) => last_err = e.to_string(),
                },
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(ProviderError::Transport {
            attempts,
            message: last_err,
        })
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        let body = json!({ "model": self.cfg.model_name, "input": text });
        let raw = self.post_json("embeddings", &body)?;
        parse_embedding(&raw)
    }

    fn complete(&self, prompt: &str) -> Result<String, ProviderError> {
        let body = json!({ "model": self.cfg.model_name, "prompt": prompt });
        let raw = self.post_json("completions", &body)?;
        let text = parse_completion(&raw)?;
        let text = text.trim().to_string();
        if text.is_empty() {
            return Err(ProviderError::EmptyResponse);
        }
        Ok(text)
    }

    pub fn chunk_keywords(&self, text: &str, n: usize) -> Result<KeywordList, ProviderError> {
        let raw = self.complete(&templates::chunk_keywords_prompt(text, n))?;
        let items = parse_keyword_items(&raw)?;
        Ok(KeywordList::from_raw(items.into_iter().take(n)))
    }

    pub fn question_keywords(&self, question: &str) -> Result<KeywordList, ProviderError> {
        let raw = self.complete(&templates::question_keywords_prompt(question))?;
        let items = parse_keyword_items(&raw)?;
        Ok(KeywordList::from_raw(items))
    }

    pub fn answer(&self, question: &str, context: &str) -> Result<String, ProviderError> {
        self.complete(&templates::qa_prompt(question, context))
    }

    pub fn answer_no_retrieval(&self, question: &str) -> Result<String, ProviderError> {
        self.complete(&templates::no_retrieval_prompt(question))
    }
}

#[derive(Deserialize)]
struct EmbeddingItem {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct EmbeddingData {
    data: Vec<EmbeddingItem>,
}

fn parse_embedding(raw: &str) -> Result<EmbeddingVector, ProviderError> {
    if let Ok(item) = serde_json::from_str::<EmbeddingItem>(raw) {
        return finite_vector(item.embedding, raw);
    }
    if let Ok(data) = serde_json::from_str::<EmbeddingData>(raw) {
        if let Some(first) = data.data.into_iter().next() {
            return finite_vector(first.embedding, raw);
        }
    }
    Err(ProviderError::BadResponse {
        reason: "no embedding field".into(),
        raw: raw.to_string(),
    })
}

fn finite_vector(values: Vec<f64>, raw: &str) -> Result<EmbeddingVector, ProviderError> {
    let v = EmbeddingVector(values);
    if !v.is_finite() || v.dim() == 0 {
        return Err(ProviderError::BadResponse {
            reason: "embedding is empty or non-finite".into(),
            raw: raw.to_string(),
        });
    }
    Ok(v)
}

#[derive(Deserialize)]
struct TextItem {
    text: String,
}

#[derive(Deserialize)]
struct Choices {
    choices: Vec<TextItem>,
}

fn parse_completion(raw: &str) -> Result<String, ProviderError> {
    if let Ok(item) = serde_json::from_str::<TextItem>(raw) {
        return Ok(item.text);
    }
    if let Ok(c) = serde_json::from_str::<Choices>(raw) {
        if let Some(first) = c.choices.into_iter().next() {
            return Ok(first.text);
        }
    }
    Err(ProviderError::BadResponse {
        reason: "no completion text field".into(),
        raw: raw.to_string(),
    })
}

/// Parse a bracketed keyword list like `['a', 'b c']`. Anything without a
/// bracketed list is rejected, carrying the raw response for diagnosis.
pub(crate) fn parse_keyword_items(response: &str) -> Result<Vec<String>, ProviderError> {
    let open = response.find('[');
    let close = response.rfind(']');
    let (Some(open), Some(close)) = (open, close) else {
        return Err(ProviderError::BadResponse {
            reason: "expected a bracketed keyword list".into(),
            raw: response.to_string(),
        });
    };
    if close <= open {
        return Err(ProviderError::BadResponse {
            reason: "mismatched brackets in keyword list".into(),
            raw: response.to_string(),
        });
    }
    let inner = &response[open + 1..close];
    let mut items = Vec::new();
    let mut current = String::new();
    let mut quote: Option<char> = None;
    for ch in inner.chars() {
        match (quote, ch) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), c) => current.push(c),
            (None, '\'' | '"') => quote = Some(ch),
            (None, ',') => {
                items.push(std::mem::take(&mut current));
                continue;
            }
            (None, c) => current.push(c),
        }
    }
    items.push(current);
    let items: Vec<String> = items
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_quoted_list_with_internal_commas() {
        let items =
            parse_keyword_items("['John Cecil, 6th Earl of Exeter', 'Lord Burleigh']").unwrap();
        assert_eq!(items, vec!["John Cecil, 6th Earl of Exeter", "Lord Burleigh"]);
    }

    #[test]
    fn parses_unquoted_list() {
        let items = parse_keyword_items("[Philipsburg, Malakoff]").unwrap();
        assert_eq!(items, vec!["Philipsburg", "Malakoff"]);
    }

    #[test]
    fn rejects_bracketless_response_with_raw_payload() {
        let err = parse_keyword_items("I could not find any keywords.").unwrap_err();
        match err {
            ProviderError::BadResponse { raw, .. } => {
                assert!(raw.contains("could not find"));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn parses_openai_shaped_bodies() {
        let v = parse_embedding(r#"{"data":[{"embedding":[0.1,0.2]}]}"#).unwrap();
        assert_eq!(v.values(), &[0.1, 0.2]);
        let v = parse_embedding(r#"{"embedding":[1.0]}"#).unwrap();
        assert_eq!(v.values(), &[1.0]);
        let t = parse_completion(r#"{"choices":[{"text":"Paris"}]}"#).unwrap();
        assert_eq!(t, "Paris");
        let t = parse_completion(r#"{"text":"Paris"}"#).unwrap();
        assert_eq!(t, "Paris");
    }
}
