//! Generator clients that turn prompt templates into error, paraphrase and
//! quality records.

use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::prompts;
use super::{Case, CorruptionError, ErrorLevel, ErrorRecord, ErrorType, ParaphraseRecord, QualityAnnotation};
use crate::note::{normalize_whitespace, to_annotated_json, StructuredNote};

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("generator unreachable: {0}")]
    Unavailable(String),
    #[error("generator returned an invalid response: {0}")]
    InvalidResponse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GeneratorTask {
    Errors(ErrorType),
    Paraphrases,
    Quality,
}

#[derive(Debug, Clone)]
pub struct GeneratorRequest<'a> {
    pub task: GeneratorTask,
    pub prompt: String,
    pub dialogue: &'a str,
    pub note: &'a StructuredNote,
}

impl<'a> GeneratorRequest<'a> {
    pub fn new(task: GeneratorTask, dialogue: &'a str, note: &'a StructuredNote) -> Self {
        let problems = problems_json(note);
        let prompt = match task {
            GeneratorTask::Errors(t) => prompts::error_prompt(t, dialogue, &problems),
            GeneratorTask::Paraphrases => prompts::paraphrase_prompt(dialogue, &problems),
            GeneratorTask::Quality => prompts::quality_prompt(dialogue, &problems),
        };
        GeneratorRequest {
            task,
            prompt,
            dialogue,
            note,
        }
    }
}

/// Anything that answers a filled prompt with the document its output
/// schema asks for.
pub trait GeneratorClient {
    fn generate(&self, request: &GeneratorRequest<'_>) -> Result<Value, GeneratorError>;
}

fn problems_json(note: &StructuredNote) -> String {
    let doc = to_annotated_json(note);
    serde_json::to_string_pretty(&serde_json::json!({ "Problems": doc["Problems"] }))
        .expect("serializable")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpGeneratorConfig {
    /// Chat-completions style endpoint.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer credential.
    pub credential_env: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub temperature: f64,
}

impl Default for HttpGeneratorConfig {
    fn default() -> Self {
        HttpGeneratorConfig {
            endpoint: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "generator".into(),
            credential_env: "PRM_GENERATOR_API_KEY".into(),
            timeout_secs: 120,
            retries: 2,
            temperature: 0.7,
        }
    }
}

/// Remote generator speaking the chat-completions wire format.
pub struct HttpGenerator {
    config: HttpGeneratorConfig,
    credential: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpGenerator {
    /// Reads the credential from the configured environment variable. A
    /// missing variable is allowed for local endpoints that need no auth.
    pub fn new(config: HttpGeneratorConfig) -> Result<Self, GeneratorError> {
        let credential = std::env::var(&config.credential_env).ok();
        Self::with_credential(config, credential)
    }

    pub fn with_credential(config: HttpGeneratorConfig, credential: Option<String>) -> Result<Self, GeneratorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| GeneratorError::Unavailable(e.to_string()))?;
        Ok(HttpGenerator {
            config,
            credential,
            client,
        })
    }

    fn attempt(&self, prompt: &str) -> Result<Value, GeneratorError> {
        let body = serde_json::json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{ "role": "user", "content": prompt }],
        });
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(c) = &self.credential {
            req = req.bearer_auth(c);
        }
        let resp = req.send().map_err(|e| GeneratorError::Unavailable(e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() || status == reqwest::StatusCode::TOO_MANY_REQUESTS {
            return Err(GeneratorError::Unavailable(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(GeneratorError::InvalidResponse(format!("status {status}")));
        }
        let v: Value = resp.json().map_err(|e| GeneratorError::InvalidResponse(e.to_string()))?;
        extract_document(&v)
    }
}

impl GeneratorClient for HttpGenerator {
    fn generate(&self, request: &GeneratorRequest<'_>) -> Result<Value, GeneratorError> {
        let mut last = GeneratorError::Unavailable("no attempt made".into());
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(200 * u64::from(attempt)));
            }
            match self.attempt(&request.prompt) {
                Ok(v) => return Ok(v),
                Err(e @ GeneratorError::Unavailable(_)) => last = e,
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }
}

/// Pulls the JSON document out of a chat-completions response. Plain JSON
/// bodies are returned as they are.
pub fn extract_document(body: &Value) -> Result<Value, GeneratorError> {
    let text = body
        .pointer("/choices/0/message/content")
        .or_else(|| body.get("content"))
        .or_else(|| body.get("text"))
        .and_then(Value::as_str);
    match text {
        Some(t) => parse_fenced_json(t),
        None => Ok(body.clone()),
    }
}

/// Parses JSON that may be wrapped in a markdown code fence.
pub fn parse_fenced_json(text: &str) -> Result<Value, GeneratorError> {
    let mut t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let rest = rest.strip_prefix("json").unwrap_or(rest);
        t = rest.trim_end().strip_suffix("```").unwrap_or(rest).trim();
    }
    serde_json::from_str(t).map_err(|e| GeneratorError::InvalidResponse(e.to_string()))
}

fn target_content<'n>(note: &'n StructuredNote, problem_no: u32, step_no: Option<u32>) -> Option<&'n str> {
    let p = note.problem(problem_no)?;
    match step_no {
        None => Some(&p.description),
        Some(s) => p.steps.iter().find(|x| x.number == s).map(|x| x.content.as_str()),
    }
}

fn same_text(a: &str, b: &str) -> bool {
    normalize_whitespace(a) == normalize_whitespace(b)
}

fn items<'v>(doc: &'v Value, key: &str) -> Result<&'v Vec<Value>, CorruptionError> {
    doc.get(key)
        .and_then(Value::as_array)
        .ok_or_else(|| CorruptionError::InvalidResponse(format!("response lacks an {key:?} array")))
}

/// Asks the generator for errors of one type and keeps the records whose
/// target exists and whose original content matches the note.
pub fn build_error_pool(
    dialogue: &str,
    note: &StructuredNote,
    error_type: ErrorType,
    generator: &dyn GeneratorClient,
) -> Result<Vec<ErrorRecord>, CorruptionError> {
    if note.problems.is_empty() || note.step_count() == 0 {
        return Err(CorruptionError::NoTargetableContent);
    }
    let req = GeneratorRequest::new(GeneratorTask::Errors(error_type), dialogue, note);
    let doc = generator.generate(&req)?;
    let mut seen = HashSet::new();
    let mut pool = Vec::new();
    for item in items(&doc, "Errors")? {
        let Ok(mut rec) = serde_json::from_value::<ErrorRecord>(item.clone()) else {
            continue;
        };
        rec.error_type = error_type;
        if rec.step_no.is_none() {
            rec.error_level = ErrorLevel::Problem;
        }
        let Some(original) = target_content(note, rec.problem_no, rec.step_no) else {
            continue;
        };
        if !same_text(original, &rec.original_content) || !rec.is_well_formed() {
            continue;
        }
        rec.original_content = original.to_string();
        rec.new_content = normalize_whitespace(&rec.new_content);
        if seen.insert((rec.problem_no, rec.step_no, rec.new_content.clone())) {
            pool.push(rec);
        }
    }
    if pool.is_empty() {
        return Err(CorruptionError::InvalidResponse("no usable error records".into()));
    }
    Ok(pool)
}

/// Asks the generator for step paraphrases and keeps the resolvable ones.
pub fn build_paraphrase_pool(
    dialogue: &str,
    note: &StructuredNote,
    generator: &dyn GeneratorClient,
) -> Result<Vec<ParaphraseRecord>, CorruptionError> {
    if note.step_count() == 0 {
        return Err(CorruptionError::NoTargetableContent);
    }
    let req = GeneratorRequest::new(GeneratorTask::Paraphrases, dialogue, note);
    let doc = generator.generate(&req)?;
    let mut seen = HashSet::new();
    let mut pool = Vec::new();
    for item in items(&doc, "Paraphrases")? {
        let Ok(mut rec) = serde_json::from_value::<ParaphraseRecord>(item.clone()) else {
            continue;
        };
        let Some(original) = target_content(note, rec.problem_no, Some(rec.step_no)) else {
            continue;
        };
        rec.new_content = normalize_whitespace(&rec.new_content);
        if !same_text(original, &rec.original_content) || same_text(original, &rec.new_content) || rec.new_content.is_empty() {
            continue;
        }
        rec.original_content = original.to_string();
        if seen.insert((rec.problem_no, rec.step_no, rec.new_content.clone())) {
            pool.push(rec);
        }
    }
    Ok(pool)
}

pub fn annotate_quality(
    dialogue: &str,
    note: &StructuredNote,
    generator: &dyn GeneratorClient,
) -> Result<QualityAnnotation, CorruptionError> {
    let req = GeneratorRequest::new(GeneratorTask::Quality, dialogue, note);
    let doc = generator.generate(&req)?;
    serde_json::from_value(doc).map_err(|e| CorruptionError::InvalidResponse(e.to_string()))
}

/// Queries the generator for every error type, paraphrases and a quality
/// rating, and assembles a case. Any generator failure aborts the case.
pub fn build_case(
    case_id: &str,
    dialogue: &str,
    gold: &StructuredNote,
    generator: &dyn GeneratorClient,
) -> Result<Case, CorruptionError> {
    let mut error_pool = Vec::new();
    for t in ErrorType::ALL {
        error_pool.extend(build_error_pool(dialogue, gold, t, generator)?);
    }
    Ok(Case {
        case_id: case_id.to_string(),
        dialogue: dialogue.to_string(),
        gold: gold.clone(),
        error_pool,
        paraphrase_pool: build_paraphrase_pool(dialogue, gold, generator)?,
        quality: Some(annotate_quality(dialogue, gold, generator)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    struct Canned(Value);

    impl GeneratorClient for Canned {
        fn generate(&self, _: &GeneratorRequest<'_>) -> Result<Value, GeneratorError> {
            Ok(self.0.clone())
        }
    }

    fn note() -> StructuredNote {
        StructuredNote::from_parts([
            ("left knee pain", vec!["Start ibuprofen 400 mg daily.".to_string()]),
            ("right hip stiffness", vec!["Order x-ray of the right hip.".to_string()]),
        ])
    }

    fn record(p: u32, s: Option<u32>, original: &str, new: &str) -> Value {
        serde_json::json!({
            "Error_type": "Factual Inaccuracy",
            "Problem_no": p.to_string(),
            "Step_no": s.map(|s| s.to_string()),
            "Error_level": if s.is_some() { "Step" } else { "Problem" },
            "Detailed_error": "swap",
            "New_content": new,
            "Original_content": original,
        })
    }

    #[test]
    fn pool_drops_unresolvable_and_duplicate_records() {
        let doc = serde_json::json!({ "Errors": [
            record(1, None, "left knee pain", "right knee pain"),
            record(1, None, "left knee pain", "right knee pain"),
            record(2, Some(1), "Order x-ray of the right hip.", "Order x-ray of the left hip."),
            record(3, Some(1), "missing", "x"),
            record(1, Some(1), "not the original", "y"),
        ]});
        let pool = build_error_pool("d", &note(), ErrorType::FactualInaccuracy, &Canned(doc)).unwrap();
        assert_eq!(pool.len(), 2);
        assert!(pool.iter().all(|r| r.error_type == ErrorType::FactualInaccuracy));
    }

    #[test]
    fn empty_note_has_no_targets() {
        let empty = StructuredNote::from_parts([("only a title", Vec::<String>::new())]);
        let gen = Canned(serde_json::json!({ "Errors": [] }));
        assert!(matches!(
            build_error_pool("d", &empty, ErrorType::Hallucination, &gen),
            Err(CorruptionError::NoTargetableContent)
        ));
    }

    #[test]
    fn fenced_json_is_unwrapped() {
        let v = parse_fenced_json("```json\n{\"a\": 1}\n```").unwrap();
        assert_eq!(v["a"], 1);
    }

    fn serve_once(status: &'static str, body: String) -> (String, mpsc::Receiver<String>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                head.push_str(&line);
                if line == "\r\n" {
                    break;
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            head.push_str(&String::from_utf8(buf).unwrap());
            tx.send(head).unwrap();
            let resp = format!(
                "HTTP/1.1 {status}\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(resp.as_bytes()).unwrap();
        });
        (format!("http://{addr}/v1/chat/completions"), rx)
    }

    #[test]
    fn http_generator_sends_prompt_and_credential() {
        let content = "```json\n{\"Errors\": []}\n```";
        let body = serde_json::json!({ "choices": [{ "message": { "content": content } }] }).to_string();
        let (endpoint, rx) = serve_once("200 OK", body);
        let config = HttpGeneratorConfig {
            endpoint,
            retries: 0,
            timeout_secs: 10,
            ..Default::default()
        };
        let gen = HttpGenerator::with_credential(config, Some("secret-token".into())).unwrap();
        let n = note();
        let req = GeneratorRequest::new(GeneratorTask::Errors(ErrorType::Unhelpfulness), "DIALOGUE", &n);
        let doc = gen.generate(&req).unwrap();
        assert_eq!(doc["Errors"], serde_json::json!([]));
        let sent = rx.recv().unwrap();
        assert!(sent.to_ascii_lowercase().contains("authorization: bearer secret-token"));
        assert!(sent.contains("Error type is \\\"Unhelpfulness\\\""));
        assert!(sent.contains("DIALOGUE"));
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let config = HttpGeneratorConfig {
            endpoint: format!("http://{addr}/"),
            retries: 1,
            timeout_secs: 2,
            ..Default::default()
        };
        let gen = HttpGenerator::with_credential(config, None).unwrap();
        let n = note();
        let err = build_error_pool("d", &n, ErrorType::Hallucination, &gen).unwrap_err();
        assert!(matches!(err, CorruptionError::GeneratorUnavailable(_)));
    }
}
