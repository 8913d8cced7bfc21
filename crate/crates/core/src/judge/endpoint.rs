//! OpenAI-compatible chat-completions judge with bounded in-flight requests
//! and jittered exponential backoff.

use std::fmt;
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Judge, JudgeError, JudgeVerdict, WindowRequest};

/// Environment variable holding the endpoint API key.
pub const API_KEY_ENV: &str = "UTILSEL_API_KEY";

#[derive(Clone)]
pub struct JudgeEndpointConfig {
    /// Base URL; `/chat/completions` is appended unless already present.
    pub base_url: String,
    pub model_name: String,
    pub api_key: Option<String>,
    pub max_retries: u32,
    pub timeout: Duration,
    pub max_in_flight: usize,
    pub temperature: f64,
    /// First backoff delay; doubles per retry, plus up to the same in jitter.
    pub backoff_base: Duration,
}

impl fmt::Debug for JudgeEndpointConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JudgeEndpointConfig")
            .field("base_url", &self.base_url)
            .field("model_name", &self.model_name)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("max_retries", &self.max_retries)
            .field("timeout", &self.timeout)
            .field("max_in_flight", &self.max_in_flight)
            .field("temperature", &self.temperature)
            .finish()
    }
}

impl JudgeEndpointConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        JudgeEndpointConfig {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key: None,
            max_retries: 3,
            timeout: Duration::from_secs(120),
            max_in_flight: 8,
            temperature: 0.0,
            backoff_base: Duration::from_millis(500),
        }
    }

    /// Reads the API key from [`API_KEY_ENV`], if set.
    pub fn with_env_key(mut self) -> Self {
        self.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        self
    }

    fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
}

#[derive(Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Counting semaphore bounding concurrent requests.
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Permits {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock();
        while *free == 0 {
            self.cv.wait(&mut free);
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock() += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Done(String),
    Retry(String),
    Fatal(String),
}

pub struct EndpointJudge {
    config: JudgeEndpointConfig,
    agent: ureq::Agent,
    permits: Permits,
}

impl EndpointJudge {
    pub fn new(config: JudgeEndpointConfig) -> Result<Self, JudgeError> {
        if config.max_in_flight == 0 {
            return Err(JudgeError::Config("max_in_flight must be at least 1".into()));
        }
        if config.base_url.is_empty() || config.model_name.is_empty() {
            return Err(JudgeError::Config("endpoint URL and model name are required".into()));
        }
        let agent = ureq::AgentBuilder::new().timeout(config.timeout).build();
        let permits = Permits::new(config.max_in_flight);
        Ok(EndpointJudge {
            config,
            agent,
            permits,
        })
    }

    pub fn config(&self) -> &JudgeEndpointConfig {
        &self.config
    }

    fn attempt(&self, body: &ChatRequest<'_>) -> Attempt {
        let mut req = self
            .agent
            .post(&self.config.url())
            .set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp = match req.send_json(body) {
            Ok(resp) => resp,
            Err(ureq::Error::Status(code, resp)) => {
                let detail = resp.into_string().unwrap_or_default();
                let msg = format!("HTTP {code}: {}", detail.chars().take(200).collect::<String>());
                return if code == 429 || code >= 500 {
                    Attempt::Retry(msg)
                } else {
                    Attempt::Fatal(msg)
                };
            }
            Err(ureq::Error::Transport(t)) => return Attempt::Retry(t.to_string()),
        };
        // A response body that arrives but cannot be read counts as transport.
        let text = match resp.into_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        match serde_json::from_str::<ChatResponse>(&text) {
            Ok(parsed) => Attempt::Done(
                parsed
                    .choices
                    .into_iter()
                    .next()
                    .and_then(|c| c.message.content)
                    .unwrap_or_default(),
            ),
            Err(e) => Attempt::Fatal(format!("malformed completion body: {e}")),
        }
    }

    fn backoff(&self, retry: u32) -> Duration {
        let base = self.config.backoff_base.saturating_mul(1 << retry.min(16));
        let jitter = rand::thread_rng().gen_range(0.0..=1.0);
        base + base.mul_f64(jitter)
    }

    /// Sends one prompt, retrying only on transport-level failures.
    pub fn complete(&self, request: &WindowRequest<'_>) -> Result<String, JudgeError> {
        let body = ChatRequest {
            model: &self.config.model_name,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: &request.prompt.system,
                },
                ChatMessage {
                    role: "user",
                    content: &request.prompt.user,
                },
            ],
            temperature: self.config.temperature,
        };
        let _permit = self.permits.acquire();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let message = match self.attempt(&body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(msg) => msg,
                Attempt::Retry(_) if attempts <= self.config.max_retries => {
                    std::thread::sleep(self.backoff(attempts - 1));
                    continue;
                }
                Attempt::Retry(msg) => msg,
            };
            return Err(JudgeError::Transport {
                query_id: request.query.query_id.clone(),
                window_index: request.window_index,
                attempts,
                message,
            });
        }
    }
}

impl Judge for EndpointJudge {
    fn judge_window(&self, request: &WindowRequest<'_>) -> Result<JudgeVerdict, JudgeError> {
        let text = self.complete(request)?;
        Ok(JudgeVerdict::from_text(request.kind, text, request.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Passage, Query};
    use crate::judge::Repair;
    use crate::prompting::RenderedPrompt;
    use crate::TaskKind;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves canned (status, body) pairs in order, one per connection, and
    /// records each request body.
    fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let seen = bodies.clone();
        std::thread::spawn(move || {
            for (status, body) in script {
                let Ok((stream, _)) = listener.accept() else { return };
                let mut reader = BufReader::new(stream);
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                seen.lock().push(String::from_utf8(buf).unwrap());
                let mut stream = reader.into_inner();
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (format!("http://{addr}/v1"), bodies)
    }

    fn completion(content: &str) -> String {
        serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
            .to_string()
    }

    fn fast(url: &str) -> JudgeEndpointConfig {
        let mut c = JudgeEndpointConfig::new(url, "m");
        c.backoff_base = Duration::from_millis(1);
        c.timeout = Duration::from_secs(5);
        c
    }

    fn call(judge: &EndpointJudge, kind: TaskKind, n: usize) -> Result<JudgeVerdict, JudgeError> {
        let q = Query {
            query_id: "q7".into(),
            text: "t".into(),
        };
        let ps: Vec<Passage> = (0..n)
            .map(|i| Passage {
                doc_id: format!("d{i}"),
                text: "x".into(),
                title: None,
            })
            .collect();
        let refs: Vec<&Passage> = ps.iter().collect();
        let prompt = RenderedPrompt {
            kind,
            system: "sys".into(),
            user: "usr".into(),
            passage_count: n,
        };
        judge.judge_window(&WindowRequest {
            query: &q,
            passages: &refs,
            prompt: &prompt,
            kind,
            window_index: 3,
        })
    }

    #[test]
    fn sends_chat_request_and_parses_first_choice() {
        let (url, bodies) = serve(vec![(200, completion("I think [2] > [1] > [3]"))]);
        let judge = EndpointJudge::new(fast(&url)).unwrap();
        let v = call(&judge, TaskKind::Ranking, 3).unwrap();
        assert_eq!(v.permutation, vec![2, 1, 3]);
        let sent: serde_json::Value = serde_json::from_str(&bodies.lock()[0]).unwrap();
        assert_eq!(sent["model"], "m");
        assert_eq!(sent["temperature"], 0.0);
        assert_eq!(sent["messages"][0]["role"], "system");
        assert_eq!(sent["messages"][1]["content"], "usr");
    }

    #[test]
    fn retries_transport_failures_but_not_repaired_output() {
        let (url, bodies) = serve(vec![
            (503, "busy".into()),
            (500, "oops".into()),
            (200, completion("[2] > [2]")),
            (200, completion("[1] > [2]")),
        ]);
        let judge = EndpointJudge::new(fast(&url)).unwrap();
        let v = call(&judge, TaskKind::Ranking, 2).unwrap();
        assert_eq!(v.permutation, vec![2, 1]);
        assert!(v.repairs.contains(&Repair::Dedup));
        assert_eq!(bodies.lock().len(), 3);
    }

    #[test]
    fn gives_up_after_max_retries() {
        let (url, bodies) = serve(vec![(500, "x".into()), (500, "x".into()), (500, "x".into())]);
        let mut cfg = fast(&url);
        cfg.max_retries = 2;
        let judge = EndpointJudge::new(cfg).unwrap();
        match call(&judge, TaskKind::Selection, 2) {
            Err(JudgeError::Transport {
                query_id,
                window_index,
                attempts,
                ..
            }) => {
                assert_eq!((query_id.as_str(), window_index, attempts), ("q7", 3, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(bodies.lock().len(), 3);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let (url, bodies) = serve(vec![(401, "no".into()), (200, completion("[1]"))]);
        let judge = EndpointJudge::new(fast(&url)).unwrap();
        assert!(matches!(
            call(&judge, TaskKind::Ranking, 1),
            Err(JudgeError::Transport { attempts: 1, .. })
        ));
        assert_eq!(bodies.lock().len(), 1);
    }

    #[test]
    fn unreachable_endpoint_is_transport_error() {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let mut cfg = fast(&format!("http://127.0.0.1:{port}"));
        cfg.max_retries = 1;
        let judge = EndpointJudge::new(cfg).unwrap();
        assert!(matches!(
            call(&judge, TaskKind::Ranking, 2),
            Err(JudgeError::Transport { attempts: 2, .. })
        ));
    }

    #[test]
    fn permits_bound_concurrency() {
        let permits = Arc::new(Permits::new(2));
        let live = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let (permits, live, peak) = (permits.clone(), live.clone(), peak.clone());
                std::thread::spawn(move || {
                    let _p = permits.acquire();
                    let now = live.fetch_add(1, Ordering::SeqCst) + 1;
                    peak.fetch_max(now, Ordering::SeqCst);
                    std::thread::sleep(Duration::from_millis(10));
                    live.fetch_sub(1, Ordering::SeqCst);
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(peak.load(Ordering::SeqCst) <= 2);
    }

    #[test]
    fn config_debug_redacts_key() {
        let mut cfg = JudgeEndpointConfig::new("http://x", "m");
        cfg.api_key = Some("sk-secret".into());
        assert!(!format!("{cfg:?}").contains("sk-secret"));
        assert!(EndpointJudge::new(JudgeEndpointConfig {
            max_in_flight: 0,
            ..cfg
        })
        .is_err());
    }
}
