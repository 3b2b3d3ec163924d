//! Chat-completion gateway: providers, retries, admission control and cost
//! accounting.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use vrpagent_core::io::sha256_hex;

use crate::mock_corpus;
use crate::prompts::{Message, Role};

pub const ENV_ENDPOINT: &str = "VRPAGENT_LLM_ENDPOINT";
pub const ENV_API_KEY: &str = "VRPAGENT_LLM_API_KEY";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("authentication rejected (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("request rejected (HTTP {status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetryExhausted { attempts: u32, last: String },
    #[error("no fenced code block in response")]
    NoCodeBlock,
    #[error("gateway configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sampling {
    pub temperature: f64,
    pub max_output_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<Message>,
    pub sampling: Sampling,
    /// Stable identity of this call within a run. Mock providers derive
    /// their reply from it, so it must not depend on scheduling.
    pub nonce: String,
}

impl ChatRequest {
    pub fn prompt_digest(&self) -> String {
        let mut text = String::new();
        for m in &self.messages {
            text.push_str(match m.role {
                Role::System => "system\n",
                Role::User => "user\n",
            });
            text.push_str(&m.content);
            text.push('\0');
        }
        sha256_hex(text.as_bytes())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub messages: Vec<Message>,
    pub model: String,
    pub sampling: Sampling,
    pub response: String,
    pub usage: Usage,
    pub latency: f64,
    pub retry_count: u32,
}

/// What a provider returns for one request.
#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub text: String,
    pub usage: Usage,
    pub retry_count: u32,
}

pub trait Provider: Send + Sync {
    fn complete(&self, model: &str, request: &ChatRequest) -> Result<Completion, GatewayError>;
}

/// Returns the content of the last fenced block, ignoring the language tag.
pub fn extract_code(text: &str) -> Result<String, GatewayError> {
    let mut last = None;
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let fence = line.trim_start().starts_with("```");
        match (&mut current, fence) {
            (None, true) => current = Some(Vec::new()),
            (Some(body), true) => {
                last = Some(body.join("\n"));
                current = None;
            }
            (Some(body), false) => body.push(line),
            (None, false) => {}
        }
    }
    last.ok_or(GatewayError::NoCodeBlock)
}

fn fenced(code: &str) -> String {
    format!("```cpp\n{code}\n```")
}

#[derive(Debug)]
pub enum MockBehavior {
    /// Replies are handed out in call order, verbatim.
    Scripted(Mutex<VecDeque<String>>),
    /// Returns the first code embedded in the prompt (parent 1, or the seed
    /// example).
    EchoFirstCode,
    /// Operator variants drawn from a built-in corpus.
    Corpus,
}

#[derive(Debug)]
pub struct MockProvider {
    pub behavior: MockBehavior,
    pub seed: u64,
}

impl MockProvider {
    pub fn scripted<I: IntoIterator<Item = String>>(replies: I) -> Self {
        MockProvider {
            behavior: MockBehavior::Scripted(Mutex::new(replies.into_iter().collect())),
            seed: 0,
        }
    }

    pub fn echo() -> Self {
        MockProvider {
            behavior: MockBehavior::EchoFirstCode,
            seed: 0,
        }
    }

    pub fn corpus(seed: u64) -> Self {
        MockProvider {
            behavior: MockBehavior::Corpus,
            seed,
        }
    }
}

/// The user message's first embedded code section.
pub fn first_embedded_code(user: &str) -> Option<&str> {
    for header in ["[Better Code]\n", "[Code]\n", "# Example implementation\n"] {
        if let Some(start) = user.find(header) {
            let rest = &user[start + header.len()..];
            let end = ["\n\n[Worse Code]", "\n\n[Task]", "\n\n# Libary context"]
                .iter()
                .filter_map(|m| rest.find(m))
                .min()
                .unwrap_or(rest.len());
            return Some(&rest[..end]);
        }
    }
    None
}

fn user_text(request: &ChatRequest) -> &str {
    request
        .messages
        .iter()
        .rev()
        .find(|m| m.role == Role::User)
        .map(|m| m.content.as_str())
        .unwrap_or("")
}

fn estimate_tokens(text: &str) -> u64 {
    text.len().div_ceil(4) as u64
}

impl Provider for MockProvider {
    fn complete(&self, _model: &str, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let text = match &self.behavior {
            MockBehavior::Scripted(queue) => {
                let reply = queue
                    .lock()
                    .expect("mock script lock")
                    .pop_front()
                    .ok_or_else(|| GatewayError::Malformed("mock script exhausted".into()))?;
                return Ok(Completion {
                    text: reply,
                    usage: Usage::default(),
                    retry_count: 0,
                });
            }
            MockBehavior::EchoFirstCode => {
                let code = first_embedded_code(user_text(request))
                    .ok_or_else(|| GatewayError::Malformed("prompt embeds no code".into()))?;
                fenced(code)
            }
            MockBehavior::Corpus => {
                let digest = sha256_hex(format!("{}|{}|{}", self.seed, request.prompt_digest(), request.nonce).as_bytes());
                let key = u64::from_str_radix(&digest[..16], 16).expect("hex digest");
                format!("Here is the implementation.\n\n{}\n", fenced(&mock_corpus::respond(user_text(request), key)))
            }
        };
        let input: u64 = request.messages.iter().map(|m| estimate_tokens(&m.content)).sum();
        Ok(Completion {
            usage: Usage {
                input_tokens: input,
                output_tokens: estimate_tokens(&text),
            },
            text,
            retry_count: 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 500,
            max_delay_ms: 30_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// One HTTP exchange. Errors are transport-level failures (connection
/// refused, reset, timeout); any HTTP status is a successful exchange.
pub trait Transport: Send + Sync {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<(u16, String), String>;
}

#[derive(Debug)]
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        UreqTransport {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Transport for UreqTransport {
    fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> Result<(u16, String), String> {
        let mut req = self.agent.post(url).set("Content-Type", "application/json");
        if let Some(key) = bearer {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_string(&body.to_string()) {
            Ok(resp) => {
                let status = resp.status();
                resp.into_string().map(|b| (status, b)).map_err(|e| e.to_string())
            }
            Err(ureq::Error::Status(status, resp)) => Ok((status, resp.into_string().unwrap_or_default())),
            Err(ureq::Error::Transport(t)) => Err(t.to_string()),
        }
    }
}

/// OpenAI-compatible `/chat/completions` client.
pub struct HttpProvider {
    pub url: String,
    pub api_key: Option<String>,
    pub retry: RetryPolicy,
    transport: Box<dyn Transport>,
    sleep: Box<dyn Fn(Duration) + Send + Sync>,
}

impl std::fmt::Debug for HttpProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpProvider").field("url", &self.url).field("retry", &self.retry).finish()
    }
}

impl HttpProvider {
    pub fn new(url: impl Into<String>, api_key: Option<String>, retry: RetryPolicy) -> Self {
        HttpProvider::with_transport(url, api_key, retry, Box::new(UreqTransport::new(Duration::from_secs(300))))
    }

    pub fn with_transport(url: impl Into<String>, api_key: Option<String>, retry: RetryPolicy, transport: Box<dyn Transport>) -> Self {
        HttpProvider {
            url: url.into(),
            api_key,
            retry,
            transport,
            sleep: Box::new(std::thread::sleep),
        }
    }

    /// Reads the endpoint and credential from the environment.
    pub fn from_env(retry: RetryPolicy) -> Result<Self, GatewayError> {
        let url = std::env::var(ENV_ENDPOINT).map_err(|_| GatewayError::Config(format!("{ENV_ENDPOINT} is not set")))?;
        let key = std::env::var(ENV_API_KEY).map_err(|_| GatewayError::Config(format!("{ENV_API_KEY} is not set")))?;
        Ok(HttpProvider::new(url, Some(key), retry))
    }

    /// Replaces the backoff sleep, e.g. to record delays in tests.
    pub fn with_sleep(mut self, sleep: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleep = Box::new(sleep);
        self
    }

    pub fn request_body(model: &str, request: &ChatRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| json!({ "role": m.role, "content": m.content }))
            .collect();
        json!({
            "model": model,
            "messages": messages,
            "temperature": request.sampling.temperature,
            "max_tokens": request.sampling.max_output_tokens,
        })
    }

    fn parse(body: &str) -> Result<(String, Usage), GatewayError> {
        let v: Value = serde_json::from_str(body).map_err(|e| GatewayError::Malformed(e.to_string()))?;
        let text = v
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::Malformed("missing choices[0].message.content".into()))?;
        if text.is_empty() {
            return Err(GatewayError::Malformed("empty completion".into()));
        }
        let count = |p: &str| v.pointer(p).and_then(Value::as_u64).unwrap_or(0);
        Ok((
            text.to_string(),
            Usage {
                input_tokens: count("/usage/prompt_tokens"),
                output_tokens: count("/usage/completion_tokens"),
            },
        ))
    }
}

impl Provider for HttpProvider {
    fn complete(&self, model: &str, request: &ChatRequest) -> Result<Completion, GatewayError> {
        let body = HttpProvider::request_body(model, request);
        let attempts = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                (self.sleep)(self.retry.delay(attempt));
            }
            match self.transport.post_json(&self.url, self.api_key.as_deref(), &body) {
                Err(e) => last = format!("transport: {e}"),
                Ok((status, text)) if status == 401 || status == 403 => {
                    return Err(GatewayError::Auth { status, body: text });
                }
                Ok((status, text)) if status == 429 || status >= 500 => last = format!("HTTP {status}: {text}"),
                Ok((status, text)) if !(200..300).contains(&status) => {
                    return Err(GatewayError::Rejected { status, body: text });
                }
                Ok((_, text)) => {
                    let (text, usage) = HttpProvider::parse(&text)?;
                    return Ok(Completion {
                        text,
                        usage,
                        retry_count: attempt,
                    });
                }
            }
        }
        Err(GatewayError::RetryExhausted { attempts, last })
    }
}

/// Bounds concurrent requests and, optionally, tokens per minute.
#[derive(Debug)]
pub struct Admission {
    max_in_flight: usize,
    tokens_per_minute: Option<u64>,
    state: Mutex<AdmissionState>,
    freed: Condvar,
}

#[derive(Debug, Default)]
struct AdmissionState {
    in_flight: usize,
    window: VecDeque<(Instant, u64)>,
}

impl Admission {
    pub fn new(max_in_flight: usize, tokens_per_minute: Option<u64>) -> Self {
        Admission {
            max_in_flight: max_in_flight.max(1),
            tokens_per_minute,
            state: Mutex::new(AdmissionState::default()),
            freed: Condvar::new(),
        }
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    /// Blocks until a slot is free and the token budget admits `estimate`.
    /// A request larger than the whole budget is admitted once the window
    /// is empty.
    pub fn acquire(&self, estimate: u64) {
        let mut st = self.state.lock().expect("admission lock");
        loop {
            let now = Instant::now();
            while st.window.front().is_some_and(|(t, _)| now.duration_since(*t) >= Duration::from_secs(60)) {
                st.window.pop_front();
            }
            let used: u64 = st.window.iter().map(|(_, n)| n).sum();
            let budget_ok = match self.tokens_per_minute {
                None => true,
                Some(limit) => st.window.is_empty() || used + estimate <= limit,
            };
            if st.in_flight < self.max_in_flight && budget_ok {
                st.in_flight += 1;
                st.window.push_back((now, estimate));
                return;
            }
            let wait = match st.window.front() {
                Some((t, _)) if !budget_ok => Duration::from_secs(60).saturating_sub(now.duration_since(*t)),
                _ => Duration::from_millis(50),
            };
            st = self.freed.wait_timeout(st, wait).expect("admission lock").0;
        }
    }

    pub fn release(&self) {
        let mut st = self.state.lock().expect("admission lock");
        st.in_flight -= 1;
        self.freed.notify_all();
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().expect("admission lock").in_flight
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub usd_per_million_input: f64,
    pub usd_per_million_output: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub rates: Rates,
    pub calls: u64,
    pub failed_calls: u64,
    pub retries: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl CostLedger {
    pub fn new(rates: Rates) -> Self {
        CostLedger {
            rates,
            ..CostLedger::default()
        }
    }

    pub fn record(&mut self, usage: Usage, retries: u32) {
        self.calls += 1;
        self.retries += u64::from(retries);
        self.input_tokens += usage.input_tokens;
        self.output_tokens += usage.output_tokens;
    }

    pub fn input_cost(&self) -> f64 {
        self.input_tokens as f64 * self.rates.usd_per_million_input / 1e6
    }

    pub fn output_cost(&self) -> f64 {
        self.output_tokens as f64 * self.rates.usd_per_million_output / 1e6
    }

    pub fn total_cost(&self) -> f64 {
        self.input_cost() + self.output_cost()
    }

    pub fn report(&self) -> Value {
        json!({
            "calls": self.calls,
            "failed_calls": self.failed_calls,
            "retries": self.retries,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "usd_per_million_input": self.rates.usd_per_million_input,
            "usd_per_million_output": self.rates.usd_per_million_output,
            "input_cost_usd": self.input_cost(),
            "output_cost_usd": self.output_cost(),
            "total_cost_usd": self.total_cost(),
        })
    }
}

/// Shareable front end: admission, provider call, accounting.
pub struct Gateway {
    provider: Box<dyn Provider>,
    model: String,
    admission: Admission,
    ledger: Mutex<CostLedger>,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("model", &self.model).finish()
    }
}

impl Gateway {
    pub fn new(provider: Box<dyn Provider>, model: impl Into<String>, admission: Admission, rates: Rates) -> Self {
        Gateway {
            provider,
            model: model.into(),
            admission,
            ledger: Mutex::new(CostLedger::new(rates)),
        }
    }

    pub fn mock(provider: MockProvider) -> Self {
        Gateway::new(Box::new(provider), "mock", Admission::new(4, None), Rates::default())
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn ledger(&self) -> CostLedger {
        self.ledger.lock().expect("ledger lock").clone()
    }

    /// Restores counters, e.g. when resuming a run.
    pub fn restore_ledger(&self, ledger: CostLedger) {
        let mut l = self.ledger.lock().expect("ledger lock");
        let rates = l.rates;
        *l = CostLedger { rates, ..ledger };
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatExchange, GatewayError> {
        let estimate: u64 = request.messages.iter().map(|m| estimate_tokens(&m.content)).sum::<u64>()
            + u64::from(request.sampling.max_output_tokens);
        self.admission.acquire(estimate);
        let started = Instant::now();
        let result = self.provider.complete(&self.model, request);
        self.admission.release();
        let latency = started.elapsed().as_secs_f64();
        let mut ledger = self.ledger.lock().expect("ledger lock");
        match result {
            Ok(c) => {
                ledger.record(c.usage, c.retry_count);
                Ok(ChatExchange {
                    messages: request.messages.clone(),
                    model: self.model.clone(),
                    sampling: request.sampling,
                    response: c.text,
                    usage: c.usage,
                    latency,
                    retry_count: c.retry_count,
                })
            }
            Err(e) => {
                ledger.failed_calls += 1;
                Err(e)
            }
        }
    }

    /// Issues requests concurrently up to the admission limit; results come
    /// back in request order.
    pub fn complete_all(&self, requests: &[ChatRequest]) -> Vec<Result<ChatExchange, GatewayError>> {
        let workers = self.admission.max_in_flight().min(requests.len()).max(1);
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<ChatExchange, GatewayError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= requests.len() {
                        break;
                    }
                    let r = self.complete(&requests[i]);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("slot lock").expect("every request answered"))
            .collect()
    }
}
