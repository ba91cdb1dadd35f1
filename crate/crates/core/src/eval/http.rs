//! Chat-style HTTP client. The request shape is a JSON message list with text
//! parts and base64 PNG parts; the reply text is located by a JSON pointer.

use std::collections::BTreeMap;
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CallContext, Capabilities, ClientError, EvalError, Message, ModelClient};

fn default_pointer() -> String {
    "/choices/0/message/content".into()
}
fn default_timeout() -> u64 {
    120
}
fn default_prefix() -> String {
    "Bearer ".into()
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Header that carries the secret, e.g. `Authorization`.
    #[serde(default)]
    pub auth_header: Option<String>,
    /// Environment variable holding the secret.
    #[serde(default)]
    pub auth_env: Option<String>,
    #[serde(default = "default_prefix")]
    pub auth_prefix: String,
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    #[serde(default = "default_pointer")]
    pub response_pointer: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
    #[serde(default)]
    pub max_tokens: Option<u32>,
    #[serde(default = "yes")]
    pub image_input: bool,
}

pub struct HttpClient {
    cfg: HttpConfig,
    secret: Option<String>,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(cfg: HttpConfig) -> Result<Self, EvalError> {
        let secret = match (&cfg.auth_header, &cfg.auth_env) {
            (Some(_), Some(var)) => Some(
                std::env::var(var).map_err(|_| EvalError::Config(format!("environment variable {var} is not set")))?,
            ),
            (Some(h), None) => return Err(EvalError::Config(format!("auth header {h} needs auth_env"))),
            _ => None,
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_s)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(HttpClient { cfg, secret, agent })
    }
}

/// Request body at temperature 0.
pub fn request_body(cfg: &HttpConfig, messages: &[Message]) -> Value {
    let b64 = base64::engine::general_purpose::STANDARD;
    let msgs: Vec<Value> = messages
        .iter()
        .map(|m| {
            let mut parts = Vec::new();
            if let Some(png) = &m.image_png {
                parts.push(json!({
                    "type": "image_url",
                    "image_url": {"url": format!("data:image/png;base64,{}", b64.encode(png))}
                }));
            }
            parts.push(json!({"type": "text", "text": m.text}));
            json!({"role": m.role, "content": parts})
        })
        .collect();
    let mut body = json!({"model": cfg.model, "temperature": 0.0, "top_p": 1.0, "messages": msgs});
    if let Some(n) = cfg.max_tokens {
        body["max_tokens"] = json!(n);
    }
    body
}

pub fn extract_text(reply: &Value, pointer: &str) -> Result<String, ClientError> {
    match reply.pointer(pointer) {
        Some(Value::String(s)) => Ok(s.clone()),
        // some providers return a list of content parts
        Some(Value::Array(parts)) => Ok(parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join("")),
        Some(Value::Null) => Ok(String::new()),
        _ => Err(ClientError::Fatal(format!("reply has no text at {pointer}"))),
    }
}

impl ModelClient for HttpClient {
    fn model_id(&self) -> String {
        self.cfg.model.clone()
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { text: true, image: self.cfg.image_input }
    }

    fn complete(&self, messages: &[Message], _ctx: &CallContext<'_>) -> Result<String, ClientError> {
        let mut req = self.agent.post(&self.cfg.endpoint).header("Content-Type", "application/json");
        for (k, v) in &self.cfg.headers {
            req = req.header(k, v);
        }
        if let (Some(h), Some(s)) = (&self.cfg.auth_header, &self.secret) {
            req = req.header(h, format!("{}{s}", self.cfg.auth_prefix));
        }
        let mut resp =
            req.send_json(request_body(&self.cfg, messages)).map_err(|e| ClientError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| ClientError::Transport(e.to_string()))?;
        if status == 429 || status >= 500 {
            return Err(ClientError::Transport(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err(ClientError::Fatal(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>())));
        }
        let reply: Value = serde_json::from_str(&text).map_err(|e| ClientError::Fatal(format!("bad reply: {e}")))?;
        extract_text(&reply, &self.cfg.response_pointer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn cfg(endpoint: &str) -> HttpConfig {
        serde_json::from_value(json!({"endpoint": endpoint, "model": "m"})).unwrap()
    }

    #[test]
    fn body_shape() {
        let body = request_body(&cfg("http://x"), &[Message::user("hi").with_image(&[1, 2, 3])]);
        assert_eq!(body["temperature"], json!(0.0));
        assert_eq!(body["messages"][0]["content"][0]["image_url"]["url"], "data:image/png;base64,AQID");
        assert_eq!(body["messages"][0]["content"][1]["text"], "hi");
    }

    #[test]
    fn reply_pointer() {
        let r = json!({"choices": [{"message": {"content": "Yes"}}]});
        assert_eq!(extract_text(&r, &default_pointer()).unwrap(), "Yes");
        assert!(extract_text(&json!({}), &default_pointer()).is_err());
    }

    /// One-shot local server returning `status` with `body`.
    fn serve(status: u16, body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let mut r = BufReader::new(s.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                r.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut buf = vec![0; len];
            r.read_exact(&mut buf).unwrap();
            write!(s, "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}", body.len()).unwrap();
        });
        format!("http://{addr}/v1/chat")
    }

    fn sample() -> crate::scenario::ScenarioSample {
        let specs = crate::scenario::builtin_fixtures();
        let mut p = crate::generate::GenParams::new(crate::scenario::Subset::Quantity, 1);
        p.dilemmas = Some(vec!["trolley".into()]);
        crate::generate::generate(&p, &specs).unwrap().samples.remove(0)
    }

    #[test]
    fn round_trip_and_status_mapping() {
        let s = sample();
        let ctx = CallContext { sample: &s, mode: super::super::EvalMode::Text, step: super::super::Step::Decision, repeat: 0 };
        let ok = HttpClient::new(cfg(&serve(200, r#"{"choices":[{"message":{"content":"No."}}]}"#))).unwrap();
        assert_eq!(ok.complete(&[Message::user("q")], &ctx).unwrap(), "No.");
        let busy = HttpClient::new(cfg(&serve(503, "{}"))).unwrap();
        assert!(matches!(busy.complete(&[Message::user("q")], &ctx), Err(ClientError::Transport(_))));
        let bad = HttpClient::new(cfg(&serve(400, "{}"))).unwrap();
        assert!(matches!(bad.complete(&[Message::user("q")], &ctx), Err(ClientError::Fatal(_))));
    }

    #[test]
    fn missing_secret_is_config_error() {
        let mut c = cfg("http://x");
        c.auth_header = Some("Authorization".into());
        c.auth_env = Some("DILEMMA_TEST_UNSET_SECRET".into());
        assert!(matches!(HttpClient::new(c), Err(EvalError::Config(_))));
    }
}
