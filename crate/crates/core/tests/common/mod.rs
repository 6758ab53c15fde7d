#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::{Arc, Mutex};

use serde_json::{json, Value};
use trustroute::persistence::{SnapshotEntry, TrustSnapshot};
use trustroute::{CategoryId, HyperParams, TrustStore};

/// What the mock answers for one request: status and, for 200, the
/// assistant message text.
pub type Responder = dyn Fn(&Value, u32) -> (u16, String) + Send + Sync;

/// A tiny chat-completion server on a random local port. Each connection
/// serves one request.
pub struct MockServer {
    pub addr: SocketAddr,
    /// Attempts seen per distinct request body.
    pub attempts: Arc<Mutex<HashMap<String, u32>>>,
    pub bodies: Arc<Mutex<Vec<Value>>>,
}

impl MockServer {
    pub fn start(responder: Box<Responder>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let attempts = Arc::new(Mutex::new(HashMap::new()));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let responder: Arc<Responder> = Arc::from(responder);
        let (a, b) = (attempts.clone(), bodies.clone());
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let (a, b, r) = (a.clone(), b.clone(), responder.clone());
                std::thread::spawn(move || serve(stream, &a, &b, &*r));
            }
        });
        Self {
            addr,
            attempts,
            bodies,
        }
    }

    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn total_requests(&self) -> usize {
        self.bodies.lock().unwrap().len()
    }
}

fn serve(
    stream: TcpStream,
    attempts: &Mutex<HashMap<String, u32>>,
    bodies: &Mutex<Vec<Value>>,
    responder: &Responder,
) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut len = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).unwrap();
    let text = String::from_utf8(body).unwrap();
    let value: Value = serde_json::from_str(&text).unwrap();
    let attempt = {
        let mut a = attempts.lock().unwrap();
        let n = a.entry(text).or_insert(0);
        *n += 1;
        *n
    };
    bodies.lock().unwrap().push(value.clone());
    let (status, content) = responder(&value, attempt);
    let payload = if status == 200 {
        json!({
            "id": "mock",
            "object": "chat.completion",
            "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
        })
        .to_string()
    } else {
        json!({"error": {"message": content}}).to_string()
    };
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.flush();
}

/// The user message of a chat request.
pub fn user_text(body: &Value) -> String {
    match &body["messages"][1]["content"] {
        Value::String(s) => s.clone(),
        Value::Array(parts) => parts[0]["text"].as_str().unwrap_or_default().to_string(),
        _ => String::new(),
    }
}

/// A store with the given entries and counts, built through the public
/// snapshot type.
pub fn store_from(
    entries: Vec<SnapshotEntry>,
    category_counts: BTreeMap<CategoryId, u64>,
    step: u64,
) -> TrustStore {
    TrustSnapshot {
        format_version: "1.0".into(),
        hyperparams: HyperParams::default(),
        step,
        category_counts,
        entries,
    }
    .into_store()
    .unwrap()
}

pub fn entry(agent: &str, role: &str, category: &str, vals: [f64; 5]) -> SnapshotEntry {
    SnapshotEntry {
        agent_id: agent.into(),
        role_id: role.into(),
        category_id: category.into(),
        pos_count: vals[0],
        neg_count: vals[1],
        ema_short: vals[2],
        ema_long: vals[3],
        score: vals[4],
    }
}
