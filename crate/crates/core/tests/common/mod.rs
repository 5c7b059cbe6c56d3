#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use traffic_llm::model::LabeledTask;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join(rel)
}

pub fn synthetic(rel: &str) -> PathBuf {
    fixture(&format!("fixtures/synthetic/{rel}"))
}

pub fn table4_task() -> LabeledTask {
    let text = std::fs::read_to_string(fixture("fixtures/table4_task.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn read_golden(name: &str) -> String {
    std::fs::read_to_string(fixture(&format!("golden/{name}"))).unwrap()
}

#[derive(Debug, Clone)]
pub struct Recorded {
    pub headers: Vec<String>,
    pub body: String,
}

#[derive(Debug, Clone)]
pub enum Reply {
    Status(u16, String),
    /// Accept the request and answer only after the delay.
    Delay(Duration, u16, String),
}

/// One-thread HTTP server answering each connection with the next scripted reply.
pub struct ScriptedServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<Recorded>>>,
    handle: Option<JoinHandle<()>>,
}

impl ScriptedServer {
    pub fn start(replies: Vec<Reply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        let handle = std::thread::spawn(move || {
            for reply in replies {
                let Ok((stream, _)) = listener.accept() else { return };
                serve_one(stream, reply, &log);
            }
        });
        Self {
            url,
            requests,
            handle: Some(handle),
        }
    }

    pub fn request_count(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}

impl Drop for ScriptedServer {
    fn drop(&mut self) {
        if let Some(h) = self.handle.take() {
            if h.is_finished() {
                let _ = h.join();
            }
        }
    }
}

fn serve_one(stream: TcpStream, reply: Reply, log: &Mutex<Vec<Recorded>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut headers = Vec::new();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let line = line.trim_end().to_string();
        if line.is_empty() {
            break;
        }
        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = v.trim().parse().unwrap_or(0);
        }
        headers.push(line);
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body).unwrap();
    log.lock().unwrap().push(Recorded {
        headers,
        body: String::from_utf8_lossy(&body).into_owned(),
    });
    let (status, text) = match reply {
        Reply::Status(s, t) => (s, t),
        Reply::Delay(d, s, t) => {
            std::thread::sleep(d);
            (s, t)
        }
    };
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    );
    let _ = stream.flush();
}

pub fn chat_reply(content: &str) -> String {
    serde_json::json!({
        "id": "x",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}]
    })
    .to_string()
}
