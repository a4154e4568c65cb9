//! Minimal single-purpose HTTP/1.1 server for exercising the embedding client.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

pub struct Request {
    pub method: String,
    pub path: String,
    pub body: String,
}

pub struct Reply {
    pub status: u16,
    pub body: String,
}

impl Reply {
    pub fn json(status: u16, body: serde_json::Value) -> Reply {
        Reply {
            status,
            body: body.to_string(),
        }
    }
}

pub struct Server {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

impl Server {
    pub fn requests(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

/// Serves `handler` on an ephemeral localhost port until the process exits.
pub fn serve<F>(handler: F) -> Server
where
    F: Fn(&Request) -> Reply + Send + Sync + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    let handler = Arc::new(handler);
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let handler = handler.clone();
            let counter = counter.clone();
            thread::spawn(move || {
                let _ = handle(stream, &*handler, &counter);
            });
        }
    });
    Server { url, hits }
}

fn handle(stream: TcpStream, handler: &dyn Fn(&Request) -> Reply, hits: &AtomicUsize) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or_default().to_string();
    let path = parts.next().unwrap_or_default().to_string();
    let mut len = 0usize;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h)?;
        let h = h.trim_end();
        if h.is_empty() {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                len = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;
    hits.fetch_add(1, Ordering::SeqCst);
    let reply = handler(&Request {
        method,
        path,
        body: String::from_utf8_lossy(&body).into_owned(),
    });
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
        reply.status,
        reply.body.len(),
        reply.body
    )?;
    stream.flush()
}

/// A service that embeds with `embed` and reports width `dim`.
pub fn embedding_service<F>(dim: usize, embed: F) -> Server
where
    F: Fn(&str) -> Vec<f64> + Send + Sync + 'static,
{
    serve(move |req| match (req.method.as_str(), req.path.as_str()) {
        ("GET", "/health") => Reply::json(200, serde_json::json!({"status": "ok", "dim": dim, "model": "test"})),
        ("POST", "/embed") => {
            let v: serde_json::Value = match serde_json::from_str(&req.body) {
                Ok(v) => v,
                Err(e) => return Reply::json(400, serde_json::json!({"error": e.to_string()})),
            };
            let Some(sentences) = v["sentences"].as_array() else {
                return Reply::json(400, serde_json::json!({"error": "missing sentences"}));
            };
            if sentences.is_empty() {
                return Reply::json(400, serde_json::json!({"error": "empty batch"}));
            }
            if sentences.len() > 256 {
                return Reply::json(413, serde_json::json!({"error": "batch too large"}));
            }
            let embeddings: Vec<Vec<f64>> = sentences.iter().map(|s| embed(s.as_str().unwrap_or(""))).collect();
            Reply::json(200, serde_json::json!({"dim": dim, "embeddings": embeddings}))
        }
        _ => Reply::json(404, serde_json::json!({"error": "not found"})),
    })
}

/// A localhost URL nothing listens on.
pub fn dead_url() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", l.local_addr().unwrap());
    drop(l);
    url
}
