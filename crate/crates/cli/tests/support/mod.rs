#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::thread;

pub const T1: &str = "A\tp\tX\nX\tq\tC\nA\tr\tC\nB\tp\tX\nD\tr\tE\nD\ts\tE\nE\ts\tC\n";

pub const CANDIDATES: usize = 4;
const CHAINS: usize = 8;
const TRAIN_FACTS: usize = 6;

/// a_i -p-> b_i -q-> c_i for every i, with r(a_i, c_i) in train for the
/// first `TRAIN_FACTS` and in test for the rest.
pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new() -> Fixture {
        let dir = tempfile::tempdir().unwrap();
        let mut train = String::new();
        let mut test = String::new();
        let mut cands = String::new();
        for i in 0..CHAINS {
            train.push_str(&format!("a{i}\tp\tb{i}\nb{i}\tq\tc{i}\n"));
            let fact = format!("a{i}\tr\tc{i}\n");
            if i < TRAIN_FACTS {
                train.push_str(&fact);
                continue;
            }
            test.push_str(&fact);
            let mut c = vec![format!("c{i}")];
            c.extend((1..CANDIDATES).map(|k| format!("c{}", (i + k) % CHAINS)));
            let rec = serde_json::json!({
                "query": {"head": format!("a{i}"), "relation": "r", "tail": format!("c{i}")},
                "masked": "tail",
                "candidates": c,
            });
            cands.push_str(&format!("{rec}\n"));
        }
        let f = Fixture { dir };
        f.write("train.txt", &train);
        f.write("test.txt", &test);
        f.write("candidates.jsonl", &cands);
        f.write("t1.txt", T1);
        f
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    /// Runs `apst` in the fixture directory, adding the fixture inputs for
    /// any input flag `args` leaves out.
    pub fn apst(&self, args: &[&str]) -> Output {
        self.command(args).output().unwrap()
    }

    pub fn command(&self, args: &[&str]) -> Command {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_apst"));
        cmd.current_dir(self.dir.path())
            .args(args)
            .env_remove("APST_ENCODER_URL")
            .env_remove("RUST_LOG");
        let per_query = CANDIDATES.to_string();
        for (flag, value) in [
            ("--train", "train.txt"),
            ("--test", "test.txt"),
            ("--candidates", "candidates.jsonl"),
            ("--candidates-per-query", per_query.as_str()),
        ] {
            if !args.contains(&flag) {
                cmd.args([flag, value]);
            }
        }
        cmd
    }
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

/// Query sentences for false candidates (`a_i r c_j`, i != j) embed
/// orthogonally to everything else, so only true triples score 1.
pub fn oracle_vector(sentence: &str) -> [f64; 2] {
    let tok: Vec<&str> = sentence.split_whitespace().collect();
    let false_query = match tok.as_slice() {
        [h, "r", t] => h.strip_prefix('a') != t.strip_prefix('c'),
        _ => false,
    };
    if false_query {
        [0.0, 1.0]
    } else {
        [1.0, 0.0]
    }
}

/// Embedding service on an ephemeral port answering with `oracle_vector`.
pub fn oracle_service() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            thread::spawn(move || {
                let _ = answer(stream);
            });
        }
    });
    url
}

fn answer(stream: TcpStream) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut len = 0;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h)?;
        if h.trim_end().is_empty() {
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
    let reply = if request_line.starts_with("GET /health") {
        serde_json::json!({"status": "ok", "dim": 2, "model": "oracle"})
    } else {
        let req: serde_json::Value = serde_json::from_slice(&body).unwrap();
        let embeddings: Vec<[f64; 2]> = req["sentences"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| oracle_vector(s.as_str().unwrap()))
            .collect();
        serde_json::json!({"dim": 2, "embeddings": embeddings})
    }
    .to_string();
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    )?;
    stream.flush()
}

pub fn dead_url() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", l.local_addr().unwrap());
    drop(l);
    url
}
