//! Sentence formation and sentence encoders.
//!
//! Paths and queries become flat token sequences, entity descriptions attached
//! to the first and last entity only:
//!
//! ```text
//! closed path:  e1 D(e1) r1 e2 r2 ... rn en D(en)
//! anchoring:    e1 D(e1) r1 r2 ... rn en D(en)
//! query:        h D(h) r t D(t)
//! ```
//!
//! Encoders turn sentences into vectors. [`HashEncoder`] is a deterministic
//! built-in that needs no model weights; [`RemoteEncoder`] talks to an HTTP
//! embedding service.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};

use crate::error::{ApstError, Result};
use crate::filter::QueryTriple;
use crate::graph::Graph;
use crate::hash::fnv1a;
use crate::paths::Path;

/// Sentences longer than this many whitespace tokens are cut.
pub const MAX_SENTENCE_TOKENS: usize = 512;

/// Output width of the built-in encoder.
pub const HASH_ENCODER_DIM: usize = 384;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionTier {
    Short,
    #[default]
    Detailed,
}

/// Entity descriptions keyed by entity surface string.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DescriptionStore {
    short: HashMap<String, String>,
    detailed: HashMap<String, String>,
}

impl DescriptionStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn tier_mut(&mut self, tier: DescriptionTier) -> &mut HashMap<String, String> {
        match tier {
            DescriptionTier::Short => &mut self.short,
            DescriptionTier::Detailed => &mut self.detailed,
        }
    }

    /// Sets a description; empty text is ignored. Returns true if it replaced one.
    pub fn insert(&mut self, tier: DescriptionTier, entity: &str, text: &str) -> bool {
        let text = text.trim();
        if text.is_empty() {
            return false;
        }
        self.tier_mut(tier)
            .insert(entity.to_string(), text.to_string())
            .is_some()
    }

    /// Reads `entity\tdescription` lines. Returns how many entries overwrote
    /// an earlier one.
    pub fn read<R: BufRead>(&mut self, r: R, tier: DescriptionTier, source: &str) -> Result<usize> {
        let mut overwritten = 0;
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| ApstError::io(source, e))?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() {
                continue;
            }
            let Some((entity, text)) = line.split_once('\t') else {
                return Err(ApstError::Parse {
                    path: source.to_string(),
                    line: i + 1,
                    message: "expected entity<TAB>description".into(),
                });
            };
            if entity.is_empty() {
                return Err(ApstError::Parse {
                    path: source.to_string(),
                    line: i + 1,
                    message: "empty entity".into(),
                });
            }
            if self.insert(tier, entity, text) {
                overwritten += 1;
            }
        }
        if overwritten > 0 {
            log::warn!("{source}: {overwritten} duplicate description(s) overwritten");
        }
        Ok(overwritten)
    }

    pub fn load(&mut self, path: impl AsRef<FsPath>, tier: DescriptionTier) -> Result<usize> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| ApstError::io(path, e))?;
        self.read(std::io::BufReader::new(f), tier, &path.display().to_string())
    }

    /// Description under `mode`, or `None` when only the surface string is known.
    /// Detailed lookups fall back to the short tier.
    pub fn describe(&self, entity: &str, mode: DescriptionTier) -> Option<&str> {
        let found = match mode {
            DescriptionTier::Detailed => self.detailed.get(entity).or_else(|| self.short.get(entity)),
            DescriptionTier::Short => self.short.get(entity),
        };
        found.map(String::as_str)
    }

    /// Description with the final fallback to the surface string.
    pub fn lookup<'a>(&'a self, entity: &'a str, mode: DescriptionTier) -> &'a str {
        self.describe(entity, mode).unwrap_or(entity)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentenceKind {
    Cp,
    Ap,
    Query,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub text: String,
    pub kind: SentenceKind,
}

/// What to verbalize.
#[derive(Clone, Copy, Debug)]
pub enum SentenceSource<'a> {
    ClosedPath(&'a Path),
    AnchoringPath(&'a Path),
    Query(&'a QueryTriple),
}

struct Tokens<'a> {
    store: &'a DescriptionStore,
    mode: DescriptionTier,
    out: Vec<&'a str>,
}

impl<'a> Tokens<'a> {
    fn described(&mut self, entity: &'a str) {
        self.out.push(entity);
        if let Some(d) = self.store.describe(entity, self.mode) {
            self.out.push(d);
        }
    }

    fn bare(&mut self, token: &'a str) {
        self.out.push(token);
    }
}

fn finish(tokens: Vec<&str>, kind: SentenceKind) -> Sentence {
    let text = tokens.join(" ");
    let count = text.split_whitespace().count();
    let text = if count > MAX_SENTENCE_TOKENS {
        log::warn!("sentence of {count} tokens truncated to {MAX_SENTENCE_TOKENS}");
        text.split_whitespace()
            .take(MAX_SENTENCE_TOKENS)
            .collect::<Vec<_>>()
            .join(" ")
    } else {
        text
    };
    Sentence { text, kind }
}

/// Builds the sentence for a path or query. Path entities and relations are
/// resolved through `g`.
pub fn format_sentence(g: &Graph, item: SentenceSource<'_>, store: &DescriptionStore, mode: DescriptionTier) -> Sentence {
    let mut tk = Tokens {
        store,
        mode,
        out: Vec::new(),
    };
    let kind = match item {
        SentenceSource::ClosedPath(p) => {
            let ents = p.entities();
            let n = p.len();
            tk.described(g.entity_name(ents[0]));
            for (i, &r) in p.relations().iter().enumerate() {
                tk.bare(g.relation_name(r));
                if i + 1 < n {
                    tk.bare(g.entity_name(ents[i + 1]));
                }
            }
            tk.described(g.entity_name(ents[n]));
            SentenceKind::Cp
        }
        SentenceSource::AnchoringPath(p) => {
            tk.described(g.entity_name(p.start()));
            for &r in p.relations() {
                tk.bare(g.relation_name(r));
            }
            tk.described(g.entity_name(p.end()));
            SentenceKind::Ap
        }
        SentenceSource::Query(q) => {
            tk.described(&q.head);
            tk.bare(&q.relation);
            tk.described(&q.tail);
            SentenceKind::Query
        }
    };
    finish(tk.out, kind)
}

/// A sentence embedding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

pub trait Encoder: Send + Sync {
    /// Width of every vector this encoder returns.
    fn dim(&self) -> usize;

    /// One embedding per input, in input order.
    fn encode_texts(&self, texts: &[String]) -> Result<Vec<Embedding>>;
}

/// Encodes sentences and checks the batch contract: one finite vector of the
/// encoder's width per sentence.
pub fn encode(sentences: &[Sentence], encoder: &dyn Encoder) -> Result<Vec<Embedding>> {
    let texts: Vec<String> = sentences.iter().map(|s| s.text.clone()).collect();
    let out = encoder.encode_texts(&texts)?;
    if out.len() != texts.len() {
        return Err(ApstError::Protocol(format!(
            "asked for {} embeddings, got {}",
            texts.len(),
            out.len()
        )));
    }
    let dim = encoder.dim();
    for e in &out {
        if e.dim() != dim {
            return Err(ApstError::Protocol(format!(
                "embedding width {} differs from encoder width {dim}",
                e.dim()
            )));
        }
        if !e.is_finite() {
            return Err(ApstError::Protocol("non-finite embedding value".into()));
        }
    }
    Ok(out)
}

/// Hashed bag of unigrams and adjacent bigrams.
///
/// Each whitespace token, and each pair of adjacent tokens joined by one
/// space, is hashed with 64-bit FNV-1a over its UTF-8 bytes. Bit 0 of the
/// hash picks the sign (+1 when clear) and `(hash >> 1) % dim` the bucket.
/// The summed vector is L2-normalized; if it sums to zero, bucket 0 is set
/// to 1.
#[derive(Clone, Copy, Debug)]
pub struct HashEncoder {
    dim: usize,
}

impl Default for HashEncoder {
    fn default() -> Self {
        HashEncoder {
            dim: HASH_ENCODER_DIM,
        }
    }
}

impl HashEncoder {
    pub fn with_dim(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(ApstError::Config("encoder width must be positive".into()));
        }
        Ok(HashEncoder { dim })
    }

    fn add_feature(&self, v: &mut [f64], feature: &[u8]) {
        let h = fnv1a(feature);
        let bucket = ((h >> 1) % self.dim as u64) as usize;
        v[bucket] += if h & 1 == 0 { 1.0 } else { -1.0 };
    }

    pub fn embed(&self, text: &str) -> Embedding {
        let mut v = vec![0.0; self.dim];
        let tokens: Vec<&str> = text.split_whitespace().collect();
        for tok in &tokens {
            self.add_feature(&mut v, tok.as_bytes());
        }
        let mut bigram = String::new();
        for w in tokens.windows(2) {
            bigram.clear();
            bigram.push_str(w[0]);
            bigram.push(' ');
            bigram.push_str(w[1]);
            self.add_feature(&mut v, bigram.as_bytes());
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            v[0] = 1.0;
        } else {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        Embedding(v)
    }
}

impl Encoder for HashEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_texts(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }
}

/// Request body of `POST /embed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub sentences: Vec<String>,
}

/// Response body of `POST /embed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub embeddings: Vec<Vec<f64>>,
}

/// Response body of `GET /health`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub dim: usize,
    #[serde(default)]
    pub model: String,
}

/// Error body carried by non-200 responses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

#[cfg(feature = "remote")]
pub use remote::RemoteEncoder;

#[cfg(feature = "remote")]
mod remote {
    use std::time::Duration;

    use super::*;

    /// Most sentences the service accepts per request.
    const MAX_BATCH: usize = 256;

    /// Client for an embedding service speaking the `/embed` + `/health` protocol.
    #[derive(Debug)]
    pub struct RemoteEncoder {
        base: String,
        agent: ureq::Agent,
        attempts: u32,
        dim: usize,
        model: String,
    }

    impl RemoteEncoder {
        /// Connects and reads the model width from `/health`.
        pub fn connect(base_url: &str) -> Result<Self> {
            Self::connect_with(base_url, Duration::from_secs(30), 3)
        }

        pub fn connect_with(base_url: &str, timeout: Duration, attempts: u32) -> Result<Self> {
            let agent: ureq::Agent = ureq::Agent::config_builder()
                .timeout_global(Some(timeout))
                .http_status_as_error(false)
                .build()
                .into();
            let mut enc = RemoteEncoder {
                base: base_url.trim_end_matches('/').to_string(),
                agent,
                attempts: attempts.max(1),
                dim: 0,
                model: String::new(),
            };
            let health: HealthResponse = enc.call(|a, base| a.get(format!("{base}/health")).call())?;
            if health.status != "ok" || health.dim == 0 {
                return Err(ApstError::Protocol(format!(
                    "service not ready: status `{}`, dim {}",
                    health.status, health.dim
                )));
            }
            enc.dim = health.dim;
            enc.model = health.model;
            Ok(enc)
        }

        pub fn model(&self) -> &str {
            &self.model
        }

        fn call<T: serde::de::DeserializeOwned>(
            &self,
            send: impl Fn(&ureq::Agent, &str) -> std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>,
        ) -> Result<T> {
            let mut last = String::new();
            for attempt in 1..=self.attempts {
                match send(&self.agent, &self.base) {
                    Ok(mut resp) => {
                        let status = resp.status().as_u16();
                        let body = resp
                            .body_mut()
                            .read_to_string()
                            .map_err(|e| ApstError::Protocol(e.to_string()))?;
                        if status != 200 {
                            let msg = serde_json::from_str::<ErrorBody>(&body)
                                .map(|b| b.error)
                                .unwrap_or(body);
                            return Err(ApstError::Protocol(format!("HTTP {status}: {msg}")));
                        }
                        return serde_json::from_str(&body)
                            .map_err(|e| ApstError::Protocol(format!("bad response body: {e}")));
                    }
                    Err(e) => {
                        last = e.to_string();
                        log::debug!("encoder request attempt {attempt} failed: {last}");
                        if attempt < self.attempts {
                            std::thread::sleep(Duration::from_millis(100 * u64::from(attempt)));
                        }
                    }
                }
            }
            Err(ApstError::Transport {
                retries: self.attempts,
                message: last,
            })
        }
    }

    impl Encoder for RemoteEncoder {
        fn dim(&self) -> usize {
            self.dim
        }

        fn encode_texts(&self, texts: &[String]) -> Result<Vec<Embedding>> {
            let mut out = Vec::with_capacity(texts.len());
            for batch in texts.chunks(MAX_BATCH) {
                let req = EmbedRequest {
                    sentences: batch.to_vec(),
                };
                let resp: EmbedResponse =
                    self.call(|a, base| a.post(format!("{base}/embed")).send_json(&req))?;
                if resp.dim != self.dim {
                    return Err(ApstError::Protocol(format!(
                        "service reported dim {} but /health said {}",
                        resp.dim, self.dim
                    )));
                }
                if resp.embeddings.len() != batch.len() {
                    return Err(ApstError::Protocol(format!(
                        "sent {} sentences, got {} embeddings",
                        batch.len(),
                        resp.embeddings.len()
                    )));
                }
                for v in resp.embeddings {
                    if v.len() != self.dim {
                        return Err(ApstError::Protocol(format!(
                            "embedding of width {} in a dim-{} batch",
                            v.len(),
                            self.dim
                        )));
                    }
                    out.push(Embedding(v));
                }
            }
            Ok(out)
        }
    }
}
