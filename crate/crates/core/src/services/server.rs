//! In-process HTTP server answering the service protocol with the mocks.

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::mock::{HashedBagOfWords, MockCaptioner, MockJudge, MockOcr, MockRecognizer, MockRefiner, PerceptualProjection};
use super::wire::*;
use super::{
    ClipCaptioner, FixtureTables, FrameEmbedder, OcrEngine, PerplexityScorer, ServiceError, SpeechRecognizer,
    TextEmbedder, TextRefiner, TranscriptJudge, UnigramModel,
};
use crate::corpus::{Tokenizer, WhitespaceTokenizer};
use crate::error::{Error, Result};
use crate::media::load_gray;

pub struct MockServer {
    tables: Arc<FixtureTables>,
    recognizer: MockRecognizer,
    captioner: MockCaptioner,
    ocr: MockOcr,
    ppl: UnigramModel,
    token: Option<String>,
    fail_next: AtomicUsize,
    requests: AtomicUsize,
}

impl MockServer {
    pub fn new(tables: FixtureTables) -> Self {
        let ppl = tables.unigram_model();
        let tables = Arc::new(tables);
        Self {
            recognizer: MockRecognizer::new(tables.clone()),
            captioner: MockCaptioner::new(tables.clone()),
            ocr: MockOcr::new(tables.clone()),
            tables,
            ppl,
            token: None,
            fail_next: AtomicUsize::new(0),
            requests: AtomicUsize::new(0),
        }
    }

    /// Requires `Authorization: Bearer <token>` on every request.
    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    /// Answers the next `n` requests with 503.
    pub fn fail_next(&self, n: usize) {
        self.fail_next.store(n, Ordering::SeqCst);
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Binds `addr` (use port 0 for an ephemeral port) and serves on `workers` threads.
    pub fn start(self, addr: &str, workers: usize) -> Result<MockServerHandle> {
        let server = tiny_http::Server::http(addr).map_err(|e| Error::Config(format!("cannot bind {addr}: {e}")))?;
        let port = server
            .server_addr()
            .to_ip()
            .map(|a| a.port())
            .ok_or_else(|| Error::Config("mock server is not bound to an IP address".into()))?;
        let host = addr.rsplit_once(':').map(|(h, _)| h).unwrap_or("127.0.0.1");
        let host = if host == "0.0.0.0" { "127.0.0.1" } else { host };
        let server = Arc::new(server);
        let state = Arc::new(self);
        let stop = Arc::new(AtomicBool::new(false));
        let threads = (0..workers.max(1))
            .map(|_| {
                let server = server.clone();
                let state = state.clone();
                let stop = stop.clone();
                std::thread::spawn(move || {
                    while !stop.load(Ordering::SeqCst) {
                        match server.recv_timeout(Duration::from_millis(50)) {
                            Ok(Some(req)) => state.handle(req),
                            Ok(None) => {}
                            Err(_) => break,
                        }
                    }
                })
            })
            .collect();
        Ok(MockServerHandle {
            base_url: format!("http://{host}:{port}"),
            state,
            stop,
            threads,
        })
    }

    fn handle(&self, mut req: tiny_http::Request) {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let (status, body) = self.answer(&mut req);
        let header = tiny_http::Header::from_bytes("content-type", "application/json").expect("static header");
        let resp = tiny_http::Response::from_data(body).with_status_code(status).with_header(header);
        if let Err(e) = req.respond(resp) {
            tracing::debug!(error = %e, "client went away");
        }
    }

    fn answer(&self, req: &mut tiny_http::Request) -> (u16, Vec<u8>) {
        if let Some(token) = &self.token {
            let expected = format!("Bearer {token}");
            let ok = req
                .headers()
                .iter()
                .any(|h| h.field.equiv("authorization") && h.value.as_str() == expected);
            if !ok {
                return error_body(401, "missing or wrong bearer token");
            }
        }
        if self
            .fail_next
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            return error_body(503, "injected failure");
        }
        let url = req.url().to_string();
        if url == "/health" {
            return (200, br#"{"status":"ok"}"#.to_vec());
        }
        if *req.method() != tiny_http::Method::Post {
            return error_body(405, "use POST");
        }
        let mut body = Vec::new();
        if let Err(e) = req.as_reader().read_to_end(&mut body) {
            return error_body(400, &e.to_string());
        }
        match self.dispatch(&url, &body) {
            Ok(bytes) => (200, bytes),
            Err(Reply::NotFound) => error_body(404, &format!("no endpoint {url}")),
            Err(Reply::BadJson(m)) => error_body(400, &m),
            Err(Reply::Service(ServiceError::InvalidArgument(m))) => error_body(400, &m),
            Err(Reply::Service(ServiceError::Protocol(m))) => error_body(500, &m),
            Err(Reply::Service(ServiceError::Transport(m))) => error_body(503, &m),
        }
    }

    fn dispatch(&self, url: &str, body: &[u8]) -> std::result::Result<Vec<u8>, Reply> {
        match url {
            TRANSCRIBE => reply(body, |r: TranscribeRequest| {
                let t = self.recognizer.transcribe(Path::new(&r.audio_ref))?;
                Ok(TranscribeResponse {
                    segments: t.segments,
                    language: t.language,
                })
            }),
            REFINE => reply(body, |r: TextRequest| {
                Ok(TextResponse {
                    text: MockRefiner.refine_text(&r.text)?,
                })
            }),
            SCORE => reply(body, |r: ScoreRequest| {
                let judge = MockJudge::new(r.judge_id, self.tables.clone());
                let s = judge.score_transcript(&r.text, &r.knowledge_point)?;
                Ok(ScoreResponse {
                    relevance: s.relevance,
                    knowledge_density: s.knowledge_density,
                    transcription_quality: s.transcription_quality,
                    content_flag: s.content_flag,
                })
            }),
            CAPTION => reply(body, |r: CaptionRequest| {
                let refs: Vec<_> = r.frame_refs.iter().map(Into::into).collect();
                Ok(CaptionResponse {
                    caption: self.captioner.caption_clip(&refs)?,
                })
            }),
            EMBED => reply(body, |r: EmbedRequest| {
                let vectors = match r {
                    EmbedRequest::Texts { texts } => HashedBagOfWords::default().embed_texts(&texts)?,
                    EmbedRequest::Images { image_refs } => {
                        let images = image_refs
                            .iter()
                            .map(|p| load_gray(Path::new(p)).map_err(|e| ServiceError::InvalidArgument(e.to_string())))
                            .collect::<std::result::Result<Vec<_>, _>>()?;
                        let refs: Vec<_> = images.iter().collect();
                        PerceptualProjection::default().embed_frames(&refs)?
                    }
                };
                Ok(EmbedResponse {
                    vectors: vectors.into_iter().map(|v| v.values).collect(),
                })
            }),
            OCR => reply(body, |r: OcrRequest| {
                let o = self.ocr.ocr_frame(Path::new(&r.image_ref))?;
                Ok(OcrResponse {
                    text: o.text,
                    informativeness: o.informativeness,
                })
            }),
            PPL => reply(body, |r: TextRequest| {
                Ok(PerplexityResponse {
                    perplexity: self.ppl.perplexity(&r.text)?,
                })
            }),
            TOKENIZE => reply(body, |r: TextRequest| {
                Ok(TokenizeResponse {
                    n_tokens: WhitespaceTokenizer.count_tokens(&r.text),
                })
            }),
            _ => Err(Reply::NotFound),
        }
    }
}

enum Reply {
    NotFound,
    BadJson(String),
    Service(ServiceError),
}

fn reply<Req: DeserializeOwned, Resp: Serialize>(
    body: &[u8],
    f: impl FnOnce(Req) -> std::result::Result<Resp, ServiceError>,
) -> std::result::Result<Vec<u8>, Reply> {
    let req: Req = serde_json::from_slice(body).map_err(|e| Reply::BadJson(e.to_string()))?;
    let resp = f(req).map_err(Reply::Service)?;
    Ok(serde_json::to_vec(&resp).expect("response serializes"))
}

fn error_body(status: u16, message: &str) -> (u16, Vec<u8>) {
    let body = serde_json::to_vec(&ErrorResponse {
        error: message.to_string(),
    })
    .expect("error serializes");
    (status, body)
}

pub struct MockServerHandle {
    base_url: String,
    state: Arc<MockServer>,
    stop: Arc<AtomicBool>,
    threads: Vec<JoinHandle<()>>,
}

impl MockServerHandle {
    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn server(&self) -> &MockServer {
        &self.state
    }

    /// Blocks until the worker threads exit.
    pub fn wait(mut self) {
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop_threads();
    }

    fn stop_threads(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for MockServerHandle {
    fn drop(&mut self) {
        self.stop_threads();
    }
}
