use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;

use crate::ClientError;

const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawReply {
    pub status: u16,
    pub body: Vec<u8>,
}

/// Moves request bodies to the daemon and replies back.
pub trait Transport: Send + Sync {
    fn post(&self, path: &str, body: Vec<u8>) -> Result<RawReply, ClientError>;
    fn get(&self, path: &str) -> Result<RawReply, ClientError>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn post(&self, path: &str, body: Vec<u8>) -> Result<RawReply, ClientError> {
        (**self).post(path, body)
    }

    fn get(&self, path: &str) -> Result<RawReply, ClientError> {
        (**self).get(path)
    }
}

impl<T: Transport + ?Sized> Transport for &T {
    fn post(&self, path: &str, body: Vec<u8>) -> Result<RawReply, ClientError> {
        (**self).post(path, body)
    }

    fn get(&self, path: &str) -> Result<RawReply, ClientError> {
        (**self).get(path)
    }
}

/// Blocking HTTP(S) transport. Connections are never reused.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    base_url: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(base_url: &str) -> Result<Self, ClientError> {
        let client = reqwest::blocking::Client::builder()
            .pool_max_idle_per_host(0)
            .timeout(DEFAULT_TIMEOUT)
            .build()
            .map_err(|e| ClientError::Network(e.to_string()))?;
        Ok(Self { base_url: base_url.trim_end_matches('/').to_owned(), client })
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    fn send(&self, request: reqwest::blocking::RequestBuilder) -> Result<RawReply, ClientError> {
        let response = request
            .header(reqwest::header::CONNECTION, "close")
            .send()
            .map_err(|e| ClientError::Network(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .bytes()
            .map_err(|e| ClientError::Network(e.to_string()))?
            .to_vec();
        Ok(RawReply { status, body })
    }
}

impl Transport for HttpTransport {
    fn post(&self, path: &str, body: Vec<u8>) -> Result<RawReply, ClientError> {
        self.send(
            self.client
                .post(format!("{}{path}", self.base_url))
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body),
        )
    }

    fn get(&self, path: &str) -> Result<RawReply, ClientError> {
        self.send(self.client.get(format!("{}{path}", self.base_url)))
    }
}

/// One request and its outcome as seen on the wire.
#[derive(Debug, Clone)]
pub struct Exchange {
    pub method: &'static str,
    pub path: String,
    pub request: Vec<u8>,
    pub reply: Result<RawReply, ClientError>,
}

/// Wraps another transport and keeps a copy of every exchange.
#[derive(Debug, Default)]
pub struct CapturingTransport<T> {
    inner: T,
    log: Mutex<Vec<Exchange>>,
}

impl<T: Transport> CapturingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self { inner, log: Mutex::new(Vec::new()) }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.log.lock().clone()
    }

    pub fn request_count(&self) -> usize {
        self.log.lock().len()
    }

    pub fn count_path(&self, path: &str) -> usize {
        self.log.lock().iter().filter(|e| e.path == path).count()
    }

    /// Every request and reply body concatenated, for byte scans.
    pub fn wire_bytes(&self) -> Vec<u8> {
        let log = self.log.lock();
        let mut out = Vec::new();
        for e in log.iter() {
            out.extend_from_slice(&e.request);
            if let Ok(reply) = &e.reply {
                out.extend_from_slice(&reply.body);
            }
        }
        out
    }

    pub fn clear(&self) {
        self.log.lock().clear();
    }

    fn record(
        &self,
        method: &'static str,
        path: &str,
        request: Vec<u8>,
        reply: Result<RawReply, ClientError>,
    ) -> Result<RawReply, ClientError> {
        self.log.lock().push(Exchange { method, path: path.to_owned(), request, reply: reply.clone() });
        reply
    }
}

impl<T: Transport> Transport for CapturingTransport<T> {
    fn post(&self, path: &str, body: Vec<u8>) -> Result<RawReply, ClientError> {
        let reply = self.inner.post(path, body.clone());
        self.record("POST", path, body, reply)
    }

    fn get(&self, path: &str) -> Result<RawReply, ClientError> {
        let reply = self.inner.get(path);
        self.record("GET", path, Vec::new(), reply)
    }
}
