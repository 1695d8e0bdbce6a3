use std::sync::{Arc, Mutex};

use super::{Request, Response, Service, Transport};
use crate::error::Result;

/// Byte log of everything crossing an instrumented boundary.
#[derive(Debug, Clone, Default)]
pub struct Capture {
    bytes: Arc<Mutex<Vec<u8>>>,
}

impl Capture {
    pub fn new() -> Self {
        Self::default()
    }

    fn record_request(&self, req: &Request) {
        let mut log = self.bytes.lock().unwrap();
        log.extend_from_slice(req.method.as_str().as_bytes());
        log.push(b' ');
        log.extend_from_slice(req.path_and_query().as_bytes());
        log.push(b'\n');
        for (k, v) in &req.headers {
            log.extend_from_slice(format!("{k}: {v}\n").as_bytes());
        }
        log.extend_from_slice(&req.body);
        log.push(b'\n');
    }

    fn record_response(&self, resp: &Response) {
        let mut log = self.bytes.lock().unwrap();
        log.extend_from_slice(format!("{} {}\n", resp.status, resp.content_type).as_bytes());
        log.extend_from_slice(&resp.body);
        log.push(b'\n');
    }

    pub fn len(&self) -> usize {
        self.bytes.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn snapshot(&self) -> Vec<u8> {
        self.bytes.lock().unwrap().clone()
    }

    /// Number of (possibly overlapping) occurrences of `needle`.
    pub fn occurrences(&self, needle: &[u8]) -> usize {
        if needle.is_empty() {
            return 0;
        }
        let log = self.bytes.lock().unwrap();
        log.windows(needle.len()).filter(|w| *w == needle).count()
    }
}

/// Wraps a transport and records every outbound request and inbound response.
pub struct CapturingTransport<T> {
    inner: T,
    capture: Capture,
}

impl<T: Transport> CapturingTransport<T> {
    pub fn new(inner: T, capture: Capture) -> Self {
        Self { inner, capture }
    }
}

impl<T: Transport> Transport for CapturingTransport<T> {
    fn send(&self, endpoint: &str, req: Request) -> Result<Response> {
        self.capture.record_request(&req);
        let resp = self.inner.send(endpoint, req)?;
        self.capture.record_response(&resp);
        Ok(resp)
    }
}

/// Wraps a service and records every inbound request and outbound response.
pub struct CapturingService<S> {
    inner: S,
    capture: Capture,
}

impl<S: Service> CapturingService<S> {
    pub fn new(inner: S, capture: Capture) -> Self {
        Self { inner, capture }
    }
}

impl<S: Service> Service for CapturingService<S> {
    fn handle(&self, req: &Request) -> Response {
        self.capture.record_request(req);
        let resp = self.inner.handle(req);
        self.capture.record_response(&resp);
        resp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::LocalTransport;

    struct Echo;
    impl Service for Echo {
        fn handle(&self, req: &Request) -> Response {
            Response::bytes(req.body.clone())
        }
    }

    #[test]
    fn both_directions_are_recorded() {
        let capture = Capture::new();
        let local = LocalTransport::new();
        local.bind(
            "local://echo",
            std::sync::Arc::new(CapturingService::new(Echo, capture.clone())),
        );
        let mut req = Request::get("/x");
        req.body = b"SENTINEL".to_vec();
        local.send("local://echo", req).unwrap();
        // request body + echoed response body
        assert_eq!(capture.occurrences(b"SENTINEL"), 2);
        assert_eq!(capture.occurrences(b"ABSENT"), 0);
    }
}
