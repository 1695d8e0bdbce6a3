//! Minimal HTTP+JSON plumbing shared by every service.
//!
//! Services are plain `Service` implementations that map a [`Request`] to a
//! [`Response`]. The same service can be called in-process through a
//! [`LocalTransport`] or served over TCP with [`server::HttpServer`]; callers
//! only see the [`Transport`] trait.

mod capture;
mod client;
pub mod server;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub use capture::{Capture, CapturingService, CapturingTransport};
pub use client::HttpTransport;

use crate::error::{Error, Result, WireError};

const SEGMENT: &AsciiSet = &NON_ALPHANUMERIC
    .remove(b'-')
    .remove(b'.')
    .remove(b'_')
    .remove(b'~');

/// Percent-encodes one path segment or query value. PIDs contain `:` and `/`
/// so they are always passed through this before landing in a URL.
pub fn encode_segment(s: &str) -> String {
    utf8_percent_encode(s, SEGMENT).to_string()
}

pub fn decode_segment(s: &str) -> Result<String> {
    percent_decode_str(s)
        .decode_utf8()
        .map(|c| c.into_owned())
        .map_err(|_| Error::BadRequest(format!("invalid percent-encoding in `{s}`")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Get => "GET",
            Method::Post => "POST",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Request {
    pub method: Method,
    /// Raw (still percent-encoded) path.
    pub path: String,
    pub query: Vec<(String, String)>,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl Request {
    pub fn new(method: Method, path: impl Into<String>) -> Self {
        Self {
            method,
            path: path.into(),
            query: Vec::new(),
            headers: Vec::new(),
            body: Vec::new(),
        }
    }

    pub fn get(path: impl Into<String>) -> Self {
        Self::new(Method::Get, path)
    }

    pub fn post_json<T: Serialize>(path: impl Into<String>, body: &T) -> Self {
        let mut req = Self::new(Method::Post, path);
        req.body = serde_json::to_vec(body).expect("request body serializes");
        req.headers
            .push(("content-type".into(), "application/json".into()));
        req
    }

    pub fn with_query(mut self, name: &str, value: impl Into<String>) -> Self {
        self.query.push((name.to_string(), value.into()));
        self
    }

    pub fn with_optional_query(self, name: &str, value: Option<impl Into<String>>) -> Self {
        match value {
            Some(v) => self.with_query(name, v),
            None => self,
        }
    }

    pub fn with_header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push((name.to_ascii_lowercase(), value.into()));
        self
    }

    pub fn with_bearer(self, token: Option<&str>) -> Self {
        match token {
            Some(t) => self.with_header("authorization", format!("Bearer {t}")),
            None => self,
        }
    }

    pub fn query_param(&self, name: &str) -> Option<&str> {
        self.query
            .iter()
            .find(|(k, v)| k == name && !v.is_empty())
            .map(|(_, v)| v.as_str())
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    /// Bearer credential from the `Authorization` header, if any.
    pub fn bearer(&self) -> Option<&str> {
        let value = self.header("authorization")?;
        let rest = value
            .strip_prefix("Bearer ")
            .or_else(|| value.strip_prefix("bearer "))?;
        let rest = rest.trim();
        (!rest.is_empty()).then_some(rest)
    }

    /// Decoded path segments.
    pub fn segments(&self) -> Result<Vec<String>> {
        self.path
            .split('/')
            .filter(|s| !s.is_empty())
            .map(decode_segment)
            .collect()
    }

    pub fn json<T: DeserializeOwned>(&self) -> Result<T> {
        serde_json::from_slice(&self.body)
            .map_err(|e| Error::BadRequest(format!("invalid JSON body: {e}")))
    }

    /// Path plus encoded query string, as it appears on the wire.
    pub fn path_and_query(&self) -> String {
        if self.query.is_empty() {
            return self.path.clone();
        }
        let query: Vec<String> = self
            .query
            .iter()
            .map(|(k, v)| format!("{}={}", encode_segment(k), encode_segment(v)))
            .collect();
        format!("{}?{}", self.path, query.join("&"))
    }

    /// Splits a raw `path?query` target into a request skeleton.
    pub fn from_target(method: Method, target: &str) -> Result<Self> {
        let (path, query) = target.split_once('?').unwrap_or((target, ""));
        let mut req = Request::new(method, path);
        for pair in query.split('&').filter(|p| !p.is_empty()) {
            let (k, v) = pair.split_once('=').unwrap_or((pair, ""));
            let k = decode_segment(&k.replace('+', " "))?;
            let v = decode_segment(&v.replace('+', " "))?;
            req.query.push((k, v));
        }
        Ok(req)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Response {
    pub fn json<T: Serialize>(status: u16, value: &T) -> Self {
        Self {
            status,
            content_type: "application/json".into(),
            body: serde_json::to_vec(value).expect("response body serializes"),
        }
    }

    pub fn ok<T: Serialize>(value: &T) -> Self {
        Self::json(200, value)
    }

    pub fn bytes(body: Vec<u8>) -> Self {
        Self {
            status: 200,
            content_type: "application/octet-stream".into(),
            body,
        }
    }

    pub fn error(err: &Error) -> Self {
        Self::json(err.http_status(), &err.to_wire())
    }

    pub fn not_found(path: &str) -> Self {
        Self::json(
            404,
            &WireError {
                error: "NOT_FOUND".into(),
                message: format!("no route for {path}"),
                detail: None,
                violations: Vec::new(),
                missing: Default::default(),
            },
        )
    }

    pub fn from_result<T: Serialize>(result: Result<T>) -> Self {
        match result {
            Ok(v) => Self::ok(&v),
            Err(e) => Self::error(&e),
        }
    }

    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    /// Decodes a 2xx JSON body, or turns an error body back into an [`Error`].
    pub fn into_result<T: DeserializeOwned>(self) -> Result<T> {
        if self.is_success() {
            return serde_json::from_slice(&self.body)
                .map_err(|e| Error::Protocol(format!("undecodable {} body: {e}", self.status)));
        }
        Err(self.into_error())
    }

    pub fn into_error(self) -> Error {
        match serde_json::from_slice::<WireError>(&self.body) {
            Ok(wire) if wire.error == "NOT_FOUND" => {
                Error::Protocol(format!("404: {}", wire.message))
            }
            Ok(wire) => Error::from_wire(wire),
            Err(_) => Error::Protocol(format!("status {} with non-JSON body", self.status)),
        }
    }
}

pub trait Service: Send + Sync {
    fn handle(&self, req: &Request) -> Response;
}

impl<S: Service + ?Sized> Service for Arc<S> {
    fn handle(&self, req: &Request) -> Response {
        (**self).handle(req)
    }
}

/// Something that can deliver a request to an endpoint. Connection-level
/// failures come back as [`Error::NodeUnreachable`].
pub trait Transport: Send + Sync {
    fn send(&self, endpoint: &str, req: Request) -> Result<Response>;
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn send(&self, endpoint: &str, req: Request) -> Result<Response> {
        (**self).send(endpoint, req)
    }
}

/// In-process transport: endpoints are names bound to services.
#[derive(Default, Clone)]
pub struct LocalTransport {
    services: Arc<RwLock<HashMap<String, Arc<dyn Service>>>>,
}

impl LocalTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&self, endpoint: &str, service: Arc<dyn Service>) {
        self.services
            .write()
            .unwrap()
            .insert(endpoint.to_string(), service);
    }

    /// Removes an endpoint; later sends fail as unreachable.
    pub fn unbind(&self, endpoint: &str) -> Option<Arc<dyn Service>> {
        self.services.write().unwrap().remove(endpoint)
    }
}

impl Transport for LocalTransport {
    fn send(&self, endpoint: &str, req: Request) -> Result<Response> {
        let service = self.services.read().unwrap().get(endpoint).cloned();
        match service {
            Some(service) => Ok(service.handle(&req)),
            None => Err(Error::NodeUnreachable {
                endpoint: endpoint.to_string(),
                reason: "no service bound".into(),
            }),
        }
    }
}
