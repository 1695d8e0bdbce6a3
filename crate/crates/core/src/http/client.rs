use std::time::Duration;

use super::{Method, Request, Response, Transport};
use crate::error::{Error, Result};

/// Blocking HTTP transport. Non-2xx statuses are returned as responses, not
/// errors; only connection failures become [`Error::NodeUnreachable`].
#[derive(Clone)]
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(10))
    }
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self { agent }
    }
}

impl Transport for HttpTransport {
    fn send(&self, endpoint: &str, req: Request) -> Result<Response> {
        let url = format!("{}{}", endpoint.trim_end_matches('/'), req.path_and_query());
        let unreachable = |reason: String| Error::NodeUnreachable {
            endpoint: endpoint.to_string(),
            reason,
        };
        let result = match req.method {
            Method::Get => {
                let mut builder = self.agent.get(&url);
                for (k, v) in &req.headers {
                    builder = builder.header(k.as_str(), v.as_str());
                }
                builder.call()
            }
            Method::Post => {
                let mut builder = self.agent.post(&url);
                for (k, v) in &req.headers {
                    builder = builder.header(k.as_str(), v.as_str());
                }
                builder.send(&req.body[..])
            }
        };
        let mut resp = result.map_err(|e| unreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        let content_type = resp
            .headers()
            .get("content-type")
            .and_then(|v| v.to_str().ok())
            .unwrap_or("application/octet-stream")
            .to_string();
        let body = resp
            .body_mut()
            .with_config()
            .limit(64 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| unreachable(e.to_string()))?;
        Ok(Response {
            status,
            content_type,
            body,
        })
    }
}
