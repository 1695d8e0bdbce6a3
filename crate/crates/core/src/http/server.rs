use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use super::{Method, Request, Response, Service};
use crate::error::{Error, Result};

const WORKERS: usize = 4;

/// A bound (but not yet serving) listener. Binding first lets callers learn
/// OS-assigned ports before wiring services that need to know their own URL.
pub struct HttpServer {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
}

impl HttpServer {
    pub fn bind(addr: &str) -> Result<Self> {
        let server = tiny_http::Server::http(addr).map_err(|e| {
            let msg = e.to_string();
            if msg.contains("in use") || msg.contains("AddrInUse") {
                Error::PortInUse(addr.to_string())
            } else {
                Error::Io(std::io::Error::other(format!("{addr}: {msg}")))
            }
        })?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Io(std::io::Error::other("listener has no IP address")))?;
        Ok(Self {
            server: Arc::new(server),
            addr,
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn serve(self, service: Arc<dyn Service>) -> ServerHandle {
        let workers = (0..WORKERS)
            .map(|_| {
                let server = Arc::clone(&self.server);
                let service = Arc::clone(&service);
                std::thread::spawn(move || {
                    while let Ok(request) = server.recv() {
                        handle_one(&*service, request);
                    }
                })
            })
            .collect();
        ServerHandle {
            server: self.server,
            addr: self.addr,
            workers,
        }
    }
}

fn handle_one(service: &dyn Service, mut raw: tiny_http::Request) {
    let method = match raw.method() {
        tiny_http::Method::Get => Some(Method::Get),
        tiny_http::Method::Post => Some(Method::Post),
        _ => None,
    };
    let response = match method {
        None => Response::error(&Error::BadRequest(format!(
            "unsupported method {}",
            raw.method()
        ))),
        Some(method) => match Request::from_target(method, raw.url()) {
            Err(e) => Response::error(&e),
            Ok(mut req) => {
                req.headers = raw
                    .headers()
                    .iter()
                    .map(|h| {
                        (
                            h.field.as_str().as_str().to_ascii_lowercase(),
                            h.value.as_str().to_string(),
                        )
                    })
                    .collect();
                let mut body = Vec::new();
                match raw.as_reader().read_to_end(&mut body) {
                    Ok(_) => {
                        req.body = body;
                        service.handle(&req)
                    }
                    Err(e) => Response::error(&Error::BadRequest(e.to_string())),
                }
            }
        },
    };
    let header =
        tiny_http::Header::from_bytes(&b"Content-Type"[..], response.content_type.as_bytes())
            .expect("content type header is ASCII");
    let out = tiny_http::Response::from_data(response.body)
        .with_status_code(response.status)
        .with_header(header);
    // The client may have gone away; nothing useful to do about it here.
    let _ = raw.respond(out);
}

pub struct ServerHandle {
    server: Arc<tiny_http::Server>,
    addr: SocketAddr,
    workers: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        for _ in &self.workers {
            self.server.unblock();
        }
        for worker in self.workers.drain(..) {
            let _ = worker.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::{HttpTransport, Transport};

    struct Hello;
    impl Service for Hello {
        fn handle(&self, req: &Request) -> Response {
            Response::ok(&serde_json::json!({
                "segments": req.segments().unwrap(),
                "q": req.query_param("q"),
                "auth": req.bearer(),
            }))
        }
    }

    #[test]
    fn serves_over_tcp_on_ephemeral_port() {
        let server = HttpServer::bind("127.0.0.1:0").unwrap();
        assert_ne!(server.local_addr().port(), 0);
        let handle = server.serve(Arc::new(Hello));
        let req = Request::get(format!(
            "/objects/{}",
            crate::http::encode_segment("guid:a/b")
        ))
        .with_query("q", "x y")
        .with_bearer(Some("tok"));
        let resp = HttpTransport::default().send(&handle.url(), req).unwrap();
        let v: serde_json::Value = resp.into_result().unwrap();
        assert_eq!(v["segments"], serde_json::json!(["objects", "guid:a/b"]));
        assert_eq!(v["q"], "x y");
        assert_eq!(v["auth"], "tok");
        let url = handle.url();
        handle.shutdown();
        assert!(HttpTransport::default()
            .send(&url, Request::get("/"))
            .is_err());
    }
}
