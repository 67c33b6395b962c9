//! Loopback HTTP server speaking the denoiser protocol, for tests.

#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use hiwave::denoise::protocol::{
    self, DenoiseWireRequest, DenoiseWireResponse, ErrorBody, GenerateBaseRequest, HealthResponse,
    ImagePayload, LatentPayload,
};
use hiwave::denoise::{AnalyticBackend, Backend, Condition, DenoiseRequest};
use hiwave::field::{Field, Shape};
use hiwave::imaging::ImageBuffer;

pub enum Mode {
    /// Replies with the payload it received; base images are mid-grey.
    Echo,
    /// Serves an analytic backend.
    Analytic(AnalyticBackend),
}

pub struct Behaviour {
    pub mode: Mode,
    /// The first `fail_first` requests get this status.
    pub fail_first: usize,
    pub fail_status: u16,
    pub native_resolution: usize,
    pub latent_channels: usize,
}

impl Behaviour {
    pub fn echo() -> Self {
        Self {
            mode: Mode::Echo,
            fail_first: 0,
            fail_status: 503,
            native_resolution: 16,
            latent_channels: 3,
        }
    }

    pub fn analytic(backend: AnalyticBackend) -> Self {
        let (h, _) = backend.native_resolution();
        Self {
            mode: Mode::Analytic(backend),
            native_resolution: h,
            ..Self::echo()
        }
    }
}

pub struct TestServer {
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
    pub url: String,
    pub requests: Arc<AtomicUsize>,
}

impl Drop for TestServer {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

type Reply = (u16, String);

fn error(status: u16, code: &str, message: impl Into<String>) -> Reply {
    let body = ErrorBody {
        error: code.into(),
        message: message.into(),
    };
    (status, serde_json::to_string(&body).unwrap())
}

fn json<T: serde::Serialize>(value: &T) -> Reply {
    (200, serde_json::to_string(value).unwrap())
}

fn parse<T: serde::de::DeserializeOwned>(body: &str) -> Result<T, Reply> {
    serde_json::from_str(body).map_err(|e| error(400, "malformed_body", e.to_string()))
}

fn handle(b: &Behaviour, method: &str, path: &str, body: &str) -> Result<Reply, Reply> {
    let bad = |e: hiwave::Error| error(400, "bad_payload", e.to_string());
    Ok(match (method, path) {
        ("GET", protocol::HEALTH) => json(&HealthResponse {
            status: "ok".into(),
            native_resolution: b.native_resolution,
            latent_channels: b.latent_channels,
        }),
        ("POST", protocol::DENOISE) => {
            let req: DenoiseWireRequest = parse(body)?;
            let latent = req.latent().map_err(bad)?;
            match &b.mode {
                Mode::Echo => json(&DenoiseWireResponse::from_field(&latent)),
                Mode::Analytic(backend) => {
                    let condition = req.condition.map(Condition::new);
                    let pred = backend
                        .denoise(&DenoiseRequest::new(&latent, req.sigma, condition.as_ref()))
                        .map_err(|e| error(422, "invalid_request", e.to_string()))?;
                    json(&DenoiseWireResponse::from_field(&pred))
                }
            }
        }
        ("POST", protocol::ENCODE) => {
            let req: ImagePayload = parse(body)?;
            let image = req.field().map_err(bad)?;
            match &b.mode {
                Mode::Echo => json(&LatentPayload::from_field(&image)),
                Mode::Analytic(backend) => {
                    let img = ImageBuffer::from_field(image).map_err(bad)?;
                    json(&LatentPayload::from_field(&backend.encode(&img).map_err(bad)?))
                }
            }
        }
        ("POST", protocol::DECODE) => {
            let req: LatentPayload = parse(body)?;
            let latent = req.field().map_err(bad)?;
            match &b.mode {
                Mode::Echo => json(&ImagePayload::from_field(&latent)),
                Mode::Analytic(backend) => {
                    json(&ImagePayload::from_field(backend.decode(&latent).map_err(bad)?.as_field()))
                }
            }
        }
        ("POST", protocol::GENERATE_BASE) => {
            let req: GenerateBaseRequest = parse(body)?;
            let shape = Shape::new(3, req.height, req.width);
            let value = (req.seed % 100) as f32 / 100.0;
            json(&ImagePayload::from_field(&Field::filled(shape, value).map_err(bad)?))
        }
        _ => error(404, "not_found", format!("{method} {path}")),
    })
}

pub fn spawn(behaviour: Behaviour) -> TestServer {
    let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
    let url = format!("http://{}", server.server_addr().to_ip().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let thread = {
        let server = Arc::clone(&server);
        let requests = Arc::clone(&requests);
        std::thread::spawn(move || {
            for mut request in server.incoming_requests() {
                let n = requests.fetch_add(1, Ordering::SeqCst);
                let mut body = String::new();
                let _ = std::io::Read::read_to_string(request.as_reader(), &mut body);
                let (status, text) = if n < behaviour.fail_first {
                    error(behaviour.fail_status, "injected", "injected failure")
                } else {
                    let method = request.method().as_str().to_owned();
                    let path = request.url().to_owned();
                    handle(&behaviour, &method, &path, &body).unwrap_or_else(|e| e)
                };
                let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                let response = tiny_http::Response::from_string(text)
                    .with_status_code(status)
                    .with_header(header);
                let _ = request.respond(response);
            }
        })
    };
    TestServer {
        server,
        thread: Some(thread),
        url,
        requests,
    }
}
