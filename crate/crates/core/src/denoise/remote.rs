use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::denoise::protocol::{
    self, DenoiseWireRequest, DenoiseWireResponse, GenerateBaseRequest, HealthResponse, ImagePayload,
    LatentPayload,
};
use crate::denoise::{Backend, BackendDescriptor, BaseRequest, DenoiseRequest};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::imaging::ImageBuffer;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    /// Service root, e.g. `http://127.0.0.1:8000`.
    pub base_url: String,
    /// Maximum concurrent requests (and idle connections kept).
    pub pool_size: usize,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub timeout: Duration,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            pool_size: 4,
            max_retries: 3,
            initial_backoff: Duration::from_millis(100),
            timeout: Duration::from_secs(120),
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Permits);

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Client for a denoiser service speaking the `/v1` protocol.
///
/// Calls are synchronous. Transport failures and 5xx replies are retried
/// with exponential backoff; 4xx replies fail immediately.
pub struct RemoteBackend {
    config: RemoteConfig,
    agent: ureq::Agent,
    permits: Permits,
    health: HealthResponse,
}

impl std::fmt::Debug for RemoteBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteBackend")
            .field("config", &self.config)
            .field("health", &self.health)
            .finish()
    }
}

enum Attempt<T> {
    Done(T),
    Retry(String),
    Fail(String),
}

impl RemoteBackend {
    /// Connects and reads `/v1/health`.
    pub fn connect(config: RemoteConfig) -> Result<Self> {
        let agent = ureq::AgentBuilder::new()
            .timeout(config.timeout)
            .max_idle_connections_per_host(config.pool_size.max(1))
            .build();
        let mut backend = Self {
            permits: Permits::new(config.pool_size),
            config,
            agent,
            health: HealthResponse {
                status: String::new(),
                native_resolution: 0,
                latent_channels: 0,
            },
        };
        let health: HealthResponse = backend.call(protocol::HEALTH, None::<&()>)?;
        if health.status != "ok" {
            return Err(Error::Protocol(format!(
                "service reports status {:?}",
                health.status
            )));
        }
        backend.health = health;
        Ok(backend)
    }

    pub fn health(&self) -> &HealthResponse {
        &self.health
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    fn url(&self, endpoint: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), endpoint)
    }

    fn attempt<T: DeserializeOwned, B: Serialize>(&self, url: &str, body: Option<&B>) -> Attempt<T> {
        let _permit = self.permits.acquire();
        let result = match body {
            Some(b) => self.agent.post(url).send_json(b),
            None => self.agent.get(url).call(),
        };
        match result {
            Ok(resp) => match resp.into_json::<T>() {
                Ok(v) => Attempt::Done(v),
                Err(e) => Attempt::Fail(format!("malformed response body: {e}")),
            },
            Err(ureq::Error::Status(code, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                let message = format!("HTTP {code}: {text}");
                if code >= 500 {
                    Attempt::Retry(message)
                } else {
                    Attempt::Fail(message)
                }
            }
            Err(ureq::Error::Transport(t)) => Attempt::Retry(t.to_string()),
        }
    }

    fn call<T: DeserializeOwned, B: Serialize>(&self, endpoint: &str, body: Option<&B>) -> Result<T> {
        let url = self.url(endpoint);
        let mut backoff = self.config.initial_backoff;
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&url, body) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(message) => {
                    return Err(Error::Remote {
                        endpoint: endpoint.to_owned(),
                        attempts,
                        retryable: false,
                        message,
                    })
                }
                Attempt::Retry(message) => {
                    if attempts > self.config.max_retries {
                        return Err(Error::Remote {
                            endpoint: endpoint.to_owned(),
                            attempts,
                            retryable: true,
                            message,
                        });
                    }
                    log::warn!("{endpoint}: attempt {attempts} failed ({message}), retrying in {backoff:?}");
                    thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
    }
}

impl Backend for RemoteBackend {
    fn descriptor(&self) -> BackendDescriptor {
        BackendDescriptor::Remote {
            url: self.config.base_url.clone(),
            native_resolution: self.health.native_resolution,
            latent_channels: self.health.latent_channels,
        }
    }

    fn denoise(&self, req: &DenoiseRequest<'_>) -> Result<Field> {
        let body = DenoiseWireRequest::from_field(req.latent, req.sigma, req.condition.map(|c| c.as_str()));
        let resp: DenoiseWireResponse = self.call(protocol::DENOISE, Some(&body))?;
        resp.prediction()
    }

    fn encode(&self, image: &ImageBuffer) -> Result<Field> {
        let body = ImagePayload::from_field(image.as_field());
        let resp: LatentPayload = self.call(protocol::ENCODE, Some(&body))?;
        let latent = resp.field()?;
        if latent.shape().channels != self.health.latent_channels {
            return Err(Error::Protocol(format!(
                "encode returned {} channels, health reports {}",
                latent.shape().channels,
                self.health.latent_channels
            )));
        }
        Ok(latent)
    }

    fn decode(&self, latent: &Field) -> Result<ImageBuffer> {
        let body = LatentPayload::from_field(latent);
        let resp: ImagePayload = self.call(protocol::DECODE, Some(&body))?;
        ImageBuffer::from_field(resp.field()?)
    }

    fn native_resolution(&self) -> (usize, usize) {
        (self.health.native_resolution, self.health.native_resolution)
    }

    fn generate_base(&self, req: &BaseRequest) -> Option<Result<ImageBuffer>> {
        let body = GenerateBaseRequest {
            prompt: req.prompt.clone(),
            seed: req.seed,
            width: req.width,
            height: req.height,
        };
        Some(
            self.call::<ImagePayload, _>(protocol::GENERATE_BASE, Some(&body))
                .and_then(|resp| ImageBuffer::from_field(resp.field()?)),
        )
    }
}
