use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

/// A blocking HTTP GET against `https://{host}{path_and_query}`.
pub trait Transport: Send + Sync {
    fn get(&self, host: &str, path_and_query: &str) -> Result<HttpResponse, TransportError>;
}

impl<T: Transport + ?Sized> Transport for &T {
    fn get(&self, host: &str, path_and_query: &str) -> Result<HttpResponse, TransportError> {
        (**self).get(host, path_and_query)
    }
}

impl<T: Transport + ?Sized> Transport for Arc<T> {
    fn get(&self, host: &str, path_and_query: &str) -> Result<HttpResponse, TransportError> {
        (**self).get(host, path_and_query)
    }
}

/// Source of wall-clock time and blocking waits.
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
    fn sleep(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

/// HTTPS transport backed by `ureq`.
#[cfg(feature = "https")]
pub struct HttpsTransport {
    agent: ureq::Agent,
}

#[cfg(feature = "https")]
impl HttpsTransport {
    pub fn new(user_agent: &str) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .user_agent(user_agent)
            .timeout_global(Some(Duration::from_secs(60)))
            .build();
        Self {
            agent: config.into(),
        }
    }
}

#[cfg(feature = "https")]
impl Default for HttpsTransport {
    fn default() -> Self {
        Self::new(concat!("fedinet/", env!("CARGO_PKG_VERSION")))
    }
}

#[cfg(feature = "https")]
impl Transport for HttpsTransport {
    fn get(&self, host: &str, path_and_query: &str) -> Result<HttpResponse, TransportError> {
        let url = format!("https://{host}{path_and_query}");
        let mut resp = self
            .agent
            .get(&url)
            .header("Accept", "application/json")
            .call()
            .map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .filter_map(|(k, v)| v.to_str().ok().map(|v| (k.as_str().to_owned(), v.to_owned())))
            .collect();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse {
            status,
            headers,
            body,
        })
    }
}
