use std::time::Duration;

use wireforge_core::objectives::{GradientProvider, GradientRequest, ObjectiveResult, ProviderError};

use super::{decode_grad, encode_image, BridgeRequest, BridgeResponse, ErrorBody, Health, PROTOCOL_VERSION};

#[derive(Debug, Clone, PartialEq)]
pub struct ClientSettings {
    /// `host:port`, or a full `http://` base URL.
    pub endpoint: String,
    pub timeout: Duration,
    /// Extra attempts after a retriable failure.
    pub retries: u32,
    /// Delay before the first retry; doubles each time.
    pub backoff: Duration,
    pub guidance_scale: f64,
}

/// Gradient provider backed by a bridge server.
pub struct BridgeClient {
    base: String,
    agent: ureq::Agent,
    settings: ClientSettings,
}

impl BridgeClient {
    pub fn new(settings: ClientSettings) -> Self {
        let base = if settings.endpoint.starts_with("http://") || settings.endpoint.starts_with("https://") {
            settings.endpoint.trim_end_matches('/').to_string()
        } else {
            format!("http://{}", settings.endpoint.trim_end_matches('/'))
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        BridgeClient { base, agent, settings }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    pub fn health(&self) -> Result<Health, ProviderError> {
        self.with_retries(|| {
            let resp = self
                .agent
                .get(&format!("{}/healthz", self.base))
                .call()
                .map_err(|e| ProviderError::Transport(e.to_string()))?;
            let health: Health = read_ok(resp)?;
            if health.version != PROTOCOL_VERSION {
                return Err(ProviderError::Contract(format!(
                    "server speaks protocol {}, client {PROTOCOL_VERSION}",
                    health.version
                )));
            }
            Ok(health)
        })
    }

    pub fn to_wire(&self, request: &GradientRequest) -> BridgeRequest {
        BridgeRequest {
            version: PROTOCOL_VERSION,
            view: request.view,
            image: encode_image(&request.image),
            prompt: request.prompt.clone(),
            condition: request.condition.as_ref().map(encode_image),
            guidance_scale: self.settings.guidance_scale,
            iteration: request.iteration,
            total_iterations: request.total_iterations,
            seed: request.seed,
        }
    }

    fn post(&self, body: &BridgeRequest) -> Result<BridgeResponse, ProviderError> {
        let resp = self
            .agent
            .post(&format!("{}/grad", self.base))
            .send_json(body)
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        read_ok(resp)
    }

    fn with_retries<T>(&self, mut attempt: impl FnMut() -> Result<T, ProviderError>) -> Result<T, ProviderError> {
        let mut delay = self.settings.backoff;
        let mut tries = 0;
        loop {
            match attempt() {
                Err(e) if e.is_retriable() && tries < self.settings.retries => {
                    tries += 1;
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                Err(ProviderError::Transport(msg)) if tries > 0 => {
                    return Err(ProviderError::Transport(format!(
                        "{msg} (after {} attempts)",
                        tries + 1
                    )));
                }
                other => return other,
            }
        }
    }
}

fn read_ok<T: serde::de::DeserializeOwned>(mut resp: ureq::http::Response<ureq::Body>) -> Result<T, ProviderError> {
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| ProviderError::Transport(format!("reading response: {e}")))?;
    if status == 200 {
        return serde_json::from_str(&text).map_err(|e| ProviderError::Contract(format!("bad response body: {e}")));
    }
    let body: Option<ErrorBody> = serde_json::from_str(&text).ok();
    let detail = body.as_ref().map_or(text.as_str(), |b| b.error.as_str());
    // server-side faults may be retried; a rejected request will not improve
    let retriable = (status >= 500 && body.as_ref().is_none_or(|b| b.retriable)) || status == 429;
    let msg = format!("HTTP {status}: {detail}");
    Err(if retriable {
        ProviderError::Transport(msg)
    } else {
        ProviderError::Contract(msg)
    })
}

impl GradientProvider for BridgeClient {
    fn evaluate(&self, request: &GradientRequest) -> Result<ObjectiveResult, ProviderError> {
        if request.prompt.is_none() && request.condition.is_none() {
            return Err(ProviderError::Contract(format!(
                "view {} has neither a prompt nor a condition",
                request.view
            )));
        }
        let body = self.to_wire(request);
        let resp = self.with_retries(|| self.post(&body))?;
        let (w, h) = (request.image.width(), request.image.height());
        let grad = decode_grad(&resp.grad, w, h)?;
        if !resp.loss_proxy.is_finite() {
            return Err(ProviderError::Contract(format!(
                "non-finite loss_proxy {}",
                resp.loss_proxy
            )));
        }
        Ok(ObjectiveResult {
            loss: resp.loss_proxy,
            grad,
            width: w,
            height: h,
        })
    }
}
