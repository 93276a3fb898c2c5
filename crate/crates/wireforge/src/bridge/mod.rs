//! HTTP/JSON protocol to an external gradient server (a diffusion prior
//! scoring each rendered view), the client used by bridge-mode runs, and an
//! in-process echo server used as a test double.
//!
//! `POST /grad` takes a [`BridgeRequest`] and answers a [`BridgeResponse`];
//! `GET /healthz` answers a [`Health`]. Images travel as base64 PNG;
//! gradients as base64 raw little-endian `f32`, row-major.

mod client;
pub mod stub;

pub use client::{BridgeClient, ClientSettings};
pub use stub::{EchoStub, StubOptions};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use wireforge_core::objectives::ProviderError;
use wireforge_core::{RasterImage, ViewId};

use crate::imageio;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeRequest {
    pub version: u32,
    pub view: ViewId,
    /// Base64 PNG of the rendered view.
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    /// Base64 PNG of the visual condition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<String>,
    pub guidance_scale: f64,
    pub iteration: usize,
    pub total_iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeResponse {
    /// Base64 raw little-endian `f32`, row-major, one value per pixel.
    pub grad: String,
    pub loss_proxy: f64,
    pub timestep_used: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub version: u32,
    pub model: String,
}

/// Error body of a non-200 answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(default)]
    pub retriable: bool,
}

pub fn encode_image(image: &RasterImage) -> String {
    B64.encode(imageio::encode_png(image).expect("in-memory PNG encoding"))
}

pub fn decode_image(b64: &str) -> Result<RasterImage, String> {
    let bytes = B64.decode(b64).map_err(|e| format!("bad base64: {e}"))?;
    imageio::decode(&bytes).map_err(|e| e.to_string())
}

pub fn encode_grad(grad: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(4 * grad.len());
    for &g in grad {
        bytes.extend_from_slice(&(g as f32).to_le_bytes());
    }
    B64.encode(bytes)
}

/// Decodes a gradient and checks it has `width * height` finite values.
pub fn decode_grad(b64: &str, width: usize, height: usize) -> Result<Vec<f64>, ProviderError> {
    let bytes = B64
        .decode(b64)
        .map_err(|e| ProviderError::Contract(format!("gradient is not base64: {e}")))?;
    if bytes.len() != 4 * width * height {
        return Err(ProviderError::Contract(format!(
            "gradient has {} bytes, expected {} for {width}x{height}",
            bytes.len(),
            4 * width * height
        )));
    }
    let grad: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(ProviderError::Contract(format!("non-finite gradient at pixel {i}")));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_round_trip_is_f32_exact() {
        let g = [0.0, -1.5, 3.25e-7, 1e3];
        let back = decode_grad(&encode_grad(&g), 2, 2).unwrap();
        for (a, b) in g.iter().zip(&back) {
            assert_eq!(*b, *a as f32 as f64);
        }
    }

    #[test]
    fn grad_size_and_finiteness_checked() {
        assert!(matches!(
            decode_grad(&encode_grad(&[1.0; 3]), 2, 2),
            Err(ProviderError::Contract(_))
        ));
        assert!(matches!(
            decode_grad(&encode_grad(&[1.0, f64::NAN, 0.0, 0.0]), 2, 2),
            Err(ProviderError::Contract(_))
        ));
        assert!(matches!(decode_grad("%%", 1, 1), Err(ProviderError::Contract(_))));
    }

    #[test]
    fn request_json_field_names() {
        let req = BridgeRequest {
            version: PROTOCOL_VERSION,
            view: ViewId::Y,
            image: "AAAA".into(),
            prompt: Some("a cat".into()),
            condition: None,
            guidance_scale: 100.0,
            iteration: 3,
            total_iterations: 2000,
            seed: 42,
        };
        let v: serde_json::Value = serde_json::to_value(&req).unwrap();
        assert_eq!(v["view"], "y");
        assert_eq!(v["version"], 1);
        assert!(v.get("condition").is_none());
        let back: BridgeRequest = serde_json::from_value(v).unwrap();
        assert_eq!(back, req);
    }
}
