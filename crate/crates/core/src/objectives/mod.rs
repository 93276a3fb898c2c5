//! Per-view losses and the gradient-provider contract.
//!
//! A provider receives the rendered image of one view and returns a loss and
//! the per-pixel gradient `dL/dpixel`. The engine turns that into control
//! point gradients. Offline providers match a target image; the diffusion
//! bridge (in the `wireforge` crate) implements the same trait over HTTP.

mod augment;
mod chamfer;
mod mse;

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

pub use augment::{augment, sample_warp, AugmentParams, Augmented, WarpOperator};
pub use chamfer::{
    chamfer_objective, chamfer_objective_with, distance_transform, gaussian_blur, gaussian_kernel, ChamferParams,
    ChamferTarget,
};
pub use mse::mse_objective;

use crate::geometry::ViewId;
use crate::raster::RasterImage;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("image is {got_w}x{got_h}, expected {want_w}x{want_h}")]
    DimensionMismatch {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("empty target")]
    EmptyTarget,
    #[error("invalid parameter: {0}")]
    BadParameter(&'static str),
}

pub(crate) fn check_dims(a: &RasterImage, b: &RasterImage) -> Result<(), ObjectiveError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(ObjectiveError::DimensionMismatch {
            want_w: b.width(),
            want_h: b.height(),
            got_w: a.width(),
            got_h: a.height(),
        });
    }
    Ok(())
}

/// A target drawing for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetImage {
    image: RasterImage,
    view: ViewId,
}

impl TargetImage {
    pub fn new(image: RasterImage, view: ViewId) -> Self {
        TargetImage {
            image: image.with_view(view),
            view,
        }
    }

    pub fn image(&self) -> &RasterImage {
        &self.image
    }

    pub fn view(&self) -> ViewId {
        self.view
    }

    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }
}

/// A scalar loss and its gradient with respect to each pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveResult {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub width: usize,
    pub height: usize,
}

impl ObjectiveResult {
    pub fn zero(width: usize, height: usize) -> Self {
        ObjectiveResult {
            loss: 0.0,
            grad: alloc::vec![0.0; width * height],
            width,
            height,
        }
    }

    /// `self += weight * other`.
    pub fn accumulate(&mut self, other: &ObjectiveResult, weight: f64) {
        self.loss += weight * other.loss;
        for (a, b) in self.grad.iter_mut().zip(&other.grad) {
            *a += weight * b;
        }
    }
}

/// Everything a provider may look at to score one view.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientRequest {
    pub view: ViewId,
    pub image: RasterImage,
    /// Text condition.
    pub prompt: Option<String>,
    /// Visual condition (scribble or line drawing).
    pub condition: Option<RasterImage>,
    pub iteration: usize,
    pub total_iterations: usize,
    /// Per-request seed for providers that sample noise.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProviderError {
    /// The provider could not be reached; the call may be retried.
    #[error("transport error: {0}")]
    Transport(String),
    /// The provider answered with something that breaks the contract.
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("no target registered for view {0}")]
    MissingTarget(ViewId),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

impl ProviderError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, ProviderError::Transport(_))
    }
}

pub trait GradientProvider: Send + Sync {
    fn evaluate(&self, request: &GradientRequest) -> Result<ObjectiveResult, ProviderError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum ObjectiveKind {
    Mse,
    Chamfer,
    /// Chamfer alone for the first part of the run, then chamfer plus a
    /// weighted MSE term.
    Scheduled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct ObjectiveConfig {
    pub kind: ObjectiveKind,
    pub blur_sigma: f64,
    pub coverage_weight: f64,
    /// Fraction of the run spent on chamfer alone under `Scheduled`.
    pub chamfer_fraction: f64,
    /// Weight of the MSE term once the blend starts.
    pub mse_weight: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            kind: ObjectiveKind::Scheduled,
            blur_sigma: 2.0,
            coverage_weight: 100.0,
            chamfer_fraction: 0.6,
            mse_weight: 100.0,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if !(self.blur_sigma > 0.0 && self.blur_sigma.is_finite()) {
            return Err(ObjectiveError::BadParameter("blur_sigma must be positive"));
        }
        if !(self.coverage_weight >= 0.0 && self.mse_weight >= 0.0) {
            return Err(ObjectiveError::BadParameter("objective weights must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.chamfer_fraction) {
            return Err(ObjectiveError::BadParameter("chamfer_fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    fn chamfer_params(&self) -> ChamferParams {
        ChamferParams {
            blur_sigma: self.blur_sigma,
            coverage_weight: self.coverage_weight,
        }
    }
}

struct PreparedTarget {
    target: TargetImage,
    chamfer: Option<ChamferTarget>,
}

/// Image-matching provider: one target per view, scored with MSE and/or the
/// distance-transform chamfer loss. Distance transforms are computed once.
pub struct OfflineProvider {
    config: ObjectiveConfig,
    targets: [Option<PreparedTarget>; 3],
}

impl OfflineProvider {
    pub fn new(config: ObjectiveConfig, targets: Vec<TargetImage>) -> Result<Self, ObjectiveError> {
        config.validate()?;
        let mut slots: [Option<PreparedTarget>; 3] = [None, None, None];
        for target in targets {
            let chamfer = match config.kind {
                ObjectiveKind::Mse => None,
                _ => Some(ChamferTarget::prepare(&target, &config.chamfer_params())?),
            };
            let i = target.view().index();
            slots[i] = Some(PreparedTarget { target, chamfer });
        }
        Ok(OfflineProvider { config, targets: slots })
    }

    pub fn config(&self) -> &ObjectiveConfig {
        &self.config
    }

    pub fn target(&self, view: ViewId) -> Option<&TargetImage> {
        self.targets[view.index()].as_ref().map(|t| &t.target)
    }

    /// Scores `image` for `view` as it would be at `iteration` of
    /// `total_iterations`.
    pub fn score(
        &self,
        view: ViewId,
        image: &RasterImage,
        iteration: usize,
        total_iterations: usize,
    ) -> Result<ObjectiveResult, ProviderError> {
        let prepared = self.targets[view.index()]
            .as_ref()
            .ok_or(ProviderError::MissingTarget(view))?;
        let chamfer = || {
            prepared
                .chamfer
                .as_ref()
                .expect("chamfer prepared for non-MSE kinds")
                .evaluate(image)
        };
        let result = match self.config.kind {
            ObjectiveKind::Mse => mse_objective(image, &prepared.target)?,
            ObjectiveKind::Chamfer => chamfer()?,
            ObjectiveKind::Scheduled => {
                let switch = self.config.chamfer_fraction * total_iterations as f64;
                let mut r = chamfer()?;
                if (iteration as f64) >= switch {
                    r.accumulate(&mse_objective(image, &prepared.target)?, self.config.mse_weight);
                }
                r
            }
        };
        Ok(result)
    }
}

impl GradientProvider for OfflineProvider {
    fn evaluate(&self, request: &GradientRequest) -> Result<ObjectiveResult, ProviderError> {
        self.score(
            request.view,
            &request.image,
            request.iteration,
            request.total_iterations,
        )
    }
}

/// Where gradients come from.
#[derive(Clone, Copy)]
pub enum ProviderMode<'a> {
    Offline(&'a OfflineProvider),
    Bridge(&'a dyn GradientProvider),
}

/// Routes a request to the configured provider and checks the result
/// against the [`ObjectiveResult`] contract.
pub fn provider_dispatch(request: &GradientRequest, mode: ProviderMode<'_>) -> Result<ObjectiveResult, ProviderError> {
    let result = match mode {
        ProviderMode::Offline(p) => p.evaluate(request)?,
        ProviderMode::Bridge(p) => p.evaluate(request)?,
    };
    let (w, h) = (request.image.width(), request.image.height());
    if result.width != w || result.height != h || result.grad.len() != w * h {
        return Err(ProviderError::Contract(alloc::format!(
            "gradient is {}x{} ({} values) for a {}x{} image",
            result.width,
            result.height,
            result.grad.len(),
            w,
            h
        )));
    }
    if !result.loss.is_finite() {
        return Err(ProviderError::Contract(alloc::format!(
            "non-finite loss {}",
            result.loss
        )));
    }
    if let Some(i) = result.grad.iter().position(|g| !g.is_finite()) {
        return Err(ProviderError::Contract(alloc::format!(
            "non-finite gradient at pixel {i}"
        )));
    }
    Ok(result)
}
