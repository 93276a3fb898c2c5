//! The optimization loop.
//!
//! One step renders each active view, asks the provider for `dL/dpixel`,
//! pulls that back through the rasterizer and the projection to the 3D
//! control points, sums the views, adds `lambda` times the MST gradient and
//! applies one Adam update to the flat control-point vector.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::connectivity::{mst_budget, mst_loss_and_grad, MstLoss};
use crate::geometry::{GeometryError, Point3, ProjectionMap, ViewId, ViewPlane, Window, Wire, Wire2d, WireArt};
use crate::objectives::{
    augment, provider_dispatch, AugmentParams, GradientRequest, ObjectiveConfig, ObjectiveError, ObjectiveResult,
    ProviderError, ProviderMode,
};
use crate::optim::{Adam, AdamConfig};
use crate::raster::{Canvas, RasterError, RasterImage, Rasterization};

pub use crate::objectives::ObjectiveKind;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("provider failed on view {view}: {source}")]
    Provider { view: ViewId, source: ProviderError },
    #[error("non-finite gradient from {stage}")]
    NonFinite { stage: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct InitConfig {
    /// Wire roots are uniform in `[-h, h]^3`.
    pub root_half_extent: f64,
    /// Standard deviation of the Gaussian step between successive control
    /// points, scene units.
    pub radius: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            root_half_extent: 0.65,
            radius: 0.08,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct OptimConfig {
    pub n_wires: usize,
    pub segments_per_wire: usize,
    /// Square canvas edge in pixels.
    pub canvas_size: usize,
    pub stroke_width: f64,
    pub aa_width: f64,
    /// Flattening density; scales with the canvas when unset.
    pub samples_per_segment: Option<usize>,
    /// Scene units per canvas width.
    pub window_scale: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    /// Classifier-free guidance scale forwarded to the bridge.
    pub guidance_scale: f64,
    pub seed: u64,
    /// Views that contribute an objective.
    pub views: Vec<ViewId>,
    /// Loss and gradient multiplier per view, indexed x, y, z.
    pub view_weights: [f64; 3],
    pub objective: ObjectiveConfig,
    pub augment: Option<AugmentParams>,
    /// Augmentation draws averaged per view and step.
    pub augment_draws: usize,
    pub init: InitConfig,
    /// Global L2 clipping of the assembled gradient.
    pub grad_clip: Option<f64>,
    pub adam: AdamConfig,
    pub log_every: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            n_wires: 30,
            segments_per_wire: 5,
            canvas_size: 256,
            stroke_width: 3.0,
            aa_width: 1.0,
            samples_per_segment: None,
            window_scale: 2.0,
            iterations: 2000,
            learning_rate: 0.01,
            lambda: 50.0,
            guidance_scale: 100.0,
            seed: 0,
            views: ViewId::ALL.to_vec(),
            view_weights: [1.0; 3],
            objective: ObjectiveConfig::default(),
            augment: None,
            augment_draws: 2,
            init: InitConfig::default(),
            grad_clip: None,
            adam: AdamConfig::default(),
            log_every: 10,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        match self.problems().into_iter().next() {
            Some(p) => Err(EngineError::Config(p)),
            None => Ok(()),
        }
    }

    /// Every configuration problem, in field order.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut check = |ok: bool, msg: &str| {
            if !ok {
                out.push(String::from(msg));
            }
        };
        check(self.n_wires > 0, "n_wires must be at least 1");
        check(self.segments_per_wire > 0, "segments_per_wire must be at least 1");
        check(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            "learning_rate must be positive",
        );
        check(
            self.lambda >= 0.0 && self.lambda.is_finite(),
            "lambda must be non-negative",
        );
        check(self.log_every > 0, "log_every must be at least 1");
        check(!self.views.is_empty(), "at least one view must be active");
        check(
            self.view_weights.iter().all(|w| w.is_finite()),
            "view weights must be finite",
        );
        check(
            self.init.radius >= 0.0 && self.init.root_half_extent >= 0.0 && self.init.root_half_extent <= 1.0,
            "init radius must be >= 0 and root extent within [0, 1]",
        );
        check(self.grad_clip.is_none_or(|c| c > 0.0), "grad_clip must be positive");
        if let Some(a) = &self.augment {
            if let Err(e) = a.validate() {
                out.push(alloc::format!("augment: {e}"));
            }
            if self.augment_draws == 0 {
                out.push(String::from("augment_draws must be at least 1"));
            }
        }
        if let Err(e) = self.objective.validate() {
            out.push(alloc::format!("objective: {e}"));
        }
        if let Err(e) = self.canvas() {
            out.push(alloc::format!("canvas: {e}"));
        }
        if let Err(e) = Window::new(self.window_scale, Window::scene().center) {
            out.push(alloc::format!("window: {e}"));
        }
        out
    }

    pub fn canvas(&self) -> Result<Canvas, RasterError> {
        let c = Canvas::new(self.canvas_size, self.canvas_size, self.stroke_width, self.aa_width)?;
        match self.samples_per_segment {
            Some(s) => c.with_samples(s),
            None => Ok(c),
        }
    }

    pub fn window(&self) -> Window {
        Window {
            scale: self.window_scale,
            center: Window::scene().center,
        }
    }

    pub fn is_active(&self, view: ViewId) -> bool {
        self.views.contains(&view)
    }
}

/// Random wires: a root uniform in the inner cube, then a Gaussian random
/// walk through the remaining control points, clamped to `[-1, 1]^3`.
pub fn initialize(config: &OptimConfig) -> WireArt {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let h = config.init.root_half_extent;
    let step = Normal::new(0.0, config.init.radius).expect("radius validated non-negative");
    let count = 3 * config.segments_per_wire + 1;
    let wires = (0..config.n_wires)
        .map(|id| {
            let mut p = Point3::new(
                rng.random_range(-h..=h),
                rng.random_range(-h..=h),
                rng.random_range(-h..=h),
            );
            let mut points = Vec::with_capacity(count);
            points.push(p);
            for _ in 1..count {
                let d = Point3::new(step.sample(&mut rng), step.sample(&mut rng), step.sample(&mut rng));
                p = clamp_to_scene(p + d);
                points.push(p);
            }
            Wire::new(id, points).expect("3k+1 finite points")
        })
        .collect();
    WireArt::new(wires)
}

fn clamp_to_scene(p: Point3) -> Point3 {
    Point3::new(p.x.clamp(-1.0, 1.0), p.y.clamp(-1.0, 1.0), p.z.clamp(-1.0, 1.0))
}

/// Mixes the run seed with a step, view and draw into one stream seed.
pub fn derive_seed(seed: u64, iteration: usize, view: ViewId, draw: usize) -> u64 {
    let mut x = seed ^ 0x9e37_79b9_7f4a_7c15;
    for v in [iteration as u64, view.index() as u64, draw as u64] {
        x = x.wrapping_add(v).wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    x
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub art: WireArt,
    pub adam: Adam,
    pub iteration: usize,
}

/// One view's contribution to a step.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEvaluation {
    pub view: ViewId,
    /// Weighted provider loss.
    pub loss: f64,
    /// Weighted flat 3D gradient.
    pub grad: Vec<f64>,
    pub image: RasterImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBreakdown {
    pub views: Vec<ViewEvaluation>,
    /// Present only when `lambda > 0`.
    pub mst: Option<MstLoss>,
    /// Sum of view gradients plus `lambda` times the MST gradient, before
    /// clipping.
    pub total: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    /// Iteration the losses were measured at (before the update).
    pub iteration: usize,
    /// Weighted per-view losses; zero for inactive views.
    pub view_losses: [f64; 3],
    /// MST budget, when the tree was evaluated this step.
    pub mst_budget: Option<f64>,
    pub total_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRecord {
    pub iteration: usize,
    pub view_losses: [f64; 3],
    pub mst_budget: f64,
    pub total: f64,
    pub ms: f64,
}

/// Hooks into [`Engine::run`].
pub trait RunObserver {
    /// Checked between steps; `true` ends the run early.
    fn should_stop(&mut self) -> bool {
        false
    }
    /// Wall-clock milliseconds since some fixed origin.
    fn now_ms(&mut self) -> f64 {
        0.0
    }
    fn on_record(&mut self, _record: &TraceRecord, _state: &RunState) {}
    /// Called after every update.
    fn on_step(&mut self, _state: &RunState) {}
}

impl RunObserver for () {}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trace: Vec<TraceRecord>,
    /// False when the observer stopped the run early.
    pub completed: bool,
}

/// Text and visual conditions attached to every request for one view.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ViewCondition {
    pub prompt: Option<String>,
    pub image: Option<RasterImage>,
}

pub struct Engine<'p> {
    config: OptimConfig,
    canvas: Canvas,
    maps: [ProjectionMap; 3],
    provider: ProviderMode<'p>,
    conditions: [ViewCondition; 3],
    mst_calls: AtomicUsize,
}

impl<'p> Engine<'p> {
    pub fn new(config: OptimConfig, provider: ProviderMode<'p>) -> Result<Self, EngineError> {
        config.validate()?;
        let canvas = config.canvas()?;
        let window = config.window();
        let mut maps = [ProjectionMap::new(&ViewPlane::axis(ViewId::X), &window)?; 3];
        for v in ViewId::ALL {
            maps[v.index()] = canvas.pixel_map(&ProjectionMap::new(&ViewPlane::axis(v), &window)?);
        }
        Ok(Engine {
            config,
            canvas,
            maps,
            provider,
            conditions: Default::default(),
            mst_calls: AtomicUsize::new(0),
        })
    }

    /// Conditions forwarded to the provider, indexed x, y, z.
    pub fn with_conditions(mut self, conditions: [ViewCondition; 3]) -> Self {
        self.conditions = conditions;
        self
    }

    pub fn config(&self) -> &OptimConfig {
        &self.config
    }

    pub fn canvas(&self) -> &Canvas {
        &self.canvas
    }

    /// Scene to pixel map of a view.
    pub fn pixel_map(&self, view: ViewId) -> &ProjectionMap {
        &self.maps[view.index()]
    }

    /// How many times the MST gradient has been evaluated.
    pub fn mst_gradient_calls(&self) -> usize {
        self.mst_calls.load(Ordering::Relaxed)
    }

    pub fn initialize(&self) -> WireArt {
        initialize(&self.config)
    }

    pub fn start(&self, art: WireArt) -> RunState {
        let adam = Adam::new(3 * art.point_count(), self.config.adam);
        RunState {
            art,
            adam,
            iteration: 0,
        }
    }

    /// Wires of `art` in pixel coordinates of `view`.
    pub fn project(&self, art: &WireArt, view: ViewId) -> Vec<Wire2d> {
        let map = &self.maps[view.index()];
        art.wires.iter().map(|w| map.project_wire(w)).collect()
    }

    pub fn render_view(&self, art: &WireArt, view: ViewId) -> Result<RasterImage, EngineError> {
        let raster = Rasterization::new(&self.project(art, view), &self.canvas)?;
        Ok(raster.into_image().with_view(view))
    }

    fn request(&self, view: ViewId, image: RasterImage, iteration: usize, draw: usize) -> GradientRequest {
        GradientRequest {
            view,
            image,
            prompt: self.conditions[view.index()].prompt.clone(),
            condition: self.conditions[view.index()].image.clone(),
            iteration,
            total_iterations: self.config.iterations,
            seed: derive_seed(self.config.seed, iteration, view, draw),
        }
    }

    fn dispatch(&self, req: &GradientRequest) -> Result<ObjectiveResult, EngineError> {
        provider_dispatch(req, self.provider).map_err(|source| EngineError::Provider { view: req.view, source })
    }

    /// Provider loss and pixel gradient for one view, through the
    /// augmentation stage when configured.
    fn pixel_objective(
        &self,
        image: &RasterImage,
        view: ViewId,
        iteration: usize,
    ) -> Result<ObjectiveResult, EngineError> {
        let Some(params) = &self.config.augment else {
            return self.dispatch(&self.request(view, image.clone(), iteration, 0));
        };
        let draws = self.config.augment_draws;
        let mut acc = ObjectiveResult::zero(image.width(), image.height());
        for draw in 0..draws {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, iteration, view, draw));
            let aug = augment(image, params, &mut rng)?;
            let mut r = self.dispatch(&self.request(view, aug.image.clone(), iteration, draw))?;
            r.grad = aug.backward(&r.grad);
            acc.accumulate(&r, 1.0 / draws as f64);
        }
        Ok(acc)
    }

    pub fn view_gradient(&self, art: &WireArt, view: ViewId, iteration: usize) -> Result<ViewEvaluation, EngineError> {
        let wires = self.project(art, view);
        let raster = Rasterization::new(&wires, &self.canvas)?;
        let image = raster.image().clone().with_view(view);
        let objective = self.pixel_objective(&image, view, iteration)?;
        let grads2d = raster.backward(&objective.grad)?;
        let weight = self.config.view_weights[view.index()];
        let map = &self.maps[view.index()];
        let mut grad = Vec::with_capacity(3 * art.point_count());
        for wire in &grads2d.per_wire {
            for &g in wire {
                let g3 = map.apply_transpose(g) * weight;
                grad.extend_from_slice(&g3.to_array());
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(EngineError::NonFinite {
                stage: alloc::format!("view {view} (rasterizer backward)"),
            });
        }
        Ok(ViewEvaluation {
            view,
            loss: weight * objective.loss,
            grad,
            image,
        })
    }

    fn active_views(&self) -> Vec<ViewId> {
        ViewId::ALL.into_iter().filter(|v| self.config.is_active(*v)).collect()
    }

    #[cfg(feature = "parallel")]
    fn evaluate_views(&self, art: &WireArt, iteration: usize) -> Result<Vec<ViewEvaluation>, EngineError> {
        use rayon::prelude::*;
        self.active_views()
            .into_par_iter()
            .map(|v| self.view_gradient(art, v, iteration))
            .collect()
    }

    #[cfg(not(feature = "parallel"))]
    fn evaluate_views(&self, art: &WireArt, iteration: usize) -> Result<Vec<ViewEvaluation>, EngineError> {
        self.active_views()
            .into_iter()
            .map(|v| self.view_gradient(art, v, iteration))
            .collect()
    }

    /// Every gradient term of one step, and their sum.
    pub fn gradient(&self, art: &WireArt, iteration: usize) -> Result<GradientBreakdown, EngineError> {
        let views = self.evaluate_views(art, iteration)?;
        let mut total = vec![0.0; 3 * art.point_count()];
        // fixed x, y, z order keeps the sum independent of scheduling
        for v in &views {
            for (t, g) in total.iter_mut().zip(&v.grad) {
                *t += g;
            }
        }
        let mst = if self.config.lambda > 0.0 {
            self.mst_calls.fetch_add(1, Ordering::Relaxed);
            let m = mst_loss_and_grad(art);
            if m.grad.iter().any(|g| !g.is_finite()) {
                return Err(EngineError::NonFinite {
                    stage: String::from("connectivity (MST gradient)"),
                });
            }
            for (t, g) in total.iter_mut().zip(&m.grad) {
                *t += self.config.lambda * g;
            }
            Some(m)
        } else {
            None
        };
        Ok(GradientBreakdown { views, mst, total })
    }

    /// Summed weighted objective loss of `art`, scored as at `iteration`.
    pub fn objective_loss(&self, art: &WireArt, iteration: usize) -> Result<f64, EngineError> {
        let mut total = 0.0;
        for v in self.active_views() {
            let image = self.render_view(art, v)?;
            let r = self.pixel_objective(&image, v, iteration)?;
            total += self.config.view_weights[v.index()] * r.loss;
        }
        Ok(total)
    }

    pub fn step(&self, state: &mut RunState) -> Result<StepReport, EngineError> {
        let iteration = state.iteration;
        let breakdown = self.gradient(&state.art, iteration)?;
        let mut grad = breakdown.total;
        if let Some(limit) = self.config.grad_clip {
            let norm = libm::sqrt(grad.iter().map(|g| g * g).sum::<f64>());
            if norm > limit {
                let s = limit / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        let mut coords = state.art.flat_coords();
        state.adam.update(&mut coords, &grad, self.config.learning_rate);
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(EngineError::NonFinite {
                stage: String::from("optimizer update"),
            });
        }
        state.art.set_flat_coords(&coords)?;
        state.iteration += 1;

        let mut view_losses = [0.0; 3];
        for v in &breakdown.views {
            view_losses[v.view.index()] = v.loss;
        }
        let mst_budget = breakdown.mst.as_ref().map(|m| m.loss);
        let total_loss = view_losses.iter().sum::<f64>() + self.config.lambda * mst_budget.unwrap_or(0.0);
        Ok(StepReport {
            iteration,
            view_losses,
            mst_budget,
            total_loss,
        })
    }

    /// Runs the remaining iterations of `state`, recording a trace entry
    /// every `log_every` steps and at the last step.
    pub fn run(&self, state: &mut RunState, observer: &mut dyn RunObserver) -> Result<RunOutcome, EngineError> {
        let mut trace = Vec::new();
        let last = self.config.iterations.saturating_sub(1);
        while state.iteration < self.config.iterations {
            if observer.should_stop() {
                return Ok(RunOutcome {
                    trace,
                    completed: false,
                });
            }
            let log = state.iteration.is_multiple_of(self.config.log_every) || state.iteration == last;
            let budget_before = if log && self.config.lambda == 0.0 {
                Some(mst_budget(&state.art))
            } else {
                None
            };
            let t0 = observer.now_ms();
            let report = self.step(state)?;
            let ms = observer.now_ms() - t0;
            if log {
                let record = TraceRecord {
                    iteration: report.iteration,
                    view_losses: report.view_losses,
                    mst_budget: report.mst_budget.or(budget_before).unwrap_or(0.0),
                    total: report.total_loss,
                    ms,
                };
                observer.on_record(&record, state);
                trace.push(record);
            }
            observer.on_step(state);
        }
        Ok(RunOutcome { trace, completed: true })
    }
}
