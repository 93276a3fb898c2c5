//! Core of `wireforge`: synthesis of multi-view wire art.
//!
//! A sculpture is a set of 3D wires, each a chain of cubic Bézier segments.
//! Every wire is projected orthographically onto three mutually orthogonal
//! view planes, rendered with a differentiable stroke rasterizer, and scored
//! against a per-view target. A minimum-spanning-tree penalty over the wire
//! endpoints pulls the wires into one connectable structure. Gradients from
//! all views and from the tree penalty are summed and applied with Adam.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the CLI and the
//! diffusion bridge client live in the `wireforge` crate.
//!
//! ## Layout
//!
//! * [`geometry`]: points, Bézier segments, wires, view planes and the
//!   projection map with its adjoint.
//! * [`raster`]: flattening, distance-field stroke rendering and its backward
//!   pass.
//! * [`objectives`]: per-view losses (MSE, distance-transform chamfer), the
//!   augmentation warp and the gradient-provider contract.
//! * [`connectivity`]: endpoint graph, Prim's MST and the tree loss.
//! * [`optim`]: Adam with bias correction.
//! * [`engine`]: initialization, the optimization step and the run loop.
//! * [`glyphs`]: stroke-font letters used to build benchmark targets.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(feature = "parallel")]
extern crate std;

pub mod connectivity;
pub mod engine;
pub mod geometry;
pub mod glyphs;
pub mod objectives;
pub mod optim;
pub mod raster;

pub use connectivity::{endpoint_distance, mst_loss_and_grad, prim_mst, Endpoint, EndpointPair, MstResult, WireGraph};
pub use engine::{
    Engine, EngineError, InitConfig, OptimConfig, RunObserver, RunOutcome, RunState, StepReport, TraceRecord,
    ViewCondition,
};
pub use geometry::{
    CubicSegment, GeometryError, Point2, Point3, ProjectionMap, Segment2, ViewId, ViewPlane, Window, Wire, Wire2d,
    WireArt,
};
pub use objectives::{
    AugmentParams, GradientProvider, GradientRequest, ObjectiveConfig, ObjectiveError, ObjectiveKind, ObjectiveResult,
    OfflineProvider, ProviderError, ProviderMode, TargetImage,
};
pub use optim::{Adam, AdamConfig};
pub use raster::{Canvas, RasterError, RasterGradients, RasterImage};
