//! `final_wireart.json`: control points, wire structure and the render
//! settings needed to reproduce every view exactly.

use serde::{Deserialize, Serialize};
use wireforge_core::geometry::{GeometryError, ProjectionMap, ViewPlane};
use wireforge_core::raster::render;
use wireforge_core::{Canvas, OptimConfig, Point3, RasterError, RasterImage, ViewId, Window, Wire, Wire2d, WireArt};

pub const SCHEMA: &str = "wireforge.wireart";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("malformed wire art file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a wire art file (schema {0:?})")]
    Schema(String),
    #[error("unsupported wire art version {0} (this build reads {SCHEMA_VERSION})")]
    Version(u32),
    #[error("wire {id}: {source}")]
    Wire { id: usize, source: GeometryError },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderSettings {
    pub canvas_size: usize,
    pub stroke_width: f64,
    pub aa_width: f64,
    pub samples_per_segment: usize,
    pub window_scale: f64,
}

impl RenderSettings {
    pub fn from_config(config: &OptimConfig) -> Result<Self, RasterError> {
        let canvas = config.canvas()?;
        Ok(RenderSettings {
            canvas_size: config.canvas_size,
            stroke_width: config.stroke_width,
            aa_width: config.aa_width,
            samples_per_segment: canvas.samples_per_segment,
            window_scale: config.window_scale,
        })
    }

    pub fn canvas(&self) -> Result<Canvas, RasterError> {
        Canvas::new(self.canvas_size, self.canvas_size, self.stroke_width, self.aa_width)?
            .with_samples(self.samples_per_segment)
    }

    pub fn window(&self) -> Result<Window, GeometryError> {
        Window::new(self.window_scale, Window::scene().center)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireRecord {
    pub id: usize,
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireArtFile {
    pub schema: String,
    pub version: u32,
    /// Completed optimization steps.
    pub iteration: usize,
    pub render: RenderSettings,
    pub wires: Vec<WireRecord>,
}

impl WireArtFile {
    pub fn new(art: &WireArt, render: RenderSettings, iteration: usize) -> Self {
        let wires = art
            .wires
            .iter()
            .map(|w| WireRecord {
                id: w.id,
                points: w.points().iter().map(|p| p.to_array()).collect(),
            })
            .collect();
        WireArtFile {
            schema: SCHEMA.to_string(),
            version: SCHEMA_VERSION,
            iteration,
            render,
            wires,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("wire art serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ArtifactError> {
        // check the header first so a newer file fails on its version, not
        // on whatever field it added
        #[derive(Deserialize)]
        struct Header {
            schema: String,
            version: u32,
        }
        let header: Header = serde_json::from_str(text)?;
        if header.schema != SCHEMA {
            return Err(ArtifactError::Schema(header.schema));
        }
        if header.version != SCHEMA_VERSION {
            return Err(ArtifactError::Version(header.version));
        }
        let file: WireArtFile = serde_json::from_str(text)?;
        file.render.canvas()?;
        file.render.window()?;
        Ok(file)
    }

    pub fn art(&self) -> Result<WireArt, ArtifactError> {
        let wires = self
            .wires
            .iter()
            .map(|w| {
                let points = w.points.iter().map(|&a| Point3::from_array(a)).collect();
                Wire::new(w.id, points).map_err(|source| ArtifactError::Wire { id: w.id, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(WireArt::new(wires))
    }
}

/// Scene to pixel map of `view`, the same map the engine uses.
pub fn pixel_map(canvas: &Canvas, window: &Window, view: ViewId) -> Result<ProjectionMap, GeometryError> {
    Ok(canvas.pixel_map(&ProjectionMap::new(&ViewPlane::axis(view), window)?))
}

pub fn project_view(
    art: &WireArt,
    canvas: &Canvas,
    window: &Window,
    view: ViewId,
) -> Result<Vec<Wire2d>, GeometryError> {
    let map = pixel_map(canvas, window, view)?;
    Ok(art.wires.iter().map(|w| map.project_wire(w)).collect())
}

pub fn render_view(
    art: &WireArt,
    render_settings: &RenderSettings,
    view: ViewId,
) -> Result<RasterImage, ArtifactError> {
    let canvas = render_settings.canvas()?;
    let window = render_settings.window()?;
    let wires = project_view(art, &canvas, &window, view)?;
    Ok(render(&wires, &canvas)?.with_view(view))
}
