//! Drives one run from a [`RunSpec`]: loads inputs, runs the engine and
//! writes every output file.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use wireforge_core::engine::ViewCondition;
use wireforge_core::objectives::{ProviderError, ProviderMode};
use wireforge_core::{
    Engine, EngineError, ObjectiveKind, OfflineProvider, RasterImage, RunObserver, RunState, TargetImage, TraceRecord,
    ViewId,
};

use crate::artifact::{project_view, RenderSettings, WireArtFile};
use crate::bridge::{BridgeClient, ClientSettings};
use crate::export;
use crate::imageio;
use crate::spec::{Mode, RunSpec, SpecError};

pub const FINAL_WIREART: &str = "final_wireart.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const TRACE: &str = "trace.csv";
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";
pub const OBJ: &str = "wireart.obj";

/// File stem of per-view outputs, e.g. `view_X`.
pub fn view_stem(view: ViewId) -> String {
    format!("view_{}", view.name().to_uppercase())
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Spec(#[from] SpecError),
    #[error("invalid inputs:{}", .0.iter().map(|p| format!("\n  - {p}")).collect::<String>())]
    Inputs(Vec<String>),
    #[error("bridge failure: {0}")]
    Bridge(String),
    #[error("numerical abort: {0}")]
    Numerical(EngineError),
    #[error("{0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Spec(_) | RunError::Inputs(_) => 2,
            RunError::Bridge(_) => 3,
            RunError::Numerical(_) => 4,
            RunError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    /// False when the run was interrupted; a checkpoint was written instead
    /// of the final exports.
    pub completed: bool,
    pub iterations_done: usize,
    pub trace: Vec<TraceRecord>,
}

/// Targets and conditions read from disk.
pub struct Inputs {
    pub targets: Vec<TargetImage>,
    pub conditions: [ViewCondition; 3],
}

fn read_sized(key: &str, path: &Path, size: usize, problems: &mut Vec<String>) -> Option<RasterImage> {
    match imageio::read_image(path) {
        Ok(img) if img.width() == size && img.height() == size => Some(img),
        Ok(img) => {
            problems.push(format!(
                "{key}: {} is {}x{}, the canvas is {size}x{size}",
                path.display(),
                img.width(),
                img.height()
            ));
            None
        }
        Err(e) => {
            problems.push(format!("{key}: {e}"));
            None
        }
    }
}

pub fn load_inputs(spec: &RunSpec) -> Result<Inputs, RunError> {
    let size = spec.optim.canvas_size;
    let mut problems = Vec::new();
    let mut targets = Vec::new();
    let mut conditions: [ViewCondition; 3] = Default::default();
    for view in spec.views.active() {
        let v = spec.views.get(view);
        match spec.mode {
            Mode::Offline => {
                if let Some(p) = &v.target {
                    let key = format!("views.{view}.target");
                    if let Some(img) = read_sized(&key, p, size, &mut problems) {
                        if img.pixels().iter().all(|&px| px >= 0.5) && spec.optim.objective.kind != ObjectiveKind::Mse {
                            problems.push(format!("{key}: {} has no ink", p.display()));
                        }
                        targets.push(TargetImage::new(img, view));
                    }
                }
            }
            Mode::Bridge => {
                let c = &mut conditions[view.index()];
                c.prompt = v.prompt.clone();
                if let Some(p) = &v.condition {
                    c.image = read_sized(&format!("views.{view}.condition"), p, size, &mut problems);
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(Inputs { targets, conditions })
    } else {
        Err(RunError::Inputs(problems))
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RunError {
    RunError::Io(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), RunError> {
    std::fs::write(path, contents).map_err(|e| io_err(path, e))
}

struct Observer<'a, 'p> {
    stop: &'a AtomicBool,
    start: Instant,
    engine: &'a Engine<'p>,
    snapshot_every: usize,
    snapshot_dir: PathBuf,
    records: Vec<TraceRecord>,
    log: &'a mut dyn Write,
    error: Option<RunError>,
}

impl RunObserver for Observer<'_, '_> {
    fn should_stop(&mut self) -> bool {
        self.error.is_some() || self.stop.load(Ordering::SeqCst)
    }

    fn now_ms(&mut self) -> f64 {
        self.start.elapsed().as_secs_f64() * 1e3
    }

    fn on_record(&mut self, record: &TraceRecord, _state: &RunState) {
        let every = 10 * self.engine.config().log_every;
        if record.iteration.is_multiple_of(every) || record.iteration + 1 == self.engine.config().iterations {
            let [x, y, z] = record.view_losses;
            let _ = writeln!(
                self.log,
                "iter {:>5}  loss x {x:.5} y {y:.5} z {z:.5}  mst {:.5}  total {:.5}",
                record.iteration, record.mst_budget, record.total
            );
        }
        self.records.push(record.clone());
    }

    fn on_step(&mut self, state: &RunState) {
        if self.snapshot_every == 0 || !state.iteration.is_multiple_of(self.snapshot_every) {
            return;
        }
        for view in ViewId::ALL {
            let path = self.snapshot_dir.join(format!(
                "iter_{:05}_{}.png",
                state.iteration,
                view.name().to_uppercase()
            ));
            let res = self
                .engine
                .render_view(&state.art, view)
                .map_err(RunError::Numerical)
                .and_then(|img| imageio::write_image(&img, &path).map_err(|e| io_err(&path, e)));
            if let Err(e) = res {
                self.error = Some(e);
                return;
            }
        }
    }
}

fn engine_error(e: EngineError, mode: Mode) -> RunError {
    match e {
        EngineError::Provider { view, source } if mode == Mode::Bridge => match source {
            ProviderError::Transport(_) | ProviderError::Contract(_) => {
                RunError::Bridge(format!("view {view}: {source}"))
            }
            other => RunError::Numerical(EngineError::Provider { view, source: other }),
        },
        other => RunError::Numerical(other),
    }
}

/// Writes the final exports for `state` into `out`.
fn write_exports(spec: &RunSpec, engine: &Engine<'_>, state: &RunState, out: &Path) -> Result<(), RunError> {
    let render = RenderSettings::from_config(&spec.optim).map_err(|e| RunError::Numerical(e.into()))?;
    let file = WireArtFile::new(&state.art, render, state.iteration);
    write_file(&out.join(FINAL_WIREART), file.to_json())?;
    let canvas = *engine.canvas();
    let window = spec.optim.window();
    for view in ViewId::ALL {
        let stem = view_stem(view);
        let image = engine.render_view(&state.art, view).map_err(RunError::Numerical)?;
        let png = out.join(format!("{stem}.png"));
        imageio::write_image(&image, &png).map_err(|e| io_err(&png, e))?;
        if spec.export.pgm {
            let pgm = out.join(format!("{stem}.pgm"));
            imageio::write_image(&image, &pgm).map_err(|e| io_err(&pgm, e))?;
        }
        if spec.export.svg {
            let wires = project_view(&state.art, &canvas, &window, view).map_err(|e| RunError::Numerical(e.into()))?;
            write_file(&out.join(format!("{stem}.svg")), export::svg(&wires, &canvas))?;
        }
    }
    if spec.export.obj {
        let samples = spec.export.obj_samples.unwrap_or(canvas.samples_per_segment);
        write_file(&out.join(OBJ), export::obj(&state.art, samples))?;
    }
    Ok(())
}

fn write_checkpoint(spec: &RunSpec, state: &RunState, out: &Path) -> Result<(), RunError> {
    let render = RenderSettings::from_config(&spec.optim).map_err(|e| RunError::Numerical(e.into()))?;
    write_file(
        &out.join(CHECKPOINT),
        WireArtFile::new(&state.art, render, state.iteration).to_json(),
    )
}

/// Runs `spec` to completion, or until `stop` is raised between two steps.
pub fn execute(spec: &RunSpec, stop: &AtomicBool, log: &mut dyn Write) -> Result<RunReport, RunError> {
    spec.validate()?;
    let inputs = load_inputs(spec)?;
    let out = spec.out_dir.clone();
    std::fs::create_dir_all(&out)
        .map_err(|e| RunError::Inputs(vec![format!("out_dir: cannot create {}: {e}", out.display())]))?;
    let snapshot_dir = out.join("snapshots");
    if spec.export.snapshot_every > 0 {
        std::fs::create_dir_all(&snapshot_dir).map_err(|e| io_err(&snapshot_dir, e))?;
    }
    write_file(&out.join(RESOLVED_CONFIG), spec.echo())?;

    let offline;
    let client;
    let provider = match spec.mode {
        Mode::Offline => {
            offline = OfflineProvider::new(spec.optim.objective, inputs.targets)
                .map_err(|e| RunError::Inputs(vec![e.to_string()]))?;
            ProviderMode::Offline(&offline)
        }
        Mode::Bridge => {
            client = BridgeClient::new(ClientSettings {
                endpoint: spec.bridge.endpoint.clone(),
                timeout: Duration::from_millis(spec.bridge.timeout_ms),
                retries: spec.bridge.retries,
                backoff: Duration::from_millis(spec.bridge.backoff_ms),
                guidance_scale: spec.optim.guidance_scale,
            });
            let health = client
                .health()
                .map_err(|e| RunError::Bridge(format!("{}: {e}", client.base_url())))?;
            let _ = writeln!(log, "bridge {} model {}", client.base_url(), health.model);
            ProviderMode::Bridge(&client)
        }
    };
    let engine = Engine::new(spec.optim.clone(), provider)
        .map_err(|e| RunError::Inputs(vec![e.to_string()]))?
        .with_conditions(inputs.conditions);
    let mut state = engine.start(engine.initialize());

    let mut observer = Observer {
        stop,
        start: Instant::now(),
        engine: &engine,
        snapshot_every: spec.export.snapshot_every,
        snapshot_dir,
        records: Vec::new(),
        log,
        error: None,
    };
    let result = engine.run(&mut state, &mut observer);
    let records = std::mem::take(&mut observer.records);
    let observer_error = observer.error.take();
    write_file(&out.join(TRACE), export::trace_csv(&records))?;
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            write_checkpoint(spec, &state, &out)?;
            return Err(engine_error(e, spec.mode));
        }
    };
    if let Some(e) = observer_error {
        write_checkpoint(spec, &state, &out)?;
        return Err(e);
    }
    if outcome.completed {
        write_exports(spec, &engine, &state, &out)?;
    } else {
        write_checkpoint(spec, &state, &out)?;
    }
    Ok(RunReport {
        out_dir: out,
        completed: outcome.completed,
        iterations_done: state.iteration,
        trace: records,
    })
}
