//! Run specifications: a TOML file describing one synthesis run.
//!
//! ```toml
//! mode = "offline"
//! out_dir = "out"
//!
//! [views.x]
//! target = "x.png"
//! [views.y]
//! target = "y.png"
//! [views.z]
//! target = "z.png"
//!
//! [optim]
//! lambda = 10.0
//! ```
//!
//! Relative paths are resolved against the directory holding the spec file,
//! so the echoed configuration only contains absolute paths. Every table
//! other than `views` is optional. Parsing collects every problem it can find
//! before failing.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml_edit::TableLike;
use wireforge_core::{AugmentParams, OptimConfig, ViewId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Offline,
    Bridge,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Offline => "offline",
            Mode::Bridge => "bridge",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewSpec {
    /// Inactive views are rendered and exported but not scored.
    #[serde(default = "yes")]
    pub active: bool,
    /// Target drawing (offline mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<PathBuf>,
    /// Text condition (bridge mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    /// Visual condition image (bridge mode).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Views {
    pub x: ViewSpec,
    pub y: ViewSpec,
    pub z: ViewSpec,
}

impl Views {
    pub fn get(&self, view: ViewId) -> &ViewSpec {
        match view {
            ViewId::X => &self.x,
            ViewId::Y => &self.y,
            ViewId::Z => &self.z,
        }
    }

    pub fn active(&self) -> Vec<ViewId> {
        ViewId::ALL.into_iter().filter(|v| self.get(*v).active).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BridgeSettings {
    /// `host:port` of the gradient server.
    pub endpoint: String,
    pub timeout_ms: u64,
    /// Retries after the first failed attempt.
    pub retries: u32,
    /// First retry delay; doubled on every further retry.
    pub backoff_ms: u64,
}

impl Default for BridgeSettings {
    fn default() -> Self {
        BridgeSettings {
            endpoint: "127.0.0.1:8765".into(),
            timeout_ms: 120_000,
            retries: 5,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportSettings {
    pub svg: bool,
    pub obj: bool,
    /// Samples per segment in the OBJ polylines; the canvas flattening
    /// density when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub obj_samples: Option<usize>,
    /// Also write final view renders as PGM next to the PNGs.
    pub pgm: bool,
    /// Write per-view PNG snapshots every this many iterations; 0 disables.
    pub snapshot_every: usize,
}

impl Default for ExportSettings {
    fn default() -> Self {
        ExportSettings {
            svg: true,
            obj: true,
            obj_samples: None,
            pgm: false,
            snapshot_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub mode: Mode,
    pub out_dir: PathBuf,
    pub views: Views,
    pub optim: OptimConfig,
    pub bridge: BridgeSettings,
    pub export: ExportSettings,
}

/// Command-line overrides applied on top of a parsed spec.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub lambda: Option<f64>,
    pub iterations: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub mode: Option<Mode>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    /// Dotted key path, when the problem belongs to one key.
    pub key: Option<String>,
    /// 1-based line and column in the spec text.
    pub position: Option<(usize, usize)>,
    pub message: String,
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some((line, col)) = self.position {
            write!(f, "line {line}, column {col}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct SpecError {
    pub problems: Vec<Problem>,
}

impl fmt::Display for SpecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.problems.len();
        write!(f, "{n} problem{} in run spec", if n == 1 { "" } else { "s" })?;
        for p in &self.problems {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

fn problem(key: Option<&str>, message: impl Into<String>) -> Problem {
    Problem {
        key: key.map(String::from),
        position: None,
        message: message.into(),
    }
}

fn position(text: &str, span: Option<Range<usize>>) -> Option<(usize, usize)> {
    let start = span?.start.min(text.len());
    let before = &text[..start];
    let line = before.matches('\n').count() + 1;
    let col = start - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    Some((line, col))
}

/// A spec with every optional field set, so its serialized form names every
/// accepted key.
fn full_schema() -> serde_json::Value {
    let view = ViewSpec {
        active: true,
        target: Some("t".into()),
        prompt: Some("p".into()),
        condition: Some("c".into()),
    };
    let spec = RunSpec {
        mode: Mode::Offline,
        out_dir: "o".into(),
        views: Views {
            x: view.clone(),
            y: view.clone(),
            z: view,
        },
        optim: OptimConfig {
            samples_per_segment: Some(2),
            augment: Some(AugmentParams::default()),
            grad_clip: Some(1.0),
            ..OptimConfig::default()
        },
        bridge: BridgeSettings::default(),
        export: ExportSettings {
            obj_samples: Some(2),
            ..ExportSettings::default()
        },
    };
    let mut v = serde_json::to_value(&spec).expect("spec serializes");
    // active views are declared under [views], not in [optim]
    v["optim"].as_object_mut().expect("optim is a table").remove("views");
    v
}

fn scan_unknown(
    text: &str,
    table: &dyn TableLike,
    schema: &serde_json::Map<String, serde_json::Value>,
    path: &str,
    found: &mut Vec<(String, Problem)>,
) {
    for (name, item) in table.iter() {
        let key_path = if path.is_empty() {
            name.to_string()
        } else {
            format!("{path}.{name}")
        };
        match schema.get(name) {
            None => {
                let span = table.get_key_value(name).and_then(|(k, _)| k.span());
                let message = if key_path == "optim.views" {
                    "unknown key; declare active views in [views.<x|y|z>] instead".to_string()
                } else {
                    let mut known: Vec<&str> = schema.keys().map(String::as_str).collect();
                    known.sort_unstable();
                    format!("unknown key (expected one of: {})", known.join(", "))
                };
                found.push((
                    key_path.clone(),
                    Problem {
                        key: Some(key_path),
                        position: position(text, span),
                        message,
                    },
                ));
            }
            Some(serde_json::Value::Object(sub)) => {
                if let Some(t) = item.as_table_like() {
                    scan_unknown(text, t, sub, &key_path, found);
                }
            }
            Some(_) => {}
        }
    }
}

fn remove_path(table: &mut toml::Table, path: &str) {
    match path.split_once('.') {
        None => {
            table.remove(path);
        }
        Some((head, rest)) => {
            if let Some(toml::Value::Table(t)) = table.get_mut(head) {
                remove_path(t, rest);
            }
        }
    }
}

fn key_position(doc: &toml_edit::Document<&str>, text: &str, path: &str) -> Option<(usize, usize)> {
    let mut table: &dyn TableLike = doc.as_table();
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        let (key, item) = table.get_key_value(part)?;
        if parts.peek().is_none() {
            return position(text, key.span());
        }
        table = item.as_table_like()?;
    }
    None
}

fn section<T: for<'de> Deserialize<'de>>(
    table: &mut toml::Table,
    name: &str,
    fallback: impl FnOnce() -> Option<T>,
    problems: &mut Vec<Problem>,
    locate: &dyn Fn(&str) -> Option<(usize, usize)>,
) -> Option<T> {
    match table.remove(name) {
        None => {
            let v = fallback();
            if v.is_none() {
                problems.push(problem(Some(name), "missing"));
            }
            v
        }
        Some(value) => match value.try_into::<T>() {
            Ok(v) => Some(v),
            Err(e) => {
                problems.push(Problem {
                    key: Some(name.to_string()),
                    position: locate(name),
                    message: e.message().trim().to_string(),
                });
                None
            }
        },
    }
}

fn absolutize(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunSpec {
    pub fn from_file(path: &Path) -> Result<RunSpec, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|e| SpecError {
            problems: vec![problem(None, format!("cannot read {}: {e}", path.display()))],
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = std::path::absolute(&base).unwrap_or(base);
        RunSpec::parse_str(&text, &base)
    }

    /// Parses and validates spec text, resolving relative paths against
    /// `base`.
    pub fn parse_str(text: &str, base: &Path) -> Result<RunSpec, SpecError> {
        let doc = toml_edit::Document::parse(text).map_err(|e| SpecError {
            problems: vec![Problem {
                key: None,
                position: position(text, e.span()),
                message: e.message().trim().to_string(),
            }],
        })?;
        let schema = full_schema();
        let mut unknown = Vec::new();
        scan_unknown(
            text,
            doc.as_table(),
            schema.as_object().expect("schema is a table"),
            "",
            &mut unknown,
        );
        let mut problems: Vec<Problem> = unknown.iter().map(|(_, p)| p.clone()).collect();

        let mut table: toml::Table = toml::from_str(text).map_err(|e| SpecError {
            problems: vec![problem(None, e.to_string())],
        })?;
        for (path, _) in &unknown {
            remove_path(&mut table, path);
        }
        let locate = |p: &str| key_position(&doc, text, p);

        let mode = section(&mut table, "mode", || Some(Mode::default()), &mut problems, &locate);
        let out_dir = section(
            &mut table,
            "out_dir",
            || Some(PathBuf::from("wireforge-out")),
            &mut problems,
            &locate,
        );
        let optim = section(
            &mut table,
            "optim",
            || Some(OptimConfig::default()),
            &mut problems,
            &locate,
        );
        let bridge = section(
            &mut table,
            "bridge",
            || Some(BridgeSettings::default()),
            &mut problems,
            &locate,
        );
        let export = section(
            &mut table,
            "export",
            || Some(ExportSettings::default()),
            &mut problems,
            &locate,
        );

        let mut views_table = match table.remove("views") {
            Some(toml::Value::Table(t)) => t,
            Some(_) => {
                problems.push(Problem {
                    key: Some("views".into()),
                    position: locate("views"),
                    message: "must be a table".into(),
                });
                toml::Table::new()
            }
            None => toml::Table::new(),
        };
        let missing: Vec<&str> = ["x", "y", "z"]
            .into_iter()
            .filter(|v| !views_table.contains_key(*v))
            .collect();
        if !missing.is_empty() {
            problems.push(problem(
                Some("views"),
                format!("exactly 3 views required (missing: {})", missing.join(", ")),
            ));
        }
        let mut view_slots: Vec<Option<ViewSpec>> = Vec::new();
        for name in ["x", "y", "z"] {
            let v = if views_table.contains_key(name) {
                let key = format!("views.{name}");
                let value = views_table.remove(name).expect("checked above");
                match value.try_into::<ViewSpec>() {
                    Ok(v) => Some(v),
                    Err(e) => {
                        problems.push(Problem {
                            key: Some(key.clone()),
                            position: locate(&key),
                            message: e.message().trim().to_string(),
                        });
                        None
                    }
                }
            } else {
                None
            };
            view_slots.push(v);
        }

        let parsed = match (mode, out_dir, optim, bridge, export) {
            (Some(mode), Some(out_dir), Some(optim), Some(bridge), Some(export))
                if view_slots.iter().all(Option::is_some) =>
            {
                let mut it = view_slots.into_iter().map(|v| v.expect("all present"));
                let views = Views {
                    x: it.next().expect("x"),
                    y: it.next().expect("y"),
                    z: it.next().expect("z"),
                };
                let mut spec = RunSpec {
                    mode,
                    out_dir,
                    views,
                    optim,
                    bridge,
                    export,
                };
                spec.resolve(base);
                Some(spec)
            }
            _ => None,
        };
        if let Some(spec) = &parsed {
            problems.extend(spec.problems());
        }
        match parsed {
            Some(spec) if problems.is_empty() => Ok(spec),
            _ => Err(SpecError { problems }),
        }
    }

    /// Makes paths absolute and fills derived and mode-dependent defaults.
    fn resolve(&mut self, base: &Path) {
        absolutize(base, &mut self.out_dir);
        for v in [&mut self.views.x, &mut self.views.y, &mut self.views.z] {
            if let Some(p) = v.target.as_mut() {
                absolutize(base, p);
            }
            if let Some(p) = v.condition.as_mut() {
                absolutize(base, p);
            }
        }
        self.optim.views = self.views.active();
        self.apply_mode_defaults();
    }

    /// Bridge runs augment and clip by default; unset fields get those
    /// defaults when the mode is bridge.
    fn apply_mode_defaults(&mut self) {
        if self.mode == Mode::Bridge {
            self.optim.augment.get_or_insert_with(AugmentParams::default);
            self.optim.grad_clip.get_or_insert(10.0);
        }
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(s) = overrides.seed {
            self.optim.seed = s;
        }
        if let Some(l) = overrides.lambda {
            self.optim.lambda = l;
        }
        if let Some(n) = overrides.iterations {
            self.optim.iterations = n;
        }
        if let Some(o) = &overrides.out_dir {
            self.out_dir = std::path::absolute(o).unwrap_or_else(|_| o.clone());
        }
        if let Some(m) = overrides.mode {
            self.mode = m;
            self.apply_mode_defaults();
        }
    }

    /// Semantic checks on a structurally valid spec.
    pub fn problems(&self) -> Vec<Problem> {
        let mut out = Vec::new();
        for p in self.optim.problems() {
            out.push(problem(Some("optim"), p));
        }
        if self.optim.iterations == 0 {
            out.push(problem(Some("optim.iterations"), "must be at least 1"));
        }
        for view in ViewId::ALL {
            let v = self.views.get(view);
            let key = format!("views.{view}");
            if !v.active {
                continue;
            }
            match self.mode {
                Mode::Offline if v.target.is_none() => {
                    out.push(problem(Some(&key), "offline mode needs a target image"));
                }
                Mode::Bridge if v.prompt.is_none() && v.condition.is_none() => {
                    out.push(problem(Some(&key), "bridge mode needs a prompt or a condition image"));
                }
                _ => {}
            }
            let files = [("target", &v.target), ("condition", &v.condition)];
            for (name, path) in files {
                if let Some(p) = path {
                    if !p.is_file() {
                        out.push(problem(
                            Some(&format!("{key}.{name}")),
                            format!("cannot read {}", p.display()),
                        ));
                    }
                }
            }
        }
        if self.mode == Mode::Bridge {
            if self.bridge.endpoint.trim().is_empty() {
                out.push(problem(Some("bridge.endpoint"), "must not be empty"));
            }
            if self.bridge.timeout_ms == 0 {
                out.push(problem(Some("bridge.timeout_ms"), "must be positive"));
            }
        }
        if self.export.obj_samples.is_some_and(|s| s < 2) {
            out.push(problem(Some("export.obj_samples"), "must be at least 2"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SpecError { problems })
        }
    }

    /// The resolved configuration as TOML with every default written out.
    /// Optional settings that are unset are listed in a comment.
    pub fn echo(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("spec serializes to TOML");
        if let Some(toml::Value::Table(optim)) = table.get_mut("optim") {
            optim.remove("views");
        }
        let mut unset = Vec::new();
        if self.optim.samples_per_segment.is_none() {
            unset.push("optim.samples_per_segment (scaled with the canvas)");
        }
        if self.optim.augment.is_none() {
            unset.push("optim.augment (no augmentation)");
        }
        if self.optim.grad_clip.is_none() {
            unset.push("optim.grad_clip (no clipping)");
        }
        if self.export.obj_samples.is_none() {
            unset.push("export.obj_samples (canvas flattening density)");
        }
        let mut out = String::from("# wireforge resolved run configuration\n");
        for u in unset {
            out.push_str(&format!("# unset: {u}\n"));
        }
        out.push('\n');
        out.push_str(&toml::to_string(&table).expect("table serializes"));
        out
    }
}
