//! Files, formats and the command line around [`wireforge_core`].
//!
//! * [`spec`]: the TOML run specification and its resolved echo.
//! * [`imageio`]: grayscale PNG and PGM.
//! * [`artifact`]: the versioned `final_wireart.json`.
//! * [`export`]: SVG, OBJ and the trace CSV.
//! * [`bridge`]: HTTP client for an external gradient server, plus an echo
//!   server used as a test double.
//! * [`run`]: one full run from a spec to an output directory.
//! * [`selfcheck`]: the checks behind `wireforge check`.

pub mod artifact;
pub mod bridge;
pub mod export;
pub mod imageio;
pub mod run;
pub mod selfcheck;
pub mod spec;

pub use wireforge_core as core;
