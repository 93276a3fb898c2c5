use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use wireforge::artifact::{project_view, WireArtFile};
use wireforge::run::{execute, view_stem, OBJ};
use wireforge::spec::{Mode, Overrides, RunSpec};
use wireforge::{export, selfcheck};
use wireforge_core::ViewId;

#[derive(Parser)]
#[command(name = "wireforge", version, about = "Multi-view wire art synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize wires for a run spec and write all outputs.
    Run(RunArgs),
    /// Re-export a saved wire art file.
    Export(ExportArgs),
    /// Run the built-in invariant checks.
    Check {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Offline,
    Bridge,
}

#[derive(Args)]
struct RunArgs {
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
}

#[derive(Args)]
#[group(required = true, multiple = true)]
struct Formats {
    #[arg(long)]
    svg: bool,
    #[arg(long)]
    obj: bool,
}

#[derive(Args)]
struct ExportArgs {
    wireart: PathBuf,
    #[command(flatten)]
    formats: Formats,
    /// Output directory; defaults to the directory of the input file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// OBJ samples per segment; defaults to the file's flattening density.
    #[arg(long)]
    samples: Option<usize>,
}

const EXIT_INTERRUPTED: u8 = 130;

fn run(args: RunArgs) -> ExitCode {
    let mut spec = match RunSpec::from_file(&args.spec) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    spec.apply(&Overrides {
        seed: args.seed,
        lambda: args.lambda,
        iterations: args.iterations,
        out_dir: args.out,
        mode: args.mode.map(|m| match m {
            ModeArg::Offline => Mode::Offline,
            ModeArg::Bridge => Mode::Bridge,
        }),
    });
    let stop = Arc::new(AtomicBool::new(false));
    let flag = Arc::clone(&stop);
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        eprintln!("warning: cannot install interrupt handler: {e}");
    }
    let mut log = std::io::stderr();
    match execute(&spec, &stop, &mut log) {
        Ok(report) if report.completed => {
            eprintln!(
                "done: {} iterations, outputs in {}",
                report.iterations_done,
                report.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Ok(report) => {
            eprintln!(
                "interrupted after {} iterations; checkpoint in {}",
                report.iterations_done,
                report.out_dir.display()
            );
            ExitCode::from(EXIT_INTERRUPTED)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn export_cmd(args: ExportArgs) -> Result<(), String> {
    let text = std::fs::read_to_string(&args.wireart).map_err(|e| format!("{}: {e}", args.wireart.display()))?;
    let file = WireArtFile::from_json(&text).map_err(|e| format!("{}: {e}", args.wireart.display()))?;
    let art = file.art().map_err(|e| e.to_string())?;
    let canvas = file.render.canvas().map_err(|e| e.to_string())?;
    let window = file.render.window().map_err(|e| e.to_string())?;
    let out = args
        .out
        .or_else(|| args.wireart.parent().map(PathBuf::from))
        .unwrap_or_default();
    std::fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
    let write = |name: String, body: String| {
        let path = out.join(name);
        std::fs::write(&path, body).map_err(|e| format!("{}: {e}", path.display()))?;
        println!("{}", path.display());
        Ok::<(), String>(())
    };
    if args.formats.svg {
        for view in ViewId::ALL {
            let wires = project_view(&art, &canvas, &window, view).map_err(|e| e.to_string())?;
            write(format!("{}.svg", view_stem(view)), export::svg(&wires, &canvas))?;
        }
    }
    if args.formats.obj {
        let samples = args.samples.unwrap_or(canvas.samples_per_segment);
        if samples < 2 {
            return Err("--samples must be at least 2".into());
        }
        write(OBJ.to_string(), export::obj(&art, samples))?;
    }
    Ok(())
}

fn check(seed: u64) -> ExitCode {
    let results = selfcheck::run_all(seed);
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        if r.detail.is_empty() {
            println!("{status}  {}", r.name);
        } else {
            println!("{status}  {}: {}", r.name, r.detail);
        }
    }
    if results.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(4)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => run(args),
        Command::Export(args) => match export_cmd(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(2)
            }
        },
        Command::Check { seed } => check(seed),
    }
}
