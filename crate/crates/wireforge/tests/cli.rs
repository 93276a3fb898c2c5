mod common;

use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use wireforge::bridge::{EchoStub, StubOptions};
use wireforge::export::TRACE_HEADER;
use wireforge::spec::RunSpec;

fn wireforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wireforge"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn offline_run_writes_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let spec = common::letters_spec(dir.path(), 64, 12, "");
    let o = wireforge(&["run", s(&spec), "--seed", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("out");
    for f in [
        "final_wireart.json",
        "trace.csv",
        "resolved_config.toml",
        "wireart.obj",
        "view_X.png",
        "view_Y.png",
        "view_Z.png",
        "view_X.svg",
        "view_Y.svg",
        "view_Z.svg",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(!out.join("checkpoint.json").exists());
    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let lines: Vec<&str> = trace.lines().collect();
    assert_eq!(lines[0], TRACE_HEADER);
    let iters: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(iters, ["0", "5", "10", "11"]);

    let resolved = RunSpec::from_file(&out.join("resolved_config.toml")).unwrap();
    assert_eq!(resolved.optim.seed, 3);
    assert_eq!(resolved.optim.iterations, 12);
}

#[test]
fn export_regenerates_svg_and_obj() {
    let dir = tempfile::tempdir().unwrap();
    let spec = common::letters_spec(dir.path(), 64, 3, "");
    assert_eq!(code(&wireforge(&["run", s(&spec)])), 0);
    let art = dir.path().join("out/final_wireart.json");
    let re = dir.path().join("re");
    let o = wireforge(&["export", s(&art), "--svg", "--obj", "--out", s(&re), "--samples", "4"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(re.join("view_Z.svg")).unwrap(),
        std::fs::read_to_string(dir.path().join("out/view_Z.svg")).unwrap()
    );
    let obj = std::fs::read_to_string(re.join("wireart.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 8 * (3 * 3 + 1));

    assert_eq!(code(&wireforge(&["export", s(&art)])), 2);
    assert_eq!(
        code(&wireforge(&["export", s(&dir.path().join("nope.json")), "--svg"])),
        2
    );
}

#[test]
fn invalid_spec_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let spec = common::letters_spec(dir.path(), 64, 3, "bogus = 1\nlearning_rate = -2.0");
    let o = wireforge(&["run", s(&spec)]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("optim.bogus") && err.contains("line 9, column 1"), "{err}");

    let wrong_size = common::letters_spec(dir.path(), 64, 3, "");
    common::write_letters(dir.path(), 32);
    let o = wireforge(&["run", s(&wrong_size)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("32x32"));
}

fn bridge_spec(dir: &Path, endpoint: &str) -> std::path::PathBuf {
    common::write_letters(dir, 32);
    let text = format!(
        r#"mode = "bridge"
out_dir = "out"
[optim]
canvas_size = 32
n_wires = 4
segments_per_wire = 2
iterations = 3
[bridge]
endpoint = "{endpoint}"
retries = 1
backoff_ms = 1
timeout_ms = 5000
[views.x]
condition = "X.png"
[views.y]
condition = "Y.png"
prompt = "a wire letter"
[views.z]
condition = "Z.png"
"#
    );
    let path = dir.join("bridge.toml");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn bridge_run_against_echo_stub() {
    let dir = tempfile::tempdir().unwrap();
    let stub = EchoStub::spawn(StubOptions { fail_first: 1 }).unwrap();
    let o = wireforge(&["run", s(&bridge_spec(dir.path(), &stub.endpoint()))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // 3 steps x 3 views x 2 augmentation draws, plus one retried failure
    assert_eq!(stub.grad_requests(), 19);
    assert!(dir.path().join("out/final_wireart.json").is_file());
}

#[test]
fn unreachable_bridge_exits_with_bridge_code() {
    let dir = tempfile::tempdir().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap();
    let o = wireforge(&["run", s(&bridge_spec(dir.path(), &port.to_string()))]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn numerical_blowup_exits_with_abort_code() {
    let dir = tempfile::tempdir().unwrap();
    let spec = common::letters_spec(dir.path(), 32, 10, "learning_rate = 1e300");
    let o = wireforge(&["run", s(&spec)]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
    assert!(dir.path().join("out/checkpoint.json").is_file());
}

#[test]
fn sigint_writes_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let spec = common::letters_spec(dir.path(), 64, 1_000_000, "");
    let mut child = Command::new(env!("CARGO_BIN_EXE_wireforge"))
        .args(["run", s(&spec)])
        .spawn()
        .unwrap();
    let out = dir.path().join("out");
    let t = Instant::now();
    while !out.join("resolved_config.toml").exists() {
        assert!(t.elapsed() < Duration::from_secs(30), "run never started");
        std::thread::sleep(Duration::from_millis(20));
    }
    std::thread::sleep(Duration::from_millis(300));
    let killed = Command::new("kill")
        .args(["-INT", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(killed.success());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(130));
    let checkpoint = std::fs::read_to_string(out.join("checkpoint.json")).unwrap();
    let file = wireforge::artifact::WireArtFile::from_json(&checkpoint).unwrap();
    assert!(file.iteration > 0 && file.iteration < 1_000_000);
    assert!(!out.join("final_wireart.json").exists());
    assert!(out.join("trace.csv").is_file());
}

#[test]
fn check_subcommand_passes() {
    let o = wireforge(&["check"]);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(code(&o), 0, "{text}");
    assert!(text.lines().count() >= 8);
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
}
