//! Echo server: a stand-in bridge that answers `grad = image - condition`.
//!
//! With the condition set to the target drawing this is the MSE objective
//! without its `2 / (H W)` factor, which makes bridge runs comparable with
//! offline ones.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use super::{decode_image, encode_grad, BridgeRequest, BridgeResponse, ErrorBody, Health, PROTOCOL_VERSION};

pub const STUB_MODEL: &str = "echo-stub";

#[derive(Debug, Clone, Default)]
pub struct StubOptions {
    /// Answer this many `/grad` requests with a retriable 503 first.
    pub fail_first: usize,
}

struct Shared {
    options: StubOptions,
    grad_requests: AtomicUsize,
    stop: AtomicBool,
}

/// A running echo server on a loopback port. Stops when dropped.
pub struct EchoStub {
    addr: SocketAddr,
    shared: Arc<Shared>,
    thread: Option<JoinHandle<()>>,
}

impl EchoStub {
    pub fn spawn(options: StubOptions) -> std::io::Result<EchoStub> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            options,
            grad_requests: AtomicUsize::new(0),
            stop: AtomicBool::new(false),
        });
        let s = Arc::clone(&shared);
        let thread = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if s.stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let s = Arc::clone(&s);
                std::thread::spawn(move || {
                    let _ = serve(stream, &s);
                });
            }
        });
        Ok(EchoStub {
            addr,
            shared,
            thread: Some(thread),
        })
    }

    /// `host:port` to put in a client's endpoint.
    pub fn endpoint(&self) -> String {
        self.addr.to_string()
    }

    /// `/grad` requests received so far, including failed ones.
    pub fn grad_requests(&self) -> usize {
        self.shared.grad_requests.load(Ordering::SeqCst)
    }
}

impl Drop for EchoStub {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or("").to_string();
    let path = parts.next().unwrap_or("").to_string();
    let mut length = 0usize;
    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 || header.trim().is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.trim().eq_ignore_ascii_case("content-length") {
                length = value.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body)?;

    let (status, text) = if method == "POST" && path == "/grad" {
        let n = shared.grad_requests.fetch_add(1, Ordering::SeqCst);
        if n < shared.options.fail_first {
            (503, error_json("warming up", true))
        } else {
            handle(&method, &path, &body)
        }
    } else {
        handle(&method, &path, &body)
    };
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        503 => "Service Unavailable",
        _ => "Error",
    };
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
        text.len()
    )?;
    stream.flush()
}

fn error_json(msg: &str, retriable: bool) -> String {
    serde_json::to_string(&ErrorBody {
        error: msg.to_string(),
        retriable,
    })
    .expect("error body serializes")
}

/// Answers one request the way the echo server does: `(status, json body)`.
pub fn handle(method: &str, path: &str, body: &[u8]) -> (u16, String) {
    match (method, path) {
        ("GET", "/healthz") => (
            200,
            serde_json::to_string(&Health {
                version: PROTOCOL_VERSION,
                model: STUB_MODEL.into(),
            })
            .expect("health serializes"),
        ),
        ("POST", "/grad") => match echo(body) {
            Ok(resp) => (200, serde_json::to_string(&resp).expect("response serializes")),
            Err(msg) => (400, error_json(&msg, false)),
        },
        _ => (404, error_json(&format!("no route {method} {path}"), false)),
    }
}

fn echo(body: &[u8]) -> Result<BridgeResponse, String> {
    let req: BridgeRequest = serde_json::from_slice(body).map_err(|e| format!("malformed request: {e}"))?;
    if req.version != PROTOCOL_VERSION {
        return Err(format!(
            "protocol version {} not supported (expected {PROTOCOL_VERSION})",
            req.version
        ));
    }
    let image = decode_image(&req.image).map_err(|e| format!("image: {e}"))?;
    let condition = req
        .condition
        .as_deref()
        .ok_or("the echo server needs a condition image")?;
    let condition = decode_image(condition).map_err(|e| format!("condition: {e}"))?;
    if (condition.width(), condition.height()) != (image.width(), image.height()) {
        return Err(format!(
            "condition is {}x{}, image is {}x{}",
            condition.width(),
            condition.height(),
            image.width(),
            image.height()
        ));
    }
    let grad: Vec<f64> = image
        .pixels()
        .iter()
        .zip(condition.pixels())
        .map(|(a, b)| a - b)
        .collect();
    let loss = grad.iter().map(|g| g * g).sum::<f64>() / grad.len().max(1) as f64;
    Ok(BridgeResponse {
        grad: encode_grad(&grad),
        loss_proxy: loss,
        timestep_used: 0,
    })
}
