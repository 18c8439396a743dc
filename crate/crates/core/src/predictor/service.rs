//! Client for an external model service speaking newline-delimited JSON.
//!
//! Requests are `{"id": n, "png_b64": "..."}` and responses `{"id": n, "logits": [...]}`, one
//! object per line, over a TCP socket or a child process's stdin/stdout. Up to
//! `max_in_flight` requests are outstanding at once and responses are matched by id. On a
//! connection failure or timeout the client reconnects and resends only the unanswered
//! requests, so retries are idempotent.

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// `tcp://host:port`
    Tcp(String),
    /// `exec:program arg...`; arguments are split on whitespace.
    Command { program: String, args: Vec<String> },
}

impl FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(addr) = s.strip_prefix("tcp://") {
            if addr.is_empty() {
                return Err(Error::Config("empty tcp endpoint".into()));
            }
            return Ok(Endpoint::Tcp(addr.to_string()));
        }
        if let Some(cmd) = s.strip_prefix("exec:") {
            let mut parts = cmd.split_whitespace().map(str::to_string);
            let program = parts.next().ok_or_else(|| Error::Config("empty exec endpoint".into()))?;
            return Ok(Endpoint::Command { program, args: parts.collect() });
        }
        Err(Error::Config(format!("endpoint `{s}` must start with tcp:// or exec:")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceOptions {
    pub max_in_flight: usize,
    /// Reconnect attempts after the first failure.
    pub retries: u32,
    /// Per-response wait, milliseconds.
    pub timeout_ms: u64,
    pub retry_backoff_ms: u64,
    /// Expected logit count; when absent, the first response fixes it.
    pub num_classes: Option<usize>,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self { max_in_flight: 8, retries: 3, timeout_ms: 30_000, retry_backoff_ms: 100, num_classes: None }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    id: u64,
    png_b64: &'a str,
}

#[derive(Deserialize)]
struct Response {
    id: u64,
    logits: Vec<f64>,
}

enum Handle {
    Tcp(TcpStream),
    Child(Child),
}

struct Session {
    writer: Box<dyn Write + Send>,
    lines: Receiver<std::io::Result<String>>,
    handle: Handle,
}

impl Drop for Session {
    fn drop(&mut self) {
        match &mut self.handle {
            Handle::Tcp(s) => {
                let _ = s.shutdown(Shutdown::Both);
            }
            Handle::Child(c) => {
                let _ = c.kill();
                let _ = c.wait();
            }
        }
    }
}

fn connection_error(endpoint: &Endpoint, e: impl std::fmt::Display) -> Error {
    Error::Connection(format!("{endpoint:?}: {e}"))
}

fn spawn_reader(reader: impl BufRead + Send + 'static) -> Receiver<std::io::Result<String>> {
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for line in reader.lines() {
            if tx.send(line).is_err() {
                break;
            }
        }
    });
    rx
}

fn connect(endpoint: &Endpoint, timeout: Duration) -> Result<Session> {
    match endpoint {
        Endpoint::Tcp(addr) => {
            let addrs: Vec<_> = addr.to_socket_addrs().map_err(|e| connection_error(endpoint, e))?.collect();
            let mut last = None;
            for a in addrs {
                match TcpStream::connect_timeout(&a, timeout) {
                    Ok(stream) => {
                        stream.set_nodelay(true).ok();
                        let read = stream.try_clone().map_err(|e| connection_error(endpoint, e))?;
                        let write = stream.try_clone().map_err(|e| connection_error(endpoint, e))?;
                        return Ok(Session {
                            writer: Box::new(write),
                            lines: spawn_reader(BufReader::new(read)),
                            handle: Handle::Tcp(stream),
                        });
                    }
                    Err(e) => last = Some(e),
                }
            }
            Err(connection_error(endpoint, last.map_or("no addresses".to_string(), |e| e.to_string())))
        }
        Endpoint::Command { program, args } => {
            let mut child = Command::new(program)
                .args(args)
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| connection_error(endpoint, e))?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            Ok(Session { writer: Box::new(stdin), lines: spawn_reader(BufReader::new(stdout)), handle: Handle::Child(child) })
        }
    }
}

/// Sends every still-unanswered payload, filling `results` as responses arrive.
fn run_session(
    endpoint: &Endpoint,
    payloads: &[String],
    results: &mut [Option<Vec<f64>>],
    expected_len: &mut Option<usize>,
    opts: &ServiceOptions,
) -> Result<()> {
    let timeout = Duration::from_millis(opts.timeout_ms);
    let mut session = connect(endpoint, timeout)?;
    let mut queue = results.iter().enumerate().filter(|(_, r)| r.is_none()).map(|(i, _)| i).collect::<Vec<_>>().into_iter();
    let mut in_flight = BTreeSet::new();
    let window = opts.max_in_flight.max(1);
    loop {
        while in_flight.len() < window {
            let Some(i) = queue.next() else { break };
            let line = serde_json::to_string(&Request { id: i as u64, png_b64: &payloads[i] })
                .map_err(|e| Error::Protocol(e.to_string()))?;
            writeln!(session.writer, "{line}").map_err(|e| connection_error(endpoint, e))?;
            in_flight.insert(i);
        }
        session.writer.flush().map_err(|e| connection_error(endpoint, e))?;
        if in_flight.is_empty() {
            return Ok(());
        }
        let line = match session.lines.recv_timeout(timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(connection_error(endpoint, e)),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Timeout(format!(
                    "no response within {} ms ({} requests outstanding)",
                    opts.timeout_ms,
                    in_flight.len()
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                return Err(connection_error(endpoint, format!("closed with {} requests outstanding", in_flight.len())))
            }
        };
        if line.trim().is_empty() {
            continue;
        }
        let resp: Response =
            serde_json::from_str(&line).map_err(|e| Error::Protocol(format!("malformed response `{line}`: {e}")))?;
        let idx = usize::try_from(resp.id).ok().filter(|i| in_flight.contains(i)).ok_or_else(|| {
            Error::Protocol(format!("response id {} does not match an outstanding request", resp.id))
        })?;
        let want = *expected_len.get_or_insert(resp.logits.len());
        if resp.logits.len() != want || want == 0 {
            return Err(Error::Protocol(format!(
                "response {} has {} logits, expected {want}",
                resp.id,
                resp.logits.len()
            )));
        }
        in_flight.remove(&idx);
        results[idx] = Some(resp.logits);
    }
}

/// Queries the service with PNG-encoded images; returns one logit vector per input, in order.
pub fn query_service_png(endpoint: &Endpoint, pngs: &[Vec<u8>], opts: &ServiceOptions) -> Result<Vec<Vec<f64>>> {
    let engine = base64::engine::general_purpose::STANDARD;
    let payloads: Vec<String> = pngs.iter().map(|p| engine.encode(p)).collect();
    let mut results: Vec<Option<Vec<f64>>> = vec![None; pngs.len()];
    let mut expected_len = opts.num_classes;
    let mut attempt = 0u32;
    loop {
        match run_session(endpoint, &payloads, &mut results, &mut expected_len, opts) {
            Ok(()) => break,
            Err(e @ (Error::Connection(_) | Error::Timeout(_))) => {
                if attempt >= opts.retries {
                    return Err(match e {
                        Error::Connection(m) => Error::Connection(format!("{m} (after {} attempts)", attempt + 1)),
                        other => other,
                    });
                }
                attempt += 1;
                std::thread::sleep(Duration::from_millis(opts.retry_backoff_ms * u64::from(attempt)));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(results.into_iter().map(|r| r.expect("every request answered")).collect())
}

/// Queries the service with in-memory images.
pub fn query_service(endpoint: &Endpoint, frames: &[Image], opts: &ServiceOptions) -> Result<Vec<Vec<f64>>> {
    let pngs = frames.iter().map(Image::encode_png).collect::<Result<Vec<_>>>()?;
    query_service_png(endpoint, &pngs, opts)
}
