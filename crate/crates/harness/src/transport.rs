//! Moving protocol records to an adapter and back.
//!
//! [`Endpoint`] wraps a [`Transport`] after the hello handshake and is what
//! the pipelines use: it checks that each response answers its request, turns
//! `status: error` into [`HarnessError::Rejected`], and fans batches out with
//! at most `min(parallelism, max_inflight)` requests outstanding.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, SyncSender};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::mock::MockAdapter;
use crate::protocol::{AdapterInfo, EndpointKind, Op, Request, Response, Status};

pub trait Transport: Send + Sync {
    /// Sends one request and waits for the response with the same id.
    fn call(&self, req: &Request) -> Result<Response>;
}

/// Counts requests currently inside an adapter.
#[derive(Debug, Default)]
pub struct InflightGauge {
    current: AtomicUsize,
    peak: AtomicUsize,
    total: AtomicUsize,
}

impl InflightGauge {
    pub fn enter(&self) {
        let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        self.total.fetch_add(1, Ordering::SeqCst);
    }

    pub fn exit(&self) {
        self.current.fetch_sub(1, Ordering::SeqCst);
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn total(&self) -> usize {
        self.total.load(Ordering::SeqCst)
    }
}

/// Calls a [`MockAdapter`] directly, optionally holding each request for
/// `delay` so overlapping requests are observable through the gauge.
pub struct InProcessTransport {
    pub adapter: MockAdapter,
    pub delay: Duration,
    pub gauge: Arc<InflightGauge>,
}

impl InProcessTransport {
    pub fn new(adapter: MockAdapter) -> Self {
        InProcessTransport {
            adapter,
            delay: Duration::ZERO,
            gauge: Arc::new(InflightGauge::default()),
        }
    }

    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = delay;
        self
    }
}

impl Transport for InProcessTransport {
    fn call(&self, req: &Request) -> Result<Response> {
        self.gauge.enter();
        if !self.delay.is_zero() {
            thread::sleep(self.delay);
        }
        let r = self.adapter.handle(req);
        self.gauge.exit();
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaunchSpec {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub env: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cwd: Option<PathBuf>,
}

enum Incoming {
    Response(Response),
    Malformed(String),
    Closed,
}

type Pending = Arc<Mutex<HashMap<String, SyncSender<Incoming>>>>;

struct Session {
    child: Mutex<Child>,
    stdin: Mutex<Option<ChildStdin>>,
    pending: Pending,
    alive: Arc<AtomicBool>,
}

enum Failure {
    Transport(String),
    Timeout,
    Protocol(String),
}

impl Session {
    fn spawn(spec: &LaunchSpec, name: &str, stray: Arc<AtomicUsize>) -> std::io::Result<Session> {
        let (prog, args) = spec
            .command
            .split_first()
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty adapter command"))?;
        let mut cmd = Command::new(prog);
        cmd.args(args)
            .envs(&spec.env)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        if let Some(d) = &spec.cwd {
            cmd.current_dir(d);
        }
        let mut child = cmd.spawn()?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let stderr = child.stderr.take().expect("stderr is piped");
        let pending: Pending = Arc::default();
        let alive = Arc::new(AtomicBool::new(true));

        let (p, a, label) = (pending.clone(), alive.clone(), name.to_string());
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if line.trim().is_empty() {
                    continue;
                }
                let (id, msg) = match serde_json::from_str::<Response>(&line) {
                    Ok(r) => (r.id.clone(), Incoming::Response(r)),
                    Err(e) => {
                        let id = serde_json::from_str::<serde_json::Value>(&line)
                            .ok()
                            .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_string))
                            .unwrap_or_default();
                        (id, Incoming::Malformed(format!("{e}: {line}")))
                    }
                };
                let mut pending = p.lock().expect("pending lock");
                match (pending.remove(&id), msg) {
                    (Some(tx), msg) => {
                        let _ = tx.send(msg);
                    }
                    // unattributable garbage poisons everything in flight
                    (None, Incoming::Malformed(m)) => {
                        log::warn!("{label}: malformed output: {m}");
                        for (_, tx) in pending.drain() {
                            let _ = tx.send(Incoming::Malformed(m.clone()));
                        }
                    }
                    (None, _) => {
                        stray.fetch_add(1, Ordering::SeqCst);
                        log::warn!("{label}: response for unknown request id {id:?}");
                    }
                }
            }
            a.store(false, Ordering::SeqCst);
            for (_, tx) in p.lock().expect("pending lock").drain() {
                let _ = tx.send(Incoming::Closed);
            }
        });
        let label = name.to_string();
        thread::spawn(move || {
            for line in BufReader::new(stderr).lines().map_while(|l| l.ok()) {
                log::debug!("{label} stderr: {line}");
            }
        });
        Ok(Session {
            child: Mutex::new(child),
            stdin: Mutex::new(stdin),
            pending,
            alive,
        })
    }

    fn roundtrip(&self, req: &Request, timeout: Duration) -> std::result::Result<Response, Failure> {
        let (tx, rx) = mpsc::sync_channel(1);
        {
            let mut p = self.pending.lock().expect("pending lock");
            if p.contains_key(&req.id) {
                return Err(Failure::Protocol(format!("request id {:?} already in flight", req.id)));
            }
            if !self.alive.load(Ordering::SeqCst) {
                return Err(Failure::Transport("adapter output closed".into()));
            }
            p.insert(req.id.clone(), tx);
        }
        let written = {
            let mut guard = self.stdin.lock().expect("stdin lock");
            match guard.as_mut() {
                Some(w) => writeln!(w, "{}", req.to_line()).and_then(|_| w.flush()),
                None => Err(std::io::Error::new(std::io::ErrorKind::BrokenPipe, "stdin closed")),
            }
        };
        if let Err(e) = written {
            self.pending.lock().expect("pending lock").remove(&req.id);
            return Err(Failure::Transport(format!("write failed: {e}")));
        }
        match rx.recv_timeout(timeout) {
            Ok(Incoming::Response(r)) => Ok(r),
            Ok(Incoming::Malformed(m)) => Err(Failure::Protocol(format!("malformed response: {m}"))),
            Ok(Incoming::Closed) | Err(RecvTimeoutError::Disconnected) => {
                Err(Failure::Transport("adapter closed its output".into()))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().expect("pending lock").remove(&req.id);
                Err(Failure::Timeout)
            }
        }
    }

    fn exit_status(&self) -> String {
        let mut child = self.child.lock().expect("child lock");
        for _ in 0..50 {
            if let Ok(Some(st)) = child.try_wait() {
                return st.to_string();
            }
            thread::sleep(Duration::from_millis(10));
        }
        "still running".into()
    }

    fn shutdown(&self) {
        self.stdin.lock().expect("stdin lock").take();
        let mut child = self.child.lock().expect("child lock");
        for _ in 0..50 {
            if let Ok(Some(_)) = child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(10));
        }
        let _ = child.kill();
        let _ = child.wait();
    }
}

/// A child process speaking the protocol over stdin/stdout. Transport
/// failures (dead process, closed pipe) trigger one respawn and resend.
pub struct ProcessTransport {
    name: String,
    spec: LaunchSpec,
    timeout: Duration,
    session: Mutex<Option<Arc<Session>>>,
    stray: Arc<AtomicUsize>,
    spawns: AtomicUsize,
}

impl ProcessTransport {
    pub fn spawn(name: &str, spec: LaunchSpec, timeout: Duration) -> Result<Self> {
        let t = ProcessTransport {
            name: name.to_string(),
            spec,
            timeout,
            session: Mutex::new(None),
            stray: Arc::default(),
            spawns: AtomicUsize::new(0),
        };
        t.session()?;
        Ok(t)
    }

    fn session(&self) -> Result<Arc<Session>> {
        let mut guard = self.session.lock().expect("session lock");
        if let Some(s) = guard.as_ref() {
            if s.alive.load(Ordering::SeqCst) {
                return Ok(s.clone());
            }
            s.shutdown();
        }
        let s = Session::spawn(&self.spec, &self.name, self.stray.clone()).map_err(|e| HarnessError::Endpoint {
            endpoint: self.name.clone(),
            message: format!("cannot launch {:?}: {e}", self.spec.command),
        })?;
        let respawn = self.spawns.fetch_add(1, Ordering::SeqCst) > 0;
        let s = Arc::new(s);
        if respawn {
            // every session opens with a handshake; the first one is the
            // caller's (Endpoint::connect)
            let hello = Request::hello();
            match s.roundtrip(&hello, self.timeout) {
                Ok(r) if r.status == Status::Ok => {}
                _ => {
                    return Err(HarnessError::Endpoint {
                        endpoint: self.name.clone(),
                        message: format!("respawned adapter failed the handshake (exit status: {})", s.exit_status()),
                    })
                }
            }
        }
        *guard = Some(s.clone());
        Ok(s)
    }

    /// Kills the current child; the next call respawns it.
    pub fn kill(&self) {
        if let Some(s) = self.session.lock().expect("session lock").as_ref() {
            let _ = s.child.lock().expect("child lock").kill();
        }
    }

    /// Number of times a child has been launched.
    pub fn spawn_count(&self) -> usize {
        self.spawns.load(Ordering::SeqCst)
    }

    /// Responses whose id matched no outstanding request.
    pub fn stray_responses(&self) -> usize {
        self.stray.load(Ordering::SeqCst)
    }
}

impl Transport for ProcessTransport {
    fn call(&self, req: &Request) -> Result<Response> {
        let mut last = String::new();
        for attempt in 0..2 {
            let s = self.session()?;
            match s.roundtrip(req, self.timeout) {
                Ok(r) => return Ok(r),
                Err(Failure::Timeout) => {
                    return Err(HarnessError::Timeout {
                        endpoint: self.name.clone(),
                        id: req.id.clone(),
                        secs: self.timeout.as_secs_f64(),
                    })
                }
                Err(Failure::Protocol(m)) => {
                    return Err(HarnessError::Protocol {
                        endpoint: self.name.clone(),
                        message: m,
                    })
                }
                Err(Failure::Transport(m)) => {
                    s.alive.store(false, Ordering::SeqCst);
                    last = format!("{m} (exit status: {})", s.exit_status());
                    if attempt == 0 {
                        log::warn!("{}: {last}; respawning and retrying {}", self.name, req.id);
                    }
                }
            }
        }
        Err(HarnessError::Endpoint {
            endpoint: self.name.clone(),
            message: last,
        })
    }
}

impl Drop for ProcessTransport {
    fn drop(&mut self) {
        if let Some(s) = self.session.lock().expect("session lock").take() {
            s.shutdown();
        }
    }
}

/// Endpoint settings as written in the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterEndpoint {
    pub kind: EndpointKind,
    #[serde(flatten)]
    pub launch: LaunchSpec,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_inflight")]
    pub max_inflight: usize,
}

fn default_timeout() -> f64 {
    60.0
}

fn default_inflight() -> usize {
    1
}

impl AdapterEndpoint {
    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(HarnessError::Invalid("adapter timeout_s must be positive".into()));
        }
        if self.max_inflight == 0 {
            return Err(HarnessError::Invalid("adapter max_inflight must be positive".into()));
        }
        if self.launch.command.is_empty() {
            return Err(HarnessError::Invalid("adapter command is empty".into()));
        }
        Ok(())
    }

    pub fn connect(&self, name: &str) -> Result<Endpoint> {
        self.validate()?;
        let t = ProcessTransport::spawn(name, self.launch.clone(), Duration::from_secs_f64(self.timeout_s))?;
        Endpoint::connect(name, self.kind, Box::new(t), self.max_inflight)
    }
}

pub struct Endpoint {
    pub name: String,
    pub kind: EndpointKind,
    pub info: AdapterInfo,
    /// `min(configured, announced)`.
    pub max_inflight: usize,
    transport: Box<dyn Transport>,
}

impl Endpoint {
    /// Performs the hello handshake and checks the adapter serves `kind`.
    pub fn connect(name: &str, kind: EndpointKind, transport: Box<dyn Transport>, max_inflight: usize) -> Result<Self> {
        let hello = Request::hello();
        let r = transport.call(&hello)?;
        let proto = |message: String| HarnessError::Protocol {
            endpoint: name.to_string(),
            message,
        };
        if r.id != hello.id || r.status != Status::Ok {
            return Err(proto(format!("bad hello response {}", r.to_line())));
        }
        let info: AdapterInfo = serde_json::from_value(r.payload).map_err(|e| proto(format!("hello payload: {e}")))?;
        if info.kind != kind || !info.capabilities.contains(&kind.op()) {
            return Err(proto(format!(
                "adapter is {} with {:?}, expected {} serving {}",
                info.kind.as_str(),
                info.capabilities,
                kind.as_str(),
                kind.op().as_str()
            )));
        }
        Ok(Endpoint {
            name: name.to_string(),
            kind,
            max_inflight: max_inflight.max(1).min(info.max_inflight.max(1)),
            info,
            transport,
        })
    }

    pub fn in_process(name: &str, adapter: MockAdapter) -> Result<Self> {
        let kind = adapter.kind();
        let n = adapter.max_inflight;
        Endpoint::connect(name, kind, Box::new(InProcessTransport::new(adapter)), n)
    }

    /// One request; an error status becomes [`HarnessError::Rejected`].
    pub fn call(&self, req: &Request) -> Result<Response> {
        if req.op != Op::Hello && req.op != self.kind.op() {
            return Err(HarnessError::Invalid(format!(
                "{} cannot serve {}",
                self.name,
                req.op.as_str()
            )));
        }
        let r = self.transport.call(req)?;
        if r.id != req.id {
            return Err(HarnessError::Protocol {
                endpoint: self.name.clone(),
                message: format!("response id {:?} does not match request {:?}", r.id, req.id),
            });
        }
        if let Some(m) = r.error_message() {
            return Err(HarnessError::Rejected {
                endpoint: self.name.clone(),
                id: req.id.clone(),
                message: m.to_string(),
            });
        }
        Ok(r)
    }

    /// All requests, results in input order, `min(parallelism, max_inflight)`
    /// outstanding at a time.
    pub fn call_all(&self, reqs: &[Request], parallelism: usize) -> Vec<Result<Response>> {
        let workers = parallelism.max(1).min(self.max_inflight).min(reqs.len());
        if workers <= 1 {
            return reqs.iter().map(|r| self.call(r)).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<Response>>>> = reqs.iter().map(|_| Mutex::new(None)).collect();
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= reqs.len() {
                        break;
                    }
                    let r = self.call(&reqs[i]);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| m.into_inner().expect("slot lock").expect("every slot is filled"))
            .collect()
    }
}
