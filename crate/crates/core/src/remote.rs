//! Learners and models living in another process, reached over TCP.
//!
//! # Wire protocol
//!
//! Every message is one UTF-8 JSON object terminated by `\n`. Each request
//! gets exactly one response, in order. Datasets travel column-wise as
//! `{"name": [numbers...]}`; NaN and infinities are rejected.
//!
//! | request | response |
//! |---------|----------|
//! | `{"kind":"hello","version":1}` | `{"kind":"hello_ack","version":1,"max_frame_bytes":N}` |
//! | `{"kind":"fit","inputs":{..},"outputs":{..}}` | `{"kind":"fit_ack","model":"<id>","inputs":[..],"output":".."}` |
//! | `{"kind":"predict","model":"<id>","inputs":{..}}` | `{"kind":"prediction","outputs":{..}}` |
//! | `{"kind":"save","model":"<id>"}` | `{"kind":"saved","document":".."}` |
//! | `{"kind":"shutdown"}` | `{"kind":"shutdown_ack"}`, then the server closes the session |
//!
//! Any failure yields `{"kind":"error","message":".."}`. A malformed line is
//! answered with an error and the session stays usable.

use std::collections::HashMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::{dataset_from_json_value, dataset_to_json_columns, Dataset};
use crate::learners::{Model, NativeModel, OfflineLearner};
use crate::Error;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_MAX_FRAME_BYTES: usize = 64 * 1024 * 1024;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RemoteError {
    #[error("could not connect to {address}: {message}")]
    ConnectFailed { address: String, message: String },
    #[error("protocol version mismatch: server speaks {server}, client speaks {client}")]
    VersionMismatch { server: u32, client: u32 },
    #[error("timed out waiting for the remote peer")]
    Timeout,
    #[error("connection closed by the remote peer")]
    ConnectionClosed,
    #[error("remote error: {0}")]
    Remote(String),
    #[error("frame of {size} bytes exceeds the limit of {limit} bytes")]
    FrameTooLarge { size: usize, limit: usize },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("schema mismatch: model expects {expected:?}, got {found:?}")]
    SchemaMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("could not bind {address}: {message}")]
    BindFailed { address: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<io::Error> for RemoteError {
    fn from(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => RemoteError::Timeout,
            io::ErrorKind::UnexpectedEof
            | io::ErrorKind::ConnectionReset
            | io::ErrorKind::ConnectionAborted
            | io::ErrorKind::BrokenPipe => RemoteError::ConnectionClosed,
            _ => RemoteError::Io(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Request {
    Hello { version: u32 },
    Fit { inputs: Map<String, Value>, outputs: Map<String, Value> },
    Predict { model: String, inputs: Map<String, Value> },
    Save { model: String },
    Shutdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Response {
    HelloAck { version: u32, max_frame_bytes: usize },
    FitAck { model: String, inputs: Vec<String>, output: String },
    Prediction { outputs: Map<String, Value> },
    Saved { document: String },
    ShutdownAck,
    Error { message: String },
}

/// Serializes `message` as one frame, newline included.
pub fn encode<T: Serialize>(message: &T) -> Result<Vec<u8>, RemoteError> {
    let mut bytes = serde_json::to_vec(message).map_err(|e| RemoteError::Protocol(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn columns_to_wire(data: &Dataset) -> Result<Map<String, Value>, RemoteError> {
    match dataset_to_json_columns(data) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(RemoteError::Protocol("dataset did not serialize to an object".into())),
        Err(e) => Err(RemoteError::Protocol(e.to_string())),
    }
}

pub fn columns_from_wire(map: Map<String, Value>) -> Result<Dataset, RemoteError> {
    dataset_from_json_value(&Value::Object(map)).map_err(|e| RemoteError::Protocol(e.to_string()))
}

enum Frame {
    Line(Vec<u8>),
    TooLarge(usize),
    Eof,
}

/// Reads up to the next newline. Frames over `limit` bytes are consumed and
/// discarded so the stream stays aligned on message boundaries.
fn read_frame<R: BufRead>(reader: &mut R, limit: usize) -> io::Result<Frame> {
    let mut line = Vec::new();
    let mut size = 0usize;
    let mut oversized = false;
    loop {
        let buf = match reader.fill_buf() {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        };
        if buf.is_empty() {
            if size == 0 {
                return Ok(Frame::Eof);
            }
            return Err(io::ErrorKind::UnexpectedEof.into());
        }
        let (chunk, done) = match buf.iter().position(|&b| b == b'\n') {
            Some(i) => (&buf[..i], i + 1),
            None => (buf, buf.len()),
        };
        size += chunk.len();
        if size > limit {
            oversized = true;
            line.clear();
        } else if !oversized {
            line.extend_from_slice(chunk);
        }
        let found = done > chunk.len();
        reader.consume(done);
        if found {
            return Ok(if oversized { Frame::TooLarge(size) } else { Frame::Line(line) });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClientConfig {
    /// Bound on connecting and on waiting for any single response.
    pub timeout: Duration,
    pub max_frame_bytes: usize,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            timeout: DEFAULT_TIMEOUT,
            max_frame_bytes: DEFAULT_MAX_FRAME_BYTES,
        }
    }
}

/// A client connection. Single owner; open one per thread.
#[derive(Debug)]
pub struct Session {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    max_frame_bytes: usize,
}

impl Session {
    pub fn connect(address: &str, config: ClientConfig) -> Result<Session, RemoteError> {
        let failed = |message: String| RemoteError::ConnectFailed {
            address: address.to_owned(),
            message,
        };
        let addrs: Vec<SocketAddr> = address.to_socket_addrs().map_err(|e| failed(e.to_string()))?.collect();
        let mut last = String::from("no addresses resolved");
        let mut stream = None;
        for addr in addrs {
            match TcpStream::connect_timeout(&addr, config.timeout) {
                Ok(s) => {
                    stream = Some(s);
                    break;
                }
                Err(e) if e.kind() == io::ErrorKind::TimedOut => return Err(RemoteError::Timeout),
                Err(e) => last = e.to_string(),
            }
        }
        let stream = stream.ok_or_else(|| failed(last))?;
        stream.set_read_timeout(Some(config.timeout))?;
        stream.set_write_timeout(Some(config.timeout))?;
        stream.set_nodelay(true)?;
        let mut session = Session {
            reader: BufReader::new(stream.try_clone()?),
            writer: stream,
            max_frame_bytes: config.max_frame_bytes,
        };
        match session.call(&Request::Hello {
            version: PROTOCOL_VERSION,
        })? {
            Response::HelloAck {
                version,
                max_frame_bytes,
            } => {
                if version != PROTOCOL_VERSION {
                    return Err(RemoteError::VersionMismatch {
                        server: version,
                        client: PROTOCOL_VERSION,
                    });
                }
                session.max_frame_bytes = session.max_frame_bytes.min(max_frame_bytes);
                Ok(session)
            }
            Response::Error { message } => Err(RemoteError::Remote(message)),
            other => Err(unexpected("hello_ack", &other)),
        }
    }

    pub fn max_frame_bytes(&self) -> usize {
        self.max_frame_bytes
    }

    /// Sends one raw frame, e.g. to probe the server with malformed input.
    pub fn send_raw(&mut self, line: &[u8]) -> Result<Response, RemoteError> {
        self.writer.write_all(line)?;
        if !line.ends_with(b"\n") {
            self.writer.write_all(b"\n")?;
        }
        self.writer.flush()?;
        self.receive()
    }

    pub fn call(&mut self, request: &Request) -> Result<Response, RemoteError> {
        let frame = encode(request)?;
        if frame.len() - 1 > self.max_frame_bytes {
            return Err(RemoteError::FrameTooLarge {
                size: frame.len() - 1,
                limit: self.max_frame_bytes,
            });
        }
        self.send_raw(&frame)
    }

    fn receive(&mut self) -> Result<Response, RemoteError> {
        match read_frame(&mut self.reader, self.max_frame_bytes)? {
            Frame::Eof => Err(RemoteError::ConnectionClosed),
            Frame::TooLarge(size) => Err(RemoteError::FrameTooLarge {
                size,
                limit: self.max_frame_bytes,
            }),
            Frame::Line(bytes) => serde_json::from_slice(&bytes).map_err(|e| RemoteError::Protocol(e.to_string())),
        }
    }

    /// Trains on the server; returns the model id and its schema.
    pub fn fit(&mut self, inputs: &Dataset, outputs: &Dataset) -> Result<(String, Vec<String>, String), RemoteError> {
        let request = Request::Fit {
            inputs: columns_to_wire(inputs)?,
            outputs: columns_to_wire(outputs)?,
        };
        match self.call(&request)? {
            Response::FitAck { model, inputs, output } => Ok((model, inputs, output)),
            Response::Error { message } => Err(RemoteError::Remote(message)),
            other => Err(unexpected("fit_ack", &other)),
        }
    }

    pub fn predict(&mut self, model: &str, inputs: &Dataset) -> Result<Dataset, RemoteError> {
        let request = Request::Predict {
            model: model.to_owned(),
            inputs: columns_to_wire(inputs)?,
        };
        match self.call(&request)? {
            Response::Prediction { outputs } => columns_from_wire(outputs),
            Response::Error { message } => Err(RemoteError::Remote(message)),
            other => Err(unexpected("prediction", &other)),
        }
    }

    /// Fetches the model document and parses it into a local model.
    pub fn save(&mut self, model: &str) -> Result<NativeModel, RemoteError> {
        match self.call(&Request::Save { model: model.to_owned() })? {
            Response::Saved { document } => NativeModel::from_json(&document).map_err(|e| RemoteError::Protocol(e.to_string())),
            Response::Error { message } => Err(RemoteError::Remote(message)),
            other => Err(unexpected("saved", &other)),
        }
    }

    pub fn shutdown(mut self) -> Result<(), RemoteError> {
        match self.call(&Request::Shutdown)? {
            Response::ShutdownAck => Ok(()),
            Response::Error { message } => Err(RemoteError::Remote(message)),
            other => Err(unexpected("shutdown_ack", &other)),
        }
    }
}

fn unexpected(wanted: &str, got: &Response) -> RemoteError {
    let kind = serde_json::to_value(got)
        .ok()
        .and_then(|v| v.get("kind").and_then(Value::as_str).map(str::to_owned))
        .unwrap_or_default();
    RemoteError::Protocol(format!("expected {wanted}, got {kind}"))
}

/// An offline learner whose training runs on a remote server.
#[derive(Debug, Clone)]
pub struct RemoteLearner {
    session: Arc<Mutex<Session>>,
}

impl RemoteLearner {
    pub fn connect(address: &str, config: ClientConfig) -> Result<Self, RemoteError> {
        Ok(RemoteLearner {
            session: Arc::new(Mutex::new(Session::connect(address, config)?)),
        })
    }
}

impl OfflineLearner for RemoteLearner {
    type Model = RemoteModel;

    fn learn(&self, inputs: &Dataset, outputs: &Dataset) -> Result<RemoteModel, Error> {
        let (id, input_names, output_name) = lock(&self.session).fit(inputs, outputs)?;
        Ok(RemoteModel {
            session: Arc::clone(&self.session),
            id,
            input_names,
            output_name,
        })
    }
}

/// A model held by the server, used through the session that trained it.
#[derive(Debug, Clone)]
pub struct RemoteModel {
    session: Arc<Mutex<Session>>,
    id: String,
    input_names: Vec<String>,
    output_name: String,
}

impl RemoteModel {
    pub fn id(&self) -> &str {
        &self.id
    }

    /// Downloads the model so it can be used without the server.
    pub fn fetch(&self) -> Result<NativeModel, RemoteError> {
        lock(&self.session).save(&self.id)
    }
}

fn lock(session: &Mutex<Session>) -> std::sync::MutexGuard<'_, Session> {
    session.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl Model for RemoteModel {
    fn kind(&self) -> &str {
        "remote"
    }

    fn input_names(&self) -> &[String] {
        &self.input_names
    }

    fn output_name(&self) -> &str {
        &self.output_name
    }

    fn predict(&self, inputs: &Dataset) -> Result<Dataset, Error> {
        if inputs.names() != self.input_names.as_slice() {
            return Err(RemoteError::SchemaMismatch {
                expected: self.input_names.clone(),
                found: inputs.names().to_vec(),
            }
            .into());
        }
        Ok(lock(&self.session).predict(&self.id, inputs)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ServerConfig {
    pub max_sessions: usize,
    pub max_frame_bytes: usize,
    /// Idle time after which a silent session is dropped; `None` waits forever.
    pub idle_timeout: Option<Duration>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            max_sessions: 8,
            max_frame_bytes: DEFAULT_MAX_FRAME_BYTES,
            idle_timeout: None,
        }
    }
}

type Registry = Arc<Mutex<HashMap<u64, TcpStream>>>;

/// A running server. Dropping the handle shuts it down.
#[derive(Debug)]
pub struct ServerHandle {
    address: SocketAddr,
    stop: Arc<AtomicBool>,
    sessions: Registry,
    acceptor: Option<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn address(&self) -> SocketAddr {
        self.address
    }

    /// Stops accepting and closes every open session.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    /// Blocks until the accept loop ends.
    pub fn wait(mut self) {
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }

    fn stop_now(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&self.address, Duration::from_secs(1));
        for stream in lock_registry(&self.sessions).values() {
            let _ = stream.shutdown(Shutdown::Both);
        }
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if self.acceptor.is_some() {
            self.stop_now();
        }
    }
}

fn lock_registry(r: &Registry) -> std::sync::MutexGuard<'_, HashMap<u64, TcpStream>> {
    r.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

/// Serves `learner` on `address` with one thread per session.
pub fn serve<L>(learner: L, address: &str, config: ServerConfig) -> Result<ServerHandle, RemoteError>
where
    L: OfflineLearner + Send + Sync + 'static,
    L::Model: Into<NativeModel>,
{
    let bind_failed = |message: String| RemoteError::BindFailed {
        address: address.to_owned(),
        message,
    };
    if config.max_sessions == 0 {
        return Err(bind_failed("max_sessions must be positive".into()));
    }
    let listener = TcpListener::bind(address).map_err(|e| bind_failed(e.to_string()))?;
    let local = listener.local_addr().map_err(|e| bind_failed(e.to_string()))?;
    let stop = Arc::new(AtomicBool::new(false));
    let sessions: Registry = Arc::default();
    let learner = Arc::new(learner);

    let acceptor = {
        let stop = Arc::clone(&stop);
        let sessions = Arc::clone(&sessions);
        std::thread::spawn(move || {
            let next_id = AtomicU64::new(0);
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(mut stream) = stream else { continue };
                if lock_registry(&sessions).len() >= config.max_sessions {
                    let busy = Response::Error {
                        message: format!("server busy: {} sessions open", config.max_sessions),
                    };
                    if let Ok(frame) = encode(&busy) {
                        let _ = stream.write_all(&frame);
                    }
                    continue;
                }
                let id = next_id.fetch_add(1, Ordering::SeqCst);
                let Ok(clone) = stream.try_clone() else { continue };
                lock_registry(&sessions).insert(id, clone);
                let learner = Arc::clone(&learner);
                let sessions = Arc::clone(&sessions);
                std::thread::spawn(move || {
                    log::debug!("session {id} opened");
                    if let Err(e) = run_session(&*learner, stream, config) {
                        log::debug!("session {id} ended: {e}");
                    }
                    lock_registry(&sessions).remove(&id);
                });
            }
        })
    };

    Ok(ServerHandle {
        address: local,
        stop,
        sessions,
        acceptor: Some(acceptor),
    })
}

fn run_session<L>(learner: &L, stream: TcpStream, config: ServerConfig) -> Result<(), RemoteError>
where
    L: OfflineLearner,
    L::Model: Into<NativeModel>,
{
    stream.set_read_timeout(config.idle_timeout)?;
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    let mut models: HashMap<String, NativeModel> = HashMap::new();
    let mut greeted = false;

    loop {
        let (response, close) = match read_frame(&mut reader, config.max_frame_bytes)? {
            Frame::Eof => return Ok(()),
            Frame::TooLarge(size) => (
                error(format!(
                    "frame of {size} bytes exceeds the limit of {} bytes",
                    config.max_frame_bytes
                )),
                false,
            ),
            Frame::Line(bytes) => match serde_json::from_slice::<Request>(&bytes) {
                Err(e) => (error(format!("malformed request: {e}")), false),
                Ok(Request::Shutdown) => (Response::ShutdownAck, true),
                Ok(Request::Hello { version }) => {
                    if version == PROTOCOL_VERSION {
                        greeted = true;
                        (
                            Response::HelloAck {
                                version: PROTOCOL_VERSION,
                                max_frame_bytes: config.max_frame_bytes,
                            },
                            false,
                        )
                    } else {
                        (
                            error(format!(
                                "unsupported protocol version {version}; server speaks {PROTOCOL_VERSION}"
                            )),
                            false,
                        )
                    }
                }
                Ok(_) if !greeted => (error("hello required before any other request".into()), false),
                Ok(request) => (handle(learner, &mut models, request), false),
            },
        };
        let frame = encode(&response)?;
        let frame = if frame.len() - 1 > config.max_frame_bytes {
            encode(&error(format!(
                "response of {} bytes exceeds the limit of {} bytes",
                frame.len() - 1,
                config.max_frame_bytes
            )))?
        } else {
            frame
        };
        writer.write_all(&frame)?;
        writer.flush()?;
        if close {
            let _ = writer.shutdown(Shutdown::Both);
            return Ok(());
        }
    }
}

fn error(message: String) -> Response {
    Response::Error { message }
}

fn handle<L>(learner: &L, models: &mut HashMap<String, NativeModel>, request: Request) -> Response
where
    L: OfflineLearner,
    L::Model: Into<NativeModel>,
{
    let result: Result<Response, Error> = (|| match request {
        Request::Fit { inputs, outputs } => {
            let inputs = columns_from_wire(inputs)?;
            let outputs = columns_from_wire(outputs)?;
            if inputs.row_count() != outputs.row_count() {
                return Err(RemoteError::Remote(format!(
                    "inputs have {} rows but outputs have {}",
                    inputs.row_count(),
                    outputs.row_count()
                ))
                .into());
            }
            let model: NativeModel = learner.learn(&inputs, &outputs)?.into();
            let id = format!("m{}", models.len() + 1);
            let ack = Response::FitAck {
                model: id.clone(),
                inputs: model.input_names().to_vec(),
                output: model.output_name().to_owned(),
            };
            models.insert(id, model);
            Ok(ack)
        }
        Request::Predict { model, inputs } => {
            let m = models
                .get(&model)
                .ok_or_else(|| RemoteError::Remote(format!("unknown model `{model}`")))?;
            let outputs = m.predict(&columns_from_wire(inputs)?)?;
            Ok(Response::Prediction {
                outputs: columns_to_wire(&outputs)?,
            })
        }
        Request::Save { model } => {
            let m = models
                .get(&model)
                .ok_or_else(|| RemoteError::Remote(format!("unknown model `{model}`")))?;
            Ok(Response::Saved { document: m.to_json()? })
        }
        Request::Hello { .. } | Request::Shutdown => unreachable!("handled by the session loop"),
    })();
    result.unwrap_or_else(|e| error(e.to_string()))
}
