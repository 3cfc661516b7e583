//! Per-session stream handling.
//!
//! A reader admits inbound messages (sequence and token checks), a single
//! processor runs admitted frames in order through the module bus and the
//! engine, and a writer numbers and sends every outbound message. A frame's
//! token is returned before its reply is queued, so a client that waits for
//! replies never sees a spurious flow-control error.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket};
use base64::Engine as _;
use futures::{SinkExt, StreamExt};
use serde_json::Value;
use stepwise_core::fsm::{engine_step, EngineStatus, TaskPackage};
use tokio::sync::mpsc;

use crate::flow::FlowControl;
use crate::modules::{ModuleInput, PubSub};
use crate::protocol::*;
use crate::store::PackageStore;

/// Shared streaming state: packages, modules and the token budget.
pub struct Runtime {
    pub store: Arc<PackageStore>,
    pub bus: PubSub,
    pub max_tokens: u32,
    next_session: AtomicU64,
}

impl Runtime {
    pub fn new(store: Arc<PackageStore>, bus: PubSub, max_tokens: u32) -> Self {
        Self {
            store,
            bus,
            max_tokens,
            next_session: AtomicU64::new(1),
        }
    }

    fn new_session_id(&self) -> String {
        format!("session-{}", self.next_session.fetch_add(1, Ordering::Relaxed))
    }
}

type Outbound = (MessageType, Value);

fn error_out(code: &str, message: impl Into<String>, in_reply_to: Option<u64>) -> Outbound {
    (
        MessageType::Error,
        serde_json::to_value(ErrorPayload::new(code, message, in_reply_to)).expect("payload serializes"),
    )
}

fn rejected(code: &str, message: impl Into<String>, in_reply_to: u64) -> Outbound {
    (
        MessageType::Error,
        serde_json::to_value(ErrorPayload::dropped(code, message, in_reply_to)).expect("payload serializes"),
    )
}

fn to_value<P: serde::Serialize>(p: &P) -> Value {
    serde_json::to_value(p).expect("payload serializes")
}

/// Engine side of a session: turns one admitted frame into its reply.
pub struct SessionEngine {
    pub package: Arc<TaskPackage>,
    pub status: EngineStatus,
}

impl SessionEngine {
    pub fn new(package: Arc<TaskPackage>) -> Self {
        let status = EngineStatus::new(&package);
        Self { package, status }
    }

    pub fn handle(&mut self, bus: &PubSub, msg: &StreamMessage) -> Outbound {
        let seq = msg.sequence;
        let (frame_index, detections) = match msg.kind {
            MessageType::Detections => match msg.payload_as::<DetectionsPayload>() {
                Ok(p) => match bus.publish(&ModuleInput::Detections(&p.boxes)) {
                    Ok(d) => (p.frame_index, d),
                    Err(e) => return error_out("module", e.to_string(), Some(seq)),
                },
                Err(e) => return error_out("bad_payload", e.to_string(), Some(seq)),
            },
            MessageType::Frame => {
                let p = match msg.payload_as::<FramePayload>() {
                    Ok(p) => p,
                    Err(e) => return error_out("bad_payload", e.to_string(), Some(seq)),
                };
                let image = match base64::engine::general_purpose::STANDARD
                    .decode(p.image.as_bytes())
                    .map_err(|e| e.to_string())
                    .and_then(|bytes| image::load_from_memory(&bytes).map_err(|e| e.to_string()))
                {
                    Ok(img) => img,
                    Err(e) => return error_out("bad_image", e, Some(seq)),
                };
                match bus.publish(&ModuleInput::Frame(&image)) {
                    Ok(d) => (p.frame_index, d),
                    Err(e) => return error_out("module", e.to_string(), Some(seq)),
                }
            }
            _ => return error_out("unexpected_type", "only frame and detections are processed", Some(seq)),
        };
        let frame_index = frame_index.unwrap_or(u32::try_from(seq).unwrap_or(u32::MAX));
        match engine_step(&self.package, self.status.clone(), &detections, frame_index) {
            Ok((status, guidance)) => {
                self.status = status;
                match guidance {
                    Some(g) => (MessageType::Guidance, to_value(&GuidancePayload::from_message(seq, g))),
                    None => (
                        MessageType::Ack,
                        to_value(&AckPayload {
                            protocol_version: PROTOCOL_VERSION,
                            in_reply_to: seq,
                            session_id: None,
                            max_tokens: None,
                            current_state: Some(self.status.current_state.clone()),
                        }),
                    ),
                }
            }
            Err(e) => error_out("engine", e.to_string(), Some(seq)),
        }
    }
}

/// Reader-side checks for frames of an open session.
#[derive(Debug)]
pub struct Admission {
    pub session_id: String,
    pub flow: Arc<Mutex<FlowControl>>,
    last_sequence: Option<u64>,
}

impl Admission {
    pub fn new(session_id: String, max_tokens: u32, hello_sequence: u64) -> Self {
        Self {
            session_id,
            flow: Arc::new(Mutex::new(FlowControl::new(max_tokens))),
            last_sequence: Some(hello_sequence),
        }
    }

    /// Accepts a frame for processing (taking a token) or returns the error
    /// reply; rejected messages are dropped.
    pub fn admit(&mut self, msg: &StreamMessage) -> Result<(), Outbound> {
        let seq = msg.sequence;
        if !msg.session_id.is_empty() && msg.session_id != self.session_id {
            return Err(rejected("session_mismatch", format!("this is session {}", self.session_id), seq));
        }
        if self.last_sequence.is_some_and(|last| seq <= last) {
            return Err(rejected("sequence", "sequence numbers must strictly increase", seq));
        }
        self.last_sequence = Some(seq);
        match self.flow.lock().expect("flow lock").sent() {
            Ok(_) => Ok(()),
            Err(e) => Err(rejected("flow_control", e.to_string(), seq)),
        }
    }
}

async fn writer(
    mut sink: futures::stream::SplitSink<WebSocket, Message>,
    mut rx: mpsc::UnboundedReceiver<Outbound>,
    session_id: Arc<Mutex<String>>,
) {
    let mut sequence = 0u64;
    while let Some((kind, payload)) = rx.recv().await {
        let msg = StreamMessage {
            kind,
            session_id: session_id.lock().expect("id lock").clone(),
            sequence,
            payload,
        };
        sequence += 1;
        if sink.send(Message::Text(msg.to_text().into())).await.is_err() {
            return;
        }
    }
    let _ = sink.send(Message::Close(None)).await;
}

pub async fn handle_socket(socket: WebSocket, rt: Arc<Runtime>) {
    let (sink, mut stream) = socket.split();
    let (out_tx, out_rx) = mpsc::unbounded_channel::<Outbound>();
    let shared_id = Arc::new(Mutex::new(String::new()));
    let writer_task = tokio::spawn(writer(sink, out_rx, shared_id.clone()));

    let mut admission: Option<Admission> = None;
    let mut work_tx: Option<mpsc::UnboundedSender<StreamMessage>> = None;
    let mut processor = None;

    while let Some(Ok(raw)) = stream.next().await {
        let text = match raw {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        let msg = match StreamMessage::from_text(text.as_str()) {
            Ok(m) => m,
            Err(e) => {
                let _ = out_tx.send(error_out("bad_message", e.to_string(), None));
                continue;
            }
        };
        match (&mut admission, msg.kind) {
            (None, MessageType::Hello) => {
                let hello = match msg.payload_as::<HelloPayload>() {
                    Ok(h) => h,
                    Err(e) => {
                        let _ = out_tx.send(error_out("bad_payload", e.to_string(), Some(msg.sequence)));
                        continue;
                    }
                };
                if hello.protocol_version != PROTOCOL_VERSION {
                    let _ = out_tx.send(error_out(
                        "protocol_version",
                        format!("unsupported protocol_version {}", hello.protocol_version),
                        Some(msg.sequence),
                    ));
                    break;
                }
                let Some(package) = rt.store.get(&hello.task) else {
                    let _ = out_tx.send(error_out("unknown_task", format!("no package for task {:?}", hello.task), Some(msg.sequence)));
                    break;
                };
                let session_id = rt.new_session_id();
                *shared_id.lock().expect("id lock") = session_id.clone();
                let adm = Admission::new(session_id.clone(), rt.max_tokens, msg.sequence);
                let flow = adm.flow.clone();
                let (tx, mut rx) = mpsc::unbounded_channel::<StreamMessage>();
                let out = out_tx.clone();
                let runtime = rt.clone();
                let engine = Arc::new(Mutex::new(SessionEngine::new(package.clone())));
                processor = Some(tokio::spawn(async move {
                    while let Some(m) = rx.recv().await {
                        // modules are synchronous and may be slow; keep them off the async workers
                        let (rt2, eng) = (runtime.clone(), engine.clone());
                        let reply = tokio::task::spawn_blocking(move || eng.lock().expect("engine lock").handle(&rt2.bus, &m))
                            .await
                            .expect("module processing panicked");
                        let _ = flow.lock().expect("flow lock").replied();
                        if out.send(reply).is_err() {
                            return;
                        }
                    }
                }));
                work_tx = Some(tx);
                admission = Some(adm);
                let _ = out_tx.send((
                    MessageType::Ack,
                    to_value(&AckPayload {
                        protocol_version: PROTOCOL_VERSION,
                        in_reply_to: msg.sequence,
                        session_id: Some(session_id),
                        max_tokens: Some(rt.max_tokens),
                        current_state: Some(package.start_state().to_string()),
                    }),
                ));
            }
            (None, _) => {
                let _ = out_tx.send(error_out("no_session", "send hello first", Some(msg.sequence)));
            }
            (Some(_), MessageType::Hello) => {
                let _ = out_tx.send(error_out("already_open", "session already negotiated", Some(msg.sequence)));
            }
            (Some(adm), MessageType::Frame | MessageType::Detections) => match adm.admit(&msg) {
                Ok(()) => {
                    if let Some(tx) = &work_tx {
                        let _ = tx.send(msg);
                    }
                }
                Err(reply) => {
                    let _ = out_tx.send(reply);
                }
            },
            (Some(_), _) => {
                let _ = out_tx.send(error_out("unexpected_type", "clients send hello, frame or detections", Some(msg.sequence)));
            }
        }
    }
    drop(work_tx);
    if let Some(p) = processor {
        let _ = p.await;
    }
    drop(out_tx);
    let _ = writer_task.await;
}
