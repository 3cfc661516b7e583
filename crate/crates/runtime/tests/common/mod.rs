#![allow(dead_code)]

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use stepwise_core::fixtures::sandwich_fsm;
use stepwise_core::fsm::compile;
use stepwise_core::DetectionFrame;
use stepwise_runtime::protocol::{AckPayload, DetectionsPayload, HelloPayload};
use stepwise_runtime::{start, AppState, FlowControl, MessageType, PackageStore, PassThrough, PubSub, RunningService, Runtime, StreamMessage};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

pub async fn sandwich_service(max_tokens: u32) -> RunningService {
    let store = PackageStore::in_memory();
    store.insert(compile(&sandwich_fsm()).unwrap()).unwrap();
    let mut bus = PubSub::new();
    bus.subscribe(Arc::new(PassThrough));
    let state = AppState::new(Arc::new(Runtime::new(Arc::new(store), bus, max_tokens)));
    start(state, "127.0.0.1:0").await.unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

pub struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    pub session_id: String,
    pub max_tokens: u32,
    next_seq: u64,
    pub flow: FlowControl,
    pub transcript: Vec<(Direction, Instant, StreamMessage)>,
}

impl Client {
    pub async fn connect(addr: SocketAddr, task: &str) -> Result<(Client, StreamMessage), StreamMessage> {
        let (ws, _) = connect_async(format!("ws://{addr}/stream")).await.unwrap();
        let mut c = Client {
            ws,
            session_id: String::new(),
            max_tokens: 0,
            next_seq: 0,
            flow: FlowControl::new(1),
            transcript: Vec::new(),
        };
        let hello = StreamMessage::new(
            MessageType::Hello,
            "",
            c.take_seq(),
            &HelloPayload {
                protocol_version: 1,
                task: task.into(),
            },
        );
        c.send_raw(hello).await;
        let reply = c.recv().await.expect("reply to hello");
        if reply.kind != MessageType::Ack {
            return Err(reply);
        }
        let ack: AckPayload = reply.payload_as().unwrap();
        c.session_id = ack.session_id.clone().unwrap();
        c.max_tokens = ack.max_tokens.unwrap();
        c.flow = FlowControl::new(c.max_tokens);
        Ok((c, reply))
    }

    pub fn take_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    pub async fn send_raw(&mut self, msg: StreamMessage) {
        self.transcript.push((Direction::Sent, Instant::now(), msg.clone()));
        self.ws.send(Message::Text(msg.to_text().into())).await.unwrap();
    }

    pub fn detections(&mut self, frame: &DetectionFrame) -> StreamMessage {
        let seq = self.take_seq();
        StreamMessage::new(
            MessageType::Detections,
            &self.session_id,
            seq,
            &DetectionsPayload {
                protocol_version: 1,
                frame_index: Some(frame.frame_index),
                boxes: frame.objects.clone(),
            },
        )
    }

    /// Next server message, or `None` once the server closed.
    pub async fn recv(&mut self) -> Option<StreamMessage> {
        loop {
            match self.ws.next().await? {
                Ok(Message::Text(t)) => {
                    let msg = StreamMessage::from_text(t.as_str()).unwrap();
                    self.transcript.push((Direction::Received, Instant::now(), msg.clone()));
                    return Some(msg);
                }
                Ok(Message::Close(_)) | Err(_) => return None,
                Ok(_) => continue,
            }
        }
    }

    fn account(&mut self, msg: &StreamMessage) {
        if msg.returns_token() {
            self.flow.replied().unwrap();
        }
    }

    /// Streams `trace` paced at `fps`, never exceeding the token budget, and
    /// waits for every reply.
    pub async fn run_trace(&mut self, trace: &[DetectionFrame], fps: f64) {
        let t0 = tokio::time::Instant::now();
        let period = Duration::from_secs_f64(1.0 / fps);
        let mut i = 0;
        while i < trace.len() || self.flow.in_flight() > 0 {
            let due = t0 + period * i as u32;
            let can_send = i < trace.len() && self.flow.available() > 0;
            tokio::select! {
                _ = tokio::time::sleep_until(due), if can_send => {
                    let msg = self.detections(&trace[i]);
                    self.flow.sent().unwrap();
                    self.send_raw(msg).await;
                    i += 1;
                }
                reply = self.recv() => {
                    let reply = reply.expect("server closed mid-trace");
                    self.account(&reply);
                }
            }
        }
    }

    pub fn received(&self) -> Vec<&StreamMessage> {
        self.transcript
            .iter()
            .filter(|(d, _, _)| *d == Direction::Received)
            .map(|(_, _, m)| m)
            .collect()
    }

    pub fn guidance_states(&self) -> Vec<String> {
        self.received()
            .into_iter()
            .filter(|m| m.kind == MessageType::Guidance)
            .map(|m| m.payload["state_id"].as_str().unwrap().to_string())
            .collect()
    }

    /// Round-trip time of every frame, from send to its reply.
    pub fn round_trips(&self) -> Vec<Duration> {
        let mut sent: BTreeMap<u64, Instant> = BTreeMap::new();
        let mut out = Vec::new();
        for (d, t, m) in &self.transcript {
            match d {
                Direction::Sent if m.kind != MessageType::Hello => {
                    sent.insert(m.sequence, *t);
                }
                Direction::Received => {
                    if let Some(s) = m.in_reply_to().and_then(|r| sent.remove(&r)) {
                        out.push(*t - s);
                    }
                }
                _ => {}
            }
        }
        out
    }

    /// Largest number of frames awaiting a reply at any point of the transcript.
    pub fn max_in_flight(&self) -> usize {
        let mut pending = std::collections::BTreeSet::new();
        let mut max = 0;
        for (d, _, m) in &self.transcript {
            match d {
                Direction::Sent if m.kind != MessageType::Hello => {
                    pending.insert(m.sequence);
                }
                Direction::Received => {
                    if let Some(r) = m.in_reply_to() {
                        pending.remove(&r);
                    }
                }
                _ => {}
            }
            max = max.max(pending.len());
        }
        max
    }

    pub async fn close(mut self) {
        let _ = self.ws.close(None).await;
    }
}

pub fn percentile(mut v: Vec<Duration>, p: f64) -> Duration {
    v.sort();
    if v.is_empty() {
        return Duration::ZERO;
    }
    let rank = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[rank - 1]
}
