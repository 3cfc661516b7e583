mod common;

use std::sync::Arc;
use std::time::Duration;

use common::{sandwich_service, Client};
use stepwise_core::fixtures::{sandwich_fsm, SandwichCase};
use stepwise_core::fsm::{compile, simulate};
use stepwise_core::BoundingBox;
use stepwise_runtime::modules::{ModuleError, ModuleInput};
use stepwise_runtime::protocol::AckPayload;
use stepwise_runtime::{
    start, AppState, CognitiveModule, Endpoint, MessageType, ModuleBinding, PackageStore, PubSub, Runtime, StreamKind,
    StreamMessage,
};

fn expected_states(case: SandwichCase) -> Vec<String> {
    let pkg = compile(&sandwich_fsm()).unwrap();
    simulate(&pkg, &case.trace())
        .unwrap()
        .entries
        .into_iter()
        .map(|e| e.state_id)
        .collect()
}

#[tokio::test(flavor = "multi_thread")]
async fn hello_negotiates_session() {
    let svc = sandwich_service(2).await;
    let (client, ack) = Client::connect(svc.addr, "sandwich").await.unwrap();
    let payload: AckPayload = ack.payload_as().unwrap();
    assert_eq!(payload.max_tokens, Some(2));
    assert_eq!(payload.in_reply_to, 0);
    assert_eq!(payload.session_id.as_deref(), Some(client.session_id.as_str()));
    assert_eq!(payload.current_state.as_deref(), Some("start"));
    assert_eq!(ack.session_id, client.session_id);
    client.close().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_task_is_refused_and_closed() {
    let svc = sandwich_service(2).await;
    let err = Client::connect(svc.addr, "origami").await.err().unwrap();
    assert_eq!(err.kind, MessageType::Error);
    assert_eq!(err.payload["code"], "unknown_task");
}

#[tokio::test(flavor = "multi_thread")]
async fn guidance_references_triggering_frame() {
    let svc = sandwich_service(2).await;
    let (mut client, _) = Client::connect(svc.addr, "sandwich").await.unwrap();
    let frame = |i: u32| stepwise_core::DetectionFrame {
        frame_index: i,
        objects: vec![BoundingBox::labeled(0, 0, 10, 10, "bread").with_score(0.9)],
        ..Default::default()
    };
    let mut replies = Vec::new();
    for i in 0..3 {
        let msg = client.detections(&frame(i));
        client.send_raw(msg).await;
        replies.push(client.recv().await.unwrap());
    }
    assert_eq!(replies[0].kind, MessageType::Ack);
    assert_eq!(replies[1].kind, MessageType::Ack);
    assert_eq!(replies[2].kind, MessageType::Guidance);
    assert_eq!(replies[2].in_reply_to(), Some(3));
    assert_eq!(replies[2].payload["guidance"]["speech"], "Put a piece of ham on the bread");
    let seqs: Vec<u64> = client.received().iter().map(|m| m.sequence).collect();
    assert!(seqs.windows(2).all(|w| w[0] < w[1]));
    client.close().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn frames_before_hello_are_refused() {
    let svc = sandwich_service(2).await;
    let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{}/stream", svc.addr)).await.unwrap();
    use futures::{SinkExt, StreamExt};
    let (mut tx, mut rx) = ws.split();
    let msg = StreamMessage::new(MessageType::Detections, "", 1, &serde_json::json!({"boxes": []}));
    tx.send(tokio_tungstenite::tungstenite::Message::Text(msg.to_text().into())).await.unwrap();
    let reply = rx.next().await.unwrap().unwrap();
    let reply = StreamMessage::from_text(reply.to_text().unwrap()).unwrap();
    assert_eq!(reply.payload["code"], "no_session");
}

struct Slow;

impl CognitiveModule for Slow {
    fn binding(&self) -> ModuleBinding {
        ModuleBinding {
            module: "slow".into(),
            subscription: StreamKind::Detections,
            endpoint: Endpoint::InProcess,
        }
    }

    fn process(&self, input: &ModuleInput<'_>) -> Result<Vec<BoundingBox>, ModuleError> {
        std::thread::sleep(Duration::from_millis(300));
        match input {
            ModuleInput::Detections(d) => Ok(d.to_vec()),
            ModuleInput::Frame(_) => Ok(vec![]),
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn frame_without_token_is_dropped() {
    let store = PackageStore::in_memory();
    store.insert(compile(&sandwich_fsm()).unwrap()).unwrap();
    let mut bus = PubSub::new();
    bus.subscribe(Arc::new(Slow));
    let state = AppState::new(Arc::new(Runtime::new(Arc::new(store), bus, 2)));
    let svc = start(state, "127.0.0.1:0").await.unwrap();
    let (mut client, _) = Client::connect(svc.addr, "sandwich").await.unwrap();
    let f = stepwise_core::DetectionFrame::new(0);
    for i in 0..3 {
        let mut frame = f.clone();
        frame.frame_index = i;
        let msg = client.detections(&frame);
        client.send_raw(msg).await;
    }
    let first = client.recv().await.unwrap();
    assert_eq!(first.kind, MessageType::Error);
    assert_eq!(first.payload["code"], "flow_control");
    assert_eq!(first.in_reply_to(), Some(3));
    assert!(!first.returns_token());
    let a = client.recv().await.unwrap();
    let b = client.recv().await.unwrap();
    assert_eq!((a.in_reply_to(), b.in_reply_to()), (Some(1), Some(2)));
    assert!(a.returns_token() && b.returns_token());
    client.close().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_sessions_are_isolated() {
    let svc = sandwich_service(2).await;
    let run = |case: SandwichCase| {
        let addr = svc.addr;
        tokio::spawn(async move {
            let (mut c, _) = Client::connect(addr, "sandwich").await.unwrap();
            c.run_trace(&case.trace(), 200.0).await;
            let states = c.guidance_states();
            let in_flight = c.max_in_flight();
            c.close().await;
            (states, in_flight)
        })
    };
    let a = run(SandwichCase::TomatoOnBread);
    let b = run(SandwichCase::CucumberOnHam);
    let (a, b) = (a.await.unwrap(), b.await.unwrap());
    assert_eq!(a.0, expected_states(SandwichCase::TomatoOnBread));
    assert_eq!(b.0, expected_states(SandwichCase::CucumberOnHam));
    assert!(a.1 <= 2 && b.1 <= 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn replay_is_deterministic() {
    let svc = sandwich_service(2).await;
    let mut runs = Vec::new();
    for _ in 0..2 {
        let (mut c, _) = Client::connect(svc.addr, "sandwich").await.unwrap();
        c.run_trace(&SandwichCase::Normative.trace(), 500.0).await;
        let guidance: Vec<serde_json::Value> = c
            .received()
            .into_iter()
            .filter(|m| m.kind == MessageType::Guidance)
            .map(|m| m.payload.clone())
            .collect();
        runs.push(guidance);
        c.close().await;
    }
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0].len(), 4);
}
