//! Live WebSocket stream and simulator control messages.

mod common;

use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;
use xroads_service::{AppState, InputSpec, LiveFrameState, Worker, WorkerConfig};

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn serve(workers: &[&Worker]) -> String {
    let state = AppState::new(workers.iter().map(|w| w.reference()).collect(), common::shared_store());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(xroads_service::api::serve(listener, state));
    format!("ws://{addr}/api/live")
}

async fn next_json(ws: &mut Socket) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(5), ws.next()).await.unwrap().unwrap().unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

/// Sends a control message and returns its reply, skipping state frames.
async fn control(ws: &mut Socket, msg: Value) -> Value {
    ws.send(Message::Text(msg.to_string().into())).await.unwrap();
    loop {
        let v = next_json(ws).await;
        if v.get("ok").is_some() || v.get("error").is_some() {
            return v;
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn live_stream_is_coalesced_to_twenty_per_second() {
    // Long enough that the unpaced run outlasts the observation window.
    let mut sc = xroads_sim::presets::t_junction();
    sc.duration_s = 1200.0;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("long.json");
    std::fs::write(&path, sc.to_json_pretty()).unwrap();
    let cfg = WorkerConfig {
        scene: sc.scene_config(),
        scene_path: None,
        input: InputSpec::Sim { scenario: path.display().to_string(), seed: 8 },
        max_speed: true,
        tsc_addr: None,
    };
    let worker = Worker::start(cfg, common::shared_store()).unwrap();
    let url = serve(&[&worker]).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(&url).await.unwrap();

    let window = Duration::from_millis(500);
    let t0 = Instant::now();
    let mut frames = Vec::new();
    while t0.elapsed() < window {
        let Ok(Some(Ok(Message::Text(t)))) = tokio::time::timeout(window, ws.next()).await else { break };
        let s: LiveFrameState = serde_json::from_str(t.as_str()).unwrap();
        assert_eq!(s.camera_id, "cam-t1");
        frames.push(s.frame);
    }
    assert!(!frames.is_empty());
    assert!(frames.windows(2).all(|w| w[0] < w[1]), "{frames:?}");
    // At most one message per 50 ms, plus the immediate first one.
    assert!(frames.len() <= 11, "{} messages in {window:?}", frames.len());
    // The pipeline ran ahead of the socket, so frames were skipped.
    assert!(frames.last().unwrap() - frames[0] > frames.len() as u64);
    let _ = worker.reference().commands.send(xroads_service::Command::Stop);
}

#[tokio::test(flavor = "multi_thread")]
async fn simulator_control_messages() {
    let worker = common::sim_worker(9, None, common::shared_store());
    let url = serve(&[&worker]).await;
    let (mut ws, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    let first: LiveFrameState = serde_json::from_value(next_json(&mut ws).await).unwrap();
    assert_eq!(first.camera_id, "cam-t1");

    let ok = control(&mut ws, json!({ "set_rate": "W", "veh_per_s": 0.3 })).await;
    assert_eq!(ok["ok"], true);
    for bad in [
        json!({ "set_rate": "nope", "veh_per_s": 0.3 }),
        json!({ "set_rate": "W", "veh_per_s": -1.0 }),
        json!({ "hello": 1 }),
    ] {
        let r = control(&mut ws, bad.clone()).await;
        assert!(r["error"].is_string(), "{bad} -> {r}");
    }

    // Rate zero everywhere: after a short confirmation grace no new track appears.
    let ok = control(&mut ws, json!({ "set_rate": null, "veh_per_s": 0.0 })).await;
    assert_eq!(ok["ok"], true);
    let max_id = |v: &Value| v["tracks"].as_array().unwrap().iter().map(|t| t["id"].as_u64().unwrap()).max();
    let mut seen = 0;
    let t0 = Instant::now();
    while t0.elapsed() < Duration::from_millis(500) {
        seen = seen.max(max_id(&next_json(&mut ws).await).unwrap_or(0));
    }
    while t0.elapsed() < Duration::from_millis(2500) {
        let v = next_json(&mut ws).await;
        assert!(max_id(&v).unwrap_or(0) <= seen, "new track after rate 0: {v}");
    }
    let _ = worker.reference().commands.send(xroads_service::Command::Stop);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_camera_is_rejected() {
    let a = common::sim_worker(10, None, common::shared_store());
    let url = serve(&[&a]).await;
    let err = tokio_tungstenite::connect_async(format!("{url}?camera=nope")).await.unwrap_err();
    match err {
        tokio_tungstenite::tungstenite::Error::Http(resp) => assert_eq!(resp.status(), 404),
        other => panic!("{other}"),
    }
    let _ = a.reference().commands.send(xroads_service::Command::Stop);
}
