//! Worker lifecycle: isolation between cameras, startup validation, presence
//! forwarding and tolerance of bad records.

mod common;

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::Path;
use std::time::Duration;

use xroads_core::protocol::{encode_frame_packet, parse_wire, WireMessage};
use xroads_core::store::{BucketWidth, EventKind, SeriesFilter, StatsStore, TimeRange};
use xroads_core::FramePacket;
use xroads_service::worker::StartError;
use xroads_service::{run_packets, Command, InputSpec, PacketSource, Worker, WorkerConfig, WorkerStatus};
use xroads_sim::{presets, simulate};

fn packets(seed: u64) -> (Vec<FramePacket>, xroads_core::ClassSet) {
    let sc = presets::t_junction();
    let (p, _) = simulate(&sc, seed).unwrap();
    (p, sc.classes().unwrap())
}

fn write_packets(path: &Path, pkts: &[FramePacket], classes: &xroads_core::ClassSet) {
    let mut f = std::fs::File::create(path).unwrap();
    for p in pkts {
        writeln!(f, "{}", encode_frame_packet(p, classes)).unwrap();
    }
}

fn file_config(path: &Path, tsc: Option<String>) -> WorkerConfig {
    WorkerConfig {
        scene: presets::t_junction().scene_config(),
        scene_path: None,
        input: InputSpec::File(path.to_path_buf()),
        max_speed: true,
        tsc_addr: tsc,
    }
}

fn series(store: &StatsStore, camera: &str) -> Vec<xroads_core::store::SeriesRow> {
    let f = SeriesFilter { camera: Some(camera.into()), ..SeriesFilter::default() };
    store.query_series(&f, TimeRange::default(), BucketWidth::M1).unwrap()
}

#[test]
fn a_dead_source_does_not_disturb_the_other_camera() {
    let dir = tempfile::tempdir().unwrap();
    let (pkts, classes) = packets(7);
    let a_path = dir.path().join("a.jsonl");
    write_packets(&a_path, &pkts, &classes);

    // Camera B: a detector that sends part of a stream and hangs up.
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let b_lines: Vec<String> = pkts[..200]
        .iter()
        .map(|p| encode_frame_packet(&FramePacket { camera_id: "cam-b".into(), ..p.clone() }, &classes))
        .collect();
    let feeder = std::thread::spawn(move || {
        let (mut s, _) = listener.accept().unwrap();
        for l in b_lines {
            writeln!(s, "{l}").unwrap();
        }
    });
    let mut b_scene = presets::t_junction().scene_config();
    b_scene.camera_id = "cam-b".into();
    let b_cfg = WorkerConfig { scene: b_scene, input: InputSpec::Tcp(addr), ..file_config(&a_path, None) };

    let store = common::shared_store();
    let b = Worker::start(b_cfg, store.clone()).unwrap();
    let a = Worker::start(file_config(&a_path, None), store.clone()).unwrap();
    feeder.join().unwrap();
    let (bh, _) = b.join();
    let (ah, a_summary) = a.join();
    assert_eq!(bh.status, WorkerStatus::Failed);
    assert!(bh.last_error.unwrap().contains("lost"));
    assert_eq!(bh.frames_processed, 200);
    assert_eq!(ah.status, WorkerStatus::Stopped);
    assert_eq!(ah.last_error, None);

    // Camera A alone, without any worker machinery.
    let (events, trajs, solo) = run_packets(presets::t_junction().scene_config(), &pkts).unwrap();
    assert_eq!(a_summary.unwrap(), solo);
    let mut alone = StatsStore::in_memory();
    events.into_iter().try_for_each(|e| alone.record_event(e)).unwrap();
    trajs.into_iter().try_for_each(|t| alone.record_trajectory(t)).unwrap();
    let shared = store.lock().unwrap();
    assert_eq!(series(&shared, "cam-t1"), series(&alone, "cam-t1"));
    assert!(!series(&shared, "cam-b").is_empty());
}

#[test]
fn malformed_scene_fails_before_any_packet_is_read() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let mut scene = presets::t_junction().scene_config();
    scene.movements[0].origin_gate = "missing".into();
    let cfg = WorkerConfig {
        scene,
        scene_path: None,
        input: InputSpec::Tcp(listener.local_addr().unwrap().to_string()),
        max_speed: false,
        tsc_addr: None,
    };
    let err = Worker::start(cfg, common::shared_store()).err().expect("config error");
    assert!(matches!(err, StartError::Config(_)), "{err}");
    // The source was never contacted.
    assert_eq!(listener.accept().unwrap_err().kind(), std::io::ErrorKind::WouldBlock);
}

#[test]
fn presence_edges_reach_the_signal_controller() {
    let dir = tempfile::tempdir().unwrap();
    let (pkts, classes) = packets(12);
    let path = dir.path().join("p.jsonl");
    write_packets(&path, &pkts, &classes);
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("tcp://{}", listener.local_addr().unwrap());
    let reader = std::thread::spawn(move || {
        let (s, _) = listener.accept().unwrap();
        s.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
        let mut out = Vec::new();
        for line in BufReader::new(s).split(b'\n') {
            let Ok(mut l) = line else { break };
            l.push(b'\n');
            out.push(parse_wire(&l).unwrap());
        }
        out
    });
    let store = common::shared_store();
    let w = Worker::start(file_config(&path, Some(addr)), store.clone()).unwrap();
    let (h, _) = w.join();
    assert_eq!(h.status, WorkerStatus::Stopped);
    let wire = reader.join().unwrap();
    let pres: Vec<_> = wire
        .iter()
        .filter_map(|m| match m {
            WireMessage::Presence(p) => Some((p.loop_id.clone(), p.state, p.ts_ms)),
            WireMessage::Heartbeat { .. } => None,
        })
        .collect();
    let edges: Vec<_> = store
        .lock()
        .unwrap()
        .events()
        .iter()
        .filter(|e| e.kind == EventKind::PresenceEdge)
        .map(|e| (e.detector.clone(), e.value == 1.0, e.ts_ms))
        .collect();
    assert!(!edges.is_empty());
    assert_eq!(pres, edges);
}

#[test]
fn malformed_records_are_skipped_and_counted() {
    let dir = tempfile::tempdir().unwrap();
    let (pkts, classes) = packets(13);
    let path = dir.path().join("p.jsonl");
    let mut f = std::fs::File::create(&path).unwrap();
    for (i, p) in pkts.iter().enumerate() {
        if i == 100 {
            writeln!(f, "{{\"camera_id\": \"cam-t1\", \"frame\": \"oops\"}}").unwrap();
        }
        writeln!(f, "{}", encode_frame_packet(p, &classes)).unwrap();
    }
    drop(f);
    let (h, summary) = Worker::start(file_config(&path, None), common::shared_store()).unwrap().join();
    assert_eq!(h.status, WorkerStatus::Stopped);
    assert_eq!(h.rejected_records, 1);
    assert!(h.last_error.unwrap().contains("line 101"));
    let (_, _, clean) = run_packets(presets::t_junction().scene_config(), &pkts).unwrap();
    assert_eq!(summary.unwrap(), clean);
}

#[test]
fn rate_zero_stops_new_arrivals() {
    let sc = presets::t_junction();
    let spec = InputSpec::Sim { scenario: "t_junction".into(), seed: 3 };
    let mut src = PacketSource::open(&spec, sc.classes().unwrap()).unwrap();
    assert!(src.is_simulator());
    src.set_rate(None, 0.0).unwrap();
    let mut n = 0;
    while let Some(p) = src.next_packet().unwrap() {
        assert!(p.detections.is_empty(), "frame {}", p.frame);
        n += 1;
    }
    assert_eq!(n, 2400);

    // Tripling one approach's demand brings more vehicles than the baseline.
    let vehicles = |rate: Option<f64>| {
        let mut src = PacketSource::open(&spec, sc.classes().unwrap()).unwrap();
        if let Some(r) = rate {
            src.set_rate(Some("W"), r).unwrap();
        }
        let mut pkts = Vec::new();
        while let Some(p) = src.next_packet().unwrap() {
            pkts.push(p);
        }
        run_packets(sc.scene_config(), &pkts).unwrap().2.tracks
    };
    let w_base: f64 = sc.approaches.iter().find(|a| a.id == "W").unwrap().rates.values().sum();
    assert!(vehicles(Some(3.0 * w_base)) > vehicles(None));
}

#[test]
fn set_rate_needs_a_simulator() {
    let dir = tempfile::tempdir().unwrap();
    let (pkts, classes) = packets(14);
    let path = dir.path().join("p.jsonl");
    write_packets(&path, &pkts[..10], &classes);
    let w = Worker::start(file_config(&path, None), common::shared_store()).unwrap();
    let (reply, rx) = tokio::sync::oneshot::channel();
    w.reference().commands.send(Command::SetRate { approach: None, veh_per_s: 1.0, reply }).unwrap();
    assert!(rx.blocking_recv().unwrap().is_err());
    let (h, _) = w.join();
    assert_eq!(h.status, WorkerStatus::Stopped);
}
