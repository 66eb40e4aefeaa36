use std::net::TcpStream;
use std::sync::mpsc::channel;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use fovea_core::scene::synth::{generate_synthetic, SceneKind, SceneSpec};
use fovea_core::{CameraView, FoveatedRenderer, RenderMode, RenderOptions};
use fovea_service::protocol::StatsPayload;
use fovea_service::{
    decode_frame, FrameCounter, FrameHeader, Scene, Server, ServerConfig, ServerMessage,
    ServiceError, SessionSummary,
};
use serde_json::{json, Value};
use tungstenite::stream::MaybeTlsStream;
use tungstenite::{Message, WebSocket};

type Client = WebSocket<MaybeTlsStream<TcpStream>>;

fn scene() -> (Arc<Scene>, CameraView<f32>) {
    let spec = SceneSpec {
        resolution: [160, 128],
        ..SceneSpec::new(SceneKind::TexturedQuads, 5, 3_000, 6_000)
    };
    let s = generate_synthetic(&spec).unwrap();
    let camera = s.views[0].camera;
    (
        Arc::new(Scene {
            gaussians: s.gaussians,
            points: s.points,
        }),
        camera,
    )
}

fn options() -> RenderOptions<f32> {
    let mut o = RenderOptions::default();
    o.fovea.d_f = 32.0;
    o
}

struct Session {
    server: Arc<Server>,
    thread: JoinHandle<Result<SessionSummary, ServiceError>>,
    ws: Client,
}

fn start(config: ServerConfig, scene: Arc<Scene>) -> Session {
    let server = Arc::new(Server::bind("127.0.0.1:0", scene, config).unwrap());
    let addr = server.local_addr().unwrap();
    let thread = {
        let server = server.clone();
        thread::spawn(move || server.serve_one())
    };
    let (ws, _) = tungstenite::connect(format!("ws://{addr}")).unwrap();
    Session { server, thread, ws }
}

impl Session {
    fn send(&mut self, v: Value) {
        self.ws.send(Message::Text(v.to_string())).unwrap();
    }

    fn reply(&mut self) -> ServerMessage {
        match self.ws.read().unwrap() {
            Message::Text(t) => serde_json::from_str(&t).unwrap(),
            other => panic!("expected a control reply, got {other:?}"),
        }
    }

    fn ack(&mut self, v: Value) {
        let kind = v["type"].as_str().unwrap().to_string();
        self.send(v);
        assert_eq!(self.reply(), ServerMessage::Ack { of: kind });
    }

    fn frame(&mut self) -> (FrameHeader, Vec<u8>) {
        match self.ws.read().unwrap() {
            Message::Binary(b) => {
                let (h, px) = decode_frame(&b).unwrap();
                (h, px.to_vec())
            }
            other => panic!("expected a frame, got {other:?}"),
        }
    }

    fn request(&mut self) -> (FrameHeader, Vec<u8>) {
        self.ack(json!({"type": "RequestFrame"}));
        self.frame()
    }

    fn stats(&mut self) -> StatsPayload {
        self.send(json!({"type": "Stats"}));
        match self.reply() {
            ServerMessage::Stats(s) => s,
            other => panic!("{other:?}"),
        }
    }

    fn close(mut self) -> SessionSummary {
        self.ws.close(None).unwrap();
        while self.ws.read().is_ok() {}
        self.thread.join().unwrap().unwrap()
    }
}

/// Centroid and pixel count of the saturated (c = 1) region of a mask frame,
/// in continuous pixel coordinates.
fn saturated_disk(h: &FrameHeader, rgba: &[u8]) -> ([f64; 2], usize) {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0);
    for y in 0..h.height as usize {
        for x in 0..h.width as usize {
            if rgba[(y * h.width as usize + x) * 4] == 255 {
                sx += x as f64 + 0.5;
                sy += y as f64 + 0.5;
                n += 1;
            }
        }
    }
    assert!(n > 0, "no saturated pixels");
    ([sx / n as f64, sy / n as f64], n)
}

#[test]
fn mask_debug_disk_follows_gaze() {
    let (scene, camera) = scene();
    let mut s = start(ServerConfig::new(camera, options()), scene);
    s.ack(json!({"type": "SetMode", "payload": {"mode": "mask_debug"}}));
    // without the edge term the c = 1 region is exactly the inner disk
    s.ack(json!({"type": "SetParam", "payload": {"name": "gamma_edge", "value": 0.0}}));
    for (u, v) in [(80.0, 64.0), (51.3, 47.8), (109.6, 70.2)] {
        s.ack(json!({"type": "SetGaze", "payload": {"u": u, "v": v}}));
        let (h, px) = s.request();
        assert_eq!((h.width, h.height), (160, 128));
        assert!(px
            .chunks(4)
            .all(|p| p[0] == p[1] && p[1] == p[2] && p[3] == 255));
        let ([cx, cy], n) = saturated_disk(&h, &px);
        assert!(
            (cx - u).abs() <= 1.0 && (cy - v).abs() <= 1.0,
            "disk at ({cx}, {cy}), gaze ({u}, {v})"
        );
        // radius m·d_f = 24 px
        let area = std::f64::consts::PI * 24.0 * 24.0;
        assert!((n as f64 - area).abs() < 0.05 * area, "{n} px");
    }
    let summary = s.close();
    assert_eq!(summary.frames, 3);
    assert_eq!(summary.errors, 0);
}

#[test]
fn mode_toggle_round_trips() {
    let (scene, camera) = scene();
    let mut s = start(ServerConfig::new(camera, options()), scene.clone());
    s.ack(json!({"type": "SetGaze", "payload": {"u": 70.0, "v": 60.0}}));
    let (_, foveated) = s.request();
    assert!(s.stats().mask_coverage > 0.0);

    s.ack(json!({"type": "SetMode", "payload": {"mode": "full_gs"}}));
    let (h, full) = s.request();
    let st = s.stats();
    assert_eq!(st.mode, RenderMode::FullGs);
    assert_eq!(st.mask_coverage, 0.0);
    assert_eq!(st.last_ms.resolver, 0.0);
    // the streamed frame is the plain Gaussian render
    let o = RenderOptions {
        mode: RenderMode::FullGs,
        ..options()
    };
    let expect = FoveatedRenderer::new(&scene.gaussians, &scene.points, o)
        .render(&camera, [70.0, 60.0])
        .unwrap();
    assert_eq!(full, expect.image.to_rgba8());
    assert_ne!(full, foveated);

    s.ack(json!({"type": "SetMode", "payload": {"mode": "foveated"}}));
    let (h2, again) = s.request();
    assert_eq!(s.stats().mode, RenderMode::Foveated);
    assert_eq!(again, foveated);
    assert_eq!((h.frame_id, h2.frame_id), (1, 2));
    s.close();
}

#[test]
fn second_gaze_update_in_a_tick_wins() {
    let (scene, camera) = scene();
    let (started_tx, started_rx) = channel::<u32>();
    let (release_tx, release_rx) = channel::<()>();
    let release_rx = Mutex::new(release_rx);
    let started_tx = Mutex::new(started_tx);
    let config = ServerConfig {
        on_tick_start: Some(Arc::new(move |id| {
            started_tx.lock().unwrap().send(id).unwrap();
            release_rx.lock().unwrap().recv().unwrap();
        })),
        ..ServerConfig::new(camera, options())
    };
    let mut s = start(config, scene);
    s.ack(json!({"type": "SetMode", "payload": {"mode": "mask_debug"}}));
    s.ack(json!({"type": "SetParam", "payload": {"name": "gamma_edge", "value": 0.0}}));
    s.ack(json!({"type": "SetGaze", "payload": {"u": 40.0, "v": 40.0}}));
    s.ack(json!({"type": "RequestFrame"}));

    // the tick has taken its snapshot; both updates land while it runs
    assert_eq!(started_rx.recv().unwrap(), 0);
    s.ack(json!({"type": "SetGaze", "payload": {"u": 90.0, "v": 50.0}}));
    s.ack(json!({"type": "SetGaze", "payload": {"u": 110.0, "v": 75.0}}));
    release_tx.send(()).unwrap();

    let (h, px) = s.frame();
    let ([cx, cy], _) = saturated_disk(&h, &px);
    assert!(
        (cx - 110.0).abs() <= 1.0 && (cy - 75.0).abs() <= 1.0,
        "({cx}, {cy})"
    );
    let log = s.server.tick_log();
    assert_eq!(log.len(), 1);
    assert_eq!((log[0].gaze_seq_at_start, log[0].gaze_seq_latched), (1, 3));
    assert_eq!(log[0].gaze, [110.0, 75.0]);

    // a later tick with no updates in flight latches what it started with
    s.ack(json!({"type": "RequestFrame"}));
    assert_eq!(started_rx.recv().unwrap(), 1);
    release_tx.send(()).unwrap();
    s.frame();
    let log = s.server.tick_log();
    assert_eq!((log[1].gaze_seq_at_start, log[1].gaze_seq_latched), (3, 3));
    s.close();
}

#[test]
fn malformed_messages_get_errors_and_the_session_continues() {
    let (scene, camera) = scene();
    let mut s = start(ServerConfig::new(camera, options()), scene);
    let bad = [
        Message::Text("{not json".into()),
        Message::Text(json!({"type": "Teleport"}).to_string()),
        Message::Text(json!({"type": "SetGaze", "payload": {"u": "left"}}).to_string()),
        Message::Text(
            json!({"type": "SetParam", "payload": {"name": "m", "value": 1.5}}).to_string(),
        ),
        Message::Text(
            json!({"type": "SetParam", "payload": {"name": "zoom", "value": 1}}).to_string(),
        ),
        Message::Text(
            json!({"type": "SetParam", "payload": {"name": "fovea_px", "value": 0}}).to_string(),
        ),
        Message::Text(
            json!({"type": "SetGaze", "payload": {"u": 1, "v": 1, "eye": 2}}).to_string(),
        ),
        Message::Text(json!({"type": "SetStreaming", "payload": {"fps": -3}}).to_string()),
        Message::Binary(b"FVSF".to_vec()),
    ];
    let n_bad = bad.len() as u64;
    for m in bad {
        s.ws.send(m).unwrap();
        assert!(matches!(s.reply(), ServerMessage::Error { .. }));
    }
    let st = s.stats();
    assert_eq!((st.m, st.fovea_px), (0.75, 64.0));

    s.ack(json!({"type": "SetParam", "payload": {"name": "fovea_px", "value": 48}}));
    s.ack(json!({"type": "SetGaze", "payload": {"u": 500.0, "v": -9.0}}));
    let st = s.stats();
    assert_eq!(st.fovea_px, 48.0);
    assert_eq!(st.gaze, [160.0, 0.0]);
    let (h, _) = s.request();
    assert_eq!(h.frame_id, 0);
    let summary = s.close();
    assert_eq!(summary.errors, n_bad);
}

#[test]
fn camera_updates_move_the_view() {
    let (scene, camera) = scene();
    let mut s = start(ServerConfig::new(camera, options()), scene.clone());
    s.ack(json!({"type": "SetMode", "payload": {"mode": "full_gs"}}));
    let (_, before) = s.request();
    let mut moved = camera;
    moved.pose.translation.0[0] += 0.3;
    let payload = json!({"pose": moved.pose, "intrinsics": moved.intrinsics});
    s.ack(json!({"type": "SetCamera", "payload": payload}));
    let (_, after) = s.request();
    assert_ne!(before, after);
    let o = RenderOptions {
        mode: RenderMode::FullGs,
        ..options()
    };
    let expect = FoveatedRenderer::new(&scene.gaussians, &scene.points, o)
        .render(&moved, [0.0, 0.0])
        .unwrap();
    assert_eq!(after, expect.image.to_rgba8());

    let mut broken = moved.intrinsics;
    broken.fx = -1.0;
    s.send(json!({"type": "SetCamera", "payload": {"pose": moved.pose, "intrinsics": broken}}));
    assert!(matches!(s.reply(), ServerMessage::Error { .. }));
    let (_, still) = s.request();
    assert_eq!(still, after);
    s.close();
}

#[test]
fn streams_100_frames_without_drops() {
    let (scene, camera) = scene();
    let mut s = start(ServerConfig::new(camera, options()), scene);
    s.ack(json!({"type": "SetStreaming", "payload": {"fps": 240.0}}));
    let mut counter = FrameCounter::default();
    let mut ids = Vec::new();
    while counter.shown + counter.dropped < 100 {
        match s.ws.read().unwrap() {
            Message::Binary(b) => {
                if let Some((h, _)) = counter.accept(&b) {
                    ids.push(h.frame_id);
                }
            }
            other => panic!("unexpected {other:?}"),
        }
    }
    assert_eq!(counter.dropped, 0);
    assert_eq!(ids, (0..100).collect::<Vec<u32>>());
    s.ack(json!({"type": "SetStreaming", "payload": {"fps": 0.0}}));
    let st = s.stats();
    assert!(st.frames >= 100);
    assert!(st.mean_ms.total > 0.0 && st.mean_ms.periphery > 0.0);
    s.close();
}

#[test]
fn binding_a_taken_port_fails() {
    let (scene, camera) = scene();
    let first = Server::bind(
        "127.0.0.1:0",
        scene.clone(),
        ServerConfig::new(camera, options()),
    )
    .unwrap();
    let addr = first.local_addr().unwrap();
    let e = Server::bind(addr, scene, ServerConfig::new(camera, options()))
        .err()
        .unwrap();
    assert!(matches!(e, ServiceError::Bind { .. }), "{e}");
}
