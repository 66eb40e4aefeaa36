//! WebSocket frame server. One client per session; network handling and
//! rendering run on separate threads around a shared [`SessionState`].

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TryRecvError};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::thread;
use std::time::{Duration, Instant};

use fovea_core::{CameraView, FoveatedRenderer, GaussianSet, NeuralPointCloud, RenderOptions};
use tungstenite::{Message, WebSocket};

use crate::protocol::{encode_frame, ClientMessage, FrameHeader, ServerMessage};
use crate::session::{SessionState, TickRecord};

/// How long a read waits before the network thread forwards queued frames.
const POLL: Duration = Duration::from_millis(2);
/// Frames buffered between renderer and socket before rendering blocks.
const FRAME_QUEUE: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("websocket handshake failed: {0}")]
    Handshake(String),
    #[error("websocket: {0}")]
    Ws(Box<tungstenite::Error>),
    #[error("render thread panicked")]
    RenderPanic,
}

impl From<tungstenite::Error> for ServiceError {
    fn from(e: tungstenite::Error) -> Self {
        ServiceError::Ws(Box::new(e))
    }
}

pub type Result<T> = std::result::Result<T, ServiceError>;

pub struct Scene {
    pub gaussians: GaussianSet<f32>,
    pub points: NeuralPointCloud<f32>,
}

/// Called by the render thread with the frame id after the state snapshot
/// and before rendering. Tests use it to hold a tick open.
pub type TickHook = Arc<dyn Fn(u32) + Send + Sync>;

#[derive(Clone)]
pub struct ServerConfig {
    pub camera: CameraView<f32>,
    /// Initial mode and fovea parameters, plus the fixed resolver and sort.
    pub options: RenderOptions<f32>,
    /// Initial streaming rate; `None` renders on request only.
    pub fps: Option<f64>,
    pub on_tick_start: Option<TickHook>,
}

impl ServerConfig {
    pub fn new(camera: CameraView<f32>, options: RenderOptions<f32>) -> Self {
        Self {
            camera,
            options,
            fps: None,
            on_tick_start: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SessionSummary {
    pub frames: u32,
    pub messages: u64,
    pub errors: u64,
}

struct Shared {
    state: Mutex<SessionState>,
    wake: Condvar,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, SessionState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

enum Outgoing {
    Frame(Vec<u8>),
    Error(String),
}

pub struct Server {
    listener: TcpListener,
    scene: Arc<Scene>,
    config: ServerConfig,
    current: Mutex<Option<Arc<Shared>>>,
}

impl Server {
    pub fn bind(
        addr: impl ToSocketAddrs + std::fmt::Debug,
        scene: Arc<Scene>,
        config: ServerConfig,
    ) -> Result<Self> {
        let listener = TcpListener::bind(&addr).map_err(|source| ServiceError::Bind {
            addr: format!("{addr:?}"),
            source,
        })?;
        Ok(Self {
            listener,
            scene,
            config,
            current: Mutex::new(None),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    /// Tick log of the active or most recent session, oldest first.
    pub fn tick_log(&self) -> Vec<TickRecord> {
        match &*self.current.lock().unwrap() {
            Some(shared) => shared.lock().ticks.iter().copied().collect(),
            None => Vec::new(),
        }
    }

    /// Serves sessions one after another, forever.
    pub fn serve(&self) -> Result<()> {
        loop {
            match self.serve_one() {
                Ok(_) | Err(ServiceError::Handshake(_)) | Err(ServiceError::Ws(_)) => {}
                Err(e) => return Err(e),
            }
        }
    }

    /// Accepts one client and serves it until it disconnects.
    pub fn serve_one(&self) -> Result<SessionSummary> {
        let (stream, _) = self.listener.accept()?;
        stream.set_nodelay(true)?;
        let mut ws =
            tungstenite::accept(stream).map_err(|e| ServiceError::Handshake(e.to_string()))?;
        ws.get_mut().set_read_timeout(Some(POLL))?;

        let opts = &self.config.options;
        let mut state = SessionState::new(self.config.camera, opts.mode, opts.fovea);
        if let Some(fps) = self.config.fps {
            state
                .apply(&ClientMessage::SetStreaming { fps })
                .map_err(|e| ServiceError::Io(std::io::Error::new(ErrorKind::InvalidInput, e)))?;
        }
        let shared = Arc::new(Shared {
            state: Mutex::new(state),
            wake: Condvar::new(),
        });
        *self.current.lock().unwrap() = Some(shared.clone());

        let (tx, rx) = sync_channel(FRAME_QUEUE);
        let render = {
            let shared = shared.clone();
            let scene = self.scene.clone();
            let options = opts.clone();
            let hook = self.config.on_tick_start.clone();
            thread::spawn(move || render_loop(&shared, &scene, options, hook, tx))
        };

        let result = network_loop(&mut ws, &shared, &rx);
        shared.lock().shutdown = true;
        shared.wake.notify_all();
        // unblocks a renderer waiting on a full queue
        drop(rx);
        render.join().map_err(|_| ServiceError::RenderPanic)?;
        let mut summary = result?;
        summary.frames = shared.lock().frame_counter;
        Ok(summary)
    }
}

fn network_loop(
    ws: &mut WebSocket<TcpStream>,
    shared: &Shared,
    frames: &Receiver<Outgoing>,
) -> Result<SessionSummary> {
    let mut summary = SessionSummary::default();
    loop {
        loop {
            match frames.try_recv() {
                Ok(Outgoing::Frame(bytes)) => ws.send(Message::Binary(bytes))?,
                Ok(Outgoing::Error(message)) => send(ws, &ServerMessage::Error { message })?,
                Err(TryRecvError::Empty) => break,
                // the renderer only exits after shutdown
                Err(TryRecvError::Disconnected) => return Ok(summary),
            }
        }
        let reply = match ws.read() {
            Ok(Message::Text(text)) => {
                summary.messages += 1;
                handle_text(&text, shared)
            }
            Ok(Message::Binary(_)) => {
                summary.messages += 1;
                Some(ServerMessage::Error {
                    message: "binary messages are not accepted".into(),
                })
            }
            Ok(Message::Close(_)) => None,
            Ok(_) => None,
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) =>
            {
                None
            }
            Err(tungstenite::Error::ConnectionClosed | tungstenite::Error::AlreadyClosed) => {
                return Ok(summary)
            }
            Err(e) => return Err(e.into()),
        };
        if let Some(reply) = reply {
            if matches!(reply, ServerMessage::Error { .. }) {
                summary.errors += 1;
            }
            send(ws, &reply)?;
        }
    }
}

fn send(ws: &mut WebSocket<TcpStream>, msg: &ServerMessage) -> Result<()> {
    let text = serde_json::to_string(msg).expect("server messages serialize");
    ws.send(Message::Text(text))?;
    Ok(())
}

fn handle_text(text: &str, shared: &Shared) -> Option<ServerMessage> {
    let msg: ClientMessage = match serde_json::from_str(text) {
        Ok(m) => m,
        Err(e) => {
            return Some(ServerMessage::Error {
                message: format!("malformed message: {e}"),
            })
        }
    };
    let mut state = shared.lock();
    if msg == ClientMessage::Stats {
        return Some(ServerMessage::Stats(state.stats()));
    }
    Some(match state.apply(&msg) {
        Ok(()) => {
            shared.wake.notify_all();
            ServerMessage::Ack {
                of: msg.kind().into(),
            }
        }
        Err(message) => ServerMessage::Error {
            message: format!("{}: {message}", msg.kind()),
        },
    })
}

fn render_loop(
    shared: &Shared,
    scene: &Scene,
    options: RenderOptions<f32>,
    hook: Option<TickHook>,
    out: SyncSender<Outgoing>,
) {
    let mut renderer = FoveatedRenderer::new(&scene.gaussians, &scene.points, options);
    let mut next_stream = Instant::now();
    loop {
        let snap = {
            let mut state = shared.lock();
            loop {
                if state.shutdown {
                    return;
                }
                if state.pending_requests > 0 {
                    break;
                }
                match state.stream_interval {
                    Some(interval) => {
                        let now = Instant::now();
                        if now >= next_stream {
                            next_stream = (next_stream + interval).max(now);
                            break;
                        }
                        state = shared
                            .wake
                            .wait_timeout(state, next_stream - now)
                            .unwrap_or_else(|p| p.into_inner())
                            .0;
                    }
                    None => state = shared.wake.wait(state).unwrap_or_else(|p| p.into_inner()),
                }
            }
            state.begin_tick()
        };
        if let Some(hook) = &hook {
            hook(snap.frame_id);
        }

        renderer.options.mode = snap.mode;
        renderer.options.fovea = snap.fovea;
        let mut latched_seq = snap.gaze_seq;
        let result = renderer.render_late_latch(&snap.camera, || {
            let state = shared.lock();
            latched_seq = state.gaze_seq;
            state.gaze[0]
        });
        let msg = match result {
            Ok(frame) => {
                let mask = frame.mask_image();
                let coverage = mask.data().iter().filter(|&&c| c > 0.0).count() as f32
                    / mask.data().len().max(1) as f32;
                let record = TickRecord {
                    frame_id: snap.frame_id,
                    mode: snap.mode,
                    gaze_seq_at_start: snap.gaze_seq,
                    gaze_seq_latched: latched_seq,
                    gaze: frame.gaze,
                };
                shared.lock().end_tick(record, frame.timings, coverage);
                let (w, h) = frame.image.dims();
                let header = FrameHeader {
                    width: w as u32,
                    height: h as u32,
                    frame_id: snap.frame_id,
                };
                Outgoing::Frame(encode_frame(header, &frame.image.to_rgba8()))
            }
            Err(e) => Outgoing::Error(format!("frame {}: {e}", snap.frame_id)),
        };
        if out.send(msg).is_err() {
            return;
        }
    }
}
