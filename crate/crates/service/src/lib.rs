//! Local frame service for the interactive viewer: receives camera, gaze and
//! mode over a WebSocket and streams composited frames back.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{
    decode_frame, encode_frame, ClientMessage, FrameCounter, FrameHeader, ServerMessage,
};
pub use server::{Scene, Server, ServerConfig, ServiceError, SessionSummary};
pub use session::{SessionState, TickRecord};
