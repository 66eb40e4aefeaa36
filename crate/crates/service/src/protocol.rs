//! Wire format. Control messages are JSON text `{type, payload}`; frames are
//! binary: magic `FVSF`, then little-endian u32 width, height and frame id,
//! then row-major RGBA8.

use fovea_core::{Intrinsics, Pose, RenderMode, StageTimings};
use serde::{Deserialize, Serialize};

pub const FRAME_MAGIC: [u8; 4] = *b"FVSF";
pub const FRAME_HEADER_LEN: usize = 16;

/// Messages from the viewer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum ClientMessage {
    SetCamera {
        pose: Pose<f32>,
        intrinsics: Intrinsics<f32>,
    },
    /// Gaze in pixels; only eye 0 drives the fovea.
    SetGaze {
        u: f32,
        v: f32,
        #[serde(default)]
        eye: usize,
    },
    SetMode {
        mode: RenderMode,
    },
    /// `m`, `gamma_edge` or `fovea_px` (crop side in pixels).
    SetParam {
        name: String,
        value: f64,
    },
    /// Continuous rendering at `fps`; zero stops it.
    SetStreaming {
        fps: f64,
    },
    RequestFrame,
    Stats,
}

impl ClientMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::SetCamera { .. } => "SetCamera",
            ClientMessage::SetGaze { .. } => "SetGaze",
            ClientMessage::SetMode { .. } => "SetMode",
            ClientMessage::SetParam { .. } => "SetParam",
            ClientMessage::SetStreaming { .. } => "SetStreaming",
            ClientMessage::RequestFrame => "RequestFrame",
            ClientMessage::Stats => "Stats",
        }
    }
}

/// Replies to control messages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload")]
pub enum ServerMessage {
    Ack { of: String },
    Stats(StatsPayload),
    Error { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsPayload {
    /// Frames emitted so far.
    pub frames: u32,
    pub mode: RenderMode,
    pub gaze: [f32; 2],
    pub fovea_px: f32,
    pub m: f32,
    pub gamma_edge: f32,
    /// Stage timings of the latest frame, in ms.
    pub last_ms: TimingsMs,
    /// Mean over the rolling window.
    pub mean_ms: TimingsMs,
    /// Fraction of the latest frame with a nonzero blend factor.
    pub mask_coverage: f32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingsMs {
    pub periphery: f64,
    pub fovea_points: f64,
    pub resolver: f64,
    pub combine: f64,
    pub tonemap: f64,
    pub total: f64,
}

impl From<StageTimings> for TimingsMs {
    fn from(t: StageTimings) -> Self {
        Self {
            periphery: t.periphery,
            fovea_points: t.fovea_points,
            resolver: t.resolver,
            combine: t.combine,
            tonemap: t.tonemap,
            total: t.total(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrameHeader {
    pub width: u32,
    pub height: u32,
    pub frame_id: u32,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame shorter than its header ({0} bytes)")]
    Short(usize),
    #[error("bad frame magic {0:?}")]
    Magic([u8; 4]),
    #[error("payload is {actual} bytes, header implies {expected}")]
    Length { expected: usize, actual: usize },
}

pub fn encode_frame(header: FrameHeader, rgba: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + rgba.len());
    out.extend_from_slice(&FRAME_MAGIC);
    for v in [header.width, header.height, header.frame_id] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(rgba);
    out
}

/// Splits a frame message into header and pixels.
pub fn decode_frame(bytes: &[u8]) -> Result<(FrameHeader, &[u8]), FrameError> {
    if bytes.len() < FRAME_HEADER_LEN {
        return Err(FrameError::Short(bytes.len()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic != FRAME_MAGIC {
        return Err(FrameError::Magic(magic));
    }
    let header = FrameHeader {
        width: word(4),
        height: word(8),
        frame_id: word(12),
    };
    let expected = header.width as usize * header.height as usize * 4;
    let pixels = &bytes[FRAME_HEADER_LEN..];
    if pixels.len() != expected {
        return Err(FrameError::Length {
            expected,
            actual: pixels.len(),
        });
    }
    Ok((header, pixels))
}

/// Viewer-side bookkeeping: every binary message is either shown or counted
/// as dropped. Frames that fail to decode or arrive out of order are dropped.
#[derive(Clone, Debug, Default)]
pub struct FrameCounter {
    pub shown: u64,
    pub dropped: u64,
    pub last_id: Option<u32>,
}

impl FrameCounter {
    pub fn accept<'a>(&mut self, bytes: &'a [u8]) -> Option<(FrameHeader, &'a [u8])> {
        match decode_frame(bytes) {
            Ok((h, px)) if self.last_id.is_none_or(|last| h.frame_id > last) => {
                self.shown += 1;
                self.last_id = Some(h.frame_id);
                Some((h, px))
            }
            _ => {
                self.dropped += 1;
                None
            }
        }
    }
}
