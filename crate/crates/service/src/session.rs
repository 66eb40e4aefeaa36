//! Per-connection state shared by the network and render threads.

use std::collections::VecDeque;
use std::time::Duration;

use fovea_core::pipeline::clamp_gaze;
use fovea_core::{CameraView, FoveaConfig, RenderMode, StageTimings};
use serde::Serialize;

use crate::protocol::{ClientMessage, StatsPayload, TimingsMs};

const TIMING_WINDOW: usize = 30;
const TICK_LOG_LEN: usize = 4096;

/// One rendered frame as seen by the render thread.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TickRecord {
    pub frame_id: u32,
    pub mode: RenderMode,
    /// Gaze updates received before the tick started.
    pub gaze_seq_at_start: u64,
    /// Gaze updates received before the foveal pass read the gaze.
    pub gaze_seq_latched: u64,
    pub gaze: [f32; 2],
}

#[derive(Clone, Debug)]
pub struct SessionState {
    pub camera: CameraView<f32>,
    /// Latest gaze per eye, clamped to the image.
    pub gaze: [[f32; 2]; 2],
    /// Number of gaze updates applied.
    pub gaze_seq: u64,
    pub mode: RenderMode,
    pub fovea: FoveaConfig<f32>,
    /// Id of the next frame.
    pub frame_counter: u32,
    pub stream_interval: Option<Duration>,
    pub pending_requests: u32,
    pub last_timings: StageTimings,
    pub timings: VecDeque<StageTimings>,
    pub mask_coverage: f32,
    pub ticks: VecDeque<TickRecord>,
    pub shutdown: bool,
}

/// What the renderer needs for one pass.
#[derive(Clone, Copy, Debug)]
pub struct Snapshot {
    pub frame_id: u32,
    pub camera: CameraView<f32>,
    pub mode: RenderMode,
    pub fovea: FoveaConfig<f32>,
    pub gaze_seq: u64,
}

impl SessionState {
    pub fn new(camera: CameraView<f32>, mode: RenderMode, fovea: FoveaConfig<f32>) -> Self {
        let center = [camera.width as f32 * 0.5, camera.height as f32 * 0.5];
        Self {
            camera,
            gaze: [center; 2],
            gaze_seq: 0,
            mode,
            fovea,
            frame_counter: 0,
            stream_interval: None,
            pending_requests: 0,
            last_timings: StageTimings::default(),
            timings: VecDeque::new(),
            mask_coverage: 0.0,
            ticks: VecDeque::new(),
            shutdown: false,
        }
    }

    /// Applies a state-changing message. Errors leave the state untouched.
    pub fn apply(&mut self, msg: &ClientMessage) -> Result<(), String> {
        match msg {
            ClientMessage::SetCamera { pose, intrinsics } => {
                let camera = CameraView {
                    pose: *pose,
                    intrinsics: *intrinsics,
                    ..self.camera
                };
                camera.validate().map_err(|e| e.to_string())?;
                self.camera = camera;
            }
            ClientMessage::SetGaze { u, v, eye } => {
                if *eye > 1 {
                    return Err(format!("eye must be 0 or 1, got {eye}"));
                }
                if !(u.is_finite() && v.is_finite()) {
                    return Err("gaze must be finite".into());
                }
                self.gaze[*eye] = clamp_gaze([*u, *v], &self.camera);
                self.gaze_seq += 1;
            }
            ClientMessage::SetMode { mode } => self.mode = *mode,
            ClientMessage::SetParam { name, value } => {
                let mut fovea = self.fovea;
                let v = *value as f32;
                match name.as_str() {
                    "m" => fovea.m = v,
                    "gamma_edge" => fovea.gamma_edge = v,
                    "fovea_px" if v >= 2.0 => fovea.d_f = v * 0.5,
                    "fovea_px" => return Err(format!("fovea_px must be at least 2, got {value}")),
                    other => return Err(format!("unknown parameter {other:?}")),
                }
                fovea.validate().map_err(|e| e.to_string())?;
                self.fovea = fovea;
            }
            ClientMessage::SetStreaming { fps } => {
                if !(fps.is_finite() && *fps >= 0.0) {
                    return Err(format!("fps must be a non-negative number, got {fps}"));
                }
                self.stream_interval = (*fps > 0.0).then(|| Duration::from_secs_f64(1.0 / fps));
            }
            ClientMessage::RequestFrame => self.pending_requests += 1,
            ClientMessage::Stats => {}
        }
        Ok(())
    }

    /// Claims the next frame id and copies what the renderer reads up front.
    pub fn begin_tick(&mut self) -> Snapshot {
        let frame_id = self.frame_counter;
        self.frame_counter = self.frame_counter.wrapping_add(1);
        self.pending_requests = self.pending_requests.saturating_sub(1);
        Snapshot {
            frame_id,
            camera: self.camera,
            mode: self.mode,
            fovea: self.fovea,
            gaze_seq: self.gaze_seq,
        }
    }

    pub fn end_tick(&mut self, record: TickRecord, timings: StageTimings, mask_coverage: f32) {
        self.last_timings = timings;
        self.timings.push_back(timings);
        if self.timings.len() > TIMING_WINDOW {
            self.timings.pop_front();
        }
        self.mask_coverage = mask_coverage;
        self.ticks.push_back(record);
        if self.ticks.len() > TICK_LOG_LEN {
            self.ticks.pop_front();
        }
    }

    pub fn stats(&self) -> StatsPayload {
        let n = self.timings.len().max(1) as f64;
        let mut mean = StageTimings::default();
        for t in &self.timings {
            mean.periphery += t.periphery / n;
            mean.fovea_points += t.fovea_points / n;
            mean.resolver += t.resolver / n;
            mean.combine += t.combine / n;
            mean.tonemap += t.tonemap / n;
        }
        StatsPayload {
            frames: self.ticks.back().map_or(0, |t| t.frame_id + 1),
            mode: self.mode,
            gaze: self.gaze[0],
            fovea_px: self.fovea.d_f * 2.0,
            m: self.fovea.m,
            gamma_edge: self.fovea.gamma_edge,
            last_ms: TimingsMs::from(self.last_timings),
            mean_ms: TimingsMs::from(mean),
            mask_coverage: self.mask_coverage,
        }
    }
}
