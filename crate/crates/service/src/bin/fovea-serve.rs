//! `fovea-serve`: serves a scene to the viewer over a local WebSocket.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use fovea_core::scene::synth::{generate_synthetic, SceneKind, SceneSpec};
use fovea_core::{RenderMode, RenderOptions};
use fovea_harness::{load_scene, LoadedScene, ResolverSpec};
use fovea_service::{Scene, Server, ServerConfig};

#[derive(Parser)]
#[command(
    name = "fovea-serve",
    about = "Stream foveated frames to a WebSocket viewer"
)]
struct Args {
    /// Scene directory written by `fovea synth`; a synthetic scene is
    /// generated when absent.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value = "textured_quads")]
    kind: SceneKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Camera of the scene to start from.
    #[arg(long, default_value_t = 0)]
    view: usize,
    #[arg(long, default_value = "127.0.0.1:8765")]
    bind: String,
    /// `bypass`, `identity`, `random[:SEED]` or a weights file.
    #[arg(long, default_value = "bypass")]
    resolver: ResolverSpec,
    /// Foveal crop side in pixels.
    #[arg(long)]
    fovea_px: Option<f32>,
    #[arg(long, default_value = "foveated")]
    mode: RenderMode,
    /// Stream continuously at this rate instead of waiting for requests.
    #[arg(long)]
    fps: Option<f64>,
}

fn run(args: Args) -> Result<(), Box<dyn std::error::Error>> {
    let loaded = match &args.scene {
        Some(dir) => load_scene(dir).map_err(|e| format!("{}: {e}", dir.display()))?,
        None => {
            let spec = SceneSpec {
                resolution: [640, 480],
                ..SceneSpec::new(args.kind, args.seed, 50_000, 100_000)
            };
            LoadedScene::from_synthetic(generate_synthetic(&spec)?)
        }
    };
    let camera = *loaded.cameras.get(args.view).ok_or_else(|| {
        format!(
            "scene has {} cameras, no view {}",
            loaded.cameras.len(),
            args.view
        )
    })?;
    let mut options = RenderOptions {
        mode: args.mode,
        resolver: args.resolver.build(loaded.points.feature_dim)?,
        ..Default::default()
    };
    if let Some(px) = args.fovea_px {
        options.fovea.d_f = px * 0.5;
    }
    let config = ServerConfig {
        fps: args.fps,
        ..ServerConfig::new(camera, options)
    };
    let scene = Arc::new(Scene {
        gaussians: loaded.gaussians,
        points: loaded.points,
    });
    let server = Server::bind(args.bind.as_str(), scene, config)?;
    eprintln!("listening on ws://{}", server.local_addr()?);
    server.serve()?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
