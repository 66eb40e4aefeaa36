use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fovea_core::resolver::{ResolverArch, ResolverWeights, DEFAULT_FILTERS};
use fovea_core::scene::ply;
use fovea_core::scene::synth::{generate_synthetic, SceneKind, SceneSpec};
use fovea_core::scene::{prune_by_opacity, OPACITY_PRUNE_THRESHOLD};
use fovea_core::{RenderOptions, SortMode};
use fovea_harness::sequence::write_metrics_csv;
use fovea_harness::{
    bench_sweep, compare_modes, load_scene, render_sequence, write_scene, GazeTrace, HarnessError,
    ResolverSpec, SequenceOptions, Sweep,
};

#[derive(Parser)]
#[command(name = "fovea", version, about = "Foveated Gaussian / neural-point renderer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene directory with ground truth.
    Synth(SynthArgs),
    /// Render every camera of a scene directory.
    Render(RenderArgs),
    /// Time periphery and fovea stages over Gaussian counts and crop sizes.
    Bench(BenchArgs),
    /// Score Gaussian-only and foveated modes on the foveal crop.
    Compare(CompareArgs),
    /// Drop Gaussians below an opacity threshold.
    Prune(PruneArgs),
    /// Write a resolver weights file.
    Weights(WeightsArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// TOML scene description; flags below are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value = "textured_quads")]
    kind: SceneKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50_000)]
    gaussians: usize,
    #[arg(long, default_value_t = 100_000)]
    points: usize,
    #[arg(long, default_value_t = 3)]
    views: usize,
    #[arg(long, default_value_t = 512)]
    width: usize,
    #[arg(long, default_value_t = 512)]
    height: usize,
    #[arg(long, default_value_t = 0)]
    sh_degree: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct RenderFlags {
    #[arg(long, default_value = "hierarchical")]
    sort_mode: SortMode,
    /// bypass, identity, random[:SEED] or a weights file.
    #[arg(long, default_value = "bypass")]
    resolver: String,
    /// Foveal crop side in pixels (the fovea radius is half of it).
    #[arg(long)]
    fovea_px: Option<f32>,
    #[arg(long)]
    m: Option<f32>,
    #[arg(long)]
    gamma_edge: Option<f32>,
    #[arg(long)]
    no_depth_cull: bool,
    #[arg(long)]
    no_edge_term: bool,
    /// Use a single global depth sort in the periphery.
    #[arg(long)]
    no_popping_fix: bool,
    /// Seed for `--resolver random` without an explicit seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl RenderFlags {
    fn resolver_spec(&self) -> Result<ResolverSpec, HarnessError> {
        let spec: ResolverSpec = self.resolver.parse()?;
        Ok(match spec {
            ResolverSpec::Random(0) if self.resolver == "random" => ResolverSpec::Random(self.seed),
            other => other,
        })
    }

    fn options(&self, feature_dim: usize) -> Result<RenderOptions<f32>, HarnessError> {
        let mut o = RenderOptions::<f32> {
            sort_mode: self.sort_mode,
            resolver: self.resolver_spec()?.build(feature_dim)?,
            ..Default::default()
        };
        if let Some(px) = self.fovea_px {
            o.fovea.d_f = px * 0.5;
        }
        if let Some(m) = self.m {
            o.fovea.m = m;
        }
        if let Some(g) = self.gamma_edge {
            o.fovea.gamma_edge = g;
        }
        o.ablations.no_depth_cull = self.no_depth_cull;
        o.ablations.no_edge_term = self.no_edge_term;
        o.ablations.no_popping_fix = self.no_popping_fix;
        o.fovea.validate()?;
        Ok(o)
    }
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Gaze trace CSV (`t_ms,eye,u,v,valid`); defaults to the image center.
    #[arg(long)]
    gaze: Option<PathBuf>,
    /// Also dump linear float images.
    #[arg(long)]
    float: bool,
    #[command(flatten)]
    flags: RenderFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML scene description used for every configuration.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [50_000usize, 100_000, 200_000, 400_000])]
    counts: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [128usize, 256, 512])]
    crops: Vec<usize>,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[command(flatten)]
    flags: RenderFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    gaze: Option<PathBuf>,
    #[command(flatten)]
    flags: RenderFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PruneArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = OPACITY_PRUNE_THRESHOLD as f32)]
    threshold: f32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct WeightsArgs {
    /// identity or random
    #[arg(long, default_value = "identity")]
    kind: String,
    #[arg(long, default_value_t = fovea_core::scene::DEFAULT_FEATURE_DIM)]
    feature_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn load_trace(path: &Option<PathBuf>) -> Result<Option<GazeTrace>, HarnessError> {
    path.as_ref().map(GazeTrace::load).transpose()
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Synth(a) => {
            let spec = match &a.spec {
                Some(p) => SceneSpec::from_file(p)?,
                None => SceneSpec {
                    n_views: a.views,
                    resolution: [a.width, a.height],
                    sh_degree: a.sh_degree,
                    ..SceneSpec::new(a.kind, a.seed, a.gaussians, a.points)
                },
            };
            let scene = generate_synthetic::<f32>(&spec)?;
            write_scene(&a.out, &scene)?;
            println!(
                "wrote {} Gaussians, {} points, {} views to {}",
                scene.gaussians.len(),
                scene.points.len(),
                scene.views.len(),
                a.out.display()
            );
        }
        Command::Render(a) => {
            let scene = load_scene(&a.scene)?;
            let trace = load_trace(&a.gaze)?;
            if let (Some(t), Some(c)) = (&trace, scene.cameras.first()) {
                t.validate(c.width, c.height)?;
            }
            let opts = SequenceOptions {
                render: a.flags.options(scene.points.feature_dim)?,
                write_float: a.float,
                ..Default::default()
            };
            let report = render_sequence(&scene, trace.as_ref(), &opts, &a.out)?;
            for (path, t) in report.frames.iter().zip(&report.timings) {
                println!("{} {:.1} ms", path.display(), t.total());
            }
        }
        Command::Bench(a) => {
            let spec = match &a.spec {
                Some(p) => SceneSpec::from_file(p)?,
                None => SceneSpec::new(SceneKind::TexturedQuads, a.flags.seed, 100_000, 200_000),
            };
            let sweep = Sweep {
                gaussian_counts: a.counts,
                crop_sizes: a.crops,
                warmup: a.warmup,
                repeats: a.repeats,
                options: a.flags.options(spec.feature_dim)?,
            };
            let report = bench_sweep(&spec, &sweep)?;
            report.write_csv(&a.out)?;
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |r| format!("{r:.3}"));
            println!(
                "count vs periphery spearman {}, crop vs fovea+resolver spearman {}",
                fmt(report.count_spearman),
                fmt(report.crop_spearman)
            );
        }
        Command::Compare(a) => {
            let scene = load_scene(&a.scene)?;
            let trace = load_trace(&a.gaze)?;
            let spec = a.flags.resolver_spec()?;
            let mut flags = a.flags.clone();
            flags.resolver = "bypass".into();
            let base = flags.options(scene.points.feature_dim)?;
            let rows = compare_modes(&scene, trace.as_ref(), &base, &spec)?;
            write_metrics_csv(&a.out, &rows)?;
            for r in &rows {
                println!("{} {} psnr {:.2} ssim {:.4}", r.view_id, r.mode, r.psnr, r.ssim);
            }
        }
        Command::Prune(a) => {
            let set = ply::load_gaussians::<f32>(&a.input)?;
            let pruned = prune_by_opacity(&set, a.threshold);
            ply::save_gaussians(&a.out, &pruned)?;
            println!("kept {} of {} Gaussians", pruned.len(), set.len());
        }
        Command::Weights(a) => {
            let w = match a.kind.as_str() {
                "identity" => ResolverWeights::identity(a.feature_dim, &DEFAULT_FILTERS)?,
                "random" => ResolverWeights::random(
                    ResolverArch::new(a.feature_dim, &DEFAULT_FILTERS),
                    a.seed,
                )?,
                other => return Err(HarnessError::Usage(format!("unknown weights kind {other:?}"))),
            };
            w.save(&a.out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
