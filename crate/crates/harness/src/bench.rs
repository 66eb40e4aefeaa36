//! Timing sweeps over primitive count and foveal crop size.

use std::path::Path;

use serde::{Deserialize, Serialize};

use fovea_core::scene::synth::{generate_synthetic, SceneSpec};
use fovea_core::{
    CameraView32, FoveatedRenderer, GaussianSet32, NeuralPointCloud32, RenderOptions, StageTimings,
};

use crate::error::{HarnessError, Result};
use crate::sequence::write_metrics_csv;

#[derive(Clone, Debug)]
pub struct Sweep {
    pub gaussian_counts: Vec<usize>,
    /// Crop sides in pixels; the fovea radius is half of each.
    pub crop_sizes: Vec<usize>,
    pub warmup: usize,
    pub repeats: usize,
    pub options: RenderOptions<f32>,
}

impl Default for Sweep {
    fn default() -> Self {
        Self {
            gaussian_counts: vec![50_000, 100_000, 200_000, 400_000],
            crop_sizes: vec![128, 256, 512],
            warmup: 2,
            repeats: 5,
            options: RenderOptions::default(),
        }
    }
}

/// Median stage timings of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    /// `count` or `crop`.
    pub sweep: String,
    pub mode: String,
    pub primitives: usize,
    pub crop_size: usize,
    pub periphery: f64,
    pub fovea_points: f64,
    pub resolver: f64,
    pub combine: f64,
    pub tonemap: f64,
    /// Sum of the stage medians above.
    pub total: f64,
    pub image_hash: String,
    /// Every repeat produced the same image.
    pub reproducible: bool,
}

impl BenchRow {
    pub fn fovea_and_resolver(&self) -> f64 {
        self.fovea_points + self.resolver
    }
}

#[derive(Clone, Debug, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Rank correlation of Gaussian count against median periphery time.
    pub count_spearman: Option<f64>,
    /// Rank correlation of crop size against fovea + resolver time.
    pub crop_spearman: Option<f64>,
}

impl BenchReport {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_metrics_csv(path, &self.rows)
    }

    pub fn rows_of<'a>(&'a self, sweep: &'a str) -> impl Iterator<Item = &'a BenchRow> + 'a {
        self.rows.iter().filter(move |r| r.sweep == sweep)
    }
}

/// Median of `v`; the mean of the middle pair for even lengths.
pub fn median(v: &[f64]) -> f64 {
    assert!(!v.is_empty(), "median of nothing");
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// 1-based ranks with ties sharing their average rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation (Pearson correlation of the ranks). `None`
/// for fewer than two samples or constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Renders one configuration `warmup + repeats` times and keeps the stage
/// medians over the timed repeats.
pub fn time_config(
    gaussians: &GaussianSet32,
    points: &NeuralPointCloud32,
    camera: &CameraView32,
    gaze: [f32; 2],
    options: &RenderOptions<f32>,
    warmup: usize,
    repeats: usize,
) -> Result<(StageTimings, u64, bool)> {
    if repeats == 0 {
        return Err(HarnessError::Usage("need at least one timed repeat".into()));
    }
    let renderer = FoveatedRenderer::new(gaussians, points, options.clone());
    let mut samples = Vec::with_capacity(repeats);
    let mut hashes = Vec::with_capacity(warmup + repeats);
    for k in 0..warmup + repeats {
        let out = renderer.render(camera, gaze)?;
        hashes.push(out.image.fingerprint());
        if k >= warmup {
            samples.push(out.timings);
        }
    }
    let pick = |f: fn(&StageTimings) -> f64| median(&samples.iter().map(f).collect::<Vec<_>>());
    let t = StageTimings {
        periphery: pick(|t| t.periphery),
        fovea_points: pick(|t| t.fovea_points),
        resolver: pick(|t| t.resolver),
        combine: pick(|t| t.combine),
        tonemap: pick(|t| t.tonemap),
    };
    let stable = hashes.iter().all(|&h| h == hashes[0]);
    Ok((t, hashes[0], stable))
}

fn row(sweep: &str, opts: &RenderOptions<f32>, primitives: usize, crop: usize, t: StageTimings, hash: u64, stable: bool) -> BenchRow {
    BenchRow {
        sweep: sweep.into(),
        mode: opts.mode.to_string(),
        primitives,
        crop_size: crop,
        periphery: t.periphery,
        fovea_points: t.fovea_points,
        resolver: t.resolver,
        combine: t.combine,
        tonemap: t.tonemap,
        total: t.total(),
        image_hash: format!("{hash:016x}"),
        reproducible: stable,
    }
}

/// Runs the count sweep (fixed crop from `sweep.options`) and the crop
/// sweep (Gaussian count from `spec`) on the first view of `spec`, with
/// the gaze at the image center.
pub fn bench_sweep(spec: &SceneSpec, sweep: &Sweep) -> Result<BenchReport> {
    let mut report = BenchReport::default();
    let opts = &sweep.options;
    let center = |c: &CameraView32| [c.width as f32 * 0.5, c.height as f32 * 0.5];
    let default_crop = (opts.fovea.d_f * 2.0).round() as usize;

    for &count in &sweep.gaussian_counts {
        let s = generate_synthetic::<f32>(&SceneSpec {
            n_gaussians: count,
            n_views: 1,
            ..spec.clone()
        })?;
        let cam = s.views[0].camera;
        let (t, h, ok) = time_config(&s.gaussians, &s.points, &cam, center(&cam), opts, sweep.warmup, sweep.repeats)?;
        report.rows.push(row("count", opts, count, default_crop, t, h, ok));
    }
    if !sweep.crop_sizes.is_empty() {
        let s = generate_synthetic::<f32>(&SceneSpec {
            n_views: 1,
            ..spec.clone()
        })?;
        let cam = s.views[0].camera;
        for &crop in &sweep.crop_sizes {
            let mut o = opts.clone();
            o.fovea.d_f = crop as f32 * 0.5;
            let (t, h, ok) = time_config(&s.gaussians, &s.points, &cam, center(&cam), &o, sweep.warmup, sweep.repeats)?;
            report.rows.push(row("crop", &o, spec.n_gaussians, crop, t, h, ok));
        }
    }
    let rows = report.rows.clone();
    let xy = |sweep: &str, x: fn(&BenchRow) -> f64, y: fn(&BenchRow) -> f64| {
        let rows: Vec<&BenchRow> = rows.iter().filter(|r| r.sweep == sweep).collect();
        let xs: Vec<f64> = rows.iter().map(|r| x(r)).collect();
        let ys: Vec<f64> = rows.iter().map(|r| y(r)).collect();
        spearman(&xs, &ys)
    };
    report.count_spearman = xy("count", |r| r.primitives as f64, |r| r.periphery);
    report.crop_spearman = xy("crop", |r| r.crop_size as f64, BenchRow::fovea_and_resolver);
    Ok(report)
}
