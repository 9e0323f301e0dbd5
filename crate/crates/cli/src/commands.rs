use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use dynplane_core::checkpoint::{load_checkpoint, save_checkpoint};
use dynplane_core::config::Config;
use dynplane_core::dataio::{
    generate_synthetic, load_dataset, save_color, save_dataset, write_outputs, Dataset, FrameRender,
};
use dynplane_core::encoding::Encoder;
use dynplane_core::field::encoder_from;
use dynplane_core::gradcheck::{run_gradcheck, GradcheckSettings};
use dynplane_core::metrics::psnr;
use dynplane_core::trainer::{decompose_view, evaluate, render_view, LogRow, TrainState, Trainer};

use crate::UsageError;

/// Raised when a check on numerical accuracy fails.
#[derive(Debug)]
pub struct NumericalFailure(pub String);

impl std::fmt::Display for NumericalFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericalFailure {}

/// Tracks the files a command writes under `--out`.
pub struct Manifest {
    dir: PathBuf,
    files: Vec<String>,
    command: Vec<String>,
}

#[derive(Serialize)]
struct ManifestFile<'a> {
    command: &'a [String],
    files: &'a [String],
}

impl Manifest {
    /// Also writes the effective config as `config.json`.
    pub fn new(dir: &Path, cfg: &Config) -> Result<Self> {
        let mut m = Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            command: std::env::args().collect(),
        };
        let path = dir.join("config.json");
        fs::write(&path, cfg.to_flat_json()).with_context(|| format!("writing {}", path.display()))?;
        m.add(&path);
        Ok(m)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn add(&mut self, path: &Path) {
        let rel = path.strip_prefix(&self.dir).unwrap_or(path);
        self.files.push(rel.to_string_lossy().into_owned());
    }

    pub fn add_all(&mut self, paths: &[PathBuf]) {
        for p in paths {
            self.add(p);
        }
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.add(&path);
        Ok(path)
    }

    pub fn finish(self) -> Result<()> {
        let text = serde_json::to_string_pretty(&ManifestFile {
            command: &self.command,
            files: &self.files,
        })?;
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

pub fn read_checkpoint(path: &Path) -> Result<(TrainState, Config)> {
    let bytes = fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    load_checkpoint(&bytes).with_context(|| format!("checkpoint {}", path.display()))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("dataset {}", path.display()))
}

pub fn synth(cfg: &Config, manifest: &mut Manifest) -> Result<()> {
    let scene = generate_synthetic(&cfg.synth);
    let files = save_dataset(&scene.dataset, manifest.dir())?;
    manifest.add_all(&files);
    if cfg.synth.occluder {
        // unoccluded ground truth for scoring occluded regions
        let (w, h) = (scene.dataset.width(), scene.dataset.height());
        for (i, r) in scene.clean.iter().enumerate() {
            let path = manifest.dir().join(format!("clean/{i:03}.png"));
            fs::create_dir_all(path.parent().unwrap())?;
            save_color(&path, &r.rgb, w, h)?;
            manifest.add(&path);
        }
    }
    println!(
        "wrote {} frames of {}x{} to {}",
        scene.dataset.frames.len(),
        scene.dataset.width(),
        scene.dataset.height(),
        manifest.dir().display()
    );
    Ok(())
}

fn write_log_row(w: &mut csv::Writer<fs::File>, r: &LogRow) -> Result<()> {
    w.write_record([
        r.iteration.to_string(),
        r.rgb.to_string(),
        r.depth.to_string(),
        r.tv.to_string(),
        r.ts.to_string(),
        r.de.to_string(),
        r.total.to_string(),
        r.psnr.to_string(),
        r.psnr_masked.to_string(),
        r.samples_per_ray.to_string(),
        r.wall_ms.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}

pub const LOG_HEADER: [&str; 11] = [
    "iteration",
    "rgb",
    "depth",
    "tv",
    "ts",
    "de",
    "total",
    "psnr",
    "psnr_masked",
    "samples_per_ray",
    "wall_ms",
];

pub fn train(cfg: &Config, data: &Path, manifest: &mut Manifest) -> Result<()> {
    let ds = read_dataset(data)?;
    let mut trainer = Trainer::new(&ds, cfg.clone())?;
    let log_path = manifest.dir().join("log.csv");
    let mut log = csv::Writer::from_path(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    log.write_record(LOG_HEADER)?;
    manifest.add(&log_path);

    let total = cfg.train.iterations;
    let every = cfg.train.log_every.max(1);
    while trainer.state.iteration < total {
        trainer.step()?;
        let it = trainer.state.iteration;
        if it % every == 0 || it == total {
            let row = trainer.log_row()?;
            write_log_row(&mut log, &row)?;
            println!(
                "iter {:>6}  loss {:.5}  rgb {:.5}  depth {:.5}  psnr {:.2}  samples/ray {:.1}  {:.1}s",
                row.iteration,
                row.total,
                row.rgb,
                row.depth,
                row.psnr,
                row.samples_per_ray,
                row.wall_ms / 1e3
            );
        }
        let ce = cfg.train.checkpoint_every;
        if ce > 0 && it % ce == 0 && it < total {
            manifest.write(&format!("checkpoint_{it:06}.fpln"), save_checkpoint(&trainer.state, cfg))?;
        }
    }
    let path = manifest.write("checkpoint.fpln", save_checkpoint(&trainer.state, cfg))?;
    println!("checkpoint written to {}", path.display());
    Ok(())
}

/// A checkpoint paired with the dataset it is rendered against.
pub struct View<'a> {
    cfg: &'a Config,
    state: TrainState,
    encoder: Encoder,
    ds: Dataset,
    frames: Vec<usize>,
}

impl<'a> View<'a> {
    pub fn new(cfg: &'a Config, state: TrainState, data: &Path, frames: &[usize]) -> Result<Self> {
        let ds = read_dataset(data)?;
        let frames: Vec<usize> = if frames.is_empty() {
            (0..ds.frames.len()).collect()
        } else {
            frames.to_vec()
        };
        if let Some(bad) = frames.iter().find(|f| **f >= ds.frames.len()) {
            bail!(UsageError(format!(
                "frame {bad} out of range; the dataset has {} frames",
                ds.frames.len()
            )));
        }
        let encoder = encoder_from(&cfg.encoding).map_err(|e| UsageError(format!("encoding: {e}")))?;
        Ok(Self {
            cfg,
            state,
            encoder,
            ds,
            frames,
        })
    }

    /// Renders the selected frames; returns the renders, the total number of
    /// field samples and the wall time in milliseconds.
    fn render_all(&self, steps: usize, dense: bool) -> Result<(Vec<FrameRender>, usize, f64)> {
        let field = self.state.params.field(&self.encoder);
        let march = self.state.march(self.cfg, steps, !dense);
        let start = Instant::now();
        let mut renders = Vec::with_capacity(self.frames.len());
        let mut samples = 0;
        for &f in &self.frames {
            let (r, n) = render_view(&field, &self.ds.camera(f), self.ds.frames[f].time, &march)?;
            renders.push(r);
            samples += n;
        }
        Ok((renders, samples, start.elapsed().as_secs_f64() * 1e3))
    }

    pub fn render(&self, steps: Option<usize>, dense: bool, manifest: &mut Manifest) -> Result<()> {
        let steps = steps.unwrap_or(self.cfg.render.eval_steps);
        let (renders, _, _) = self.render_all(steps, dense)?;
        let gt: Vec<&[[f32; 3]]> = self.frames.iter().map(|f| self.ds.frames[*f].image.as_slice()).collect();
        let files = write_outputs(
            &renders,
            &gt,
            self.ds.width(),
            self.ds.height(),
            self.ds.depth_scale,
            manifest.dir(),
        )?;
        manifest.add_all(&files);
        println!("rendered {} frames", renders.len());
        Ok(())
    }

    pub fn eval(&self, steps: Option<usize>, dense: bool, manifest: &mut Manifest) -> Result<()> {
        let steps = steps.unwrap_or(self.cfg.render.eval_steps);
        let (renders, _, _) = self.render_all(steps, dense)?;
        let report = evaluate(&renders, &self.ds, &self.frames, None)?;
        manifest.write("metrics.json", serde_json::to_string_pretty(&report)?)?;
        println!(
            "psnr {:.3}  psnr_masked {:.3}  ssim {:.4}  depth_rmse {}",
            report.psnr,
            report.psnr_masked,
            report.ssim,
            report.depth_rmse.map_or("n/a".to_string(), |d| format!("{d:.5}"))
        );
        Ok(())
    }

    pub fn decompose(&self, manifest: &mut Manifest) -> Result<()> {
        let f = self.frames[0];
        let march = self.state.march(self.cfg, self.cfg.render.eval_steps, true);
        let views = decompose_view(
            &self.state.params,
            &self.encoder,
            &self.ds.camera(f),
            self.ds.frames[f].time,
            &march,
        )?;
        let (w, h) = (self.ds.width(), self.ds.height());
        for (name, r) in ["full", "static", "dynamic"].iter().zip(&views) {
            let path = manifest.dir().join(format!("{name}_{f:03}.png"));
            save_color(&path, &r.rgb, w, h)?;
            manifest.add(&path);
        }
        let agreement = psnr(&views[1].rgb, &views[0].rgb, None)?;
        println!("frame {f}: static-only vs full PSNR {agreement:.2} dB");
        Ok(())
    }

    /// Dense and grid-filtered marching at the evaluation step count, scored
    /// against the dataset images.
    pub fn bench_march(&self, manifest: &mut Manifest) -> Result<()> {
        let path = manifest.dir().join("bench_march.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["strategy", "samples_per_ray", "ms_per_frame", "psnr"])?;
        let rays = (self.ds.pixels() * self.frames.len()).max(1) as f64;
        for (name, dense) in [("dense", true), ("grid", false)] {
            let (renders, samples, ms) = self.render_all(self.cfg.render.eval_steps, dense)?;
            let report = evaluate(&renders, &self.ds, &self.frames, None)?;
            let spr = samples as f64 / rays;
            let per_frame = ms / self.frames.len().max(1) as f64;
            println!("{name:>6}: {spr:.2} samples/ray  {per_frame:.1} ms/frame  psnr {:.3}", report.psnr);
            w.write_record([
                name.to_string(),
                spr.to_string(),
                per_frame.to_string(),
                report.psnr.to_string(),
            ])?;
        }
        w.flush()?;
        manifest.add(&path);
        Ok(())
    }
}

pub fn gradcheck(seeds: u64, tolerance: f64, manifest: &mut Manifest) -> Result<()> {
    let mut reports = Vec::new();
    for seed in 0..seeds {
        let settings = GradcheckSettings::tiny(seed);
        let r = run_gradcheck(&settings)?;
        println!(
            "seed {seed}: {} parameters, max relative error {:.3e} ({}[{}])",
            r.parameters, r.max_rel_err, r.worst_group, r.worst_index
        );
        reports.push(r);
    }
    manifest.write("gradcheck.json", serde_json::to_string_pretty(&reports)?)?;
    let worst = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    if worst > tolerance {
        bail!(NumericalFailure(format!(
            "gradient check failed: max relative error {worst:.3e} exceeds {tolerance:.1e}"
        )));
    }
    Ok(())
}
