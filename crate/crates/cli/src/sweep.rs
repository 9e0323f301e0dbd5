use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Result};

use dynplane_core::config::Config;
use dynplane_core::trainer::{evaluate, Trainer};

use crate::commands::{read_dataset, Manifest};
use crate::UsageError;

/// Cartesian grid over the four loss weights. Axes left unspecified hold the
/// config value.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub lambda_tv: Vec<f64>,
    pub lambda_ts: Vec<f64>,
    pub lambda_de: Vec<f64>,
    pub lambda_d: Vec<f64>,
}

fn parse_axis(name: &str, spec: Option<&str>, default: f64) -> Result<Vec<f64>> {
    let Some(spec) = spec else {
        return Ok(vec![default]);
    };
    let mut out = Vec::new();
    for part in spec.split(',') {
        match part.trim().parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 => out.push(v),
            _ => bail!(UsageError(format!("--{name}: `{part}` is not a non-negative number"))),
        }
    }
    Ok(out)
}

impl SweepGrid {
    pub fn parse(
        cfg: &Config,
        tv: Option<&str>,
        ts: Option<&str>,
        de: Option<&str>,
        d: Option<&str>,
    ) -> Result<Self> {
        Ok(Self {
            lambda_tv: parse_axis("lambda-tv", tv, cfg.loss.lambda_tv)?,
            lambda_ts: parse_axis("lambda-ts", ts, cfg.loss.lambda_ts)?,
            lambda_de: parse_axis("lambda-de", de, cfg.loss.lambda_de)?,
            lambda_d: parse_axis("lambda-d", d, cfg.loss.lambda_d)?,
        })
    }

    /// Settings as `[tv, ts, de, d]`, with the last axis varying fastest.
    pub fn points(&self) -> Vec<[f64; 4]> {
        let mut out = Vec::new();
        for &tv in &self.lambda_tv {
            for &ts in &self.lambda_ts {
                for &de in &self.lambda_de {
                    for &d in &self.lambda_d {
                        out.push([tv, ts, de, d]);
                    }
                }
            }
        }
        out
    }
}

/// Trains once per grid point and tabulates training-view and held-out PSNR.
pub fn run_sweep(cfg: &Config, grid: &SweepGrid, data: &Path, manifest: &mut Manifest) -> Result<()> {
    let ds = read_dataset(data)?;
    let path = manifest.dir().join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "lambda_tv",
        "lambda_ts",
        "lambda_de",
        "lambda_d",
        "psnr",
        "psnr_masked",
        "heldout_psnr",
        "wall_s",
    ])?;
    println!(
        "{:>10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>8}",
        "lambda_tv", "lambda_ts", "lambda_de", "lambda_d", "psnr", "masked", "heldout"
    );
    for [tv, ts, de, d] in grid.points() {
        let mut run_cfg = cfg.clone();
        run_cfg.loss.lambda_tv = tv;
        run_cfg.loss.lambda_ts = ts;
        run_cfg.loss.lambda_de = de;
        run_cfg.loss.lambda_d = d;
        let start = Instant::now();
        let mut trainer = Trainer::new(&ds, run_cfg)?;
        trainer.run(|_| {})?;
        let score = |frames: &[usize]| -> Result<Option<(f64, f64)>> {
            if frames.is_empty() {
                return Ok(None);
            }
            let renders = frames
                .iter()
                .map(|f| trainer.render_frame(*f, cfg.render.steps, true).map(|r| r.0))
                .collect::<Result<Vec<_>, _>>()?;
            let r = evaluate(&renders, &ds, frames, None)?;
            Ok(Some((r.psnr, r.psnr_masked)))
        };
        let (p, pm) = score(&trainer.train_frames)?.unwrap_or((f64::NAN, f64::NAN));
        let held = score(&trainer.eval_frames)?.map_or(f64::NAN, |r| r.0);
        let secs = start.elapsed().as_secs_f64();
        println!("{tv:>10.2e} {ts:>10.2e} {de:>10.2e} {d:>10.2e} {p:>8.3} {pm:>8.3} {held:>8.3}");
        w.write_record([tv, ts, de, d, p, pm, held, secs].map(|v| v.to_string()))?;
        w.flush()?;
    }
    manifest.add(&path);
    Ok(())
}
