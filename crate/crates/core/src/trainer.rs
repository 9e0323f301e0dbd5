//! Optimization loop: sample pixels, march rays, render, score, backpropagate,
//! step Adam, refresh the indicator grid.

use std::collections::VecDeque;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::dataio::{DataError, Dataset, FrameRender};
use crate::encoding::Encoder;
use crate::field::{encoder_from, Field, FieldParams, FieldScratch};
use crate::field_mlp::MlpError;
use crate::geometry::Aabb;
use crate::losses::{total_loss, DepthMode, LossBreakdown, LossConfig, RayTerms};
use crate::metrics::{depth_rmse, psnr, ssim, FrameMetrics, MetricError, MetricReport};
use crate::occupancy::IndicatorGrid;
use crate::plane_field::{FieldKind, PlaneError};
use crate::real::Real;
use crate::renderer::{backward_ray, ray_for_pixel, render_ray, Camera, MarchSettings, Ray, RayRender};
use crate::sampler::{build_weight_maps, MaskStack, SamplerError, WeightMaps};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Plane(#[from] PlaneError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("non-finite {what} in parameter group {group}")]
    NonFinite { what: &'static str, group: String },
    #[error("{0}")]
    Incompatible(String),
}

impl TrainError {
    /// Numerical failures as opposed to bad inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(self, TrainError::NonFinite { .. } | TrainError::Mlp(MlpError::NonFinite { .. }))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamHyper {
    pub lr_planes: f64,
    pub lr_mlp: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// First and second moments shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: FieldParams<T>,
    pub v: FieldParams<T>,
    pub step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(params: &FieldParams<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }
}

/// Bias-corrected Adam update. Plane groups use `lr_planes`, decoder
/// groups `lr_mlp`.
pub fn adam_step<T: Real>(
    state: &mut AdamState<T>,
    params: &mut FieldParams<T>,
    grads: &FieldParams<T>,
    hp: &AdamHyper,
) -> Result<(), TrainError> {
    let g_groups = grads.groups();
    for (name, g) in &g_groups {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(TrainError::NonFinite {
                what: "gradient",
                group: name.clone(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    let mut m_groups = state.m.groups_mut();
    let mut v_groups = state.v.groups_mut();
    for (((name, p), (_, g)), ((_, m), (_, v))) in params
        .groups_mut()
        .into_iter()
        .zip(&g_groups)
        .zip(m_groups.iter_mut().zip(v_groups.iter_mut()))
    {
        let lr = if name.starts_with("planes") {
            hp.lr_planes
        } else {
            hp.lr_mlp
        };
        for i in 0..p.len() {
            let gi = g[i].as_f64();
            let mi = hp.beta1 * m[i].as_f64() + (1.0 - hp.beta1) * gi;
            let vi = hp.beta2 * v[i].as_f64() + (1.0 - hp.beta2) * gi * gi;
            m[i] = T::lit(mi);
            v[i] = T::lit(vi);
            let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + hp.eps);
            p[i] = T::lit(p[i].as_f64() - update);
        }
        if let Some(i) = p.iter().position(|x| !x.is_finite()) {
            return Err(TrainError::NonFinite {
                what: "parameter",
                group: format!("{name}[{i}]"),
            });
        }
    }
    Ok(())
}

/// Cosine decay from 1 to `final_fraction` over `total` iterations.
pub fn lr_factor(iteration: usize, total: usize, final_fraction: f64) -> f64 {
    let s = (iteration as f64 / total.max(1) as f64).min(1.0);
    final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + (std::f64::consts::PI * s).cos())
}

/// Supervision for one ray; `depth <= 0` means missing.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RayTarget {
    pub rgb: [f32; 3],
    pub depth: f32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct BatchStats {
    pub loss: LossBreakdown,
    /// Field samples evaluated in the forward pass.
    pub samples: usize,
}

fn chunk_len(n: usize) -> usize {
    let workers = rayon::current_num_threads().max(1);
    n.div_ceil(workers).max(1)
}

fn render_batch<T: Real>(
    field: &Field<'_, T>,
    rays: &[Ray],
    march: &MarchSettings<'_>,
) -> Result<Vec<RayRender<T>>, MlpError> {
    let chunks: Vec<Vec<RayRender<T>>> = rays
        .par_chunks(chunk_len(rays.len()))
        .map(|chunk| {
            let mut scratch = FieldScratch::default();
            chunk
                .iter()
                .map(|r| render_ray(field, r, march, &mut scratch))
                .collect()
        })
        .collect::<Result<_, _>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

fn ray_terms<T: Real>(
    renders: &[RayRender<T>],
    targets: &[RayTarget],
    mode: DepthMode,
) -> (Vec<[T; 3]>, Vec<[T; 3]>, Vec<T>, Vec<T>) {
    let pred_rgb = renders.iter().map(|r| r.output.rgb).collect();
    let gt_rgb = targets.iter().map(|t| t.rgb.map(|v| T::lit(f64::from(v)))).collect();
    let pred_depth = renders.iter().map(|r| r.output.depth).collect();
    let target_depth = match mode {
        DepthMode::None => Vec::new(),
        _ => targets.iter().map(|t| T::lit(f64::from(t.depth))).collect(),
    };
    (pred_rgb, gt_rgb, pred_depth, target_depth)
}

/// Loss of one batch without gradients.
pub fn batch_loss<T: Real>(
    params: &FieldParams<T>,
    encoder: &Encoder,
    rays: &[Ray],
    targets: &[RayTarget],
    march: &MarchSettings<'_>,
    loss: &LossConfig,
) -> Result<LossBreakdown, MlpError> {
    let field = params.field(encoder);
    let renders = render_batch(&field, rays, march)?;
    let (pr, gr, pd, td) = ray_terms(&renders, targets, loss.depth_mode);
    let terms = RayTerms {
        pred_rgb: &pr,
        gt_rgb: &gr,
        pred_depth: &pd,
        target_depth: &td,
    };
    Ok(total_loss(&terms, &params.planes, loss, None).0)
}

/// Loss of one batch and its full gradient, written into `grads`.
///
/// Rays are split into one contiguous chunk per worker; each chunk
/// backpropagates into its own buffer from `workspace` and the buffers are
/// summed in chunk order, so results do not depend on scheduling.
pub fn batch_loss_and_grad<T: Real>(
    params: &FieldParams<T>,
    encoder: &Encoder,
    rays: &[Ray],
    targets: &[RayTarget],
    march: &MarchSettings<'_>,
    loss: &LossConfig,
    grads: &mut FieldParams<T>,
    workspace: &mut Vec<FieldParams<T>>,
) -> Result<BatchStats, MlpError> {
    assert_eq!(rays.len(), targets.len());
    let field = params.field(encoder);
    let renders = render_batch(&field, rays, march)?;
    let samples = renders.iter().map(|r| r.samples.len()).sum();
    let (pr, gr, pd, td) = ray_terms(&renders, targets, loss.depth_mode);
    let terms = RayTerms {
        pred_rgb: &pr,
        gt_rgb: &gr,
        pred_depth: &pd,
        target_depth: &td,
    };
    grads.fill(T::zero());
    let (breakdown, ray_grads) = total_loss(&terms, &params.planes, loss, Some(&mut grads.planes));

    let len = chunk_len(rays.len());
    let n_chunks = rays.len().div_ceil(len);
    while workspace.len() < n_chunks {
        workspace.push(params.zeros_like());
    }
    workspace[..n_chunks]
        .par_iter_mut()
        .enumerate()
        .try_for_each(|(c, buf)| -> Result<(), MlpError> {
            buf.fill(T::zero());
            let mut scratch = FieldScratch::default();
            let lo = c * len;
            let hi = (lo + len).min(rays.len());
            for i in lo..hi {
                backward_ray(
                    &field,
                    &rays[i],
                    &renders[i],
                    ray_grads.d_rgb[i],
                    ray_grads.d_depth[i],
                    buf,
                    &mut scratch,
                )?;
            }
            Ok(())
        })?;
    for buf in &workspace[..n_chunks] {
        grads.add_assign(buf);
    }
    Ok(BatchStats {
        loss: breakdown,
        samples,
    })
}

/// Renders every pixel of a view; returns the image and the number of
/// field samples evaluated.
pub fn render_view(
    field: &Field<'_, f32>,
    cam: &Camera,
    time: f64,
    march: &MarchSettings<'_>,
) -> Result<(FrameRender, usize), MlpError> {
    let (w, h) = (cam.intrinsics.width, cam.intrinsics.height);
    let rows: Vec<Vec<(RayRender<f32>, usize)>> = (0..h)
        .into_par_iter()
        .map(|row| {
            let mut scratch = FieldScratch::default();
            (0..w)
                .map(|col| {
                    let ray = ray_for_pixel(cam, row, col, time);
                    let mut r = render_ray(field, &ray, march, &mut scratch)?;
                    let n = r.samples.len();
                    // only the output is needed here
                    r.samples = Vec::new();
                    r.fields = Vec::new();
                    r.cache = Default::default();
                    Ok((r, n))
                })
                .collect()
        })
        .collect::<Result<_, MlpError>>()?;
    let mut out = FrameRender::default();
    let mut samples = 0;
    for (r, n) in rows.into_iter().flatten() {
        out.rgb.push(r.output.rgb);
        out.depth.push(r.output.depth);
        out.opacity.push(r.output.opacity);
        samples += n;
    }
    Ok((out, samples))
}

/// Full, static-only and dynamic-only renders of one view. The dynamic-only
/// image is min-max normalized to [0, 1] for display.
pub fn decompose_view(
    params: &FieldParams<f32>,
    encoder: &Encoder,
    cam: &Camera,
    time: f64,
    march: &MarchSettings<'_>,
) -> Result<[FrameRender; 3], MlpError> {
    let field = params.field(encoder);
    let (full, _) = render_view(&field, cam, time, march)?;
    let (stat, _) = render_view(&field.with_forced(FieldKind::Dynamic), cam, time, march)?;
    let (mut dynamic, _) = render_view(&field.with_forced(FieldKind::Static), cam, time, march)?;
    let (lo, hi) = dynamic
        .rgb
        .iter()
        .flatten()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let span = hi - lo;
    for p in dynamic.rgb.iter_mut() {
        *p = p.map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 });
    }
    Ok([full, stat, dynamic])
}

/// Scores renders of `frames` against `reference` images (the dataset's own
/// images when `None`). Depth is scored where the dataset depth is positive
/// and the mask is set.
pub fn evaluate(
    renders: &[FrameRender],
    ds: &Dataset,
    frames: &[usize],
    reference: Option<&[FrameRender]>,
) -> Result<MetricReport, MetricError> {
    let (w, h) = (ds.width(), ds.height());
    let mut rows = Vec::new();
    for (r, &f) in renders.iter().zip(frames) {
        let frame = &ds.frames[f];
        let gt: &[[f32; 3]] = match reference {
            Some(refs) => &refs[f].rgb,
            None => &frame.image,
        };
        let depth_rmse = match (reference, &frame.depth) {
            (Some(refs), _) => {
                let valid: Vec<bool> = refs[f].depth.iter().zip(&frame.mask).map(|(d, m)| *d > 0.0 && *m).collect();
                depth_rmse(&r.depth, &refs[f].depth, &valid).ok()
            }
            (None, Some(d)) => {
                let valid: Vec<bool> = d.iter().zip(&frame.mask).map(|(d, m)| *d > 0.0 && *m).collect();
                depth_rmse(&r.depth, d, &valid).ok()
            }
            (None, None) => None,
        };
        let ssim_v = if w >= 11 && h >= 11 {
            ssim(&r.rgb, gt, w, h)?
        } else {
            f64::NAN
        };
        rows.push(FrameMetrics {
            frame: f,
            psnr: psnr(&r.rgb, gt, None)?,
            psnr_masked: psnr(&r.rgb, gt, Some(&frame.mask))?,
            ssim: ssim_v,
            depth_rmse,
        });
    }
    Ok(MetricReport::from_frames(rows))
}

/// Everything that persists in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: FieldParams<f32>,
    pub adam: AdamState<f32>,
    pub grid: Option<IndicatorGrid>,
    pub iteration: usize,
    pub time_res: usize,
    pub aabb: Aabb,
}

impl TrainState {
    pub fn init(cfg: &Config, time_res: usize, aabb: Aabb, rng: &mut ChaCha8Rng) -> Result<Self, TrainError> {
        let encoder = encoder_from(&cfg.encoding).map_err(ConfigError::Invalid)?;
        let params = FieldParams::init(&cfg.planes, time_res, &encoder, &cfg.mlp, rng)?;
        Ok(Self {
            adam: AdamState::new(&params),
            params,
            grid: None,
            iteration: 0,
            time_res,
            aabb,
        })
    }

    pub fn march<'a>(&'a self, cfg: &Config, steps: usize, use_grid: bool) -> MarchSettings<'a> {
        MarchSettings {
            aabb: self.aabb,
            steps,
            min_transmittance: cfg.render.min_transmittance,
            grid: if use_grid { self.grid.as_ref() } else { None },
            depth: cfg.render.depth,
        }
    }
}

/// Occupancy threshold for `steps` uniform samples over `[near, far]`.
pub fn occupancy_threshold(cfg: &Config, near: f64, far: f64) -> f32 {
    (cfg.grid.threshold_scale * cfg.render.steps as f64 / (far - near)) as f32
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LogRow {
    pub iteration: usize,
    pub rgb: f64,
    pub depth: f64,
    pub tv: f64,
    pub ts: f64,
    pub de: f64,
    pub total: f64,
    /// Held-out PSNR; NaN when not measured at this row.
    pub psnr: f64,
    pub psnr_masked: f64,
    pub samples_per_ray: f64,
    pub wall_ms: f64,
}

pub struct Trainer<'a> {
    ds: &'a Dataset,
    cfg: Config,
    encoder: Encoder,
    pub state: TrainState,
    weights: WeightMaps,
    pub train_frames: Vec<usize>,
    pub eval_frames: Vec<usize>,
    rng: ChaCha8Rng,
    grads: FieldParams<f32>,
    workspace: Vec<FieldParams<f32>>,
    window: VecDeque<(LossBreakdown, f64)>,
    log: Vec<LogRow>,
    started: Instant,
    eval_cursor: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(ds: &'a Dataset, cfg: Config) -> Result<Self, TrainError> {
        cfg.validate()?;
        ds.validate()?;
        if cfg.loss.depth_mode != DepthMode::None && !ds.has_depth() {
            return Err(TrainError::Incompatible(format!(
                "loss.depth_mode = {:?} needs a depth map for every frame",
                cfg.loss.depth_mode
            )));
        }
        let t = ds.frames.len();
        let (train_frames, eval_frames): (Vec<usize>, Vec<usize>) = if cfg.train.alternate_split && t > 1 {
            (0..t).partition(|i| i % 2 == 0)
        } else {
            ((0..t).collect(), Vec::new())
        };
        let stack = MaskStack::new(
            ds.width(),
            ds.height(),
            train_frames.iter().map(|i| ds.frames[*i].image.as_slice()).collect(),
            train_frames.iter().map(|i| ds.frames[*i].mask.as_slice()).collect(),
        )?;
        let weights = build_weight_maps(&stack, &cfg.sampler)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let time_res = if cfg.planes.time_res == 0 {
            t.max(2)
        } else {
            cfg.planes.time_res
        };
        let mut state = TrainState::init(&cfg, time_res, ds.aabb, &mut rng)?;
        if cfg.grid.enabled {
            let tau = occupancy_threshold(&cfg, ds.near, ds.far);
            state.grid = Some(IndicatorGrid::new(cfg.grid.dims, tau, cfg.grid.ema as f32, tau));
        }
        let encoder = encoder_from(&cfg.encoding).map_err(ConfigError::Invalid)?;
        Ok(Self {
            ds,
            encoder,
            grads: state.params.zeros_like(),
            state,
            weights,
            train_frames,
            eval_frames,
            rng,
            workspace: Vec::new(),
            window: VecDeque::new(),
            log: Vec::new(),
            started: Instant::now(),
            eval_cursor: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    pub fn weight_maps(&self) -> &WeightMaps {
        &self.weights
    }

    /// One optimization step.
    pub fn step(&mut self) -> Result<BatchStats, TrainError> {
        let cfg = &self.cfg;
        let draws = self.weights.draw_batch(&mut self.rng, cfg.train.batch_rays);
        let mut rays = Vec::with_capacity(draws.len());
        let mut targets = Vec::with_capacity(draws.len());
        let w = self.ds.width();
        for (k, row, col) in draws {
            let f = self.train_frames[k];
            let frame = &self.ds.frames[f];
            let px = row * w + col;
            rays.push(self.ds.ray(f, row, col));
            targets.push(RayTarget {
                rgb: frame.image[px],
                depth: frame.depth.as_ref().map_or(0.0, |d| d[px]),
            });
        }
        let march = self.state.march(cfg, cfg.render.steps, true);
        let stats = batch_loss_and_grad(
            &self.state.params,
            &self.encoder,
            &rays,
            &targets,
            &march,
            &cfg.loss,
            &mut self.grads,
            &mut self.workspace,
        )?;
        if !stats.loss.total.is_finite() {
            return Err(TrainError::NonFinite {
                what: "loss",
                group: "total".into(),
            });
        }
        let f = lr_factor(self.state.iteration, cfg.train.iterations, cfg.train.final_lr_fraction);
        let hp = AdamHyper {
            lr_planes: cfg.train.lr_planes * f,
            lr_mlp: cfg.train.lr_mlp * f,
            beta1: cfg.train.beta1,
            beta2: cfg.train.beta2,
            eps: cfg.train.eps,
        };
        adam_step(&mut self.state.adam, &mut self.state.params, &self.grads, &hp)?;
        self.state.iteration += 1;
        let it = self.state.iteration;
        let g = &cfg.grid;
        if let Some(grid) = self.state.grid.as_mut() {
            if it >= g.warmup && g.update_every > 0 && it % g.update_every == 0 {
                let field = self.state.params.field(&self.encoder);
                grid.update_grid(&field, &mut self.rng, g.probes_per_update())?;
            }
        }
        let spr = stats.samples as f64 / rays.len().max(1) as f64;
        self.window.push_back((stats.loss, spr));
        if self.window.len() > cfg.train.log_every.max(1) {
            self.window.pop_front();
        }
        Ok(stats)
    }

    /// Closes the current logging window: averages the per-step losses since
    /// the previous row and, on `eval_every` boundaries, scores one held-out frame.
    pub fn log_row(&mut self) -> Result<LogRow, TrainError> {
        let n = self.window.len().max(1) as f64;
        let mut row = LogRow {
            iteration: self.state.iteration,
            psnr: f64::NAN,
            psnr_masked: f64::NAN,
            ..Default::default()
        };
        for (b, spr) in &self.window {
            row.rgb += b.rgb / n;
            row.depth += b.depth / n;
            row.tv += b.tv / n;
            row.ts += b.ts / n;
            row.de += b.de / n;
            row.total += b.total / n;
            row.samples_per_ray += spr / n;
        }
        let ev = self.cfg.train.eval_every;
        if ev > 0 && self.state.iteration % ev == 0 {
            let pool = if self.eval_frames.is_empty() {
                &self.train_frames
            } else {
                &self.eval_frames
            };
            let f = pool[self.eval_cursor % pool.len()];
            self.eval_cursor += 1;
            let r = self.render_frame(f, self.cfg.render.steps, true)?.0;
            let frame = &self.ds.frames[f];
            row.psnr = psnr(&r.rgb, &frame.image, None)?;
            row.psnr_masked = psnr(&r.rgb, &frame.image, Some(&frame.mask))?;
        }
        row.wall_ms = self.started.elapsed().as_secs_f64() * 1e3;
        self.log.push(row.clone());
        Ok(row)
    }

    /// Runs the remaining iterations, calling `on_log` for each log row.
    pub fn run(&mut self, mut on_log: impl FnMut(&LogRow)) -> Result<(), TrainError> {
        let total = self.cfg.train.iterations;
        let every = self.cfg.train.log_every.max(1);
        while self.state.iteration < total {
            self.step()?;
            let it = self.state.iteration;
            if it % every == 0 || it == total {
                let row = self.log_row()?;
                on_log(&row);
            }
        }
        Ok(())
    }

    pub fn render_frame(&self, frame: usize, steps: usize, use_grid: bool) -> Result<(FrameRender, usize), MlpError> {
        let field = self.state.params.field(&self.encoder);
        let march = self.state.march(&self.cfg, steps, use_grid);
        render_view(&field, &self.ds.camera(frame), self.ds.frames[frame].time, &march)
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f32) -> FieldParams<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = Config {
            planes: crate::plane_field::PlaneConfig {
                resolutions: vec![2],
                time_res: 2,
                feature_dim: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let enc = encoder_from(&cfg.encoding).unwrap();
        let mut p = FieldParams::init(&cfg.planes, 2, &enc, &cfg.mlp, &mut rng).unwrap();
        p.fill(v);
        p
    }

    fn hyper() -> AdamHyper {
        AdamHyper {
            lr_planes: 0.01,
            lr_mlp: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }

    #[test]
    fn zero_gradient_leaves_fresh_parameters() {
        let mut p = single(0.5);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let g = p.zeros_like();
        adam_step(&mut s, &mut p, &g, &hyper()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = single(0.5);
        let mut g = p.zeros_like();
        g.fill(1.0);
        let mut s = AdamState::new(&p);
        adam_step(&mut s, &mut p, &g, &hyper()).unwrap();
        for (_, v) in p.groups() {
            assert!(v.iter().all(|x| (x - 0.49).abs() < 1e-6));
        }
    }

    #[test]
    fn constant_gradient_update_tends_to_learning_rate() {
        let mut p = single(0.0);
        let mut g = p.zeros_like();
        g.fill(-3.0);
        let mut s = AdamState::new(&p);
        let mut last = 0.0;
        for _ in 0..500 {
            let before = p.groups()[0].1[0];
            adam_step(&mut s, &mut p, &g, &hyper()).unwrap();
            last = p.groups()[0].1[0] - before;
        }
        assert!((last - 0.01).abs() < 1e-5);
    }

    #[test]
    fn non_finite_gradient_names_its_group() {
        let mut p = single(0.5);
        let mut g = p.zeros_like();
        g.groups_mut()[2].1[0] = f32::NAN;
        let mut s = AdamState::new(&p);
        let err = adam_step(&mut s, &mut p, &g, &hyper()).unwrap_err();
        match err {
            TrainError::NonFinite { group, .. } => assert_eq!(group, "planes.l0.xz"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn cosine_schedule_endpoints() {
        assert_eq!(lr_factor(0, 100, 0.1), 1.0);
        assert!((lr_factor(100, 100, 0.1) - 0.1).abs() < 1e-12);
        assert!((lr_factor(50, 100, 0.1) - 0.55).abs() < 1e-12);
    }
}
