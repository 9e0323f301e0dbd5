//! Per-frame pixel weight maps and inverse-CDF ray batch sampling.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SamplerError {
    #[error("every pixel is masked out in every frame; nothing to sample")]
    NoVisiblePixels,
    #[error("frame {frame} has {got} pixels, expected {expected}")]
    ShapeMismatch {
        frame: usize,
        got: usize,
        expected: usize,
    },
    #[error("invalid sampler config: {0}")]
    BadConfig(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    /// Temporal-difference weights floored at `alpha`, scaled by occlusion frequency.
    #[default]
    Spatiotemporal,
    /// Uniform over tissue pixels.
    Naive,
    /// Occlusion frequency only.
    Endonerf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Lower bound on the temporal-difference term.
    pub alpha: f64,
    /// Scale of the occlusion term.
    pub beta: f64,
    /// Temporal window radius in frames.
    pub window: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::Spatiotemporal,
            alpha: 0.1,
            beta: 1.0,
            window: 25,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(self.alpha > 0.0) || !(self.beta > 0.0) || self.window < 1 {
            return Err(SamplerError::BadConfig(format!(
                "need alpha > 0, beta > 0, window >= 1 (got {}, {}, {})",
                self.alpha, self.beta, self.window
            )));
        }
        Ok(())
    }
}

/// Borrowed per-frame images (linear RGB in [0,1]) and tissue masks.
#[derive(Clone, Debug)]
pub struct MaskStack<'a> {
    pub width: usize,
    pub height: usize,
    pub images: Vec<&'a [[f32; 3]]>,
    pub masks: Vec<&'a [bool]>,
}

impl<'a> MaskStack<'a> {
    pub fn new(
        width: usize,
        height: usize,
        images: Vec<&'a [[f32; 3]]>,
        masks: Vec<&'a [bool]>,
    ) -> Result<Self, SamplerError> {
        let expected = width * height;
        for (frame, m) in masks.iter().enumerate() {
            if m.len() != expected {
                return Err(SamplerError::ShapeMismatch {
                    frame,
                    got: m.len(),
                    expected,
                });
            }
        }
        for (frame, im) in images.iter().enumerate() {
            if im.len() != expected {
                return Err(SamplerError::ShapeMismatch {
                    frame,
                    got: im.len(),
                    expected,
                });
            }
        }
        Ok(Self {
            width,
            height,
            images,
            masks,
        })
    }

    pub fn frames(&self) -> usize {
        self.masks.len()
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

/// Per-pixel occlusion scaling `beta * T * M_i / max(sum_j M_j, 1)` for every frame.
pub fn occlusion_scaling(masks: &MaskStack<'_>, beta: f64) -> Vec<Vec<f32>> {
    let t = masks.frames();
    let mut counts = vec![0u32; masks.pixels()];
    for m in &masks.masks {
        for (c, v) in counts.iter_mut().zip(m.iter()) {
            *c += *v as u32;
        }
    }
    masks
        .masks
        .iter()
        .map(|m| {
            m.iter()
                .zip(&counts)
                .map(|(v, c)| {
                    if *v {
                        (beta * t as f64 / (*c).max(1) as f64) as f32
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Max over frames `j != i` with `|j - i| < window` of the channel-mean
/// absolute difference between the masked images.
pub fn temporal_difference(stack: &MaskStack<'_>, i: usize, window: usize) -> Vec<f32> {
    let t = stack.frames();
    let lo = i.saturating_sub(window.saturating_sub(1));
    let hi = (i + window).min(t);
    let (img_i, m_i) = (stack.images[i], stack.masks[i]);
    let mut out = vec![0.0f32; stack.pixels()];
    for j in lo..hi {
        if j == i {
            continue;
        }
        let (img_j, m_j) = (stack.images[j], stack.masks[j]);
        for (px, o) in out.iter_mut().enumerate() {
            let a = if m_i[px] { img_i[px] } else { [0.0; 3] };
            let b = if m_j[px] { img_j[px] } else { [0.0; 3] };
            let d = ((a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()) / 3.0;
            if d > *o {
                *o = d;
            }
        }
    }
    out
}

/// Sampling weights over every `(frame, pixel)` plus their normalized CDF.
#[derive(Clone, Debug)]
pub struct WeightMaps {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Frame-major, row-major weights.
    pub weights: Vec<f32>,
    cdf: Vec<f64>,
}

impl WeightMaps {
    pub fn from_weights(width: usize, height: usize, frames: usize, weights: Vec<f32>) -> Result<Self, SamplerError> {
        assert_eq!(weights.len(), width * height * frames);
        let mut cdf = Vec::with_capacity(weights.len());
        let mut acc = 0.0f64;
        for w in &weights {
            acc += f64::from(*w);
            cdf.push(acc);
        }
        if !(acc > 0.0) {
            return Err(SamplerError::NoVisiblePixels);
        }
        cdf.iter_mut().for_each(|c| *c /= acc);
        // pin the last positive entry so u < 1 always lands on a real pixel
        if let Some(last) = weights.iter().rposition(|w| *w > 0.0) {
            cdf[last..].iter_mut().for_each(|c| *c = 1.0);
        }
        Ok(Self {
            width,
            height,
            frames,
            weights,
            cdf,
        })
    }

    pub fn frame(&self, i: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.weights[i * n..(i + 1) * n]
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// Probability of drawing flat index `k`.
    pub fn probability(&self, k: usize) -> f64 {
        let prev = if k == 0 { 0.0 } else { self.cdf[k - 1] };
        self.cdf[k] - prev
    }

    fn locate(&self, u: f64) -> (usize, usize, usize) {
        let k = self.cdf.partition_point(|c| *c <= u).min(self.cdf.len() - 1);
        let n = self.width * self.height;
        (k / n, (k % n) / self.width, k % self.width)
    }

    /// I.i.d. `(frame, row, col)` draws by inverse CDF.
    pub fn draw_batch<R: Rng + ?Sized>(&self, rng: &mut R, batch_size: usize) -> Vec<(usize, usize, usize)> {
        (0..batch_size).map(|_| self.locate(rng.gen::<f64>())).collect()
    }
}

pub fn build_weight_maps(stack: &MaskStack<'_>, cfg: &SamplerConfig) -> Result<WeightMaps, SamplerError> {
    cfg.validate()?;
    match cfg.kind {
        SamplerKind::Naive => return naive_weight_maps(stack),
        SamplerKind::Endonerf => return endonerf_weight_maps(stack, cfg.beta),
        SamplerKind::Spatiotemporal => {}
    }
    let omega = occlusion_scaling(stack, cfg.beta);
    let alpha = cfg.alpha as f32;
    let per_frame: Vec<Vec<f32>> = (0..stack.frames())
        .into_par_iter()
        .map(|i| {
            let diff = temporal_difference(stack, i, cfg.window);
            diff.iter()
                .zip(&omega[i])
                .map(|(d, o)| d.max(alpha) * o)
                .collect()
        })
        .collect();
    WeightMaps::from_weights(stack.width, stack.height, stack.frames(), per_frame.concat())
}

pub fn naive_weight_maps(stack: &MaskStack<'_>) -> Result<WeightMaps, SamplerError> {
    let w = stack
        .masks
        .iter()
        .flat_map(|m| m.iter().map(|v| *v as u8 as f32))
        .collect();
    WeightMaps::from_weights(stack.width, stack.height, stack.frames(), w)
}

pub fn endonerf_weight_maps(stack: &MaskStack<'_>, beta: f64) -> Result<WeightMaps, SamplerError> {
    let w = occlusion_scaling(stack, beta).concat();
    WeightMaps::from_weights(stack.width, stack.height, stack.frames(), w)
}

/// Writes weight maps as 8-bit grayscale rows normalized by the global max.
pub fn weight_heatmap(wm: &WeightMaps, frame: usize) -> Vec<u8> {
    let max = wm.weights.iter().fold(0.0f32, |a, b| a.max(*b));
    wm.frame(frame)
        .iter()
        .map(|w| if max > 0.0 { (w / max * 255.0).round() as u8 } else { 0 })
        .collect()
}
