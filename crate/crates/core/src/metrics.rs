//! Image and depth quality metrics.

use serde::Serialize;
use thiserror::Error;

pub const PSNR_CAP: f64 = 99.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("images differ in size ({0} vs {1} pixels)")]
    ShapeMismatch(usize, usize),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("image {width}x{height} is smaller than the {window}x{window} window")]
    TooSmall {
        width: usize,
        height: usize,
        window: usize,
    },
    #[error("no valid depth pixels")]
    NoValidDepth,
}

/// PSNR (dB, peak 1) of `a` against `b`, restricted to `mask` when given.
pub fn psnr(a: &[[f32; 3]], b: &[[f32; 3]], mask: Option<&[bool]>) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::ShapeMismatch(a.len(), b.len()));
    }
    if let Some(m) = mask {
        if m.len() != a.len() {
            return Err(MetricError::ShapeMismatch(a.len(), m.len()));
        }
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        if mask.map_or(true, |m| m[i]) {
            for c in 0..3 {
                let d = f64::from(x[c]) - f64::from(y[c]);
                sum += d * d;
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricError::EmptyMask);
    }
    Ok(psnr_from_mse(sum / (3 * count) as f64))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
}

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn gaussian_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filter over valid windows only.
fn filter(img: &[f64], w: usize, h: usize, k: &[f64; WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - WINDOW + 1, h - WINDOW + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM over valid 11x11 Gaussian windows, per channel then averaged.
pub fn ssim(a: &[[f32; 3]], b: &[[f32; 3]], width: usize, height: usize) -> Result<f64, MetricError> {
    if a.len() != b.len() || a.len() != width * height {
        return Err(MetricError::ShapeMismatch(a.len(), b.len()));
    }
    if width < WINDOW || height < WINDOW {
        return Err(MetricError::TooSmall {
            width,
            height,
            window: WINDOW,
        });
    }
    let k = gaussian_kernel();
    let (c1, c2) = ((K1 * 1.0f64).powi(2), (K2 * 1.0f64).powi(2));
    let mut total = 0.0;
    for ch in 0..3 {
        let x: Vec<f64> = a.iter().map(|p| f64::from(p[ch])).collect();
        let y: Vec<f64> = b.iter().map(|p| f64::from(p[ch])).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let (mx, my) = (filter(&x, width, height, &k), filter(&y, width, height, &k));
        let (sxx, syy, sxy) = (
            filter(&xx, width, height, &k),
            filter(&yy, width, height, &k),
            filter(&xy, width, height, &k),
        );
        let mut acc = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            acc += ((2.0 * ux * uy + c1) * (2.0 * cov + c2)) / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += acc / mx.len() as f64;
    }
    Ok(total / 3.0)
}

/// Root mean squared error over pixels where `valid` holds.
pub fn depth_rmse(pred: &[f32], gt: &[f32], valid: &[bool]) -> Result<f64, MetricError> {
    if pred.len() != gt.len() || pred.len() != valid.len() {
        return Err(MetricError::ShapeMismatch(pred.len(), gt.len()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..pred.len() {
        if valid[i] {
            let d = f64::from(pred[i]) - f64::from(gt[i]);
            sum += d * d;
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricError::NoValidDepth);
    }
    Ok((sum / n as f64).sqrt())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub psnr: f64,
    pub psnr_masked: f64,
    pub ssim: f64,
    pub depth_rmse: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub psnr_masked: f64,
    pub ssim: f64,
    pub depth_rmse: Option<f64>,
    pub frames: Vec<FrameMetrics>,
}

impl MetricReport {
    /// Per-metric means over frames.
    pub fn from_frames(frames: Vec<FrameMetrics>) -> Self {
        let n = frames.len().max(1) as f64;
        let mean = |f: &dyn Fn(&FrameMetrics) -> f64| frames.iter().map(f).sum::<f64>() / n;
        let depths: Vec<f64> = frames.iter().filter_map(|f| f.depth_rmse).collect();
        Self {
            psnr: mean(&|f| f.psnr),
            psnr_masked: mean(&|f| f.psnr_masked),
            ssim: mean(&|f| f.ssim),
            depth_rmse: (!depths.is_empty()).then(|| depths.iter().sum::<f64>() / depths.len() as f64),
            frames,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand::seq::SliceRandom;
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, n: usize) -> Vec<[f32; 3]> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect()
    }

    #[test]
    fn psnr_examples() {
        let a = random_image(0, 64);
        assert_eq!(psnr(&a, &a, None).unwrap(), PSNR_CAP);
        let b: Vec<[f32; 3]> = vec![[0.5; 3]; 64];
        let c: Vec<[f32; 3]> = vec![[0.6; 3]; 64];
        assert!((psnr(&b, &c, None).unwrap() - 20.0).abs() < 1e-4);
    }

    #[test]
    fn masked_psnr_ignores_tool_pixels() {
        let a = random_image(1, 16);
        let mut b = a.clone();
        let mask: Vec<bool> = (0..16).map(|i| i % 4 != 0).collect();
        for i in (0..16).step_by(4) {
            b[i] = [0.0; 3];
        }
        assert!(psnr(&a, &b, None).unwrap() < PSNR_CAP);
        assert_eq!(psnr(&a, &b, Some(&mask)).unwrap(), PSNR_CAP);
        assert_eq!(psnr(&a, &b, Some(&[false; 16])), Err(MetricError::EmptyMask));
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let a = random_image(2, 16 * 20);
        assert!((ssim(&a, &a, 16, 20).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_of_negative_is_below_one() {
        let a = random_image(3, 16 * 16);
        let b: Vec<[f32; 3]> = a.iter().map(|p| [1.0 - p[0], 1.0 - p[1], 1.0 - p[2]]).collect();
        assert!(ssim(&a, &b, 16, 16).unwrap() < 0.0);
    }

    #[test]
    fn ssim_of_constant_images_is_luminance_term() {
        let (x, y) = (0.4f64, 0.5f64);
        let a = vec![[x as f32; 3]; 144];
        let b = vec![[y as f32; 3]; 144];
        let c1 = 0.01f64.powi(2);
        let lx = x as f32 as f64;
        let ly = y as f32 as f64;
        let expected = (2.0 * lx * ly + c1) / (lx * lx + ly * ly + c1);
        assert!((ssim(&a, &b, 12, 12).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = random_image(4, 100);
        assert!(matches!(ssim(&a, &a, 10, 10), Err(MetricError::TooSmall { .. })));
    }

    #[test]
    fn shuffling_changes_ssim_but_not_psnr() {
        let (w, h) = (16, 16);
        let a: Vec<[f32; 3]> = (0..w * h)
            .map(|i| {
                let v = ((i % w) as f32 / w as f32 + (i / w) as f32 / h as f32) * 0.5;
                [v, v * 0.5, 1.0 - v]
            })
            .collect();
        let mut noise = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<[f32; 3]> = a
            .iter()
            .map(|p| p.map(|v| (v + noise.gen_range(-0.05..0.05)).clamp(0.0, 1.0)))
            .collect();
        let mut perm: Vec<usize> = (0..w * h).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(6));
        let ap: Vec<_> = perm.iter().map(|i| a[*i]).collect();
        let bp: Vec<_> = perm.iter().map(|i| b[*i]).collect();
        assert!((psnr(&a, &b, None).unwrap() - psnr(&ap, &bp, None).unwrap()).abs() < 1e-9);
        assert!((ssim(&a, &b, w, h).unwrap() - ssim(&ap, &bp, w, h).unwrap()).abs() > 1e-3);
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let a = random_image(7, 400);
        let mut last = f64::INFINITY;
        for k in 1..6 {
            let s = 0.01 * k as f32;
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let b: Vec<[f32; 3]> = a
                .iter()
                .map(|p| p.map(|v| v + s * rng.gen_range(-1.0f32..1.0)))
                .collect();
            let v = psnr(&a, &b, None).unwrap();
            assert!(v < last);
            last = v;
        }
    }

    #[test]
    fn depth_rmse_examples() {
        let p = [1.0f32, 2.0, 3.0];
        assert_eq!(depth_rmse(&p, &p, &[true; 3]).unwrap(), 0.0);
        let q = [1.5f32, 2.5, 3.5];
        assert!((depth_rmse(&p, &q, &[true; 3]).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(depth_rmse(&p, &q, &[false; 3]), Err(MetricError::NoValidDepth));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a: Vec<f32> = (0..50).map(|_| rng.gen()).collect();
        let b: Vec<f32> = (0..50).map(|_| rng.gen()).collect();
        let v: Vec<bool> = (0..50).map(|i| i % 3 != 0).collect();
        let mut s = 0.0;
        let mut n = 0.0;
        for i in 0..50 {
            if v[i] {
                s += (a[i] as f64 - b[i] as f64).powi(2);
                n += 1.0;
            }
        }
        assert!((depth_rmse(&a, &b, &v).unwrap() - (s / n).sqrt()).abs() < 1e-12);
    }
}
