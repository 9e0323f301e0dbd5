//! On-disk dataset format, output writers, and the analytic moving-sphere
//! scene used as a ground-truth oracle.
//!
//! Layout of a dataset directory:
//!
//! ```text
//! meta.json    {width, height, fx, fy, cx, cy, near, far, depth_scale,
//!               aabb_min, aabb_max, frames: [{image, depth?, mask, time, pose}]}
//! images/*.png 8-bit RGB
//! masks/*.png  8-bit, 0 = tool, 255 = tissue
//! depth/*.png  16-bit, world depth = value * depth_scale, 0 = missing
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma, Rgb};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Pose};
use crate::occupancy::dense_candidates;
use crate::renderer::{composite, ray_for_pixel, Camera, CompositeInput, DepthEstimate, Intrinsics, Ray};
use crate::sampler::MaskStack;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {msg}")]
    Image { path: PathBuf, msg: String },
    #[error("{path}: expected {expected:?} pixels, found {got:?}")]
    Dimension {
        path: PathBuf,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("{path}: mask pixel value {value} is neither 0 nor 255")]
    NonBinaryMask { path: PathBuf, value: u8 },
    #[error("frame {frame}: camera rotation is not orthonormal (deviation {deviation:.2e})")]
    NonOrthonormalPose { frame: usize, deviation: f64 },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameMeta {
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<String>,
    pub mask: String,
    pub time: f64,
    pub pose: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub near: f64,
    pub far: f64,
    pub depth_scale: f64,
    pub aabb_min: [f64; 3],
    pub aabb_max: [f64; 3],
    pub frames: Vec<FrameMeta>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    /// Row-major RGB in [0, 1].
    pub image: Vec<[f32; 3]>,
    /// World-unit depth, 0 where missing.
    pub depth: Option<Vec<f32>>,
    /// `true` on tissue, `false` on tool pixels.
    pub mask: Vec<bool>,
    /// Normalized time in [0, 1].
    pub time: f64,
    pub pose: Pose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub intrinsics: Intrinsics,
    pub near: f64,
    pub far: f64,
    pub depth_scale: f64,
    pub aabb: Aabb,
    pub frames: Vec<Frame>,
}

impl Dataset {
    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    pub fn pixels(&self) -> usize {
        self.width() * self.height()
    }

    pub fn camera(&self, frame: usize) -> Camera {
        Camera {
            intrinsics: self.intrinsics,
            pose: self.frames[frame].pose,
            near: self.near,
            far: self.far,
        }
    }

    pub fn ray(&self, frame: usize, row: usize, col: usize) -> Ray {
        ray_for_pixel(&self.camera(frame), row, col, self.frames[frame].time)
    }

    pub fn has_depth(&self) -> bool {
        self.frames.iter().all(|f| f.depth.is_some())
    }

    pub fn mask_stack(&self) -> MaskStack<'_> {
        MaskStack {
            width: self.width(),
            height: self.height(),
            images: self.frames.iter().map(|f| f.image.as_slice()).collect(),
            masks: self.frames.iter().map(|f| f.mask.as_slice()).collect(),
        }
    }

    /// Subset of frames, keeping their original times.
    pub fn select(&self, frames: &[usize]) -> Dataset {
        Dataset {
            frames: frames.iter().map(|i| self.frames[*i].clone()).collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.frames.is_empty() {
            return Err(DataError::Invalid("no frames".into()));
        }
        if !self.aabb.is_valid() {
            return Err(DataError::Invalid(format!("degenerate scene box {:?}", self.aabb)));
        }
        if !(self.near > 0.0 && self.far > self.near) {
            return Err(DataError::Invalid(format!("need 0 < near < far, got {} / {}", self.near, self.far)));
        }
        let k = &self.intrinsics;
        if k.width == 0 || k.height == 0 || !(k.fx > 0.0) || !(k.fy > 0.0) {
            return Err(DataError::Invalid("bad intrinsics".into()));
        }
        if !(self.depth_scale > 0.0) {
            return Err(DataError::Invalid("depth_scale must be positive".into()));
        }
        for (i, f) in self.frames.iter().enumerate() {
            let n = self.pixels();
            if f.image.len() != n || f.mask.len() != n || f.depth.as_ref().is_some_and(|d| d.len() != n) {
                return Err(DataError::Invalid(format!("frame {i} has inconsistent buffer sizes")));
            }
            let deviation = f.pose.orthonormality_error();
            if deviation > 1e-3 {
                return Err(DataError::NonOrthonormalPose { frame: i, deviation });
            }
        }
        Ok(())
    }
}

fn open_image(path: &Path) -> Result<image::DynamicImage, DataError> {
    image::open(path).map_err(|e| DataError::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn check_dims(path: &Path, img: &image::DynamicImage, w: usize, h: usize) -> Result<(), DataError> {
    let got = (img.width() as usize, img.height() as usize);
    if got != (w, h) {
        return Err(DataError::Dimension {
            path: path.to_path_buf(),
            expected: (w, h),
            got,
        });
    }
    Ok(())
}

pub fn load_color(path: &Path, w: usize, h: usize) -> Result<Vec<[f32; 3]>, DataError> {
    let img = open_image(path)?;
    check_dims(path, &img, w, h)?;
    Ok(img
        .to_rgb8()
        .pixels()
        .map(|p| p.0.map(|v| f32::from(v) / 255.0))
        .collect())
}

pub fn load_mask(path: &Path, w: usize, h: usize) -> Result<Vec<bool>, DataError> {
    let img = open_image(path)?;
    check_dims(path, &img, w, h)?;
    img.to_luma8()
        .pixels()
        .map(|p| match p.0[0] {
            0 => Ok(false),
            255 => Ok(true),
            value => Err(DataError::NonBinaryMask {
                path: path.to_path_buf(),
                value,
            }),
        })
        .collect()
}

pub fn load_depth(path: &Path, w: usize, h: usize, scale: f64) -> Result<Vec<f32>, DataError> {
    let img = open_image(path)?;
    check_dims(path, &img, w, h)?;
    if img.color() != image::ColorType::L16 {
        return Err(DataError::Image {
            path: path.to_path_buf(),
            msg: format!("depth maps must be 16-bit grayscale, found {:?}", img.color()),
        });
    }
    Ok(img
        .to_luma16()
        .pixels()
        .map(|p| (f64::from(p.0[0]) * scale) as f32)
        .collect())
}

/// Loads and validates a dataset; frames are sorted by time and assigned
/// evenly spaced normalized times `i / (T - 1)`.
pub fn load_dataset(dir: &Path) -> Result<Dataset, DataError> {
    let meta_path = dir.join("meta.json");
    let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: DatasetMeta = serde_json::from_str(&text).map_err(|source| DataError::Json {
        path: meta_path.clone(),
        source,
    })?;
    let (w, h) = (meta.width, meta.height);
    let mut order: Vec<usize> = (0..meta.frames.len()).collect();
    order.sort_by(|a, b| meta.frames[*a].time.total_cmp(&meta.frames[*b].time));
    let t = order.len();
    let mut frames = Vec::with_capacity(t);
    for (k, idx) in order.into_iter().enumerate() {
        let fm = &meta.frames[idx];
        let pose = Pose::from_row_major(&fm.pose).ok_or_else(|| {
            DataError::Invalid(format!("frame {idx}: pose needs 16 values, found {}", fm.pose.len()))
        })?;
        let image = load_color(&dir.join(&fm.image), w, h)?;
        let mask = load_mask(&dir.join(&fm.mask), w, h)?;
        let depth = match &fm.depth {
            Some(p) => Some(load_depth(&dir.join(p), w, h, meta.depth_scale)?),
            None => None,
        };
        frames.push(Frame {
            image,
            depth,
            mask,
            time: if t > 1 { k as f64 / (t - 1) as f64 } else { 0.0 },
            pose,
        });
    }
    let ds = Dataset {
        intrinsics: Intrinsics {
            fx: meta.fx,
            fy: meta.fy,
            cx: meta.cx,
            cy: meta.cy,
            width: w,
            height: h,
        },
        near: meta.near,
        far: meta.far,
        depth_scale: meta.depth_scale,
        aabb: Aabb {
            min: meta.aabb_min,
            max: meta.aabb_max,
        },
        frames,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn save_png<P: image::Pixel<Subpixel = S> + image::PixelWithColorType, S: image::Primitive>(
    path: &Path,
    img: &ImageBuffer<P, Vec<S>>,
) -> Result<(), DataError>
where
    [S]: image::EncodableLayout,
{
    img.save(path).map_err(|e| DataError::Image {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn save_color(path: &Path, rgb: &[[f32; 3]], w: usize, h: usize) -> Result<(), DataError> {
    let img = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Rgb(rgb[y as usize * w + x as usize].map(to_u8))
    });
    save_png(path, &img)
}

pub fn save_mask(path: &Path, mask: &[bool], w: usize, h: usize) -> Result<(), DataError> {
    let img = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        Luma([if mask[y as usize * w + x as usize] { 255u8 } else { 0 }])
    });
    save_png(path, &img)
}

pub fn save_gray(path: &Path, v: &[u8], w: usize, h: usize) -> Result<(), DataError> {
    let img = ImageBuffer::from_fn(w as u32, h as u32, |x, y| Luma([v[y as usize * w + x as usize]]));
    save_png(path, &img)
}

pub fn save_depth(path: &Path, depth: &[f32], w: usize, h: usize, scale: f64) -> Result<(), DataError> {
    let img = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let d = f64::from(depth[y as usize * w + x as usize]) / scale;
        Luma([d.round().clamp(0.0, u16::MAX as f64) as u16])
    });
    save_png(path, &img)
}

/// Writes `meta.json` plus image/mask/depth PNGs. Times are written as the
/// normalized frame times.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let (w, h) = (ds.width(), ds.height());
    let mut written = Vec::new();
    for sub in ["images", "masks", "depth"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }
    let mut metas = Vec::new();
    for (i, f) in ds.frames.iter().enumerate() {
        let image = format!("images/{i:03}.png");
        let mask = format!("masks/{i:03}.png");
        save_color(&dir.join(&image), &f.image, w, h)?;
        save_mask(&dir.join(&mask), &f.mask, w, h)?;
        written.push(dir.join(&image));
        written.push(dir.join(&mask));
        let depth = match &f.depth {
            Some(d) => {
                let p = format!("depth/{i:03}.png");
                save_depth(&dir.join(&p), d, w, h, ds.depth_scale)?;
                written.push(dir.join(&p));
                Some(p)
            }
            None => None,
        };
        metas.push(FrameMeta {
            image,
            depth,
            mask,
            time: f.time,
            pose: f.pose.to_row_major(),
        });
    }
    let k = &ds.intrinsics;
    let meta = DatasetMeta {
        width: w,
        height: h,
        fx: k.fx,
        fy: k.fy,
        cx: k.cx,
        cy: k.cy,
        near: ds.near,
        far: ds.far,
        depth_scale: ds.depth_scale,
        aabb_min: ds.aabb.min,
        aabb_max: ds.aabb.max,
        frames: metas,
    };
    let meta_path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&meta_path, text).map_err(io_err(&meta_path))?;
    written.push(meta_path);
    Ok(written)
}

/// One rendered frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FrameRender {
    pub rgb: Vec<[f32; 3]>,
    pub depth: Vec<f32>,
    pub opacity: Vec<f32>,
}

/// Writes `color_NNN.png`, `depth_NNN.png` and `diff_NNN.png` (per-channel
/// absolute difference against `gt`) for every frame.
pub fn write_outputs(
    renders: &[FrameRender],
    gt: &[&[[f32; 3]]],
    w: usize,
    h: usize,
    depth_scale: f64,
    dir: &Path,
) -> Result<Vec<PathBuf>, DataError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut out = Vec::new();
    for (i, (r, g)) in renders.iter().zip(gt).enumerate() {
        let color = dir.join(format!("color_{i:03}.png"));
        let depth = dir.join(format!("depth_{i:03}.png"));
        let diff = dir.join(format!("diff_{i:03}.png"));
        save_color(&color, &r.rgb, w, h)?;
        save_depth(&depth, &r.depth, w, h, depth_scale)?;
        let d: Vec<[f32; 3]> = r
            .rgb
            .iter()
            .zip(g.iter())
            .map(|(a, b)| [(a[0] - b[0]).abs(), (a[1] - b[1]).abs(), (a[2] - b[2]).abs()])
            .collect();
        save_color(&diff, &d, w, h)?;
        out.extend([color, depth, diff]);
    }
    Ok(out)
}

/// Which kind of depth map the synthetic scene emits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum SynthDepth {
    /// Exact rendered depth.
    #[default]
    Stereo,
    /// `scale * depth + shift` on valid pixels; models relative depth.
    Monocular { scale: f64, shift: f64 },
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    /// Sphere center offset amplitude along x.
    pub amplitude: f64,
    pub radius: f64,
    /// Density inside the sphere.
    pub density: f64,
    /// Paint a moving gray rectangle over the images and mask it out.
    pub occluder: bool,
    pub quadrature_steps: usize,
    pub depth: SynthDepth,
    pub depth_scale: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            frames: 30,
            amplitude: 0.15,
            radius: 0.25,
            density: 20.0,
            occluder: false,
            quadrature_steps: 4096,
            depth: SynthDepth::Stereo,
            depth_scale: 0.001,
        }
    }
}

/// Analytic moving sphere inside the unit cube.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticOracle {
    pub center: [f64; 3],
    pub amplitude: f64,
    pub radius: f64,
    pub density: f64,
}

impl AnalyticOracle {
    pub fn center_at(&self, time: f64) -> [f64; 3] {
        let s = self.amplitude * (2.0 * std::f64::consts::PI * time).sin();
        [self.center[0] + s, self.center[1], self.center[2]]
    }

    pub fn sigma(&self, x: [f64; 3], time: f64) -> f64 {
        let c = self.center_at(time);
        let d2: f64 = (0..3).map(|a| (x[a] - c[a]).powi(2)).sum();
        if d2 <= self.radius * self.radius {
            self.density
        } else {
            0.0
        }
    }

    /// Color as a function of world position inside the unit cube.
    pub fn color(&self, x: [f64; 3]) -> [f64; 3] {
        x.map(|v| 0.2 + 0.6 * v.clamp(0.0, 1.0))
    }

    /// Dense quadrature with the renderer's compositing; returns `(rgb, depth, opacity)`.
    pub fn render_ray(&self, ray: &Ray, aabb: Aabb, steps: usize) -> ([f64; 3], f64, f64) {
        // zero-density samples leave transmittance and weights untouched, so
        // only samples inside the sphere need compositing
        let inputs: Vec<CompositeInput<f64>> = dense_candidates(ray, aabb, steps)
            .into_iter()
            .filter_map(|s| {
                let x = aabb.denormalize(s.position);
                let sigma = self.sigma(x, s.time);
                (sigma > 0.0).then(|| CompositeInput {
                    sigma,
                    rgb: self.color(x),
                    delta: s.delta,
                    t_value: s.t_value,
                })
            })
            .collect();
        let (out, _) = composite(&inputs, DepthEstimate::Expected);
        (out.rgb, out.depth, out.opacity)
    }

    pub fn render_frame(&self, cam: &Camera, time: f64, aabb: Aabb, steps: usize) -> FrameRender {
        let (w, h) = (cam.intrinsics.width, cam.intrinsics.height);
        let px: Vec<([f64; 3], f64, f64)> = (0..w * h)
            .into_par_iter()
            .map(|i| self.render_ray(&ray_for_pixel(cam, i / w, i % w, time), aabb, steps))
            .collect();
        FrameRender {
            rgb: px.iter().map(|p| p.0.map(|v| v as f32)).collect(),
            depth: px.iter().map(|p| p.1 as f32).collect(),
            opacity: px.iter().map(|p| p.2 as f32).collect(),
        }
    }
}

/// Synthetic dataset plus the oracle and clean (unoccluded) ground truth.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub dataset: Dataset,
    pub oracle: AnalyticOracle,
    pub clean: Vec<FrameRender>,
}

/// Occluder rectangle `(row0, row1, col0, col1)` for frame `i` of `t`.
pub fn occluder_rect(i: usize, t: usize, w: usize, h: usize) -> (usize, usize, usize, usize) {
    let rw = (w / 4).max(1);
    let s = if t > 1 { i as f64 / (t - 1) as f64 } else { 0.0 };
    let c0 = (s * (w - rw) as f64).round() as usize;
    (h * 2 / 5, h * 4 / 5, c0, c0 + rw)
}

/// Fixed camera at `(0.5, 0.5, -1)` looking down `+z` at the unit cube.
pub fn synthetic_camera(width: usize, height: usize) -> (Intrinsics, Pose, f64, f64) {
    let f = 0.5 * width.max(height) as f64 / 0.4;
    let k = Intrinsics {
        fx: f,
        fy: f,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        width,
        height,
    };
    (k, Pose::from_translation([0.5, 0.5, -1.0]), 0.9, 2.2)
}

pub fn generate_synthetic(cfg: &SynthConfig) -> SyntheticScene {
    let (intrinsics, pose, near, far) = synthetic_camera(cfg.width, cfg.height);
    let oracle = AnalyticOracle {
        center: [0.5, 0.5, 0.5],
        amplitude: cfg.amplitude,
        radius: cfg.radius,
        density: cfg.density,
    };
    let aabb = Aabb::unit();
    let cam = Camera {
        intrinsics,
        pose,
        near,
        far,
    };
    let t = cfg.frames.max(1);
    let (w, h) = (cfg.width, cfg.height);
    let mut frames = Vec::with_capacity(t);
    let mut clean = Vec::with_capacity(t);
    for i in 0..t {
        let time = if t > 1 { i as f64 / (t - 1) as f64 } else { 0.0 };
        let r = oracle.render_frame(&cam, time, aabb, cfg.quadrature_steps);
        let mut image = r.rgb.clone();
        let mut mask = vec![true; w * h];
        if cfg.occluder {
            let (r0, r1, c0, c1) = occluder_rect(i, t, w, h);
            for row in r0..r1.min(h) {
                for col in c0..c1.min(w) {
                    image[row * w + col] = [0.5; 3];
                    mask[row * w + col] = false;
                }
            }
        }
        let valid = |k: usize, d: f32| mask[k] && d > 0.0;
        let depth = match cfg.depth {
            SynthDepth::Stereo => Some(
                r.depth
                    .iter()
                    .enumerate()
                    .map(|(k, d)| if valid(k, *d) { *d } else { 0.0 })
                    .collect(),
            ),
            SynthDepth::Monocular { scale, shift } => Some(
                r.depth
                    .iter()
                    .enumerate()
                    .map(|(k, d)| {
                        if valid(k, *d) {
                            (scale * f64::from(*d) + shift) as f32
                        } else {
                            0.0
                        }
                    })
                    .collect(),
            ),
            SynthDepth::None => None,
        };
        frames.push(Frame {
            image,
            depth,
            mask,
            time,
            pose,
        });
        clean.push(r);
    }
    SyntheticScene {
        dataset: Dataset {
            intrinsics,
            near,
            far,
            depth_scale: cfg.depth_scale,
            aabb,
            frames,
        },
        oracle,
        clean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(cfg: SynthConfig) -> SyntheticScene {
        generate_synthetic(&SynthConfig {
            width: 16,
            height: 16,
            frames: 3,
            quadrature_steps: 1024,
            ..cfg
        })
    }

    #[test]
    fn zero_density_scene_is_black() {
        let s = small(SynthConfig {
            density: 0.0,
            ..Default::default()
        });
        for (f, c) in s.dataset.frames.iter().zip(&s.clean) {
            assert!(f.image.iter().all(|p| *p == [0.0; 3]));
            assert!(c.opacity.iter().all(|o| *o == 0.0));
        }
    }

    #[test]
    fn opaque_sphere_depth_is_first_hit() {
        let oracle = AnalyticOracle {
            center: [0.5, 0.5, 0.5],
            amplitude: 0.0,
            radius: 0.25,
            density: 1e5,
        };
        let ray = Ray {
            origin: [0.5, 0.5, -1.0],
            dir: [0.0, 0.0, 1.0],
            t_near: 0.9,
            t_far: 2.2,
            pixel: (0, 0),
            time: 0.0,
        };
        let (_, depth, opacity) = oracle.render_ray(&ray, Aabb::unit(), 4096);
        assert!((opacity - 1.0).abs() < 1e-9);
        assert!((depth - 1.25).abs() < 1e-3, "{depth}");
    }

    #[test]
    fn zero_amplitude_frames_are_identical() {
        let s = small(SynthConfig {
            amplitude: 0.0,
            ..Default::default()
        });
        let f = &s.dataset.frames;
        assert!(f.windows(2).all(|p| p[0].image == p[1].image));
    }

    #[test]
    fn occluder_masks_and_paints() {
        let s = small(SynthConfig {
            occluder: true,
            ..Default::default()
        });
        let f = &s.dataset.frames[1];
        let (r0, _, c0, _) = occluder_rect(1, 3, 16, 16);
        let k = r0 * 16 + c0;
        assert!(!f.mask[k]);
        assert_eq!(f.image[k], [0.5; 3]);
        assert_eq!(f.depth.as_ref().unwrap()[k], 0.0);
        assert_ne!(s.clean[1].rgb[k], [0.5; 3]);
    }
}
