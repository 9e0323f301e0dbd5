//! Pinhole ray generation, quadrature volume rendering and its reverse pass.

use serde::{Deserialize, Serialize};

use crate::field::{Field, FieldScratch};
use crate::field_mlp::{FieldOutput, MlpError};
use crate::geometry::{add_scaled, norm, Aabb, Pose, Vec3};
use crate::occupancy::{IndicatorGrid, RayMarch};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Camera {
    pub intrinsics: Intrinsics,
    /// Camera-to-world; camera looks down +z with x right and y down.
    pub pose: Pose,
    pub near: f64,
    pub far: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit length.
    pub dir: Vec3,
    pub t_near: f64,
    pub t_far: f64,
    /// `(row, col)`.
    pub pixel: (usize, usize),
    /// Normalized frame time in `[0, 1]`.
    pub time: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        add_scaled(self.origin, self.dir, t)
    }
}

/// Ray through the center of pixel `(row, col)`.
pub fn ray_for_pixel(cam: &Camera, row: usize, col: usize, time: f64) -> Ray {
    let k = &cam.intrinsics;
    let d_cam = [
        (col as f64 + 0.5 - k.cx) / k.fx,
        (row as f64 + 0.5 - k.cy) / k.fy,
        1.0,
    ];
    let d = cam.pose.rotate(d_cam);
    let n = norm(d);
    Ray {
        origin: cam.pose.translation(),
        dir: [d[0] / n, d[1] / n, d[2] / n],
        t_near: cam.near,
        t_far: cam.far,
        pixel: (row, col),
        time,
    }
}

/// A quadrature point along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplePoint {
    /// Position normalized to the scene AABB, in `[0, 1]^3`.
    pub position: Vec3,
    pub time: f64,
    /// Distance along the ray (world units).
    pub t_value: f64,
    /// Segment length (world units).
    pub delta: f64,
}

impl SamplePoint {
    pub fn coords<T: Real>(&self) -> [T; 4] {
        [
            T::lit(self.position[0]),
            T::lit(self.position[1]),
            T::lit(self.position[2]),
            T::lit(self.time),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RenderOutput<T> {
    pub rgb: [T; 3],
    pub depth: T,
    /// Accumulated alpha, `sum_i w_i`.
    pub opacity: T,
}

/// Which depth the renderer reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthEstimate {
    /// `sum_i w_i t_i`.
    #[default]
    Expected,
    /// `sum_i w_i t_i / sum_i w_i` (zero when nothing is hit).
    Normalized,
}

/// One sample's contribution to the compositing sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompositeInput<T> {
    pub sigma: T,
    pub rgb: [T; 3],
    pub delta: T,
    pub t_value: T,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompositeCache<T> {
    pub inputs: Vec<CompositeInput<T>>,
    pub alphas: Vec<T>,
    /// Transmittance before each sample.
    pub transmittance: Vec<T>,
    pub weights: Vec<T>,
    pub depth_mode: DepthEstimate,
}

/// Discrete alpha compositing onto a black background.
pub fn composite<T: Real>(
    samples: &[CompositeInput<T>],
    depth_mode: DepthEstimate,
) -> (RenderOutput<T>, CompositeCache<T>) {
    let n = samples.len();
    let mut cache = CompositeCache {
        inputs: samples.to_vec(),
        alphas: Vec::with_capacity(n),
        transmittance: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        depth_mode,
    };
    let mut out = RenderOutput {
        rgb: [T::zero(); 3],
        depth: T::zero(),
        opacity: T::zero(),
    };
    let mut trans = T::one();
    for s in samples {
        let alpha = T::one() - (-(s.sigma * s.delta)).exp();
        let w = trans * alpha;
        for c in 0..3 {
            out.rgb[c] += w * s.rgb[c];
        }
        out.depth += w * s.t_value;
        out.opacity += w;
        cache.alphas.push(alpha);
        cache.transmittance.push(trans);
        cache.weights.push(w);
        trans = trans * (T::one() - alpha);
    }
    if depth_mode == DepthEstimate::Normalized {
        out.depth = if out.opacity > T::zero() {
            out.depth / out.opacity
        } else {
            T::zero()
        };
    }
    (out, cache)
}

/// Per-sample gradients of the rendered outputs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompositeGrad<T> {
    pub d_sigma: Vec<T>,
    pub d_rgb: Vec<[T; 3]>,
}

/// Reverse pass of [`composite`] for upstream gradients on color and depth.
pub fn composite_backward<T: Real>(
    cache: &CompositeCache<T>,
    d_rgb: [T; 3],
    d_depth: T,
) -> CompositeGrad<T> {
    let n = cache.inputs.len();
    let mut grad = CompositeGrad {
        d_sigma: vec![T::zero(); n],
        d_rgb: vec![[T::zero(); 3]; n],
    };
    if n == 0 {
        return grad;
    }
    // d(loss)/d(w_i)
    let opacity: T = cache.weights.iter().copied().sum();
    let mut d_w = vec![T::zero(); n];
    let norm_depth = match cache.depth_mode {
        DepthEstimate::Expected => None,
        DepthEstimate::Normalized if opacity > T::zero() => {
            let num: T = cache
                .weights
                .iter()
                .zip(&cache.inputs)
                .map(|(w, s)| *w * s.t_value)
                .sum();
            Some(num / opacity)
        }
        DepthEstimate::Normalized => Some(T::zero()),
    };
    for i in 0..n {
        let s = &cache.inputs[i];
        let mut g = d_rgb[0] * s.rgb[0] + d_rgb[1] * s.rgb[1] + d_rgb[2] * s.rgb[2];
        g += match norm_depth {
            None => d_depth * s.t_value,
            Some(dn) if opacity > T::zero() => d_depth * (s.t_value - dn) / opacity,
            Some(_) => T::zero(),
        };
        d_w[i] = g;
        for c in 0..3 {
            grad.d_rgb[i][c] = d_rgb[c] * cache.weights[i];
        }
    }
    // w_i = T_i a_i:  dw_i/dsigma_i = delta_i T_{i+1},  dw_j/dsigma_i = -delta_i w_j (j > i)
    let mut tail = T::zero();
    for i in (0..n).rev() {
        let s = &cache.inputs[i];
        let t_next = cache.transmittance[i] * (T::one() - cache.alphas[i]);
        grad.d_sigma[i] = s.delta * (t_next * d_w[i] - tail);
        tail += cache.weights[i] * d_w[i];
    }
    grad
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Uniform quadrature steps over `[near, far]` during training.
    pub steps: usize,
    /// Steps used by evaluation renders.
    pub eval_steps: usize,
    pub depth: DepthEstimate,
    /// Early-termination transmittance floor (0 disables).
    pub min_transmittance: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            steps: 128,
            eval_steps: 512,
            depth: DepthEstimate::Expected,
            min_transmittance: 1e-4,
        }
    }
}

/// Parameters of one marching pass.
#[derive(Clone, Copy, Debug)]
pub struct MarchSettings<'a> {
    pub aabb: Aabb,
    pub steps: usize,
    pub min_transmittance: f64,
    /// `None` marches densely.
    pub grid: Option<&'a IndicatorGrid>,
    pub depth: DepthEstimate,
}

/// A rendered ray with everything needed for its reverse pass.
#[derive(Clone, Debug, Default)]
pub struct RayRender<T> {
    pub output: RenderOutput<T>,
    pub samples: Vec<SamplePoint>,
    pub fields: Vec<FieldOutput<T>>,
    pub cache: CompositeCache<T>,
}

/// Uniform candidates, indicator-grid filtering with early termination,
/// field evaluation per surviving sample, then compositing.
pub fn render_ray<T: Real>(
    field: &Field<'_, T>,
    ray: &Ray,
    march: &MarchSettings<'_>,
    scratch: &mut FieldScratch<T>,
) -> Result<RayRender<T>, MlpError> {
    let dir = ray.dir.map(T::lit);
    let mut walker = RayMarch::new(ray, march.aabb, march.steps, march.grid, march.min_transmittance);
    let mut samples = Vec::new();
    let mut fields = Vec::new();
    let mut inputs = Vec::new();
    let mut trans = 1.0f64;
    while let Some(s) = walker.next_sample(trans) {
        let out = field.query(s.coords(), dir, scratch)?;
        let delta = T::lit(s.delta);
        let alpha = T::one() - (-(out.sigma * delta)).exp();
        trans *= 1.0 - alpha.as_f64();
        inputs.push(CompositeInput {
            sigma: out.sigma,
            rgb: out.rgb,
            delta,
            t_value: T::lit(s.t_value),
        });
        samples.push(s);
        fields.push(out);
    }
    let (output, cache) = composite(&inputs, march.depth);
    Ok(RayRender {
        output,
        samples,
        fields,
        cache,
    })
}

/// Propagates `d_rgb`/`d_depth` on a rendered ray down to field parameters.
pub fn backward_ray<T: Real>(
    field: &Field<'_, T>,
    ray: &Ray,
    render: &RayRender<T>,
    d_rgb: [T; 3],
    d_depth: T,
    grads: &mut crate::field::FieldParams<T>,
    scratch: &mut FieldScratch<T>,
) -> Result<(), MlpError> {
    let g = composite_backward(&render.cache, d_rgb, d_depth);
    let dir = ray.dir.map(T::lit);
    for (i, s) in render.samples.iter().enumerate() {
        if g.d_sigma[i] == T::zero() && g.d_rgb[i].iter().all(|v| *v == T::zero()) {
            continue;
        }
        field.backward(s.coords(), dir, g.d_sigma[i], g.d_rgb[i], grads, scratch)?;
    }
    Ok(())
}
