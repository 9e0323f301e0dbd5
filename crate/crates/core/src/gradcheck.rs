//! End-to-end gradient verification of the training loss against central
//! finite differences in f64.
//!
//! The random states are built away from every non-differentiable point of
//! the pipeline: decoder biases are bounded away from zero so no ReLU
//! changes sign under a perturbation, dynamic plane values stay clear of 1
//! (the kink of the disentangle term), and depth residuals stay clear of the
//! Huber transition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::encoding::{EncodingConfig, EncodingKind};
use crate::field::{encoder_from, FieldParams};
use crate::field_mlp::{MlpConfig, MlpError};
use crate::geometry::Aabb;
use crate::losses::{DepthMode, LossConfig};
use crate::plane_field::{FieldKind, FusionMode, PlaneConfig};
use crate::renderer::{DepthEstimate, MarchSettings, Ray};
use crate::trainer::{batch_loss, batch_loss_and_grad, RayTarget};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckSettings {
    pub seed: u64,
    pub levels: usize,
    pub resolution: usize,
    pub time_res: usize,
    pub feature_dim: usize,
    pub bins: usize,
    pub samples_per_ray: usize,
    pub rays: usize,
    pub fusion: FusionMode,
    pub depth_mode: DepthMode,
    pub depth_estimate: DepthEstimate,
    pub step: f64,
}

impl GradcheckSettings {
    /// The small configuration used by the acceptance run: 2 levels of 8x8
    /// planes with 4 features, 4 one-blob bins, 4 samples per ray.
    pub fn tiny(seed: u64) -> Self {
        let modes = [DepthMode::Stereo, DepthMode::Monocular, DepthMode::None];
        Self {
            seed,
            levels: 2,
            resolution: 8,
            time_res: 8,
            feature_dim: 4,
            bins: 4,
            samples_per_ray: 4,
            rays: 6,
            fusion: if seed % 4 == 3 {
                FusionMode::Concat
            } else {
                FusionMode::Product
            },
            depth_mode: modes[(seed % 3) as usize],
            depth_estimate: if seed % 2 == 0 {
                DepthEstimate::Expected
            } else {
                DepthEstimate::Normalized
            },
            step: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub settings: GradcheckSettings,
    pub parameters: usize,
    pub max_rel_err: f64,
    pub worst_group: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

pub fn run_gradcheck(s: &GradcheckSettings) -> Result<GradcheckReport, MlpError> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let enc_cfg = EncodingConfig {
        kind: EncodingKind::Oneblob,
        bins: s.bins,
        sigma: None,
        octaves: 4,
    };
    let encoder = encoder_from(&enc_cfg).expect("valid encoding");
    let planes = PlaneConfig {
        resolutions: vec![s.resolution; s.levels],
        time_res: s.time_res,
        feature_dim: s.feature_dim,
        fusion: s.fusion,
        static_init: [0.9, 1.1],
    };
    let mut params: FieldParams<f64> =
        FieldParams::init(&planes, s.time_res, &encoder, &MlpConfig::default(), &mut rng).expect("valid planes");
    for p in params.planes.planes_mut() {
        if p.axis_pair.kind() == FieldKind::Dynamic {
            for v in p.values.iter_mut() {
                let off = rng.gen_range(0.05..0.2);
                *v = if rng.gen_bool(0.5) { 1.0 + off } else { 1.0 - off };
            }
        }
    }
    for layer in params.mlp.layers_mut() {
        layer.weight.iter_mut().for_each(|w| *w = rng.gen_range(-0.02..0.02));
        for b in layer.bias.iter_mut() {
            let m = rng.gen_range(0.5..1.0);
            *b = if rng.gen_bool(0.5) { m } else { -m };
        }
    }

    let length = 0.36;
    let rays: Vec<Ray> = (0..s.rays)
        .map(|_| {
            let origin = [
                rng.gen_range(0.35..0.65),
                rng.gen_range(0.35..0.65),
                rng.gen_range(0.35..0.65),
            ];
            let mut d: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-6);
            d.iter_mut().for_each(|v| *v /= n);
            Ray {
                origin,
                dir: d,
                t_near: 0.0,
                t_far: rng.gen_range(0.4 * length..length),
                pixel: (0, 0),
                time: rng.gen_range(0.0..1.0),
            }
        })
        .collect();
    let march = MarchSettings {
        aabb: Aabb::unit(),
        steps: s.samples_per_ray,
        min_transmittance: 0.0,
        grid: None,
        depth: s.depth_estimate,
    };
    let loss = LossConfig {
        depth_mode: s.depth_mode,
        ..Default::default()
    };

    // depth targets are placed relative to the current prediction so that
    // residuals avoid the Huber transition
    let field = params.field(&encoder);
    let mut scratch = Default::default();
    let preds: Vec<f64> = rays
        .iter()
        .map(|r| crate::renderer::render_ray(&field, r, &march, &mut scratch).map(|o| o.output.depth))
        .collect::<Result<_, _>>()?;
    let delta = loss.huber_delta;
    let targets: Vec<RayTarget> = preds
        .iter()
        .map(|p| {
            let depth = match s.depth_mode {
                DepthMode::Stereo => {
                    let off = if rng.gen_bool(0.5) {
                        rng.gen_range(0.1 * delta..0.5 * delta)
                    } else {
                        rng.gen_range(2.0 * delta..3.0 * delta)
                    };
                    p + if rng.gen_bool(0.5) { off } else { -off }
                }
                DepthMode::Monocular => 0.7 * p + 0.2 + rng.gen_range(-0.05..0.05),
                DepthMode::None => 0.0,
            };
            RayTarget {
                rgb: [rng.gen(), rng.gen(), rng.gen()],
                depth: depth.max(0.0) as f32,
            }
        })
        .collect();
    let mut grads = params.zeros_like();
    let mut workspace = Vec::new();
    batch_loss_and_grad(&params, &encoder, &rays, &targets, &march, &loss, &mut grads, &mut workspace)?;

    let analytic: Vec<(String, Vec<f64>)> = grads.groups().into_iter().map(|(n, v)| (n, v.to_vec())).collect();
    let mut report = GradcheckReport {
        settings: s.clone(),
        parameters: 0,
        max_rel_err: 0.0,
        worst_group: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let h = s.step;
    for (gi, (name, values)) in analytic.iter().enumerate() {
        for (idx, a) in values.iter().enumerate() {
            let orig = params.groups()[gi].1[idx];
            params.groups_mut()[gi].1[idx] = orig + h;
            let fp = batch_loss(&params, &encoder, &rays, &targets, &march, &loss)?.total;
            params.groups_mut()[gi].1[idx] = orig - h;
            let fm = batch_loss(&params, &encoder, &rays, &targets, &march, &loss)?.total;
            params.groups_mut()[gi].1[idx] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let rel = relative_error(*a, numeric);
            report.parameters += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_group = name.clone();
                report.worst_index = idx;
                report.analytic = *a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
