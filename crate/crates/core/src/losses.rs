//! Training objectives and their gradients.
//!
//! Per-ray terms return per-ray upstream gradients; plane regularizers
//! accumulate `scale * dL/dθ` straight into a gradient buffer.

use serde::{Deserialize, Serialize};

use crate::plane_field::{FieldKind, PlaneGrid, PlaneSet};
use crate::real::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthMode {
    /// Metric depth maps supervised with a Huber loss.
    #[default]
    Stereo,
    /// Relative depth maps supervised after a per-batch scale/shift fit.
    Monocular,
    None,
}

/// How the disentangle term combines its per-entry penalties.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Mean over entries; the pull per entry shrinks with plane size.
    #[default]
    Mean,
    /// Sum over entries; each entry feels the full `lambda_de` pull, which
    /// at the default weight also holds back genuinely moving content.
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_d: f64,
    pub lambda_tv: f64,
    pub lambda_ts: f64,
    pub lambda_de: f64,
    pub huber_delta: f64,
    pub depth_mode: DepthMode,
    pub de_reduction: Reduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_d: 1.0,
            lambda_tv: 0.001,
            lambda_ts: 0.05,
            lambda_de: 0.001,
            huber_delta: 0.2,
            depth_mode: DepthMode::Stereo,
            de_reduction: Reduction::Mean,
        }
    }
}

/// Mean squared color error and its per-ray gradient.
pub fn rgb_loss<T: Real>(pred: &[[T; 3]], gt: &[[T; 3]]) -> (f64, Vec<[T; 3]>) {
    assert_eq!(pred.len(), gt.len());
    let n = pred.len().max(1) as f64;
    let scale = T::lit(2.0 / n);
    let mut sum = 0.0;
    let grads = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            let d = [p[0] - g[0], p[1] - g[1], p[2] - g[2]];
            sum += d.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>();
            [d[0] * scale, d[1] * scale, d[2] * scale]
        })
        .collect();
    (sum / n, grads)
}

/// Huber value and slope at residual `r`.
pub fn huber(r: f64, delta: f64) -> (f64, f64) {
    if r.abs() <= delta {
        (0.5 * r * r, r)
    } else {
        (delta * (r.abs() - 0.5 * delta), delta * r.signum())
    }
}

/// Mean Huber loss over rays with a valid (positive) target.
pub fn depth_loss<T: Real>(pred: &[T], gt: &[T], delta: f64) -> (f64, Vec<T>) {
    assert_eq!(pred.len(), gt.len());
    let valid = gt.iter().filter(|g| g.as_f64() > 0.0).count();
    let mut grads = vec![T::zero(); pred.len()];
    if valid == 0 {
        return (0.0, grads);
    }
    let n = valid as f64;
    let mut sum = 0.0;
    for ((p, g), d) in pred.iter().zip(gt).zip(grads.iter_mut()) {
        if g.as_f64() > 0.0 {
            let (v, s) = huber(p.as_f64() - g.as_f64(), delta);
            sum += v;
            *d = T::lit(s / n);
        }
    }
    (sum / n, grads)
}

fn static_planes<T>(planes: &PlaneSet<T>) -> impl Iterator<Item = (usize, usize)> + '_ {
    planes.levels.iter().enumerate().flat_map(|(l, lvl)| {
        lvl.planes
            .iter()
            .enumerate()
            .filter(|(_, p)| p.axis_pair.kind() == FieldKind::Static)
            .map(move |(k, _)| (l, k))
    })
}

fn dynamic_planes<T>(planes: &PlaneSet<T>) -> impl Iterator<Item = (usize, usize)> + '_ {
    planes.levels.iter().enumerate().flat_map(|(l, lvl)| {
        lvl.planes
            .iter()
            .enumerate()
            .filter(|(_, p)| p.axis_pair.kind() == FieldKind::Dynamic)
            .map(move |(k, _)| (l, k))
    })
}

/// Mean of squared neighbor differences along axis `a` (when `along_a`) or
/// `b`; adds `scale * gradient` to `grad` if given.
fn smoothness<T: Real>(p: &PlaneGrid<T>, along_a: bool, grad: Option<&mut [T]>, scale: f64) -> f64 {
    let (ra, rb, d) = (p.res_a, p.res_b, p.feature_dim);
    let pairs = if along_a { (ra - 1) * rb } else { ra * (rb - 1) };
    if pairs == 0 {
        return 0.0;
    }
    let count = (pairs * d) as f64;
    let step = if along_a { rb * d } else { d };
    let mut sum = 0.0;
    let coef = T::lit(2.0 * scale / count);
    let mut grad = grad;
    for i in 0..ra {
        for j in 0..rb {
            if (along_a && i + 1 == ra) || (!along_a && j + 1 == rb) {
                continue;
            }
            let o = p.node_offset(i, j);
            for f in 0..d {
                let diff = p.values[o + step + f] - p.values[o + f];
                sum += diff.as_f64() * diff.as_f64();
                if let Some(g) = grad.as_deref_mut() {
                    g[o + step + f] += coef * diff;
                    g[o + f] -= coef * diff;
                }
            }
        }
    }
    sum / count
}

/// Sum over static planes of the mean squared neighbor difference along
/// both plane axes.
pub fn tv_loss<T: Real>(planes: &PlaneSet<T>, mut grads: Option<&mut PlaneSet<T>>, scale: f64) -> f64 {
    let mut total = 0.0;
    for (l, k) in static_planes(planes) {
        let p = &planes.levels[l].planes[k];
        for along_a in [true, false] {
            let g = grads
                .as_deref_mut()
                .map(|g| g.levels[l].planes[k].values.as_mut_slice());
            total += smoothness(p, along_a, g, scale);
        }
    }
    total
}

/// Sum over dynamic planes of the mean squared difference between
/// neighboring time steps.
pub fn time_smoothness_loss<T: Real>(planes: &PlaneSet<T>, mut grads: Option<&mut PlaneSet<T>>, scale: f64) -> f64 {
    let mut total = 0.0;
    for (l, k) in dynamic_planes(planes) {
        let p = &planes.levels[l].planes[k];
        let g = grads
            .as_deref_mut()
            .map(|g| g.levels[l].planes[k].values.as_mut_slice());
        // the second plane axis is time
        total += smoothness(p, false, g, scale);
    }
    total
}

/// Number of values stored in dynamic planes.
pub fn dynamic_entries<T>(planes: &PlaneSet<T>) -> usize {
    dynamic_planes(planes)
        .map(|(l, k)| planes.levels[l].planes[k].values.len())
        .sum()
}

/// Mean of `|1 - g|` over every dynamic-plane entry.
pub fn disentangle_loss<T: Real>(planes: &PlaneSet<T>, mut grads: Option<&mut PlaneSet<T>>, scale: f64) -> f64 {
    let count = dynamic_entries(planes);
    if count == 0 {
        return 0.0;
    }
    let coef = scale / count as f64;
    let mut sum = 0.0;
    for (l, k) in dynamic_planes(planes) {
        let vals = &planes.levels[l].planes[k].values;
        let mut g = grads
            .as_deref_mut()
            .map(|g| g.levels[l].planes[k].values.as_mut_slice());
        for (i, v) in vals.iter().enumerate() {
            let r = v.as_f64() - 1.0;
            sum += r.abs();
            if let Some(g) = g.as_deref_mut() {
                if r != 0.0 {
                    g[i] += T::lit(coef * r.signum());
                }
            }
        }
    }
    sum / count as f64
}

/// Least-squares scale and shift mapping rendered depth onto a relative depth map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonoAlignment {
    pub eta: f64,
    pub eps: f64,
    /// Rendered depth had (numerically) zero variance.
    pub degenerate: bool,
}

pub fn mono_align(pred: &[f64], mono: &[f64]) -> MonoAlignment {
    assert_eq!(pred.len(), mono.len());
    let n = pred.len();
    if n == 0 {
        return MonoAlignment {
            eta: 0.0,
            eps: 0.0,
            degenerate: true,
        };
    }
    let mp = pred.iter().sum::<f64>() / n as f64;
    let mm = mono.iter().sum::<f64>() / n as f64;
    let (mut var, mut cov, mut sq) = (0.0, 0.0, 0.0);
    for (p, m) in pred.iter().zip(mono) {
        var += (p - mp) * (p - mp);
        cov += (p - mp) * (m - mm);
        sq += p * p;
    }
    if var <= 1e-14 * sq.max(f64::MIN_POSITIVE) {
        return MonoAlignment {
            eta: 0.0,
            eps: mm,
            degenerate: true,
        };
    }
    let eta = cov / var;
    MonoAlignment {
        eta,
        eps: mm - eta * mp,
        degenerate: false,
    }
}

/// Mean squared residual after alignment, over rays with a valid (positive)
/// relative depth. The fit is held fixed when differentiating; since it is
/// the least-squares optimum the result is the exact gradient.
pub fn mono_loss<T: Real>(pred: &[T], mono: &[T]) -> (f64, Vec<T>, MonoAlignment) {
    assert_eq!(pred.len(), mono.len());
    let idx: Vec<usize> = (0..pred.len()).filter(|i| mono[*i].as_f64() > 0.0).collect();
    let p: Vec<f64> = idx.iter().map(|i| pred[*i].as_f64()).collect();
    let m: Vec<f64> = idx.iter().map(|i| mono[*i].as_f64()).collect();
    let fit = mono_align(&p, &m);
    let mut grads = vec![T::zero(); pred.len()];
    if idx.is_empty() {
        return (0.0, grads, fit);
    }
    let n = idx.len() as f64;
    let mut sum = 0.0;
    for (k, i) in idx.iter().enumerate() {
        let r = fit.eta * p[k] + fit.eps - m[k];
        sum += r * r;
        grads[*i] = T::lit(2.0 * fit.eta * r / n);
    }
    (sum / n, grads, fit)
}

/// Per-ray quantities of one batch.
#[derive(Clone, Copy, Debug)]
pub struct RayTerms<'a, T> {
    pub pred_rgb: &'a [[T; 3]],
    pub gt_rgb: &'a [[T; 3]],
    pub pred_depth: &'a [T],
    /// Metric or relative depth per ray (non-positive = missing); may be empty
    /// when depth supervision is off.
    pub target_depth: &'a [T],
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub rgb: f64,
    pub depth: f64,
    pub tv: f64,
    pub ts: f64,
    pub de: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RayGrads<T> {
    pub d_rgb: Vec<[T; 3]>,
    pub d_depth: Vec<T>,
}

/// Weighted sum of all terms. Per-ray gradients are returned; plane
/// regularizer gradients are added into `plane_grads`.
pub fn total_loss<T: Real>(
    rays: &RayTerms<'_, T>,
    planes: &PlaneSet<T>,
    cfg: &LossConfig,
    mut plane_grads: Option<&mut PlaneSet<T>>,
) -> (LossBreakdown, RayGrads<T>) {
    let (rgb, d_rgb) = rgb_loss(rays.pred_rgb, rays.gt_rgb);
    let n = rays.pred_rgb.len();
    let (depth, mut d_depth) = match cfg.depth_mode {
        DepthMode::None => (0.0, vec![T::zero(); n]),
        _ if rays.target_depth.is_empty() => (0.0, vec![T::zero(); n]),
        DepthMode::Stereo => depth_loss(rays.pred_depth, rays.target_depth, cfg.huber_delta),
        DepthMode::Monocular => {
            let (v, g, _) = mono_loss(rays.pred_depth, rays.target_depth);
            (v, g)
        }
    };
    let ld = T::lit(cfg.lambda_d);
    d_depth.iter_mut().for_each(|g| *g *= ld);
    let tv = tv_loss(planes, plane_grads.as_deref_mut(), cfg.lambda_tv);
    let ts = time_smoothness_loss(planes, plane_grads.as_deref_mut(), cfg.lambda_ts);
    let de_scale = match cfg.de_reduction {
        Reduction::Sum => dynamic_entries(planes) as f64,
        Reduction::Mean => 1.0,
    };
    let de = de_scale * disentangle_loss(planes, plane_grads.as_deref_mut(), cfg.lambda_de * de_scale);
    let total = rgb + cfg.lambda_d * depth + cfg.lambda_tv * tv + cfg.lambda_ts * ts + cfg.lambda_de * de;
    (
        LossBreakdown {
            rgb,
            depth,
            tv,
            ts,
            de,
            total,
        },
        RayGrads { d_rgb, d_depth },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plane_field::{AxisPair, FusionMode, PlaneConfig};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_planes(seed: u64) -> PlaneSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = PlaneConfig {
            resolutions: vec![3, 5],
            time_res: 4,
            feature_dim: 2,
            fusion: FusionMode::Product,
            static_init: [0.9, 1.1],
        };
        let mut p = PlaneSet::init(&cfg, 4, &mut rng).unwrap();
        for g in p.planes_mut() {
            g.values.iter_mut().for_each(|v| *v = rng.gen_range(0.5..1.5));
        }
        p
    }

    #[test]
    fn rgb_examples() {
        let (v, g) = rgb_loss(&[[0.5f64, 0.2, 0.1]], &[[0.5, 0.2, 0.1]]);
        assert_eq!(v, 0.0);
        assert_eq!(g[0], [0.0; 3]);
        let (v, _) = rgb_loss(&[[0.6f64, 0.0, 0.0]], &[[0.5, 0.0, 0.0]]);
        assert!((v - 0.01).abs() < 1e-15);
    }

    #[test]
    fn rgb_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p: Vec<[f64; 3]> = (0..37).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let g: Vec<[f64; 3]> = (0..37).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let mut s = 0.0;
        for i in 0..37 {
            for c in 0..3 {
                s += (p[i][c] - g[i][c]).powi(2);
            }
        }
        assert!((rgb_loss(&p, &g).0 - s / 37.0).abs() < 1e-14);
    }

    #[test]
    fn huber_branches() {
        let d = 0.2;
        assert_eq!(huber(0.0, d).0, 0.0);
        assert!((huber(2.0 * d, d).0 - 1.5 * d * d).abs() < 1e-15);
        let inner = huber(d, d).1;
        let outer = huber(d + 1e-12, d).1;
        assert!((inner - d).abs() < 1e-15 && (outer - d).abs() < 1e-15);
        assert!((huber(-d, d).1 + d).abs() < 1e-15);
    }

    #[test]
    fn depth_loss_skips_invalid_targets() {
        let (v, g) = depth_loss(&[1.0f64, 5.0], &[1.1, 0.0], 0.2);
        assert!((v - 0.5 * 0.01).abs() < 1e-12);
        assert_eq!(g[1], 0.0);
    }

    fn tv_oracle(p: &PlaneGrid<f64>) -> f64 {
        let d = p.feature_dim;
        let (mut sa, mut na, mut sb, mut nb) = (0.0, 0, 0.0, 0);
        for i in 0..p.res_a {
            for j in 0..p.res_b {
                for f in 0..d {
                    let v = p.node(i, j)[f];
                    if i + 1 < p.res_a {
                        sa += (p.node(i + 1, j)[f] - v).powi(2);
                        na += 1;
                    }
                    if j + 1 < p.res_b {
                        sb += (p.node(i, j + 1)[f] - v).powi(2);
                        nb += 1;
                    }
                }
            }
        }
        sa / na as f64 + sb / nb as f64
    }

    #[test]
    fn tv_of_two_by_two_plane() {
        let mut p = PlaneSet::<f64>::constant(&[2], 2, 1, FusionMode::Product, 1.0).unwrap();
        let xy = &mut p.levels[0].planes[0];
        assert_eq!(xy.axis_pair, AxisPair::XY);
        xy.values = vec![0.0, 1.0, 0.0, 1.0];
        let expected = tv_oracle(&p.levels[0].planes[0]);
        assert_eq!(expected, 1.0);
        assert!((tv_loss(&p, None, 1.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn tv_matches_neighbor_loop_and_ignores_dynamic_planes() {
        let mut p = random_planes(1);
        let oracle: f64 = p
            .planes()
            .filter(|g| g.axis_pair.kind() == FieldKind::Static)
            .map(tv_oracle)
            .sum();
        let v = tv_loss(&p, None, 1.0);
        assert!((v - oracle).abs() < 1e-12);
        for g in p.planes_mut().filter(|g| g.axis_pair.kind() == FieldKind::Dynamic) {
            g.values.iter_mut().for_each(|v| *v *= 3.0);
        }
        assert_eq!(tv_loss(&p, None, 1.0), v);
    }

    #[test]
    fn time_smoothness_single_jump() {
        let mut p = PlaneSet::<f64>::constant(&[3], 4, 2, FusionMode::Product, 1.0).unwrap();
        assert_eq!(time_smoothness_loss(&p, None, 1.0), 0.0);
        // XT plane is 3 x 4 with 2 features; change a single entry at t = 3
        let xt = &mut p.levels[0].planes[3];
        assert_eq!(xt.axis_pair, AxisPair::XT);
        let o = xt.node_offset(1, 3);
        xt.values[o] = 2.0;
        let expected = 1.0 / (3.0 * 3.0 * 2.0);
        assert!((time_smoothness_loss(&p, None, 1.0) - expected).abs() < 1e-15);
        // static planes are ignored
        p.levels[0].planes[0].values[0] = 7.0;
        assert!((time_smoothness_loss(&p, None, 1.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn disentangle_examples() {
        let mut p = PlaneSet::<f64>::constant(&[3, 4], 5, 2, FusionMode::Product, 1.0).unwrap();
        assert_eq!(disentangle_loss(&p, None, 1.0), 0.0);
        for g in p.planes_mut().filter(|g| g.axis_pair.kind() == FieldKind::Dynamic) {
            g.values.iter_mut().for_each(|v| *v = 1.5);
        }
        assert!((disentangle_loss(&p, None, 1.0) - 0.5).abs() < 1e-15);
        let p = random_planes(2);
        let mut s = 0.0;
        let mut n = 0;
        for g in p.planes().filter(|g| g.axis_pair.kind() == FieldKind::Dynamic) {
            for v in &g.values {
                s += (1.0 - v).abs();
                n += 1;
            }
        }
        assert!((disentangle_loss(&p, None, 1.0) - s / n as f64).abs() < 1e-14);
    }

    fn fd_check(loss: fn(&PlaneSet<f64>, Option<&mut PlaneSet<f64>>, f64) -> f64, seed: u64) {
        let mut p = random_planes(seed);
        let mut g = p.zeros_like();
        loss(&p, Some(&mut g), 1.0);
        let h = 1e-5;
        let n_planes = p.planes().count();
        for k in 0..n_planes {
            let len = p.planes().nth(k).unwrap().values.len();
            for idx in 0..len {
                let bump = |p: &mut PlaneSet<f64>, d: f64| p.planes_mut().nth(k).unwrap().values[idx] += d;
                bump(&mut p, h);
                let fp = loss(&p, None, 1.0);
                bump(&mut p, -2.0 * h);
                let fm = loss(&p, None, 1.0);
                bump(&mut p, h);
                let numeric = (fp - fm) / (2.0 * h);
                let a = g.planes().nth(k).unwrap().values[idx];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-4 || (a - numeric).abs() < 1e-9, "plane {k} idx {idx}: {a} vs {numeric}");
            }
        }
    }

    #[test]
    fn tv_gradient_matches_finite_differences() {
        fd_check(tv_loss::<f64>, 3);
    }

    #[test]
    fn time_smoothness_gradient_matches_finite_differences() {
        fd_check(time_smoothness_loss::<f64>, 4);
    }

    #[test]
    fn disentangle_gradient_matches_finite_differences() {
        fd_check(disentangle_loss::<f64>, 5);
    }

    #[test]
    fn mono_align_examples() {
        let a = mono_align(&[1.0, 2.0], &[2.0, 4.0]);
        assert!((a.eta - 2.0).abs() < 1e-14 && a.eps.abs() < 1e-14);
        let d = [0.3, 1.7, 0.9];
        let a = mono_align(&d, &d);
        assert!((a.eta - 1.0).abs() < 1e-14 && a.eps.abs() < 1e-14);
        let a = mono_align(&[2.0, 2.0, 2.0], &[1.0, 2.0, 6.0]);
        assert!(a.degenerate && a.eta == 0.0 && (a.eps - 3.0).abs() < 1e-15);
    }

    /// Uncentered normal equations solved by Cramer's rule.
    fn normal_equations(p: &[f64], m: &[f64]) -> (f64, f64) {
        let n = p.len() as f64;
        let (sp, sm) = (p.iter().sum::<f64>(), m.iter().sum::<f64>());
        let spp: f64 = p.iter().map(|v| v * v).sum();
        let spm: f64 = p.iter().zip(m).map(|(a, b)| a * b).sum();
        let det = spp * n - sp * sp;
        ((spm * n - sp * sm) / det, (spp * sm - sp * spm) / det)
    }

    #[test]
    fn mono_align_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p: Vec<f64> = (0..64).map(|_| rng.gen_range(0.5..2.0)).collect();
        let m: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (eta, eps) = normal_equations(&p, &m);
        let a = mono_align(&p, &m);
        assert!((a.eta - eta).abs() < 1e-8 && (a.eps - eps).abs() < 1e-8);
        let (loss, _, _) = mono_loss(&p, &m);
        let oracle: f64 = p.iter().zip(&m).map(|(a, b)| (eta * a + eps - b).powi(2)).sum::<f64>() / 64.0;
        assert!((loss - oracle).abs() < 1e-12);
    }

    #[test]
    fn mono_loss_vanishes_on_affine_targets() {
        let p = [0.4, 1.1, 2.3, 0.8];
        let m: Vec<f64> = p.iter().map(|v| 3.0 * v - 0.7).collect();
        assert!(mono_loss(&p, &m).0 < 1e-24);
    }

    #[test]
    fn mono_loss_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut p: Vec<f64> = (0..16).map(|_| rng.gen_range(0.5..2.0)).collect();
        let m: Vec<f64> = (0..16).map(|_| rng.gen_range(0.1..1.0)).collect();
        let (_, g, _) = mono_loss(&p, &m);
        let h = 1e-6;
        for i in 0..16 {
            p[i] += h;
            let fp = mono_loss(&p, &m).0;
            p[i] -= 2.0 * h;
            let fm = mono_loss(&p, &m).0;
            p[i] += h;
            let numeric = (fp - fm) / (2.0 * h);
            assert!((g[i] - numeric).abs() / g[i].abs().max(1e-8) < 1e-4);
        }
    }

    fn batch(seed: u64, n: usize) -> (Vec<[f64; 3]>, Vec<[f64; 3]>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = |rng: &mut ChaCha8Rng| (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect::<Vec<_>>();
        let pr = c(&mut rng);
        let gt = c(&mut rng);
        let pd = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let td = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        (pr, gt, pd, td)
    }

    #[test]
    fn zero_lambdas_reduce_to_rgb() {
        let (pr, gt, pd, td) = batch(8, 20);
        let p = random_planes(8);
        let cfg = LossConfig {
            lambda_d: 0.0,
            lambda_tv: 0.0,
            lambda_ts: 0.0,
            lambda_de: 0.0,
            ..Default::default()
        };
        let rays = RayTerms {
            pred_rgb: &pr,
            gt_rgb: &gt,
            pred_depth: &pd,
            target_depth: &td,
        };
        let (b, _) = total_loss(&rays, &p, &cfg, None);
        assert_eq!(b.total, rgb_loss(&pr, &gt).0);
    }

    #[test]
    fn total_is_hand_summed_terms() {
        let (pr, gt, pd, td) = batch(9, 20);
        let p = random_planes(9);
        let cfg = LossConfig::default();
        let rays = RayTerms {
            pred_rgb: &pr,
            gt_rgb: &gt,
            pred_depth: &pd,
            target_depth: &td,
        };
        let (b, _) = total_loss(&rays, &p, &cfg, None);
        let hand = rgb_loss(&pr, &gt).0
            + 1.0 * depth_loss(&pd, &td, 0.2).0
            + 0.001 * tv_loss(&p, None, 1.0)
            + 0.05 * time_smoothness_loss(&p, None, 1.0)
            + 0.001 * disentangle_loss(&p, None, 1.0);
        assert!((b.total - hand).abs() < 1e-14);
        let mono = LossConfig {
            depth_mode: DepthMode::Monocular,
            ..cfg
        };
        let (b, _) = total_loss(&rays, &p, &mono, None);
        assert!((b.depth - mono_loss(&pd, &td).0).abs() < 1e-15);
        let sum = LossConfig {
            de_reduction: Reduction::Sum,
            ..LossConfig::default()
        };
        let (b, _) = total_loss(&rays, &p, &sum, None);
        let n = dynamic_entries(&p) as f64;
        assert!((b.de - n * disentangle_loss(&p, None, 1.0)).abs() < 1e-9 * n);
    }

    #[test]
    fn perfect_fit_is_zero() {
        let (pr, _, pd, _) = batch(10, 8);
        let p = PlaneSet::<f64>::constant(&[3], 4, 2, FusionMode::Product, 1.0).unwrap();
        let rays = RayTerms {
            pred_rgb: &pr,
            gt_rgb: &pr,
            pred_depth: &pd,
            target_depth: &pd,
        };
        let (b, _) = total_loss(&rays, &p, &LossConfig::default(), None);
        assert_eq!(b.total, 0.0);
    }

    proptest! {
        #[test]
        fn mono_loss_is_affine_invariant(
            seed in 0u64..500, c in 0.1f64..10.0, d in -5.0f64..5.0
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p: Vec<f64> = (0..12).map(|_| rng.gen_range(0.5..2.0)).collect();
            let m: Vec<f64> = (0..12).map(|_| rng.gen_range(0.1..1.0)).collect();
            let q: Vec<f64> = p.iter().map(|v| c * v + d).collect();
            let (a, b) = (mono_loss(&p, &m).0, mono_loss(&q, &m).0);
            prop_assert!((a - b).abs() <= 1e-6 * a + 1e-12);
        }

        #[test]
        fn losses_are_non_negative(seed in 0u64..500) {
            let (pr, gt, pd, td) = batch(seed, 9);
            let p = random_planes(seed);
            let rays = RayTerms { pred_rgb: &pr, gt_rgb: &gt, pred_depth: &pd, target_depth: &td };
            let (b, _) = total_loss(&rays, &p, &LossConfig::default(), None);
            prop_assert!(b.rgb >= 0.0 && b.depth >= 0.0 && b.tv >= 0.0 && b.ts >= 0.0 && b.de >= 0.0);
        }

        #[test]
        fn total_is_linear_in_each_lambda(seed in 0u64..200, a in 0.0f64..2.0, k in 0usize..4) {
            let (pr, gt, pd, td) = batch(seed, 6);
            let p = random_planes(seed);
            let rays = RayTerms { pred_rgb: &pr, gt_rgb: &gt, pred_depth: &pd, target_depth: &td };
            let at = |v: f64| {
                let mut cfg = LossConfig::default();
                match k {
                    0 => cfg.lambda_d = v,
                    1 => cfg.lambda_tv = v,
                    2 => cfg.lambda_ts = v,
                    _ => cfg.lambda_de = v,
                }
                total_loss(&rays, &p, &cfg, None).0.total
            };
            let (f0, f1, fa) = (at(0.0), at(1.0), at(a));
            prop_assert!((fa - (f0 + a * (f1 - f0))).abs() < 1e-12);
        }
    }
}
