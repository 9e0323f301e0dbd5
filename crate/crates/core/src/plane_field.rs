//! Multi-resolution orthogonal feature planes.
//!
//! A point `(x, y, z, τ)` in the unit hypercube is projected onto six planes
//! per resolution level: three space planes (XY, YZ, XZ) forming the static
//! field and three space-time planes (XT, YT, ZT) forming the dynamic field.
//! Each projection is bilinearly interpolated and the resulting feature
//! vectors are fused by element-wise multiplication.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::Real;

#[derive(Debug, Error, PartialEq)]
pub enum PlaneError {
    #[error("plane {axis:?} needs at least 2x2 nodes, got {res_a}x{res_b}")]
    TooSmall {
        axis: AxisPair,
        res_a: usize,
        res_b: usize,
    },
    #[error("feature dimension must be positive")]
    ZeroFeatureDim,
    #[error("at least one resolution level is required")]
    NoLevels,
    #[error("parameter blob for {name} has {actual} values, expected {expected}")]
    ShapeMismatch {
        name: String,
        expected: usize,
        actual: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AxisPair {
    XY,
    YZ,
    XZ,
    XT,
    YT,
    ZT,
}

impl AxisPair {
    /// Storage and serialization order within a level.
    pub const ALL: [AxisPair; 6] = [
        AxisPair::XY,
        AxisPair::YZ,
        AxisPair::XZ,
        AxisPair::XT,
        AxisPair::YT,
        AxisPair::ZT,
    ];

    /// Indices into `[x, y, z, τ]` for the two plane axes.
    pub fn axes(self) -> (usize, usize) {
        match self {
            AxisPair::XY => (0, 1),
            AxisPair::YZ => (1, 2),
            AxisPair::XZ => (0, 2),
            AxisPair::XT => (0, 3),
            AxisPair::YT => (1, 3),
            AxisPair::ZT => (2, 3),
        }
    }

    pub fn kind(self) -> FieldKind {
        match self {
            AxisPair::XY | AxisPair::YZ | AxisPair::XZ => FieldKind::Static,
            AxisPair::XT | AxisPair::YT | AxisPair::ZT => FieldKind::Dynamic,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AxisPair::XY => "xy",
            AxisPair::YZ => "yz",
            AxisPair::XZ => "xz",
            AxisPair::XT => "xt",
            AxisPair::YT => "yt",
            AxisPair::ZT => "zt",
        }
    }
}

/// Static (space planes) or dynamic (space-time planes) half of the field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Static,
    Dynamic,
}

/// How per-level products are combined before the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// One product over every plane of every level (width `D`).
    #[default]
    Product,
    /// Per-level products concatenated (width `L * D`).
    Concat,
}

/// Four lattice nodes touched by a bilinear query and their weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil<T> {
    /// Offsets (in values, not nodes) of nodes (i0,j0), (i0,j1), (i1,j0), (i1,j1).
    pub offsets: [usize; 4],
    pub weights: [T; 4],
}

/// A dense `res_a x res_b x D` grid of feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneGrid<T> {
    pub axis_pair: AxisPair,
    pub res_a: usize,
    pub res_b: usize,
    pub feature_dim: usize,
    /// Row-major over `(a, b)`, feature index fastest.
    pub values: Vec<T>,
}

impl<T: Real> PlaneGrid<T> {
    pub fn filled(
        axis_pair: AxisPair,
        res_a: usize,
        res_b: usize,
        feature_dim: usize,
        fill: T,
    ) -> Result<Self, PlaneError> {
        if res_a < 2 || res_b < 2 {
            return Err(PlaneError::TooSmall {
                axis: axis_pair,
                res_a,
                res_b,
            });
        }
        if feature_dim == 0 {
            return Err(PlaneError::ZeroFeatureDim);
        }
        Ok(Self {
            axis_pair,
            res_a,
            res_b,
            feature_dim,
            values: vec![fill; res_a * res_b * feature_dim],
        })
    }

    #[inline]
    pub fn node_offset(&self, i: usize, j: usize) -> usize {
        (i * self.res_b + j) * self.feature_dim
    }

    pub fn node(&self, i: usize, j: usize) -> &[T] {
        let o = self.node_offset(i, j);
        &self.values[o..o + self.feature_dim]
    }

    pub fn node_mut(&mut self, i: usize, j: usize) -> &mut [T] {
        let o = self.node_offset(i, j);
        let d = self.feature_dim;
        &mut self.values[o..o + d]
    }

    /// Bilinear stencil for normalized coordinates; inputs are clamped to `[0, 1]`.
    pub fn stencil(&self, u: T, w: T) -> Stencil<T> {
        let (i0, fu) = cell_coord(u, self.res_a);
        let (j0, fw) = cell_coord(w, self.res_b);
        let one = T::one();
        Stencil {
            offsets: [
                self.node_offset(i0, j0),
                self.node_offset(i0, j0 + 1),
                self.node_offset(i0 + 1, j0),
                self.node_offset(i0 + 1, j0 + 1),
            ],
            weights: [
                (one - fu) * (one - fw),
                (one - fu) * fw,
                fu * (one - fw),
                fu * fw,
            ],
        }
    }

    pub fn gather(&self, s: &Stencil<T>, out: &mut [T]) {
        let d = self.feature_dim;
        let v = &self.values;
        let [o0, o1, o2, o3] = s.offsets;
        let [w0, w1, w2, w3] = s.weights;
        let (v0, v1, v2, v3) = (&v[o0..o0 + d], &v[o1..o1 + d], &v[o2..o2 + d], &v[o3..o3 + d]);
        for (k, o) in out[..d].iter_mut().enumerate() {
            *o = w0 * v0[k] + w1 * v1[k] + w2 * v2[k] + w3 * v3[k];
        }
    }

    /// Adds `upstream` spread over the stencil nodes into `grad` (same layout as `values`).
    pub fn scatter(&self, s: &Stencil<T>, upstream: &[T], grad: &mut [T]) {
        let d = self.feature_dim;
        for (&o, &w) in s.offsets.iter().zip(s.weights.iter()) {
            if w == T::zero() {
                continue;
            }
            for (g, &u) in grad[o..o + d].iter_mut().zip(&upstream[..d]) {
                *g += w * u;
            }
        }
    }

    pub fn query_into(&self, u: T, w: T, out: &mut [T]) {
        let s = self.stencil(u, w);
        self.gather(&s, out);
    }

    pub fn bilinear_query(&self, u: T, w: T) -> Vec<T> {
        let mut out = vec![T::zero(); self.feature_dim];
        self.query_into(u, w, &mut out);
        out
    }
}

/// Maps a normalized coordinate to `(cell index, fractional offset)`.
///
/// Coordinates within a few ulps of a lattice node snap onto it so node
/// queries reproduce the stored values exactly.
#[inline]
fn cell_coord<T: Real>(u: T, res: usize) -> (usize, T) {
    let span = T::lit((res - 1) as f64);
    let u = if u.is_nan() {
        T::zero()
    } else {
        u.max(T::zero()).min(T::one())
    };
    let mut x = u * span;
    let r = x.round();
    if (x - r).abs() <= T::lit(4.0) * T::epsilon() * span {
        x = r;
    }
    let i0 = x.floor().to_usize().unwrap_or(0).min(res - 2);
    (i0, x - T::lit(i0 as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlaneConfig {
    /// Spatial node count per level, coarse to fine.
    pub resolutions: Vec<usize>,
    /// Temporal node count; 0 means "number of training frames".
    pub time_res: usize,
    pub feature_dim: usize,
    pub fusion: FusionMode,
    /// Static planes start uniform in this range.
    pub static_init: [f64; 2],
}

impl Default for PlaneConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![8, 16, 32, 64],
            time_res: 0,
            feature_dim: 16,
            fusion: FusionMode::Product,
            static_init: [0.9, 1.1],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlaneLevel<T> {
    /// Indexed in [`AxisPair::ALL`] order.
    pub planes: [PlaneGrid<T>; 6],
}

/// Learnable static + dynamic planes across all levels.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneSet<T> {
    pub levels: Vec<PlaneLevel<T>>,
    pub feature_dim: usize,
    pub fusion: FusionMode,
}

impl<T: Real> PlaneSet<T> {
    /// Every plane filled with `fill`.
    pub fn constant(
        resolutions: &[usize],
        time_res: usize,
        feature_dim: usize,
        fusion: FusionMode,
        fill: T,
    ) -> Result<Self, PlaneError> {
        if resolutions.is_empty() {
            return Err(PlaneError::NoLevels);
        }
        let mut levels = Vec::with_capacity(resolutions.len());
        for &n in resolutions {
            let mk = |axis: AxisPair| {
                let res_b = if axis.kind() == FieldKind::Dynamic {
                    time_res
                } else {
                    n
                };
                PlaneGrid::filled(axis, n, res_b, feature_dim, fill)
            };
            levels.push(PlaneLevel {
                planes: [
                    mk(AxisPair::XY)?,
                    mk(AxisPair::YZ)?,
                    mk(AxisPair::XZ)?,
                    mk(AxisPair::XT)?,
                    mk(AxisPair::YT)?,
                    mk(AxisPair::ZT)?,
                ],
            });
        }
        Ok(Self {
            levels,
            feature_dim,
            fusion,
        })
    }

    /// Static planes uniform in `cfg.static_init`, dynamic planes exactly 1.
    pub fn init<R: Rng + ?Sized>(
        cfg: &PlaneConfig,
        time_res: usize,
        rng: &mut R,
    ) -> Result<Self, PlaneError> {
        let mut set = Self::constant(
            &cfg.resolutions,
            time_res,
            cfg.feature_dim,
            cfg.fusion,
            T::one(),
        )?;
        let [lo, hi] = cfg.static_init;
        for plane in set.planes_mut() {
            if plane.axis_pair.kind() == FieldKind::Static {
                for v in plane.values.iter_mut() {
                    *v = T::lit(rng.gen_range(lo..=hi));
                }
            }
        }
        Ok(set)
    }

    /// Same shapes with every value zero; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(T::zero());
        z
    }

    pub fn fill(&mut self, v: T) {
        for p in self.planes_mut() {
            p.values.iter_mut().for_each(|x| *x = v);
        }
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Width of the fused feature handed to the decoder.
    pub fn feature_width(&self) -> usize {
        match self.fusion {
            FusionMode::Product => self.feature_dim,
            FusionMode::Concat => self.feature_dim * self.levels.len(),
        }
    }

    /// Planes in level-major, [`AxisPair::ALL`] order.
    pub fn planes(&self) -> impl Iterator<Item = &PlaneGrid<T>> {
        self.levels.iter().flat_map(|l| l.planes.iter())
    }

    pub fn planes_mut(&mut self) -> impl Iterator<Item = &mut PlaneGrid<T>> {
        self.levels.iter_mut().flat_map(|l| l.planes.iter_mut())
    }

    pub fn num_params(&self) -> usize {
        self.planes().map(|p| p.values.len()).sum()
    }

    /// Adds `other` into `self` element-wise (shapes must match).
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.planes_mut().zip(other.planes()) {
            for (x, y) in a.values.iter_mut().zip(b.values.iter()) {
                *x += *y;
            }
        }
    }

    pub fn view(&self) -> PlaneView<'_, T> {
        PlaneView {
            set: self,
            forced: None,
        }
    }

    /// A query view in which `which` planes behave as constant 1.
    pub fn force_field_to_identity(&self, which: FieldKind) -> PlaneView<'_, T> {
        PlaneView {
            set: self,
            forced: Some(which),
        }
    }
}

/// Per-sample scratch space for fusion and its backward pass.
#[derive(Clone, Debug, Default)]
pub struct FuseScratch<T> {
    queries: Vec<T>,
    stencils: Vec<Stencil<T>>,
    prefix: Vec<T>,
    suffix: Vec<T>,
    others: Vec<T>,
}

/// Read-only query interface over a [`PlaneSet`], optionally forcing one
/// half of the field to the multiplicative identity.
#[derive(Clone, Copy, Debug)]
pub struct PlaneView<'a, T> {
    set: &'a PlaneSet<T>,
    forced: Option<FieldKind>,
}

impl<'a, T: Real> PlaneView<'a, T> {
    pub fn planes(&self) -> &'a PlaneSet<T> {
        self.set
    }

    pub fn forced(&self) -> Option<FieldKind> {
        self.forced
    }

    pub fn feature_width(&self) -> usize {
        self.set.feature_width()
    }

    #[inline]
    fn is_forced(&self, axis: AxisPair) -> bool {
        self.forced == Some(axis.kind())
    }

    /// Fills `scratch.queries` (plane-major, `D` per plane) and stencils.
    fn query_all(&self, p: [T; 4], scratch: &mut FuseScratch<T>) {
        let d = self.set.feature_dim;
        let n = self.set.levels.len() * 6;
        scratch.queries.resize(n * d, T::one());
        scratch.stencils.clear();
        for (k, plane) in self.set.planes().enumerate() {
            let (a, b) = plane.axis_pair.axes();
            let s = plane.stencil(p[a], p[b]);
            let out = &mut scratch.queries[k * d..(k + 1) * d];
            if self.is_forced(plane.axis_pair) {
                out.iter_mut().for_each(|x| *x = T::one());
            } else {
                plane.gather(&s, out);
            }
            scratch.stencils.push(s);
        }
    }

    /// Fused feature at normalized point `p = (x, y, z, τ)`.
    pub fn fuse_into(&self, p: [T; 4], out: &mut [T], scratch: &mut FuseScratch<T>) {
        self.query_all(p, scratch);
        let d = self.set.feature_dim;
        out.iter_mut().for_each(|x| *x = T::one());
        for k in 0..self.set.levels.len() * 6 {
            let q = &scratch.queries[k * d..(k + 1) * d];
            let base = match self.set.fusion {
                FusionMode::Product => 0,
                FusionMode::Concat => (k / 6) * d,
            };
            for (o, &v) in out[base..base + d].iter_mut().zip(q) {
                *o *= v;
            }
        }
    }

    pub fn fuse_features(&self, p: [T; 4]) -> Vec<T> {
        let mut out = vec![T::one(); self.feature_width()];
        self.fuse_into(p, &mut out, &mut FuseScratch::default());
        out
    }

    /// Accumulates `d(loss)/d(plane values)` into `grads` given
    /// `upstream = d(loss)/d(fused feature)`. Forced planes receive nothing.
    pub fn fuse_backward(
        &self,
        p: [T; 4],
        upstream: &[T],
        grads: &mut PlaneSet<T>,
        scratch: &mut FuseScratch<T>,
    ) {
        if upstream.iter().all(|g| *g == T::zero()) {
            return;
        }
        self.query_all(p, scratch);
        self.fuse_backward_queried(upstream, grads, scratch);
    }

    /// [`fuse_backward`](Self::fuse_backward) for a scratch that still holds
    /// the plane queries of the most recent [`fuse_into`](Self::fuse_into).
    pub(crate) fn fuse_backward_queried(
        &self,
        upstream: &[T],
        grads: &mut PlaneSet<T>,
        scratch: &mut FuseScratch<T>,
    ) {
        let d = self.set.feature_dim;
        let (groups, group_len) = match self.set.fusion {
            FusionMode::Product => (1, self.set.levels.len() * 6),
            FusionMode::Concat => (self.set.levels.len(), 6),
        };
        let FuseScratch {
            queries,
            stencils,
            prefix,
            suffix,
            others,
        } = scratch;
        prefix.resize((group_len + 1) * d, T::one());
        suffix.resize((group_len + 1) * d, T::one());
        others.resize(d, T::zero());
        for g in 0..groups {
            let up = match self.set.fusion {
                FusionMode::Product => upstream,
                FusionMode::Concat => &upstream[g * d..(g + 1) * d],
            };
            let first = g * group_len;
            // prefix[m] = product of factors [0, m), suffix[m] = product of [m, len)
            let factors = &queries[first * d..(first + group_len) * d];
            prefix[..d].iter_mut().for_each(|x| *x = T::one());
            for (m, f) in factors.chunks_exact(d).enumerate() {
                let (done, rest) = prefix.split_at_mut((m + 1) * d);
                for ((out, &a), &b) in rest[..d].iter_mut().zip(&done[m * d..]).zip(f) {
                    *out = a * b;
                }
            }
            suffix[group_len * d..].iter_mut().for_each(|x| *x = T::one());
            for (m, f) in factors.chunks_exact(d).enumerate().rev() {
                let (head, tail) = suffix.split_at_mut((m + 1) * d);
                for ((out, &a), &b) in head[m * d..].iter_mut().zip(&tail[..d]).zip(f) {
                    *out = a * b;
                }
            }
            for m in 0..group_len {
                let q = first + m;
                let (level, slot) = (q / 6, q % 6);
                let plane = &self.set.levels[level].planes[slot];
                if self.is_forced(plane.axis_pair) {
                    continue;
                }
                let (pre, suf) = (&prefix[m * d..(m + 1) * d], &suffix[(m + 1) * d..(m + 2) * d]);
                for (((o, &u), &a), &b) in others.iter_mut().zip(&up[..d]).zip(pre).zip(suf) {
                    *o = u * a * b;
                }
                let gplane = &mut grads.levels[level].planes[slot];
                plane.scatter(&stencils[q], others, &mut gplane.values);
            }
        }
    }
}
