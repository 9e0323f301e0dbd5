//! Indicator grid: cached binary occupancy over `(x, y, z, τ)` bins used to
//! skip empty space and stop marching once a ray is saturated.

use bitvec::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::field::{Field, FieldScratch};
use crate::field_mlp::MlpError;
use crate::geometry::Aabb;
use crate::renderer::{Ray, SamplePoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// `(Gx, Gy, Gz, Gt)`; `Gt = 1` is a time-union grid.
    pub dims: [usize; 4],
    pub ema: f64,
    /// Occupancy threshold as `scale * steps / (far - near)`, i.e. the
    /// per-step optical depth below which a cell counts as empty.
    pub threshold_scale: f64,
    pub update_every: usize,
    pub warmup: usize,
    /// Probes per update; `None` means `cells / 32`.
    pub probes: Option<usize>,
    pub enabled: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dims: [64, 64, 64, 8],
            ema: 0.95,
            threshold_scale: 0.01,
            update_every: 16,
            warmup: 256,
            probes: None,
            enabled: true,
        }
    }
}

impl GridConfig {
    pub fn probes_per_update(&self) -> usize {
        self.probes
            .unwrap_or_else(|| (self.dims.iter().product::<usize>() / 32).max(2))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IndicatorGrid {
    dims: [usize; 4],
    density: Vec<f32>,
    bits: BitVec,
    threshold: f32,
    ema: f32,
}

impl IndicatorGrid {
    /// A fully occupied grid whose cached densities sit at `init_density`
    /// (clamped up to `threshold`).
    pub fn new(dims: [usize; 4], threshold: f32, ema: f32, init_density: f32) -> Self {
        assert!(dims.iter().all(|d| *d > 0), "grid dims must be positive");
        let n = dims.iter().product();
        let mut g = Self {
            dims,
            density: vec![init_density.max(threshold); n],
            bits: bitvec![0; n],
            threshold,
            ema,
        };
        g.rebinarize_all();
        g
    }

    /// Rebuilds a grid from persisted parts; bits are derived from densities.
    pub fn from_parts(dims: [usize; 4], density: Vec<f32>, threshold: f32, ema: f32) -> Option<Self> {
        if density.len() != dims.iter().product::<usize>() {
            return None;
        }
        let n = density.len();
        let mut g = Self {
            dims,
            density,
            bits: bitvec![0; n],
            threshold,
            ema,
        };
        g.rebinarize_all();
        Some(g)
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn threshold(&self) -> f32 {
        self.threshold
    }

    pub fn ema(&self) -> f32 {
        self.ema
    }

    pub fn density(&self) -> &[f32] {
        &self.density
    }

    pub fn num_cells(&self) -> usize {
        self.density.len()
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.count_ones()
    }

    pub fn is_occupied(&self, cell: usize) -> bool {
        self.bits[cell]
    }

    fn rebinarize_all(&mut self) {
        for (i, d) in self.density.iter().enumerate() {
            self.bits.set(i, *d >= self.threshold);
        }
    }

    /// Overwrites one cell's cached density (and its bit).
    pub fn set_density(&mut self, cell: usize, value: f32) {
        self.density[cell] = value;
        self.bits.set(cell, value >= self.threshold);
    }

    /// Cell containing normalized `(x, y, z, τ)`; coordinates clamp into range.
    pub fn cell_index(&self, p: [f64; 4]) -> usize {
        let mut idx = 0;
        for a in 0..4 {
            let n = self.dims[a];
            let c = ((p[a] * n as f64).floor().max(0.0) as usize).min(n - 1);
            idx = idx * n + c;
        }
        idx
    }

    pub fn cell_coords(&self, cell: usize) -> [usize; 4] {
        let mut rem = cell;
        let mut c = [0; 4];
        for a in (0..4).rev() {
            c[a] = rem % self.dims[a];
            rem /= self.dims[a];
        }
        c
    }

    /// Normalized lower and upper corners of a cell.
    pub fn cell_box(&self, cell: usize) -> ([f64; 4], [f64; 4]) {
        let c = self.cell_coords(cell);
        let lo = std::array::from_fn(|a| c[a] as f64 / self.dims[a] as f64);
        let hi = std::array::from_fn(|a| (c[a] + 1) as f64 / self.dims[a] as f64);
        (lo, hi)
    }

    pub fn occupied_at(&self, s: &SamplePoint) -> bool {
        let p = s.position;
        self.bits[self.cell_index([p[0], p[1], p[2], s.time])]
    }

    /// Keeps the candidates whose cell bit is set, in order.
    pub fn filter_samples(&self, candidates: &[SamplePoint]) -> Vec<SamplePoint> {
        candidates
            .iter()
            .filter(|s| self.occupied_at(s))
            .copied()
            .collect()
    }

    /// Picks probe cells: half uniformly over the grid, half uniformly over
    /// currently occupied cells.
    pub fn choose_probes<R: Rng + ?Sized>(&self, rng: &mut R, n_probes: usize) -> Vec<usize> {
        let n = self.num_cells();
        let occupied: Vec<usize> = self.bits.iter_ones().collect();
        let mut cells = Vec::with_capacity(n_probes);
        let n_uniform = n_probes - n_probes / 2;
        for _ in 0..n_uniform {
            cells.push(rng.gen_range(0..n));
        }
        for _ in n_uniform..n_probes {
            if occupied.is_empty() {
                cells.push(rng.gen_range(0..n));
            } else {
                cells.push(occupied[rng.gen_range(0..occupied.len())]);
            }
        }
        cells
    }

    /// One update round with an arbitrary density oracle. Returns the probed
    /// cells (with repetition) in probe order.
    pub fn update_with<R, F>(&mut self, rng: &mut R, n_probes: usize, mut sigma: F) -> Result<Vec<usize>, MlpError>
    where
        R: Rng + ?Sized,
        F: FnMut([f64; 4]) -> Result<f64, MlpError>,
    {
        let cells = self.choose_probes(rng, n_probes);
        for &cell in &cells {
            let (lo, hi) = self.cell_box(cell);
            let p: [f64; 4] = std::array::from_fn(|a| lo[a] + rng.gen::<f64>() * (hi[a] - lo[a]));
            let s = sigma(p)? as f32;
            let d = (self.ema * self.density[cell]).max(s);
            self.set_density(cell, d);
        }
        Ok(cells)
    }

    /// Probes the learned field's density and refreshes the cache.
    pub fn update_grid<R: Rng + ?Sized>(
        &mut self,
        field: &Field<'_, f32>,
        rng: &mut R,
        n_probes: usize,
    ) -> Result<Vec<usize>, MlpError> {
        let mut scratch = FieldScratch::default();
        self.update_with(rng, n_probes, |p| {
            let q = [p[0] as f32, p[1] as f32, p[2] as f32, p[3] as f32];
            field
                .query_sigma(q, [0.0, 0.0, 1.0], &mut scratch)
                .map(f64::from)
        })
    }
}

/// Walks uniform steps along a ray, skipping samples outside the scene box
/// or in empty cells, and stops once the caller reports a transmittance
/// below the floor.
#[derive(Clone, Debug)]
pub struct RayMarch<'a> {
    origin: [f64; 3],
    dir: [f64; 3],
    time: f64,
    aabb: Aabb,
    t_near: f64,
    delta: f64,
    next: usize,
    end: usize,
    grid: Option<&'a IndicatorGrid>,
    min_transmittance: f64,
    stopped: bool,
}

impl<'a> RayMarch<'a> {
    pub fn new(
        ray: &Ray,
        aabb: Aabb,
        steps: usize,
        grid: Option<&'a IndicatorGrid>,
        min_transmittance: f64,
    ) -> Self {
        let delta = (ray.t_far - ray.t_near) / steps.max(1) as f64;
        // Only indices whose midpoint can fall inside the box need checking.
        let (next, end) = match aabb.intersect(ray.origin, ray.dir) {
            Some((t0, t1)) if t1 >= ray.t_near && t0 <= ray.t_far => {
                let lo = ((t0 - ray.t_near) / delta - 0.5).floor() - 1.0;
                let hi = ((t1 - ray.t_near) / delta - 0.5).ceil() + 2.0;
                let lo = lo.max(0.0) as usize;
                let hi = (hi.max(0.0) as usize).min(steps);
                (lo, hi)
            }
            _ => (0, 0),
        };
        Self {
            origin: ray.origin,
            dir: ray.dir,
            time: ray.time,
            aabb,
            t_near: ray.t_near,
            delta,
            next,
            end,
            grid,
            min_transmittance,
            stopped: false,
        }
    }

    pub fn step(&self) -> f64 {
        self.delta
    }

    /// Next surviving sample given the transmittance accumulated so far.
    pub fn next_sample(&mut self, transmittance: f64) -> Option<SamplePoint> {
        if self.stopped || transmittance < self.min_transmittance {
            self.stopped = true;
            return None;
        }
        while self.next < self.end {
            let i = self.next;
            self.next += 1;
            let t = self.t_near + (i as f64 + 0.5) * self.delta;
            let world = [
                self.origin[0] + t * self.dir[0],
                self.origin[1] + t * self.dir[1],
                self.origin[2] + t * self.dir[2],
            ];
            let pos = self.aabb.normalize(world);
            if pos.iter().any(|u| !(0.0..=1.0).contains(u)) {
                continue;
            }
            let s = SamplePoint {
                position: pos,
                time: self.time,
                t_value: t,
                delta: self.delta,
            };
            if let Some(g) = self.grid {
                if !g.occupied_at(&s) {
                    continue;
                }
            }
            return Some(s);
        }
        None
    }
}

/// Every uniform candidate inside the box (no grid, no early stop).
pub fn dense_candidates(ray: &Ray, aabb: Aabb, steps: usize) -> Vec<SamplePoint> {
    let mut m = RayMarch::new(ray, aabb, steps, None, 0.0);
    std::iter::from_fn(|| m.next_sample(1.0)).collect()
}
