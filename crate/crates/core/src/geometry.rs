use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn add_scaled(a: Vec3, b: Vec3, s: f64) -> Vec3 {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Axis-aligned scene bounds; maps world coordinates onto the unit cube.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn unit() -> Self {
        Self {
            min: [0.0; 3],
            max: [1.0; 3],
        }
    }

    pub fn extent(&self) -> Vec3 {
        sub(self.max, self.min)
    }

    pub fn diagonal(&self) -> f64 {
        norm(self.extent())
    }

    pub fn normalize(&self, p: Vec3) -> Vec3 {
        let e = self.extent();
        [
            (p[0] - self.min[0]) / e[0],
            (p[1] - self.min[1]) / e[1],
            (p[2] - self.min[2]) / e[2],
        ]
    }

    pub fn denormalize(&self, u: Vec3) -> Vec3 {
        let e = self.extent();
        [
            self.min[0] + u[0] * e[0],
            self.min[1] + u[1] * e[1],
            self.min[2] + u[2] * e[2],
        ]
    }

    /// Slab test; returns the parametric interval where the ray is inside.
    pub fn intersect(&self, origin: Vec3, dir: Vec3) -> Option<(f64, f64)> {
        let mut t0 = f64::NEG_INFINITY;
        let mut t1 = f64::INFINITY;
        for a in 0..3 {
            if dir[a].abs() < 1e-15 {
                if origin[a] < self.min[a] || origin[a] > self.max[a] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / dir[a];
            let (mut lo, mut hi) = ((self.min[a] - origin[a]) * inv, (self.max[a] - origin[a]) * inv);
            if lo > hi {
                std::mem::swap(&mut lo, &mut hi);
            }
            t0 = t0.max(lo);
            t1 = t1.min(hi);
        }
        (t1 >= t0).then_some((t0, t1))
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|a| self.max[a] > self.min[a])
    }
}

/// Row-major 4x4 camera-to-world transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose(pub [[f64; 4]; 4]);

impl Pose {
    pub fn identity() -> Self {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Pose(m)
    }

    pub fn from_translation(t: Vec3) -> Self {
        let mut p = Self::identity();
        for a in 0..3 {
            p.0[a][3] = t[a];
        }
        p
    }

    pub fn from_row_major(v: &[f64]) -> Option<Self> {
        if v.len() != 16 {
            return None;
        }
        let mut m = [[0.0; 4]; 4];
        for (i, x) in v.iter().enumerate() {
            m[i / 4][i % 4] = *x;
        }
        Some(Pose(m))
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        self.0.iter().flat_map(|r| r.iter().copied()).collect()
    }

    pub fn translation(&self) -> Vec3 {
        [self.0[0][3], self.0[1][3], self.0[2][3]]
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    /// Largest deviation of `R^T R` from identity.
    pub fn orthonormality_error(&self) -> f64 {
        let m = &self.0;
        let mut err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| m[k][i] * m[k][j]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                err = err.max((d - target).abs());
            }
        }
        err
    }
}
