//! The queryable radiance field: planes, encoder and decoder bundled together.

use rand::Rng;

use crate::encoding::{EncodingConfig, Encoder};
use crate::field_mlp::{FieldOutput, MlpCache, MlpConfig, MlpError, MlpParams};
use crate::plane_field::{FieldKind, FuseScratch, PlaneConfig, PlaneError, PlaneSet, PlaneView};
use crate::real::Real;

/// All learnable parameters. The same type doubles as a gradient buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldParams<T> {
    pub planes: PlaneSet<T>,
    pub mlp: MlpParams<T>,
}

impl<T: Real> FieldParams<T> {
    pub fn init<R: Rng + ?Sized>(
        planes: &PlaneConfig,
        time_res: usize,
        encoder: &Encoder,
        mlp: &MlpConfig,
        rng: &mut R,
    ) -> Result<Self, PlaneError> {
        let planes = PlaneSet::init(planes, time_res, rng)?;
        let input_dim = encoder.width() + planes.feature_width();
        let mlp = MlpParams::init(input_dim, mlp, rng);
        Ok(Self { planes, mlp })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            planes: self.planes.zeros_like(),
            mlp: self.mlp.zeros_like(),
        }
    }

    pub fn fill(&mut self, v: T) {
        self.planes.fill(v);
        self.mlp.fill(v);
    }

    pub fn add_assign(&mut self, other: &Self) {
        self.planes.add_assign(&other.planes);
        self.mlp.add_assign(&other.mlp);
    }

    pub fn num_params(&self) -> usize {
        self.planes.num_params() + self.mlp.num_params()
    }

    /// Named parameter groups in checkpoint order: planes level-major, then
    /// decoder layers (weights then bias for each).
    pub fn groups(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::new();
        for (l, level) in self.planes.levels.iter().enumerate() {
            for p in &level.planes {
                out.push((format!("planes.l{l}.{}", p.axis_pair.name()), p.values.as_slice()));
            }
        }
        for (name, layer) in mlp_layer_names(&self.mlp).into_iter().zip(self.mlp.layers()) {
            out.push((format!("{name}.weight"), layer.weight.as_slice()));
            out.push((format!("{name}.bias"), layer.bias.as_slice()));
        }
        out
    }

    pub fn groups_mut(&mut self) -> Vec<(String, &mut [T])> {
        let names = mlp_layer_names(&self.mlp);
        let mut out = Vec::new();
        for (l, level) in self.planes.levels.iter_mut().enumerate() {
            for p in level.planes.iter_mut() {
                let name = format!("planes.l{l}.{}", p.axis_pair.name());
                out.push((name, p.values.as_mut_slice()));
            }
        }
        for (name, layer) in names.into_iter().zip(self.mlp.layers_mut()) {
            out.push((format!("{name}.weight"), layer.weight.as_mut_slice()));
            out.push((format!("{name}.bias"), layer.bias.as_mut_slice()));
        }
        out
    }

    pub fn all_finite(&self) -> Result<(), String> {
        for (name, g) in self.groups() {
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(format!("{name}[{i}] = {:?}", g[i]));
            }
        }
        Ok(())
    }

    pub fn field<'a>(&'a self, encoder: &'a Encoder) -> Field<'a, T> {
        Field {
            view: self.planes.view(),
            mlp: &self.mlp,
            encoder,
        }
    }
}

fn mlp_layer_names<T: Real>(mlp: &MlpParams<T>) -> Vec<String> {
    let mut names = Vec::new();
    for i in 0..mlp.sigma_hidden.len() {
        names.push(format!("mlp.sigma.hidden{i}"));
    }
    names.push("mlp.sigma.head".into());
    for i in 0..mlp.color_hidden.len() {
        names.push(format!("mlp.color.hidden{i}"));
    }
    names.push("mlp.color.head".into());
    names
}

/// Builds an encoder and checks the config in one place.
pub fn encoder_from(cfg: &EncodingConfig) -> Result<Encoder, String> {
    cfg.validate()?;
    Ok(Encoder::new(cfg))
}

/// Reusable per-worker buffers for field queries.
#[derive(Clone, Debug, Default)]
pub struct FieldScratch<T> {
    input: Vec<T>,
    d_input: Vec<T>,
    fuse: FuseScratch<T>,
    mlp: MlpCache<T>,
}

/// A read-only query bundle `{plane view, encoder, decoder}`.
#[derive(Clone, Copy, Debug)]
pub struct Field<'a, T> {
    pub view: PlaneView<'a, T>,
    pub mlp: &'a MlpParams<T>,
    pub encoder: &'a Encoder,
}

impl<'a, T: Real> Field<'a, T> {
    /// Same field with one half forced to the multiplicative identity.
    pub fn with_forced(self, which: FieldKind) -> Self {
        Self {
            view: self.view.planes().force_field_to_identity(which),
            ..self
        }
    }

    fn assemble(&self, p: [T; 4], dir: [T; 3], s: &mut FieldScratch<T>) {
        let enc = self.encoder.width();
        s.input.resize(enc + self.view.feature_width(), T::zero());
        let (e, f) = s.input.split_at_mut(enc);
        self.encoder.encode(p, dir, e);
        self.view.fuse_into(p, f, &mut s.fuse);
    }

    pub fn query(
        &self,
        p: [T; 4],
        dir: [T; 3],
        s: &mut FieldScratch<T>,
    ) -> Result<FieldOutput<T>, MlpError> {
        self.assemble(p, dir, s);
        self.mlp.forward(&s.input, &mut s.mlp)
    }

    pub fn query_sigma(&self, p: [T; 4], dir: [T; 3], s: &mut FieldScratch<T>) -> Result<T, MlpError> {
        self.assemble(p, dir, s);
        self.mlp.forward_sigma(&s.input, &mut s.mlp)
    }

    /// Recomputes the forward pass at `p` and accumulates the gradients of
    /// `d_sigma * sigma + d_rgb . rgb` into `grads`.
    pub fn backward(
        &self,
        p: [T; 4],
        dir: [T; 3],
        d_sigma: T,
        d_rgb: [T; 3],
        grads: &mut FieldParams<T>,
        s: &mut FieldScratch<T>,
    ) -> Result<(), MlpError> {
        self.query(p, dir, s)?;
        let enc = self.encoder.width();
        // the encoder has no parameters, so only the plane features need a gradient
        s.d_input.resize(s.input.len() - enc, T::zero());
        self.mlp
            .backward(&mut s.mlp, d_sigma, d_rgb, &mut grads.mlp, &mut s.d_input);
        self.view
            .fuse_backward_queried(&s.d_input, &mut grads.planes, &mut s.fuse);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::EncodingKind;
    use crate::plane_field::FusionMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (FieldParams<f64>, Encoder) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let enc = Encoder::new(&EncodingConfig {
            kind: EncodingKind::Oneblob,
            bins: 4,
            sigma: Some(0.25),
            octaves: 0,
        });
        let pc = PlaneConfig {
            resolutions: vec![3, 4],
            time_res: 3,
            feature_dim: 3,
            fusion: FusionMode::Product,
            static_init: [0.6, 1.4],
        };
        let mut params = FieldParams::init(&pc, 3, &enc, &MlpConfig::default(), &mut rng).unwrap();
        for p in params.planes.planes_mut() {
            p.values.iter_mut().for_each(|v| *v = rng.gen_range(0.6..1.4));
        }
        (params, enc)
    }

    #[test]
    fn groups_cover_every_parameter() {
        let (p, _) = setup(1);
        let total: usize = p.groups().iter().map(|(_, g)| g.len()).sum();
        assert_eq!(total, p.num_params());
        assert_eq!(p.groups()[0].0, "planes.l0.xy");
        assert_eq!(p.groups()[12].0, "mlp.sigma.hidden0.weight");
    }

    #[test]
    fn full_chain_gradient_matches_finite_differences() {
        let (mut params, enc) = setup(3);
        let pt = [0.31, 0.62, 0.47, 0.8];
        let dir = [0.0, 0.0, 1.0];
        let (ds, dc) = (0.4, [1.0, -0.5, 0.25]);
        let scalar = |p: &FieldParams<f64>| {
            let o = p.field(&enc).query(pt, dir, &mut FieldScratch::default()).unwrap();
            ds * o.sigma + dc[0] * o.rgb[0] + dc[1] * o.rgb[1] + dc[2] * o.rgb[2]
        };
        let mut g = params.zeros_like();
        params
            .field(&enc)
            .backward(pt, dir, ds, dc, &mut g, &mut FieldScratch::default())
            .unwrap();
        let grads: Vec<Vec<f64>> = g.groups().into_iter().map(|(_, v)| v.to_vec()).collect();
        let h = 1e-3;
        let n_groups = grads.len();
        for gi in 0..n_groups {
            let len = grads[gi].len();
            let stride = (len / 40).max(1);
            for idx in (0..len).step_by(stride) {
                let bump = |p: &mut FieldParams<f64>, d: f64| {
                    p.groups_mut()[gi].1[idx] += d;
                };
                bump(&mut params, h);
                let fp = scalar(&params);
                bump(&mut params, -2.0 * h);
                let fm = scalar(&params);
                bump(&mut params, h);
                let numeric = (fp - fm) / (2.0 * h);
                let a = grads[gi][idx];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-4, "group {gi} idx {idx}: {a} vs {numeric}");
            }
        }
    }
}
