//! Coordinate-time encodings fed to the decoder next to the fused plane feature.

use serde::{Deserialize, Serialize};

use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingKind {
    /// One-blob encoding of `x`, `y`, `z`, `τ`.
    #[default]
    Oneblob,
    /// Frequency encoding of the view direction (ablation).
    Frequency,
    /// Constant 0.5 in place of the one-blob entries (ablation).
    Dummy,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OneBlobConfig {
    pub bins: usize,
    pub sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrequencyConfig {
    pub num_octaves: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodingConfig {
    pub kind: EncodingKind,
    pub bins: usize,
    /// Kernel standard deviation; `None` means one bin width (`1 / bins`).
    pub sigma: Option<f64>,
    pub octaves: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            kind: EncodingKind::Oneblob,
            bins: 16,
            sigma: None,
            octaves: 4,
        }
    }
}

impl EncodingConfig {
    pub fn oneblob(&self) -> OneBlobConfig {
        OneBlobConfig {
            bins: self.bins,
            sigma: self.sigma.unwrap_or(1.0 / self.bins as f64),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.bins < 2 {
            return Err(format!("encoding.bins must be >= 2, got {}", self.bins));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0) {
                return Err(format!("encoding.sigma must be positive, got {s}"));
            }
        }
        Ok(())
    }
}

/// `out[i] = exp(-(c_i - s)^2 / (2 sigma^2))` with bin centers `c_i = (i + 0.5) / k`.
pub fn oneblob_encode<T: Real>(s: T, cfg: OneBlobConfig, out: &mut [T]) {
    let s = s.max(T::zero()).min(T::one());
    let k = T::lit(cfg.bins as f64);
    let inv_two_var = T::lit(1.0 / (2.0 * cfg.sigma * cfg.sigma));
    for (i, o) in out.iter_mut().enumerate().take(cfg.bins) {
        let c = (T::lit(i as f64) + T::lit(0.5)) / k;
        let diff = c - s;
        let v = (-(diff * diff) * inv_two_var).exp();
        // far tails underflow into subnormals, which are very slow in the decoder
        *o = if v < T::min_positive_value() { T::zero() } else { v };
    }
}

/// `[sin(s), cos(s), sin(2s), cos(2s), ...]` over `num_octaves` octaves.
pub fn frequency_encode<T: Real>(s: T, cfg: FrequencyConfig, out: &mut [T]) {
    let mut scale = T::one();
    for o in 0..cfg.num_octaves {
        let arg = scale * s;
        out[2 * o] = arg.sin();
        out[2 * o + 1] = arg.cos();
        scale = scale + scale;
    }
}

/// Stateless encoder selected by [`EncodingConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct Encoder {
    kind: EncodingKind,
    blob: OneBlobConfig,
    freq: FrequencyConfig,
}

impl Encoder {
    pub fn new(cfg: &EncodingConfig) -> Self {
        Self {
            kind: cfg.kind,
            blob: cfg.oneblob(),
            freq: FrequencyConfig {
                num_octaves: cfg.octaves,
            },
        }
    }

    pub fn kind(&self) -> EncodingKind {
        self.kind
    }

    pub fn width(&self) -> usize {
        match self.kind {
            EncodingKind::Oneblob | EncodingKind::Dummy => 4 * self.blob.bins,
            EncodingKind::Frequency => 3 * 2 * self.freq.num_octaves,
        }
    }

    /// Writes the encoding of point `p = (x, y, z, τ)` (and, for the
    /// frequency ablation, the unit view direction) into `out`.
    pub fn encode<T: Real>(&self, p: [T; 4], dir: [T; 3], out: &mut [T]) {
        match self.kind {
            EncodingKind::Oneblob => encode_point(p, self.blob, out),
            EncodingKind::Dummy => out[..self.width()]
                .iter_mut()
                .for_each(|x| *x = T::lit(0.5)),
            EncodingKind::Frequency => {
                let w = 2 * self.freq.num_octaves;
                for (c, d) in dir.iter().enumerate() {
                    frequency_encode(*d, self.freq, &mut out[c * w..(c + 1) * w]);
                }
            }
        }
    }
}

/// One-blob encodings of `x`, `y`, `z`, `τ` concatenated in that order.
pub fn encode_point<T: Real>(p: [T; 4], cfg: OneBlobConfig, out: &mut [T]) {
    let k = cfg.bins;
    for (c, s) in p.iter().enumerate() {
        oneblob_encode(*s, cfg, &mut out[c * k..(c + 1) * k]);
    }
}
