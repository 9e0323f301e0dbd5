//! Binary checkpoint format.
//!
//! ```text
//! b"FPLN" | u32 version | u32 header length | JSON header | f32 blob
//! ```
//!
//! All integers and floats are little-endian. The blob holds, in order, the
//! parameters (planes level-major in XY, YZ, XZ, XT, YT, ZT order, then the
//! decoder layers), the Adam first moments, the Adam second moments, and the
//! occupancy density cache when a grid is present.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::Config;
use crate::field::FieldParams;
use crate::geometry::Aabb;
use crate::occupancy::IndicatorGrid;
use crate::trainer::{AdamState, TrainState};

pub const MAGIC: [u8; 4] = *b"FPLN";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint: magic bytes {found:?}")]
    BadMagic { found: Vec<u8> },
    #[error("checkpoint format version {found}, this build reads {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("checkpoint has {extra} trailing bytes")]
    Trailing { extra: usize },
    #[error("bad checkpoint header: {0}")]
    Header(String),
    #[error("checkpoint shapes do not match its config: {0}")]
    Shape(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GridHeader {
    dims: [usize; 4],
    threshold: f32,
    ema: f32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    config: Value,
    iteration: usize,
    time_res: usize,
    adam_step: u64,
    aabb: Aabb,
    groups: Vec<(String, usize)>,
    grid: Option<GridHeader>,
    floats: usize,
}

pub fn save_checkpoint(state: &TrainState, cfg: &Config) -> Vec<u8> {
    let groups: Vec<(String, usize)> = state
        .params
        .groups()
        .into_iter()
        .map(|(n, v)| (n, v.len()))
        .collect();
    let n_params: usize = groups.iter().map(|g| g.1).sum();
    let grid_len = state.grid.as_ref().map_or(0, |g| g.num_cells());
    let header = Header {
        config: serde_json::from_str(&cfg.to_flat_json()).expect("config json"),
        iteration: state.iteration,
        time_res: state.time_res,
        adam_step: state.adam.step,
        aabb: state.aabb,
        groups,
        grid: state.grid.as_ref().map(|g| GridHeader {
            dims: g.dims(),
            threshold: g.threshold(),
            ema: g.ema(),
        }),
        floats: 3 * n_params + grid_len,
    };
    let text = serde_json::to_vec(&header).expect("header json");
    let mut out = Vec::with_capacity(12 + text.len() + 4 * header.floats);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(&text);
    for p in [&state.params, &state.adam.m, &state.adam.v] {
        for (_, g) in p.groups() {
            for v in g {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    if let Some(g) = &state.grid {
        for v in g.density() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> Result<u32, CheckpointError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .ok_or(CheckpointError::Truncated {
            expected: at + 4,
            actual: bytes.len(),
        })
}

fn fill_from(target: &mut FieldParams<f32>, floats: &mut impl Iterator<Item = f32>) {
    for (_, g) in target.groups_mut() {
        for v in g.iter_mut() {
            *v = floats.next().expect("length checked");
        }
    }
}

/// Parses a checkpoint back into the training state and its config.
pub fn load_checkpoint(bytes: &[u8]) -> Result<(TrainState, Config), CheckpointError> {
    if bytes.len() < 4 {
        return Err(CheckpointError::Truncated {
            expected: 12,
            actual: bytes.len(),
        });
    }
    if bytes[..4] != MAGIC {
        return Err(CheckpointError::BadMagic {
            found: bytes[..4].to_vec(),
        });
    }
    let version = read_u32(bytes, 4)?;
    if version != VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: VERSION,
        });
    }
    let hlen = read_u32(bytes, 8)? as usize;
    let body = 12 + hlen;
    let text = bytes.get(12..body).ok_or(CheckpointError::Truncated {
        expected: body,
        actual: bytes.len(),
    })?;
    let header: Header = serde_json::from_slice(text).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let expected = body + 4 * header.floats;
    if bytes.len() < expected {
        return Err(CheckpointError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(CheckpointError::Trailing {
            extra: bytes.len() - expected,
        });
    }
    let cfg = Config::from_json_str(&header.config.to_string()).map_err(|e| CheckpointError::Header(e.to_string()))?;

    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut state = TrainState::init(&cfg, header.time_res, header.aabb, &mut rng)
        .map_err(|e| CheckpointError::Shape(e.to_string()))?;
    let shapes: Vec<(String, usize)> = state
        .params
        .groups()
        .into_iter()
        .map(|(n, v)| (n, v.len()))
        .collect();
    if shapes != header.groups {
        return Err(CheckpointError::Shape("parameter groups differ".into()));
    }
    let n_params: usize = shapes.iter().map(|g| g.1).sum();
    let grid_len = header.grid.as_ref().map_or(0, |g| g.dims.iter().product());
    if header.floats != 3 * n_params + grid_len {
        return Err(CheckpointError::Shape(format!(
            "blob holds {} floats, layout needs {}",
            header.floats,
            3 * n_params + grid_len
        )));
    }
    let mut floats = bytes[body..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()));
    fill_from(&mut state.params, &mut floats);
    let mut m = state.params.zeros_like();
    let mut v = state.params.zeros_like();
    fill_from(&mut m, &mut floats);
    fill_from(&mut v, &mut floats);
    state.adam = AdamState {
        m,
        v,
        step: header.adam_step,
    };
    state.grid = match header.grid {
        Some(g) => {
            let density: Vec<f32> = floats.collect();
            Some(
                IndicatorGrid::from_parts(g.dims, density, g.threshold, g.ema)
                    .ok_or_else(|| CheckpointError::Shape("grid size".into()))?,
            )
        }
        None => None,
    };
    state.iteration = header.iteration;
    Ok((state, cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plane_field::PlaneConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state() -> (TrainState, Config) {
        let cfg = Config {
            planes: PlaneConfig {
                resolutions: vec![3, 5],
                time_res: 4,
                feature_dim: 2,
                ..Default::default()
            },
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = TrainState::init(&cfg, 4, Aabb::unit(), &mut rng).unwrap();
        for p in [&mut s.params, &mut s.adam.m, &mut s.adam.v] {
            for (_, g) in p.groups_mut() {
                g.iter_mut().for_each(|v| *v = rng.gen_range(-2.0..2.0));
            }
        }
        s.adam.step = 17;
        s.iteration = 17;
        let mut grid = IndicatorGrid::new([4, 4, 4, 2], 0.3, 0.95, 0.3);
        grid.set_density(5, 0.0);
        s.grid = Some(grid);
        (s, cfg)
    }

    #[test]
    fn round_trip_is_exact() {
        let (s, cfg) = state();
        let bytes = save_checkpoint(&s, &cfg);
        let (back, cfg2) = load_checkpoint(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(cfg2, cfg);
        assert_eq!(save_checkpoint(&back, &cfg2), bytes);
    }

    #[test]
    fn corrupted_magic() {
        let (s, cfg) = state();
        let mut bytes = save_checkpoint(&s, &cfg);
        bytes[0] = b'X';
        assert!(matches!(load_checkpoint(&bytes), Err(CheckpointError::BadMagic { .. })));
    }

    #[test]
    fn wrong_version() {
        let (s, cfg) = state();
        let mut bytes = save_checkpoint(&s, &cfg);
        bytes[4..8].copy_from_slice(&9u32.to_le_bytes());
        assert_eq!(
            load_checkpoint(&bytes).unwrap_err(),
            CheckpointError::Version { found: 9, expected: 1 }
        );
    }

    #[test]
    fn truncated_blob_reports_lengths() {
        let (s, cfg) = state();
        let bytes = save_checkpoint(&s, &cfg);
        let cut = &bytes[..bytes.len() - 10];
        assert_eq!(
            load_checkpoint(cut).unwrap_err(),
            CheckpointError::Truncated {
                expected: bytes.len(),
                actual: bytes.len() - 10
            }
        );
    }
}
