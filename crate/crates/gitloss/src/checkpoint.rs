//! Model checkpoint file: a little-endian binary layout holding the network
//! configuration and every parameter tensor, bit-exact across save/load.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic            4 bytes, "GLCP"
//! version          u32 (currently 1)
//! input_dim        u32
//! n_hidden         u32, then that many hidden dims as u32
//! feature_dim      u32
//! n_classes        u32
//! activation       u8 (0 = relu, 1 = leaky relu) followed by the slope f64
//! n_params         u32
//! per parameter:   rows u32, cols u32, rows*cols f64 bit patterns
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{Activation, Layer, MlpConfig, MlpState};
use crate::tensor::Matrix;

const MAGIC: &[u8; 4] = b"GLCP";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, config: &MlpConfig, state: &MlpState) -> Result<()> {
    config.validate()?;
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(config.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(config.hidden_dims.len() as u32).to_le_bytes());
    for &h in &config.hidden_dims {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    out.extend_from_slice(&(config.feature_dim as u32).to_le_bytes());
    out.extend_from_slice(&(config.n_classes as u32).to_le_bytes());
    match config.activation {
        Activation::Relu => {
            out.push(0);
            out.extend_from_slice(&0.0f64.to_le_bytes());
        }
        Activation::LeakyRelu(slope) => {
            out.push(1);
            out.extend_from_slice(&slope.to_le_bytes());
        }
    }
    let params = state.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&(p.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(p.cols() as u32).to_le_bytes());
        for &v in p.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(MlpConfig, MlpState)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::format(path, "truncated checkpoint"));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    macro_rules! u32_at {
        () => {
            u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize
        };
    }
    macro_rules! f64_at {
        () => {
            f64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap())
        };
    }

    let magic = take(&mut pos, 4)?;
    if magic != MAGIC {
        return Err(Error::format(
            path,
            format!("bad checkpoint magic: expected {MAGIC:?}, found {magic:?}"),
        ));
    }
    let version = u32_at!();
    if version != VERSION as usize {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version: expected {VERSION}, found {version}"),
        ));
    }
    let input_dim = u32_at!();
    let n_hidden = u32_at!();
    let mut hidden_dims = Vec::with_capacity(n_hidden);
    for _ in 0..n_hidden {
        hidden_dims.push(u32_at!());
    }
    let feature_dim = u32_at!();
    let n_classes = u32_at!();
    let act_tag = take(&mut pos, 1)?[0];
    let slope = f64_at!();
    let activation = match act_tag {
        0 => Activation::Relu,
        1 => Activation::LeakyRelu(slope),
        other => {
            return Err(Error::format(
                path,
                format!("unknown activation tag {other}"),
            ))
        }
    };
    let config = MlpConfig {
        input_dim,
        hidden_dims,
        feature_dim,
        n_classes,
        activation,
    };
    config.validate()?;

    let n_params = u32_at!();
    let expected_shapes = config.param_shapes();
    if n_params != expected_shapes.len() {
        return Err(Error::format(
            path,
            format!(
                "parameter count {n_params} does not match the architecture ({} expected)",
                expected_shapes.len()
            ),
        ));
    }
    let mut tensors = Vec::with_capacity(n_params);
    for expected in &expected_shapes {
        let rows = u32_at!();
        let cols = u32_at!();
        if (rows, cols) != *expected {
            return Err(Error::format(
                path,
                format!("parameter shape {rows}x{cols} does not match {expected:?}"),
            ));
        }
        let mut m = Matrix::zeros(rows, cols);
        for i in 0..rows * cols {
            m.as_mut_slice()[i] = f64_at!();
        }
        tensors.push(m);
    }
    if pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after checkpoint"));
    }

    let mut iter = tensors.into_iter();
    let mut next_layer = || -> Layer {
        let weight = iter.next().expect("count checked");
        let bias = iter.next().expect("count checked");
        Layer { weight, bias }
    };
    let hidden: Vec<Layer> = (0..config.hidden_dims.len()).map(|_| next_layer()).collect();
    let feature = next_layer();
    let classifier = next_layer();
    Ok((
        config,
        MlpState {
            hidden,
            feature,
            classifier,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let config = MlpConfig {
            input_dim: 12,
            hidden_dims: vec![7, 5],
            feature_dim: 2,
            n_classes: 4,
            activation: Activation::LeakyRelu(0.01),
        };
        let state = crate::network::init(&config, &mut SeededRng::new(2)).unwrap();
        save_checkpoint(&path, &config, &state).unwrap();
        let (config2, state2) = load_checkpoint(&path).unwrap();
        assert_eq!(config, config2);
        assert_eq!(state, state2);
        // Saving the loaded state reproduces the same file.
        let path2 = dir.path().join("model2.ckpt");
        save_checkpoint(&path2, &config2, &state2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn corrupted_checkpoints_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let config = MlpConfig {
            input_dim: 3,
            hidden_dims: vec![],
            feature_dim: 2,
            n_classes: 2,
            activation: Activation::Relu,
        };
        let state = crate::network::init(&config, &mut SeededRng::new(0)).unwrap();
        save_checkpoint(&path, &config, &state).unwrap();

        let good = std::fs::read(&path).unwrap();
        std::fs::write(&path, &good[..good.len() - 1]).unwrap();
        assert!(load_checkpoint(&path).is_err());

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");
    }
}
