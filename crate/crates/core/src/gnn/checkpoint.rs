//! Binary model checkpoints.
//!
//! Little-endian layout: magic, the model configuration, then every
//! parameter tensor in declaration order with its name and shape. Values
//! are stored as f32 regardless of the arithmetic type, so f32 models
//! round-trip exactly.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use super::model::Model;
use super::tensor::{Mat, Real};
use super::{LayerKind, ModelConfig};

const MODEL_MAGIC: &[u8; 6] = b"FLAGM1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error("invalid stored configuration: {0}")]
    BadConfig(String),
}

pub fn save_model<F: Real>(model: &Model<F>, w: &mut dyn Write) -> Result<(), CheckpointError> {
    w.write_all(MODEL_MAGIC)?;
    let cfg = &model.config;
    for v in [
        cfg.input_dim,
        cfg.hidden_dim,
        cfg.layers,
        cfg.heads,
        cfg.classes,
    ] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&[match cfg.layer_kind {
        LayerKind::Gatv2 => 0u8,
        LayerKind::Gat => 1,
        LayerKind::Gcn => 2,
    }])?;
    w.write_all(&cfg.negative_slope.to_le_bytes())?;

    let params = model.params();
    let names = model.param_names();
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (p, name) in params.iter().zip(&names) {
        let nb = name.as_bytes();
        w.write_all(&(nb.len() as u32).to_le_bytes())?;
        w.write_all(nb)?;
        w.write_all(&(p.rows() as u32).to_le_bytes())?;
        w.write_all(&(p.cols() as u32).to_le_bytes())?;
        for &x in p.data() {
            w.write_all(&x.to_f32().to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_model_file<F: Real>(model: &Model<F>, path: &Path) -> Result<(), CheckpointError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    save_model(model, &mut f)?;
    std::io::Write::flush(&mut f)?;
    Ok(())
}

fn read_exact(r: &mut dyn Read, buf: &mut [u8]) -> Result<(), CheckpointError> {
    r.read_exact(buf)
        .map_err(|_| CheckpointError::Format("unexpected end of file".to_string()))
}

fn read_u32(r: &mut dyn Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn load_model<F: Real>(r: &mut dyn Read) -> Result<Model<F>, CheckpointError> {
    let mut magic = [0u8; 6];
    read_exact(r, &mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(CheckpointError::Format(format!(
            "bad magic {:?}, expected {:?}",
            magic, MODEL_MAGIC
        )));
    }
    let input_dim = read_u32(r)? as usize;
    let hidden_dim = read_u32(r)? as usize;
    let layers = read_u32(r)? as usize;
    let heads = read_u32(r)? as usize;
    let classes = read_u32(r)? as usize;
    let mut kind_b = [0u8; 1];
    read_exact(r, &mut kind_b)?;
    let layer_kind = match kind_b[0] {
        0 => LayerKind::Gatv2,
        1 => LayerKind::Gat,
        2 => LayerKind::Gcn,
        k => return Err(CheckpointError::Format(format!("unknown layer kind {k}"))),
    };
    let mut slope_b = [0u8; 8];
    read_exact(r, &mut slope_b)?;
    let negative_slope = f64::from_le_bytes(slope_b);
    let config = ModelConfig {
        input_dim,
        hidden_dim,
        layers,
        heads,
        classes,
        layer_kind,
        negative_slope,
    };
    config.validate().map_err(CheckpointError::BadConfig)?;

    let mut model = Model::<F>::new(config, 0).map_err(|e| CheckpointError::BadConfig(e.to_string()))?;
    let expected_names = model.param_names();
    let n_params = read_u32(r)? as usize;
    if n_params != expected_names.len() {
        return Err(CheckpointError::Format(format!(
            "{} stored parameters, configuration implies {}",
            n_params,
            expected_names.len()
        )));
    }
    let mut params = model.params_mut();
    for (p, expected_name) in params.iter_mut().zip(&expected_names) {
        let name_len = read_u32(r)? as usize;
        if name_len > 1 << 12 {
            return Err(CheckpointError::Format(format!(
                "parameter name length {name_len} implausibly large"
            )));
        }
        let mut nb = vec![0u8; name_len];
        read_exact(r, &mut nb)?;
        let name = String::from_utf8(nb)
            .map_err(|_| CheckpointError::Format("invalid utf-8 in parameter name".to_string()))?;
        if &name != expected_name {
            return Err(CheckpointError::Format(format!(
                "parameter '{name}' where '{expected_name}' was expected"
            )));
        }
        let rows = read_u32(r)? as usize;
        let cols = read_u32(r)? as usize;
        if (rows, cols) != (p.rows(), p.cols()) {
            return Err(CheckpointError::Format(format!(
                "parameter '{name}' stored as {rows}x{cols}, expected {}x{}",
                p.rows(),
                p.cols()
            )));
        }
        let mut fb = [0u8; 4];
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            read_exact(r, &mut fb)?;
            data.push(F::from_f32(f32::from_le_bytes(fb)));
        }
        **p = Mat::from_vec(rows, cols, data);
    }
    Ok(model)
}

pub fn load_model_file<F: Real>(path: &Path) -> Result<Model<F>, CheckpointError> {
    let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
    load_model(&mut f)
}
