//! Binary model checkpoints.
//!
//! Layout (little-endian): magic `PoMSMDL1`, kind tag (u8, 0 autoencoder / 1 pca),
//! latent dim (u32), threshold `epsilon_r` (f64), target spec descriptor, then
//! either the encoder and decoder parameter vectors or the PCA mean (u64 length
//! + f64s) followed by the `M x P` component matrix row by row.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;

use super::{Autoencoder, ManifoldModel, Pca};
use crate::error::{Error, Result};
use crate::nn::params::{read_f64, read_f64s, read_spec, read_u32, read_u64, read_u8, write_spec};
use crate::nn::ParamVector;

const MAGIC: &[u8; 8] = b"PoMSMDL1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ManifoldModel,
    pub threshold: f64,
}

pub fn write_checkpoint<W: Write>(
    w: &mut W,
    model: &ManifoldModel,
    threshold: f64,
) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    let kind = match model {
        ManifoldModel::Autoencoder(_) => 0u8,
        ManifoldModel::Pca(_) => 1u8,
    };
    w.write_all(&[kind])?;
    w.write_all(&(model.latent_dim() as u32).to_le_bytes())?;
    w.write_all(&threshold.to_le_bytes())?;
    write_spec(w, model.target())?;
    match model {
        ManifoldModel::Autoencoder(ae) => {
            ae.encoder().write_to(w)?;
            ae.decoder().write_to(w)?;
        }
        ManifoldModel::Pca(p) => {
            w.write_all(&(p.mean().len() as u64).to_le_bytes())?;
            for v in p.mean() {
                w.write_all(&v.to_le_bytes())?;
            }
            let g = p.components();
            for i in 0..g.nrows() {
                for j in 0..g.ncols() {
                    w.write_all(&g[(i, j)].to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::format("model checkpoint", e.to_string()))?;
    if &magic != MAGIC {
        return Err(Error::format("model checkpoint", "bad magic"));
    }
    let kind = read_u8(r)?;
    let latent = read_u32(r)? as usize;
    let threshold = read_f64(r)?;
    let target = Arc::new(read_spec(r)?);
    let model = match kind {
        0 => {
            let enc = ParamVector::read_from(r)?;
            let dec = ParamVector::read_from(r)?;
            ManifoldModel::Autoencoder(Autoencoder::from_parts(enc, dec, target)?)
        }
        1 => {
            let p = read_u64(r)? as usize;
            if p != target.param_count() {
                return Err(Error::format(
                    "model checkpoint",
                    format!("pca mean length {p}"),
                ));
            }
            let mean = read_f64s(r, p)?;
            let g = read_f64s(r, latent * p)?;
            ManifoldModel::Pca(Pca::from_parts(
                target,
                mean,
                DMatrix::from_row_slice(latent, p, &g),
            )?)
        }
        t => {
            return Err(Error::format(
                "model checkpoint",
                format!("unknown kind tag {t}"),
            ))
        }
    };
    if model.latent_dim() != latent {
        return Err(Error::format(
            "model checkpoint",
            format!(
                "header latent dim {latent}, model has {}",
                model.latent_dim()
            ),
        ));
    }
    Ok(Checkpoint { model, threshold })
}

pub fn save_checkpoint(path: &Path, model: &ManifoldModel, threshold: f64) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(&mut w, model, threshold)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(f))
}
