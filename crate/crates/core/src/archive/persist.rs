//! `archive.bin` and `archive.csv`.
//!
//! Binary layout (little-endian): magic `PoMSARC1`; dimension count (u32); per
//! dimension a tag (u8) followed by `lo, hi` (f64) and `bins` (u32) for
//! continuous dimensions or `cardinality` (u32) for categorical ones; the
//! replacement policy (u8); elite count (u64); then per elite in insertion
//! order: cell key (u64), descriptor values (f64 each), eval id (u64), loop
//! index (u32) and the parameter vector record.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Archive, BdSpec, BehaviourDescriptor, CellIndex, DimSpec, Elite, Replacement};
use crate::error::{Error, Result};
use crate::nn::params::{read_f64, read_f64s, read_u32, read_u64, read_u8};
use crate::nn::ParamVector;

const MAGIC: &[u8; 8] = b"PoMSARC1";

pub fn write_archive<W: Write>(w: &mut W, archive: &Archive) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    let spec = archive.spec();
    w.write_all(&(spec.dims().len() as u32).to_le_bytes())?;
    for d in spec.dims() {
        match *d {
            DimSpec::Continuous { lo, hi, bins } => {
                w.write_all(&[0])?;
                w.write_all(&lo.to_le_bytes())?;
                w.write_all(&hi.to_le_bytes())?;
                w.write_all(&(bins as u32).to_le_bytes())?;
            }
            DimSpec::Categorical { cardinality } => {
                w.write_all(&[1])?;
                w.write_all(&(cardinality as u32).to_le_bytes())?;
            }
        }
    }
    w.write_all(&[archive.replacement() as u8])?;
    w.write_all(&(archive.len() as u64).to_le_bytes())?;
    for (key, e) in archive.iter() {
        w.write_all(&key.0.to_le_bytes())?;
        for v in e.bd.values() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&e.eval_id.to_le_bytes())?;
        w.write_all(&e.loop_index.to_le_bytes())?;
        e.params.write_to(w)?;
    }
    Ok(())
}

pub fn read_archive<R: Read>(r: &mut R) -> Result<Archive> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| Error::format("archive", e.to_string()))?;
    if &magic != MAGIC {
        return Err(Error::format("archive", "bad magic"));
    }
    let ndims = read_u32(r)? as usize;
    if ndims == 0 || ndims > 64 {
        return Err(Error::format(
            "archive",
            format!("{ndims} descriptor dimensions"),
        ));
    }
    let mut dims = Vec::with_capacity(ndims);
    for _ in 0..ndims {
        dims.push(match read_u8(r)? {
            0 => DimSpec::Continuous {
                lo: read_f64(r)?,
                hi: read_f64(r)?,
                bins: read_u32(r)? as usize,
            },
            1 => DimSpec::Categorical {
                cardinality: read_u32(r)? as usize,
            },
            t => return Err(Error::format("archive", format!("dimension tag {t}"))),
        });
    }
    let spec = BdSpec::new(dims)?;
    let replacement = match read_u8(r)? {
        0 => Replacement::KeepFirst,
        1 => Replacement::ReplaceIncumbent,
        t => return Err(Error::format("archive", format!("replacement tag {t}"))),
    };
    let count = read_u64(r)?;
    if count > spec.total_cells() {
        return Err(Error::format(
            "archive",
            format!("{count} elites for {} cells", spec.total_cells()),
        ));
    }
    let mut archive = Archive::with_replacement(spec, replacement);
    for _ in 0..count {
        let key = CellIndex(read_u64(r)?);
        let bd = BehaviourDescriptor::new(read_f64s(r, ndims)?);
        let eval_id = read_u64(r)?;
        let loop_index = read_u32(r)?;
        let params = ParamVector::read_from(r)?;
        let expect = archive.spec().cell_of(&bd)?;
        if expect != key {
            return Err(Error::format(
                "archive",
                format!(
                    "elite {eval_id} recorded under cell {} but its descriptor maps to {}",
                    key.0, expect.0
                ),
            ));
        }
        if archive.get(key).is_some() {
            return Err(Error::format(
                "archive",
                format!("cell {} stored twice", key.0),
            ));
        }
        archive.insert_unchecked(
            key,
            Elite {
                params,
                bd,
                eval_id,
                loop_index,
            },
        );
    }
    Ok(archive)
}

pub fn save_archive(path: &Path, archive: &Archive) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_archive(&mut w, archive)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_archive(path: &Path) -> Result<Archive> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_archive(&mut BufReader::new(f))
}

/// One row per elite: `cell,bd_0..bd_{d-1},eval_id,loop`.
pub fn export_csv(path: &Path, archive: &Archive) -> Result<()> {
    let csv_err = |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let d = archive.spec().dims().len();
    let mut header = vec!["cell".to_string()];
    header.extend((0..d).map(|i| format!("bd_{i}")));
    header.push("eval_id".into());
    header.push("loop".into());
    w.write_record(&header).map_err(csv_err)?;
    for (key, e) in archive.iter() {
        let mut row = vec![key.0.to_string()];
        row.extend(e.bd.values().iter().map(|v| v.to_string()));
        row.push(e.eval_id.to_string());
        row.push(e.loop_index.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
