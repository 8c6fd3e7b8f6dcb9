use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::spec::{Activation, MlpSpec};

/// Flat parameter vector of a network, tied to the spec that interprets it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    spec: Arc<MlpSpec>,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(spec: Arc<MlpSpec>, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::Dimension {
                what: "parameter vector",
                expected: spec.param_count(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::ModelHealth(format!(
                "parameter {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self { spec, values })
    }

    pub fn zeros(spec: Arc<MlpSpec>) -> Self {
        let n = spec.param_count();
        Self {
            spec,
            values: vec![0.0; n],
        }
    }

    pub fn spec(&self) -> &Arc<MlpSpec> {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// New vector for the same spec.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(Arc::clone(&self.spec), values)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write_spec(w, &self.spec)?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.values.len());
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let spec = read_spec(r)?;
        let len = read_u64(r)? as usize;
        if len != spec.param_count() {
            return Err(Error::format(
                "parameter vector",
                format!(
                    "length {len} does not match spec {spec} ({} params)",
                    spec.param_count()
                ),
            ));
        }
        let values = read_f64s(r, len)?;
        Self::new(Arc::new(spec), values)
    }
}

pub(crate) fn write_spec<W: Write>(w: &mut W, spec: &MlpSpec) -> std::io::Result<()> {
    w.write_all(&(spec.layer_sizes().len() as u32).to_le_bytes())?;
    for &n in spec.layer_sizes() {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    for a in spec.activations() {
        w.write_all(&[a.tag()])?;
    }
    Ok(())
}

pub(crate) fn read_spec<R: Read>(r: &mut R) -> Result<MlpSpec> {
    let layers = read_u32(r)? as usize;
    if !(2..=64).contains(&layers) {
        return Err(Error::format("spec descriptor", format!("{layers} layers")));
    }
    let sizes = (0..layers)
        .map(|_| read_u32(r).map(|n| n as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut tags = vec![0u8; layers - 1];
    read_exact(r, &mut tags)?;
    let activations = tags
        .iter()
        .map(|&t| {
            Activation::from_tag(t)
                .ok_or_else(|| Error::format("spec descriptor", format!("activation tag {t}")))
        })
        .collect::<Result<Vec<_>>>()?;
    MlpSpec::new(sizes, activations)
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::format("binary record", e.to_string()))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    read_exact(r, &mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> Arc<MlpSpec> {
        Arc::new(MlpSpec::uniform(vec![3, 4, 2], Activation::Tanh, Activation::Linear).unwrap())
    }

    #[test]
    fn rejects_wrong_length_and_nan() {
        assert!(matches!(
            ParamVector::new(spec(), vec![0.0; 5]),
            Err(Error::Dimension {
                expected: 26,
                got: 5,
                ..
            })
        ));
        let mut v = vec![0.0; 26];
        v[3] = f64::NAN;
        assert!(ParamVector::new(spec(), v).is_err());
    }

    #[test]
    fn byte_layout_is_little_endian_and_length_prefixed() {
        let s =
            Arc::new(MlpSpec::uniform(vec![1, 1], Activation::Linear, Activation::Linear).unwrap());
        let p = ParamVector::new(s, vec![1.5, -2.0]).unwrap();
        let bytes = p.to_bytes();
        // 4 (layer count) + 2*4 (sizes) + 1 (tag) + 8 (len) + 2*8 (values)
        assert_eq!(bytes.len(), 4 + 8 + 1 + 8 + 16);
        assert_eq!(&bytes[0..4], &2u32.to_le_bytes());
        assert_eq!(bytes[12], 2); // linear
        assert_eq!(&bytes[13..21], &2u64.to_le_bytes());
        assert_eq!(&bytes[21..29], &1.5f64.to_le_bytes());
    }

    #[test]
    fn truncated_input_is_an_error() {
        let p = ParamVector::zeros(spec());
        let bytes = p.to_bytes();
        assert!(ParamVector::read_from(&mut &bytes[..bytes.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn serialization_round_trips_bit_exactly(vals in proptest::collection::vec(-1e6f64..1e6, 26)) {
            let p = ParamVector::new(spec(), vals).unwrap();
            let q = ParamVector::read_from(&mut p.to_bytes().as_slice()).unwrap();
            prop_assert_eq!(p.spec().as_ref(), q.spec().as_ref());
            let a: Vec<u64> = p.values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = q.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
