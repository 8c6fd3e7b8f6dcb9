//! MAP-Elites cell grid.

mod persist;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ParamVector;

pub use persist::{export_csv, load_archive, read_archive, save_archive, write_archive};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DimSpec {
    Continuous { lo: f64, hi: f64, bins: usize },
    Categorical { cardinality: usize },
}

impl DimSpec {
    pub fn size(&self) -> usize {
        match *self {
            DimSpec::Continuous { bins, .. } => bins,
            DimSpec::Categorical { cardinality } => cardinality,
        }
    }

    fn validate(&self, i: usize) -> Result<()> {
        match *self {
            DimSpec::Continuous { lo, hi, bins } => {
                if bins == 0 {
                    return Err(Error::Config(format!(
                        "bd dimension {i}: bins must be >= 1"
                    )));
                }
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::Config(format!(
                        "bd dimension {i}: need finite lo < hi, got [{lo}, {hi}]"
                    )));
                }
            }
            DimSpec::Categorical { cardinality } => {
                if cardinality == 0 {
                    return Err(Error::Config(format!(
                        "bd dimension {i}: cardinality must be >= 1"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Bin of `v` along this dimension; continuous values clamp to the edge bins.
    pub fn bin(&self, v: f64) -> Result<usize> {
        match *self {
            DimSpec::Continuous { lo, hi, bins } => {
                if v.is_nan() {
                    return Err(Error::Descriptor("NaN in continuous dimension".into()));
                }
                let t = ((v - lo) / (hi - lo) * bins as f64).floor();
                Ok(t.clamp(0.0, (bins - 1) as f64) as usize)
            }
            DimSpec::Categorical { cardinality } => {
                if v.fract() != 0.0 || v < 0.0 || v >= cardinality as f64 {
                    return Err(Error::Descriptor(format!(
                        "label {v} outside 0..{cardinality}"
                    )));
                }
                Ok(v as usize)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdSpec {
    dims: Vec<DimSpec>,
}

impl BdSpec {
    pub fn new(dims: Vec<DimSpec>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Config("bd spec needs at least one dimension".into()));
        }
        for (i, d) in dims.iter().enumerate() {
            d.validate(i)?;
        }
        let spec = Self { dims };
        if spec
            .dims
            .iter()
            .try_fold(1u64, |acc, d| acc.checked_mul(d.size() as u64))
            .is_none()
        {
            return Err(Error::Config("bd grid has more than 2^64 cells".into()));
        }
        Ok(spec)
    }

    pub fn dims(&self) -> &[DimSpec] {
        &self.dims
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.dims.iter().map(DimSpec::size).collect()
    }

    pub fn total_cells(&self) -> u64 {
        self.dims.iter().map(|d| d.size() as u64).product()
    }

    /// Row-major mixed-radix key of a descriptor.
    pub fn cell_of(&self, bd: &BehaviourDescriptor) -> Result<CellIndex> {
        if bd.values().len() != self.dims.len() {
            return Err(Error::Descriptor(format!(
                "descriptor has {} values, spec has {} dimensions",
                bd.values().len(),
                self.dims.len()
            )));
        }
        let mut key = 0u64;
        for (d, &v) in self.dims.iter().zip(bd.values()) {
            key = key * d.size() as u64 + d.bin(v)? as u64;
        }
        Ok(CellIndex(key))
    }

    pub fn coords(&self, cell: CellIndex) -> Vec<usize> {
        let mut rest = cell.0;
        let mut out = vec![0; self.dims.len()];
        for (o, d) in out.iter_mut().zip(&self.dims).rev() {
            let s = d.size() as u64;
            *o = (rest % s) as usize;
            rest /= s;
        }
        out
    }

    pub fn cell_from_coords(&self, coords: &[usize]) -> Result<CellIndex> {
        if coords.len() != self.dims.len() {
            return Err(Error::Descriptor(format!(
                "{} coordinates for {} dimensions",
                coords.len(),
                self.dims.len()
            )));
        }
        let mut key = 0u64;
        for (i, (d, &c)) in self.dims.iter().zip(coords).enumerate() {
            if c >= d.size() {
                return Err(Error::Descriptor(format!(
                    "coordinate {c} out of range in dimension {i}"
                )));
            }
            key = key * d.size() as u64 + c as u64;
        }
        Ok(CellIndex(key))
    }
}

pub fn bd_to_cell(spec: &BdSpec, bd: &BehaviourDescriptor) -> Result<CellIndex> {
    spec.cell_of(bd)
}

/// Per-dimension descriptor values; categorical labels are stored as whole numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviourDescriptor(Vec<f64>);

impl BehaviourDescriptor {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Elite {
    pub params: ParamVector,
    pub bd: BehaviourDescriptor,
    pub eval_id: u64,
    pub loop_index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Replacement {
    #[default]
    KeepFirst,
    /// Newcomers overwrite the occupant of their cell.
    ReplaceIncumbent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    spec: BdSpec,
    cells: IndexMap<CellIndex, Elite>,
    replacement: Replacement,
}

impl Archive {
    pub fn new(spec: BdSpec) -> Self {
        Self::with_replacement(spec, Replacement::KeepFirst)
    }

    pub fn with_replacement(spec: BdSpec, replacement: Replacement) -> Self {
        Self {
            spec,
            cells: IndexMap::new(),
            replacement,
        }
    }

    pub fn spec(&self) -> &BdSpec {
        &self.spec
    }

    pub fn replacement(&self) -> Replacement {
        self.replacement
    }

    pub fn total_cells(&self) -> u64 {
        self.spec.total_cells()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn coverage(&self) -> f64 {
        self.cells.len() as f64 / self.spec.total_cells() as f64
    }

    pub fn get(&self, cell: CellIndex) -> Option<&Elite> {
        self.cells.get(&cell)
    }

    /// Elites in the order their cells were first filled.
    pub fn iter(&self) -> impl Iterator<Item = (CellIndex, &Elite)> {
        self.cells.iter().map(|(k, e)| (*k, e))
    }

    pub fn elites(&self) -> impl Iterator<Item = &Elite> {
        self.cells.values()
    }

    pub fn params(&self) -> Vec<ParamVector> {
        self.cells.values().map(|e| e.params.clone()).collect()
    }

    /// Stores `elite` if its cell is vacant. Returns whether a new cell was filled.
    ///
    /// Under [`Replacement::ReplaceIncumbent`] an occupied cell is overwritten in
    /// place and the call still returns `false`.
    pub fn insert(&mut self, elite: Elite) -> Result<bool> {
        let key = self.spec.cell_of(&elite.bd)?;
        match self.cells.get_mut(&key) {
            None => {
                self.cells.insert(key, elite);
                Ok(true)
            }
            Some(slot) => {
                if self.replacement == Replacement::ReplaceIncumbent {
                    *slot = elite;
                }
                Ok(false)
            }
        }
    }

    /// Whether the cell `bd` maps to is unoccupied.
    pub fn is_vacant(&self, bd: &BehaviourDescriptor) -> Result<bool> {
        Ok(!self.cells.contains_key(&self.spec.cell_of(bd)?))
    }

    /// `n` uniform draws with replacement over the occupied cells.
    pub fn sample_elites<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<&Elite>> {
        if self.cells.is_empty() {
            return Err(Error::EmptyArchive);
        }
        Ok((0..n)
            .map(|_| &self.cells[rng.random_range(0..self.cells.len())])
            .collect())
    }

    /// Checks that every stored elite's descriptor maps back to its key.
    pub fn verify(&self) -> Result<()> {
        for (k, e) in &self.cells {
            let again = self.spec.cell_of(&e.bd)?;
            if again != *k {
                return Err(Error::format(
                    "archive",
                    format!(
                        "elite {} stored under cell {} but maps to {}",
                        e.eval_id, k.0, again.0
                    ),
                ));
            }
        }
        Ok(())
    }

    pub(crate) fn insert_unchecked(&mut self, key: CellIndex, elite: Elite) {
        self.cells.insert(key, elite);
    }
}
