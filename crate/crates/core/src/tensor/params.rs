use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

/// Named learnable matrices.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

#[derive(Serialize, Deserialize)]
struct NamedMatrix {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    schema_version: u32,
    params: Vec<NamedMatrix>,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Uniform Glorot initialisation.
    pub fn add_glorot(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        rng: &mut impl Rng,
    ) -> ParamId {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-limit..limit))
            .collect();
        self.add(name, Matrix { rows, cols, data })
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> ParamId {
        self.add(name, Matrix::zeros(rows, cols))
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Learnable scalars across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|m| m.data.len()).sum()
    }

    pub fn values(&self) -> &[Matrix] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Matrix] {
        &mut self.values
    }

    /// Overwrites every value from `other`, which must have the same layout.
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<()> {
        self.check_layout(&other.names, other.values.iter().map(Matrix::shape))?;
        self.values.clone_from(&other.values);
        Ok(())
    }

    fn check_layout(
        &self,
        names: &[String],
        shapes: impl Iterator<Item = (usize, usize)>,
    ) -> Result<()> {
        if names.len() != self.names.len() {
            return Err(Error::Parse(format!(
                "checkpoint has {} parameters, model has {}",
                names.len(),
                self.names.len()
            )));
        }
        for ((name, shape), (own, value)) in names
            .iter()
            .zip(shapes)
            .zip(self.names.iter().zip(&self.values))
        {
            if name != own {
                return Err(Error::Parse(format!(
                    "parameter `{name}` found where `{own}` expected"
                )));
            }
            if shape != value.shape() {
                return Err(Error::Shape {
                    op: "load parameters",
                    left: value.shape(),
                    right: shape,
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CheckpointFile {
            schema_version: CHECKPOINT_VERSION,
            params: self
                .names
                .iter()
                .zip(&self.values)
                .map(|(name, m)| NamedMatrix {
                    name: name.clone(),
                    rows: m.rows,
                    cols: m.cols,
                    data: m.data.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&file).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Loads values into this store; names and shapes must match exactly.
    pub fn load_json(&mut self, text: &str) -> Result<()> {
        let file: CheckpointFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.schema_version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: file.schema_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let names: Vec<String> = file.params.iter().map(|p| p.name.clone()).collect();
        self.check_layout(&names, file.params.iter().map(|p| (p.rows, p.cols)))?;
        for (slot, p) in self.values.iter_mut().zip(file.params) {
            *slot = Matrix::from_vec(p.rows, p.cols, p.data)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.load_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn store(seed: u64) -> ParamStore {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut s = ParamStore::new();
        s.add_glorot("w0", 3, 4, &mut rng);
        s.add_zeros("b0", 1, 4);
        s
    }

    #[test]
    fn checkpoint_round_trip() {
        let a = store(1);
        let mut b = store(2);
        assert_ne!(a, b);
        b.load_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shape_checked_load() {
        let a = store(1);
        let mut other = ParamStore::new();
        other.add_zeros("w0", 4, 3);
        other.add_zeros("b0", 1, 4);
        assert!(matches!(
            other.load_json(&a.to_json().unwrap()),
            Err(Error::Shape { .. })
        ));
        let mut renamed = ParamStore::new();
        renamed.add_zeros("w1", 3, 4);
        renamed.add_zeros("b0", 1, 4);
        assert!(renamed.load_json(&a.to_json().unwrap()).is_err());
    }

    #[test]
    fn version_checked() {
        let text = store(1)
            .to_json()
            .unwrap()
            .replace("\"schema_version\":1", "\"schema_version\":2");
        assert!(matches!(
            store(1).load_json(&text),
            Err(Error::Version { found: 2, .. })
        ));
    }
}
