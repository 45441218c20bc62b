use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use super::checkpoint;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Named trainable tensors. Iteration order is lexicographic by name, which
/// keeps checkpoints and optimizer updates deterministic.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T: Real = f32> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), t);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor<T>> {
        self.get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    /// Number of scalars under a name prefix.
    pub fn num_scalars_with_prefix(&self, prefix: &str) -> usize {
        self.tensors
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, t)| t.len())
            .sum()
    }

    pub fn extend(&mut self, other: ParamStore<T>) {
        self.tensors.extend(other.tensors);
    }

    /// Copies out the tensors whose names start with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamStore<T> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), v.cast()))
                .collect(),
        }
    }

    /// Gaussian init with std `scale / sqrt(fan_in)` for a `fan_in x fan_out`
    /// weight plus a zero `1 x fan_out` bias.
    pub fn init_linear<R: Rng + ?Sized>(
        &mut self,
        prefix: &str,
        fan_in: usize,
        fan_out: usize,
        scale: f64,
        rng: &mut R,
    ) {
        let std = scale / (fan_in as f64).sqrt();
        self.insert(
            format!("{prefix}.weight"),
            Tensor::randn(&[fan_in, fan_out], std, rng),
        );
        self.insert(format!("{prefix}.bias"), Tensor::zeros(&[1, fan_out]));
    }

    pub fn init_layer_norm(&mut self, prefix: &str, width: usize) {
        self.insert(format!("{prefix}.gamma"), Tensor::ones(&[1, width]));
        self.insert(format!("{prefix}.beta"), Tensor::zeros(&[1, width]));
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let named: Vec<(&str, &Tensor<T>)> =
            self.tensors.iter().map(|(k, v)| (k.as_str(), v)).collect();
        checkpoint::write_file(path.as_ref(), &named)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let tensors = checkpoint::read_file(path.as_ref())?;
        Ok(ParamStore {
            tensors: tensors.into_iter().map(|(k, v)| (k, v.cast())).collect(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let named: Vec<(&str, &Tensor<T>)> =
            self.tensors.iter().map(|(k, v)| (k.as_str(), v)).collect();
        checkpoint::encode(&named)
    }
}
