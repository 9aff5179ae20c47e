use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a tensor inside a [`TensorStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

/// Ordered collection of named tensors (parameters or running statistics).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl TensorStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> TensorId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate tensor {name}");
        self.names.push(name);
        self.tensors.push(value);
        TensorId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: TensorId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: TensorId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: TensorId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<TensorId> {
        self.names.iter().position(|n| n == name).map(TensorId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = TensorId> {
        (0..self.tensors.len()).map(TensorId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Zero-filled store with the same names and shapes.
    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    /// Overwrites every tensor with the same-named tensor in `other`.
    pub fn load_from(&mut self, other: &TensorStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                self.len(),
                other.len()
            )));
        }
        for (i, name) in self.names.iter().enumerate() {
            let src = other
                .find(name)
                .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
            let src = other.get(src);
            if src.shape() != self.tensors[i].shape() {
                return Err(Error::Format(format!(
                    "tensor {name}: shape {:?} vs expected {:?}",
                    src.shape(),
                    self.tensors[i].shape()
                )));
            }
            self.tensors[i] = src.clone();
        }
        Ok(())
    }
}
