use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Flat, ordered container of named tensors; the on-disk weight format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub format_version: u32,
    pub tensors: Vec<NamedTensor>,
}

impl Default for WeightSet {
    fn default() -> Self {
        WeightSet {
            format_version: WEIGHTS_FORMAT_VERSION,
            tensors: Vec::new(),
        }
    }
}

impl WeightSet {
    pub fn push(&mut self, name: impl Into<String>, tensor: &Tensor) {
        self.tensors.push(NamedTensor {
            name: name.into(),
            shape: tensor.shape().to_vec(),
            data: tensor.data().to_vec(),
        });
    }

    pub fn get(&self, name: &str) -> Result<Tensor> {
        let t = self
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::invalid(alloc::format!("missing tensor `{name}`")))?;
        Tensor::new(t.shape.clone(), t.data.clone())
    }

    /// Loads `name` into `dst`, checking the shape.
    pub fn load_into(&self, name: &str, dst: &mut Tensor) -> Result<()> {
        let t = self.get(name)?;
        if t.shape() != dst.shape() {
            return Err(Error::shape(
                "weights",
                alloc::format!("`{name}`: stored {:?}, expected {:?}", t.shape(), dst.shape()),
            ));
        }
        *dst = t;
        Ok(())
    }

    pub fn check_version(&self) -> Result<()> {
        if self.format_version != WEIGHTS_FORMAT_VERSION {
            return Err(Error::invalid(alloc::format!(
                "unsupported weight format version {}",
                self.format_version
            )));
        }
        Ok(())
    }
}
