//! Version-tagged JSON documents of named tensors.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const PARAM_DOC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDoc {
    pub version: u32,
    pub tensors: Vec<NamedTensor>,
}

/// Models that expose their tensors by stable name and order.
pub trait NamedParameters {
    fn named_parameters(&self) -> Vec<(String, &Tensor)>;
    fn named_parameters_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn to_param_doc(&self) -> ParamDoc {
        ParamDoc::from_named(self.named_parameters())
    }

    /// Overwrites every tensor from `doc`; names, order and shapes must match.
    fn load_param_doc(&mut self, doc: &ParamDoc) -> Result<()> {
        doc.check_version()?;
        let mut slots = self.named_parameters_mut();
        if slots.len() != doc.tensors.len() {
            return Err(Error::ParamDoc(format!(
                "expected {} tensors, document has {}",
                slots.len(),
                doc.tensors.len()
            )));
        }
        for ((name, slot), entry) in slots.iter_mut().zip(&doc.tensors) {
            if *name != entry.name {
                return Err(Error::ParamDoc(format!(
                    "expected tensor {name}, found {}",
                    entry.name
                )));
            }
            if slot.shape() != entry.shape.as_slice() {
                return Err(Error::ParamDoc(format!(
                    "tensor {name}: shape {:?} does not match {:?}",
                    entry.shape,
                    slot.shape()
                )));
            }
        }
        for ((_, slot), entry) in slots.into_iter().zip(&doc.tensors) {
            *slot = Tensor::new(entry.shape.clone(), entry.data.clone())
                .map_err(|e| Error::ParamDoc(format!("tensor {}: {e}", entry.name)))?;
        }
        Ok(())
    }
}

impl ParamDoc {
    pub fn from_named(named: Vec<(String, &Tensor)>) -> Self {
        Self {
            version: PARAM_DOC_VERSION,
            tensors: named
                .into_iter()
                .map(|(name, t)| NamedTensor {
                    name,
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn check_version(&self) -> Result<()> {
        if self.version != PARAM_DOC_VERSION {
            return Err(Error::ParamDoc(format!(
                "unsupported parameter document version {}",
                self.version
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(s)?;
        doc.check_version()?;
        Ok(doc)
    }
}
