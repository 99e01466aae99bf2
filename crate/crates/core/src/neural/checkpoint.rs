//! Parameter container.
//!
//! A checkpoint is a JSON document
//!
//! ```json
//! { "format": "ddpg-portfolio-params", "version": 1,
//!   "tensors": [ { "name": "actor.0.weight", "shape": [256, 42], "values": [ ... ] }, ... ] }
//! ```
//!
//! `values` are row-major `f64`s printed with shortest round-trip formatting,
//! so a save/load cycle reproduces every bit.

use serde::{Deserialize, Serialize};

use super::{NeuralError, Parameters};

pub const CHECKPOINT_FORMAT: &str = "ddpg-portfolio-params";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamFile {
    pub format: String,
    pub version: u32,
    pub tensors: Vec<NamedTensor>,
}

impl Default for ParamFile {
    fn default() -> Self {
        Self { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, tensors: vec![] }
    }
}

impl ParamFile {
    /// Append every parameter of `net` under `prefix.`.
    pub fn push<P: Parameters>(&mut self, prefix: &str, net: &P) {
        for (name, t) in net.parameters() {
            self.tensors.push(NamedTensor {
                name: format!("{prefix}.{name}"),
                shape: t.shape.clone(),
                values: t.values.clone(),
            });
        }
    }

    /// Copy the tensors stored under `prefix.` into `net`, checking names
    /// and shapes.
    pub fn load_into<P: Parameters>(&self, prefix: &str, net: &mut P) -> Result<(), NeuralError> {
        self.check_header()?;
        let names: Vec<String> = net.parameters().into_iter().map(|(n, _)| format!("{prefix}.{n}")).collect();
        for (name, dst) in names.iter().zip(net.parameters_mut()) {
            let src = self
                .tensors
                .iter()
                .find(|t| &t.name == name)
                .ok_or_else(|| NeuralError::Checkpoint(format!("missing tensor `{name}`")))?;
            if src.shape != dst.shape || src.values.len() != dst.values.len() {
                return Err(NeuralError::Checkpoint(format!(
                    "`{name}` has shape {:?}, expected {:?}",
                    src.shape, dst.shape
                )));
            }
            dst.values.copy_from_slice(&src.values);
        }
        Ok(())
    }

    pub fn check_header(&self) -> Result<(), NeuralError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(NeuralError::Checkpoint(format!("unknown format `{}`", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(NeuralError::Checkpoint(format!("unsupported version {}", self.version)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, DenseLayer};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = DenseLayer::new(7, 3, Activation::Relu, &mut rng);
        let mut file = ParamFile::default();
        file.push("fc", &layer);
        let text = serde_json::to_string(&file).unwrap();
        let back: ParamFile = serde_json::from_str(&text).unwrap();
        let mut other = DenseLayer::new(7, 3, Activation::Relu, &mut rng);
        back.load_into("fc", &mut other).unwrap();
        assert_eq!(other.weight.values, layer.weight.values);
        assert_eq!(other.bias.values, layer.bias.values);
    }

    #[test]
    fn shape_and_name_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut file = ParamFile::default();
        file.push("fc", &DenseLayer::new(7, 3, Activation::Relu, &mut rng));
        let mut wrong = DenseLayer::new(6, 3, Activation::Relu, &mut rng);
        assert!(file.load_into("fc", &mut wrong).is_err());
        assert!(file.load_into("other", &mut wrong).is_err());
        let mut bad = file.clone();
        bad.version = 99;
        assert!(bad.check_header().is_err());
    }
}
