//! Parameter bundles on disk: a `manifest.json` naming the block, its seed
//! and integer attributes, plus one flat-text tensor file per parameter.

use super::{DeepHeadConfig, GamParams, SppfConfig};
use crate::ndtensor::{ChannelMlp, Tensor, TensorError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("bundle holds block {found:?}, expected {expected:?}")]
    WrongBlock { expected: String, found: String },
    #[error("bundle is missing {0:?}")]
    Missing(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    block: String,
    seed: Option<u64>,
    attributes: BTreeMap<String, u64>,
    tensors: Vec<ManifestEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    file: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBundle {
    pub block: String,
    pub seed: Option<u64>,
    pub attributes: BTreeMap<String, u64>,
    pub tensors: Vec<(String, Tensor)>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn bias_tensor(b: &[f64]) -> Tensor {
    Tensor::new(vec![b.len()], b.to_vec()).expect("bias values are finite")
}

impl ParamBundle {
    pub fn new(block: &str, seed: Option<u64>) -> Self {
        Self {
            block: block.to_string(),
            seed,
            attributes: BTreeMap::new(),
            tensors: Vec::new(),
        }
    }

    fn with(mut self, name: &str, t: Tensor) -> Self {
        self.tensors.push((name.to_string(), t));
        self
    }

    fn attr(mut self, name: &str, v: u64) -> Self {
        self.attributes.insert(name.to_string(), v);
        self
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor, BundleError> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| BundleError::Missing(name.to_string()))
    }

    fn attribute(&self, name: &str) -> Result<u64, BundleError> {
        self.attributes
            .get(name)
            .copied()
            .ok_or_else(|| BundleError::Missing(name.to_string()))
    }

    fn expect_block(&self, expected: &str) -> Result<(), BundleError> {
        if self.block != expected {
            return Err(BundleError::WrongBlock {
                expected: expected.into(),
                found: self.block.clone(),
            });
        }
        Ok(())
    }

    pub fn write_dir(&self, dir: &Path) -> Result<(), BundleError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut entries = Vec::new();
        for (name, t) in &self.tensors {
            let file = format!("{name}.txt");
            let path = dir.join(&file);
            fs::write(&path, t.to_text()).map_err(io_err(&path))?;
            entries.push(ManifestEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                file,
            });
        }
        let manifest = Manifest {
            block: self.block.clone(),
            seed: self.seed,
            attributes: self.attributes.clone(),
            tensors: entries,
        };
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(io_err(&path))
    }

    pub fn read_dir(dir: &Path) -> Result<Self, BundleError> {
        let path = dir.join(MANIFEST_FILE);
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&path).map_err(io_err(&path))?)?;
        let mut tensors = Vec::new();
        for e in manifest.tensors {
            let p = dir.join(&e.file);
            let t = Tensor::from_text(&fs::read_to_string(&p).map_err(io_err(&p))?)?;
            if t.shape() != e.shape.as_slice() {
                return Err(TensorError::Shape(format!(
                    "{} holds {:?}, manifest says {:?}",
                    e.file,
                    t.shape(),
                    e.shape
                ))
                .into());
            }
            tensors.push((e.name, t));
        }
        Ok(Self {
            block: manifest.block,
            seed: manifest.seed,
            attributes: manifest.attributes,
            tensors,
        })
    }
}

impl GamParams {
    pub fn to_bundle(&self, seed: Option<u64>) -> ParamBundle {
        ParamBundle::new("gam", seed)
            .attr("reduction_ratio", self.reduction_ratio as u64)
            .with("mlp.w1", self.mlp.w1.clone())
            .with("mlp.b1", self.mlp.b1.clone())
            .with("mlp.w2", self.mlp.w2.clone())
            .with("mlp.b2", self.mlp.b2.clone())
            .with("spatial.weight", self.spatial_weight.clone())
            .with("spatial.bias", bias_tensor(&[self.spatial_bias]))
    }

    pub fn from_bundle(b: &ParamBundle) -> Result<Self, BundleError> {
        b.expect_block("gam")?;
        let mlp = ChannelMlp::new(
            b.tensor("mlp.w1")?.clone(),
            b.tensor("mlp.b1")?.clone(),
            b.tensor("mlp.w2")?.clone(),
            b.tensor("mlp.b2")?.clone(),
        )?;
        let bias = b.tensor("spatial.bias")?;
        if bias.len() != 1 {
            return Err(TensorError::Shape("spatial.bias must hold one value".into()).into());
        }
        Ok(GamParams::new(
            b.attribute("reduction_ratio")? as usize,
            mlp,
            b.tensor("spatial.weight")?.clone(),
            bias.data()[0],
        )?)
    }
}

impl SppfConfig {
    pub fn to_bundle(&self, seed: Option<u64>) -> ParamBundle {
        ParamBundle::new("sppf", seed)
            .attr("kernel", self.kernel as u64)
            .with("entry.weight", self.entry_weight.clone())
            .with("entry.bias", bias_tensor(&self.entry_bias))
            .with("exit.weight", self.exit_weight.clone())
            .with("exit.bias", bias_tensor(&self.exit_bias))
    }

    pub fn from_bundle(b: &ParamBundle) -> Result<Self, BundleError> {
        b.expect_block("sppf")?;
        Ok(SppfConfig::new(
            b.attribute("kernel")? as usize,
            b.tensor("entry.weight")?.clone(),
            b.tensor("entry.bias")?.data().to_vec(),
            b.tensor("exit.weight")?.clone(),
            b.tensor("exit.bias")?.data().to_vec(),
        )?)
    }
}

impl DeepHeadConfig {
    pub fn to_bundle(&self, seed: Option<u64>) -> ParamBundle {
        ParamBundle::new("deep_head", seed)
            .with("conv1.weight", self.conv1_weight.clone())
            .with("conv1.bias", bias_tensor(&self.conv1_bias))
            .with("conv2.weight", self.conv2_weight.clone())
            .with("conv2.bias", bias_tensor(&self.conv2_bias))
            .with("conv3.weight", self.conv3_weight.clone())
            .with("conv3.bias", bias_tensor(&self.conv3_bias))
    }

    pub fn from_bundle(b: &ParamBundle) -> Result<Self, BundleError> {
        b.expect_block("deep_head")?;
        let layer = |i: usize| -> Result<(Tensor, Vec<f64>), BundleError> {
            Ok((
                b.tensor(&format!("conv{i}.weight"))?.clone(),
                b.tensor(&format!("conv{i}.bias"))?.data().to_vec(),
            ))
        };
        Ok(DeepHeadConfig::new(layer(1)?, layer(2)?, layer(3)?)?)
    }
}
