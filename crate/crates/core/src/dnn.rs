//! DNN model descriptors: per-layer workload (FLOPs) and intermediate data size.
//!
//! A model is an ordered chain of convolution/pooling layers followed by
//! fully-connected layers. Partition point `phi` is 1-based: layers
//! `1..phi-1` run on the client vehicle and `phi..=L` on an edge node, so
//! `phi = 1` is a full offload and `phi = L + 1` is fully local.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    /// Convolution or pooling layer with input `H x W x c_in`.
    Conv {
        #[serde(rename = "H")]
        h: u64,
        #[serde(rename = "W")]
        w: u64,
        c_in: u64,
        c_out: u64,
        ker: u64,
    },
    /// Fully-connected layer.
    Fc { u_in: u64, u_out: u64 },
}

impl LayerSpec {
    pub fn is_conv(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. })
    }

    fn validate(&self) -> Result<()> {
        let dims: &[u64] = match self {
            LayerSpec::Conv {
                h,
                w,
                c_in,
                c_out,
                ker,
            } => &[*h, *w, *c_in, *c_out, *ker],
            LayerSpec::Fc { u_in, u_out } => &[*u_in, *u_out],
        };
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidModel(format!(
                "layer {self:?} has a zero dimension"
            )));
        }
        Ok(())
    }
}

/// FLOPs of a single layer.
///
/// Conv/pool: `2 H W (c_in ker^2 + 1) c_out`. Fully connected: `(2 u_in - 1) u_out`.
pub fn layer_workload(layer: &LayerSpec) -> u64 {
    match *layer {
        LayerSpec::Conv {
            h,
            w,
            c_in,
            c_out,
            ker,
        } => 2 * h * w * (c_in * ker * ker + 1) * c_out,
        LayerSpec::Fc { u_in, u_out } => (2 * u_in - 1) * u_out,
    }
}

/// Bytes of the layer's input tensor.
pub fn layer_input_bytes(layer: &LayerSpec, rho: u64) -> u64 {
    match *layer {
        LayerSpec::Conv { h, w, c_in, .. } => h * w * c_in * rho,
        LayerSpec::Fc { u_in, .. } => u_in * rho,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    type_id: usize,
    #[serde(default)]
    name: Option<String>,
    rho_bytes: u64,
    layers: Vec<LayerSpec>,
}

/// A validated DNN model with cached per-layer workloads and input sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct DnnModel {
    pub type_id: usize,
    pub name: String,
    pub rho: u64,
    layers: Vec<LayerSpec>,
    /// Index (1-based) of the last conv/pool layer.
    last_conv: usize,
    workloads: Vec<u64>,
    input_bytes: Vec<u64>,
    /// `prefix[l]` = sum of the first `l` layer workloads.
    prefix: Vec<u64>,
}

const BUILTIN_MODELS: &[(&str, &str)] = &[
    ("alexnet", include_str!("../models/alexnet.json")),
    ("resnet18", include_str!("../models/resnet18.json")),
    ("vgg16", include_str!("../models/vgg16.json")),
];

impl DnnModel {
    pub fn new(type_id: usize, name: impl Into<String>, rho: u64, layers: Vec<LayerSpec>) -> Result<Self> {
        if rho == 0 {
            return Err(Error::InvalidModel("rho_bytes must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::InvalidModel("model has no layers".into()));
        }
        for layer in &layers {
            layer.validate()?;
        }
        let last_conv = layers.iter().take_while(|l| l.is_conv()).count();
        if last_conv == 0 {
            return Err(Error::InvalidModel(
                "first layer must be a convolution/pooling layer".into(),
            ));
        }
        if let Some(pos) = layers[last_conv..].iter().position(|l| l.is_conv()) {
            return Err(Error::InvalidModel(format!(
                "conv layer {} follows a fully-connected layer",
                last_conv + pos + 1
            )));
        }
        let workloads: Vec<u64> = layers.iter().map(layer_workload).collect();
        let input_bytes = layers.iter().map(|l| layer_input_bytes(l, rho)).collect();
        let mut prefix = Vec::with_capacity(layers.len() + 1);
        prefix.push(0);
        for w in &workloads {
            prefix.push(prefix.last().unwrap() + w);
        }
        Ok(Self {
            type_id,
            name: name.into(),
            rho,
            layers,
            last_conv,
            workloads,
            input_bytes,
            prefix,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidModel(e.to_string()))?;
        let name = file.name.unwrap_or_else(|| format!("type{}", file.type_id));
        Self::new(file.type_id, name, file.rho_bytes, file.layers)
    }

    /// Loads a model descriptor from a JSON file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// One of the descriptors shipped with the crate (`alexnet`, `resnet18`, `vgg16`).
    pub fn builtin(name: &str) -> Result<Self> {
        BUILTIN_MODELS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::InvalidModel(format!("unknown builtin model `{name}`")))
            .and_then(|(_, text)| Self::from_json(text))
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            type_id: self.type_id,
            name: Some(self.name.clone()),
            rho_bytes: self.rho,
            layers: self.layers.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    /// Number of layers `L`.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn last_conv(&self) -> usize {
        self.last_conv
    }

    /// Workload of layer `l` (1-based).
    pub fn workload(&self, l: usize) -> u64 {
        self.workloads[l - 1]
    }

    /// Input bytes of layer `l` (1-based).
    pub fn input_bytes(&self, l: usize) -> u64 {
        self.input_bytes[l - 1]
    }

    pub fn workloads(&self) -> &[u64] {
        &self.workloads
    }

    pub fn input_sizes(&self) -> &[u64] {
        &self.input_bytes
    }

    pub fn total_workload(&self) -> u64 {
        *self.prefix.last().unwrap()
    }

    /// Number of valid partition points, `L + 1`.
    pub fn num_partitions(&self) -> usize {
        self.layers.len() + 1
    }

    /// Splits the model at `phi` into `(local, remote)` FLOPs.
    pub fn partition_workloads(&self, phi: usize) -> Result<(u64, u64)> {
        let n = self.num_layers();
        if phi < 1 || phi > n + 1 {
            return Err(Error::OutOfRange {
                what: "partition point",
                value: phi as i64,
                lo: 1,
                hi: n as i64 + 1,
            });
        }
        Ok(self.split_unchecked(phi))
    }

    pub(crate) fn split_unchecked(&self, phi: usize) -> (u64, u64) {
        let local = self.prefix[phi - 1];
        (local, self.total_workload() - local)
    }

    /// Remote FLOPs for partition point `phi`; zero when fully local.
    pub(crate) fn remote_workload(&self, phi: usize) -> f64 {
        self.split_unchecked(phi).1 as f64
    }

    pub(crate) fn local_workload(&self, phi: usize) -> f64 {
        self.split_unchecked(phi).0 as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn conv(h: u64, c_in: u64, c_out: u64, ker: u64) -> LayerSpec {
        LayerSpec::Conv {
            h,
            w: h,
            c_in,
            c_out,
            ker,
        }
    }

    #[test]
    fn workload_examples() {
        assert_eq!(layer_workload(&conv(224, 3, 64, 3)), 179_830_784);
        assert_eq!(layer_workload(&LayerSpec::Fc { u_in: 4096, u_out: 1000 }), 8_191_000);
        assert_eq!(layer_workload(&LayerSpec::Fc { u_in: 1, u_out: 1 }), 1);
    }

    #[test]
    fn input_bytes_examples() {
        assert_eq!(layer_input_bytes(&conv(224, 3, 64, 3), 4), 602_112);
        assert_eq!(layer_input_bytes(&LayerSpec::Fc { u_in: 4096, u_out: 1 }, 4), 16_384);
        assert_eq!(layer_input_bytes(&LayerSpec::Fc { u_in: 1, u_out: 1 }, 1), 1);
    }

    #[test]
    fn partition_two_layer_model() {
        // B = (10, 20): conv 1x1x1 -> 2*(1+1)*c_out = 4 c_out; fc (2u_in-1) u_out.
        let m = DnnModel::new(
            0,
            "tiny",
            4,
            vec![conv(1, 1, 5, 1), LayerSpec::Fc { u_in: 1, u_out: 20 }],
        )
        .unwrap();
        assert_eq!(m.workloads(), &[20, 20]);
        let m = DnnModel::new(
            0,
            "tiny",
            4,
            vec![
                LayerSpec::Conv { h: 1, w: 1, c_in: 4, c_out: 1, ker: 1 },
                LayerSpec::Fc { u_in: 1, u_out: 20 },
            ],
        )
        .unwrap();
        assert_eq!(m.workloads(), &[10, 20]);
        assert_eq!(m.partition_workloads(1).unwrap(), (0, 30));
        assert_eq!(m.partition_workloads(2).unwrap(), (10, 20));
        assert_eq!(m.partition_workloads(3).unwrap(), (30, 0));
        assert!(matches!(
            m.partition_workloads(0),
            Err(Error::OutOfRange { .. })
        ));
        assert!(m.partition_workloads(4).is_err());
    }

    #[test]
    fn minimal_descriptor_parses() {
        let text = r#"{"type_id":3,"rho_bytes":4,"layers":[
            {"kind":"conv","H":8,"W":8,"c_in":3,"c_out":4,"ker":3},
            {"kind":"fc","u_in":16,"u_out":2}]}"#;
        let m = DnnModel::from_json(text).unwrap();
        assert_eq!(m.last_conv(), 1);
        assert_eq!(m.num_layers(), 2);
        assert_eq!(m.type_id, 3);
    }

    #[test]
    fn fc_before_conv_rejected() {
        let text = r#"{"type_id":0,"rho_bytes":4,"layers":[
            {"kind":"conv","H":8,"W":8,"c_in":3,"c_out":4,"ker":3},
            {"kind":"fc","u_in":16,"u_out":2},
            {"kind":"conv","H":8,"W":8,"c_in":3,"c_out":4,"ker":3}]}"#;
        assert!(matches!(DnnModel::from_json(text), Err(Error::InvalidModel(_))));
        let text = r#"{"type_id":0,"rho_bytes":4,"layers":[{"kind":"fc","u_in":16,"u_out":2}]}"#;
        assert!(DnnModel::from_json(text).is_err());
    }

    #[test]
    fn zero_dims_and_malformed_rejected() {
        let text = r#"{"type_id":0,"rho_bytes":4,"layers":[
            {"kind":"conv","H":0,"W":8,"c_in":3,"c_out":4,"ker":3}]}"#;
        assert!(DnnModel::from_json(text).is_err());
        let text = r#"{"type_id":0,"rho_bytes":0,"layers":[
            {"kind":"conv","H":1,"W":8,"c_in":3,"c_out":4,"ker":3}]}"#;
        assert!(DnnModel::from_json(text).is_err());
        assert!(DnnModel::from_json("{not json").is_err());
    }

    #[test]
    fn builtins_load() {
        for name in ["alexnet", "resnet18", "vgg16"] {
            let m = DnnModel::builtin(name).unwrap();
            assert_eq!(m.name, name);
        }
        assert!(DnnModel::builtin("lenet").is_err());
    }
}
