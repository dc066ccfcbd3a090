//! Model file serialization.
//!
//! A model is a single JSON document:
//! `{"input_shape":[...], "classes":m, "layers":[{"kind":"dense","in":I,"out":O,
//! "weights":[...],"bias":[...]}, {"kind":"relu"}, ...]}`.
//! Floats are written in decimal with 17 significant digits, so
//! `load(save(n))` reproduces every weight bit for bit.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use serde::ser::{SerializeMap, SerializeSeq};
use serde::{Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::network::{Layer, Network};

struct SigFigFormatter;

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{:.16e}", value)
    }
}

struct FileLayer<'a>(&'a Layer);

impl Serialize for FileLayer<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(None)?;
        map.serialize_entry("kind", self.0.kind_name())?;
        match self.0 {
            Layer::Dense {
                in_dim,
                out_dim,
                weights,
                bias,
            } => {
                map.serialize_entry("in", in_dim)?;
                map.serialize_entry("out", out_dim)?;
                map.serialize_entry("weights", weights)?;
                map.serialize_entry("bias", bias)?;
            }
            Layer::Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                weights,
                bias,
            } => {
                map.serialize_entry("in_channels", in_channels)?;
                map.serialize_entry("out_channels", out_channels)?;
                map.serialize_entry("kernel_h", kernel_h)?;
                map.serialize_entry("kernel_w", kernel_w)?;
                map.serialize_entry("stride", stride)?;
                map.serialize_entry("weights", weights)?;
                map.serialize_entry("bias", bias)?;
            }
            Layer::Relu | Layer::Flatten => {}
            Layer::MaxPool2d {
                window_h,
                window_w,
                stride,
            } => {
                map.serialize_entry("window_h", window_h)?;
                map.serialize_entry("window_w", window_w)?;
                map.serialize_entry("stride", stride)?;
            }
            Layer::Dropout { rate } => {
                map.serialize_entry("rate", rate)?;
            }
            Layer::BatchNormAffine { scale, shift } => {
                map.serialize_entry("scale", scale)?;
                map.serialize_entry("shift", shift)?;
            }
        }
        map.end()
    }
}

struct FileModel<'a>(&'a Network);

impl Serialize for FileModel<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(3))?;
        map.serialize_entry("input_shape", &self.0.input_shape)?;
        map.serialize_entry("classes", &self.0.classes)?;
        struct Layers<'a>(&'a [Layer]);
        impl Serialize for Layers<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut seq = s.serialize_seq(Some(self.0.len()))?;
                for l in self.0 {
                    seq.serialize_element(&FileLayer(l))?;
                }
                seq.end()
            }
        }
        map.serialize_entry("layers", &Layers(&self.0.layers))?;
        map.end()
    }
}

pub fn save_model(network: &Network, path: impl AsRef<Path>) -> Result<()> {
    network.validate()?;
    let file = File::create(path)?;
    let mut writer = BufWriter::new(file);
    let mut ser = serde_json::Serializer::with_formatter(&mut writer, SigFigFormatter);
    FileModel(network)
        .serialize(&mut ser)
        .map_err(Error::Json)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let file = File::open(path)?;
    let value: Value = serde_json::from_reader(BufReader::new(file))?;
    network_from_value(&value)
}

fn network_from_value(value: &Value) -> Result<Network> {
    let obj = value
        .as_object()
        .ok_or_else(|| Error::ModelFile("top level must be a JSON object".into()))?;
    let input_shape = obj
        .get("input_shape")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::ModelFile("missing input_shape array".into()))?
        .iter()
        .map(|v| {
            v.as_u64()
                .filter(|&d| d > 0)
                .map(|d| d as usize)
                .ok_or_else(|| Error::ModelFile("input_shape must hold positive integers".into()))
        })
        .collect::<Result<Vec<usize>>>()?;
    let classes = obj
        .get("classes")
        .and_then(Value::as_u64)
        .filter(|&m| m > 0)
        .ok_or_else(|| Error::ModelFile("missing positive classes count".into()))?
        as usize;
    let raw_layers = obj
        .get("layers")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::ModelFile("missing layers array".into()))?;

    let mut layers = Vec::with_capacity(raw_layers.len());
    for (i, raw) in raw_layers.iter().enumerate() {
        layers.push(layer_from_value(raw, i)?);
    }
    Network::new(input_shape, classes, layers)
}

fn layer_from_value(value: &Value, index: usize) -> Result<Layer> {
    let parse_err = |message: String| Error::ModelParse {
        layer: index,
        message,
    };
    let obj = value
        .as_object()
        .ok_or_else(|| parse_err("layer must be a JSON object".into()))?;
    let kind = obj
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| parse_err("missing kind".into()))?;

    let usize_field = |name: &str| -> Result<usize> {
        obj.get(name)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| parse_err(format!("missing integer field {name}")))
    };
    let f64_vec_field = |name: &str| -> Result<Vec<f64>> {
        let arr = obj
            .get(name)
            .and_then(Value::as_array)
            .ok_or_else(|| parse_err(format!("missing array field {name}")))?;
        arr.iter()
            .map(|v| {
                v.as_f64()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| parse_err(format!("non-finite or non-numeric entry in {name}")))
            })
            .collect()
    };

    match kind {
        "dense" => Ok(Layer::Dense {
            in_dim: usize_field("in")?,
            out_dim: usize_field("out")?,
            weights: f64_vec_field("weights")?,
            bias: f64_vec_field("bias")?,
        }),
        "conv2d" => Ok(Layer::Conv2d {
            in_channels: usize_field("in_channels")?,
            out_channels: usize_field("out_channels")?,
            kernel_h: usize_field("kernel_h")?,
            kernel_w: usize_field("kernel_w")?,
            stride: usize_field("stride")?,
            weights: f64_vec_field("weights")?,
            bias: f64_vec_field("bias")?,
        }),
        "relu" => Ok(Layer::Relu),
        "maxpool2d" => Ok(Layer::MaxPool2d {
            window_h: usize_field("window_h")?,
            window_w: usize_field("window_w")?,
            stride: usize_field("stride")?,
        }),
        "flatten" => Ok(Layer::Flatten),
        "dropout" => {
            let rate = obj
                .get("rate")
                .and_then(Value::as_f64)
                .ok_or_else(|| parse_err("missing rate".into()))?;
            Ok(Layer::Dropout { rate })
        }
        "batchnorm-affine" => Ok(Layer::BatchNormAffine {
            scale: f64_vec_field("scale")?,
            shift: f64_vec_field("shift")?,
        }),
        other => Err(parse_err(format!("unknown layer kind {other:?}"))),
    }
}

/// FNV-1a 64-bit hash of a file's bytes, hex encoded. Stamped into report
/// headers so every table row names the exact model it came from.
pub fn model_file_hash(path: impl AsRef<Path>) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    Ok(format!("{h:016x}"))
}
