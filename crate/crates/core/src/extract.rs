//! Optional embedding extraction through a small JSON-described network.
//!
//! Images are resized to 224x224 (triangle filter, no crop), converted to
//! RGB in the 0..255 range and the network's channel means are subtracted.
//! Layers run in order; the output of `hidden_layer` is the hidden4096
//! vector and the final output is the softmax1000 vector.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::visual::{EmbeddingVector, Layer, CATEGORY_DIM, HIDDEN_DIM};

pub const INPUT_SIZE: u32 = 224;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NetLayer {
    /// Average pooling to a `size` x `size` grid per channel, then flatten
    /// in channel-major order.
    Pool { size: usize },
    /// `weights` has one row per output.
    Dense { weights: Vec<Vec<f32>>, bias: Vec<f32> },
    Relu,
    Softmax,
    /// Repeats the input cyclically up to `out` values.
    Tile { out: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub mean: [f32; 3],
    pub layers: Vec<NetLayer>,
    /// Index of the layer whose output is the hidden representation.
    pub hidden_layer: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionFailure {
    pub image_id: String,
    pub path: PathBuf,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Extraction {
    pub vectors: Vec<EmbeddingVector>,
    pub failures: Vec<ExtractionFailure>,
}

impl Network {
    pub fn from_json(text: &str) -> Result<Self> {
        let net: Network = serde_json::from_str(text)?;
        net.check()?;
        Ok(net)
    }

    /// Loads a JSON network. Other interchange formats are not supported in
    /// this build.
    pub fn load(path: &Path) -> Result<Self> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        if ext != "json" {
            return Err(Error::CapabilityUnavailable(format!(
                "no runtime for `.{ext}` networks ({}); use the JSON network format",
                path.display()
            )));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Network::from_json(&text)
    }

    fn check(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidConfig("network has no layers".into()));
        }
        if !matches!(self.layers.first(), Some(NetLayer::Pool { size }) if *size > 0) {
            return Err(Error::InvalidConfig("the first layer must be a pool with size > 0".into()));
        }
        if self.hidden_layer >= self.layers.len() {
            return Err(Error::InvalidConfig("hidden_layer out of range".into()));
        }
        for l in &self.layers {
            if let NetLayer::Dense { weights, bias } = l {
                if weights.len() != bias.len() {
                    return Err(Error::InvalidConfig("dense layer bias length differs from row count".into()));
                }
            }
        }
        Ok(())
    }

    /// Runs the layers on channel-major preprocessed pixels of shape
    /// 3 x 224 x 224. Returns (hidden, scores).
    pub fn forward(&self, pixels: &[f32]) -> Result<(Vec<f32>, Vec<f32>)> {
        let mut x = pixels.to_vec();
        let mut hidden = None;
        for (i, layer) in self.layers.iter().enumerate() {
            x = apply(layer, &x)?;
            if i == self.hidden_layer {
                hidden = Some(x.clone());
            }
        }
        let hidden = hidden.unwrap_or_default();
        if hidden.len() != HIDDEN_DIM {
            return Err(Error::DimensionMismatch { expected: HIDDEN_DIM, found: hidden.len() });
        }
        if x.len() != CATEGORY_DIM {
            return Err(Error::DimensionMismatch { expected: CATEGORY_DIM, found: x.len() });
        }
        Ok((hidden, x))
    }
}

fn apply(layer: &NetLayer, x: &[f32]) -> Result<Vec<f32>> {
    Ok(match layer {
        NetLayer::Pool { size } => pool(x, *size)?,
        NetLayer::Dense { weights, bias } => weights
            .iter()
            .zip(bias)
            .map(|(row, b)| {
                if row.len() != x.len() {
                    return Err(Error::DimensionMismatch { expected: row.len(), found: x.len() });
                }
                Ok(row.iter().zip(x).map(|(w, v)| w * v).sum::<f32>() + b)
            })
            .collect::<Result<_>>()?,
        NetLayer::Relu => x.iter().map(|v| v.max(0.0)).collect(),
        NetLayer::Softmax => {
            let m = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let e: Vec<f32> = x.iter().map(|v| (v - m).exp()).collect();
            let s: f32 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        }
        NetLayer::Tile { out } => {
            if x.is_empty() {
                return Err(Error::InvalidInput("tile on empty input".into()));
            }
            (0..*out).map(|i| x[i % x.len()]).collect()
        }
    })
}

fn pool(x: &[f32], size: usize) -> Result<Vec<f32>> {
    let side = INPUT_SIZE as usize;
    if x.len() != 3 * side * side {
        return Err(Error::DimensionMismatch { expected: 3 * side * side, found: x.len() });
    }
    let mut out = vec![0f32; 3 * size * size];
    let mut counts = vec![0u32; size * size];
    for c in 0..3 {
        for y in 0..side {
            for xx in 0..side {
                let cell = (y * size / side) * size + xx * size / side;
                out[c * size * size + cell] += x[c * side * side + y * side + xx];
                if c == 0 {
                    counts[cell] += 1;
                }
            }
        }
    }
    for c in 0..3 {
        for cell in 0..size * size {
            out[c * size * size + cell] /= counts[cell].max(1) as f32;
        }
    }
    Ok(out)
}

#[cfg(feature = "extract")]
fn preprocess(path: &Path, mean: [f32; 3]) -> std::result::Result<Vec<f32>, String> {
    use image::imageops::FilterType;
    let img = image::open(path).map_err(|e| e.to_string())?;
    let rgb = img.resize_exact(INPUT_SIZE, INPUT_SIZE, FilterType::Triangle).to_rgb8();
    let side = INPUT_SIZE as usize;
    let mut out = vec![0f32; 3 * side * side];
    for (x, y, p) in rgb.enumerate_pixels() {
        for c in 0..3 {
            out[c * side * side + y as usize * side + x as usize] = p[c] as f32 - mean[c];
        }
    }
    Ok(out)
}

#[cfg(not(feature = "extract"))]
fn preprocess(_path: &Path, _mean: [f32; 3]) -> std::result::Result<Vec<f32>, String> {
    Err("image decoding is not built in".into())
}

/// Extracts both layers for every `(image_id, path)`. Undecodable images
/// become failure records; the rest of the batch continues.
pub fn extract_embeddings(net: &Network, images: &[(String, PathBuf)]) -> Result<Extraction> {
    if !cfg!(feature = "extract") {
        return Err(Error::CapabilityUnavailable(
            "built without the `extract` feature".into(),
        ));
    }
    let results: Vec<std::result::Result<[EmbeddingVector; 2], ExtractionFailure>> = images
        .par_iter()
        .map(|(id, path)| {
            let fail = |message: String| ExtractionFailure {
                image_id: id.clone(),
                path: path.clone(),
                message,
            };
            let pixels = preprocess(path, net.mean).map_err(fail)?;
            let (hidden, scores) = net.forward(&pixels).map_err(|e| fail(e.to_string()))?;
            let h = EmbeddingVector::new(id.clone(), Layer::Hidden4096, hidden).map_err(|e| fail(e.to_string()))?;
            let s = EmbeddingVector::new(id.clone(), Layer::Softmax1000, scores).map_err(|e| fail(e.to_string()))?;
            Ok([h, s])
        })
        .collect();
    let mut out = Extraction::default();
    for r in results {
        match r {
            Ok(pair) => out.vectors.extend(pair),
            Err(f) => out.failures.push(f),
        }
    }
    Ok(out)
}
