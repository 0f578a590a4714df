//! Layered parameter containers.
//!
//! A model's parameters are an ordered list of named layers, each a flat
//! `f64` array. Every binary operation checks that both operands share the
//! same architecture (layer names, order, and lengths). A stable global flat
//! index runs over the concatenation of layers in declared order, which is
//! what the cross-round valuation sums over.
//!
//! Values are immutable once built; all operations return new containers and
//! are safe to call from concurrent workers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer layout of a model: ordered `(name, length)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    layers: Vec<(String, usize)>,
}

impl Architecture {
    pub fn new(layers: Vec<(String, usize)>) -> Self {
        Architecture { layers }
    }

    pub fn layers(&self) -> &[(String, usize)] {
        &self.layers
    }

    pub fn total_len(&self) -> usize {
        self.layers.iter().map(|(_, n)| n).sum()
    }

    /// Flat offset of the first element of layer `j`.
    pub fn offset(&self, j: usize) -> usize {
        self.layers[..j].iter().map(|(_, n)| n).sum()
    }
}

/// One named parameter tensor stored flat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    pub values: Vec<f64>,
}

/// Model parameters as an ordered list of named layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredParams {
    layers: Vec<Layer>,
}

impl LayeredParams {
    pub fn new(layers: Vec<Layer>) -> Self {
        LayeredParams { layers }
    }

    pub fn from_values(named: Vec<(&str, Vec<f64>)>) -> Self {
        LayeredParams {
            layers: named
                .into_iter()
                .map(|(name, values)| Layer {
                    name: name.to_string(),
                    values,
                })
                .collect(),
        }
    }

    pub fn zeros(arch: &Architecture) -> Self {
        LayeredParams {
            layers: arch
                .layers()
                .iter()
                .map(|(name, n)| Layer {
                    name: name.clone(),
                    values: vec![0.0; *n],
                })
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layer(&self, j: usize) -> &Layer {
        &self.layers[j]
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn total_len(&self) -> usize {
        self.layers.iter().map(|l| l.values.len()).sum()
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::new(
            self.layers
                .iter()
                .map(|l| (l.name.clone(), l.values.len()))
                .collect(),
        )
    }

    fn check_same_arch(&self, other: &LayeredParams, op: &str) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::ArchMismatch(format!(
                "{op}: {} vs {} layers",
                self.layers.len(),
                other.layers.len()
            )));
        }
        for (a, b) in self.layers.iter().zip(&other.layers) {
            if a.name != b.name || a.values.len() != b.values.len() {
                return Err(Error::ArchMismatch(format!(
                    "{op}: layer {:?} (len {}) vs {:?} (len {})",
                    a.name,
                    a.values.len(),
                    b.name,
                    b.values.len()
                )));
            }
        }
        Ok(())
    }

    fn zip_with(&self, other: &LayeredParams, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<LayeredParams> {
        self.check_same_arch(other, op)?;
        Ok(LayeredParams {
            layers: self
                .layers
                .iter()
                .zip(&other.layers)
                .map(|(a, b)| Layer {
                    name: a.name.clone(),
                    values: a
                        .values
                        .iter()
                        .zip(&b.values)
                        .map(|(&x, &y)| f(x, y))
                        .collect(),
                })
                .collect(),
        })
    }

    /// Elementwise sum.
    pub fn add(&self, other: &LayeredParams) -> Result<LayeredParams> {
        self.zip_with(other, "add", |x, y| x + y)
    }

    /// Elementwise difference `self - other`.
    pub fn sub(&self, other: &LayeredParams) -> Result<LayeredParams> {
        self.zip_with(other, "sub", |x, y| x - y)
    }

    /// Elementwise scalar multiple.
    pub fn scale(&self, c: f64) -> LayeredParams {
        LayeredParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    name: l.name.clone(),
                    values: l.values.iter().map(|&x| c * x).collect(),
                })
                .collect(),
        }
    }

    /// Elementwise sign with `sgn(0) = 0`. Rejects NaN elements.
    pub fn sgn(&self) -> Result<LayeredParams> {
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let mut values = Vec::with_capacity(l.values.len());
            for &x in &l.values {
                if x.is_nan() {
                    return Err(Error::Numeric(format!("sgn: NaN in layer {:?}", l.name)));
                }
                values.push(sgn(x));
            }
            out.push(Layer {
                name: l.name.clone(),
                values,
            });
        }
        Ok(LayeredParams { layers: out })
    }

    /// Concatenates all layers in declared order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.total_len());
        for l in &self.layers {
            flat.extend_from_slice(&l.values);
        }
        flat
    }

    /// Inverse of [`flatten`](Self::flatten) for a known architecture.
    pub fn unflatten(flat: &[f64], arch: &Architecture) -> Result<LayeredParams> {
        if flat.len() != arch.total_len() {
            return Err(Error::Structure(format!(
                "unflatten: {} values for architecture of total length {}",
                flat.len(),
                arch.total_len()
            )));
        }
        let mut layers = Vec::with_capacity(arch.layers().len());
        let mut pos = 0;
        for (name, n) in arch.layers() {
            layers.push(Layer {
                name: name.clone(),
                values: flat[pos..pos + n].to_vec(),
            });
            pos += n;
        }
        Ok(LayeredParams { layers })
    }

    /// Max absolute element, 0 for empty containers.
    pub fn linf_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.values.iter())
            .fold(0.0, |m, &x| m.max(x.abs()))
    }

    pub fn l2_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.values.iter())
            .map(|&x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    /// Dot product over the global flat index.
    pub fn dot(&self, other: &LayeredParams) -> Result<f64> {
        self.check_same_arch(other, "dot")?;
        Ok(self
            .layers
            .iter()
            .zip(&other.layers)
            .flat_map(|(a, b)| a.values.iter().zip(&b.values))
            .map(|(&x, &y)| x * y)
            .sum())
    }
}

/// Sign of a scalar: -1, 0, or +1, with `sgn(0) = 0`.
pub fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
