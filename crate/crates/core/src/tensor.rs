//! Dense row-major `f64` tensors.
//!
//! Scalars are rank-0 values with a single element. Only scalar-to-tensor
//! broadcasting is supported anywhere in the crate.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Shape = Vec<usize>;

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Value {
    shape: Shape,
    data: Vec<f64>,
}

impl Value {
    pub fn new(shape: Shape, data: Vec<f64>) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::Shape(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(x: f64) -> Self {
        Self { shape: vec![], data: vec![x] }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self { shape: vec![data.len()], data }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "matrix data length");
        Self { shape: vec![rows, cols], data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; numel(shape)] }
    }

    pub fn filled(shape: &[usize], x: f64) -> Self {
        Self { shape: shape.to_vec(), data: vec![x; numel(shape)] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// The single element of a one-element value of any rank.
    pub fn item(&self) -> f64 {
        assert_eq!(self.data.len(), 1, "item() on value of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshaped(mut self, shape: Shape) -> Result<Self> {
        if numel(&shape) != self.data.len() {
            return Err(Error::Shape(format!("cannot reshape {:?} to {:?}", self.shape, shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &Value, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape, other.shape, "zip_map shape mismatch");
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Value) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add_scaled(&mut self, other: &Value, k: f64) {
        assert_eq!(self.shape, other.shape, "add_scaled shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        self.map(|x| k * x)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Value) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "dot length mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs_diff(&self, other: &Value) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Nested JSON arrays following the shape; rank-0 values become a bare number.
    pub fn to_json(&self) -> serde_json::Value {
        fn nest(shape: &[usize], data: &[f64]) -> serde_json::Value {
            match shape.split_first() {
                None => serde_json::json!(data[0]),
                Some((&n, rest)) => {
                    let stride = numel(rest);
                    serde_json::Value::Array(
                        (0..n).map(|i| nest(rest, &data[i * stride..(i + 1) * stride])).collect(),
                    )
                }
            }
        }
        nest(&self.shape, &self.data)
    }

    /// Parses a bare number or a (nested, rectangular) array of numbers.
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        fn walk(v: &serde_json::Value, depth: usize, shape: &mut Shape, out: &mut Vec<f64>) -> Result<()> {
            match v {
                serde_json::Value::Number(n) => {
                    if depth != shape.len() {
                        return Err(Error::Shape("ragged array".into()));
                    }
                    out.push(n.as_f64().ok_or_else(|| Error::Shape("bad number".into()))?);
                    Ok(())
                }
                serde_json::Value::Array(items) => {
                    if depth == shape.len() {
                        if !out.is_empty() {
                            return Err(Error::Shape("ragged array".into()));
                        }
                        shape.push(items.len());
                    } else if shape[depth] != items.len() {
                        return Err(Error::Shape("ragged array".into()));
                    }
                    items.iter().try_for_each(|item| walk(item, depth + 1, shape, out))
                }
                _ => Err(Error::Shape(format!("expected number or array, got {v}"))),
            }
        }
        let mut shape = Vec::new();
        let mut data = Vec::new();
        walk(v, 0, &mut shape, &mut data)?;
        Value::new(shape, data)
    }
}

impl fmt::Debug for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_scalar() {
            write!(f, "{}", self.data[0])
        } else {
            write!(f, "Value{:?}{:?}", self.shape, self.data)
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::scalar(x)
    }
}
