//! Dense row-major `f32` tensor.
//!
//! Activations use the (batch, channels, height, width) layout. The tensor
//! itself is a plain value type; gradients and `requires_grad` live on the
//! autodiff graph nodes in [`crate::graph`].

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "tensor data length {} does not match shape {:?} (product {})",
                data.len(),
                shape,
                n
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn scalar(value: f32) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Scalar value of a single-element tensor.
    pub fn item(&self) -> Result<f32> {
        if self.data.len() != 1 {
            return Err(Error::Shape(format!(
                "item() on tensor with {} elements",
                self.data.len()
            )));
        }
        Ok(self.data[0])
    }

    /// Interpret the shape as (N, C, H, W).
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape.as_slice() {
            &[n, c, h, w] => Ok((n, c, h, w)),
            other => Err(Error::Shape(format!(
                "expected rank-4 (N,C,H,W) tensor, got shape {other:?}"
            ))),
        }
    }

    /// Interpret the shape as (C, H, W).
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[c, h, w] => Ok((c, h, w)),
            other => Err(Error::Shape(format!(
                "expected rank-3 (C,H,W) tensor, got shape {other:?}"
            ))),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Value at (c, y, x) of a rank-3 tensor.
    pub fn at3(&self, c: usize, y: usize, x: usize) -> f32 {
        let (_, h, w) = (self.shape[0], self.shape[1], self.shape[2]);
        self.data[(c * h + y) * w + x]
    }

    /// Value at (n, c, y, x) of a rank-4 tensor.
    pub fn at4(&self, n: usize, c: usize, y: usize, x: usize) -> f32 {
        let (ch, h, w) = (self.shape[1], self.shape[2], self.shape[3]);
        self.data[((n * ch + c) * h + y) * w + x]
    }

    /// Extract batch item `n` of a rank-4 tensor as a rank-3 tensor.
    pub fn batch_item(&self, n: usize) -> Result<Tensor> {
        let (nb, c, h, w) = self.dims4()?;
        if n >= nb {
            return Err(Error::Shape(format!(
                "batch index {n} out of range for batch size {nb}"
            )));
        }
        let len = c * h * w;
        Tensor::from_vec(&[c, h, w], self.data[n * len..(n + 1) * len].to_vec())
    }

    /// Prepend a batch dimension of 1 to a rank-3 tensor.
    pub fn unsqueeze_batch(&self) -> Result<Tensor> {
        let (c, h, w) = self.dims3()?;
        Tensor::from_vec(&[1, c, h, w], self.data.clone())
    }

    /// Stack rank-3 tensors of identical shape into one rank-4 tensor.
    pub fn stack_batch(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::Shape(String::from("stack_batch on empty list")))?;
        let (c, h, w) = first.dims3()?;
        let mut data = Vec::with_capacity(items.len() * c * h * w);
        for (i, t) in items.iter().enumerate() {
            if t.shape() != first.shape() {
                return Err(Error::Shape(format!(
                    "stack_batch item {i} has shape {:?}, expected {:?}",
                    t.shape(),
                    first.shape()
                )));
            }
            data.extend_from_slice(t.data());
        }
        Tensor::from_vec(&[items.len(), c, h, w], data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_length_mismatch() {
        let err = Tensor::from_vec(&[2, 3], vec![1.0; 5]).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn stack_and_slice_round_trip() {
        let a = Tensor::from_vec(&[2, 2, 2], (0..8).map(|i| i as f32).collect()).unwrap();
        let b = Tensor::from_vec(&[2, 2, 2], (8..16).map(|i| i as f32).collect()).unwrap();
        let s = Tensor::stack_batch(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.shape(), &[2, 2, 2, 2]);
        assert_eq!(s.batch_item(0).unwrap(), a);
        assert_eq!(s.batch_item(1).unwrap(), b);
    }

    #[test]
    fn item_requires_single_element() {
        assert!(Tensor::zeros(&[2]).item().is_err());
        assert_eq!(Tensor::scalar(3.5).item().unwrap(), 3.5);
    }
}
