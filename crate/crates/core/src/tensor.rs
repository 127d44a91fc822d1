//! Dense row-major n-dimensional arrays.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("shape {shape:?} holds {expected} elements, got {}", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Interprets the tensor as `C x H x W`.
    pub fn chw(&self) -> Result<(usize, usize, usize)> {
        match self.shape[..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(
                "chw",
                format!("expected a 3-d tensor, got {:?}", self.shape),
            )),
        }
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(Error::shape("reshape", format!("{:?} -> {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64_lossy(v.to_f64_lossy())).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, v| if v.abs() > acc { v.abs() } else { acc })
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        self.check_same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &Tensor<T>, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(op, format!("{:?} vs {:?}", self.shape, other.shape)));
        }
        Ok(())
    }

    /// Copies out channel `c` of a `C x H x W` tensor as `1 x H x W`.
    pub fn channel(&self, c: usize) -> Result<Tensor<T>> {
        let (channels, h, w) = self.chw()?;
        if c >= channels {
            return Err(Error::shape("channel", format!("{c} >= {channels}")));
        }
        let plane = h * w;
        Tensor::from_vec(&[1, h, w], self.data[c * plane..(c + 1) * plane].to_vec())
    }

    /// Stacks equally sized `H x W` planes (given as `1 x H x W` or `H x W`)
    /// into a `N x H x W` tensor.
    pub fn stack_planes(planes: &[&Tensor<T>]) -> Result<Tensor<T>> {
        let first = planes
            .first()
            .ok_or_else(|| Error::shape("stack_planes", "no planes"))?;
        let (h, w) = plane_dims(first)?;
        let mut data = Vec::with_capacity(planes.len() * h * w);
        for p in planes {
            if plane_dims(p)? != (h, w) {
                return Err(Error::shape(
                    "stack_planes",
                    format!("{:?} vs {:?}", p.shape(), first.shape()),
                ));
            }
            data.extend_from_slice(p.data());
        }
        Tensor::from_vec(&[planes.len(), h, w], data)
    }
}

fn plane_dims<T: Scalar>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match t.shape()[..] {
        [h, w] | [1, h, w] => Ok((h, w)),
        _ => Err(Error::shape(
            "plane",
            format!("expected a single plane, got {:?}", t.shape()),
        )),
    }
}
