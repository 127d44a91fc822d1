//! Named trainable tensors with gradient buffers.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    /// Adds a parameter; names must be unique.
    pub fn push(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<usize> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        let grad = Tensor::zeros(value.shape());
        self.params.push(Parameter { name, value, grad });
        Ok(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar weights.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn get(&self, index: usize) -> &Parameter<T> {
        &self.params[index]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut Parameter<T> {
        &mut self.params[index]
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(T::zero());
        }
    }

    /// Multiplies every gradient by `factor`.
    pub fn scale_grads(&mut self, factor: T) {
        for p in &mut self.params {
            for g in p.grad.data_mut() {
                *g *= factor;
            }
        }
    }

    /// Records every parameter as a tape leaf, in store order.
    pub fn bind(&self, tape: &mut Tape<T>, requires_grad: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), requires_grad))
            .collect()
    }

    /// Adds the tape gradients of `vars` (as returned by [`bind`]) into the
    /// gradient buffers.
    ///
    /// [`bind`]: ParamStore::bind
    pub fn accumulate_grads(&mut self, tape: &Tape<T>, vars: &[Var]) -> Result<()> {
        if vars.len() != self.params.len() {
            return Err(Error::Tape(format!(
                "{} bound variables for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        for (p, &v) in self.params.iter_mut().zip(vars) {
            if let Some(g) = tape.grad(v) {
                p.grad.add_assign(g)?;
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut s = ParamStore::<f32>::new();
        s.push("a", Tensor::zeros(&[2])).unwrap();
        assert!(s.push("a", Tensor::zeros(&[3])).is_err());
        s.push("b", Tensor::zeros(&[3])).unwrap();
        assert_eq!(s.numel(), 5);
        assert_eq!(s.get(1).grad.shape(), &[3]);
    }
}
