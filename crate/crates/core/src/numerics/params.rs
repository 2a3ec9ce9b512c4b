use std::collections::HashMap;

use super::{NumericsError, Tensor};

/// Update rule applied by [`ParamStore::step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateRule {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl UpdateRule {
    pub fn adam(lr: f64) -> Self {
        UpdateRule::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Named parameters in declaration order, plus per-parameter optimizer state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
    moments: Vec<Option<Moments>>,
    steps: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        tensor: Tensor,
    ) -> Result<usize, NumericsError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NumericsError::DuplicateParam(name));
        }
        let id = self.tensors.len();
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.tensors.push(tensor);
        self.moments.push(None);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<usize, NumericsError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| NumericsError::UnknownParam(name.to_string()))
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NumericsError> {
        Ok(&self.tensors[self.id(name)?])
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, NumericsError> {
        let id = self.id(name)?;
        Ok(&mut self.tensors[id])
    }

    pub fn by_id(&self, id: usize) -> &Tensor {
        &self.tensors[id]
    }

    pub(crate) fn by_id_mut(&mut self, id: usize) -> &mut Tensor {
        &mut self.tensors[id]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// `(name, tensor)` pairs in declaration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Every parameter value, concatenated in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    /// Overwrites parameter values from a flat buffer in declaration order.
    pub fn assign_flat(&mut self, values: &[f64]) -> Result<(), NumericsError> {
        if values.len() != self.num_values() {
            return Err(NumericsError::Contract(format!(
                "expected {} parameter values, got {}",
                self.num_values(),
                values.len()
            )));
        }
        let mut offset = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Drops optimizer moments, step count and gradients.
    pub fn reset_state(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::clear_grad);
        self.moments.iter_mut().for_each(|m| *m = None);
        self.steps = 0;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update to every parameter in place. All gradients must be populated.
    pub fn step(&mut self, rule: UpdateRule) -> Result<(), NumericsError> {
        if let Some(i) = self.tensors.iter().position(|t| t.grad().is_none()) {
            return Err(NumericsError::MissingGrad(self.names[i].clone()));
        }
        self.steps += 1;
        let t = self.steps as i32;
        for (tensor, moments) in self.tensors.iter_mut().zip(&mut self.moments) {
            let grad = tensor.grad().expect("checked above").to_vec();
            match rule {
                UpdateRule::Sgd { lr } => {
                    for (p, g) in tensor.data_mut().iter_mut().zip(&grad) {
                        *p -= lr * g;
                    }
                }
                UpdateRule::Adam {
                    lr,
                    beta1,
                    beta2,
                    eps,
                } => {
                    let m = moments.get_or_insert_with(|| Moments {
                        first: vec![0.0; grad.len()],
                        second: vec![0.0; grad.len()],
                    });
                    let c1 = 1.0 - beta1.powi(t);
                    let c2 = 1.0 - beta2.powi(t);
                    for (((p, g), m1), m2) in tensor
                        .data_mut()
                        .iter_mut()
                        .zip(&grad)
                        .zip(&mut m.first)
                        .zip(&mut m.second)
                    {
                        *m1 = beta1 * *m1 + (1.0 - beta1) * g;
                        *m2 = beta2 * *m2 + (1.0 - beta2) * g * g;
                        *p -= lr * (*m1 / c1) / ((*m2 / c2).sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64, grad: Option<f64>) -> ParamStore {
        let mut store = ParamStore::new();
        store.insert("p", Tensor::scalar(value)).unwrap();
        if let Some(g) = grad {
            store.get_mut("p").unwrap().set_grad(vec![g]).unwrap();
        }
        store
    }

    #[test]
    fn sgd_step() {
        let mut s = single(1.0, Some(1.0));
        s.step(UpdateRule::Sgd { lr: 0.1 }).unwrap();
        assert!((s.get("p").unwrap().data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        for g in [1e-4, 0.3, 250.0, -7.0] {
            let mut s = single(2.0, Some(g));
            s.step(UpdateRule::adam(0.01)).unwrap();
            let moved = (s.get("p").unwrap().data()[0] - 2.0).abs();
            assert!((moved - 0.01).abs() < 1e-6, "grad {g}: moved {moved}");
        }
    }

    #[test]
    fn zero_grad_leaves_param_unchanged() {
        for rule in [UpdateRule::Sgd { lr: 0.5 }, UpdateRule::adam(0.5)] {
            let mut s = single(3.0, Some(0.0));
            s.step(rule).unwrap();
            assert_eq!(s.get("p").unwrap().data()[0], 3.0);
        }
    }

    #[test]
    fn missing_grad_is_an_error() {
        let mut s = single(1.0, None);
        assert!(matches!(
            s.step(UpdateRule::Sgd { lr: 0.1 }),
            Err(NumericsError::MissingGrad(name)) if name == "p"
        ));
    }

    #[test]
    fn names_are_unique() {
        let mut s = single(1.0, None);
        assert!(s.insert("p", Tensor::scalar(0.0)).is_err());
    }
}
