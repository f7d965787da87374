use std::collections::BTreeMap;

use super::tape::{Gradients, Tape, Var};
use super::{NnError, Tensor};

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named parameters. Iteration order is lexicographic by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        let grad = Tensor::zeros(value.shape().to_vec());
        self.params.insert(name.into(), Param { value, grad });
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NnError> {
        self.params
            .get(name)
            .map(|p| &p.value)
            .ok_or_else(|| NnError::MissingParam(name.into()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, NnError> {
        self.params
            .get_mut(name)
            .map(|p| &mut p.value)
            .ok_or_else(|| NnError::MissingParam(name.into()))
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor, NnError> {
        self.params
            .get(name)
            .map(|p| &p.grad)
            .ok_or_else(|| NnError::MissingParam(name.into()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(|p| p.value.len()).sum()
    }

    /// Places every parameter on the tape as a leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(k, p)| (k.clone(), tape.leaf(p.value.clone())))
            .collect();
        Bound { vars }
    }

    /// Adds the gradients of bound leaves into the gradient slots.
    pub fn accumulate(&mut self, bound: &Bound, grads: &Gradients) {
        for (name, var) in &bound.vars {
            if let (Some(p), Some(g)) = (self.params.get_mut(name), grads.get(*var)) {
                p.grad.add_assign(g);
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for p in self.params.values_mut() {
            p.grad.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Plain gradient descent: `value -= lr · grad`.
    pub fn sgd_step(&mut self, lr: f64) {
        for p in self.params.values_mut() {
            for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                *v -= lr * g;
            }
        }
    }
}

/// Tape variables for a [`ParamStore`], looked up by parameter name.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var, NnError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| NnError::MissingParam(name.into()))
    }

    /// Replaces the variable used for `name`, e.g. to differentiate with
    /// respect to a parameter supplied from outside.
    pub fn set(&mut self, name: impl Into<String>, var: Var) {
        self.vars.insert(name.into(), var);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulate_and_step() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::new([1, 1], vec![2.0]).unwrap());
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let w = bound.var("w").unwrap();
        let y = tape.scale(w, 3.0);
        let loss = tape
            .weighted_sum(y, Tensor::new([1, 1], vec![1.0]).unwrap())
            .unwrap();
        let g = tape.backward(loss).unwrap();
        store.accumulate(&bound, &g);
        store.accumulate(&bound, &g);
        assert_eq!(store.grad("w").unwrap().data(), &[6.0]);
        store.sgd_step(0.5);
        assert_eq!(store.get("w").unwrap().data(), &[-1.0]);
        store.zero_grad();
        assert_eq!(store.grad("w").unwrap().data(), &[0.0]);
        assert!(matches!(store.get("nope"), Err(NnError::MissingParam(_))));
    }
}
