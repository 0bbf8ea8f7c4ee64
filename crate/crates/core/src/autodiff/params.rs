use std::collections::HashMap;

use rand::Rng;

use super::tensor::Tensor;
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// Named trainable tensors. A store with identical layout doubles as a
/// gradient accumulator (see [`ParamStore::zeros_like`]).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<S> {
    names: Vec<String>,
    tensors: Vec<Tensor<S>>,
    index: HashMap<String, usize>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Registers a tensor. Panics on a duplicate name, which is a programming
    /// error in model construction.
    pub fn add(&mut self, name: impl Into<String>, t: Tensor<S>) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter `{name}`");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    /// Uniform `(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`.
    pub fn add_xavier(&mut self, name: impl Into<String>, rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> ParamId {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..rows * cols).map(|_| S::lit(rng.random_range(-a..a))).collect();
        self.add(name, Tensor::from_vec(rows, cols, data))
    }

    pub fn add_filled(&mut self, name: impl Into<String>, rows: usize, cols: usize, v: f64) -> ParamId {
        self.add(name, Tensor::filled(rows, cols, S::lit(v)))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<S> {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<S> {
        &mut self.tensors[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn element_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data().len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect(),
            index: self.index.clone(),
        }
    }

    pub fn fill_zero(&mut self) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v = S::zero());
        }
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.names, other.names, "parameter layout mismatch");
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.add_assign(b);
        }
    }

    pub fn scale_assign(&mut self, s: S) {
        for t in &mut self.tensors {
            t.scale_assign(s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    pub fn cast<T: Scalar>(&self) -> ParamStore<T> {
        ParamStore {
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }

    /// Copies every tensor of `other` whose name and shape match. Returns the
    /// names that were missing or mismatched.
    pub fn load_from(&mut self, other: &Self) -> Vec<String> {
        let mut problems = Vec::new();
        for (i, name) in self.names.iter().enumerate() {
            match other.id(name) {
                Some(id) if other.get(id).shape() == self.tensors[i].shape() => {
                    self.tensors[i] = other.get(id).clone();
                }
                _ => problems.push(name.clone()),
            }
        }
        problems
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<S> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: ParamStore<S>,
    pub v: ParamStore<S>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(params: &ParamStore<S>, beta1: f64, beta2: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn update(&mut self, params: &mut ParamStore<S>, grads: &ParamStore<S>, lr: f64) {
        self.step += 1;
        let (b1, b2) = (S::lit(self.beta1), S::lit(self.beta2));
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let step = S::lit(lr * bc2.sqrt() / bc1);
        let eps = S::lit(self.eps * bc2.sqrt());
        for id in params.ids() {
            let g = grads.get(id).data();
            let m = self.m.get_mut(id).data_mut();
            for (mi, &gi) in m.iter_mut().zip(g) {
                *mi = b1 * *mi + (S::one() - b1) * gi;
            }
            let v = self.v.get_mut(id).data_mut();
            for (vi, &gi) in v.iter_mut().zip(g) {
                *vi = b2 * *vi + (S::one() - b2) * gi * gi;
            }
            let m = self.m.get(id).data();
            let v = self.v.get(id).data();
            for ((p, &mi), &vi) in params.get_mut(id).data_mut().iter_mut().zip(m).zip(v) {
                *p = *p - step * mi / (vi.sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = ParamStore::<f64>::new();
        let id = p.add("x", Tensor::from_vec(1, 2, vec![3.0, -2.0]));
        let mut opt = Adam::new(&p, 0.9, 0.999);
        let mut g = p.zeros_like();
        for _ in 0..2000 {
            g.fill_zero();
            let x = p.get(id).data().to_vec();
            g.get_mut(id).data_mut().copy_from_slice(&[2.0 * (x[0] - 1.0), 2.0 * x[1]]);
            opt.update(&mut p, &g, 0.01);
        }
        let x = p.get(id).data();
        assert!((x[0] - 1.0).abs() < 1e-3 && x[1].abs() < 1e-3, "{x:?}");
    }

    #[test]
    fn first_adam_step_has_learning_rate_magnitude() {
        let mut p = ParamStore::<f64>::new();
        let id = p.add("x", Tensor::scalar(0.0));
        let mut opt = Adam::new(&p, 0.9, 0.999);
        let mut g = p.zeros_like();
        g.get_mut(id).data_mut()[0] = 123.0;
        opt.update(&mut p, &g, 0.5);
        assert!((p.get(id).item() + 0.5).abs() < 1e-6);
    }

    #[test]
    fn load_from_reports_mismatches() {
        let mut a = ParamStore::<f32>::new();
        a.add("w", Tensor::zeros(2, 2));
        a.add("b", Tensor::zeros(1, 2));
        let mut b = ParamStore::<f32>::new();
        b.add("w", Tensor::filled(2, 2, 1.0));
        b.add("b", Tensor::zeros(1, 3));
        assert_eq!(a.load_from(&b), vec!["b".to_string()]);
        assert_eq!(a.get(a.id("w").unwrap()).data(), &[1.0; 4]);
    }
}
