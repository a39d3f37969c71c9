use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Dense row-major array of `f64` with an optional gradient slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: &[usize], values: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::shape("tensor", shape, &[values.len()]));
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(Error::shape("tensor", shape, &[values.len()]));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            values,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n]).expect("zero-sized extent")
    }

    pub fn vector(values: Vec<f64>) -> Self {
        let n = values.len();
        Tensor::new(&[n], values).expect("empty vector")
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Tensor::new(&[rows, cols], values)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::vector(vec![value])
    }

    /// Turns on gradient tracking; the gradient buffer starts at zero.
    pub fn with_grad(mut self) -> Self {
        self.set_requires_grad(true);
        self
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        if on {
            if self.grad.is_none() {
                self.grad = Some(vec![0.0; self.values.len()]);
            }
        } else {
            self.grad = None;
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.grad.is_some()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.values[i * cols..(i + 1) * cols]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named collection of model parameters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub const fn new() -> Self {
        ParamStore {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.names
            .iter()
            .zip(&self.tensors)
            .enumerate()
            .map(|(i, (n, t))| (ParamId(i), n.as_str(), t))
    }

    /// Total number of scalars, trainable or not.
    pub fn scalar_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    /// Adds `grads` into the gradient slots of trainable parameters.
    pub fn accumulate(&mut self, grads: &ParamGrads) {
        for (id, grad) in grads.iter() {
            let tensor = &mut self.tensors[id.0];
            let cols = tensor.shape.last().copied().unwrap_or(1);
            let Some(slot) = tensor.grad.as_mut() else {
                continue;
            };
            match grad {
                ParamGrad::Dense(g) => slot.iter_mut().zip(g).for_each(|(s, g)| *s += g),
                ParamGrad::Rows(rows) => {
                    for (&row, g) in rows {
                        slot[row * cols..(row + 1) * cols]
                            .iter_mut()
                            .zip(g)
                            .for_each(|(s, g)| *s += g);
                    }
                }
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .iter()
            .filter_map(Tensor::grad)
            .flat_map(|g| g.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// Gradient of one parameter, dense or restricted to looked-up rows.
#[derive(Clone, Debug, PartialEq)]
pub enum ParamGrad {
    Dense(Vec<f64>),
    Rows(BTreeMap<usize, Vec<f64>>),
}

impl ParamGrad {
    pub fn to_dense(&self, len: usize, cols: usize) -> Vec<f64> {
        match self {
            ParamGrad::Dense(g) => g.clone(),
            ParamGrad::Rows(rows) => {
                let mut out = vec![0.0; len];
                for (&row, g) in rows {
                    out[row * cols..(row + 1) * cols].copy_from_slice(g);
                }
                out
            }
        }
    }

    fn merge(&mut self, other: &ParamGrad, len: usize, cols: usize) {
        match (&mut *self, other) {
            (ParamGrad::Dense(a), ParamGrad::Dense(b)) => a.iter_mut().zip(b).for_each(|(a, b)| *a += b),
            (ParamGrad::Rows(a), ParamGrad::Rows(b)) => {
                for (&row, g) in b {
                    let slot = a.entry(row).or_insert_with(|| vec![0.0; g.len()]);
                    slot.iter_mut().zip(g).for_each(|(s, g)| *s += g);
                }
            }
            (ParamGrad::Dense(a), rows @ ParamGrad::Rows(_)) => {
                let b = rows.to_dense(len, cols);
                a.iter_mut().zip(&b).for_each(|(a, b)| *a += b);
            }
            (ParamGrad::Rows(_), ParamGrad::Dense(b)) => {
                let mut a = self.to_dense(len, cols);
                a.iter_mut().zip(b).for_each(|(a, b)| *a += b);
                *self = ParamGrad::Dense(a);
            }
        }
    }
}

/// Per-parameter gradients produced by one backward pass. Several of these
/// can be merged additively before being applied to a [`ParamStore`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamGrads {
    slots: BTreeMap<ParamId, (ParamGrad, usize, usize)>,
}

impl ParamGrads {
    pub fn get(&self, id: ParamId) -> Option<&ParamGrad> {
        self.slots.get(&id).map(|(g, _, _)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamGrad)> {
        self.slots.iter().map(|(&id, (g, _, _))| (id, g))
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn merge(&mut self, other: &ParamGrads) {
        for (&id, (g, len, cols)) in &other.slots {
            match self.slots.get_mut(&id) {
                Some((mine, _, _)) => mine.merge(g, *len, *cols),
                None => {
                    self.slots.insert(id, (g.clone(), *len, *cols));
                }
            }
        }
    }

    pub(crate) fn add_dense(&mut self, id: ParamId, len: usize, cols: usize, g: &[f64]) {
        match self.slots.get_mut(&id) {
            Some((mine, _, _)) => mine.merge(&ParamGrad::Dense(g.to_vec()), len, cols),
            None => {
                self.slots.insert(id, (ParamGrad::Dense(g.to_vec()), len, cols));
            }
        }
    }

    pub(crate) fn add_row(&mut self, id: ParamId, len: usize, cols: usize, row: usize, g: &[f64]) {
        let entry = self
            .slots
            .entry(id)
            .or_insert_with(|| (ParamGrad::Rows(BTreeMap::new()), len, cols));
        match &mut entry.0 {
            ParamGrad::Rows(rows) => {
                let slot = rows.entry(row).or_insert_with(|| vec![0.0; cols]);
                slot.iter_mut().zip(g).for_each(|(s, g)| *s += g);
            }
            ParamGrad::Dense(d) => d[row * cols..(row + 1) * cols]
                .iter_mut()
                .zip(g)
                .for_each(|(s, g)| *s += g),
        }
    }
}
