//! Ordered, named parameter collections.

use crate::error::{Error, Result};
use crate::nn::mat::{Mat, Scalar};
use crate::nn::tape::{Grads, Tape};
use std::collections::HashMap;

/// Ordered map from parameter name to dense matrix.
///
/// Insertion order is the canonical order: checkpoints serialise parameters
/// in it and the optimiser state is aligned with it, so two models built from
/// the same configuration agree entry for entry.
#[derive(Debug, Clone)]
pub struct ParamSet<F> {
    names: Vec<String>,
    mats: Vec<Mat<F>>,
    index: HashMap<String, usize>,
}

impl<F: Scalar> Default for ParamSet<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> ParamSet<F> {
    pub fn new() -> Self {
        ParamSet { names: Vec::new(), mats: Vec::new(), index: HashMap::new() }
    }

    /// Registers a new parameter; duplicate names are rejected.
    pub fn insert(&mut self, name: impl Into<String>, mat: Mat<F>) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Contract(format!("parameter `{name}` registered twice")));
        }
        self.index.insert(name.clone(), self.mats.len());
        self.names.push(name);
        self.mats.push(mat);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    /// Total number of scalar entries across all parameters.
    pub fn num_scalars(&self) -> usize {
        self.mats.iter().map(|m| m.rows() * m.cols()).sum()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn mat(&self, idx: usize) -> &Mat<F> {
        &self.mats[idx]
    }

    pub fn mat_mut(&mut self, idx: usize) -> &mut Mat<F> {
        &mut self.mats[idx]
    }

    pub fn get(&self, name: &str) -> Option<&Mat<F>> {
        self.index_of(name).map(|i| self.mat(i))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Mat<F>> {
        let i = self.index_of(name)?;
        Some(self.mat_mut(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat<F>)> {
        self.names.iter().map(String::as_str).zip(self.mats.iter())
    }

    /// Zeroes every entry (used by tests that force identity behaviour).
    pub fn zero_all(&mut self) {
        for m in &mut self.mats {
            for x in m.data_mut() {
                *x = F::ZERO;
            }
        }
    }

    /// Converts every parameter to another scalar type, preserving order.
    pub fn cast<G: Scalar>(&self) -> ParamSet<G> {
        let mut out = ParamSet::new();
        for (name, mat) in self.iter() {
            out.insert(name, mat.cast()).expect("names already unique");
        }
        out
    }

    /// Collects the gradient for every parameter bound on `tape`, in
    /// parameter order; unbound or unreached parameters get `None`.
    pub fn gather_grads(&self, tape: &Tape<F>, grads: &Grads<F>) -> Vec<Option<Mat<F>>> {
        let mut out: Vec<Option<Mat<F>>> = vec![None; self.len()];
        for (idx, var) in tape.bound_params() {
            out[idx] = grads.get(var).cloned();
        }
        out
    }
}
