//! Gradients and parameters as ordered lists of named parameter groups.
//!
//! A dense layer contributes two groups (`denseK.weights`, `denseK.biases`);
//! the aggregation code treats each group as one "layer".

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGroup<T> {
    name: String,
    shape: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> ParameterGroup<T> {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<T>) -> Result<Self> {
        let name = name.into();
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::config(format!(
                "group {name:?}: shape {shape:?} must be a non-empty list of positive integers"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::config(format!(
                "group {name:?}: shape {shape:?} holds {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            name,
            shape,
            values,
        })
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Result<Self> {
        let len = shape.iter().product();
        Self::new(name, shape, vec![T::zero(); len])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn squared_norm(&self) -> T {
        self.values.iter().map(|&v| v * v).sum()
    }

    fn same_layout(&self, other: &Self) -> bool {
        self.name == other.name && self.shape == other.shape
    }
}

/// A full gradient or parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredVector<T> {
    groups: Vec<ParameterGroup<T>>,
}

impl<T: Scalar> LayeredVector<T> {
    pub fn new(groups: Vec<ParameterGroup<T>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::config("a layered vector needs at least one group"));
        }
        let mut seen = HashSet::new();
        for g in &groups {
            if !seen.insert(g.name.as_str()) {
                return Err(Error::config(format!("duplicate group name {:?}", g.name)));
            }
        }
        Ok(Self { groups })
    }

    /// Convenience constructor for one-dimensional groups named `g0`, `g1`, ...
    pub fn from_flat_groups(groups: Vec<Vec<T>>) -> Result<Self> {
        let groups = groups
            .into_iter()
            .enumerate()
            .map(|(i, v)| ParameterGroup::new(format!("g{i}"), vec![v.len()], v))
            .collect::<Result<Vec<_>>>()?;
        Self::new(groups)
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_| T::zero())
    }

    pub fn groups(&self) -> &[ParameterGroup<T>] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParameterGroup<T>] {
        &mut self.groups
    }

    pub fn group(&self, l: usize) -> &ParameterGroup<T> {
        &self.groups[l]
    }

    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Total number of scalar entries, `d`.
    pub fn dim(&self) -> usize {
        self.groups.iter().map(ParameterGroup::len).sum()
    }

    pub fn group_names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.name.clone()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> + '_ {
        self.groups.iter().flat_map(|g| g.values.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.groups.iter_mut().flat_map(|g| g.values.iter_mut())
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.iter().copied().collect()
    }

    pub fn same_structure(&self, other: &Self) -> bool {
        self.groups.len() == other.groups.len()
            && self
                .groups
                .iter()
                .zip(&other.groups)
                .all(|(a, b)| a.same_layout(b))
    }

    pub fn check_structure(&self, other: &Self) -> Result<()> {
        if self.same_structure(other) {
            Ok(())
        } else {
            Err(Error::config(format!(
                "structure mismatch: {:?} vs {:?}",
                self.layout(),
                other.layout()
            )))
        }
    }

    fn layout(&self) -> Vec<(&str, &[usize])> {
        self.groups
            .iter()
            .map(|g| (g.name.as_str(), g.shape.as_slice()))
            .collect()
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Self {
        Self {
            groups: self
                .groups
                .iter()
                .map(|g| ParameterGroup {
                    name: g.name.clone(),
                    shape: g.shape.clone(),
                    values: g.values.iter().map(|&v| f(v)).collect(),
                })
                .collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, mut f: impl FnMut(T, T) -> T) -> Result<Self> {
        self.check_structure(other)?;
        Ok(Self {
            groups: self
                .groups
                .iter()
                .zip(&other.groups)
                .map(|(a, b)| ParameterGroup {
                    name: a.name.clone(),
                    shape: a.shape.clone(),
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

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    /// `self += c * other`
    pub fn add_scaled_assign(&mut self, other: &Self, c: T) -> Result<()> {
        self.check_structure(other)?;
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += c * *b;
        }
        Ok(())
    }

    pub fn l2_norm(&self) -> T {
        self.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn group_l2_norm(&self, l: usize) -> T {
        self.groups[l].squared_norm().sqrt()
    }

    pub fn squared_distance(&self, other: &Self) -> Result<T> {
        self.check_structure(other)?;
        Ok(self
            .iter()
            .zip(other.iter())
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum())
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|v| v.is_finite())
    }

    /// Coordinate-wise arithmetic mean of a non-empty list.
    pub fn mean(items: &[Self]) -> Result<Self> {
        let Some(first) = items.first() else {
            return Err(Error::Usage("mean of an empty list".into()));
        };
        let mut acc = first.clone();
        for v in &items[1..] {
            acc.add_scaled_assign(v, T::one())?;
        }
        let inv = T::one() / T::of_usize(items.len());
        Ok(acc.scale(inv))
    }
}

/// Fail unless every vector shares the first one's structure.
pub(crate) fn check_uniform<T: Scalar>(items: &[LayeredVector<T>]) -> Result<()> {
    if let Some(first) = items.first() {
        for v in &items[1..] {
            first.check_structure(v)?;
        }
    }
    Ok(())
}
