use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use super::NetworkError;

/// One of the four coupling quantities carried per boundary bus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Component {
    V,
    Theta,
    P,
    Q,
}

impl Component {
    pub const ALL: [Component; 4] = [Component::V, Component::Theta, Component::P, Component::Q];

    pub fn offset(self) -> usize {
        match self {
            Component::V => 0,
            Component::Theta => 1,
            Component::P => 2,
            Component::Q => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Component::V => "V",
            Component::Theta => "Theta",
            Component::P => "p",
            Component::Q => "q",
        }
    }
}

/// Shared consensus vector: per boundary bus, in ascending bus-id order, the
/// contiguous block `[V, Theta, p, q]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoundaryVector(Vec<f64>);

impl BoundaryVector {
    pub fn zeros(buses: usize) -> Self {
        BoundaryVector(vec![0.0; 4 * buses])
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self, NetworkError> {
        if !values.len().is_multiple_of(4) {
            return Err(NetworkError::Dimension { expected: 4 * (values.len() / 4 + 1), found: values.len() });
        }
        Ok(BoundaryVector(values))
    }

    pub fn bus_count(&self) -> usize {
        self.0.len() / 4
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(position: usize, component: Component) -> usize {
        4 * position + component.offset()
    }

    pub fn get(&self, position: usize, component: Component) -> f64 {
        self.0[Self::index_of(position, component)]
    }

    pub fn set(&mut self, position: usize, component: Component, value: f64) {
        self.0[Self::index_of(position, component)] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    fn check(&self, other: &BoundaryVector) -> Result<(), NetworkError> {
        if self.len() != other.len() {
            return Err(NetworkError::Dimension { expected: self.len(), found: other.len() });
        }
        Ok(())
    }

    pub fn sub(&self, other: &BoundaryVector) -> Result<BoundaryVector, NetworkError> {
        self.check(other)?;
        Ok(BoundaryVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    pub fn add(&self, other: &BoundaryVector) -> Result<BoundaryVector, NetworkError> {
        self.check(other)?;
        Ok(BoundaryVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl Index<usize> for BoundaryVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for BoundaryVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}
