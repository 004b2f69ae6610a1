use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use crate::autodiff::Model;
use crate::error::{Error, Result};

/// The fixed evaluation set: correctly classified images in dataset order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cohort {
    pub indices: Vec<usize>,
    pub predicted: Vec<usize>,
}

impl Cohort {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// First `n` images that `model` classifies correctly.
pub fn select_cohort(model: &Model, dataset: &Dataset, n: usize) -> Result<Cohort> {
    let mut indices = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    for i in 0..dataset.len() {
        if indices.len() == n {
            break;
        }
        let p = model.predict(&dataset.image(i))?;
        if p == dataset.label(i) {
            indices.push(i);
            predicted.push(p);
        }
    }
    if indices.len() < n {
        return Err(Error::Cohort {
            requested: n,
            achievable: indices.len(),
        });
    }
    Ok(Cohort { indices, predicted })
}
