//! In-memory labelled image collections consumed by training and evaluation.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One image (`[channels, height, width]`) with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub image: Tensor,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    examples: Vec<Example>,
}

impl Dataset {
    pub fn new(examples: Vec<Example>) -> Result<Self> {
        if let Some(first) = examples.first() {
            let shape = first.image.shape();
            if let Some(bad) = examples.iter().find(|e| e.image.shape() != shape) {
                return Err(Error::Shape(format!(
                    "dataset mixes image shapes {shape:?} and {:?}",
                    bad.image.shape()
                )));
            }
        }
        Ok(Dataset { examples })
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn image_shape(&self) -> Option<&[usize]> {
        self.examples.first().map(|e| e.image.shape())
    }

    /// Number of examples per class index, up to the largest label seen.
    pub fn class_counts(&self) -> Vec<usize> {
        let classes = self.examples.iter().map(|e| e.label + 1).max().unwrap_or(0);
        let mut counts = vec![0; classes];
        for e in &self.examples {
            counts[e.label] += 1;
        }
        counts
    }
}
