use serde::{Deserialize, Serialize};
use sonoseg_tensor::Tensor;

/// Row-major `H x W` mask whose values are exactly 0 or 1.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn zeros(height: usize, width: usize) -> Self {
        BinaryMask {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x) as u8);
            }
        }
        BinaryMask {
            height,
            width,
            data,
        }
    }

    pub fn from_bools(height: usize, width: usize, values: &[bool]) -> Self {
        assert_eq!(values.len(), height * width);
        BinaryMask {
            height,
            width,
            data: values.iter().map(|&b| b as u8).collect(),
        }
    }

    /// Foreground wherever `values > threshold`.
    pub fn threshold(height: usize, width: usize, values: &[f64], threshold: f64) -> Self {
        assert_eq!(values.len(), height * width);
        BinaryMask {
            height,
            width,
            data: values.iter().map(|&v| (v > threshold) as u8).collect(),
        }
    }

    /// Binarises a `[H, W]` (or `[1, H, W]`) tensor at `threshold`.
    pub fn from_tensor(t: &Tensor, threshold: f64) -> Self {
        let sh = t.shape();
        let (h, w) = (sh[sh.len() - 2], sh[sh.len() - 1]);
        assert_eq!(
            t.numel(),
            h * w,
            "mask tensor must hold one plane, got {sh:?}"
        );
        Self::threshold(h, w, t.data(), threshold)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn set(&mut self, y: usize, x: usize, value: bool) {
        self.data[y * self.width + x] = value as u8;
    }

    pub fn values(&self) -> impl Iterator<Item = bool> + '_ {
        self.data.iter().map(|&v| v != 0)
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Pixel-wise OR.
    pub fn union(&self, other: &BinaryMask) -> BinaryMask {
        assert_eq!((self.height, self.width), (other.height, other.width));
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a | b)
                .collect(),
        }
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> usize {
        assert_eq!((self.height, self.width), (other.height, other.width));
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| **a != 0 && **b != 0)
            .count()
    }

    pub fn union_count(&self, other: &BinaryMask) -> usize {
        assert_eq!((self.height, self.width), (other.height, other.width));
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| **a != 0 || **b != 0)
            .count()
    }

    /// True when `self` is a subset of `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.data
            .iter()
            .zip(&other.data)
            .all(|(a, b)| *a == 0 || *b != 0)
    }

    /// `[H, W]` tensor of 0.0 / 1.0.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            &[self.height, self.width],
            self.data.iter().map(|&v| v as f64).collect(),
        )
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }
}
