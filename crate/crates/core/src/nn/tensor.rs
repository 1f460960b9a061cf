//! Dense row-major tensor, the universal value type of the engine.

use crate::error::{Error, Result};

/// N-dimensional array of `f64` with shape metadata.
///
/// Double precision throughout: the gradient-check oracles need it, and desk
/// scale models are small enough that it costs nothing that matters.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; len] }
    }

    pub fn filled(shape: &[usize], value: f64) -> Tensor {
        let len = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; len] }
    }

    pub fn from_vec(data: Vec<f64>, shape: &[usize]) -> Result<Tensor> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::usage(format!(
                "buffer length {} does not match shape {:?} (= {expected})",
                data.len(),
                shape
            )));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Dimension `i` of the shape.
    pub fn dim(&self, i: usize) -> usize {
        self.shape[i]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.shape == other.shape
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    /// Reinterpret the buffer under a new shape of equal length.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::from_vec(self.data.clone(), shape)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Surface a NaN/Inf contract violation as a numeric error naming the site.
    pub fn check_finite(&self, site: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric {
                layer: site.to_string(),
                detail: "non-finite value in tensor".to_string(),
            })
        }
    }

    /// Maximum absolute difference to another tensor of the same shape.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert!(self.same_shape(other), "shape mismatch in max_abs_diff");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::from_vec(vec![0.0; 6], &[2, 3]).is_ok());
        assert!(Tensor::from_vec(vec![0.0; 5], &[2, 3]).is_err());
    }

    #[test]
    fn finiteness_check_names_the_site() {
        let mut t = Tensor::zeros(&[2]);
        assert!(t.check_finite("anywhere").is_ok());
        t.data_mut()[1] = f64::NAN;
        let err = t.check_finite("conv1.weights").unwrap_err();
        assert!(err.to_string().contains("conv1.weights"));
    }
}
